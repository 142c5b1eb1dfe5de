//! Quasi-explicit solution in physical space.
//!
//! The mean field `a(u)(x, t)` is a y-average of translated data: the two
//! exterior poles transport the data at speeds `λ±`, the cut (smooth
//! profiles) or the interior poles (piecewise-linear profiles) at the speeds
//! `λ ∈ [M₋, M₊]`, and a local term at the flow speed `M(y)`. Each term has
//! the form `coefficient × (kind)(x − s t, y)` with kinds
//!
//! ```text
//! u⁰(x − st)      t ∂ₓu⁰(x − st)      t u¹(x − st)      ∫₀^{st} u¹(x − σ) dσ
//! ```
//!
//! Translations, derivatives and primitives are applied as exact Fourier
//! multipliers on the periodic grid. The full field adds the transported data
//! and the memory term `∫₀ᵗ (t − s) ∂ₓ² a(u)(x − (t − s)M(y), s) ds`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::data::{DataSpectra, Field, InitialData, XGrid};
use crate::dispersion;
use crate::error::{Error, Result};
use crate::kernels::{Kernels, PANEL_NODES};
use crate::profile::VelocityProfile;
use crate::quadrature::Rule;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniform panels of the cut quadrature before phase refinement.
pub const CUT_INTERIOR_PANELS: usize = 12;
/// Geometric refinement levels toward each cut endpoint.
pub const CUT_GRADING_LEVELS: usize = 4;

/// Numerical settings of the quasi-explicit solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Transverse Gauss–Legendre nodes.
    pub y_nodes: usize,
    /// Largest phase `k_max t Δλ` across one cut panel.
    pub panel_phase: f64,
    /// Simpson intervals of the coarse memory quadrature; the fine one doubles it.
    pub history_nodes: usize,
    /// Largest relative disagreement between coarse and fine memory terms.
    pub history_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            y_nodes: 64,
            panel_phase: 4.0,
            history_nodes: 64,
            history_tol: 1e-5,
        }
    }
}

/// Grouping of mean-field terms by their origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Exterior poles `λ±`.
    Pole,
    /// Cut nodes (smooth) or interior poles (piecewise linear).
    Spread,
    /// Local term at speed `M(y)`.
    Local,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    s: f64,
    group: Group,
    c0: f64,
    cdx: f64,
    c1: f64,
    cp: f64,
}

impl Term {
    fn new(s: f64, group: Group) -> Self {
        Term {
            s,
            group,
            c0: 0.0,
            cdx: 0.0,
            c1: 0.0,
            cp: 0.0,
        }
    }

    fn scaled(mut self, f: f64) -> Self {
        self.c0 *= f;
        self.cdx *= f;
        self.c1 *= f;
        self.cp *= f;
        self
    }
}

/// Cut quadrature shared by all transverse nodes at one time.
struct CutNodes {
    breaks: Vec<f64>,
    rule: Rule,
    /// `(Im N/π, Im N′/π)` at the rule nodes.
    dens: Vec<(f64, f64)>,
}

/// Solution at one time on the grid.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_weights: Vec<f64>,
    /// `u[j][i] = u(xᵢ, yⱼ, t)`.
    pub u: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl FieldSnapshot {
    /// `½ Σⱼ wⱼ u(·, yⱼ)`.
    pub fn quadrature_mean(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.x.len()];
        for (row, w) in self.u.iter().zip(&self.y_weights) {
            for (ai, ui) in a.iter_mut().zip(row) {
                *ai += 0.5 * w * ui;
            }
        }
        a
    }

    /// `(∫∫ u² dx dy)^{1/2}` by the grid and the transverse rule.
    pub fn norm(&self) -> f64 {
        let dx = if self.x.len() > 1 { self.x[1] - self.x[0] } else { 1.0 };
        let s: f64 = self
            .u
            .iter()
            .zip(&self.y_weights)
            .map(|(row, w)| w * row.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (s * dx).sqrt()
    }
}

/// Labeled piece of the transport interpretation of the mean field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    /// Exterior-pole part, annihilated by `(∂t + λ₊∂x)(∂t + λ₋∂x)`.
    Pole,
    /// Smooth-profile cut density at fixed `λ`, P.V. over `y`.
    CutRegular { lambda: f64 },
    /// Smooth-profile density carried at speed `λ` from `y = μ(λ)`.
    CutTransport { lambda: f64 },
    /// Piecewise-linear density at `λ` carried by interior pole `index`.
    PolePart { lambda: f64, index: usize },
    /// Piecewise-linear density at `λ` carried at speed `λ`.
    LocalPart { lambda: f64 },
}

impl Component {
    pub fn label(&self) -> String {
        match self {
            Component::Pole => "pole".into(),
            Component::CutRegular { lambda } => format!("cut_regular_l{lambda}"),
            Component::CutTransport { lambda } => format!("cut_transport_l{lambda}"),
            Component::PolePart { lambda, index } => format!("pole{index}_l{lambda}"),
            Component::LocalPart { lambda } => format!("local_l{lambda}"),
        }
    }
}

/// Mean field split by group plus sampled density components.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub t: f64,
    pub x: Vec<f64>,
    pub pole: Vec<f64>,
    pub spread: Vec<f64>,
    pub local: Vec<f64>,
    pub samples: Vec<(Component, Vec<f64>)>,
}

impl Decomposition {
    pub fn total(&self) -> Vec<f64> {
        (0..self.x.len())
            .map(|i| self.pole[i] + self.spread[i] + self.local[i])
            .collect()
    }
}

/// Quasi-explicit solver bound to one certified-stable profile.
#[derive(Debug, Clone)]
pub struct Solver {
    kernels: Kernels,
    rule: Rule,
    pub options: SolverOptions,
}

impl Solver {
    pub fn new(profile: &VelocityProfile, options: SolverOptions) -> Result<Self> {
        Ok(Self::from_kernels(Kernels::new(profile)?, options))
    }

    pub fn from_kernels(kernels: Kernels, options: SolverOptions) -> Self {
        let rule = kernels.profile().transverse_rule(options.y_nodes);
        Solver { kernels, rule, options }
    }

    pub fn kernels(&self) -> &Kernels {
        &self.kernels
    }

    pub fn profile(&self) -> &VelocityProfile {
        self.kernels.profile()
    }

    /// Transverse rule shared by all assemblies.
    pub fn y_rule(&self) -> &Rule {
        &self.rule
    }

    fn check_time(&self, grid: &XGrid, t: f64) -> Result<()> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain {
                what: "t",
                value: t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let speed = self
            .kernels
            .exterior()
            .iter()
            .map(|p| p.lambda.abs())
            .fold(0.0, f64::max);
        if speed * t > 0.5 * grid.extent {
            log::warn!(
                "travel distance {:.3} exceeds half the periodic cell {:.3}; the field wraps",
                speed * t,
                0.5 * grid.extent
            );
        }
        Ok(())
    }

    pub fn spectra(&self, data: &InitialData, grid: &XGrid) -> Result<DataSpectra> {
        data.spectra(grid, &self.rule)
    }

    /// Composite rule on the cut with panels short enough that the phase
    /// `ω Δλ` stays below the configured bound, with cached densities.
    fn cut_nodes(&self, omega: f64) -> Option<CutNodes> {
        let cut = self.kernels.cut()?;
        let hmax = if omega > 0.0 {
            self.options.panel_phase / omega
        } else {
            f64::INFINITY
        };
        let (lo, hi) = cut.range();
        let br = crate::quadrature::graded_breaks(lo, hi, CUT_INTERIOR_PANELS, CUT_GRADING_LEVELS);
        let mut breaks = vec![br[0]];
        for w in br.windows(2) {
            let n = ((w[1] - w[0]) / hmax).ceil().max(1.0) as usize;
            for i in 1..=n {
                breaks.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
            }
        }
        let rule = Rule::composite(&Rule::gauss_legendre(PANEL_NODES), &breaks);
        let dens: Vec<(f64, f64)> = rule
            .nodes
            .iter()
            .map(|&l| {
                let (n, np) = cut.eval(l);
                (n.im / PI, np.im / PI)
            })
            .collect();
        Some(CutNodes { breaks, rule, dens })
    }

    /// All terms at one transverse node, before the `½ wⱼ` weight.
    fn terms_at(&self, y: f64, nodes: Option<&CutNodes>) -> Result<Vec<Term>> {
        let c = self.profile().m(y);
        let mut terms = Vec::new();
        for p in self.kernels.exterior() {
            let d = p.lambda - c;
            let mut tm = Term::new(p.lambda, Group::Pole);
            tm.c0 = -2.0 * p.res * (2.0 * c - p.lambda) / (d * d);
            tm.cp = 2.0 * p.res / (d * d);
            terms.push(tm);
        }
        let mut local = Term::new(c, Group::Local);
        match self.kernels.cut() {
            Some(cut) => {
                let (lo, hi) = cut.range();
                // Density at speed λ, per unit 1/(λ − c): G = Im N/π, H = Im N′/π.
                let density = |l: f64, g: f64, h: f64| {
                    let mut tm = Term::new(l, Group::Spread);
                    tm.c0 = -2.0 * g + 2.0 * c * h;
                    tm.cdx = -2.0 * g * c;
                    tm.c1 = -2.0 * g;
                    tm.cp = -2.0 * h;
                    tm
                };
                let cn = nodes.ok_or(Error::Contract("cut nodes missing".into()))?;
                // The panel holding c is split at c and re-evaluated.
                let p = cn.breaks.partition_point(|&b| b <= c).clamp(1, cn.breaks.len() - 1) - 1;
                let (a, b) = (cn.breaks[p], cn.breaks[p + 1]);
                let split = c - a > 1e-14 && b - c > 1e-14;
                let mut inv_sum = 0.0;
                let mut push = |l: f64, w: f64, g: f64, h: f64, terms: &mut Vec<Term>| {
                    let f = w / (l - c);
                    inv_sum += f;
                    terms.push(density(l, g, h).scaled(f));
                };
                for (q, (&l, &w)) in cn.rule.nodes.iter().zip(&cn.rule.weights).enumerate() {
                    if split && q / PANEL_NODES == p {
                        continue;
                    }
                    push(l, w, cn.dens[q].0, cn.dens[q].1, &mut terms);
                }
                if split {
                    let sub = Rule::composite(&Rule::gauss_legendre(PANEL_NODES), &[a, c, b]);
                    for (&l, &w) in sub.nodes.iter().zip(&sub.weights) {
                        let (n, np) = cut.eval(l);
                        push(l, w, n.im / PI, np.im / PI, &mut terms);
                    }
                }
                let (nc, npc) = cut.eval(c);
                let tol = 1e-12 * (hi - lo);
                if c - lo > tol && hi - c > tol {
                    let f = ((hi - c) / (c - lo)).ln() - inv_sum;
                    terms.push(density(c, nc.im / PI, npc.im / PI).scaled(f));
                }
                local.c0 = 2.0 * nc.re - 2.0 * c * npc.re;
                local.cdx = 2.0 * c * nc.re;
                local.c1 = 2.0 * nc.re;
                local.cp = 2.0 * npc.re;
            }
            None => {
                let (poles, n, np) = self.kernels.pl_parts(c, y)?;
                for p in poles {
                    let d = p.lambda - c;
                    let mut tm = Term::new(p.lambda, Group::Spread);
                    tm.c0 = -2.0 * c * p.res / (d * d) + 2.0 * p.res / d;
                    tm.cp = 2.0 * p.res / (d * d);
                    terms.push(tm);
                }
                local.c0 = 2.0 * n - 2.0 * c * np;
                local.cdx = 2.0 * c * n;
                local.c1 = 2.0 * n;
                local.cp = 2.0 * np;
            }
        }
        terms.push(local);
        Ok(terms)
    }

    /// Half spectrum of `a(u)` (or of `∂ₜa(u)` when `rate`), restricted to the
    /// groups accepted by `keep`.
    fn mean_hat_filtered<K: Fn(Group) -> bool + Sync>(
        &self,
        spec: &DataSpectra,
        t: f64,
        rate: bool,
        keep: K,
    ) -> Result<Vec<Complex64>> {
        if spec.u0.len() != self.rule.len() {
            return Err(Error::Contract(format!(
                "data spectra on {} nodes, solver rule has {}",
                spec.u0.len(),
                self.rule.len()
            )));
        }
        let grid = spec.grid;
        let mm = spec.m_max;
        let nodes = self.cut_nodes(spec.k_max() * t);
        let k1 = grid.k(1);
        let rows: Result<Vec<Vec<Complex64>>> = (0..self.rule.len())
            .into_par_iter()
            .map(|j| {
                let terms = self.terms_at(self.rule.nodes[j], nodes.as_ref())?;
                let (d0, d1) = (&spec.u0[j], &spec.u1[j]);
                let mut acc = vec![ZERO; mm + 1];
                for tm in terms.iter().filter(|tm| keep(tm.group)) {
                    let step = Complex64::from_polar(1.0, -k1 * tm.s * t);
                    let mut e = Complex64::new(1.0, 0.0);
                    for (m, a) in acc.iter_mut().enumerate() {
                        let k = grid.k(m);
                        let ik = Complex64::new(0.0, k);
                        let (m0, mdx, m1, mp) = if rate {
                            let g = 1.0 - ik * tm.s * t;
                            (-ik * tm.s * e, ik * e * g, e * g, tm.s * e)
                        } else {
                            let p = if m == 0 {
                                Complex64::new(tm.s * t, 0.0)
                            } else {
                                Complex64::new(-e.im, -(1.0 - e.re)) / k
                            };
                            (e, t * ik * e, t * e, p)
                        };
                        let mut v = (tm.c0 * m0 + tm.cdx * mdx) * d0[m];
                        if !spec.velocity_zero {
                            v += (tm.c1 * m1 + tm.cp * mp) * d1[m];
                        }
                        *a += v;
                        e *= step;
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut out = vec![ZERO; grid.half_len()];
        for (j, row) in rows?.iter().enumerate() {
            let w = 0.5 * self.rule.weights[j];
            for (o, r) in out.iter_mut().zip(row) {
                *o += w * r;
            }
        }
        Ok(out)
    }

    /// Half spectrum of `a(u)(·, t)`.
    pub fn mean_hat(&self, spec: &DataSpectra, t: f64) -> Result<Vec<Complex64>> {
        self.mean_hat_filtered(spec, t, false, |_| true)
    }

    /// `a(u)(·, t)` on the grid.
    pub fn mean_field(&self, data: &InitialData, grid: &XGrid, t: f64) -> Result<Vec<f64>> {
        self.check_time(grid, t)?;
        let spec = self.spectra(data, grid)?;
        Ok(grid.inverse(&self.mean_hat(&spec, t)?))
    }

    /// `∂ₜa(u)(·, t)` on the grid.
    pub fn mean_field_rate(&self, data: &InitialData, grid: &XGrid, t: f64) -> Result<Vec<f64>> {
        self.check_time(grid, t)?;
        let spec = self.spectra(data, grid)?;
        Ok(grid.inverse(&self.mean_hat_filtered(&spec, t, true, |_| true)?))
    }

    /// `u(x, y, t)` on the grid and the transverse nodes, with the memory term
    /// switched off when `memory` is false.
    pub fn full_field(&self, data: &InitialData, grid: &XGrid, t: f64, memory: bool) -> Result<FieldSnapshot> {
        self.check_time(grid, t)?;
        let spec = self.spectra(data, grid)?;
        let nf = 2 * self.options.history_nodes.max(1);
        let times: Vec<f64> = (0..=nf).map(|i| t * i as f64 / nf as f64).collect();
        let history: Vec<Vec<Complex64>> = if memory && t > 0.0 {
            times
                .par_iter()
                .map(|&s| self.mean_hat(&spec, s))
                .collect::<Result<_>>()?
        } else {
            vec![self.mean_hat(&spec, t)?]
        };
        let mean_now = history.last().cloned().unwrap_or_default();
        let fine = simpson_weights(nf, t);
        let coarse = simpson_weights(nf / 2, t);
        let mm = spec.m_max;
        let per_y: Vec<(Vec<Complex64>, f64, f64)> = (0..self.rule.len())
            .into_par_iter()
            .map(|j| {
                let c = self.profile().m(self.rule.nodes[j]);
                let mut uh = vec![ZERO; grid.half_len()];
                let mut gap = 0.0;
                let mut size = 0.0;
                for m in 0..=mm {
                    let k = grid.k(m);
                    let ik = Complex64::new(0.0, k);
                    let e = Complex64::from_polar(1.0, -k * c * t);
                    let mut v = e * (spec.u0[j][m] + t * (spec.u1[j][m] + c * ik * spec.u0[j][m]));
                    if memory && t > 0.0 {
                        let mut mf = ZERO;
                        let mut mc = ZERO;
                        for (i, &s) in times.iter().enumerate() {
                            let g = (t - s) * (-k * k) * history[i][m] * Complex64::from_polar(1.0, -k * c * (t - s));
                            mf += fine[i] * g;
                            if i % 2 == 0 {
                                mc += coarse[i / 2] * g;
                            }
                        }
                        v += mf;
                        let mult = if m == 0 { 1.0 } else { 2.0 };
                        gap += mult * (mf - mc).norm_sqr();
                    }
                    let mult = if m == 0 { 1.0 } else { 2.0 };
                    size += mult * v.norm_sqr();
                    uh[m] = v;
                }
                (uh, gap, size)
            })
            .collect();
        let (mut gap, mut size) = (0.0, 0.0);
        for (j, (_, g, s)) in per_y.iter().enumerate() {
            gap += self.rule.weights[j] * g;
            size += self.rule.weights[j] * s;
        }
        if memory && size > 0.0 {
            let rel = (gap / size).sqrt();
            if rel > self.options.history_tol {
                return Err(Error::TimeResolution {
                    gap: rel,
                    tol: self.options.history_tol,
                });
            }
        }
        let u: Vec<Vec<f64>> = per_y.iter().map(|(uh, _, _)| grid.inverse(uh)).collect();
        let p_hat: Vec<Complex64> = mean_now
            .iter()
            .enumerate()
            .map(|(m, a)| -Complex64::new(0.0, grid.k(m)) * a)
            .collect();
        Ok(FieldSnapshot {
            t,
            x: grid.points(),
            y: self.rule.nodes.clone(),
            y_weights: self.rule.weights.clone(),
            u,
            mean: grid.inverse(&mean_now),
            pressure: grid.inverse(&p_hat),
        })
    }

    /// Mean field split into pole, spread and local groups plus the density
    /// components at the sampled speeds. Requires `u¹ = 0`.
    pub fn transport_decomposition(
        &self,
        data: &InitialData,
        grid: &XGrid,
        t: f64,
        lambdas: &[f64],
    ) -> Result<Decomposition> {
        self.check_time(grid, t)?;
        if !data.velocity_is_zero() {
            return Err(Error::UnsupportedDecomposition(
                "the transport interpretation is available for zero initial velocity only".into(),
            ));
        }
        let spec = self.spectra(data, grid)?;
        let part =
            |g: Group| -> Result<Vec<f64>> { Ok(grid.inverse(&self.mean_hat_filtered(&spec, t, false, |h| h == g)?)) };
        let mut samples = Vec::new();
        for &l in lambdas {
            for comp in self.components_at(l) {
                samples.push((comp, self.component(comp, data, grid, t)?));
            }
        }
        Ok(Decomposition {
            t,
            x: grid.points(),
            pole: part(Group::Pole)?,
            spread: part(Group::Spread)?,
            local: part(Group::Local)?,
            samples,
        })
    }

    /// Density components available at speed `λ` for this profile class.
    pub fn components_at(&self, lambda: f64) -> Vec<Component> {
        match self.kernels.cut() {
            Some(_) => vec![Component::CutRegular { lambda }, Component::CutTransport { lambda }],
            None => {
                let mut v: Vec<Component> = (0..self.kernels.spectrum().interior.len())
                    .map(|index| Component::PolePart { lambda, index })
                    .collect();
                v.push(Component::LocalPart { lambda });
                v
            }
        }
    }

    /// Transport speeds whose operators annihilate a component.
    pub fn component_speeds(&self, comp: Component) -> Vec<f64> {
        match comp {
            Component::Pole => self.kernels.exterior().iter().map(|p| p.lambda).collect(),
            Component::CutRegular { lambda } | Component::CutTransport { lambda } | Component::LocalPart { lambda } => {
                vec![lambda, lambda]
            }
            Component::PolePart { index, .. } => vec![self.kernels.spectrum().interior[index].lambda],
        }
    }

    /// One component on the grid at time `t`.
    pub fn component(&self, comp: Component, data: &InitialData, grid: &XGrid, t: f64) -> Result<Vec<f64>> {
        let half = grid.half_len();
        let (lo, hi) = self.profile().range();
        let inside = |l: f64| -> Result<()> {
            if l > lo && l < hi {
                Ok(())
            } else {
                Err(Error::Domain {
                    what: "lambda",
                    value: l,
                    lo,
                    hi,
                })
            }
        };
        let data_at =
            |y: f64| -> Result<Vec<Complex64>> { Ok(grid.forward(&data.sample(Field::Displacement, grid, y)?)) };
        let translate = |v: &mut [Complex64], s: f64| {
            for (m, z) in v.iter_mut().enumerate() {
                *z *= Complex64::from_polar(1.0, -grid.k(m) * s * t);
            }
        };
        let hat: Vec<Complex64> = match comp {
            Component::Pole => {
                let spec = self.spectra(data, grid)?;
                let mut v = self.mean_hat_filtered(&spec, t, false, |g| g == Group::Pole)?;
                v.resize(half, ZERO);
                v
            }
            Component::CutRegular { lambda } => {
                inside(lambda)?;
                let cut = self.kernels.cut().ok_or(Error::UnsupportedClass("piecewise-linear"))?;
                let (n, np) = cut.eval(lambda);
                let (g, h) = (n.im / PI, np.im / PI);
                let VelocityProfile::Smooth(sp) = self.profile() else {
                    return Err(Error::UnsupportedClass("piecewise-linear"));
                };
                let ystar = sp.inverse_jet(lambda)[0];
                let bracket = |y: f64| -> Result<Vec<Complex64>> {
                    let c = self.profile().m(y);
                    let u = data_at(y)?;
                    Ok(u.iter()
                        .enumerate()
                        .map(|(m, z)| (-2.0 * g * (t * c * I * grid.k(m) + 1.0) + 2.0 * h * c) * z)
                        .collect())
                };
                // P.V. ∫ q(y)/(λ − M(y)) dy with q h(y), h = (y − y*)/(λ − M(y)) regular.
                let qs = bracket(ystar)?;
                let hs = -1.0 / sp.jet(ystar)[1];
                let rule = Rule::composite(&Rule::gauss_legendre(32), &[-1.0, ystar, 1.0]);
                let mut acc = vec![ZERO; half];
                for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let q = bracket(y)?;
                    let hy = (y - ystar) / (lambda - self.profile().m(y));
                    for m in 0..half {
                        acc[m] += w * (q[m] * hy - qs[m] * hs) / (y - ystar);
                    }
                }
                let log = ((1.0 - ystar) / (1.0 + ystar)).ln();
                for m in 0..half {
                    acc[m] = 0.5 * (acc[m] + qs[m] * hs * log);
                }
                translate(&mut acc, lambda);
                acc
            }
            Component::CutTransport { lambda } => {
                inside(lambda)?;
                let cut = self.kernels.cut().ok_or(Error::UnsupportedClass("piecewise-linear"))?;
                let (n, np) = cut.eval(lambda);
                let jet = self.profile().inverse_calculus(lambda)?;
                let mut u = data_at(jet[0])?;
                for (m, z) in u.iter_mut().enumerate() {
                    let ik = I * grid.k(m);
                    *z *= jet[1].abs() * (n.re * (t * lambda * ik + 1.0) - lambda * np.re);
                }
                translate(&mut u, lambda);
                u
            }
            Component::PolePart { lambda, index } => {
                inside(lambda)?;
                let (y, dmu) = self.profile().inverse_affine(lambda)?;
                let p = self.kernels.spectrum().interior[index];
                let d = p.lambda - lambda;
                let f = dmu.abs() * (-lambda * p.res / (d * d) + p.res / d);
                let mut u = data_at(y)?;
                for z in u.iter_mut() {
                    *z *= f;
                }
                translate(&mut u, p.lambda);
                u
            }
            Component::LocalPart { lambda } => {
                inside(lambda)?;
                let (y, dmu) = self.profile().inverse_affine(lambda)?;
                let b = dispersion::boundary_value(self.profile(), lambda)?;
                let (n, np) = (b.n.re, b.n_prime.re);
                let mut u = data_at(y)?;
                for (m, z) in u.iter_mut().enumerate() {
                    let ik = I * grid.k(m);
                    *z *= dmu.abs() * (t * lambda * n * ik - lambda * np + n);
                }
                translate(&mut u, lambda);
                u
            }
        };
        Ok(grid.inverse(&hat))
    }
}

/// Composite Simpson weights for `n` (even) intervals on `[0, t]`.
pub fn simpson_weights(n: usize, t: f64) -> Vec<f64> {
    assert!(
        n >= 2 && n.is_multiple_of(2),
        "Simpson's rule needs an even interval count"
    );
    let h = t / n as f64;
    (0..=n)
        .map(|i| {
            let c = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// Sup-norm of `∏ₛ(∂ₜ + s∂ₓ) f` by fourth-order central differences, `f`
/// given as a function of time returning grid samples, together with the
/// sup-norm of `f(t)`. At most two factors.
pub fn transport_residual<F: Fn(f64) -> Result<Vec<f64>>>(
    f: F,
    speeds: &[f64],
    grid: &XGrid,
    t: f64,
    h: f64,
) -> Result<(f64, f64)> {
    if speeds.is_empty() || speeds.len() > 2 {
        return Err(Error::Contract(format!(
            "{} transport factors, expected 1 or 2",
            speeds.len()
        )));
    }
    let vals: Vec<Vec<f64>> = [-2.0, -1.0, 0.0, 1.0, 2.0]
        .iter()
        .map(|&d| f(t + d * h))
        .collect::<Result<_>>()?;
    let n = grid.n;
    let dt1 = |i: usize| (vals[0][i] - 8.0 * vals[1][i] + 8.0 * vals[3][i] - vals[4][i]) / (12.0 * h);
    let dt2 = |i: usize| {
        (-vals[0][i] + 16.0 * vals[1][i] - 30.0 * vals[2][i] + 16.0 * vals[3][i] - vals[4][i]) / (12.0 * h * h)
    };
    let dx = grid.dx();
    let at = |v: &dyn Fn(usize) -> f64, i: usize, o: isize| v((i as isize + o).rem_euclid(n as isize) as usize);
    let d1x = |v: &dyn Fn(usize) -> f64, i: usize| {
        (at(v, i, -2) - 8.0 * at(v, i, -1) + 8.0 * at(v, i, 1) - at(v, i, 2)) / (12.0 * dx)
    };
    let d2x = |v: &dyn Fn(usize) -> f64, i: usize| {
        (-at(v, i, -2) + 16.0 * at(v, i, -1) - 30.0 * v(i) + 16.0 * at(v, i, 1) - at(v, i, 2)) / (12.0 * dx * dx)
    };
    let f0 = |i: usize| vals[2][i];
    let mut res = 0.0f64;
    for i in 0..n {
        let r = if speeds.len() == 1 {
            dt1(i) + speeds[0] * d1x(&f0, i)
        } else {
            let (a, b) = (speeds[0], speeds[1]);
            dt2(i) + (a + b) * d1x(&dt1, i) + a * b * d2x(&f0, i)
        };
        res = res.max(r.abs());
    }
    let scale = vals[2].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((res, scale))
}
