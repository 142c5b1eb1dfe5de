//! Independent reference solver: discrete Fourier modes in `x`, transverse
//! Gauss–Legendre nodes in `y`, and the classical fourth-order Runge–Kutta
//! scheme for each mode of
//!
//! ```text
//! ∂ₜ²û = −2ikM ∂ₜû + k²M² û − k² a(û).
//! ```
//!
//! Modes are independent and evolved in parallel; reductions run in a fixed
//! order so results are reproducible.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{DataSpectra, InitialData, XGrid};
use crate::error::{Error, Result};
use crate::profile::{ProfileClass, VelocityProfile};
use crate::quadrature::Rule;
use crate::solution::FieldSnapshot;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default time-step safety factor.
pub const C_CFL: f64 = 0.5;

/// Largest admissible step `c_CFL/(|k|(M₊ − M₋ + 2))`.
pub fn cfl_bound(profile: &VelocityProfile, k: f64) -> f64 {
    let (lo, hi) = profile.range();
    if k == 0.0 {
        f64::INFINITY
    } else {
        C_CFL / (k.abs() * (hi - lo + 2.0))
    }
}

/// One Fourier mode on the transverse nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub k: f64,
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

/// Transverse discretization shared by all modes.
#[derive(Debug, Clone)]
struct Transverse {
    m: Vec<f64>,
    half_w: Vec<f64>,
}

impl Transverse {
    fn new(profile: &VelocityProfile, rule: &Rule) -> Self {
        Transverse {
            m: rule.nodes.iter().map(|&y| profile.m(y)).collect(),
            half_w: rule.weights.iter().map(|w| 0.5 * w).collect(),
        }
    }

    fn mean(&self, u: &[Complex64]) -> Complex64 {
        u.iter().zip(&self.half_w).map(|(z, w)| z * w).sum()
    }

    /// `(u, v) ↦ (v, −2ikMv + k²M²u − k²a(u))`.
    fn rhs(&self, k: f64, u: &[Complex64], v: &[Complex64], du: &mut [Complex64], dv: &mut [Complex64]) {
        let a = self.mean(u);
        let k2 = k * k;
        for j in 0..u.len() {
            let m = self.m[j];
            du[j] = v[j];
            dv[j] = Complex64::new(0.0, -2.0 * k * m) * v[j] + k2 * m * m * u[j] - k2 * a;
        }
    }

    fn step(&self, k: f64, u: &mut [Complex64], v: &mut [Complex64], dt: f64, work: &mut Work) {
        let n = u.len();
        let Work {
            k1,
            k2,
            k3,
            k4,
            l1,
            l2,
            l3,
            l4,
            tu,
            tv,
        } = work;
        self.rhs(k, u, v, k1, l1);
        for j in 0..n {
            tu[j] = u[j] + 0.5 * dt * k1[j];
            tv[j] = v[j] + 0.5 * dt * l1[j];
        }
        self.rhs(k, tu, tv, k2, l2);
        for j in 0..n {
            tu[j] = u[j] + 0.5 * dt * k2[j];
            tv[j] = v[j] + 0.5 * dt * l2[j];
        }
        self.rhs(k, tu, tv, k3, l3);
        for j in 0..n {
            tu[j] = u[j] + dt * k3[j];
            tv[j] = v[j] + dt * l3[j];
        }
        self.rhs(k, tu, tv, k4, l4);
        let s = dt / 6.0;
        for j in 0..n {
            u[j] += s * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            v[j] += s * (l1[j] + 2.0 * l2[j] + 2.0 * l3[j] + l4[j]);
        }
    }
}

struct Work {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    l1: Vec<Complex64>,
    l2: Vec<Complex64>,
    l3: Vec<Complex64>,
    l4: Vec<Complex64>,
    tu: Vec<Complex64>,
    tv: Vec<Complex64>,
}

impl Work {
    fn new(n: usize) -> Self {
        let z = vec![ZERO; n];
        Work {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            l1: z.clone(),
            l2: z.clone(),
            l3: z.clone(),
            l4: z.clone(),
            tu: z.clone(),
            tv: z,
        }
    }
}

fn advance(tr: &Transverse, mode: &mut ModeState, t_span: f64, dt: f64) {
    if t_span <= 0.0 {
        return;
    }
    let steps = (t_span / dt).ceil().max(1.0) as usize;
    let h = t_span / steps as f64;
    let mut work = Work::new(mode.u.len());
    for _ in 0..steps {
        tr.step(mode.k, &mut mode.u, &mut mode.v, h, &mut work);
    }
}

/// Advances `mode` by `t_end` with steps no longer than `dt` (the span is
/// divided evenly). Steps above the stability bound are rejected.
pub fn evolve_fourier(
    profile: &VelocityProfile,
    rule: &Rule,
    mode: &ModeState,
    t_end: f64,
    dt: f64,
) -> Result<ModeState> {
    let bound = cfl_bound(profile, mode.k);
    if !(dt > 0.0 && dt <= bound) {
        return Err(Error::TimeStep { dt, bound });
    }
    if mode.u.len() != rule.len() || mode.v.len() != rule.len() {
        return Err(Error::Contract(format!(
            "mode has {} / {} values, rule has {} nodes",
            mode.u.len(),
            mode.v.len(),
            rule.len()
        )));
    }
    let tr = Transverse::new(profile, rule);
    let mut out = mode.clone();
    advance(&tr, &mut out, t_end, dt);
    Ok(out)
}

/// Settings of the reference solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub y_nodes: usize,
    /// Target `|k|(max|M| + 1) dt` per step, capped by the stability bound.
    pub phase_step: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            y_nodes: 64,
            phase_step: 0.05,
        }
    }
}

/// Reference solver for one profile.
#[derive(Debug, Clone)]
pub struct Oracle {
    profile: VelocityProfile,
    rule: Rule,
    tr: Transverse,
    pub options: OracleOptions,
}

/// Norms of mean and full field at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSample {
    pub t: f64,
    pub norm_mean: f64,
    pub norm_full: f64,
}

/// Norm curve with log-log and log-linear fits over the late window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub samples: Vec<NormSample>,
    pub fit_from: f64,
    pub slope_mean: f64,
    pub slope_full: f64,
    /// Slope of `log‖·‖` against `t` over the fit window.
    pub rate_mean: f64,
    pub rate_full: f64,
    /// Exponents `p` of the normalizations `‖·‖/(1 + t)^p` for this class.
    pub power_mean: i32,
    pub power_full: i32,
    pub normalized_mean_nonincreasing: bool,
    pub normalized_full_nonincreasing: bool,
}

impl GrowthReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,norm_mean,norm_full,norm_mean_over_1pt,norm_full_over_1pt_cubed")?;
        for s in &self.samples {
            let g = 1.0 + s.t;
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t,
                s.norm_mean,
                s.norm_full,
                s.norm_mean / g.powi(self.power_mean),
                s.norm_full / g.powi(self.power_full)
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

impl Oracle {
    pub fn new(profile: &VelocityProfile, options: OracleOptions) -> Self {
        let rule = profile.transverse_rule(options.y_nodes);
        let tr = Transverse::new(profile, &rule);
        Oracle {
            profile: profile.clone(),
            rule,
            tr,
            options,
        }
    }

    pub fn y_rule(&self) -> &Rule {
        &self.rule
    }

    /// Step used for wavenumber `k`.
    pub fn step(&self, k: f64) -> f64 {
        if k == 0.0 {
            return f64::INFINITY;
        }
        let rho = self.profile.sup_norm() + 1.0;
        (self.options.phase_step / (k.abs() * rho)).min(cfl_bound(&self.profile, k))
    }

    fn initial_modes(&self, spec: &DataSpectra) -> Vec<ModeState> {
        (0..=spec.m_max)
            .map(|m| ModeState {
                k: spec.grid.k(m),
                u: spec.u0.iter().map(|r| r[m]).collect(),
                v: spec.u1.iter().map(|r| r[m]).collect(),
            })
            .collect()
    }

    /// Mode states at each of the ascending `times`.
    pub fn evolve_modes(&self, spec: &DataSpectra, times: &[f64]) -> Result<Vec<Vec<ModeState>>> {
        if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::Contract("times must be non-negative and ascending".into()));
        }
        let per_mode: Vec<Vec<ModeState>> = self
            .initial_modes(spec)
            .into_par_iter()
            .map(|mut mode| {
                let dt = self.step(mode.k);
                let mut prev = 0.0;
                let mut out = Vec::with_capacity(times.len());
                for &t in times {
                    if mode.k == 0.0 {
                        // ∂ₜ²û = 0 is integrated exactly.
                        for (u, v) in mode.u.iter_mut().zip(&mode.v) {
                            *u += (t - prev) * v;
                        }
                    } else {
                        advance(&self.tr, &mut mode, t - prev, dt);
                    }
                    prev = t;
                    out.push(mode.clone());
                }
                out
            })
            .collect();
        Ok((0..times.len())
            .map(|i| per_mode.iter().map(|v| v[i].clone()).collect())
            .collect())
    }

    fn snapshot(&self, grid: &XGrid, modes: &[ModeState], t: f64) -> FieldSnapshot {
        let half = grid.half_len();
        let ny = self.rule.len();
        let mut u = Vec::with_capacity(ny);
        for j in 0..ny {
            let mut h = vec![ZERO; half];
            for (m, mode) in modes.iter().enumerate() {
                h[m] = mode.u[j];
            }
            u.push(grid.inverse(&h));
        }
        let mut a_hat = vec![ZERO; half];
        for (m, mode) in modes.iter().enumerate() {
            a_hat[m] = self.tr.mean(&mode.u);
        }
        let p_hat: Vec<Complex64> = a_hat
            .iter()
            .enumerate()
            .map(|(m, a)| -Complex64::new(0.0, grid.k(m)) * a)
            .collect();
        FieldSnapshot {
            t,
            x: grid.points(),
            y: self.rule.nodes.clone(),
            y_weights: self.rule.weights.clone(),
            u,
            mean: grid.inverse(&a_hat),
            pressure: grid.inverse(&p_hat),
        }
    }

    /// Reference snapshots at each of the ascending `times`.
    pub fn solve_many(&self, data: &InitialData, grid: &XGrid, times: &[f64]) -> Result<Vec<FieldSnapshot>> {
        let spec = data.spectra(grid, &self.rule)?;
        let states = self.evolve_modes(&spec, times)?;
        Ok(states
            .iter()
            .zip(times)
            .map(|(modes, &t)| self.snapshot(grid, modes, t))
            .collect())
    }

    /// Reference snapshot at time `t`.
    pub fn solve_reference(&self, data: &InitialData, grid: &XGrid, t: f64) -> Result<FieldSnapshot> {
        Ok(self.solve_many(data, grid, &[t])?.remove(0))
    }

    /// Norms by Parseval: `‖a‖ = (Δx/n Σ|â|²)^{1/2}`, `‖u‖` with Gauss weights in `y`.
    fn norms(&self, grid: &XGrid, modes: &[ModeState], t: f64) -> NormSample {
        let s = grid.dx() / grid.n as f64;
        let mut na = 0.0;
        let mut nu = 0.0;
        for (m, mode) in modes.iter().enumerate() {
            let mult = if m == 0 { 1.0 } else { 2.0 };
            na += mult * self.tr.mean(&mode.u).norm_sqr();
            let row: f64 = mode
                .u
                .iter()
                .zip(&self.rule.weights)
                .map(|(z, w)| w * z.norm_sqr())
                .sum();
            nu += mult * row;
        }
        NormSample {
            t,
            norm_mean: (s * na).sqrt(),
            norm_full: (s * nu).sqrt(),
        }
    }

    /// Norm curve on dyadic times up to `t_max` (plus `t_max` itself), fitted
    /// over `t ≥ fit_from`.
    pub fn growth_probe(&self, data: &InitialData, grid: &XGrid, t_max: f64, fit_from: f64) -> Result<GrowthReport> {
        let mut times = Vec::new();
        let mut t = 1.0;
        while t < t_max {
            times.push(t);
            t *= 2.0;
        }
        times.push(t_max);
        let spec = data.spectra(grid, &self.rule)?;
        let states = self.evolve_modes(&spec, &times)?;
        let samples: Vec<NormSample> = states
            .iter()
            .zip(&times)
            .map(|(modes, &t)| self.norms(grid, modes, t))
            .collect();
        let late: Vec<&NormSample> = samples.iter().filter(|s| s.t >= fit_from).collect();
        if late.len() < 2 {
            return Err(Error::Contract(format!(
                "fit window t ≥ {fit_from} holds {} samples, need 2",
                late.len()
            )));
        }
        let lt: Vec<f64> = late.iter().map(|s| s.t.ln()).collect();
        let tt: Vec<f64> = late.iter().map(|s| s.t).collect();
        let la: Vec<f64> = late.iter().map(|s| s.norm_mean.ln()).collect();
        let lu: Vec<f64> = late.iter().map(|s| s.norm_full.ln()).collect();
        let (power_mean, power_full) = match self.profile.class() {
            ProfileClass::SmoothMonotoneConvex => (1, 3),
            ProfileClass::PiecewiseLinear => (2, 4),
        };
        let nonincreasing = |p: i32, f: &dyn Fn(&NormSample) -> f64| {
            let v: Vec<f64> = late.iter().map(|s| f(s) / (1.0 + s.t).powi(p)).collect();
            v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
        };
        Ok(GrowthReport {
            fit_from,
            slope_mean: fit_slope(&lt, &la),
            slope_full: fit_slope(&lt, &lu),
            rate_mean: fit_slope(&tt, &la),
            rate_full: fit_slope(&tt, &lu),
            power_mean,
            power_full,
            normalized_mean_nonincreasing: nonincreasing(power_mean, &|s| s.norm_mean),
            normalized_full_nonincreasing: nonincreasing(power_full, &|s| s.norm_full),
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Packet;
    use crate::profile::SmoothEvaluator;
    use std::sync::Arc;

    /// `M(y) = m₀ + εy` with a tiny slope: a constant flow for the closed form.
    struct NearlyConstant(f64);
    impl SmoothEvaluator for NearlyConstant {
        fn jet(&self, y: f64) -> [f64; 4] {
            [self.0 + 1e-300 * y, 1e-300, 0.0, 0.0]
        }
    }

    fn mode(k: f64, n: usize) -> ModeState {
        ModeState {
            k,
            u: vec![Complex64::new(1.0, 0.0); n],
            v: vec![ZERO; n],
        }
    }

    #[test]
    fn zero_mode_is_linear_in_time() {
        let p = VelocityProfile::exp(1.0, 0.0);
        let rule = Rule::gauss_legendre(8);
        let mut m = mode(0.0, 8);
        m.v = vec![Complex64::new(0.5, 0.0); 8];
        let out = evolve_fourier(&p, &rule, &m, 3.0, 0.1).unwrap();
        for u in &out.u {
            assert!((u - Complex64::new(2.5, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_flow_closed_form() {
        // (∂ₜ + ikM)²û = −k²û with û(0) = 1, ∂ₜû(0) = 0:
        // û = e^{−ikMt}(cos kt + iM sin kt).
        let m0 = 0.7;
        let p = VelocityProfile::smooth(Arc::new(NearlyConstant(m0)));
        let rule = Rule::gauss_legendre(4);
        let k = 1.3;
        let t = 2.0;
        let out = evolve_fourier(&p, &rule, &mode(k, 4), t, 1e-3).unwrap();
        let want = Complex64::from_polar(1.0, -k * m0 * t) * Complex64::new((k * t).cos(), m0 * (k * t).sin());
        for u in &out.u {
            assert!((u - want).norm() < 1e-10, "{u} vs {want}");
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let p = VelocityProfile::exp(1.0, 0.0);
        let rule = Rule::gauss_legendre(8);
        let m0 = mode(2.0, 8);
        let reference = evolve_fourier(&p, &rule, &m0, 1.0, 1e-4).unwrap();
        let err = |dt: f64| {
            let o = evolve_fourier(&p, &rule, &m0, 1.0, dt).unwrap();
            o.u.iter()
                .zip(&reference.u)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!((13.0..19.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn step_above_bound_is_rejected() {
        let p = VelocityProfile::exp(1.0, 0.0);
        let rule = Rule::gauss_legendre(4);
        let b = cfl_bound(&p, 2.0);
        assert!(matches!(
            evolve_fourier(&p, &rule, &mode(2.0, 4), 1.0, 1.01 * b),
            Err(Error::TimeStep { .. })
        ));
    }

    #[test]
    fn round_trip_at_time_zero() {
        let p = VelocityProfile::exp(1.0, 0.0);
        let o = Oracle::new(
            &p,
            OracleOptions {
                y_nodes: 8,
                ..Default::default()
            },
        );
        let g = XGrid::new(40.0, 256).unwrap();
        let d = InitialData::packet(Packet::gaussian(1.0, 0.0, 1.0));
        let s = o.solve_reference(&d, &g, 0.0).unwrap();
        for row in &s.u {
            for (i, v) in row.iter().enumerate() {
                assert!((v - (-g.point(i).powi(2)).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn modes_are_independent_of_order() {
        let p = VelocityProfile::piecewise_linear(vec![-1.0, 1.0], vec![-1.0, 1.0]).unwrap();
        let o = Oracle::new(
            &p,
            OracleOptions {
                y_nodes: 8,
                ..Default::default()
            },
        );
        let g = XGrid::new(40.0, 128).unwrap();
        let d = InitialData::packet(Packet::gaussian(1.0, 0.0, 1.0));
        let spec = d.spectra(&g, o.y_rule()).unwrap();
        let all = o.evolve_modes(&spec, &[1.0]).unwrap();
        let m = 5;
        let single = evolve_fourier(&p, o.y_rule(), &o.initial_modes(&spec)[m], 1.0, o.step(g.k(m))).unwrap();
        assert_eq!(all[0][m], single);
    }

    #[test]
    fn slope_fit() {
        let xs = [1.0, 2.0, 3.0];
        assert!((fit_slope(&xs, &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-14);
    }
}
