//! The dispersion function `F(λ) = ∫₋₁¹ (M(y) − λ)⁻² dy`, the norming factor
//! `N = (2 − F)⁻¹`, their derivatives, and their boundary values on the cut
//! `[M₋, M₊]`.
//!
//! Off the cut, smooth profiles are integrated in `y` when `λ` is far from the
//! cut and in the Cauchy form
//!
//! ```text
//! F(λ) = σ { −[μ′/(z−λ)] + ∫ μ″(z)/(z−λ) dz },   σ = sign μ′
//! ```
//!
//! with the density subtracted at `Re λ` when `λ` is close to it. On the cut
//! the same form gives the Plemelj limits `F± = σ{−[μ′/(z−λ)] + P.V.∫ μ″/(z−λ)
//! ± iπ μ″(λ)}`. Piecewise-linear profiles use the exact rational form.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::profile::{PiecewiseLinear, SmoothProfile, VelocityProfile};
use crate::quadrature;

/// Relative tolerance of off-cut quadrature.
pub const OFF_CUT_REL_TOL: f64 = 1e-12;
/// Absolute tolerance of the principal-value quadrature on the cut.
pub const CUT_ABS_TOL: f64 = 1e-13;
/// `|2 − F|` below this is treated as a pole of `N`.
pub const POLE_TOL: f64 = 1e-12;
/// Default number of interior cut nodes in a [`DispersionTable`].
pub const DEFAULT_CUT_NODES: usize = 513;

/// Side of the cut from which a boundary value is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Distance below which `λ` counts as lying on the real segment `[lo, hi]`.
fn on_segment(lambda: Complex64, lo: f64, hi: f64) -> bool {
    let scale = 1.0 + lo.abs().max(hi.abs());
    lambda.im.abs() <= 1e-15 * scale && lambda.re >= lo && lambda.re <= hi
}

fn pl_node_hit(p: &PiecewiseLinear, lambda: Complex64) -> Option<f64> {
    let scale = 1.0 + p.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    p.values()
        .iter()
        .copied()
        .find(|&m| (lambda - m).norm() <= 1e-14 * scale)
}

/// Exact `(F, F′)` for a piecewise-linear profile:
/// `F = Σ wᵢ [1/(Mᵢ − λ) − 1/(Mᵢ₊₁ − λ)]` with `wᵢ = 1/αᵢ`.
fn pl_f(p: &PiecewiseLinear, lambda: Complex64) -> (Complex64, Complex64) {
    let m = p.values();
    let mut f = Complex64::new(0.0, 0.0);
    let mut fp = Complex64::new(0.0, 0.0);
    for (i, &alpha) in p.slopes().iter().enumerate() {
        let w = 1.0 / alpha;
        let a = 1.0 / (m[i] - lambda);
        let b = 1.0 / (m[i + 1] - lambda);
        f += w * (a - b);
        fp += w * (a * a - b * b);
    }
    (f, fp)
}

/// Coefficient `A` of the simple pole `A/(Mᵢ − λ)` of `F` at node `i`.
pub(crate) fn pl_node_coefficient(p: &PiecewiseLinear, i: usize) -> f64 {
    let s = p.slopes();
    let mut a = 0.0;
    if i < s.len() {
        a += 1.0 / s[i];
    }
    if i > 0 {
        a -= 1.0 / s[i - 1];
    }
    a
}

/// `ln(M₊ − λ) − ln(M₋ − λ) = ∫_{M₋}^{M₊} dz/(z − λ)` off the segment.
fn log_ratio(lambda: Complex64, lo: f64, hi: f64) -> Complex64 {
    (c(hi) - lambda).ln() - (c(lo) - lambda).ln()
}

fn smooth_sign(s: &SmoothProfile, lo: f64) -> f64 {
    s.inverse_jet(lo)[1].signum()
}

/// Off-cut `(F, F′)` for a smooth profile.
fn smooth_f(profile: &VelocityProfile, s: &SmoothProfile, lambda: Complex64) -> Result<(Complex64, Complex64)> {
    let (lo, hi) = profile.range();
    let width = hi - lo;
    let dist = if lambda.re < lo {
        (lambda - lo).norm()
    } else if lambda.re > hi {
        (lambda - hi).norm()
    } else {
        lambda.im.abs()
    };
    if dist > 0.25 * width {
        let f = quadrature::adaptive(
            |y| {
                let d = s.jet(y)[0] - lambda;
                1.0 / (d * d)
            },
            -1.0,
            1.0,
            0.0,
            OFF_CUT_REL_TOL,
        )?;
        let fp = quadrature::adaptive(
            |y| {
                let d = s.jet(y)[0] - lambda;
                2.0 / (d * d * d)
            },
            -1.0,
            1.0,
            1e-300,
            OFF_CUT_REL_TOL,
        )?;
        return Ok((f, fp));
    }
    let sigma = smooth_sign(s, lo);
    let x0 = lambda.re.clamp(lo, hi);
    let j0 = s.inverse_jet(x0);
    let (jl, jh) = (s.inverse_jet(lo), s.inverse_jet(hi));
    let (dl, dh) = (c(lo) - lambda, c(hi) - lambda);
    let log = log_ratio(lambda, lo, hi);
    let reg = |k: usize| {
        move |z: f64| {
            let j = s.inverse_jet(z);
            (j[k] - j0[k]) / (z - lambda)
        }
    };
    let tol = 1e-14 * width.max(1.0);
    let integral = |k: usize| -> Result<Complex64> {
        let mut v = Complex64::new(0.0, 0.0);
        if x0 > lo {
            v += quadrature::adaptive(reg(k), lo, x0, tol, OFF_CUT_REL_TOL)?;
        }
        if x0 < hi {
            v += quadrature::adaptive(reg(k), x0, hi, tol, OFF_CUT_REL_TOL)?;
        }
        Ok(v + j0[k] * log)
    };
    let f = -(jh[1] / dh - jl[1] / dl) + integral(2)?;
    let fp = -(jh[1] / (dh * dh) - jl[1] / (dl * dl)) - (jh[2] / dh - jl[2] / dl) + integral(3)?;
    Ok((sigma * f, sigma * fp))
}

fn f_and_prime(profile: &VelocityProfile, lambda: Complex64) -> Result<(Complex64, Complex64)> {
    match profile {
        VelocityProfile::Smooth(s) => {
            let (lo, hi) = profile.range();
            if on_segment(lambda, lo, hi) {
                return Err(Error::OnCut(lambda.re));
            }
            smooth_f(profile, s, lambda)
        }
        VelocityProfile::PiecewiseLinear(p) => {
            if let Some(m) = pl_node_hit(p, lambda) {
                return Err(Error::OnCut(m));
            }
            Ok(pl_f(p, lambda))
        }
    }
}

/// `F(λ)` off the cut (smooth) or away from the nodes (piecewise linear).
pub fn eval_f(profile: &VelocityProfile, lambda: Complex64) -> Result<Complex64> {
    match profile {
        VelocityProfile::PiecewiseLinear(p) => {
            if let Some(m) = pl_node_hit(p, lambda) {
                return Err(Error::OnCut(m));
            }
            Ok(pl_f(p, lambda).0)
        }
        _ => f_and_prime(profile, lambda).map(|v| v.0),
    }
}

/// `F′(λ)`.
pub fn eval_f_prime(profile: &VelocityProfile, lambda: Complex64) -> Result<Complex64> {
    f_and_prime(profile, lambda).map(|v| v.1)
}

fn pole_check(two_minus_f: Complex64, lambda: Complex64) -> Result<()> {
    if two_minus_f.norm() < POLE_TOL {
        Err(Error::AtPole {
            re: lambda.re,
            im: lambda.im,
        })
    } else {
        Ok(())
    }
}

/// `N(λ) = (2 − F(λ))⁻¹`.
pub fn eval_n(profile: &VelocityProfile, lambda: Complex64) -> Result<Complex64> {
    let d = 2.0 - eval_f(profile, lambda)?;
    pole_check(d, lambda)?;
    Ok(1.0 / d)
}

/// `N′(λ) = F′(λ) (2 − F(λ))⁻²`.
pub fn eval_n_prime(profile: &VelocityProfile, lambda: Complex64) -> Result<Complex64> {
    let (f, fp) = f_and_prime(profile, lambda)?;
    let d = 2.0 - f;
    pole_check(d, lambda)?;
    Ok(fp / (d * d))
}

/// `(N, N′)` together.
pub fn eval_n_and_prime(profile: &VelocityProfile, lambda: Complex64) -> Result<(Complex64, Complex64)> {
    let (f, fp) = f_and_prime(profile, lambda)?;
    let d = 2.0 - f;
    pole_check(d, lambda)?;
    Ok((1.0 / d, fp / (d * d)))
}

/// `P.V. ∫_a^b g(z)/(z − c) dz` by singularity subtraction plus the exact
/// logarithm `g(c) ln((b − c)/(c − a))`.
pub fn pv_cauchy<G: Fn(f64) -> Complex64>(g: G, a: f64, b: f64, c: f64) -> Result<Complex64> {
    quadrature::pv_subtracted(g, a, b, c, CUT_ABS_TOL * (b - a).abs().max(1.0))
}

/// Boundary data `N₊(λ)`, `N′₊(λ)` at a point of the cut. The `−` side values
/// are the complex conjugates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryValue {
    pub lambda: f64,
    pub n: Complex64,
    pub n_prime: Complex64,
}

impl BoundaryValue {
    pub fn n_side(&self, side: Side) -> Complex64 {
        match side {
            Side::Plus => self.n,
            Side::Minus => self.n.conj(),
        }
    }

    pub fn n_prime_side(&self, side: Side) -> Complex64 {
        match side {
            Side::Plus => self.n_prime,
            Side::Minus => self.n_prime.conj(),
        }
    }
}

/// Plemelj limits `(F₊, F′₊)` at an interior cut point of a smooth profile.
pub fn boundary_f(profile: &VelocityProfile, lambda: f64) -> Result<(Complex64, Complex64)> {
    let s = match profile {
        VelocityProfile::Smooth(s) => s,
        VelocityProfile::PiecewiseLinear(_) => return Err(Error::UnsupportedClass("piecewise-linear")),
    };
    let (lo, hi) = profile.range();
    let sigma = smooth_sign(s, lo);
    let j = s.inverse_jet(lambda);
    let (jl, jh) = (s.inverse_jet(lo), s.inverse_jet(hi));
    let (dl, dh) = (lo - lambda, hi - lambda);
    let pv2 = pv_cauchy(|z| c(s.inverse_jet(z)[2]), lo, hi, lambda)?;
    let pv3 = pv_cauchy(|z| c(s.inverse_jet(z)[3]), lo, hi, lambda)?;
    let f = c(-(jh[1] / dh - jl[1] / dl)) + pv2 + Complex64::new(0.0, PI * j[2]);
    let fp =
        c(-(jh[1] / (dh * dh) - jl[1] / (dl * dl)) - (jh[2] / dh - jl[2] / dl)) + pv3 + Complex64::new(0.0, PI * j[3]);
    Ok((sigma * f, sigma * fp))
}

/// `N₊` and `N′₊` at `λ ∈ [M₋, M₊]`.
///
/// At the endpoints `N = 0` and `N′ = ∓1/|μ′(M±)|`. For piecewise-linear
/// profiles `N` is rational and real on the segment; its values at the nodes
/// are the continuous limits `N = 0`, `N′ = 1/A` with `A` the residue of `F`
/// at the node.
pub fn boundary_value(profile: &VelocityProfile, lambda: f64) -> Result<BoundaryValue> {
    let (lo, hi) = profile.range();
    if !(lo..=hi).contains(&lambda) {
        return Err(Error::Domain {
            what: "lambda",
            value: lambda,
            lo,
            hi,
        });
    }
    let zero = Complex64::new(0.0, 0.0);
    match profile {
        VelocityProfile::Smooth(s) => {
            let scale = (hi - lo).max(1.0);
            if lambda - lo <= 1e-12 * scale || hi - lambda <= 1e-12 * scale {
                let at_hi = hi - lambda < lambda - lo;
                let d1 = s.inverse_jet(if at_hi { hi } else { lo })[1].abs();
                let np = if at_hi { -1.0 / d1 } else { 1.0 / d1 };
                return Ok(BoundaryValue {
                    lambda,
                    n: zero,
                    n_prime: c(np),
                });
            }
            let (f, fp) = boundary_f(profile, lambda)?;
            let d = 2.0 - f;
            if d.norm() < POLE_TOL {
                return Err(Error::SingularCut(lambda));
            }
            Ok(BoundaryValue {
                lambda,
                n: 1.0 / d,
                n_prime: fp / (d * d),
            })
        }
        VelocityProfile::PiecewiseLinear(p) => {
            if let Some(i) = p.values().iter().position(|&m| m == lambda) {
                return Ok(BoundaryValue {
                    lambda,
                    n: zero,
                    n_prime: c(1.0 / pl_node_coefficient(p, i)),
                });
            }
            let (n, np) = eval_n_and_prime(profile, c(lambda))?;
            Ok(BoundaryValue {
                lambda,
                n: c(n.re),
                n_prime: c(np.re),
            })
        }
    }
}

/// `N±(λ)` on the cut.
pub fn boundary_n(profile: &VelocityProfile, lambda: f64, side: Side) -> Result<Complex64> {
    boundary_value(profile, lambda).map(|b| b.n_side(side))
}

/// `N′±(λ)` on the cut.
pub fn boundary_n_prime(profile: &VelocityProfile, lambda: f64, side: Side) -> Result<Complex64> {
    boundary_value(profile, lambda).map(|b| b.n_prime_side(side))
}

/// Chebyshev points of the first kind on `(lo, hi)`, ascending.
pub fn chebyshev_nodes(lo: f64, hi: f64, q: usize) -> Vec<f64> {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    (0..q)
        .map(|j| mid - half * (PI * (2 * j + 1) as f64 / (2 * q) as f64).cos())
        .collect()
}

/// Boundary values of `N` and `N′` sampled on a cut grid plus both endpoints.
#[derive(Debug, Clone)]
pub struct DispersionTable {
    pub profile: VelocityProfile,
    /// Ascending in `λ`; first and last rows are `M₋` and `M₊`.
    pub rows: Vec<BoundaryValue>,
}

impl DispersionTable {
    /// Sample `q` Chebyshev nodes of the cut. Nodes that coincide with a real
    /// pole of a piecewise-linear `N` are skipped.
    pub fn build(profile: &VelocityProfile, q: usize) -> Result<Self> {
        let (lo, hi) = profile.range();
        let mut grid = vec![lo];
        grid.extend(chebyshev_nodes(lo, hi, q));
        grid.push(hi);
        let rows: Vec<Result<Option<BoundaryValue>>> = grid
            .par_iter()
            .map(|&l| match boundary_value(profile, l) {
                Ok(b) => Ok(Some(b)),
                Err(Error::AtPole { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect();
        let mut out = Vec::with_capacity(rows.len());
        for r in rows {
            if let Some(b) = r? {
                out.push(b);
            }
        }
        Ok(DispersionTable {
            profile: profile.clone(),
            rows: out,
        })
    }

    /// CSV with header `lambda,re_N,im_N,re_Nprime,im_Nprime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,re_N,im_N,re_Nprime,im_Nprime")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.lambda, r.n.re, r.n.im, r.n_prime.re, r.n_prime.im
            )?;
        }
        Ok(())
    }
}

/// Piecewise-polynomial interpolant of the boundary values `N₊`, `N′₊` of a
/// smooth profile: Gauss–Legendre nodes on panels graded toward both ends of
/// the cut, barycentric Lagrange interpolation within each panel.
#[derive(Debug, Clone)]
pub struct CutInterpolant {
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
    /// Reference nodes on `[-1, 1]` and their barycentric weights.
    ref_nodes: Vec<f64>,
    bary: Vec<f64>,
    /// Per panel, per node: `(N₊, N′₊)`.
    values: Vec<Vec<(Complex64, Complex64)>>,
}

/// Nodes per panel of a [`CutInterpolant`].
pub const CUT_PANEL_NODES: usize = 16;

impl CutInterpolant {
    pub fn build(profile: &VelocityProfile) -> Result<Self> {
        Self::with_panels(profile, 48, 12)
    }

    pub fn with_panels(profile: &VelocityProfile, interior: usize, levels: usize) -> Result<Self> {
        if !matches!(profile, VelocityProfile::Smooth(_)) {
            return Err(Error::UnsupportedClass("piecewise-linear"));
        }
        let (lo, hi) = profile.range();
        let breaks = quadrature::graded_breaks(lo, hi, interior, levels);
        let rule = quadrature::Rule::gauss_legendre(CUT_PANEL_NODES);
        let ref_nodes = rule.nodes.clone();
        let bary: Vec<f64> = (0..ref_nodes.len())
            .map(|j| {
                let p: f64 = (0..ref_nodes.len())
                    .filter(|&m| m != j)
                    .map(|m| ref_nodes[j] - ref_nodes[m])
                    .product();
                1.0 / p
            })
            .collect();
        let values: Result<Vec<Vec<(Complex64, Complex64)>>> = breaks
            .windows(2)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|w| {
                rule.mapped(w[0], w[1])
                    .nodes
                    .iter()
                    .map(|&l| boundary_value(profile, l).map(|b| (b.n, b.n_prime)))
                    .collect()
            })
            .collect();
        Ok(CutInterpolant {
            lo,
            hi,
            breaks,
            ref_nodes,
            bary,
            values: values?,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Panel breakpoints, graded toward both ends.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Interpolated `(N₊(λ), N′₊(λ))`; endpoint values are exact.
    pub fn eval(&self, lambda: f64) -> (Complex64, Complex64) {
        let lambda = lambda.clamp(self.lo, self.hi);
        let i = self
            .breaks
            .partition_point(|&b| b <= lambda)
            .saturating_sub(1)
            .min(self.values.len() - 1);
        let (a, b) = (self.breaks[i], self.breaks[i + 1]);
        let x = (2.0 * lambda - a - b) / (b - a);
        let vals = &self.values[i];
        let (mut num_n, mut num_p, mut den) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0.0);
        for (j, &xj) in self.ref_nodes.iter().enumerate() {
            let d = x - xj;
            if d == 0.0 {
                return vals[j];
            }
            let w = self.bary[j] / d;
            num_n += w * vals[j].0;
            num_p += w * vals[j].1;
            den += w;
        }
        (num_n / den, num_p / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity() -> VelocityProfile {
        VelocityProfile::piecewise_linear(vec![-1.0, 1.0], vec![-1.0, 1.0]).unwrap()
    }

    fn expo() -> VelocityProfile {
        VelocityProfile::exp(1.0, 0.0)
    }

    /// Antiderivative of `μ′(z)/(z−λ)²` for `μ = ln z`.
    fn exp_f_exact(l: f64) -> f64 {
        let g = |z: f64| ((z.ln() - (l - z).abs().ln()) / (l * l)) + 1.0 / (l * (l - z));
        g(std::f64::consts::E) - g((-1.0f64).exp())
    }

    #[test]
    fn f_examples() {
        assert_abs_diff_eq!(eval_f(&identity(), c(2.0)).unwrap().re, 2.0 / 3.0, epsilon = 1e-15);
        let v = eval_f(&identity(), Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(v.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        let v = eval_f(&expo(), c(3.0)).unwrap();
        assert_abs_diff_eq!(v.re, exp_f_exact(3.0), epsilon = 1e-10);
        assert_abs_diff_eq!(v.re, 1.5271, epsilon = 1e-4);
        assert!(matches!(eval_f(&expo(), c(1.0)), Err(Error::OnCut(_))));
    }

    #[test]
    fn near_cut_cauchy_form_matches_exact() {
        for l in [2.75, 2.8, 0.35] {
            let v = eval_f(&expo(), c(l)).unwrap();
            assert!((v.re - exp_f_exact(l)).abs() < 1e-9 * exp_f_exact(l).abs(), "{l}");
        }
    }

    #[test]
    fn f_prime_examples() {
        let s2 = 2f64.sqrt();
        assert_abs_diff_eq!(eval_f_prime(&identity(), c(s2)).unwrap().re, -4.0 * s2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            eval_f_prime(&identity(), c(2.0)).unwrap().re,
            -8.0 / 9.0,
            epsilon = 1e-15
        );
        for p in [identity(), expo()] {
            assert!(eval_f_prime(&p, c(1e6)).unwrap().norm() <= 1e-11);
            assert!(eval_f_prime(&p, Complex64::new(0.0, 1e6)).unwrap().norm() <= 1e-11);
        }
    }

    #[test]
    fn n_examples() {
        for p in [identity(), expo()] {
            assert_abs_diff_eq!(eval_n(&p, c(1e6)).unwrap().re, 0.5, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(eval_n(&identity(), c(2.0)).unwrap().re, 0.75, epsilon = 1e-15);
        assert!(matches!(eval_n(&identity(), c(2f64.sqrt())), Err(Error::AtPole { .. })));
    }

    #[test]
    fn pv_examples() {
        let one = |_z: f64| c(1.0);
        assert_abs_diff_eq!(pv_cauchy(one, -1.0, 1.0, 0.0).unwrap().norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pv_cauchy(c, -1.0, 1.0, 0.0).unwrap().re, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pv_cauchy(one, 0.0, 2.0, 1.0).unwrap().norm(), 0.0, epsilon = 1e-14);
        assert!(matches!(pv_cauchy(one, 0.0, 2.0, 1e-14), Err(Error::Endpoint { .. })));
    }

    #[test]
    fn boundary_n_examples() {
        let p = expo();
        let e = std::f64::consts::E;
        assert_eq!(boundary_n(&p, e, Side::Plus).unwrap(), Complex64::new(0.0, 0.0));
        let b = boundary_n(&p, 1.0, Side::Plus).unwrap();
        assert!(b.im < 0.0);
        let off = eval_n(&p, Complex64::new(1.0, 1e-7)).unwrap();
        assert!((b - off).norm() < 1e-5, "{b} vs {off}");
        let m = boundary_n(&p, 1.0, Side::Minus).unwrap();
        assert_eq!(m, b.conj());
    }

    #[test]
    fn boundary_n_prime_matches_off_cut_limit() {
        let p = expo();
        let b = boundary_n_prime(&p, 1.5, Side::Plus).unwrap();
        let off = eval_n_prime(&p, Complex64::new(1.5, 1e-7)).unwrap();
        assert!((b - off).norm() < 1e-4, "{b} vs {off}");
    }

    /// `N′` at a cut endpoint is the one-sided limit of `dN/dλ` along the
    /// real axis from outside the cut, checked by a centred difference.
    #[test]
    fn endpoint_n_prime_is_the_continuous_limit() {
        let p = expo();
        let (lo, hi) = p.range();
        for (end, out) in [(hi, 1.0), (lo, -1.0)] {
            let bv = boundary_n_prime(&p, end, Side::Plus).unwrap().re;
            let l = end + out * 1e-6;
            let h = 1e-9;
            let fd = (eval_n(&p, c(l + h)).unwrap() - eval_n(&p, c(l - h)).unwrap()).re / (2.0 * h);
            assert!((bv - fd).abs() < 1e-4, "{end}: {bv} vs {fd}");
            let inner = end - out * 1e-4;
            let bi = boundary_n_prime(&p, inner, Side::Plus).unwrap();
            assert!((bi.re - bv).abs() < 1e-2, "{end}: continuity {bi} vs {bv}");
        }
        assert_abs_diff_eq!(boundary_n_prime(&p, hi, Side::Plus).unwrap().re, -hi, epsilon = 1e-14);
        assert_abs_diff_eq!(boundary_n_prime(&p, lo, Side::Plus).unwrap().re, lo, epsilon = 1e-14);
    }

    #[test]
    fn pl_node_values_are_limits() {
        let p = VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 3.0]).unwrap();
        for node in [0.0, 1.0, 3.0] {
            let b = boundary_value(&p, node).unwrap();
            assert_eq!(b.n.re, 0.0);
            let l = node + if node < 3.0 { 1e-7 } else { -1e-7 };
            let np = eval_n_prime(&p, c(l)).unwrap().re;
            assert!((b.n_prime.re - np).abs() < 1e-5, "{node}: {} vs {np}", b.n_prime.re);
        }
    }

    #[test]
    fn cut_interpolant_matches_direct_values() {
        for p in [expo(), VelocityProfile::quadratic(2.0)] {
            let cut = CutInterpolant::build(&p).unwrap();
            let (lo, hi) = p.range();
            for i in 1..200 {
                let u = i as f64 / 200.0;
                let l = lo + (hi - lo) * u * u * (3.0 - 2.0 * u);
                let b = boundary_value(&p, l).unwrap();
                let (n, np) = cut.eval(l);
                assert!((n - b.n).norm() < 1e-9, "{l}: {n} vs {}", b.n);
                assert!(
                    (np - b.n_prime).norm() < 1e-7 * b.n_prime.norm().max(1.0),
                    "{l}: {np} vs {}",
                    b.n_prime
                );
            }
        }
    }

    #[test]
    fn table_csv() {
        let t = DispersionTable::build(&expo(), 33).unwrap();
        assert_eq!(t.rows.len(), 35);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("lambda,re_N,im_N,re_Nprime,im_Nprime\n"));
        assert_eq!(s.lines().count(), 36);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn profiles() -> Vec<VelocityProfile> {
            vec![
                expo(),
                VelocityProfile::quadratic(2.0),
                VelocityProfile::exp(-0.8, 0.2),
                VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 3.0]).unwrap(),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn conjugate_symmetry(re in -2.0f64..5.0, im in 0.01f64..3.0, which in 0usize..4) {
                let p = &profiles()[which];
                let z = Complex64::new(re, im);
                match (eval_n(p, z), eval_n(p, z.conj())) {
                    (Ok(a), Ok(b)) => prop_assert!((a - b.conj()).norm() <= 1e-10 * a.norm().max(1.0)),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "asymmetric failure"),
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(50))]

            #[test]
            fn f_prime_matches_finite_differences(re in -2.0f64..5.0, im in 0.05f64..3.0, which in 0usize..4) {
                let p = &profiles()[which];
                let z = Complex64::new(re, im);
                let h = 1e-5;
                let fd = (eval_f(p, z + h).unwrap() - eval_f(p, z - h).unwrap()) / (2.0 * h);
                let an = eval_f_prime(p, z).unwrap();
                prop_assert!((fd - an).norm() <= 1e-6 * an.norm().max(1.0), "{fd} vs {an}");
            }

            #[test]
            fn im_n_identity(u in 0.001f64..0.999, which in 0usize..3) {
                let p = &profiles()[which];
                let (lo, hi) = p.range();
                let l = lo + u * (hi - lo);
                let b = boundary_value(p, l).unwrap();
                let mu2 = p.inverse_calculus(l).unwrap()[2];
                let sigma = p.inverse_calculus(l).unwrap()[1].signum();
                prop_assert!((b.n.im - PI * b.n.norm_sqr() * sigma * mu2).abs() < 1e-6);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(20))]

            #[test]
            fn plemelj_convergence(u in 0.02f64..0.98, which in 0usize..3) {
                let p = &profiles()[which];
                let (lo, hi) = p.range();
                let l = lo + u * (hi - lo);
                let b = boundary_n(p, l, Side::Plus).unwrap();
                let mut prev = f64::INFINITY;
                for k in 2..=7 {
                    let eps = 10f64.powi(-k);
                    let d = (eval_n(p, Complex64::new(l, eps)).unwrap() - b).norm();
                    prop_assert!(d < prev || d < 1e-9, "eps {eps}: {d} !< {prev}");
                    prev = d;
                }
            }

            #[test]
            fn pl_boundary_is_real_from_both_sides(u in 0.001f64..0.999) {
                let p = &profiles()[3];
                let l = 3.0 * u;
                if let Ok(b) = boundary_value(p, l) {
                    prop_assert_eq!(b.n_side(Side::Plus), b.n_side(Side::Minus));
                    prop_assert_eq!(b.n.im, 0.0);
                }
            }
        }
    }
}
