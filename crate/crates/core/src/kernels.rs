//! Contour-deformed kernels
//!
//! ```text
//! I_ℓ(kt, y) = ∫_{ℝ + iλ_I} e^{−ikλt} N(λ) / (λ − M(y))^{ℓ+1} dλ,   ℓ = 0, 1,
//! ```
//!
//! for `kt ≥ 0`, split into the exterior-pole part and the cut part, the
//! regularized kernel `I = I₁/(2πk)` with every `1/k` paired with
//! `e^{−ikλt} − 1`, and the Fourier-space mean `â(k, t)`.
//!
//! At `kt = 0` the values are the limits `kt → 0⁺`: `I₀ = −πi`, `I₁ = 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::dispersion::{self, CutInterpolant};
use crate::error::{Error, Result};
use crate::profile::VelocityProfile;
use crate::quadrature::Rule;
use crate::spectrum::{self, Pole, Spectrum};

/// Largest `|kt|` resolved by the cut quadrature.
pub const DEFAULT_KT_BUDGET: f64 = 1e4;
/// Gauss–Legendre nodes per oscillation panel.
pub const PANEL_NODES: usize = 16;
/// An interior pole closer than this to `M(y)` collides with it.
pub const COLLISION_TOL: f64 = 1e-9;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `e^{−iθ}`.
fn expm(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), -theta.sin())
}

/// `(e^{−ikλt} − 1)/k`, equal to `−iλt` at `k = 0`.
pub fn phi(k: f64, lambda: f64, t: f64) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(0.0, -lambda * t);
    }
    let th = k * lambda * t;
    let s = (0.5 * th).sin();
    Complex64::new(-2.0 * s * s, -th.sin()) / k
}

/// All pieces of the kernels at one `(k, t, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEvaluation {
    pub k: f64,
    pub t: f64,
    pub y: f64,
    pub i0_p: Complex64,
    pub i0_c: Complex64,
    pub i1_p: Complex64,
    pub i1_c: Complex64,
    pub reg_p: Complex64,
    pub reg_c: Complex64,
}

impl KernelEvaluation {
    pub fn kt(&self) -> f64 {
        self.k * self.t
    }

    pub fn i0(&self) -> Complex64 {
        self.i0_p + self.i0_c
    }

    pub fn i1(&self) -> Complex64 {
        self.i1_p + self.i1_c
    }

    /// Regularized kernel `I = I_p + I_c`.
    pub fn reg(&self) -> Complex64 {
        self.reg_p + self.reg_c
    }
}

/// Kernel evaluator bound to one certified-stable profile.
#[derive(Debug, Clone)]
pub struct Kernels {
    profile: VelocityProfile,
    spectrum: Spectrum,
    exterior: [Pole; 2],
    cut: Option<CutInterpolant>,
    pub kt_budget: f64,
}

impl Kernels {
    pub fn new(profile: &VelocityProfile) -> Result<Self> {
        let spectrum = spectrum::analyze(profile)?;
        Self::from_spectrum(profile, spectrum)
    }

    pub fn from_spectrum(profile: &VelocityProfile, spectrum: Spectrum) -> Result<Self> {
        if !spectrum.verdict.is_stable() {
            return Err(Error::NotStable(format!("{:?}", spectrum.verdict)));
        }
        let exterior = spectrum
            .exterior()
            .map_err(|e| Error::SpectrumIncomplete(e.to_string()))?;
        let cut = match profile {
            VelocityProfile::Smooth(_) => Some(CutInterpolant::build(profile)?),
            VelocityProfile::PiecewiseLinear(_) => None,
        };
        Ok(Kernels {
            profile: profile.clone(),
            spectrum,
            exterior,
            cut,
            kt_budget: DEFAULT_KT_BUDGET,
        })
    }

    pub fn profile(&self) -> &VelocityProfile {
        &self.profile
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn cut(&self) -> Option<&CutInterpolant> {
        self.cut.as_ref()
    }

    /// `[(λ₋, res₋), (λ₊, res₊)]`.
    pub fn exterior(&self) -> &[Pole; 2] {
        &self.exterior
    }

    fn check_budget(&self, kt: f64) -> Result<()> {
        if kt.abs() > self.kt_budget {
            return Err(Error::Resolution {
                kt: kt.abs(),
                budget: self.kt_budget,
            });
        }
        Ok(())
    }

    /// `I_{ℓ,p} = −2πi Σ± e^{−ikλ±t} res± / (λ± − M(y))^{ℓ+1}`.
    pub fn pole_kernel(&self, l: u32, kt: f64, y: f64) -> Complex64 {
        let c = self.profile.m(y);
        self.exterior
            .iter()
            .map(|p| -2.0 * PI * I * expm(kt * p.lambda) * p.res / (p.lambda - c).powi(l as i32 + 1))
            .sum()
    }

    /// Cut part `I_{ℓ,c}`.
    pub fn cut_kernel(&self, l: u32, kt: f64, y: f64) -> Result<Complex64> {
        let c = self.profile.m(y);
        let i0 = self.cut0(kt, c, y)?;
        if l == 0 {
            return Ok(i0);
        }
        self.cut1(kt, c, y, i0)
    }

    /// `I_ℓ = I_{ℓ,p} + I_{ℓ,c}`.
    pub fn kernel(&self, l: u32, kt: f64, y: f64) -> Result<Complex64> {
        Ok(self.pole_kernel(l, kt, y) + self.cut_kernel(l, kt, y)?)
    }

    fn cut0(&self, kt: f64, c: f64, y: f64) -> Result<Complex64> {
        self.check_budget(kt)?;
        let ec = expm(kt * c);
        match &self.cut {
            Some(cut) => {
                let (nc, _) = cut.eval(c);
                let j = self.osc_pv(cut, |v| Complex64::new(0.0, 2.0 * v.0.im), kt, c);
                Ok(j - 2.0 * PI * I * nc.re * ec)
            }
            None => {
                let (poles, n, _) = self.pl_parts(c, y)?;
                let s: Complex64 = poles.iter().map(|p| expm(kt * p.lambda) * p.res / (p.lambda - c)).sum();
                Ok(-2.0 * PI * I * (s + ec * n))
            }
        }
    }

    fn cut1(&self, kt: f64, c: f64, y: f64, i0c: Complex64) -> Result<Complex64> {
        let ec = expm(kt * c);
        match &self.cut {
            Some(cut) => {
                let (_, npc) = cut.eval(c);
                let j = self.osc_pv(cut, |v| Complex64::new(0.0, 2.0 * v.1.im), kt, c);
                Ok(-I * kt * i0c + j - 2.0 * PI * I * npc.re * ec)
            }
            None => {
                let (poles, n, np) = self.pl_parts(c, y)?;
                let s: Complex64 = poles
                    .iter()
                    .map(|p| expm(kt * p.lambda) * p.res / (p.lambda - c).powi(2))
                    .sum();
                Ok(-2.0 * PI * I * (s - I * kt * ec * n + ec * np))
            }
        }
    }

    /// Interior poles, `N(c)` and `N′(c)` for a piecewise-linear profile.
    pub(crate) fn pl_parts(&self, c: f64, y: f64) -> Result<(&[Pole], f64, f64)> {
        for (j, p) in self.spectrum.interior.iter().enumerate() {
            if (p.lambda - c).abs() < COLLISION_TOL {
                return Err(Error::PoleCollision {
                    index: j,
                    lambda: p.lambda,
                    y,
                });
            }
        }
        let b = dispersion::boundary_value(&self.profile, c)?;
        Ok((&self.spectrum.interior, b.n.re, b.n_prime.re))
    }

    /// Composite rule on `[a, b]` refining `breaks` so every panel is at most
    /// `π/(4|ω|)` long, with an extra breakpoint at `c`.
    fn osc_rule(breaks: &[f64], c: f64, omega: f64) -> Rule {
        let mut br: Vec<f64> = breaks.to_vec();
        if c > br[0] && c < br[br.len() - 1] && !br.contains(&c) {
            let i = br.partition_point(|&b| b < c);
            br.insert(i, c);
        }
        let hmax = if omega == 0.0 {
            f64::INFINITY
        } else {
            PI / (4.0 * omega.abs())
        };
        let mut fine = vec![br[0]];
        for w in br.windows(2) {
            let n = ((w[1] - w[0]) / hmax).ceil().max(1.0) as usize;
            for i in 1..=n {
                fine.push(w[0] + (w[1] - w[0]) * i as f64 / n as f64);
            }
        }
        Rule::composite(&Rule::gauss_legendre(PANEL_NODES), &fine)
    }

    /// `P.V. ∫ e^{−iktλ} g(λ)/(λ − c) dλ` over the cut: the density value at
    /// `c` is subtracted and its integral taken in closed form.
    fn osc_pv<G: Fn((Complex64, Complex64)) -> Complex64>(
        &self,
        cut: &CutInterpolant,
        g: G,
        kt: f64,
        c: f64,
    ) -> Complex64 {
        let (lo, hi) = cut.range();
        let gc = g(cut.eval(c));
        let rule = Self::osc_rule(cut.breaks(), c, kt);
        let mut s = Complex64::new(0.0, 0.0);
        for (&l, &w) in rule.nodes.iter().zip(&rule.weights) {
            s += w * expm(kt * l) * (g(cut.eval(l)) - gc) / (l - c);
        }
        if Self::strictly_inside(c, lo, hi) {
            s += gc * expm(kt * c) * crate::quadrature::pv_exp_over_nu(kt, lo - c, hi - c);
        }
        s
    }

    fn strictly_inside(c: f64, lo: f64, hi: f64) -> bool {
        let tol = 1e-12 * (hi - lo).max(1.0);
        c - lo > tol && hi - c > tol
    }

    /// `P.V. ∫ φ(λ) g(λ)/(λ − c) dλ` with `φ = (e^{−ikλt} − 1)/k`.
    fn reg_pv<G: Fn((Complex64, Complex64)) -> Complex64>(
        &self,
        cut: &CutInterpolant,
        g: G,
        k: f64,
        t: f64,
        c: f64,
    ) -> Complex64 {
        let (lo, hi) = cut.range();
        let kt = k * t;
        let gc = g(cut.eval(c));
        let rule = Self::osc_rule(cut.breaks(), c, kt);
        let mut s = Complex64::new(0.0, 0.0);
        for (&l, &w) in rule.nodes.iter().zip(&rule.weights) {
            s += w * phi(k, l, t) * (g(cut.eval(l)) - gc) / (l - c);
        }
        if Self::strictly_inside(c, lo, hi) && gc != Complex64::new(0.0, 0.0) {
            // φ(λ) = e^{−ikct} ψ(λ − c) + φ(c) with ψ(ν) = (e^{−iktν} − 1)/k regular at 0.
            let (a, b) = (lo - c, hi - c);
            let psi = Self::osc_rule(&[a, 0.0, b], 0.0, kt);
            let mut q = Complex64::new(0.0, 0.0);
            for (&v, &w) in psi.nodes.iter().zip(&psi.weights) {
                q += w * phi(k, v, t) / v;
            }
            s += gc * (expm(kt * c) * q + phi(k, c, t) * (b / -a).ln());
        }
        s
    }

    /// All kernel pieces at `(k, t, y)` for `k ≥ 0`, `t ≥ 0`.
    pub fn evaluate(&self, k: f64, t: f64, y: f64) -> Result<KernelEvaluation> {
        if k < 0.0 || t < 0.0 {
            return Err(Error::Domain {
                what: "k t",
                value: k * t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let kt = k * t;
        let c = self.profile.m(y);
        let i0_p = self.pole_kernel(0, kt, y);
        let i1_p = self.pole_kernel(1, kt, y);
        let i0_c = self.cut0(kt, c, y)?;
        let i1_c = self.cut1(kt, c, y, i0_c)?;
        let reg_p: Complex64 = self
            .exterior
            .iter()
            .map(|p| -I * p.res / (p.lambda - c).powi(2) * phi(k, p.lambda, t))
            .sum();
        let reg_c = match &self.cut {
            Some(cut) => {
                let (_, npc) = cut.eval(c);
                let q = self.reg_pv(cut, |v| Complex64::new(0.0, 2.0 * v.1.im), k, t, c);
                -I * t / (2.0 * PI) * i0_c + (q - 2.0 * PI * I * npc.re * phi(k, c, t)) / (2.0 * PI)
            }
            None => {
                let (poles, n, np) = self.pl_parts(c, y)?;
                let s: Complex64 = poles
                    .iter()
                    .map(|p| I * phi(k, p.lambda, t) * p.res / (p.lambda - c).powi(2))
                    .sum();
                -s - t * expm(kt * c) * n - I * phi(k, c, t) * np
            }
        };
        Ok(KernelEvaluation {
            k,
            t,
            y,
            i0_p,
            i0_c,
            i1_p,
            i1_c,
            reg_p,
            reg_c,
        })
    }

    /// Regularized kernel `I(k, t, y)`.
    pub fn regularized_kernel(&self, k: f64, t: f64, y: f64) -> Result<Complex64> {
        self.evaluate(k, t, y).map(|e| e.reg())
    }

    /// Kernel pieces on every node of a transverse rule.
    pub fn evaluate_on(&self, rule: &Rule, k: f64, t: f64) -> Result<Vec<KernelEvaluation>> {
        rule.nodes.par_iter().map(|&y| self.evaluate(k, t, y)).collect()
    }

    /// `â(k, t) = â₀ + â₁` with
    /// `â₀ = (−i/π) a((M I₁ − I₀) û⁰)` and `â₁ = −2 a(I û¹)`.
    /// Negative `k` uses `â(−k; u) = conj â(k; ū)`.
    pub fn assemble_mean_hat(
        &self,
        rule: &Rule,
        u0: &[Complex64],
        u1: &[Complex64],
        k: f64,
        t: f64,
    ) -> Result<Complex64> {
        if u0.len() != rule.len() || u1.len() != rule.len() {
            return Err(Error::Contract(format!(
                "data sampled on {} / {} nodes, kernel rule has {}",
                u0.len(),
                u1.len(),
                rule.len()
            )));
        }
        if k < 0.0 {
            let c0: Vec<Complex64> = u0.iter().map(|z| z.conj()).collect();
            let c1: Vec<Complex64> = u1.iter().map(|z| z.conj()).collect();
            return self.assemble_mean_hat(rule, &c0, &c1, -k, t).map(|z| z.conj());
        }
        let ev = self.evaluate_on(rule, k, t)?;
        Ok(self.assemble_from(rule, &ev, u0, u1))
    }

    /// `â` from precomputed kernel pieces on the nodes of `rule`.
    pub fn assemble_from(&self, rule: &Rule, ev: &[KernelEvaluation], u0: &[Complex64], u1: &[Complex64]) -> Complex64 {
        let mut a0 = Complex64::new(0.0, 0.0);
        let mut a1 = Complex64::new(0.0, 0.0);
        for (j, e) in ev.iter().enumerate() {
            let m = self.profile.m(rule.nodes[j]);
            let w = 0.5 * rule.weights[j];
            a0 += w * (m * e.i1() - e.i0()) * u0[j];
            a1 += w * e.reg() * u1[j];
        }
        -I / PI * a0 - 2.0 * a1
    }
}

/// Height of the integration line keeping the amplification `e^{kt λ_I}`
/// of the integrand below `e⁴`.
pub fn line_height(kt: f64) -> f64 {
    (4.0 / kt.abs()).min(1.0)
}

/// Direct quadrature of the defining line integral along `Im λ = λ_I`, for
/// `kt > 0`. The asymptote `½/(λ − M(y))^{ℓ+1}` is integrated exactly; the
/// `O(λ⁻³)` remainder numerically on `|Re λ − mid| ≤ R`.
pub fn line_kernel(profile: &VelocityProfile, l: u32, kt: f64, y: f64, lambda_i: f64) -> Result<Complex64> {
    if kt <= 0.0 || lambda_i <= 0.0 {
        return Err(Error::Domain {
            what: "kt",
            value: kt,
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        });
    }
    const R: f64 = 2000.0;
    let c = profile.m(y);
    let (lo, hi) = profile.range();
    let mid = 0.5 * (lo + hi);
    let near = 0.5 * (hi - lo) + 5.0;
    let wave = 2.0 * PI / kt;
    let mut breaks = vec![0.0];
    let mut x = 0.0;
    while x < R {
        let h = if x < near { 0.125 } else { wave.min(0.25 * x) };
        x = (x + h).min(R);
        breaks.push(x);
    }
    let left: Vec<f64> = breaks.iter().rev().map(|b| mid - b).collect();
    let mut all = left;
    all.extend(breaks.iter().skip(1).map(|b| mid + b));
    let rule = Rule::composite(&Rule::gauss_legendre(PANEL_NODES), &all);
    let p = (l + 1) as i32;
    let vals: Result<Vec<Complex64>> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&x, &w)| {
            let lam = Complex64::new(x, lambda_i);
            let n = dispersion::eval_n(profile, lam)?;
            let e = (-I * kt * lam).exp();
            Ok(w * e * (n - 0.5) / (lam - c).powi(p))
        })
        .collect();
    let s: Complex64 = vals?.iter().sum();
    let ec = expm(kt * c);
    let exact = if l == 0 { -PI * I * ec } else { -PI * kt * ec };
    Ok(s + exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity() -> VelocityProfile {
        VelocityProfile::piecewise_linear(vec![-1.0, 1.0], vec![-1.0, 1.0]).unwrap()
    }

    fn pl3() -> VelocityProfile {
        VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 3.0]).unwrap()
    }

    #[test]
    fn phi_limits() {
        assert_eq!(phi(0.0, 2.0, 3.0), Complex64::new(0.0, -6.0));
        let small = phi(1e-12, 2.0, 3.0);
        assert!((small - Complex64::new(0.0, -6.0)).norm() < 1e-9);
        let k = 0.7;
        let direct = ((-I * k * 2.0 * 3.0).exp() - 1.0) / k;
        assert!((phi(k, 2.0, 3.0) - direct).norm() < 1e-15);
    }

    #[test]
    fn pole_kernel_identity_example() {
        let k = Kernels::new(&identity()).unwrap();
        let v = k.pole_kernel(0, 0.0, 0.0);
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.im, -PI / 2.0, epsilon = 1e-12);
        for kt in [0.0, 1.0, 10.0, 1e3] {
            assert!(k.pole_kernel(0, kt, 0.3).norm() <= 2.0 * PI * 0.25 / (2f64.sqrt() - 1.0));
        }
    }

    #[test]
    fn pl_cut_kernel_examples() {
        let k = Kernels::new(&identity()).unwrap();
        let v = k.cut_kernel(0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(v.im, -2.0 * PI * 0.25, epsilon = 1e-14);
        // Empty interior sum: I₀,c = −2πi e^{−ikct} N(c).
        let (kt, y) = (3.7, 0.4);
        let n = dispersion::eval_n(&identity(), Complex64::new(y, 0.0)).unwrap();
        let want = -2.0 * PI * I * expm(kt * y) * n;
        assert!((k.cut_kernel(0, kt, y).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn zero_phase_limits() {
        for p in [VelocityProfile::exp(1.0, 0.0), pl3(), identity()] {
            let k = Kernels::new(&p).unwrap();
            for y in [-1.0, -0.6, 0.1, 0.77, 1.0] {
                let i0 = k.kernel(0, 0.0, y).unwrap();
                let i1 = k.kernel(1, 0.0, y).unwrap();
                assert!((i0 - Complex64::new(0.0, -PI)).norm() < 1e-8, "{y}: I0 = {i0}");
                assert!(i1.norm() < 1e-7, "{y}: I1 = {i1}");
            }
        }
    }

    #[test]
    fn contour_deformation_identity() {
        let pairs = [
            (0.1, -0.9),
            (0.3, -0.5),
            (0.5, 0.0),
            (0.8, 0.35),
            (1.0, 0.9),
            (1.3, -0.2),
            (1.6, 0.6),
            (2.0, 0.1),
            (0.7, -1.0),
            (1.9, 1.0),
        ];
        for p in [VelocityProfile::exp(1.0, 0.0), pl3()] {
            let k = Kernels::new(&p).unwrap();
            for &(kt, y) in &pairs {
                for l in [0, 1] {
                    let direct = line_kernel(&p, l, kt, y, 0.5).unwrap();
                    let split = k.kernel(l, kt, y).unwrap();
                    assert!(
                        (direct - split).norm() < 1e-6,
                        "l={l} kt={kt} y={y}: {direct} vs {split}"
                    );
                }
            }
        }
    }

    #[test]
    fn regularized_kernel_is_i1_over_2pik() {
        for p in [VelocityProfile::exp(1.0, 0.0), pl3()] {
            let ks = Kernels::new(&p).unwrap();
            for &(k, t, y) in &[(1.0, 0.5, 0.2), (2.0, 1.5, -0.7), (0.5, 4.0, 0.95)] {
                let e = ks.evaluate(k, t, y).unwrap();
                let want = e.i1() / (2.0 * PI * k);
                assert!((e.reg() - want).norm() < 1e-8, "{k} {t} {y}: {} vs {want}", e.reg());
            }
            for y in [-0.5, 0.5] {
                assert_eq!(ks.regularized_kernel(0.7, 0.0, y).unwrap().norm(), 0.0);
                let r0 = ks.regularized_kernel(0.0, 2.0, y).unwrap();
                let r1 = ks.regularized_kernel(1e-7, 2.0, y).unwrap();
                assert!(r0.re.is_finite() && (r0 - r1).norm() < 1e-6, "{r0} vs {r1}");
            }
        }
    }

    #[test]
    fn pl_i1_small_kt_series() {
        let p = pl3();
        let ks = Kernels::new(&p).unwrap();
        let y = -0.4;
        let c = p.m(y);
        let b = dispersion::boundary_value(&p, c).unwrap();
        // e^{−ikct}[Σ rⱼ e^{−ikt(λⱼ−c)}/(λⱼ−c)² − iktN + N′] with the exponential
        // expanded to third order in kt(λⱼ − c).
        let series = |kt: f64| {
            let mut s = Complex64::new(0.0, 0.0);
            for q in &ks.spectrum().interior {
                let z = -I * kt * (q.lambda - c);
                let e = 1.0 + z + z * z / 2.0 + z * z * z / 6.0;
                s += q.res * e / (q.lambda - c).powi(2);
            }
            -2.0 * PI * I * expm(kt * c) * (s - I * kt * b.n.re + b.n_prime.re)
        };
        for kt in [1e-3, 1e-2, 5e-2] {
            let d = (ks.cut_kernel(1, kt, y).unwrap() - series(kt)).norm();
            assert!(d < 50.0 * kt.powi(4), "{kt}: {d}");
        }
    }

    #[test]
    fn assembly_at_time_zero_is_the_mean() {
        for p in [VelocityProfile::exp(1.0, 0.0), pl3()] {
            let ks = Kernels::new(&p).unwrap();
            let rule = p.transverse_rule(16);
            let u0: Vec<Complex64> = rule
                .nodes
                .iter()
                .map(|y| Complex64::new(1.0 + y * y, 0.3 * y))
                .collect();
            let u1: Vec<Complex64> = rule.nodes.iter().map(|y| Complex64::new(y.cos(), 0.0)).collect();
            let mean: Complex64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .zip(&u0)
                .map(|((_, w), u)| 0.5 * w * u)
                .sum();
            for k in [0.0, 0.8, -1.3] {
                let a = ks.assemble_mean_hat(&rule, &u0, &u1, k, 0.0).unwrap();
                assert!((a - mean).norm() < 1e-8, "{k}: {a} vs {mean}");
            }
            let zero = vec![Complex64::new(0.0, 0.0); rule.len()];
            let a = ks.assemble_mean_hat(&rule, &zero, &u1, 0.9, 1.2).unwrap();
            let e = ks.evaluate_on(&rule, 0.9, 1.2).unwrap();
            let a1: Complex64 = e
                .iter()
                .zip(&rule.weights)
                .zip(&u1)
                .map(|((e, w), u)| -w * e.reg() * u)
                .sum();
            assert!((a - a1).norm() < 1e-12);
            assert!(matches!(
                ks.assemble_mean_hat(&rule, &u0[1..], &u1, 1.0, 1.0),
                Err(Error::Contract(_))
            ));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let ks = Kernels::new(&VelocityProfile::exp(1.0, 0.0)).unwrap();
        assert!(matches!(ks.cut_kernel(0, 2e4, 0.0), Err(Error::Resolution { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn assembly_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, k in -3.0f64..3.0, t in 0.0f64..3.0) {
                let p = VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 3.0]).unwrap();
                let ks = Kernels::new(&p).unwrap();
                let rule = p.transverse_rule(8);
                let f: Vec<Complex64> = rule.nodes.iter().map(|y| Complex64::new(y.exp(), *y)).collect();
                let g: Vec<Complex64> = rule.nodes.iter().map(|y| Complex64::new(1.0 - y, 0.5)).collect();
                let h: Vec<Complex64> = f.iter().zip(&g).map(|(x, z)| a * x + b * z).collect();
                let lhs = ks.assemble_mean_hat(&rule, &h, &g, k, t).unwrap();
                let rhs = a * ks.assemble_mean_hat(&rule, &f, &g, k, t).unwrap()
                    + b * ks.assemble_mean_hat(&rule, &g, &g, k, t).unwrap();
                let zero = vec![Complex64::new(0.0, 0.0); rule.len()];
                let rhs = rhs - (a + b - 1.0) * ks.assemble_mean_hat(&rule, &zero, &g, k, t).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
            }
        }
    }
}
