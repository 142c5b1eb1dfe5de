//! Poles of `N(λ)`, i.e. roots of `F(λ) = 2`, their residues `−1/F′`, and a
//! stability verdict (no non-real roots).
//!
//! Every root satisfies `dist(λ, [M₋, M₊]) ≤ 1` because `|F| ≤ 2/d²`, so the
//! search box `[M₋ − 1.1, M₊ + 1.1] × [−1.1, 1.1]` is exhaustive.

use num_complex::Complex64;
use serde::Serialize;
use std::cell::Cell;
use std::f64::consts::PI;

use crate::dispersion::{self, pl_node_coefficient};
use crate::error::{Error, Result};
use crate::profile::{PiecewiseLinear, VelocityProfile};
use crate::quadrature;

/// Newton/bisection tolerance on exterior poles.
pub const ROOT_TOL: f64 = 1e-12;
/// Roots with `|Im λ| ≤ REAL_TOL (1 + |λ|)` count as real.
pub const REAL_TOL: f64 = 1e-9;
/// Roots closer than this to a node `Mᵢ` are degenerate.
pub const NODE_TOL: f64 = 1e-9;
/// Largest admissible distance of a winding number from an integer.
pub const WINDING_GUARD: f64 = 0.25;
/// Default height above the real axis of the lower edge of the winding box.
pub const DEFAULT_CUT_OFFSET: f64 = 1e-6;

/// Search rectangle `[re_min, re_max] × [−im_max, im_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
}

impl Region {
    /// The localization box of a profile, scaled by `factor` about its centre.
    pub fn localization(profile: &VelocityProfile, factor: f64) -> Region {
        let (lo, hi) = profile.range();
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) + 1.1;
        Region {
            re_min: mid - factor * half,
            re_max: mid + factor * half,
            im_max: 1.1 * factor,
        }
    }

    fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im.abs() <= self.im_max
    }
}

/// A real pole of `N` with its residue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pole {
    pub lambda: f64,
    pub res: f64,
}

/// Stability verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Verdict {
    Stable {
        caveat: Option<String>,
    },
    /// `roots` lists located roots; the winding route only knows `count`.
    Unstable {
        count: usize,
        roots: Vec<(f64, f64)>,
    },
    Undetermined {
        diagnostics: String,
    },
}

impl Verdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, Verdict::Stable { .. })
    }
}

/// Poles, residues and verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub lambda_minus: Option<f64>,
    pub res_minus: Option<f64>,
    pub lambda_plus: Option<f64>,
    pub res_plus: Option<f64>,
    pub interior: Vec<Pole>,
    pub verdict: Verdict,
    pub region: Region,
    pub tol: f64,
    /// Flagged irregularities such as a missing exterior pole.
    pub anomalies: Vec<String>,
}

impl Spectrum {
    /// Exterior poles present on both sides.
    pub fn exterior(&self) -> Result<[Pole; 2]> {
        match (self.lambda_minus, self.res_minus, self.lambda_plus, self.res_plus) {
            (Some(lm), Some(rm), Some(lp), Some(rp)) => {
                Ok([Pole { lambda: lm, res: rm }, Pole { lambda: lp, res: rp }])
            }
            (None, ..) | (_, None, ..) => Err(Error::NoExteriorPole("lower")),
            _ => Err(Error::NoExteriorPole("upper")),
        }
    }

    pub fn write_json<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(std::io::Error::other)
    }
}

fn real_f(profile: &VelocityProfile, l: f64) -> Result<(f64, f64)> {
    let (f, fp) = (
        dispersion::eval_f(profile, Complex64::new(l, 0.0))?,
        dispersion::eval_f_prime(profile, Complex64::new(l, 0.0))?,
    );
    Ok((f.re, fp.re))
}

/// Root of `F − 2` on the real half-line beyond `end` in direction `dir`.
/// `F` decreases from `+∞` at the end of the cut to `0` at infinity.
fn exterior_root(profile: &VelocityProfile, end: f64, dir: f64, width: f64) -> Result<Option<Pole>> {
    let delta = 1e-8 * width;
    let mut near = end + dir * delta;
    if real_f(profile, near)?.0 < 2.0 {
        return Ok(None);
    }
    let mut span = width.max(1.0);
    let mut far = end + dir * span;
    while real_f(profile, far)?.0 >= 2.0 {
        near = far;
        span *= 2.0;
        far = end + dir * span;
    }
    // Bisection on the bracket, then Newton polish.
    let (mut a, mut b) = (near, far);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if real_f(profile, m)?.0 >= 2.0 {
            a = m;
        } else {
            b = m;
        }
        if (b - a).abs() < 1e-6 * (1.0 + m.abs()) {
            break;
        }
    }
    let mut l = 0.5 * (a + b);
    for _ in 0..50 {
        let (f, fp) = real_f(profile, l)?;
        let step = (f - 2.0) / fp;
        let next = l - step;
        l = if (next - a) * (next - b) <= 0.0 {
            next
        } else {
            0.5 * (a + b)
        };
        if step.abs() < ROOT_TOL * (1.0 + l.abs()) {
            break;
        }
    }
    let fp = real_f(profile, l)?.1;
    Ok(Some(Pole {
        lambda: l,
        res: -1.0 / fp,
    }))
}

/// `(λ₋, res₋, λ₊, res₊)` by bracketing on each real half-line.
pub fn find_exterior_poles(profile: &VelocityProfile) -> Result<(Option<Pole>, Option<Pole>)> {
    let (lo, hi) = profile.range();
    let width = hi - lo;
    Ok((
        exterior_root(profile, lo, -1.0, width)?,
        exterior_root(profile, hi, 1.0, width)?,
    ))
}

fn poly_mul_linear(p: &[f64], root: f64) -> Vec<f64> {
    // p(s) · (root − s), coefficients low to high.
    let mut out = vec![0.0; p.len() + 1];
    for (i, &c) in p.iter().enumerate() {
        out[i] += root * c;
        out[i + 1] -= c;
    }
    out
}

/// Cleared polynomial `(2 − F(λ)) ∏ᵢ (Mᵢ − λ)` in the scaled variable
/// `s = (λ − mid)/half`, divided by `halfⁿ⁻¹`; coefficients low to high.
fn cleared_polynomial(p: &PiecewiseLinear) -> (Vec<f64>, f64, f64) {
    let m = p.values();
    let (lo, hi) = (m[0].min(m[m.len() - 1]), m[0].max(m[m.len() - 1]));
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let ms: Vec<f64> = m.iter().map(|v| (v - mid) / half).collect();
    let mut q = vec![2.0 * half];
    for &r in &ms {
        q = poly_mul_linear(&q, r);
    }
    for j in 0..ms.len() {
        let a = pl_node_coefficient(p, j);
        let mut t = vec![a];
        for (i, &r) in ms.iter().enumerate() {
            if i != j {
                t = poly_mul_linear(&t, r);
            }
        }
        for (k, c) in t.iter().enumerate() {
            q[k] -= c;
        }
    }
    (q, mid, half)
}

/// All complex roots of the cleared polynomial, Newton-polished on `F − 2`.
pub fn pl_polynomial_roots(p: &PiecewiseLinear) -> Vec<Complex64> {
    let (mut q, mid, half) = cleared_polynomial(p);
    while q.len() > 1 && q[q.len() - 1].abs() < 1e-14 * q.iter().fold(0.0f64, |a, c| a.max(c.abs())) {
        q.pop();
    }
    let d = q.len() - 1;
    if d == 0 {
        return vec![];
    }
    let lead = q[d];
    let mut comp = nalgebra::DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        comp[(i, d - 1)] = -q[i] / lead;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|s| {
            let mut z = Complex64::new(mid + half * s.re, half * s.im);
            for _ in 0..30 {
                let mut f = Complex64::new(0.0, 0.0);
                let mut fp = Complex64::new(0.0, 0.0);
                for (i, &alpha) in p.slopes().iter().enumerate() {
                    let w = 1.0 / alpha;
                    let a = 1.0 / (p.values()[i] - z);
                    let b = 1.0 / (p.values()[i + 1] - z);
                    f += w * (a - b);
                    fp += w * (a * a - b * b);
                }
                let step = (f - 2.0) / fp;
                if !step.re.is_finite() || !step.im.is_finite() || step.norm() > 0.1 * half {
                    break;
                }
                z -= step;
                if step.norm() < 1e-15 * (1.0 + z.norm()) {
                    break;
                }
            }
            z
        })
        .collect()
}

/// Degree of the cleared polynomial (the number of nodes unless cancellations occur).
pub fn pl_polynomial_degree(p: &PiecewiseLinear) -> usize {
    let (q, ..) = cleared_polynomial(p);
    let scale = q.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    q.iter().rposition(|c| c.abs() >= 1e-14 * scale).unwrap_or(0)
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= REAL_TOL * (1.0 + z.norm())
}

fn pl_residue(p: &PiecewiseLinear, l: f64) -> f64 {
    let mut fp = 0.0;
    for (i, &alpha) in p.slopes().iter().enumerate() {
        let a = 1.0 / (p.values()[i] - l);
        let b = 1.0 / (p.values()[i + 1] - l);
        fp += (a * a - b * b) / alpha;
    }
    -1.0 / fp
}

/// Interior real poles `(λⱼ, rⱼ)` of a piecewise-linear `N`, ascending.
pub fn find_interior_poles(profile: &VelocityProfile) -> Result<Vec<Pole>> {
    let p = match profile {
        VelocityProfile::PiecewiseLinear(p) => p,
        VelocityProfile::Smooth(_) => return Err(Error::UnsupportedClass("smooth")),
    };
    let (lo, hi) = profile.range();
    let roots = pl_polynomial_roots(p);
    let mut out = Vec::new();
    for z in roots {
        if !is_real(z) {
            continue;
        }
        for &m in p.values() {
            if (z.re - m).abs() < NODE_TOL * (1.0 + m.abs()) {
                return Err(Error::DegenerateRoot { root: z.re, node: m });
            }
        }
        if z.re > lo && z.re < hi {
            out.push(Pole {
                lambda: z.re,
                res: pl_residue(p, z.re),
            });
        }
    }
    out.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok(out)
}

/// Winding number of `F − 2` around the rectangle `[x0, x1] × [y0, y1]`.
fn winding(profile: &VelocityProfile, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<f64> {
    let corners = [
        Complex64::new(x0, y0),
        Complex64::new(x1, y0),
        Complex64::new(x1, y1),
        Complex64::new(x0, y1),
    ];
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        let failure: Cell<Option<Error>> = Cell::new(None);
        let v = quadrature::adaptive(
            |s| {
                let z = a + (b - a) * s;
                match dispersion::eval_n_and_prime(profile, z) {
                    // F′/(F − 2) = −N′/N.
                    Ok((n, np)) => -np / n * (b - a),
                    Err(e) => {
                        failure.set(Some(e));
                        Complex64::new(f64::NAN, 0.0)
                    }
                }
            },
            0.0,
            1.0,
            1e-6,
            1e-8,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        total += v?;
    }
    Ok((total / Complex64::new(0.0, 2.0 * PI)).re)
}

/// Number of roots of `F = 2` in the upper and lower halves of `region`
/// excluding the strip `|Im λ| < offset`.
pub fn winding_counts(profile: &VelocityProfile, region: Region, offset: f64) -> Result<(f64, f64)> {
    let up = winding(profile, region.re_min, region.re_max, offset, region.im_max)?;
    let down = winding(profile, region.re_min, region.re_max, -region.im_max, -offset)?;
    Ok((up, down))
}

/// Certify absence of non-real roots of `F = 2` in `region`.
pub fn certify_stability(profile: &VelocityProfile, region: Region, tol: f64) -> Result<Verdict> {
    match profile {
        VelocityProfile::PiecewiseLinear(p) => {
            let roots = pl_polynomial_roots(p);
            let complex: Vec<(f64, f64)> = roots
                .iter()
                .filter(|z| !is_real(**z) && region.contains(**z))
                .map(|z| (z.re, z.im))
                .collect();
            if !complex.is_empty() {
                return Ok(Verdict::Unstable {
                    count: complex.len(),
                    roots: complex,
                });
            }
            let mut reals: Vec<f64> = roots.iter().filter(|z| is_real(**z)).map(|z| z.re).collect();
            reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if let Some(w) = reals
                .windows(2)
                .find(|w| (w[1] - w[0]).abs() < 1e-7 * (1.0 + w[0].abs()))
            {
                return Ok(Verdict::Undetermined {
                    diagnostics: format!("multiple root near {}", w[0]),
                });
            }
            Ok(Verdict::Stable { caveat: None })
        }
        VelocityProfile::Smooth(_) => {
            let (up, down) = match winding_counts(profile, region, tol) {
                Ok(v) => v,
                Err(e) => {
                    return Ok(Verdict::Undetermined {
                        diagnostics: format!("winding integral failed: {e}; move the box edges"),
                    })
                }
            };
            for w in [up, down] {
                if (w - w.round()).abs() > WINDING_GUARD {
                    return Ok(Verdict::Undetermined {
                        diagnostics: format!(
                            "winding numbers ({up:.3}, {down:.3}) not near integers; refine the quadrature"
                        ),
                    });
                }
            }
            let (nu, nd) = (up.round() as i64, down.round() as i64);
            if nu == 0 && nd == 0 {
                Ok(Verdict::Stable {
                    caveat: Some(format!("roots with |Im| < {tol:e} are not resolved")),
                })
            } else {
                Ok(Verdict::Unstable {
                    count: (nu.abs() + nd.abs()) as usize,
                    roots: vec![],
                })
            }
        }
    }
}

/// Full spectral analysis with the default region and tolerance.
pub fn analyze(profile: &VelocityProfile) -> Result<Spectrum> {
    let region = Region::localization(profile, 1.0);
    let (minus, plus) = find_exterior_poles(profile)?;
    let mut anomalies = Vec::new();
    if minus.is_none() {
        anomalies.push("no exterior pole below the cut".to_string());
    }
    if plus.is_none() {
        anomalies.push("no exterior pole above the cut".to_string());
    }
    let (interior, tol) = match profile {
        VelocityProfile::PiecewiseLinear(p) => {
            let interior = find_interior_poles(profile)?;
            // Cross-check the bracketed exterior poles against the polynomial.
            let (lo, hi) = profile.range();
            for z in pl_polynomial_roots(p).into_iter().filter(|z| is_real(*z)) {
                let ext = if z.re < lo {
                    minus
                } else if z.re > hi {
                    plus
                } else {
                    continue;
                };
                match ext {
                    Some(e) if (e.lambda - z.re).abs() <= 1e-9 * (1.0 + z.re.abs()) => {}
                    _ => anomalies.push(format!("polynomial root {} not matched by bracketing", z.re)),
                }
            }
            (interior, REAL_TOL)
        }
        VelocityProfile::Smooth(_) => (vec![], DEFAULT_CUT_OFFSET),
    };
    let verdict = certify_stability(profile, region, tol)?;
    Ok(Spectrum {
        lambda_minus: minus.map(|p| p.lambda),
        res_minus: minus.map(|p| p.res),
        lambda_plus: plus.map(|p| p.lambda),
        res_plus: plus.map(|p| p.res),
        interior,
        verdict,
        region,
        tol,
        anomalies,
    })
}
