//! Quadrature building blocks: Gauss–Legendre rules, composite and graded
//! panel rules, adaptive Gauss–Kronrod integration of complex integrands,
//! principal values by singularity subtraction, and the sine/cosine
//! integrals used by oscillatory principal values.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Nodes and weights of a quadrature rule on some interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gauss–Legendre rule with `n` points on `[-1, 1]`.
    pub fn gauss_legendre(n: usize) -> Rule {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Rule { nodes, weights }
    }

    /// Affine image of a `[-1, 1]` rule on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let h = 0.5 * (b - a);
        let m = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|x| m + h * x).collect(),
            weights: self.weights.iter().map(|w| h * w).collect(),
        }
    }

    /// Composite rule: `base` mapped onto every panel `[breaks[i], breaks[i+1]]`.
    pub fn composite(base: &Rule, breaks: &[f64]) -> Rule {
        let mut nodes = Vec::with_capacity(base.len() * breaks.len());
        let mut weights = Vec::with_capacity(base.len() * breaks.len());
        for w in breaks.windows(2) {
            let r = base.mapped(w[0], w[1]);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
        Rule { nodes, weights }
    }

    /// Composite Gauss–Legendre rule on `[a, b]` whose panels are uniform in
    /// the interior and geometrically graded toward both endpoints.
    pub fn graded(a: f64, b: f64, interior_panels: usize, levels: usize, n: usize) -> Rule {
        Rule::composite(&Rule::gauss_legendre(n), &graded_breaks(a, b, interior_panels, levels))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Breakpoints on `[a, b]`: `interior_panels` uniform panels on the middle
/// part, and `levels` panels shrinking by a factor 4 toward each endpoint.
pub fn graded_breaks(a: f64, b: f64, interior_panels: usize, levels: usize) -> Vec<f64> {
    let len = b - a;
    let edge = if levels == 0 { 0.0 } else { 0.1 * len };
    let mut left = Vec::new();
    let mut s = edge;
    for _ in 0..levels {
        left.push(s);
        s *= 0.25;
    }
    left.push(0.0);
    left.reverse();
    let mut breaks: Vec<f64> = left.iter().map(|d| a + d).collect();
    breaks.pop();
    let p = interior_panels.max(1);
    for i in 0..=p {
        breaks.push(a + edge + (len - 2.0 * edge) * i as f64 / p as f64);
    }
    for d in left.iter().rev().skip(1) {
        breaks.push(b - d);
    }
    breaks
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).norm())
}

/// Adaptive Gauss–Kronrod (7/15) integration of a complex integrand.
///
/// Subdivides until the summed error estimate meets
/// `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Complex64> {
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    const MAX_INTERVALS: usize = 20_000;
    let (v, e) = gk15(&f, a, b);
    // (error, a, b, value)
    let mut parts: Vec<(f64, f64, f64, Complex64)> = vec![(e, a, b, v)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.norm()) {
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "adaptive quadrature on [{a}, {b}] stalled at error {err:e}"
            )));
        }
        // Bisect the interval carrying the largest error.
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.0 > acc.1 { (i, p.0) } else { acc });
        let (pe, pa, pb, pv) = parts.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            // Interval exhausted in floating point; keep its estimate.
            parts.push((0.0, pa, pb, pv));
            err -= pe;
            continue;
        }
        let (v1, e1) = gk15(&f, pa, m);
        let (v2, e2) = gk15(&f, m, pb);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        parts.push((e1, pa, m, v1));
        parts.push((e2, m, pb, v2));
        if !total.re.is_finite() || !total.im.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
    }
    // Resum for a clean, order-independent total.
    parts.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
    Ok(parts.iter().map(|p| p.3).sum())
}

/// Real-valued convenience wrapper around [`adaptive`].
pub fn adaptive_real<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    adaptive(|x| Complex64::new(f(x), 0.0), a, b, abs_tol, rel_tol).map(|z| z.re)
}

/// `P.V. ∫_a^b g(z) / (z − c) dz` by singularity subtraction:
/// the regular remainder `(g(z) − g(c)) / (z − c)` is integrated adaptively on
/// both sides of `c` and the subtracted part contributes `g(c) ln((b−c)/(c−a))`.
pub fn pv_subtracted<F: Fn(f64) -> Complex64>(g: F, a: f64, b: f64, c: f64, tol: f64) -> Result<Complex64> {
    let scale = (b - a).abs().max(1.0);
    let dist = (c - a).min(b - c);
    if dist < 1e-12 * scale {
        return Err(Error::Endpoint { dist });
    }
    let gc = g(c);
    let rem = |z: f64| {
        let d = z - c;
        if d == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            (g(z) - gc) / d
        }
    };
    let left = adaptive(rem, a, c, tol, 1e-13)?;
    let right = adaptive(rem, c, b, tol, 1e-13)?;
    Ok(left + right + gc * ((b - c) / (c - a)).ln())
}

/// Sine and cosine integrals `(Si(x), Ci(x))` for `x > 0`.
///
/// Power series for small arguments, the continued fraction of the complex
/// exponential integral otherwise.
pub fn sici(x: f64) -> (f64, f64) {
    const EULER: f64 = 0.577_215_664_901_532_9;
    const EPS: f64 = 1e-16;
    let t = x.abs();
    if t == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let (si, ci) = if t > 2.0 {
        // Modified Lentz on E1(i t).
        let mut b = Complex64::new(1.0, t);
        let mut c = Complex64::new(1.0 / f64::MIN_POSITIVE.sqrt(), 0.0);
        let mut d = Complex64::new(1.0, 0.0) / b;
        let mut h = d;
        for i in 1..1000 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = Complex64::new(1.0, 0.0) / (d * a + b);
            c = b + Complex64::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < EPS {
                break;
            }
        }
        h *= Complex64::new(t.cos(), -t.sin());
        (0.5 * PI + h.im, -h.re)
    } else {
        let mut sum_s = 0.0;
        let mut sum_c = 0.0;
        let mut fact = 1.0;
        for k in 1..200usize {
            fact *= t / k as f64;
            let term = fact / k as f64;
            if k % 2 == 1 {
                let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                sum_s += sign * term;
            } else {
                let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                sum_c += sign * term;
            }
            if term < EPS * (sum_s.abs() + sum_c.abs()) {
                break;
            }
        }
        (sum_s, EULER + t.ln() + sum_c)
    };
    if x < 0.0 {
        (-si, ci)
    } else {
        (si, ci)
    }
}

/// `P.V. ∫_a^b e^{−iων} / ν dν` for `a < 0 < b`, in closed form through Si and Ci.
pub fn pv_exp_over_nu(omega: f64, a: f64, b: f64) -> Complex64 {
    assert!(a < 0.0 && b > 0.0);
    let ln_part = (b / -a).ln();
    if omega == 0.0 {
        return Complex64::new(ln_part, 0.0);
    }
    let w = omega.abs();
    let (si_b, ci_b) = sici(w * b);
    let (si_a, ci_a) = sici(w * -a);
    // cosine part: Ci(wb) − Ci(w|a|); sine part: Si(wb) + Si(w|a|)
    let re = ci_b - ci_a;
    let im = -(si_b + si_a) * omega.signum();
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64] {
            let r = Rule::gauss_legendre(n);
            let sw: f64 = r.weights.iter().sum();
            assert!((sw - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 2.0 / deg as f64 } else { 0.0 };
            let got = r.integrate(|x| x.powi(deg as i32 - 1));
            assert!((got - exact).abs() < 1e-12, "n={n} got {got}");
        }
    }

    #[test]
    fn graded_rule_integrates_endpoint_singularity() {
        let r = Rule::graded(0.0, 1.0, 4, 12, 16);
        let got = r.integrate(|x| x.sqrt().ln());
        assert!((got + 0.5).abs() < 1e-8, "{got}");
    }

    #[test]
    fn adaptive_handles_near_singular_peak() {
        // ∫_{-1}^{1} dx / (x^2 + eps^2) = 2 atan(1/eps)/eps
        let eps: f64 = 1e-6;
        let got = adaptive_real(|x| 1.0 / (x * x + eps * eps), -1.0, 1.0, 0.0, 1e-12).unwrap();
        let exact = 2.0 * (1.0 / eps).atan() / eps;
        assert!(((got - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn sici_reference_values() {
        // Abramowitz & Stegun table values.
        #[allow(clippy::excessive_precision)]
        let cases = [
            (0.5, 0.493_107_418_043_066_7, -0.177_784_078_806_612_4),
            (1.0, 0.946_083_070_367_183_0, 0.337_403_922_900_968_1),
            (2.0, 1.605_412_976_802_694_8, 0.422_980_828_774_864_9),
            (5.0, 1.549_931_244_944_674_1, -0.190_029_749_656_643_9),
            (10.0, 1.658_347_594_218_874_0, -0.045_456_433_004_455_4),
        ];
        for (x, si, ci) in cases {
            let (s, c) = sici(x);
            assert!((s - si).abs() < 1e-13, "Si({x}) = {s}");
            assert!((c - ci).abs() < 1e-13, "Ci({x}) = {c}");
        }
    }

    #[test]
    fn pv_exp_matches_subtraction_quadrature() {
        for omega in [0.0, 0.3, 2.0, -7.5, 40.0] {
            let (a, b) = (-0.7, 1.6);
            let closed = pv_exp_over_nu(omega, a, b);
            let num = pv_subtracted(|v| Complex64::new(0.0, -omega * v).exp(), a, b, 0.0, 1e-14).unwrap();
            assert!((closed - num).norm() < 1e-10, "omega={omega}: {closed} vs {num}");
        }
    }

    #[test]
    fn pv_subtracted_rejects_endpoint() {
        let r = pv_subtracted(|_| Complex64::new(1.0, 0.0), 0.0, 1.0, 1e-14, 1e-12);
        assert!(matches!(r, Err(Error::Endpoint { .. })));
    }
}
