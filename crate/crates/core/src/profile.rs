//! Transverse velocity profiles `M(y)` on `y ∈ [−1, 1]`.
//!
//! Two admissible classes: smooth profiles with one-signed `M′` and `M″`
//! (strictly monotone with fixed convexity), and continuous strictly monotone
//! piecewise-linear profiles. A uniform flow is excluded by strict
//! monotonicity; it reduces to classical duct acoustics.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Rule;

/// `M` and its first three derivatives at a point.
pub type Jet = [f64; 4];

/// Evaluator bundle for a smooth profile.
pub trait SmoothEvaluator: Send + Sync {
    /// `[M(y), M′(y), M″(y), M‴(y)]`.
    fn jet(&self, y: f64) -> Jet;

    /// Closed-form `[μ(z), μ′(z), μ″(z), μ‴(z)]` of the inverse, if known.
    fn inverse(&self, _z: f64) -> Option<Jet> {
        None
    }

    fn name(&self) -> String {
        "custom".into()
    }
}

/// `M(y) = exp(a y + b)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpProfile {
    pub a: f64,
    pub b: f64,
}

impl SmoothEvaluator for ExpProfile {
    fn jet(&self, y: f64) -> Jet {
        let m = (self.a * y + self.b).exp();
        let a = self.a;
        [m, a * m, a * a * m, a * a * a * m]
    }

    fn inverse(&self, z: f64) -> Option<Jet> {
        let a = self.a;
        Some([
            (z.ln() - self.b) / a,
            1.0 / (a * z),
            -1.0 / (a * z * z),
            2.0 / (a * z * z * z),
        ])
    }

    fn name(&self) -> String {
        format!("exp(a={}, b={})", self.a, self.b)
    }
}

/// `M(y) = (y + c)²` with `|c| > 1`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticProfile {
    pub c: f64,
}

impl SmoothEvaluator for QuadraticProfile {
    fn jet(&self, y: f64) -> Jet {
        let s = y + self.c;
        [s * s, 2.0 * s, 2.0, 0.0]
    }

    fn inverse(&self, z: f64) -> Option<Jet> {
        let r = z.sqrt();
        let sign = self.c.signum();
        Some([
            sign * r - self.c,
            sign * 0.5 / r,
            -sign * 0.25 / (z * r),
            sign * 0.375 / (z * z * r),
        ])
    }

    fn name(&self) -> String {
        format!("quadratic(c={})", self.c)
    }
}

/// A smooth profile together with its cached range.
#[derive(Clone)]
pub struct SmoothProfile {
    eval: Arc<dyn SmoothEvaluator>,
    m_minus: f64,
    m_plus: f64,
    increasing: bool,
}

impl fmt::Debug for SmoothProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothProfile")
            .field("name", &self.eval.name())
            .field("range", &(self.m_minus, self.m_plus))
            .finish()
    }
}

impl SmoothProfile {
    pub fn new(eval: Arc<dyn SmoothEvaluator>) -> Self {
        let lo = eval.jet(-1.0)[0];
        let hi = eval.jet(1.0)[0];
        SmoothProfile {
            eval,
            m_minus: lo.min(hi),
            m_plus: lo.max(hi),
            increasing: hi >= lo,
        }
    }

    pub fn jet(&self, y: f64) -> Jet {
        self.eval.jet(y)
    }

    pub fn has_closed_inverse(&self) -> bool {
        self.eval.inverse(0.5 * (self.m_minus + self.m_plus)).is_some()
    }

    pub fn name(&self) -> String {
        self.eval.name()
    }

    /// `[μ, μ′, μ″, μ‴]` at `z ∈ [M₋, M₊]`, closed form if available,
    /// otherwise bisection plus chain rule.
    pub fn inverse_jet(&self, z: f64) -> Jet {
        if let Some(j) = self.eval.inverse(z) {
            return j;
        }
        let y = self.bisect(z);
        let [_, d1, d2, d3] = self.eval.jet(y);
        [y, 1.0 / d1, -d2 / d1.powi(3), (3.0 * d2 * d2 - d1 * d3) / d1.powi(5)]
    }

    fn bisect(&self, z: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let s = if self.increasing { 1.0 } else { -1.0 };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if s * (self.eval.jet(mid)[0] - z) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Continuous, strictly monotone piecewise-linear profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
    merged: usize,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != values.len() || breakpoints.len() < 2 {
            return Err(Error::InvalidProfile(format!(
                "need matching breakpoint/value lists of length >= 2 (got {} and {})",
                breakpoints.len(),
                values.len()
            )));
        }
        let n = breakpoints.len();
        if breakpoints[0] != -1.0 || breakpoints[n - 1] != 1.0 {
            return Err(Error::InvalidProfile(
                "breakpoints must start at -1 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile("breakpoints must be strictly increasing".into()));
        }
        let up = values[1] > values[0];
        for (i, w) in values.windows(2).enumerate() {
            let ok = if up { w[1] > w[0] } else { w[1] < w[0] };
            if !ok {
                return Err(Error::InvalidProfile(format!(
                    "values not strictly monotone at node {} (M = {} then {})",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        // Merge collinear neighbours so consecutive slopes always differ.
        let mut xs = vec![breakpoints[0]];
        let mut ms = vec![values[0]];
        let mut merged = 0;
        for i in 1..n {
            if i + 1 < n {
                let a0 = (values[i] - ms[ms.len() - 1]) / (breakpoints[i] - xs[xs.len() - 1]);
                let a1 = (values[i + 1] - values[i]) / (breakpoints[i + 1] - breakpoints[i]);
                if ((a1 - a0) / a0.abs().max(a1.abs())).abs() < 1e-12 {
                    merged += 1;
                    continue;
                }
            }
            xs.push(breakpoints[i]);
            ms.push(values[i]);
        }
        if merged > 0 {
            log::warn!("piecewise-linear profile: merged {merged} collinear segment(s)");
        }
        let slopes: Vec<f64> = (0..xs.len() - 1)
            .map(|i| (ms[i + 1] - ms[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let intercepts = (0..slopes.len()).map(|i| ms[i] - slopes[i] * xs[i]).collect();
        Ok(PiecewiseLinear {
            breakpoints: xs,
            values: ms,
            slopes,
            intercepts,
            merged,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    /// Number of collinear segments merged at construction.
    pub fn merged(&self) -> usize {
        self.merged
    }

    pub fn increasing(&self) -> bool {
        self.values[1] > self.values[0]
    }

    fn segment_of(&self, y: f64) -> usize {
        let i = self.breakpoints.partition_point(|&x| x <= y);
        i.saturating_sub(1).min(self.segments() - 1)
    }

    fn eval(&self, y: f64) -> f64 {
        let i = self.segment_of(y);
        if y == self.breakpoints[i + 1] {
            return self.values[i + 1];
        }
        self.values[i] + self.slopes[i] * (y - self.breakpoints[i])
    }

    /// Segment-local affine inversion: `(μ(z), μ′(z), segment)`.
    pub fn inverse_affine(&self, z: f64) -> (f64, f64, usize) {
        let inc = self.increasing();
        let i = (0..self.segments())
            .find(|&i| {
                let (a, b) = (self.values[i], self.values[i + 1]);
                if inc {
                    z <= b
                } else {
                    z >= b || a == z
                }
            })
            .unwrap_or(self.segments() - 1);
        let y = self.breakpoints[i] + (z - self.values[i]) / self.slopes[i];
        (y, 1.0 / self.slopes[i], i)
    }
}

/// An admissible velocity profile.
#[derive(Debug, Clone)]
pub enum VelocityProfile {
    Smooth(SmoothProfile),
    PiecewiseLinear(PiecewiseLinear),
}

/// Profile classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileClass {
    SmoothMonotoneConvex,
    PiecewiseLinear,
}

/// Outcome of [`VelocityProfile::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub class: ProfileClass,
    pub increasing: bool,
    pub range: (f64, f64),
    pub violations: Vec<String>,
    pub merged_segments: usize,
}

/// JSON profile specification used by run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProfileSpec {
    Exp {
        a: f64,
        #[serde(default)]
        b: f64,
    },
    Quadratic {
        c: f64,
    },
    Pl {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<VelocityProfile> {
        match self {
            ProfileSpec::Exp { a, b } => {
                if *a == 0.0 {
                    return Err(Error::InvalidProfile("exp profile needs a != 0".into()));
                }
                Ok(VelocityProfile::exp(*a, *b))
            }
            ProfileSpec::Quadratic { c } => {
                if c.abs() <= 1.0 {
                    return Err(Error::InvalidProfile("quadratic profile needs |c| > 1".into()));
                }
                Ok(VelocityProfile::quadratic(*c))
            }
            ProfileSpec::Pl { breakpoints, values } => {
                VelocityProfile::piecewise_linear(breakpoints.clone(), values.clone())
            }
        }
    }
}

/// Number of samples used by the smooth-class sign checks.
pub const VALIDATION_SAMPLES: usize = 2049;

impl VelocityProfile {
    pub fn exp(a: f64, b: f64) -> Self {
        VelocityProfile::Smooth(SmoothProfile::new(Arc::new(ExpProfile { a, b })))
    }

    pub fn quadratic(c: f64) -> Self {
        VelocityProfile::Smooth(SmoothProfile::new(Arc::new(QuadraticProfile { c })))
    }

    pub fn smooth(eval: Arc<dyn SmoothEvaluator>) -> Self {
        VelocityProfile::Smooth(SmoothProfile::new(eval))
    }

    pub fn piecewise_linear(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        PiecewiseLinear::new(breakpoints, values).map(VelocityProfile::PiecewiseLinear)
    }

    pub fn class(&self) -> ProfileClass {
        match self {
            VelocityProfile::Smooth(_) => ProfileClass::SmoothMonotoneConvex,
            VelocityProfile::PiecewiseLinear(_) => ProfileClass::PiecewiseLinear,
        }
    }

    /// `(M₋, M₊)`.
    pub fn range(&self) -> (f64, f64) {
        match self {
            VelocityProfile::Smooth(s) => (s.m_minus, s.m_plus),
            VelocityProfile::PiecewiseLinear(p) => {
                let (a, b) = (p.values[0], p.values[p.values.len() - 1]);
                (a.min(b), a.max(b))
            }
        }
    }

    pub fn increasing(&self) -> bool {
        match self {
            VelocityProfile::Smooth(s) => s.increasing,
            VelocityProfile::PiecewiseLinear(p) => p.increasing(),
        }
    }

    /// `max |M|` over the duct.
    pub fn sup_norm(&self) -> f64 {
        let (a, b) = self.range();
        a.abs().max(b.abs())
    }

    /// `M(y)` for `y ∈ [−1, 1]`.
    pub fn evaluate(&self, y: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&y) {
            return Err(Error::Domain {
                what: "y",
                value: y,
                lo: -1.0,
                hi: 1.0,
            });
        }
        Ok(self.m(y))
    }

    /// `M(y)` without the domain check.
    pub fn m(&self, y: f64) -> f64 {
        match self {
            VelocityProfile::Smooth(s) => s.jet(y)[0],
            VelocityProfile::PiecewiseLinear(p) => p.eval(y),
        }
    }

    /// `(μ, μ′, μ″, μ‴)` at `z ∈ [M₋, M₊]` for smooth profiles.
    pub fn inverse_calculus(&self, z: f64) -> Result<Jet> {
        let (lo, hi) = self.range();
        if !(lo..=hi).contains(&z) {
            return Err(Error::Domain {
                what: "z",
                value: z,
                lo,
                hi,
            });
        }
        match self {
            VelocityProfile::Smooth(s) => Ok(s.inverse_jet(z)),
            VelocityProfile::PiecewiseLinear(_) => Err(Error::UnsupportedClass("piecewise-linear")),
        }
    }

    /// Piecewise-linear path of the inverse: `(μ(z), μ′(z))` by segment-local
    /// affine inversion.
    pub fn inverse_affine(&self, z: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.range();
        if !(lo..=hi).contains(&z) {
            return Err(Error::Domain {
                what: "z",
                value: z,
                lo,
                hi,
            });
        }
        match self {
            VelocityProfile::PiecewiseLinear(p) => {
                let (y, d, _) = p.inverse_affine(z);
                Ok((y, d))
            }
            VelocityProfile::Smooth(_) => Err(Error::UnsupportedClass("smooth")),
        }
    }

    /// Classify the profile and check the class conditions.
    pub fn validate(&self) -> Result<ClassificationReport> {
        let range = self.range();
        match self {
            VelocityProfile::Smooth(s) => {
                if range.1 <= range.0 {
                    return Err(Error::InvalidProfile("M(-1) = M(1): not strictly monotone".into()));
                }
                let mut d1_sign = 0.0;
                let mut d2_sign = 0.0;
                for i in 0..VALIDATION_SAMPLES {
                    let y = -1.0 + 2.0 * i as f64 / (VALIDATION_SAMPLES - 1) as f64;
                    let [_, d1, d2, _] = s.jet(y);
                    if d1 == 0.0 || (d1_sign != 0.0 && d1.signum() != d1_sign) {
                        return Err(Error::InvalidProfile(format!("not strictly monotone: M'({y}) = {d1}")));
                    }
                    if d2 == 0.0 || (d2_sign != 0.0 && d2.signum() != d2_sign) {
                        return Err(Error::InvalidProfile(format!(
                            "convexity changes or degenerates: M''({y}) = {d2}"
                        )));
                    }
                    d1_sign = d1.signum();
                    d2_sign = d2.signum();
                }
                Ok(ClassificationReport {
                    class: ProfileClass::SmoothMonotoneConvex,
                    increasing: d1_sign > 0.0,
                    range,
                    violations: vec![],
                    merged_segments: 0,
                })
            }
            VelocityProfile::PiecewiseLinear(p) => {
                let violations = if p.merged > 0 {
                    vec![format!("{} collinear segment(s) merged", p.merged)]
                } else {
                    vec![]
                };
                Ok(ClassificationReport {
                    class: ProfileClass::PiecewiseLinear,
                    increasing: p.increasing(),
                    range,
                    violations,
                    merged_segments: p.merged,
                })
            }
        }
    }

    /// Gauss–Legendre rule in `y` with about `n` nodes: global for smooth
    /// profiles, per segment for piecewise-linear ones.
    pub fn transverse_rule(&self, n: usize) -> Rule {
        match self {
            VelocityProfile::Smooth(_) => Rule::gauss_legendre(n),
            VelocityProfile::PiecewiseLinear(p) => {
                let per = (n / p.segments()).max(2);
                Rule::composite(&Rule::gauss_legendre(per), p.breakpoints())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl3() -> VelocityProfile {
        VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 3.0]).unwrap()
    }

    struct Square;
    impl SmoothEvaluator for Square {
        fn jet(&self, y: f64) -> Jet {
            [y * y, 2.0 * y, 2.0, 0.0]
        }
    }

    #[test]
    fn evaluate_examples() {
        let id = VelocityProfile::piecewise_linear(vec![-1.0, 1.0], vec![-1.0, 1.0]).unwrap();
        assert_eq!(id.evaluate(0.5).unwrap(), 0.5);
        assert!((pl3().evaluate(0.5).unwrap() - 2.0).abs() < 1e-15);
        let e = VelocityProfile::exp(1.0, 0.0);
        assert!((e.evaluate(1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!(matches!(e.evaluate(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn inverse_calculus_examples() {
        let e = VelocityProfile::exp(1.0, 0.0);
        let j = e.inverse_calculus(1.0).unwrap();
        for (got, want) in j.iter().zip([0.0, 1.0, -1.0, 2.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        let q = VelocityProfile::quadratic(2.0);
        let j = q.inverse_calculus(4.0).unwrap();
        for (got, want) in j.iter().zip([0.0, 0.25, -1.0 / 32.0, 3.0 / 256.0]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        let id = VelocityProfile::piecewise_linear(vec![-1.0, 1.0], vec![-1.0, 1.0]).unwrap();
        assert_eq!(id.inverse_affine(0.25).unwrap(), (0.25, 1.0));
        assert!(matches!(id.inverse_calculus(0.25), Err(Error::UnsupportedClass(_))));
        assert!(matches!(e.inverse_calculus(3.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn numeric_inverse_matches_closed_form() {
        struct ExpNoInverse;
        impl SmoothEvaluator for ExpNoInverse {
            fn jet(&self, y: f64) -> Jet {
                let m = y.exp();
                [m, m, m, m]
            }
        }
        let p = VelocityProfile::smooth(Arc::new(ExpNoInverse));
        let q = VelocityProfile::exp(1.0, 0.0);
        for z in [0.5, 1.0, 2.0, 2.6] {
            let a = p.inverse_calculus(z).unwrap();
            let b = q.inverse_calculus(z).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-11 * y.abs().max(1.0), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn validate_examples() {
        let r = VelocityProfile::exp(1.0, 0.0).validate().unwrap();
        assert_eq!(r.class, ProfileClass::SmoothMonotoneConvex);
        assert!(r.increasing);
        assert!((r.range.0 - (-1.0f64).exp()).abs() < 1e-15);
        let sq = VelocityProfile::smooth(Arc::new(Square));
        assert!(matches!(sq.validate(), Err(Error::InvalidProfile(_))));
        let r = pl3().validate().unwrap();
        assert_eq!(r.class, ProfileClass::PiecewiseLinear);
        assert_eq!(r.range, (0.0, 3.0));
        assert!(r.increasing);
    }

    #[test]
    fn collinear_segments_are_merged() {
        let p = VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 0.5, 1.0], vec![0.0, 1.0, 1.5, 3.0]).unwrap();
        let r = p.validate().unwrap();
        assert_eq!(r.merged_segments, 1);
        match p {
            VelocityProfile::PiecewiseLinear(pl) => assert_eq!(pl.breakpoints(), &[-1.0, 0.5, 1.0]),
            _ => unreachable!(),
        }
        assert!(VelocityProfile::piecewise_linear(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.5]).is_err());
    }

    #[test]
    fn pl_is_continuous_at_breakpoints() {
        let p = VelocityProfile::piecewise_linear(vec![-1.0, -0.3, 0.2, 1.0], vec![-2.0, 0.1, 0.7, 3.3]).unwrap();
        if let VelocityProfile::PiecewiseLinear(pl) = &p {
            for (k, (x, m)) in pl.breakpoints().iter().zip(pl.values()).enumerate() {
                assert_eq!(p.m(*x), *m);
                if k > 0 {
                    let left = pl.values[k - 1] + pl.slopes[k - 1] * (x - pl.breakpoints[k - 1]);
                    assert!((left - m).abs() < 4.0 * f64::EPSILON * m.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let s: ProfileSpec = serde_json::from_str(r#"{"type":"pl","breakpoints":[-1,0,1],"values":[0,1,3]}"#).unwrap();
        assert!(matches!(s.build().unwrap(), VelocityProfile::PiecewiseLinear(_)));
        let s: ProfileSpec = serde_json::from_str(r#"{"type":"exp","a":1.0,"b":0.0}"#).unwrap();
        assert_eq!(s.build().unwrap().class(), ProfileClass::SmoothMonotoneConvex);
        let s: ProfileSpec = serde_json::from_str(r#"{"type":"quadratic","c":0.5}"#).unwrap();
        assert!(s.build().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn closed_inverse_roundtrip(u in 0.001f64..0.999, which in 0usize..3) {
                let p = match which {
                    0 => VelocityProfile::exp(1.0, 0.0),
                    1 => VelocityProfile::quadratic(2.0),
                    _ => VelocityProfile::exp(-0.7, 0.3),
                };
                let (lo, hi) = p.range();
                let z = lo + u * (hi - lo);
                let y = p.inverse_calculus(z).unwrap()[0];
                prop_assert!((p.m(y) - z).abs() < 1e-12);
            }

            #[test]
            fn chain_rule_matches_finite_differences(u in 0.05f64..0.95) {
                struct Num(ExpProfile);
                impl SmoothEvaluator for Num {
                    fn jet(&self, y: f64) -> Jet { self.0.jet(y) }
                }
                let p = VelocityProfile::smooth(Arc::new(Num(ExpProfile { a: 0.8, b: 0.1 })));
                let (lo, hi) = p.range();
                let z = lo + u * (hi - lo);
                let h = 1e-4;
                let j = |z| p.inverse_calculus(z).unwrap();
                let (jm, j0, jp) = (j(z - h), j(z), j(z + h));
                prop_assert!(((jp[0] - jm[0]) / (2.0 * h) - j0[1]).abs() < 1e-6 * j0[1].abs().max(1.0));
                prop_assert!(((jp[1] - jm[1]) / (2.0 * h) - j0[2]).abs() < 1e-6 * j0[2].abs().max(1.0));
                prop_assert!(((jp[2] - jm[2]) / (2.0 * h) - j0[3]).abs() < 1e-5 * j0[3].abs().max(1.0));
            }
        }
    }
}
