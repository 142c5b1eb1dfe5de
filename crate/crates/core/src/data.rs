//! Initial data `u⁰(x, y)`, `u¹(x, y)` on a periodic axial grid.
//!
//! Two representations are supported: sums of Gaussian wave packets with a
//! transverse shape from a small registry, evaluated in closed form, and
//! axial samples on a uniform periodic grid times a transverse shape,
//! evaluated by trigonometric interpolation. Everything downstream works with
//! the discrete Fourier coefficients of the data on the grid, where
//! translation, differentiation and primitives are exact multipliers.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Rule;

/// Uniform periodic grid `x_i = −X/2 + iX/n`, `n` a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub extent: f64,
    pub n: usize,
}

impl XGrid {
    pub fn new(extent: f64, n: usize) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Domain {
                what: "x extent",
                value: extent,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Contract(format!("x-grid size {n} is not a power of two ≥ 4")));
        }
        Ok(XGrid { extent, n })
    }

    pub fn dx(&self) -> f64 {
        self.extent / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn point(&self, i: usize) -> f64 {
        -0.5 * self.extent + i as f64 * self.dx()
    }

    /// Wavenumber of the non-negative mode `m ≤ n/2`.
    pub fn k(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.extent
    }

    /// Number of stored half-spectrum modes `m = 0, …, n/2`.
    pub fn half_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Discrete Fourier coefficients `Σ_j f_j e^{−2πijm/n}` for `m ≤ n/2`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n, "sample count does not match the grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(self.n).process(&mut buf);
        buf.truncate(self.half_len());
        buf
    }

    /// Real field from half-spectrum coefficients; the Nyquist mode is dropped.
    pub fn inverse(&self, half: &[Complex64]) -> Vec<f64> {
        assert_eq!(
            half.len(),
            self.half_len(),
            "half spectrum length does not match the grid"
        );
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(half[0].re, 0.0);
        for m in 1..n / 2 {
            buf[m] = half[m];
            buf[n - m] = half[m].conj();
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        let s = 1.0 / n as f64;
        buf.iter().map(|z| z.re * s).collect()
    }

    /// Discrete `L²` norm `(Σ f_i² Δx)^{1/2}`.
    pub fn l2(&self, values: &[f64]) -> f64 {
        (values.iter().map(|v| v * v).sum::<f64>() * self.dx()).sqrt()
    }
}

/// Transverse shapes `φ(y)` available to analytic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `1`
    #[default]
    One,
    /// `y`
    Linear,
    /// `cos(πy/2)`
    Cosine,
    /// `1 − y²`
    Bump,
}

impl Shape {
    pub fn eval(self, y: f64) -> f64 {
        match self {
            Shape::One => 1.0,
            Shape::Linear => y,
            Shape::Cosine => (0.5 * PI * y).cos(),
            Shape::Bump => 1.0 - y * y,
        }
    }
}

/// `A exp(−(x − x₀)²/σ²) cos(k₀x) φ(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub amplitude: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "unit")]
    pub width: f64,
    #[serde(default)]
    pub carrier: f64,
    #[serde(default)]
    pub shape: Shape,
}

fn unit() -> f64 {
    1.0
}

impl Packet {
    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Self {
        Packet {
            amplitude,
            center,
            width,
            carrier: 0.0,
            shape: Shape::One,
        }
    }

    /// `∂ₓ^order` of the axial factor on the line, `order ≤ 2`.
    pub fn axial(&self, x: f64, order: u32) -> f64 {
        let s2 = self.width * self.width;
        let xi = x - self.center;
        let e = self.amplitude * (-xi * xi / s2).exp();
        let (sn, cs) = (self.carrier * x).sin_cos();
        let k0 = self.carrier;
        match order {
            0 => e * cs,
            1 => e * (-2.0 * xi / s2 * cs - k0 * sn),
            2 => e * ((4.0 * xi * xi / (s2 * s2) - 2.0 / s2 - k0 * k0) * cs + 4.0 * xi * k0 / s2 * sn),
            _ => panic!("closed-form derivatives are available up to order 2"),
        }
    }

    /// Periodized axial factor `Σₙ g(x + nX)`.
    pub fn axial_periodic(&self, x: f64, extent: f64, order: u32) -> f64 {
        let shift = ((x - self.center) / extent).round() * extent;
        let base = x - shift;
        (-2..=2).map(|n| self.axial(base + n as f64 * extent, order)).sum()
    }

    pub fn eval(&self, x: f64, y: f64, order: u32) -> f64 {
        self.axial(x, order) * self.shape.eval(y)
    }
}

/// Closed-form data built from Gaussian packets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalyticFamily {
    #[serde(default)]
    pub u0: Vec<Packet>,
    #[serde(default)]
    pub u1: Vec<Packet>,
}

/// Samples `f(xᵢ)` on a periodic grid times a transverse shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSampled {
    grid: XGrid,
    u0: Vec<f64>,
    u1: Vec<f64>,
    shape0: Shape,
    shape1: Shape,
    coef0: Vec<Complex64>,
    coef1: Vec<Complex64>,
}

impl GridSampled {
    pub fn new(grid: XGrid, u0: Vec<f64>, u1: Vec<f64>, shape0: Shape, shape1: Shape) -> Result<Self> {
        if u0.len() != grid.n || u1.len() != grid.n {
            return Err(Error::Contract(format!(
                "grid data has {} / {} samples, grid has {}",
                u0.len(),
                u1.len(),
                grid.n
            )));
        }
        let coef0 = grid.forward(&u0);
        let coef1 = grid.forward(&u1);
        Ok(GridSampled {
            grid,
            u0,
            u1,
            shape0,
            shape1,
            coef0,
            coef1,
        })
    }

    pub fn grid(&self) -> XGrid {
        self.grid
    }

    /// Trigonometric interpolant of `∂ₓ^order` at an arbitrary `x`.
    fn interp(&self, coef: &[Complex64], x: f64, order: u32) -> f64 {
        let g = self.grid;
        let x0 = g.point(0);
        let mut s = if order == 0 { coef[0].re } else { 0.0 };
        for (m, c) in coef.iter().enumerate().take(g.n / 2).skip(1) {
            let k = g.k(m);
            let ik = Complex64::new(0.0, k).powu(order);
            s += 2.0 * (c * ik * Complex64::from_polar(1.0, k * (x - x0))).re;
        }
        s / g.n as f64
    }
}

/// Initial displacement `u⁰` and velocity `u¹`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Analytic(AnalyticFamily),
    Grid(GridSampled),
}

/// Which of the two data fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Displacement,
    Velocity,
}

/// Half-spectrum coefficients of both data fields on the nodes of a
/// transverse rule, `[node][mode]`.
#[derive(Debug, Clone)]
pub struct DataSpectra {
    pub grid: XGrid,
    pub u0: Vec<Vec<Complex64>>,
    pub u1: Vec<Vec<Complex64>>,
    /// Highest mode index carrying data above the floor.
    pub m_max: usize,
    pub velocity_zero: bool,
}

impl DataSpectra {
    /// Largest resolved wavenumber.
    pub fn k_max(&self) -> f64 {
        self.grid.k(self.m_max)
    }
}

/// Relative floor below which Fourier coefficients of the data are ignored.
pub const SPECTRAL_FLOOR: f64 = 1e-14;

impl InitialData {
    pub fn packet(u0: Packet) -> Self {
        InitialData::Analytic(AnalyticFamily {
            u0: vec![u0],
            u1: vec![],
        })
    }

    pub fn eval(&self, field: Field, x: f64, y: f64, order: u32) -> f64 {
        match self {
            InitialData::Analytic(a) => {
                let ps = match field {
                    Field::Displacement => &a.u0,
                    Field::Velocity => &a.u1,
                };
                ps.iter().map(|p| p.eval(x, y, order)).sum()
            }
            InitialData::Grid(g) => {
                let (c, s) = match field {
                    Field::Displacement => (&g.coef0, g.shape0),
                    Field::Velocity => (&g.coef1, g.shape1),
                };
                g.interp(c, x, order) * s.eval(y)
            }
        }
    }

    pub fn u0(&self, x: f64, y: f64) -> f64 {
        self.eval(Field::Displacement, x, y, 0)
    }

    pub fn u1(&self, x: f64, y: f64) -> f64 {
        self.eval(Field::Velocity, x, y, 0)
    }

    pub fn velocity_is_zero(&self) -> bool {
        match self {
            InitialData::Analytic(a) => a.u1.iter().all(|p| p.amplitude == 0.0),
            InitialData::Grid(g) => g.u1.iter().all(|&v| v == 0.0),
        }
    }

    /// Samples of one field at transverse position `y` on `grid`, periodized.
    pub fn sample(&self, field: Field, grid: &XGrid, y: f64) -> Result<Vec<f64>> {
        match self {
            InitialData::Analytic(a) => {
                let ps = match field {
                    Field::Displacement => &a.u0,
                    Field::Velocity => &a.u1,
                };
                Ok(grid
                    .points()
                    .iter()
                    .map(|&x| {
                        ps.iter()
                            .map(|p| p.axial_periodic(x, grid.extent, 0) * p.shape.eval(y))
                            .sum()
                    })
                    .collect())
            }
            InitialData::Grid(g) => {
                if (g.grid.extent - grid.extent).abs() > 1e-12 * grid.extent {
                    return Err(Error::Contract(format!(
                        "grid data extent {} differs from solver extent {}",
                        g.grid.extent, grid.extent
                    )));
                }
                let (vals, coef, s) = match field {
                    Field::Displacement => (&g.u0, &g.coef0, g.shape0),
                    Field::Velocity => (&g.u1, &g.coef1, g.shape1),
                };
                let phi = s.eval(y);
                if g.grid.n == grid.n {
                    Ok(vals.iter().map(|v| v * phi).collect())
                } else {
                    Ok(grid.points().iter().map(|&x| g.interp(coef, x, 0) * phi).collect())
                }
            }
        }
    }

    /// Half-spectrum coefficients on every node of `rule`.
    pub fn spectra(&self, grid: &XGrid, rule: &Rule) -> Result<DataSpectra> {
        let mut u0 = Vec::with_capacity(rule.len());
        let mut u1 = Vec::with_capacity(rule.len());
        for &y in &rule.nodes {
            u0.push(grid.forward(&self.sample(Field::Displacement, grid, y)?));
            u1.push(grid.forward(&self.sample(Field::Velocity, grid, y)?));
        }
        let half = grid.half_len();
        let mut peak = vec![0.0f64; half];
        for row in u0.iter().chain(u1.iter()) {
            for (p, z) in peak.iter_mut().zip(row) {
                *p = p.max(z.norm());
            }
        }
        let top = peak.iter().cloned().fold(0.0, f64::max);
        let m_max = peak
            .iter()
            .take(grid.n / 2)
            .rposition(|&p| p > SPECTRAL_FLOOR * top)
            .unwrap_or(0);
        Ok(DataSpectra {
            grid: *grid,
            u0,
            u1,
            m_max,
            velocity_zero: self.velocity_is_zero(),
        })
    }

    /// Initial-data specification to data.
    pub fn from_spec(spec: &DataSpec, base: &Path) -> Result<Self> {
        match spec {
            DataSpec::Packets(f) => Ok(InitialData::Analytic(f.clone())),
            DataSpec::Samples {
                path,
                extent,
                shape0,
                shape1,
            } => {
                let p = base.join(path);
                let text = std::fs::read_to_string(&p)?;
                let (u0, u1) = parse_samples(&text).map_err(|msg| Error::Config {
                    path: p.display().to_string(),
                    msg,
                })?;
                let grid = XGrid::new(*extent, u0.len())?;
                Ok(InitialData::Grid(GridSampled::new(grid, u0, u1, *shape0, *shape1)?))
            }
        }
    }
}

/// CSV with header `x,u0,u1`; the `x` column is ignored beyond its count.
fn parse_samples(text: &str) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty sample file")?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["x", "u0", "u1"] {
        return Err(format!("expected header `x,u0,u1`, found `{header}`"));
    }
    let mut u0 = Vec::new();
    let mut u1 = Vec::new();
    for (i, l) in lines.enumerate() {
        let v: std::result::Result<Vec<f64>, _> = l.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let v = v.map_err(|e| format!("row {}: {e}", i + 1))?;
        if v.len() != 3 {
            return Err(format!("row {}: expected 3 columns", i + 1));
        }
        u0.push(v[1]);
        u1.push(v[2]);
    }
    Ok((u0, u1))
}

/// Serialized initial-data specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DataSpec {
    Packets(AnalyticFamily),
    Samples {
        path: String,
        extent: f64,
        #[serde(default)]
        shape0: Shape,
        #[serde(default)]
        shape1: Shape,
    },
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Packets(AnalyticFamily {
            u0: vec![Packet::gaussian(1.0, 0.0, 1.0)],
            u1: vec![],
        })
    }
}
