//! Harmonic bath: logarithmic discretisation of an ohmic spectral density
//! with exponential cutoff, the continuous response function and its
//! cell-integrated coefficients.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ohmic spectral density `J(w) = (pi/2) xi w exp(-w/wc)`, truncated at `omega_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OhmicSpec {
    pub xi: f64,
    pub omega_c: f64,
    pub omega_max: f64,
    pub count: usize,
}

impl OhmicSpec {
    /// 200 oscillators up to `4 wc`.
    pub fn standard(xi: f64, omega_c: f64) -> Self {
        Self {
            xi,
            omega_c,
            omega_max: 4.0 * omega_c,
            count: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBath {
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
}

/// Frequencies `w_j = -wc ln(1 - (j/L)(1 - exp(-wmax/wc)))` and couplings
/// `c_j = w_j sqrt((xi wc / L)(1 - exp(-wmax/wc)))`, for `j = 1..=L`.
pub fn discretize(spec: &OhmicSpec) -> Result<DiscreteBath> {
    if !(spec.xi >= 0.0 && spec.xi.is_finite()) {
        return Err(Error::InvalidParameter(format!("xi = {} must be >= 0", spec.xi)));
    }
    if !(spec.omega_c > 0.0 && spec.omega_c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "omega_c = {} must be > 0",
            spec.omega_c
        )));
    }
    if !(spec.omega_max > 0.0 && spec.omega_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "omega_max = {} must be > 0",
            spec.omega_max
        )));
    }
    if spec.count == 0 {
        return Err(Error::InvalidParameter("oscillator count must be >= 1".into()));
    }
    let l = spec.count as f64;
    let span = -(-spec.omega_max / spec.omega_c).exp_m1();
    let scale = (spec.xi * spec.omega_c / l * span).sqrt();
    let frequencies: Vec<f64> = (1..=spec.count)
        .map(|j| -spec.omega_c * (-(j as f64) / l * span).ln_1p())
        .collect();
    let couplings = frequencies.iter().map(|w| w * scale).collect();
    Ok(DiscreteBath { frequencies, couplings })
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && !beta.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta = {beta} must be > 0")))
    }
}

// x - sin(x), accurate for small x.
fn x_minus_sin(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    } else {
        x - x.sin()
    }
}

// 1 - cos(x) without cancellation.
fn one_minus_cos(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// Per-oscillator data for one temperature. `weight_j = c_j^2 / (2 w_j)`.
///
/// Besides the response `eta(t)` this exposes the first antiderivative
/// `G(t) = int_0^t eta` and the second `F(t) = int_0^t G`. Every double
/// integral of `eta(x1 - x2)` over piecewise-constant paths reduces to
/// combinations of `F`, and `F(0) = G(0) = 0` keeps the large
/// low-frequency constants out of those differences.
#[derive(Clone, Debug)]
pub struct BathResponse {
    freq: Vec<f64>,
    weight: Vec<f64>,
    coth: Vec<f64>,
}

impl BathResponse {
    pub fn new(bath: &DiscreteBath, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if bath.frequencies.len() != bath.couplings.len() {
            return Err(Error::InvalidParameter("frequency and coupling counts differ".into()));
        }
        let mut freq = Vec::new();
        let mut weight = Vec::new();
        let mut coth = Vec::new();
        for (&w, &c) in bath.frequencies.iter().zip(&bath.couplings) {
            if w.is_nan() || w <= 0.0 {
                return Err(Error::InvalidParameter(format!("bath frequency {w} must be > 0")));
            }
            if c == 0.0 {
                continue;
            }
            freq.push(w);
            weight.push(c * c / (2.0 * w));
            coth.push(1.0 / (0.5 * beta * w).tanh());
        }
        Ok(Self { freq, weight, coth })
    }

    /// True when every coupling vanishes.
    pub fn is_free(&self) -> bool {
        self.freq.is_empty()
    }

    /// `eta(t) = sum_j weight_j (coth_j cos(w_j t) - i sin(w_j t))`.
    pub fn eta(&self, t: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for j in 0..self.freq.len() {
            let (s, c) = (self.freq[j] * t).sin_cos();
            re += self.weight[j] * self.coth[j] * c;
            im -= self.weight[j] * s;
        }
        C64::new(re, im)
    }

    /// `G(t) = int_0^t eta(s) ds`.
    pub fn g(&self, t: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for j in 0..self.freq.len() {
            let w = self.freq[j];
            let a = self.weight[j] / w;
            re += a * self.coth[j] * (w * t).sin();
            im -= a * one_minus_cos(w * t);
        }
        C64::new(re, im)
    }

    /// `F(t) = int_0^t G(s) ds`. Also the triangle integral
    /// `int_0^t dx1 int_0^x1 dx2 eta(x1 - x2)`.
    pub fn f(&self, t: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for j in 0..self.freq.len() {
            let w = self.freq[j];
            let a = self.weight[j] / (w * w);
            re += a * self.coth[j] * one_minus_cos(w * t);
            im -= a * x_minus_sin(w * t);
        }
        C64::new(re, im)
    }
}

/// Antiderivative pair used by the path functionals. Implemented by the
/// exact response and by a table sampled on a uniform lattice.
pub trait ResponseKernel {
    fn g(&self, t: f64) -> C64;
    fn f(&self, t: f64) -> C64;

    /// `int_a^b eta(s) ds`
    fn interval(&self, a: f64, b: f64) -> C64 {
        self.g(b) - self.g(a)
    }

    /// `int_a^b dx1 int_c^d dx2 eta(x1 - x2)` for `c <= d <= a <= b`.
    fn rectangle(&self, a: f64, b: f64, c: f64, d: f64) -> C64 {
        self.f(b - c) - self.f(a - c) - self.f(b - d) + self.f(a - d)
    }
}

impl ResponseKernel for BathResponse {
    fn g(&self, t: f64) -> C64 {
        BathResponse::g(self, t)
    }
    fn f(&self, t: f64) -> C64 {
        BathResponse::f(self, t)
    }
}

/// `F` and `G` tabulated at `k * h`, `k = 0..=n`. Arguments must be lattice
/// multiples of `h`.
#[derive(Clone, Debug)]
pub struct LatticeKernel {
    h: f64,
    g: Vec<C64>,
    f: Vec<C64>,
}

impl LatticeKernel {
    pub fn new(resp: &BathResponse, h: f64, n: usize) -> Self {
        let g = (0..=n).map(|k| resp.g(k as f64 * h)).collect();
        let f = (0..=n).map(|k| resp.f(k as f64 * h)).collect();
        Self { h, g, f }
    }

    fn slot(&self, t: f64) -> usize {
        let k = (t / self.h).round();
        debug_assert!((t / self.h - k).abs() < 1e-6, "{t} is off the lattice");
        k as usize
    }
}

impl ResponseKernel for LatticeKernel {
    fn g(&self, t: f64) -> C64 {
        self.g[self.slot(t)]
    }
    fn f(&self, t: f64) -> C64 {
        self.f[self.slot(t)]
    }
}

/// Continuous response `eta(t)` of the discretised bath at inverse temperature `beta`.
pub fn eta_tilde(bath: &DiscreteBath, beta: f64, tau: f64) -> Result<C64> {
    Ok(BathResponse::new(bath, beta)?.eta(tau))
}

fn cell_coefficient(resp: &BathResponse, dt: f64, lag: usize) -> C64 {
    if lag == 0 {
        resp.f(dt)
    } else {
        let m = lag as f64;
        resp.f((m + 1.0) * dt) - resp.f(m * dt) * 2.0 + resp.f((m - 1.0) * dt)
    }
}

/// Cell-integrated coefficient for points `lag` steps apart. Lag 0 is the
/// within-cell triangle integral.
pub fn eta_coefficient(bath: &DiscreteBath, beta: f64, dt: f64, lag: usize) -> Result<C64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    Ok(cell_coefficient(&BathResponse::new(bath, beta)?, dt, lag))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaTable {
    pub dt: f64,
    values: Vec<C64>,
}

impl EtaTable {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, lag: usize) -> Result<C64> {
        self.values.get(lag).copied().ok_or(Error::LagOutOfRange {
            lag,
            max_lag: self.max_lag(),
        })
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }
}

pub fn build_eta_table(bath: &DiscreteBath, beta: f64, dt: f64, max_lag: usize) -> Result<EtaTable> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be > 0")));
    }
    let resp = BathResponse::new(bath, beta)?;
    Ok(EtaTable {
        dt,
        values: (0..=max_lag).map(|l| cell_coefficient(&resp, dt, l)).collect(),
    })
}
