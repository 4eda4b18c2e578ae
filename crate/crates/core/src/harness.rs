//! Named parameter sets, time-series runs for each method, CSV round trips
//! and series comparison.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bath::{build_eta_table, discretize, OhmicSpec};
use crate::debpi::{Quadrature, Solver, SolverConfig, DEFAULT_MEMORY_BUDGET};
use crate::error::{Error, Result};
use crate::quapi::{brute_force_density, run_series, QuapiConfig, BRUTE_FORCE_MAX_POINTS};
use crate::spinsys::{DensityMatrix, SystemParams};

pub const CSV_HEADER: &str = "t,sigma_z_re,sigma_z_im,trace_re,method";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub system: SystemParams,
    pub ohmic: OhmicSpec,
    pub beta: f64,
    pub memory_time: f64,
    pub grid_n: usize,
    pub dmax: usize,
    pub memory_steps: usize,
    pub dt: f64,
    /// Physical end time of a default run.
    pub horizon: f64,
    pub rho0: DensityMatrix,
    pub quadrature: Quadrature,
}

pub const PRESET_NAMES: [&str; 8] = [
    "coupling-xi02",
    "coupling-xi04",
    "bias-eps0",
    "bias-eps05",
    "bias-eps1",
    "temp-beta02",
    "temp-beta1",
    "temp-beta5",
];

#[allow(clippy::too_many_arguments)]
fn make(
    name: &str,
    xi: f64,
    delta: f64,
    omega_c: f64,
    beta: f64,
    epsilon: f64,
    memory_time: f64,
    grid_n: usize,
    dmax: usize,
) -> ExperimentPreset {
    ExperimentPreset {
        name: name.to_string(),
        system: SystemParams { epsilon, delta },
        ohmic: OhmicSpec::standard(xi, omega_c),
        beta,
        memory_time,
        grid_n,
        dmax,
        memory_steps: 10,
        dt: 1.0 / 80.0,
        horizon: 10.0,
        rho0: DensityMatrix::pure_up(),
        quadrature: Quadrature::default(),
    }
}

pub fn preset(name: &str) -> Result<ExperimentPreset> {
    Ok(match name {
        "coupling-xi02" => make(name, 0.2, 1.0, 2.5, 5.0, 0.0, 1.5, 8, 8),
        "coupling-xi04" => make(name, 0.4, 1.0, 2.5, 5.0, 0.0, 1.5, 8, 8),
        "bias-eps0" => make(name, 0.2, 0.2, 1.0, 25.0, 0.0, 4.0, 10, 5),
        "bias-eps05" => make(name, 0.2, 0.2, 1.0, 25.0, 0.1, 4.0, 10, 5),
        "bias-eps1" => make(name, 0.2, 0.2, 1.0, 25.0, 0.2, 4.0, 10, 5),
        "temp-beta02" => make(name, 0.2, 0.1, 0.25, 2.0, 0.0, 4.0, 15, 3),
        "temp-beta1" => make(name, 0.2, 0.1, 0.25, 10.0, 0.0, 4.0, 15, 3),
        "temp-beta5" => make(name, 0.2, 0.1, 0.25, 50.0, 0.0, 4.0, 15, 3),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Debpi,
    Quapi,
    Brute,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Debpi => "debpi",
            Method::Quapi => "quapi",
            Method::Brute => "brute",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "debpi" => Ok(Method::Debpi),
            "quapi" => Ok(Method::Quapi),
            "brute" => Ok(Method::Brute),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// Optional replacements for preset fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub dmax: Option<usize>,
    pub grid_n: Option<usize>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub rho0: Option<DensityMatrix>,
    pub xi: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub omega_c: Option<f64>,
    pub beta: Option<f64>,
    pub memory_time: Option<f64>,
    pub memory_steps: Option<usize>,
    pub horizon: Option<f64>,
    pub quadrature: Option<Quadrature>,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

/// Four comma-separated complex entries in row order: `++, +-, -+, --`.
pub fn parse_rho0(s: &str) -> Result<DensityMatrix> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::Parse(format!("rho0 needs four entries, got {}", parts.len())));
    }
    let mut e = [[C64::new(0.0, 0.0); 2]; 2];
    for (k, p) in parts.iter().enumerate() {
        e[k / 2][k % 2] = C64::from_str(p).map_err(|_| Error::Parse(format!("bad complex entry `{p}`")))?;
    }
    Ok(DensityMatrix::from_entries(e))
}

impl Overrides {
    /// Apply one `key = value` setting. Returns `false` for keys this type
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dmax" => self.dmax = Some(parse_num(key, value)?),
            "grid_n" | "grid-n" => self.grid_n = Some(parse_num(key, value)?),
            "dt" => self.dt = Some(parse_num(key, value)?),
            "steps" => self.steps = Some(parse_num(key, value)?),
            "rho0" => self.rho0 = Some(parse_rho0(value)?),
            "xi" => self.xi = Some(parse_num(key, value)?),
            "delta" => self.delta = Some(parse_num(key, value)?),
            "epsilon" => self.epsilon = Some(parse_num(key, value)?),
            "omega_c" | "omega-c" => self.omega_c = Some(parse_num(key, value)?),
            "beta" => self.beta = Some(parse_num(key, value)?),
            "memory_time" | "memory-time" => self.memory_time = Some(parse_num(key, value)?),
            "memory_steps" | "memory-steps" => self.memory_steps = Some(parse_num(key, value)?),
            "horizon" => self.horizon = Some(parse_num(key, value)?),
            "quadrature" => {
                self.quadrature = Some(match value.trim() {
                    "rectangle" => Quadrature::Rectangle,
                    "simplex" => Quadrature::Simplex,
                    other => return Err(Error::Parse(format!("unknown quadrature `{other}`"))),
                })
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Later settings win.
    pub fn merge(&mut self, other: &Overrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            dmax,
            grid_n,
            dt,
            steps,
            rho0,
            xi,
            delta,
            epsilon,
            omega_c,
            beta,
            memory_time,
            memory_steps,
            horizon,
            quadrature
        );
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentPreset {
    pub fn with(&self, o: &Overrides) -> ExperimentPreset {
        let mut p = self.clone();
        if let Some(v) = o.dmax {
            p.dmax = v;
        }
        if let Some(v) = o.grid_n {
            p.grid_n = v;
        }
        if let Some(v) = o.dt {
            p.dt = v;
        }
        if let Some(v) = o.rho0 {
            p.rho0 = v;
        }
        if let Some(v) = o.xi {
            p.ohmic.xi = v;
        }
        if let Some(v) = o.delta {
            p.system.delta = v;
        }
        if let Some(v) = o.epsilon {
            p.system.epsilon = v;
        }
        if let Some(v) = o.omega_c {
            p.ohmic.omega_c = v;
            p.ohmic.omega_max = 4.0 * v;
        }
        if let Some(v) = o.beta {
            p.beta = v;
        }
        if let Some(v) = o.memory_time {
            p.memory_time = v;
        }
        if let Some(v) = o.memory_steps {
            p.memory_steps = v;
        }
        if let Some(v) = o.horizon {
            p.horizon = v;
        }
        if let Some(v) = o.quadrature {
            p.quadrature = v;
        }
        p
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        Ok(SolverConfig {
            memory_time: self.memory_time,
            grid_n: self.grid_n,
            dmax: self.dmax,
            dt: self.dt,
            system: SystemParams::new(self.system.epsilon, self.system.delta)?,
            bath: discretize(&self.ohmic)?,
            beta: self.beta,
            rho0: self.rho0,
            quadrature: self.quadrature,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        })
    }

    /// Discrete step of the iterative scheme, `T / memory_steps`.
    pub fn quapi_dt(&self) -> f64 {
        self.memory_time / self.memory_steps as f64
    }

    pub fn quapi_config(&self, max_lag: usize) -> Result<QuapiConfig> {
        if self.memory_steps == 0 {
            return Err(Error::InvalidParameter("memory_steps must be >= 1".into()));
        }
        let bath = discretize(&self.ohmic)?;
        let eta = build_eta_table(&bath, self.beta, self.quapi_dt(), max_lag.max(self.memory_steps))?;
        QuapiConfig::new(
            SystemParams::new(self.system.epsilon, self.system.delta)?,
            eta,
            self.memory_steps,
            self.rho0,
        )
    }

    /// Steps needed to reach the horizon with the given method.
    pub fn default_steps(&self, method: Method) -> usize {
        let steps = |span: f64, dt: f64| (span / dt - 1e-9).ceil().max(0.0) as usize;
        match method {
            Method::Debpi => steps(self.horizon - self.memory_time, self.dt),
            Method::Quapi => steps(self.horizon, self.quapi_dt()),
            Method::Brute => steps(self.horizon, self.quapi_dt()).min(BRUTE_FORCE_MAX_POINTS - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub t: f64,
    pub sigma_z: C64,
    pub trace: f64,
    pub method: Method,
}

impl Row {
    pub fn from_density(t: f64, rho: &DensityMatrix, method: Method) -> Self {
        Self {
            t,
            sigma_z: rho.sigma_z(),
            trace: rho.trace().re,
            method,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub rows: Vec<Row>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.t, r.sigma_z.re, r.sigma_z.im, r.trace, r.method
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("bad row `{line}`")));
            }
            rows.push(Row {
                t: parse_num("t", f[0])?,
                sigma_z: C64::new(parse_num("sigma_z_re", f[1])?, parse_num("sigma_z_im", f[2])?),
                trace: parse_num("trace_re", f[3])?,
                method: f[4].parse()?,
            });
        }
        Ok(Self { rows })
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }
}

/// Run `method` on `preset` with overrides applied.
///
/// Rows are physical times. The iterative and exhaustive schemes start at
/// `t = 0`. The PDE solver reports `rho0` at `t = 0` and then `T + n dt`,
/// since its first assembled density already spans one memory window.
pub fn run(preset: &ExperimentPreset, method: Method, overrides: &Overrides) -> Result<TimeSeries> {
    let p = preset.with(overrides);
    let steps = overrides.steps.unwrap_or_else(|| p.default_steps(method));
    let rows = match method {
        Method::Debpi => {
            let solver = Solver::new(p.solver_config()?)?;
            let mut rows = vec![Row::from_density(0.0, &p.rho0, method)];
            rows.extend(
                solver
                    .run(steps)
                    .iter()
                    .map(|(t, rho)| Row::from_density(*t, rho, method)),
            );
            rows
        }
        Method::Quapi => {
            let cfg = p.quapi_config(p.memory_steps)?;
            run_series(&cfg, steps)?
                .iter()
                .map(|(t, rho)| Row::from_density(*t, rho, method))
                .collect()
        }
        Method::Brute => {
            let cfg = p.quapi_config(steps)?;
            (0..=steps)
                .map(|n| {
                    Ok(Row::from_density(
                        n as f64 * cfg.dt,
                        &brute_force_density(&cfg, n)?,
                        method,
                    ))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(TimeSeries { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub max_abs_diff: f64,
    pub mean_abs_diff: f64,
    pub samples: usize,
}

fn median_spacing(ts: &[f64]) -> f64 {
    let mut d: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return f64::INFINITY;
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d[d.len() / 2]
}

fn check_monotone(ts: &[f64]) -> Result<()> {
    if ts.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) {
        return Err(Error::Compare("times are not strictly increasing".into()));
    }
    Ok(())
}

/// Difference of `Re <sigma_z>` sampled at the times of the finer series,
/// with the coarser series interpolated linearly. Samples that fall inside
/// a gap wider than twice the coarser series' typical spacing are skipped.
pub fn compare(a: &TimeSeries, b: &TimeSeries) -> Result<CompareReport> {
    let (ta, tb) = (a.times(), b.times());
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::Compare("empty series".into()));
    }
    check_monotone(&ta)?;
    check_monotone(&tb)?;
    let (fine, coarse) = if median_spacing(&ta) <= median_spacing(&tb) {
        (a, b)
    } else {
        (b, a)
    };
    let ct = coarse.times();
    let gap = 2.0 * median_spacing(&ct);
    let lo = ta[0].max(tb[0]);
    let hi = ta[ta.len() - 1].min(tb[tb.len() - 1]);
    if lo > hi {
        return Err(Error::Compare("time ranges do not overlap".into()));
    }
    let tol = 1e-9 * hi.abs().max(1.0);
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in &fine.rows {
        if r.t < lo - tol || r.t > hi + tol {
            continue;
        }
        let j = ct.partition_point(|&t| t < r.t - tol);
        let v = if j < ct.len() && (ct[j] - r.t).abs() <= tol {
            coarse.rows[j].sigma_z.re
        } else {
            if j == 0 || j >= ct.len() || ct[j] - ct[j - 1] > gap {
                continue;
            }
            let (t0, t1) = (ct[j - 1], ct[j]);
            let w = (r.t - t0) / (t1 - t0);
            coarse.rows[j - 1].sigma_z.re * (1.0 - w) + coarse.rows[j].sigma_z.re * w
        };
        let d = (r.sigma_z.re - v).abs();
        max = max.max(d);
        sum += d;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Compare("no common samples".into()));
    }
    Ok(CompareReport {
        max_abs_diff: max,
        mean_abs_diff: sum / count as f64,
        samples: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(ts: &[f64], f: impl Fn(f64) -> f64) -> TimeSeries {
        TimeSeries {
            rows: ts
                .iter()
                .map(|&t| Row {
                    t,
                    sigma_z: C64::new(f(t), 0.0),
                    trace: 1.0,
                    method: Method::Quapi,
                })
                .collect(),
        }
    }

    #[test]
    fn every_preset_resolves() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
            assert_eq!(p.dt, 1.0 / 80.0);
        }
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn preset_values() {
        let p = preset("bias-eps05").unwrap();
        assert_eq!(p.system.epsilon, 0.1);
        assert_eq!(p.ohmic.omega_c, 1.0);
        assert_eq!(p.beta, 25.0);
        let p = preset("temp-beta02").unwrap();
        assert_eq!(p.beta, 2.0);
        assert_eq!((p.grid_n, p.dmax), (15, 3));
        assert_eq!(preset("coupling-xi02").unwrap().default_steps(Method::Quapi), 67);
    }

    #[test]
    fn csv_round_trip() {
        let s = series(&[0.0, 0.5, 1.0], |t| t.cos());
        let back = TimeSeries::from_csv(&s.to_csv()).unwrap();
        assert_eq!(back, s);
        assert!(s.to_csv().starts_with(CSV_HEADER));
        assert!(TimeSeries::from_csv("a,b\n").is_err());
    }

    #[test]
    fn compare_identical_is_zero() {
        let s = series(&[0.0, 0.5, 1.0], |t| t * t);
        let r = compare(&s, &s).unwrap();
        assert_eq!(r.max_abs_diff, 0.0);
        assert_eq!(r.samples, 3);
    }

    #[test]
    fn compare_interpolates_coarse_series() {
        let fine = series(&[0.0, 0.25, 0.5, 0.75, 1.0], |t| 2.0 * t);
        let coarse = series(&[0.0, 1.0], |t| 2.0 * t);
        let r = compare(&coarse, &fine).unwrap();
        assert!(r.max_abs_diff < 1e-15);
        assert_eq!(r.samples, 5);
    }

    #[test]
    fn compare_rejects_bad_input() {
        let a = series(&[0.0, 1.0], |t| t);
        let b = series(&[2.0, 3.0], |t| t);
        assert!(matches!(compare(&a, &b), Err(Error::Compare(_))));
        let c = series(&[1.0, 0.5], |t| t);
        assert!(compare(&a, &c).is_err());
    }

    #[test]
    fn config_parsing() {
        let kv = parse_config("# comment\npreset = bias-eps0\n\ndmax=4 # trailing\n").unwrap();
        assert_eq!(
            kv,
            vec![("preset".into(), "bias-eps0".into()), ("dmax".into(), "4".into())]
        );
        assert!(parse_config("novalue\n").is_err());
        let mut o = Overrides::default();
        assert!(o.set("dmax", "4").unwrap());
        assert!(!o.set("preset", "x").unwrap());
        assert!(o.set("dt", "abc").is_err());
    }

    #[test]
    fn rho0_parsing() {
        let r = parse_rho0("0.5, 0.5i, -0.5i, 0.5").unwrap();
        assert_eq!(r.entries[0][1], C64::new(0.0, 0.5));
        assert_eq!(r.entries[1][0], C64::new(0.0, -0.5));
        assert!(parse_rho0("1,0,0").is_err());
    }

    #[test]
    fn brute_series_starts_at_rho0() {
        let p = preset("temp-beta5").unwrap();
        let o = Overrides {
            steps: Some(3),
            memory_steps: Some(3),
            ..Default::default()
        };
        let s = run(&p, Method::Brute, &o).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.rows[0].sigma_z, C64::new(1.0, 0.0));
    }
}
