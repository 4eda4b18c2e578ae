//! Iterative quasi-adiabatic path integral with finite memory, plus an
//! exhaustive path sum used as its reference for short horizons.
//!
//! A table entry is keyed by the last `memory_steps` pair states. Keys pack
//! two bits per [`PairState`] with the newest state in the lowest bits.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::bath::EtaTable;
use crate::error::{Error, Result};
use crate::spinsys::{short_time_propagator, DensityMatrix, Direction, PairState, Propagator, SystemParams};

/// Default ceiling on the bytes of a single path table (2 GiB).
pub const DEFAULT_TABLE_BUDGET: u128 = 2 << 30;

/// Paths enumerated by [`brute_force_density`] are capped at `4^12`.
pub const BRUTE_FORCE_MAX_POINTS: usize = 12;

#[derive(Clone, Debug)]
pub struct QuapiConfig {
    pub dt: f64,
    pub memory_steps: usize,
    pub system: SystemParams,
    pub eta: EtaTable,
    pub rho0: DensityMatrix,
    pub budget_bytes: u128,
}

impl QuapiConfig {
    pub fn new(system: SystemParams, eta: EtaTable, memory_steps: usize, rho0: DensityMatrix) -> Result<Self> {
        let cfg = Self {
            dt: eta.dt,
            memory_steps,
            system,
            eta,
            rho0,
            budget_bytes: DEFAULT_TABLE_BUDGET,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.memory_steps == 0 {
            return Err(Error::InvalidParameter("memory length must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if self.eta.max_lag() < self.memory_steps {
            return Err(Error::LagOutOfRange {
                lag: self.memory_steps,
                max_lag: self.eta.max_lag(),
            });
        }
        Ok(())
    }
}

/// Number of entries in a table with memory length `dk`.
pub fn quapi_dof(dk: usize) -> u128 {
    1u128 << (2 * dk)
}

fn table_bytes(dk: usize) -> u128 {
    quapi_dof(dk) * std::mem::size_of::<C64>() as u128
}

/// Factor `I(S_j, S_j')` for every lag and pair code, with the bare
/// propagators folded into lag 1.
#[derive(Clone, Debug)]
struct FactorTable {
    f: Vec<[[C64; 4]; 4]>,
}

impl FactorTable {
    fn new(cfg: &QuapiConfig, max_lag: usize) -> Result<Self> {
        let fwd = short_time_propagator(&cfg.system, cfg.dt, Direction::Forward)?;
        let bwd = short_time_propagator(&cfg.system, cfg.dt, Direction::Backward)?;
        let mut f = Vec::with_capacity(max_lag + 1);
        for lag in 0..=max_lag {
            let mut t = [[C64::new(0.0, 0.0); 4]; 4];
            for a in PairState::all() {
                for b in PairState::all() {
                    t[a.code()][b.code()] = factor(cfg.eta.get(lag)?, &fwd, &bwd, a, b, lag);
                }
            }
            f.push(t);
        }
        Ok(Self { f })
    }

    #[inline]
    fn get(&self, lag: usize, later: usize, earlier: usize) -> C64 {
        self.f[lag][later][earlier]
    }
}

fn factor(eta: C64, fwd: &Propagator, bwd: &Propagator, sj: PairState, sk: PairState, lag: usize) -> C64 {
    let expo = -sj.difference() * (eta * sk.plus.value() - eta.conj() * sk.minus.value());
    let mut v = expo.exp();
    if lag == 1 {
        v *= fwd.element(sj.plus, sk.plus) * bwd.element(sk.minus, sj.minus);
    }
    v
}

/// `I(S_j, S_j')` for `S_j` later than `S_j'` by `lag` steps.
pub fn influence_factor(cfg: &QuapiConfig, sj: PairState, sjp: PairState, lag: usize) -> Result<C64> {
    let fwd = short_time_propagator(&cfg.system, cfg.dt, Direction::Forward)?;
    let bwd = short_time_propagator(&cfg.system, cfg.dt, Direction::Backward)?;
    Ok(factor(cfg.eta.get(lag)?, &fwd, &bwd, sj, sjp, lag))
}

/// Amplitudes over the most recent `memory_steps` pair states.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTable {
    pub memory_steps: usize,
    /// Number of propagation steps applied since the initial table.
    pub step: usize,
    pub values: Vec<C64>,
}

impl PathTable {
    /// Entry for the states listed newest first.
    pub fn get(&self, newest_first: &[PairState]) -> Result<C64> {
        if newest_first.len() != self.memory_steps {
            return Err(Error::KeyMismatch(format!(
                "expected {} states, got {}",
                self.memory_steps,
                newest_first.len()
            )));
        }
        Ok(self.values[pack(newest_first)])
    }
}

fn pack(newest_first: &[PairState]) -> usize {
    newest_first
        .iter()
        .enumerate()
        .fold(0, |k, (i, s)| k | (s.code() << (2 * i)))
}

#[inline]
fn digit(key: usize, i: usize) -> usize {
    (key >> (2 * i)) & 3
}

fn check_budget(cfg: &QuapiConfig, dk: usize) -> Result<()> {
    let bytes = table_bytes(dk);
    if dk >= 60 || bytes > cfg.budget_bytes {
        return Err(Error::MemoryBudget {
            memory_steps: dk,
            bytes,
            budget: cfg.budget_bytes,
        });
    }
    Ok(())
}

fn initial_table(cfg: &QuapiConfig, points: usize, factors: &FactorTable) -> Result<PathTable> {
    check_budget(cfg, points)?;
    let rho0 = cfg.rho0;
    let values: Vec<C64> = (0..1usize << (2 * points))
        .into_par_iter()
        .map(|key| {
            // Digit i holds S_{points-1-i}.
            let oldest = PairState::from_code(digit(key, points - 1));
            let mut v = rho0.at(oldest);
            if v == C64::new(0.0, 0.0) {
                return v;
            }
            for k1 in 0..points {
                let a = digit(key, points - 1 - k1);
                for k2 in 0..=k1 {
                    v *= factors.get(k1 - k2, a, digit(key, points - 1 - k2));
                }
            }
            v
        })
        .collect();
    Ok(PathTable {
        memory_steps: points,
        step: 0,
        values,
    })
}

/// Table over the first `memory_steps` points, `S_0 .. S_{dk-1}`.
pub fn init_a0(cfg: &QuapiConfig) -> Result<PathTable> {
    cfg.validate()?;
    let factors = FactorTable::new(cfg, cfg.memory_steps)?;
    initial_table(cfg, cfg.memory_steps, &factors)
}

/// Advance by one step, summing out the oldest state.
pub fn quapi_step(cfg: &QuapiConfig, table: &PathTable) -> Result<PathTable> {
    cfg.validate()?;
    let factors = FactorTable::new(cfg, cfg.memory_steps)?;
    Ok(step_with(&factors, table))
}

fn step_with(factors: &FactorTable, table: &PathTable) -> PathTable {
    let dk = table.memory_steps;
    let src = &table.values;
    let shift = 2 * (dk - 1);
    let values: Vec<C64> = (0..src.len())
        .into_par_iter()
        .map(|dest| {
            let newest = dest & 3;
            let mut lam = C64::new(1.0, 0.0);
            for m in 0..dk {
                lam *= factors.get(m, newest, digit(dest, m));
            }
            let base = dest >> 2;
            let mut acc = C64::new(0.0, 0.0);
            for old in 0..4 {
                acc += factors.get(dk, newest, old) * src[base | (old << shift)];
            }
            lam * acc
        })
        .collect();
    PathTable {
        memory_steps: dk,
        step: table.step + 1,
        values,
    }
}

/// Reduced density at the newest point of the table.
pub fn reduced_density(table: &PathTable) -> DensityMatrix {
    let mut sums = [C64::new(0.0, 0.0); 4];
    for (key, v) in table.values.iter().enumerate() {
        sums[key & 3] += *v;
    }
    let mut rho = DensityMatrix::zero();
    for s in PairState::all() {
        rho.add_to(s, sums[s.code()]);
    }
    rho
}

/// Densities at `n dt` for `n = 0..=total_steps`. Points before the memory
/// fills are taken from shorter exact tables.
pub fn run_series(cfg: &QuapiConfig, total_steps: usize) -> Result<Vec<(f64, DensityMatrix)>> {
    cfg.validate()?;
    let dk = cfg.memory_steps;
    check_budget(cfg, dk)?;
    let factors = FactorTable::new(cfg, dk)?;
    let mut out = Vec::with_capacity(total_steps + 1);
    for n in 0..=total_steps.min(dk - 1) {
        let t = initial_table(cfg, n + 1, &factors)?;
        out.push((n as f64 * cfg.dt, reduced_density(&t)));
    }
    if total_steps >= dk {
        let mut table = initial_table(cfg, dk, &factors)?;
        for n in dk..=total_steps {
            table = step_with(&factors, &table);
            out.push((n as f64 * cfg.dt, reduced_density(&table)));
        }
    }
    Ok(out)
}

/// Exhaustive sum over all pair-state paths `S_0 .. S_n` with the full,
/// untruncated influence functional.
pub fn brute_force_density(cfg: &QuapiConfig, n_steps: usize) -> Result<DensityMatrix> {
    let points = n_steps + 1;
    if points > BRUTE_FORCE_MAX_POINTS {
        return Err(Error::TooManyPaths {
            paths: 1u128 << (2 * points),
            limit: 1u128 << (2 * BRUTE_FORCE_MAX_POINTS),
        });
    }
    if cfg.eta.max_lag() < n_steps {
        return Err(Error::LagOutOfRange {
            lag: n_steps,
            max_lag: cfg.eta.max_lag(),
        });
    }
    let fwd = short_time_propagator(&cfg.system, cfg.dt, Direction::Forward)?;
    let bwd = short_time_propagator(&cfg.system, cfg.dt, Direction::Backward)?;
    let eta: Vec<C64> = (0..=n_steps).map(|l| cfg.eta.get(l)).collect::<Result<_>>()?;
    let mut rho = DensityMatrix::zero();
    let mut path = vec![PairState::from_code(0); points];
    for idx in 0..1usize << (2 * points) {
        for (j, s) in path.iter_mut().enumerate() {
            *s = PairState::from_code(digit(idx, j));
        }
        let mut amp = cfg.rho0.at(path[0]);
        if amp == C64::new(0.0, 0.0) {
            continue;
        }
        for j in 1..points {
            amp *= fwd.element(path[j].plus, path[j - 1].plus) * bwd.element(path[j - 1].minus, path[j].minus);
        }
        let mut phase = C64::new(0.0, 0.0);
        for j1 in 0..points {
            let d = path[j1].plus.value() - path[j1].minus.value();
            if d == 0.0 {
                continue;
            }
            for j2 in 0..=j1 {
                let e = eta[j1 - j2];
                phase += (e * path[j2].plus.value() - e.conj() * path[j2].minus.value()) * d;
            }
        }
        rho.add_to(path[n_steps], amp * (-phase).exp());
    }
    Ok(rho)
}
