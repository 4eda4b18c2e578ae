//! PDE formulation of the path integral over a sliding memory window.
//!
//! For every number of flips `D <= dmax`, initial pair state and sequence
//! of flip branches there is a bank of amplitudes `A(t, tau)` sampled on
//! the lattice of flip gaps. Banks are advected toward smaller first gap,
//! damped by the rate `W`, and fed by banks with one extra flip at the
//! window start. Banks with `dmax + 1` flips are not stored; their values
//! are estimated from the two banks below by moving a flip.
//!
//! The bank values at solver time `t` describe paths on `[t, t + T]`, so
//! the assembled density belongs to physical time `t + T`.

mod functional;
mod layout;

use std::sync::Mutex;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{BathResponse, DiscreteBath, LatticeKernel};
use crate::error::{Error, Result};
use crate::pathgrid::{simplex_weight, Branch, FlipTimes, PathSegmentKey};
use crate::spinsys::{DensityMatrix, PairState, SystemParams};

use functional::{decay_rate, double_flip_factor, flip_factor, PathView};
pub use layout::Layout;
use layout::{remove_bit, Nb, Stencil, PATTERNS};

/// Default ceiling on solver memory (4 GiB).
pub const DEFAULT_MEMORY_BUDGET: u128 = 4 << 30;

const LATTICE_TOL: f64 = 1e-9;

/// How the flip-time integrals of the density are discretised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Quadrature {
    /// Weight `h^D` on every stored lattice point.
    Rectangle,
    /// Piecewise-linear rule on the closed simplex, face values included.
    #[default]
    Simplex,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Memory window `T`.
    pub memory_time: f64,
    /// Cells per lattice axis; the lattice spacing is `T / N`.
    pub grid_n: usize,
    pub dmax: usize,
    pub dt: f64,
    pub system: SystemParams,
    pub bath: DiscreteBath,
    pub beta: f64,
    pub rho0: DensityMatrix,
    pub quadrature: Quadrature,
    pub memory_budget: u128,
}

impl SolverConfig {
    pub fn spacing(&self) -> f64 {
        self.memory_time / self.grid_n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.memory_time > 0.0 && self.memory_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "memory time {} must be > 0",
                self.memory_time
            )));
        }
        if self.grid_n == 0 || self.grid_n > 4096 {
            return Err(Error::InvalidParameter(format!(
                "grid N = {} out of range",
                self.grid_n
            )));
        }
        if self.dmax < 2 {
            return Err(Error::InvalidParameter(format!("dmax = {} must be >= 2", self.dmax)));
        }
        if self.dmax > 20 {
            return Err(Error::InvalidParameter(format!("dmax = {} is too large", self.dmax)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if self.dt > self.spacing() * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds the lattice spacing {}",
                self.dt,
                self.spacing()
            )));
        }
        let bytes = estimated_bytes(self.grid_n, self.dmax);
        if bytes > self.memory_budget {
            return Err(Error::InvalidParameter(format!(
                "solver needs about {bytes} bytes, budget is {}",
                self.memory_budget
            )));
        }
        Ok(())
    }
}

/// Rough peak memory: state, rate cache and three work arrays.
pub fn estimated_bytes(n: usize, dmax: usize) -> u128 {
    crate::pathgrid::allocated_dof(n, dmax) * 16 * 6
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    /// Solver time; the window covers `[t, t + T]`.
    pub t: f64,
    pub values: Vec<C64>,
}

impl SolverState {
    /// Physical time the assembled density refers to.
    pub fn physical_time(&self, solver: &Solver) -> f64 {
        self.t + solver.cfg.memory_time
    }
}

#[derive(Clone, Copy, Debug)]
struct Bank {
    init: PairState,
    bits: usize,
}

#[derive(Clone, Copy, Debug)]
struct ClosureBank {
    pattern: usize,
    off_one: usize,
    off_two: usize,
    f_sigma: C64,
    f_end: C64,
}

/// Precomputed layout, rates and coupling tables for one configuration.
pub struct Solver {
    cfg: SolverConfig,
    layout: Layout,
    response: BathResponse,
    kernel: LatticeKernel,
    /// Suffix products of flip weights, `(D + 1)` per bank.
    face_factors: Vec<Vec<C64>>,
    /// Offsets of the two feeding banks (minus-branch, plus-branch) per bank below the top.
    feeders: Vec<Vec<(usize, usize)>>,
    closure_banks: Vec<[ClosureBank; 2]>,
    rates: Vec<C64>,
    scratch: Mutex<Vec<Vec<C64>>>,
}

fn bank_of(d: usize, bank: usize) -> Bank {
    Bank {
        init: PairState::from_code(bank >> d),
        bits: bank & ((1 << d) - 1),
    }
}

fn lattice_positions(m: &[u16], h: f64, out: &mut Vec<f64>) {
    out.clear();
    let mut acc = 0u32;
    for &v in m {
        acc += v as u32;
        out.push(acc as f64 * h);
    }
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg.grid_n, cfg.dmax);
        let response = BathResponse::new(&cfg.bath, cfg.beta)?;
        let kernel = LatticeKernel::new(&response, cfg.spacing(), cfg.grid_n);
        let mut s = Self {
            cfg,
            layout,
            response,
            kernel,
            face_factors: Vec::new(),
            feeders: Vec::new(),
            closure_banks: Vec::new(),
            rates: Vec::new(),
            scratch: Mutex::new(Vec::new()),
        };
        s.face_factors = (0..=s.cfg.dmax).map(|d| s.build_face_factors(d)).collect();
        s.feeders = (0..s.cfg.dmax).map(|d| s.build_feeders(d)).collect();
        s.closure_banks = s.build_closure_banks();
        s.rates = s.build_rates();
        Ok(s)
    }

    /// Work array of the state's length, reused across steps.
    fn take_buffer(&self, from: &[C64]) -> Vec<C64> {
        let mut v = self.scratch.lock().expect("scratch pool").pop().unwrap_or_default();
        v.clear();
        v.extend_from_slice(from);
        v
    }

    fn give_buffer(&self, v: Vec<C64>) {
        self.scratch.lock().expect("scratch pool").push(v);
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn build_face_factors(&self, d: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.layout.banks(d) * (d + 1));
        for bank in 0..self.layout.banks(d) {
            let b = bank_of(d, bank);
            let key = PathSegmentKey::from_bits(b.init, d, b.bits);
            let states = key.states();
            let mut suffix = vec![C64::new(1.0, 0.0); d + 1];
            for j in (0..d).rev() {
                suffix[j] = suffix[j + 1] * flip_factor(&self.cfg.system, states[j], key.signs[j]);
            }
            out.extend(suffix);
        }
        out
    }

    fn build_feeders(&self, d: usize) -> Vec<(usize, usize)> {
        (0..self.layout.banks(d))
            .map(|bank| {
                let b = bank_of(d, bank);
                let minus_init = PairState::new(b.init.plus, b.init.minus.flipped());
                let plus_init = PairState::new(b.init.plus.flipped(), b.init.minus);
                (
                    self.layout.offset(d + 1, minus_init.code(), (b.bits << 1) | 1),
                    self.layout.offset(d + 1, plus_init.code(), b.bits << 1),
                )
            })
            .collect()
    }

    fn build_closure_banks(&self) -> Vec<[ClosureBank; 2]> {
        let dmax = self.cfg.dmax;
        (0..self.layout.banks(dmax))
            .map(|bank| {
                let b = bank_of(dmax, bank);
                let mk = |aug: Branch| -> ClosureBank {
                    let init = match aug {
                        Branch::Minus => PairState::new(b.init.plus, b.init.minus.flipped()),
                        Branch::Plus => PairState::new(b.init.plus.flipped(), b.init.minus),
                    };
                    let bits = (b.bits << 1) | aug.bit();
                    let key = PathSegmentKey::from_bits(init, dmax + 1, bits);
                    let (branch, i_star, i0) = closure_pair(&key.signs);
                    let pattern = PATTERNS
                        .iter()
                        .position(|&(a, c)| (dmax - 2 + a, dmax - 2 + c) == (i_star, i0))
                        .expect("pattern");
                    let one = remove_bit(bits, i0);
                    let two = remove_bit(one, i_star);
                    let rf = crate::pathgrid::final_state(&key);
                    ClosureBank {
                        pattern,
                        off_one: self.layout.offset(dmax, init.code(), one),
                        off_two: self.layout.offset(dmax - 1, init.code(), two),
                        f_sigma: double_flip_factor(&self.cfg.system),
                        f_end: end_flip_factor(&self.cfg.system, rf, branch),
                    }
                };
                [mk(Branch::Minus), mk(Branch::Plus)]
            })
            .collect()
    }

    fn build_rates(&self) -> Vec<C64> {
        let mut rates = vec![C64::new(0.0, 0.0); self.layout.total];
        let h = self.cfg.spacing();
        let window = self.cfg.memory_time;
        for d in 0..=self.cfg.dmax {
            let len = self.layout.grids[d].len();
            let block = &mut rates[self.layout.base[d]..self.layout.base[d] + self.layout.banks(d) * len];
            block.par_chunks_mut(len).enumerate().for_each(|(bank, out)| {
                let b = bank_of(d, bank);
                let mut pos = Vec::with_capacity(d);
                for (i, m) in self.layout.grids[d].iter().enumerate() {
                    lattice_positions(m, h, &mut pos);
                    let path = PathView {
                        init: b.init,
                        bits: b.bits,
                        pos: &pos,
                    };
                    out[i] = decay_rate(&self.kernel, &self.cfg.system, path, window);
                }
            });
        }
        rates
    }

    /// Bank values at `t = 0` from the closed-form path amplitude.
    pub fn initial_state(&self) -> SolverState {
        let mut values = vec![C64::new(0.0, 0.0); self.layout.total];
        let h = self.cfg.spacing();
        let window = self.cfg.memory_time;
        for d in 0..=self.cfg.dmax {
            let len = self.layout.grids[d].len();
            let block = &mut values[self.layout.base[d]..self.layout.base[d] + self.layout.banks(d) * len];
            block.par_chunks_mut(len).enumerate().for_each(|(bank, out)| {
                let b = bank_of(d, bank);
                let mut pos = Vec::with_capacity(d);
                for (i, m) in self.layout.grids[d].iter().enumerate() {
                    lattice_positions(m, h, &mut pos);
                    let path = PathView {
                        init: b.init,
                        bits: b.bits,
                        pos: &pos,
                    };
                    out[i] =
                        functional::initial_amplitude(&self.kernel, &self.cfg.system, &self.cfg.rho0, path, window);
                }
            });
        }
        SolverState { t: 0.0, values }
    }

    /// Face value of bank `bank` (dimension `d`) at face point `f`.
    #[inline]
    fn face_value(&self, src: &[C64], d: usize, bank: usize, f: usize) -> C64 {
        let r = self.layout.face_refs[d][f];
        let keep = r.keep as usize;
        let init = bank >> d;
        let bits = bank & ((1 << keep) - 1);
        let off = self.layout.offset(keep, init, bits);
        src[off + r.target as usize] * self.face_factors[d][bank * (d + 1) + keep]
    }

    /// One advection update of length `dt / 2` using the solver's own face values.
    pub fn advection_half_step(&self, state: &mut SolverState) {
        self.advect_with(&mut state.values, 0.5 * self.cfg.dt, |src, d, bank, f, _| {
            self.face_value(src, d, bank, f)
        });
    }

    /// Advection update of length `tau` with caller-supplied face values.
    /// The closure receives the snapshot the value should be built from,
    /// the bank dimension and index, the face point and whether the
    /// snapshot is the predicted stage.
    pub fn advect_with<F>(&self, values: &mut Vec<C64>, tau: f64, face: F)
    where
        F: Fn(&[C64], usize, usize, usize, bool) -> C64 + Sync,
    {
        let h = self.cfg.spacing();
        let nu = tau / h;
        let lay = &self.layout;
        let u: &[C64] = values;
        let mut pred = self.take_buffer(u);
        for d in 1..=self.cfg.dmax {
            let len = lay.grids[d].len();
            let base = lay.base[d];
            let stencils = &lay.stencils[d];
            pred[base..base + lay.banks(d) * len]
                .par_chunks_mut(len)
                .enumerate()
                .for_each(|(bank, out)| {
                    let cur = &u[base + bank * len..base + (bank + 1) * len];
                    let at = |nb: Nb| match nb {
                        Nb::Grid(i) => cur[i as usize],
                        Nb::Face(f) => face(u, d, bank, f as usize, false),
                    };
                    for (i, s) in stencils.iter().enumerate() {
                        let ui = cur[i];
                        out[i] = match *s {
                            Stencil::Upwind2(a, b) => ui + (at(a) * 4.0 - ui * 3.0 - at(b)) * (tau / (2.0 * h)),
                            Stencil::Central { prev, next } => {
                                ui + (face(u, d, bank, next as usize, false) - cur[prev as usize]) * (0.5 * nu)
                            }
                            Stencil::Upwind1 { next } => ui + (face(u, d, bank, next as usize, false) - ui) * nu,
                        };
                    }
                });
        }
        let mut next = self.take_buffer(&pred);
        let p: &[C64] = &pred;
        for d in 1..=self.cfg.dmax {
            let len = lay.grids[d].len();
            let base = lay.base[d];
            let stencils = &lay.stencils[d];
            next[base..base + lay.banks(d) * len]
                .par_chunks_mut(len)
                .enumerate()
                .for_each(|(bank, out)| {
                    let cur = &u[base + bank * len..base + (bank + 1) * len];
                    let pc = &p[base + bank * len..base + (bank + 1) * len];
                    let at = |nb: Nb| match nb {
                        Nb::Grid(i) => pc[i as usize],
                        Nb::Face(f) => face(p, d, bank, f as usize, true),
                    };
                    for (i, s) in stencils.iter().enumerate() {
                        out[i] = match *s {
                            Stencil::Upwind2(a, b) => {
                                let lp = (at(a) * 4.0 - pc[i] * 3.0 - at(b)) / (2.0 * h);
                                (cur[i] + pc[i] + lp * tau) * 0.5
                            }
                            Stencil::Central { prev, next } => {
                                let lp = (face(p, d, bank, next as usize, true) - pc[prev as usize]) / (2.0 * h);
                                (cur[i] + pc[i] + lp * tau) * 0.5
                            }
                            Stencil::Upwind1 { next } => {
                                let lp = (face(p, d, bank, next as usize, true) - pc[i]) / h;
                                (cur[i] + pc[i] + lp * tau) * 0.5
                            }
                        };
                    }
                });
        }
        let old = std::mem::replace(values, next);
        self.give_buffer(old);
        self.give_buffer(pred);
    }

    /// Right-hand side of the damping and feeding equations.
    fn source_rhs(&self, u: &[C64], out: &mut [C64]) {
        let lay = &self.layout;
        let dmax = self.cfg.dmax;
        for d in 0..=dmax {
            let len = lay.grids[d].len();
            let base = lay.base[d];
            out[base..base + lay.banks(d) * len]
                .par_chunks_mut(len)
                .enumerate()
                .for_each(|(bank, o)| {
                    let off = base + bank * len;
                    let cur = &u[off..off + len];
                    let w = &self.rates[off..off + len];
                    if d < dmax {
                        let (fm, fp) = self.feeders[d][bank];
                        let pre = &lay.prepend[d];
                        for i in 0..len {
                            let j = pre[i] as usize;
                            o[i] = -w[i] * cur[i] + u[fm + j] + u[fp + j];
                        }
                    } else {
                        let [cm, cp] = self.closure_banks[bank];
                        for i in 0..len {
                            let pts = &lay.closure[i];
                            let mut acc = -w[i] * cur[i];
                            for c in [cm, cp] {
                                let q = pts[c.pattern];
                                acc += c.f_sigma * u[c.off_two + q.drop_two as usize] * q.w_sigma
                                    + c.f_end * u[c.off_one + q.drop_one as usize] * q.w_end;
                            }
                            o[i] = acc;
                        }
                    }
                });
        }
    }

    /// Classical fourth-order Runge-Kutta step of length `dt` for the
    /// damping and feeding terms.
    pub fn source_full_step(&self, state: &mut SolverState) {
        let dt = self.cfg.dt;
        let u = &state.values;
        let mut k = self.take_buffer(u);
        let mut acc = self.take_buffer(u);
        let mut tmp = self.take_buffer(u);
        let stages = [(0.5, 1.0 / 6.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0), (0.0, 1.0 / 6.0)];
        self.source_rhs(u, &mut k);
        for (s, &(next_c, w)) in stages.iter().enumerate() {
            acc.par_iter_mut()
                .zip(k.par_iter())
                .for_each(|(a, kv)| *a += kv * (w * dt));
            if s == 3 {
                break;
            }
            tmp.par_iter_mut()
                .zip(u.par_iter().zip(k.par_iter()))
                .for_each(|(t, (uv, kv))| *t = uv + kv * (next_c * dt));
            self.source_rhs(&tmp, &mut k);
        }
        let old = std::mem::replace(&mut state.values, acc);
        self.give_buffer(old);
        self.give_buffer(k);
        self.give_buffer(tmp);
    }

    /// Strang splitting: half advection, full source, half advection.
    pub fn strang_step(&self, state: &mut SolverState) {
        self.advection_half_step(state);
        self.source_full_step(state);
        self.advection_half_step(state);
        state.t += self.cfg.dt;
    }

    /// Reduced density at physical time `state.t + T`.
    pub fn assemble_density(&self, state: &SolverState) -> DensityMatrix {
        let lay = &self.layout;
        let h = self.cfg.spacing();
        let n = self.cfg.grid_n;
        let mut partial: Vec<(PairState, C64)> = Vec::new();
        for d in 0..=self.cfg.dmax {
            let len = lay.grids[d].len();
            let hd = h.powi(d as i32);
            let grid_w: Vec<f64> = match self.cfg.quadrature {
                Quadrature::Rectangle => vec![hd; len],
                Quadrature::Simplex => lay.grids[d].iter().map(|m| simplex_weight(m, n) * hd).collect(),
            };
            let face_w: Vec<f64> = match self.cfg.quadrature {
                Quadrature::Rectangle => vec![],
                Quadrature::Simplex => (0..lay.face_len(d))
                    .map(|f| simplex_weight(&lay.face_point(d, f), n) * hd)
                    .collect(),
            };
            let sums: Vec<(PairState, C64)> = (0..lay.banks(d))
                .into_par_iter()
                .map(|bank| {
                    let b = bank_of(d, bank);
                    let off = lay.base[d] + bank * len;
                    let mut acc = C64::new(0.0, 0.0);
                    for (i, w) in grid_w.iter().enumerate() {
                        acc += state.values[off + i] * *w;
                    }
                    for (f, w) in face_w.iter().enumerate() {
                        acc += self.face_value(&state.values, d, bank, f) * *w;
                    }
                    let key = PathSegmentKey::from_bits(b.init, d, b.bits);
                    (crate::pathgrid::final_state(&key), acc)
                })
                .collect();
            partial.extend(sums);
        }
        let mut rho = DensityMatrix::zero();
        for (s, v) in partial {
            rho.add_to(s, v);
        }
        rho
    }

    /// Rate `W` for any path, from the exact response.
    pub fn compute_w(&self, key: &PathSegmentKey, times: &FlipTimes) -> Result<C64> {
        times.validate(self.cfg.memory_time)?;
        check_lengths(key, times)?;
        let pos = times.positions();
        Ok(decay_rate(
            &self.response,
            &self.cfg.system,
            view(key, &pos),
            self.cfg.memory_time,
        ))
    }

    /// Amplitude at `t = 0` for any path, from the exact response.
    pub fn initial_amplitude(&self, key: &PathSegmentKey, times: &FlipTimes) -> Result<C64> {
        times.validate(self.cfg.memory_time)?;
        check_lengths(key, times)?;
        let pos = times.positions();
        Ok(functional::initial_amplitude(
            &self.response,
            &self.cfg.system,
            &self.cfg.rho0,
            view(key, &pos),
            self.cfg.memory_time,
        ))
    }

    /// Value of a stored bank anywhere in its closed simplex, by linear
    /// interpolation over the enclosing lattice cell. Face vertices are
    /// rebuilt from lower banks.
    pub fn sample(&self, state: &SolverState, key: &PathSegmentKey, times: &FlipTimes) -> Result<C64> {
        let d = key.flips();
        check_lengths(key, times)?;
        if d > self.cfg.dmax {
            return Err(Error::KeyMismatch(format!("{d} flips exceed dmax = {}", self.cfg.dmax)));
        }
        times.validate(self.cfg.memory_time)?;
        let bank = self.layout.bank_index(d, key.init.code(), key.sign_bits());
        if d == 0 {
            return Ok(state.values[self.layout.offset(0, key.init.code(), 0)]);
        }
        let h = self.cfg.spacing();
        let n = self.cfg.grid_n as i64;
        // Partial sums from the end turn the simplex into an ordered cone.
        let mut y = vec![0.0f64; d];
        let mut acc = 0.0;
        for k in (0..d).rev() {
            acc += times.0[k] / h;
            y[k] = acc;
        }
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0f64; d];
        for k in 0..d {
            let r = y[k].round();
            let (b, f) = if (y[k] - r).abs() < LATTICE_TOL {
                (r as i64, 0.0)
            } else {
                (y[k].floor() as i64, y[k] - y[k].floor())
            };
            base[k] = b;
            frac[k] = f;
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap().then(a.cmp(&b)));
        let mut vertex = base.clone();
        let mut out = C64::new(0.0, 0.0);
        let mut prev = 1.0;
        for step in 0..=d {
            let next_f = if step < d { frac[order[step]] } else { 0.0 };
            let lambda = prev - next_f;
            if lambda > 0.0 {
                out += self.vertex_value(state, d, bank, &vertex, n)? * lambda;
            }
            if step < d {
                vertex[order[step]] += 1;
                prev = next_f;
            }
        }
        Ok(out)
    }

    fn vertex_value(&self, state: &SolverState, d: usize, bank: usize, y: &[i64], n: i64) -> Result<C64> {
        let mut m = Vec::with_capacity(d);
        for k in 0..d {
            let next = if k + 1 < d { y[k + 1] } else { 0 };
            let v = y[k] - next;
            if v < 0 {
                return Err(Error::InvalidParameter("interpolation vertex left the simplex".into()));
            }
            m.push(v as u16);
        }
        let s: i64 = m.iter().map(|&v| v as i64).sum();
        let off = self.layout.base[d] + bank * self.layout.grids[d].len();
        if s < n {
            let i = self.layout.grids[d].index_of(&m).expect("interior point");
            Ok(state.values[off + i])
        } else if s == n {
            let f = self.layout.face_index(&m) as usize;
            Ok(self.face_value(&state.values, d, bank, f))
        } else {
            Err(Error::InvalidParameter("interpolation vertex left the simplex".into()))
        }
    }

    /// Value of a bank when the last nonzero gap puts a flip exactly at the
    /// window end: the flip contributes its weight and the remaining path is
    /// read from the bank with fewer flips.
    pub fn boundary_value(&self, state: &SolverState, key: &PathSegmentKey, times: &FlipTimes) -> Result<C64> {
        check_lengths(key, times)?;
        let t = self.cfg.memory_time;
        let total = times.total();
        if key.flips() == 0 || (total - t).abs() > LATTICE_TOL * t.max(1.0) {
            return Err(Error::NotOnBoundary(format!("gaps sum to {total}, window is {t}")));
        }
        let last = times.0.iter().rposition(|&g| g > 0.0).expect("nonzero gap");
        let states = key.states();
        let mut factor = C64::new(1.0, 0.0);
        for (s, b) in states[last..].iter().zip(&key.signs[last..]) {
            factor *= flip_factor(&self.cfg.system, *s, *b);
        }
        let lower = PathSegmentKey::new(key.init, key.signs[..last].to_vec());
        let lower_times = FlipTimes(times.0[..last].to_vec());
        Ok(self.sample(state, &lower, &lower_times)? * factor)
    }

    /// Two coincident flips on one branch, at indices `k` and `k + 1`,
    /// cancel up to the double-flip weight.
    pub fn collapse_double_flip(
        &self,
        state: &SolverState,
        key: &PathSegmentKey,
        times: &FlipTimes,
        k: usize,
    ) -> Result<C64> {
        let (ck, ct) = collapse_key(key, times, k)?;
        Ok(self.sample(state, &ck, &ct)? * double_flip_factor(&self.cfg.system))
    }

    /// Estimate for a path with `dmax + 1` flips whose first flip sits at
    /// the window start.
    pub fn closure_estimate(&self, state: &SolverState, key: &PathSegmentKey, times: &FlipTimes) -> Result<C64> {
        check_lengths(key, times)?;
        let dmax = self.cfg.dmax;
        if key.flips() != dmax + 1 {
            return Err(Error::KeyMismatch(format!(
                "closure needs {} flips, got {}",
                dmax + 1,
                key.flips()
            )));
        }
        if times.0[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "closure needs a flip at the window start".into(),
            ));
        }
        let (branch, i_star, i0) = closure_pair(&key.signs);
        let pos = times.positions();
        let t = self.cfg.memory_time;
        let (s0, ss) = (pos[i0], pos[i_star]);
        let keep = |skip: &[usize]| -> (PathSegmentKey, FlipTimes) {
            let signs = key
                .signs
                .iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, b)| *b)
                .collect();
            let p: Vec<f64> = pos
                .iter()
                .enumerate()
                .filter(|(k, _)| !skip.contains(k))
                .map(|(_, v)| *v)
                .collect();
            (PathSegmentKey::new(key.init, signs), FlipTimes::from_positions(&p))
        };
        let (k2, t2) = keep(&[i_star, i0]);
        let (k1, t1) = keep(&[i0]);
        let rf = crate::pathgrid::final_state(key);
        let at_sigma = self.sample(state, &k2, &t2)? * double_flip_factor(&self.cfg.system);
        let at_end = self.sample(state, &k1, &t1)? * end_flip_factor(&self.cfg.system, rf, branch);
        Ok(at_sigma * ((t - s0) / (t - ss)) + at_end * ((s0 - ss) / (t - ss)))
    }

    /// Dense evolution: densities at `T + n dt` for `n = 0..=steps`.
    pub fn run(&self, steps: usize) -> Vec<(f64, DensityMatrix)> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(steps + 1);
        out.push((state.physical_time(self), self.assemble_density(&state)));
        for n in 1..=steps {
            self.strang_step(&mut state);
            state.t = n as f64 * self.cfg.dt;
            out.push((state.physical_time(self), self.assemble_density(&state)));
        }
        out
    }
}

fn view<'a>(key: &PathSegmentKey, pos: &'a [f64]) -> PathView<'a> {
    PathView {
        init: key.init,
        bits: key.sign_bits(),
        pos,
    }
}

fn check_lengths(key: &PathSegmentKey, times: &FlipTimes) -> Result<()> {
    if key.flips() != times.0.len() {
        return Err(Error::KeyMismatch(format!(
            "{} signs but {} gaps",
            key.flips(),
            times.0.len()
        )));
    }
    Ok(())
}

/// Weight of a flip placed at the window end that leads into `rf`.
fn end_flip_factor(sys: &SystemParams, rf: PairState, b: Branch) -> C64 {
    flip_factor(sys, b.apply(rf), b)
}

/// Branch with at least two of the last three flips, and the positions of
/// its last two flips.
fn closure_pair(signs: &[Branch]) -> (Branch, usize, usize) {
    let n = signs.len();
    let tail = &signs[n - 3..];
    let minus = tail.iter().filter(|b| **b == Branch::Minus).count();
    let branch = if minus >= 2 { Branch::Minus } else { Branch::Plus };
    let mut hits = (n - 3..n).filter(|&k| signs[k] == branch).rev();
    let i0 = hits.next().expect("two flips");
    let i_star = hits.next().expect("two flips");
    (branch, i_star, i0)
}

/// Key and gaps after removing coincident same-branch flips `k` and `k + 1`.
pub fn collapse_key(key: &PathSegmentKey, times: &FlipTimes, k: usize) -> Result<(PathSegmentKey, FlipTimes)> {
    check_lengths(key, times)?;
    if k + 1 >= key.flips() {
        return Err(Error::KeyMismatch(format!("no flip pair at {k}")));
    }
    if key.signs[k] != key.signs[k + 1] {
        return Err(Error::KeyMismatch(format!(
            "flips {k} and {} act on different branches",
            k + 1
        )));
    }
    if times.0[k + 1] != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "flips {k} and {} are not coincident",
            k + 1
        )));
    }
    let mut signs = key.signs.clone();
    signs.drain(k..k + 2);
    let mut gaps = times.0.clone();
    if k + 2 < gaps.len() {
        gaps[k + 2] += gaps[k];
    }
    gaps.drain(k..k + 2);
    Ok((PathSegmentKey::new(key.init, signs), FlipTimes(gaps)))
}
