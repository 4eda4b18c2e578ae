//! Closed-form path functionals on a segment with piecewise-constant
//! branches: the decay rate `W` and the amplitude at the start of the run.

use num_complex::Complex64 as C64;

use crate::bath::ResponseKernel;
use crate::pathgrid::Branch;
use crate::spinsys::{h0_element, DensityMatrix, PairState, SystemParams};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Compact description of a path: flip `k` acts on the branch in bit `k`
/// of `bits` and sits at `pos[k]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PathView<'a> {
    pub init: PairState,
    pub bits: usize,
    pub pos: &'a [f64],
}

impl PathView<'_> {
    fn branch(&self, k: usize) -> Branch {
        Branch::from_bit(self.bits >> k)
    }

    pub fn final_state(&self) -> PairState {
        (0..self.pos.len()).fold(self.init, |s, k| self.branch(k).apply(s))
    }
}

fn diag_energy(sys: &SystemParams, s: PairState) -> f64 {
    h0_element(sys, s.plus, s.plus) - h0_element(sys, s.minus, s.minus)
}

/// Weight of a single flip from `before` along `b`.
pub(crate) fn flip_factor(sys: &SystemParams, before: PairState, b: Branch) -> C64 {
    let after = b.apply(before);
    match b {
        Branch::Plus => -I * h0_element(sys, after.plus, before.plus),
        Branch::Minus => I * h0_element(sys, before.minus, after.minus),
    }
}

/// Two flips on one branch at the same instant.
pub(crate) fn double_flip_factor(sys: &SystemParams) -> C64 {
    use crate::spinsys::Spin::{Down, Up};
    C64::new(-h0_element(sys, Up, Down) * h0_element(sys, Down, Up), 0.0)
}

/// `W(h)`: the bath term integrates `eta` against the path read backwards
/// from the window end; the system term is the diagonal energy difference
/// of the final state.
pub(crate) fn decay_rate<K: ResponseKernel>(k: &K, sys: &SystemParams, path: PathView, window: f64) -> C64 {
    let rf = path.final_state();
    let sys_term = I * diag_energy(sys, rf);
    let d = rf.difference();
    if d == 0.0 {
        return sys_term;
    }
    let mut bath = C64::new(0.0, 0.0);
    let mut s = path.init;
    let mut start = 0.0;
    for idx in 0..=path.pos.len() {
        let end = if idx < path.pos.len() { path.pos[idx] } else { window };
        if end > start {
            let v = k.interval(window - end, window - start);
            bath += v * s.plus.value() - v.conj() * s.minus.value();
        }
        if idx < path.pos.len() {
            s = path.branch(idx).apply(s);
            start = end;
        }
    }
    bath * d + sys_term
}

/// Amplitude of a segment at the start of the run: initial density entry,
/// bare-system phases and flip weights, and the bath double integral.
pub(crate) fn initial_amplitude<K: ResponseKernel>(
    k: &K,
    sys: &SystemParams,
    rho0: &DensityMatrix,
    path: PathView,
    window: f64,
) -> C64 {
    let rho = rho0.at(path.init);
    if rho == C64::new(0.0, 0.0) {
        return rho;
    }
    let nseg = path.pos.len() + 1;
    let mut starts = [0.0f64; 64];
    let mut ends = [0.0f64; 64];
    let mut states = [path.init; 64];
    assert!(nseg <= 64, "too many flips");
    let mut flips = C64::new(1.0, 0.0);
    let mut s = path.init;
    let mut start = 0.0;
    for idx in 0..nseg {
        let end = if idx + 1 < nseg { path.pos[idx] } else { window };
        starts[idx] = start;
        ends[idx] = end;
        states[idx] = s;
        if idx + 1 < nseg {
            let b = path.branch(idx);
            flips *= flip_factor(sys, s, b);
            s = b.apply(s);
            start = end;
        }
    }
    let mut expo = C64::new(0.0, 0.0);
    for i in 0..nseg {
        let len = ends[i] - starts[i];
        expo -= I * (diag_energy(sys, states[i]) * len);
        let d = states[i].difference();
        if d == 0.0 || len <= 0.0 {
            continue;
        }
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..=i {
            let v = if i == j {
                k.f(len)
            } else {
                if ends[j] <= starts[j] {
                    continue;
                }
                k.rectangle(starts[i], ends[i], starts[j], ends[j])
            };
            acc += v * states[j].plus.value() - v.conj() * states[j].minus.value();
        }
        expo -= acc * d;
    }
    rho * flips * expo.exp()
}
