//! Two-level system: spin labels, the bare Hamiltonian and its short-time
//! propagators, and a 2x2 reduced density matrix.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenstate label of `sigma_z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const ALL: [Spin; 2] = [Spin::Up, Spin::Down];

    /// Eigenvalue of `sigma_z`: +1 or -1.
    pub fn value(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    /// Matrix index: `Up` is row 0.
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    pub fn from_index(i: usize) -> Spin {
        if i == 0 {
            Spin::Up
        } else {
            Spin::Down
        }
    }

    pub fn from_value(v: i32) -> Result<Spin> {
        match v {
            1 => Ok(Spin::Up),
            -1 => Ok(Spin::Down),
            _ => Err(Error::InvalidParameter(format!("spin value {v} is not +1 or -1"))),
        }
    }
}

/// Forward-branch and backward-branch spin labels at one time point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairState {
    pub plus: Spin,
    pub minus: Spin,
}

impl PairState {
    pub fn new(plus: Spin, minus: Spin) -> Self {
        Self { plus, minus }
    }

    /// Two-bit code, `2 * plus.index() + minus.index()`.
    pub fn code(self) -> usize {
        2 * self.plus.index() + self.minus.index()
    }

    pub fn from_code(code: usize) -> Self {
        Self {
            plus: Spin::from_index((code >> 1) & 1),
            minus: Spin::from_index(code & 1),
        }
    }

    pub fn all() -> impl Iterator<Item = PairState> {
        (0..4).map(PairState::from_code)
    }

    pub fn is_diagonal(self) -> bool {
        self.plus == self.minus
    }

    /// `s+ - s-` as a real number.
    pub fn difference(self) -> f64 {
        self.plus.value() - self.minus.value()
    }
}

/// Parameters of `H0 = epsilon * sigma_z + delta * sigma_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl SystemParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidParameter("epsilon and delta must be finite".into()));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Matrix element `<bra|H0|ket>`. Always real for this Hamiltonian.
pub fn h0_element(p: &SystemParams, bra: Spin, ket: Spin) -> f64 {
    if bra == ket {
        p.epsilon * bra.value()
    } else {
        p.delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `exp(-i H0 dt)`
    Forward,
    /// `exp(+i H0 dt)`
    Backward,
}

/// A 2x2 unitary indexed by [`Spin`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Propagator {
    m: [[C64; 2]; 2],
}

impl Propagator {
    pub fn element(&self, bra: Spin, ket: Spin) -> C64 {
        self.m[bra.index()][ket.index()]
    }

    pub fn matrix(&self) -> [[C64; 2]; 2] {
        self.m
    }
}

/// Closed form of `exp(-+ i H0 dt)`. With `w = sqrt(eps^2 + delta^2)`,
/// `exp(-i H0 dt) = cos(w dt) I - i sin(w dt) H0 / w`.
pub fn short_time_propagator(p: &SystemParams, dt: f64, dir: Direction) -> Result<Propagator> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    let w = p.epsilon.hypot(p.delta);
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Backward => 1.0,
    };
    let (c, s_over_w) = if w == 0.0 {
        (1.0, 0.0)
    } else {
        ((w * dt).cos(), (w * dt).sin() / w)
    };
    let mut m = [[C64::new(0.0, 0.0); 2]; 2];
    for bra in Spin::ALL {
        for ket in Spin::ALL {
            let diag = if bra == ket { c } else { 0.0 };
            m[bra.index()][ket.index()] = C64::new(diag, sign * s_over_w * h0_element(p, bra, ket));
        }
    }
    Ok(Propagator { m })
}

/// Reduced density matrix, `entries[row][col]` with `Up` as index 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub entries: [[C64; 2]; 2],
}

impl Default for DensityMatrix {
    fn default() -> Self {
        Self::pure_up()
    }
}

impl DensityMatrix {
    pub fn zero() -> Self {
        Self {
            entries: [[C64::new(0.0, 0.0); 2]; 2],
        }
    }

    /// `|+1><+1|`
    pub fn pure_up() -> Self {
        let mut r = Self::zero();
        r.entries[0][0] = C64::new(1.0, 0.0);
        r
    }

    pub fn from_entries(entries: [[C64; 2]; 2]) -> Self {
        Self { entries }
    }

    pub fn get(&self, row: Spin, col: Spin) -> C64 {
        self.entries[row.index()][col.index()]
    }

    pub fn at(&self, s: PairState) -> C64 {
        self.get(s.plus, s.minus)
    }

    pub fn add_to(&mut self, s: PairState, v: C64) {
        self.entries[s.plus.index()][s.minus.index()] += v;
    }

    pub fn trace(&self) -> C64 {
        self.entries[0][0] + self.entries[1][1]
    }

    /// `rho_{++} - rho_{--}`, kept complex so numerical drift stays visible.
    pub fn sigma_z(&self) -> C64 {
        self.entries[0][0] - self.entries[1][1]
    }

    pub fn adjoint(&self) -> Self {
        let e = &self.entries;
        Self {
            entries: [[e[0][0].conj(), e[1][0].conj()], [e[0][1].conj(), e[1][1].conj()]],
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.entries[i][j] - other.entries[i][j]).norm());
            }
        }
        m
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut r = *self;
        for row in r.entries.iter_mut() {
            for v in row.iter_mut() {
                *v *= a;
            }
        }
        r
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut r = *self;
        for i in 0..2 {
            for j in 0..2 {
                r.entries[i][j] += other.entries[i][j];
            }
        }
        r
    }
}
