//! Path segments over the memory window and the simplex lattices their
//! flip times are sampled on.
//!
//! A segment starts in `init`, flips the branches named by `signs` in
//! order, and `times[k]` is the gap before flip `k` (the first gap is
//! measured from the window start).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinsys::{PairState, Spin};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn bit(self) -> usize {
        match self {
            Branch::Plus => 0,
            Branch::Minus => 1,
        }
    }

    pub fn from_bit(b: usize) -> Branch {
        if b & 1 == 0 {
            Branch::Plus
        } else {
            Branch::Minus
        }
    }

    pub fn other(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }

    pub fn apply(self, s: PairState) -> PairState {
        match self {
            Branch::Plus => PairState::new(s.plus.flipped(), s.minus),
            Branch::Minus => PairState::new(s.plus, s.minus.flipped()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSegmentKey {
    pub init: PairState,
    pub signs: Vec<Branch>,
}

impl PathSegmentKey {
    pub fn new(init: PairState, signs: Vec<Branch>) -> Self {
        Self { init, signs }
    }

    pub fn flips(&self) -> usize {
        self.signs.len()
    }

    /// Sign bits with flip `k` in bit `k`, set for [`Branch::Minus`].
    pub fn sign_bits(&self) -> usize {
        self.signs
            .iter()
            .enumerate()
            .fold(0, |acc, (k, b)| acc | (b.bit() << k))
    }

    pub fn from_bits(init: PairState, flips: usize, bits: usize) -> Self {
        Self {
            init,
            signs: (0..flips).map(|k| Branch::from_bit(bits >> k)).collect(),
        }
    }

    /// States after each flip: entry 0 is `init`, entry `k` follows flip `k`.
    pub fn states(&self) -> Vec<PairState> {
        let mut out = Vec::with_capacity(self.signs.len() + 1);
        let mut s = self.init;
        out.push(s);
        for b in &self.signs {
            s = b.apply(s);
            out.push(s);
        }
        out
    }

    /// Branch swap: exchange the initial labels and the sign of every flip.
    pub fn swapped(&self) -> Self {
        Self {
            init: PairState::new(self.init.minus, self.init.plus),
            signs: self.signs.iter().map(|b| b.other()).collect(),
        }
    }
}

/// Gaps between consecutive flips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipTimes(pub Vec<f64>);

impl FlipTimes {
    pub fn validate(&self, memory_time: f64) -> Result<()> {
        if self.0.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("flip gaps must be finite and >= 0".into()));
        }
        let total: f64 = self.0.iter().sum();
        if total > memory_time * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "flip gaps sum to {total}, beyond the window {memory_time}"
            )));
        }
        Ok(())
    }

    /// Absolute flip positions from the window start.
    pub fn positions(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.0
            .iter()
            .map(|t| {
                acc += t;
                acc
            })
            .collect()
    }

    /// Gaps from absolute positions.
    pub fn from_positions(pos: &[f64]) -> Self {
        let mut prev = 0.0;
        FlipTimes(
            pos.iter()
                .map(|&p| {
                    let g = p - prev;
                    prev = p;
                    g
                })
                .collect(),
        )
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub fn final_state(key: &PathSegmentKey) -> PairState {
    key.signs.iter().fold(key.init, |s, b| b.apply(s))
}

/// State at time `t` within the window, with a flip taking effect at its
/// own position.
pub fn evaluate_path(key: &PathSegmentKey, times: &FlipTimes, t: f64) -> Result<PairState> {
    if key.signs.len() != times.0.len() {
        return Err(Error::KeyMismatch(format!(
            "{} signs but {} flip times",
            key.signs.len(),
            times.0.len()
        )));
    }
    let mut s = key.init;
    for (b, p) in key.signs.iter().zip(times.positions()) {
        if p <= t {
            s = b.apply(s);
        } else {
            break;
        }
    }
    Ok(s)
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Published degree-of-freedom count `4 sum_{D<=dmax} 2^D C(N+D, D)`.
pub fn ndof(n: usize, dmax: usize) -> u128 {
    4 * (0..=dmax)
        .map(|d| (1u128 << d) * binomial((n + d) as u64, d as u64))
        .sum::<u128>()
}

/// Entries actually stored: the interior lattice `sum m < N` has
/// `C(N-1+D, D)` points per bank.
pub fn allocated_dof(n: usize, dmax: usize) -> u128 {
    4 * (0..=dmax)
        .map(|d| (1u128 << d) * binomial((n - 1 + d) as u64, d as u64))
        .sum::<u128>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub debpi_dof: u64,
    pub quapi_dof: u64,
    pub ratio: f64,
}

impl MemoryReport {
    pub fn new(n: usize, dmax: usize, memory_steps: usize) -> Self {
        let d = ndof(n, dmax) as u64;
        let q = crate::quapi::quapi_dof(memory_steps) as u64;
        Self {
            debpi_dof: d,
            quapi_dof: q,
            ratio: d as f64 / q as f64,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

/// Lattice points `m in Z_{>=0}^dim` with `sum m <= max_sum`, in
/// lexicographic order.
#[derive(Clone, Debug)]
pub struct SimplexGrid {
    dim: usize,
    max_sum: usize,
    points: Vec<u16>,
    binom: Vec<Vec<usize>>,
}

impl SimplexGrid {
    pub fn new(dim: usize, max_sum: usize) -> Self {
        let top = max_sum + dim + 2;
        let binom = (0..=top)
            .map(|n| (0..=dim + 1).map(|k| binomial(n as u64, k as u64) as usize).collect())
            .collect();
        let mut points = Vec::new();
        let mut cur = vec![0u16; dim];
        fill(&mut points, &mut cur, 0, max_sum);
        Self {
            dim,
            max_sum,
            points,
            binom,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_sum(&self) -> usize {
        self.max_sum
    }

    pub fn len(&self) -> usize {
        self.points.len().checked_div(self.dim).unwrap_or(1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[u16] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Lexicographic rank, or `None` outside the grid.
    pub fn index_of(&self, m: &[u16]) -> Option<usize> {
        if m.len() != self.dim {
            return None;
        }
        let mut rank = 0usize;
        let mut rem = self.max_sum;
        for (k, &v) in m.iter().enumerate() {
            let v = v as usize;
            if v > rem {
                return None;
            }
            let d = self.dim - k - 1;
            // sum_{u<v} C(rem - u + d, d) by the hockey-stick identity
            rank += self.binom[rem + d + 1][d + 1] - self.binom[rem - v + d + 1][d + 1];
            rem -= v;
        }
        Some(rank)
    }
}

fn fill(out: &mut Vec<u16>, cur: &mut Vec<u16>, k: usize, rem: usize) {
    if k == cur.len() {
        out.extend_from_slice(cur);
        return;
    }
    for v in 0..=rem {
        cur[k] = v as u16;
        fill(out, cur, k + 1, rem - v);
    }
}

/// Interior lattice `P_D` for `N` cells per axis: `sum m <= N - 1`.
pub fn enumerate_grid(dim: usize, n: usize) -> Result<SimplexGrid> {
    if n == 0 {
        return Err(Error::InvalidParameter("grid needs N >= 1".into()));
    }
    if n > u16::MAX as usize {
        return Err(Error::InvalidParameter(format!("N = {n} is too large")));
    }
    Ok(SimplexGrid::new(dim, n - 1))
}

/// Weight, in units of `h^D`, of lattice point `m` in the piecewise-linear
/// rule on the simplex `sum x <= n`.
///
/// The closed simplex is a union of Freudenthal cells, and the weight of a
/// vertex is `1 / prod(c!)`, where the `c` are the sizes of the blocks
/// obtained by walking the cyclic sequence `(n - sum m, m_1, .., m_D)`
/// and merging neighbours across zero entries.
pub fn simplex_weight(m: &[u16], n: usize) -> f64 {
    let d = m.len();
    let total: usize = m.iter().map(|&v| v as usize).sum();
    debug_assert!(total <= n);
    let link = |i: usize| -> usize {
        if i == 0 {
            n - total
        } else {
            m[i - 1] as usize
        }
    };
    // Start just after an untied link so every block is contiguous.
    let start = match (0..=d).find(|&i| link(i) != 0) {
        Some(i) => i,
        None => return 1.0,
    };
    let mut w = 1.0;
    let mut block = 0usize;
    for step in 1..=d + 1 {
        let i = (start + step) % (d + 1);
        block += 1;
        if link(i) != 0 {
            w /= factorial(block);
            block = 0;
        }
    }
    w
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Spin state on a given branch of a pair.
pub fn branch_spin(s: PairState, b: Branch) -> Spin {
    match b {
        Branch::Plus => s.plus,
        Branch::Minus => s.minus,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_key() -> (PathSegmentKey, FlipTimes) {
        use Branch::*;
        (
            PathSegmentKey::new(
                PairState::new(Spin::Up, Spin::Down),
                vec![Plus, Minus, Minus, Plus, Minus],
            ),
            FlipTimes(vec![1.0, 0.5, 0.5, 0.5, 1.0]),
        )
    }

    #[test]
    fn example_final_state() {
        let (k, _) = example_key();
        assert_eq!(final_state(&k), PairState::new(Spin::Up, Spin::Up));
    }

    #[test]
    fn example_state_inside_window() {
        let (k, t) = example_key();
        assert_eq!(
            evaluate_path(&k, &t, 2.2).unwrap(),
            PairState::new(Spin::Down, Spin::Down)
        );
        assert_eq!(
            evaluate_path(&k, &t, 0.5).unwrap(),
            PairState::new(Spin::Up, Spin::Down)
        );
        assert_eq!(evaluate_path(&k, &t, 4.0).unwrap(), PairState::new(Spin::Up, Spin::Up));
        assert!(evaluate_path(&k, &FlipTimes(vec![1.0]), 1.0).is_err());
    }

    #[test]
    fn grid_counts() {
        assert_eq!(enumerate_grid(2, 5).unwrap().len(), 15);
        assert_eq!(enumerate_grid(3, 4).unwrap().len(), 20);
        assert_eq!(enumerate_grid(0, 4).unwrap().len(), 1);
        assert!(enumerate_grid(2, 0).is_err());
    }

    #[test]
    fn grid_order_and_rank() {
        let g = enumerate_grid(3, 4).unwrap();
        assert_eq!(g.point(0), &[0, 0, 0]);
        assert_eq!(g.point(1), &[0, 0, 1]);
        assert_eq!(g.point(g.len() - 1), &[3, 0, 0]);
        for (i, p) in g.iter().enumerate() {
            assert_eq!(g.index_of(p), Some(i));
        }
        assert_eq!(g.index_of(&[2, 2, 0]), None);
        assert_eq!(g.index_of(&[1, 1]), None);
    }

    #[test]
    fn dof_counts() {
        assert_eq!(ndof(10, 5), 458_748);
        assert_eq!(ndof(15, 3), 28_420);
        assert_eq!(ndof(8, 8), 17_444_860);
        assert_eq!(allocated_dof(2, 1), 4 * (1 + 2 * 2));
    }

    #[test]
    fn memory_report_json() {
        let r = MemoryReport::new(10, 5, 10);
        assert_eq!(r.quapi_dof, 1_048_576);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["debpi_dof"], 458_748);
        assert_eq!(v["quapi_dof"], 1_048_576);
    }

    #[test]
    fn simplex_weights_low_dimensions() {
        // Trapezoid rule in one dimension.
        assert_eq!(simplex_weight(&[0], 4), 0.5);
        assert_eq!(simplex_weight(&[2], 4), 1.0);
        assert_eq!(simplex_weight(&[4], 4), 0.5);
        // Triangle corners and edges.
        assert!((simplex_weight(&[0, 0], 3) - 1.0 / 6.0).abs() < 1e-15);
        assert!((simplex_weight(&[3, 0], 3) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(simplex_weight(&[1, 0], 3), 0.5);
        assert_eq!(simplex_weight(&[1, 2], 3), 0.5);
        assert_eq!(simplex_weight(&[1, 1], 3), 1.0);
        assert_eq!(simplex_weight(&[], 3), 1.0);
    }

    #[test]
    fn swapped_key_round_trips() {
        let (k, _) = example_key();
        assert_eq!(k.swapped().swapped(), k);
        assert_eq!(PathSegmentKey::from_bits(k.init, 5, k.sign_bits()), k);
    }
}
