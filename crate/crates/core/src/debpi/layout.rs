//! Storage layout of the amplitude banks and the index plans the solver
//! reuses every step.
//!
//! Bank `(D, init, bits)` holds one value per point of the interior lattice
//! `sum m <= N - 1`. Banks of one dimension are contiguous, ordered by
//! `(init.code() << D) | bits`. Values on the far face `sum m = N` are never
//! stored; they are rebuilt from lower banks on demand.

use crate::pathgrid::SimplexGrid;

/// Neighbour of a lattice point along the first coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Nb {
    Grid(u32),
    Face(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Stencil {
    /// Second-order one-sided difference over the next two points.
    Upwind2(Nb, Nb),
    /// Centred difference between an interior point and a face point.
    Central { prev: u32, next: u32 },
    /// First-order fallback where no interior point lies behind.
    Upwind1 { next: u32 },
}

/// A face point equals the bank of dimension `keep` at `target`, times a
/// product of flip weights.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FaceRef {
    pub keep: u8,
    pub target: u32,
}

/// Per-point data for the closure of the top bank, one entry per choice of
/// which two of the last three flips are moved.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ClosurePoint {
    /// Index in the top grid after removing the last flip.
    pub drop_one: u32,
    /// Index in the grid below the top after removing both flips.
    pub drop_two: u32,
    pub w_sigma: f64,
    pub w_end: f64,
}

/// `(earlier, later)` positions of the moved pair within the last three flips.
pub(crate) const PATTERNS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Debug)]
pub struct Layout {
    pub(crate) n: usize,
    pub(crate) dmax: usize,
    pub(crate) grids: Vec<SimplexGrid>,
    pub(crate) faces: Vec<SimplexGrid>,
    pub(crate) base: Vec<usize>,
    pub(crate) total: usize,
    pub(crate) stencils: Vec<Vec<Stencil>>,
    pub(crate) face_refs: Vec<Vec<FaceRef>>,
    pub(crate) prepend: Vec<Vec<u32>>,
    pub(crate) closure: Vec<[ClosurePoint; 3]>,
}

pub(crate) fn remove_bit(bits: usize, i: usize) -> usize {
    (bits & ((1 << i) - 1)) | ((bits >> (i + 1)) << i)
}

impl Layout {
    pub fn new(n: usize, dmax: usize) -> Self {
        let grids: Vec<SimplexGrid> = (0..=dmax).map(|d| SimplexGrid::new(d, n - 1)).collect();
        // Face of dimension D is parametrised by its first D-1 coordinates.
        let faces: Vec<SimplexGrid> = (0..=dmax).map(|d| SimplexGrid::new(d.saturating_sub(1), n)).collect();
        let mut base = Vec::with_capacity(dmax + 1);
        let mut total = 0;
        for (d, g) in grids.iter().enumerate() {
            base.push(total);
            total += (4usize << d) * g.len();
        }
        let mut layout = Self {
            n,
            dmax,
            grids,
            faces,
            base,
            total,
            stencils: Vec::new(),
            face_refs: Vec::new(),
            prepend: Vec::new(),
            closure: Vec::new(),
        };
        layout.stencils = (0..=dmax).map(|d| layout.build_stencils(d)).collect();
        layout.face_refs = (0..=dmax).map(|d| layout.build_face_refs(d)).collect();
        layout.prepend = (0..dmax).map(|d| layout.build_prepend(d)).collect();
        layout.closure = layout.build_closure();
        layout
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn grid(&self, d: usize) -> &SimplexGrid {
        &self.grids[d]
    }

    /// Number of banks of dimension `d`.
    pub fn banks(&self, d: usize) -> usize {
        4 << d
    }

    pub fn bank_index(&self, d: usize, init_code: usize, bits: usize) -> usize {
        (init_code << d) | bits
    }

    /// Start of bank `(d, init, bits)` in the state vector.
    pub fn offset(&self, d: usize, init_code: usize, bits: usize) -> usize {
        self.base[d] + self.bank_index(d, init_code, bits) * self.grids[d].len()
    }

    /// Full coordinates of face point `f` of dimension `d`.
    pub fn face_point(&self, d: usize, f: usize) -> Vec<u16> {
        let mut m = self.faces[d].point(f).to_vec();
        let s: usize = m.iter().map(|&v| v as usize).sum();
        m.push((self.n - s) as u16);
        m
    }

    pub fn face_len(&self, d: usize) -> usize {
        if d == 0 {
            0
        } else {
            self.faces[d].len()
        }
    }

    pub(crate) fn face_index(&self, m: &[u16]) -> u32 {
        self.faces[m.len()].index_of(&m[..m.len() - 1]).expect("face point") as u32
    }

    fn build_stencils(&self, d: usize) -> Vec<Stencil> {
        if d == 0 {
            return vec![];
        }
        let g = &self.grids[d];
        let locate = |m: &[u16]| -> Nb {
            let s: usize = m.iter().map(|&v| v as usize).sum();
            if s < self.n {
                Nb::Grid(g.index_of(m).expect("grid point") as u32)
            } else {
                Nb::Face(self.face_index(m))
            }
        };
        g.iter()
            .map(|m| {
                let s: usize = m.iter().map(|&v| v as usize).sum();
                let mut p1 = m.to_vec();
                p1[0] += 1;
                if s + 2 <= self.n {
                    let mut p2 = p1.clone();
                    p2[0] += 1;
                    Stencil::Upwind2(locate(&p1), locate(&p2))
                } else {
                    let next = self.face_index(&p1);
                    if m[0] > 0 {
                        let mut pm = m.to_vec();
                        pm[0] -= 1;
                        Stencil::Central {
                            prev: g.index_of(&pm).expect("grid point") as u32,
                            next,
                        }
                    } else {
                        Stencil::Upwind1 { next }
                    }
                }
            })
            .collect()
    }

    fn build_face_refs(&self, d: usize) -> Vec<FaceRef> {
        (0..self.face_len(d))
            .map(|f| {
                let m = self.face_point(d, f);
                let last = m.iter().rposition(|&v| v > 0).expect("face point is nonzero");
                FaceRef {
                    keep: last as u8,
                    target: self.grids[last].index_of(&m[..last]).expect("interior point") as u32,
                }
            })
            .collect()
    }

    fn build_prepend(&self, d: usize) -> Vec<u32> {
        let up = &self.grids[d + 1];
        self.grids[d]
            .iter()
            .map(|m| {
                let mut p = Vec::with_capacity(d + 1);
                p.push(0);
                p.extend_from_slice(m);
                up.index_of(&p).expect("grid point") as u32
            })
            .collect()
    }

    fn build_closure(&self) -> Vec<[ClosurePoint; 3]> {
        let dmax = self.dmax;
        if dmax < 2 {
            return vec![];
        }
        let n = self.n as f64;
        self.grids[dmax]
            .iter()
            .map(|m| {
                // Augmented key: a flip at the window start, then `m`.
                let mut pos = Vec::with_capacity(dmax + 1);
                pos.push(0u32);
                let mut acc = 0u32;
                for &v in m {
                    acc += v as u32;
                    pos.push(acc);
                }
                let mut out = [ClosurePoint::default(); 3];
                for (slot, &(a, b)) in PATTERNS.iter().enumerate() {
                    let i_star = dmax - 2 + a;
                    let i0 = dmax - 2 + b;
                    let one: Vec<u32> = pos
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != i0)
                        .map(|(_, &p)| p)
                        .collect();
                    let two: Vec<u32> = pos
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != i0 && *k != i_star)
                        .map(|(_, &p)| p)
                        .collect();
                    let s0 = pos[i0] as f64;
                    let ss = pos[i_star] as f64;
                    out[slot] = ClosurePoint {
                        drop_one: self.grids[dmax].index_of(&gaps(&one)).expect("grid point") as u32,
                        drop_two: self.grids[dmax - 1].index_of(&gaps(&two)).expect("grid point") as u32,
                        w_sigma: (n - s0) / (n - ss),
                        w_end: (s0 - ss) / (n - ss),
                    };
                }
                out
            })
            .collect()
    }
}

fn gaps(pos: &[u32]) -> Vec<u16> {
    let mut prev = 0;
    pos.iter()
        .map(|&p| {
            let g = p - prev;
            prev = p;
            g as u16
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_offsets_are_contiguous() {
        let l = Layout::new(4, 3);
        assert_eq!(l.offset(0, 0, 0), 0);
        assert_eq!(l.offset(1, 0, 0), 4);
        assert_eq!(l.offset(1, 3, 1), 4 + 7 * 4);
        assert_eq!(l.total(), crate::pathgrid::allocated_dof(4, 3) as usize);
    }

    #[test]
    fn each_stencil_touches_the_face_at_most_once() {
        let l = Layout::new(5, 3);
        for d in 1..=3 {
            for (i, s) in l.stencils[d].iter().enumerate() {
                let m = l.grids[d].point(i);
                let sum: usize = m.iter().map(|&v| v as usize).sum();
                let faces = match s {
                    Stencil::Upwind2(a, b) => [a, b].iter().filter(|x| matches!(x, Nb::Face(_))).count(),
                    Stencil::Central { .. } | Stencil::Upwind1 { .. } => 1,
                };
                let want = usize::from(sum + 2 >= 5);
                assert_eq!(faces, want, "d {d} point {m:?}");
            }
        }
    }

    #[test]
    fn face_refs_drop_trailing_zeros() {
        let l = Layout::new(4, 3);
        for f in 0..l.face_len(3) {
            let m = l.face_point(3, f);
            let r = l.face_refs[3][f];
            let keep = r.keep as usize;
            assert!(m[keep] > 0);
            assert!(m[keep + 1..].iter().all(|&v| v == 0));
            assert_eq!(l.grids[keep].point(r.target as usize), &m[..keep]);
        }
    }

    #[test]
    fn remove_bit_shifts_higher_bits() {
        assert_eq!(remove_bit(0b1011, 1), 0b101);
        assert_eq!(remove_bit(0b1011, 0), 0b101);
        assert_eq!(remove_bit(0b1011, 3), 0b011);
    }
}
