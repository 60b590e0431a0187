//! Observation grids, the fully/partially neighbored split and the
//! permutation that puts partially neighbored observations first.
//!
//! Observations are always indexed in row-major scan order of their cells.

use crate::error::{Error, Result};
use crate::spectral::Stencil;

const NOT_OBSERVED: usize = usize::MAX;

/// Which cells of an `n1 x n2` rectangle carry an observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMask {
    n1: usize,
    n2: usize,
    observed: Vec<bool>,
    obs_of_cell: Vec<usize>,
    cells: Vec<(usize, usize)>,
}

impl GridMask {
    pub fn new(n1: usize, n2: usize, observed: Vec<bool>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidInput(format!("grid dimensions must be >= 1, got {n1}x{n2}")));
        }
        if observed.len() != n1 * n2 {
            return Err(Error::LengthMismatch {
                expected: n1 * n2,
                got: observed.len(),
            });
        }
        let mut obs_of_cell = vec![NOT_OBSERVED; n1 * n2];
        let mut cells = Vec::new();
        for (k, &o) in observed.iter().enumerate() {
            if o {
                obs_of_cell[k] = cells.len();
                cells.push((k / n2, k % n2));
            }
        }
        if cells.is_empty() {
            return Err(Error::NoObservations);
        }
        Ok(Self {
            n1,
            n2,
            observed,
            obs_of_cell,
            cells,
        })
    }

    pub fn complete(n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, vec![true; n1 * n2])
    }

    /// Mask observed exactly at `cells`. Cells outside the rectangle are rejected.
    pub fn from_cells(n1: usize, n2: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut observed = vec![false; n1 * n2];
        for &(r, c) in cells {
            if r >= n1 || c >= n2 {
                return Err(Error::OutOfGrid {
                    row: r as i64,
                    col: c as i64,
                    n1,
                    n2,
                });
            }
            observed[r * n2 + c] = true;
        }
        Self::new(n1, n2, observed)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn n_obs(&self) -> usize {
        self.cells.len()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.n1 * self.n2
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        row < self.n1 && col < self.n2 && self.observed[row * self.n2 + col]
    }

    /// Observation index of a cell, if observed. Signed so callers can probe
    /// neighbors off the edge.
    pub fn obs_index(&self, row: i64, col: i64) -> Option<usize> {
        if row < 0 || col < 0 || row as usize >= self.n1 || col as usize >= self.n2 {
            return None;
        }
        let k = self.obs_of_cell[row as usize * self.n2 + col as usize];
        (k != NOT_OBSERVED).then_some(k)
    }

    /// Cell coordinates per observation, row-major.
    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn transpose(&self) -> GridMask {
        let mut observed = vec![false; self.n1 * self.n2];
        for &(r, c) in &self.cells {
            observed[c * self.n1 + r] = true;
        }
        GridMask::new(self.n2, self.n1, observed).expect("transpose keeps observations")
    }
}

/// Fully/partially neighbored labels and the block permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionIndex {
    perm: Vec<usize>,
    order: Vec<usize>,
    m_n: usize,
    fully: Vec<bool>,
}

impl PartitionIndex {
    /// Number of partially neighbored observations.
    pub fn m_n(&self) -> usize {
        self.m_n
    }

    pub fn n_obs(&self) -> usize {
        self.order.len()
    }

    pub fn n_fully(&self) -> usize {
        self.order.len() - self.m_n
    }

    /// `perm[obs] = position` in the blocked ordering.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// `order[position] = obs`; inverse of [`perm`](Self::perm).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn is_fully(&self, obs: usize) -> bool {
        self.fully[obs]
    }

    pub fn fully_flags(&self) -> &[bool] {
        &self.fully
    }

    /// Partially neighbored observations, row-major.
    pub fn partial(&self) -> &[usize] {
        &self.order[..self.m_n]
    }

    /// Fully neighbored observations, row-major.
    pub fn full(&self) -> &[usize] {
        &self.order[self.m_n..]
    }

    /// Splits a vector over observations into `(partial, fully)` blocks.
    pub fn split(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if v.len() != self.n_obs() {
            return Err(Error::LengthMismatch {
                expected: self.n_obs(),
                got: v.len(),
            });
        }
        let v1 = self.partial().iter().map(|&i| v[i]).collect();
        let v2 = self.full().iter().map(|&i| v[i]).collect();
        Ok((v1, v2))
    }

    /// Inverse of [`split`](Self::split).
    pub fn merge(&self, v1: &[f64], v2: &[f64]) -> Result<Vec<f64>> {
        if v1.len() != self.m_n {
            return Err(Error::LengthMismatch {
                expected: self.m_n,
                got: v1.len(),
            });
        }
        if v2.len() != self.n_fully() {
            return Err(Error::LengthMismatch {
                expected: self.n_fully(),
                got: v2.len(),
            });
        }
        let mut out = vec![0.0; self.n_obs()];
        for (&i, &x) in self.partial().iter().zip(v1) {
            out[i] = x;
        }
        for (&i, &x) in self.full().iter().zip(v2) {
            out[i] = x;
        }
        Ok(out)
    }

    /// Vector over observations reordered to blocked positions.
    pub fn to_blocked(&self, v: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| v[i]).collect()
    }

    pub fn from_blocked(&self, v: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| v[p]).collect()
    }
}

/// An observation is fully neighbored when every nonzero neighbor lag of the
/// stencil lands on an observed cell of the grid.
pub fn classify(mask: &GridMask, stencil: &Stencil) -> Result<PartitionIndex> {
    if stencil.is_empty() {
        return Err(Error::InvalidStencil("empty stencil".into()));
    }
    if mask.n_obs() == 0 {
        return Err(Error::NoObservations);
    }
    let lags: Vec<_> = stencil.neighbor_lags().collect();
    let fully: Vec<bool> = mask
        .cells()
        .iter()
        .map(|&(r, c)| {
            lags.iter().all(|&(h1, h2)| {
                mask.obs_index(r as i64 + h1 as i64, c as i64 + h2 as i64).is_some()
            })
        })
        .collect();
    let mut order: Vec<usize> = (0..fully.len()).filter(|&i| !fully[i]).collect();
    let m_n = order.len();
    order.extend((0..fully.len()).filter(|&i| fully[i]));
    let mut perm = vec![0; order.len()];
    for (pos, &obs) in order.iter().enumerate() {
        perm[obs] = pos;
    }
    Ok(PartitionIndex {
        perm,
        order,
        m_n,
        fully,
    })
}

/// `(v1, v2) = P v`.
pub fn block_view(index: &PartitionIndex, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    index.split(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{stencil_from_params, ModelParams};
    use proptest::prelude::*;

    fn four_point() -> Stencil {
        stencil_from_params(&ModelParams::latent(1.0, 1.0, 0).unwrap())
    }

    fn thirteen_point() -> Stencil {
        stencil_from_params(&ModelParams::latent(1.0, 0.5, 1).unwrap())
    }

    #[test]
    fn million_cell_grid() {
        let mask = GridMask::complete(1000, 1000).unwrap();
        let idx = classify(&mask, &four_point()).unwrap();
        assert_eq!(idx.m_n(), 3996);
        assert_eq!(idx.n_obs(), 1_000_000);
    }

    #[test]
    fn three_by_three_has_one_interior() {
        let mask = GridMask::complete(3, 3).unwrap();
        let idx = classify(&mask, &four_point()).unwrap();
        assert_eq!(idx.m_n(), 8);
        assert_eq!(idx.full(), &[4]);
    }

    #[test]
    fn missing_center_of_five_by_five() {
        let mut observed = vec![true; 25];
        observed[12] = false;
        let mask = GridMask::new(5, 5, observed).unwrap();
        let idx = classify(&mask, &four_point()).unwrap();
        assert_eq!(idx.n_obs(), 24);
        assert_eq!(idx.m_n(), 20);
        let full_cells: Vec<_> = idx.full().iter().map(|&i| mask.cells()[i]).collect();
        // zero-based (1,1),(1,3),(3,1),(3,3)
        assert_eq!(full_cells, vec![(1, 1), (1, 3), (3, 1), (3, 3)]);

        let values: Vec<f64> = mask.cells().iter().map(|&(r, c)| (r * 5 + c) as f64).collect();
        let (_, v2) = block_view(&idx, &values).unwrap();
        assert_eq!(v2, vec![6.0, 8.0, 16.0, 18.0]);
    }

    #[test]
    fn three_by_three_block_view() {
        let mask = GridMask::complete(3, 3).unwrap();
        let idx = classify(&mask, &four_point()).unwrap();
        let v: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let (v1, v2) = block_view(&idx, &v).unwrap();
        assert_eq!(v1.len(), 8);
        assert_eq!(v2, vec![4.0]);
    }

    #[test]
    fn complete_grid_formula() {
        for n1 in 3..9 {
            for n2 in 3..9 {
                let idx = classify(&GridMask::complete(n1, n2).unwrap(), &four_point()).unwrap();
                assert_eq!(idx.m_n(), 2 * n1 + 2 * n2 - 4);
            }
        }
    }

    #[test]
    fn empty_mask_rejected() {
        assert_eq!(GridMask::new(2, 2, vec![false; 4]), Err(Error::NoObservations));
        assert!(matches!(
            GridMask::from_cells(2, 2, &[(2, 0)]),
            Err(Error::OutOfGrid { .. })
        ));
    }

    #[test]
    fn split_length_mismatch() {
        let mask = GridMask::complete(3, 3).unwrap();
        let idx = classify(&mask, &four_point()).unwrap();
        assert!(matches!(
            idx.split(&[0.0; 8]),
            Err(Error::LengthMismatch { expected: 9, got: 8 })
        ));
    }

    fn mask_strategy() -> impl Strategy<Value = GridMask> {
        (1usize..9, 1usize..9)
            .prop_flat_map(|(n1, n2)| (Just(n1), Just(n2), prop::collection::vec(prop::bool::weighted(0.8), n1 * n2)))
            .prop_filter_map("needs an observation", |(n1, n2, obs)| GridMask::new(n1, n2, obs).ok())
    }

    proptest! {
        #[test]
        fn split_merge_roundtrip(mask in mask_strategy()) {
            let idx = classify(&mask, &thirteen_point()).unwrap();
            let v: Vec<f64> = (0..mask.n_obs()).map(|i| i as f64 * 1.5 - 3.0).collect();
            let (a, b) = idx.split(&v).unwrap();
            prop_assert_eq!(idx.merge(&a, &b).unwrap(), v.clone());
            prop_assert_eq!(idx.from_blocked(&idx.to_blocked(&v)), v);
            for (obs, &pos) in idx.perm().iter().enumerate() {
                prop_assert_eq!(idx.order()[pos], obs);
            }
            prop_assert!(idx.partial().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.full().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(idx.m_n() <= idx.n_obs());
        }

        #[test]
        fn classification_is_transpose_invariant(mask in mask_strategy()) {
            for stencil in [four_point(), thirteen_point()] {
                let a = classify(&mask, &stencil).unwrap();
                let mt = mask.transpose();
                let b = classify(&mt, &stencil.transpose()).unwrap();
                prop_assert_eq!(a.m_n(), b.m_n());
                for (i, &(r, c)) in mask.cells().iter().enumerate() {
                    let j = mt.obs_index(c as i64, r as i64).unwrap();
                    prop_assert_eq!(a.is_fully(i), b.is_fully(j));
                }
            }
        }

        #[test]
        fn removing_a_cell_never_adds_full_neighbors(mask in mask_strategy(), pick in any::<prop::sample::Index>()) {
            prop_assume!(mask.n_obs() > 1);
            let stencil = four_point();
            let before = classify(&mask, &stencil).unwrap();
            let removed = pick.index(mask.n_obs());
            let (rr, rc) = mask.cells()[removed];
            let mut observed = mask.observed().to_vec();
            observed[rr * mask.n2() + rc] = false;
            let after_mask = GridMask::new(mask.n1(), mask.n2(), observed).unwrap();
            let after = classify(&after_mask, &stencil).unwrap();
            for (i, &(r, c)) in mask.cells().iter().enumerate() {
                if i == removed { continue; }
                let j = after_mask.obs_index(r as i64, c as i64).unwrap();
                if !before.is_fully(i) {
                    prop_assert!(!after.is_fully(j));
                }
            }
        }
    }
}
