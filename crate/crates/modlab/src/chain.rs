//! Integer-coefficient formal sums of cells of one dimension.

use std::collections::BTreeMap;

use crate::grid::{CellId, GridComplex};

/// Sparse integer chain. Cells all share `dim` and live in one complex;
/// zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    pub dim: usize,
    pub coeffs: BTreeMap<CellId, i64>,
}

impl Chain {
    pub fn zero(dim: usize) -> Self {
        Chain {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_cells<I: IntoIterator<Item = (CellId, i64)>>(dim: usize, cells: I) -> Self {
        let mut chain = Chain::zero(dim);
        for (cell, c) in cells {
            chain.add(cell, c);
        }
        chain
    }

    pub fn add(&mut self, cell: CellId, c: i64) {
        debug_assert_eq!(cell.dim(), self.dim);
        let entry = self.coeffs.entry(cell).or_insert(0);
        *entry += c;
        if *entry == 0 {
            self.coeffs.remove(&cell);
        }
    }

    pub fn add_chain(&mut self, other: &Chain, scale: i64) {
        debug_assert_eq!(self.dim, other.dim);
        for (&cell, &c) in &other.coeffs {
            self.add(cell, c * scale);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = &CellId> {
        self.coeffs.keys()
    }
}

/// Signed facet sum of a chain; `boundary(boundary(x))` vanishes for all x.
pub fn boundary(complex: &GridComplex, chain: &Chain) -> Chain {
    let mut out = Chain::zero(chain.dim.saturating_sub(1));
    if chain.dim == 0 {
        return out;
    }
    for (cell, &c) in &chain.coeffs {
        for (facet, sign) in complex.facets(cell) {
            out.add(facet, sign * c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, BoxSpec};
    use proptest::prelude::*;

    #[test]
    fn square_cell_has_four_signed_edges() {
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        let cell = g.cells(2)[5];
        let b = boundary(&g, &Chain::from_cells(2, [(cell, 1)]));
        assert_eq!(b.coeffs.len(), 4);
        let total: i64 = b.coeffs.values().sum();
        assert_eq!(total, 0);
        assert!(b.coeffs.values().all(|&c| c.abs() == 1));
    }

    #[test]
    fn sum_of_top_cells_bounds_on_dq() {
        let g = build_grid(&BoxSpec::unit(3, 1, 2)).unwrap();
        let all = Chain::from_cells(3, g.cells(3).into_iter().map(|c| (c, 1)));
        let b = boundary(&g, &all);
        for cell in b.support() {
            assert!(g.in_subcomplex_a(cell) || g.in_subcomplex_b(cell));
        }
        // Every boundary face appears exactly once.
        let boundary_faces = g
            .cells(2)
            .into_iter()
            .filter(|c| g.boundary_tag(c).is_some())
            .count();
        assert_eq!(b.coeffs.len(), boundary_faces);
    }

    #[test]
    fn empty_chain_boundary_is_empty() {
        let g = build_grid(&BoxSpec::unit(2, 1, 2)).unwrap();
        assert!(boundary(&g, &Chain::zero(2)).is_zero());
    }

    proptest! {
        #[test]
        fn boundary_of_boundary_vanishes(seed in 0u64..500, dim in 1usize..=3) {
            let g = build_grid(&BoxSpec::unit(3, 1, 2)).unwrap();
            let cells = g.cells(dim);
            let mut chain = Chain::zero(dim);
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            for _ in 0..6 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let idx = (state >> 33) as usize % cells.len();
                let coeff = ((state >> 11) % 5) as i64 - 2;
                chain.add(cells[idx], coeff);
            }
            let bb = boundary(&g, &boundary(&g, &chain));
            prop_assert!(bb.is_zero());
        }
    }
}
