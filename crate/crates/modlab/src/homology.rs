//! Integer cubical relative homology at small sizes, generator
//! verification, intersection parity on the primal/dual grid pair, and the
//! blocking-family membership test.

use std::collections::HashMap;

use thiserror::Error;

use crate::chain::{boundary, Chain};
use crate::grid::{CellId, GridComplex, Tag, TickBox};
use crate::snf::{smith_diagonal, SnfError, SparseInt};

/// Cell-count ceiling for Smith normal form instances.
pub const SNF_CELL_LIMIT: usize = 20_000;

#[derive(Debug, Error)]
pub enum HomologyError {
    #[error("complex with {0} cells exceeds the homology size limit {SNF_CELL_LIMIT}")]
    SizeLimit(usize),
    #[error(transparent)]
    Snf(#[from] SnfError),
    #[error("chain dimensions {0} and {1} are not complementary in dimension {2}")]
    NotComplementary(usize, usize, usize),
    #[error("chain is not positioned on the expected grid")]
    NotDualPosition,
    #[error("blocking candidate intersects the A subcomplex")]
    TouchesA,
}

/// Betti number, torsion coefficients and verified generators of one
/// relative homology group.
#[derive(Debug, Clone)]
pub struct HomologyReport {
    pub dim: usize,
    pub betti: usize,
    pub torsion: Vec<i64>,
    pub generators: Vec<Chain>,
}

fn cell_index(
    complex: &GridComplex,
    dim: usize,
    tag: Option<Tag>,
) -> (Vec<CellId>, HashMap<CellId, usize>) {
    let cells: Vec<CellId> = complex
        .cells(dim)
        .into_iter()
        .filter(|c| match tag {
            Some(t) => !complex.in_subcomplex(c, t),
            None => true,
        })
        .collect();
    let map = cells.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    (cells, map)
}

fn boundary_matrix(
    complex: &GridComplex,
    cols: &[CellId],
    row_index: &HashMap<CellId, usize>,
    nrows: usize,
) -> SparseInt {
    let mut m = SparseInt::new(nrows, cols.len());
    for (j, cell) in cols.iter().enumerate() {
        for (facet, sign) in complex.facets(cell) {
            if let Some(&i) = row_index.get(&facet) {
                let v = m.get(i, j) + sign as i128;
                m.set(i, j, v);
            }
        }
    }
    m
}

/// Betti number and torsion of `H_dim(Q, subcomplex)` over the integers,
/// with a verified generator when the group is the generating-slice case.
pub fn relative_homology(
    complex: &GridComplex,
    tag: Option<Tag>,
    dim: usize,
) -> Result<HomologyReport, HomologyError> {
    let total = complex.total_cell_count();
    if total > SNF_CELL_LIMIT {
        return Err(HomologyError::SizeLimit(total));
    }
    let n = complex.n();
    let (cells_d, _) = cell_index(complex, dim, tag);
    let rank_down = if dim == 0 {
        0
    } else {
        let (_, rows) = cell_index(complex, dim - 1, tag);
        let m = boundary_matrix(complex, &cells_d, &rows, rows.len());
        smith_diagonal(m)?.rank
    };
    let (rank_up, torsion) = if dim == n {
        (0, Vec::new())
    } else {
        let (cells_up, _) = cell_index(complex, dim + 1, tag);
        let rows: HashMap<CellId, usize> =
            cells_d.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let m = boundary_matrix(complex, &cells_up, &rows, cells_d.len());
        let d = smith_diagonal(m)?;
        let torsion = d.torsion().iter().map(|&t| t as i64).collect();
        (d.rank, torsion)
    };
    let betti = cells_d.len() - rank_down - rank_up;

    let mut generators = Vec::new();
    if betti == 1 {
        let candidate = match (tag, dim) {
            (Some(Tag::A), d) if d == complex.k() => Some(center_slab(complex, Tag::A)),
            (Some(Tag::B), d) if d == n - complex.k() => Some(center_slab(complex, Tag::B)),
            (None, 0) => complex
                .cells(0)
                .first()
                .map(|&v| Chain::from_cells(0, [(v, 1)])),
            _ => None,
        };
        if let Some(c) = candidate {
            if is_relative_cycle(complex, &c, tag) {
                generators.push(c);
            }
        }
    }

    Ok(HomologyReport {
        dim,
        betti,
        torsion,
        generators,
    })
}

/// True iff the boundary of `chain` is supported on the tagged subcomplex.
pub fn is_relative_cycle(complex: &GridComplex, chain: &Chain, tag: Option<Tag>) -> bool {
    let b = boundary(complex, chain);
    match tag {
        None => b.is_zero(),
        Some(t) => b.support().all(|c| complex.in_subcomplex(c, t)),
    }
}

/// The straight axis slab through center heights: for side A the k-slab
/// spanning Q1 (a relative cycle mod A), for side B the transverse slab.
pub fn center_slab(complex: &GridComplex, side: Tag) -> Chain {
    let n = complex.n();
    let k = complex.k();
    let (extent_axes, point_axes): (Vec<usize>, Vec<usize>) = match side {
        Tag::A => ((0..k).collect(), (k..n).collect()),
        _ => ((k..n).collect(), (0..k).collect()),
    };
    let cpa = complex.cells_per_axis();
    let mut mask = 0u8;
    for &a in &extent_axes {
        mask |= 1 << a;
    }
    let mut base = [0u16; crate::grid::MAX_DIM];
    for &a in &point_axes {
        // interior breakpoint nearest the middle
        base[a] = ((cpa[a] + 1) / 2) as u16;
    }
    let mut cells = Vec::new();
    let mut idx = vec![0usize; extent_axes.len()];
    'outer: loop {
        let mut coords = base;
        for (pos, &a) in extent_axes.iter().enumerate() {
            coords[a] = idx[pos] as u16;
        }
        cells.push((CellId { mask, coords }, 1));
        let mut pos = 0;
        loop {
            if pos == extent_axes.len() {
                break 'outer;
            }
            idx[pos] += 1;
            if idx[pos] < cpa[extent_axes[pos]] {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
    Chain::from_cells(extent_axes.len(), cells)
}

/// The reference generator of the dual-offset complex: the full clipped
/// transverse slice with point axes on the `side` group, at center offsets.
pub fn dual_reference_chain(dual: &GridComplex, side: Tag) -> Chain {
    assert!(dual.is_dual());
    let n = dual.n();
    let k = dual.k();
    let (point_axes, extent_axes): (Vec<usize>, Vec<usize>) = match side {
        // Reference dual to Gamma_A members: points on Q1 axes.
        Tag::A => ((0..k).collect(), (k..n).collect()),
        _ => ((k..n).collect(), (0..k).collect()),
    };
    let cpa = dual.cells_per_axis();
    let mut mask = 0u8;
    for &a in &extent_axes {
        mask |= 1 << a;
    }
    let mut base = [0u16; crate::grid::MAX_DIM];
    for &a in &point_axes {
        // Interior dual breakpoints are indices 1..=len-2; pick the middle.
        let len = cpa[a] + 1; // breakpoint count
        base[a] = ((len - 1) / 2).clamp(1, len - 2) as u16;
    }
    let mut cells = Vec::new();
    let mut idx = vec![0usize; extent_axes.len()];
    'outer: loop {
        let mut coords = base;
        for (pos, &a) in extent_axes.iter().enumerate() {
            coords[a] = idx[pos] as u16;
        }
        cells.push((CellId { mask, coords }, 1));
        let mut pos = 0;
        loop {
            if pos == extent_axes.len() {
                break 'outer;
            }
            idx[pos] += 1;
            if idx[pos] < cpa[extent_axes[pos]] {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
    Chain::from_cells(extent_axes.len(), cells)
}

/// Parity of the transverse incidence count between a primal `k`-chain and
/// an `(n-k)`-chain on the dual-offset grid. Each primal cell meets at most
/// one complementary dual cell, so the count is a plain sum over odd
/// coefficient pairs.
pub fn intersection_parity(
    primal: &GridComplex,
    dual: &GridComplex,
    sigma_a: &Chain,
    sigma_b: &Chain,
) -> Result<u8, HomologyError> {
    let n = primal.n();
    if sigma_a.dim + sigma_b.dim != n {
        return Err(HomologyError::NotComplementary(
            sigma_a.dim,
            sigma_b.dim,
            n,
        ));
    }
    if !dual.is_dual() || primal.is_dual() {
        return Err(HomologyError::NotDualPosition);
    }
    let odd_a: Vec<TickBox> = sigma_a
        .coeffs
        .iter()
        .filter(|(_, &c)| c % 2 != 0)
        .map(|(cell, _)| {
            if primal.contains(cell) {
                Ok(primal.tick_box(cell))
            } else {
                Err(HomologyError::NotDualPosition)
            }
        })
        .collect::<Result<_, _>>()?;
    let odd_b: Vec<TickBox> = sigma_b
        .coeffs
        .iter()
        .filter(|(_, &c)| c % 2 != 0)
        .map(|(cell, _)| {
            if dual.contains(cell) {
                Ok(dual.tick_box(cell))
            } else {
                Err(HomologyError::NotDualPosition)
            }
        })
        .collect::<Result<_, _>>()?;
    let mut parity = 0u8;
    for a in &odd_a {
        for b in &odd_b {
            if a.crosses(b, n) {
                parity ^= 1;
            }
        }
    }
    Ok(parity)
}

/// GF(2) row basis in echelon form over fixed-width bit rows.
struct Gf2Basis {
    words: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
}

impl Gf2Basis {
    fn new(columns: usize) -> Self {
        Gf2Basis {
            words: columns.div_ceil(64),
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    fn reduce(&self, row: &mut [u64]) {
        for (r, &p) in self.rows.iter().zip(&self.pivots) {
            if row[p / 64] >> (p % 64) & 1 == 1 {
                for w in 0..self.words {
                    row[w] ^= r[w];
                }
            }
        }
    }

    /// Reduce and insert if independent; returns whether the row was new.
    fn insert(&mut self, mut row: Vec<u64>) -> bool {
        self.reduce(&mut row);
        if let Some(p) = first_set_bit(&row) {
            self.rows.push(row);
            self.pivots.push(p);
            true
        } else {
            false
        }
    }

    fn contains(&self, row: &[u64]) -> bool {
        let mut r = row.to_vec();
        self.reduce(&mut r);
        first_set_bit(&r).is_none()
    }
}

fn first_set_bit(row: &[u64]) -> Option<usize> {
    row.iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Blocking-family membership: true iff every relative `k`-cycle mod A of
/// the complement (primal `k`-cells not touching the candidate support)
/// crosses the reference transverse hyperplane with even parity, i.e. the
/// inclusion-induced map on `H_k(Q, A)` is trivial.
///
/// The candidate is a set of closed boxes, typically the dual-aligned faces
/// of an axis member or the faces of a min-weight cut.
pub fn is_in_star_family(
    complex: &GridComplex,
    candidate: &[TickBox],
) -> Result<bool, HomologyError> {
    let total = complex.total_cell_count();
    if total > SNF_CELL_LIMIT {
        return Err(HomologyError::SizeLimit(total));
    }
    let n = complex.n();
    let k = complex.k();
    let max_ticks = complex.max_ticks();
    // Candidate boxes contained in the closed A set are rejected.
    for b in candidate {
        for i in 0..k {
            if b.lo[i] == b.hi[i] && (b.lo[i] == 0 || b.lo[i] == max_ticks[i]) {
                return Err(HomologyError::TouchesA);
            }
        }
    }

    let complement: Vec<CellId> = complex
        .cells(k)
        .into_iter()
        .filter(|c| {
            let cb = complex.tick_box(c);
            !candidate.iter().any(|s| cb.touches(s, n))
        })
        .collect();

    // Crossing indicator with the transverse hyperplane through the center
    // Q1 column: counts cells whose extent axes are exactly the Q1 axes at
    // the reference interval on every Q1 axis.
    let cpa = complex.cells_per_axis();
    let q1_mask: u8 = (0..k).fold(0, |m, i| m | (1 << i));
    let reference: Vec<u16> = (0..k).map(|i| (cpa[i] / 2) as u16).collect();
    let words = complement.len().div_ceil(64);
    let mut w = vec![0u64; words];
    for (j, cell) in complement.iter().enumerate() {
        if cell.mask == q1_mask && (0..k).all(|i| cell.coords[i] == reference[i]) {
            w[j / 64] ^= 1 << (j % 64);
        }
    }

    // Row space of the boundary map restricted to non-A rows: a cycle mod A
    // is exactly a kernel vector, and w kills the kernel iff w lies in the
    // row space. Rows are assembled by scanning complement cell facets.
    let mut rows: HashMap<CellId, Vec<u64>> = HashMap::new();
    for (j, cell) in complement.iter().enumerate() {
        for (facet, _) in complex.facets(cell) {
            if complex.in_subcomplex_a(&facet) {
                continue;
            }
            let row = rows.entry(facet).or_insert_with(|| vec![0u64; words]);
            row[j / 64] ^= 1 << (j % 64);
        }
    }
    let mut basis = Gf2Basis::new(complement.len());
    let mut keys: Vec<&CellId> = rows.keys().collect();
    keys.sort();
    for key in keys {
        basis.insert(rows[key].clone());
    }
    Ok(basis.contains(&w))
}
