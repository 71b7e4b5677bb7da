//! Cubical decomposition of a box `Q = Q1 x Q2` with its boundary split
//! `dQ = A u B`, per-cell Hausdorff measures and an optional smooth
//! coordinate deformation.
//!
//! Geometry is kept exact by working in integer *half-ticks*: the grid has
//! `m` cells per unit length, cell corners sit on even ticks and cell
//! centers on odd ticks, one tick being `1/(2m)` length units. The dual
//! offset complex (cells centered on primal vertices, clipped to `Q`) uses
//! the same machinery with an odd breakpoint pattern.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("ambient dimension n={0} outside supported range 2..=4")]
    BadAmbientDim(usize),
    #[error("slice dimension k={k} invalid for n={n}")]
    BadSliceDim { n: usize, k: usize },
    #[error("side lengths must be positive, got {0}")]
    BadSide(f64),
    #[error("grid resolution m={0} below minimum 2")]
    BadResolution(u32),
    #[error("m*side = {0} is not an integer cell count")]
    NonIntegralCells(f64),
    #[error("deformation jacobian determinant {det:.3e} degenerate at sample point {point:?}")]
    DegenerateJacobian { det: f64, point: Vec<f64> },
    #[error("unknown cell {0:?} for this complex")]
    UnknownCell(CellId),
    #[error("expected {side:?} side lengths for {expect} axes, got {got}")]
    SideCount {
        side: &'static str,
        expect: usize,
        got: usize,
    },
}

/// Built-in bi-Lipschitz coordinate maps with analytic jacobians.
///
/// Every catalog entry is volume preserving (unit jacobian determinant), so
/// top-cell measures stay exact while lower-dimensional measures deform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Deformation {
    #[default]
    Identity,
    /// Shear of the first axis by the last: `x0 -> x0 + s*x_{n-1}`.
    Shear { s: f64 },
    /// Displacement of the first axis by a smooth bump of the transverse
    /// coordinates: `x0 -> x0 + amplitude * prod_l bump(x_l)`.
    RadialBump { amplitude: f64 },
}

fn bump01(t: f64) -> f64 {
    // Smooth bump on (0,1), vanishing at the endpoints.
    let s = 2.0 * t - 1.0;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump01_deriv(t: f64) -> f64 {
    let s = 2.0 * t - 1.0;
    if s.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - s * s;
        (-1.0 / d).exp() * (-2.0 * s / (d * d)) * 2.0
    }
}

impl Deformation {
    pub fn is_identity(&self) -> bool {
        matches!(self, Deformation::Identity)
    }

    /// Image of a point given in length units; `sides` are the full box
    /// extents used to normalize the bump profile.
    pub fn map(&self, x: &[f64], sides: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        match *self {
            Deformation::Identity => {}
            Deformation::Shear { s } => {
                let last = x.len() - 1;
                y[0] += s * x[last];
            }
            Deformation::RadialBump { amplitude } => {
                let mut b = amplitude;
                for l in 1..x.len() {
                    b *= bump01(x[l] / sides[l]);
                }
                y[0] += b;
            }
        }
        y
    }

    /// Jacobian matrix (row-major n x n) at `x`.
    pub fn jacobian(&self, x: &[f64], sides: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut j = vec![0.0; n * n];
        for i in 0..n {
            j[i * n + i] = 1.0;
        }
        match *self {
            Deformation::Identity => {}
            Deformation::Shear { s } => {
                j[n - 1] = s;
            }
            Deformation::RadialBump { amplitude } => {
                for l in 1..n {
                    let mut b = amplitude;
                    for ll in 1..n {
                        if ll == l {
                            b *= bump01_deriv(x[ll] / sides[ll]) / sides[ll];
                        } else {
                            b *= bump01(x[ll] / sides[ll]);
                        }
                    }
                    j[l] = b;
                }
            }
        }
        j
    }
}

/// Geometry of an axis box `Q1 x Q2` together with grid resolution and an
/// optional deformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub n: usize,
    pub k: usize,
    pub side_q1: Vec<f64>,
    pub side_q2: Vec<f64>,
    pub m: u32,
    #[serde(default)]
    pub deformation: Deformation,
}

impl BoxSpec {
    /// Unit cube of dimension `n` with slice dimension `k`.
    pub fn unit(n: usize, k: usize, m: u32) -> Self {
        BoxSpec {
            n,
            k,
            side_q1: vec![1.0; k],
            side_q2: vec![1.0; n - k],
            m,
            deformation: Deformation::Identity,
        }
    }

    pub fn sides(&self) -> Vec<f64> {
        let mut s = self.side_q1.clone();
        s.extend_from_slice(&self.side_q2);
        s
    }

    /// Product of the Q1 side lengths, the `H^k(Q1)` of the formulas.
    pub fn h_q1(&self) -> f64 {
        self.side_q1.iter().product()
    }

    /// Product of the Q2 side lengths, the `H^{n-k}(Q2)` of the formulas.
    pub fn h_q2(&self) -> f64 {
        self.side_q2.iter().product()
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(2..=MAX_DIM).contains(&self.n) {
            return Err(GridError::BadAmbientDim(self.n));
        }
        if self.k == 0 || self.k >= self.n {
            return Err(GridError::BadSliceDim { n: self.n, k: self.k });
        }
        if self.side_q1.len() != self.k {
            return Err(GridError::SideCount {
                side: "side_q1",
                expect: self.k,
                got: self.side_q1.len(),
            });
        }
        if self.side_q2.len() != self.n - self.k {
            return Err(GridError::SideCount {
                side: "side_q2",
                expect: self.n - self.k,
                got: self.side_q2.len(),
            });
        }
        if self.m < 2 {
            return Err(GridError::BadResolution(self.m));
        }
        for &s in self.sides().iter() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(GridError::BadSide(s));
            }
            let cells = s * self.m as f64;
            if (cells - cells.round()).abs() > 1e-9 || cells.round() < 1.0 {
                return Err(GridError::NonIntegralCells(cells));
            }
        }
        self.check_jacobian()?;
        Ok(())
    }

    fn check_jacobian(&self) -> Result<(), GridError> {
        if self.deformation.is_identity() {
            return Ok(());
        }
        let sides = self.sides();
        // Sample a coarse lattice of interior points.
        let samples = 5usize;
        let mut idx = vec![0usize; self.n];
        loop {
            let point: Vec<f64> = (0..self.n)
                .map(|i| sides[i] * (idx[i] as f64 + 0.5) / samples as f64)
                .collect();
            let j = self.deformation.jacobian(&point, &sides);
            let det = det_n(&j, self.n);
            if det.abs() < 1e-6 {
                return Err(GridError::DegenerateJacobian { det, point });
            }
            let mut axis = 0;
            loop {
                if axis == self.n {
                    return Ok(());
                }
                idx[axis] += 1;
                if idx[axis] < samples {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }
}

fn det_n(a: &[f64], n: usize) -> f64 {
    // LU with partial pivoting; n <= 4.
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r * n + col].abs() > m[piv * n + col].abs() {
                piv = r;
            }
        }
        if m[piv * n + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..n {
                m.swap(col * n + c, piv * n + c);
            }
            det = -det;
        }
        det *= m[col * n + col];
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for c in col..n {
                m[r * n + c] -= f * m[col * n + c];
            }
        }
    }
    det
}

/// Boundary piece of `dQ` an `(n-1)`-cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    A,
    B,
    /// Corner set `A n B`; never carried by an `(n-1)`-cell, present for
    /// lower-dimensional subcomplex queries.
    AB,
}

/// Address of a cell: extent-axis bitmask plus per-axis lattice coordinates.
///
/// `coords[i]` indexes a breakpoint interval when bit `i` of `mask` is set
/// and a breakpoint otherwise. Identical `BoxSpec`s rebuild identical ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub mask: u8,
    pub coords: [u16; MAX_DIM],
}

impl CellId {
    pub fn dim(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn extends(&self, axis: usize) -> bool {
        self.mask & (1 << axis) != 0
    }
}

/// Closed axis box in half-tick coordinates; points are degenerate spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickBox {
    pub lo: [i64; MAX_DIM],
    pub hi: [i64; MAX_DIM],
}

impl TickBox {
    /// Closed boxes intersect.
    pub fn touches(&self, other: &TickBox, n: usize) -> bool {
        (0..n).all(|i| self.lo[i].max(other.lo[i]) <= self.hi[i].min(other.hi[i]))
    }

    /// Transverse crossing: extent axes of each must be point axes of the
    /// other and each point must lie strictly inside the opposite span.
    pub fn crosses(&self, other: &TickBox, n: usize) -> bool {
        for i in 0..n {
            let a_ext = self.lo[i] < self.hi[i];
            let b_ext = other.lo[i] < other.hi[i];
            match (a_ext, b_ext) {
                (true, false) => {
                    if !(self.lo[i] < other.lo[i] && other.lo[i] < self.hi[i]) {
                        return false;
                    }
                }
                (false, true) => {
                    if !(other.lo[i] < self.lo[i] && self.lo[i] < other.hi[i]) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// The cubical complex. Immutable after construction; all queries are
/// read-only and safe to share across threads.
#[derive(Debug, Clone)]
pub struct GridComplex {
    spec: BoxSpec,
    /// Per-axis breakpoints in half-ticks (even grid for the primal
    /// complex, odd offsets with clipped boundary stubs for the dual).
    ticks: Vec<Vec<i64>>,
    half_h: f64,
    dual: bool,
}

/// Build and validate the complex for `spec`.
pub fn build_grid(spec: &BoxSpec) -> Result<GridComplex, GridError> {
    spec.validate()?;
    let m = spec.m as i64;
    let ticks = spec
        .sides()
        .iter()
        .map(|&s| {
            let cells = (s * spec.m as f64).round() as i64;
            (0..=cells).map(|c| 2 * c).collect()
        })
        .collect();
    Ok(GridComplex {
        half_h: 1.0 / (2 * m) as f64,
        spec: spec.clone(),
        ticks,
        dual: false,
    })
}

impl GridComplex {
    pub fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn is_dual(&self) -> bool {
        self.dual
    }

    /// Grid step in length units.
    pub fn h(&self) -> f64 {
        2.0 * self.half_h
    }

    /// Length-unit coordinate of a half-tick.
    pub fn tick_to_len(&self, t: i64) -> f64 {
        t as f64 * self.half_h
    }

    /// Cells per axis of the primal grid.
    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.ticks.iter().map(|t| t.len() - 1).collect()
    }

    /// Largest tick per axis (`2 * m * side`).
    pub fn max_ticks(&self) -> Vec<i64> {
        self.ticks.iter().map(|t| *t.last().unwrap()).collect()
    }

    /// The dual-offset complex: breakpoints at primal cell centers, clipped
    /// to `Q` by boundary stubs.
    pub fn dual(&self) -> GridComplex {
        assert!(!self.dual, "dual of dual not supported");
        let ticks = self
            .ticks
            .iter()
            .map(|t| {
                let hi = *t.last().unwrap();
                let mut v = vec![0i64];
                v.extend((0..(t.len() - 1)).map(|c| 2 * c as i64 + 1));
                v.push(hi);
                v
            })
            .collect();
        GridComplex {
            spec: self.spec.clone(),
            ticks,
            half_h: self.half_h,
            dual: true,
        }
    }

    pub fn contains(&self, cell: &CellId) -> bool {
        let n = self.n();
        if cell.mask >> n != 0 {
            return false;
        }
        (0..n).all(|i| {
            let limit = if cell.extends(i) {
                self.ticks[i].len() - 1
            } else {
                self.ticks[i].len()
            };
            (cell.coords[i] as usize) < limit
        }) && cell.coords[n..MAX_DIM].iter().all(|&c| c == 0)
    }

    fn require(&self, cell: &CellId) -> Result<(), GridError> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(GridError::UnknownCell(*cell))
        }
    }

    /// All cells of one dimension in deterministic order (mask ascending,
    /// coordinates lexicographic).
    pub fn cells(&self, dim: usize) -> Vec<CellId> {
        let n = self.n();
        let mut out = Vec::new();
        for mask in 0u8..(1 << n) {
            if mask.count_ones() as usize != dim {
                continue;
            }
            let limits: Vec<usize> = (0..n)
                .map(|i| {
                    if mask & (1 << i) != 0 {
                        self.ticks[i].len() - 1
                    } else {
                        self.ticks[i].len()
                    }
                })
                .collect();
            let mut coords = [0u16; MAX_DIM];
            'outer: loop {
                out.push(CellId { mask, coords });
                let mut axis = n;
                loop {
                    if axis == 0 {
                        break 'outer;
                    }
                    axis -= 1;
                    coords[axis] += 1;
                    if (coords[axis] as usize) < limits[axis] {
                        break;
                    }
                    coords[axis] = 0;
                }
            }
        }
        out
    }

    pub fn cell_count(&self, dim: usize) -> usize {
        let n = self.n();
        let mut total = 0usize;
        for mask in 0u8..(1 << n) {
            if mask.count_ones() as usize != dim {
                continue;
            }
            total += (0..n)
                .map(|i| {
                    if mask & (1 << i) != 0 {
                        self.ticks[i].len() - 1
                    } else {
                        self.ticks[i].len()
                    }
                })
                .product::<usize>();
        }
        total
    }

    pub fn total_cell_count(&self) -> usize {
        (0..=self.n()).map(|d| self.cell_count(d)).sum()
    }

    /// Closed geometric extent of a cell in half-ticks.
    pub fn tick_box(&self, cell: &CellId) -> TickBox {
        let n = self.n();
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for i in 0..n {
            let c = cell.coords[i] as usize;
            if cell.extends(i) {
                lo[i] = self.ticks[i][c];
                hi[i] = self.ticks[i][c + 1];
            } else {
                lo[i] = self.ticks[i][c];
                hi[i] = lo[i];
            }
        }
        TickBox { lo, hi }
    }

    /// Center of a cell in length units.
    pub fn center(&self, cell: &CellId) -> Vec<f64> {
        let b = self.tick_box(cell);
        (0..self.n())
            .map(|i| 0.5 * (b.lo[i] + b.hi[i]) as f64 * self.half_h)
            .collect()
    }

    /// Signed facets of a cell: the standard cubical boundary with
    /// alternating signs per extent axis, satisfying boundary-of-boundary
    /// zero.
    pub fn facets(&self, cell: &CellId) -> Vec<(CellId, i64)> {
        let n = self.n();
        let mut out = Vec::with_capacity(2 * cell.dim());
        let mut rank = 0i64;
        for axis in 0..n {
            if !cell.extends(axis) {
                continue;
            }
            let sign = if rank % 2 == 0 { 1 } else { -1 };
            let c = cell.coords[axis];
            let mut lo = *cell;
            lo.mask &= !(1 << axis);
            lo.coords[axis] = c;
            let mut hi = lo;
            hi.coords[axis] = c + 1;
            out.push((hi, sign));
            out.push((lo, -sign));
            rank += 1;
        }
        out
    }

    /// Top-cells incident to a face: `2^(n-dim)` in the interior, fewer on
    /// the boundary.
    pub fn incident_top_cells(&self, face: &CellId) -> Vec<CellId> {
        let n = self.n();
        let mut out = vec![CellId {
            mask: (1 << n) - 1,
            coords: face.coords,
        }];
        for axis in 0..n {
            if face.extends(axis) {
                continue;
            }
            let b = face.coords[axis] as usize;
            let mut next = Vec::with_capacity(out.len() * 2);
            for base in out {
                if b > 0 {
                    let mut c = base;
                    c.coords[axis] = (b - 1) as u16;
                    next.push(c);
                }
                if b < self.ticks[axis].len() - 1 {
                    let mut c = base;
                    c.coords[axis] = b as u16;
                    next.push(c);
                }
            }
            out = next;
        }
        out
    }

    /// Hausdorff measure of a cell: exact edge-length product for axis
    /// boxes, 3-point Gauss quadrature of the deformation Gram determinant
    /// otherwise.
    pub fn cell_measure(&self, cell: &CellId) -> Result<f64, GridError> {
        self.require(cell)?;
        let n = self.n();
        let b = self.tick_box(cell);
        let flat: f64 = (0..n)
            .filter(|&i| cell.extends(i))
            .map(|i| (b.hi[i] - b.lo[i]) as f64 * self.half_h)
            .product();
        if self.spec.deformation.is_identity() || cell.dim() == 0 {
            return Ok(flat);
        }
        let sides = self.spec.sides();
        let extents: Vec<usize> = (0..n).filter(|&i| cell.extends(i)).collect();
        let order = 3;
        let (nodes, weights) = gauss_legendre(order);
        let j = extents.len();
        let mut total = 0.0;
        let mut idx = vec![0usize; j];
        loop {
            let mut x: Vec<f64> = (0..n).map(|i| self.tick_to_len(b.lo[i])).collect();
            let mut w = 1.0;
            for (pos, &axis) in extents.iter().enumerate() {
                let lo = self.tick_to_len(b.lo[axis]);
                let hi = self.tick_to_len(b.hi[axis]);
                let half = 0.5 * (hi - lo);
                x[axis] = lo + half * (nodes[idx[pos]] + 1.0);
                w *= half * weights[idx[pos]];
            }
            let jac = self.spec.deformation.jacobian(&x, &sides);
            total += w * gram_sqrt(&jac, n, &extents);
            let mut pos = 0;
            loop {
                if pos == j {
                    return Ok(total);
                }
                idx[pos] += 1;
                if idx[pos] < order {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Whether a cell lies inside the (closed) A part of the boundary:
    /// some Q1 axis is a point axis pinned at an extreme breakpoint.
    pub fn in_subcomplex_a(&self, cell: &CellId) -> bool {
        (0..self.k()).any(|i| self.pinned_extreme(cell, i))
    }

    /// Whether a cell lies inside the (closed) B part of the boundary.
    pub fn in_subcomplex_b(&self, cell: &CellId) -> bool {
        (self.k()..self.n()).any(|i| self.pinned_extreme(cell, i))
    }

    pub fn in_subcomplex(&self, cell: &CellId, tag: Tag) -> bool {
        match tag {
            Tag::A => self.in_subcomplex_a(cell),
            Tag::B => self.in_subcomplex_b(cell),
            Tag::AB => self.in_subcomplex_a(cell) && self.in_subcomplex_b(cell),
        }
    }

    fn pinned_extreme(&self, cell: &CellId, axis: usize) -> bool {
        if cell.extends(axis) {
            return false;
        }
        let c = cell.coords[axis] as usize;
        c == 0 || c == self.ticks[axis].len() - 1
    }

    /// Boundary tag of an `(n-1)`-cell on `dQ`; `None` for interior faces.
    pub fn boundary_tag(&self, cell: &CellId) -> Option<Tag> {
        if cell.dim() != self.n() - 1 {
            return None;
        }
        let axis = (0..self.n()).find(|&i| !cell.extends(i))?;
        if self.pinned_extreme(cell, axis) {
            Some(if axis < self.k() { Tag::A } else { Tag::B })
        } else {
            None
        }
    }

    /// For k = 1: whether a vertex lies on the A0 (`lo = true`) or A1 face.
    pub fn on_terminal(&self, cell: &CellId, axis: usize, lo: bool) -> bool {
        if cell.extends(axis) {
            return false;
        }
        let c = cell.coords[axis] as usize;
        if lo {
            c == 0
        } else {
            c == self.ticks[axis].len() - 1
        }
    }

    /// Rank of an n-cell in `cells(n)` order; the index used by density
    /// fields.
    pub fn top_cell_rank(&self, cell: &CellId) -> Result<usize, GridError> {
        self.require(cell)?;
        if cell.dim() != self.n() {
            return Err(GridError::UnknownCell(*cell));
        }
        let n = self.n();
        let mut rank = 0usize;
        for i in 0..n {
            rank = rank * (self.ticks[i].len() - 1) + cell.coords[i] as usize;
        }
        Ok(rank)
    }

    pub fn top_cell_count(&self) -> usize {
        self.ticks.iter().map(|t| t.len() - 1).product()
    }

    /// Inverse of `top_cell_rank`.
    pub fn top_cell_from_rank(&self, mut rank: usize) -> CellId {
        let n = self.n();
        let mut coords = [0u16; MAX_DIM];
        for i in (0..n).rev() {
            let cells = self.ticks[i].len() - 1;
            coords[i] = (rank % cells) as u16;
            rank /= cells;
        }
        CellId {
            mask: (1 << n) - 1,
            coords,
        }
    }

    /// Rank of a vertex in `cells(0)` order.
    pub fn vertex_rank(&self, cell: &CellId) -> usize {
        let n = self.n();
        let mut rank = 0usize;
        for i in 0..n {
            rank = rank * self.ticks[i].len() + cell.coords[i] as usize;
        }
        rank
    }

    pub fn vertex_count(&self) -> usize {
        self.ticks.iter().map(|t| t.len()).product()
    }

    pub fn vertex_from_rank(&self, mut rank: usize) -> CellId {
        let n = self.n();
        let mut coords = [0u16; MAX_DIM];
        for i in (0..n).rev() {
            let pts = self.ticks[i].len();
            coords[i] = (rank % pts) as u16;
            rank /= pts;
        }
        CellId { mask: 0, coords }
    }
}

fn gram_sqrt(jac: &[f64], n: usize, extents: &[usize]) -> f64 {
    let j = extents.len();
    // g = J_E^T J_E where J_E keeps the extent columns.
    let mut g = vec![0.0; j * j];
    for a in 0..j {
        for b in 0..j {
            let mut s = 0.0;
            for r in 0..n {
                s += jac[r * n + extents[a]] * jac[r * n + extents[b]];
            }
            g[a * j + b] = s;
        }
    }
    det_n(&g, j).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(m: u32) -> GridComplex {
        build_grid(&BoxSpec::unit(2, 1, m)).unwrap()
    }

    #[test]
    fn cell_counts_unit_square_m4() {
        let g = unit_square(4);
        assert_eq!(g.cell_count(2), 16);
        assert_eq!(g.cell_count(1), 40);
        assert_eq!(g.cell_count(0), 25);
    }

    #[test]
    fn boundary_tags_box_2x1() {
        let spec = BoxSpec {
            n: 2,
            k: 1,
            side_q1: vec![2.0],
            side_q2: vec![1.0],
            m: 2,
            deformation: Deformation::Identity,
        };
        let g = build_grid(&spec).unwrap();
        let mut a = 0;
        let mut b = 0;
        for cell in g.cells(1) {
            match g.boundary_tag(&cell) {
                Some(Tag::A) => a += 1,
                Some(Tag::B) => b += 1,
                _ => {}
            }
        }
        assert_eq!(a, 4);
        assert_eq!(b, 8);
    }

    #[test]
    fn two_cell_measures() {
        let spec = BoxSpec::unit(3, 2, 2);
        let g = build_grid(&spec).unwrap();
        for cell in g.cells(2) {
            assert!((g.cell_measure(&cell).unwrap() - 0.25).abs() < 1e-15);
        }
        let g = unit_square(4);
        for cell in g.cells(2) {
            assert!((g.cell_measure(&cell).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn anisotropic_edges_are_half() {
        let spec = BoxSpec {
            n: 2,
            k: 1,
            side_q1: vec![2.0],
            side_q2: vec![1.0],
            m: 2,
            deformation: Deformation::Identity,
        };
        let g = build_grid(&spec).unwrap();
        for cell in g.cells(1) {
            assert!((g.cell_measure(&cell).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn sheared_cells_keep_area() {
        let spec = BoxSpec {
            deformation: Deformation::Shear { s: 0.3 },
            ..BoxSpec::unit(2, 1, 4)
        };
        let g = build_grid(&spec).unwrap();
        for cell in g.cells(2) {
            assert!((g.cell_measure(&cell).unwrap() - 1.0 / 16.0).abs() < 1e-10);
        }
        // Vertical edges stretch by sqrt(1 + s^2), horizontal stay.
        for cell in g.cells(1) {
            let want = if cell.extends(0) {
                0.25
            } else {
                0.25 * (1.0f64 + 0.09).sqrt()
            };
            assert!((g.cell_measure(&cell).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn total_volume_matches_box() {
        for deformation in [
            Deformation::Identity,
            Deformation::Shear { s: 0.3 },
            Deformation::RadialBump { amplitude: 0.2 },
        ] {
            let spec = BoxSpec {
                n: 2,
                k: 1,
                side_q1: vec![2.0],
                side_q2: vec![1.0],
                m: 4,
                deformation,
            };
            let g = build_grid(&spec).unwrap();
            let vol: f64 = g.cells(2).iter().map(|c| g.cell_measure(c).unwrap()).sum();
            assert!((vol - 2.0).abs() < 1e-9 * 2.0, "vol = {vol}");
        }
    }

    #[test]
    fn tag_partition() {
        let g = build_grid(&BoxSpec::unit(3, 1, 2)).unwrap();
        for cell in g.cells(2) {
            let on_boundary = g.in_subcomplex_a(&cell) || g.in_subcomplex_b(&cell);
            match g.boundary_tag(&cell) {
                Some(Tag::A) => assert!(g.in_subcomplex_a(&cell) && !g.in_subcomplex_b(&cell)),
                Some(Tag::B) => assert!(g.in_subcomplex_b(&cell) && !g.in_subcomplex_a(&cell)),
                Some(Tag::AB) => unreachable!(),
                None => assert!(!on_boundary),
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_grid(&BoxSpec::unit(5, 1, 2)).is_err());
        assert!(build_grid(&BoxSpec::unit(2, 2, 2)).is_err());
        assert!(build_grid(&BoxSpec::unit(2, 1, 1)).is_err());
        let spec = BoxSpec {
            side_q1: vec![0.3],
            ..BoxSpec::unit(2, 1, 2)
        };
        assert!(matches!(
            build_grid(&spec),
            Err(GridError::NonIntegralCells(_))
        ));
    }

    #[test]
    fn dual_ticks_are_clipped_centers() {
        let g = unit_square(4);
        let d = g.dual();
        assert_eq!(d.ticks[0], vec![0, 1, 3, 5, 7, 8]);
        assert_eq!(d.cell_count(2), 25);
    }

    #[test]
    fn incident_top_cells_counts() {
        let g = unit_square(4);
        for cell in g.cells(1) {
            let inc = g.incident_top_cells(&cell);
            let interior = !g.in_subcomplex_a(&cell) && !g.in_subcomplex_b(&cell);
            if interior {
                assert_eq!(inc.len(), 2);
            } else {
                assert_eq!(inc.len(), 1);
            }
        }
    }

    #[test]
    fn tick_box_crossing_rules() {
        let g = unit_square(4);
        let d = g.dual();
        // Horizontal edge [0,1]x{1} crosses the vertical dual edge at
        // x = 1/2 spanning y in (1/2, 3/2).
        let edge = CellId {
            mask: 0b01,
            coords: [0, 1, 0, 0],
        };
        let dual_edge = CellId {
            mask: 0b10,
            coords: [1, 1, 0, 0],
        };
        let eb = g.tick_box(&edge);
        let db = d.tick_box(&dual_edge);
        assert!(eb.crosses(&db, 2));
        assert!(eb.touches(&db, 2));
        // Same-direction boxes never cross.
        let other = CellId {
            mask: 0b01,
            coords: [1, 1, 0, 0],
        };
        assert!(!eb.crosses(&g.tick_box(&other), 2));
    }
}
