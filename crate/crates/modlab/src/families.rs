//! The slice families: explicit axis fibers for product geometry and
//! minimal-weight member oracles (shortest path, min cut, l1 chain program)
//! for the full discrete families.

use std::collections::BinaryHeap;

use thiserror::Error;

use crate::chain::{boundary, Chain};
use crate::flow::FlowNetwork;
use crate::grid::{CellId, GridComplex, GridError, Tag, TickBox, MAX_DIM};
use crate::homology::center_slab;
use crate::simplex::{min_weighted_l1, LpError};
use crate::solver::{face_density_value, DensityField};

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("axis members require an undeformed grid")]
    DeformedGrid,
    #[error("family handle mode does not match the requested operation")]
    WrongMode,
    #[error("no oracle for side {side:?} with member dimension {dim} (n = {n})")]
    UnsupportedDim { side: Side, dim: usize, n: usize },
    #[error("cell count {0} exceeds the chain program limit {1}")]
    SizeLimit(usize, usize),
    #[error("translated member leaves the box")]
    TranslateOutOfBounds,
    #[error("translation |z|*h = {0} violates the margin bound {1}")]
    MarginViolated(f64, f64),
    #[error("empty family has no members")]
    EmptyFamily,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    A,
    B,
    AStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    AxisRestricted,
    Full,
}

/// Which family to optimize over, how, and with what boundary margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyHandle {
    pub side: Side,
    pub mode: Mode,
    /// Distance-to-opposite-boundary exclusion; 0 disables the filter.
    pub delta_margin: f64,
}

impl FamilyHandle {
    pub fn new(side: Side, mode: Mode) -> Self {
        FamilyHandle {
            side,
            mode,
            delta_margin: 0.0,
        }
    }

    /// Dimension of this family's members.
    pub fn member_dim(&self, complex: &GridComplex) -> usize {
        match self.side {
            Side::A => complex.k(),
            Side::B | Side::AStar => complex.n() - complex.k(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberKind {
    Fiber,
    FaceChain,
}

/// One face of a member: the carrying cell, the H^dim weight of the piece,
/// and its closed geometric extent.
#[derive(Debug, Clone)]
pub struct MemberFace {
    pub cell: CellId,
    pub weight: f64,
    pub geometry: TickBox,
}

/// One element of a slice family.
#[derive(Debug, Clone)]
pub struct SliceMember {
    pub dim: usize,
    pub kind: MemberKind,
    pub faces: Vec<MemberFace>,
    /// Relative-cycle witness; fibers carry none.
    pub chain: Option<Chain>,
    /// False when a chain-program member came back fractional.
    pub integral: bool,
    /// Linear functional rho -> integral over the member, as
    /// (top-cell rank, coefficient) pairs.
    constraint: Vec<(u32, f64)>,
}

impl SliceMember {
    pub fn build(
        complex: &GridComplex,
        dim: usize,
        kind: MemberKind,
        faces: Vec<MemberFace>,
        chain: Option<Chain>,
        integral: bool,
    ) -> Self {
        let n = complex.n();
        let mut acc: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
        for face in &faces {
            if face.cell.dim() == n {
                let rank = complex.top_cell_rank(&face.cell).expect("face cell") as u32;
                *acc.entry(rank).or_insert(0.0) += face.weight;
            } else {
                let incident = complex.incident_top_cells(&face.cell);
                let share = face.weight / incident.len() as f64;
                for cell in incident {
                    let rank = complex.top_cell_rank(&cell).expect("incident cell") as u32;
                    *acc.entry(rank).or_insert(0.0) += share;
                }
            }
        }
        SliceMember {
            dim,
            kind,
            faces,
            chain,
            integral,
            constraint: acc.into_iter().collect(),
        }
    }

    /// The discrete integral of rho over the member.
    pub fn weight(&self, rho: &DensityField) -> f64 {
        self.constraint
            .iter()
            .map(|&(rank, c)| c * rho.values[rank as usize])
            .sum()
    }

    /// Total H^dim measure of the member.
    pub fn total_measure(&self) -> f64 {
        self.faces.iter().map(|f| f.weight).sum()
    }

    pub fn constraint(&self) -> &[(u32, f64)] {
        &self.constraint
    }

    pub fn support_boxes(&self) -> Vec<TickBox> {
        self.faces.iter().map(|f| f.geometry).collect()
    }

    /// Closed supports intersect somewhere.
    pub fn meets(&self, other: &SliceMember, n: usize) -> bool {
        self.faces.iter().any(|a| {
            other
                .faces
                .iter()
                .any(|b| a.geometry.touches(&b.geometry, n))
        })
    }

    /// Parity of transverse crossings between the two supports.
    pub fn crossing_parity(&self, other: &SliceMember, n: usize) -> u8 {
        let mut parity = 0u8;
        for a in &self.faces {
            for b in &other.faces {
                if a.geometry.crosses(&b.geometry, n) {
                    parity ^= 1;
                }
            }
        }
        parity
    }

    /// Stable identity of the face set, for cut deduplication.
    pub fn signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut cells: Vec<CellId> = self.faces.iter().map(|f| f.cell).collect();
        cells.sort();
        let mut h = std::collections::hash_map::DefaultHasher::new();
        cells.hash(&mut h);
        h.finish()
    }
}

fn fiber_geometry(
    complex: &GridComplex,
    extent_axes: &[usize],
    cell: &CellId,
    transverse_ticks: &[i64; MAX_DIM],
) -> TickBox {
    let full = complex.tick_box(cell);
    let mut lo = *transverse_ticks;
    let mut hi = *transverse_ticks;
    for &a in extent_axes {
        lo[a] = full.lo[a];
        hi[a] = full.hi[a];
    }
    TickBox { lo, hi }
}

/// The straight-fiber members of an axis-restricted family: one per
/// transverse cell multi-index, weighted by the H^dim measure of the fiber
/// piece inside each top cell. Members closer than `delta_margin` to the
/// excluded boundary are dropped.
pub fn axis_members(
    complex: &GridComplex,
    handle: &FamilyHandle,
) -> Result<Vec<SliceMember>, FamilyError> {
    if !complex.spec().deformation.is_identity() {
        return Err(FamilyError::DeformedGrid);
    }
    if handle.mode != Mode::AxisRestricted {
        return Err(FamilyError::WrongMode);
    }
    let n = complex.n();
    let k = complex.k();
    let (extent_axes, transverse_axes): (Vec<usize>, Vec<usize>) = match handle.side {
        Side::A => ((0..k).collect(), (k..n).collect()),
        Side::B | Side::AStar => ((k..n).collect(), (0..k).collect()),
    };
    let dim = extent_axes.len();
    let h = complex.h();
    let piece = h.powi(dim as i32);
    let cpa = complex.cells_per_axis();
    let sides = complex.spec().sides();

    let mut members = Vec::new();
    let mut t_idx = vec![0usize; transverse_axes.len()];
    'outer: loop {
        // Distance from the fiber to the excluded boundary.
        let mut dist = f64::INFINITY;
        for (pos, &a) in transverse_axes.iter().enumerate() {
            let center = (t_idx[pos] as f64 + 0.5) * h;
            dist = dist.min(center.min(sides[a] - center));
        }
        if dist >= handle.delta_margin * (1.0 - 1e-12) {
            let mut ticks = [0i64; MAX_DIM];
            for (pos, &a) in transverse_axes.iter().enumerate() {
                ticks[a] = 2 * t_idx[pos] as i64 + 1;
            }
            let mut faces = Vec::new();
            let mut e_idx = vec![0usize; dim];
            'cells: loop {
                let mut coords = [0u16; MAX_DIM];
                for (pos, &a) in transverse_axes.iter().enumerate() {
                    coords[a] = t_idx[pos] as u16;
                }
                for (pos, &a) in extent_axes.iter().enumerate() {
                    coords[a] = e_idx[pos] as u16;
                }
                let cell = CellId {
                    mask: (1 << n) - 1,
                    coords,
                };
                faces.push(MemberFace {
                    weight: piece,
                    geometry: fiber_geometry(complex, &extent_axes, &cell, &ticks),
                    cell,
                });
                let mut pos = 0;
                loop {
                    if pos == dim {
                        break 'cells;
                    }
                    e_idx[pos] += 1;
                    if e_idx[pos] < cpa[extent_axes[pos]] {
                        break;
                    }
                    e_idx[pos] = 0;
                    pos += 1;
                }
            }
            members.push(SliceMember::build(
                complex,
                dim,
                MemberKind::Fiber,
                faces,
                None,
                true,
            ));
        }
        let mut pos = 0;
        loop {
            if pos == transverse_axes.len() {
                break 'outer;
            }
            t_idx[pos] += 1;
            if t_idx[pos] < cpa[transverse_axes[pos]] {
                break;
            }
            t_idx[pos] = 0;
            pos += 1;
        }
    }
    Ok(members)
}

/// Dual-grid face set covering the full clipped slice through a fiber
/// member, the form the blocking-family test consumes.
pub fn fiber_dual_faces(complex: &GridComplex, member: &SliceMember) -> Vec<TickBox> {
    assert_eq!(member.kind, MemberKind::Fiber);
    let n = complex.n();
    let dual = complex.dual();
    let probe = member.faces[0].geometry;
    let extent_axes: Vec<usize> = (0..n).filter(|&i| probe.lo[i] < probe.hi[i]).collect();
    let mut mask = 0u8;
    for &a in &extent_axes {
        mask |= 1 << a;
    }
    let cpa = dual.cells_per_axis();
    let mut base = [0u16; MAX_DIM];
    for i in 0..n {
        if !extent_axes.contains(&i) {
            // Transverse odd tick 2c+1 sits at dual breakpoint index c+1.
            base[i] = ((probe.lo[i] - 1) / 2 + 1) as u16;
        }
    }
    let mut boxes = Vec::new();
    let mut idx = vec![0usize; extent_axes.len()];
    'outer: loop {
        let mut coords = base;
        for (pos, &a) in extent_axes.iter().enumerate() {
            coords[a] = idx[pos] as u16;
        }
        boxes.push(dual.tick_box(&CellId { mask, coords }));
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
    boxes
}

/// Geometric support of a member for blocking/intersection experiments:
/// fibers are widened to their clipped dual slice, face chains keep their
/// face boxes.
pub fn star_candidate_boxes(complex: &GridComplex, member: &SliceMember) -> Vec<TickBox> {
    match member.kind {
        MemberKind::Fiber => fiber_dual_faces(complex, member),
        MemberKind::FaceChain => member.support_boxes(),
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want smallest dist first,
        // ties by vertex rank for determinism.
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-weight grid-edge path between the two opposite faces across
/// `axis`, weighting each edge by its averaged density times its measure.
pub(crate) fn path_member(
    complex: &GridComplex,
    rho: &DensityField,
    axis: usize,
) -> Result<SliceMember, FamilyError> {
    let n = complex.n();
    let vcount = complex.vertex_count();
    let breaks: Vec<usize> = complex.cells_per_axis().iter().map(|&c| c + 1).collect();

    let edge_cost = |edge: &CellId| -> f64 {
        face_density_value(complex, rho, edge) * complex.cell_measure(edge).unwrap_or(0.0)
    };

    let mut dist = vec![f64::INFINITY; vcount];
    let mut parent: Vec<u32> = vec![u32::MAX; vcount];
    let mut heap = BinaryHeap::new();
    for rank in 0..vcount {
        let v = complex.vertex_from_rank(rank);
        if v.coords[axis] == 0 {
            dist[rank] = 0.0;
            heap.push(HeapEntry {
                dist: 0.0,
                vertex: rank as u32,
            });
        }
    }
    let target_coord = (breaks[axis] - 1) as u16;
    let mut goal: Option<usize> = None;
    while let Some(HeapEntry { dist: d, vertex }) = heap.pop() {
        let u = vertex as usize;
        if d > dist[u] {
            continue;
        }
        let vu = complex.vertex_from_rank(u);
        if vu.coords[axis] == target_coord {
            goal = Some(u);
            break;
        }
        for ax in 0..n {
            for dir in [-1i32, 1] {
                let c = vu.coords[ax] as i32 + dir;
                if c < 0 || c as usize >= breaks[ax] {
                    continue;
                }
                let mut edge = vu;
                edge.mask = 1 << ax;
                if dir < 0 {
                    edge.coords[ax] = c as u16;
                }
                let w = edge_cost(&edge);
                let mut to = vu;
                to.coords[ax] = c as u16;
                let tr = complex.vertex_rank(&to);
                let nd = d + w;
                if nd < dist[tr] {
                    dist[tr] = nd;
                    parent[tr] = u as u32;
                    heap.push(HeapEntry {
                        dist: nd,
                        vertex: tr as u32,
                    });
                }
            }
        }
    }
    let goal = goal.ok_or(FamilyError::EmptyFamily)?;

    // Walk back to a source vertex, orienting the witness chain forward.
    let mut faces = Vec::new();
    let mut chain = Chain::zero(1);
    let mut cur = goal;
    while parent[cur] != u32::MAX {
        let prev = parent[cur] as usize;
        let vc = complex.vertex_from_rank(cur);
        let vp = complex.vertex_from_rank(prev);
        let ax = (0..n)
            .find(|&i| vc.coords[i] != vp.coords[i])
            .expect("parent step");
        let forward = vc.coords[ax] > vp.coords[ax];
        let mut edge = if forward { vp } else { vc };
        edge.mask = 1 << ax;
        faces.push(MemberFace {
            weight: complex.cell_measure(&edge)?,
            geometry: complex.tick_box(&edge),
            cell: edge,
        });
        chain.add(edge, if forward { 1 } else { -1 });
        cur = prev;
    }
    faces.reverse();
    Ok(SliceMember::build(
        complex,
        1,
        MemberKind::FaceChain,
        faces,
        Some(chain),
        true,
    ))
}

/// Oracle for k = 1 connecting members of the A family.
pub fn min_weight_path(
    complex: &GridComplex,
    rho: &DensityField,
) -> Result<SliceMember, FamilyError> {
    if complex.k() != 1 {
        return Err(FamilyError::UnsupportedDim {
            side: Side::A,
            dim: complex.k(),
            n: complex.n(),
        });
    }
    path_member(complex, rho, 0)
}

/// Min-capacity separating face set across `sep_axis` via max-flow on the
/// top-cell adjacency graph.
pub(crate) fn cut_member(
    complex: &GridComplex,
    rho: &DensityField,
    sep_axis: usize,
) -> Result<SliceMember, FamilyError> {
    let n = complex.n();
    let cells = complex.top_cell_count();
    let cpa = complex.cells_per_axis();
    let s = cells;
    let t = cells + 1;
    let mut net = FlowNetwork::new(cells + 2);

    // Interior faces between adjacent top cells.
    let mut total_cap = 0.0;
    let mut interior_faces = Vec::new();
    for face in complex.cells(n - 1) {
        if complex.boundary_tag(&face).is_some() {
            continue;
        }
        let ax = (0..n).find(|&i| !face.extends(i)).expect("point axis");
        let b = face.coords[ax] as usize;
        debug_assert!(b > 0 && b < cpa[ax] + 1);
        let cap = face_density_value(complex, rho, &face) * complex.cell_measure(&face)?;
        total_cap += cap;
        interior_faces.push((face, ax, b, cap));
    }
    let big = total_cap + 1.0;
    for &(face, ax, b, cap) in &interior_faces {
        let mut lo = face;
        lo.mask = (1 << n) - 1;
        lo.coords[ax] = (b - 1) as u16;
        let mut hi = face;
        hi.mask = (1 << n) - 1;
        hi.coords[ax] = b as u16;
        let u = complex.top_cell_rank(&lo)?;
        let v = complex.top_cell_rank(&hi)?;
        net.add_undirected(u, v, cap);
    }
    for rank in 0..cells {
        let cell = complex.top_cell_from_rank(rank);
        if cell.coords[sep_axis] == 0 {
            net.add_edge(s, rank, big);
        }
        if cell.coords[sep_axis] as usize == cpa[sep_axis] - 1 {
            net.add_edge(rank, t, big);
        }
    }
    net.max_flow(s, t);
    let side = net.source_side(s);

    // Witness: boundary of the source-side cell chain, interior part only.
    let mut source_chain = Chain::zero(n);
    for (rank, &in_s) in side.iter().take(cells).enumerate() {
        if in_s {
            source_chain.add(complex.top_cell_from_rank(rank), 1);
        }
    }
    let full_boundary = boundary(complex, &source_chain);
    let mut witness = Chain::zero(n - 1);
    let mut faces = Vec::new();
    for (&cell, &coef) in &full_boundary.coeffs {
        if complex.boundary_tag(&cell).is_some() {
            continue;
        }
        witness.add(cell, coef);
        faces.push(MemberFace {
            weight: complex.cell_measure(&cell)?,
            geometry: complex.tick_box(&cell),
            cell,
        });
    }
    Ok(SliceMember::build(
        complex,
        n - 1,
        MemberKind::FaceChain,
        faces,
        Some(witness),
        true,
    ))
}

/// Oracle for the separating members dual to k = 1 connecting paths; the
/// same construction serves the A family with k = n-1 by exchanging the
/// roles of A and B.
pub fn min_weight_cut(
    complex: &GridComplex,
    rho: &DensityField,
) -> Result<SliceMember, FamilyError> {
    if complex.k() != 1 {
        return Err(FamilyError::UnsupportedDim {
            side: Side::AStar,
            dim: complex.n() - complex.k(),
            n: complex.n(),
        });
    }
    cut_member(complex, rho, 0)
}

/// Chain-program size ceiling.
pub const CHAIN_LP_CELL_LIMIT: usize = 5_000;

/// Minimal-weight real chain homologous to the reference axis generator rel
/// the tagged subcomplex; the value is a certified lower bound for the
/// family minimum, and the support is a genuine member exactly when the
/// optimum came back integral.
pub fn min_weight_chain_lp(
    complex: &GridComplex,
    rho: &DensityField,
    handle: &FamilyHandle,
) -> Result<(SliceMember, f64), FamilyError> {
    let n = complex.n();
    let dim = handle.member_dim(complex);
    if dim == 0 || dim == n {
        return Err(FamilyError::UnsupportedDim {
            side: handle.side,
            dim,
            n,
        });
    }
    let total = complex.total_cell_count();
    if total > CHAIN_LP_CELL_LIMIT {
        return Err(FamilyError::SizeLimit(total, CHAIN_LP_CELL_LIMIT));
    }
    let tag = match handle.side {
        Side::A => Tag::A,
        Side::B | Side::AStar => Tag::B,
    };
    let rows: Vec<CellId> = complex
        .cells(dim)
        .into_iter()
        .filter(|c| !complex.in_subcomplex(c, tag))
        .collect();
    let row_of: std::collections::HashMap<CellId, usize> =
        rows.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let weights: Vec<f64> = rows
        .iter()
        .map(|c| {
            Ok::<f64, FamilyError>(
                face_density_value(complex, rho, c) * complex.cell_measure(c)?,
            )
        })
        .collect::<Result<_, _>>()?;
    let reference_chain = center_slab(complex, tag);
    let mut reference = vec![0.0f64; rows.len()];
    for (cell, &coef) in &reference_chain.coeffs {
        if let Some(&i) = row_of.get(cell) {
            reference[i] = coef as f64;
        }
    }
    let mut basis_cols = Vec::new();
    for cell in complex.cells(dim + 1) {
        if complex.in_subcomplex(&cell, tag) {
            continue;
        }
        let mut col = Vec::new();
        for (facet, sign) in complex.facets(&cell) {
            if let Some(&i) = row_of.get(&facet) {
                col.push((i, sign as f64));
            }
        }
        if !col.is_empty() {
            basis_cols.push(col);
        }
    }
    let (value, y) = min_weighted_l1(&weights, &reference, &basis_cols)?;

    let mut faces = Vec::new();
    let mut chain = Chain::zero(dim);
    let mut integral = true;
    for (i, &coef) in y.iter().enumerate() {
        if coef.abs() <= 1e-7 {
            continue;
        }
        let cell = rows[i];
        if (coef - coef.round()).abs() > 1e-6 {
            integral = false;
        } else {
            chain.add(cell, coef.round() as i64);
        }
        // Fractional optima carry |y| as multiplicity so the member's
        // integral reproduces the certified program value.
        faces.push(MemberFace {
            weight: complex.cell_measure(&cell)? * coef.abs(),
            geometry: complex.tick_box(&cell),
            cell,
        });
    }
    let chain = integral.then_some(chain);
    let member = SliceMember::build(complex, dim, MemberKind::FaceChain, faces, chain, integral);
    Ok((member, value))
}

/// Member shifted by `z` lattice steps, weights preserved. The shift must
/// respect the paper's translation bound `|z| h <= margin/10` and stay
/// inside the box.
pub fn translate_member(
    complex: &GridComplex,
    member: &SliceMember,
    z: &[i64],
    delta_margin: f64,
) -> Result<SliceMember, FamilyError> {
    let n = complex.n();
    let h = complex.h();
    let norm = (z.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt() * h;
    if norm > delta_margin / 10.0 + 1e-12 {
        return Err(FamilyError::MarginViolated(norm, delta_margin / 10.0));
    }
    let max_ticks = complex.max_ticks();
    let shift_box = |b: &TickBox| -> Result<TickBox, FamilyError> {
        let mut out = *b;
        for i in 0..n {
            out.lo[i] += 2 * z[i];
            out.hi[i] += 2 * z[i];
            if out.lo[i] < 0 || out.hi[i] > max_ticks[i] {
                return Err(FamilyError::TranslateOutOfBounds);
            }
        }
        Ok(out)
    };
    let shift_cell = |c: &CellId| -> Result<CellId, FamilyError> {
        let mut out = *c;
        for i in 0..n {
            let v = c.coords[i] as i64 + z[i];
            if v < 0 {
                return Err(FamilyError::TranslateOutOfBounds);
            }
            out.coords[i] = v as u16;
        }
        if !complex.contains(&out) {
            return Err(FamilyError::TranslateOutOfBounds);
        }
        Ok(out)
    };
    let faces = member
        .faces
        .iter()
        .map(|f| {
            Ok(MemberFace {
                cell: shift_cell(&f.cell)?,
                weight: f.weight,
                geometry: shift_box(&f.geometry)?,
            })
        })
        .collect::<Result<Vec<_>, FamilyError>>()?;
    let chain = match &member.chain {
        None => None,
        Some(c) => {
            let mut shifted = Chain::zero(c.dim);
            for (cell, &coef) in &c.coeffs {
                shifted.add(shift_cell(cell)?, coef);
            }
            Some(shifted)
        }
    };
    Ok(SliceMember::build(
        complex,
        member.dim,
        member.kind,
        faces,
        chain,
        member.integral,
    ))
}

enum OracleKind {
    List(Vec<SliceMember>),
    Path { axis: usize },
    Cut { axis: usize },
    ChainLp,
}

/// Minimum-weight member oracle for a family handle.
pub struct Oracle<'a> {
    complex: &'a GridComplex,
    handle: FamilyHandle,
    kind: OracleKind,
}

/// Resolve the handle to a concrete oracle. Axis-restricted handles scan
/// the explicit fiber list; full handles dispatch on member dimension to
/// shortest path, min cut or the chain program.
pub fn family_oracle<'a>(
    complex: &'a GridComplex,
    handle: &FamilyHandle,
) -> Result<Oracle<'a>, FamilyError> {
    let n = complex.n();
    let k = complex.k();
    let dim = handle.member_dim(complex);
    let kind = match handle.mode {
        Mode::AxisRestricted => OracleKind::List(axis_members(complex, handle)?),
        Mode::Full => {
            if handle.side == Side::AStar && dim == n - 1 {
                OracleKind::Cut { axis: 0 }
            } else if dim == 1 {
                let axis = match handle.side {
                    Side::A => 0,
                    Side::B | Side::AStar => k,
                };
                OracleKind::Path { axis }
            } else if dim == n - 1 {
                let axis = match handle.side {
                    Side::A => n - 1,
                    Side::B | Side::AStar => 0,
                };
                OracleKind::Cut { axis }
            } else if dim > 1 && dim < n - 1 {
                OracleKind::ChainLp
            } else {
                return Err(FamilyError::UnsupportedDim {
                    side: handle.side,
                    dim,
                    n,
                });
            }
        }
    };
    Ok(Oracle {
        complex,
        handle: *handle,
        kind,
    })
}

impl Oracle<'_> {
    /// Member of minimum weight at `rho` with its weight; `None` only for
    /// an empty axis list.
    pub fn min_member(
        &self,
        rho: &DensityField,
    ) -> Result<Option<(SliceMember, f64)>, FamilyError> {
        match &self.kind {
            OracleKind::List(members) => {
                let mut best: Option<(usize, f64)> = None;
                for (i, member) in members.iter().enumerate() {
                    let w = member.weight(rho);
                    if best.is_none_or(|(_, bw)| w < bw) {
                        best = Some((i, w));
                    }
                }
                Ok(best.map(|(i, w)| (members[i].clone(), w)))
            }
            OracleKind::Path { axis } => {
                let member = path_member(self.complex, rho, *axis)?;
                let w = member.weight(rho);
                Ok(Some((member, w)))
            }
            OracleKind::Cut { axis } => {
                let member = cut_member(self.complex, rho, *axis)?;
                let w = member.weight(rho);
                Ok(Some((member, w)))
            }
            OracleKind::ChainLp => {
                let (member, value) = min_weight_chain_lp(self.complex, rho, &self.handle)?;
                Ok(Some((member, value)))
            }
        }
    }

    /// The explicit member list of an axis-restricted oracle.
    pub fn members(&self) -> Option<&[SliceMember]> {
        match &self.kind {
            OracleKind::List(m) => Some(m),
            _ => None,
        }
    }
}
