//! k = 1 capacity: discrete p-Dirichlet energy minimization over vertex
//! potentials, level-set members, and the capacity-vs-modulus report with
//! the coarea pairing.

use thiserror::Error;

use crate::families::{FamilyHandle, MemberFace, MemberKind, Mode, Side, SliceMember};
use crate::grid::GridComplex;
use crate::solver::{
    solve_modulus, DensityField, ModulusResult, SolverConfig, SolverError,
};

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("capacity solver requires k = 1, got k = {0}")]
    NotCodimOne(usize),
    #[error("capacity solver requires an undeformed grid")]
    DeformedGrid,
    #[error("exponent p = {0} outside the supported range [1.05, 20]")]
    BadExponent(f64),
    #[error("level parameter {0} collides with cell values after perturbation")]
    LevelCollision(f64),
    #[error("p-laplace iteration did not reach the energy tolerance")]
    NonConvergent,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Vertex potential with 0 on the A0 face and 1 on the A1 face.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub values: Vec<f64>,
}

struct CellStencil {
    /// Corner vertex ranks in bit order.
    corners: Vec<u32>,
    measure: f64,
}

struct Discretization {
    n: usize,

    cells: Vec<CellStencil>,
    free: Vec<bool>,
    scale: f64,
}

impl Discretization {
    fn new(complex: &GridComplex) -> Self {
        let n = complex.n();
        let h = complex.h();
        let breaks: Vec<usize> = complex.cells_per_axis().iter().map(|&c| c + 1).collect();
        let mut cells = Vec::with_capacity(complex.top_cell_count());
        for rank in 0..complex.top_cell_count() {
            let cell = complex.top_cell_from_rank(rank);
            let mut corners = Vec::with_capacity(1 << n);
            for bits in 0..(1usize << n) {
                let mut v = cell;
                v.mask = 0;
                for (i, coord) in v.coords.iter_mut().enumerate().take(n) {
                    if bits >> i & 1 == 1 {
                        *coord += 1;
                    }
                }
                corners.push(complex.vertex_rank(&v) as u32);
            }
            cells.push(CellStencil {
                corners,
                measure: complex.cell_measure(&cell).expect("top cell"),
            });
        }
        let mut free = vec![true; complex.vertex_count()];
        for rank in 0..complex.vertex_count() {
            let v = complex.vertex_from_rank(rank);
            let c = v.coords[0] as usize;
            if c == 0 || c == breaks[0] - 1 {
                free[rank] = false;
            }
        }
        Discretization {
            n,
            cells,
            free,
            scale: 1.0 / ((1usize << (n - 1)) as f64 * h),
        }
    }

    /// Cell-centered gradient: per axis, the mean of all aligned corner
    /// differences.
    fn gradient(&self, u: &[f64], cell: &CellStencil, out: &mut [f64]) {
        for g in out.iter_mut().take(self.n) {
            *g = 0.0;
        }
        for (bits, &corner) in cell.corners.iter().enumerate() {
            let val = u[corner as usize];
            for (i, g) in out.iter_mut().enumerate().take(self.n) {
                if bits >> i & 1 == 1 {
                    *g += val;
                } else {
                    *g -= val;
                }
            }
        }
        for g in out.iter_mut().take(self.n) {
            *g *= self.scale;
        }
    }

    fn energy(&self, u: &[f64], p: f64) -> f64 {
        let mut g = [0.0f64; 4];
        let mut e = 0.0;
        for cell in &self.cells {
            self.gradient(u, cell, &mut g);
            let norm2: f64 = g[..self.n].iter().map(|v| v * v).sum();
            e += cell.measure * norm2.powf(0.5 * p);
        }
        e
    }

    fn energy_gradient(&self, u: &[f64], p: f64, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = 0.0;
        }
        let mut g = [0.0f64; 4];
        for cell in &self.cells {
            self.gradient(u, cell, &mut g);
            let norm2: f64 = g[..self.n].iter().map(|v| v * v).sum::<f64>().max(1e-30);
            let factor = cell.measure * p * norm2.powf(0.5 * p - 1.0);
            for (bits, &corner) in cell.corners.iter().enumerate() {
                if !self.free[corner as usize] {
                    continue;
                }
                let mut dot = 0.0;
                for i in 0..self.n {
                    let s = if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
                    dot += g[i] * s;
                }
                out[corner as usize] += factor * dot * self.scale;
            }
        }
    }

    /// Exact line search on the convex section t -> E(u + t d).
    fn line_search(&self, u: &[f64], d: &[f64], p: f64) -> f64 {
        let mut ga = [0.0f64; 4];
        let mut gb = [0.0f64; 4];
        let mut pairs = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            self.gradient(u, cell, &mut ga);
            self.gradient(d, cell, &mut gb);
            pairs.push((ga, gb, cell.measure));
        }
        let phi_prime = |t: f64| -> f64 {
            let mut s = 0.0;
            for (a, b, measure) in &pairs {
                let mut norm2 = 0.0;
                let mut dot = 0.0;
                for i in 0..self.n {
                    let v = a[i] + t * b[i];
                    norm2 += v * v;
                    dot += v * b[i];
                }
                s += measure * p * norm2.max(1e-300).powf(0.5 * p - 1.0) * dot;
            }
            s
        };
        if phi_prime(0.0) >= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        let mut grow = 0;
        while phi_prime(hi) < 0.0 && grow < 200 {
            hi *= 2.0;
            grow += 1;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if phi_prime(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

fn check_preconditions(complex: &GridComplex, p: f64) -> Result<(), CapacityError> {
    if complex.k() != 1 {
        return Err(CapacityError::NotCodimOne(complex.k()));
    }
    if !complex.spec().deformation.is_identity() {
        return Err(CapacityError::DeformedGrid);
    }
    if !(1.05..=20.0).contains(&p) {
        return Err(CapacityError::BadExponent(p));
    }
    Ok(())
}

/// Minimize the discrete p-Dirichlet energy over potentials with fixed
/// terminal values; nonlinear conjugate gradient with exact line search,
/// terminating at relative energy decrease below 1e-10.
pub fn solve_p_laplace(
    complex: &GridComplex,
    p: f64,
) -> Result<(PotentialField, f64), CapacityError> {
    check_preconditions(complex, p)?;
    let disc = Discretization::new(complex);
    let breaks0 = complex.cells_per_axis()[0] + 1;
    let side0 = complex.spec().side_q1[0];

    // Linear ramp start; exact for product boxes at every p.
    let mut u = vec![0.0f64; complex.vertex_count()];
    for (rank, val) in u.iter_mut().enumerate() {
        let v = complex.vertex_from_rank(rank);
        *val = v.coords[0] as f64 / (breaks0 - 1) as f64;
    }
    let _ = side0;

    let vcount = u.len();
    let mut grad = vec![0.0; vcount];
    let mut grad_new = vec![0.0; vcount];
    let mut dir = vec![0.0; vcount];
    disc.energy_gradient(&u, p, &mut grad);
    for i in 0..vcount {
        dir[i] = -grad[i];
    }
    let mut e_prev = disc.energy(&u, p);
    let mut converged = false;
    for _ in 0..20_000 {
        let descent: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if descent >= 0.0 {
            for i in 0..vcount {
                dir[i] = -grad[i];
            }
        }
        let t = disc.line_search(&u, &dir, p);
        if t > 0.0 {
            for i in 0..vcount {
                u[i] += t * dir[i];
            }
        }
        let e = disc.energy(&u, p);
        disc.energy_gradient(&u, p, &mut grad_new);
        let gg: f64 = grad.iter().map(|g| g * g).sum();
        let beta = if gg > 0.0 {
            let num: f64 = grad_new
                .iter()
                .zip(&grad)
                .map(|(gn, g)| gn * (gn - g))
                .sum();
            (num / gg).max(0.0)
        } else {
            0.0
        };
        for i in 0..vcount {
            dir[i] = -grad_new[i] + beta * dir[i];
        }
        std::mem::swap(&mut grad, &mut grad_new);
        if (e_prev - e).abs() < 1e-10 * e_prev.max(1e-300) {
            e_prev = e;
            converged = true;
            break;
        }
        e_prev = e;
    }
    if !converged {
        return Err(CapacityError::NonConvergent);
    }
    Ok((PotentialField { values: u }, e_prev))
}

/// Gradient magnitude per top cell of a potential.
pub fn gradient_magnitudes(complex: &GridComplex, u: &PotentialField) -> Vec<f64> {
    let disc = Discretization::new(complex);
    let mut g = [0.0f64; 4];
    disc.cells
        .iter()
        .map(|cell| {
            disc.gradient(&u.values, cell, &mut g);
            g[..disc.n].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect()
}

fn jitter(seed: u64, rank: usize) -> f64 {
    let mut z = seed ^ (rank as u64).wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    (z ^ (z >> 31)) as f64 / u64::MAX as f64
}

/// The separating face set between the sub- and super-level cells of the
/// (perturbed) potential at level `t`. Levels outside the band of
/// realizable cell values clamp to the nearest resolvable cut, so `t -> 0`
/// hugs the A0 face.
pub fn level_set_member(
    complex: &GridComplex,
    u: &PotentialField,
    t: f64,
    seed: u64,
) -> Result<SliceMember, CapacityError> {
    let n = complex.n();
    // Seeded 1e-9 vertex perturbation makes "almost every t" deterministic;
    // redraw on residual collisions.
    for redraw in 0..8u64 {
        let perturbed: Vec<f64> = u
            .values
            .iter()
            .enumerate()
            .map(|(rank, &v)| v + 1e-9 * jitter(seed.wrapping_add(redraw), rank))
            .collect();
        let mut means = Vec::with_capacity(complex.top_cell_count());
        for rank in 0..complex.top_cell_count() {
            let cell = complex.top_cell_from_rank(rank);
            let mut sum = 0.0;
            let mut corners = 0usize;
            for bits in 0..(1usize << n) {
                let mut v = cell;
                v.mask = 0;
                for (i, coord) in v.coords.iter_mut().enumerate().take(n) {
                    if bits >> i & 1 == 1 {
                        *coord += 1;
                    }
                }
                sum += perturbed[complex.vertex_rank(&v)];
                corners += 1;
            }
            means.push(sum / corners as f64);
        }
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let t = t.clamp(lo + 1e-7, hi - 1e-7);
        if means.iter().any(|&m| (m - t).abs() < 1e-12) {
            continue;
        }
        let mut faces = Vec::new();
        let mut witness = crate::chain::Chain::zero(n);
        for (rank, &m) in means.iter().enumerate() {
            if m < t {
                witness.add(complex.top_cell_from_rank(rank), 1);
            }
        }
        let full = crate::chain::boundary(complex, &witness);
        let mut chain = crate::chain::Chain::zero(n - 1);
        for (&cell, &coef) in &full.coeffs {
            if complex.boundary_tag(&cell).is_some() {
                continue;
            }
            chain.add(cell, coef);
            faces.push(MemberFace {
                weight: complex.cell_measure(&cell).expect("face"),
                geometry: complex.tick_box(&cell),
                cell,
            });
        }
        return Ok(SliceMember::build(
            complex,
            n - 1,
            MemberKind::FaceChain,
            faces,
            Some(chain),
            true,
        ));
    }
    Err(CapacityError::LevelCollision(t))
}

/// Joint capacity / modulus / lower-bound record for k = 1.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CapacityReport {
    pub p: f64,
    pub q: f64,
    pub capacity: f64,
    pub modulus: f64,
    pub relative_gap: f64,
    pub modulus_star: f64,
    /// (mod_p Gamma_A)^{1/p} (mod_q Gamma_A^*)^{1/q}, approaching 1 from
    /// below.
    pub lower_bound_product: f64,
    pub coarea_sweep: f64,
    pub coarea_direct: f64,
    pub coarea_relative_error: f64,
}

/// Capacity vs. modulus with the level-set coarea pairing; `levels` sets
/// the sweep resolution.
pub fn capacity_modulus_report(
    complex: &GridComplex,
    p: f64,
    config: &SolverConfig,
    levels: usize,
    seed: u64,
) -> Result<(CapacityReport, ModulusResult, PotentialField), CapacityError> {
    check_preconditions(complex, p)?;
    let q = p / (p - 1.0);
    let mod_a = solve_modulus(
        complex,
        &FamilyHandle::new(Side::A, Mode::Full),
        &SolverConfig { p, ..*config },
    )?;
    let (u, cap) = solve_p_laplace(complex, p)?;
    let star = solve_modulus(
        complex,
        &FamilyHandle::new(Side::AStar, Mode::Full),
        &SolverConfig { p: q, ..*config },
    )?;
    let rho_star = &star.rho;

    // Coarea pairing: sweep of level-set rho*-masses against the direct
    // gradient sum. The offset keeps sample levels off the lattice of cell
    // values.
    let mut sweep = 0.0;
    let dt = 1.0 / levels as f64;
    for j in 0..levels {
        let t = (j as f64 + 0.37) * dt;
        let member = level_set_member(complex, &u, t, seed)?;
        sweep += member.weight(rho_star) * dt;
    }
    let grads = gradient_magnitudes(complex, &u);
    let mut direct = 0.0;
    for (rank, g) in grads.iter().enumerate() {
        let cell = complex.top_cell_from_rank(rank);
        direct += rho_star.values[rank] * g * complex.cell_measure(&cell).expect("cell");
    }

    let report = CapacityReport {
        p,
        q,
        capacity: cap,
        modulus: mod_a.value,
        relative_gap: (cap - mod_a.value).abs() / mod_a.value.max(1e-300),
        modulus_star: star.value,
        lower_bound_product: mod_a.value.powf(1.0 / p) * star.value.powf(1.0 / q),
        coarea_sweep: sweep,
        coarea_direct: direct,
        coarea_relative_error: (sweep - direct).abs() / direct.max(1e-300),
    };
    Ok((report, mod_a, u))
}

/// Verifier for the scaled-projection extremal map on product boxes: its
/// jacobian is the constant `H^k(Q1)^{-1}`, admissible for the A family,
/// with p-energy equal to the exact product modulus.
pub fn projection_map_check(
    complex: &GridComplex,
    p: f64,
) -> Result<(f64, f64, f64), CapacityError> {
    if !complex.spec().deformation.is_identity() {
        return Err(CapacityError::DeformedGrid);
    }
    let spec = complex.spec();
    let j = 1.0 / spec.h_q1();
    let rho = DensityField::uniform(complex, j);
    let handle = FamilyHandle::new(Side::A, Mode::AxisRestricted);
    let members = crate::families::axis_members(complex, &handle)
        .map_err(SolverError::Family)?;
    let min_weight = members
        .iter()
        .map(|m| m.weight(&rho))
        .fold(f64::INFINITY, f64::min);
    let energy = crate::solver::energy(complex, &rho, p);
    let exact = spec.h_q2() / spec.h_q1().powf(p - 1.0);
    Ok((min_weight, energy, exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, BoxSpec, Deformation};

    fn box_2x1(m: u32) -> GridComplex {
        build_grid(&BoxSpec {
            n: 2,
            k: 1,
            side_q1: vec![2.0],
            side_q2: vec![1.0],
            m,
            deformation: Deformation::Identity,
        })
        .unwrap()
    }

    #[test]
    fn unit_square_capacity_is_one() {
        let g = build_grid(&BoxSpec::unit(2, 1, 8)).unwrap();
        let (u, e) = solve_p_laplace(&g, 2.0).unwrap();
        assert!((e - 1.0).abs() < 1e-9, "energy {e}");
        // Linear potential, maximum principle.
        for (rank, &v) in u.values.iter().enumerate() {
            assert!((-1e-9..=1.0 + 1e-9).contains(&v));
            let vert = g.vertex_from_rank(rank);
            let want = vert.coords[0] as f64 / 8.0;
            assert!((v - want).abs() < 1e-6);
        }
    }

    #[test]
    fn anisotropic_capacity_formulas() {
        let g = box_2x1(4);
        let (_, e2) = solve_p_laplace(&g, 2.0).unwrap();
        assert!((e2 - 0.5).abs() < 1e-9, "p=2: {e2}");
        let (_, e3) = solve_p_laplace(&g, 3.0).unwrap();
        assert!((e3 - 0.25).abs() < 1e-9, "p=3: {e3}");
    }

    #[test]
    fn any_p_unit_cube_energy_one() {
        let g = build_grid(&BoxSpec::unit(3, 1, 4)).unwrap();
        for p in [1.3, 2.0, 4.0, 11.0] {
            let (_, e) = solve_p_laplace(&g, p).unwrap();
            assert!((e - 1.0).abs() < 1e-6, "p={p}: {e}");
        }
    }

    #[test]
    fn capacity_rejects_bad_inputs() {
        let g = build_grid(&BoxSpec::unit(3, 2, 2)).unwrap();
        assert!(matches!(
            solve_p_laplace(&g, 2.0),
            Err(CapacityError::NotCodimOne(2))
        ));
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        assert!(matches!(
            solve_p_laplace(&g, 1.01),
            Err(CapacityError::BadExponent(_))
        ));
    }

    #[test]
    fn level_sets_of_linear_potential() {
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        let (u, _) = solve_p_laplace(&g, 2.0).unwrap();
        let member = level_set_member(&g, &u, 0.5, 7).unwrap();
        // Vertical mid-line: 4 faces at x = 1/2 of measure 1/4 each.
        assert_eq!(member.faces.len(), 4);
        for f in &member.faces {
            assert_eq!(f.geometry.lo[0], 4);
            assert_eq!(f.geometry.hi[0], 4);
        }
        assert!((member.total_measure() - 1.0).abs() < 1e-12);
        // Early levels hug the A0 face.
        let member = level_set_member(&g, &u, 0.05, 7).unwrap();
        for f in &member.faces {
            assert!(f.geometry.lo[0] <= 2);
        }
    }

    #[test]
    fn level_set_measure_dominates_min_cut() {
        let g = build_grid(&BoxSpec::unit(2, 1, 8)).unwrap();
        let (u, _) = solve_p_laplace(&g, 2.0).unwrap();
        // The min cut at uniform density 1 has weight 1, the derived
        // floor for every level set's total measure.
        for t in [0.21, 0.5, 0.83] {
            let member = level_set_member(&g, &u, t, 3).unwrap();
            assert!(member.total_measure() >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn projection_verifier_matches_exact_modulus() {
        let g = box_2x1(4);
        for p in [2.0, 3.0] {
            let (minw, energy, exact) = projection_map_check(&g, p).unwrap();
            assert!((minw - 1.0).abs() < 1e-12);
            assert!((energy - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn report_brackets_unit_square() {
        let g = build_grid(&BoxSpec::unit(2, 1, 16)).unwrap();
        let config = SolverConfig::new(2.0);
        let (report, _, u) = capacity_modulus_report(&g, 2.0, &config, 64, 11).unwrap();
        assert!(report.relative_gap <= 0.05, "gap {}", report.relative_gap);
        assert!(
            report.lower_bound_product >= 1.0 - 0.05,
            "product {}",
            report.lower_bound_product
        );
        assert!(
            report.coarea_relative_error <= 0.02,
            "coarea {}",
            report.coarea_relative_error
        );
        for &v in &u.values {
            assert!((-1e-9..=1.0 + 1e-9).contains(&v));
        }
    }
}
