//! End-to-end experiments: dual moduli and the duality product, exact
//! product-geometry comparison, dual-density admissibility, mollifier
//! margins, translation-intersection scans and topology checks, swept over
//! resolutions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::capacity::{capacity_modulus_report, CapacityError, CapacityReport};
use crate::config::{Check, ExperimentConfig};
use crate::families::{
    axis_members, family_oracle, min_weight_cut, star_candidate_boxes, translate_member,
    FamilyError, FamilyHandle, Mode, Side, SliceMember,
};
use crate::grid::{build_grid, BoxSpec, GridComplex, GridError, Tag};
use crate::homology::{
    center_slab, dual_reference_chain, intersection_parity, is_in_star_family, relative_homology,
    HomologyError, SNF_CELL_LIMIT,
};
use crate::mollifier::{admissibility_margin, convolve_surface, Kernel, MollifierError};
use crate::solver::{
    solve_modulus, DensityField, IterationRecord, ModulusResult, SolverConfig, SolverError,
};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("axis-restricted families require an undeformed grid")]
    AxisDeformed,
    #[error("check {0:?} requires k = 1")]
    NeedsCodimOne(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Homology(#[from] HomologyError),
    #[error(transparent)]
    Mollifier(#[from] MollifierError),
}

/// Outcome of one named check; `passed = None` marks informational rows.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: Option<bool>,
    pub detail: String,
}

impl CheckOutcome {
    fn pass(name: &str, passed: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: Some(passed),
            detail,
        }
    }

    fn info(name: &str, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: None,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityRecord {
    pub m: u32,
    pub p: f64,
    pub q: f64,
    pub mod_a: f64,
    pub mod_b: f64,
    pub product: f64,
    pub exact_a: Option<f64>,
    pub exact_b: Option<f64>,
    pub mod_a_bounds: (f64, f64),
    pub mod_b_bounds: (f64, f64),
    pub converged: bool,
    pub bound_ok: bool,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip)]
    pub trace_a: Vec<IterationRecord>,
    #[serde(skip)]
    pub trace_b: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub config: ExperimentConfig,
    pub records: Vec<DualityRecord>,
    pub passed: bool,
}

/// Exact product-geometry values `H^{n-k}(Q2)/H^k(Q1)^{p-1}` and its dual.
pub fn exact_moduli(spec: &BoxSpec, p: f64) -> (f64, f64) {
    let q = p / (p - 1.0);
    let h1 = spec.h_q1();
    let h2 = spec.h_q2();
    (h2 / h1.powf(p - 1.0), h1 / h2.powf(q - 1.0))
}

fn solver_config(config: &ExperimentConfig, p: f64) -> SolverConfig {
    let mut sc = SolverConfig::new(p);
    sc.tol_feasibility = config.tolerances.feasibility;
    sc.tol_gap = config.tolerances.gap;
    sc
}

/// Run both solves and every requested check at each resolution.
pub fn run_duality(config: &ExperimentConfig) -> Result<DualityReport, LabError> {
    if config.families == Mode::AxisRestricted && !config.box_spec.deformation.is_identity() {
        return Err(LabError::AxisDeformed);
    }
    let p = config.p;
    let q = config.q();
    let mut records = Vec::new();
    for m in config.resolution_sweep() {
        let spec = BoxSpec {
            m,
            ..config.box_spec.clone()
        };
        let complex = build_grid(&spec)?;
        let handle_a = FamilyHandle::new(Side::A, config.families);
        let handle_b = FamilyHandle::new(Side::B, config.families);
        let res_a = solve_modulus(&complex, &handle_a, &solver_config(config, p))?;
        let res_b = solve_modulus(&complex, &handle_b, &solver_config(config, q))?;
        let product = res_a.value.powf(1.0 / p) * res_b.value.powf(1.0 / q);
        let identity = spec.deformation.is_identity();
        let (exact_a, exact_b) = if identity {
            let (a, b) = exact_moduli(&spec, p);
            (Some(a), Some(b))
        } else {
            (None, None)
        };

        let bound_ok = if config.families == Mode::AxisRestricted && identity {
            (product - 1.0).abs() <= config.tolerances.product
        } else {
            product <= 1.0 + config.tolerances.bound_slack
        };

        let mut checks = Vec::new();
        for check in &config.checks {
            match check {
                Check::Product => {
                    checks.push(product_check(config, &spec, &res_a, &res_b, product))
                }
                Check::DualDensity => {
                    checks.push(dual_density_outcome(config, &complex, &res_b, q)?)
                }
                Check::Mollifier => checks.push(mollifier_outcome(config, &complex)?),
                Check::Intersection => checks.push(intersection_outcome(config, &complex)?),
                Check::Homology => checks.push(homology_outcome(config, &complex)?),
                Check::Capacity => checks.push(capacity_outcome(config, &complex)?),
            }
        }

        records.push(DualityRecord {
            m,
            p,
            q,
            mod_a: res_a.value,
            mod_b: res_b.value,
            product,
            exact_a,
            exact_b,
            mod_a_bounds: (res_a.lower_bound, res_a.upper_bound),
            mod_b_bounds: (res_b.lower_bound, res_b.upper_bound),
            converged: res_a.converged && res_b.converged,
            bound_ok,
            checks,
            trace_a: res_a.iterations.clone(),
            trace_b: res_b.iterations.clone(),
        });
    }
    let passed = records
        .iter()
        .all(|r| r.converged && r.bound_ok && r.checks.iter().all(|c| c.passed != Some(false)));
    Ok(DualityReport {
        config: config.clone(),
        records,
        passed,
    })
}

fn product_check(
    config: &ExperimentConfig,
    spec: &BoxSpec,
    res_a: &ModulusResult,
    res_b: &ModulusResult,
    product: f64,
) -> CheckOutcome {
    if config.families == Mode::AxisRestricted && spec.deformation.is_identity() {
        let (ea, eb) = exact_moduli(spec, config.p);
        let da = (res_a.value - ea).abs() / ea.max(1e-300);
        let db = (res_b.value - eb).abs() / eb.max(1e-300);
        let dp = (product - 1.0).abs();
        let tol = config.tolerances.product;
        CheckOutcome::pass(
            "product",
            da <= tol && db <= tol && dp <= tol,
            format!("relative errors: mod_a {da:.3e}, mod_b {db:.3e}, |product-1| {dp:.3e}"),
        )
    } else {
        let slack = (product - 1.0).max(0.0);
        CheckOutcome::pass(
            "product",
            slack <= config.tolerances.bound_slack,
            format!("product {product:.9} slack {slack:.3e}"),
        )
    }
}

/// The dual-density step: `rho_B^{q-1} / mod_q` must pass the A-side
/// oracle; returns the oracle minimum.
pub fn dual_density_check(
    complex: &GridComplex,
    result_q: &ModulusResult,
    q: f64,
    handle_a: &FamilyHandle,
) -> Result<f64, LabError> {
    let phi = DensityField {
        values: result_q
            .rho
            .values
            .iter()
            .map(|&r| r.powf(q - 1.0) / result_q.value)
            .collect(),
    };
    let oracle = family_oracle(complex, handle_a)?;
    let Some((_, w)) = oracle.min_member(&phi)? else {
        return Ok(f64::INFINITY);
    };
    Ok(w)
}

fn dual_density_outcome(
    config: &ExperimentConfig,
    complex: &GridComplex,
    res_b: &ModulusResult,
    q: f64,
) -> Result<CheckOutcome, LabError> {
    let handle_a = FamilyHandle::new(Side::A, config.families);
    let margin = dual_density_check(complex, res_b, q, &handle_a)?;
    Ok(CheckOutcome::pass(
        "dual-density",
        margin >= 1.0 - config.tolerances.dual_density,
        format!("oracle min weight {margin:.6}"),
    ))
}

/// Axis members of the opposing family plus min-cut members for seeded
/// random densities, all keeping `margin` from A. Cut sampling boosts the
/// density near A so cuts stay off the excluded boundary.
pub fn sample_star_members(
    complex: &GridComplex,
    margin: f64,
    seed: u64,
    cut_count: usize,
) -> Result<Vec<SliceMember>, LabError> {
    let mut members = Vec::new();
    if complex.spec().deformation.is_identity() {
        let handle = FamilyHandle {
            side: Side::B,
            mode: Mode::AxisRestricted,
            delta_margin: margin,
        };
        members.extend(axis_members(complex, &handle)?);
    }
    if complex.k() == 1 && cut_count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: std::collections::HashSet<u64> =
            members.iter().map(|m| m.signature()).collect();
        let sides = complex.spec().sides();
        for _ in 0..cut_count {
            let mut rho = DensityField {
                values: (0..complex.top_cell_count())
                    .map(|_| 0.5 + rng.gen::<f64>())
                    .collect(),
            };
            for rank in 0..complex.top_cell_count() {
                let cell = complex.top_cell_from_rank(rank);
                let center = complex.center(&cell);
                let dist_a = (0..complex.k())
                    .map(|i| center[i].min(sides[i] - center[i]))
                    .fold(f64::INFINITY, f64::min);
                if dist_a < margin {
                    rho.values[rank] += 1e3;
                }
            }
            let cut = min_weight_cut(complex, &rho)?;
            if seen.insert(cut.signature()) {
                members.push(cut);
            }
        }
    }
    Ok(members)
}

#[derive(Debug, Clone, Serialize)]
pub struct IntersectionScan {
    pub triples: usize,
    pub misses: usize,
    pub crossing_parity_ones: usize,
}

/// Sampled translation-intersection scan: every margin-respecting
/// translate of an axis member must meet every sampled opposing member.
pub fn intersection_scan(
    complex: &GridComplex,
    margin: f64,
    seed: u64,
    cut_count: usize,
) -> Result<IntersectionScan, LabError> {
    let n = complex.n();
    let h = complex.h();
    let handle = FamilyHandle {
        side: Side::A,
        mode: Mode::AxisRestricted,
        delta_margin: margin,
    };
    let s_members = axis_members(complex, &handle)?;
    let stars = sample_star_members(complex, margin, seed, cut_count)?;
    let star_boxes: Vec<Vec<crate::grid::TickBox>> = stars
        .iter()
        .map(|s| star_candidate_boxes(complex, s))
        .collect();

    // All lattice translates admissible for the margin.
    let reach = (margin / (10.0 * h)).floor() as i64;
    let mut translates = Vec::new();
    let mut z = vec![-reach; n];
    'gen: loop {
        let norm: f64 = z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt() * h;
        if norm <= margin / 10.0 + 1e-12 {
            translates.push(z.clone());
        }
        let mut axis = 0;
        loop {
            if axis == n {
                break 'gen;
            }
            z[axis] += 1;
            if z[axis] <= reach {
                break;
            }
            z[axis] = -reach;
            axis += 1;
        }
    }

    let mut scan = IntersectionScan {
        triples: 0,
        misses: 0,
        crossing_parity_ones: 0,
    };
    for s in &s_members {
        for z in &translates {
            let shifted = translate_member(complex, s, z, margin)?;
            for (star, boxes) in stars.iter().zip(&star_boxes) {
                scan.triples += 1;
                let meets = shifted
                    .support_boxes()
                    .iter()
                    .any(|a| boxes.iter().any(|b| a.touches(b, n)));
                if !meets {
                    scan.misses += 1;
                }
                if shifted.crossing_parity(star, n) == 1 {
                    scan.crossing_parity_ones += 1;
                }
            }
        }
    }
    Ok(scan)
}

fn intersection_outcome(
    config: &ExperimentConfig,
    complex: &GridComplex,
) -> Result<CheckOutcome, LabError> {
    if !complex.spec().deformation.is_identity() {
        return Ok(CheckOutcome::info(
            "intersection",
            "skipped: scan requires product geometry".into(),
        ));
    }
    let margin = if config.delta_margin > 0.0 {
        config.delta_margin
    } else {
        10.5 * complex.h()
    };
    let scan = intersection_scan(complex, margin, config.seed, config.mollifier.cut_samples)?;
    Ok(CheckOutcome::pass(
        "intersection",
        scan.misses == 0,
        format!(
            "{} triples, {} misses, {} crossing-parity hits",
            scan.triples, scan.misses, scan.crossing_parity_ones
        ),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct StarComparison {
    pub star_value: f64,
    pub b_axis_value: f64,
    pub relative_gap: f64,
}

/// mod_q over the blocking-family surrogate against the axis B family.
pub fn star_vs_b_comparison(
    complex: &GridComplex,
    q: f64,
    config: &SolverConfig,
) -> Result<StarComparison, LabError> {
    if !complex.spec().deformation.is_identity() {
        return Err(LabError::AxisDeformed);
    }
    let star = solve_modulus(
        complex,
        &FamilyHandle::new(Side::AStar, Mode::Full),
        &SolverConfig { p: q, ..*config },
    )?;
    let b = solve_modulus(
        complex,
        &FamilyHandle::new(Side::B, Mode::AxisRestricted),
        &SolverConfig { p: q, ..*config },
    )?;
    Ok(StarComparison {
        star_value: star.value,
        b_axis_value: b.value,
        relative_gap: (star.value - b.value).abs() / b.value.max(1e-300),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HomologyCheckReport {
    pub betti_a: usize,
    pub torsion_a: Vec<i64>,
    pub betti_b: usize,
    pub torsion_b: Vec<i64>,
    pub generator_parity: u8,
    pub axis_b_in_star: Option<bool>,
    pub min_cuts_in_star: Option<bool>,
}

/// The topology bundle: relative homology ranks, generator pairing parity
/// and blocking-family membership of the produced members.
pub fn homology_check(
    complex: &GridComplex,
    seed: u64,
    cut_samples: usize,
) -> Result<HomologyCheckReport, LabError> {
    let k = complex.k();
    let n = complex.n();
    let rep_a = relative_homology(complex, Some(Tag::A), k)?;
    let rep_b = relative_homology(complex, Some(Tag::B), n - k)?;
    let dual = complex.dual();
    let parity = intersection_parity(
        complex,
        &dual,
        &center_slab(complex, Tag::A),
        &dual_reference_chain(&dual, Tag::A),
    )?;

    let axis_b_in_star = if complex.spec().deformation.is_identity() {
        let handle = FamilyHandle::new(Side::B, Mode::AxisRestricted);
        let mut all = true;
        for member in axis_members(complex, &handle)? {
            let boxes = star_candidate_boxes(complex, &member);
            if !is_in_star_family(complex, &boxes)? {
                all = false;
            }
        }
        Some(all)
    } else {
        None
    };

    let min_cuts_in_star = if k == 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = true;
        for _ in 0..cut_samples {
            let rho = DensityField {
                values: (0..complex.top_cell_count())
                    .map(|_| 0.5 + rng.gen::<f64>())
                    .collect(),
            };
            let cut = min_weight_cut(complex, &rho)?;
            let boxes = star_candidate_boxes(complex, &cut);
            if !is_in_star_family(complex, &boxes)? {
                all = false;
            }
        }
        Some(all)
    } else {
        None
    };

    Ok(HomologyCheckReport {
        betti_a: rep_a.betti,
        torsion_a: rep_a.torsion,
        betti_b: rep_b.betti,
        torsion_b: rep_b.torsion,
        generator_parity: parity,
        axis_b_in_star,
        min_cuts_in_star,
    })
}

fn homology_outcome(
    config: &ExperimentConfig,
    complex: &GridComplex,
) -> Result<CheckOutcome, LabError> {
    if complex.total_cell_count() > SNF_CELL_LIMIT {
        return Ok(CheckOutcome::info(
            "homology",
            format!(
                "skipped: {} cells over the homology limit",
                complex.total_cell_count()
            ),
        ));
    }
    let report = homology_check(complex, config.seed, 5)?;
    let ok = report.betti_a == 1
        && report.betti_b == 1
        && report.torsion_a.is_empty()
        && report.torsion_b.is_empty()
        && report.generator_parity == 1
        && report.axis_b_in_star != Some(false)
        && report.min_cuts_in_star != Some(false);
    Ok(CheckOutcome::pass(
        "homology",
        ok,
        format!(
            "betti A {} B {}, parity {}, B-in-star {:?}, cuts-in-star {:?}",
            report.betti_a,
            report.betti_b,
            report.generator_parity,
            report.axis_b_in_star,
            report.min_cuts_in_star
        ),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct MollifierReport {
    pub epsilon: f64,
    pub m: u32,
    pub margin_at_order: f64,
    pub margin_at_oracle_order: f64,
    pub sample_size: usize,
    pub translation_max_error: f64,
}

/// Mollifier admissibility margins at the configured and oracle quadrature
/// orders, plus the translation-identity residue over a seeded sample.
pub fn mollifier_check(
    complex: &GridComplex,
    config: &ExperimentConfig,
) -> Result<MollifierReport, LabError> {
    let mc = &config.mollifier;
    let n = complex.n();
    let handle = FamilyHandle {
        side: Side::A,
        mode: Mode::AxisRestricted,
        delta_margin: mc.margin,
    };
    let members = axis_members(complex, &handle)?;
    let s = members[members.len() / 2].clone();
    let kernel = Kernel::new(n, mc.epsilon);
    let samples = sample_star_members(complex, mc.margin, config.seed, mc.cut_samples)?;
    let (margin_lo, _) =
        admissibility_margin(complex, &s, &kernel, &samples, mc.margin, mc.order)?;
    let (margin_hi, _) =
        admissibility_margin(complex, &s, &kernel, &samples, mc.margin, mc.oracle_order)?;

    // Translation identity on a seeded point sample.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let z: Vec<i64> = (0..n).map(|i| if i == n - 1 { 1 } else { 0 }).collect();
    let shifted = translate_member(complex, &s, &z, 10.0 * (n as f64).sqrt() * complex.h())?;
    let sides = complex.spec().sides();
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..n).map(|i| rng.gen::<f64>() * sides[i]).collect();
        let lhs = convolve_surface(complex, &shifted, &kernel, &x, mc.order);
        let x_back: Vec<f64> = (0..n)
            .map(|i| x[i] - z[i] as f64 * complex.h())
            .collect();
        let rhs = convolve_surface(complex, &s, &kernel, &x_back, mc.order);
        max_err = max_err.max((lhs - rhs).abs());
    }

    Ok(MollifierReport {
        epsilon: mc.epsilon,
        m: complex.spec().m,
        margin_at_order: margin_lo,
        margin_at_oracle_order: margin_hi,
        sample_size: samples.len(),
        translation_max_error: max_err,
    })
}

fn mollifier_outcome(
    config: &ExperimentConfig,
    complex: &GridComplex,
) -> Result<CheckOutcome, LabError> {
    if !complex.spec().deformation.is_identity() {
        return Ok(CheckOutcome::info(
            "mollifier",
            "skipped: margins need product geometry".into(),
        ));
    }
    let report = mollifier_check(complex, config)?;
    let deficit = (1.0 - report.margin_at_order).max(0.0);
    let ok = deficit <= config.tolerances.mollifier_deficit
        && report.translation_max_error <= 1e-12;
    Ok(CheckOutcome::pass(
        "mollifier",
        ok,
        format!(
            "margin {:.6} (order {}), {:.6} (order {}), translation residue {:.2e}",
            report.margin_at_order,
            config.mollifier.order,
            report.margin_at_oracle_order,
            config.mollifier.oracle_order,
            report.translation_max_error
        ),
    ))
}

fn capacity_outcome(
    config: &ExperimentConfig,
    complex: &GridComplex,
) -> Result<CheckOutcome, LabError> {
    if complex.k() != 1 || !complex.spec().deformation.is_identity() {
        return Ok(CheckOutcome::info(
            "capacity",
            "skipped: capacity pathway needs k = 1 on product geometry".into(),
        ));
    }
    let sc = solver_config(config, config.p);
    let levels = 4 * complex.spec().m as usize;
    let (report, _, _) =
        capacity_modulus_report(complex, config.p, &sc, levels, config.seed)?;
    let ok = report.relative_gap <= config.tolerances.capacity_gap
        && report.lower_bound_product >= 1.0 - config.tolerances.capacity_gap;
    Ok(CheckOutcome::pass(
        "capacity",
        ok,
        format!(
            "cap {:.6} mod {:.6} gap {:.3e}, lower-bound product {:.6}, coarea err {:.3e}",
            report.capacity,
            report.modulus,
            report.relative_gap,
            report.lower_bound_product,
            report.coarea_relative_error
        ),
    ))
}

/// Per-resolution capacity sweep rows for the CSV interface.
pub fn capacity_sweep(
    config: &ExperimentConfig,
) -> Result<Vec<(u32, CapacityReport)>, LabError> {
    let mut rows = Vec::new();
    for m in config.resolution_sweep() {
        let spec = BoxSpec {
            m,
            ..config.box_spec.clone()
        };
        let complex = build_grid(&spec)?;
        let sc = solver_config(config, config.p);
        let (report, _, _) =
            capacity_modulus_report(&complex, config.p, &sc, 4 * m as usize, config.seed)?;
        rows.push((m, report));
    }
    Ok(rows)
}

/// Per-resolution mollifier margin rows for the CSV interface.
pub fn mollifier_sweep(
    config: &ExperimentConfig,
) -> Result<Vec<MollifierReport>, LabError> {
    let mut rows = Vec::new();
    for m in config.resolution_sweep() {
        let spec = BoxSpec {
            m,
            ..config.box_spec.clone()
        };
        let complex = build_grid(&spec)?;
        rows.push(mollifier_check(&complex, config)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_bytes;

    fn config(json: &str) -> ExperimentConfig {
        parse_config_bytes(json.as_bytes(), &[]).unwrap()
    }

    fn unit_square_config(families: &str, checks: &str, m: u32) -> ExperimentConfig {
        config(&format!(
            r#"{{
                "schema": "modlab/1",
                "box": {{"n": 2, "k": 1, "side_q1": [1.0], "side_q2": [1.0], "m": {m}}},
                "p": 2.0,
                "families": "{families}",
                "checks": [{checks}],
                "seed": 11
            }}"#
        ))
    }

    #[test]
    fn unit_square_axis_duality_product_is_one() {
        let cfg = unit_square_config("axis-restricted", r#""product""#, 4);
        let report = run_duality(&cfg).unwrap();
        assert!(report.passed);
        let r = &report.records[0];
        assert!((r.product - 1.0).abs() < 1e-6, "product {}", r.product);
        assert_eq!(r.exact_a, Some(1.0));
    }

    #[test]
    fn anisotropic_p3_closed_forms() {
        let cfg = config(
            r#"{
                "schema": "modlab/1",
                "box": {"n": 2, "k": 1, "side_q1": [2.0], "side_q2": [1.0], "m": 2},
                "p": 3.0,
                "families": "axis-restricted",
                "checks": ["product"],
                "seed": 1
            }"#,
        );
        let report = run_duality(&cfg).unwrap();
        assert!(report.passed);
        let r = &report.records[0];
        assert!((r.mod_a - 0.25).abs() < 1e-6, "mod_a {}", r.mod_a);
        assert!((r.mod_b - 2.0).abs() < 1e-5, "mod_b {}", r.mod_b);
        assert!((r.product - 1.0).abs() < 1e-6, "product {}", r.product);
    }

    #[test]
    fn sheared_full_families_respect_bound() {
        let cfg = config(
            r#"{
                "schema": "modlab/1",
                "box": {"n": 2, "k": 1, "side_q1": [1.0], "side_q2": [1.0], "m": 8,
                        "deformation": {"kind": "shear", "s": 0.3}},
                "p": 2.0,
                "families": "full",
                "checks": [],
                "seed": 1
            }"#,
        );
        let report = run_duality(&cfg).unwrap();
        let r = &report.records[0];
        assert!(r.converged);
        assert!(r.product <= 1.05, "product {}", r.product);
        assert!(r.exact_a.is_none());
    }

    #[test]
    fn axis_mode_rejects_deformed_grid() {
        let cfg = config(
            r#"{
                "schema": "modlab/1",
                "box": {"n": 2, "k": 1, "side_q1": [1.0], "side_q2": [1.0], "m": 4,
                        "deformation": {"kind": "shear", "s": 0.3}},
                "p": 2.0,
                "families": "axis-restricted",
                "checks": [],
                "seed": 1
            }"#,
        );
        assert!(matches!(run_duality(&cfg), Err(LabError::AxisDeformed)));
    }

    #[test]
    fn dual_density_on_unit_square_axis() {
        let cfg = unit_square_config("axis-restricted", r#""dual-density""#, 4);
        let report = run_duality(&cfg).unwrap();
        assert!(report.passed, "{:?}", report.records[0].checks);
        // phi is identically 1, margin exactly 1.
        let detail = &report.records[0].checks[0].detail;
        assert!(detail.contains("1.000000"), "{detail}");
    }

    #[test]
    fn intersection_scan_zero_misses() {
        let spec = BoxSpec::unit(2, 1, 8);
        let complex = build_grid(&spec).unwrap();
        let scan = intersection_scan(&complex, 0.3, 5, 10).unwrap();
        assert!(scan.triples > 0);
        assert_eq!(scan.misses, 0);
        assert!(scan.crossing_parity_ones > 0);
    }

    #[test]
    fn star_matches_axis_b_on_product_boxes() {
        let complex = build_grid(&BoxSpec::unit(2, 1, 8)).unwrap();
        let sc = SolverConfig::new(2.0);
        let cmp = star_vs_b_comparison(&complex, 2.0, &sc).unwrap();
        assert!(
            (cmp.star_value - 1.0).abs() < 1e-6 && (cmp.b_axis_value - 1.0).abs() < 1e-6,
            "{cmp:?}"
        );
        let spec = BoxSpec {
            n: 2,
            k: 1,
            side_q1: vec![2.0],
            side_q2: vec![1.0],
            m: 4,
            deformation: crate::grid::Deformation::Identity,
        };
        let complex = build_grid(&spec).unwrap();
        let cmp = star_vs_b_comparison(&complex, 2.0, &sc).unwrap();
        assert!(
            (cmp.star_value - 2.0).abs() < 1e-5 && (cmp.b_axis_value - 2.0).abs() < 1e-5,
            "{cmp:?}"
        );
    }

    #[test]
    fn homology_bundle_small_sizes() {
        for (n, k) in [(2usize, 1usize), (3, 1), (3, 2)] {
            let complex = build_grid(&BoxSpec::unit(n, k, 2)).unwrap();
            let report = homology_check(&complex, 3, 3).unwrap();
            assert_eq!(report.betti_a, 1, "(n,k)=({n},{k})");
            assert_eq!(report.betti_b, 1);
            assert!(report.torsion_a.is_empty() && report.torsion_b.is_empty());
            assert_eq!(report.generator_parity, 1);
            assert_eq!(report.axis_b_in_star, Some(true));
            if k == 1 {
                assert_eq!(report.min_cuts_in_star, Some(true));
            }
        }
    }

    #[test]
    fn mollifier_bundle_unit_square() {
        let mut cfg = unit_square_config("axis-restricted", r#""mollifier""#, 16);
        cfg.mollifier.cut_samples = 5;
        let report = run_duality(&cfg).unwrap();
        assert!(report.passed, "{:?}", report.records[0].checks);
    }
}
