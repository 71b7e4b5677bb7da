//! Discrete p-modulus by cutting planes against a member oracle.
//!
//! The outer loop adds the oracle's minimum-weight member as a linear cut
//! until the current density is feasible; the inner loop solves the
//! restricted problem through the stationarity map
//! `rho_c = (sum_S lambda_S N_{S,c} / (p sigma_c))^{1/(p-1)}` by multiplier
//! ascent. Primal and dual certificates bracket the value.

use std::collections::HashSet;

use thiserror::Error;

use crate::families::{family_oracle, FamilyError, FamilyHandle, SliceMember};
use crate::grid::{CellId, GridComplex, GridError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("exponent p = {0} outside the supported range [1.05, 20]")]
    BadExponent(f64),
    #[error("density field length {0} does not match {1} top cells")]
    FieldSize(usize, usize),
    #[error("cannot rescale a density with zero oracle weight")]
    ZeroMinWeight,
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Nonnegative density per top cell, the discrete rho.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn zeros(complex: &GridComplex) -> Self {
        DensityField {
            values: vec![0.0; complex.top_cell_count()],
        }
    }

    pub fn uniform(complex: &GridComplex, value: f64) -> Self {
        DensityField {
            values: vec![value; complex.top_cell_count()],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.values.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DensityField {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Discretization rule for evaluating the volume density on a
/// lower-dimensional face: arithmetic mean over the incident top cells.
/// Top cells evaluate to their own density.
pub fn face_density_value(complex: &GridComplex, rho: &DensityField, face: &CellId) -> f64 {
    if face.dim() == complex.n() {
        return rho.values[complex.top_cell_rank(face).expect("top cell")];
    }
    let incident = complex.incident_top_cells(face);
    let sum: f64 = incident
        .iter()
        .map(|c| rho.values[complex.top_cell_rank(c).expect("incident")])
        .sum();
    sum / incident.len() as f64
}

/// The discrete integral of rho over a member.
pub fn member_weight(member: &SliceMember, rho: &DensityField) -> f64 {
    member.weight(rho)
}

/// The discrete p-energy of rho over the box.
pub fn energy(complex: &GridComplex, rho: &DensityField, p: f64) -> f64 {
    let measures = top_measures(complex);
    energy_with(&measures, &rho.values, p)
}

fn top_measures(complex: &GridComplex) -> Vec<f64> {
    (0..complex.top_cell_count())
        .map(|r| {
            complex
                .cell_measure(&complex.top_cell_from_rank(r))
                .expect("top cell measure")
        })
        .collect()
}

fn energy_with(measures: &[f64], rho: &[f64], p: f64) -> f64 {
    measures
        .iter()
        .zip(rho)
        .map(|(&s, &r)| s * r.powf(p))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMethod {
    DualAscent,
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub p: f64,
    pub tol_feasibility: f64,
    pub tol_gap: f64,
    pub max_cuts: usize,
    pub inner: InnerMethod,
    pub inner_sweep_cap: usize,
    /// Right-hand side of every member constraint; 1 except in scaling-law
    /// experiments.
    pub threshold: f64,
}

impl SolverConfig {
    pub fn new(p: f64) -> Self {
        SolverConfig {
            p,
            tol_feasibility: 1e-6,
            tol_gap: 1e-7,
            max_cuts: 10_000,
            inner: InnerMethod::DualAscent,
            inner_sweep_cap: 400,
            threshold: 1.0,
        }
    }

    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(1.05..=20.0).contains(&self.p) {
            return Err(SolverError::BadExponent(self.p));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cuts: usize,
    pub lower: f64,
    pub upper: f64,
    pub min_weight: f64,
}

/// Modulus value with primal/dual certificates and the active constraints.
#[derive(Debug, Clone)]
pub struct ModulusResult {
    pub value: f64,
    pub rho: DensityField,
    pub active: Vec<(SliceMember, f64)>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub flags: Vec<String>,
}

impl ModulusResult {
    pub fn gap(&self) -> f64 {
        (self.upper_bound - self.lower_bound) / self.lower_bound.max(1e-300)
    }
}

const A_CLAMP: f64 = 1e-30;

struct InnerState {
    p: f64,
    exponent: f64,
    measures: Vec<f64>,
    /// sum_S lambda_S N_{S,c}
    a: Vec<f64>,
    lambda: Vec<f64>,
    rho: Vec<f64>,
}

impl InnerState {
    fn new(measures: Vec<f64>, p: f64) -> Self {
        let cells = measures.len();
        InnerState {
            p,
            exponent: 1.0 / (p - 1.0),
            measures,
            a: vec![0.0; cells],
            lambda: Vec::new(),
            rho: vec![0.0; cells],
        }
    }

    fn rho_of(&self, a: f64, cell: usize) -> f64 {
        (a.max(A_CLAMP) / (self.p * self.measures[cell])).powf(self.exponent)
    }

    fn refresh_rho(&mut self) {
        for c in 0..self.a.len() {
            self.rho[c] = self.rho_of(self.a[c], c);
        }
    }

    fn weight(&self, constraint: &[(u32, f64)]) -> f64 {
        constraint
            .iter()
            .map(|&(c, n)| n * self.rho[c as usize])
            .sum()
    }

    fn shift_lambda(&mut self, idx: usize, members: &[SliceMember], delta: f64) {
        self.lambda[idx] += delta;
        for &(c, n) in members[idx].constraint() {
            let c = c as usize;
            self.a[c] += delta * n;
            self.rho[c] = self.rho_of(self.a[c], c);
        }
    }

    /// Lagrangian dual value at the current multipliers.
    fn dual_value(&self, threshold: f64) -> f64 {
        let sum_l: f64 = self.lambda.iter().sum();
        let e = energy_with(&self.measures, &self.rho, self.p);
        threshold * sum_l - (self.p - 1.0) * e
    }

    /// Exact coordinate maximization: pick lambda_idx >= 0 so the member
    /// weight meets the threshold (or drop to 0 if already above it).
    fn solve_coordinate(&mut self, idx: usize, members: &[SliceMember], threshold: f64) {
        let constraint = members[idx].constraint().to_vec();
        if constraint.is_empty() {
            return;
        }
        let weight_and_slope = |state: &InnerState| -> (f64, f64) {
            let mut w = 0.0;
            let mut slope = 0.0;
            for &(c, n) in &constraint {
                let c = c as usize;
                let a = state.a[c].max(A_CLAMP);
                let ps = state.p * state.measures[c];
                let r = (a / ps).powf(state.exponent);
                w += n * r;
                slope += n * n * state.exponent * r / a;
            }
            (w, slope)
        };
        // Try dropping the multiplier entirely.
        let current = self.lambda[idx];
        self.shift_lambda(idx, members, -current);
        let (w0, slope0) = weight_and_slope(self);
        if w0 >= threshold {
            return;
        }
        // Bracket [lo, hi] with w(lo) < threshold <= w(hi).
        let mut lo = 0.0f64;
        let mut hi = if current > 0.0 {
            current
        } else {
            // Initial scale from the solo closed form.
            let guess = slope0.max(1e-300);
            (threshold - w0) / guess
        };
        self.shift_lambda(idx, members, hi);
        let mut grow = 0;
        while weight_and_slope(self).0 < threshold && grow < 200 {
            let step = hi.max(1e-12);
            self.shift_lambda(idx, members, step);
            lo = hi;
            hi += step;
            grow += 1;
        }
        // Safeguarded Newton on w(t) = threshold within [lo, hi].
        let mut t = hi;
        for _ in 0..80 {
            let (w, slope) = weight_and_slope(self);
            if (w - threshold).abs() <= 1e-13 * threshold.max(1.0) {
                break;
            }
            if w > threshold {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = if slope > 0.0 {
                t + (threshold - w) / slope
            } else {
                0.5 * (lo + hi)
            };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-16 * t.max(1.0) {
                break;
            }
            self.shift_lambda(idx, members, next - t);
            t = next;
        }
    }

    fn sweep_dual_ascent(&mut self, members: &[SliceMember], threshold: f64) -> f64 {
        for idx in 0..members.len() {
            self.solve_coordinate(idx, members, threshold);
        }
        // Worst complementarity violation.
        let mut viol = 0.0f64;
        for (idx, member) in members.iter().enumerate() {
            let w = self.weight(member.constraint());
            if self.lambda[idx] > 0.0 {
                viol = viol.max((w - threshold).abs());
            } else {
                viol = viol.max((threshold - w).max(0.0));
            }
        }
        viol
    }

    fn sweep_projected_gradient(&mut self, members: &[SliceMember], threshold: f64) -> f64 {
        // One projected gradient ascent step on the dual with backtracking.
        let g0 = self.dual_value(threshold);
        let grad: Vec<f64> = members
            .iter()
            .map(|m| threshold - self.weight(m.constraint()))
            .collect();
        let mut step = 1.0;
        for _ in 0..60 {
            let mut deltas = Vec::with_capacity(members.len());
            for (idx, g) in grad.iter().enumerate() {
                let target = (self.lambda[idx] + step * g).max(0.0);
                deltas.push(target - self.lambda[idx]);
            }
            for (idx, &d) in deltas.iter().enumerate() {
                if d != 0.0 {
                    self.shift_lambda(idx, members, d);
                }
            }
            if self.dual_value(threshold) > g0 - 1e-300 {
                break;
            }
            // Roll back and halve.
            for (idx, &d) in deltas.iter().enumerate() {
                if d != 0.0 {
                    self.shift_lambda(idx, members, -d);
                }
            }
            step *= 0.5;
        }
        let mut viol = 0.0f64;
        for (idx, member) in members.iter().enumerate() {
            let w = self.weight(member.constraint());
            if self.lambda[idx] > 0.0 {
                viol = viol.max((w - threshold).abs());
            } else {
                viol = viol.max((threshold - w).max(0.0));
            }
        }
        viol
    }
}

/// Solve the modulus of the family named by `handle`.
pub fn solve_modulus(
    complex: &GridComplex,
    handle: &FamilyHandle,
    config: &SolverConfig,
) -> Result<ModulusResult, SolverError> {
    config.validate()?;
    let oracle = family_oracle(complex, handle)?;
    solve_with(complex, config, |rho| oracle.min_member(rho))
}

/// Solve over an explicit finite member list (exhaustion and cut-order
/// experiments use this directly).
pub fn solve_over_members(
    complex: &GridComplex,
    members: &[SliceMember],
    config: &SolverConfig,
) -> Result<ModulusResult, SolverError> {
    config.validate()?;
    solve_with(complex, config, |rho| {
        let mut best: Option<(usize, f64)> = None;
        for (i, member) in members.iter().enumerate() {
            let w = member.weight(rho);
            if best.is_none_or(|(_, bw)| w < bw) {
                best = Some((i, w));
            }
        }
        Ok(best.map(|(i, w)| (members[i].clone(), w)))
    })
}

fn solve_with<F>(
    complex: &GridComplex,
    config: &SolverConfig,
    oracle: F,
) -> Result<ModulusResult, SolverError>
where
    F: Fn(&DensityField) -> Result<Option<(SliceMember, f64)>, FamilyError>,
{
    let threshold = config.threshold;
    let mut state = InnerState::new(top_measures(complex), config.p);
    let mut active: Vec<SliceMember> = Vec::new();
    let mut signatures: HashSet<u64> = HashSet::new();
    let mut iterations = Vec::new();
    let mut flags = Vec::new();
    let mut inner_tol = (config.tol_gap * 1e-2).min(1e-9);
    let mut tightened = 0u32;
    let mut converged = false;

    loop {
        // Inner solve on the active set.
        if !active.is_empty() {
            let mut ok = false;
            for _ in 0..config.inner_sweep_cap {
                let viol = match config.inner {
                    InnerMethod::DualAscent => state.sweep_dual_ascent(&active, threshold),
                    InnerMethod::ProjectedGradient => {
                        state.sweep_projected_gradient(&active, threshold)
                    }
                };
                if viol <= inner_tol * threshold.max(1.0) {
                    ok = true;
                    break;
                }
            }
            if !ok && !flags.iter().any(|f| f == "inner-not-converged") {
                flags.push("inner-not-converged".into());
            }
        }
        state.refresh_rho();
        let rho = DensityField {
            values: state.rho.clone(),
        };

        let probe = oracle(&rho)?;
        let Some((member, min_weight)) = probe else {
            // Empty family: no constraints, infimum at rho = 0.
            return Ok(ModulusResult {
                value: 0.0,
                rho: DensityField::zeros(complex),
                active: Vec::new(),
                lower_bound: 0.0,
                upper_bound: 0.0,
                iterations,
                converged: true,
                flags,
            });
        };

        let lower = state.dual_value(threshold).max(0.0);
        let upper = if min_weight > 0.0 {
            energy_with(&state.measures, &state.rho, config.p)
                * (threshold / min_weight).powf(config.p)
        } else {
            f64::INFINITY
        };
        iterations.push(IterationRecord {
            iteration: iterations.len(),
            cuts: active.len(),
            lower,
            upper,
            min_weight,
        });

        let feasible = min_weight >= threshold * (1.0 - config.tol_feasibility);
        let gap_ok = upper.is_finite() && (upper - lower) <= config.tol_gap * lower.max(1e-300);
        if feasible && gap_ok {
            converged = true;
            break;
        }
        if active.len() >= config.max_cuts {
            flags.push("max-cuts-exceeded".into());
            break;
        }
        let sig = member.signature();
        if !signatures.insert(sig) {
            // The oracle repeated a known member: the inner solve needs to
            // be tighter, or we are at numerical stall.
            if feasible {
                converged = true;
                break;
            }
            inner_tol *= 1e-2;
            tightened += 1;
            if tightened > 3 {
                flags.push("stalled-on-duplicate-cut".into());
                break;
            }
            continue;
        }
        active.push(member);
        state.lambda.push(0.0);
    }

    state.refresh_rho();
    let rho_raw = DensityField {
        values: state.rho.clone(),
    };
    let last = iterations.last();
    let min_weight = last.map_or(0.0, |r| r.min_weight);
    let lower = last.map_or(0.0, |r| r.lower);
    let (value, rho, upper) = if min_weight > 0.0 {
        let feasible_rho = rho_raw.scaled(threshold / min_weight);
        let e = energy_with(&state.measures, &feasible_rho.values, config.p);
        (e, feasible_rho, e)
    } else {
        (f64::INFINITY, rho_raw, f64::INFINITY)
    };
    let active_out = active
        .into_iter()
        .zip(state.lambda.iter().copied())
        .collect();
    Ok(ModulusResult {
        value,
        rho,
        active: active_out,
        lower_bound: lower,
        upper_bound: upper,
        iterations,
        converged,
        flags,
    })
}

/// Divide by the oracle minimum so the density becomes admissible.
pub fn rescale_to_feasible(
    complex: &GridComplex,
    rho: &DensityField,
    handle: &FamilyHandle,
) -> Result<DensityField, SolverError> {
    let oracle = family_oracle(complex, handle)?;
    let Some((_, w)) = oracle.min_member(rho)? else {
        return Err(SolverError::ZeroMinWeight);
    };
    if w <= 0.0 {
        return Err(SolverError::ZeroMinWeight);
    }
    Ok(rho.scaled(1.0 / w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{axis_members, Mode, Side};
    use crate::grid::{build_grid, BoxSpec};

    fn box_2x1(m: u32) -> GridComplex {
        build_grid(&BoxSpec {
            n: 2,
            k: 1,
            side_q1: vec![2.0],
            side_q2: vec![1.0],
            m,
            deformation: crate::grid::Deformation::Identity,
        })
        .unwrap()
    }

    #[test]
    fn face_density_averages_neighbors() {
        let g = build_grid(&BoxSpec::unit(2, 1, 2)).unwrap();
        let mut rho = DensityField::zeros(&g);
        rho.values = vec![1.0, 3.0, 5.0, 7.0];
        // Interior vertical edge between cells (0,0) and (1,0): ranks 0, 2.
        let edge = CellId {
            mask: 0b10,
            coords: [1, 0, 0, 0],
        };
        assert!((face_density_value(&g, &rho, &edge) - 3.0).abs() < 1e-15);
        // Boundary edge with a single neighbor.
        let edge = CellId {
            mask: 0b10,
            coords: [0, 0, 0, 0],
        };
        assert!((face_density_value(&g, &rho, &edge) - 1.0).abs() < 1e-15);
        // Uniform density averages to itself on every face.
        let rho = DensityField::uniform(&g, 2.5);
        for dim in 0..2 {
            for cell in g.cells(dim) {
                assert!((face_density_value(&g, &rho, &cell) - 2.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn energy_examples() {
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        for p in [1.5, 2.0, 3.0] {
            assert!((energy(&g, &DensityField::uniform(&g, 1.0), p) - 1.0).abs() < 1e-12);
        }
        let g = box_2x1(2);
        assert!((energy(&g, &DensityField::uniform(&g, 0.5), 2.0) - 0.5).abs() < 1e-12);
        let c: f64 = 1.7;
        let p = 2.5;
        assert!((energy(&g, &DensityField::uniform(&g, c), p) - c.powf(p) * 2.0).abs() < 1e-10);
    }

    #[test]
    fn axis_modulus_unit_square_is_one() {
        for m in [2u32, 4, 8] {
            let g = build_grid(&BoxSpec::unit(2, 1, m)).unwrap();
            let handle = FamilyHandle::new(Side::A, Mode::AxisRestricted);
            let result = solve_modulus(&g, &handle, &SolverConfig::new(2.0)).unwrap();
            assert!(result.converged);
            assert!((result.value - 1.0).abs() < 1e-6, "m={m}: {}", result.value);
            for v in &result.rho.values {
                assert!((v - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn axis_modulus_matches_product_formula() {
        // mod_p Gamma_A = H^{n-k}(Q2) / H^k(Q1)^{p-1}; box (2)x(1), p=2: 1/2.
        let g = box_2x1(2);
        let ha = FamilyHandle::new(Side::A, Mode::AxisRestricted);
        let result = solve_modulus(&g, &ha, &SolverConfig::new(2.0)).unwrap();
        assert!((result.value - 0.5).abs() < 1e-7, "{}", result.value);
        // And the B side at q = 2 gives 2.
        let hb = FamilyHandle::new(Side::B, Mode::AxisRestricted);
        let result = solve_modulus(&g, &hb, &SolverConfig::new(2.0)).unwrap();
        assert!((result.value - 2.0).abs() < 1e-6, "{}", result.value);
    }

    #[test]
    fn empty_family_has_zero_modulus() {
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        let result = solve_over_members(&g, &[], &SolverConfig::new(2.0)).unwrap();
        assert_eq!(result.value, 0.0);
        assert!(result.converged);
    }

    #[test]
    fn single_member_closed_form() {
        // One fiber of the unit square at m=2: two cells, weights 1/2 each,
        // measures 1/4. Lagrange: value = 1 / sum(w^2/sigma) = 1/2 at p=2.
        let g = build_grid(&BoxSpec::unit(2, 1, 2)).unwrap();
        let members =
            axis_members(&g, &FamilyHandle::new(Side::A, Mode::AxisRestricted)).unwrap();
        let single = vec![members[0].clone()];
        let result = solve_over_members(&g, &single, &SolverConfig::new(2.0)).unwrap();
        assert!((result.value - 0.5).abs() < 1e-9, "{}", result.value);
        assert!(result.gap() <= 1e-7);
    }

    #[test]
    fn certificate_sandwich_and_rescale() {
        let g = box_2x1(4);
        let handle = FamilyHandle::new(Side::A, Mode::Full);
        let result = solve_modulus(&g, &handle, &SolverConfig::new(2.0)).unwrap();
        assert!(result.converged);
        assert!(result.lower_bound <= result.value + 1e-12);
        assert!(result.value <= result.upper_bound + 1e-12);
        // Independent feasibility check of the returned density.
        let oracle = family_oracle(&g, &handle).unwrap();
        let (_, w) = oracle.min_member(&result.rho).unwrap().unwrap();
        assert!(w >= 1.0 - 1e-6, "min weight {w}");
        // rescale_to_feasible on a deliberately small density.
        let rho = result.rho.scaled(0.5);
        let rescaled = rescale_to_feasible(&g, &rho, &handle).unwrap();
        let (_, w) = oracle.min_member(&rescaled).unwrap().unwrap();
        assert!((w - 1.0).abs() < 1e-9);
        // Zero density cannot be rescaled.
        assert!(matches!(
            rescale_to_feasible(&g, &DensityField::zeros(&g), &handle),
            Err(SolverError::ZeroMinWeight)
        ));
    }

    #[test]
    fn scaling_law_is_exact() {
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        let handle = FamilyHandle::new(Side::A, Mode::AxisRestricted);
        let mut config = SolverConfig::new(2.0);
        config.tol_gap = 1e-12;
        let base = solve_modulus(&g, &handle, &config).unwrap().value;
        for t in [0.5f64, 2.0] {
            let mut scaled = config;
            scaled.threshold = t;
            let got = solve_modulus(&g, &handle, &scaled).unwrap().value;
            let want = t.powf(2.0) * base;
            assert!(
                (got - want).abs() <= 1e-9 * want.max(1.0),
                "t={t}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn inner_methods_agree() {
        let g = build_grid(&BoxSpec::unit(2, 1, 4)).unwrap();
        let handle = FamilyHandle::new(Side::A, Mode::Full);
        let mut config = SolverConfig::new(3.0);
        let a = solve_modulus(&g, &handle, &config).unwrap();
        config.inner = InnerMethod::ProjectedGradient;
        config.inner_sweep_cap = 20_000;
        let b = solve_modulus(&g, &handle, &config).unwrap();
        assert!(
            (a.value - b.value).abs() < 1e-4 * a.value,
            "{} vs {}",
            a.value,
            b.value
        );
    }

    #[test]
    fn rejects_out_of_range_p() {
        let g = build_grid(&BoxSpec::unit(2, 1, 2)).unwrap();
        for p in [1.0, 1.04, 25.0] {
            let handle = FamilyHandle::new(Side::A, Mode::AxisRestricted);
            assert!(matches!(
                solve_modulus(&g, &handle, &SolverConfig::new(p)),
                Err(SolverError::BadExponent(_))
            ));
        }
    }
}
