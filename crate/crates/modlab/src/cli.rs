//! Command-line front end: config ingestion, experiment dispatch, report
//! emission. Exit codes: 0 all requested checks passed, 1 a paper-backed
//! bound was violated beyond tolerance, 2 invalid config or usage.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, ExperimentConfig};
use crate::families::{FamilyHandle, Side};
use crate::grid::{build_grid, Tag};
use crate::homology::{relative_homology, SNF_CELL_LIMIT};
use crate::lab::{
    capacity_sweep, homology_check, mollifier_check, mollifier_sweep, run_duality, LabError,
};
use crate::mollifier::MollifierError;
use crate::report;
use crate::solver::{solve_modulus, SolverConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_BOUND_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "modlab",
    version,
    about = "Discrete p-modulus laboratory for dual slice families of boxes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the cubical complex of the configured box.
    GridInfo(Common),
    /// Solve one modulus (side and mode from the config).
    Modulus(Common),
    /// Both moduli, the duality product and the configured checks.
    Duality(Common),
    /// Resolution sweep with companion convergence CSVs.
    Converge(Common),
    /// Mollifier admissibility margins and the translation identity.
    MollifyCheck(Common),
    /// Relative homology ranks, generator parity, blocking membership.
    HomologyCheck(Common),
    /// Capacity vs modulus with the level-set lower-bound pairing.
    Capacity(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON, schema modlab/1).
    #[arg(long)]
    config: PathBuf,
    /// Override config keys: --set p=3 --set box.m=8
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for report.json and CSV tables.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the feasibility tolerance.
    #[arg(long = "tol-feas")]
    tol_feas: Option<f64>,
    /// Override the duality-gap tolerance.
    #[arg(long = "tol-gap")]
    tol_gap: Option<f64>,
    /// Suppress per-record stdout lines.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, String> {
        let mut config = load_config(&self.config, &self.set).map_err(|e| e.to_string())?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(t) = self.tol_feas {
            config.tolerances.feasibility = t;
        }
        if let Some(t) = self.tol_gap {
            config.tolerances.gap = t;
        }
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let (common, result) = match &cli.command {
        Command::GridInfo(c) => (c, grid_info(c)),
        Command::Modulus(c) => (c, modulus(c)),
        Command::Duality(c) => (c, duality(c, false)),
        Command::Converge(c) => (c, duality(c, true)),
        Command::MollifyCheck(c) => (c, mollify(c)),
        Command::HomologyCheck(c) => (c, homology(c)),
        Command::Capacity(c) => (c, capacity(c)),
    };
    let _ = common;
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("modlab: {msg}");
            EXIT_USAGE
        }
    }
}

fn grid_info(c: &Common) -> Result<u8, String> {
    let config = c.load()?;
    let complex = build_grid(&config.box_spec).map_err(|e| e.to_string())?;
    let n = complex.n();
    c.say(&format!(
        "box: n={} k={} sides Q1 {:?} Q2 {:?} m={} deformation {:?}",
        n,
        complex.k(),
        config.box_spec.side_q1,
        config.box_spec.side_q2,
        config.box_spec.m,
        config.box_spec.deformation
    ));
    for dim in 0..=n {
        c.say(&format!("  {dim}-cells: {}", complex.cell_count(dim)));
    }
    let mut a = 0usize;
    let mut b = 0usize;
    for cell in complex.cells(n - 1) {
        match complex.boundary_tag(&cell) {
            Some(Tag::A) => a += 1,
            Some(Tag::B) => b += 1,
            _ => {}
        }
    }
    let volume: f64 = (0..complex.top_cell_count())
        .map(|r| {
            complex
                .cell_measure(&complex.top_cell_from_rank(r))
                .unwrap_or(0.0)
        })
        .sum();
    c.say(&format!("  boundary faces: A {a}, B {b}"));
    c.say(&format!("  total volume: {}", report::g17(volume)));
    Ok(EXIT_OK)
}

fn solver_config_of(config: &ExperimentConfig, p: f64) -> SolverConfig {
    let mut sc = SolverConfig::new(p);
    sc.tol_feasibility = config.tolerances.feasibility;
    sc.tol_gap = config.tolerances.gap;
    sc
}

fn modulus(c: &Common) -> Result<u8, String> {
    let config = c.load()?;
    let complex = build_grid(&config.box_spec).map_err(|e| e.to_string())?;
    let p = match config.side {
        Side::A => config.p,
        Side::B | Side::AStar => config.q(),
    };
    let handle = FamilyHandle::new(config.side, config.families);
    let result = solve_modulus(&complex, &handle, &solver_config_of(&config, p))
        .map_err(|e| e.to_string())?;
    c.say(&format!(
        "mod_{p} {:?} ({:?}) = {}  in [{}, {}]  cuts {} iterations {}{}",
        config.side,
        config.families,
        report::g17(result.value),
        report::g17(result.lower_bound),
        report::g17(result.upper_bound),
        result.active.len(),
        result.iterations.len(),
        if result.flags.is_empty() {
            String::new()
        } else {
            format!("  flags {:?}", result.flags)
        }
    ));
    Ok(if result.converged {
        EXIT_OK
    } else {
        EXIT_BOUND_VIOLATION
    })
}

fn map_lab_error(e: LabError) -> Result<u8, String> {
    // Precondition violations surface as usage errors; everything else
    // propagates as a message.
    match &e {
        LabError::Mollifier(MollifierError::EpsilonTooLarge { .. }) | LabError::AxisDeformed => {
            Err(e.to_string())
        }
        _ => Err(e.to_string()),
    }
}

fn duality(c: &Common, sweep_csvs: bool) -> Result<u8, String> {
    let config = c.load()?;
    let report_data = match run_duality(&config) {
        Ok(r) => r,
        Err(e) => return map_lab_error(e),
    };
    for r in &report_data.records {
        c.say(&format!(
            "m={} p={} mod_a={} mod_b={} product={}{}",
            r.m,
            r.p,
            report::g17(r.mod_a),
            report::g17(r.mod_b),
            report::g17(r.product),
            if r.bound_ok { "" } else { "  BOUND VIOLATION" }
        ));
        for check in &r.checks {
            c.say(&format!(
                "  check {}: {} ({})",
                check.name,
                match check.passed {
                    Some(true) => "pass",
                    Some(false) => "fail",
                    None => "info",
                },
                check.detail
            ));
        }
    }
    report::write_report_json(&c.out, &report_data).map_err(|e| e.to_string())?;
    report::write_summary_csv(&c.out, &report_data).map_err(|e| e.to_string())?;
    report::write_solver_trace_csv(&c.out, &report_data).map_err(|e| e.to_string())?;
    if sweep_csvs {
        if config.box_spec.k == 1 && config.box_spec.deformation.is_identity() {
            let rows = capacity_sweep(&config).map_err(|e| e.to_string())?;
            report::write_capacity_csv(&c.out, &rows).map_err(|e| e.to_string())?;
        }
        if config.box_spec.deformation.is_identity() {
            let rows = mollifier_sweep(&config).map_err(|e| e.to_string())?;
            report::write_mollifier_csv(&c.out, &rows).map_err(|e| e.to_string())?;
        }
    }
    Ok(if report_data.passed {
        EXIT_OK
    } else {
        EXIT_BOUND_VIOLATION
    })
}

fn mollify(c: &Common) -> Result<u8, String> {
    let config = c.load()?;
    if config.mollifier.epsilon > config.mollifier.margin {
        return Err(format!(
            "mollifier epsilon {} exceeds the sample margin {}",
            config.mollifier.epsilon, config.mollifier.margin
        ));
    }
    let complex = build_grid(&config.box_spec).map_err(|e| e.to_string())?;
    let r = mollifier_check(&complex, &config).map_err(|e| e.to_string())?;
    c.say(&format!(
        "epsilon={} m={} margin(order {})={} margin(order {})={} translation residue {}",
        r.epsilon,
        r.m,
        config.mollifier.order,
        report::g17(r.margin_at_order),
        config.mollifier.oracle_order,
        report::g17(r.margin_at_oracle_order),
        report::g17(r.translation_max_error)
    ));
    report::write_mollifier_csv(&c.out, &[r.clone()]).map_err(|e| e.to_string())?;
    let deficit = (1.0 - r.margin_at_order).max(0.0);
    Ok(
        if deficit <= config.tolerances.mollifier_deficit && r.translation_max_error <= 1e-12 {
            EXIT_OK
        } else {
            EXIT_BOUND_VIOLATION
        },
    )
}

fn homology(c: &Common) -> Result<u8, String> {
    let config = c.load()?;
    let complex = build_grid(&config.box_spec).map_err(|e| e.to_string())?;
    if complex.total_cell_count() > SNF_CELL_LIMIT {
        return Err(format!(
            "{} cells exceed the homology size limit {SNF_CELL_LIMIT}",
            complex.total_cell_count()
        ));
    }
    let bundle =
        homology_check(&complex, config.seed, 5).map_err(|e| e.to_string())?;
    // Per-(dim, subcomplex) table.
    let mut table = Vec::new();
    for tag in [Some(Tag::A), Some(Tag::B), None] {
        for dim in 0..=complex.n() {
            let rep = relative_homology(&complex, tag, dim).map_err(|e| e.to_string())?;
            table.push(serde_json::json!({
                "subcomplex": match tag {
                    Some(Tag::A) => "A",
                    Some(Tag::B) => "B",
                    _ => "empty",
                },
                "dim": dim,
                "betti": rep.betti,
                "torsion": rep.torsion,
            }));
        }
    }
    let doc = serde_json::json!({
        "table": table,
        "generator_parity": bundle.generator_parity,
        "axis_b_in_star": bundle.axis_b_in_star,
        "min_cuts_in_star": bundle.min_cuts_in_star,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
    report::atomic_write(&c.out.join("homology.json"), format!("{text}\n").as_bytes())
        .map_err(|e| e.to_string())?;
    c.say(&text);
    let ok = bundle.betti_a == 1
        && bundle.betti_b == 1
        && bundle.torsion_a.is_empty()
        && bundle.torsion_b.is_empty()
        && bundle.generator_parity == 1
        && bundle.axis_b_in_star != Some(false)
        && bundle.min_cuts_in_star != Some(false);
    Ok(if ok { EXIT_OK } else { EXIT_BOUND_VIOLATION })
}

fn capacity(c: &Common) -> Result<u8, String> {
    let config = c.load()?;
    let rows = capacity_sweep(&config).map_err(|e| e.to_string())?;
    let mut ok = true;
    for (m, r) in &rows {
        c.say(&format!(
            "m={} p={} cap={} mod={} gap={} lower-bound product={}",
            m,
            r.p,
            report::g17(r.capacity),
            report::g17(r.modulus),
            report::g17(r.relative_gap),
            report::g17(r.lower_bound_product)
        ));
        if r.relative_gap > config.tolerances.capacity_gap
            || r.lower_bound_product < 1.0 - config.tolerances.capacity_gap
        {
            ok = false;
        }
    }
    report::write_capacity_csv(&c.out, &rows).map_err(|e| e.to_string())?;
    Ok(if ok { EXIT_OK } else { EXIT_BOUND_VIOLATION })
}
