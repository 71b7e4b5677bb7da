//! Report and CSV emission: UTF-8, LF line endings, 17 significant digits,
//! written atomically (temp file + rename).

use std::io;
use std::path::{Path, PathBuf};

use crate::capacity::CapacityReport;
use crate::lab::{DualityReport, MollifierReport};
use crate::solver::IterationRecord;

/// Full-precision decimal form: 17 significant digits survive a f64
/// round-trip.
pub fn g17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        format!("{x}")
    }
}

fn opt_g17(x: Option<f64>) -> String {
    x.map(g17).unwrap_or_default()
}

/// Write atomically: a temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(dir);
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    tmp.push(format!(
        ".tmp-{}-{stamp}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// `report.json`: config echo plus per-resolution records and verdicts.
pub fn write_report_json(dir: &Path, report: &DualityReport) -> io::Result<PathBuf> {
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    text.push('\n');
    atomic_write(&path, text.as_bytes())?;
    Ok(path)
}

/// `summary.csv`: one row per resolution.
pub fn write_summary_csv(dir: &Path, report: &DualityReport) -> io::Result<PathBuf> {
    let path = dir.join("summary.csv");
    let mut out = String::from("m,p,q,mod_a,mod_b,product,exact_a,exact_b,verdict\n");
    for r in &report.records {
        let verdict = r.converged
            && r.bound_ok
            && r.checks.iter().all(|c| c.passed != Some(false));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.m,
            g17(r.p),
            g17(r.q),
            g17(r.mod_a),
            g17(r.mod_b),
            g17(r.product),
            opt_g17(r.exact_a),
            opt_g17(r.exact_b),
            if verdict { "pass" } else { "fail" }
        ));
    }
    atomic_write(&path, out.as_bytes())?;
    Ok(path)
}

/// `solver_trace.csv`: iteration logs of every solve in the report.
pub fn write_solver_trace_csv(dir: &Path, report: &DualityReport) -> io::Result<PathBuf> {
    let path = dir.join("solver_trace.csv");
    let mut out = String::from("m,side,iteration,cuts,lb,ub,min_weight\n");
    let mut emit = |m: u32, side: &str, rows: &[IterationRecord]| {
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                m,
                side,
                r.iteration,
                r.cuts,
                g17(r.lower),
                g17(r.upper),
                g17(r.min_weight)
            ));
        }
    };
    for r in &report.records {
        emit(r.m, "a", &r.trace_a);
        emit(r.m, "b", &r.trace_b);
    }
    atomic_write(&path, out.as_bytes())?;
    Ok(path)
}

/// `capacity.csv`: (m, p, cap, mod, gap) rows.
pub fn write_capacity_csv(dir: &Path, rows: &[(u32, CapacityReport)]) -> io::Result<PathBuf> {
    let path = dir.join("capacity.csv");
    let mut out = String::from("m,p,cap,mod,gap,lower_bound_product,coarea_error\n");
    for (m, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m,
            g17(r.p),
            g17(r.capacity),
            g17(r.modulus),
            g17(r.relative_gap),
            g17(r.lower_bound_product),
            g17(r.coarea_relative_error)
        ));
    }
    atomic_write(&path, out.as_bytes())?;
    Ok(path)
}

/// `mollifier.csv`: (epsilon, m, margin) convergence rows.
pub fn write_mollifier_csv(dir: &Path, rows: &[MollifierReport]) -> io::Result<PathBuf> {
    let path = dir.join("mollifier.csv");
    let mut out = String::from("epsilon,m,margin,margin_oracle,translation_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            g17(r.epsilon),
            r.m,
            g17(r.margin_at_order),
            g17(r.margin_at_oracle_order),
            g17(r.translation_max_error)
        ));
    }
    atomic_write(&path, out.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips() {
        for x in [1.0, 1.0 / 3.0, 0.1234567890123456789, 2e-300, -7.5e12] {
            let s = g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = std::env::temp_dir().join(format!("modlab-report-test-{}", std::process::id()));
        let path = dir.join("x.txt");
        atomic_write(&path, b"one\n").unwrap();
        atomic_write(&path, b"two\n").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
