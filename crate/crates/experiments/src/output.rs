//! CSV writers. Every file starts with a `# ` comment line holding the run
//! manifest as compact JSON, followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::RoiRow;
use crate::sweep::RatioPoint;
use crate::ExperimentError;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv<M: Serialize>(path: &Path, manifest: &M, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let manifest = serde_json::to_string(manifest).map_err(|e| ExperimentError::Io(e.to_string()))?;
    writeln!(out, "# {manifest}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| ExperimentError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub const ROI_HEADER: [&str; 12] = [
    "value_msat",
    "protocol",
    "roi_msat",
    "log_modulus_roi",
    "strategy",
    "budget_msat",
    "gamma",
    "n_tx",
    "profit_msat",
    "penalty_msat",
    "payments",
    "redirected_msat",
];

pub fn roi_records(rows: &[RoiRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let roi = &r.report.roi;
            vec![
                r.tx_value.msat().to_string(),
                r.protocol.to_string(),
                roi.roi.to_string(),
                format!("{:.6}", roi.log_modulus_roi),
                r.report.strategy.to_string(),
                r.budget.msat().to_string(),
                r.gamma.to_string(),
                roi.n_tx.to_string(),
                roi.profit_processed.msat().to_string(),
                roi.total_griefing_penalty.msat().to_string(),
                (r.report.payments + u64::from(!r.report.partial_value.is_zero())).to_string(),
                r.report.redirected.msat().to_string(),
            ]
        })
        .collect()
}

pub const RATIO_PATHLEN_HEADER: [&str; 4] = ["n", "multiple", "gamma", "value_msat"];
pub const RATIO_GAMMA_HEADER: [&str; 4] = ["gamma", "n", "multiple", "value_msat"];

pub fn ratio_pathlen_records(points: &[RatioPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| vec![p.hops.to_string(), format!("{:.9}", p.multiple), p.gamma.to_string(), p.value.msat().to_string()])
        .collect()
}

pub fn ratio_gamma_records(points: &[RatioPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| vec![p.gamma.to_string(), p.hops.to_string(), format!("{:.9}", p.multiple), p.value.msat().to_string()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_line_then_header() {
        let dir = std::env::temp_dir().join(format!("htlcgp-out-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_csv(&path, &serde_json::json!({"seed": 3}), &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# {\"seed\":3}\na,b\n1,\"x,y\"\n");
        std::fs::remove_dir_all(dir).unwrap();
    }
}
