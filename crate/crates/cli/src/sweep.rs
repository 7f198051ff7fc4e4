//! Variant × delay grid runs.

use rayon::prelude::*;
use redsim_core::metrics::{csv_rows, metrics_csv, summary_table, CSV_HEADER};
use redsim_core::RedVariant;
use sha2::{Digest, Sha256};

use crate::execute::{
    execute, manifest_text, Artifacts, CellOutcome, RunError, MANIFEST_FILE, METRICS_FILE,
    SUMMARY_CSV, SUMMARY_TXT,
};
use crate::scenario_file::{render_scenario, ScenarioFile};

pub const DEFAULT_DELAYS_MS: [u32; 2] = [15, 80];
pub const PARTIAL_NOTE: &str = "PARTIAL.txt";

/// `base_seed` plus the first eight bytes of SHA-256(label), little-endian.
pub fn cell_seed(base_seed: u64, label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    base_seed.wrapping_add(u64::from_le_bytes(bytes))
}

pub fn cell_label(variant: RedVariant, delay_ms: u32) -> String {
    format!("{variant}-{delay_ms}ms")
}

/// Grid cells in report order: delay-major, then variant.
pub fn plan(base: &ScenarioFile, variants: &[RedVariant], delays_ms: &[u32]) -> Vec<ScenarioFile> {
    let mut cells = Vec::with_capacity(variants.len() * delays_ms.len());
    for &d in delays_ms {
        for &v in variants {
            let label = cell_label(v, d);
            let mut sc = base.scenario.clone();
            sc.variant = v;
            sc.bottleneck_delay = f64::from(d) / 1000.0;
            sc.seed = cell_seed(base.scenario.seed, &label);
            let mut cell = ScenarioFile::new(label, sc);
            cell.output_dir = None;
            cells.push(cell);
        }
    }
    cells
}

/// Runs every cell. The result order follows `cells` whether or not the
/// cells run in parallel.
pub fn run_cells(cells: &[ScenarioFile], parallel: bool) -> Vec<Result<CellOutcome, RunError>> {
    if parallel {
        cells.par_iter().map(execute).collect()
    } else {
        cells.iter().map(execute).collect()
    }
}

/// Combined report plus one CSV and one scenario file per cell.
pub fn sweep_artifacts(base: &ScenarioFile, cells: &[ScenarioFile], outcomes: &[CellOutcome]) -> Artifacts {
    let runs: Vec<_> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let report = summary_table(&runs);
    let mut files = vec![
        (METRICS_FILE.to_string(), metrics_csv(&runs)),
        (SUMMARY_TXT.to_string(), report.text),
        (SUMMARY_CSV.to_string(), report.csv),
    ];
    for (cell, out) in cells.iter().zip(outcomes) {
        files.push((
            format!("cells/{}.csv", cell.id),
            format!("{CSV_HEADER}\n{}", csv_rows(&out.summary)),
        ));
        files.push((format!("cells/{}.scn", cell.id), render_scenario(cell)));
    }
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push(MANIFEST_FILE.to_string());
    let grid: Vec<String> = cells
        .iter()
        .map(|c| format!("cell {} seed = {}", c.id, c.scenario.seed))
        .collect();
    files.push((MANIFEST_FILE.to_string(), manifest_text("sweep", base, &names, &grid)));
    files
}

/// Files for the cells that finished, plus a note naming the failures.
pub fn partial_artifacts(
    cells: &[ScenarioFile],
    outcomes: &[Result<CellOutcome, RunError>],
) -> Artifacts {
    let mut files = Vec::new();
    let mut note = String::from("sweep incomplete; no combined report was written\n");
    for (cell, out) in cells.iter().zip(outcomes) {
        match out {
            Ok(o) => {
                files.push((
                    format!("cells/{}.csv", cell.id),
                    format!("{CSV_HEADER}\n{}", csv_rows(&o.summary)),
                ));
                note.push_str(&format!("{}: ok\n", cell.id));
            }
            Err(e) => note.push_str(&format!("{}: failed: {e}\n", cell.id)),
        }
    }
    files.push((PARTIAL_NOTE.to_string(), note));
    files
}

#[cfg(test)]
mod tests {
    use super::*;
    use redsim_core::Scenario;

    #[test]
    fn cell_seed_is_stable_and_label_dependent() {
        assert_eq!(cell_seed(1, "RED1-15ms"), cell_seed(1, "RED1-15ms"));
        assert_ne!(cell_seed(1, "RED1-15ms"), cell_seed(1, "RED2-15ms"));
        assert_eq!(cell_seed(5, "x").wrapping_sub(cell_seed(0, "x")), 5);
        // SHA-256("") begins e3 b0 c4 42 98 fc 1c 14.
        assert_eq!(cell_seed(0, ""), 0x141c_fc98_42c4_b0e3);
    }

    #[test]
    fn adding_cells_keeps_existing_seeds() {
        let base = ScenarioFile::new("b", Scenario::default());
        let small = plan(&base, &[RedVariant::Red1], &[15]);
        let big = plan(&base, &RedVariant::ALL, &DEFAULT_DELAYS_MS);
        assert_eq!(big.len(), 10);
        let same = big.iter().find(|c| c.id == small[0].id).unwrap();
        assert_eq!(same.scenario, small[0].scenario);
    }

    #[test]
    fn plan_order_is_delay_major() {
        let base = ScenarioFile::new("b", Scenario::default());
        let ids: Vec<String> = plan(&base, &[RedVariant::Red1, RedVariant::Red5], &[15, 80])
            .into_iter()
            .map(|c| c.id)
            .collect();
        assert_eq!(ids, ["RED1-15ms", "RED5-15ms", "RED1-80ms", "RED5-80ms"]);
    }
}
