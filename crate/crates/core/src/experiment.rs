//! Scenario-matrix driver: expands an experiment configuration into the
//! cross product of evacuee counts, algorithms, comms modes, and seeds, runs
//! every cell, and renders per-run and per-cell CSV tables. Rows are sorted
//! by (count, algorithm label, comms label, seed) so output is stable no
//! matter how the runs were scheduled.

use crate::building::BuildingGraph;
use crate::comms::CommsMode;
use crate::config::ExperimentConfig;
use crate::sim::{run_scenario, Algorithm, RunMetrics, Scenario, SimError};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub scenario: Scenario,
    pub metrics: RunMetrics,
}

/// Per-cell aggregate over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub evacuees: u32,
    pub algorithm: Algorithm,
    pub comms: CommsMode,
    pub survivor_pct_mean: f64,
    pub survivor_pct_min: f64,
    pub survivor_pct_max: f64,
    pub drained_mean: f64,
    pub drained_min: u32,
    pub drained_max: u32,
}

/// All cells of the matrix in deterministic order.
pub fn scenarios(cfg: &ExperimentConfig) -> Vec<Scenario> {
    let mut out = Vec::new();
    for &evacuee_count in &cfg.counts {
        for &algorithm in &cfg.algorithms {
            for &comms in &cfg.comms_modes {
                for &seed in &cfg.seeds {
                    out.push(Scenario {
                        evacuee_count,
                        algorithm,
                        comms,
                        seed,
                    });
                }
            }
        }
    }
    out
}

fn sort_rows(rows: &mut [RunRow]) {
    rows.sort_by(|a, b| {
        (
            a.scenario.evacuee_count,
            a.scenario.algorithm.to_string(),
            a.scenario.comms.to_string(),
            a.scenario.seed,
        )
            .cmp(&(
                b.scenario.evacuee_count,
                b.scenario.algorithm.to_string(),
                b.scenario.comms.to_string(),
                b.scenario.seed,
            ))
    });
}

/// Run every cell sequentially on the calling thread.
pub fn run_matrix_sequential(
    graph: &BuildingGraph,
    cfg: &ExperimentConfig,
) -> Result<Vec<RunRow>, SimError> {
    let mut rows = Vec::new();
    for scenario in scenarios(cfg) {
        let metrics = run_scenario(graph, &cfg.params, scenario)?;
        rows.push(RunRow { scenario, metrics });
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Run every cell across the rayon thread pool. Runs are independent, each
/// owns its RNG stream, and rows are re-sorted afterwards, so scheduling
/// cannot change the output.
#[cfg(feature = "parallel")]
pub fn run_matrix_parallel(
    graph: &BuildingGraph,
    cfg: &ExperimentConfig,
) -> Result<Vec<RunRow>, SimError> {
    use rayon::prelude::*;
    let mut rows = scenarios(cfg)
        .into_par_iter()
        .map(|scenario| {
            run_scenario(graph, &cfg.params, scenario).map(|metrics| RunRow { scenario, metrics })
        })
        .collect::<Result<Vec<RunRow>, SimError>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

/// Run the whole matrix, in parallel when the `parallel` feature is on.
pub fn run_matrix(graph: &BuildingGraph, cfg: &ExperimentConfig) -> Result<Vec<RunRow>, SimError> {
    #[cfg(feature = "parallel")]
    {
        run_matrix_parallel(graph, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_matrix_sequential(graph, cfg)
    }
}

/// Collapse sorted rows into one aggregate per (count, algorithm, comms).
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut sizes: Vec<u32> = Vec::new();
    for row in rows {
        let key = (
            row.scenario.evacuee_count,
            row.scenario.algorithm,
            row.scenario.comms,
        );
        let pct = row.metrics.survivor_pct;
        let drained = row.metrics.drained_phones;
        match out.last_mut() {
            Some(s) if (s.evacuees, s.algorithm, s.comms) == key => {
                let n = sizes.last_mut().unwrap();
                *n += 1;
                s.survivor_pct_mean += pct;
                s.survivor_pct_min = s.survivor_pct_min.min(pct);
                s.survivor_pct_max = s.survivor_pct_max.max(pct);
                s.drained_mean += drained as f64;
                s.drained_min = s.drained_min.min(drained);
                s.drained_max = s.drained_max.max(drained);
            }
            _ => {
                sizes.push(1);
                out.push(SummaryRow {
                    evacuees: key.0,
                    algorithm: key.1,
                    comms: key.2,
                    survivor_pct_mean: pct,
                    survivor_pct_min: pct,
                    survivor_pct_max: pct,
                    drained_mean: drained as f64,
                    drained_min: drained,
                    drained_max: drained,
                });
            }
        }
    }
    for (s, n) in out.iter_mut().zip(&sizes) {
        s.survivor_pct_mean /= *n as f64;
        s.drained_mean /= *n as f64;
    }
    out
}

pub const RESULTS_HEADER: &str = "evacuees,algorithm,comms,seed,survivors,survivor_pct,casualties,trapped,drained_phones,mean_evac_time_s,total_energy_j";

pub const SUMMARY_HEADER: &str = "evacuees,algorithm,comms,survivor_pct_mean,survivor_pct_min,survivor_pct_max,drained_phones_mean,drained_phones_min,drained_phones_max";

/// One results row, without a trailing newline.
pub fn results_line(row: &RunRow) -> String {
    let s = &row.scenario;
    let m = &row.metrics;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.evacuee_count,
        s.algorithm,
        s.comms,
        s.seed,
        m.survivors,
        m.survivor_pct,
        m.casualties,
        m.trapped_at_cap,
        m.drained_phones,
        m.mean_evacuation_time_s,
        m.total_energy_j,
    )
}

pub fn results_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&results_line(row));
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summarize(rows) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.evacuees,
            s.algorithm,
            s.comms,
            s.survivor_pct_mean,
            s.survivor_pct_min,
            s.survivor_pct_max,
            s.drained_mean,
            s.drained_min,
            s.drained_max,
        );
    }
    out
}

/// Write `results.csv` and `summary.csv` under `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, rows: &[RunRow]) -> io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    let summary = dir.join("summary.csv");
    std::fs::write(&results, results_csv(rows))?;
    std::fs::write(&summary, summary_csv(rows))?;
    Ok((results, summary))
}
