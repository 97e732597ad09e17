//! `batch`: SCA against a baseline over many seeded instances.

use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use cpt_sca::report::{relative_improvement, Aggregate, TOLERANCES, TRIM_LEVELS};
use cpt_sca::{generate_scenario, grid_search, multistart_local, sca_solve, DualSubgradient, RunReport, RunRow};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Baseline, Config, LoadedConfig};
use crate::output::{cell, Meta, OutDir};
use crate::Outcome;

pub const ROWS_FILE: &str = "rows.csv";
pub const AGGREGATES_FILE: &str = "aggregates.csv";
pub const TIMING_FILE: &str = "timing.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub n_agents: usize,
    pub seed: u64,
    pub sca: Duration,
    pub baseline: Duration,
}

/// Solves one instance with both solvers. Failures land in `status`.
pub fn run_instance(cfg: &Config, n_agents: usize, seed: u64) -> (RunRow, Timing) {
    let mut row = RunRow {
        n_agents,
        seed,
        sca_objective: None,
        baseline_objective: None,
        relative_improvement: None,
        outer_iterations: 0,
        status: String::new(),
    };
    let mut timing = Timing { n_agents, seed, sca: Duration::ZERO, baseline: Duration::ZERO };
    let problem = match generate_scenario(&cfg.scenario.spec(n_agents, seed)) {
        Ok(p) => p,
        Err(e) => {
            row.status = format!("error: {e}");
            return (row, timing);
        }
    };

    let start = Instant::now();
    let sca = sca_solve(&problem, &problem.equal_split(), &cfg.sca, &DualSubgradient::new(cfg.dual));
    timing.sca = start.elapsed();
    match sca {
        Ok(r) => {
            row.sca_objective = Some(r.objective);
            row.outer_iterations = r.iterations;
            row.status = r.termination.as_str().to_owned();
        }
        Err(e) => row.status = format!("error: {e}"),
    }

    let start = Instant::now();
    let baseline = match cfg.batch.baseline {
        Baseline::Multistart => multistart_local(&problem, &cfg.oracle).map(|r| r.objective),
        Baseline::Grid => grid_search(&problem, &cfg.oracle).map(|r| r.objective),
    };
    timing.baseline = start.elapsed();
    match baseline {
        Ok(f) => row.baseline_objective = Some(f),
        Err(e) if row.sca_objective.is_some() => row.status = format!("error: baseline: {e}"),
        Err(_) => {}
    }

    if let (Some(s), Some(b)) = (row.sca_objective, row.baseline_objective) {
        row.relative_improvement = relative_improvement(s, b);
    }
    (row, timing)
}

/// Runs every `(N, seed)` pair on `workers` threads (all cores when `None`).
pub fn run_all(cfg: &Config, workers: Option<usize>) -> Result<(RunReport, Vec<Timing>)> {
    let tasks: Vec<(usize, u64)> =
        cfg.batch.n_agents.iter().flat_map(|&n| (0..cfg.batch.instances as u64).map(move |j| (n, cfg.batch.base_seed + j))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build().context("building worker pool")?;
    let results: Vec<(RunRow, Timing)> = pool.install(|| tasks.par_iter().map(|&(n, s)| run_instance(cfg, n, s)).collect());
    let (rows, mut timings): (Vec<RunRow>, Vec<Timing>) = results.into_iter().unzip();
    timings.sort_by_key(|t| (t.n_agents, t.seed));
    Ok((RunReport::from_rows(rows), timings))
}

pub fn run(loaded: &LoadedConfig, out: &Path, workers: Option<usize>) -> Result<Outcome> {
    let cfg = &loaded.config;
    let (report, timings) = run_all(cfg, workers)?;

    let mut dir = OutDir::create(out)?;
    write_rows(&mut dir, &report.rows)?;
    write_aggregates(&mut dir, &report.aggregates)?;
    write_timing(&mut dir, &timings)?;
    let mut meta = Meta::new("batch", cfg.batch.base_seed, &loaded.hash);
    meta.summary = json!({
        "instances": report.rows.len(),
        "failures": report.aggregates.last().map_or(0, |a| a.failures),
        "baseline": cfg.batch.baseline,
        "trend": report.trend(),
    });
    dir.finish(meta)?;

    print_aggregates(&report.aggregates);
    Ok(Outcome::Success)
}

pub fn write_rows(dir: &mut OutDir, rows: &[RunRow]) -> Result<()> {
    let mut w = dir.csv(ROWS_FILE)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{}pct", x)
}

pub fn aggregate_header() -> Vec<String> {
    let mut h = vec!["n_agents".to_owned(), "instances".to_owned(), "failures".to_owned()];
    h.extend(TOLERANCES.map(|t| format!("better_or_equal_{}", pct(t))));
    h.push("mean".to_owned());
    h.extend(TRIM_LEVELS.map(|q| format!("trimmed_{}", pct(100.0 * q))));
    h
}

pub fn aggregate_record(a: &Aggregate) -> Vec<String> {
    let mut r = vec![a.n_agents.map_or_else(|| "all".to_owned(), |n| n.to_string()), a.instances.to_string(), a.failures.to_string()];
    r.extend(a.better_or_equal.map(|v| v.to_string()));
    r.push(cell(a.mean));
    r.extend(a.trimmed.map(cell));
    r
}

pub fn write_aggregates(dir: &mut OutDir, aggregates: &[Aggregate]) -> Result<()> {
    let mut w = dir.csv(AGGREGATES_FILE)?;
    w.write_record(aggregate_header())?;
    for a in aggregates {
        w.write_record(aggregate_record(a))?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(dir: &mut OutDir, timings: &[Timing]) -> Result<()> {
    let mut w = dir.csv(TIMING_FILE)?;
    w.write_record(["n_agents", "seed", "sca_seconds", "baseline_seconds"])?;
    for t in timings {
        w.write_record([
            t.n_agents.to_string(),
            t.seed.to_string(),
            t.sca.as_secs_f64().to_string(),
            t.baseline.as_secs_f64().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn print_aggregates(aggregates: &[Aggregate]) {
    let header = aggregate_header();
    println!("{}", header.join("\t"));
    for a in aggregates {
        println!("{}", aggregate_record(a).join("\t"));
    }
}
