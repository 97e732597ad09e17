//! `trace-contour`: an SCA trajectory for three agents plus objective
//! values on the budget face `P1 + P2 + P3 = P_total`, parametrized by
//! `(P1, P2)`.

use std::path::Path;

use anyhow::Result;
use cpt_sca::{sca_solve, AllocationProblem, DualSubgradient, SolveResult};
use serde_json::json;

use crate::config::LoadedConfig;
use crate::output::{cell, Meta, OutDir};
use crate::{solve, CliError, Outcome};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CONTOUR_FILE: &str = "contour.csv";

pub struct TraceRun {
    pub problem: AllocationProblem,
    pub result: SolveResult,
}

pub fn solve_trace(loaded: &LoadedConfig) -> Result<TraceRun> {
    let cfg = &loaded.config;
    let problem = cfg.scenario.problem(&loaded.base)?;
    if problem.len() != 3 {
        return Err(CliError::WrongDimension(problem.len()).into());
    }
    let start: Vec<f64> = cfg.trace.start.iter().map(|f| f * problem.p_total).collect();
    let result = sca_solve(&problem, &start, &cfg.sca, &DualSubgradient::new(cfg.dual))?;
    Ok(TraceRun { problem, result })
}

/// `resolution²` points `(P1, P2) = (i, j)·h`, `h = P_total/(resolution − 1)`.
/// Points off the slice (`P3 < 0`) have no objective.
pub fn contour(problem: &AllocationProblem, resolution: usize) -> Vec<([f64; 3], Option<f64>)> {
    let h = problem.p_total / (resolution - 1) as f64;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let (p1, p2) = (i as f64 * h, j as f64 * h);
            let p3 = problem.p_total - p1 - p2;
            let value = if i + j < resolution { problem.objective(&[p1, p2, p3.max(0.0)]).ok() } else { None };
            cells.push(([p1, p2, p3], value));
        }
    }
    cells
}

pub fn run(loaded: &LoadedConfig, out: &Path) -> Result<Outcome> {
    let cfg = &loaded.config;
    let TraceRun { problem, result } = solve_trace(loaded)?;

    let mut dir = OutDir::create(out)?;
    let mut w = dir.csv(TRAJECTORY_FILE)?;
    w.write_record(["iteration", "p1", "p2", "p3", "objective"])?;
    for rec in &result.trace.records {
        let a = &rec.allocation;
        w.write_record([rec.iteration.to_string(), a[0].to_string(), a[1].to_string(), a[2].to_string(), rec.objective.to_string()])?;
    }
    w.flush()?;

    let mut w = dir.csv(CONTOUR_FILE)?;
    w.write_record(["p1", "p2", "p3", "objective"])?;
    for ([p1, p2, p3], value) in contour(&problem, cfg.trace.resolution) {
        w.write_record([p1.to_string(), p2.to_string(), p3.to_string(), cell(value)])?;
    }
    w.flush()?;
    dir.json(solve::INSTANCE_FILE, &problem)?;

    let objectives = result.trace.objectives();
    let mut meta = Meta::new("trace-contour", cfg.scenario.seed, &loaded.hash);
    meta.summary = json!({
        "initial_objective": objectives.first(),
        "final_objective": objectives.last(),
        "iterations": result.iterations,
        "termination": result.termination.as_str(),
        "resolution": cfg.trace.resolution,
    });
    dir.finish(meta)?;

    solve::audit(&problem, &result)?;
    println!(
        "trajectory of {} points, objective {} -> {}",
        objectives.len(),
        objectives.first().copied().unwrap_or(f64::NAN),
        result.objective
    );
    Ok(if result.termination.converged() { Outcome::Success } else { Outcome::BudgetExhausted })
}
