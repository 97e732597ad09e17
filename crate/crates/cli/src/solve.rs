//! `solve`: one instance, one SCA run, full trace.

use std::path::Path;

use anyhow::Result;
use cpt_sca::{sca_solve, AllocationProblem, DualSubgradient, ScaTrace, SolveResult};
use serde_json::json;

use crate::config::LoadedConfig;
use crate::output::{cell, Meta, OutDir};
use crate::{check_feasible, CliError, Outcome};

pub const INSTANCE_FILE: &str = "instance.json";
pub const SOLUTION_FILE: &str = "solution.csv";
pub const TRACE_FILE: &str = "trace.csv";

pub fn run(loaded: &LoadedConfig, out: &Path) -> Result<Outcome> {
    let cfg = &loaded.config;
    let problem = cfg.scenario.problem(&loaded.base)?;
    let x_init = cfg.solve.x_init.clone().unwrap_or_else(|| problem.equal_split());
    let result = sca_solve(&problem, &x_init, &cfg.sca, &DualSubgradient::new(cfg.dual))?;

    let mut dir = OutDir::create(out)?;
    dir.json(INSTANCE_FILE, &problem)?;
    write_solution(&mut dir, &problem, &result)?;
    write_trace(&mut dir, &result.trace)?;
    let mut meta = Meta::new("solve", cfg.scenario.seed, &loaded.hash);
    meta.summary = json!({
        "n_agents": problem.len(),
        "objective": result.objective,
        "iterations": result.iterations,
        "termination": result.termination.as_str(),
        "inner_budget_exhaustions": result.inner_budget_exhaustions(),
    });
    dir.finish(meta)?;

    audit(&problem, &result)?;
    println!("objective {} after {} iterations ({})", result.objective, result.iterations, result.termination.as_str());
    Ok(if result.termination.converged() { Outcome::Success } else { Outcome::BudgetExhausted })
}

/// Every iterate must be feasible with a finite objective.
pub fn audit(problem: &AllocationProblem, result: &SolveResult) -> Result<(), CliError> {
    for rec in &result.trace.records {
        check_feasible(&rec.allocation, problem.p_total)?;
        if !rec.objective.is_finite() {
            return Err(CliError::Invariant(format!("objective at iteration {} is {}", rec.iteration, rec.objective)));
        }
    }
    Ok(())
}

fn write_solution(dir: &mut OutDir, problem: &AllocationProblem, result: &SolveResult) -> Result<()> {
    let mut w = dir.csv(SOLUTION_FILE)?;
    w.write_record(["agent", "power", "snr", "utility"])?;
    for (i, &p) in result.allocation.iter().enumerate() {
        let snr = problem.snr(i, p);
        let u = problem.agents[i].params.utility(snr)?;
        w.write_record([i.to_string(), p.to_string(), snr.to_string(), u.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per iterate; step columns are empty on the final one.
pub fn write_trace(dir: &mut OutDir, trace: &ScaTrace) -> Result<()> {
    let n = trace.records.first().map_or(0, |r| r.allocation.len());
    let mut w = dir.csv(TRACE_FILE)?;
    let mut header = vec!["iteration".to_owned(), "objective".to_owned()];
    header.extend((0..n).map(|i| format!("p{i}")));
    header.extend(
        [
            "theta",
            "surrogate_optimum",
            "k",
            "gap",
            "duality_gap",
            "weak_duality_violation",
            "touch_error",
            "step_norm",
            "inner_status",
            "dual_iterations",
            "primal_iterations",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for rec in &trace.records {
        let mut row = vec![rec.iteration.to_string(), rec.objective.to_string()];
        row.extend(rec.allocation.iter().map(f64::to_string));
        match &rec.step {
            Some(s) => row.extend([
                s.theta.to_string(),
                s.surrogate_optimum.to_string(),
                s.k.to_string(),
                s.gap.to_string(),
                s.duality_gap.to_string(),
                s.weak_duality_violation.to_string(),
                s.touch_error.to_string(),
                s.step_norm.to_string(),
                s.inner_status.as_str().to_owned(),
                s.dual_iterations.to_string(),
                s.primal_iterations.to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(cell(None), 11)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
