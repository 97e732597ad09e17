//! Batch comparison of SCA against a baseline solver.
//!
//! The per-instance metric is the signed relative improvement
//! `100·(f_base − f_sca)/|f_base|`; positive means SCA found the lower
//! objective. Aggregates are pure functions of the rows.

use serde::{Deserialize, Serialize};

/// Trimming fractions of the trimmed means, per side.
pub const TRIM_LEVELS: [f64; 3] = [0.01, 0.02, 0.05];
/// Tolerances (in percent) of the "better or equal" shares.
pub const TOLERANCES: [f64; 2] = [0.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub n_agents: usize,
    pub seed: u64,
    pub sca_objective: Option<f64>,
    pub baseline_objective: Option<f64>,
    /// Percent; `None` if either solver failed or the baseline objective is 0.
    pub relative_improvement: Option<f64>,
    pub outer_iterations: usize,
    /// SCA termination (`x-tol`, `f-tol`, `max-iters`) or `error: …`.
    pub status: String,
}

pub fn relative_improvement(sca: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0 && sca.is_finite() && baseline.is_finite()).then(|| 100.0 * (baseline - sca) / baseline.abs())
}

/// Count dropped from each end: `⌈q·count⌉`, robust to `q·count` landing a
/// rounding error above an integer.
pub fn trim_count(q: f64, count: usize) -> usize {
    (q * count as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Mean after dropping `⌈q·count⌉` values from each end; `None` if nothing remains.
pub fn trimmed_mean(values: &[f64], q: f64) -> Option<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let d = trim_count(q, sorted.len());
    if 2 * d >= sorted.len() {
        return None;
    }
    let kept = &sorted[d..sorted.len() - d];
    Some(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// `None` for the pooled row.
    pub n_agents: Option<usize>,
    pub instances: usize,
    pub failures: usize,
    /// Share (percent) of compared rows with improvement `≥ −tol`, per [`TOLERANCES`].
    pub better_or_equal: [f64; 2],
    pub mean: Option<f64>,
    /// Per [`TRIM_LEVELS`].
    pub trimmed: [Option<f64>; 3],
}

pub fn aggregate(n_agents: Option<usize>, rows: &[&RunRow]) -> Aggregate {
    let values: Vec<f64> = rows.iter().filter_map(|r| r.relative_improvement).collect();
    let share = |tol: f64| {
        if values.is_empty() {
            0.0
        } else {
            100.0 * values.iter().filter(|&&v| v >= -tol).count() as f64 / values.len() as f64
        }
    };
    Aggregate {
        n_agents,
        instances: rows.len(),
        failures: rows.len() - values.len(),
        better_or_equal: TOLERANCES.map(share),
        mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        trimmed: TRIM_LEVELS.map(|q| trimmed_mean(&values, q)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Sorted by `(n_agents, seed)`.
    pub rows: Vec<RunRow>,
    /// One per agent count, ascending, then the pooled row.
    pub aggregates: Vec<Aggregate>,
}

impl RunReport {
    pub fn from_rows(mut rows: Vec<RunRow>) -> Self {
        rows.sort_by_key(|r| (r.n_agents, r.seed));
        let mut sizes: Vec<usize> = rows.iter().map(|r| r.n_agents).collect();
        sizes.dedup();
        let mut aggregates: Vec<Aggregate> =
            sizes.iter().map(|&n| aggregate(Some(n), &rows.iter().filter(|r| r.n_agents == n).collect::<Vec<_>>())).collect();
        aggregates.push(aggregate(None, &rows.iter().collect::<Vec<_>>()));
        Self { rows, aggregates }
    }

    /// Mean improvement per agent count, for reporting how relative
    /// performance moves with `N`.
    pub fn trend(&self) -> Vec<(usize, Option<f64>)> {
        self.aggregates.iter().filter_map(|a| a.n_agents.map(|n| (n, a.mean))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, seed: u64, rel: Option<f64>) -> RunRow {
        RunRow {
            n_agents: n,
            seed,
            sca_objective: rel.map(|_| 0.0),
            baseline_objective: rel.map(|_| 0.0),
            relative_improvement: rel,
            outer_iterations: 1,
            status: "x-tol".into(),
        }
    }

    #[test]
    fn relative_improvement_sign() {
        assert_eq!(relative_improvement(-2.0, -1.0), Some(100.0));
        assert_eq!(relative_improvement(-1.0, -2.0), Some(-50.0));
        assert_eq!(relative_improvement(1.0, 0.0), None);
    }

    #[test]
    fn tolerance_counts_small_deficit_as_equal() {
        let rows = [row(3, 0, Some(-1.9)), row(3, 1, Some(-2.5)), row(3, 2, Some(0.0)), row(3, 3, Some(4.0))];
        let a = aggregate(Some(3), &rows.iter().collect::<Vec<_>>());
        assert_eq!(a.better_or_equal, [50.0, 75.0]);
    }

    #[test]
    fn trim_counts() {
        assert_eq!(trim_count(0.01, 500), 5);
        assert_eq!(trim_count(0.05, 500), 25);
        assert_eq!(trim_count(0.01, 10), 1);
        assert_eq!(trim_count(0.02, 0), 0);
    }

    #[test]
    fn trimmed_mean_drops_extremes() {
        let mut v: Vec<f64> = (1..=98).map(|x| x as f64).collect();
        v.push(1e9);
        v.push(-1e9);
        assert_eq!(trimmed_mean(&v, 0.01), Some(49.5));
        assert_eq!(trimmed_mean(&[1.0], 0.05), None);
    }

    #[test]
    fn rows_sorted_and_pooled() {
        let r = RunReport::from_rows(vec![row(10, 2, Some(1.0)), row(3, 5, None), row(3, 1, Some(3.0))]);
        let keys: Vec<_> = r.rows.iter().map(|r| (r.n_agents, r.seed)).collect();
        assert_eq!(keys, vec![(3, 1), (3, 5), (10, 2)]);
        assert_eq!(r.aggregates.len(), 3);
        assert_eq!(r.aggregates[0].failures, 1);
        assert_eq!(r.aggregates[2].mean, Some(2.0));
        assert_eq!(r.trend(), vec![(3, Some(3.0)), (10, Some(1.0))]);
    }
}
