//! Monte Carlo study orchestration: N independent trials with per-trial
//! random streams, order-independent aggregation into margin statistics,
//! and the histogram of the margin distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{run_trial, SimSetup, TrajectoryRow, TrialOutcome, TrialResult};
use crate::margin::CollapseCause;

/// Receives each dumped trial trajectory as it completes.
pub type TrajectorySink<'a> = &'a (dyn Fn(u64, &[TrajectoryRow]) + Sync);

#[derive(Debug, Clone, Copy)]
pub struct StudyConfig {
    pub n_trials: u64,
    pub base_seed: u64,
    /// Worker threads for the trial loop; 0 picks the runtime default.
    /// Results are identical for any value by construction.
    pub parallelism: usize,
    pub dump_trajectories: bool,
}

/// Why a trial record carries (or does not carry) a margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordCause {
    Collapse(CollapseCause),
    NoCollapse,
    Fault,
}

impl std::fmt::Display for RecordCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordCause::Collapse(c) => write!(f, "{c}"),
            RecordCause::NoCollapse => write!(f, "no-collapse"),
            RecordCause::Fault => write!(f, "fault"),
        }
    }
}

impl std::str::FromStr for RecordCause {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "jacobian-sign-change" => RecordCause::Collapse(CollapseCause::JacobianSignChange),
            "algebraic-divergence" => RecordCause::Collapse(CollapseCause::AlgebraicDivergence),
            "voltage-floor" => RecordCause::Collapse(CollapseCause::VoltageFloor),
            "no-collapse" => RecordCause::NoCollapse,
            "fault" => RecordCause::Fault,
            other => return Err(format!("unknown cause '{other}'")),
        })
    }
}

/// One row of `margins.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub base_seed: u64,
    pub margin_mw: Option<f64>,
    pub cause: RecordCause,
    pub t_collapse: Option<f64>,
    pub floor_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p1: f64,
    pub p5: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

/// Aggregated margin distribution of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub n_trials: u64,
    pub n_collapsed: u64,
    pub n_no_collapse: u64,
    pub n_faults: u64,
    pub mean_mw: f64,
    pub std_mw: f64,
    pub percentiles: Percentiles,
    /// Empirical 10th percentile: the margin exceeded in 90% of trials.
    pub d90_mw: f64,
    /// Gaussian reading of the same bound, mean - 1.2816 std.
    pub d90_gaussian_mw: f64,
    pub deterministic_margin_mw: Option<f64>,
}

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("deterministic companion trial failed: {0}")]
    Deterministic(crate::integrator::TrialFault),
    #[error("deterministic companion did not collapse within max time")]
    DeterministicNoCollapse,
    #[error("{n_faults} of {n_trials} trials faulted (above the 5% budget); first fault: {first}")]
    TooManyFaults {
        n_faults: u64,
        n_trials: u64,
        first: String,
    },
    #[error("study needs at least one trial")]
    NoTrials,
}

pub struct StudyOutput {
    pub stats: MarginStats,
    pub records: Vec<TrialRecord>,
    pub deterministic: TrialResult,
}

/// Runs the full study: the sigma = 0 companion first, then `n_trials`
/// stochastic trials on the worker pool. Trial i draws its streams from
/// (base_seed, i), so the outcome is reproducible for any parallelism.
pub fn run_study(
    setup: &SimSetup,
    study: &StudyConfig,
    mut trajectory_sink: Option<TrajectorySink<'_>>,
) -> Result<StudyOutput, StudyError> {
    if study.n_trials == 0 {
        return Err(StudyError::NoTrials);
    }
    if !study.dump_trajectories {
        trajectory_sink = None;
    }
    let det_setup = setup.deterministic();
    let deterministic =
        run_trial(&det_setup, study.base_seed, 0, false).map_err(StudyError::Deterministic)?;
    let deterministic_margin = match &deterministic.outcome {
        TrialOutcome::Collapse(e) => e.margin_mw,
        TrialOutcome::NoCollapse { .. } => return Err(StudyError::DeterministicNoCollapse),
    };

    let record_traj = study.dump_trajectories;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(study.parallelism)
        .build()
        .expect("thread pool construction");
    let results: Vec<Result<TrialResult, crate::integrator::TrialFault>> = pool.install(|| {
        (0..study.n_trials)
            .into_par_iter()
            .map(|i| {
                let r = run_trial(setup, study.base_seed, i, record_traj);
                if let (Ok(res), Some(sink)) = (&r, trajectory_sink) {
                    if let Some(rows) = &res.trajectory {
                        sink(i, rows);
                    }
                }
                r
            })
            .collect()
    });

    // Aggregation is a sequential fold in trial order, so the statistics
    // are bit-identical for any parallelism degree.
    let mut records = Vec::with_capacity(results.len());
    let mut welford = Welford::default();
    let mut margins = Vec::new();
    let mut n_no_collapse = 0u64;
    let mut n_faults = 0u64;
    let mut first_fault = None;
    for (i, result) in results.into_iter().enumerate() {
        let trial = i as u64;
        match result {
            Ok(res) => match res.outcome {
                TrialOutcome::Collapse(event) => {
                    welford.push(event.margin_mw);
                    margins.push(event.margin_mw);
                    records.push(TrialRecord {
                        trial,
                        base_seed: study.base_seed,
                        margin_mw: Some(event.margin_mw),
                        cause: RecordCause::Collapse(event.cause),
                        t_collapse: Some(event.t_collapse),
                        floor_events: res.floor_events,
                    });
                }
                TrialOutcome::NoCollapse { .. } => {
                    n_no_collapse += 1;
                    records.push(TrialRecord {
                        trial,
                        base_seed: study.base_seed,
                        margin_mw: None,
                        cause: RecordCause::NoCollapse,
                        t_collapse: None,
                        floor_events: res.floor_events,
                    });
                }
            },
            Err(fault) => {
                n_faults += 1;
                if first_fault.is_none() {
                    first_fault = Some(fault.to_string());
                }
                records.push(TrialRecord {
                    trial,
                    base_seed: study.base_seed,
                    margin_mw: None,
                    cause: RecordCause::Fault,
                    t_collapse: None,
                    floor_events: 0,
                });
            }
        }
    }
    if n_faults * 20 > study.n_trials {
        return Err(StudyError::TooManyFaults {
            n_faults,
            n_trials: study.n_trials,
            first: first_fault.unwrap_or_default(),
        });
    }

    let stats = stats_from_margins(
        &margins,
        study.n_trials,
        n_no_collapse,
        n_faults,
        Some(deterministic_margin),
    );
    Ok(StudyOutput {
        stats,
        records,
        deterministic,
    })
}

/// Builds the statistics block from collapsed-trial margins. Trials that
/// never collapsed are excluded from the moments but stay in the counts;
/// treating them as censored margins would bias the mean.
pub fn stats_from_margins(
    margins: &[f64],
    n_trials: u64,
    n_no_collapse: u64,
    n_faults: u64,
    deterministic_margin_mw: Option<f64>,
) -> MarginStats {
    let mut welford = Welford::default();
    for &m in margins {
        welford.push(m);
    }
    let mut sorted = margins.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("margins are finite"));
    let pct = |p: f64| percentile(&sorted, p);
    let mean = welford.mean();
    let std = welford.sample_std();
    MarginStats {
        n_trials,
        n_collapsed: margins.len() as u64,
        n_no_collapse,
        n_faults,
        mean_mw: mean,
        std_mw: std,
        percentiles: Percentiles {
            p1: pct(1.0),
            p5: pct(5.0),
            p10: pct(10.0),
            p50: pct(50.0),
            p90: pct(90.0),
            p95: pct(95.0),
            p99: pct(99.0),
        },
        d90_mw: pct(10.0),
        d90_gaussian_mw: mean - 1.2815515655446004 * std,
        deterministic_margin_mw,
    }
}

/// Streaming mean/variance accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn sample_std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

/// Linear-interpolation percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Left-closed fixed-width bins covering the collapsed margins.
pub fn histogram(records: &[TrialRecord], bin_width_mw: f64) -> Vec<(f64, u64)> {
    assert!(bin_width_mw > 0.0, "bin width must be positive");
    let margins: Vec<f64> = records.iter().filter_map(|r| r.margin_mw).collect();
    if margins.is_empty() {
        return Vec::new();
    }
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = ((max - min) / bin_width_mw).floor() as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for m in margins {
        let k = (((m - min) / bin_width_mw).floor() as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (min + k as f64 * bin_width_mw, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(trial: u64, margin: Option<f64>) -> TrialRecord {
        TrialRecord {
            trial,
            base_seed: 0,
            margin_mw: margin,
            cause: match margin {
                Some(_) => RecordCause::Collapse(CollapseCause::AlgebraicDivergence),
                None => RecordCause::NoCollapse,
            },
            t_collapse: margin.map(|m| m / 5.0),
            floor_events: 0,
        }
    }

    #[test]
    fn single_record_single_bin() {
        let h = histogram(&[rec(0, Some(100.0))], 10.0);
        assert_eq!(h, vec![(100.0, 1)]);
    }

    #[test]
    fn three_records_two_bins() {
        let h = histogram(
            &[rec(0, Some(95.0)), rec(1, Some(105.0)), rec(2, Some(106.0))],
            10.0,
        );
        assert_eq!(h.len(), 2);
        assert_eq!(h[0], (95.0, 1));
        assert_eq!(h[1], (105.0, 2));
    }

    #[test]
    fn histogram_conserves_counts_and_skips_no_collapse() {
        let mut records: Vec<TrialRecord> = (0..997)
            .map(|i| rec(i, Some(300.0 + (i as f64 * 37.0) % 211.0)))
            .collect();
        records.push(rec(997, None));
        records.push(rec(998, None));
        records.push(rec(999, None));
        let h = histogram(&records, 13.0);
        let total: u64 = h.iter().map(|(_, c)| c).sum();
        assert_eq!(total, 997);
    }

    #[test]
    fn empty_records_empty_histogram() {
        assert!(histogram(&[], 5.0).is_empty());
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [4.0, 8.0, 15.0, 16.0, 23.0, 42.0];
        let mut w = Welford::default();
        for &x in &xs {
            w.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var =
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0);
        assert!((w.mean() - mean).abs() < 1e-12);
        assert!((w.sample_std() - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn percentiles_are_nondecreasing_and_ordered() {
        let margins: Vec<f64> = (0..500).map(|i| 200.0 + (i as f64 * 17.3) % 97.0).collect();
        let stats = stats_from_margins(&margins, 500, 0, 0, None);
        let p = &stats.percentiles;
        let seq = [p.p1, p.p5, p.p10, p.p50, p.p90, p.p95, p.p99];
        for w in seq.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert_eq!(stats.d90_mw, p.p10);
        // Weak orderings that hold on any run.
        assert!(stats.d90_mw <= p.p50);
        assert!(p.p50 <= stats.mean_mw + stats.std_mw);
    }

    #[test]
    fn cause_strings_round_trip() {
        for c in [
            RecordCause::Collapse(CollapseCause::JacobianSignChange),
            RecordCause::Collapse(CollapseCause::AlgebraicDivergence),
            RecordCause::Collapse(CollapseCause::VoltageFloor),
            RecordCause::NoCollapse,
            RecordCause::Fault,
        ] {
            let s = c.to_string();
            assert_eq!(s.parse::<RecordCause>().unwrap(), c);
        }
    }
}
