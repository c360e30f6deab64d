//! Batched experiment execution and metric bookkeeping.
//!
//! One repetition runs `n_batches` batches of `batch_size` impressions.
//! Within a batch the policy state is frozen: selections happen first, the
//! collected (creative, reward) pairs are replayed to `observe` in
//! impression order at the batch boundary. Repetitions run in parallel;
//! rep `r` always uses RNG streams derived from `(master_seed, r)` alone,
//! so every policy in a comparison sees the identical feedback draws.

use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::ElementGraph;
use crate::policies::{build_policy, Policy, PolicyName, PolicyParams};
use crate::sim::env::{feedback_with_default, Environment};

/// Batch/repetition schedule for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub batch_size: usize,
    pub n_batches: usize,
    pub n_reps: usize,
    pub master_seed: u64,
    /// When false, `sel_time_ns` is written as zero so re-runs are
    /// byte-identical.
    pub record_timing: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            n_batches: 100,
            n_reps: 20,
            master_seed: 0,
            record_timing: true,
        }
    }
}

impl RunSettings {
    fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.n_reps < 1 {
            return Err(Error::InvalidConfig("n_reps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Builds one fresh policy per repetition.
pub trait PolicyProvider: Sync {
    fn graph(&self) -> &Arc<ElementGraph>;
    fn build(&self) -> Result<Box<dyn Policy>>;
}

/// Standard provider: a named policy with hyperparameters over a graph.
pub struct PolicyFactory {
    pub name: PolicyName,
    pub params: PolicyParams,
    pub graph: Arc<ElementGraph>,
}

impl PolicyProvider for PolicyFactory {
    fn graph(&self) -> &Arc<ElementGraph> {
        &self.graph
    }

    fn build(&self) -> Result<Box<dyn Policy>> {
        build_policy(self.name, &self.params, &self.graph)
    }
}

/// Provider from a closure, for injecting test policies.
pub struct FnPolicyProvider<F: Fn() -> Result<Box<dyn Policy>> + Sync> {
    pub graph: Arc<ElementGraph>,
    pub build_fn: F,
}

impl<F: Fn() -> Result<Box<dyn Policy>> + Sync> PolicyProvider for FnPolicyProvider<F> {
    fn graph(&self) -> &Arc<ElementGraph> {
        &self.graph
    }

    fn build(&self) -> Result<Box<dyn Policy>> {
        (self.build_fn)()
    }
}

/// Cumulative per-batch counters of one repetition. All quantities are
/// running totals from the start of the repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub batch: usize,
    pub impressions: u64,
    pub clicks: u64,
    pub overall_ctr: f64,
    pub cum_regret: f64,
    pub sel_time_ns: u64,
    pub infeasible_count: u64,
    /// Running sum of the expected CTR of each shown creative (not written
    /// to CSV; regret is derived from it).
    pub expected_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepTrace {
    pub rep: usize,
    pub rows: Vec<BatchRow>,
}

/// Full metrics of one (policy, environment) experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub policy: String,
    pub batch_size: usize,
    pub reps: Vec<RepTrace>,
}

pub const METRICS_CSV_HEADER: &str =
    "policy,rep,batch,impressions,clicks,overall_ctr,cum_regret,sel_time_ns,infeasible_count";

impl MetricsRecord {
    pub fn n_batches(&self) -> usize {
        self.reps.first().map_or(0, |r| r.rows.len())
    }

    /// Mean over repetitions of the cumulative CTR at each batch.
    pub fn mean_ctr_by_batch(&self) -> Vec<f64> {
        self.mean_by_batch(|row| row.overall_ctr)
    }

    /// Mean over repetitions of the cumulative regret at each batch.
    pub fn mean_regret_by_batch(&self) -> Vec<f64> {
        self.mean_by_batch(|row| row.cum_regret)
    }

    fn mean_by_batch(&self, f: impl Fn(&BatchRow) -> f64) -> Vec<f64> {
        let n = self.n_batches();
        let mut out = vec![0.0; n];
        for rep in &self.reps {
            for (i, row) in rep.rows.iter().enumerate() {
                out[i] += f(row);
            }
        }
        for v in &mut out {
            *v /= self.reps.len() as f64;
        }
        out
    }

    /// Final-batch aggregates across repetitions.
    pub fn summary(&self) -> Summary {
        let finals: Vec<(&BatchRow, usize)> = self
            .reps
            .iter()
            .filter_map(|r| r.rows.last().map(|row| (row, r.rep)))
            .collect();
        let ctrs: Vec<f64> = finals.iter().map(|(r, _)| r.overall_ctr).collect();
        let regrets: Vec<f64> = finals.iter().map(|(r, _)| r.cum_regret).collect();
        let (ctr_mean, ctr_std) = mean_std(&ctrs);
        let (regret_mean, regret_std) = mean_std(&regrets);
        Summary {
            policy: self.policy.clone(),
            n_reps: self.reps.len(),
            final_ctr_mean: ctr_mean,
            final_ctr_std: ctr_std,
            final_regret_mean: regret_mean,
            final_regret_std: regret_std,
        }
    }

    /// Append another record's repetitions (same policy), renumbering them.
    pub fn merge(&mut self, other: MetricsRecord) {
        let base = self.reps.len();
        for (i, mut rep) in other.reps.into_iter().enumerate() {
            rep.rep = base + i;
            self.reps.push(rep);
        }
    }

    pub fn to_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{METRICS_CSV_HEADER}")?;
        for rep in &self.reps {
            for row in &rep.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    self.policy,
                    rep.rep,
                    row.batch,
                    row.impressions,
                    row.clicks,
                    row.overall_ctr,
                    row.cum_regret,
                    row.sel_time_ns,
                    row.infeasible_count
                )?;
            }
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parse a metrics CSV written by [`to_csv`]. `expected_sum` is not part
    /// of the format and comes back as NaN.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty metrics csv".into(),
        })?;
        let header = header?;
        if header.trim() != METRICS_CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("bad header `{header}`"),
            });
        }
        let mut policy = String::new();
        let mut reps: Vec<RepTrace> = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [pol, rep, batch, impressions, clicks, ctr, regret, sel, infeasible] =
                fields.as_slice()
            else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 9 fields, got {}", fields.len()),
                });
            };
            let bad = |what: &str| Error::Parse {
                line: line_no,
                message: format!("bad {what}"),
            };
            if policy.is_empty() {
                policy = pol.to_string();
            }
            let rep: usize = rep.parse().map_err(|_| bad("rep"))?;
            let row = BatchRow {
                batch: batch.parse().map_err(|_| bad("batch"))?,
                impressions: impressions.parse().map_err(|_| bad("impressions"))?,
                clicks: clicks.parse().map_err(|_| bad("clicks"))?,
                overall_ctr: ctr.parse().map_err(|_| bad("overall_ctr"))?,
                cum_regret: regret.parse().map_err(|_| bad("cum_regret"))?,
                sel_time_ns: sel.parse().map_err(|_| bad("sel_time_ns"))?,
                infeasible_count: infeasible.parse().map_err(|_| bad("infeasible_count"))?,
                expected_sum: f64::NAN,
            };
            match reps.iter_mut().find(|r| r.rep == rep) {
                Some(trace) => trace.rows.push(row),
                None => reps.push(RepTrace {
                    rep,
                    rows: vec![row],
                }),
            }
        }
        Ok(Self {
            policy,
            batch_size: 0,
            reps,
        })
    }
}

/// Final-batch mean and sample standard deviation across repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub policy: String,
    pub n_reps: usize,
    pub final_ctr_mean: f64,
    pub final_ctr_std: f64,
    pub final_regret_mean: f64,
    pub final_regret_std: f64,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Expected-value cumulative regret from a sequence of per-impression
/// expected CTRs.
pub fn cumulative_regret(best_ctr: f64, expected_ctrs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(expected_ctrs.len());
    let mut acc = 0.0;
    for &p in expected_ctrs {
        acc += best_ctr - p;
        out.push(acc);
    }
    out
}

/// Run the policy against the environment over the whole schedule.
///
/// Repetitions execute in parallel, each owning its policy and RNG streams.
/// Stream layout: rep `r` draws environment feedback from stream `2r` and
/// policy randomness from stream `2r + 1` of `ChaCha8(master_seed)`, so
/// traces are deterministic and feedback draws are shared across policies.
pub fn run_experiment<E: Environment + ?Sized, P: PolicyProvider>(
    settings: &RunSettings,
    env: &E,
    provider: &P,
) -> Result<MetricsRecord> {
    settings.validate()?;
    if provider.graph().tree() != env.graph().tree()
        || provider.graph().indexer() != env.graph().indexer()
    {
        return Err(Error::GraphMismatch);
    }
    let policy_name = provider.build()?.name().to_string();

    let reps: Vec<Result<RepTrace>> = (0..settings.n_reps)
        .into_par_iter()
        .map(|rep| run_one_rep(settings, env, provider, rep))
        .collect();
    let reps = reps.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricsRecord {
        policy: policy_name,
        batch_size: settings.batch_size,
        reps,
    })
}

fn run_one_rep<E: Environment + ?Sized, P: PolicyProvider>(
    settings: &RunSettings,
    env: &E,
    provider: &P,
    rep: usize,
) -> Result<RepTrace> {
    let mut policy = provider.build()?;
    policy.reset();
    let mut env_rng = ChaCha8Rng::seed_from_u64(settings.master_seed);
    env_rng.set_stream(2 * rep as u64);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(settings.master_seed);
    policy_rng.set_stream(2 * rep as u64 + 1);

    let best = env.best_ctr();
    let mut rows = Vec::with_capacity(settings.n_batches);
    let mut impressions = 0u64;
    let mut clicks = 0u64;
    let mut expected_sum = 0.0f64;
    let mut regret = 0.0f64;
    let mut sel_time_ns = 0u64;
    let mut infeasible = 0u64;
    let mut batch_pairs = Vec::with_capacity(settings.batch_size);

    for batch in 1..=settings.n_batches {
        batch_pairs.clear();
        for _ in 0..settings.batch_size {
            let creative = if settings.record_timing {
                let t0 = Instant::now();
                let c = policy.select(&mut policy_rng);
                sel_time_ns += t0.elapsed().as_nanos() as u64;
                c
            } else {
                policy.select(&mut policy_rng)
            };
            let (clicked, ctr) = feedback_with_default(env, &creative, &mut env_rng);
            let ctr = match ctr {
                Some(p) => p,
                None => {
                    // constraint-violating picks count as impressions with
                    // reward 0 and the full regret gap
                    if !env.graph().is_feasible(&creative).unwrap_or(false) {
                        infeasible += 1;
                    }
                    0.0
                }
            };
            impressions += 1;
            clicks += u64::from(clicked);
            expected_sum += ctr;
            regret += best - ctr;
            batch_pairs.push((creative, clicked));
        }
        for (c, r) in &batch_pairs {
            policy.observe(c, *r);
        }
        rows.push(BatchRow {
            batch,
            impressions,
            clicks,
            overall_ctr: if impressions == 0 {
                0.0
            } else {
                clicks as f64 / impressions as f64
            },
            cum_regret: regret,
            sel_time_ns,
            infeasible_count: infeasible,
            expected_sum,
        });
    }
    Ok(RepTrace { rep, rows })
}
