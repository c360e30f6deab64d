//! Wall-clock comparison of the optimal-selection backends.
//!
//! Runs each policy through the same impression schedule (selection plus
//! batched updates) and reports total time mean +- std over repetitions,
//! along with each policy's instrumented selection operation count.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::ElementGraph;
use crate::policies::{build_policy, PolicyName, PolicyParams};
use crate::sim::env::{feedback_with_default, Environment};
use crate::sim::runner::mean_std;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub policy: String,
    pub n_creatives: usize,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    /// Selection work per select call (instrumented, rep-invariant).
    pub ops_per_select: f64,
}

pub const TIMING_CSV_HEADER: &str = "policy,n_creatives,mean_time,std_time,ops_count";

/// Measure selection+update wall-clock for each policy over `impressions`
/// impressions with batched feedback, repeated `reps` times.
pub fn timing_benchmark<E: Environment + ?Sized>(
    policies: &[(PolicyName, PolicyParams)],
    env: &E,
    impressions: usize,
    batch_size: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<TimingRow>> {
    let graph: &Arc<ElementGraph> = env.graph();
    let mut rows = Vec::new();
    for &(name, params) in policies {
        let mut times = Vec::with_capacity(reps);
        let mut ops_per_select = 0.0;
        for rep in 0..reps {
            let mut policy = build_policy(name, &params, graph)?;
            let mut env_rng = ChaCha8Rng::seed_from_u64(master_seed);
            env_rng.set_stream(2 * rep as u64);
            let mut policy_rng = ChaCha8Rng::seed_from_u64(master_seed);
            policy_rng.set_stream(2 * rep as u64 + 1);
            let mut pairs = Vec::with_capacity(batch_size.max(1));

            let t0 = Instant::now();
            let mut done = 0usize;
            while done < impressions {
                let this_batch = batch_size.max(1).min(impressions - done);
                pairs.clear();
                for _ in 0..this_batch {
                    let c = policy.select(&mut policy_rng);
                    let (clicked, _) = feedback_with_default(env, &c, &mut env_rng);
                    pairs.push((c, clicked));
                }
                for (c, r) in &pairs {
                    policy.observe(c, *r);
                }
                done += this_batch;
            }
            times.push(t0.elapsed().as_secs_f64());
            if rep == 0 && impressions > 0 {
                ops_per_select = policy.select_ops() as f64 / impressions as f64;
            }
        }
        let (mean, std) = mean_std(&times);
        rows.push(TimingRow {
            policy: name.as_str().to_string(),
            n_creatives: env.n_creatives(),
            mean_time_s: mean,
            std_time_s: std,
            ops_per_select,
        });
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], mut out: W) -> Result<()> {
    writeln!(out, "{TIMING_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.policy, r.n_creatives, r.mean_time_s, r.std_time_s, r.ops_per_select
        )?;
    }
    Ok(())
}
