//! Ground-truth environments driving Bernoulli click feedback.
//!
//! A synthetic environment draws every model weight i.i.d. N(0,1), scores
//! all feasible creatives, and rescales the scores affinely into a click
//! probability band (the affine map preserves the argmax and the relative
//! ordering). A replay environment takes per-creative statistical CTRs
//! aggregated from impression logs.

use std::io::BufRead;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};

use crate::error::{Error, Result};
use crate::graph::{Creative, CreativeIndex, ElementGraph};
use crate::model::{expected_reward, WeightVector};

/// A fixed creative -> click-probability map over one element graph.
pub trait Environment: Send + Sync {
    fn graph(&self) -> &Arc<ElementGraph>;

    /// Click probability of a creative; `None` for choice arrays without
    /// one (infeasible, out of range, or absent from the replay logs).
    fn ctr(&self, creative: &Creative) -> Option<f64>;

    fn best_ctr(&self) -> f64;

    fn best_creative(&self) -> &Creative;

    /// Mean CTR over creatives with a known probability.
    fn mean_ctr(&self) -> f64;

    fn n_creatives(&self) -> usize;
}

/// Shared storage for both environment kinds.
#[derive(Debug, Clone)]
struct CtrTable {
    graph: Arc<ElementGraph>,
    index: CreativeIndex,
    ctr: Vec<Option<f64>>,
    best_idx: usize,
    best_ctr: f64,
    mean_ctr: f64,
}

impl CtrTable {
    fn new(graph: Arc<ElementGraph>, index: CreativeIndex, ctr: Vec<Option<f64>>) -> Result<Self> {
        let mut best_idx = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut known = 0usize;
        for (i, p) in ctr.iter().enumerate() {
            if let Some(p) = *p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidConfig(format!(
                        "ctr {p} outside [0,1] for creative {i}"
                    )));
                }
                sum += p;
                known += 1;
                if p > best {
                    best = p;
                    best_idx = i;
                }
            }
        }
        if best_idx == usize::MAX {
            return Err(Error::InvalidConfig("environment has no known ctr".into()));
        }
        Ok(Self {
            graph,
            index,
            ctr,
            best_idx,
            best_ctr: best,
            mean_ctr: sum / known as f64,
        })
    }

    fn lookup(&self, creative: &Creative) -> Option<f64> {
        self.ctr[self.index.index_of(creative)?]
    }
}

/// Synthetic ground truth from random tree-model weights.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    table: CtrTable,
    true_weights: WeightVector,
    p_lo: f64,
    p_hi: f64,
    degenerate: bool,
}

impl SyntheticEnv {
    /// Draw weights `N(0,1)` with the given seed and rescale the resulting
    /// scores into `[p_lo, p_hi]` (min to `p_lo`, max to `p_hi`).
    pub fn generate(graph: Arc<ElementGraph>, seed: u64, p_lo: f64, p_hi: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = WeightVector::standard_normal(graph.indexer().dim(), &mut rng);
        Self::from_weights(graph, weights, p_lo, p_hi)
    }

    /// Build the CTR map from given ground-truth weights.
    pub fn from_weights(
        graph: Arc<ElementGraph>,
        true_weights: WeightVector,
        p_lo: f64,
        p_hi: f64,
    ) -> Result<Self> {
        if !(0.0 < p_lo && p_lo < p_hi && p_hi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < p_lo < p_hi < 1, got [{p_lo}, {p_hi}]"
            )));
        }
        let index = CreativeIndex::build(&graph)?;
        let indexer = graph.indexer();
        let raw: Vec<f64> = index
            .creatives()
            .iter()
            .map(|c| expected_reward(&true_weights, indexer, c))
            .collect::<Result<_>>()?;
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = max - min <= f64::EPSILON * max.abs().max(1.0);
        let ctr: Vec<Option<f64>> = if degenerate {
            vec![Some(0.5 * (p_lo + p_hi)); raw.len()]
        } else {
            let scale = (p_hi - p_lo) / (max - min);
            raw.iter().map(|&s| Some(p_lo + (s - min) * scale)).collect()
        };
        Ok(Self {
            table: CtrTable::new(graph, index, ctr)?,
            true_weights,
            p_lo,
            p_hi,
            degenerate,
        })
    }

    pub fn true_weights(&self) -> &WeightVector {
        &self.true_weights
    }

    pub fn p_lo(&self) -> f64 {
        self.p_lo
    }

    pub fn p_hi(&self) -> f64 {
        self.p_hi
    }

    /// All raw scores collapsed to a single point; every CTR was set to the
    /// band midpoint.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn creatives(&self) -> &[Creative] {
        self.table.index.creatives()
    }

    pub fn ctr_by_index(&self, i: usize) -> f64 {
        self.table.ctr[i].expect("synthetic ctr is total")
    }
}

impl Environment for SyntheticEnv {
    fn graph(&self) -> &Arc<ElementGraph> {
        &self.table.graph
    }

    fn ctr(&self, creative: &Creative) -> Option<f64> {
        self.table.lookup(creative)
    }

    fn best_ctr(&self) -> f64 {
        self.table.best_ctr
    }

    fn best_creative(&self) -> &Creative {
        self.table.index.get(self.table.best_idx)
    }

    fn mean_ctr(&self) -> f64 {
        self.table.mean_ctr
    }

    fn n_creatives(&self) -> usize {
        self.table.index.len()
    }
}

/// Per-creative statistical CTRs aggregated from impression logs.
#[derive(Debug, Clone)]
pub struct ReplayEnv {
    table: CtrTable,
    impressions: Vec<u64>,
    clicks: Vec<u64>,
    warnings: Vec<String>,
}

impl ReplayEnv {
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn totals(&self) -> (u64, u64) {
        (self.impressions.iter().sum(), self.clicks.iter().sum())
    }

    pub fn stats_by_index(&self, i: usize) -> (u64, u64) {
        (self.impressions[i], self.clicks[i])
    }
}

impl Environment for ReplayEnv {
    fn graph(&self) -> &Arc<ElementGraph> {
        &self.table.graph
    }

    fn ctr(&self, creative: &Creative) -> Option<f64> {
        self.table.lookup(creative)
    }

    fn best_ctr(&self) -> f64 {
        self.table.best_ctr
    }

    fn best_creative(&self) -> &Creative {
        self.table.index.get(self.table.best_idx)
    }

    fn mean_ctr(&self) -> f64 {
        self.table.mean_ctr
    }

    fn n_creatives(&self) -> usize {
        self.table.index.len()
    }
}

/// Parse a replay log and aggregate it into per-creative CTRs.
///
/// Two CSV schemas are accepted, distinguished by the header line:
/// `creative_id,impressions,clicks` (pre-aggregated) or
/// `creative_id,clicked` (one row per impression). Creative ids are
/// `c_<index>` (or a bare index) into the graph's enumeration order.
/// Creatives never impressed are excluded with a warning.
pub fn aggregate_logs<R: BufRead>(reader: R, graph: Arc<ElementGraph>) -> Result<ReplayEnv> {
    let index = CreativeIndex::build(&graph)?;
    let n = index.len();
    let mut impressions = vec![0u64; n];
    let mut clicks = vec![0u64; n];

    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty replay log".into(),
        })
        .and_then(|(i, l)| Ok((i, l.map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?)))?;
    let header_fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let aggregated = match header_fields.as_slice() {
        ["creative_id", "impressions", "clicks"] => true,
        ["creative_id", "clicked"] => false,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "unrecognized header `{header}` (expected `creative_id,impressions,clicks` \
                     or `creative_id,clicked`)"
                ),
            })
        }
    };

    let parse_id = |line: usize, field: &str| -> Result<usize> {
        let raw = field.trim();
        let digits = raw.strip_prefix("c_").unwrap_or(raw);
        let idx: usize = digits.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad creative id `{raw}`"),
        })?;
        if idx >= n {
            return Err(Error::Parse {
                line,
                message: format!("creative id `{raw}` out of range (have {n} feasible creatives)"),
            });
        }
        Ok(idx)
    };

    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if aggregated {
            let [id, imp, clk] = fields.as_slice() else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 3 fields, got {}", fields.len()),
                });
            };
            let idx = parse_id(line_no, id)?;
            let imp: u64 = imp.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad impression count `{imp}`"),
            })?;
            let clk: u64 = clk.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad click count `{clk}`"),
            })?;
            if clk > imp {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("clicks {clk} exceed impressions {imp}"),
                });
            }
            impressions[idx] += imp;
            clicks[idx] += clk;
        } else {
            let [id, clicked] = fields.as_slice() else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 2 fields, got {}", fields.len()),
                });
            };
            let idx = parse_id(line_no, id)?;
            let clicked: u8 = clicked.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad clicked flag `{clicked}`"),
            })?;
            if clicked > 1 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("clicked flag must be 0 or 1, got {clicked}"),
                });
            }
            impressions[idx] += 1;
            clicks[idx] += u64::from(clicked);
        }
    }

    if impressions.iter().all(|&x| x == 0) {
        return Err(Error::InvalidConfig(
            "replay log contains zero impressions".into(),
        ));
    }
    let mut warnings = Vec::new();
    let ctr: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if impressions[i] == 0 {
                warnings.push(format!(
                    "creative c_{i} has no impressions in the log; excluded"
                ));
                None
            } else {
                Some(clicks[i] as f64 / impressions[i] as f64)
            }
        })
        .collect();
    Ok(ReplayEnv {
        table: CtrTable::new(graph, index, ctr)?,
        impressions,
        clicks,
        warnings,
    })
}

/// One Bernoulli click with the creative's predefined probability.
pub fn bernoulli_feedback<E: Environment + ?Sized, R: Rng + ?Sized>(
    env: &E,
    creative: &Creative,
    rng: &mut R,
) -> Result<u8> {
    let p = env
        .ctr(creative)
        .ok_or_else(|| Error::UnknownCreative(creative.to_string()))?;
    Ok(u8::from(rng.random::<f64>() < p))
}

/// Fabricate a pre-aggregated replay log statistically resembling a
/// production export: per-creative CTRs drawn from a Beta with the given
/// mean, impressions split evenly, clicks binomial.
pub fn fabricate_replay_log(
    graph: &ElementGraph,
    seed: u64,
    mean_ctr: f64,
    total_impressions: u64,
    concentration: f64,
) -> Result<String> {
    if !(0.0 < mean_ctr && mean_ctr < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "mean_ctr must be in (0,1), got {mean_ctr}"
        )));
    }
    let creatives: Vec<Creative> = graph.enumerate_creatives().collect();
    if creatives.is_empty() {
        return Err(Error::NoFeasibleCreative);
    }
    let n = creatives.len() as u64;
    if total_impressions < n {
        return Err(Error::InvalidConfig(format!(
            "need at least one impression per creative ({n}), got {total_impressions}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = Beta::new(mean_ctr * concentration, (1.0 - mean_ctr) * concentration)
        .map_err(|e| Error::InvalidConfig(format!("bad Beta parameters: {e}")))?;
    let mut out = String::from("creative_id,impressions,clicks\n");
    let base = total_impressions / n;
    let extra = total_impressions % n;
    for (i, _) in creatives.iter().enumerate() {
        let imp = base + u64::from((i as u64) < extra);
        let ctr: f64 = beta.sample(&mut rng);
        let clicks = Binomial::new(imp, ctr)
            .expect("valid binomial")
            .sample(&mut rng);
        out.push_str(&format!("c_{i},{imp},{clicks}\n"));
    }
    Ok(out)
}

/// Convenience for harness code: one uniform env draw per impression, with
/// creatives outside the environment (MVT constraint violations, replay
/// holes) receiving reward 0 while still consuming the draw.
pub(crate) fn feedback_with_default<E: Environment + ?Sized>(
    env: &E,
    creative: &Creative,
    rng: &mut dyn RngCore,
) -> (bool, Option<f64>) {
    let u: f64 = rng.random();
    match env.ctr(creative) {
        Some(p) => (u < p, Some(p)),
        None => (false, None),
    }
}
