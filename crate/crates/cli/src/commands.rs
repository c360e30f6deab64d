//! Command implementations.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aes_core::dp::{brute_force_argmax, dp_argmax};
use aes_core::graph::{
    preset_counts, preset_graph, random_element_graph, ElementGraph, RandomGraphParams,
};
use aes_core::graph_file::{load_graph, GraphFile};
use aes_core::model::WeightVector;
use aes_core::policies::{PolicyName, PolicyParams};
use aes_core::sim::{
    aggregate_logs, fabricate_replay_log, run_experiment, sweep_search_space, timing_benchmark,
    write_sweep_csv, write_timing_csv, EnvSpec, ExperimentConfig, MetricsRecord,
    PolicyFactory, RunSettings, SweepConfig, SyntheticEnv,
};

/// Failure with the process exit code it maps to (2 data/config, 3
/// assertion).
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn assertion(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<aes_core::Error> for CliError {
    fn from(e: aes_core::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Master-seed fallback order: config/flag, then AES_SEED, then 0.
fn resolve_seed(explicit: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var("AES_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::data(format!("AES_SEED must be an integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn load_graph_rel(config_path: &Path, graph: &str) -> Result<Arc<ElementGraph>, CliError> {
    let base = config_path.parent().unwrap_or(Path::new("."));
    let path = base.join(graph);
    load_graph(&path)
        .map(Arc::new)
        .map_err(|e| CliError::data(format!("graph file {}: {e}", path.display())))
}

pub fn run_config(config_path: &Path, out_dir: &Path, expect_replay: bool) -> CliResult {
    let cfg = ExperimentConfig::load(config_path)
        .map_err(|e| CliError::data(format!("config {}: {e}", config_path.display())))?;
    match (&cfg.env, expect_replay) {
        (EnvSpec::Replay { .. }, false) => {
            return Err(CliError::data(
                "config has a replay env; use the `replay` subcommand",
            ))
        }
        (EnvSpec::Synthetic { .. }, true) => {
            return Err(CliError::data(
                "config has a synthetic env; use the `simulate` subcommand",
            ))
        }
        _ => {}
    }
    let graph = load_graph_rel(config_path, &cfg.graph)?;
    let master_seed = resolve_seed(cfg.master_seed)?;
    let settings = cfg.run_settings(master_seed);

    std::fs::create_dir_all(out_dir)?;
    let mut summaries = Vec::new();
    for name in cfg.policies()? {
        let params = cfg.params_for(name)?;
        let record = match &cfg.env {
            EnvSpec::Synthetic {
                p_lo,
                p_hi,
                seed,
                resample_per_rep,
            } => {
                let env_seed = seed.unwrap_or(master_seed);
                if *resample_per_rep {
                    run_resampled(
                        &settings, graph.clone(), name, params, env_seed, *p_lo, *p_hi,
                    )?
                } else {
                    let env = SyntheticEnv::generate(graph.clone(), env_seed, *p_lo, *p_hi)?;
                    let provider = PolicyFactory {
                        name,
                        params,
                        graph: graph.clone(),
                    };
                    run_experiment(&settings, &env, &provider)?
                }
            }
            EnvSpec::Replay { log } => {
                let base = config_path.parent().unwrap_or(Path::new("."));
                let log_path = base.join(log);
                let file = std::fs::File::open(&log_path).map_err(|e| {
                    CliError::data(format!("replay log {}: {e}", log_path.display()))
                })?;
                let env = aggregate_logs(std::io::BufReader::new(file), graph.clone())?;
                for w in env.warnings() {
                    eprintln!("warning: {w}");
                }
                let provider = PolicyFactory {
                    name,
                    params,
                    graph: graph.clone(),
                };
                run_experiment(&settings, &env, &provider)?
            }
        };

        let csv_path = out_dir.join(format!("metrics_{name}.csv"));
        let mut file = std::fs::File::create(&csv_path)?;
        record.to_csv(&mut file)?;
        summaries.push(record.summary());
    }

    let summary_path = out_dir.join("summary.csv");
    let mut file = std::fs::File::create(&summary_path)?;
    use std::io::Write;
    writeln!(
        file,
        "policy,n_reps,final_ctr_mean,final_ctr_std,final_regret_mean,final_regret_std"
    )?;
    println!(
        "{:<12} {:>10} {:>10} {:>14} {:>12}",
        "policy", "final_ctr", "ctr_std", "final_regret", "regret_std"
    );
    for s in &summaries {
        writeln!(
            file,
            "{},{},{},{},{},{}",
            s.policy,
            s.n_reps,
            s.final_ctr_mean,
            s.final_ctr_std,
            s.final_regret_mean,
            s.final_regret_std
        )?;
        println!(
            "{:<12} {:>10.5} {:>10.5} {:>14.2} {:>12.2}",
            s.policy, s.final_ctr_mean, s.final_ctr_std, s.final_regret_mean, s.final_regret_std
        );
    }
    Ok(())
}

/// Fresh environment per repetition: rep r draws its own ground truth and
/// its own RNG streams, all still a pure function of the seeds.
fn run_resampled(
    settings: &RunSettings,
    graph: Arc<ElementGraph>,
    name: PolicyName,
    params: PolicyParams,
    env_seed: u64,
    p_lo: f64,
    p_hi: f64,
) -> Result<MetricsRecord, CliError> {
    let mut merged: Option<MetricsRecord> = None;
    for rep in 0..settings.n_reps {
        let env = SyntheticEnv::generate(
            graph.clone(),
            env_seed.wrapping_add(rep as u64),
            p_lo,
            p_hi,
        )?;
        let provider = PolicyFactory {
            name,
            params,
            graph: graph.clone(),
        };
        let one = RunSettings {
            n_reps: 1,
            master_seed: settings
                .master_seed
                .wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..*settings
        };
        let record = run_experiment(&one, &env, &provider)?;
        match &mut merged {
            None => merged = Some(record),
            Some(m) => m.merge(record),
        }
    }
    Ok(merged.expect("n_reps >= 1"))
}

pub fn sweep(config_path: &Path, sizes: &[usize], out_dir: &Path) -> CliResult {
    if sizes.is_empty() {
        return Err(CliError::data("no sizes given"));
    }
    for &s in sizes {
        if preset_counts(s).is_none() {
            return Err(CliError::data(format!(
                "no preset structure for {s} creatives (have 32, 96, 200, 512, 1200, 5000, 20000)"
            )));
        }
    }
    let cfg = ExperimentConfig::load(config_path)
        .map_err(|e| CliError::data(format!("config {}: {e}", config_path.display())))?;
    let (p_lo, p_hi) = match &cfg.env {
        EnvSpec::Synthetic { p_lo, p_hi, .. } => (*p_lo, *p_hi),
        EnvSpec::Replay { .. } => {
            return Err(CliError::data("sweep needs a synthetic env config"))
        }
    };
    let master_seed = resolve_seed(cfg.master_seed)?;
    let policies: Vec<(PolicyName, PolicyParams)> = cfg
        .policies()?
        .into_iter()
        .map(|p| Ok::<_, CliError>((p, cfg.params_for(p)?)))
        .collect::<Result<_, _>>()?;
    let sweep_cfg = SweepConfig {
        sizes: sizes.to_vec(),
        settings: cfg.run_settings(master_seed),
        p_lo,
        p_hi,
    };
    let rows = sweep_search_space(&policies, &sweep_cfg)?;

    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sweep.csv");
    let mut file = std::fs::File::create(&path)?;
    write_sweep_csv(&rows, &mut file)?;
    println!(
        "{:<12} {:>12} {:>16} {:>16}",
        "policy", "n_creatives", "final_regret", "regret_std"
    );
    for r in &rows {
        println!(
            "{:<12} {:>12} {:>16.2} {:>16.2}",
            r.policy, r.n_creatives, r.final_regret_mean, r.final_regret_std
        );
    }
    Ok(())
}

pub fn dp_check(
    trials: u64,
    max_elements: usize,
    max_ingredients: usize,
    forbid_frac: f64,
    seed: Option<u64>,
) -> CliResult {
    let seed = resolve_seed(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomGraphParams {
        max_ingredients: max_ingredients.max(1),
        max_elements: max_elements.max(1),
        forbid_prob: forbid_frac,
    };
    let mut pass = 0u64;
    let mut fail = 0u64;
    for t in 0..trials {
        let graph = random_element_graph(&mut rng, params);
        let weights = WeightVector::standard_normal(graph.indexer().dim(), &mut rng);
        let (dp_c, dp_v) = dp_argmax(&graph, &weights)?;
        let (bf_c, bf_v) = brute_force_argmax(&graph, &weights)?;
        if dp_c == bf_c && (dp_v - bf_v).abs() <= 1e-12 {
            pass += 1;
        } else {
            fail += 1;
            eprintln!(
                "trial {t}: dp {dp_c} = {dp_v} vs brute force {bf_c} = {bf_v}"
            );
        }
    }
    println!("dp-check: {pass}/{trials} pass, {fail} fail");
    if fail > 0 {
        return Err(CliError::assertion(format!(
            "{fail} of {trials} trials disagreed with the enumeration oracle"
        )));
    }
    Ok(())
}

pub fn speed_test(
    sizes: &[usize],
    impressions: usize,
    reps: usize,
    batch_size: usize,
    out: Option<&Path>,
    seed: Option<u64>,
) -> CliResult {
    if sizes.is_empty() {
        return Err(CliError::data("no sizes given"));
    }
    let seed = resolve_seed(seed)?;
    let policies = [
        (PolicyName::FullTs, PolicyParams::default()),
        (PolicyName::Mvt, PolicyParams::default()),
        (PolicyName::Aes, PolicyParams::default()),
    ];
    let mut all_rows = Vec::new();
    for &size in sizes {
        let graph = Arc::new(preset_graph(size)?);
        let env = SyntheticEnv::generate(graph, seed ^ size as u64, 0.01, 0.30)?;
        let rows = timing_benchmark(&policies, &env, impressions, batch_size, reps, seed)?;
        for r in &rows {
            println!(
                "{:<8} n={:<6} {:.4}s +- {:.4}s  ops/select {:.1}",
                r.policy, r.n_creatives, r.mean_time_s, r.std_time_s, r.ops_per_select
            );
        }
        all_rows.extend(rows);
    }
    if let Some(path) = out {
        let mut file = std::fs::File::create(path)?;
        write_timing_csv(&all_rows, &mut file)?;
    }

    let largest = *sizes.iter().max().expect("sizes non-empty");
    let at_largest: Vec<_> = all_rows
        .iter()
        .filter(|r| r.n_creatives == largest)
        .collect();
    let time_of = |name: &str| {
        at_largest
            .iter()
            .find(|r| r.policy == name)
            .map(|r| r.mean_time_s)
            .expect("policy timed")
    };
    let (aes, full_ts) = (time_of("aes"), time_of("full_ts"));
    if aes >= full_ts {
        return Err(CliError::assertion(format!(
            "aes ({aes:.4}s) not faster than full_ts ({full_ts:.4}s) at {largest} creatives"
        )));
    }
    Ok(())
}

pub fn gen_graph(
    out: &Path,
    creatives: usize,
    forbid_frac: f64,
    seed: Option<u64>,
) -> CliResult {
    let seed = resolve_seed(seed)?;
    let base = preset_graph(creatives)?;
    let graph = if forbid_frac > 0.0 {
        random_constrained(&base, forbid_frac, seed)?
    } else {
        base
    };
    let mut gf = GraphFile::from_graph(&graph);
    gf.weights = None;
    gf.save(out)?;
    println!(
        "wrote {} ({} creatives, {} vertices, {} edges)",
        out.display(),
        graph.enumerate_creatives().count(),
        graph.n_vertices(),
        graph.n_edges()
    );
    Ok(())
}

/// Apply a random constraint mask to a structure, keeping at least one
/// feasible creative.
fn random_constrained(
    base: &ElementGraph,
    forbid_frac: f64,
    seed: u64,
) -> Result<ElementGraph, CliError> {
    use aes_core::graph::ForbiddenPair;
    use rand::Rng;
    let tree = base.tree();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let mut constraints = Vec::new();
        for (p, c) in tree.edges() {
            for pe in 0..tree.element_count(p) {
                for ce in 0..tree.element_count(c) {
                    if rng.random_bool(forbid_frac.clamp(0.0, 1.0)) {
                        constraints.push(ForbiddenPair {
                            ingredient_a: p,
                            element_a: pe,
                            ingredient_b: c,
                            element_b: ce,
                        });
                    }
                }
            }
        }
        if let Ok(g) = ElementGraph::structure_only(tree.clone(), &constraints) {
            if g.enumerate_creatives().next().is_some() {
                return Ok(g);
            }
        }
    }
    Err(CliError::data(
        "could not find a feasible constraint mask; lower --forbid-frac",
    ))
}

pub fn gen_replay(
    graph_path: &Path,
    out: &Path,
    mean_ctr: f64,
    impressions: u64,
    concentration: f64,
    seed: Option<u64>,
) -> CliResult {
    let seed = resolve_seed(seed)?;
    let graph = load_graph(graph_path)
        .map_err(|e| CliError::data(format!("graph file {}: {e}", graph_path.display())))?;
    let text = fabricate_replay_log(&graph, seed, mean_ctr, impressions, concentration)?;
    std::fs::write(out, &text)?;
    println!(
        "wrote {} ({} rows, {} impressions)",
        out.display(),
        text.lines().count() - 1,
        impressions
    );
    Ok(())
}

