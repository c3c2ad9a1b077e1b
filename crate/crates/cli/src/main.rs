mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;
use survsel::evaluation::{
    aggregate, evaluate_grid, write_cells_csv, write_folds_csv, write_instances_csv, write_summary_csv, write_summary_json,
    EvaluationReport,
};
use survsel::scenario::{compute_stats, generate_synthetic, load_scenario, write_csv, Scenario, SyntheticSpec};
use survsel::tuning::{tune_surrogate, write_trace_csv};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "survsel", version, about = "Algorithm selection from censored runtime data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config file
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Allow writing into a non-empty output directory
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// A1 always at 0.9·C; A3 at 0.1·C with probability 0.85, else timeout
    TwoPoint,
}

#[derive(Subcommand)]
enum Command {
    /// Print instance, algorithm, feature and censoring counts
    Stats {
        /// Scenario directories (default: `scenarios` from the config)
        paths: Vec<PathBuf>,
    },
    /// Generate a synthetic scenario directory
    Synth {
        /// Built-in scenario instead of a spec in --config
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 2000)]
        instances: usize,
        #[arg(long, default_value_t = 100.0)]
        cutoff: f64,
    },
    /// Cross-validate one selector on every configured scenario
    Evaluate,
    /// Cross-validate every configured selector and aggregate
    Sweep,
    /// Tune the surrogate loss on the first configured scenario
    Tune,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
        return pool.install(|| dispatch(cli));
    }
    #[cfg(not(feature = "parallel"))]
    if cli.global.jobs.is_some_and(|n| n > 1) {
        warn!("built without parallel support; --jobs ignored");
    }
    dispatch(cli)
}

fn dispatch(cli: Cli) -> Result<()> {
    let Cli { global, command } = cli;
    match command {
        Command::Stats { paths } => stats(&global, paths),
        Command::Synth { preset, instances, cutoff } => synth(&global, preset, instances, cutoff),
        Command::Evaluate => evaluate(&global, false),
        Command::Sweep => evaluate(&global, true),
        Command::Tune => tune(&global),
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    RunConfig::load(g.config.as_deref(), std::env::vars())
}

fn seed_of(g: &Global, cfg: &RunConfig) -> Result<u64> {
    g.seed
        .or(cfg.seed)
        .context("a seed is required: pass --seed or set `seed` in the config")
}

/// Output directory, created if needed. Refuses a non-empty directory
/// unless `--overwrite` was given.
fn prepare_out(g: &Global, cfg: &RunConfig) -> Result<PathBuf> {
    let out = g.out.clone().or_else(|| cfg.out.clone()).context("an output directory is required: pass --out")?;
    if out.exists() {
        let non_empty = fs::read_dir(&out)
            .with_context(|| format!("reading {}", out.display()))?
            .next()
            .is_some();
        if non_empty && !g.overwrite {
            bail!("output directory {} is not empty; pass --overwrite to reuse it", out.display());
        }
    }
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, seed: u64, extra: serde_json::Value) -> Result<()> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = json!({
        "command": command,
        "config": cfg,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": timestamp,
        "extra": extra,
    });
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Scenario>> {
    if paths.is_empty() {
        bail!("no scenarios given");
    }
    paths
        .iter()
        .map(|p| load_scenario(p).with_context(|| format!("loading scenario {}", p.display())))
        .collect()
}

fn stats(g: &Global, paths: Vec<PathBuf>) -> Result<()> {
    let paths = if paths.is_empty() { load_config(g)?.scenarios } else { paths };
    let scenarios = load_all(&paths)?;
    println!("{:<24} {:>7} {:>6} {:>4} {:>5} {:>9} {:>6}", "scenario", "#I", "#U", "#A", "#F", "C", "%C");
    for s in &scenarios {
        let st = compute_stats(s);
        println!(
            "{:<24} {:>7} {:>6} {:>4} {:>5} {:>9} {:>6.1}",
            st.name, st.n_instances, st.n_unsolvable, st.n_algorithms, st.n_features, st.cutoff, st.pct_censored
        );
    }
    Ok(())
}

fn synth(g: &Global, preset: Option<Preset>, instances: usize, cutoff: f64) -> Result<()> {
    let mut spec = match (preset, &g.config) {
        (Some(Preset::TwoPoint), _) => SyntheticSpec::two_point(instances, cutoff, 0),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SyntheticSpec>(&text).with_context(|| format!("invalid synthetic spec in {}", path.display()))?
        }
        (None, None) => bail!("pass --preset or a synthetic spec via --config"),
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    } else if preset.is_some() {
        bail!("a seed is required: pass --seed");
    }
    let cfg = RunConfig::default();
    let out = prepare_out(g, &cfg)?;
    let generated = generate_synthetic(&spec)?;
    write_csv(&generated.scenario, &out)?;
    let spec_path = out.join("spec.json");
    fs::write(&spec_path, serde_json::to_string_pretty(&spec)?).with_context(|| format!("writing {}", spec_path.display()))?;
    info!("wrote {} instances to {}", spec.n_instances, out.display());
    Ok(())
}

fn evaluate(g: &Global, sweep: bool) -> Result<()> {
    let cfg = load_config(g)?;
    let seed = seed_of(g, &cfg)?;
    let specs: Vec<String> = if sweep {
        if cfg.selectors.is_empty() {
            bail!("sweep needs a non-empty `selectors` list");
        }
        cfg.selectors.clone()
    } else {
        vec![cfg.selector.clone()]
    };
    let configs = specs.iter().map(|s| cfg.selector_config(s, seed)).collect::<Result<Vec<_>>>()?;
    let scenarios = load_all(&cfg.scenarios)?;
    let out = prepare_out(g, &cfg)?;

    info!("{} selector(s) on {} scenario(s), {} folds", configs.len(), scenarios.len(), cfg.folds);
    let results = evaluate_grid(&configs, &scenarios, cfg.folds, seed);
    let mut reports: Vec<EvaluationReport> = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        let (sc, se) = (&scenarios[k / configs.len()].name, &specs[k % configs.len()]);
        match r {
            Ok(rep) => {
                if !rep.is_complete() {
                    failures.push(format!("{se} on {sc}: folds {:?} failed", rep.failed_folds()));
                }
                info!("{se} on {sc}: PAR10 {:.2}, nPAR10 {:.4}", rep.par10, rep.npar10);
                reports.push(rep);
            }
            Err(e) => failures.push(format!("{se} on {sc}: {e}")),
        }
    }
    write_cells_csv(&reports, &out.join("cells.csv"))?;
    write_folds_csv(&reports, &out.join("folds.csv"))?;
    write_instances_csv(&reports, &out.join("instances.csv"))?;
    if sweep && failures.is_empty() {
        let rows = aggregate(&reports)?;
        write_summary_csv(&rows, &out.join("summary.csv"))?;
        write_summary_json(&rows, &out.join("summary.json"))?;
    }
    write_manifest(&out, if sweep { "sweep" } else { "evaluate" }, &cfg, seed, json!({ "selectors": specs }))?;
    if !failures.is_empty() {
        for f in &failures {
            warn!("{f}");
        }
        bail!("{} cell(s) did not complete", failures.len());
    }
    Ok(())
}

fn tune(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    let seed = seed_of(g, &cfg)?;
    let scenarios = load_all(&cfg.scenarios)?;
    if scenarios.len() > 1 {
        warn!("tune uses only the first scenario, {}", scenarios[0].name);
    }
    let s = &scenarios[0];
    let out = prepare_out(g, &cfg)?;
    let all: Vec<usize> = (0..s.n_instances()).collect();
    let forest = cfg.forest()?.with_seed(seed);
    let result = tune_surrogate(survsel::scenario::View::new(s, &all), &cfg.tuning(seed)?, &forest, cfg.conversion()?)?;
    let path = out.join("trace.csv");
    write_trace_csv(&result, fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    info!("best loss {} with validation PAR10 {:.3}", result.best, result.best_par10);
    if result.degenerate {
        warn!("every candidate scored the same; the first candidate was kept");
    }
    write_manifest(
        &out,
        "tune",
        &cfg,
        seed,
        json!({ "best": result.best.to_string(), "best_par10": result.best_par10, "degenerate": result.degenerate }),
    )
}
