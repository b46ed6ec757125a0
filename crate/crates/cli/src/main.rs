//! `equigrid` command-line front end: benchmark runs, single verbose
//! episodes, and scenario validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use equigrid::eval::{benchmark, compute_metrics, run_episode};
use equigrid::policies::{build_policy, PolicyHandle, PolicySettings, POLICY_NAMES};
use equigrid::report::{encode_json, encode_results, encode_series, encode_trace, Format, OutputSet};
use equigrid::scenario_file::{load_scenario_doc, resolve_source, ScenarioSource};
use equigrid::solvers::RolloutPolicy;
use equigrid::{Error, Result, Scenario};

#[derive(Parser, Debug)]
#[command(name = "equigrid", version, about = "Equity-aware renewable energy allocation: simulate, solve, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Benchmark policies over seeded episodes and write results, traces and series.
    Run(RunArgs),
    /// Run one episode and print every step.
    Episode(EpisodeArgs),
    /// Load and validate a scenario file.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct ScenarioArgs {
    /// Scenario TOML file, or `default` for the bundled eight-city scenario.
    #[arg(long, default_value = "default")]
    scenario: PathBuf,

    /// Episode length override (defaults to the scenario horizon).
    #[arg(long)]
    horizon: Option<usize>,

    /// Operating-cost multiplier override.
    #[arg(long)]
    op_cost_scale: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// MCTS iterations per decision.
    #[arg(long, default_value_t = 2000)]
    mcts_iterations: usize,

    /// UCT exploration constant.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    mcts_c: f64,

    /// Sampled demand outcomes kept per chance node.
    #[arg(long, default_value_t = 4)]
    mcts_chance_samples: usize,

    /// Rollout policy: random or expert.
    #[arg(long, default_value = "random")]
    mcts_rollout: String,

    /// Cities planned over by value iteration: comma-separated names or
    /// 1-based indices, or `all`. Defaults to the most populous low-income
    /// and high-income cities.
    #[arg(long)]
    vi_cities: Option<String>,

    /// Bins per budget and supply axis for value iteration.
    #[arg(long)]
    vi_bins: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    #[command(flatten)]
    solvers: SolverArgs,

    /// Comma-separated policy names.
    #[arg(long, default_value = "mcts-base,vi,mcts-re,expert,random")]
    policies: String,

    /// Episodes per policy.
    #[arg(long, default_value_t = 100)]
    episodes: usize,

    /// First seed; episodes use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,

    /// Comma-separated output formats: csv, json.
    #[arg(long, default_value = "csv,json")]
    format: String,

    /// Worker threads for episodes (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct EpisodeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,

    #[command(flatten)]
    solvers: SolverArgs,

    #[arg(long, default_value = "expert")]
    policy: String,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Also write the trace to this file (format from the extension).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value = "default")]
    scenario: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Episode(args) => cmd_episode(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<(Scenario, usize)> {
    let doc = load_scenario_doc(&args.scenario)?;
    let mut scenario = doc.build()?;
    if let Some(scale) = args.op_cost_scale {
        scenario.params.op_cost_scale = scale;
        scenario.params.validate()?;
    }
    let horizon = args.horizon.unwrap_or(scenario.params.horizon);
    if horizon < 1 {
        return Err(Error::InvalidArgument("--horizon must be >= 1".into()));
    }
    Ok((scenario, horizon))
}

fn parse_city_list(scenario: &Scenario, spec: &str) -> Result<Option<Vec<usize>>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let idx = match item.parse::<usize>() {
            Ok(k) if k >= 1 && k <= scenario.city_count() => k - 1,
            Ok(k) => return Err(Error::InvalidArgument(format!("city index {k} out of range 1..={}", scenario.city_count()))),
            Err(_) => scenario
                .city_index(item)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown city '{item}'")))?,
        };
        out.push(idx);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("--vi-cities is empty".into()));
    }
    Ok(Some(out))
}

fn settings(scenario: &Scenario, horizon: usize, args: &SolverArgs) -> Result<PolicySettings> {
    let mut s = PolicySettings::default_for(scenario);
    s.mcts.iterations = args.mcts_iterations;
    s.mcts.exploration_constant = args.mcts_c;
    s.mcts.chance_samples = args.mcts_chance_samples;
    s.mcts.max_depth = horizon;
    s.mcts.rollout_policy = match args.mcts_rollout.as_str() {
        "random" => RolloutPolicy::Random,
        "expert" => RolloutPolicy::Expert,
        other => return Err(Error::InvalidArgument(format!("unknown rollout policy '{other}'"))),
    };
    s.mcts.validate()?;
    if let Some(list) = &args.vi_cities {
        s.vi.city_subset = parse_city_list(scenario, list)?;
    }
    if let Some(bins) = args.vi_bins {
        if bins < 2 {
            return Err(Error::InvalidArgument("--vi-bins must be >= 2".into()));
        }
        s.vi.budget_bins = bins;
        s.vi.supply_bins = bins;
    }
    Ok(s)
}

fn parse_policies(list: &str) -> Result<Vec<String>> {
    let names: Vec<String> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
    if names.is_empty() {
        return Err(Error::InvalidArgument("at least one policy is required".into()));
    }
    for (k, n) in names.iter().enumerate() {
        if !POLICY_NAMES.contains(&n.as_str()) {
            return Err(Error::InvalidArgument(format!("unknown policy '{n}' (expected one of: {})", POLICY_NAMES.join(", "))));
        }
        if names[..k].contains(n) {
            return Err(Error::InvalidArgument(format!("policy '{n}' listed twice")));
        }
    }
    Ok(names)
}

fn parse_formats(list: &str) -> Result<Vec<Format>> {
    let mut formats = Vec::new();
    for f in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let f: Format = f.parse()?;
        if !formats.contains(&f) {
            formats.push(f);
        }
    }
    if formats.is_empty() {
        return Err(Error::InvalidArgument("at least one output format is required".into()));
    }
    Ok(formats)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::InvalidArgument("--jobs must be >= 1".into()));
        }
        builder = builder.num_threads(j);
    }
    builder.build().map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn scenario_label(path: &Path) -> String {
    match resolve_source(path) {
        ScenarioSource::Bundled => "default".to_string(),
        ScenarioSource::File(p) => p.display().to_string(),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (scenario, horizon) = load(&args.scenario)?;
    let names = parse_policies(&args.policies)?;
    let formats = parse_formats(&args.format)?;
    if args.episodes < 2 {
        return Err(Error::InvalidArgument("--episodes must be >= 2".into()));
    }
    let settings = settings(&scenario, horizon, &args.solvers)?;
    let pool = thread_pool(args.jobs)?;

    let (policies, result) = pool.install(|| -> Result<_> {
        let policies: Vec<PolicyHandle> =
            names.iter().map(|n| build_policy(n, &scenario, &settings)).collect::<Result<_>>()?;
        let result = benchmark(&policies, &scenario, horizon, args.episodes, args.seed)?;
        Ok((policies, result))
    })?;

    let mut out = OutputSet::new();
    let written = (|| -> Result<()> {
        out.create_dir(&args.out)?;
        let episodes_dir = args.out.join("episodes");
        out.create_dir(&episodes_dir)?;
        for &fmt in &formats {
            let ext = fmt.extension();
            out.write(&args.out.join(format!("results.{ext}")), &encode_results(&result.rows(), fmt)?)?;
            out.write(&args.out.join(format!("series.{ext}")), &encode_series(&result.runs, fmt)?)?;
            for run in &result.runs {
                for trace in &run.traces {
                    let name = format!("{}-{}.{ext}", trace.policy, trace.seed);
                    out.write(&episodes_dir.join(name), &encode_trace(trace, &scenario, fmt)?)?;
                }
            }
        }
        let log = serde_json::json!({
            "scenario": scenario_label(&args.scenario.scenario),
            "horizon": horizon,
            "episodes": args.episodes,
            "base_seed": args.seed,
            "op_cost_scale": scenario.params.op_cost_scale,
            "policies": policies.iter().map(PolicyHandle::metadata).collect::<Vec<_>>(),
        });
        out.write(&args.out.join("run.json"), &encode_json(&log)?)?;
        Ok(())
    })();
    if let Err(e) = written {
        out.rollback();
        return Err(e);
    }

    println!("{:<10} {:>22} {:>14} {:>18} {:>18}", "policy", "reward", "RE %", "budget used", "low-inc pop");
    for row in result.rows() {
        println!(
            "{:<10} {:>22} {:>14} {:>18} {:>18}",
            row.policy,
            format!("{:.1} ± {:.1}", row.reward.mean, row.reward.std),
            format!("{:.1} ± {:.1}", 100.0 * row.re_fraction.mean, 100.0 * row.re_fraction.std),
            format!("{:.1} ± {:.1}", row.budget_used.mean, row.budget_used.std),
            format!("{:.3} ± {:.3}", row.low_income_population.mean, row.low_income_population.std),
        );
    }
    println!("wrote {} files to {}", out.paths().len(), args.out.display());
    Ok(())
}

fn cmd_episode(args: EpisodeArgs) -> Result<()> {
    let (scenario, horizon) = load(&args.scenario)?;
    let settings = settings(&scenario, horizon, &args.solvers)?;
    let policy = build_policy(&args.policy, &scenario, &settings)?;
    let trace = run_episode(&policy, &scenario, horizon, args.seed)?;
    println!("{:>4}  {:<26} {:>14} {:>10} {:>10} {:>12}", "step", "action", "reward", "capital", "operating", "budget");
    for r in &trace.records {
        println!(
            "{:>4}  {:<26} {:>14.3} {:>10} {:>10} {:>12}{}",
            r.step,
            r.action.label(&scenario.cities),
            r.reward,
            r.action_cost.to_string(),
            r.op_cost.to_string(),
            r.budget_after.to_string(),
            r.note.as_deref().map(|n| format!("  [{n}]")).unwrap_or_default(),
        );
    }
    let m = compute_metrics(&trace, &scenario)?;
    println!(
        "discounted return {:.3}; RE {:.2}%; budget used {:.2}; underserved low-income {} cities / {:.4} pop; high-income {} cities / {:.4} pop",
        m.discounted_return,
        100.0 * m.re_fraction,
        m.budget_used,
        m.underserved_low_income_cities,
        m.underserved_low_income_population,
        m.underserved_high_income_cities,
        m.underserved_high_income_population,
    );
    if let Some(path) = &args.out {
        let fmt: Format = path.extension().and_then(|e| e.to_str()).unwrap_or("json").parse()?;
        equigrid::report::write_file(path, &encode_trace(&trace, &scenario, fmt)?)?;
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let doc = load_scenario_doc(&args.scenario)?;
    let scenario = doc.build()?;
    let low = scenario.cities.iter().filter(|c| c.is_low_income()).count();
    println!(
        "{}: ok ({} cities, {} low-income; budget {}; horizon {}; gamma {})",
        scenario_label(&args.scenario),
        scenario.city_count(),
        low,
        scenario.params.initial_budget,
        scenario.params.horizon,
        scenario.params.gamma,
    );
    Ok(())
}
