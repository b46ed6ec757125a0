//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use equigrid::env::{infeasibility, operating_cost, reward, sample_demands, step};
use equigrid::eval::{benchmark, BenchmarkResult};
use equigrid::policies::{build_policy, random_policy, PolicyHandle, PolicySettings};
use equigrid::report::{encode_results, encode_series, encode_trace, Format};
use equigrid::solvers::{mcts_search, value_iteration, DiscreteMdp};
use equigrid::{default_scenario, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BENCHMARK_POLICIES: [&str; 5] = ["mcts-base", "vi", "mcts-re", "expert", "random"];
const EPISODES: usize = 100;
const HORIZON: usize = 10;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:.2?}, limit {limit:?}"))
}

fn c1_reward_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let (state, w) = common::random_state(&mut rng);
        let got = reward(&state, &w);
        let want = common::brute_force_reward(&state, &w);
        let rel = (got - want).abs() / want.abs().max(1e-300);
        let rel = if got == want { 0.0 } else { rel };
        worst = worst.max(rel);
        ensure(rel <= 1e-9, || format!("state {k}: reward {got} vs oracle {want} (rel {rel:e})"))?;
    }
    within(start.elapsed(), Duration::from_secs(1), "1000 evaluations")?;
    Ok(format!("1000 states, worst relative error {worst:.1e}, {:.2?}", start.elapsed()))
}

fn c2_vi_oracle() -> Outcome {
    let start = Instant::now();
    let mdp = common::toy_mdp();
    ensure(mdp.n_states() == 8 && mdp.n_actions() == 5, || {
        format!("toy has {} states and {} actions", mdp.n_states(), mdp.n_actions())
    })?;
    let gamma = 0.95;
    let vi = value_iteration(&mdp, gamma, 1e-11, 1_000_000).map_err(|e| e.to_string())?;
    let (v_star, greedy) = common::enumerate_optimal(&mdp, gamma);
    let mut worst: f64 = 0.0;
    for (s, (v, want)) in vi.values.iter().zip(&v_star).enumerate() {
        let err = (v - want).abs();
        worst = worst.max(err);
        ensure(err <= 1e-8, || format!("state {s}: VI {v} vs enumeration {want}"))?;
    }
    ensure(vi.policy == greedy, || format!("greedy actions {:?} vs enumeration {:?}", vi.policy, greedy))?;
    within(start.elapsed(), Duration::from_secs(1), "VI oracle")?;
    Ok(format!("max value error {worst:.1e}, policy {:?}, {:.2?}", vi.policy, start.elapsed()))
}

fn c3_closed_form() -> Outcome {
    let mdp = DiscreteMdp::from_tables(vec![vec![vec![(0, 1.0)]]], vec![vec![1.0]]).map_err(|e| e.to_string())?;
    let vi = value_iteration(&mdp, 0.95, 1e-12, 1_000_000).map_err(|e| e.to_string())?;
    let v = vi.values[0];
    ensure((v - 20.0).abs() <= 1e-6, || format!("V = {v}"))?;
    Ok(format!("V = {v:.9} after {} sweeps", vi.sweeps))
}

fn c4_budget_conservation() -> Outcome {
    let base = default_scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    let mut shortfalls = 0usize;
    let mut steps = 0usize;
    while steps < 10_000 {
        let mut params = base.params.clone();
        params.op_cost_scale = rng.random_range(0.0..200.0);
        let mut state = base.initial_state();
        for _ in 0..rng.random_range(1..=20) {
            let action = random_policy(&state, &params, &mut rng);
            let out = step(&state, action, &mut rng, &params).map_err(|e| e.to_string())?;
            let (dr, dn) = action.supply_delta(&params);
            let op = operating_cost(&state, action.city(), dr, dn, params.op_cost_scale).map_err(|e| e.to_string())?;
            if out.next_state.budget + out.action_cost_paid + out.op_cost_paid != state.budget
                || out.op_cost_paid + out.op_shortfall != op
                || out.next_state.budget.is_negative()
            {
                violations += 1;
            }
            if out.op_shortfall.cents() > 0 {
                shortfalls += 1;
            }
            state = out.next_state;
            steps += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations in {steps} steps"))?;
    Ok(format!("{steps} steps, 0 violations ({shortfalls} with an operating shortfall)"))
}

fn c5_mcts_trap() -> Outcome {
    let start = Instant::now();
    let scenario = common::trap_scenario();
    let optimal = common::trap_optimal_first_action(&scenario);
    let cfg = common::trap_mcts_config();
    let state = scenario.initial_state();
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if mcts_search(&state, &scenario.params, &cfg, &mut rng).map_err(|e| e.to_string())? == optimal {
            hits += 1;
        }
    }
    ensure(hits >= 95, || format!("optimal first action {optimal} chosen in {hits}/100 runs"))?;
    within(start.elapsed(), Duration::from_secs(30), "100 searches")?;
    Ok(format!("{optimal} chosen in {hits}/100 runs, {:.2?}", start.elapsed()))
}

fn run_benchmark(scenario: &Scenario) -> Result<BenchmarkResult, String> {
    let settings = PolicySettings::default_for(scenario);
    let policies: Vec<PolicyHandle> = BENCHMARK_POLICIES
        .iter()
        .map(|n| build_policy(n, scenario, &settings))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    benchmark(&policies, scenario, HORIZON, EPISODES, 0).map_err(|e| e.to_string())
}

struct Timed {
    result: Result<BenchmarkResult, String>,
    elapsed: Duration,
}

fn first_benchmark() -> &'static Timed {
    static RUN: OnceLock<Timed> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let result = run_benchmark(&default_scenario());
        Timed { result, elapsed: start.elapsed() }
    })
}

fn c6_orderings() -> Outcome {
    let timed = first_benchmark();
    let bench = timed.result.as_ref().map_err(Clone::clone)?;
    let agg = |name: &str| bench.run(name).map(|r| &r.aggregate).ok_or_else(|| format!("no results for {name}"));
    let (expert, random) = (agg("expert")?, agg("random")?);
    let (base, re) = (agg("mcts-base")?, agg("mcts-re")?);

    let pooled = (expert.reward.std_error(expert.episodes).powi(2) + random.reward.std_error(random.episodes).powi(2)).sqrt();
    let gap = expert.reward.mean - random.reward.mean;
    let mut failures = Vec::new();
    if gap < 2.0 * pooled {
        failures.push(format!("(a) expert − random = {gap:.3}, needs ≥ {:.3}", 2.0 * pooled));
    }
    if re.re_fraction.mean <= base.re_fraction.mean {
        failures.push(format!(
            "(b) mcts-re RE fraction {:.4} not above mcts-base {:.4}",
            re.re_fraction.mean, base.re_fraction.mean
        ));
    }
    if expert.low_income_population.mean >= random.low_income_population.mean {
        failures.push(format!(
            "(c) expert low-income underserved {:.4} not below random {:.4}",
            expert.low_income_population.mean, random.low_income_population.mean
        ));
    }
    if timed.elapsed >= Duration::from_secs(300) {
        failures.push(format!("benchmark took {:.1?}", timed.elapsed));
    }
    let detail = format!(
        "(a) expert {:.2} vs random {:.2}, gap {:.2} = {:.1} pooled SE; (b) RE fraction mcts-re {:.4} vs mcts-base {:.4}; \
         (c) low-income underserved expert {:.3} vs random {:.3}; {:.1?}",
        expert.reward.mean,
        random.reward.mean,
        gap,
        if pooled > 0.0 { gap / pooled } else { f64::INFINITY },
        re.re_fraction.mean,
        base.re_fraction.mean,
        expert.low_income_population.mean,
        random.low_income_population.mean,
        timed.elapsed,
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn c7_sampling() -> Outcome {
    let mut c = common::city("Sample", true);
    (c.baseline_demand, c.demand_stddev) = (580.0, 1.0);
    let state = equigrid::GridState { budget: equigrid::Money::ZERO, cities: vec![c] };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_demands(&state, &mut rng)[0]).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    ensure((mean - 580.0).abs() <= 0.02, || format!("mean {mean}"))?;
    ensure((std - 1.0).abs() <= 0.02, || format!("std {std}"))?;
    Ok(format!("mean {mean:.4}, std {std:.4} over 100000 draws"))
}

fn encode_all(bench: &BenchmarkResult, scenario: &Scenario) -> Result<Vec<Vec<u8>>, String> {
    let mut out = Vec::new();
    for fmt in [Format::Csv, Format::Json] {
        out.push(encode_results(&bench.rows(), fmt).map_err(|e| e.to_string())?);
        out.push(encode_series(&bench.runs, fmt).map_err(|e| e.to_string())?);
        for run in &bench.runs {
            for trace in &run.traces {
                out.push(encode_trace(trace, scenario, fmt).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

fn c8_determinism() -> Outcome {
    let scenario = default_scenario();
    let first = first_benchmark().result.as_ref().map_err(Clone::clone)?;
    let second = run_benchmark(&scenario)?;
    let (a, b) = (encode_all(first, &scenario)?, encode_all(&second, &scenario)?);
    ensure(a.len() == b.len(), || format!("{} vs {} output files", a.len(), b.len()))?;
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    ensure(differing == 0, || format!("{differing} of {} outputs differ", a.len()))?;
    let bytes: usize = a.iter().map(Vec::len).sum();
    Ok(format!("{} outputs ({bytes} bytes) identical across two runs", a.len()))
}

fn c9_feasibility() -> Outcome {
    let scenario = default_scenario();
    let bench = first_benchmark().result.as_ref().map_err(Clone::clone)?;
    let mut failures = 0usize;
    let mut steps = 0usize;
    for run in &bench.runs {
        for trace in &run.traces {
            for rec in &trace.records {
                steps += 1;
                if infeasibility(&rec.state, rec.action, &scenario.params).is_some() {
                    failures += 1;
                }
            }
            for s in trace.post_states() {
                if s.cities.iter().any(|c| c.re_supply < 0.0 || c.nre_supply < 0.0) || s.budget.is_negative() {
                    failures += 1;
                }
            }
        }
    }
    ensure(failures == 0, || format!("{failures} assertion failures over {steps} steps"))?;
    ensure(steps == BENCHMARK_POLICIES.len() * EPISODES * HORIZON, || format!("only {steps} steps recorded"))?;
    Ok(format!("{steps} steps across {} policies, 0 failures", bench.runs.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("reward oracle", c1_reward_oracle),
        ("value-iteration oracle", c2_vi_oracle),
        ("closed-form self-loop", c3_closed_form),
        ("budget conservation", c4_budget_conservation),
        ("MCTS depth-2 trap", c5_mcts_trap),
        ("benchmark orderings", c6_orderings),
        ("demand sampling statistics", c7_sampling),
        ("output determinism", c8_determinism),
        ("feasibility safety", c9_feasibility),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
