//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termlab::envs::CliffLayout;
use termlab::harness::{run_experiment, ExperimentConfig, RunSummary};
use termlab::oracle::{
    cliff_mdp, corridor_mdp, enumerate_policies, policy_outcome, tabular_td, value_iteration, RankedPolicy,
    TabularMdp, TabularSchedule,
};
use termlab::td::{
    bracket_identity, consistency_check_u, correction_u, kappa, kappa_max, underestimation_u_tilde, zeta_max,
    CorrectionInputs,
};
use termlab::{td_target, Handler, TdConfig, TerminationKind, ValueTriple};

type Outcome = Result<(bool, String), String>;

struct Suite {
    passed: usize,
    failed: usize,
}

impl Suite {
    fn check(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && took < budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{id:>2}] {name}: {detail}; runtime {:.1}s (limit {:.0}s)",
            took.as_secs_f64(),
            budget.as_secs_f64()
        );
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
    }
}

fn out_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn kappa_grid() -> Outcome {
    const N: usize = 1_000_000;
    let mut worst_gap: f64 = 0.0;
    let mut worst_arg: f64 = 0.0;
    for gamma in [0.5, 0.9, 0.99, 0.999] {
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=N {
            let z = i as f64 / N as f64;
            let k = kappa(z, gamma).map_err(|e| e.to_string())?;
            if k > best {
                best = k;
                arg = z;
            }
        }
        let km = kappa_max(gamma).map_err(|e| e.to_string())?;
        let zm = zeta_max(gamma).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((km - best).abs());
        worst_arg = worst_arg.max((zm - arg).abs());
    }
    let step = 1.0 / N as f64;
    Ok((
        worst_gap <= 1e-9 && worst_arg <= step,
        format!("max |kappa_max - grid max| {worst_gap:.2e} (tol 1e-9), max |zeta_max - grid argmax| {worst_arg:.1e} (tol {step:.0e} grid step)"),
    ))
}

fn bracket_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let r = rng.random_range(-5.0..5.0);
        let v = rng.random_range(-50.0..50.0);
        let vn = rng.random_range(-50.0..50.0);
        let gamma = rng.random_range(0.0..0.99);
        let (lhs, rhs) = bracket_identity(r, v, vn, gamma).map_err(|e| e.to_string())?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok((worst <= 1e-12, format!("10^5 draws, max |lhs - rhs| {worst:.2e} (tol 1e-12)")))
}

fn consistency_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut bad = 0;
    for _ in 0..100_000 {
        let inputs = CorrectionInputs {
            zeta: rng.random_range(0.0..=1.0),
            gamma: rng.random_range(0.0..0.999),
            reward: rng.random_range(-10.0..10.0),
            v_next: rng.random_range(-1e3..1e3),
        };
        if !consistency_check_u(&inputs).map_err(|e| e.to_string())? {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("10^5 draws, {bad} inconsistent (tol 0)")))
}

fn u_tilde_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let draw = |rng: &mut ChaCha8Rng| {
        (
            ValueTriple {
                v: rng.random_range(-100.0..100.0),
                v_next: rng.random_range(-100.0..100.0),
                reward: rng.random_range(-5.0..5.0),
            },
            rng.random_range(0.01..0.99),
        )
    };
    let mut negative = 0;
    for _ in 0..1_000_000 {
        let (t, gamma) = draw(&mut rng);
        let lambda = rng.random_range(0.0..=1.0);
        if underestimation_u_tilde(&t, gamma, lambda).map_err(|e| e.to_string())? < 0.0 {
            negative += 1;
        }
    }
    let mut dominance_violations = 0;
    for _ in 0..1_000 {
        let (t, gamma) = draw(&mut rng);
        let ut = underestimation_u_tilde(&t, gamma, 1.0).map_err(|e| e.to_string())?;
        for i in 0..10_000 {
            let zeta = i as f64 / 9_999.0;
            let u = correction_u(&CorrectionInputs {
                zeta,
                gamma,
                reward: t.reward,
                v_next: t.v_next,
            })
            .map_err(|e| e.to_string())?;
            if u > ut + 1e-12 * (1.0 + ut.abs()) {
                dominance_violations += 1;
            }
        }
    }
    let mut not_bit_exact = 0;
    for _ in 0..100_000 {
        let (t, gamma) = draw(&mut rng);
        let under = TdConfig::new(Handler::Underest).with_gamma(gamma).with_lambda(0.0);
        let ignore = TdConfig::new(Handler::Ignore).with_gamma(gamma);
        for kind in TerminationKind::ALL {
            let a = td_target(kind, &t, &under).map_err(|e| e.to_string())?;
            let b = td_target(kind, &t, &ignore).map_err(|e| e.to_string())?;
            if a.to_bits() != b.to_bits() {
                not_bit_exact += 1;
            }
        }
    }
    let mut stationary_nonzero = 0;
    for _ in 0..10_000 {
        let r = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.01..0.999);
        let vr = r / (1.0 - gamma);
        let t = ValueTriple {
            v: vr,
            v_next: vr,
            reward: r,
        };
        if underestimation_u_tilde(&t, gamma, rng.random_range(0.0..=1.0)).map_err(|e| e.to_string())? != 0.0 {
            stationary_nonzero += 1;
        }
    }
    Ok((
        negative + dominance_violations + not_bit_exact + stationary_nonzero == 0,
        format!(
            "U~ < 0 on {negative}/10^6; U~(1) < U(zeta) on {dominance_violations}/10^7; \
             lambda=0 not bit-exact on {not_bit_exact}/4*10^5; non-zero at stationary point on {stationary_nonzero}/10^4"
        ),
    ))
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let worst = common::worst_gradient_error(20, &mut rng);
    Ok((
        worst < 1e-4,
        format!(
            "20 cases x {} architectures, worst relative error {worst:.2e} (tol 1e-4)",
            common::ARCHITECTURES.len()
        ),
    ))
}

fn bias_direction() -> Outcome {
    let gamma = 0.99;
    let mut ok_seeds = [0usize; 2];
    for (k, (reward, kind, below)) in [(1.0, TerminationKind::Success, true), (-1.0, TerminationKind::Failure, false)]
        .into_iter()
        .enumerate()
    {
        let mdp = corridor_mdp(8, reward, kind, 50);
        let truth = value_iteration(&mdp, gamma, 1e-10).map_err(|e| e.to_string())?;
        for seed in 0..10 {
            let run = tabular_td(&mdp, &TdConfig::new(Handler::Zero), &TabularSchedule::new(2000), seed)
                .map_err(|e| e.to_string())?;
            let values = run.values();
            let good = mdp.terminal_adjacent().into_iter().all(|(s, a)| {
                let (v, q) = (values[s], run.q[s][a]);
                if below {
                    v < truth.values[s] && q < truth.q[s][a]
                } else {
                    v > truth.values[s] && q > truth.q[s][a]
                }
            });
            ok_seeds[k] += good as usize;
        }
    }
    Ok((
        ok_seeds == [10, 10],
        format!(
            "positive corridor strictly below truth on {}/10 seeds, negative corridor strictly above on {}/10 (need 10/10)",
            ok_seeds[0], ok_seeds[1]
        ),
    ))
}

fn rank_of(ranked: &[RankedPolicy], mdp: &TabularMdp, policy: &[usize]) -> Option<usize> {
    let live = mdp.non_terminal_states();
    ranked.iter().position(|r| live.iter().all(|&s| r.policy[s] == policy[s]))
}

fn policy_flip() -> Outcome {
    let mut cfg = ExperimentConfig::load(&configs().join("cliff_chain.toml")).map_err(|e| e.to_string())?;
    cfg.handlers = vec![Handler::Zero, Handler::Underest];
    cfg.seeds = (0..10).collect();
    cfg.lambda = 0.5;
    cfg.out = out_dir("cliff_chain");
    let summaries = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let layout = CliffLayout::default();
    let mdp = cliff_mdp(&layout, 50);
    let ranked = enumerate_policies(&mdp, cfg.gamma).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    if policy_outcome(&mdp, &ranked[0].policy, &mut rng).0 != TerminationKind::Success {
        return Err("enumerated optimum does not reach the goal".into());
    }
    let mut good = [0usize; 2];
    for (k, summary) in summaries.iter().enumerate() {
        let td = cfg.td_config(summary.handler);
        for rec in &summary.seeds {
            let run = tabular_td(&mdp, &td, &TabularSchedule::new(cfg.train_episodes()), rec.seed)
                .map_err(|e| e.to_string())?;
            let rank = rank_of(&ranked, &mdp, &run.policy).ok_or("policy missing from enumeration")?;
            let fail = rec.eval_failure_rate.ok_or("seed diverged")?;
            let ok = match summary.handler {
                Handler::Zero => fail >= 0.9 && rank > 0,
                _ => fail <= 0.1 && rank == 0,
            };
            good[k] += ok as usize;
        }
    }
    Ok((
        good == [10, 10],
        format!(
            "zero: failure rate {:.2}, suboptimal and failing on {}/10 seeds; underest: failure rate {:.2}, enumerated optimum on {}/10 seeds (need 10/10)",
            summaries[0].failure_rate.unwrap_or(f64::NAN),
            good[0],
            summaries[1].failure_rate.unwrap_or(f64::NAN),
            good[1]
        ),
    ))
}

fn pendulum(file: &str, handlers: Vec<Handler>, name: &str) -> Result<Vec<RunSummary>, String> {
    let mut cfg = ExperimentConfig::load(&configs().join(file)).map_err(|e| e.to_string())?;
    cfg.handlers = handlers;
    cfg.out = out_dir(name);
    run_experiment(&cfg).map_err(|e| e.to_string())
}

fn fmt_seeds(s: &RunSummary) -> String {
    s.seeds
        .iter()
        .map(|r| match (r.median_eval_return, r.eval_failure_rate) {
            (Some(m), Some(f)) => format!("{m:.0}/{f:.2}"),
            _ => "diverged".into(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn negative_offset(runs: &[RunSummary]) -> Outcome {
    let (zero, under) = (&runs[0], &runs[1]);
    let ordered = zero
        .seeds
        .iter()
        .zip(&under.seeds)
        .filter(|(z, u)| match (z.median_eval_return, z.eval_failure_rate, u.median_eval_return) {
            (Some(zr), Some(zf), Some(ur)) => ur >= 2.0 * zr && zf >= 0.8,
            _ => false,
        })
        .count();
    Ok((
        ordered >= 4,
        format!(
            "underest median >= 2x zero and zero failure rate >= 0.8 on {ordered}/5 seeds (need 4/5); \
             median/failure per seed: zero [{}], underest [{}]",
            fmt_seeds(zero),
            fmt_seeds(under)
        ),
    ))
}

fn offset_invariance(negative: &RunSummary, positive: &RunSummary) -> Outcome {
    let count = |s: &RunSummary| s.seeds.iter().filter(|r| r.eval_failure_rate.is_some_and(|f| f <= 0.2)).count();
    let (n, p) = (count(negative), count(positive));
    Ok((
        n >= 4 && p >= 4,
        format!(
            "underest failure rate <= 0.2 on {n}/5 seeds at offset -10 and {p}/5 at offset +10 (need 4/5 each); \
             median/failure per seed: -10 [{}], +10 [{}]",
            fmt_seeds(negative),
            fmt_seeds(positive)
        ),
    ))
}

fn csv_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable log"));
            }
        }
    }
    out
}

fn reproducibility() -> Outcome {
    let mut cliff = ExperimentConfig::load(&configs().join("cliff_chain.toml")).map_err(|e| e.to_string())?;
    cliff.seeds = vec![0, 1, 2];
    let mut sac = ExperimentConfig::load(&configs().join("pendulum_negative.toml")).map_err(|e| e.to_string())?;
    sac.episodes = Some(40);
    sac.seeds = vec![0, 1];
    let mut pg = ExperimentConfig::load(&configs().join("reacher_pg.toml")).map_err(|e| e.to_string())?;
    pg.episodes = Some(10);
    pg.seeds = vec![0];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, cfg) in [("cliff", cliff), ("reparam", sac), ("pg", pg)] {
        let mut logs = Vec::new();
        for rep in 0..2 {
            let mut c = cfg.clone();
            c.out = out_dir(&format!("repro_{name}_{rep}"));
            run_experiment(&c).map_err(|e| e.to_string())?;
            logs.push(csv_files(&c.out));
        }
        if logs[0].is_empty() || logs[0].keys().ne(logs[1].keys()) {
            return Err(format!("{name}: log file sets differ"));
        }
        for (path, bytes) in &logs[0] {
            compared += 1;
            if logs[1][path] != *bytes {
                differing.push(format!("{name}/{}", path.display()));
            }
        }
    }
    Ok((
        differing.is_empty(),
        format!("{compared} CSV files from tabular, reparam and pg runs compared, {} differ {differing:?}", differing.len()),
    ))
}

fn main() {
    let mut suite = Suite { passed: 0, failed: 0 };
    let secs = Duration::from_secs;
    suite.check(1, "kappa_max closed form vs brute-force grid", secs(1), kappa_grid);
    suite.check(2, "bracket identity fuzz", secs(5), bracket_fuzz);
    suite.check(3, "absorbing-state consistency fuzz", secs(5), consistency_fuzz);
    suite.check(4, "U~ properties", secs(30), u_tilde_properties);
    suite.check(5, "MLP gradient oracle", secs(10), gradient_oracle);
    suite.check(6, "tabular bias direction", secs(60), bias_direction);
    suite.check(7, "tabular policy flip on cliff-chain", secs(120), policy_flip);

    let mut negative: Option<Vec<RunSummary>> = None;
    suite.check(8, "pendulum negative offset: underest vs zero", secs(30 * 60), || {
        let runs = pendulum("pendulum_negative.toml", vec![Handler::Zero, Handler::Underest], "pendulum_negative")?;
        let outcome = negative_offset(&runs);
        negative = Some(runs);
        outcome
    });
    suite.check(9, "offset invariance under underest", secs(30 * 60), || {
        let neg = negative.as_ref().ok_or("negative-offset runs unavailable")?;
        let pos = pendulum("pendulum_positive.toml", vec![Handler::Underest], "pendulum_positive")?;
        offset_invariance(&neg[1], &pos[0])
    });
    suite.check(10, "byte-identical CSV logs on repeat", secs(10 * 60), reproducibility);

    println!("{} passed, {} failed", suite.passed, suite.failed);
    if suite.failed > 0 {
        std::process::exit(1);
    }
}

