use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::log::{write_rows, EpisodeRow};
use super::summary::{compare, RunSummary, SeedRecord};
use super::{io_err, ExperimentConfig, HarnessError};
use crate::agents::checkpoint::Checkpoint;
use crate::agents::{AgentError, Algo, EpisodeLog, EpisodeRunner, GaussianPolicy, PgAgent, SacAgent};
use crate::envs::{make_env, CliffChain, Environment, OffsetConfig, OffsetEnv};
use crate::oracle::{cliff_mdp, policy_outcome, tabular_td, TabularMdp, TabularSchedule};
use crate::td::{Handler, TerminationKind};

/// Evaluation runs use `seed + EVAL_SEED_SHIFT` so they never share reset seeds with training.
pub const EVAL_SEED_SHIFT: u64 = 1 << 32;

type EvalEpisode = (f64, usize, TerminationKind);

pub fn cell_dir(out: &Path, algo: Algo, handler: Handler) -> PathBuf {
    out.join(format!("{}_{}", algo.as_str(), handler.as_str()))
}

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn ms(&self) -> u64 {
        if self.enabled {
            self.start.elapsed().as_millis() as u64
        } else {
            0
        }
    }
}

fn tabular_mdp(cfg: &ExperimentConfig) -> Result<TabularMdp, HarnessError> {
    match &cfg.mdp_file {
        Some(path) => Ok(TabularMdp::load(path)?),
        None => {
            let chain = CliffChain::default();
            Ok(cliff_mdp(chain.layout(), chain.spec().max_steps))
        }
    }
}

fn evaluate_policy(env: &str, policy: &GaussianPolicy, episodes: usize, seed: u64) -> Result<Vec<EvalEpisode>, AgentError> {
    let mut runner = EpisodeRunner::new(make_env(env)?, seed.wrapping_add(EVAL_SEED_SHIFT));
    let mut out = Vec::with_capacity(episodes);
    while out.len() < episodes {
        let action = policy.mean_action(runner.state())?;
        if let (_, Some(end)) = runner.step(&action)? {
            out.push((end.total_reward, end.length, end.termination));
        }
    }
    Ok(out)
}

/// Trains and evaluates one seed, writing its two CSV files.
fn run_seed(cfg: &ExperimentConfig, mdp: Option<&TabularMdp>, handler: Handler, seed: u64) -> Result<SeedRecord, HarnessError> {
    let dir = cell_dir(&cfg.out, cfg.algo, handler);
    let clock = Clock {
        start: Instant::now(),
        enabled: cfg.record_wall_clock,
    };
    let episodes = cfg.train_episodes();
    let offset = cfg.offset;
    let mut train = Vec::with_capacity(episodes);
    let mut log_row = |log: EpisodeLog| {
        train.push(EpisodeRow {
            seed,
            episode: log.end.index,
            ret: log.end.total_reward - offset * log.end.length as f64,
            length: log.end.length,
            termination_kind: log.end.termination,
            mean_td_error: log.mean_td_error,
            wall_ms: clock.ms(),
        })
    };
    let checkpoint_dir = dir.join(format!("checkpoint_seed{seed}"));
    let outcome: Result<Vec<EvalEpisode>, HarnessError> = match cfg.algo {
        Algo::Tabular => {
            let mdp = mdp.expect("tabular runs carry an mdp");
            let mut schedule = TabularSchedule::new(episodes);
            schedule.reward_offset = offset;
            let run = tabular_td(mdp, &cfg.td_config(handler), &schedule, seed)?;
            for e in &run.episodes {
                train.push(EpisodeRow {
                    seed,
                    episode: e.index as u64,
                    ret: e.total_reward - offset * e.length as f64,
                    length: e.length,
                    termination_kind: e.termination,
                    mean_td_error: e.mean_td_error,
                    wall_ms: clock.ms(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(EVAL_SEED_SHIFT));
            Ok((0..cfg.eval_episodes)
                .map(|_| {
                    let (kind, len, ret) = policy_outcome(mdp, &run.policy, &mut rng);
                    (ret, len, kind)
                })
                .collect())
        }
        Algo::Reparam => {
            let env = OffsetEnv::new(make_env(&cfg.env)?, OffsetConfig { offset });
            let mut agent = SacAgent::new(env.spec(), cfg.sac_config(handler), seed);
            agent
                .train(env, episodes, seed, &mut log_row)
                .and_then(|()| {
                    if cfg.checkpoint {
                        Checkpoint::from_sac(&agent, &cfg.env, seed).save(&checkpoint_dir)?;
                    }
                    evaluate_policy(&cfg.env, &agent.policy, cfg.eval_episodes, seed)
                })
                .map_err(HarnessError::from)
        }
        Algo::Pg => {
            let env = OffsetEnv::new(make_env(&cfg.env)?, OffsetConfig { offset });
            let mut agent = PgAgent::new(env.spec(), cfg.pg_config(handler), seed);
            agent
                .train(env, episodes, seed, &mut log_row)
                .and_then(|()| {
                    if cfg.checkpoint {
                        Checkpoint::from_pg(&agent, &cfg.env, seed).save(&checkpoint_dir)?;
                    }
                    evaluate_policy(&cfg.env, &agent.policy, cfg.eval_episodes, seed)
                })
                .map_err(HarnessError::from)
        }
    };
    write_rows(&dir.join(format!("train_seed{seed}.csv")), &train)?;
    let eval = match outcome {
        Ok(eval) => eval,
        Err(HarnessError::Agent(e @ AgentError::Diverged { .. })) => {
            write_rows(&dir.join(format!("eval_seed{seed}.csv")), &[])?;
            return Ok(SeedRecord::diverged(seed, e.to_string()));
        }
        Err(e) => return Err(e),
    };
    let rows: Vec<EpisodeRow> = eval
        .iter()
        .enumerate()
        .map(|(k, &(ret, length, kind))| EpisodeRow {
            seed,
            episode: k as u64,
            ret,
            length,
            termination_kind: kind,
            mean_td_error: 0.0,
            wall_ms: clock.ms(),
        })
        .collect();
    write_rows(&dir.join(format!("eval_seed{seed}.csv")), &rows)?;
    Ok(SeedRecord::from_eval(seed, &eval))
}

/// Runs every (handler, seed) pair in parallel and writes all outputs.
/// Returns one summary per handler, in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>, HarnessError> {
    cfg.validate()?;
    let mdp = match cfg.algo {
        Algo::Tabular => Some(tabular_mdp(cfg)?),
        Algo::Pg | Algo::Reparam => None,
    };
    for &h in &cfg.handlers {
        let dir = cell_dir(&cfg.out, cfg.algo, h);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let config_path = cfg.out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml_string()).map_err(io_err(&config_path))?;

    let jobs: Vec<(Handler, u64)> = cfg
        .handlers
        .iter()
        .flat_map(|&h| cfg.seeds.iter().map(move |&s| (h, s)))
        .collect();
    let records: Vec<SeedRecord> = jobs
        .par_iter()
        .map(|&(h, s)| run_seed(cfg, mdp.as_ref(), h, s))
        .collect::<Result<_, _>>()?;

    let summaries: Vec<RunSummary> = cfg
        .handlers
        .iter()
        .zip(records.chunks(cfg.seeds.len()))
        .map(|(&h, recs)| {
            RunSummary::from_seeds(
                &cfg.env,
                cfg.algo,
                h,
                cfg.gamma,
                cfg.lambda,
                cfg.offset,
                cfg.treat_time_limit_as_terminal,
                cfg.train_episodes(),
                cfg.eval_episodes,
                recs.to_vec(),
            )
        })
        .collect();
    for s in &summaries {
        s.save(&cell_dir(&cfg.out, s.algo, s.handler).join("summary.json"))?;
    }
    let table = compare(&summaries)?;
    let text_path = cfg.out.join("comparison.txt");
    std::fs::write(&text_path, table.to_text()).map_err(io_err(&text_path))?;
    let csv_path = cfg.out.join("comparison.csv");
    std::fs::write(&csv_path, table.to_csv()?).map_err(io_err(&csv_path))?;
    Ok(summaries)
}
