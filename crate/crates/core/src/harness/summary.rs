use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::agents::Algo;
use crate::td::{Handler, TerminationKind};

/// Evaluation outcome of one seed. The three statistics are absent when
/// training diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub median_eval_return: Option<f64>,
    pub mean_eval_length: Option<f64>,
    pub eval_failure_rate: Option<f64>,
    /// Divergence message; `None` for completed seeds.
    pub diverged: Option<String>,
}

impl SeedRecord {
    /// Statistics over evaluation episodes given as `(native return, length, termination)`.
    pub fn from_eval(seed: u64, episodes: &[(f64, usize, TerminationKind)]) -> Self {
        let n = episodes.len() as f64;
        let mut returns: Vec<f64> = episodes.iter().map(|e| e.0).collect();
        SeedRecord {
            seed,
            median_eval_return: median(&mut returns),
            mean_eval_length: (!episodes.is_empty()).then(|| episodes.iter().map(|e| e.1 as f64).sum::<f64>() / n),
            eval_failure_rate: (!episodes.is_empty())
                .then(|| episodes.iter().filter(|e| e.2 == TerminationKind::Failure).count() as f64 / n),
            diverged: None,
        }
    }

    pub fn diverged(seed: u64, msg: String) -> Self {
        SeedRecord {
            seed,
            median_eval_return: None,
            mean_eval_length: None,
            eval_failure_rate: None,
            diverged: Some(msg),
        }
    }

    fn completed(&self) -> Option<(f64, f64, f64)> {
        match (self.diverged.as_ref(), self.median_eval_return, self.mean_eval_length, self.eval_failure_rate) {
            (None, Some(r), Some(l), Some(f)) => Some((r, l, f)),
            _ => None,
        }
    }
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) })
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Results of one (env, algo, handler, offset) cell across its seeds.
/// Aggregates cover completed seeds only and are absent if none completed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub algo: Algo,
    pub handler: Handler,
    pub gamma: f64,
    pub lambda: f64,
    pub offset: f64,
    pub treat_time_limit_as_terminal: bool,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<SeedRecord>,
    /// Mean over seeds of the per-seed median evaluation return.
    pub mean_return: Option<f64>,
    /// Sample standard deviation of the per-seed medians.
    pub sd_return: Option<f64>,
    pub mean_episode_length: Option<f64>,
    pub failure_rate: Option<f64>,
    pub diverged_seeds: usize,
}

impl RunSummary {
    #[allow(clippy::too_many_arguments)]
    pub fn from_seeds(
        env: &str,
        algo: Algo,
        handler: Handler,
        gamma: f64,
        lambda: f64,
        offset: f64,
        treat_time_limit_as_terminal: bool,
        train_episodes: usize,
        eval_episodes: usize,
        seeds: Vec<SeedRecord>,
    ) -> Self {
        let mut s = RunSummary {
            env: env.to_string(),
            algo,
            handler,
            gamma,
            lambda,
            offset,
            treat_time_limit_as_terminal,
            train_episodes,
            eval_episodes,
            seeds,
            mean_return: None,
            sd_return: None,
            mean_episode_length: None,
            failure_rate: None,
            diverged_seeds: 0,
        };
        s.recompute();
        s
    }

    fn aggregates(&self) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>, usize) {
        let done: Vec<(f64, f64, f64)> = self.seeds.iter().filter_map(SeedRecord::completed).collect();
        let diverged = self.seeds.len() - done.len();
        if done.is_empty() {
            return (None, None, None, None, diverged);
        }
        let returns: Vec<f64> = done.iter().map(|d| d.0).collect();
        let (mean, sd) = mean_sd(&returns);
        let n = done.len() as f64;
        let length = done.iter().map(|d| d.1).sum::<f64>() / n;
        let failure = done.iter().map(|d| d.2).sum::<f64>() / n;
        (Some(mean), Some(sd), Some(length), Some(failure), diverged)
    }

    fn recompute(&mut self) {
        let (m, sd, l, f, d) = self.aggregates();
        self.mean_return = m;
        self.sd_return = sd;
        self.mean_episode_length = l;
        self.failure_rate = f;
        self.diverged_seeds = d;
    }

    /// Checks that the stored aggregates follow from the per-seed records.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())),
            _ => false,
        };
        let (m, sd, l, f, d) = self.aggregates();
        let checks = [
            ("mean_return", close(m, self.mean_return)),
            ("sd_return", close(sd, self.sd_return)),
            ("mean_episode_length", close(l, self.mean_episode_length)),
            ("failure_rate", close(f, self.failure_rate)),
            ("diverged_seeds", d == self.diverged_seeds),
        ];
        match checks.iter().find(|c| !c.1) {
            Some((name, _)) => Err(HarnessError::Summary(format!("{name} does not match the per-seed records"))),
            None if self.seeds.is_empty() => Err(HarnessError::Summary("no seed records".into())),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: RunSummary = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algo: Algo,
    pub handler: Handler,
    pub completed_seeds: usize,
    pub mean_return: Option<f64>,
    pub sd_return: Option<f64>,
    pub failure_rate: Option<f64>,
    /// Mean is more than one pooled SD below the best cell.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub env: String,
    pub offset: f64,
    pub rows: Vec<ComparisonRow>,
}

/// Builds the comparison table. A cell is flagged when
/// `mean < best_mean - sqrt((sd^2 + best_sd^2) / 2)`.
pub fn compare(summaries: &[RunSummary]) -> Result<ComparisonTable, HarnessError> {
    let first = summaries.first().ok_or_else(|| HarnessError::Compare("no summaries".into()))?;
    for s in summaries {
        let mismatch = if s.env != first.env {
            Some(format!("environments {} and {}", first.env, s.env))
        } else if s.offset != first.offset {
            Some(format!("offsets {} and {}", first.offset, s.offset))
        } else if s.eval_episodes != first.eval_episodes {
            Some(format!("eval episodes {} and {}", first.eval_episodes, s.eval_episodes))
        } else if s.treat_time_limit_as_terminal != first.treat_time_limit_as_terminal {
            Some("time-limit treatment differs".to_string())
        } else {
            None
        };
        if let Some(m) = mismatch {
            return Err(HarnessError::Compare(format!("mismatched {m}")));
        }
    }
    let best = summaries
        .iter()
        .filter_map(|s| Some((s.mean_return?, s.sd_return?)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let rows = summaries
        .iter()
        .map(|s| {
            let flagged = match (best, s.mean_return, s.sd_return) {
                (Some((bm, bsd)), Some(m), Some(sd)) => m < bm - ((sd * sd + bsd * bsd) / 2.0).sqrt(),
                _ => false,
            };
            ComparisonRow {
                algo: s.algo,
                handler: s.handler,
                completed_seeds: s.seeds.len() - s.diverged_seeds,
                mean_return: s.mean_return,
                sd_return: s.sd_return,
                failure_rate: s.failure_rate,
                flagged,
            }
        })
        .collect();
    Ok(ComparisonTable {
        env: first.env.clone(),
        offset: first.offset,
        rows,
    })
}

impl ComparisonTable {
    /// Fixed-width text; flagged cells end in `*`.
    pub fn to_text(&self) -> String {
        let mut out = format!("env {}  offset {}\n", self.env, self.offset);
        let _ = writeln!(out, "{:<8} {:<9} {:>24} {:>8} {:>6}", "algo", "handler", "mean (sd)", "fail", "seeds");
        for r in &self.rows {
            let cell = match (r.mean_return, r.sd_return) {
                (Some(m), Some(sd)) => format!("{m:.1} ({sd:.1}){}", if r.flagged { "*" } else { "" }),
                _ => "diverged".to_string(),
            };
            let fail = r.failure_rate.map_or("-".to_string(), |f| format!("{f:.2}"));
            let _ = writeln!(
                out,
                "{:<8} {:<9} {:>24} {:>8} {:>6}",
                r.algo.as_str(),
                r.handler.as_str(),
                cell,
                fail,
                r.completed_seeds
            );
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "env",
            "offset",
            "algo",
            "handler",
            "completed_seeds",
            "mean_return",
            "sd_return",
            "failure_rate",
            "flagged",
        ])?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                self.env.clone(),
                self.offset.to_string(),
                r.algo.as_str().to_string(),
                r.handler.as_str().to_string(),
                r.completed_seeds.to_string(),
                opt(r.mean_return),
                opt(r.sd_return),
                opt(r.failure_rate),
                r.flagged.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io("comparison csv".into(), e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
