//! Checkpoints: a `manifest.toml` plus one parameter file per network.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, Algo, GaussianPolicy, PgAgent, SacAgent};
use crate::nn::{read_mlp, write_mlp, Mlp};
use crate::td::Handler;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub env: String,
    pub algo: Algo,
    pub handler: Handler,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub env_steps: u64,
    pub action_bounds: Vec<(f64, f64)>,
    /// Network role to file name, relative to the checkpoint directory.
    pub networks: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub networks: BTreeMap<String, Mlp>,
}

fn ck_err(e: impl std::fmt::Display) -> AgentError {
    AgentError::Checkpoint(e.to_string())
}

impl Checkpoint {
    pub fn new(mut manifest: Manifest, networks: BTreeMap<String, Mlp>) -> Self {
        manifest.networks = networks.keys().map(|k| (k.clone(), format!("{k}.bin"))).collect();
        Checkpoint { manifest, networks }
    }

    pub fn from_pg(agent: &PgAgent, env: &str, seed: u64) -> Self {
        let td = agent.cfg.td;
        Self::new(
            manifest(env, Algo::Pg, td.handler, td.gamma, td.lambda, seed, agent.env_steps(), &agent.policy),
            BTreeMap::from([
                ("actor".to_string(), agent.policy.net.clone()),
                ("critic".to_string(), agent.critic.clone()),
            ]),
        )
    }

    pub fn from_sac(agent: &SacAgent, env: &str, seed: u64) -> Self {
        let td = agent.cfg.td;
        Self::new(
            manifest(env, Algo::Reparam, td.handler, td.gamma, td.lambda, seed, agent.env_steps(), &agent.policy),
            BTreeMap::from([
                ("actor".to_string(), agent.policy.net.clone()),
                ("q1".to_string(), agent.critics.q1.clone()),
                ("q2".to_string(), agent.critics.q2.clone()),
                ("q1_target".to_string(), agent.target_critics.q1.clone()),
                ("q2_target".to_string(), agent.target_critics.q2.clone()),
            ]),
        )
    }

    /// The stored actor as an executable policy.
    pub fn policy(&self) -> Result<GaussianPolicy, AgentError> {
        let net = self.networks.get("actor").ok_or_else(|| ck_err("no actor network"))?;
        if net.output_dim() != 2 * self.manifest.action_bounds.len() {
            return Err(ck_err("actor output does not match the action bounds"));
        }
        Ok(GaussianPolicy::from_net(net.clone(), &self.manifest.action_bounds))
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        fs::create_dir_all(dir).map_err(ck_err)?;
        for (role, file) in &self.manifest.networks {
            let net = &self.networks[role];
            let f = File::create(dir.join(file)).map_err(ck_err)?;
            write_mlp(net, BufWriter::new(f))?;
        }
        let text = toml::to_string(&self.manifest).map_err(ck_err)?;
        fs::write(dir.join(MANIFEST_FILE), text).map_err(ck_err)
    }

    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(ck_err)?;
        let manifest: Manifest = toml::from_str(&text).map_err(ck_err)?;
        let mut networks = BTreeMap::new();
        for (role, file) in &manifest.networks {
            if Path::new(file).components().count() != 1 {
                return Err(ck_err(format!("network file `{file}` must be a plain file name")));
            }
            let f = File::open(dir.join(file)).map_err(ck_err)?;
            networks.insert(role.clone(), read_mlp(BufReader::new(f))?);
        }
        Ok(Checkpoint { manifest, networks })
    }
}

#[allow(clippy::too_many_arguments)]
fn manifest(
    env: &str,
    algo: Algo,
    handler: Handler,
    gamma: f64,
    lambda: f64,
    seed: u64,
    env_steps: u64,
    policy: &GaussianPolicy,
) -> Manifest {
    Manifest {
        env: env.to_string(),
        algo,
        handler,
        gamma,
        lambda,
        seed,
        env_steps,
        action_bounds: policy.bounds(),
        networks: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{PgConfig, SacConfig};
    use crate::envs::{make_env, PendulumBalance};
    use crate::td::TdConfig;

    #[test]
    fn sac_round_trip() {
        let env = make_env(PendulumBalance::NAME).unwrap();
        let mut cfg = SacConfig::new(TdConfig::new(Handler::Underest));
        cfg.hidden = vec![8];
        let agent = SacAgent::new(env.spec(), cfg, 4);
        let ck = Checkpoint::from_sac(&agent, PendulumBalance::NAME, 4);
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.manifest.handler, Handler::Underest);
        assert_eq!(back.manifest.action_bounds, vec![(-1.0, 1.0)]);
        let s = [0.01, 0.0, -0.02, 0.0];
        assert_eq!(back.policy().unwrap().mean_action(&s).unwrap(), agent.policy.mean_action(&s).unwrap());
    }

    #[test]
    fn pg_manifest_is_readable_toml() {
        let env = make_env(PendulumBalance::NAME).unwrap();
        let mut cfg = PgConfig::new(TdConfig::new(Handler::Zero));
        cfg.hidden = vec![4];
        let ck = Checkpoint::from_pg(&PgAgent::new(env.spec(), cfg, 0), PendulumBalance::NAME, 0);
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(text.contains("handler = \"zero\""), "{text}");
        assert!(text.contains("algo = \"pg\""), "{text}");
        assert!(dir.path().join("critic.bin").exists());
    }

    #[test]
    fn missing_network_file_is_an_error() {
        let env = make_env(PendulumBalance::NAME).unwrap();
        let mut cfg = PgConfig::new(TdConfig::new(Handler::Zero));
        cfg.hidden = vec![4];
        let ck = Checkpoint::from_pg(&PgAgent::new(env.spec(), cfg, 0), PendulumBalance::NAME, 0);
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("actor.bin")).unwrap();
        assert!(matches!(Checkpoint::load(dir.path()), Err(AgentError::Checkpoint(_))));
    }
}
