//! Experiment configuration files.
//!
//! Same flat `name = value` format as domain files. Training settings are
//! namespaced as `ppo.*` and `rlpd.*`; domains are referenced by path
//! (relative to the file that names them) or fall back to the presets.

use std::path::{Path, PathBuf};

use crate::base::PpoConfig;
use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};
use crate::residual::rlpd::RlpdConfig;
use crate::residual::FloorConfig;
use crate::sim::DomainConfig;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub sim_domain: DomainConfig,
    pub real_domain: DomainConfig,
    pub transfer_domain: DomainConfig,
    pub ppo: PpoConfig,
    pub rlpd: RlpdConfig,
    pub seeds: Vec<u64>,
    pub n_demos: usize,
    pub eval_episodes: usize,
    pub floor: FloorConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            sim_domain: DomainConfig::nominal(),
            real_domain: DomainConfig::real(),
            transfer_domain: DomainConfig::transfer(),
            ppo: PpoConfig::default(),
            rlpd: RlpdConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            n_demos: 20,
            eval_episodes: 20,
            floor: FloorConfig::default(),
            out: PathBuf::from("runs"),
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "name", "sim_domain", "real_domain", "transfer_domain", "out", "seeds", "n_demos", "eval_episodes",
    "floor_min_success", "floor_window",
];

const PPO_KEYS: &[&str] = &[
    "n_envs", "rollout_len", "clip_ratio", "gamma", "gae_lambda", "epochs", "minibatch", "lr",
    "entropy_coef", "value_coef", "max_grad_norm", "total_env_steps", "hidden", "init_log_std",
    "episode_len", "socket_jitter_xy", "socket_jitter_yaw", "eval_every", "eval_episodes",
    "target_success", "patience", "reward.n_waypoints", "reward.w_distance", "reward.w_progress",
    "reward.w_success", "reward.yaw_mm_per_deg",
];

const RLPD_KEYS: &[&str] = &[
    "batch_size", "utd_ratio", "gamma", "tau", "target_entropy", "actor_lr", "critic_lr", "alpha_lr",
    "init_alpha", "init_log_std", "hidden", "ensemble_size", "ensemble_subset", "demo_capacity",
    "online_capacity", "max_env_steps", "eval_every", "eval_episodes",
];

fn parse_list<T: std::str::FromStr>(doc: &KvDoc, name: &str) -> Result<Option<Vec<T>>> {
    let Some(raw) = doc.get::<String>(name)? else { return Ok(None) };
    let vals = raw
        .split(',')
        .map(|s| s.trim().parse::<T>().ok())
        .collect::<Option<Vec<T>>>()
        .filter(|v| !v.is_empty());
    vals.map(Some).ok_or_else(|| Error::InvalidConfig(format!("`{name}` must be a comma-separated list, got `{raw}`")))
}

fn domain(doc: &KvDoc, key: &str, preset: DomainConfig) -> Result<DomainConfig> {
    match doc.path(key) {
        None => Ok(preset),
        Some(p) => {
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("{key}: domain file {} does not exist", p.display())));
            }
            DomainConfig::load(&p)
        }
    }
}

fn apply_ppo(doc: &KvDoc, c: &mut PpoConfig) -> Result<()> {
    let k = |n: &str| format!("ppo.{n}");
    doc.set(&k("n_envs"), &mut c.n_envs)?;
    doc.set(&k("rollout_len"), &mut c.rollout_len)?;
    doc.set(&k("clip_ratio"), &mut c.clip_ratio)?;
    doc.set(&k("gamma"), &mut c.gamma)?;
    doc.set(&k("gae_lambda"), &mut c.gae_lambda)?;
    doc.set(&k("epochs"), &mut c.epochs)?;
    doc.set(&k("minibatch"), &mut c.minibatch)?;
    doc.set(&k("lr"), &mut c.lr)?;
    doc.set(&k("entropy_coef"), &mut c.entropy_coef)?;
    doc.set(&k("value_coef"), &mut c.value_coef)?;
    doc.set(&k("max_grad_norm"), &mut c.max_grad_norm)?;
    doc.set(&k("total_env_steps"), &mut c.total_env_steps)?;
    if let Some(h) = parse_list(doc, &k("hidden"))? {
        c.hidden = h;
    }
    doc.set(&k("init_log_std"), &mut c.init_log_std)?;
    doc.set(&k("episode_len"), &mut c.episode_len)?;
    doc.set(&k("socket_jitter_xy"), &mut c.socket_jitter_xy)?;
    doc.set(&k("socket_jitter_yaw"), &mut c.socket_jitter_yaw)?;
    doc.set(&k("eval_every"), &mut c.eval_every)?;
    doc.set(&k("eval_episodes"), &mut c.eval_episodes)?;
    doc.set(&k("target_success"), &mut c.target_success)?;
    doc.set(&k("patience"), &mut c.patience)?;
    doc.set(&k("reward.n_waypoints"), &mut c.reward.n_waypoints)?;
    doc.set(&k("reward.w_distance"), &mut c.reward.w_distance)?;
    doc.set(&k("reward.w_progress"), &mut c.reward.w_progress)?;
    doc.set(&k("reward.w_success"), &mut c.reward.w_success)?;
    doc.set(&k("reward.yaw_mm_per_deg"), &mut c.reward.yaw_mm_per_deg)?;
    c.validate()
}

fn apply_rlpd(doc: &KvDoc, c: &mut RlpdConfig) -> Result<()> {
    let k = |n: &str| format!("rlpd.{n}");
    doc.set(&k("batch_size"), &mut c.batch_size)?;
    doc.set(&k("utd_ratio"), &mut c.utd_ratio)?;
    doc.set(&k("gamma"), &mut c.gamma)?;
    doc.set(&k("tau"), &mut c.tau)?;
    doc.set(&k("target_entropy"), &mut c.target_entropy)?;
    doc.set(&k("actor_lr"), &mut c.actor_lr)?;
    doc.set(&k("critic_lr"), &mut c.critic_lr)?;
    doc.set(&k("alpha_lr"), &mut c.alpha_lr)?;
    doc.set(&k("init_alpha"), &mut c.init_alpha)?;
    doc.set(&k("init_log_std"), &mut c.init_log_std)?;
    if let Some(h) = parse_list(doc, &k("hidden"))? {
        c.hidden = h;
    }
    doc.set(&k("ensemble_size"), &mut c.ensemble_size)?;
    doc.set(&k("ensemble_subset"), &mut c.ensemble_subset)?;
    doc.set(&k("demo_capacity"), &mut c.demo_capacity)?;
    doc.set(&k("online_capacity"), &mut c.online_capacity)?;
    doc.set(&k("max_env_steps"), &mut c.max_env_steps)?;
    doc.set(&k("eval_every"), &mut c.eval_every)?;
    doc.set(&k("eval_episodes"), &mut c.eval_episodes)?;
    c.validate()
}

impl ExperimentConfig {
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut known: Vec<String> = TOP_KEYS.iter().map(|s| s.to_string()).collect();
        known.extend(PPO_KEYS.iter().map(|s| format!("ppo.{s}")));
        known.extend(RLPD_KEYS.iter().map(|s| format!("rlpd.{s}")));
        let known: Vec<&str> = known.iter().map(|s| s.as_str()).collect();
        doc.reject_unknown(&known)?;

        let mut c = ExperimentConfig::default();
        doc.set("name", &mut c.name)?;
        c.sim_domain = domain(doc, "sim_domain", c.sim_domain)?;
        c.real_domain = domain(doc, "real_domain", c.real_domain)?;
        c.transfer_domain = domain(doc, "transfer_domain", c.transfer_domain)?;
        if let Some(p) = doc.path("out") {
            c.out = p;
        }
        if let Some(s) = parse_list(doc, "seeds")? {
            c.seeds = s;
        }
        doc.set("n_demos", &mut c.n_demos)?;
        doc.set("eval_episodes", &mut c.eval_episodes)?;
        doc.set("floor_min_success", &mut c.floor.min_success)?;
        doc.set("floor_window", &mut c.floor.window)?;
        apply_ppo(doc, &mut c.ppo)?;
        apply_rlpd(doc, &mut c.rlpd)?;
        if c.n_demos == 0 || c.eval_episodes == 0 || c.floor.window == 0 {
            return Err(Error::InvalidConfig("n_demos, eval_episodes and floor_window must be positive".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvDoc::load(path)?)
    }

    /// The experiment-level settings as a document, with the domains left
    /// at their presets.
    pub fn to_kv(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let seeds = self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let p = &self.ppo;
        let r = &self.rlpd;
        let mut w = KvWriter::default();
        w.comment("experiment")
            .put("name", &self.name)
            .put("out", self.out.display())
            .put("seeds", seeds)
            .put("n_demos", self.n_demos)
            .put("eval_episodes", self.eval_episodes)
            .put("floor_min_success", self.floor.min_success)
            .put("floor_window", self.floor.window)
            .comment("base policy")
            .put("ppo.total_env_steps", p.total_env_steps)
            .put("ppo.hidden", join(&p.hidden))
            .put("ppo.target_success", p.target_success)
            .comment("residual")
            .put("rlpd.max_env_steps", r.max_env_steps)
            .put("rlpd.hidden", join(&r.hidden))
            .put("rlpd.batch_size", r.batch_size)
            .put("rlpd.utd_ratio", r.utd_ratio);
        w.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_kv(&KvDoc::parse("", "t").unwrap()).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.n_demos, 20);
        assert_eq!(c.real_domain, DomainConfig::real());
    }

    #[test]
    fn namespaced_keys_and_lists() {
        let doc = KvDoc::parse("seeds = 3, 9\nppo.hidden = 32,32\nrlpd.utd_ratio = 3\nrlpd.hidden=8", "t").unwrap();
        let c = ExperimentConfig::from_kv(&doc).unwrap();
        assert_eq!(c.seeds, vec![3, 9]);
        assert_eq!(c.ppo.hidden, vec![32, 32]);
        assert_eq!(c.rlpd.utd_ratio, 3);
        assert_eq!(c.rlpd.hidden, vec![8]);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = ExperimentConfig::from_kv(&KvDoc::parse("n_demos = 4\nrlpd.bogus = 1\n", "exp.cfg").unwrap());
        match err {
            Err(Error::Parse { line, path, .. }) => assert_eq!((line, path.as_str()), (2, "exp.cfg")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn domains_resolve_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let real = DomainConfig { socket_clearance: 0.45, ..DomainConfig::real() };
        real.save(&dir.path().join("real.cfg")).unwrap();
        fs::write(dir.path().join("exp.cfg"), "real_domain = real.cfg\nout = runs\n").unwrap();
        let c = ExperimentConfig::load(&dir.path().join("exp.cfg")).unwrap();
        assert_eq!(c.real_domain, real);
        assert_eq!(c.out, dir.path().join("runs"));
        fs::write(dir.path().join("bad.cfg"), "sim_domain = nowhere.cfg\n").unwrap();
        assert!(matches!(ExperimentConfig::load(&dir.path().join("bad.cfg")), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn written_settings_read_back() {
        let c = ExperimentConfig { seeds: vec![1, 2], n_demos: 7, ..Default::default() };
        let back = ExperimentConfig::from_kv(&KvDoc::parse(&c.to_kv(), "t").unwrap()).unwrap();
        assert_eq!(back.seeds, c.seeds);
        assert_eq!(back.n_demos, 7);
        assert_eq!(back.rlpd, c.rlpd);
    }
}
