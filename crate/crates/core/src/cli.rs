//! Command-line driver.
//!
//! Every subcommand reads an optional `key = value` config file plus
//! `--set key=value` overrides, derives all randomness from `--seed` and
//! writes its outputs and a `manifest.txt` into `--out`. The manifest lists
//! the command, the resolved configuration and SHA-256 hashes of every input
//! and output file, which is enough to rerun the command.
//!
//! Seeds per component: `derive_seed(seed, label)` with the labels
//! `synthetic`, `split`, `train/<model>`, `env` and `recommend/<algorithm>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::bkt::{self, BktParams, BktTrainConfig};
use crate::data::{
    augment_with_aux, generate_synthetic, load_csv, read_aux_csv, split, write_aux_csv, write_csv, AuxQMatrix,
    CsvFormat, Dataset, GroundTruth, Split, SyntheticConfig,
};
use crate::dkt::{self, Dkt, DktConfig};
use crate::error::{Error, Result};
use crate::eval::Table;
use crate::recommend::{
    ppo_evaluate, ppo_train, run_episodes, DktKt, DualRecommender, ExpectimaxRecommender, Planner, Policy,
    PpoConfig, RandomRecommender, Recommender, SbrktKt,
};
use crate::sbrkt::{self, Sbrkt, SbrktConfig};
use crate::seed::derive_seed;
use crate::simenv::{EnvConfig, Environment, StudentEnv};
use crate::tensor::Checkpoint;

#[derive(Debug, Parser)]
#[command(name = "auxkc", version, about = "Knowledge tracing with auxiliary KCs and exercise recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Interaction CSV (`student_id,exercise_id,kc_ids,correct,order_index`).
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Synthetic preset regenerated from the seed: `small` or `tiny`.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainModel {
    Bkt,
    Dkt,
    Sbrkt,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseModel {
    Bkt,
    Dkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalModel {
    Bkt,
    Dkt,
    Sbrkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Expectimax,
    ExpectimaxDual,
    Ppo,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; knowledge-tracing models report validation and test AUC.
    Train {
        model: TrainModel,
        /// Auxiliary tag CSV appended to the PPO observation.
        #[arg(long)]
        aux: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Export auxiliary KC tags from a trained SBRKT checkpoint.
    ExtractAux {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a base model with and without auxiliary KCs.
    AugmentTrain {
        base: BaseModel,
        #[arg(long)]
        aux: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// AUC of a trained model on each split.
    Eval {
        model: EvalModel,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Auxiliary tags the model was trained with.
        #[arg(long)]
        aux: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a recommender against simulated students.
    Recommend {
        algorithm: Algorithm,
        /// DKT or SBRKT checkpoint for expectimax, SBRKT for the dual filter,
        /// policy for ppo.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// DKT checkpoint for the human planner of the dual filter.
        #[arg(long)]
        human_checkpoint: Option<PathBuf>,
        /// Auxiliary tags for a policy trained with them.
        #[arg(long)]
        aux: Option<PathBuf>,
        /// Environment config (`horizon`, `reward_mode`, `probe`).
        #[arg(long)]
        env: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Trace simulated students under random recommendations.
    Simulate {
        #[arg(long)]
        env: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset and its latent sub-skill tags.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
}

const DATA_KEYS: &[(&str, &str)] = &[("split", "0.8,0.1,0.1"), ("syn_students", ""), ("syn_seq_len", "")];

const BKT_KEYS: &[(&str, &str)] = &[("bkt.lr", "0.01"), ("bkt.epochs", "30"), ("bkt.batch", "128")];

const DKT_KEYS: &[(&str, &str)] = &[
    ("dkt.emb_dim", "32"),
    ("dkt.hidden_dim", "128"),
    ("dkt.lr", "0.001"),
    ("dkt.batch", "128"),
    ("dkt.patience", "5"),
    ("dkt.max_epochs", "100"),
];

const SBRKT_KEYS: &[(&str, &str)] = &[
    ("sbrkt.emb_dim", "32"),
    ("sbrkt.n_aux", "32"),
    ("sbrkt.c_max", "4"),
    ("sbrkt.hidden_dim", "128"),
    ("sbrkt.lr", "0.001"),
    ("sbrkt.batch", "128"),
    ("sbrkt.patience", "5"),
    ("sbrkt.max_epochs", "100"),
];

const PPO_KEYS: &[(&str, &str)] = &[
    ("ppo.emb_dim", "32"),
    ("ppo.hidden_dim", "64"),
    ("ppo.lr", "0.00025"),
    ("ppo.gamma", "0.99"),
    ("ppo.gae_lambda", "0.95"),
    ("ppo.clip", "0.2"),
    ("ppo.update_epochs", "4"),
    ("ppo.minibatches", "4"),
    ("ppo.ent_coef", "0.01"),
    ("ppo.vf_coef", "0.5"),
    ("ppo.max_grad_norm", "0.5"),
    ("ppo.reward_scale", "0.01"),
    ("ppo.increments", "true"),
    ("ppo.anneal_lr", "true"),
    ("ppo.n_envs", "8"),
    ("ppo.updates", "100"),
    ("ppo.eval_every", "50"),
    ("ppo.eval_students", "32"),
];

const ENV_KEYS: &[(&str, &str)] = &[("env.horizon", "140"), ("env.reward_mode", "threshold"), ("env.probe", "all")];

const EVAL_KEYS: &[(&str, &str)] = &[("eval_students", "24")];

/// Resolved `key = value` settings for one subcommand.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Defaults overlaid with the config file, then with the overrides.
    /// Keys outside `groups` are rejected.
    pub fn resolve(groups: &[&[(&str, &str)]], file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = groups
            .iter()
            .flat_map(|g| g.iter())
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let valid: Vec<String> = values.keys().cloned().collect();
        let mut set = |k: &str, v: &str, origin: &str| -> Result<()> {
            if !values.contains_key(k) {
                return Err(Error::invalid(format!(
                    "unknown config key {k:?} ({origin}); valid keys: {}",
                    valid.join(", ")
                )));
            }
            values.insert(k.to_string(), v.to_string());
            Ok(())
        };
        if let Some(text) = file {
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("config line {}: expected key = value", i + 1)))?;
                set(k.trim(), v.trim(), &format!("config line {}", i + 1))?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {o:?}: expected key=value")))?;
            set(k.trim(), v.trim(), "--set")?;
        }
        Ok(Settings { values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map_or("", String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::invalid(format!("bad value {v:?} for config key {key}")))
    }

    fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn split_ratios(&self) -> Result<(f64, f64, f64)> {
        let parts: Vec<f64> = self
            .raw("split")
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad value {:?} for config key split", self.raw("split"))))?;
        match parts[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::invalid("config key split needs three comma-separated ratios")),
        }
    }

    fn bkt(&self, seed: u64) -> Result<BktTrainConfig> {
        Ok(BktTrainConfig {
            lr: self.get("bkt.lr")?,
            epochs: self.get("bkt.epochs")?,
            batch: self.get("bkt.batch")?,
            seed,
        })
    }

    fn dkt(&self, seed: u64) -> Result<DktConfig> {
        Ok(DktConfig {
            emb_dim: self.get("dkt.emb_dim")?,
            hidden_dim: self.get("dkt.hidden_dim")?,
            lr: self.get("dkt.lr")?,
            batch: self.get("dkt.batch")?,
            patience: self.get("dkt.patience")?,
            max_epochs: self.get("dkt.max_epochs")?,
            seed,
        })
    }

    fn sbrkt(&self, seed: u64) -> Result<SbrktConfig> {
        Ok(SbrktConfig {
            emb_dim: self.get("sbrkt.emb_dim")?,
            n_aux: self.get("sbrkt.n_aux")?,
            c_max: self.get("sbrkt.c_max")?,
            hidden_dim: self.get("sbrkt.hidden_dim")?,
            lr: self.get("sbrkt.lr")?,
            batch: self.get("sbrkt.batch")?,
            patience: self.get("sbrkt.patience")?,
            max_epochs: self.get("sbrkt.max_epochs")?,
            seed,
        })
    }

    fn ppo(&self, n_aux: usize, seed: u64) -> Result<PpoConfig> {
        Ok(PpoConfig {
            emb_dim: self.get("ppo.emb_dim")?,
            hidden_dim: self.get("ppo.hidden_dim")?,
            lr: self.get("ppo.lr")?,
            gamma: self.get("ppo.gamma")?,
            gae_lambda: self.get("ppo.gae_lambda")?,
            clip: self.get("ppo.clip")?,
            update_epochs: self.get("ppo.update_epochs")?,
            minibatches: self.get("ppo.minibatches")?,
            ent_coef: self.get("ppo.ent_coef")?,
            vf_coef: self.get("ppo.vf_coef")?,
            max_grad_norm: self.get("ppo.max_grad_norm")?,
            reward_scale: self.get("ppo.reward_scale")?,
            increments: self.get("ppo.increments")?,
            anneal_lr: self.get("ppo.anneal_lr")?,
            eval_every: self.get("ppo.eval_every")?,
            eval_students: self.get("ppo.eval_students")?,
            n_envs: self.get("ppo.n_envs")?,
            updates: self.get("ppo.updates")?,
            n_aux,
            seed,
        })
    }

    /// Environment settings: the `env.*` keys, then the `--env` file on top.
    fn env(&self, env_file: Option<&str>, seed: u64) -> Result<EnvConfig> {
        let mut cfg = EnvConfig {
            seed,
            ..Default::default()
        };
        for (k, v) in self.iter() {
            if let Some(key) = k.strip_prefix("env.") {
                cfg.set(key, v)?;
            }
        }
        if let Some(text) = env_file {
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("env config line {}: expected key = value", i + 1)))?;
                cfg.set(k.trim(), v.trim())?;
            }
        }
        Ok(cfg)
    }
}

/// Files read and written by a run, for the manifest.
#[derive(Debug, Default)]
struct Artifacts {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

/// Everything a subcommand needs before it runs.
struct Run {
    label: String,
    common: Common,
    settings: Settings,
    artifacts: Artifacts,
}

impl Run {
    fn new(label: String, common: Common, groups: &[&[(&str, &str)]]) -> Result<Self> {
        let mut artifacts = Artifacts::default();
        let file = match &common.config {
            Some(p) => {
                artifacts.inputs.push(p.clone());
                Some(read_text(p)?)
            }
            None => None,
        };
        let settings = Settings::resolve(groups, file.as_deref(), &common.overrides)?;
        std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
        Ok(Run {
            label,
            common,
            settings,
            artifacts,
        })
    }

    fn seed(&self, label: &str) -> u64 {
        derive_seed(self.common.seed, label)
    }

    fn input(&mut self, path: &Path) -> PathBuf {
        self.artifacts.inputs.push(path.to_path_buf());
        path.to_path_buf()
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.common.out.join(name);
        self.artifacts.outputs.push(p.clone());
        p
    }

    fn synthetic_config(&self) -> Result<Option<SyntheticConfig>> {
        let Some(preset) = &self.common.synthetic else {
            return Ok(None);
        };
        let seed = self.seed("synthetic");
        let mut cfg = match preset.as_str() {
            "small" => SyntheticConfig::small(seed),
            "tiny" => SyntheticConfig::new(60, 20, 3, 6, 20, seed),
            other => {
                return Err(Error::invalid(format!(
                    "unknown synthetic preset {other:?}; valid presets: small, tiny"
                )))
            }
        };
        if let Some(n) = self.settings.get_opt("syn_students")? {
            cfg.n_students = n;
        }
        if let Some(n) = self.settings.get_opt("syn_seq_len")? {
            cfg.seq_len = n;
        }
        Ok(Some(cfg))
    }

    /// The dataset from `--data` or `--synthetic`, plus the generator's
    /// ground truth for synthetic data.
    fn dataset(&mut self) -> Result<(Dataset, Option<GroundTruth>)> {
        if let Some(cfg) = self.synthetic_config()? {
            let (d, truth) = generate_synthetic(&cfg);
            return Ok((d, Some(truth)));
        }
        match self.common.data.clone() {
            Some(p) => {
                let p = self.input(&p);
                Ok((load_csv(p, &CsvFormat::default())?, None))
            }
            None => Err(Error::invalid("no dataset: pass --data FILE or --synthetic PRESET")),
        }
    }

    fn truth(&mut self) -> Result<(Dataset, GroundTruth)> {
        if self.common.synthetic.is_none() {
            return Err(Error::invalid("simulated students need --synthetic PRESET"));
        }
        let (d, truth) = self.dataset()?;
        Ok((d, truth.expect("synthetic data has ground truth")))
    }

    fn split(&mut self) -> Result<Split> {
        let (d, _) = self.dataset()?;
        split(&d.preprocessed(), self.settings.split_ratios()?, self.seed("split"))
    }

    fn env_config(&mut self, env_file: Option<&Path>) -> Result<EnvConfig> {
        let text = match env_file {
            Some(p) => {
                let p = self.input(p);
                Some(read_text(&p)?)
            }
            None => None,
        };
        self.settings.env(text.as_deref(), self.seed("env"))
    }

    fn aux(&mut self, path: &Path, dataset: &Dataset) -> Result<AuxQMatrix> {
        let p = self.input(path);
        let text = read_text(&p)?;
        let (n_aux, c_max) = aux_shape(&text);
        read_aux_csv(&p, dataset, n_aux, c_max)
    }

    fn write_manifest(&self) -> Result<()> {
        let mut m = String::new();
        let _ = writeln!(m, "command = {}", self.label);
        let _ = writeln!(m, "seed = {}", self.common.seed);
        match (&self.common.synthetic, &self.common.data) {
            (Some(s), _) => {
                let _ = writeln!(m, "data = synthetic:{s}");
            }
            (None, Some(p)) => {
                let _ = writeln!(m, "data = {}", p.display());
            }
            (None, None) => {}
        }
        let _ = writeln!(m, "\n[config]");
        for (k, v) in self.settings.iter() {
            let _ = writeln!(m, "{k} = {v}");
        }
        let _ = writeln!(m, "\n[inputs]");
        for p in &self.artifacts.inputs {
            let _ = writeln!(m, "{}  {}", sha256_file(p)?, p.display());
        }
        let _ = writeln!(m, "\n[outputs]");
        for p in &self.artifacts.outputs {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            let _ = writeln!(m, "{}  {}", sha256_file(p)?, name);
        }
        write_text(&self.common.out.join("manifest.txt"), &m)
    }
}

/// Width and cardinality bound implied by an aux CSV: the largest index + 1
/// and the largest set size, with floors of 1.
fn aux_shape(text: &str) -> (usize, usize) {
    let mut n_aux = 1;
    let mut c_max = 1;
    for line in text.lines().skip(1) {
        let field = line.split_once(',').map_or("", |(_, f)| f).trim();
        if field.is_empty() {
            continue;
        }
        let ids: Vec<usize> = field.split(';').filter_map(|s| s.trim().parse().ok()).collect();
        c_max = c_max.max(ids.len());
        if let Some(&m) = ids.iter().max() {
            n_aux = n_aux.max(m + 1);
        }
    }
    (n_aux, c_max)
}

fn auc_table() -> Table {
    Table::new(&["model", "split", "auc"])
}

fn train_kt(run: &mut Run, model: EvalModel, s: &Split, name: &str, table: &mut Table) -> Result<()> {
    let seed = run.seed(&format!("train/{name}"));
    match model {
        EvalModel::Bkt => {
            let cfg = run.settings.bkt(seed)?;
            let (params, _) = bkt::train(&s.train, Some(&s.val), &cfg)?;
            params.save(run.output(&format!("{name}_params.csv")))?;
            table.push(&[name.into(), "val".into(), f6(bkt::evaluate_auc(&params, &s.val)?)]);
            table.push(&[name.into(), "test".into(), f6(bkt::evaluate_auc(&params, &s.test)?)]);
        }
        EvalModel::Dkt => {
            let cfg = run.settings.dkt(seed)?;
            let (m, _) = dkt::train(&s.train, Some(&s.val), &cfg)?;
            m.save(run.output(&format!("{name}.ckpt")))?;
            table.push(&[name.into(), "val".into(), f6(m.evaluate_auc(&s.val)?)]);
            table.push(&[name.into(), "test".into(), f6(m.evaluate_auc(&s.test)?)]);
        }
        EvalModel::Sbrkt => {
            let cfg = run.settings.sbrkt(seed)?;
            let (m, _) = sbrkt::train(&s.train, Some(&s.val), &cfg)?;
            m.save(run.output(&format!("{name}.ckpt")))?;
            table.push(&[name.into(), "val".into(), f6(m.evaluate_auc(&s.val)?)]);
            table.push(&[name.into(), "test".into(), f6(m.evaluate_auc(&s.test)?)]);
        }
    }
    Ok(())
}

fn finish_table(run: &mut Run, name: &str, table: &Table) -> Result<()> {
    let text = table.to_csv();
    write_text(&run.output(name), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_train(model: TrainModel, aux: Option<PathBuf>, common: Common) -> Result<()> {
    let (label, groups): (&str, Vec<&[(&str, &str)]>) = match model {
        TrainModel::Bkt => ("bkt", vec![DATA_KEYS, BKT_KEYS]),
        TrainModel::Dkt => ("dkt", vec![DATA_KEYS, DKT_KEYS]),
        TrainModel::Sbrkt => ("sbrkt", vec![DATA_KEYS, SBRKT_KEYS]),
        TrainModel::Ppo => ("ppo", vec![DATA_KEYS, PPO_KEYS, ENV_KEYS]),
    };
    let mut run = Run::new(format!("train {label}"), common, &groups)?;
    let kt = match model {
        TrainModel::Bkt => EvalModel::Bkt,
        TrainModel::Dkt => EvalModel::Dkt,
        TrainModel::Sbrkt => EvalModel::Sbrkt,
        TrainModel::Ppo => {
            let (d, truth) = run.truth()?;
            let env = StudentEnv::new(truth, run.env_config(None)?)?;
            let obs = match &aux {
                Some(p) => augment_with_aux(&d, &run.aux(p, &d)?).qmatrix,
                None => d.qmatrix.clone(),
            };
            let n_aux = obs.n_kcs() - d.qmatrix.n_kcs();
            let cfg = run.settings.ppo(n_aux, run.seed("train/ppo"))?;
            let (policy, report) = ppo_train(&env, &obs, &cfg)?;
            policy.save(run.output("ppo.ckpt"))?;
            let mut t = Table::new(&["update", "mean_reward"]);
            for (i, r) in report.mean_reward.iter().enumerate() {
                t.push(&[i.to_string(), f6(*r)]);
            }
            for (u, r) in &report.validation {
                t.push(&[format!("validation@{u}"), f6(*r)]);
            }
            t.push(&["best".into(), report.best_update.to_string()]);
            finish_table(&mut run, "metrics.csv", &t)?;
            return run.write_manifest();
        }
    };
    if aux.is_some() {
        return Err(Error::invalid("--aux applies to train ppo; use augment-train for knowledge tracing"));
    }
    let s = run.split()?;
    let mut table = auc_table();
    train_kt(&mut run, kt, &s, label, &mut table)?;
    finish_table(&mut run, "metrics.csv", &table)?;
    run.write_manifest()
}

fn cmd_extract_aux(checkpoint: PathBuf, common: Common) -> Result<()> {
    let mut run = Run::new("extract-aux".into(), common, &[DATA_KEYS])?;
    let (d, _) = run.dataset()?;
    let ckpt = run.input(&checkpoint);
    let model = Sbrkt::load(ckpt)?;
    if model.n_exercises() != d.n_exercises() || model.n_kcs() != d.n_kcs() {
        return Err(Error::Checkpoint(format!(
            "checkpoint covers {} exercises and {} KCs, dataset has {} and {}",
            model.n_exercises(),
            model.n_kcs(),
            d.n_exercises(),
            d.n_kcs()
        )));
    }
    let aux = model.export_aux()?;
    write_aux_csv(&aux, &d.exercise_names, run.output("aux.csv"))?;
    let tagged = aux.tags().iter().filter(|t| !t.is_empty()).count();
    println!("aux KCs: {}, exercises tagged: {tagged}/{}", aux.n_aux(), d.n_exercises());
    run.write_manifest()
}

fn cmd_augment_train(base: BaseModel, aux: PathBuf, common: Common) -> Result<()> {
    let (label, keys, model) = match base {
        BaseModel::Bkt => ("bkt", BKT_KEYS, EvalModel::Bkt),
        BaseModel::Dkt => ("dkt", DKT_KEYS, EvalModel::Dkt),
    };
    let mut run = Run::new(format!("augment-train {label}"), common, &[DATA_KEYS, keys])?;
    let s = run.split()?;
    let aux = run.aux(&aux, &s.train)?;
    let aug = Split {
        train: augment_with_aux(&s.train, &aux),
        val: augment_with_aux(&s.val, &aux),
        test: augment_with_aux(&s.test, &aux),
    };
    let mut table = auc_table();
    train_kt(&mut run, model, &s, label, &mut table)?;
    train_kt(&mut run, model, &aug, &format!("{label}+aux"), &mut table)?;
    finish_table(&mut run, "metrics.csv", &table)?;
    run.write_manifest()
}

fn cmd_eval(model: EvalModel, checkpoint: PathBuf, aux: Option<PathBuf>, common: Common) -> Result<()> {
    let mut run = Run::new("eval".into(), common, &[DATA_KEYS])?;
    let mut s = run.split()?;
    if let Some(p) = aux {
        let aux = run.aux(&p, &s.train)?;
        s = Split {
            train: augment_with_aux(&s.train, &aux),
            val: augment_with_aux(&s.val, &aux),
            test: augment_with_aux(&s.test, &aux),
        };
    }
    let ckpt = run.input(&checkpoint);
    let mut table = auc_table();
    let parts = [("train", &s.train), ("val", &s.val), ("test", &s.test)];
    let (name, aucs): (&str, Vec<f64>) = match model {
        EvalModel::Bkt => {
            let p = BktParams::load(ckpt)?;
            ("bkt", parts.iter().map(|(_, d)| bkt::evaluate_auc(&p, d)).collect::<Result<_>>()?)
        }
        EvalModel::Dkt => {
            let m = Dkt::load(ckpt)?;
            ("dkt", parts.iter().map(|(_, d)| m.evaluate_auc(d)).collect::<Result<_>>()?)
        }
        EvalModel::Sbrkt => {
            let m = Sbrkt::load(ckpt)?;
            ("sbrkt", parts.iter().map(|(_, d)| m.evaluate_auc(d)).collect::<Result<_>>()?)
        }
    };
    for ((split_name, _), a) in parts.iter().zip(aucs) {
        table.push(&[name.to_string(), split_name.to_string(), f6(a)]);
    }
    finish_table(&mut run, "metrics.csv", &table)?;
    run.write_manifest()
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::Checkpoint(format!("missing checkpoint: pass {what}")))
}

fn check_exercises(n_model: usize, n_data: usize) -> Result<()> {
    if n_model != n_data {
        return Err(Error::Checkpoint(format!(
            "checkpoint covers {n_model} exercises, environment has {n_data}"
        )));
    }
    Ok(())
}

struct RecommendArgs {
    algorithm: Algorithm,
    checkpoint: Option<PathBuf>,
    human_checkpoint: Option<PathBuf>,
    aux: Option<PathBuf>,
    env: Option<PathBuf>,
}

fn cmd_recommend(args: RecommendArgs, common: Common) -> Result<()> {
    let name = args.algorithm.to_possible_value().expect("named").get_name().to_string();
    let mut run = Run::new(format!("recommend {name}"), common, &[DATA_KEYS, ENV_KEYS, EVAL_KEYS])?;
    let (d, truth) = run.truth()?;
    let mut env = StudentEnv::new(truth, run.env_config(args.env.as_deref())?)?;
    let n_students: usize = run.settings.get("eval_students")?;
    let seed = run.seed(&format!("recommend/{name}"));
    let q = &d.qmatrix;
    let all_kcs: Vec<usize> = (0..q.n_kcs()).collect();
    let mut dual_stats = None;
    let report = match args.algorithm {
        Algorithm::Random => {
            let mut rec = RandomRecommender::new(env.n_exercises(), seed);
            episodes(&mut env, &mut rec, n_students)?
        }
        Algorithm::Expectimax => {
            let path = run.input(&require(args.checkpoint, "--checkpoint (DKT or SBRKT)")?);
            let ckpt = Checkpoint::load(&path)?;
            let planner_q = q.clone();
            match ckpt.meta("model")? {
                "dkt" => {
                    let m = Dkt::from_checkpoint(&ckpt)?;
                    let model = DktKt { model: &m, qmatrix: q };
                    let planner = Planner { model, candidates: all_kcs.clone(), scoring: all_kcs, qmatrix: planner_q };
                    episodes(&mut env, &mut ExpectimaxRecommender::new(planner, seed), n_students)?
                }
                "sbrkt" => {
                    let m = Sbrkt::from_checkpoint(&ckpt)?;
                    check_exercises(m.n_exercises(), env.n_exercises())?;
                    let model = SbrktKt { model: &m, qmatrix: q };
                    let planner = Planner { model, candidates: all_kcs.clone(), scoring: all_kcs, qmatrix: planner_q };
                    episodes(&mut env, &mut ExpectimaxRecommender::new(planner, seed), n_students)?
                }
                other => return Err(Error::Checkpoint(format!("expectimax needs a DKT or SBRKT checkpoint, got {other}"))),
            }
        }
        Algorithm::ExpectimaxDual => {
            let path = run.input(&require(args.checkpoint, "--checkpoint (SBRKT)")?);
            let m = Sbrkt::load(path)?;
            check_exercises(m.n_exercises(), env.n_exercises())?;
            let aux = m.export_aux()?;
            let joint_q = augment_with_aux(&d, &aux).qmatrix;
            let n = q.n_kcs();
            let aux_kcs: Vec<usize> = (n..n + m.n_aux()).collect();
            let aux_planner = Planner {
                model: SbrktKt { model: &m, qmatrix: q },
                candidates: aux_kcs.clone(),
                scoring: aux_kcs,
                qmatrix: joint_q,
            };
            let (rep, stats) = match args.human_checkpoint {
                Some(p) => {
                    let h = Dkt::load(run.input(&p))?;
                    let human = Planner {
                        model: DktKt { model: &h, qmatrix: q },
                        candidates: all_kcs.clone(),
                        scoring: all_kcs,
                        qmatrix: q.clone(),
                    };
                    let mut rec = DualRecommender::new(human, aux_planner, seed);
                    (episodes(&mut env, &mut rec, n_students)?, rec.stats)
                }
                None => {
                    let human = Planner {
                        model: SbrktKt { model: &m, qmatrix: q },
                        candidates: all_kcs.clone(),
                        scoring: all_kcs,
                        qmatrix: q.clone(),
                    };
                    let mut rec = DualRecommender::new(human, aux_planner, seed);
                    (episodes(&mut env, &mut rec, n_students)?, rec.stats)
                }
            };
            dual_stats = Some(stats);
            rep
        }
        Algorithm::Ppo => {
            let path = run.input(&require(args.checkpoint, "--checkpoint (policy)")?);
            let policy = Policy::load(path)?;
            check_exercises(policy.n_actions(), env.n_exercises())?;
            let obs = match (&args.aux, policy.use_aux()) {
                (Some(p), true) => augment_with_aux(&d, &run.aux(p, &d)?).qmatrix,
                (None, false) => q.clone(),
                (None, true) => return Err(Error::invalid("policy was trained with auxiliary KCs; pass --aux")),
                (Some(_), false) => return Err(Error::invalid("policy was trained without auxiliary KCs; drop --aux")),
            };
            if obs.n_kcs() != policy.n_obs_kcs() || obs.n_kcs() - q.n_kcs() != policy.n_aux() {
                return Err(Error::Checkpoint(format!(
                    "policy observes {} KCs, observation Q-matrix has {}",
                    policy.n_obs_kcs(),
                    obs.n_kcs()
                )));
            }
            ppo_evaluate(&policy, &obs, &mut env, n_students, 0, seed)?
        }
    };
    finish_table(&mut run, "report.csv", &report.to_table()?)?;
    if let Some(st) = dual_stats {
        let mut t = Table::new(&["steps", "fallbacks", "fallback_rate", "mean_dual_pool", "mean_human_pool"]);
        let steps = st.steps.max(1) as f64;
        t.push(&[
            st.steps.to_string(),
            st.fallbacks.to_string(),
            f6(st.fallback_rate()),
            f6(st.dual_candidates as f64 / steps),
            f6(st.human_candidates as f64 / steps),
        ]);
        finish_table(&mut run, "dual_stats.csv", &t)?;
    }
    run.write_manifest()
}

fn episodes(env: &mut StudentEnv, rec: &mut dyn Recommender, n: usize) -> Result<crate::recommend::EvalReport> {
    run_episodes(env, rec, n, 0)
}

fn cmd_simulate(env_file: Option<PathBuf>, common: Common) -> Result<()> {
    let mut run = Run::new("simulate".into(), common, &[DATA_KEYS, ENV_KEYS, EVAL_KEYS])?;
    let (_, truth) = run.truth()?;
    let mut env = StudentEnv::new(truth, run.env_config(env_file.as_deref())?)?;
    let n_students: usize = run.settings.get("eval_students")?;
    let mut rec = RandomRecommender::new(env.n_exercises(), run.seed("recommend/random"));
    let mut trace = Table::new(&["student", "step", "exercise", "correct", "reward"]);
    for s in 0..n_students as u64 {
        env.reset(s)?;
        rec.start(s)?;
        for t in 0..env.horizon() {
            let step = env.step(rec.recommend()?)?;
            rec.observe(&step)?;
            trace.push(&[s.to_string(), t.to_string(), step.exercise.to_string(), u8::from(step.correct).to_string(), f6(step.reward)]);
        }
    }
    let text = trace.to_csv();
    write_text(&run.output("trace.csv"), &text)?;
    println!("{} steps written", trace.rows.len());
    run.write_manifest()
}

fn cmd_gen_synthetic(common: Common) -> Result<()> {
    if common.synthetic.is_none() {
        return Err(Error::invalid("gen-synthetic needs --synthetic PRESET"));
    }
    let mut run = Run::new("gen-synthetic".into(), common, &[DATA_KEYS])?;
    let (d, truth) = run.truth()?;
    write_csv(&d, run.output("interactions.csv"))?;
    let mut t = Table::new(&["exercise_id", "subskills", "subskill_kcs"]);
    for (e, tags) in truth.latent_tags.iter().enumerate() {
        let join = |v: Vec<String>| v.join(";");
        t.push(&[
            d.exercise_names[e].clone(),
            join(tags.iter().map(usize::to_string).collect()),
            join(tags.iter().map(|&k| truth.subskill_kc[k].to_string()).collect()),
        ]);
    }
    write_text(&run.output("latent_tags.csv"), &t.to_csv())?;
    println!(
        "{} students, {} interactions, {} exercises, {} KCs, {} sub-skills",
        d.students().len(),
        d.n_interactions(),
        d.n_exercises(),
        d.n_kcs(),
        truth.n_subskills()
    );
    run.write_manifest()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { model, aux, common } => cmd_train(model, aux, common),
        Command::ExtractAux { checkpoint, common } => cmd_extract_aux(checkpoint, common),
        Command::AugmentTrain { base, aux, common } => cmd_augment_train(base, aux, common),
        Command::Eval {
            model,
            checkpoint,
            aux,
            common,
        } => cmd_eval(model, checkpoint, aux, common),
        Command::Recommend {
            algorithm,
            checkpoint,
            human_checkpoint,
            aux,
            env,
            common,
        } => cmd_recommend(
            RecommendArgs {
                algorithm,
                checkpoint,
                human_checkpoint,
                aux,
                env,
            },
            common,
        ),
        Command::Simulate { env, common } => cmd_simulate(env, common),
        Command::GenSynthetic { common } => cmd_gen_synthetic(common),
    }
}

/// Parses `args` and runs; returns the process exit code. Errors are
/// printed as a single `error: ...` line on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
