//! Flat `key = value` run configuration.
//!
//! Precedence is overrides > file > defaults. Lines starting with `#` are
//! comments. The echo lists every key in a fixed order so it doubles as a
//! complete record of a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use poirec_core::counterfactual::Scorer;
use poirec_core::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};
use poirec_core::model::{DEFAULT_DIM, DEFAULT_INTENTS, DEFAULT_LAYERS};
use poirec_core::synthgen::CityConfig;
use poirec_core::training::HyperParams;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub kg: Option<PathBuf>,
    pub checkins: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub city: CityConfig,
    pub dim: usize,
    pub n_intents: usize,
    pub n_layers: usize,
    pub hp: HyperParams,
    pub scorer: Scorer,
    pub no_disentangle: bool,
    pub te_only: bool,
    pub seed: u64,
    pub gradcheck_step: f64,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("out"),
            kg: None,
            checkins: None,
            truth: None,
            checkpoint: None,
            city: CityConfig::default(),
            dim: DEFAULT_DIM,
            n_intents: DEFAULT_INTENTS,
            n_layers: DEFAULT_LAYERS,
            hp: HyperParams::default(),
            scorer: Scorer::Tie,
            no_disentangle: false,
            te_only: false,
            seed: 0,
            gradcheck_step: DEFAULT_STEP,
            gradcheck_tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Left out of the config hash: file locations, so the same experiment in
/// two directories hashes the same, and the evaluation scorer, which every
/// report records on its own.
const UNHASHED_KEYS: [&str; 6] = ["out_dir", "kg", "checkins", "truth", "checkpoint", "scorer"];

const KEYS: [&str; 36] = [
    "out_dir",
    "kg",
    "checkins",
    "truth",
    "checkpoint",
    "seed",
    "n_users",
    "n_pois",
    "n_regions",
    "n_business_areas",
    "n_brands",
    "n_cate1",
    "n_cate2",
    "n_cate3",
    "latent_dim",
    "taste_scale",
    "geo_strength",
    "interactions_per_user",
    "dim",
    "n_intents",
    "n_layers",
    "lambda_ind",
    "lambda_reg",
    "alpha",
    "lr",
    "batch_size",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "patience",
    "max_epochs",
    "scorer",
    "no_disentangle",
    "te_only",
    "gradcheck_step",
    "gradcheck_tolerance",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| CliError::config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::config(format!("bad value `{value}` for `{key}`, expected true or false"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "out_dir" => self.out_dir = PathBuf::from(v),
            "kg" => self.kg = opt_path(v),
            "checkins" => self.checkins = opt_path(v),
            "truth" => self.truth = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "seed" => self.seed = parse("seed", v)?,
            "n_users" => self.city.n_users = parse(key, v)?,
            "n_pois" => self.city.n_pois = parse(key, v)?,
            "n_regions" => self.city.n_regions = parse(key, v)?,
            "n_business_areas" => self.city.n_business_areas = parse(key, v)?,
            "n_brands" => self.city.n_brands = parse(key, v)?,
            "n_cate1" => self.city.n_cate1 = parse(key, v)?,
            "n_cate2" => self.city.n_cate2 = parse(key, v)?,
            "n_cate3" => self.city.n_cate3 = parse(key, v)?,
            "latent_dim" => self.city.latent_dim = parse(key, v)?,
            "taste_scale" => self.city.taste_scale = parse(key, v)?,
            "geo_strength" => self.city.geo_strength = parse(key, v)?,
            "interactions_per_user" => self.city.interactions_per_user = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "n_intents" => self.n_intents = parse(key, v)?,
            "n_layers" => self.n_layers = parse(key, v)?,
            "lambda_ind" => self.hp.lambda_ind = parse(key, v)?,
            "lambda_reg" => self.hp.lambda_reg = parse(key, v)?,
            "alpha" => self.hp.alpha = parse(key, v)?,
            "lr" => self.hp.lr = parse(key, v)?,
            "batch_size" => self.hp.batch_size = parse(key, v)?,
            "adam_beta1" => self.hp.adam.beta1 = parse(key, v)?,
            "adam_beta2" => self.hp.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.hp.adam.eps = parse(key, v)?,
            "patience" => self.hp.patience = parse(key, v)?,
            "max_epochs" => self.hp.max_epochs = parse(key, v)?,
            "scorer" => {
                self.scorer =
                    Scorer::from_name(v).ok_or_else(|| CliError::config(format!("unknown scorer `{v}`")))?
            }
            "no_disentangle" => self.no_disentangle = parse_bool(key, v)?,
            "te_only" => self.te_only = parse_bool(key, v)?,
            "gradcheck_step" => self.gradcheck_step = parse(key, v)?,
            "gradcheck_tolerance" => self.gradcheck_tolerance = parse(key, v)?,
            other => return Err(CliError::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config { line: Some(i + 1), message: "expected `key = value`".into() })?;
            self.set(k, v).map_err(|e| match e {
                CliError::Config { message, .. } => CliError::Config { line: Some(i + 1), message },
                other => other,
            })?;
        }
        Ok(())
    }

    /// `key=value` override as given on the command line.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override `{spec}` is not `key=value`")))?;
        self.set(k, v)
    }

    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_text(&crate::read_text(path)?)?;
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hp.lr <= 0.0 || !self.hp.lr.is_finite() {
            return Err(CliError::config("lr must be positive"));
        }
        if self.hp.patience == 0 {
            return Err(CliError::config("patience must be at least 1"));
        }
        if self.hp.batch_size == 0 {
            return Err(CliError::config("batch_size must be at least 1"));
        }
        if self.dim == 0 || self.n_intents == 0 {
            return Err(CliError::config("dim and n_intents must be at least 1"));
        }
        for (name, v) in [("lambda_ind", self.hp.lambda_ind), ("lambda_reg", self.hp.lambda_reg), ("alpha", self.hp.alpha)] {
            if !(v >= 0.0) {
                return Err(CliError::config(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn kg_path(&self) -> PathBuf {
        self.kg.clone().unwrap_or_else(|| self.out_dir.join("kg.tsv"))
    }

    pub fn checkins_path(&self) -> PathBuf {
        self.checkins.clone().unwrap_or_else(|| self.out_dir.join("checkins.tsv"))
    }

    pub fn truth_path(&self) -> PathBuf {
        self.truth.clone().unwrap_or_else(|| self.out_dir.join("truth.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("checkpoint.txt"))
    }

    /// City config with the run seed applied.
    pub fn city_config(&self) -> CityConfig {
        CityConfig { seed: self.seed, ..self.city.clone() }
    }

    /// Scorer used for validation and default evaluation.
    pub fn effective_scorer(&self) -> Scorer {
        if self.te_only {
            Scorer::Te
        } else {
            self.scorer
        }
    }

    fn value_of(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "out_dir" => self.out_dir.display().to_string(),
            "kg" => path(&self.kg),
            "checkins" => path(&self.checkins),
            "truth" => path(&self.truth),
            "checkpoint" => path(&self.checkpoint),
            "seed" => self.seed.to_string(),
            "n_users" => self.city.n_users.to_string(),
            "n_pois" => self.city.n_pois.to_string(),
            "n_regions" => self.city.n_regions.to_string(),
            "n_business_areas" => self.city.n_business_areas.to_string(),
            "n_brands" => self.city.n_brands.to_string(),
            "n_cate1" => self.city.n_cate1.to_string(),
            "n_cate2" => self.city.n_cate2.to_string(),
            "n_cate3" => self.city.n_cate3.to_string(),
            "latent_dim" => self.city.latent_dim.to_string(),
            "taste_scale" => self.city.taste_scale.to_string(),
            "geo_strength" => self.city.geo_strength.to_string(),
            "interactions_per_user" => self.city.interactions_per_user.to_string(),
            "dim" => self.dim.to_string(),
            "n_intents" => self.n_intents.to_string(),
            "n_layers" => self.n_layers.to_string(),
            "lambda_ind" => self.hp.lambda_ind.to_string(),
            "lambda_reg" => self.hp.lambda_reg.to_string(),
            "alpha" => self.hp.alpha.to_string(),
            "lr" => self.hp.lr.to_string(),
            "batch_size" => self.hp.batch_size.to_string(),
            "adam_beta1" => self.hp.adam.beta1.to_string(),
            "adam_beta2" => self.hp.adam.beta2.to_string(),
            "adam_eps" => self.hp.adam.eps.to_string(),
            "patience" => self.hp.patience.to_string(),
            "max_epochs" => self.hp.max_epochs.to_string(),
            "scorer" => self.scorer.name().to_string(),
            "no_disentangle" => self.no_disentangle.to_string(),
            "te_only" => self.te_only.to_string(),
            "gradcheck_step" => self.gradcheck_step.to_string(),
            "gradcheck_tolerance" => self.gradcheck_tolerance.to_string(),
            _ => unreachable!("echo only asks for known keys"),
        }
    }

    fn keys() -> impl Iterator<Item = &'static str> {
        KEYS.into_iter()
    }

    /// Every setting as `key = value`, parseable by [`RunConfig::apply_text`].
    pub fn echo(&self) -> String {
        let mut out = String::from("# poirec run config\n");
        for key in Self::keys() {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    /// SHA-256 over every setting except [`UNHASHED_KEYS`].
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for key in Self::keys().filter(|k| !UNHASHED_KEYS.contains(k)) {
            h.update(format!("{key}={}\n", self.value_of(key)).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_override_over_file_over_default() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nlr = 0.01\nseed = 4\n").unwrap();
        cfg.apply_override("seed=9").unwrap();
        assert_eq!(cfg.hp.lr, 0.01);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.dim, DEFAULT_DIM);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("kg = data/kg.tsv\nscorer = TE\nno_disentangle = true\ngeo_strength = 5\n").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.scorer = Scorer::Te;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = RunConfig::default();
        match cfg.apply_text("seed = 1\nbogus = 2\n") {
            Err(CliError::Config { line: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(cfg.apply_text("seed 1").is_err());
        assert!(cfg.apply_override("lr=abc").is_err());
        assert!(cfg.apply_override("scorer=nope").is_err());
    }
}
