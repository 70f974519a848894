//! Run configuration: TOML file values, overridden by flags, validated up front.

use std::path::{Path, PathBuf};

use psinull::family::{demo, FamilySpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeChoice {
    #[default]
    Auto,
    Exact,
    Bounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: String,
    pub lambda: f64,
    pub mu: Option<f64>,
    pub t_box: Option<[f64; 2]>,
    pub eps: f64,
    pub t: Vec<f64>,
    pub delta: f64,
    pub truncations: Vec<usize>,
    pub seed: u64,
    pub samples: usize,
    pub t_samples: usize,
    pub suffixes: usize,
    pub mode: ModeChoice,
    pub sequential: bool,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: "sawyer_line".into(),
            lambda: 0.3,
            mu: None,
            t_box: None,
            eps: 0.05,
            t: vec![1.0],
            delta: 2f64.powi(-20),
            truncations: vec![4, 67],
            seed: 0,
            samples: 10_000,
            t_samples: 1,
            suffixes: 10,
            mode: ModeChoice::Auto,
            sequential: false,
            output: None,
        }
    }
}

/// Flags shared by the config-driven subcommands. Each one overrides the file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct ConfigArgs {
    /// TOML file with any of the fields below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Second parameter of bent_line
    #[arg(long)]
    pub mu: Option<f64>,
    /// t-interval as `a,b`
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub t_box: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Slice parameter, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t: Option<Vec<f64>>,
    /// Cell width
    #[arg(long)]
    pub delta: Option<f64>,
    /// Truncation depths N, comma separated
    #[arg(long, value_delimiter = ',')]
    pub truncations: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Prefix sample budget per truncation
    #[arg(long)]
    pub samples: Option<usize>,
    /// Grid points per t-axis
    #[arg(long)]
    pub t_samples: Option<usize>,
    /// Random suffixes per prefix in the term check
    #[arg(long)]
    pub suffixes: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeChoice>,
    /// Disable data parallelism
    #[arg(long)]
    pub sequential: bool,
    /// Write the report here instead of stdout
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(family, lambda, eps, t, delta, truncations, seed, samples, t_samples, suffixes, mode);
        if self.mu.is_some() {
            cfg.mu = self.mu;
        }
        if let Some(b) = &self.t_box {
            cfg.t_box = Some([b[0], b[1]]);
        }
        if self.output.is_some() {
            cfg.output.clone_from(&self.output);
        }
        cfg.sequential |= self.sequential;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        positive("eps", self.eps)?;
        positive("delta", self.delta)?;
        if !self.lambda.is_finite() {
            return Err(format!("lambda must be finite, got {}", self.lambda));
        }
        if self.t.iter().any(|x| !x.is_finite()) {
            return Err("t must be finite".into());
        }
        if let Some(&n) = self.truncations.iter().find(|&&n| !(3..=100_000).contains(&n)) {
            return Err(format!("truncation {n} outside 3..=100000"));
        }
        if self.samples == 0 || self.t_samples == 0 || self.suffixes == 0 {
            return Err("samples, t_samples and suffixes must be positive".into());
        }
        let spec = self.family_spec()?;
        if self.t.len() != spec.dims.d {
            return Err(format!("t has {} components, family {} needs {}", self.t.len(), spec.name, spec.dims.d));
        }
        Ok(())
    }

    pub fn family_spec(&self) -> Result<FamilySpec, String> {
        demo(&self.family, self.lambda, self.mu, self.t_box.map(|[a, b]| vec![(a, b)])).map_err(|e| e.to_string())
    }

    /// SHA-256 of the canonical JSON form. Output path and threading do not change results.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = None;
        canon.sequential = false;
        let json = serde_json::to_vec(&canon).expect("config serialises");
        hex::encode(Sha256::digest(&json))
    }

    pub fn exec(&self) -> psinull::Exec {
        if self.sequential {
            psinull::Exec::Sequential
        } else {
            psinull::Exec::Parallel
        }
    }
}
