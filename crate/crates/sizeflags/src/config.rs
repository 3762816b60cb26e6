use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use sizeflags_core::flagging::MACHINE_EPSILON_F32;
use sizeflags_core::threshold::DEFAULT_GRID_POINTS;
use sizeflags_core::{Epsilons, ModelVariant, RateInterval, Window};

use crate::error::{CliError, Result};

/// Overrides the directory that relative input and output paths resolve against.
pub const DATA_DIR_ENV: &str = "SIZEFLAGS_DATA_DIR";

pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// `path` itself if absolute or no data directory is set, else joined onto it.
pub fn resolve(path: &Path) -> PathBuf {
    match data_dir() {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// A fully read input file (or stdin for `-`).
#[derive(Debug, Clone)]
pub struct Input {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn load(path: &Path) -> Result<Input> {
        if path == Path::new("-") {
            let mut bytes = Vec::new();
            std::io::stdin()
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::io("<stdin>", e))?;
            return Ok(Input { name: "<stdin>".into(), bytes });
        }
        let resolved = resolve(path);
        let bytes = std::fs::read(&resolved).map_err(|e| CliError::io(&resolved, e))?;
        Ok(Input {
            name: resolved.display().to_string(),
            bytes,
        })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    Fixed(f64),
    MachineEpsilon,
    Optimized,
}

impl FromStr for ThetaSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "machine_epsilon" => Ok(ThetaSource::MachineEpsilon),
            "optimized" | "optimised" => Ok(ThetaSource::Optimized),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(ThetaSource::Fixed(v)),
                _ => Err(format!("expected machine_epsilon, optimized or a positive number, got {s:?}")),
            },
        }
    }
}

/// θ_max = -ln 2⁻²³.
pub fn machine_epsilon_theta() -> f64 {
    -MACHINE_EPSILON_F32.ln()
}

/// Everything that determines a command's output. Serialized canonically
/// (field order is fixed, inputs are content hashes) for the fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub categories: Vec<String>,
    pub window: Option<Window>,
    pub variant: Option<ModelVariant>,
    pub theta: Option<ThetaSource>,
    pub theta_max: f64,
    pub epsilons: Epsilons,
    pub grid_points: usize,
    /// Π for the prior bounds; `None` uses [π - σ, π + σ].
    pub pi_interval: Option<RateInterval>,
    /// θ in the prior-bound problem; `None` uses θ_max.
    pub bound_theta: Option<f64>,
    pub min_orders: u64,
    pub prior_concentration: f64,
    pub potential_weight: f64,
    pub seed: Option<u64>,
    /// Role → SHA-256 of the input's bytes.
    pub inputs: BTreeMap<String, String>,
    /// Command-specific settings not covered above.
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            categories: Vec::new(),
            window: None,
            variant: None,
            theta: None,
            theta_max: machine_epsilon_theta(),
            epsilons: Epsilons::default(),
            grid_points: DEFAULT_GRID_POINTS,
            pi_interval: None,
            bound_theta: None,
            min_orders: 1,
            prior_concentration: 2.0,
            potential_weight: 0.5,
            seed: None,
            inputs: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, role: &str, input: Option<&Input>) -> Self {
        if let Some(input) = input {
            self.inputs.insert(role.to_string(), input.sha256());
        }
        self
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Variant-dependent input requirements and numeric ranges.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if let Some(variant) = self.variant {
            if variant.uses_visual_cues() && !self.inputs.contains_key("cues") {
                return fail(format!("variant {variant} needs a visual cue file (--cues)"));
            }
            if variant == ModelVariant::VHf && !self.inputs.contains_key("feedback") {
                return fail("variant V_HF needs a human feedback file (--feedback)".into());
            }
        }
        if !(self.theta_max > 0.0 && self.theta_max.is_finite()) {
            return fail(format!("theta-max must be positive, got {}", self.theta_max));
        }
        if self.grid_points == 0 {
            return fail("grid must have at least one point".into());
        }
        self.epsilons.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(t) = self.bound_theta {
            if !(t > 0.0 && t.is_finite()) {
                return fail(format!("bound theta must be positive, got {t}"));
            }
        }
        if !(self.prior_concentration >= 0.0 && self.prior_concentration.is_finite()) {
            return fail(format!("prior concentration must be non-negative, got {}", self.prior_concentration));
        }
        if !(0.0..=1.0).contains(&self.potential_weight) {
            return fail(format!("potential weight must lie in [0, 1], got {}", self.potential_weight));
        }
        if let Some(w) = self.window {
            if w.start > w.end {
                return fail("window start lies after its end".into());
            }
        }
        Ok(())
    }
}
