//! TOML experiment files. Every key is optional; missing keys take the
//! defaults below. Unknown keys are rejected.
//!
//! ```toml
//! [system]
//! n_s = 2
//! n_r = 2
//! n_d = 2
//! streams = 2
//! n_c = 64
//!
//! [channel]
//! l_g = 16
//! l_h = 16
//! cp_source = 16
//! cp_relay = 16
//! sigma_t = 2.0
//!
//! [optimizer]
//! eps1 = 1e-4
//! eps2 = 1e-4
//! max_outer = 2000
//! max_inner = 200
//! outer_tol = 1e-10
//! outer_multiplier_tol = 1e-7
//! step = "newton"          # or "diminishing"
//! step_scale = 1.0
//!
//! [simulation]
//! designs = ["JSR/AMSE/FD-LE", "JSR/maxMSE/FD-LE", "JSR/GMSE/FD-DFE"]
//! n_fb = 15
//! source_snr_db = 16.0
//! relay_snr_db = [16.0]
//! trials = 100
//! blocks_per_trial = 1
//! seed = 1
//! path = "frequency"       # or "time"
//! constellation = "QPSK"
//! ```

use anyhow::{anyhow, bail, Context, Result};
use scfde::channel::LinkDims;
use scfde::powalloc::{SolverOptions, StepRule};
use scfde::simulator::{Constellation, CyclicPrefix, Design, ExperimentConfig, TransmitPath};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub n_s: i64,
    pub n_r: i64,
    pub n_d: i64,
    pub streams: i64,
    pub n_c: i64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { n_s: 2, n_r: 2, n_d: 2, streams: 2, n_c: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub l_g: i64,
    pub l_h: i64,
    pub cp_source: i64,
    pub cp_relay: i64,
    pub sigma_t: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { l_g: 16, l_h: 16, cp_source: 16, cp_relay: 16, sigma_t: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub eps1: f64,
    pub eps2: f64,
    pub max_outer: i64,
    pub max_inner: i64,
    pub outer_tol: f64,
    pub outer_multiplier_tol: f64,
    pub step: String,
    pub step_scale: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            eps1: d.eps1,
            eps2: d.eps2,
            max_outer: d.max_outer as i64,
            max_inner: d.max_inner as i64,
            outer_tol: d.outer_tol,
            outer_multiplier_tol: d.outer_multiplier_tol,
            step: "newton".into(),
            step_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub designs: Vec<String>,
    pub n_fb: i64,
    pub source_snr_db: f64,
    pub relay_snr_db: Vec<f64>,
    pub trials: i64,
    pub blocks_per_trial: i64,
    pub seed: u64,
    pub path: String,
    pub constellation: String,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            designs: vec!["JSR/AMSE/FD-LE".into(), "JSR/maxMSE/FD-LE".into(), "JSR/GMSE/FD-DFE".into()],
            n_fb: 15,
            source_snr_db: 16.0,
            relay_snr_db: vec![16.0],
            trials: 100,
            blocks_per_trial: 1,
            seed: 1,
            path: "frequency".into(),
            constellation: "QPSK".into(),
        }
    }
}

/// The file as written, with defaults filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub channel: ChannelSection,
    pub optimizer: OptimizerSection,
    pub simulation: SimulationSection,
}

/// Validated run description: one experiment per design.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub experiments: Vec<ExperimentConfig>,
}

fn count(field: &str, v: i64, min: i64) -> Result<usize> {
    if v < min {
        bail!("invalid value for {field}: {v} (must be at least {min})");
    }
    Ok(v as usize)
}

pub fn parse_design(s: &str) -> Result<Design> {
    let parts: Vec<&str> = s.split('/').map(str::trim).collect();
    let [scheme, criterion, receiver] = parts[..] else {
        bail!("invalid value for simulation.designs: '{s}' (expected scheme/criterion/receiver)");
    };
    let field = |e: scfde::Error| anyhow!("invalid value for simulation.designs: {e}");
    Ok(Design {
        scheme: scheme.parse().map_err(field)?,
        criterion: criterion.parse().map_err(field)?,
        receiver: receiver.parse().map_err(field)?,
    })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("config schema error: {}", e.to_string().trim()))
    }

    /// Canonical TOML of the resolved values.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`ConfigFile::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let (sys, ch, opt, sim) = (&self.system, &self.channel, &self.optimizer, &self.simulation);
        let dims = LinkDims::new(count("system.n_s", sys.n_s, 1)?, count("system.n_r", sys.n_r, 1)?, count("system.n_d", sys.n_d, 1)?);
        let step = match opt.step.to_ascii_lowercase().as_str() {
            "newton" => StepRule::Newton,
            "diminishing" => StepRule::Diminishing { scale: opt.step_scale },
            other => bail!("invalid value for optimizer.step: '{other}' (expected newton or diminishing)"),
        };
        for (name, v) in [("optimizer.eps1", opt.eps1), ("optimizer.eps2", opt.eps2), ("optimizer.outer_tol", opt.outer_tol)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("invalid value for {name}: {v} (must be positive)");
            }
        }
        let solver = SolverOptions {
            eps1: opt.eps1,
            eps2: opt.eps2,
            max_outer: count("optimizer.max_outer", opt.max_outer, 1)?,
            max_inner: count("optimizer.max_inner", opt.max_inner, 1)?,
            outer_tol: opt.outer_tol,
            outer_multiplier_tol: opt.outer_multiplier_tol,
            step,
        };
        let path = match sim.path.to_ascii_lowercase().as_str() {
            "frequency" => TransmitPath::Frequency,
            "time" => TransmitPath::Time,
            other => bail!("invalid value for simulation.path: '{other}' (expected frequency or time)"),
        };
        if !sim.constellation.eq_ignore_ascii_case("qpsk") {
            bail!("invalid value for simulation.constellation: '{}' (only QPSK is supported)", sim.constellation);
        }
        if sim.designs.is_empty() {
            bail!("invalid value for simulation.designs: at least one design is required");
        }
        let base = ExperimentConfig {
            dims,
            streams: count("system.streams", sys.streams, 1)?,
            n_c: count("system.n_c", sys.n_c, 1)?,
            taps: (count("channel.l_g", ch.l_g, 1)?, count("channel.l_h", ch.l_h, 1)?),
            cp: CyclicPrefix { source: count("channel.cp_source", ch.cp_source, 0)?, relay: count("channel.cp_relay", ch.cp_relay, 0)? },
            sigma_t: ch.sigma_t,
            n_fb: count("simulation.n_fb", sim.n_fb, 0)?,
            constellation: Constellation::Qpsk,
            design: parse_design(&sim.designs[0])?,
            source_snr_db: sim.source_snr_db,
            relay_snr_db: sim.relay_snr_db.clone(),
            trials: count("simulation.trials", sim.trials, 1)?,
            blocks_per_trial: count("simulation.blocks_per_trial", sim.blocks_per_trial, 1)?,
            seed: sim.seed,
            path,
            solver,
        };
        let experiments = sim
            .designs
            .iter()
            .map(|d| {
                let e = ExperimentConfig { design: parse_design(d)?, ..base.clone() };
                e.validate().map_err(|err| anyhow!("invalid configuration: {err}"))?;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunConfig { file: self, experiments })
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    ConfigFile::parse(text)?.resolve()
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}
