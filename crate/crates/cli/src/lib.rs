pub mod config;
pub mod output;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{load_config, RunConfig};
use scfde::simulator::{design_link, generate_channel_for_trial, run_point};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "scfde", version, about = "SC-FDE MIMO relay transceiver design and link simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo sweep over the relay SNR list for every configured design.
    Simulate(RunArgs),
    /// Per-iteration power-allocation objective for the first channel of the seed.
    Trace(RunArgs),
    /// Run the invariant suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, env = "SCFDE_CONFIG")]
    pub config: PathBuf,
    #[arg(long, env = "SCFDE_OUT")]
    pub out: PathBuf,
    /// Replaces `simulation.seed`.
    #[arg(long, env = "SCFDE_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "SCFDE_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Only suites whose name contains this text.
    #[arg(long, env = "SCFDE_FILTER")]
    pub filter: Option<String>,
    /// Seeded trials per suite.
    #[arg(long, env = "SCFDE_TRIALS", default_value_t = 100)]
    pub trials: usize,
    #[arg(long, env = "SCFDE_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteSelector {
    Simulate,
    Verify,
    ConvergenceTrace,
}

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub suite: SuiteSelector,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub filter: Option<String>,
    pub trials: usize,
}

impl From<Command> for RunManifest {
    fn from(c: Command) -> Self {
        let run = |suite, a: RunArgs| RunManifest {
            suite,
            config: Some(a.config),
            out: Some(a.out),
            seed: a.seed,
            jobs: a.jobs,
            filter: None,
            trials: 0,
        };
        match c {
            Command::Simulate(a) => run(SuiteSelector::Simulate, a),
            Command::Trace(a) => run(SuiteSelector::ConvergenceTrace, a),
            Command::Verify(v) => RunManifest {
                suite: SuiteSelector::Verify,
                config: None,
                out: None,
                seed: None,
                jobs: v.jobs,
                filter: v.filter,
                trials: v.trials,
            },
        }
    }
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if let Some(out) = &self.out {
            let dir = match out.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let meta = std::fs::metadata(dir).with_context(|| format!("output directory {} does not exist", dir.display()))?;
            if !meta.is_dir() || meta.permissions().readonly() {
                bail!("output directory {} is not writable", dir.display());
            }
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(())
    }

    fn load(&self) -> Result<RunConfig> {
        let path = self.config.as_deref().context("--config is required")?;
        let mut rc = load_config(path)?;
        if let Some(seed) = self.seed {
            rc.file.simulation.seed = seed;
            rc = rc.file.resolve()?;
        }
        Ok(rc)
    }
}

/// Runs the manifest on a pool of the requested size. Returns the process exit code.
pub fn run(manifest: &RunManifest, log: &mut (dyn Write + Send)) -> Result<i32> {
    manifest.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = manifest.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("building the worker pool")?;
    pool.install(|| match manifest.suite {
        SuiteSelector::Simulate => simulate(manifest, log),
        SuiteSelector::ConvergenceTrace => trace(manifest, log),
        SuiteSelector::Verify => verify(manifest, log),
    })
}

fn write_out(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn simulate(manifest: &RunManifest, log: &mut (dyn Write + Send)) -> Result<i32> {
    let rc = manifest.load()?;
    let hash = rc.file.hash();
    let m = rc.experiments[0].streams;
    let mut body = output::preamble("sweep", &rc.file);
    body.push_str(&output::sweep_header(m));
    body.push('\n');
    for exp in &rc.experiments {
        for &snr in &exp.relay_snr_db {
            let rec = run_point::<f64>(exp, snr)?;
            writeln!(log, "{} at {snr} dB: ber {:.3e}, capacity {:.3}, skipped {}", exp.design, rec.ber, rec.capacity, rec.skipped)?;
            body.push_str(&output::sweep_row(&hash, exp.source_snr_db, &rec));
            body.push('\n');
        }
    }
    write_out(manifest.out.as_deref().expect("validated"), &body)?;
    Ok(0)
}

fn trace(manifest: &RunManifest, log: &mut (dyn Write + Send)) -> Result<i32> {
    let rc = manifest.load()?;
    let mut body = output::preamble("trace", &rc.file);
    body.push_str(&output::trace_header());
    body.push('\n');
    for exp in &rc.experiments {
        let snr = exp.relay_snr_db[0];
        let channel = generate_channel_for_trial::<f64>(exp, 0)?;
        let link = design_link(channel, exp, &exp.link_budget(snr))?;
        let rows = &link.precoders.allocation.trace;
        writeln!(log, "{} at {snr} dB: {} trace rows", exp.design, rows.len())?;
        for row in rows {
            body.push_str(&output::trace_row(&exp.design, snr, row));
            body.push('\n');
        }
    }
    write_out(manifest.out.as_deref().expect("validated"), &body)?;
    Ok(0)
}

fn verify(manifest: &RunManifest, log: &mut (dyn Write + Send)) -> Result<i32> {
    let reports = scfde::verify::run_suites(manifest.filter.as_deref(), manifest.trials);
    if reports.is_empty() {
        bail!("no suite matches '{}'", manifest.filter.as_deref().unwrap_or(""));
    }
    let (mut passed, mut failed) = (0, 0);
    for r in &reports {
        writeln!(log, "{:<20} {:>4} passed {:>4} failed", r.name, r.passed, r.failed)?;
        for (seed, why) in r.failures.iter().take(3) {
            writeln!(log, "    seed {seed}: {why}")?;
        }
        passed += r.passed;
        failed += r.failed;
    }
    writeln!(log, "total: {passed} passed, {failed} failed")?;
    Ok(if failed == 0 { 0 } else { 1 })
}
