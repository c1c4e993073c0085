//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::output::Manifest;
use crate::studies::{self, StudyKind};

#[derive(Debug, Parser)]
#[command(name = "hmr", version, about = "Reduced-basis hierarchical model reduction studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and build the reduction spaces; writes `basis.hmr`.
    Offline(Common),
    /// Solve the reduced problem, from `--archive` or an inline offline phase.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Basis archive to load instead of training.
        #[arg(long)]
        archive: Option<PathBuf>,
    },
    /// Solve the full 2D problem.
    Reference(Common),
    /// Run a study: offline, solve, reference, convergence, landscape, infsup, runtime, epm-bounds.
    Study {
        kind: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker cap, recorded in the manifest.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn resolve(common: &Common, archive: Option<&PathBuf>) -> Result<Config> {
    let mut cfg = Config::load(&common.config)?;
    cfg.apply_overrides(&common.overrides)?;
    if let Some(s) = common.seed {
        cfg.set("seed", &s.to_string())?;
    }
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        cfg.set("threads", &t.to_string())?;
    }
    if let Some(a) = archive {
        cfg.set("study.archive", &a.display().to_string())?;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let (kind, common, archive) = match &cli.command {
        Command::Offline(c) => (StudyKind::Offline, c, None),
        Command::Solve { common, archive } => (StudyKind::Solve, common, archive.as_ref()),
        Command::Reference(c) => (StudyKind::Reference, c, None),
        Command::Study { kind, common } => (kind.parse()?, common, None),
    };
    let cfg = resolve(common, archive)?;
    let out_dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out").join(kind.to_string()));
    let result = studies::run(kind, &cfg)?;
    let mut outputs = result.write(&out_dir)?;
    let mut manifest = Manifest {
        command: format!("{kind} --config {}", common.config.display()),
        seed: cfg.get("seed")?,
        threads: cfg.get("threads")?,
        config: cfg.render(),
        ..Default::default()
    };
    for (k, v) in &result.notes {
        manifest.note(k.clone(), v);
    }
    outputs.sort();
    manifest.outputs = outputs;
    let path = manifest.write(&out_dir)?;
    println!("{}", path.display());
    Ok(())
}
