use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{parse_list, ExperimentConfig, Invalid, SolveKind};
use crate::{EXIT_CHECK_FAILED, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "pobs", version, about = "Parabolic obstacle problem laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a manufactured (u, f) pair.
    Manufacture,
    /// Solve the heat or obstacle problem and write (u, f).
    Solve,
    /// Write every regularity curve at the configured centers.
    Analyze,
    /// Run the configured checks and write one report per check.
    Verify,
    /// Extract and classify the free boundary.
    Sweep,
    /// Regenerate the fields, run the checks, write summary.csv and digest.txt.
    Report,
}

/// Flags that override the configuration file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    #[arg(long, global = true)]
    pub depth: Option<f64>,
    #[arg(long, global = true)]
    pub h: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Manufactured case id.
    #[arg(long, global = true)]
    pub case: Option<String>,
    /// Traveling-wave speed.
    #[arg(long, global = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    /// Further case parameters as key=value.
    #[arg(long = "param", global = true, value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long, global = true, value_enum)]
    pub kind: Option<SolveKind>,
    /// Right-hand side: case, zero, const:<v> or file:<path>.
    #[arg(long, global = true)]
    pub f: Option<String>,
    /// Lateral and initial data: case, zero or file:<path>.
    #[arg(long, global = true)]
    pub data: Option<String>,
    /// Analysis center `x1,..,xn[,t]`; repeatable.
    #[arg(long = "center", global = true, allow_hyphen_values = true)]
    pub centers: Vec<String>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Radius ladder `log:<rmin>:<rmax>:<points_per_decade>`.
    #[arg(long, global = true)]
    pub ladder: Option<String>,
    /// Check to run; repeatable or comma separated.
    #[arg(long = "check", global = true, value_delimiter = ',')]
    pub checks: Vec<String>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub c0: Option<f64>,
    #[arg(long, global = true)]
    pub m0: Option<f64>,
    #[arg(long, global = true)]
    pub r0: Option<f64>,
    #[arg(long, global = true)]
    pub eps_pos: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not key=value"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut cfg.output, &self.out);
        set(&mut cfg.grid.n, &self.n);
        set(&mut cfg.grid.radius, &self.radius);
        set(&mut cfg.grid.depth, &self.depth);
        set(&mut cfg.grid.h, &self.h);
        set(&mut cfg.grid.dt, &self.dt);
        if let Some(id) = &self.case {
            if *id != cfg.case.id {
                cfg.case.params.clear();
            }
            cfg.case.id = id.clone();
        }
        for (k, v) in [("a", self.a), ("beta", self.beta), ("kappa", self.kappa)] {
            if let Some(v) = v {
                cfg.case.params.insert(k.into(), v);
            }
        }
        for (k, v) in &self.params {
            cfg.case.params.insert(k.clone(), *v);
        }
        set(&mut cfg.solve.kind, &self.kind);
        set(&mut cfg.solve.f, &self.f);
        set(&mut cfg.solve.data, &self.data);
        if !self.centers.is_empty() {
            cfg.analysis.centers = self
                .centers
                .iter()
                .map(|c| parse_list(c).map_err(|e| Invalid(format!("--center: {e}"))))
                .collect::<std::result::Result<_, _>>()?;
        }
        set(&mut cfg.analysis.p, &self.p);
        set(&mut cfg.analysis.ladder, &self.ladder);
        if !self.checks.is_empty() {
            cfg.verify.checks = self.checks.clone();
        }
        set(&mut cfg.calibration.lambda, &self.lambda);
        set(&mut cfg.calibration.mu, &self.mu);
        set(&mut cfg.calibration.c0, &self.c0);
        set(&mut cfg.calibration.m0, &self.m0);
        set(&mut cfg.calibration.r0, &self.r0);
        if self.eps_pos.is_some() {
            cfg.sweep.eps_pos = self.eps_pos;
        }
        set(&mut cfg.seed, &self.seed);
        Ok(())
    }
}

/// Builds the configuration for a command line: file, then flags, then defaults.
pub fn configure(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.overrides.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    if cli.command == Command::Solve && cfg.solve.kind == SolveKind::None {
        cfg.solve.kind = SolveKind::Obstacle;
    }
    Ok(cfg.with_defaults())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = configure(cli)?;
    let resolved = cfg.resolve()?;
    let reports = match cli.command {
        Command::Manufacture => {
            commands::cmd_manufacture(&cfg, &resolved)?;
            Vec::new()
        }
        Command::Solve => {
            commands::cmd_solve(&cfg, &resolved)?;
            Vec::new()
        }
        Command::Analyze => {
            commands::cmd_analyze(&cfg, &resolved)?;
            Vec::new()
        }
        Command::Verify => commands::cmd_verify(&cfg, &resolved)?,
        Command::Sweep => {
            let cloud = commands::cmd_sweep(&cfg, &resolved)?;
            let regular = cloud.points.iter().filter(|p| p.regular).count();
            println!("{} free-boundary points, {regular} classified regular", cloud.len());
            Vec::new()
        }
        Command::Report => commands::cmd_report(&cfg, &resolved)?,
    };
    for rep in &reports {
        println!("{:<20} {:<28} {}", rep.check, rep.target, rep.status.as_str());
    }
    Ok(if reports.iter().any(|r| r.failed()) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    })
}
