use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use carnot_campanato::report::{self, Command, RunConfig, Session};
use carnot_campanato::GaugeKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "campanato", version, about = "Campanato classes on Carnot groups: seminorms, traces and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the group summary, dim P_k and the parameter regime.
    Describe(Common),
    /// Run verification suites and write reports.
    Verify(Common),
    /// Estimate the seminorm and the full norm.
    Seminorm(Common),
    /// Dyadic trace of a_I(x0, r/2^h) and the limits v_I.
    Trace(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON config file (or a previous report.json); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in (euclidean:n, heisenberg:n, engel) or a JSON group file.
    #[arg(long)]
    group: Option<String>,
    /// koranyi or max; defaults by group.
    #[arg(long)]
    gauge: Option<GaugeKind>,
    /// Domain: ball, ball:<r>, cube:<h>, inline JSON or a JSON file.
    #[arg(long)]
    domain: Option<String>,
    /// Function: absx^b, abs:i^b, gauge^b, bump, step:i:c, c*<fn>, JSON polynomial, csv:<file>.
    #[arg(long = "fn")]
    function: Option<String>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// x0:<n> rmax:<f> depth:<H>
    #[arg(long)]
    plan: Option<String>,
    /// grid:<res> or mc:<count>
    #[arg(long)]
    quad: Option<String>,
    /// Falls back to the config, then CAMPANATO_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated suites or `all`.
    #[arg(long)]
    suite: Option<String>,
    /// Base point of `trace`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Output directory for report.json, records.csv and plot tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    /// Flags over config file over defaults.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
            None => {
                let mut c = RunConfig::default();
                if let Ok(s) = std::env::var("CAMPANATO_SEED") {
                    c.seed = s.trim().parse().with_context(|| format!("CAMPANATO_SEED = `{s}`"))?;
                }
                c
            }
        };
        macro_rules! overlay {
            ($($f:ident => $t:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$t = v.clone();
                }
            )*};
        }
        overlay!(group => group, domain => domain, function => function, k => k, p => p, lambda => lambda, seed => seed, suite => suite);
        if self.gauge.is_some() {
            cfg.gauge = self.gauge;
        }
        if self.plan.is_some() {
            cfg.plan = self.plan.clone();
        }
        if self.quad.is_some() {
            cfg.quad = self.quad.clone();
        }
        if self.x0.is_some() {
            cfg.x0 = self.x0.clone();
        }
        cfg.out = self.out.clone();
        cfg.workers = self.workers;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let (common, command) = match cli.command {
        Cmd::Describe(c) => (c, None),
        Cmd::Verify(c) => (c, Some(Command::Verify)),
        Cmd::Seminorm(c) => (c, Some(Command::Seminorm)),
        Cmd::Trace(c) => (c, Some(Command::Trace)),
    };
    let cfg = common.resolve()?;
    let session = Session::open(&cfg)?;
    print!("{}", session.describe());
    let Some(command) = command else { return Ok(0) };
    let rep = report::run(&cfg, command)?;
    print!("{}", rep.text_summary());
    if let Some(dir) = &cfg.out {
        for p in rep.write(dir).with_context(|| format!("writing reports to {}", dir.display()))? {
            println!("wrote {}", p.display());
        }
    }
    Ok(rep.exit_code() as u8)
}
