//! `fragstat`: simulate conservative fragmentation chains and verify their
//! limit behaviour (waiting/stationary laws, moment dualities, law of large
//! numbers and Gaussian fluctuations of the empirical measure).

mod commands;
mod config;
mod output;
mod selftest;

use clap::{Args, Parser, Subcommand};
use config::FileConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fragstat", version, about = "Monte Carlo verification of conservative fragmentation chains")]
struct Cli {
    /// JSON configuration file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (beats the config file and FRAGSTAT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results are identical for any value).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for all written artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate frozen fragmentation trees and check conservation.
    SimulateTree(TreeArgs),
    /// Simulate joint tagged lines and report the cohesion frequency.
    SimulateTags(TagsArgs),
    /// Waiting-law and stationary-law goodness of fit.
    RenewalCheck(RenewalArgs),
    /// Convergence-rate experiment for the residual lifetime.
    RateCheck(RateArgs),
    /// Law of large numbers for the empirical measure over an epsilon ladder.
    Lln(LlnArgs),
    /// Gaussian-fluctuation experiment with covariance comparison.
    Clt(CltArgs),
    /// Pair functional V over an epsilon ladder, with optional structure checks.
    EstimateV(VArgs),
    /// Assemble the fluctuation covariance matrix K.
    Covariance(CovArgs),
    /// Built-in example suite; --duality adds the moment-duality experiment.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    replicates: Option<f64>,
    /// Write the raw fragment dump here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-replicate summary here.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Record genealogical paths in the dump.
    #[arg(long)]
    paths: bool,
}

#[derive(Args)]
struct TagsArgs {
    #[arg(long)]
    q: Option<u32>,
    /// Horizon T.
    #[arg(long, alias = "T")]
    horizon: Option<f64>,
    /// Freezing threshold (sets T = -log epsilon).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    replicates: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenewalArgs {
    /// Residual/sampler draws.
    #[arg(long, alias = "M")]
    m: Option<f64>,
    /// Residual evaluation point.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    theta_eff: Option<f64>,
    /// Comma-separated grid, e.g. 2,4,6,8.
    #[arg(long)]
    tgrid: Option<String>,
    #[arg(long, alias = "M")]
    m: Option<f64>,
    /// Registry id of the centered test function.
    #[arg(long)]
    f: Option<String>,
}

#[derive(Args)]
struct LlnArgs {
    /// Comma-separated epsilon ladder.
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long, alias = "M")]
    m: Option<f64>,
    /// Comma-separated registry ids.
    #[arg(long)]
    functions: Option<String>,
}

#[derive(Args)]
struct CltArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, alias = "M")]
    m: Option<f64>,
    #[arg(long)]
    functions: Option<String>,
    #[arg(long)]
    v_epsilon: Option<f64>,
    #[arg(long, alias = "v-M")]
    v_m: Option<f64>,
}

#[derive(Args)]
struct VArgs {
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    g: Option<String>,
    /// Single epsilon or comma-separated ladder.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long, alias = "M")]
    m: Option<f64>,
    /// Run the q = 4 Wick-structure check at the finest rung.
    #[arg(long)]
    wick: bool,
    /// Run the q = 3 odd-moment vanishing check at the finest rung.
    #[arg(long)]
    odd: bool,
    /// Cross-check against the coupled estimator.
    #[arg(long)]
    coupled: bool,
    #[arg(long)]
    v_min: Option<f64>,
}

#[derive(Args)]
struct CovArgs {
    #[arg(long)]
    functions: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, alias = "M")]
    m: Option<f64>,
    /// pair_tag (default) or coupled.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Also run the moment-duality experiment.
    #[arg(long)]
    duality: bool,
    #[arg(long)]
    duality_epsilon: Option<f64>,
    #[arg(long)]
    duality_m: Option<f64>,
}

fn parse_list(s: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow::anyhow!("bad {what} entry '{p}'"))
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = config.resolve_seed(cli.seed)?;
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(d) = &cli.out_dir {
        config.out_dir = Some(d.clone());
    }
    if let Some(t) = config.threads {
        // ignore the error when a pool already exists (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out_dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));

    // merge flag overrides into the config sections
    match &cli.command {
        Command::SimulateTree(a) => {
            let mut s = config.tree.clone().unwrap_or(config::TreeSection {
                epsilon: 1e-3,
                replicates: 1.0,
                paths: false,
                out: None,
                stats_out: None,
            });
            if let Some(e) = a.epsilon {
                s.epsilon = e;
            }
            if let Some(r) = a.replicates {
                s.replicates = r;
            }
            if a.out.is_some() {
                s.out = a.out.clone();
            }
            if a.stats_out.is_some() {
                s.stats_out = a.stats_out.clone();
            }
            if a.paths {
                s.paths = true;
            }
            config.tree = Some(s);
        }
        Command::SimulateTags(a) => {
            let mut s = config.tags.clone().unwrap_or(config::TagsSection {
                q: 2,
                horizon: None,
                epsilon: None,
                replicates: 1.0,
                out: None,
            });
            if let Some(q) = a.q {
                s.q = q;
            }
            if let Some(t) = a.horizon {
                s.horizon = Some(t);
                s.epsilon = None;
            }
            if let Some(e) = a.epsilon {
                s.epsilon = Some(e);
                s.horizon = None;
            }
            if let Some(r) = a.replicates {
                s.replicates = r;
            }
            if a.out.is_some() {
                s.out = a.out.clone();
            }
            config.tags = Some(s);
        }
        Command::RenewalCheck(a) => {
            let mut s = config.renewal.clone().unwrap_or(config::RenewalSection {
                increment_lines: 60.0,
                line_horizon: 1300.0,
                residual_m: 1e5,
                residual_t: 50.0,
                sampler_m: 1e5,
            });
            if let Some(m) = a.m {
                s.residual_m = m;
                s.sampler_m = m;
            }
            if let Some(t) = a.t {
                s.residual_t = t;
            }
            config.renewal = Some(s);
        }
        Command::RateCheck(a) => {
            let mut s = config.rate.clone().unwrap_or(config::RateSection {
                t_grid: vec![2.0, 4.0, 6.0, 8.0],
                m: 1e6,
                theta_eff: 1.5,
                function: "centered:power:1".into(),
            });
            if let Some(t) = a.theta_eff {
                s.theta_eff = t;
            }
            if let Some(g) = &a.tgrid {
                s.t_grid = parse_list(g, "tgrid")?;
            }
            if let Some(m) = a.m {
                s.m = m;
            }
            if let Some(f) = &a.f {
                s.function = f.clone();
            }
            config.rate = Some(s);
        }
        Command::Lln(a) => {
            let mut s = config.lln.clone().unwrap_or(config::LlnSection {
                epsilon_ladder: vec![1e-2, 1e-3, 1e-4],
                m: 200.0,
                functions: vec!["power:1".into()],
                ratio_band: None,
            });
            if let Some(l) = &a.ladder {
                s.epsilon_ladder = parse_list(l, "ladder")?;
            }
            if let Some(m) = a.m {
                s.m = m;
            }
            if let Some(f) = &a.functions {
                s.functions = f.split(',').map(|x| x.trim().to_string()).collect();
            }
            config.lln = Some(s);
        }
        Command::Clt(a) => {
            let mut s = config.clt.clone().unwrap_or(config::CltSection {
                epsilon: 1e-4,
                m: 2000.0,
                functions: vec!["centered:power:1".into()],
                v_epsilon: 6.25e-4,
                v_m: 1e6,
            });
            if let Some(e) = a.epsilon {
                s.epsilon = e;
            }
            if let Some(m) = a.m {
                s.m = m;
            }
            if let Some(f) = &a.functions {
                s.functions = f.split(',').map(|x| x.trim().to_string()).collect();
            }
            if let Some(e) = a.v_epsilon {
                s.v_epsilon = e;
            }
            if let Some(m) = a.v_m {
                s.v_m = m;
            }
            config.clt = Some(s);
        }
        Command::EstimateV(a) => {
            let mut s = config.v.clone().unwrap_or(config::VSection {
                f: "centered:power:1".into(),
                g: None,
                epsilon_ladder: vec![1e-2, 2.5e-3, 6.25e-4],
                m: 1e6,
                wick: false,
                odd: false,
                coupled: false,
                coupled_m: None,
                v_min: None,
            });
            if let Some(f) = &a.f {
                s.f = f.clone();
            }
            if let Some(g) = &a.g {
                s.g = Some(g.clone());
            }
            if let Some(e) = &a.eps {
                s.epsilon_ladder = parse_list(e, "eps")?;
            }
            if let Some(m) = a.m {
                s.m = m;
            }
            if a.wick {
                s.wick = true;
            }
            if a.odd {
                s.odd = true;
            }
            if a.coupled {
                s.coupled = true;
            }
            if a.v_min.is_some() {
                s.v_min = a.v_min;
            }
            config.v = Some(s);
        }
        Command::Covariance(a) => {
            let mut s = config.covariance.clone().unwrap_or(config::CovarianceSection {
                functions: vec!["centered:power:1".into(), "centered:power:2".into()],
                epsilon: 6.25e-4,
                m: 1e6,
                method: "pair_tag".into(),
            });
            if let Some(f) = &a.functions {
                s.functions = f.split(',').map(|x| x.trim().to_string()).collect();
            }
            if let Some(e) = a.eps {
                s.epsilon = e;
            }
            if let Some(m) = a.m {
                s.m = m;
            }
            if let Some(m) = &a.method {
                s.method = m.clone();
            }
            config.covariance = Some(s);
        }
        Command::Selftest(a) => {
            let mut s = config.duality.clone().unwrap_or(config::DualitySection {
                epsilon: 1e-2,
                m: 1e4,
                f: "power:1".into(),
                g: "power:2".into(),
            });
            if let Some(e) = a.duality_epsilon {
                s.epsilon = e;
            }
            if let Some(m) = a.duality_m {
                s.m = m;
            }
            config.duality = Some(s);
        }
    }

    let ctx = commands::Ctx {
        config,
        seed,
        out_dir,
    };
    let started = std::time::Instant::now();
    let pass = match &cli.command {
        Command::SimulateTree(_) => commands::simulate_tree(&ctx)?,
        Command::SimulateTags(_) => commands::simulate_tags(&ctx)?,
        Command::RenewalCheck(_) => commands::renewal_check(&ctx)?,
        Command::RateCheck(_) => commands::rate_check(&ctx)?,
        Command::Lln(_) => commands::lln(&ctx)?,
        Command::Clt(_) => commands::clt(&ctx)?,
        Command::EstimateV(_) => commands::estimate_v(&ctx)?,
        Command::Covariance(_) => commands::covariance(&ctx)?,
        Command::Selftest(a) => selftest::selftest(&ctx, a.duality)?,
    };
    println!("done in {:.2}s (seed {seed})", started.elapsed().as_secs_f64());
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("fragstat: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
