use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use markov_deconv::bench::{emit_outputs, report_table, run_grid, split, Manifest, RunConfig, PILOT_LENGTH};
use markov_deconv::chains::{observe, ChainKind, ChainModel};
use markov_deconv::config::{read_observations, write_coefficients, write_grid, write_observations, EstimateConfig};
use markov_deconv::deconv::cache;
use markov_deconv::estimator::{rescale, select_and_estimate};
use markov_deconv::noise::{NoiseFamily, NoiseSpec};
use markov_deconv::{Error, Result};

const PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "markov-deconv", version, about = "Transition density estimation for noisy Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a chain and write noisy observations, one per line.
    Simulate {
        #[arg(long, value_parser = parse_chain)]
        chain: ChainKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise family: laplace, gamma, symmetric_gamma, gaussian or degenerate.
        #[arg(long, default_value = "laplace")]
        noise: String,
        #[arg(long, default_value_t = 5.0)]
        lambda: f64,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the hidden path.
        #[arg(long)]
        hidden: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Precompute the deconvolution table for an estimation config.
    Cache {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Observations the table window must cover.
        #[arg(long, conflicts_with = "chain")]
        data: Option<PathBuf>,
        /// Size the window from a long pilot path of this chain instead.
        #[arg(long, value_parser = parse_chain)]
        chain: Option<ChainKind>,
        #[arg(long)]
        force: bool,
    },
    /// Estimate the transition density from an observation file.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Coefficient dump: selected level, then one row per coefficient.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        /// Evaluation grid dump: x, y, value rows.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        grid_points: usize,
        #[arg(long)]
        force: bool,
    },
    /// Run a Monte-Carlo MISE grid.
    Bench {
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        config: Option<PathBuf>,
        /// Rerun the configuration recorded in a manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn parse_chain(s: &str) -> std::result::Result<ChainKind, String> {
    ChainKind::parse(s).map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> Result<NoiseFamily> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "laplace" => NoiseFamily::Laplace,
        "gamma" => NoiseFamily::Gamma,
        "symmetric_gamma" => NoiseFamily::SymmetricGamma,
        "gaussian" => NoiseFamily::Gaussian,
        "degenerate" => NoiseFamily::Degenerate,
        other => return Err(Error::Config(format!("unknown noise family '{other}'"))),
    })
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.to_path_buf()));
    }
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn simulate(chain: ChainKind, n: usize, seed: u64, spec: NoiseSpec, out: &Path, hidden: Option<&Path>, force: bool) -> Result<()> {
    let meta = sidecar(out);
    for p in [Some(out), Some(meta.as_path()), hidden].into_iter().flatten() {
        guard(p, force)?;
    }
    let noise = spec.build().map_err(|e| Error::Config(e.to_string()))?;
    let model = ChainModel::preset(chain);
    let path = model.simulate(n, seed)?;
    let ys = observe(&path, &noise, split(seed));
    write_observations(out, &ys)?;
    if let Some(h) = hidden {
        write_observations(h, &path)?;
    }
    let info = json!({ "chain": model, "noise": spec, "seed": seed, "noise_seed": split(seed), "n": n });
    fs::write(&meta, serde_json::to_string_pretty(&info).map_err(|e| Error::Numeric(e.to_string()))?)?;
    println!("wrote {} observations of {} to {}", ys.len(), chain.label(), out.display());
    Ok(())
}

fn build_cache(config: &Path, out: &Path, data: Option<&Path>, chain: Option<ChainKind>, force: bool) -> Result<()> {
    guard(out, force)?;
    let cfg = EstimateConfig::load(config)?;
    let sample = match (data, chain) {
        (Some(d), _) => read_observations(d)?,
        (None, Some(kind)) => {
            let model = ChainModel::preset(kind);
            let path = model.simulate(PILOT_LENGTH, 0)?;
            observe(&path, &cfg.noise()?, split(0))
        }
        (None, None) if cfg.table.pad.is_some() => Vec::new(),
        (None, None) => return Err(Error::Config("cache needs table.pad, --data or --chain to size the window".into())),
    };
    let table = cfg.build_table(&sample)?;
    cache::save(&table, out)?;
    let (lo, hi) = table.window();
    println!("wrote table to {} (cutoff {}, window [{lo}, {hi}])", out.display(), table.grid().cutoff());
    Ok(())
}

fn estimate(data: &Path, config: &Path, coefficients: Option<&Path>, grid: Option<&Path>, points: usize, force: bool) -> Result<()> {
    for p in [coefficients, grid].into_iter().flatten() {
        guard(p, force)?;
    }
    let cfg = EstimateConfig::load(config)?;
    let ys = read_observations(data)?;
    let noise = cfg.noise()?;
    let table = cfg.table(&ys)?;
    let ec = cfg.estimator_config(table.basis(), &noise);
    let sample = rescale(&ys, &ec, &noise)?;
    let est = select_and_estimate(&sample, &table, &ec)?;
    println!("n = {}, selected level {}, norm {:.6}", sample.n(), est.level, est.l2_norm);
    for (m, contrast, pen, ok) in &est.criteria {
        println!("  m = {m}: contrast {contrast:.6}, penalty {pen:.6}{}", if *ok { "" } else { ", guard failed" });
    }
    if est.truncated {
        println!("estimate truncated to zero (norm above sqrt(n))");
    }
    if est.gamma_failed {
        println!("no model passed the eigenvalue guard; estimate is zero");
    }
    if let Some(p) = coefficients {
        let mut w = BufWriter::new(fs::File::create(p)?);
        write_coefficients(&mut w, &est)?;
        w.flush()?;
    }
    if let Some(p) = grid {
        let mut w = BufWriter::new(fs::File::create(p)?);
        write_grid(&mut w, &est, table.basis(), points)?;
        w.flush()?;
    }
    Ok(())
}

fn bench(config: Option<&Path>, manifest: Option<&Path>, output: Option<PathBuf>, force: bool) -> Result<bool> {
    let mut cfg = match (config, manifest) {
        (Some(c), _) => RunConfig::from_toml(&fs::read_to_string(c).map_err(|e| Error::Config(format!("{}: {e}", c.display())))?)?,
        (None, Some(m)) => {
            let cfg = Manifest::load(m)?.config;
            cfg.validate()?;
            cfg
        }
        (None, None) => return Err(Error::Config("bench needs --config or --manifest".into())),
    };
    if let Some(o) = output {
        cfg.output = o;
    }
    let out = run_grid(&cfg)?;
    emit_outputs(&out, &cfg, force)?;
    io::stdout().write_all(report_table(&out.report).as_bytes())?;
    let failures = out.report.failures();
    if failures > 0 {
        eprintln!("{failures} replicate(s) failed; see the report");
    }
    Ok(failures == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { chain, n, seed, noise, lambda, zeta, out, hidden, force } => {
            let spec = NoiseSpec { family: parse_family(&noise)?, lambda, zeta, mu: None };
            simulate(chain, n, seed, spec, &out, hidden.as_deref(), force)?;
        }
        Command::Cache { config, out, data, chain, force } => build_cache(&config, &out, data.as_deref(), chain, force)?,
        Command::Estimate { data, config, coefficients, grid, grid_points, force } => {
            estimate(&data, &config, coefficients.as_deref(), grid.as_deref(), grid_points, force)?
        }
        Command::Bench { config, manifest, output, force } => return bench(config.as_deref(), manifest.as_deref(), output, force),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(PARTIAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
