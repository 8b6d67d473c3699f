use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use irs_wet::experiments::{
    emit_csv, emit_json, rank_analysis, run_scenario_detailed, write_csv, ConfigFile, Scheme,
};

#[derive(Parser)]
#[command(name = "irs-wet", version, about = "IRS-assisted wireless energy transfer simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file, or one of the built-in names `desk` and `full`.
    #[arg(long, default_value = "desk")]
    config: String,
    /// Override a config key, e.g. `--set n_elements=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON mirror of the records.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Record wall-clock times (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// One realization, one scheme.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Slot count of the dynamic scheme (default: relaxed-solution rank).
        #[arg(long)]
        j: Option<usize>,
    },
    /// All schemes over the receiver-count grid.
    SweepK {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Comma-separated grid; defaults to the config grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Dynamic scheme over the slot-count grid, nested warm starts.
    SweepJ {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Comma-separated grid; defaults to 1..6.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Rank estimates and eigenvalue spectra of the relaxed solution.
    RankAnalysis {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
}

fn load(common: &Common, extra: Vec<String>) -> anyhow::Result<ConfigFile> {
    let mut overrides = extra;
    overrides.extend(common.overrides.iter().cloned());
    if common.timing {
        overrides.push("record_timing=true".into());
    }
    let cfg = match ConfigFile::named(&common.config) {
        Some(base) => ConfigFile::from_toml("", &base, &overrides)?,
        None => ConfigFile::load(Path::new(&common.config), &overrides)
            .with_context(|| format!("reading config {}", common.config))?,
    };
    Ok(cfg)
}

fn grid_override(grid: &Option<Vec<usize>>) -> Vec<String> {
    grid.as_ref()
        .map(|g| {
            let items: Vec<String> = g.iter().map(|v| v.to_string()).collect();
            vec![format!("grid=[{}]", items.join(","))]
        })
        .unwrap_or_default()
}

fn run(common: &Common, file: ConfigFile) -> anyhow::Result<()> {
    let sc = file.scenario()?;
    let run = run_scenario_detailed(&sc)?;
    let failed = run.records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} records failed", run.records.len());
    }
    match &common.out {
        Some(p) => emit_csv(&run.records, p)?,
        None => write_csv(&run.records, std::io::stdout().lock())?,
    }
    if let Some(p) = &common.json {
        emit_json(&sc, &run, p)?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Solve {
            common,
            scheme,
            seed,
            j,
        } => {
            let mut extra = vec![
                "sweep=\"none\"".into(),
                "n_realizations=1".into(),
                format!("master_seed={seed}"),
                format!("schemes=[\"{scheme}\"]"),
            ];
            if let Some(j) = j {
                extra.push(format!("dynamic_slots={j}"));
            }
            let file = load(&common, extra)?;
            run(&common, file)
        }
        Cmd::SweepK { common, seed, grid } => {
            let mut extra = vec!["sweep=\"k\"".into(), format!("master_seed={seed}")];
            extra.extend(grid_override(&grid));
            let file = load(&common, extra)?;
            run(&common, file)
        }
        Cmd::SweepJ { common, seed, grid } => {
            let grid = grid.or(Some((1..=6).collect()));
            let mut extra = vec![
                "sweep=\"j\"".into(),
                format!("master_seed={seed}"),
                "schemes=[\"dynamic\"]".into(),
            ];
            extra.extend(grid_override(&grid));
            let file = load(&common, extra)?;
            run(&common, file)
        }
        Cmd::RankAnalysis { common, seed, grid } => {
            let mut extra = vec![
                "sweep=\"k\"".into(),
                format!("master_seed={seed}"),
                "schemes=[\"upper-bound\"]".into(),
            ];
            extra.extend(grid_override(&grid));
            let file = load(&common, extra)?;
            let sc = file.scenario()?;
            let (spectra, failed) = rank_analysis(&sc)?;
            if spectra.is_empty() {
                bail!("every relaxation failed");
            }
            if failed > 0 {
                log::warn!("{failed} relaxations failed");
            }
            let text = serde_json::to_string_pretty(&spectra)?;
            match &common.out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}
