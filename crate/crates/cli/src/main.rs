use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hvrb_core::campaign::run_matrix;
use hvrb_core::config::{parse_config, Mode, RunConfig};
use hvrb_core::converter::{simulate, steady_state_metrics};
use hvrb_core::device::DeviceState;
use hvrb_core::extraction::{
    extract_rds_on, fit_log_time, read_rds_csv, Quality, DEFAULT_SHAPE_FACTOR,
};
use hvrb_core::output::{emit_results, Emit};
use hvrb_core::Error;

/// GaN HEMT boost-converter stress workbench.
#[derive(Debug, Parser)]
#[command(name = "hvrb", version)]
struct Cli {
    /// TOML configuration; defaults are used for anything omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Accepted for interface stability; the engine is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Also write the fully resolved configuration as `resolved_config.toml`.
    #[arg(long, global = true)]
    echo_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the converter with a fresh device and write `waveform.csv`.
    Simulate,
    /// Run the configured stress matrix.
    Campaign,
    /// Fit R_DS(on) against ln(t) from a `t_min,rds_on_ohm` CSV.
    Fit { csv: PathBuf },
    /// Extract R_DS(on) from averaged drain-voltage measurements.
    Extract {
        #[arg(long, allow_negative_numbers = true)]
        vin_avg: f64,
        #[arg(long, allow_negative_numbers = true)]
        vmax: f64,
        #[arg(long)]
        duty: f64,
        #[arg(long)]
        iavg: f64,
        #[arg(long, default_value_t = DEFAULT_SHAPE_FACTOR)]
        shape_factor: f64,
    },
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Simulate => Mode::Simulate,
            Command::Campaign => Mode::Campaign,
            Command::Fit { .. } => Mode::Fit,
            Command::Extract { .. } => Mode::Extract,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    parse_config(&text)
}

fn out_dir(cli_out: Option<&Path>, config: &RunConfig) -> Result<PathBuf, Error> {
    let dir = cli_out
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<(), Error> {
    let _ = cli.seed;
    let config = load_config(cli.config.as_deref())?;
    let mode = cli.command.mode();
    if let Some(m) = config.mode {
        if m != mode {
            return Err(Error::Config(format!(
                "config selects mode {m:?} but the command is {mode:?}"
            )));
        }
    }

    let echo = |dir: &Path| -> Result<(), Error> {
        if cli.echo_config {
            let path = dir.join("resolved_config.toml");
            std::fs::write(&path, config.to_toml()).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            println!("{}", path.display());
        }
        Ok(())
    };

    match &cli.command {
        Command::Simulate => {
            let s = &config.settings;
            let device = DeviceState::fresh(s.ratings.rds_on_nominal)?;
            let w = simulate(&s.circuit, &s.drive, &device, &s.sim)?;
            let m = steady_state_metrics(&w, &s.sim, &s.drive)?;
            let dir = out_dir(cli.out.as_deref(), &config)?;
            for p in emit_results(Emit::Waveform(&w), &dir)? {
                println!("{}", p.display());
            }
            echo(&dir)?;
            println!("v_max={}", m.v_max);
            println!("v_in_avg={}", m.v_in_avg);
            println!("i_avg={}", m.i_avg);
            println!("i_peak={}", m.i_peak);
            println!("v_out_avg={}", m.v_out_avg);
        }
        Command::Campaign => {
            let result = run_matrix(&config.cells, &config.settings)?;
            let dir = out_dir(cli.out.as_deref(), &config)?;
            for p in emit_results(Emit::Campaign(&result), &dir)? {
                println!("{}", p.display());
            }
            echo(&dir)?;
            println!("config_sha256={}", result.config_hash);
            let aborted = result
                .cells
                .iter()
                .filter(|c| !c.status.is_completed())
                .count();
            if aborted > 0 {
                eprintln!("warning: {aborted} cell(s) aborted; see campaign_summary.csv");
            }
        }
        Command::Fit { csv } => {
            let file = std::fs::File::open(csv).map_err(|source| Error::Io {
                path: csv.clone(),
                source,
            })?;
            let samples = read_rds_csv(file)?;
            let fit = fit_log_time(&samples)?;
            print!("{}", fit.to_record());
            if let Some(o) = cli.out.as_deref() {
                let dir = out_dir(Some(o), &config)?;
                emit_results(Emit::Fit(&fit), &dir)?;
                echo(&dir)?;
            }
        }
        Command::Extract {
            vin_avg,
            vmax,
            duty,
            iavg,
            shape_factor,
        } => {
            let e = extract_rds_on(*vin_avg, *vmax, *duty, *iavg, *shape_factor)?;
            println!("rds_on_ohm={}", e.rds_on);
            let flag = match e.quality {
                Quality::Ok => "ok",
                Quality::NonPositive => "non_positive",
            };
            println!("quality={flag}");
            if e.quality != Quality::Ok {
                eprintln!("warning: extracted R_DS(on) is not positive; inputs are inconsistent");
            }
        }
    }
    Ok(())
}
