use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use cellfree_ba::beam_alignment::Method;
use cellfree_ba::channel::io::{read_tensor, write_tensor, Precision};
use cellfree_ba::harness::metrics::Metric;
use cellfree_ba::harness::{
    drop_channel, oracle, run_experiment, run_on_tensor, ExperimentSpec, HarnessError,
};
use cellfree_ba::model::Scenario;

#[derive(Parser)]
#[command(name = "cfba", version, about = "Cell-free mmWave uplink beam-alignment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated methods (single_antenna, digital_iu, analog_iu, analog_ia).
    #[arg(long, value_delimiter = ',', default_value = "single_antenna,digital_iu,analog_iu,analog_ia")]
    methods: Vec<String>,
    /// genie, pre_ba_only or full.
    #[arg(long, default_value = "genie")]
    chest: String,
    #[arg(long, default_value_t = 1)]
    drops: usize,
    /// Master seed; defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Data slots per drop.
    #[arg(long, default_value_t = 16)]
    slots: usize,
    /// Also write per-drop estimator diagnostics and beam records.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo comparison of beam-alignment methods.
    Run(RunArgs),
    /// Tiny-instance brute-force validation suite.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write the unit-power channel tensor of one drop.
    ExportChannels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        drop: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// c64 or c128.
        #[arg(long, default_value = "c128")]
        precision: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one drop on a previously exported channel tensor.
    ImportChannels {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn build_spec(a: &RunArgs) -> Result<ExperimentSpec, HarnessError> {
    let scenario = Scenario::load(&a.config)?;
    let mut spec = ExperimentSpec::new(scenario);
    spec.methods = a
        .methods
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| m.parse::<Method>())
        .collect::<Result<_, _>>()?;
    spec.chest_mode = a.chest.parse()?;
    spec.drops = a.drops;
    spec.slots = a.slots;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.out_dir = Some(a.out.clone());
    spec.diagnostics = a.diagnostics;
    spec.validate()?;
    Ok(spec)
}

fn print_summary(report: &cellfree_ba::harness::metrics::MetricsReport) {
    println!(
        "median pilot SNR {:.1} dB over {} drops",
        cellfree_ba::harness::metrics::quantile(&report.pilot_snr_db, 0.5),
        report.drops
    );
    for (m, mm) in &report.methods {
        let se = mm.values(Metric::Se);
        println!(
            "{:<15} mean SE {:.4}  p10 SE {:.4}  mean RMSSE {:.4}",
            m.as_str(),
            cellfree_ba::harness::metrics::mean(se),
            cellfree_ba::harness::metrics::quantile(se, 0.1),
            cellfree_ba::harness::metrics::mean(mm.values(Metric::Rmsse)),
        );
    }
}

fn config_hash(path: &std::path::Path) -> Result<[u8; 32], HarnessError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(Sha256::digest(&bytes).into())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(a) => {
            let spec = build_spec(&a)?;
            let report = run_experiment(&spec)?;
            print_summary(&report);
        }
        Command::Oracle { seed } => {
            let checks = oracle::run_suite(seed)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(HarnessError::InvalidSpec(format!("{failed} oracle checks failed")));
            }
        }
        Command::ExportChannels {
            config,
            drop,
            seed,
            precision,
            out,
        } => {
            let scenario = Scenario::load(&config)?;
            let seed = seed.unwrap_or(scenario.system.seed);
            let precision: Precision = precision
                .parse()
                .map_err(|e: String| HarnessError::InvalidSpec(e))?;
            let tensor = drop_channel(&scenario, seed, drop)?;
            let f = File::create(&out).map_err(io_err(&out))?;
            let mut w = BufWriter::new(f);
            write_tensor(&mut w, &tensor, precision, seed, config_hash(&config)?)?;
            w.flush().map_err(io_err(&out))?;
        }
        Command::ImportChannels { input, run } => {
            let spec = build_spec(&run)?;
            let f = File::open(&input).map_err(io_err(&input))?;
            let (tensor, header) = read_tensor(BufReader::new(f))?;
            if header.config_hash != config_hash(&run.config)? {
                log::warn!("{} was exported from a different scenario file", input.display());
            }
            let report = run_on_tensor(&spec, &tensor)?;
            print_summary(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
