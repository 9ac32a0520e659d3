use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use modalign_cli::{
    default_out_dir, error_line, exit_code, load_config, parse_sweep, run_training, sweep_dir_name, write_run,
    DataSource,
};
use modalign_core::data::write_jsonl;
use modalign_core::verify::{run_suite, Suite};
use modalign_core::{Error, Result};

#[derive(Parser)]
#[command(name = "modalign", version, about = "Covariance-aligned multimodal regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a synthetic or JSONL dataset and write a run directory.
    Train {
        /// Training config (JSON, keys as in TrainConfig).
        #[arg(long)]
        config: PathBuf,
        /// `gen:default`, `gen:<synth-config.json>` or `jsonl:<path>`.
        #[arg(long)]
        data: String,
        /// Output directory; defaults to $MODALALIGN_OUT or ./runs/<timestamp>-<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated alignment specs, one run each (`none` for no alignment).
        #[arg(long)]
        spec_sweep: Option<String>,
    },
    /// Run an oracle suite: gradcheck, optimal-map or ulgm.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic dataset as JSONL.
    Generate {
        /// `default` or a synthetic-data config (JSON).
        #[arg(long, default_value = "default")]
        synth: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn train(config: &Path, data: &str, out: Option<PathBuf>, seed: Option<u64>, sweep: Option<String>) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let source = DataSource::parse(data)?;
    let dataset = source.load(&config)?;
    let out = out.unwrap_or_else(|| default_out_dir(config.seed));
    let specs = match sweep {
        Some(list) => parse_sweep(&list),
        None => vec![config.alignment_spec.clone()],
    };
    let single = specs.len() == 1;
    for spec in specs {
        let mut run_config = config.clone();
        run_config.alignment_spec = spec;
        run_config.validate()?;
        let dir = if single {
            out.clone()
        } else {
            out.join(sweep_dir_name(&run_config.alignment_spec))
        };
        let run = run_training(&run_config, &dataset, &source.label())?;
        for record in &run.manifest.history {
            let s = &record.summary;
            println!(
                "epoch {:>3}  total {:.5}  l1 {:.5}  l2 {:.5}  l3 {:+.3e}  test_mae {:.4}",
                s.epoch, s.total, s.l1, s.l2, s.l3, record.test_mae
            );
        }
        write_run(&dir, &run)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn verify(suite: &str, seed: u64) -> Result<bool> {
    let suite: Suite = suite.parse()?;
    let report = run_suite(suite, seed)?;
    print!("{report}");
    for failure in report.failures() {
        eprintln!(
            "error[verify]: {}/{} max error {:.3e} exceeds {:.1e}",
            report.suite, failure.name, failure.max_error, failure.tolerance
        );
    }
    Ok(report.passed())
}

fn generate(synth: &str, out: &Path) -> Result<()> {
    let DataSource::Synthetic { config, .. } = DataSource::parse(&format!("gen:{synth}"))? else {
        return Err(Error::Config("expected a synthetic source".into()));
    };
    let data = modalign_core::data::gen_synthetic(&config)?;
    write_jsonl(&data, out)?;
    println!("wrote {} samples to {}", data.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            data,
            out,
            seed,
            spec_sweep,
        } => train(&config, &data, out, seed, spec_sweep).map(|()| true),
        Command::Verify { suite, seed } => verify(&suite, seed),
        Command::Generate { synth, out } => generate(&synth, &out).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
