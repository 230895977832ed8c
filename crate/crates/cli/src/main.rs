use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use oscillax_cli::{run, Formats, Mode, RunConfig, RunError, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

/// Build oscillating forcings, verify the kernel hypotheses, construct
/// barriers and solve the radial problem between them.
#[derive(Debug, Parser)]
#[command(name = "oscillax", version)]
struct Cli {
    #[arg(value_enum)]
    mode: Mode,
    /// JSON configuration; defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,json")]
    formats: Vec<Format>,
    /// Run independent stages on separate threads.
    #[arg(long)]
    parallel: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        mode: cli.mode,
        out_dir: cli.out.clone(),
        formats: Formats {
            csv: cli.formats.contains(&Format::Csv),
            json: cli.formats.contains(&Format::Json),
            svg: cli.formats.contains(&Format::Svg),
        },
        parallel: cli.parallel,
    };
    let result = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
    .and_then(|cfg| run(&cfg, &opts));
    match result {
        Ok(summary) if summary.failures.is_empty() => {
            for f in &summary.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Ok(summary) => {
            for f in &summary.failures {
                eprintln!("FAIL {}/{}: {} (margin {:e})", f.stage, f.check, f.details, f.margin);
            }
            eprintln!("see {}", cli.out.join("failures.json").display());
            ExitCode::from(1)
        }
        Err(e) => {
            if let RunError::Config(_) = e {
                oscillax_cli::pipeline::record_failure(&cli.out, &e);
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
