use balcon_core::presets::Preset;
use balcon_core::record::BranchRecord;
use balcon_core::runner::{run_analyze, run_trace};
use balcon_core::scenario::{builtin, builtin_names, load_scenario, ScenarioSpec};
use balcon_core::svg::{emit_plot, PlotKind};
use balcon_core::{Error, Execution};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "balcon", version, about = "Bifurcation analysis and continuation of balanced configurations")]
struct Cli {
    /// Directory for branch records and plots.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed of the random-direction probe at turning points.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run the random-direction probe during `trace`.
    #[arg(long, global = true)]
    probe: bool,
    /// Override a scenario value, e.g. `delta=0.005` or `s_max=6`.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Trace branches one after another instead of on the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, bifurcation candidates and spectral flow of a scenario.
    Analyze {
        /// Scenario file, or the name of a built-in scenario.
        scenario: String,
    },
    /// Switch onto and trace every predicted branch.
    Trace { scenario: String },
    /// Render a branch record as SVG.
    Plot {
        record: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Trajectories)]
        kind: Kind,
    },
    /// List presets and built-in scenarios.
    Presets {
        #[arg(long)]
        list: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Trajectories,
    SProfile,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Validation(_) | Error::InvalidInput(_) | Error::Io(_) => 1,
        _ => 2,
    }
}

fn load(source: &str, overrides: &[String]) -> Result<ScenarioSpec, Error> {
    let text = match builtin(source) {
        Some(t) if !Path::new(source).exists() => t.to_string(),
        _ => std::fs::read_to_string(source)?,
    };
    let mut spec = load_scenario(&text)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("override {o:?} is not KEY=VALUE")))?;
        spec.apply_override(k, v)?;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    match cli.command {
        Command::Analyze { scenario } => {
            let spec = load(&scenario, &cli.overrides)?;
            print!("{}", run_analyze(&spec)?.text);
        }
        Command::Trace { scenario } => {
            let spec = load(&scenario, &cli.overrides)?;
            let out = cli.out_dir.unwrap_or_else(|| PathBuf::from("."));
            let probe = cli.probe.then_some(cli.seed);
            let outcome = run_trace(&spec, Some(&out), exec, probe)?;
            print!("{}", outcome.summary.text());
            if outcome.summary.all_failed() {
                eprintln!("no candidate produced a branch");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Plot { record, kind } => {
            let rec = BranchRecord::read(&record)?;
            let (kind, suffix) = match kind {
                Kind::Trajectories => (PlotKind::Trajectories, "trajectories"),
                Kind::SProfile => (PlotKind::SProfile, "s_profile"),
            };
            let svg = emit_plot(&rec, kind)?;
            let dir = cli
                .out_dir
                .or_else(|| record.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let stem = record.file_stem().and_then(|s| s.to_str()).unwrap_or("branch");
            let path = dir.join(format!("{stem}_{suffix}.svg"));
            std::fs::write(&path, svg)?;
            println!("{}", path.display());
        }
        Command::Presets { list: _ } => {
            println!("presets:");
            for name in Preset::NAMES {
                let p: Preset = name.parse()?;
                println!("  {name:<16} {}", p.description());
            }
            println!("built-in scenarios:");
            for name in builtin_names() {
                println!("  {name}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
