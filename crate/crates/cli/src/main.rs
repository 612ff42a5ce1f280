use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use oscilab::cellsolve::solve_cell_problem;
use oscilab::coeff::build_family_seeded;
use oscilab::critical::{detect_critical_points, DetectOptions};
use oscilab::doubling::{check_persistence, check_reduction, profile, ReductionParams, Verdict};
use oscilab::geom::{Disk, Vec2};
use oscilab::harness::{self, emit_plot_data, ExperimentConfig, Figure, ResultRecord};
use oscilab::io::{load_solution, save_solution, write_f64};
use oscilab::pde::{harmonic_reference, DiskProblem, EpsProblem};

const EXIT_VIOLATED: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "oscilab", version, about = "Critical points and doubling indices of periodic elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the periodic cell problem and write the homogenized matrix.
    Cell {
        #[arg(long)]
        config: PathBuf,
        /// Grid resolution; defaults to the config's `cell_n`.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the nodal corrector values.
        #[arg(long)]
        raw: bool,
    },
    /// Solve the Dirichlet problem on the disk for one ε.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
        /// Mesh size; defaults to min(ε/8, 1/64).
        #[arg(long)]
        h: Option<f64>,
        /// Write the harmonic reference on the same mesh.
        #[arg(long)]
        reference: bool,
    },
    /// Doubling profile of a saved solution, or a three-state check.
    Doubling {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
        center: Vec<f64>,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 4)]
        rungs: usize,
        #[arg(long, value_enum)]
        check: Option<CheckKind>,
        #[arg(long, default_value_t = 2)]
        ell: u32,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 4)]
        cap: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate critical points of a saved solution in a disk.
    Critical {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, num_args = 3, value_names = ["CX", "CY", "R"], allow_negative_numbers = true)]
        region: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full ε-sweep and write results and plot data.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a sweep and print one line per verdict.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also run the scaling suite with this factor (2 or 4).
        #[arg(long)]
        scaling: Option<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    Persistence,
    Reduction,
}

struct ConfigError(anyhow::Error);

fn load_config(path: &Path, workers: Option<usize>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| ConfigError(e.into()))?;
    if let Some(w) = workers {
        cfg.sweep.workers = w;
        cfg.validate().map_err(|e| ConfigError(e.into()))?;
    }
    Ok(cfg)
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn verdict_code(verdicts: impl IntoIterator<Item = Verdict>) -> u8 {
    if verdicts.into_iter().any(|v| v == Verdict::Violated) {
        EXIT_VIOLATED
    } else {
        0
    }
}

fn print_verdicts(record: &ResultRecord) {
    for v in &record.verdicts {
        let eps = v.epsilon.map(|e| e.to_string()).unwrap_or_else(|| "all".into());
        println!("{} {} eps={} {} {}", record.label, v.check, eps, v.verdict, v.note);
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Cell { config, n, out, raw } => {
            let cfg = load_config(&config, None)?;
            let n = n.unwrap_or(cfg.sweep.cell_n);
            let field = build_family_seeded(&cfg.coefficient, cfg.sweep.seed)?;
            let sol = solve_cell_problem(&field, n)?;
            std::fs::create_dir_all(&out)?;
            emit_json(&sol.summary(), Some(&out.join("corrector.json")))?;
            if raw {
                let chi: Vec<f64> = sol.chi[0].iter().zip(&sol.chi[1]).flat_map(|(a, b)| [*a, *b]).collect();
                write_f64(&out.join("chi.bin"), "chi", &[n, n, 2], &chi)?;
            }
            Ok(0)
        }
        Command::Solve { config, epsilon, out, h, reference } => {
            let cfg = load_config(&config, None)?;
            let prep = harness::prepare_field(&cfg)?;
            let g = cfg.boundary.data();
            let mut problem = EpsProblem::new(prep.normalized.clone(), epsilon, cfg.boundary.radius, g.clone());
            problem.h = h;
            problem.validate().map_err(|e| ConfigError(e.into()))?;
            let sol = DiskProblem::new(&prep.normalized, epsilon, cfg.boundary.radius, problem.mesh_size())?.solve(&g)?;
            let reference = reference.then(|| harmonic_reference(&g, cfg.boundary.radius));
            save_solution(&out, &sol, &g, reference.as_ref())?;
            Ok(0)
        }
        Command::Doubling { solution, center, r, rungs, check, ell, delta, cap, out } => {
            let (sol, _) = load_solution(&solution)?;
            let x0 = Vec2::new(center[0], center[1]);
            match check {
                None => {
                    emit_json(&profile(&sol, x0, r, rungs)?, out.as_deref())?;
                    Ok(0)
                }
                Some(kind) => {
                    let params = ReductionParams::new(ell, delta, cap)?;
                    let report = match kind {
                        CheckKind::Persistence => check_persistence(&sol, x0, r, &params)?,
                        CheckKind::Reduction => check_reduction(&sol, x0, r, &params)?,
                    };
                    emit_json(&report, out.as_deref())?;
                    Ok(verdict_code([report.verdict]))
                }
            }
        }
        Command::Critical { solution, region, out } => {
            let (sol, _) = load_solution(&solution)?;
            if !(region[2] > 0.0) {
                return Err(Failure::Other(anyhow!("region radius must be positive")));
            }
            let disk = Disk::new(Vec2::new(region[0], region[1]), region[2]);
            let report = detect_critical_points(&sol, &disk, &DetectOptions::default())?;
            emit_json(&report, out.as_deref())?;
            Ok(0)
        }
        Command::Experiment { config, out, workers } => {
            let cfg = load_config(&config, workers)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let record = harness::execute(&cfg, &dir)?;
            let figures: Vec<Figure> = Figure::ALL
                .into_iter()
                .filter(|f| emit_plot_data(std::slice::from_ref(&record), &dir, &[*f]).is_ok())
                .collect();
            eprintln!("{}: wrote results and {} plot files to {}", record.label, figures.len(), dir.display());
            Ok(verdict_code(record.verdicts.iter().map(|v| v.verdict)))
        }
        Command::Check { config, out, workers, scaling } => {
            let cfg = load_config(&config, workers)?;
            if let Some(theta) = scaling {
                if theta != 2 && theta != 4 {
                    return Err(ConfigError(anyhow!("scaling factor must be 2 or 4")).into());
                }
            }
            let record = match &out {
                Some(dir) => harness::execute(&cfg, dir)?,
                None => harness::run_experiment(&cfg)?,
            };
            print_verdicts(&record);
            let mut verdicts: Vec<Verdict> = record.verdicts.iter().map(|v| v.verdict).collect();
            if let Some(theta) = scaling {
                let report = harness::scaling_invariance_suite(&cfg, theta)?;
                println!("{} scaling theta={} {}", record.label, theta, report.verdict);
                verdicts.push(report.verdict);
            }
            Ok(verdict_code(verdicts))
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
