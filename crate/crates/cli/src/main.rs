use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tbhf_core::driver::{self, RunOptions, SweepAxis, SweepOptions};
use tbhf_core::lattice::build_lattice;
use tbhf_core::observables::slice;
use tbhf_core::{Error, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_COMPUTE: u8 = 3;
const EXIT_INTERRUPTED: u8 = 4;

#[derive(Parser)]
#[command(name = "tbhf", version, about = "Tight-binding Hartree-Fock runs for donors in silicon boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration, or print its stored record.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recompute even when a record exists.
        #[arg(long)]
        force: bool,
        /// Stop the main SCF after this many iterations, leaving a checkpoint.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
        /// Print the record as JSON instead of tables.
        #[arg(long)]
        json: bool,
    },
    /// Run the cartesian product of one or more axes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `separation=<nm,...>`, `cluster=A,B`, `box=<nm,...>`, `cells=<n,...>` or `spins=ud,uu`.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        force: bool,
    },
    /// Continue an interrupted run from its checkpoint.
    Resume {
        /// Run directory, or a run id under `--out`.
        run: String,
        /// Must match the stored snapshot when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the central-cell correction to the target binding depth.
    CalibrateCcc {
        #[arg(long)]
        config: PathBuf,
        /// Where the calibrated config is written.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-derive energies of stored runs from their totals.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Copy a stored field file, or write one plane of it as columns.
    ExportField {
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = FieldName::Density)]
        field: FieldName,
        #[arg(long)]
        to: PathBuf,
        /// Write the plane normal to this axis instead of the binary file.
        #[arg(long, value_enum)]
        slice: Option<Axis>,
        /// Plane position in nm; defaults to the impurity centroid.
        #[arg(long, requires = "slice")]
        at: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FieldName {
    Density,
    Hartree,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Configuration(_) | Error::Parameters(_) | Error::Geometry(_) | Error::Provenance(_) => EXIT_CONFIG,
        Error::Interrupted(_) => EXIT_INTERRUPTED,
        _ => EXIT_COMPUTE,
    }
}

fn load_config(path: &Path, out: Option<PathBuf>) -> Result<RunConfig, Error> {
    let mut c = RunConfig::load(path)?;
    if let Some(o) = out {
        c.output = o;
    }
    Ok(c)
}

fn print_json(v: &tbhf_core::RunRecord) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            config,
            out,
            force,
            stop_after,
            json,
        } => {
            let c = load_config(&config, out)?;
            let rec = driver::run_single(&c, &RunOptions { force, stop_after })?;
            if rec.cache_hit {
                eprintln!("cached record {}", rec.run_id);
            }
            if json {
                print_json(&rec)?;
            } else {
                print!("{}", rec.to_table());
            }
        }
        Command::Sweep {
            config,
            axes,
            out,
            workers,
            force,
        } => {
            let c = load_config(&config, out)?;
            let axes = axes.iter().map(|a| a.parse()).collect::<Result<Vec<SweepAxis>, _>>()?;
            let res = driver::run_sweep(&c, &axes, &SweepOptions { workers, force })?;
            print!("{}", res.table);
            eprintln!(
                "sweep {}: {} points, {} failed; table {}",
                res.sweep_id,
                res.entries.len(),
                res.failures(),
                res.table_path.display()
            );
        }
        Command::Resume { run, config, out } => {
            let c = config.map(|p| load_config(&p, None)).transpose()?;
            let direct = PathBuf::from(&run);
            let dir = if direct.is_dir() {
                direct
            } else {
                let base = out.or_else(|| c.as_ref().map(|c| c.output.clone())).unwrap_or_else(|| "runs".into());
                base.join(&run)
            };
            let rec = driver::resume(&dir, c.as_ref())?;
            print!("{}", rec.to_table());
        }
        Command::CalibrateCcc { config, out } => {
            let c = load_config(&config, None)?;
            let rep = driver::calibrate_ccc(&c)?;
            println!("central_cell_correction_ev\t{:.9}", rep.correction);
            println!("band_edge_ev\t{:.9}", rep.band_edge);
            println!("ground_ev\t{:.9}", rep.ground);
            println!("depth_ev\t{:.9}", rep.depth);
            println!("bound_levels\t{}", rep.bound.len());
            println!("pair_splitting_ev\t{:.3e}", rep.pair_splitting);
            let dir = out.unwrap_or_else(|| c.output.clone());
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("calibrated.toml");
            std::fs::write(&path, rep.config.to_toml()?)?;
            std::fs::write(dir.join("calibration.json"), serde_json::to_vec_pretty(&rep)?)?;
            eprintln!("calibrated config written to {}", path.display());
        }
        Command::Report { runs, json } => {
            for dir in runs {
                let rec = driver::report(&dir)?;
                if json {
                    print_json(&rec)?;
                } else {
                    print!("{}", rec.to_table());
                }
            }
        }
        Command::ExportField {
            run,
            field,
            to,
            slice: axis,
            at,
        } => {
            let name = match field {
                FieldName::Density => "density",
                FieldName::Hartree => "hartree",
            };
            let f = driver::load_field(&run, name)?;
            match axis {
                None => f.save(&to)?,
                Some(axis) => {
                    let k = axis as usize;
                    let at = match at {
                        Some(v) => v,
                        None => {
                            let rec = tbhf_core::RunRecord::load(&run.join(driver::RECORD_FILE))?;
                            let atoms = build_lattice(&rec.config.geometry)?;
                            let imp = atoms.impurity_positions();
                            if imp.is_empty() {
                                atoms.anchor()[k]
                            } else {
                                imp.iter().map(|p| p[k]).sum::<f64>() / imp.len() as f64
                            }
                        }
                    };
                    let rows = slice(&f, k, at)?;
                    let names = ["x_nm", "y_nm", "z_nm"];
                    let (a, b) = match k {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    let unit = if name == "density" { "value_per_nm3" } else { "value_ev" };
                    let mut text = format!("{}\t{}\t{unit}\n", names[a], names[b]);
                    for r in rows {
                        text.push_str(&format!("{:.6}\t{:.6}\t{:.9e}\n", r[0], r[1], r[2]));
                    }
                    std::fs::write(&to, text)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
