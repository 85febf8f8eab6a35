//! `jmflow`: experiments on free-time action potentials, rays and Busemann
//! functions of the Newtonian N-body problem.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jmflow::harness::{load_scenario, run_experiment, Experiment, RunContext};
use jmflow::JmError;

#[derive(Parser)]
#[command(name = "jmflow", version, about, long_about = None)]
struct Cli {
    /// Scenario file or bundled scenario name
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Output directory
    #[arg(long, global = true, default_value = "jmflow-out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print the result as JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a named state and export the trajectory
    Integrate {
        #[arg(long)]
        state: String,
        #[arg(long = "t", default_value_t = 100.0)]
        t_end: f64,
    },
    /// Free-time action potential between two states' configurations
    Phi {
        #[arg(long, allow_hyphen_values = true)]
        h: f64,
        #[arg(long, requires = "to", conflicts_with = "batch")]
        from: Option<String>,
        #[arg(long, requires = "from")]
        to: Option<String>,
        /// CSV of endpoint pairs, x then y on each row
        #[arg(long)]
        batch: Option<PathBuf>,
    },
    /// Certify that a state generates a geodesic ray
    Ray {
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 100.0)]
        tmax: f64,
    },
    /// Truncated Busemann function of a ray on a grid
    Busemann {
        #[arg(long)]
        ray: String,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Hamilton-Jacobi residual of a saved lattice field
    Viscosity {
        #[arg(long)]
        field: PathBuf,
    },
    /// Limit shape and remainder exponent of a hyperbolic state
    LimitShape {
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
    },
    /// Velocities with a prescribed limit shape at cone points
    ShapeSolve {
        #[arg(long)]
        a: String,
        #[arg(long)]
        points: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
    },
    /// Graph patch of the fixed-shape velocity field and its flow cloud
    Slice {
        #[arg(long)]
        a: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long = "grid-spec")]
        grid_spec: String,
        /// Unit-time flow steps applied in each direction
        #[arg(long, default_value_t = 2)]
        flow: usize,
    },
    /// Box-counting dimension of a point cloud
    Dimension {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, default_value_t = 6)]
        scales: usize,
    },
    /// Compactness experiment; the last row of the sequence is the limit
    Compactness {
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long)]
        grid: String,
    },
    /// Run the acceptance checks
    VerifyAll {
        /// Run everything twice and compare the outputs byte for byte
        #[arg(long)]
        determinism: bool,
        /// Restrict to these criteria
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

fn experiment(c: Command) -> Experiment {
    match c {
        Command::Integrate { state, t_end } => Experiment::Integrate { state, t_end },
        Command::Phi { h, from, to, batch } => Experiment::Phi { h, from, to, batch },
        Command::Ray { state, tmax } => Experiment::Ray { state, t_max: tmax },
        Command::Busemann { ray, grid, tol } => Experiment::Busemann { ray, grid, tol },
        Command::Viscosity { field } => Experiment::Viscosity { field },
        Command::LimitShape { state, horizon } => Experiment::LimitShape { state, horizon },
        Command::ShapeSolve { a, points, alpha, r } => Experiment::ShapeSolve { a, points, alpha, r },
        Command::Slice {
            a,
            alpha,
            r,
            grid_spec,
            flow,
        } => Experiment::Slice {
            a,
            alpha,
            r,
            grid_spec,
            flow,
        },
        Command::Dimension { cloud, scales } => Experiment::Dimension { cloud, scales },
        Command::Compactness { sequence, grid } => Experiment::Compactness { sequence, grid },
        Command::VerifyAll { determinism, only } => Experiment::VerifyAll { determinism, only },
    }
}

fn fail(e: &JmError) -> ExitCode {
    let err = serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } });
    eprintln!("{err}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    let scenario = match cli.scenario.as_deref().map(load_scenario).transpose() {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let ctx = RunContext {
        out_dir: cli.out,
        seed: cli.seed,
        scenario,
    };
    let exp = experiment(cli.command);
    match run_experiment(&exp, &ctx) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.result).unwrap());
            } else {
                if let Some(lines) = out.result.get("checks").and_then(|c| c.as_array()) {
                    for l in lines {
                        println!("{}", l.as_str().unwrap_or_default());
                    }
                }
                for p in &out.record.outputs {
                    println!("wrote {p}");
                }
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e),
    }
}
