use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hpdg::dg::{assemble, DgSpace, Discretization};
use hpdg::harness::{self, parse_irregularity, parse_p_range, random_schedule, RunConfig, COMPARED};
use hpdg::mesh::{read_mesh, write_mesh, Mesh};
use hpdg::problems::Case;
use hpdg::solve::PreconditionerKind;
use hpdg::subspaces::decompose;

#[derive(Parser)]
#[command(name = "solver", about = "hp-nonconforming DG Poisson solver and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adaptive suite (lshape, layer) or random-refinement suite (random).
    Run(RunArgs),
    /// Penalty study over eta in {10, 100, 1000, 10000} for SIPDG and BR2.
    Sweep(SweepArgs),
    /// Best constants of the jump and modified estimates on the strip mesh.
    Fig2 {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        n: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a mesh in the text mesh format.
    DumpMesh {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the V_J / V_e splitting of a mesh as CSV.
    DumpDecomposition {
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long, default_value = "sipdg")]
        disc: Discretization,
        #[arg(long, default_value_t = 100.0, allow_hyphen_values = true)]
        eta: f64,
        /// Keep nonconforming edges out of V_J even when the coarse side has the lowest degree.
        #[arg(long)]
        no_extension: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a CSV file as an aligned text table.
    Table { path: PathBuf },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value = "sipdg")]
    disc: Discretization,
    /// full, simplified, jacobi, identity, or all.
    #[arg(long, default_value = "all")]
    precond: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Keep nonconforming edges out of V_J even when the coarse side has the lowest degree.
    #[arg(long)]
    no_extension: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    case: Case,
    #[arg(long, default_value_t = 100.0, allow_hyphen_values = true)]
    eta: f64,
    /// AMR steps, or the largest number of random rounds for the random case.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "1")]
    irregularity: String,
    /// `p` or `lo:hi`; defaults depend on the case.
    #[arg(long)]
    p_range: Option<String>,
    #[arg(long, default_value_t = 0.7)]
    theta: f64,
    #[arg(long, default_value_t = 8)]
    p_max: usize,
    /// Largest degree difference across a face after each AMR step, or `unlimited`.
    #[arg(long, default_value = "2")]
    degree_jump: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "5:9")]
    p_range: String,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct MeshArgs {
    /// Read the mesh from a file instead of generating it.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value = "random")]
    case: Case,
    #[arg(long, default_value_t = 0)]
    random_rounds: usize,
    #[arg(long, default_value_t = 0)]
    uniform_rounds: usize,
    #[arg(long, default_value = "1")]
    irregularity: String,
    #[arg(long, default_value = "2")]
    p_range: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn preconditioners(spec: &str) -> hpdg::Result<Vec<PreconditionerKind>> {
    if spec == "all" {
        return Ok(COMPARED.to_vec());
    }
    spec.split(',').map(str::parse).collect()
}

fn apply_solver_args(c: &mut RunConfig, s: &SolverArgs) -> hpdg::Result<()> {
    c.discretization = s.disc;
    c.preconditioners = preconditioners(&s.precond)?;
    c.seed = s.seed;
    c.tol = s.tol;
    if let Some(m) = s.max_iter {
        c.max_iter = m;
    }
    c.extension = !s.no_extension;
    Ok(())
}

fn build_mesh(a: &MeshArgs) -> hpdg::Result<Mesh> {
    if let Some(path) = &a.mesh {
        return read_mesh(&fs::read_to_string(path)?);
    }
    let policy = parse_p_range(&a.p_range)?;
    let irregularity = parse_irregularity(&a.irregularity)?;
    let mut m = a.case.initial_mesh(1)?.random_refine(a.random_rounds, 0.5, a.seed, irregularity);
    for _ in 0..a.uniform_rounds {
        m = m.refine_uniform();
    }
    harness::assign_degrees(&m, policy, a.seed)
}

fn emit(out: &Option<PathBuf>, text: &str) -> hpdg::Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cmd: Command) -> hpdg::Result<()> {
    match cmd {
        Command::Run(a) => {
            let mut c = RunConfig::new(a.case);
            apply_solver_args(&mut c, &a.solver)?;
            c.eta = a.eta;
            c.irregularity = parse_irregularity(&a.irregularity)?;
            if let Some(p) = &a.p_range {
                c.degrees = parse_p_range(p)?;
            }
            c.amr.theta = a.theta;
            c.amr.p_max = a.p_max;
            c.amr.max_degree_jump = match a.degree_jump.as_str() {
                "unlimited" => None,
                j => Some(
                    j.parse()
                        .map_err(|_| hpdg::Error::InvalidArgument(format!("invalid degree jump '{j}'")))?,
                ),
            };
            let csv = match a.case {
                Case::Random => {
                    c.validate()?;
                    let rounds = a.steps.unwrap_or(usize::MAX);
                    let schedule: Vec<_> =
                        random_schedule().into_iter().filter(|s| s.random_rounds <= rounds).collect();
                    harness::random_csv(&harness::run_random_with(&c, &schedule)?, &c.preconditioners)?
                }
                _ => {
                    if let Some(s) = a.steps {
                        c.steps = s;
                    }
                    harness::run_amr_suite(&c)?
                }
            };
            emit(&a.solver.out, &csv)
        }
        Command::Sweep(a) => {
            let mut c = RunConfig::penalty_sweep();
            apply_solver_args(&mut c, &a.solver)?;
            c.degrees = parse_p_range(&a.p_range)?;
            emit(&a.solver.out, &harness::run_penalty_sweep(&c)?)
        }
        Command::Fig2 { n, out } => {
            if n.contains(&0) {
                return Err(hpdg::Error::InvalidArgument("n must be positive".into()));
            }
            emit(&out, &harness::run_fig2_constants(&n)?)
        }
        Command::DumpMesh { mesh, out } => emit(&out, &write_mesh(&build_mesh(&mesh)?)),
        Command::DumpDecomposition { mesh, disc, eta, no_extension, out } => {
            let m = build_mesh(&mesh)?;
            let problem = mesh.case.problem(disc, eta);
            let space = DgSpace::new(&m);
            let system = assemble(&space, &problem)?;
            emit(&out, &decompose(&space, &system, !no_extension).to_csv())
        }
        Command::Table { path } => {
            let t = harness::parse_csv(&fs::read_to_string(path)?)?;
            print!("{}", harness::render_table(&t));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
