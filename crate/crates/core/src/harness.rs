//! Experiment drivers: adaptive, random-refinement and penalty studies, the
//! best-constant study, and the CSV contracts they emit.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conforming::{build_lor, estimate_best_constants, CoarseSolver, ConformingSpace};
use crate::dg::{assemble, AssembledSystem, DgSpace, Discretization, ModelProblem};
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::problems::{amr_step, apply_marks, errors, AmrParams, Case};
use crate::solve::{compose_preconditioner, pcg, PcgOptions, PreconditionerKind, SolveReport};
use crate::subspaces::{build_tb, decompose, BlockPreconditioner, Decomposition};

pub const AMR_HEADER: &str = "step,dofs,iters_full,iters_simplified,iters_jacobi,cond_full,n_ve,max_dim_ve";
pub const RANDOM_HEADER: &str = "refinement,dofs,iters_full,iters_simplified,iters_jacobi,n_ve,max_dim_ve";
pub const SWEEP_HEADER: &str = "eta,disc,iters_full,iters_simplified,iters_jacobi";
pub const FIG2_HEADER: &str = "n,c_jump,c_modified";

/// Preconditioners compared in every suite, in column order.
pub const COMPARED: [PreconditionerKind; 3] =
    [PreconditionerKind::Full, PreconditionerKind::Simplified, PreconditionerKind::Jacobi];

pub const PENALTY_GRID: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreePolicy {
    Fixed(usize),
    /// Uniformly random in `lo..=hi`, drawn per element from the run seed.
    Random {
        lo: usize,
        hi: usize,
    },
}

impl DegreePolicy {
    pub fn lowest(self) -> usize {
        match self {
            DegreePolicy::Fixed(p) => p,
            DegreePolicy::Random { lo, .. } => lo,
        }
    }
}

/// Parse `p` or `lo:hi` into a degree policy.
pub fn parse_p_range(s: &str) -> Result<DegreePolicy> {
    let num = |t: &str| -> Result<usize> {
        let t = t.trim();
        match t.parse::<usize>() {
            Ok(p) if (1..=crate::mesh::MAX_DEGREE).contains(&p) => Ok(p),
            Ok(p) => invalid(format!("degree {p} outside 1..={}", crate::mesh::MAX_DEGREE)),
            Err(_) => invalid(format!("'{t}' is not a degree")),
        }
    };
    match s.split_once(':') {
        None => Ok(DegreePolicy::Fixed(num(s)?)),
        Some((a, b)) => {
            let (lo, hi) = (num(a)?, num(b)?);
            if lo > hi {
                return invalid(format!("empty degree range {lo}:{hi}"));
            }
            Ok(if lo == hi { DegreePolicy::Fixed(lo) } else { DegreePolicy::Random { lo, hi } })
        }
    }
}

impl FromStr for DegreePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_p_range(s)
    }
}

/// Parse `1`, `2`, ... or `unlimited`.
pub fn parse_irregularity(s: &str) -> Result<Option<u32>> {
    match s {
        "unlimited" | "none" => Ok(None),
        t => match t.parse::<u32>() {
            Ok(l) if l >= 1 => Ok(Some(l)),
            _ => invalid(format!("irregularity must be a positive integer or 'unlimited', got '{t}'")),
        },
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: Case,
    pub discretization: Discretization,
    pub eta: f64,
    pub preconditioners: Vec<PreconditionerKind>,
    /// AMR steps after the initial mesh.
    pub steps: usize,
    pub seed: u64,
    pub irregularity: Option<u32>,
    pub degrees: DegreePolicy,
    pub tol: f64,
    pub max_iter: usize,
    pub extension: bool,
    pub amr: AmrParams,
}

impl RunConfig {
    pub fn new(case: Case) -> Self {
        let degrees = match case {
            Case::Lshape => DegreePolicy::Fixed(2),
            Case::Layer => DegreePolicy::Fixed(1),
            Case::Random => DegreePolicy::Random { lo: 2, hi: 5 },
        };
        Self {
            case,
            discretization: Discretization::Sipdg,
            eta: 100.0,
            preconditioners: COMPARED.to_vec(),
            steps: 20,
            seed: 1,
            irregularity: Some(1),
            degrees,
            tol: 1e-8,
            max_iter: 2000,
            extension: true,
            amr: AmrParams::default(),
        }
    }

    /// Settings of the penalty study: random case, degrees in `5..=9`, and an
    /// iteration cap high enough for point Jacobi at large penalties.
    pub fn penalty_sweep() -> Self {
        Self { degrees: DegreePolicy::Random { lo: 5, hi: 9 }, max_iter: 10_000, ..Self::new(Case::Random) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return invalid(format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if self.max_iter == 0 {
            return invalid("max_iter must be positive");
        }
        if self.preconditioners.is_empty() {
            return invalid("no preconditioner requested");
        }
        if !(self.amr.theta > 0.0 && self.amr.theta <= 1.0) {
            return invalid(format!("marking fraction must lie in (0, 1], got {}", self.amr.theta));
        }
        if self.amr.p_max < self.degrees.lowest() || self.amr.p_max > crate::mesh::MAX_DEGREE {
            return invalid(format!("p_max {} is incompatible with the degree range", self.amr.p_max));
        }
        Ok(())
    }

    fn pcg_options(&self) -> PcgOptions {
        PcgOptions { tol: self.tol, max_iter: self.max_iter }
    }

    fn problem(&self, eta: f64, disc: Discretization) -> ModelProblem {
        self.case.problem(disc, eta)
    }
}

/// Everything needed to apply the preconditioners on one mesh.
pub struct Hierarchy {
    pub space: DgSpace,
    pub system: AssembledSystem,
    pub decomposition: Decomposition,
    pub coarse: CoarseSolver,
    pub tb: BlockPreconditioner,
}

pub fn build_hierarchy(mesh: &Mesh, problem: &ModelProblem, extension: bool) -> Result<Hierarchy> {
    let space = DgSpace::new(mesh);
    let system = assemble(&space, problem)?;
    let cspace = ConformingSpace::new(mesh);
    let p = cspace.prolongation(&space);
    let lor = build_lor(&space, &cspace, problem, &p)?;
    let coarse = CoarseSolver::new(p, lor);
    let decomposition = decompose(&space, &system, extension);
    let tb = build_tb(&system, &decomposition)?;
    Ok(Hierarchy { space, system, decomposition, coarse, tb })
}

impl Hierarchy {
    pub fn solve(&self, kind: PreconditionerKind, opts: PcgOptions) -> Result<(Vec<f64>, SolveReport)> {
        let b = compose_preconditioner(kind, &self.space, &self.system, Some(&self.coarse), Some(&self.tb))?;
        Ok(pcg(&self.system.a, &b, &self.system.b, opts))
    }
}

/// Outcome of one preconditioned solve; `None` iterations mean no convergence.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub kind: PreconditionerKind,
    pub iterations: Option<usize>,
    pub cond: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct MeshResult {
    pub dofs: usize,
    pub outcomes: Vec<SolveOutcome>,
    pub n_ve: usize,
    pub max_dim_ve: usize,
}

impl MeshResult {
    pub fn iterations(&self, kind: PreconditionerKind) -> Option<usize> {
        self.outcomes.iter().find(|o| o.kind == kind).and_then(|o| o.iterations)
    }

    pub fn cond(&self, kind: PreconditionerKind) -> Option<f64> {
        self.outcomes.iter().find(|o| o.kind == kind && o.iterations.is_some()).map(|o| o.cond)
    }
}

/// Solve with each requested preconditioner. The returned solution is that of
/// the first converged solve, or of the last attempted one.
fn solve_all(
    h: &Hierarchy,
    kinds: &[PreconditionerKind],
    opts: PcgOptions,
) -> Result<(MeshResult, Vec<f64>)> {
    let mut outcomes = Vec::new();
    let mut solution: Option<(bool, Vec<f64>)> = None;
    for &kind in kinds {
        let (x, report) = h.solve(kind, opts)?;
        let ok = report.converged();
        outcomes.push(SolveOutcome {
            kind,
            iterations: ok.then_some(report.iterations),
            cond: report.cond_estimate,
            report,
        });
        if !solution.as_ref().is_some_and(|s| s.0) {
            solution = Some((ok, x));
        }
    }
    let d = &h.decomposition;
    let result =
        MeshResult { dofs: h.space.n_dofs(), outcomes, n_ve: d.n_blocks(), max_dim_ve: d.max_block_dim() };
    Ok((result, solution.map(|s| s.1).unwrap_or_default()))
}

/// Copy of `mesh` with degrees drawn from `policy`.
pub fn assign_degrees(mesh: &Mesh, policy: DegreePolicy, seed: u64) -> Result<Mesh> {
    match policy {
        DegreePolicy::Fixed(p) => mesh.with_uniform_degree(p),
        DegreePolicy::Random { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let degrees: Vec<(usize, usize)> =
                mesh.active().iter().map(|&e| (e, rng.gen_range(lo..=hi))).collect();
            mesh.with_degrees(degrees)
        }
    }
}

#[derive(Debug, Clone)]
pub struct AmrRecord {
    pub step: usize,
    pub mesh: Mesh,
    pub result: MeshResult,
    pub h1_error: f64,
    pub elements: usize,
    pub max_level_jump: u32,
}

pub fn run_amr(config: &RunConfig) -> Result<Vec<AmrRecord>> {
    config.validate()?;
    if config.case == Case::Random {
        return invalid("the adaptive suite runs the lshape or layer case");
    }
    let problem = config.problem(config.eta, config.discretization);
    let mut mesh = assign_degrees(&config.case.initial_mesh(1)?, config.degrees, config.seed)?;
    let mut records = Vec::with_capacity(config.steps + 1);
    for step in 0..=config.steps {
        let h = build_hierarchy(&mesh, &problem, config.extension)?;
        let (result, u_h) = solve_all(&h, &config.preconditioners, config.pcg_options())?;
        let err = errors(&h.space, &u_h, config.case);
        records.push(AmrRecord {
            step,
            mesh: mesh.clone(),
            result,
            h1_error: err.h1,
            elements: mesh.num_active(),
            max_level_jump: mesh.max_level_jump(),
        });
        if step < config.steps {
            let marks = amr_step(&h.space, &u_h, config.case, config.amr);
            mesh = apply_marks(&mesh, &marks, config.irregularity, config.amr.max_degree_jump)?;
        }
    }
    Ok(records)
}

fn iter_field(r: &MeshResult, kind: PreconditionerKind, requested: &[PreconditionerKind]) -> String {
    if !requested.contains(&kind) {
        return String::new();
    }
    r.iterations(kind).map_or("-1".to_string(), |k| k.to_string())
}

fn csv_text(header: &str, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header.split(',')).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn amr_csv(records: &[AmrRecord], requested: &[PreconditionerKind]) -> Result<String> {
    let rows = records
        .iter()
        .map(|r| {
            let m = &r.result;
            vec![
                r.step.to_string(),
                m.dofs.to_string(),
                iter_field(m, PreconditionerKind::Full, requested),
                iter_field(m, PreconditionerKind::Simplified, requested),
                iter_field(m, PreconditionerKind::Jacobi, requested),
                m.cond(PreconditionerKind::Full).map_or(String::new(), |c| format!("{c:.4}")),
                m.n_ve.to_string(),
                m.max_dim_ve.to_string(),
            ]
        })
        .collect();
    csv_text(AMR_HEADER, rows)
}

pub fn run_amr_suite(config: &RunConfig) -> Result<String> {
    amr_csv(&run_amr(config)?, &config.preconditioners)
}

/// One row of the random-refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub random_rounds: usize,
    pub uniform_rounds: usize,
    pub irregularity: Option<u32>,
}

impl Schedule {
    pub fn label(&self) -> String {
        let mut s = if self.random_rounds == 0 {
            "initial".to_string()
        } else {
            format!("{} random", self.random_rounds)
        };
        if self.uniform_rounds > 0 {
            s += &format!(" + {} uniform", self.uniform_rounds);
        }
        if self.random_rounds > 1 {
            s += match self.irregularity {
                Some(1) => " (1-irregular)",
                _ => " (unlimited)",
            };
        }
        s
    }

    pub fn mesh(&self, base: &Mesh, seed: u64) -> Mesh {
        let mut m = base.random_refine(self.random_rounds, 0.5, seed, self.irregularity);
        for _ in 0..self.uniform_rounds {
            m = m.refine_uniform();
        }
        m
    }
}

/// Initial mesh; one random round followed by 0–2 uniform rounds; two and
/// three random rounds, each unlimited and 1-irregular.
pub fn random_schedule() -> Vec<Schedule> {
    let s = |r, u, l| Schedule { random_rounds: r, uniform_rounds: u, irregularity: l };
    vec![
        s(0, 0, Some(1)),
        s(1, 0, Some(1)),
        s(1, 1, Some(1)),
        s(1, 2, Some(1)),
        s(2, 0, None),
        s(2, 0, Some(1)),
        s(3, 0, None),
        s(3, 0, Some(1)),
    ]
}

#[derive(Debug, Clone)]
pub struct RandomRecord {
    pub schedule: Schedule,
    pub mesh: Mesh,
    pub result: MeshResult,
    pub max_level_jump: u32,
}

/// Degree seed for one schedule row, derived from the run seed and the row.
fn degree_seed(seed: u64, schedule: &Schedule) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((schedule.random_rounds as u64) << 8 | schedule.uniform_rounds as u64)
        ^ schedule.irregularity.map_or(0xFF_0000, |l| (l as u64) << 16)
}

pub fn run_random_with(config: &RunConfig, schedules: &[Schedule]) -> Result<Vec<RandomRecord>> {
    config.validate()?;
    if config.case != Case::Random {
        return invalid("the random-refinement suite runs the random case");
    }
    let problem = config.problem(config.eta, config.discretization);
    let base = config.case.initial_mesh(1)?;
    let mut out = Vec::with_capacity(schedules.len());
    for sched in schedules {
        let refined = sched.mesh(&base, config.seed);
        let mesh = assign_degrees(&refined, config.degrees, degree_seed(config.seed, sched))?;
        let h = build_hierarchy(&mesh, &problem, config.extension)?;
        let (result, _) = solve_all(&h, &config.preconditioners, config.pcg_options())?;
        let max_level_jump = mesh.max_level_jump();
        out.push(RandomRecord { schedule: *sched, mesh, result, max_level_jump });
    }
    Ok(out)
}

pub fn run_random(config: &RunConfig) -> Result<Vec<RandomRecord>> {
    run_random_with(config, &random_schedule())
}

pub fn random_csv(records: &[RandomRecord], requested: &[PreconditionerKind]) -> Result<String> {
    let rows = records
        .iter()
        .map(|r| {
            let m = &r.result;
            vec![
                r.schedule.label(),
                m.dofs.to_string(),
                iter_field(m, PreconditionerKind::Full, requested),
                iter_field(m, PreconditionerKind::Simplified, requested),
                iter_field(m, PreconditionerKind::Jacobi, requested),
                m.n_ve.to_string(),
                m.max_dim_ve.to_string(),
            ]
        })
        .collect();
    csv_text(RANDOM_HEADER, rows)
}

pub fn run_random_suite(config: &RunConfig) -> Result<String> {
    random_csv(&run_random(config)?, &config.preconditioners)
}

/// Mesh of the penalty study: the random-case mesh after one random round,
/// degrees drawn from `degrees`.
pub fn penalty_mesh(seed: u64, degrees: DegreePolicy) -> Result<Mesh> {
    let sched = Schedule { random_rounds: 1, uniform_rounds: 0, irregularity: Some(1) };
    let m = sched.mesh(&Case::Random.initial_mesh(1)?, seed);
    assign_degrees(&m, degrees, degree_seed(seed, &sched))
}

#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub eta: f64,
    pub discretization: Discretization,
    pub result: MeshResult,
}

/// Iterations per preconditioner for each `η` in `etas`, with both
/// discretizations. Non-positive-definite systems are recorded as failures.
pub fn run_penalty(config: &RunConfig, etas: &[f64]) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let mesh = penalty_mesh(config.seed, config.degrees)?;
    let mut out = Vec::new();
    for disc in [Discretization::Sipdg, Discretization::Br2] {
        for &eta in etas {
            let problem = config.problem(eta, disc);
            let result = match build_hierarchy(&mesh, &problem, config.extension) {
                Ok(h) => solve_all(&h, &config.preconditioners, config.pcg_options())?.0,
                Err(Error::NotPositiveDefinite(_)) => MeshResult {
                    dofs: DgSpace::new(&mesh).n_dofs(),
                    outcomes: Vec::new(),
                    n_ve: 0,
                    max_dim_ve: 0,
                },
                Err(e) => return Err(e),
            };
            out.push(SweepRecord { eta, discretization: disc, result });
        }
    }
    Ok(out)
}

pub fn sweep_csv(records: &[SweepRecord], requested: &[PreconditionerKind]) -> Result<String> {
    let rows = records
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.eta),
                r.discretization.name().to_string(),
                iter_field(&r.result, PreconditionerKind::Full, requested),
                iter_field(&r.result, PreconditionerKind::Simplified, requested),
                iter_field(&r.result, PreconditionerKind::Jacobi, requested),
            ]
        })
        .collect();
    csv_text(SWEEP_HEADER, rows)
}

pub fn run_penalty_sweep(config: &RunConfig) -> Result<String> {
    sweep_csv(&run_penalty(config, &PENALTY_GRID)?, &config.preconditioners)
}

pub fn run_fig2_constants(ns: &[usize]) -> Result<String> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let c = estimate_best_constants(n)?;
        rows.push(vec![n.to_string(), format!("{:.6e}", c.c_jump), format!("{:.6e}", c.c_modified)]);
    }
    csv_text(FIG2_HEADER, rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Parse a CSV table with a header row; every record must match its width.
pub fn parse_csv(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let parse_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse { line, msg: e.to_string() }
    };
    let header: Vec<String> = rdr.headers().map_err(parse_err)?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse { line: 1, msg: "missing header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(parse_err)?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

/// Check a parsed table against one of the header contracts.
pub fn validate_header(table: &Table, expected: &str) -> Result<()> {
    let want: Vec<&str> = expected.split(',').collect();
    if table.header != want {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header '{}' does not match '{expected}'", table.header.join(",")),
        });
    }
    Ok(())
}

/// Render a table with right-aligned columns for reading in a terminal.
pub fn render_table(table: &Table) -> String {
    let mut width: Vec<usize> = table.header.iter().map(|h| h.chars().count()).collect();
    for r in &table.rows {
        for (k, c) in r.iter().enumerate() {
            width[k] = width[k].max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&table.header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * width.len().saturating_sub(1)));
    out.push('\n');
    for r in &table.rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}
