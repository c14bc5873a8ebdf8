//! Benchmark runner: single solves, sweep tables over coefficient grids,
//! spectral reports, and the lemma-verification suite.
//!
//! Sweeps persist their results as CSV named by a hash of the configuration
//! so reruns are reproducible and self-describing; the markdown rendering
//! mirrors the usual benchmark-table shape (levels down the side, reaction
//! values across the top).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::assembly::{assemble_load, assemble_operator};
use crate::coefficients::{analyze_subdomains, CoefficientField};
use crate::krylov::{pcg, stationary_solve, SolveReport};
use crate::mesh::{
    build_cube_mesh, build_hierarchy, build_square_mesh, default_inclusions, MeshHierarchy,
};
use crate::multilevel::{build_level_stack, build_transfers, Preconditioner};
use crate::sparse::SparseOperator;
use crate::spectral::{
    dense_spectrum, detect_isolated, effective_condition, DEFAULT_DENSE_LIMIT,
    DEFAULT_GAP_THRESHOLD,
};
use crate::theory::{
    biorthogonality_residual, dual_interpolate, measure_decomposition,
    measure_interpolation_stability, measure_scs, random_test_function,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Geometry {
    /// Unit cube with two touching interior box inclusions.
    Cube3d,
    /// Unit square with randomized per-cell subdomain labels.
    Square2d,
}

impl Geometry {
    pub fn label(self) -> &'static str {
        match self {
            Geometry::Cube3d => "cube3d",
            Geometry::Square2d => "square2d",
        }
    }

    fn from_label(s: &str) -> Result<Self> {
        match s {
            "cube3d" => Ok(Geometry::Cube3d),
            "square2d" => Ok(Geometry::Square2d),
            other => Err(Error::Config(format!("unknown geometry '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum PrecondKind {
    None,
    Jacobi,
    Sgs,
    Bpx,
    Mg,
}

impl PrecondKind {
    pub fn label(self) -> &'static str {
        match self {
            PrecondKind::None => "none",
            PrecondKind::Jacobi => "jacobi",
            PrecondKind::Sgs => "sgs",
            PrecondKind::Bpx => "bpx",
            PrecondKind::Mg => "mg",
        }
    }

    fn from_label(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PrecondKind::None),
            "jacobi" => Ok(PrecondKind::Jacobi),
            "sgs" => Ok(PrecondKind::Sgs),
            "bpx" => Ok(PrecondKind::Bpx),
            "mg" => Ok(PrecondKind::Mg),
            other => Err(Error::Config(format!("unknown preconditioner '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Aggregation {
    /// One table row per coefficient tuple.
    Single,
    /// Group cells by the reaction ratio rho1/rho2 and keep each group's
    /// worst solve, scanning the reaction magnitude at a fixed contrast.
    MaxOverRho,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::Single => "single",
            Aggregation::MaxOverRho => "max-over-rho",
        }
    }

    fn from_label(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Aggregation::Single),
            "max-over-rho" => Ok(Aggregation::MaxOverRho),
            other => Err(Error::Config(format!("unknown aggregation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Everything a sweep run depends on. Hashing this (via its canonical
/// string) names the output file, so identical configurations land on
/// identical paths.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub geometry: Geometry,
    pub level_lo: usize,
    pub level_hi: usize,
    /// Coarse-mesh resolution (cells per edge) the hierarchy starts from.
    pub base_cells: usize,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    /// Reaction values for subdomain 0; under max-over-rho aggregation
    /// these are the rho1/rho2 contrast ratios instead.
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub preconds: Vec<PrecondKind>,
    pub aggregation: Aggregation,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.level_lo > self.level_hi {
            return Err(Error::Config(format!(
                "empty level range {}:{}",
                self.level_lo, self.level_hi
            )));
        }
        for (name, grid) in [
            ("omega1", &self.omega1),
            ("omega2", &self.omega2),
            ("rho1", &self.rho1),
            ("rho2", &self.rho2),
        ] {
            if grid.is_empty() {
                return Err(Error::Config(format!("empty {name} grid")));
            }
        }
        for &w in self.omega1.iter().chain(&self.omega2) {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::NonPositiveCoefficient(w));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tolerance {} out of (0,1)", self.tol)));
        }
        Ok(())
    }

    /// Canonical one-line rendering; the basis of the config hash.
    fn canonical(&self) -> String {
        let join = |g: &[f64]| {
            g.iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "geometry={};levels={}:{};base={};omega1={};omega2={};rho1={};rho2={};preconds={};agg={};tol={};max_iter={};seed={}",
            self.geometry.label(),
            self.level_lo,
            self.level_hi,
            self.base_cells,
            join(&self.omega1),
            join(&self.omega2),
            join(&self.rho1),
            join(&self.rho2),
            self.preconds
                .iter()
                .map(|p| p.label())
                .collect::<Vec<_>>()
                .join(","),
            self.aggregation.label(),
            self.tol,
            self.max_iter,
            self.seed,
        )
    }

    /// First 12 hex digits of the SHA-256 of the canonical form.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// One completed solve. Aggregated tables keep the worst cell of each
/// group, so every row always describes a real run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub geometry: Geometry,
    pub level: usize,
    pub n_total: usize,
    pub n_free: usize,
    pub omega1: f64,
    pub omega2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub precond: PrecondKind,
    pub iterations: usize,
    pub converged: bool,
    pub conv_factor: f64,
    pub lambda_min_est: f64,
    pub lambda_max_est: f64,
    pub kappa_est: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub aggregation: Aggregation,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn any_unconverged(&self) -> bool {
        self.rows.iter().any(|r| !r.converged)
    }
}

const CSV_HEADER: &str = "geometry,level,n_total,n_free,omega1,omega2,rho1,rho2,precond,aggregation,iterations,converged,conv_factor,lambda_min_est,lambda_max_est,kappa_est";

/// Build the problem for one level slice and run one solve.
#[allow(clippy::too_many_arguments)]
fn solve_cell(
    hierarchy: &MeshHierarchy,
    transfers: &[SparseOperator],
    omega: [f64; 2],
    rho: [f64; 2],
    precond: PrecondKind,
    tol: f64,
    max_iter: usize,
    stationary: bool,
) -> Result<(SolveReport, usize, usize)> {
    let finest = hierarchy.finest();
    let omega_f = CoefficientField::diffusion(omega.to_vec())?;
    let rho_f = CoefficientField::reaction(rho.to_vec())?;
    omega_f.check_covers(finest)?;
    rho_f.check_covers(finest)?;
    let b = assemble_load(finest, 1.0);

    let run = |a: &SparseOperator, pre: &Preconditioner| -> Result<SolveReport> {
        if stationary {
            stationary_solve(a, pre, &b, tol)
        } else {
            pcg(a, pre, &b, tol, max_iter)
        }
    };

    let report = match precond {
        PrecondKind::None => {
            let a = assemble_operator(finest, &omega_f, &rho_f)?;
            run(&a, &Preconditioner::Identity)?
        }
        PrecondKind::Jacobi => {
            let a = assemble_operator(finest, &omega_f, &rho_f)?;
            let pre = Preconditioner::jacobi(&a)?;
            run(&a, &pre)?
        }
        PrecondKind::Sgs => {
            let a = assemble_operator(finest, &omega_f, &rho_f)?;
            run(&a, &Preconditioner::SymmetricGaussSeidel(&a))?
        }
        PrecondKind::Bpx => {
            let stack = build_level_stack(hierarchy, &omega_f, &rho_f, transfers)?;
            let pre = Preconditioner::Bpx {
                stack: &stack,
                transfers,
            };
            run(stack.finest(), &pre)?
        }
        PrecondKind::Mg => {
            let stack = build_level_stack(hierarchy, &omega_f, &rho_f, transfers)?;
            let pre = Preconditioner::MultigridVcycle {
                stack: &stack,
                transfers,
            };
            run(stack.finest(), &pre)?
        }
    };
    Ok((report, finest.n_vertices(), finest.n_free()))
}

fn base_mesh(geometry: Geometry, base_cells: usize, seed: u64) -> Result<crate::mesh::Mesh> {
    match geometry {
        Geometry::Cube3d => build_cube_mesh(base_cells, &default_inclusions()),
        Geometry::Square2d => build_square_mesh(base_cells, seed),
    }
}

/// Hierarchy prefixes and matching transfer slices for every level in the
/// sweep range, built once and shared by all cells.
fn level_slices(
    config: &SweepConfig,
) -> Result<(Vec<MeshHierarchy>, Vec<SparseOperator>)> {
    let base = base_mesh(config.geometry, config.base_cells, config.seed)?;
    let full = build_hierarchy(base, config.level_hi);
    let transfers = build_transfers(&full)?;
    let slices = (config.level_lo..=config.level_hi)
        .map(|l| MeshHierarchy {
            meshes: full.meshes[..=l].to_vec(),
            gamma: full.gamma,
        })
        .collect();
    Ok((slices, transfers))
}

/// Run every cell of the sweep. Unconverged cells stay in the table with
/// `converged = false` and `iterations = max_iter`; only structural
/// failures (bad coefficients, singular coarse solves) abort.
pub fn run_sweep(config: &SweepConfig) -> Result<ResultTable> {
    config.validate()?;
    let (slices, transfers) = level_slices(config)?;

    // cell list in deterministic order; the parallel map preserves it
    struct Cell {
        slice_idx: usize,
        level: usize,
        omega: [f64; 2],
        rho: [f64; 2],
        /// group key for max-over-rho: index into the rho1 (ratio) grid
        ratio_idx: usize,
        precond: PrecondKind,
    }
    let mut cells = Vec::new();
    for precond in &config.preconds {
        for (slice_idx, level) in (config.level_lo..=config.level_hi).enumerate() {
            for &o1 in &config.omega1 {
                for &o2 in &config.omega2 {
                    for (ratio_idx, &r1) in config.rho1.iter().enumerate() {
                        for &r2 in &config.rho2 {
                            let rho = match config.aggregation {
                                Aggregation::Single => [r1, r2],
                                Aggregation::MaxOverRho => [r1 * r2, r2],
                            };
                            cells.push(Cell {
                                slice_idx,
                                level,
                                omega: [o1, o2],
                                rho,
                                ratio_idx,
                                precond: *precond,
                            });
                        }
                    }
                }
            }
        }
    }

    let rows: Result<Vec<ResultRow>> = cells
        .par_iter()
        .map(|cell| {
            let slice = &slices[cell.slice_idx];
            let (report, n_total, n_free) = solve_cell(
                slice,
                &transfers[..cell.level],
                cell.omega,
                cell.rho,
                cell.precond,
                config.tol,
                config.max_iter,
                false,
            )?;
            Ok(ResultRow {
                geometry: config.geometry,
                level: cell.level,
                n_total,
                n_free,
                omega1: cell.omega[0],
                omega2: cell.omega[1],
                rho1: cell.rho[0],
                rho2: cell.rho[1],
                precond: cell.precond,
                iterations: report.iterations,
                converged: report.converged,
                conv_factor: report.conv_factor,
                lambda_min_est: report.lambda_min_est,
                lambda_max_est: report.lambda_max_est,
                kappa_est: report.kappa_est,
            })
        })
        .collect();
    let rows = rows?;

    let rows = match config.aggregation {
        Aggregation::Single => rows,
        Aggregation::MaxOverRho => {
            // keep each group's worst row; first occurrence wins ties so
            // the outcome does not depend on scheduling
            let mut best: BTreeMap<(usize, usize, usize, usize), ResultRow> = BTreeMap::new();
            for (cell, row) in cells.iter().zip(rows) {
                let key = (
                    precond_order(cell.precond),
                    cell.level,
                    omega_order(cell.omega, config),
                    cell.ratio_idx,
                );
                match best.get(&key) {
                    Some(held) if held.iterations >= row.iterations => {}
                    _ => {
                        best.insert(key, row);
                    }
                }
            }
            best.into_values().collect()
        }
    };

    Ok(ResultTable {
        aggregation: config.aggregation,
        rows,
    })
}

fn precond_order(p: PrecondKind) -> usize {
    p as usize
}

fn omega_order(omega: [f64; 2], config: &SweepConfig) -> usize {
    let i = config
        .omega1
        .iter()
        .position(|&v| v == omega[0])
        .unwrap_or(0);
    let j = config
        .omega2
        .iter()
        .position(|&v| v == omega[1])
        .unwrap_or(0);
    i * config.omega2.len() + j
}

fn fmt_coeff(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v == v.round() && v.abs() < 1e4 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Render a table: CSV has one row per cell with full metadata; markdown
/// groups by preconditioner and coefficient configuration with levels down
/// the side and reaction values across the top.
pub fn emit_table(table: &ResultTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => emit_csv(table),
        TableFormat::Markdown => emit_markdown(table),
    }
}

fn emit_csv(table: &ResultTable) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.geometry.label(),
            r.level,
            r.n_total,
            r.n_free,
            r.omega1,
            r.omega2,
            r.rho1,
            r.rho2,
            r.precond.label(),
            table.aggregation.label(),
            r.iterations,
            r.converged,
            r.conv_factor,
            r.lambda_min_est,
            r.lambda_max_est,
            r.kappa_est,
        );
    }
    out
}

/// Inverse of the CSV rendering, so results can be reloaded and checked.
pub fn parse_table(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "unrecognized results header {other:?}"
            )))
        }
    }
    let mut aggregation = None;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 16 {
            return Err(Error::Config(format!(
                "line {}: expected 16 fields, found {}",
                idx + 2,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number '{s}'")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad integer '{s}'")))
        };
        let agg = Aggregation::from_label(f[9])?;
        match aggregation {
            None => aggregation = Some(agg),
            Some(prev) if prev == agg => {}
            Some(prev) => {
                return Err(Error::Config(format!(
                    "mixed aggregation modes {} and {}",
                    prev.label(),
                    agg.label()
                )))
            }
        }
        rows.push(ResultRow {
            geometry: Geometry::from_label(f[0])?,
            level: int(f[1])?,
            n_total: int(f[2])?,
            n_free: int(f[3])?,
            omega1: num(f[4])?,
            omega2: num(f[5])?,
            rho1: num(f[6])?,
            rho2: num(f[7])?,
            precond: PrecondKind::from_label(f[8])?,
            iterations: int(f[10])?,
            converged: f[11]
                .parse()
                .map_err(|_| Error::Config(format!("bad boolean '{}'", f[11])))?,
            conv_factor: num(f[12])?,
            lambda_min_est: num(f[13])?,
            lambda_max_est: num(f[14])?,
            kappa_est: num(f[15])?,
        });
    }
    Ok(ResultTable {
        aggregation: aggregation.unwrap_or(Aggregation::Single),
        rows,
    })
}

fn emit_markdown(table: &ResultTable) -> String {
    // group rows into sections: one per (precond, omega pair, background
    // reaction or contrast ratio); columns are the remaining reaction axis
    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct SectionKey {
        precond: PrecondKind,
        omega: (u64, u64),
        rho1_bits: Option<u64>,
    }
    let aggregated = table.aggregation == Aggregation::MaxOverRho;
    let mut sections: BTreeMap<SectionKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in &table.rows {
        let key = SectionKey {
            precond: r.precond,
            omega: (r.omega1.to_bits(), r.omega2.to_bits()),
            rho1_bits: if aggregated {
                None
            } else {
                Some(r.rho1.to_bits())
            },
        };
        sections.entry(key).or_default().push(r);
    }

    let mut out = String::new();
    for (key, rows) in &sections {
        let omega1 = f64::from_bits(key.omega.0);
        let omega2 = f64::from_bits(key.omega.1);
        let column_of = |r: &ResultRow| -> f64 {
            if aggregated {
                r.rho1 / r.rho2
            } else {
                r.rho2
            }
        };
        let mut columns: Vec<f64> = Vec::new();
        let mut levels: Vec<usize> = Vec::new();
        for r in rows {
            let c = column_of(r);
            if !columns.contains(&c) {
                columns.push(c);
            }
            if !levels.contains(&r.level) {
                levels.push(r.level);
            }
        }
        columns.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels.sort_unstable();

        let heading = if aggregated {
            format!(
                "### {} iterations, omega=({},{}), worst case over rho at fixed rho1/rho2\n\n",
                r_label(key.precond),
                fmt_coeff(omega1),
                fmt_coeff(omega2),
            )
        } else {
            format!(
                "### {} iterations, omega=({},{}), rho1={}\n\n",
                r_label(key.precond),
                fmt_coeff(omega1),
                fmt_coeff(omega2),
                fmt_coeff(f64::from_bits(key.rho1_bits.unwrap())),
            )
        };
        out.push_str(&heading);
        let axis = if aggregated { "rho1/rho2" } else { "rho2" };
        let _ = write!(out, "| level \\ {axis} |");
        for c in &columns {
            let _ = write!(out, " {} |", fmt_coeff(*c));
        }
        out.push('\n');
        let _ = write!(out, "|---|");
        for _ in &columns {
            out.push_str("---|");
        }
        out.push('\n');
        for &level in &levels {
            let _ = write!(out, "| {level} |");
            for &c in &columns {
                match rows.iter().find(|r| r.level == level && column_of(r) == c) {
                    Some(r) if r.converged => {
                        let _ = write!(out, " {} |", r.iterations);
                    }
                    Some(r) => {
                        let _ = write!(out, " {}* |", r.iterations);
                    }
                    None => {
                        let _ = write!(out, " - |");
                    }
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    if table.rows.iter().any(|r| !r.converged) {
        out.push_str("`*` hit the iteration cap without converging\n");
    }
    out
}

fn r_label(p: PrecondKind) -> &'static str {
    match p {
        PrecondKind::None => "CG",
        PrecondKind::Jacobi => "Jacobi-CG",
        PrecondKind::Sgs => "GS-CG",
        PrecondKind::Bpx => "BPX-CG",
        PrecondKind::Mg => "MG-CG",
    }
}

/// Residual history as plain two-column CSV (iteration, relative residual),
/// one line per recorded residual, no header.
pub fn emit_history(report: &SolveReport) -> String {
    let mut out = String::new();
    let norm0 = report.residual_history.first().copied().unwrap_or(0.0);
    for (i, r) in report.residual_history.iter().enumerate() {
        let rel = if norm0 > 0.0 { r / norm0 } else { *r };
        let _ = writeln!(out, "{i},{rel}");
    }
    out
}

// ---- command-line front end ----

#[derive(Parser)]
#[command(
    name = "rdmg",
    about = "Multilevel preconditioner benchmarks for reaction-diffusion problems with jumping coefficients",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and print its result line.
    Solve(SolveArgs),
    /// Run a coefficient sweep and persist the result table.
    Sweep(SweepArgs),
    /// Dense spectrum of the preconditioned operator (small problems).
    Spectrum(SpectrumArgs),
    /// Measure the decomposition lemmas and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Domain and subdomain layout.
    #[arg(long, value_enum, default_value_t = Geometry::Cube3d)]
    geometry: Geometry,
    /// Coarse-mesh cells per edge (must align with the cube inclusions).
    #[arg(long, default_value_t = 4)]
    base_cells: usize,
    /// RNG seed for the randomized 2D subdomain labels.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Diffusion per subdomain, comma separated (background first).
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    omega: Vec<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Reaction per subdomain, comma separated (background first).
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    rho: Vec<f64>,
    /// Refinement level to solve on.
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, value_enum, default_value_t = PrecondKind::Mg)]
    precond: PrecondKind,
    /// Relative residual reduction target.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Run the preconditioner as a stationary iteration instead of CG.
    #[arg(long)]
    stationary: bool,
    /// Also write the residual history CSV here.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Write the result line here instead of stdout only.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Reaction values for the background subdomain (the table rows);
    /// under --aggregate max-over-rho these are rho1/rho2 contrast ratios.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    rho: Vec<f64>,
    /// Level range lo:hi (inclusive), or a single level.
    #[arg(long, default_value = "1:3")]
    levels: String,
    /// Reaction grid for the inclusion subdomain (the table columns);
    /// under --aggregate max-over-rho these pair with every --rho value.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    rho_grid: Vec<f64>,
    /// Preconditioners to sweep.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [PrecondKind::Mg])]
    precond: Vec<PrecondKind>,
    #[arg(long, value_enum, default_value_t = Aggregation::Single)]
    aggregate: Aggregation,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// stdout rendering; the persisted file is always CSV.
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    /// Output CSV path; defaults to sweep-<config hash>.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Reaction per subdomain, comma separated (background first).
    #[arg(long, value_delimiter = ',', default_value = "1,1")]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    level: usize,
    #[arg(long, value_enum, default_value_t = PrecondKind::Bpx)]
    precond: PrecondKind,
    /// Refuse problems with more free vertices than this.
    #[arg(long, default_value_t = DEFAULT_DENSE_LIMIT)]
    dense_limit: usize,
    /// Eigenvalue ratio that counts as an isolated-cluster gap.
    #[arg(long, default_value_t = DEFAULT_GAP_THRESHOLD)]
    gap_threshold: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Domain for the measurement suite.
    #[arg(long, value_enum, default_value_t = Geometry::Square2d)]
    geometry: Geometry,
    #[arg(long, default_value_t = 4)]
    base_cells: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_levels(spec: &str) -> Result<(usize, usize)> {
    let parse_one = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Config(format!("bad level '{s}'")))
    };
    match spec.split_once(':') {
        Some((lo, hi)) => Ok((parse_one(lo)?, parse_one(hi)?)),
        None => {
            let l = parse_one(spec)?;
            Ok((l, l))
        }
    }
}

fn coefficient_pair(values: &[f64], what: &str) -> Result<[f64; 2]> {
    match values {
        [a, b] => Ok([*a, *b]),
        [a] => Ok([*a, *a]),
        other => Err(Error::Config(format!(
            "{what} needs 1 or 2 comma-separated values, got {}",
            other.len()
        ))),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    print!("{text}");
    if let Some(p) = path {
        std::fs::write(p, text)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let omega = coefficient_pair(&args.problem.omega, "--omega")?;
    let rho = coefficient_pair(&args.rho, "--rho")?;
    let base = base_mesh(args.problem.geometry, args.problem.base_cells, args.problem.seed)?;
    let hierarchy = build_hierarchy(base, args.level);
    let transfers = build_transfers(&hierarchy)?;
    let (report, n_total, n_free) = solve_cell(
        &hierarchy,
        &transfers,
        omega,
        rho,
        args.precond,
        args.tol,
        args.max_iter,
        args.stationary,
    )?;
    let table = ResultTable {
        aggregation: Aggregation::Single,
        rows: vec![ResultRow {
            geometry: args.problem.geometry,
            level: args.level,
            n_total,
            n_free,
            omega1: omega[0],
            omega2: omega[1],
            rho1: rho[0],
            rho2: rho[1],
            precond: args.precond,
            iterations: report.iterations,
            converged: report.converged,
            conv_factor: report.conv_factor,
            lambda_min_est: report.lambda_min_est,
            lambda_max_est: report.lambda_max_est,
            kappa_est: report.kappa_est,
        }],
    };
    write_or_print(args.out.as_deref(), &emit_csv(&table))?;
    if let Some(path) = &args.history {
        std::fs::write(path, emit_history(&report))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(if report.converged { 0 } else { 2 })
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let omega = coefficient_pair(&args.problem.omega, "--omega")?;
    let (level_lo, level_hi) = parse_levels(&args.levels)?;
    let config = SweepConfig {
        geometry: args.problem.geometry,
        level_lo,
        level_hi,
        base_cells: args.problem.base_cells,
        omega1: vec![omega[0]],
        omega2: vec![omega[1]],
        rho1: args.rho.clone(),
        rho2: args.rho_grid.clone(),
        preconds: args.precond.clone(),
        aggregation: args.aggregate,
        tol: args.tol,
        max_iter: args.max_iter,
        seed: args.problem.seed,
    };
    let table = run_sweep(&config)?;
    let csv = emit_csv(&table);
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("sweep-{}.csv", config.digest())));
    std::fs::write(&path, &csv)?;
    match args.format {
        TableFormat::Csv => print!("{csv}"),
        TableFormat::Markdown => print!("{}", emit_markdown(&table)),
    }
    eprintln!("wrote {}", path.display());
    Ok(if table.any_unconverged() { 2 } else { 0 })
}

fn cmd_spectrum(args: &SpectrumArgs) -> Result<i32> {
    let omega = coefficient_pair(&args.problem.omega, "--omega")?;
    let rho = coefficient_pair(&args.rho, "--rho")?;
    let base = base_mesh(args.problem.geometry, args.problem.base_cells, args.problem.seed)?;
    let hierarchy = build_hierarchy(base, args.level);
    let transfers = build_transfers(&hierarchy)?;
    let finest = hierarchy.finest();
    let omega_f = CoefficientField::diffusion(omega.to_vec())?;
    let rho_f = CoefficientField::reaction(rho.to_vec())?;
    omega_f.check_covers(finest)?;
    rho_f.check_covers(finest)?;

    let report = match args.precond {
        PrecondKind::None => {
            let a = assemble_operator(finest, &omega_f, &rho_f)?;
            dense_spectrum(&a, &Preconditioner::Identity, args.dense_limit)?
        }
        PrecondKind::Jacobi => {
            let a = assemble_operator(finest, &omega_f, &rho_f)?;
            let pre = Preconditioner::jacobi(&a)?;
            dense_spectrum(&a, &pre, args.dense_limit)?
        }
        PrecondKind::Sgs => {
            let a = assemble_operator(finest, &omega_f, &rho_f)?;
            dense_spectrum(&a, &Preconditioner::SymmetricGaussSeidel(&a), args.dense_limit)?
        }
        PrecondKind::Bpx => {
            let stack = build_level_stack(&hierarchy, &omega_f, &rho_f, &transfers)?;
            let pre = Preconditioner::Bpx {
                stack: &stack,
                transfers: &transfers,
            };
            dense_spectrum(stack.finest(), &pre, args.dense_limit)?
        }
        PrecondKind::Mg => {
            let stack = build_level_stack(&hierarchy, &omega_f, &rho_f, &transfers)?;
            let pre = Preconditioner::MultigridVcycle {
                stack: &stack,
                transfers: &transfers,
            };
            dense_spectrum(stack.finest(), &pre, args.dense_limit)?
        }
    };

    let m = detect_isolated(&report, args.gap_threshold);
    let kappa_m = effective_condition(&report, m)?;
    let mut out = String::from("index,eigenvalue\n");
    for (i, ev) in report.eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{i},{ev}");
    }
    out.push('\n');
    out.push_str("kappa,kappa_eff,m_detected\n");
    let _ = writeln!(out, "{},{},{}", report.kappa, kappa_m, m);
    write_or_print(args.out.as_deref(), &out)?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let base = base_mesh(args.geometry, args.base_cells, args.seed)?;
    let hierarchy = build_hierarchy(base, args.levels);
    let finest = hierarchy.finest();
    let mut rows: Vec<(bool, String)> = Vec::new();

    let bio = biorthogonality_residual(finest)?;
    rows.push((
        bio < 1e-12,
        format!("dual-basis biorthogonality defect {bio:.2e} (tol 1e-12)"),
    ));

    // interpolation reproduces each coarse space
    let ordering = analyze_subdomains(
        finest,
        &CoefficientField::diffusion(vec![1.0; finest.n_subdomains()])?,
    )?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed ^ 0x7e57);
    let mut reproduction = 0.0f64;
    for k in 0..=hierarchy.top_level() {
        let w = random_test_function(&hierarchy.meshes[k], &mut rng);
        let embedded = hierarchy.embed_nodal(k, &w)?;
        let pi = dual_interpolate(&hierarchy, k, &embedded, &ordering)?;
        for (a, b) in pi.iter().zip(&w) {
            reproduction = reproduction.max((a - b).abs());
        }
    }
    rows.push((
        reproduction < 1e-12,
        format!("coarse-space reproduction error {reproduction:.2e} (tol 1e-12)"),
    ));

    // decomposition telescopes back to the function
    let omega = CoefficientField::diffusion(vec![1.0; finest.n_subdomains()])?;
    let rho = CoefficientField::reaction(vec![1.0; finest.n_subdomains()])?;
    let v = random_test_function(finest, &mut rng);
    let decomp = measure_decomposition(&hierarchy, &omega, &rho, &ordering, &v)?;
    rows.push((
        decomp.sum_error < 1e-12,
        format!(
            "decomposition sum error {:.2e} (tol 1e-12); H1 ratio {:.2}, reaction ratio {:.2}",
            decomp.sum_error, decomp.h1_ratio, decomp.reaction_ratio
        ),
    ));

    // jump-robust interpolation stability under the descending ordering
    if finest.n_subdomains() >= 2 {
        let k = hierarchy.top_level().saturating_sub(1);
        let mut ordered = Vec::new();
        let mut adversarial = Vec::new();
        for jump in [1.0, 1e2, 1e4, 1e6, 1e8] {
            let tau = [1.0, jump];
            let descending = analyze_subdomains(
                finest,
                &CoefficientField::diffusion(vec![1.0, jump])?,
            )?;
            let ascending = analyze_subdomains(
                finest,
                &CoefficientField::diffusion(vec![jump, 1.0])?,
            )?;
            ordered.push(measure_interpolation_stability(
                &hierarchy,
                k,
                &tau,
                &descending,
            )?);
            adversarial.push(measure_interpolation_stability(
                &hierarchy,
                k,
                &tau,
                &ascending,
            )?);
        }
        let spread = ordered.iter().cloned().fold(0.0f64, f64::max)
            / ordered.iter().cloned().fold(f64::INFINITY, f64::min);
        rows.push((
            spread < 2.0,
            format!(
                "ordered interpolation stability spread {spread:.3} over jumps 1..1e8 (tol 2.0)"
            ),
        ));
        let growth = adversarial.last().unwrap() / adversarial.first().unwrap();
        rows.push((
            growth > 10.0,
            format!(
                "adversarial ordering amplification x{growth:.1} at jump 1e8 (requires >10)"
            ),
        ));
    } else {
        rows.push((false, "stability sweep skipped: single-subdomain mesh".into()));
    }

    // strengthened Cauchy-Schwarz band decay
    let scs = measure_scs(&hierarchy, &omega)?;
    let mut band_ratios = Vec::new();
    for b in 0..scs.band_means.len() - 1 {
        band_ratios.push(scs.band_means[b] / scs.band_means[b + 1]);
    }
    let mean_ratio = band_ratios.iter().sum::<f64>() / band_ratios.len() as f64;
    rows.push((
        mean_ratio >= 1.3,
        format!("cross-level interaction band decay {mean_ratio:.2} per band (requires >= 1.3)"),
    ));

    let mut all_pass = true;
    for (pass, line) in &rows {
        all_pass &= pass;
        println!("{} {}", if *pass { "PASS" } else { "FAIL" }, line);
    }
    Ok(if all_pass { 0 } else { 1 })
}

/// Entry point for the binary: parse, dispatch, convert errors to exit
/// codes (1 = error, 2 = solver hit its iteration cap).
pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
