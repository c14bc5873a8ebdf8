//! Acceptance gate for the benchmark: twelve end-to-end criteria covering
//! iteration-count baselines, jump-robustness sweeps, spectral bounds, the
//! Galerkin identity, and the decomposition-theory measurements. Each test
//! prints exactly one `criterion NN PASS/FAIL` verdict line with the
//! measured numbers, then asserts it.
//!
//! The heavy meshes are built once behind `OnceLock` and shared; the sweep
//! runner builds its own hierarchies internally, so only the spectral and
//! stationary checks go through the fixtures.

use std::sync::OnceLock;
use std::time::Instant;

use rdmg::assembly::{assemble_load, assemble_operator};
use rdmg::cli::{run_sweep, Aggregation, Geometry, PrecondKind, ResultRow, SweepConfig};
use rdmg::coefficients::{analyze_subdomains, CoefficientField};
use rdmg::krylov::{pcg, stationary_solve, SolveReport};
use rdmg::mesh::{
    build_cube_mesh, build_hierarchy, build_square_mesh, default_inclusions, MeshHierarchy,
};
use rdmg::multilevel::{
    build_level_stack, build_transfers, galerkin_coarsen, Preconditioner,
};
use rdmg::spectral::{
    dense_spectrum, detect_isolated, effective_condition, SpectralReport, DEFAULT_DENSE_LIMIT,
    DEFAULT_GAP_THRESHOLD,
};
use rdmg::sparse::SparseOperator;
use rdmg::theory::{
    biorthogonality_residual, dual_interpolate, measure_decomposition,
    measure_interpolation_stability, measure_scs, random_test_function,
};

/// The full reaction grid the iteration tables sweep over.
const RHO_GRID: [f64; 10] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e8];

/// 2D assignment seed whose label-0 subdomain is strictly interior: none of
/// its cells touches the boundary even at a vertex, so it is floating with
/// nothing pinning its constant mode. Found by scanning seeds; the property
/// is re-asserted below rather than trusted.
const INTERIOR_FLOATER_SEED: u64 = 63_167_740;

fn verdict(number: usize, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} {tag}: {detail}");
    assert!(pass, "criterion {number:02} {tag}: {detail}");
}

fn cube() -> &'static (MeshHierarchy, Vec<SparseOperator>) {
    static CUBE: OnceLock<(MeshHierarchy, Vec<SparseOperator>)> = OnceLock::new();
    CUBE.get_or_init(|| {
        let base = build_cube_mesh(4, &default_inclusions()).unwrap();
        let hierarchy = build_hierarchy(base, 4);
        let transfers = build_transfers(&hierarchy).unwrap();
        (hierarchy, transfers)
    })
}

fn square() -> &'static (MeshHierarchy, Vec<SparseOperator>) {
    static SQUARE: OnceLock<(MeshHierarchy, Vec<SparseOperator>)> = OnceLock::new();
    SQUARE.get_or_init(|| {
        let base = build_square_mesh(4, INTERIOR_FLOATER_SEED).unwrap();
        let hierarchy = build_hierarchy(base, 3);
        let transfers = build_transfers(&hierarchy).unwrap();
        (hierarchy, transfers)
    })
}

/// First `levels + 1` meshes of a hierarchy with the matching transfers.
fn slice(full: &(MeshHierarchy, Vec<SparseOperator>), levels: usize) -> (MeshHierarchy, &[SparseOperator]) {
    let sub = MeshHierarchy {
        meshes: full.0.meshes[..=levels].to_vec(),
        gamma: full.0.gamma,
    };
    (sub, &full.1[..levels])
}

fn unit_fields(n: usize) -> (CoefficientField, CoefficientField) {
    (
        CoefficientField::diffusion(vec![1.0; n]).unwrap(),
        CoefficientField::reaction(vec![1.0; n]).unwrap(),
    )
}

fn cube_sweep(levels: (usize, usize), rho2: &[f64], precond: PrecondKind) -> Vec<ResultRow> {
    let config = SweepConfig {
        geometry: Geometry::Cube3d,
        level_lo: levels.0,
        level_hi: levels.1,
        base_cells: 4,
        omega1: vec![1.0],
        omega2: vec![1.0],
        rho1: vec![1.0],
        rho2: rho2.to_vec(),
        preconds: vec![precond],
        aggregation: Aggregation::Single,
        tol: 1e-12,
        max_iter: 500,
        seed: 0,
    };
    run_sweep(&config).unwrap().rows
}

/// Iterations per level, taking the worst reaction column on each level.
fn worst_per_level(rows: &[ResultRow], levels: (usize, usize)) -> Vec<usize> {
    (levels.0..=levels.1)
        .map(|l| {
            rows.iter()
                .filter(|r| r.level == l)
                .map(|r| {
                    assert!(r.converged, "level {l} cell hit the iteration cap");
                    r.iterations
                })
                .max()
                .expect("every requested level produces rows")
        })
        .collect()
}

#[test]
fn criterion_01_gs_cg_iteration_baseline() {
    let start = Instant::now();
    let rows = cube_sweep((1, 3), &[1.0], PrecondKind::Sgs);
    let counts = worst_per_level(&rows, (1, 3));
    let expected = [18.0, 36.0, 66.0];
    let within = counts
        .iter()
        .zip(expected)
        .all(|(&c, e)| (c as f64) >= 0.7 * e && (c as f64) <= 1.3 * e);
    let r21 = counts[1] as f64 / counts[0] as f64;
    let r32 = counts[2] as f64 / counts[1] as f64;
    let ratios_ok = (1.6..=2.4).contains(&r21) && (1.6..=2.4).contains(&r32);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        1,
        within && ratios_ok && elapsed < 120.0,
        &format!(
            "GS-CG 3D iterations {counts:?} within 30% of (18, 36, 66); \
             level ratios ({r21:.2}, {r32:.2}) in [1.6, 2.4]; {elapsed:.1} s (limit 120)"
        ),
    );
}

#[test]
fn criterion_02_gs_cg_reaction_robustness() {
    let rows = cube_sweep((3, 3), &RHO_GRID, PrecondKind::Sgs);
    let counts: Vec<usize> = rows
        .iter()
        .map(|r| {
            assert!(r.converged);
            r.iterations
        })
        .collect();
    let max = *counts.iter().max().unwrap() as f64;
    let min = *counts.iter().min().unwrap() as f64;
    verdict(
        2,
        max / min <= 1.4,
        &format!(
            "GS-CG level-3 iterations {min}..{max} over the 10-value reaction grid, \
             max/min {:.3} (limit 1.4)",
            max / min
        ),
    );
}

#[test]
fn criterion_03_bpx_cg_near_optimality() {
    let rows = cube_sweep((1, 4), &[1.0], PrecondKind::Bpx);
    let counts = worst_per_level(&rows, (1, 4));
    let expected = [20.0, 27.0, 31.0, 33.0];
    let within = counts
        .iter()
        .zip(expected)
        .all(|(&c, e)| (c as f64) >= 0.7 * e && (c as f64) <= 1.3 * e);
    let growth = counts[3] as f64 / counts[2] as f64;
    verdict(
        3,
        within && growth <= 1.25,
        &format!(
            "BPX-CG 3D iterations {counts:?} within 30% of (20, 27, 31, 33); \
             level-4/level-3 ratio {growth:.3} (limit 1.25)"
        ),
    );
}

#[test]
fn criterion_04_mg_cg_optimality() {
    let rows = cube_sweep((1, 4), &RHO_GRID, PrecondKind::Mg);
    let counts = worst_per_level(&rows, (1, 4));
    let all_small = rows.iter().all(|r| r.converged && r.iterations <= 18);
    let flat = counts[3] as i64 - counts[1] as i64;
    verdict(
        4,
        all_small && flat <= 4,
        &format!(
            "MG-CG 3D worst iterations per level {counts:?}, every reaction cell <= 18, \
             level-4 minus level-2 = {flat} (limit 4)"
        ),
    );
}

#[test]
fn criterion_05_mg_stationary_contraction() {
    let full = cube();
    let mut factors = Vec::new();
    for l in 2..=4 {
        let (hierarchy, transfers) = slice(full, l);
        let finest = hierarchy.finest();
        let (omega, rho) = unit_fields(finest.n_subdomains());
        let stack = build_level_stack(&hierarchy, &omega, &rho, transfers).unwrap();
        let precond = Preconditioner::MultigridVcycle {
            stack: &stack,
            transfers,
        };
        let b = assemble_load(finest, 1.0);
        let report = stationary_solve(stack.finest(), &precond, &b, 1e-12).unwrap();
        assert!(report.converged, "stationary cycle stalled on level {l}");
        factors.push(report.conv_factor);
    }
    let lo = factors.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = factors.iter().cloned().fold(0.0f64, f64::max);
    let in_band = lo >= 0.11 && hi <= 0.31;
    let spread = hi - lo;
    verdict(
        5,
        in_band && spread <= 0.05,
        &format!(
            "MG stationary contraction factors {:?} on levels 2-4, \
             inside 0.21 +/- 0.10 with spread {spread:.3} (limit 0.05)",
            factors.iter().map(|f| (f * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
    );
}

/// Largest eigenvalue of the V-cycle-preconditioned operator on one instance.
fn mg_lambda_max(full: &(MeshHierarchy, Vec<SparseOperator>), levels: usize) -> f64 {
    let (hierarchy, transfers) = slice(full, levels);
    let finest = hierarchy.finest();
    let (omega, rho) = unit_fields(finest.n_subdomains());
    let stack = build_level_stack(&hierarchy, &omega, &rho, transfers).unwrap();
    let precond = Preconditioner::MultigridVcycle {
        stack: &stack,
        transfers,
    };
    let report = dense_spectrum(stack.finest(), &precond, DEFAULT_DENSE_LIMIT).unwrap();
    *report.eigenvalues.last().unwrap()
}

#[test]
fn criterion_06_vcycle_spectrum_below_one() {
    let start = Instant::now();
    let top_3d = mg_lambda_max(cube(), 1);
    let top_2d = mg_lambda_max(square(), 3);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        6,
        top_3d <= 1.0 + 1e-8 && top_2d <= 1.0 + 1e-8 && elapsed < 60.0,
        &format!(
            "lambda_max of the V-cycle-preconditioned operator: 3D level 1 {:.3e} above 1, \
             2D level 3 {:.3e} above 1 (tolerance 1e-8); {elapsed:.1} s (limit 60)",
            top_3d - 1.0,
            top_2d - 1.0
        ),
    );
}

/// Dense BPX spectrum of the 2D instance with diffusion (1, bg) and a
/// constant reaction equal to the background diffusion.
fn floating_bpx_spectrum(background: f64) -> SpectralReport {
    let (hierarchy, transfers) = (&square().0, &square().1[..]);
    let omega = CoefficientField::diffusion(vec![1.0, background]).unwrap();
    let rho = CoefficientField::reaction(vec![background; 2]).unwrap();
    let stack = build_level_stack(hierarchy, &omega, &rho, transfers).unwrap();
    let precond = Preconditioner::Bpx {
        stack: &stack,
        transfers,
    };
    dense_spectrum(stack.finest(), &precond, DEFAULT_DENSE_LIMIT).unwrap()
}

#[test]
fn criterion_07_effective_condition_under_matched_jumps() {
    let (hierarchy, _) = square();
    let finest = hierarchy.finest();
    assert!(finest.n_free() <= 3000, "instance outgrew the dense oracle");

    // The fixture seed must give exactly one floating subdomain, label 0,
    // whose cells stay clear of the boundary entirely.
    let probe = CoefficientField::diffusion(vec![1.0; finest.n_subdomains()]).unwrap();
    let info = analyze_subdomains(finest, &probe).unwrap();
    assert_eq!(info.floating, vec![0], "fixture lost its floating subdomain");
    for c in 0..finest.n_cells() {
        if finest.cell_subdomain[c] == 0 {
            assert!(
                finest.cell(c).iter().all(|&v| !finest.vertex_is_dirichlet[v]),
                "fixture subdomain touches the boundary"
            );
        }
    }

    let mut kappa0 = Vec::new();
    let mut kappa_eff = Vec::new();
    let mut detects_bounded = true;
    for r in [1.0, 1e-2, 1e-4, 1e-6, 1e-8] {
        let report = floating_bpx_spectrum(r);
        kappa0.push(report.kappa);
        kappa_eff.push(effective_condition(&report, info.m0).unwrap());
        detects_bounded &= detect_isolated(&report, DEFAULT_GAP_THRESHOLD) <= info.m0;
    }
    let spread = |v: &[f64]| {
        v.iter().cloned().fold(0.0f64, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let eff_spread = spread(&kappa_eff);
    let full_spread = spread(&kappa0);
    verdict(
        7,
        eff_spread < 2.0 && full_spread > 1e3 && detects_bounded,
        &format!(
            "BPX effective condition varies {eff_spread:.3}x (limit 2x) and the gap scan \
             stays <= {} isolated modes, but the full condition number varies only \
             {full_spread:.3}x, never the required 1e3x: the exact coarsest-level solve \
             already represents the floating-subdomain constant, so no isolated small \
             eigenvalue survives and kappa0 stays as flat as the effective value \
             (kappa0 sweep {:?})",
            info.m0,
            kappa0.iter().map(|k| (k * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_08_bpx_robust_to_pure_reaction_jumps() {
    let (hierarchy, transfers) = (&square().0, &square().1[..]);
    let omega = CoefficientField::diffusion(vec![1.0, 1.0]).unwrap();
    let kappa_of = |rho_values: [f64; 2]| {
        let rho = CoefficientField::reaction(rho_values.to_vec()).unwrap();
        let stack = build_level_stack(hierarchy, &omega, &rho, transfers).unwrap();
        let precond = Preconditioner::Bpx {
            stack: &stack,
            transfers,
        };
        dense_spectrum(stack.finest(), &precond, DEFAULT_DENSE_LIMIT)
            .unwrap()
            .kappa
    };
    let base = kappa_of([1.0, 1.0]);
    let jumps = [[1e8, 1.0], [1e-8, 1.0], [1.0, 1e8], [1.0, 1e-8]];
    let kappas: Vec<f64> = jumps.iter().map(|&j| kappa_of(j)).collect();
    let worst = kappas
        .iter()
        .map(|k| (k / base).max(base / k))
        .fold(0.0f64, f64::max);
    verdict(
        8,
        worst <= 2.0,
        &format!(
            "constant diffusion, reaction jumping 1e8 both ways: BPX condition numbers \
             {:?} against baseline {base:.3}, worst factor {worst:.3} (limit 2)",
            kappas.iter().map(|k| (k * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
    );
}

/// Worst MG-CG iteration count over the reaction grid at a fixed contrast
/// ratio, per level, on the randomized soft-background 2D geometry.
fn enclosure_sweep(ratio: f64) -> Vec<ResultRow> {
    let config = SweepConfig {
        geometry: Geometry::Square2d,
        level_lo: 4,
        level_hi: 6,
        base_cells: 4,
        omega1: vec![1e-8],
        omega2: vec![1.0],
        rho1: vec![ratio],
        rho2: RHO_GRID.to_vec(),
        preconds: vec![PrecondKind::Mg],
        aggregation: Aggregation::MaxOverRho,
        tol: 1e-12,
        max_iter: 500,
        seed: 0,
    };
    run_sweep(&config).unwrap().rows
}

#[test]
fn criterion_09_reaction_contrast_direction() {
    let hard = enclosure_sweep(1e4);
    let easy = enclosure_sweep(1e-4);
    let at_level = |rows: &[ResultRow], l: usize| {
        let row = rows.iter().find(|r| r.level == l).unwrap();
        assert!(row.converged);
        row.iterations
    };
    let pairs: Vec<(usize, usize, usize)> = (4..=6)
        .map(|l| (l, at_level(&hard, l), at_level(&easy, l)))
        .collect();
    let (_, hard_top, easy_top) = *pairs.last().unwrap();
    verdict(
        9,
        hard_top as f64 >= 1.2 * easy_top as f64,
        &format!(
            "soft background (diffusion 1e-8), MG-CG worst-over-reaction iterations \
             (level, ratio 1e+4, ratio 1e-4): {pairs:?}; at the largest level \
             {hard_top} vs {easy_top} gives {:.2}x (needs >= 1.2x)",
            hard_top as f64 / easy_top as f64
        ),
    );
}

#[test]
fn criterion_10_galerkin_matches_direct_assembly() {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (full, omega_values, rho_values) in [
        (cube(), [1.0, 1e4], [1e2, 1.0]),
        (square(), [1.0, 1e-6], [1e4, 1.0]),
    ] {
        let (hierarchy, transfers) = (&full.0, &full.1[..]);
        let omega = CoefficientField::diffusion(omega_values.to_vec()).unwrap();
        let rho = CoefficientField::reaction(rho_values.to_vec()).unwrap();
        let top = hierarchy.top_level();
        let mut fine = assemble_operator(&hierarchy.meshes[top], &omega, &rho).unwrap();
        for k in (0..top).rev() {
            let coarse = galerkin_coarsen(&fine, &transfers[k]).unwrap();
            let direct = assemble_operator(&hierarchy.meshes[k], &omega, &rho).unwrap();
            let rel = coarse.frobenius_distance(&direct) / direct.frobenius_norm();
            worst = worst.max(rel);
            checked += 1;
            fine = coarse;
        }
    }
    verdict(
        10,
        worst <= 1e-12,
        &format!(
            "triple product vs direct assembly over {checked} coarsening steps \
             on both geometries: worst relative Frobenius gap {worst:.2e} (limit 1e-12)"
        ),
    );
}

#[test]
fn criterion_11_decomposition_theory_suite() {
    let start = Instant::now();
    let base = build_square_mesh(4, 0).unwrap();
    let hierarchy = build_hierarchy(base, 2);
    let finest = hierarchy.finest();
    let mut legs: Vec<(bool, String)> = Vec::new();

    let bio_2d = biorthogonality_residual(finest).unwrap();
    let bio_3d = biorthogonality_residual(&cube().0.meshes[1]).unwrap();
    legs.push((
        bio_2d < 1e-12 && bio_3d < 1e-12,
        format!("biorthogonality {bio_2d:.1e}/{bio_3d:.1e}"),
    ));

    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0acc_e7ed);
    let probe = CoefficientField::diffusion(vec![1.0; finest.n_subdomains()]).unwrap();
    let ordering = analyze_subdomains(finest, &probe).unwrap();
    let mut reproduction = 0.0f64;
    for k in 0..=hierarchy.top_level() {
        let w = random_test_function(&hierarchy.meshes[k], &mut rng);
        let embedded = hierarchy.embed_nodal(k, &w).unwrap();
        let pi = dual_interpolate(&hierarchy, k, &embedded, &ordering).unwrap();
        for (a, b) in pi.iter().zip(&w) {
            reproduction = reproduction.max((a - b).abs());
        }
    }
    legs.push((
        reproduction < 1e-12,
        format!("level-space reproduction {reproduction:.1e}"),
    ));

    let (omega_unit, rho_unit) = unit_fields(finest.n_subdomains());
    let v = random_test_function(finest, &mut rng);
    let decomp = measure_decomposition(&hierarchy, &omega_unit, &rho_unit, &ordering, &v).unwrap();
    legs.push((
        decomp.sum_error < 1e-12,
        format!("decomposition sum error {:.1e}", decomp.sum_error),
    ));

    let k = hierarchy.top_level() - 1;
    let mut ordered = Vec::new();
    let mut adversarial = Vec::new();
    for jump in [1.0, 1e2, 1e4, 1e6, 1e8] {
        let tau = [1.0, jump];
        let descending =
            analyze_subdomains(finest, &CoefficientField::diffusion(vec![1.0, jump]).unwrap())
                .unwrap();
        let ascending =
            analyze_subdomains(finest, &CoefficientField::diffusion(vec![jump, 1.0]).unwrap())
                .unwrap();
        ordered
            .push(measure_interpolation_stability(&hierarchy, k, &tau, &descending).unwrap());
        adversarial
            .push(measure_interpolation_stability(&hierarchy, k, &tau, &ascending).unwrap());
    }
    let ordered_spread = ordered.iter().cloned().fold(0.0f64, f64::max)
        / ordered.iter().cloned().fold(f64::INFINITY, f64::min);
    legs.push((
        ordered_spread < 2.0,
        format!("ordered stability spread {ordered_spread:.3}"),
    ));
    let amplification = adversarial.last().unwrap() / adversarial.first().unwrap();
    legs.push((
        amplification > 10.0,
        format!("adversarial amplification {amplification:.1}x"),
    ));

    let scs = measure_scs(&hierarchy, &omega_unit).unwrap();
    let ratios: Vec<f64> = scs
        .band_means
        .windows(2)
        .map(|w| w[0] / w[1])
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    legs.push((mean_ratio >= 1.3, format!("SCS band decay {mean_ratio:.2}")));

    let elapsed = start.elapsed().as_secs_f64();
    let pass = legs.iter().all(|(ok, _)| *ok) && elapsed < 300.0;
    let detail: Vec<&str> = legs.iter().map(|(_, d)| d.as_str()).collect();
    verdict(
        11,
        pass,
        &format!("{}; {elapsed:.1} s (limit 300)", detail.join("; ")),
    );
}

/// Every instance the dense oracle sees elsewhere in this suite, replayed
/// as (spectrum, CG solve) pairs.
fn oracle_instances() -> Vec<(String, SpectralReport, SolveReport)> {
    let mut out = Vec::new();
    let mut push = |name: String,
                    hierarchy: &MeshHierarchy,
                    transfers: &[SparseOperator],
                    omega: CoefficientField,
                    rho: CoefficientField,
                    bpx: bool| {
        let stack = build_level_stack(hierarchy, &omega, &rho, transfers).unwrap();
        let precond = if bpx {
            Preconditioner::Bpx {
                stack: &stack,
                transfers,
            }
        } else {
            Preconditioner::MultigridVcycle {
                stack: &stack,
                transfers,
            }
        };
        let spectrum = dense_spectrum(stack.finest(), &precond, DEFAULT_DENSE_LIMIT).unwrap();
        let b = assemble_load(hierarchy.finest(), 1.0);
        let solve = pcg(stack.finest(), &precond, &b, 1e-12, 500).unwrap();
        out.push((name, spectrum, solve));
    };

    let (cube_l1, cube_transfers) = slice(cube(), 1);
    let (omega, rho) = unit_fields(cube_l1.finest().n_subdomains());
    push("mg cube".into(), &cube_l1, cube_transfers, omega, rho, false);

    let (hierarchy, transfers) = (&square().0, &square().1[..]);
    let (omega, rho) = unit_fields(2);
    push("mg square".into(), hierarchy, transfers, omega, rho, false);

    for r in [1.0, 1e-2, 1e-4, 1e-6, 1e-8] {
        push(
            format!("bpx matched {r:.0e}"),
            hierarchy,
            transfers,
            CoefficientField::diffusion(vec![1.0, r]).unwrap(),
            CoefficientField::reaction(vec![r; 2]).unwrap(),
            true,
        );
    }
    for rho_values in [[1.0, 1.0], [1e8, 1.0], [1e-8, 1.0], [1.0, 1e8], [1.0, 1e-8]] {
        push(
            format!("bpx reaction {:.0e}/{:.0e}", rho_values[0], rho_values[1]),
            hierarchy,
            transfers,
            CoefficientField::diffusion(vec![1.0, 1.0]).unwrap(),
            CoefficientField::reaction(rho_values.to_vec()).unwrap(),
            true,
        );
    }
    out
}

#[test]
fn criterion_12_lanczos_agrees_with_dense_oracle() {
    let mut worst_ratio = f64::INFINITY;
    let mut worst_name = String::new();
    let mut inside = true;
    let mut count = 0usize;
    for (name, spectrum, solve) in oracle_instances() {
        let lo = spectrum.eigenvalues[0];
        let hi = *spectrum.eigenvalues.last().unwrap();
        // Ritz values interlace the spectrum in exact arithmetic only; with
        // coefficients spanning 8 orders of magnitude the computed extremes
        // can overshoot by rounding at the classical sqrt(eps) Lanczos
        // scale (observed: 1e-9 relative), so allow exactly that much.
        let slack = f64::EPSILON.sqrt() * hi;
        inside &= solve.lambda_min_est >= lo - slack && solve.lambda_max_est <= hi + slack;
        let ratio = solve.kappa_est / spectrum.kappa;
        if ratio < worst_ratio {
            worst_ratio = ratio;
            worst_name = name;
        }
        count += 1;
    }
    verdict(
        12,
        inside && worst_ratio >= 0.5,
        &format!(
            "{count} dense-oracle instances: Lanczos extremes inside the spectrum ({inside}), \
             worst kappa recovery {:.1}% on \"{worst_name}\" (needs >= 50%)",
            worst_ratio * 100.0
        ),
    );
}
