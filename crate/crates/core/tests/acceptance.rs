//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Tolerances are pinned as constants below.
//!
//! Run with `cargo test -p hrom --test acceptance`.

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrom::config::ExperimentConfig;
use hrom::experiment::cmd_verify;
use hrom::lspg::{assemble_reduced, DEFAULT_ROM_TOL};
use hrom::sampler::SamplerState;
use hrom::work_units::{w_dwr_hrom, w_dwr_rom, w_nonlin_hrom, w_nonlin_rom, w_residual_norm};
use hrom::*;

type Res<T> = std::result::Result<T, Box<dyn std::error::Error>>;

// Criterion 1
const EXACTNESS_REL: f64 = 1e-12;
const EXACTNESS_CASES: u32 = 24;
const EXACTNESS_LIMIT: Duration = Duration::from_secs(10);
// Criterion 2
const ORACLE_REL: f64 = 1e-8;
const ORACLE_POINTS: usize = 20;
const ORACLE_LIMIT: Duration = Duration::from_secs(5);
// Criterion 3
const MESH_BAND: f64 = 0.5;
const RES_TARGETS: [(f64, usize); 3] = [(1e-4, 18), (1e-6, 35), (1e-8, 46)];
const JAC_TARGETS: [(f64, usize); 3] = [(1e-4, 11), (1e-6, 25), (1e-7, 28)];
const ROM_STATE_REL: f64 = 1e-6;
const ROM_FUNCTIONAL_ABS: f64 = 1e-4;
const SAMPLING_TOL: f64 = 1e-4;
const HROM_ORDER_BAND: f64 = 10.0;
const TABLE_LIMIT: Duration = Duration::from_secs(300);
// Criterion 4
const BASIS_WINDOW: (usize, usize) = (6, 9);
const LATTICE_FACTOR: f64 = 2.0;
const LATTICE_POINTS: usize = 20;
const ADAPT_LIMIT: Duration = Duration::from_secs(600);
// Criterion 5
const EFFECTIVITY_FLOOR: f64 = 1e-8;
const EFFECTIVITY_FACTOR: f64 = 2.0;
const EFFECTIVITY_SHARE: f64 = 0.8;
// Criterion 6
const BRUTE_CASES: usize = 200;
const BRUTE_OBJECTIVE: f64 = 1e-8;
// Criterion 7
const MATCHED_ERROR_BAND: f64 = 10.0;

/// Collects named checks for one criterion.
#[derive(Default)]
struct Report {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Report {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn within(&mut self, started: Instant, limit: Duration) {
        let t = started.elapsed();
        self.note(format!("{:.2}s", t.as_secs_f64()));
        self.check(t < limit, format!("runtime {:.1}s exceeds {:.0}s", t.as_secs_f64(), limit.as_secs_f64()));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn model() -> BurgersModel {
    BurgersModel::new(Grid1D::standard())
}

fn basis_from(model: &BurgersModel, bs: &[f64]) -> Res<(PodBasis, SnapshotSet)> {
    let mut snaps = SnapshotSet::new();
    for &b in bs {
        let w = model.solve_fom(&BurgersParams::new(b), None, 1e-12)?.state;
        snaps.push(vec![b], w)?;
    }
    Ok((build_basis(&snaps)?, snaps))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn nearest_state(snaps: &SnapshotSet, b: f64) -> &StateVector {
    let i = snaps
        .params()
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1[0] - b).abs().total_cmp(&(y.1[0] - b).abs()))
        .map(|x| x.0)
        .unwrap_or(0);
    snaps.state(i)
}

fn gn_step(sys: &hrom::lspg::ReducedSystem) -> Option<DVector<f64>> {
    sys.normal.clone().lu().solve(&(-&sys.residual))
}

fn criterion_1() -> Res<Report> {
    let started = Instant::now();
    let mut rep = Report::default();
    let model = model();
    let (coarse, coarse_snaps) = basis_from(&model, &[0.01, 0.055, 0.1])?;
    let (fine, fine_snaps) = basis_from(&model, &linspace(0.01, 0.1, 6))?;
    let full = ReducedMesh::full(model.num_entities(), TrainingMode::Jacobian);
    let worst = std::cell::Cell::new(0.0f64);
    let bump = |x: f64| worst.set(worst.get().max(x));

    let mut runner = TestRunner::new(PropConfig {
        cases: EXACTNESS_CASES,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let strategy = (0.01f64..0.1, prop::collection::vec(-1.0f64..1.0, fine.dim()), 0.05f64..0.5);
    let outcome = runner.run(&strategy, |(b, dir, scale)| {
        let p = BurgersParams::new(b);
        let err = |e: RomError| TestCaseError::fail(e.to_string());
        let fom = model.solve_fom(&p, None, 1e-12).map_err(err)?.state;
        let target = fine.project(&fom);
        let mut w_hat = &target + DVector::from_vec(dir) * scale * target.norm().max(1.0) * 1e-2;
        let mut w_hat_h = w_hat.clone();


        // Reduced quantities at one perturbed (non-converged) state.
        let w = fine.reconstruct(&w_hat);
        let ex = assemble_reduced(&model, &fine, Quadrature::Full, &w, &p).map_err(err)?;
        let hy = assemble_reduced(&model, &fine, Quadrature::Reduced(&full), &w, &p).map_err(err)?;
        let r_full = model.residual(&w, &p).map_err(err)?;
        let t = [
            rel_vec(&ex.residual, &hy.residual),
            rel_mat(&ex.normal, &hy.normal),
            rel_mat(&ex.test_basis, &hy.test_basis),
            rel(ex.objective, hy.objective),
            rel(ex.objective, r_full.norm_squared()),
        ];
        t.iter().for_each(|&x| bump(x));
        prop_assert!(t.iter().all(|&x| x <= EXACTNESS_REL), "reduced quantities differ: {t:?}");

        // Undamped Gauss-Newton iterates from the same start.
        for _ in 0..4 {
            let ex = assemble_reduced(&model, &fine, Quadrature::Full, &fine.reconstruct(&w_hat), &p).map_err(err)?;
            let hy = assemble_reduced(&model, &fine, Quadrature::Reduced(&full), &fine.reconstruct(&w_hat_h), &p)
                .map_err(err)?;
            let (Some(p_ex), Some(p_hy)) = (gn_step(&ex), gn_step(&hy)) else {
                return Err(TestCaseError::fail("singular normal matrix"));
            };
            w_hat += p_ex;
            w_hat_h += p_hy;
            bump(rel_vec(&w_hat, &w_hat_h));
            prop_assert!(rel_vec(&w_hat, &w_hat_h) <= EXACTNESS_REL, "Gauss-Newton iterates differ");
        }

        let seed = nearest_state(&fine_snaps, b);
        let a = solve_rom_exact(&model, &fine, &p, Some(seed), DEFAULT_ROM_TOL).map_err(err)?;
        let h = solve_rom_hyper(&model, &fine, &full, &p, Some(seed), DEFAULT_ROM_TOL).map_err(err)?;
        bump(rel_vec(&a.w_hat, &h.w_hat));
        prop_assert!(rel_vec(&a.w_hat, &h.w_hat) <= EXACTNESS_REL, "converged solutions differ");
        prop_assert_eq!(a.iterations, h.iterations);

        let w_coarse = solve_rom_exact(&model, &coarse, &p, Some(nearest_state(&coarse_snaps, b)), DEFAULT_ROM_TOL)
            .map_err(err)?
            .w_tilde;
        let e_ex = epsilon_r_exact(&model, &fine, &w_coarse, &p).map_err(err)?;
        let e_hy = epsilon_r_hyper(&model, &fine, &full, &w_coarse, &p).map_err(err)?;
        bump(rel(e_ex, e_hy));
        prop_assert!(rel(e_ex, e_hy) <= EXACTNESS_REL, "eps_r differs: {e_ex:e} vs {e_hy:e}");
        Ok(())
    });
    rep.check(outcome.is_ok(), format!("{outcome:?}"));
    rep.note(format!("{EXACTNESS_CASES} cases, worst relative gap {:.2e}", worst.get()));
    rep.within(started, EXACTNESS_LIMIT);
    Ok(rep)
}

/// Upwind marching: `w_j^2 = w_{j-1}^2 + 2 dx exp(b x_j)`, `w_0 = 1`.
fn march(n: usize, lo: f64, hi: f64, b: f64) -> DVector<f64> {
    let dx = (hi - lo) / (n - 1) as f64;
    let mut w = DVector::from_element(n, 1.0);
    for j in 1..n {
        let x = lo + j as f64 * dx;
        w[j] = (w[j - 1] * w[j - 1] + 2.0 * dx * (b * x).exp()).sqrt();
    }
    w
}

fn criterion_2() -> Res<Report> {
    let started = Instant::now();
    let mut rep = Report::default();
    let model = model();
    let (lo, hi) = model.grid().domain();
    let mut worst = 0.0f64;
    for b in linspace(0.01, 0.1, ORACLE_POINTS) {
        let w = model.solve_fom(&BurgersParams::new(b), None, 1e-12)?.state;
        let oracle = march(model.num_nodes(), lo, hi, b);
        let e = (w.vector() - &oracle).norm() / oracle.norm();
        worst = worst.max(e);
        rep.check(e < ORACLE_REL, format!("b={b}: relative error {e:e}"));
    }
    rep.note(format!("{ORACLE_POINTS} parameters, worst relative l2 {worst:.2e}"));
    rep.within(started, ORACLE_LIMIT);
    Ok(rep)
}

fn criterion_3() -> Res<Report> {
    let started = Instant::now();
    let mut rep = Report::default();
    let dir = tempfile::tempdir()?;
    let cfg = ExperimentConfig::default();
    let report = cmd_verify(&cfg, dir.path())?;

    let size = |mode, eps| report.row(Some(mode), Some(eps)).and_then(|r| r.mesh_size);
    let mut sizes = String::new();
    for (mode, targets) in [(TrainingMode::Residual, RES_TARGETS), (TrainingMode::Jacobian, JAC_TARGETS)] {
        for (eps, target) in targets {
            let got = size(mode, eps);
            let _ = write!(sizes, "{}{eps:e}={} ", &mode.as_str()[..3], got.map_or("-".into(), |n| n.to_string()));
            let lo = target as f64 * (1.0 - MESH_BAND);
            let hi = target as f64 * (1.0 + MESH_BAND);
            rep.check(
                got.is_some_and(|n| (n as f64) >= lo && (n as f64) <= hi),
                format!("{mode} eps={eps:e}: |E~|={got:?} outside [{lo}, {hi}]"),
            );
        }
    }
    rep.note(sizes.trim_end().to_string());
    for eps in [1e-4, 1e-6] {
        let (r, j) = (size(TrainingMode::Residual, eps), size(TrainingMode::Jacobian, eps));
        rep.check(
            matches!((r, j), (Some(r), Some(j)) if j < r),
            format!("eps={eps:e}: jacobian {j:?} not below residual {r:?}"),
        );
    }
    for mode in [TrainingMode::Residual, TrainingMode::Jacobian] {
        let (a, b) = (size(mode, 1e-4), size(mode, 1e-6));
        rep.check(
            matches!((a, b), (Some(a), Some(b)) if b > a),
            format!("{mode}: |E~| does not grow from 1e-4 ({a:?}) to 1e-6 ({b:?})"),
        );
    }

    match report.row(None, None) {
        Some(rom) => {
            rep.note(format!(
                "ROM state rel {:.2e}, functional {:.2e}",
                rom.state_error_rel, rom.functional_error
            ));
            rep.check(rom.state_error_rel < ROM_STATE_REL, format!("ROM state error {:e}", rom.state_error_rel));
            rep.check(
                rom.functional_error.abs() < ROM_FUNCTIONAL_ABS,
                format!("ROM functional error {:e}", rom.functional_error),
            );
        }
        None => rep.check(false, "no ROM row"),
    }

    let tightest = JAC_TARGETS.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    match report.row(Some(TrainingMode::Jacobian), Some(tightest)) {
        Some(row) => {
            rep.note(format!("jac {tightest:e} mean ROM-point error {:.2e}", row.mean_rom_point_error));
            rep.check(
                row.mean_rom_point_error <= HROM_ORDER_BAND * SAMPLING_TOL,
                format!("mean ROM-point error {:e}", row.mean_rom_point_error),
            );
        }
        None => rep.check(false, "no tightest Jacobian row"),
    }
    rep.within(started, TABLE_LIMIT);
    Ok(rep)
}

struct Runs {
    rom: SamplerState,
    hrom: SamplerState,
    hyper: SamplerState,
    rom_and_hyper_time: Duration,
}

fn adaptive(mode: SamplerMode) -> Res<(SamplerState, Duration)> {
    let cfg = ExperimentConfig {
        tol: SAMPLING_TOL,
        ..ExperimentConfig::default()
    };
    let t = Instant::now();
    let mut st = SamplerState::init(BurgersModel::new(cfg.grid()?), cfg.sampler_config(mode)?)?;
    st.run_adaptive()?;
    Ok((st, t.elapsed()))
}

fn runs() -> Res<Runs> {
    let (rom, t_rom) = adaptive(SamplerMode::Rom)?;
    let (hrom, _) = adaptive(SamplerMode::HromNoHyperDwr)?;
    let (hyper, t_hyper) = adaptive(SamplerMode::HromHyperDwr)?;
    Ok(Runs {
        rom,
        hrom,
        hyper,
        rom_and_hyper_time: t_rom + t_hyper,
    })
}

/// `J_FOM - J_*` at `b` on the run's final basis (and mesh, if any).
fn true_error(st: &SamplerState, b: f64) -> Res<f64> {
    let p = BurgersParams::new(b);
    let fom = st.model.solve_fom(&p, None, 1e-12)?.state;
    let seed = nearest_state(&st.snapshots, b);
    let sol = match &st.mesh {
        Some(m) => solve_rom_hyper(&st.model, &st.basis, m, &p, Some(seed), DEFAULT_ROM_TOL)?,
        None => solve_rom_exact(&st.model, &st.basis, &p, Some(seed), DEFAULT_ROM_TOL)?,
    };
    Ok(st.model.functional(&fom) - st.model.functional(&sol.w_tilde))
}

fn mean_point_error(st: &SamplerState) -> Res<f64> {
    let mut sum = 0.0;
    for p in &st.points {
        sum += true_error(st, p.record.mu[0])?.abs();
    }
    Ok(sum / st.points.len().max(1) as f64)
}

fn criterion_4(runs: &Runs) -> Res<Report> {
    let mut rep = Report::default();
    let (rom, hyper) = (&runs.rom, &runs.hyper);
    let n = rom.basis.dim();
    rep.check(
        (BASIS_WINDOW.0..=BASIS_WINDOW.1).contains(&n),
        format!("ROM basis dimension {n} outside {BASIS_WINDOW:?}"),
    );
    let mut worst = 0.0f64;
    for b in linspace(0.01, 0.1, LATTICE_POINTS) {
        let e = true_error(rom, b)?.abs();
        worst = worst.max(e);
        rep.check(e <= LATTICE_FACTOR * SAMPLING_TOL, format!("lattice b={b}: error {e:e}"));
    }
    rep.check(
        hyper.cycle >= rom.cycle,
        format!("hrom-hyperdwr took {} cycles, ROM {}", hyper.cycle, rom.cycle),
    );
    rep.note(format!(
        "ROM n={n} cycles={}, hyperdwr cycles={}, worst lattice error {worst:.2e}, {:.2}s",
        rom.cycle,
        hyper.cycle,
        runs.rom_and_hyper_time.as_secs_f64()
    ));
    rep.check(runs.rom_and_hyper_time < ADAPT_LIMIT, "adaptive runs exceed the time limit");
    Ok(rep)
}

fn criterion_5(runs: &Runs) -> Res<Report> {
    let mut rep = Report::default();
    let (mut counted, mut good) = (0usize, 0usize);
    for st in [&runs.rom, &runs.hrom, &runs.hyper] {
        for p in &st.points {
            let b = p.record.mu[0];
            let fom = st.model.solve_fom(&BurgersParams::new(b), None, 1e-12)?.state;
            let truth = st.model.functional(&fom) - st.model.functional(&p.coarse);
            if truth.abs() <= EFFECTIVITY_FLOOR {
                continue;
            }
            counted += 1;
            let ratio = p.record.eps_f / truth;
            if (1.0 / EFFECTIVITY_FACTOR..=EFFECTIVITY_FACTOR).contains(&ratio) {
                good += 1;
            }
        }
    }
    let share = good as f64 / counted.max(1) as f64;
    rep.note(format!("{good}/{counted} ROM points within a factor {EFFECTIVITY_FACTOR}"));
    rep.check(counted > 0, "no ROM point above the error floor");
    rep.check(share >= EFFECTIVITY_SHARE, format!("only {:.0}% within factor", 100.0 * share));
    Ok(rep)
}

/// Training data assembled outside the library: own layout, own test-basis
/// rows and targets. The projected snapshots sit in the basis span, so their
/// residuals are pure roundoff; the residual kernel and projection are shared
/// with the library so both sides see the same bits.
fn reassemble(st: &SamplerState, mode: TrainingMode) -> (DMatrix<f64>, DVector<f64>) {
    let grid = st.model.grid();
    let (dx, ne) = (grid.dx(), grid.num_entities());
    let v = st.basis.v();
    let n = v.ncols();
    let block = match mode {
        TrainingMode::Residual => n,
        TrainingMode::Jacobian => n * n,
    };
    let ns = st.snapshots.len();
    let mut c = DMatrix::zeros(ns * block, ne);
    let mut d = DVector::zeros(ns * block);
    for s in 0..ns {
        let p = BurgersParams::new(st.snapshots.params()[s][0]);
        let projected = st.basis.reconstruct(&st.basis.project(st.snapshots.state(s)));
        let w = projected.as_slice();
        let mut test = DMatrix::zeros(ne, n);
        let mut r = DVector::zeros(ne);
        for e in 0..ne {
            let j = e + 1;
            r[e] = st.model.element_residual(w, e, &p).unwrap_or(f64::NAN);
            let row = v.row(j) * (w[j] / dx) - v.row(j - 1) * (w[j - 1] / dx);
            test.set_row(e, &row);
        }
        for e in 0..ne {
            for i in 0..n {
                match mode {
                    TrainingMode::Residual => c[(s * block + i, e)] = test[(e, i)] * r[e],
                    TrainingMode::Jacobian => {
                        for k in 0..n {
                            c[(s * block + i * n + k, e)] = test[(e, k)] * test[(e, i)];
                        }
                    }
                }
            }
        }
        let target: Vec<f64> = match mode {
            TrainingMode::Residual => (test.transpose() * &r).iter().copied().collect(),
            TrainingMode::Jacobian => (test.transpose() * &test).iter().copied().collect(),
        };
        d.rows_mut(s * block, block).copy_from_slice(&target);
    }
    (c, d)
}

fn certify(rep: &mut Report, label: &str, mesh: &ReducedMesh, eps: f64, c: &DMatrix<f64>, d: &DVector<f64>) {
    let xi = mesh.dense_weights(c.ncols());
    let ratio = (c * &xi - d).norm() / d.norm();
    rep.check(mesh.weights().iter().all(|&x| x > 0.0), format!("{label}: non-positive weight"));
    rep.check(
        mesh.entities().windows(2).all(|w| w[0] < w[1]) && mesh.entities().iter().all(|&e| e < c.ncols()),
        format!("{label}: bad entity list"),
    );
    rep.check(ratio <= eps, format!("{label}: ratio {ratio:e} > {eps:e}"));
}

fn brute_force_nnls(c: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let n = c.ncols();
    let mut best = d.norm();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        let sub = c.select_columns(&cols);
        let Ok(x) = sub.clone().svd(true, true).solve(d, 1e-14) else {
            continue;
        };
        if x.iter().all(|&v| v > 0.0) {
            best = best.min((&sub * x - d).norm());
        }
    }
    best
}

fn criterion_6(runs: &Runs) -> Res<Report> {
    let mut rep = Report::default();
    let rom = &runs.rom;
    let all: Vec<usize> = (0..rom.snapshots.len()).collect();
    let mut certified = 0;
    for mode in [TrainingMode::Residual, TrainingMode::Jacobian] {
        let (c, d) = reassemble(rom, mode);
        let targets = match mode {
            TrainingMode::Residual => RES_TARGETS,
            TrainingMode::Jacobian => JAC_TARGETS,
        };
        for (eps, _) in targets {
            match find_weights(&rom.model, &rom.basis, &rom.snapshots, &all, mode, eps) {
                Ok(mesh) => {
                    certify(&mut rep, &format!("{mode} {eps:e}"), &mesh, eps, &c, &d);
                    certified += 1;
                }
                Err(e) => rep.note(format!("{mode} {eps:e} returned no mesh: {e}")),
            }
        }
    }
    for st in [&runs.hrom, &runs.hyper] {
        if let Some(mesh) = &st.mesh {
            let (c, d) = reassemble(st, st.config.training);
            certify(&mut rep, st.config.mode.as_str(), mesh, st.config.nnls_eps, &c, &d);
            certified += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for case in 0..BRUTE_CASES {
        let ne = 1 + case % 8;
        let m = 2 + rng.random_range(0..10);
        let c = DMatrix::from_fn(m, ne, |_, _| rng.random_range(-1.0..1.0));
        let d = if case % 3 == 0 {
            let x = DVector::from_fn(ne, |_, _| if rng.random_bool(0.5) { rng.random_range(0.0..2.0) } else { 0.0 });
            &c * x + DVector::from_fn(m, |_, _| 1e-3 * rng.random_range(-1.0..1.0))
        } else {
            DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))
        };
        if d.norm() == 0.0 {
            continue;
        }
        let best = brute_force_nnls(&c, &d);
        let eps = (best / d.norm() + 1e-10).min(1.0);
        match hrom::nnls_early_stop(&c, &d, eps, 10 * ne) {
            Ok(out) => {
                let gap = (out.residual_norm - best).abs();
                worst = worst.max(gap);
                rep.check(out.x.iter().all(|&x| x >= 0.0), format!("case {case}: negative weight"));
                rep.check(gap <= BRUTE_OBJECTIVE, format!("case {case}: objective gap {gap:e}"));
            }
            Err(e) => rep.check(false, format!("case {case}: {e}")),
        }
    }
    rep.note(format!(
        "{certified} meshes certified, {BRUTE_CASES} brute-force cases, worst objective gap {worst:.1e}"
    ));
    Ok(rep)
}

fn small(n_mesh: u64, nnl: u64, cycle: u64) -> CycleCostInputs {
    CycleCostInputs {
        n_full: 4,
        n_basis: 2,
        n_mesh,
        d_e: 1,
        d_e_plus: 2,
        nonlinear_iterations: nnl,
        n_params: 1,
        cycle,
        points_evaluated: 0,
    }
}

fn criterion_7(runs: &Runs) -> Res<Report> {
    let mut rep = Report::default();
    // N = 4, n = 2, n_e = 3, d_e = 1, d_e+ = 2, substituted by hand.
    let c = small(3, 0, 1);
    for (name, got, want) in [
        ("W_nonlin ROM", w_nonlin_rom(&c), 210),
        ("W_nonlin HROM", w_nonlin_hrom(&c), 93),
        ("W_DWR ROM", w_dwr_rom(&c), 231),
        ("W_DWR HROM", w_dwr_hrom(&c), 120),
        ("residual norm", w_residual_norm(&c), 11),
    ] {
        rep.check(got == want, format!("{name}: {got} != {want}"));
    }
    // Two cycles with 5 then 3 iterations: 5*210, then 3*210 + (1+1)*1*231.
    let l = ledger(CostModel::Rom, &[small(0, 5, 1), small(0, 3, 2)])?;
    let tot: Vec<(i128, i128)> = l.cycles.iter().map(|c| (c.w_tot, c.cumulative)).collect();
    rep.check(tot == vec![(1050, 1050), (1092, 2142)], format!("ROM ledger {tot:?}"));
    // Same for hyper-DWR: 5*93, then 3*93 + 2*120.
    let l = ledger(CostModel::HromHyperDwr, &[small(3, 5, 1), small(3, 3, 2)])?;
    let tot: Vec<(i128, i128)> = l.cycles.iter().map(|c| (c.w_tot, c.cumulative)).collect();
    rep.check(tot == vec![(465, 465), (519, 984)], format!("hyper-DWR ledger {tot:?}"));

    let w_rom = runs.rom.work_ledger()?.total();
    let w_hrom = runs.hrom.work_ledger()?.total();
    let w_hyper = runs.hyper.work_ledger()?.total();
    let e_rom = mean_point_error(&runs.rom)?;
    let e_hyper = mean_point_error(&runs.hyper)?;
    rep.note(format!(
        "W_tot rom={w_rom:.3e} hrom={w_hrom:.3e} hyperdwr={w_hyper:.3e}; mean ROM-point error rom={e_rom:.2e} hyperdwr={e_hyper:.2e}",
        w_rom = w_rom as f64,
        w_hrom = w_hrom as f64,
        w_hyper = w_hyper as f64
    ));
    rep.check(w_hyper < w_rom, "hyper-DWR work not below ROM work");
    let band = e_rom.max(e_hyper) / e_rom.min(e_hyper).max(f64::MIN_POSITIVE);
    rep.check(
        band <= MATCHED_ERROR_BAND,
        format!("mean ROM-point errors differ by a factor {band:.1}"),
    );
    Ok(rep)
}

fn criterion_8(runs: &Runs) -> Res<Report> {
    let mut rep = Report::default();
    let st = &runs.hyper;
    let Some(mesh) = &st.mesh else {
        rep.check(false, "hyper-DWR run has no mesh");
        return Ok(rep);
    };
    let (traced, trace) = st.model.traced();
    let in_mesh = |e: &usize| mesh.entities().binary_search(e).is_ok();
    for b in [0.013, 0.044, 0.0871] {
        let p = BurgersParams::new(b);
        let seed = nearest_state(&st.snapshots, b);
        trace.reset();
        let sol = solve_rom_hyper(&traced, &st.basis, mesh, &p, Some(seed), DEFAULT_ROM_TOL)?;
        let touched = trace.touched();
        rep.check(
            touched.iter().all(in_mesh),
            format!("b={b}: hyperreduced solve evaluated entities outside the mesh"),
        );
        rep.check(touched.len() == mesh.len(), format!("b={b}: {} of {} mesh entities evaluated", touched.len(), mesh.len()));

        trace.reset();
        epsilon_r_hyper(&traced, &st.basis, mesh, &sol.w_tilde, &p)?;
        rep.check(trace.touched().iter().all(in_mesh), format!("b={b}: hyperreduced eps_r left the mesh"));

        trace.reset();
        solve_rom_exact(&traced, &st.basis, &p, Some(seed), DEFAULT_ROM_TOL)?;
        rep.check(
            trace.touched().len() == traced.num_entities(),
            format!("b={b}: exact solve did not register every entity"),
        );
    }
    rep.note(format!("|E~|={} of {} entities", mesh.len(), st.model.num_entities()));
    Ok(rep)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        for i in 1..=8 {
            println!("criterion_{i}: test");
        }
        return ExitCode::SUCCESS;
    }

    let names = [
        "quadrature exactness",
        "FOM oracle equivalence",
        "verification table",
        "adaptive termination",
        "DWR effectivity",
        "NNLS certificate",
        "work-unit ordering",
        "element locality",
    ];
    let mut results: Vec<Res<Report>> = vec![criterion_1(), criterion_2(), criterion_3()];
    match runs() {
        Ok(r) => {
            results.push(criterion_4(&r));
            results.push(criterion_5(&r));
            results.push(criterion_6(&r));
            results.push(criterion_7(&r));
            results.push(criterion_8(&r));
        }
        Err(e) => {
            let msg = e.to_string();
            for _ in 4..=8 {
                results.push(Err(format!("adaptive runs failed: {msg}").into()));
            }
        }
    }

    let mut failed = 0;
    for (i, (name, res)) in names.iter().zip(results).enumerate() {
        let (verdict, detail) = match res {
            Ok(rep) if rep.failures.is_empty() => ("PASS", rep.notes.join("; ")),
            Ok(rep) => ("FAIL", format!("{} | {}", rep.failures.join("; "), rep.notes.join("; "))),
            Err(e) => ("FAIL", e.to_string()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {} ({name}): {verdict} - {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", names.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
