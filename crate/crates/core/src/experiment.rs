//! Command drivers: fixed-basis hyperreduction study, adaptive and greedy
//! sampling runs, and work-unit post-processing.
//!
//! Every CSV is written with a header and re-read through a schema check.
//! Wall-clock timings go only to `run_info.txt` so that reruns of the same
//! configuration produce byte-identical CSVs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::ecsw::{find_weights, ReducedMesh, TrainingMode};
use crate::error::{Result, RomError};
use crate::fom::{burgers_params, BurgersModel, StateVector};
use crate::lspg::{solve_rom_exact, solve_rom_hyper};
use crate::pod::{ParamPoint, PodBasis, SnapshotSet};
use crate::rbf::ParameterDomain;
use crate::sampler::{nearest, SamplerMode, SamplerState};
use crate::work_units::{ledger, CostModel, CycleCostInputs, WorkLedger};

/// Row-status flag for verification results.
pub const DEGRADATION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColKind {
    Num,
    Text,
}

/// Expected CSV layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub columns: Vec<(String, ColKind)>,
}

impl CsvSchema {
    pub fn new(cols: &[(&str, ColKind)]) -> Self {
        Self {
            columns: cols.iter().map(|(n, k)| (n.to_string(), *k)).collect(),
        }
    }

    pub fn numeric(names: &[String]) -> Self {
        Self {
            columns: names.iter().map(|n| (n.clone(), ColKind::Num)).collect(),
        }
    }

    fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Re-reads `path` and checks the header, field counts and numeric columns.
/// Returns the number of data rows.
pub fn check_csv(path: &Path, schema: &CsvSchema) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.iter().map(String::as_str).ne(schema.header()) {
        return Err(RomError::Parse(format!(
            "{}: header {:?}, expected {:?}",
            path.display(),
            header,
            schema.header()
        )));
    }
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for ((name, kind), field) in schema.columns.iter().zip(rec.iter()) {
            let bad = match kind {
                ColKind::Num => field.parse::<f64>().is_err(),
                ColKind::Text => field.is_empty(),
            };
            if bad {
                return Err(RomError::Parse(format!(
                    "{}: row {} column {name}: bad value {field:?}",
                    path.display(),
                    i + 1
                )));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

fn write_csv(path: &Path, schema: &CsvSchema, rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(schema.header())?;
    for r in rows {
        wtr.write_record(r)?;
    }
    wtr.flush()?;
    drop(wtr);
    let n = check_csv(path, schema)?;
    if n != rows.len() {
        return Err(RomError::Parse(format!("{}: wrote {} rows, read {n}", path.display(), rows.len())));
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn param_names(dims: usize) -> Vec<&'static str> {
    ["b", "a"][..dims].to_vec()
}

fn schema_with_params(dims: usize, before: &[(&str, ColKind)], after: &[(&str, ColKind)]) -> CsvSchema {
    let mut cols: Vec<(&str, ColKind)> = before.to_vec();
    cols.extend(param_names(dims).into_iter().map(|p| (p, ColKind::Num)));
    cols.extend_from_slice(after);
    CsvSchema::new(&cols)
}

/// Uniform validation lattice (`lattice` points per dimension), optionally
/// with interior points jittered by up to a quarter spacing.
pub fn validation_lattice(cfg: &ExperimentConfig) -> Result<Vec<ParamPoint>> {
    let domain = cfg.parameter_domain()?;
    let m = cfg.lattice;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut axis = |d: usize| -> Vec<f64> {
        let h = 1.0 / (m - 1) as f64;
        (0..m)
            .map(|i| {
                let mut u = i as f64 * h;
                if cfg.jitter && i > 0 && i + 1 < m {
                    u += rng.random_range(-0.25 * h..0.25 * h);
                }
                domain.lo()[d] + u * (domain.hi()[d] - domain.lo()[d])
            })
            .collect()
    };
    Ok(match domain.dims() {
        1 => axis(0).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let (b, a) = (axis(0), axis(1));
            b.iter().flat_map(|&x| a.iter().map(move |&y| vec![x, y])).collect()
        }
    })
}

fn fom_functionals(model: &BurgersModel, mus: &[ParamPoint], tol: f64) -> Result<Vec<(StateVector, f64)>> {
    mus.par_iter()
        .map(|mu| {
            let w = model.solve_fom(&burgers_params(mu), None, tol)?.state;
            let j = model.functional(&w);
            Ok((w, j))
        })
        .collect()
}

/// Reduced model used for evaluation: basis, optional mesh, snapshot seeds.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub model: &'a BurgersModel,
    pub basis: &'a PodBasis,
    pub mesh: Option<&'a ReducedMesh>,
    pub snapshots: &'a SnapshotSet,
    pub domain: &'a ParameterDomain,
    pub rom_tol: f64,
}

impl Evaluator<'_> {
    pub fn solve(&self, mu: &[f64]) -> Result<StateVector> {
        let seed = self.snapshots.state(nearest(self.domain, self.snapshots.params(), mu));
        let params = burgers_params(mu);
        let sol = match self.mesh {
            Some(m) => solve_rom_hyper(self.model, self.basis, m, &params, Some(seed), self.rom_tol)?,
            None => solve_rom_exact(self.model, self.basis, &params, Some(seed), self.rom_tol)?,
        };
        Ok(sol.w_tilde)
    }

    /// Signed `J_FOM - J_*` at each point, given the full-order functionals.
    pub fn errors(&self, mus: &[ParamPoint], fom: &[f64]) -> Result<Vec<f64>> {
        mus.par_iter()
            .zip(fom)
            .map(|(mu, jf)| Ok(jf - self.model.functional(&self.solve(mu)?)))
            .collect()
    }
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RomError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Non-deterministic metadata: timestamps and wall-clock timings.
fn write_run_info(dir: &Path, command: &str, started: Instant, extra: &[(String, String)]) -> Result<()> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut s = format!(
        "command = {command}\nversion = {}\nunix_time = {stamp}\nwall_seconds = {:.3}\nthreads = {}\n",
        env!("CARGO_PKG_VERSION"),
        started.elapsed().as_secs_f64(),
        rayon::current_num_threads()
    );
    for (k, v) in extra {
        s += &format!("{k} = {v}\n");
    }
    write_text(&dir.join("run_info.txt"), &s)
}

/// One model row of the verification study.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub model: String,
    pub training: Option<TrainingMode>,
    pub eps: Option<f64>,
    pub mesh_size: Option<usize>,
    pub achieved_ratio: Option<f64>,
    /// `||w_* - w_FOM||_2` at the test point.
    pub state_error: f64,
    /// `state_error / ||w_FOM||_2`.
    pub state_error_rel: f64,
    /// `J_* - J_FOM` at the test point.
    pub functional_error: f64,
    /// Mean `|J_FOM - J_*|` over the sampling run's final ROM points.
    pub mean_rom_point_error: f64,
    pub lattice_max_error: f64,
    pub status: &'static str,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub basis_dim: usize,
    pub snapshots: usize,
    pub rows: Vec<VerifyRow>,
    pub csv: PathBuf,
}

impl VerifyReport {
    pub fn row(&self, training: Option<TrainingMode>, eps: Option<f64>) -> Option<&VerifyRow> {
        self.rows.iter().find(|r| r.training == training && r.eps == eps)
    }
}

fn verify_schema() -> CsvSchema {
    use ColKind::*;
    CsvSchema::new(&[
        ("model", Text),
        ("training", Text),
        ("eps", Num),
        ("mesh_size", Num),
        ("achieved_ratio", Num),
        ("state_error", Num),
        ("state_error_rel", Num),
        ("functional_error", Num),
        ("mean_rom_point_error", Num),
        ("lattice_max_error", Num),
        ("status", Text),
    ])
}

/// Fixed-basis hyperreduction study at `verify.b_test`.
///
/// Builds the basis with an exact-ROM adaptive run, trains both ECSW variants
/// at each tolerance on all snapshots, and compares every model against the
/// full-order solution. Rows whose solves or training fail, or whose mean
/// ROM-point error exceeds `DEGRADATION_FACTOR * tol`, are flagged rather
/// than aborting the study.
pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> Result<VerifyReport> {
    let started = Instant::now();
    prepare_dir(out)?;
    let model = BurgersModel::new(cfg.grid()?);
    let mut st = SamplerState::init(model.clone(), cfg.sampler_config(SamplerMode::Rom)?)?;
    st.run_adaptive()?;
    let domain = cfg.parameter_domain()?;
    let test_mu = cfg.test_point(cfg.b_test);
    let fom_test = model.solve_fom(&burgers_params(&test_mu), None, cfg.fom_tol)?.state;
    let j_test = model.functional(&fom_test);
    let rom_pts: Vec<ParamPoint> = st.points.iter().map(|p| p.record.mu.clone()).collect();
    let fom_pts: Vec<f64> = fom_functionals(&model, &rom_pts, cfg.fom_tol)?.into_iter().map(|x| x.1).collect();
    let lattice = validation_lattice(cfg)?;
    let fom_lat: Vec<f64> = fom_functionals(&model, &lattice, cfg.fom_tol)?.into_iter().map(|x| x.1).collect();
    let all: Vec<usize> = (0..st.snapshots.len()).collect();

    let evaluate = |mesh: Option<&ReducedMesh>| -> Result<(f64, f64, f64, f64, f64)> {
        let ev = Evaluator {
            model: &model,
            basis: &st.basis,
            mesh,
            snapshots: &st.snapshots,
            domain: &domain,
            rom_tol: cfg.rom_tol,
        };
        let w = ev.solve(&test_mu)?;
        let state = (w.vector() - fom_test.vector()).norm();
        let func = model.functional(&w) - j_test;
        let pts = ev.errors(&rom_pts, &fom_pts)?;
        let lat = ev.errors(&lattice, &fom_lat)?;
        Ok((state, state / fom_test.vector().norm(), func, mean_abs(&pts), max_abs(&lat)))
    };
    let status_of = |mean: f64| if mean > DEGRADATION_FACTOR * cfg.tol { "degraded" } else { "ok" };

    let mut rows = Vec::new();
    let (s, sr, f, m, l) = evaluate(None)?;
    rows.push(VerifyRow {
        model: "ROM".into(),
        training: None,
        eps: None,
        mesh_size: None,
        achieved_ratio: None,
        state_error: s,
        state_error_rel: sr,
        functional_error: f,
        mean_rom_point_error: m,
        lattice_max_error: l,
        status: status_of(m),
    });
    let plan = cfg
        .eps_res
        .iter()
        .map(|&e| (TrainingMode::Residual, e))
        .chain(cfg.eps_jac.iter().map(|&e| (TrainingMode::Jacobian, e)));
    for (mode, eps) in plan {
        let name = format!(
            "{}. eps={eps:e}",
            match mode {
                TrainingMode::Residual => "Res",
                TrainingMode::Jacobian => "Jac",
            }
        );
        let nan_row = |status| VerifyRow {
            model: name.clone(),
            training: Some(mode),
            eps: Some(eps),
            mesh_size: None,
            achieved_ratio: None,
            state_error: f64::NAN,
            state_error_rel: f64::NAN,
            functional_error: f64::NAN,
            mean_rom_point_error: f64::NAN,
            lattice_max_error: f64::NAN,
            status,
        };
        let mesh = match find_weights(&model, &st.basis, &st.snapshots, &all, mode, eps) {
            Ok(m) => m,
            Err(RomError::NnlsStalled { best_ratio, .. }) => {
                log::warn!("{name}: NNLS stalled at ratio {best_ratio:e}");
                rows.push(nan_row("nnls_stalled"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut row = match evaluate(Some(&mesh)) {
            Ok((s, sr, f, m, l)) => VerifyRow {
                state_error: s,
                state_error_rel: sr,
                functional_error: f,
                mean_rom_point_error: m,
                lattice_max_error: l,
                status: status_of(m),
                ..nan_row("ok")
            },
            Err(e @ (RomError::NonConvergence { .. } | RomError::Singular { .. })) => {
                log::warn!("{name}: {e}");
                nan_row("solve_failed")
            }
            Err(e) => return Err(e),
        };
        row.mesh_size = Some(mesh.len());
        row.achieved_ratio = Some(mesh.achieved_ratio());
        rows.push(row);
    }

    let opt = |x: Option<f64>| x.map_or("nan".to_string(), num);
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.training.map_or("none".into(), |t| t.as_str().to_string()),
                opt(r.eps),
                r.mesh_size.map_or("nan".to_string(), |n| n.to_string()),
                opt(r.achieved_ratio),
                num(r.state_error),
                num(r.state_error_rel),
                num(r.functional_error),
                num(r.mean_rom_point_error),
                num(r.lattice_max_error),
                r.status.to_string(),
            ]
        })
        .collect();
    let csv_path = out.join("verify.csv");
    write_csv(&csv_path, &verify_schema(), &csv_rows)?;

    let mut summary = format!(
        "basis_dim = {}\nsnapshots = {}\nb_test = {}\nJ_fom = {}\nrom_points = {}\nlattice_points = {}\n",
        st.basis.dim(),
        st.snapshots.len(),
        cfg.b_test,
        num(j_test),
        rom_pts.len(),
        lattice.len()
    );
    for r in &rows {
        if r.status != "ok" {
            summary += &format!("FLAG {}: {}\n", r.model, r.status);
        }
    }
    let flagged = rows.iter().filter(|r| r.status != "ok").count();
    summary += &format!("flagged = {flagged}\n");
    write_text(&out.join("verify_summary.txt"), &summary)?;
    write_run_info(out, "verify", started, &[])?;
    Ok(VerifyReport {
        basis_dim: st.basis.dim(),
        snapshots: st.snapshots.len(),
        rows,
        csv: csv_path,
    })
}

fn cost_schema() -> CsvSchema {
    use ColKind::*;
    CsvSchema::new(&[
        ("mode", Text),
        ("cycle", Num),
        ("n_full", Num),
        ("n_basis", Num),
        ("n_mesh", Num),
        ("d_e", Num),
        ("d_e_plus", Num),
        ("nonlinear_iterations", Num),
        ("n_params", Num),
        ("points_evaluated", Num),
    ])
}

fn work_schema() -> CsvSchema {
    CsvSchema::numeric(
        &["cycle", "W_allROM", "W_allDWR", "W_tot", "cumulative"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    )
}

fn write_ledger(path: &Path, l: &WorkLedger) -> Result<()> {
    l.write_csv(BufWriter::new(fs::File::create(path)?))?;
    check_csv(path, &work_schema())?;
    Ok(())
}

/// Summary of a sampling run written to disk.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub mode: SamplerMode,
    pub cycles: usize,
    pub basis_dim: usize,
    pub mesh_size: usize,
    pub total_work: i128,
    pub mean_rom_point_error: f64,
    pub max_lattice_error: f64,
    /// Set when the cycle cap was reached before the tolerance.
    pub budget_exceeded: bool,
}

/// Writes the artefacts shared by adaptive and greedy runs.
fn write_run(cfg: &ExperimentConfig, st: &SamplerState, out: &Path) -> Result<(f64, f64)> {
    let dims = st.config.domain.dims();
    let mu_cols = |mu: &[f64]| mu.iter().map(|&x| num(x)).collect::<Vec<_>>();
    use ColKind::*;

    write_text(&out.join("config.txt"), &cfg.to_text())?;

    let cycles_schema = CsvSchema::new(&[
        ("cycle", Num),
        ("n_basis", Num),
        ("mesh_size", Num),
        ("snapshots", Num),
        ("rom_points", Num),
        ("points_solved", Num),
        ("nonlinear_iterations", Num),
        ("max_indicator", Num),
        ("mean_indicator", Num),
        ("rbf_max", Num),
    ]);
    let mut snaps_so_far = st.initial_snapshots;
    let rows: Vec<Vec<String>> = st
        .history
        .iter()
        .map(|h| {
            if h.snapshot_added.is_some() {
                snaps_so_far += 1;
            }
            vec![
                h.cycle.to_string(),
                h.n_basis.to_string(),
                h.mesh_size.to_string(),
                snaps_so_far.to_string(),
                h.rom_points.to_string(),
                h.points_solved.to_string(),
                h.nonlinear_iterations.to_string(),
                num(h.max_error),
                num(h.mean_error),
                num(h.rbf_max),
            ]
        })
        .collect();
    write_csv(&out.join("cycles.csv"), &cycles_schema, &rows)?;

    let snap_schema = schema_with_params(dims, &[("index", Num)], &[("cycle_added", Num)]);
    let mut added = st.history.iter().filter_map(|h| h.snapshot_added.as_ref().map(|_| h.cycle));
    let rows: Vec<Vec<String>> = st
        .snapshots
        .params()
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let cyc = if i < st.initial_snapshots { 1 } else { added.next().unwrap_or(0) };
            let mut r = vec![i.to_string()];
            r.extend(mu_cols(mu));
            r.push(cyc.to_string());
            r
        })
        .collect();
    write_csv(&out.join("snapshots.csv"), &snap_schema, &rows)?;

    // true errors of the final model at the ROM points and the validation lattice
    let ev = Evaluator {
        model: &st.model,
        basis: &st.basis,
        mesh: st.mesh.as_ref(),
        snapshots: &st.snapshots,
        domain: &st.config.domain,
        rom_tol: st.config.rom_tol,
    };
    let pts: Vec<ParamPoint> = st.points.iter().map(|p| p.record.mu.clone()).collect();
    let fom_pts: Vec<f64> = fom_functionals(&st.model, &pts, st.config.fom_tol)?.into_iter().map(|x| x.1).collect();
    let err_pts = ev.errors(&pts, &fom_pts)?;
    let pt_schema = schema_with_params(
        dims,
        &[],
        &[
            ("eps_f", Num),
            ("eps_r", Num),
            ("estimate", Num),
            ("residual_norm", Num),
            ("true_error", Num),
            ("created_cycle", Num),
            ("updated_cycle", Num),
        ],
    );
    let rows: Vec<Vec<String>> = st
        .points
        .iter()
        .zip(&err_pts)
        .map(|(p, e)| {
            let mut r = mu_cols(&p.record.mu);
            r.extend([
                num(p.record.eps_f),
                num(p.record.eps_r),
                num(p.record.total()),
                num(p.residual_norm),
                num(*e),
                p.record.created_cycle.to_string(),
                p.record.updated_cycle.to_string(),
            ]);
            r
        })
        .collect();
    write_csv(&out.join("rom_points.csv"), &pt_schema, &rows)?;

    let lattice = validation_lattice(cfg)?;
    let fom_lat: Vec<f64> = fom_functionals(&st.model, &lattice, st.config.fom_tol)?.into_iter().map(|x| x.1).collect();
    let err_lat = ev.errors(&lattice, &fom_lat)?;
    let map_schema = schema_with_params(dims, &[], &[("J_fom", Num), ("true_error", Num), ("rbf_estimate", Num)]);
    let rows: Vec<Vec<String>> = lattice
        .iter()
        .zip(fom_lat.iter().zip(&err_lat))
        .map(|(mu, (j, e))| {
            let mut r = mu_cols(mu);
            r.extend([num(*j), num(*e), num(st.rbf.as_ref().map_or(f64::NAN, |m| m.eval(mu)))]);
            r
        })
        .collect();
    write_csv(&out.join("error_map.csv"), &map_schema, &rows)?;

    if let Some(mesh) = &st.mesh {
        mesh.write_csv(BufWriter::new(fs::File::create(out.join("mesh.csv"))?))?;
        check_csv(&out.join("mesh.csv"), &CsvSchema::new(&[("entity_id", Num), ("weight", Num)]))?;
    }
    st.basis.write_matrix(BufWriter::new(fs::File::create(out.join("basis.txt"))?))?;
    st.basis.write_metadata(BufWriter::new(fs::File::create(out.join("basis_meta.txt"))?))?;

    let mode = st.config.mode.as_str();
    let rows: Vec<Vec<String>> = st
        .cost_inputs()
        .iter()
        .map(|c| {
            vec![
                mode.to_string(),
                c.cycle.to_string(),
                c.n_full.to_string(),
                c.n_basis.to_string(),
                c.n_mesh.to_string(),
                c.d_e.to_string(),
                c.d_e_plus.to_string(),
                c.nonlinear_iterations.to_string(),
                c.n_params.to_string(),
                c.points_evaluated.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("cost_inputs.csv"), &cost_schema(), &rows)?;
    write_ledger(&out.join("work_units.csv"), &st.work_ledger()?)?;
    Ok((mean_abs(&err_pts), max_abs(&err_lat)))
}

fn timing_info(st: &SamplerState) -> Vec<(String, String)> {
    let mut v = vec![
        ("mode".to_string(), st.config.mode.to_string()),
        ("fom_solves".to_string(), st.counts.fom_solves.to_string()),
        ("exact_rom_solves".to_string(), st.counts.exact_solves.to_string()),
        ("hyper_rom_solves".to_string(), st.counts.hyper_solves.to_string()),
        ("eps_r_exact".to_string(), st.counts.eps_r_exact.to_string()),
        ("eps_r_hyper".to_string(), st.counts.eps_r_hyper.to_string()),
        ("mesh_trainings".to_string(), st.counts.mesh_trainings.to_string()),
    ];
    for h in &st.history {
        v.push((format!("cycle_{}_seconds", h.cycle), format!("{:.4}", h.wall_seconds)));
    }
    v
}

fn summarize(st: &SamplerState, out: &Path, errs: (f64, f64), budget_exceeded: bool) -> Result<RunSummary> {
    Ok(RunSummary {
        dir: out.to_path_buf(),
        mode: st.config.mode,
        cycles: st.cycle,
        basis_dim: st.basis.dim(),
        mesh_size: st.mesh.as_ref().map_or(0, |m| m.len()),
        total_work: st.work_ledger()?.total(),
        mean_rom_point_error: errs.0,
        max_lattice_error: errs.1,
        budget_exceeded,
    })
}

/// Adaptive sampling run in `mode`, with all artefacts written to `out`.
///
/// Artefacts are written even when the cycle cap is hit; the summary then
/// has `budget_exceeded` set.
pub fn cmd_adapt(cfg: &ExperimentConfig, mode: SamplerMode, out: &Path) -> Result<RunSummary> {
    if mode == SamplerMode::Greedy {
        return Err(RomError::Config("adapt needs a DWR mode; use the greedy command".into()));
    }
    let started = Instant::now();
    prepare_dir(out)?;
    let model = BurgersModel::new(cfg.grid()?);
    let mut st = SamplerState::init(model, cfg.sampler_config(mode)?)?;
    let exceeded = match st.run_adaptive() {
        Ok(()) => false,
        Err(RomError::BudgetExceeded { cycles, max_error }) => {
            log::warn!("cycle cap reached after {cycles} cycles with estimated error {max_error:e}");
            true
        }
        Err(e) => return Err(e),
    };
    let errs = write_run(cfg, &st, out)?;
    let mut info = timing_info(&st);
    info.push(("budget_exceeded".into(), exceeded.to_string()));
    write_run_info(out, "adapt", started, &info)?;
    summarize(&st, out, errs, exceeded)
}

/// Greedy residual-norm baseline at a matched work budget.
///
/// Without `greedy.work_budget` the budget is the total of an adaptive run in
/// `reference` mode, written to `out/reference`.
pub fn cmd_greedy(cfg: &ExperimentConfig, reference: SamplerMode, out: &Path) -> Result<(RunSummary, f64)> {
    let started = Instant::now();
    prepare_dir(out)?;
    let budget = match cfg.work_budget {
        Some(b) => b,
        None => {
            let reference = if reference == SamplerMode::Greedy { SamplerMode::Rom } else { reference };
            let r = cmd_adapt(cfg, reference, &out.join("reference"))?;
            r.total_work as f64
        }
    };
    let model = BurgersModel::new(cfg.grid()?);
    let probes: Vec<ParamPoint> = cfg.probes.iter().map(|&b| cfg.test_point(b)).collect();
    let domain = cfg.parameter_domain()?;
    if let Some(p) = probes.iter().find(|p| !domain.contains(p)) {
        return Err(RomError::Config(format!("greedy probe {p:?} outside the parameter domain")));
    }
    let fom_probe: Vec<f64> = fom_functionals(&model, &probes, cfg.fom_tol)?.into_iter().map(|x| x.1).collect();
    let mut st = SamplerState::init(model, cfg.sampler_config(SamplerMode::Greedy)?)?;
    let mut tracking: Vec<Vec<String>> = Vec::new();
    st.run_greedy(budget, |s| {
        let ev = Evaluator {
            model: &s.model,
            basis: &s.basis,
            mesh: None,
            snapshots: &s.snapshots,
            domain: &s.config.domain,
            rom_tol: s.config.rom_tol,
        };
        let errs = ev.errors(&probes, &fom_probe)?;
        let cum = s.work_ledger()?.total();
        for ((mu, jf), e) in probes.iter().zip(&fom_probe).zip(errs) {
            let mut r = vec![s.cycle.to_string(), cum.to_string()];
            r.extend(mu.iter().map(|&x| num(x)));
            r.extend([num(*jf), num(jf - e), num(e)]);
            tracking.push(r);
        }
        Ok(())
    })?;
    // drop rows of a cycle the budget rule rolled back
    tracking.retain(|r| r[0].parse::<usize>().is_ok_and(|c| c <= st.cycle));
    let dims = domain.dims();
    let schema = schema_with_params(
        dims,
        &[("cycle", ColKind::Num), ("cumulative_work", ColKind::Num)],
        &[("J_fom", ColKind::Num), ("J_rom", ColKind::Num), ("error", ColKind::Num)],
    );
    write_csv(&out.join("functional_tracking.csv"), &schema, &tracking)?;
    let errs = write_run(cfg, &st, out)?;
    let mut info = timing_info(&st);
    info.push(("work_budget".into(), num(budget)));
    write_run_info(out, "greedy", started, &info)?;
    Ok((summarize(&st, out, errs, false)?, budget))
}

/// Reads `cost_inputs.csv` from a run directory.
pub fn read_cost_inputs(dir: &Path) -> Result<(CostModel, Vec<CycleCostInputs>)> {
    let path = dir.join("cost_inputs.csv");
    check_csv(&path, &cost_schema())?;
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut model = None;
    let mut v = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mode: SamplerMode = rec[0].parse()?;
        if model.is_some_and(|m| m != mode.cost_model()) {
            return Err(RomError::Parse(format!("{}: mixed modes", path.display())));
        }
        model = Some(mode.cost_model());
        let f = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| RomError::Parse(format!("{}: bad integer {:?}", path.display(), &rec[i])))
        };
        v.push(CycleCostInputs {
            cycle: f(1)?,
            n_full: f(2)?,
            n_basis: f(3)?,
            n_mesh: f(4)?,
            d_e: f(5)?,
            d_e_plus: f(6)?,
            nonlinear_iterations: f(7)?,
            n_params: f(8)?,
            points_evaluated: f(9)?,
        });
    }
    let model = model.ok_or_else(|| RomError::Parse(format!("{}: no cycles", path.display())))?;
    Ok((model, v))
}

/// Rebuilds `work_units.csv` for a run directory from its cost inputs.
pub fn cmd_work(dir: &Path) -> Result<WorkLedger> {
    let (model, inputs) = read_cost_inputs(dir)?;
    let l = ledger(model, &inputs)?;
    write_ledger(&dir.join("work_units.csv"), &l)?;
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_and_jitter() {
        let mut cfg = ExperimentConfig::default();
        let l = validation_lattice(&cfg).unwrap();
        assert_eq!(l.len(), 20);
        assert_eq!(l[0], vec![0.01]);
        assert!((l[19][0] - 0.1).abs() < 1e-15);
        cfg.jitter = true;
        cfg.seed = 7;
        let j = validation_lattice(&cfg).unwrap();
        assert_eq!(j, validation_lattice(&cfg).unwrap());
        assert_eq!(j[0], l[0]);
        assert!(j.iter().zip(&l).skip(1).take(18).any(|(a, b)| a != b));
        let h = 0.09 / 19.0;
        assert!(j.iter().zip(&l).all(|(a, b)| (a[0] - b[0]).abs() <= 0.25 * h + 1e-15));
        cfg.a_range = Some((0.5, 1.5));
        cfg.lattice = 4;
        assert_eq!(validation_lattice(&cfg).unwrap().len(), 16);
    }

    #[test]
    fn schema_check_catches_problems() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let s = CsvSchema::new(&[("name", ColKind::Text), ("v", ColKind::Num)]);
        write_csv(&p, &s, &[vec!["a".into(), "1e-3".into()]]).unwrap();
        fs::write(&p, "name,v\na,oops\n").unwrap();
        assert!(check_csv(&p, &s).is_err());
        fs::write(&p, "name,w\na,1\n").unwrap();
        assert!(check_csv(&p, &s).is_err());
        fs::write(&p, "name,v\na,1,2\n").unwrap();
        assert!(check_csv(&p, &s).is_err());
    }

    #[test]
    fn adapt_rejects_greedy_mode() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::default();
        assert!(matches!(
            cmd_adapt(&cfg, SamplerMode::Greedy, dir.path()),
            Err(RomError::Config(_))
        ));
    }
}
