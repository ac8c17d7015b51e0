//! Goal-oriented adaptive snapshot selection.
//!
//! Snapshots start on a uniform grid with ROM probing points between them.
//! Each cycle an RBF of the estimated functional error (zero at snapshots)
//! picks the next snapshot at its maximum; the basis is rebuilt, the reduced
//! mesh retrained (hyperreduced modes), coarse-to-fine estimates refreshed at
//! existing points, and new probing points added around the new snapshot.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;

use crate::dwr::{epsilon_f, epsilon_r_exact, epsilon_r_hyper, ErrorRecord};
use crate::ecsw::{find_weights, ReducedMesh, TrainingMode};
use crate::error::{Result, RomError};
use crate::fom::{burgers_params, BurgersModel, StateVector, DEFAULT_FOM_TOL};
use crate::lspg::{solve_rom_exact, solve_rom_hyper, RomSolution, DEFAULT_ROM_TOL};
use crate::pod::{build_basis, ParamPoint, PodBasis, SnapshotSet};
use crate::rbf::{rbf_argmax, rbf_fit, ParameterDomain, RbfModel};
use crate::work_units::{ledger, CostModel, CycleCostInputs, WorkLedger};

pub const DEFAULT_MAX_CYCLES: usize = 100;
/// Candidate snapshots closer than this fraction of the domain span to an
/// existing snapshot are skipped.
pub const SNAPSHOT_EXCLUSION: f64 = 1e-3;
/// New probing points within this fraction of the span of an existing point are dropped.
pub const POINT_COINCIDENCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerMode {
    /// Exact LSPG solves, exact coarse-to-fine DWR.
    Rom,
    /// Hyperreduced solves, exact coarse-to-fine DWR.
    HromNoHyperDwr,
    /// Hyperreduced solves and hyperreduced DWR.
    HromHyperDwr,
    /// Exact solves, residual-norm indicator.
    Greedy,
}

impl SamplerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerMode::Rom => "rom",
            SamplerMode::HromNoHyperDwr => "hrom",
            SamplerMode::HromHyperDwr => "hrom-hyperdwr",
            SamplerMode::Greedy => "greedy",
        }
    }

    pub fn is_hyperreduced(&self) -> bool {
        matches!(self, SamplerMode::HromNoHyperDwr | SamplerMode::HromHyperDwr)
    }

    pub fn cost_model(&self) -> CostModel {
        match self {
            SamplerMode::Rom => CostModel::Rom,
            SamplerMode::HromNoHyperDwr => CostModel::HromNoHyperDwr,
            SamplerMode::HromHyperDwr => CostModel::HromHyperDwr,
            SamplerMode::Greedy => CostModel::Greedy,
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SamplerMode {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rom" => Ok(SamplerMode::Rom),
            "hrom" | "hrom-no-hyperdwr" => Ok(SamplerMode::HromNoHyperDwr),
            "hrom-hyperdwr" => Ok(SamplerMode::HromHyperDwr),
            "greedy" => Ok(SamplerMode::Greedy),
            other => Err(RomError::Config(format!("unknown sampler mode {other:?}"))),
        }
    }
}

/// Snapshots used to train the reduced mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetPolicy {
    All,
    InitialGrid,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub domain: ParameterDomain,
    /// Initial snapshots per parameter dimension.
    pub k_initial: usize,
    pub mode: SamplerMode,
    pub tol: f64,
    pub nnls_eps: f64,
    pub training: TrainingMode,
    pub subset: SubsetPolicy,
    pub fom_tol: f64,
    pub rom_tol: f64,
    /// Cap on sampling cycles, counting initialisation as cycle 1.
    pub max_cycles: usize,
}

impl SamplerConfig {
    /// One-parameter setup: `b` in `[0.01, 0.1]`, three initial snapshots.
    pub fn one_parameter(mode: SamplerMode, tol: f64) -> Self {
        Self {
            domain: ParameterDomain::interval(0.01, 0.1).expect("valid interval"),
            k_initial: 3,
            mode,
            tol,
            nnls_eps: 1e-6,
            training: TrainingMode::Jacobian,
            subset: SubsetPolicy::All,
            fom_tol: DEFAULT_FOM_TOL,
            rom_tol: DEFAULT_ROM_TOL,
            max_cycles: DEFAULT_MAX_CYCLES,
        }
    }
}

/// ROM probing point with its coarse solution and error record.
#[derive(Debug, Clone)]
pub struct RomPoint {
    pub record: ErrorRecord,
    /// Reduced solution on the basis current when the point was last solved.
    pub coarse: StateVector,
    /// Residual norm `||R(w~)||` (greedy indicator).
    pub residual_norm: f64,
}

/// Counts of the expensive operations, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub exact_solves: usize,
    pub hyper_solves: usize,
    pub eps_r_exact: usize,
    pub eps_r_hyper: usize,
    pub mesh_trainings: usize,
    pub fom_solves: usize,
}

/// Per-cycle record; cycle 1 is the initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    pub cycle: usize,
    pub snapshot_added: Option<ParamPoint>,
    pub n_basis: usize,
    pub mesh_size: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub nonlinear_iterations: usize,
    pub rom_points: usize,
    pub points_solved: usize,
    pub rbf_max: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SamplerState {
    pub config: SamplerConfig,
    pub model: BurgersModel,
    pub snapshots: SnapshotSet,
    pub initial_snapshots: usize,
    pub points: Vec<RomPoint>,
    pub basis: PodBasis,
    pub mesh: Option<ReducedMesh>,
    pub cycle: usize,
    pub history: Vec<CycleStats>,
    pub counts: CallCounts,
    pub mu_max: ParamPoint,
    pub eps_max: f64,
    pub rbf: Option<RbfModel>,
}

/// Uniform initial snapshot grid (endpoints included).
pub fn initial_snapshot_grid(domain: &ParameterDomain, k: usize) -> Vec<ParamPoint> {
    let axis = |d: usize| -> Vec<f64> {
        (0..k)
            .map(|i| domain.lo()[d] + (domain.hi()[d] - domain.lo()[d]) * i as f64 / (k - 1) as f64)
            .collect()
    };
    match domain.dims() {
        1 => axis(0).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let (a0, a1) = (axis(0), axis(1));
            a0.iter().flat_map(|&x| a1.iter().map(move |&y| vec![x, y])).collect()
        }
    }
}

/// Midpoints of adjacent snapshots (1D) or cell centres (2D).
pub fn initial_rom_points(domain: &ParameterDomain, k: usize) -> Vec<ParamPoint> {
    let grid = initial_snapshot_grid(domain, k);
    match domain.dims() {
        1 => grid.windows(2).map(|w| vec![0.5 * (w[0][0] + w[1][0])]).collect(),
        _ => {
            let mut pts = Vec::new();
            for i in 0..k - 1 {
                for j in 0..k - 1 {
                    let a = &grid[i * k + j];
                    let b = &grid[(i + 1) * k + j + 1];
                    pts.push(vec![0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                }
            }
            pts
        }
    }
}

pub(crate) fn nearest(domain: &ParameterDomain, candidates: &[ParamPoint], mu: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let d = domain.distance(c, mu);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Indices of the `count` nearest candidates, nearest first (stable on ties).
fn k_nearest(domain: &ParameterDomain, candidates: &[ParamPoint], mu: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&a, &b| {
        domain
            .distance(&candidates[a], mu)
            .total_cmp(&domain.distance(&candidates[b], mu))
    });
    idx.truncate(count);
    idx
}

struct PointSolve {
    sol: RomSolution,
    eps_f: f64,
    residual_norm: f64,
}

impl SamplerState {
    fn train_mesh(&mut self) -> Result<()> {
        if !self.config.mode.is_hyperreduced() {
            self.mesh = None;
            return Ok(());
        }
        let subset: Vec<usize> = match self.config.subset {
            SubsetPolicy::All => (0..self.snapshots.len()).collect(),
            SubsetPolicy::InitialGrid => (0..self.initial_snapshots).collect(),
        };
        let mesh = find_weights(
            &self.model,
            &self.basis,
            &self.snapshots,
            &subset,
            self.config.training,
            self.config.nnls_eps,
        )?;
        self.counts.mesh_trainings += 1;
        self.mesh = Some(mesh);
        Ok(())
    }

    /// ROM solve plus indicator at each parameter point, in parallel.
    fn solve_points(&mut self, mus: &[ParamPoint]) -> Result<Vec<PointSolve>> {
        let mode = self.config.mode;
        let model = &self.model;
        let basis = &self.basis;
        let mesh = self.mesh.as_ref();
        let snaps = &self.snapshots;
        let domain = &self.config.domain;
        let rom_tol = self.config.rom_tol;
        let out: Vec<Result<PointSolve>> = mus
            .par_iter()
            .map(|mu| {
                let params = burgers_params(mu);
                let seed = snaps.state(nearest(domain, snaps.params(), mu));
                let sol = match (mode.is_hyperreduced(), mesh) {
                    (true, Some(m)) => solve_rom_hyper(model, basis, m, &params, Some(seed), rom_tol)?,
                    (true, None) => return Err(RomError::Precondition("hyperreduced mode without a reduced mesh".into())),
                    (false, _) => solve_rom_exact(model, basis, &params, Some(seed), rom_tol)?,
                };
                let (eps_f, residual_norm) = if mode == SamplerMode::Greedy {
                    (0.0, model.residual(&sol.w_tilde, &params)?.norm())
                } else {
                    (epsilon_f(model, &sol.w_tilde, &params)?, f64::NAN)
                };
                Ok(PointSolve {
                    sol,
                    eps_f,
                    residual_norm,
                })
            })
            .collect();
        let out = out.into_iter().collect::<Result<Vec<_>>>()?;
        if mode.is_hyperreduced() {
            self.counts.hyper_solves += out.len();
        } else {
            self.counts.exact_solves += out.len();
        }
        Ok(out)
    }

    /// Indicator value driving the RBF at a point.
    fn indicator(&self, p: &RomPoint) -> f64 {
        match self.config.mode {
            SamplerMode::Greedy => p.residual_norm,
            _ => p.record.total().abs(),
        }
    }

    fn refit(&mut self) -> Result<()> {
        let mut centers: Vec<ParamPoint> = self.snapshots.params().to_vec();
        let mut values = vec![0.0; centers.len()];
        for p in &self.points {
            centers.push(p.record.mu.clone());
            values.push(self.indicator(p));
        }
        let rbf = rbf_fit(&self.config.domain, &centers, &values)?;
        let exclusion = SNAPSHOT_EXCLUSION.max(self.config.domain.lattice_spacing());
        let (mu, eps) = rbf_argmax(&rbf, self.snapshots.params(), exclusion)
            .ok_or_else(|| RomError::Precondition("no admissible lattice point for the next snapshot".into()))?;
        self.mu_max = mu;
        self.eps_max = eps;
        self.rbf = Some(rbf);
        Ok(())
    }

    fn record_cycle(&mut self, added: Option<ParamPoint>, nonlinear: usize, solved: usize, start: Instant) {
        let errs: Vec<f64> = self.points.iter().map(|p| self.indicator(p)).collect();
        let max_error = errs.iter().copied().fold(0.0, f64::max);
        let mean_error = if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        };
        self.history.push(CycleStats {
            cycle: self.cycle,
            snapshot_added: added,
            n_basis: self.basis.dim(),
            mesh_size: self.mesh.as_ref().map_or(0, |m| m.len()),
            max_error,
            mean_error,
            nonlinear_iterations: nonlinear,
            rom_points: self.points.len(),
            points_solved: solved,
            rbf_max: self.eps_max,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        log::info!(
            "cycle {} ({}): n={} |E~|={} points={} max={:.3e} mean={:.3e} rbf_max={:.3e}",
            self.cycle,
            self.config.mode,
            self.basis.dim(),
            self.mesh.as_ref().map_or(0, |m| m.len()),
            self.points.len(),
            max_error,
            mean_error,
            self.eps_max
        );
    }

    /// Initial snapshots, basis, reduced mesh, probing points and RBF.
    pub fn init(model: BurgersModel, config: SamplerConfig) -> Result<Self> {
        if config.k_initial < 2 {
            return Err(RomError::Precondition(format!(
                "need at least 2 initial snapshots per dimension, got {}",
                config.k_initial
            )));
        }
        if !(config.tol > 0.0) || !(config.nnls_eps > 0.0 && config.nnls_eps < 1.0) {
            return Err(RomError::Precondition("tolerances must be positive (NNLS tolerance below 1)".into()));
        }
        let start = Instant::now();
        let mus = initial_snapshot_grid(&config.domain, config.k_initial);
        let solved: Vec<Result<StateVector>> = mus
            .par_iter()
            .map(|mu| Ok(model.solve_fom(&burgers_params(mu), None, config.fom_tol)?.state))
            .collect();
        let mut snapshots = SnapshotSet::new();
        for (mu, w) in mus.iter().zip(solved) {
            snapshots.push(mu.clone(), w?)?;
        }
        let basis = build_basis(&snapshots)?;
        let initial_snapshots = snapshots.len();
        let mut state = Self {
            config,
            model,
            snapshots,
            initial_snapshots,
            points: Vec::new(),
            basis,
            mesh: None,
            cycle: 1,
            history: Vec::new(),
            counts: CallCounts {
                fom_solves: initial_snapshots,
                ..Default::default()
            },
            mu_max: Vec::new(),
            eps_max: f64::INFINITY,
            rbf: None,
        };
        state.train_mesh()?;
        let probe = initial_rom_points(&state.config.domain, state.config.k_initial);
        let solves = state.solve_points(&probe)?;
        let mut nonlinear = 0;
        for (mu, s) in probe.into_iter().zip(solves) {
            nonlinear += s.sol.iterations;
            state.points.push(RomPoint {
                record: ErrorRecord::new(mu, s.eps_f, 1),
                coarse: s.sol.w_tilde,
                residual_norm: s.residual_norm,
            });
        }
        state.refit()?;
        let solved = state.points.len();
        state.record_cycle(None, nonlinear, solved, start);
        Ok(state)
    }

    /// One sampling cycle: add the snapshot at `mu_max` and update everything.
    pub fn step(&mut self) -> Result<()> {
        let start = Instant::now();
        self.cycle += 1;
        let domain = self.config.domain.clone();
        let np = domain.dims();

        // a probing point within one lattice cell of mu_max becomes the snapshot
        let mut mu_new = self.mu_max.clone();
        if let Some(i) = self
            .points
            .iter()
            .position(|p| domain.distance(&p.record.mu, &mu_new) <= domain.lattice_spacing())
        {
            mu_new = self.points.remove(i).record.mu;
        }
        let seed = self.snapshots.state(nearest(&domain, self.snapshots.params(), &mu_new)).clone();
        let w_new = self
            .model
            .solve_fom(&burgers_params(&mu_new), Some(&seed), self.config.fom_tol)?
            .state;
        self.counts.fom_solves += 1;
        self.snapshots.push(mu_new.clone(), w_new)?;
        self.basis = build_basis(&self.snapshots)?;
        self.train_mesh()?;

        // coarse-to-fine estimates at every existing point
        if self.config.mode != SamplerMode::Greedy {
            let hyper = self.config.mode == SamplerMode::HromHyperDwr;
            let model = &self.model;
            let basis = &self.basis;
            let mesh = self.mesh.as_ref();
            let eps: Vec<Result<f64>> = self
                .points
                .par_iter()
                .map(|p| {
                    let params = burgers_params(&p.record.mu);
                    match (hyper, mesh) {
                        (true, Some(m)) => epsilon_r_hyper(model, basis, m, &p.coarse, &params),
                        (true, None) => Err(RomError::Precondition("hyperreduced DWR without a reduced mesh".into())),
                        (false, _) => epsilon_r_exact(model, basis, &p.coarse, &params),
                    }
                })
                .collect();
            let n_eval = eps.len();
            for (p, e) in self.points.iter_mut().zip(eps) {
                p.record.eps_r = e?;
                p.record.updated_cycle = self.cycle;
            }
            if hyper {
                self.counts.eps_r_hyper += n_eval;
            } else {
                self.counts.eps_r_exact += n_eval;
            }
        }

        // refresh the probing points nearest the new snapshot
        let point_mus: Vec<ParamPoint> = self.points.iter().map(|p| p.record.mu.clone()).collect();
        let refresh = k_nearest(&domain, &point_mus, &mu_new, np + 1);
        let refresh_mus: Vec<ParamPoint> = refresh.iter().map(|&i| point_mus[i].clone()).collect();
        let mut nonlinear = 0;
        let solves = self.solve_points(&refresh_mus)?;
        for (&i, s) in refresh.iter().zip(solves) {
            nonlinear += s.sol.iterations;
            let p = &mut self.points[i];
            p.record.eps_f = s.eps_f;
            p.record.eps_r = 0.0;
            p.record.updated_cycle = self.cycle;
            p.coarse = s.sol.w_tilde;
            p.residual_norm = s.residual_norm;
        }

        // new probing points between mu_new and its nearest snapshots
        let snap_mus = self.snapshots.params().to_vec();
        let others: Vec<ParamPoint> = snap_mus[..snap_mus.len() - 1].to_vec();
        let mut fresh: Vec<ParamPoint> = Vec::new();
        for j in k_nearest(&domain, &others, &mu_new, np + 1) {
            let mid: ParamPoint = mu_new.iter().zip(&others[j]).map(|(a, b)| 0.5 * (a + b)).collect();
            let clash = self
                .points
                .iter()
                .map(|p| &p.record.mu)
                .chain(snap_mus.iter())
                .chain(fresh.iter())
                .any(|q| domain.distance(q, &mid) <= POINT_COINCIDENCE);
            if !clash {
                fresh.push(mid);
            }
        }
        let solves = self.solve_points(&fresh)?;
        for (mu, s) in fresh.iter().zip(solves) {
            nonlinear += s.sol.iterations;
            self.points.push(RomPoint {
                record: ErrorRecord::new(mu.clone(), s.eps_f, self.cycle),
                coarse: s.sol.w_tilde,
                residual_norm: s.residual_norm,
            });
        }
        self.refit()?;
        self.record_cycle(Some(mu_new), nonlinear, refresh_mus.len() + fresh.len(), start);
        Ok(())
    }

    /// Goal-oriented loop until the RBF maximum falls to `config.tol`.
    ///
    /// On `BudgetExceeded` the state holds everything computed so far.
    pub fn run_adaptive(&mut self) -> Result<()> {
        while self.eps_max > self.config.tol {
            if self.cycle >= self.config.max_cycles {
                return Err(RomError::BudgetExceeded {
                    cycles: self.cycle,
                    max_error: self.eps_max,
                });
            }
            self.step()?;
        }
        Ok(())
    }

    /// Greedy residual-norm loop spending about `work_budget` work units.
    ///
    /// Stops at whichever of the last two cycle counts brings the cumulative
    /// work closest to the budget. `observe` sees the state after
    /// initialisation and after every kept cycle.
    pub fn run_greedy<F>(&mut self, work_budget: f64, mut observe: F) -> Result<()>
    where
        F: FnMut(&SamplerState) -> Result<()>,
    {
        if self.config.mode != SamplerMode::Greedy {
            return Err(RomError::Precondition("run_greedy needs a greedy-mode state".into()));
        }
        if !(work_budget > 0.0) {
            return Err(RomError::Precondition(format!("work budget must be positive, got {work_budget}")));
        }
        observe(self)?;
        loop {
            let spent = self.work_ledger()?.total() as f64;
            if spent >= work_budget {
                return Ok(());
            }
            if self.cycle >= self.config.max_cycles {
                log::warn!("greedy stopped at the cycle cap with {spent:e} of {work_budget:e} work units spent");
                return Ok(());
            }
            let before = self.clone();
            self.step()?;
            let after = self.work_ledger()?.total() as f64;
            if after >= work_budget && work_budget - spent < after - work_budget {
                *self = before;
                return Ok(());
            }
            observe(self)?;
        }
    }

    /// Work-unit inputs for every recorded cycle.
    pub fn cost_inputs(&self) -> Vec<CycleCostInputs> {
        let grid = self.model.grid();
        self.history
            .iter()
            .map(|h| CycleCostInputs {
                n_full: grid.num_nodes() as u64,
                n_basis: h.n_basis as u64,
                n_mesh: h.mesh_size as u64,
                d_e: grid.dofs_per_entity() as u64,
                d_e_plus: grid.stencil_size() as u64,
                nonlinear_iterations: h.nonlinear_iterations as u64,
                n_params: self.config.domain.dims() as u64,
                cycle: h.cycle as u64,
                points_evaluated: h.points_solved as u64,
            })
            .collect()
    }

    pub fn work_ledger(&self) -> Result<WorkLedger> {
        ledger(self.config.mode.cost_model(), &self.cost_inputs())
    }

    /// Snapshot count added after initialisation.
    pub fn added_snapshots(&self) -> usize {
        self.snapshots.len() - self.initial_snapshots
    }
}
