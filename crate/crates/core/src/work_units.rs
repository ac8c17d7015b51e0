//! Analytical work-unit accounting for the sampling variants.
//!
//! One work unit is one residual/Jacobian entry evaluation or one FLOP; a dense
//! `a x b` by `b x c` product costs `a c (2b - 1)` and the `n x n` solve is
//! charged `n^3`. All counts are exact integers.

use std::fmt;
use std::io::Write;

use crate::error::{Result, RomError};

/// Statistics of one sampling cycle needed to price it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleCostInputs {
    /// Full-order dimension `N`.
    pub n_full: u64,
    /// Basis dimension `n_i`.
    pub n_basis: u64,
    /// Reduced-mesh size `n_e_i` (0 without hyperreduction).
    pub n_mesh: u64,
    /// DOFs per entity `d_e`.
    pub d_e: u64,
    /// Stencil DOFs per entity `d_e+`.
    pub d_e_plus: u64,
    /// Total nonlinear iterations spent on ROM solves in the cycle.
    pub nonlinear_iterations: u64,
    pub n_params: u64,
    /// 1-based cycle index `i`.
    pub cycle: u64,
    /// ROM points whose residual norm was evaluated (greedy indicator only).
    pub points_evaluated: u64,
}

fn i(x: u64) -> i128 {
    x as i128
}

/// Per-iteration cost of an LSPG step with full residual and Jacobian.
pub fn w_nonlin_rom(c: &CycleCostInputs) -> i128 {
    let (big_n, n) = (i(c.n_full), i(c.n_basis));
    big_n + big_n * big_n + (2 * big_n * n + n * n + big_n + n) * (2 * big_n - 1) + n * n * n
}

/// Per-iteration cost of a hyperreduced LSPG step.
pub fn w_nonlin_hrom(c: &CycleCostInputs) -> i128 {
    let (big_n, n, ne, de, dep) = (i(c.n_full), i(c.n_basis), i(c.n_mesh), i(c.d_e), i(c.d_e_plus));
    ne * (de + 2 * n * de + n) + (2 * ne * de * dep + 2 * de * dep * ne * n) + n * n * (2 * big_n - 1) + n * n * n
}

/// Cost of one coarse-to-fine DWR evaluation with exact reduced quantities.
pub fn w_dwr_rom(c: &CycleCostInputs) -> i128 {
    let (big_n, n) = (i(c.n_full), i(c.n_basis));
    big_n
        + big_n * big_n
        + big_n
        + (2 * big_n * n + n * n + n) * (2 * big_n - 1)
        + n * n * n
        + ((big_n + n) * (2 * big_n - 1) + (2 * n - 1))
}

/// Cost of one hyperreduced coarse-to-fine DWR evaluation.
pub fn w_dwr_hrom(c: &CycleCostInputs) -> i128 {
    let (big_n, n, ne, de, dep) = (i(c.n_full), i(c.n_basis), i(c.n_mesh), i(c.d_e), i(c.d_e_plus));
    ne * (de + 2 * n * de + n)
        + (ne * de * dep + 2 * de * dep * ne * n)
        + big_n
        + (ne * (de * n + n) + n * n * (2 * big_n - 1) + n * (2 * big_n - 1))
        + n * n * n
        + (2 * n - 1)
}

/// Cost of the greedy indicator at one point: residual entries plus its 2-norm.
pub fn w_residual_norm(c: &CycleCostInputs) -> i128 {
    let big_n = i(c.n_full);
    big_n + (2 * big_n - 1)
}

/// Which solve/indicator combination is being priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostModel {
    /// Full residual/Jacobian in solves and DWR.
    Rom,
    /// Hyperreduced solves, exact DWR.
    HromNoHyperDwr,
    /// Hyperreduced solves and DWR.
    HromHyperDwr,
    /// Full solves, residual-norm indicator at every point.
    Greedy,
}

impl CostModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostModel::Rom => "rom",
            CostModel::HromNoHyperDwr => "hrom",
            CostModel::HromHyperDwr => "hrom-hyperdwr",
            CostModel::Greedy => "greedy",
        }
    }
}

impl fmt::Display for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleWork {
    pub cycle: u64,
    pub w_all_rom: i128,
    pub w_all_dwr: i128,
    pub w_tot: i128,
    pub cumulative: i128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkLedger {
    pub model: CostModel,
    pub cycles: Vec<CycleWork>,
}

impl WorkLedger {
    pub fn total(&self) -> i128 {
        self.cycles.last().map_or(0, |c| c.cumulative)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["cycle", "W_allROM", "W_allDWR", "W_tot", "cumulative"])?;
        for c in &self.cycles {
            wtr.write_record([
                c.cycle.to_string(),
                c.w_all_rom.to_string(),
                c.w_all_dwr.to_string(),
                c.w_tot.to_string(),
                c.cumulative.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `W_tot(i) = N_i W_nonlin + (n_p + 1)(i - 1) W_DWR`, priced per cost model.
///
/// `inputs[k]` must describe cycle `k + 1`.
pub fn ledger(model: CostModel, inputs: &[CycleCostInputs]) -> Result<WorkLedger> {
    let mut cycles = Vec::with_capacity(inputs.len());
    let mut cumulative = 0i128;
    for (k, c) in inputs.iter().enumerate() {
        if c.cycle != k as u64 + 1 {
            return Err(RomError::Dimension(format!(
                "cost inputs out of sequence: entry {k} is cycle {}",
                c.cycle
            )));
        }
        let nonlin = match model {
            CostModel::Rom | CostModel::Greedy => w_nonlin_rom(c),
            CostModel::HromNoHyperDwr | CostModel::HromHyperDwr => w_nonlin_hrom(c),
        };
        let w_all_rom = i(c.nonlinear_iterations) * nonlin;
        let previous_points = i(c.n_params + 1) * (i(c.cycle) - 1);
        let w_all_dwr = match model {
            CostModel::Rom | CostModel::HromNoHyperDwr => previous_points * w_dwr_rom(c),
            CostModel::HromHyperDwr => previous_points * w_dwr_hrom(c),
            CostModel::Greedy => i(c.points_evaluated) * w_residual_norm(c),
        };
        let w_tot = w_all_rom + w_all_dwr;
        cumulative += w_tot;
        cycles.push(CycleWork {
            cycle: c.cycle,
            w_all_rom,
            w_all_dwr,
            w_tot,
            cumulative,
        });
    }
    Ok(WorkLedger { model, cycles })
}
