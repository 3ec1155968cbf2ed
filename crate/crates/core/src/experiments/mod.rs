//! Multi-trial studies of escalation in stacked random blocks.
//!
//! Every run is a pure function of its [`ExperimentSpec`]: trial `k` draws
//! from stream `k` of the configured seed, trials may run on any thread, and
//! per-trial aggregates are merged in trial order, so output is reproducible
//! byte for byte.

mod aggregate;
mod eta;
mod fixed_input;
mod oracle;
mod stack;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

pub use aggregate::{Table, TableRow, TrialAggregate, CSV_HEADER};
pub use eta::{eta_step, run_eta_concentration};
pub use fixed_input::{multihead_estimates, run_fixed_input};
pub use oracle::{oracle_cases, oracle_passed, run_oracle_expected_xi, run_theorem_gate, OracleCase, GATE_SUMMARY};
pub use stack::{deescalate_quantity, run_deescalate, run_escalation, run_prenorm};

pub(crate) use aggregate::Cells;

use crate::error::{Error, Result};
use crate::transformer::{BlockConfig, Variant};

/// Similarity within this distance of 1 is treated as saturated: ratios of
/// complement energies are then dominated by rounding.
pub const SATURATION_GAP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EscalationFig2,
    FixedInputFig3,
    PrenormFig4,
    DeescalateFig5,
    EtaConcentrationFig6,
    OracleExpectedXi,
    TheoremGate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::EscalationFig2,
        ExperimentKind::FixedInputFig3,
        ExperimentKind::PrenormFig4,
        ExperimentKind::DeescalateFig5,
        ExperimentKind::EtaConcentrationFig6,
        ExperimentKind::OracleExpectedXi,
        ExperimentKind::TheoremGate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::EscalationFig2 => "escalation_fig2",
            ExperimentKind::FixedInputFig3 => "fixed_input_fig3",
            ExperimentKind::PrenormFig4 => "prenorm_fig4",
            ExperimentKind::DeescalateFig5 => "deescalate_fig5",
            ExperimentKind::EtaConcentrationFig6 => "eta_concentration_fig6",
            ExperimentKind::OracleExpectedXi => "oracle_expected_xi",
            ExperimentKind::TheoremGate => "theorem_gate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown experiment '{s}'")))
    }
}

/// Parameters that only some experiments read.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentExtra {
    /// De-escalation strengths.
    pub taus: Vec<f64>,
    /// Widths for the η study.
    pub eta_dims: Vec<usize>,
    /// Perturbation sizes `t` for the η study.
    pub t_grid: Vec<f64>,
    /// `(n, d)` pairs for the ξ oracle.
    pub oracle_shapes: Vec<(usize, usize)>,
    pub oracle_alphas: Vec<f64>,
    /// Head counts for the ξ oracle; 1 is the single-head case.
    pub oracle_heads: Vec<usize>,
    /// Accepted deviation of an oracle mean, in standard errors.
    pub oracle_z: f64,
    /// Number of instances with `ω + δ < 1` the gate must collect.
    pub gate_instances: usize,
}

impl Default for ExperimentExtra {
    fn default() -> Self {
        ExperimentExtra {
            taus: vec![0.1, 0.5, 1.0],
            eta_dims: vec![10, 20, 40],
            t_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
            oracle_shapes: vec![(16, 64), (16, 256), (64, 64), (64, 256)],
            oracle_alphas: vec![0.5, 1.0],
            oracle_heads: vec![1, 2, 8],
            oracle_z: 3.0,
            gate_instances: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub cfg: BlockConfig,
    pub depth: usize,
    /// Independent trials; for the fixed-input, η, oracle and gate studies
    /// this is the number of weight draws per measurement.
    pub trials: usize,
    pub extra: ExperimentExtra,
}

impl ExperimentSpec {
    /// The configuration each study uses unless overridden.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut cfg = BlockConfig::default();
        let (depth, trials) = match kind {
            ExperimentKind::EscalationFig2 => (20, 50),
            ExperimentKind::FixedInputFig3 => (20, 1000),
            ExperimentKind::PrenormFig4 => {
                cfg.variant = Variant::PreNorm;
                (20, 20)
            }
            ExperimentKind::DeescalateFig5 => {
                cfg.variant = Variant::PostNormDeescalated;
                (20, 20)
            }
            ExperimentKind::EtaConcentrationFig6 => {
                cfg.n = 100;
                cfg.heads = 1;
                (1, 50)
            }
            ExperimentKind::OracleExpectedXi => (1, 10_000),
            ExperimentKind::TheoremGate => {
                cfg.n = 16;
                cfg.heads = 1;
                (1, 100)
            }
        };
        ExperimentSpec {
            kind,
            cfg,
            depth,
            trials,
            extra: ExperimentExtra::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.depth == 0 {
            return Err(Error::InvalidParameter("depth must be at least 1".into()));
        }
        self.cfg.validate()?;
        let x = &self.extra;
        if x.taus.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter("every tau must lie in [0, 1]".into()));
        }
        if x.t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::InvalidParameter("every t must lie in (0, 1]".into()));
        }
        if x.eta_dims.contains(&0) {
            return Err(Error::InvalidParameter("eta dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Runs whichever study `spec.kind` names.
pub fn run(spec: &ExperimentSpec) -> Result<Table> {
    match spec.kind {
        ExperimentKind::EscalationFig2 => run_escalation(spec),
        ExperimentKind::FixedInputFig3 => run_fixed_input(spec),
        ExperimentKind::PrenormFig4 => run_prenorm(spec),
        ExperimentKind::DeescalateFig5 => run_deescalate(spec),
        ExperimentKind::EtaConcentrationFig6 => run_eta_concentration(spec),
        ExperimentKind::OracleExpectedXi => run_oracle_expected_xi(spec),
        ExperimentKind::TheoremGate => run_theorem_gate(spec),
    }
}

pub(crate) fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidParameter(format!("spec is for {}, not {}", spec.kind, kind)));
    }
    spec.validate()
}

/// Runs `trial(k)` for every `k < count` in parallel and merges the results
/// in trial order.
pub(crate) fn run_trials<F>(count: usize, trial: F) -> Result<Cells>
where
    F: Fn(usize) -> Result<Cells> + Sync,
{
    let parts: Vec<Cells> = (0..count).into_par_iter().map(&trial).collect::<Result<_>>()?;
    let mut all = Cells::default();
    for part in parts {
        all.merge(part);
    }
    Ok(all)
}

/// Parallel map over `0..count` returning values in index order.
pub(crate) fn par_collect<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..count).into_par_iter().map(&f).collect()
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}
