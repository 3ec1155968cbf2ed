//! Studies that push random inputs through a stack of freshly initialized
//! blocks: escalation, pre-norm growth and de-escalation.

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::metrics::{cosine_similarity, escalation_rate, mu_pair, omega, token_diversity, token_similarity, xi_pair};
use crate::rng::{sample_gaussian, RngStream};
use crate::spectral::delta;
use crate::theory::tech_condition;
use crate::transformer::{run_block, AttentionMatrix, BlockConfig, BlockStep, DiagnosticsSink, PreNormNorms, Variant};

use super::{expect_kind, fmt_num, run_trials, Cells, ExperimentKind, ExperimentSpec, Table, SATURATION_GAP};

/// Root stream of trial `trial` and its `N(0, 1)` input.
pub(crate) fn trial_input(cfg: &BlockConfig, trial: usize) -> Result<(RngStream, RealMatrix)> {
    let root = RngStream::new(cfg.seed, trial as u64);
    let x = sample_gaussian(&mut root.substream(0), cfg.n, cfg.d, 1.0)?;
    Ok((root, x))
}

pub(crate) fn is_saturated(x: &RealMatrix) -> Result<bool> {
    Ok(token_diversity(x)? < SATURATION_GAP)
}

/// Records `ξ₁/ξ₂` and `r` across a step unless similarity has saturated or
/// a projector part vanishes.
pub(crate) fn record_ratios(cells: &mut Cells, block: usize, step: &str, x: &RealMatrix, y: &RealMatrix) -> Result<()> {
    if is_saturated(x)? || is_saturated(y)? {
        cells.saturate(block, step, "xi_ratio");
        cells.saturate(block, step, "r");
        return Ok(());
    }
    match xi_pair(x, y) {
        Ok((xi1, xi2)) => cells.push(block, step, "xi_ratio", xi1 / xi2),
        Err(Error::Boundary { .. }) => cells.flag(block, step, "xi_ratio", "undefined"),
        Err(e) => return Err(e),
    }
    match escalation_rate(x, y) {
        Ok(r) => cells.push(block, step, "r", r),
        Err(Error::SimilarityBoundary { .. }) => cells.flag(block, step, "r", "undefined"),
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Per-head spectral quantities of one block.
#[derive(Default)]
struct HeadStats {
    delta: Vec<f64>,
    omega: Vec<f64>,
    hypothesis: Vec<f64>,
    tech: Vec<f64>,
}

/// Collects per-step measurements for one block of one trial.
struct StepProbe<'a> {
    block: usize,
    cells: &'a mut Cells,
    heads: HeadStats,
    error: Option<Error>,
}

impl StepProbe<'_> {
    fn try_attention(&mut self, input: &RealMatrix, p: &AttentionMatrix) -> Result<()> {
        let d = delta(p)?;
        self.heads.delta.push(d);
        // ω and μ need both projector parts of the input.
        if let (Ok(w), Ok((mu1, mu2))) = (omega(input, p), mu_pair(input, p)) {
            self.heads.omega.push(w);
            self.heads.hypothesis.push(if w + d < 1.0 { 1.0 } else { 0.0 });
            self.heads.tech.push(tech_condition(mu1, mu2, w, d));
        }
        Ok(())
    }

    fn try_step(&mut self, step: BlockStep, x: &RealMatrix, y: &RealMatrix) -> Result<()> {
        let label = step.label();
        self.cells.push(self.block, label, "t_sim", token_similarity(y)?);
        record_ratios(self.cells, self.block, label, x, y)
    }

    fn finish(self) -> Result<()> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let b = self.block;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let h = &self.heads;
        if !h.delta.is_empty() {
            self.cells.push(b, "attn", "delta", mean(&h.delta));
        }
        if !h.omega.is_empty() {
            self.cells.push(b, "attn", "omega", mean(&h.omega));
            self.cells.push(b, "attn", "hypothesis_holds", mean(&h.hypothesis));
            self.cells.push(b, "attn", "tech_condition", mean(&h.tech));
        }
        Ok(())
    }
}

impl DiagnosticsSink for StepProbe<'_> {
    fn attention(&mut self, _head: usize, input: &RealMatrix, p: &AttentionMatrix) {
        if self.error.is_none() {
            if let Err(e) = self.try_attention(input, p) {
                self.error = Some(e);
            }
        }
    }

    fn step(&mut self, step: BlockStep, input: &RealMatrix, output: &RealMatrix) {
        if self.error.is_none() && step.index().is_some() {
            if let Err(e) = self.try_step(step, input, output) {
                self.error = Some(e);
            }
        }
    }
}

fn record_output(cells: &mut Cells, block: usize, x: &RealMatrix) -> Result<()> {
    cells.push(block, "out", "t_sim", token_similarity(x)?);
    cells.push(block, "out", "t_div", token_diversity(x)?);
    if let Ok(c) = cosine_similarity(x) {
        cells.push(block, "out", "t_cos", c);
    }
    Ok(())
}

/// Per block and step, `t_sim`, `ξ₁/ξ₂` and `r`; per block the
/// head-averaged `δ`, `ω` and the hypothesis indicators.
pub fn run_escalation(spec: &ExperimentSpec) -> Result<Table> {
    expect_kind(spec, ExperimentKind::EscalationFig2)?;
    let cfg = &spec.cfg;
    let cells = run_trials(spec.trials, |trial| {
        let mut cells = Cells::default();
        let (root, mut x) = trial_input(cfg, trial)?;
        for block in 1..=spec.depth {
            let mut probe = StepProbe {
                block,
                cells: &mut cells,
                heads: HeadStats::default(),
                error: None,
            };
            let y = run_block(&x, cfg, &mut root.substream(block as u64), Some(&mut probe))?;
            probe.finish()?;
            record_output(&mut cells, block, &y)?;
            x = y;
        }
        Ok(cells)
    })?;
    Ok(cells.into_table(spec.kind.name()))
}

#[derive(Default)]
struct NormTap(Option<PreNormNorms>);

impl DiagnosticsSink for NormTap {
    fn prenorm_norms(&mut self, norms: &PreNormNorms) {
        self.0 = Some(*norms);
    }
}

/// Norms of `X`, `X̂` and the attention term through a pre-norm
/// stack, and `t_sim` of both the pre-norm stack and an identically seeded
/// post-norm stack.
pub fn run_prenorm(spec: &ExperimentSpec) -> Result<Table> {
    expect_kind(spec, ExperimentKind::PrenormFig4)?;
    let pre = BlockConfig { variant: Variant::PreNorm, ..spec.cfg.clone() };
    let post = BlockConfig { variant: Variant::PostNorm, ..spec.cfg.clone() };
    let cells = run_trials(spec.trials, |trial| {
        let mut cells = Cells::default();
        let (root, x0) = trial_input(&pre, trial)?;
        let mut x = x0.clone();
        for block in 1..=spec.depth {
            let mut tap = NormTap::default();
            x = run_block(&x, &pre, &mut root.substream(block as u64), Some(&mut tap))?;
            let norms = tap.0.expect("pre-norm block reports its norms");
            cells.push(block, "norms", "norm_x", norms.input);
            cells.push(block, "norms", "norm_x_hat", norms.normalized);
            cells.push(block, "norms", "norm_attention", norms.attention);
            cells.push(block, "norms", "norm_y", norms.after_attention);
            cells.push(block, "norms", "norm_z", norms.output);
            cells.push(block, "out", "t_sim", token_similarity(&x)?);
        }
        let mut x = x0;
        for block in 1..=spec.depth {
            x = run_block(&x, &post, &mut root.substream(block as u64), None)?;
            cells.push(block, "out", "t_sim_post_norm", token_similarity(&x)?);
        }
        Ok(cells)
    })?;
    Ok(cells.into_table(spec.kind.name()))
}

/// Name of the diversity series for one `τ`.
pub fn deescalate_quantity(tau: f64) -> String {
    format!("t_div_tau_{}", fmt_num(tau))
}

/// Block-output `t_div` of the de-escalated post-norm stack for each
/// `τ` in `spec.extra.taus`.
pub fn run_deescalate(spec: &ExperimentSpec) -> Result<Table> {
    expect_kind(spec, ExperimentKind::DeescalateFig5)?;
    let mut table = Table::default();
    for &tau in &spec.extra.taus {
        let cfg = BlockConfig {
            variant: Variant::PostNormDeescalated,
            tau,
            ..spec.cfg.clone()
        };
        let quantity = deescalate_quantity(tau);
        let cells = run_trials(spec.trials, |trial| {
            let mut cells = Cells::default();
            let (root, mut x) = trial_input(&cfg, trial)?;
            for block in 1..=spec.depth {
                x = run_block(&x, &cfg, &mut root.substream(block as u64), None)?;
                cells.push(block, "out", &quantity, token_diversity(&x)?);
            }
            Ok(cells)
        })?;
        table.extend(cells.into_table(spec.kind.name()));
    }
    Ok(table)
}
