//! Concentration of `η` for inputs `X = evᵀ + tQ` near rank one.

use crate::error::Result;
use crate::matrix::{matmul, RealMatrix};
use crate::metrics::{eta_sample, mu_pair_from_product, token_similarity};
use crate::rng::{sample_gaussian, sample_uniform_scaled, RngStream};
use crate::theory::{expected_xi, gamma_constant};
use crate::transformer::softmax_attention;

use super::{expect_kind, par_collect, Cells, ExperimentKind, ExperimentSpec, Table};

/// Step label for width `d`.
pub fn eta_step(d: usize) -> String {
    format!("d{d}")
}

/// For each width `d` and each `t` (block column = 1-based position in the
/// grid), the mean of `η` over `spec.trials` draws of `W ~ N(0, I/d)`.
/// `v`, `Q`, `W_q`, `W_k` are drawn once per width.
pub fn run_eta_concentration(spec: &ExperimentSpec) -> Result<Table> {
    expect_kind(spec, ExperimentKind::EtaConcentrationFig6)?;
    let n = spec.cfg.n;
    let alpha = spec.cfg.alpha;
    let root = RngStream::new(spec.cfg.seed, 0);
    let mut cells = Cells::default();
    for &d in &spec.extra.eta_dims {
        let step = eta_step(d);
        let width_rng = root.substream(d as u64);
        let mut rng = width_rng.clone();
        let v = sample_gaussian(&mut rng, 1, d, 1.0)?;
        let q = sample_gaussian(&mut rng, n, d, 1.0)?;
        let scale = 1.0 / (d as f64).sqrt();
        let wq = sample_uniform_scaled(&mut rng, d, d, scale)?;
        let wk = sample_uniform_scaled(&mut rng, d, d, scale)?;
        let e = vec![1.0 / (n as f64).sqrt(); n];
        let rank_one = RealMatrix::outer(&e, v.row(0));

        for (k, &t) in spec.extra.t_grid.iter().enumerate() {
            let block = k + 1;
            let x = rank_one.add_scaled(&q, t)?;
            let p = softmax_attention(&x, &wq, &wk, d)?;
            let px = p.apply(&x)?;
            let (mu1, mu2) = mu_pair_from_product(&x, &px)?;
            // W has variance 1/d, so dσ² = 1.
            let (e1, e2) = expected_xi(alpha, 1.0, mu1, mu2);
            cells.push(block, &step, "t", t);
            cells.push(block, &step, "t_sim", token_similarity(&x)?);
            cells.push(block, &step, "gamma", gamma_constant(alpha, 1.0, mu1, mu2));
            let t_rng = width_rng.substream(block as u64);
            let etas = par_collect(spec.trials, |s| {
                let mut r = t_rng.substream(s as u64);
                let w = sample_gaussian(&mut r, d, d, scale)?;
                let mut y = x.clone();
                y.axpy(alpha, &matmul(&px, &w)?)?;
                eta_sample(&x, &y, e1, e2)
            })?;
            for eta in etas {
                cells.push(block, &step, "eta", eta);
            }
        }
    }
    Ok(cells.into_table(spec.kind.name()))
}
