use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PostNorm,
    PreNorm,
    PostNormDeescalated,
}

/// Where the de-escalation step sits inside a de-escalated post-norm block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// After the final layer normalization (equivalently, the next block's input).
    BlockOutput,
    /// On the FFN sub-layer input, after the first layer normalization.
    FfnInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// tanh approximation of GELU.
    Gelu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                const C: f64 = 0.797_884_560_802_865_4; // √(2/π)
                0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
            }
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Distribution of the value weights `W` in the self-attention step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueInit {
    /// `N(0, σ²)` with `σ² = sigma_sq`.
    Gaussian,
    /// Xavier-uniform over the `d × d/h` head block; ignores `sigma_sq`.
    XavierUniform,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($name => Ok($variant),)+
                    other => Err(Error::InvalidParameter(format!(
                        concat!("unknown ", $what, " '{}' (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self {
                    $(v if *v == $variant => $name,)+
                    _ => unreachable!(),
                };
                f.write_str(name)
            }
        }
    };
}

keyword_enum!(Variant, "variant", {
    "post_norm" => Variant::PostNorm,
    "pre_norm" => Variant::PreNorm,
    "post_norm_deescalated" => Variant::PostNormDeescalated,
});

keyword_enum!(Placement, "placement", {
    "block_output" => Placement::BlockOutput,
    "ffn_input" => Placement::FfnInput,
});

keyword_enum!(Activation, "activation", {
    "relu" => Activation::Relu,
    "gelu" => Activation::Gelu,
    "tanh" => Activation::Tanh,
});

keyword_enum!(ValueInit, "value init", {
    "gaussian" => ValueInit::Gaussian,
    "xavier" => ValueInit::XavierUniform,
});

/// Row-wise layer normalization parameters. `gain`/`bias` are the learnable
/// scalars, fixed at their initial values here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerNormParams {
    pub gain: f64,
    pub bias: f64,
    pub epsilon: f64,
}

impl Default for LayerNormParams {
    fn default() -> Self {
        LayerNormParams {
            gain: 1.0,
            bias: 0.0,
            epsilon: 1e-5,
        }
    }
}

/// Architecture and initialization of one encoder block.
///
/// `q_ffn` and `sigma_sq` default to values derived from `d` (`2d` and
/// `1/d`) unless set explicitly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockConfig {
    pub n: usize,
    pub d: usize,
    pub heads: usize,
    pub alpha: f64,
    pub q_ffn: Option<usize>,
    pub tau: f64,
    pub variant: Variant,
    pub placement: Placement,
    pub sigma_sq: Option<f64>,
    pub value_init: ValueInit,
    pub activation: Activation,
    pub layer_norm: LayerNormParams,
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            n: 64,
            d: 512,
            heads: 8,
            alpha: 1.0,
            q_ffn: None,
            tau: 1.0,
            variant: Variant::PostNorm,
            placement: Placement::BlockOutput,
            sigma_sq: None,
            value_init: ValueInit::Gaussian,
            activation: Activation::Relu,
            layer_norm: LayerNormParams::default(),
            seed: 0,
        }
    }
}

impl BlockConfig {
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn ffn_width(&self) -> usize {
        self.q_ffn.unwrap_or(2 * self.d)
    }

    /// Per-entry variance of the value weights.
    pub fn value_variance(&self) -> f64 {
        self.sigma_sq.unwrap_or(1.0 / self.d as f64)
    }

    /// Per-entry variance of the value weights under `value_init`.
    pub fn value_weight_variance(&self) -> f64 {
        match self.value_init {
            ValueInit::Gaussian => self.value_variance(),
            // Uniform on (−b, b) with b² = 6/(fan_in + fan_out).
            ValueInit::XavierUniform => 2.0 / (self.d + self.head_dim()) as f64,
        }
    }

    /// `dσ²`, the factor that multiplies `α²μᵢ²` in `E[ξᵢ]`.
    pub fn d_sigma_sq(&self) -> f64 {
        self.d as f64 * self.value_weight_variance()
    }

    /// Half-width of the uniform query/key weight distribution, `1/√d`.
    pub fn qk_scale(&self) -> f64 {
        1.0 / (self.d as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 || self.d == 0 || self.heads == 0 {
            return bad(format!("n, d and heads must be positive (n={}, d={}, heads={})", self.n, self.d, self.heads));
        }
        if self.d % self.heads != 0 {
            return bad(format!("heads ({}) must divide d ({})", self.heads, self.d));
        }
        if self.ffn_width() < self.d {
            return bad(format!("q_ffn ({}) must be at least d ({})", self.ffn_width(), self.d));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.value_variance() > 0.0 && self.value_variance().is_finite()) {
            return bad(format!("sigma_sq must be positive, got {}", self.value_variance()));
        }
        if !(self.layer_norm.epsilon > 0.0) {
            return bad(format!("layer-norm epsilon must be positive, got {}", self.layer_norm.epsilon));
        }
        Ok(())
    }
}
