//! Bayesian models: an architecture plus a prior granularity and a flag for
//! a sampled likelihood width.
//!
//! The flat parameter vector is laid out as
//! `[prior hyperparameters] ++ [likelihood sigma?] ++ [network block]`, so a
//! prior transform can read every width before it draws the weights that
//! depend on it.
//!
//! Model names follow a small grammar: an optional `r` (relu hidden layers),
//! an optional granularity token `sh`, `lh` or `ih`, an optional `sv`
//! (sampled likelihood width) and an optional hidden-layer list `(4, 4)`.
//! The bare name `br` is Bayesian linear regression with fixed widths.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::network::{Activation, Architecture};
use crate::{Error, Result};

/// Features in the housing table.
pub const HOUSING_INPUTS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Every prior width and the likelihood width fixed to 1.
    Fixed,
    /// One width shared by all network parameters.
    Single,
    /// One width for the weights and one for the biases of each layer.
    Layer,
    /// One width per input node of each layer, plus one bias width per layer.
    InputSize,
}

impl Granularity {
    fn token(self) -> Option<&'static str> {
        match self {
            Granularity::Fixed => None,
            Granularity::Single => Some("sh"),
            Granularity::Layer => Some("lh"),
            Granularity::InputSize => Some("ih"),
        }
    }
}

/// Shape/rate parameters of a Gamma prior on a precision `1 / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaPrior {
    pub const UNIT: GammaPrior = GammaPrior { alpha: 1.0, beta: 1.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    /// One entry per prior hyperparameter, in layout order.
    pub hyper: Vec<GammaPrior>,
    /// Prior on the likelihood precision.
    pub sigma: GammaPrior,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    arch: Architecture,
    granularity: Granularity,
    variable_sigma: bool,
}

impl ModelSpec {
    pub fn new(arch: Architecture, granularity: Granularity, variable_sigma: bool) -> Self {
        Self {
            arch,
            granularity,
            variable_sigma,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn variable_sigma(&self) -> bool {
        self.variable_sigma
    }

    pub fn name(&self) -> String {
        format_name(self)
    }

    /// Whether the model belongs to the experiment grid: relu only with fixed
    /// widths, and a sampled likelihood width exactly when the prior widths
    /// are sampled.
    pub fn is_on_grid(&self) -> bool {
        let sampled = self.granularity != Granularity::Fixed;
        let relu_ok = self.arch.activation() == Activation::Tanh || !sampled;
        self.variable_sigma == sampled && relu_ok && self.arch.input_size() == HOUSING_INPUTS
    }

    pub fn hyper_count(&self) -> usize {
        hyper_count(self)
    }

    pub fn total_dim(&self) -> usize {
        total_dim(self)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_name(self))
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_name(s)
    }
}

/// Number of sampled prior hyperparameters.
pub fn hyper_count(spec: &ModelSpec) -> usize {
    let sizes = spec.arch.layer_sizes();
    match spec.granularity {
        Granularity::Fixed => 0,
        Granularity::Single => 1,
        Granularity::Layer => 2 * spec.arch.n_layers(),
        Granularity::InputSize => sizes[..sizes.len() - 1].iter().map(|l| l + 1).sum(),
    }
}

/// Network parameters, prior hyperparameters and the likelihood width.
pub fn total_dim(spec: &ModelSpec) -> usize {
    spec.arch.param_count() + hyper_count(spec) + usize::from(spec.variable_sigma)
}

/// Gamma hyperpriors for every sampled width.
///
/// All shapes are 1. Rates are 1 except for the weights of layers after the
/// first, whose rate is divided by the width of the layer feeding them; the
/// single-width model keeps the unit rate.
pub fn hyperprior_params(spec: &ModelSpec) -> Result<HyperPriors> {
    if spec.granularity == Granularity::Fixed {
        return Err(Error::Invalid(format!(
            "model {spec} has fixed widths and no hyperpriors"
        )));
    }
    let hyper = spec
        .layout()
        .roles
        .iter()
        .map(|role| match role.kind {
            HyperKind::Weights { .. } if role.layer > 1 => GammaPrior {
                alpha: 1.0,
                beta: 1.0 / role.fan_in as f64,
            },
            _ => GammaPrior::UNIT,
        })
        .collect();
    Ok(HyperPriors {
        hyper,
        sigma: GammaPrior::UNIT,
    })
}

/// Which network parameters a hyperparameter governs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperKind {
    /// Every weight and bias in the network.
    All,
    /// Weights of a layer; `input` is set for per-input widths.
    Weights {
        input: Option<usize>,
    },
    Biases,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperRole {
    pub kind: HyperKind,
    /// 1-based weighted layer, 0 for [`HyperKind::All`].
    pub layer: usize,
    /// Width of the layer feeding `layer`.
    pub fan_in: usize,
}

/// Width that scales the prior of one network parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Governor {
    /// Fixed unit width.
    Unit,
    /// Index into the hyperparameter block.
    Hyper(usize),
}

/// Flat layout of a model's parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub n_hyper: usize,
    pub has_sigma: bool,
    pub roles: Vec<HyperRole>,
    /// Governing width of every entry of the network block.
    pub governors: Vec<Governor>,
    /// Hidden-layer bias ranges (relative to the network block) that carry
    /// the ordering constraint.
    pub ordered_blocks: Vec<Range<usize>>,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let layers = spec.arch.layers();
        let mut roles = Vec::new();
        let mut governors = vec![Governor::Unit; spec.arch.param_count()];

        match spec.granularity {
            Granularity::Fixed => {}
            Granularity::Single => {
                roles.push(HyperRole {
                    kind: HyperKind::All,
                    layer: 0,
                    fan_in: 0,
                });
                governors.fill(Governor::Hyper(0));
            }
            Granularity::Layer | Granularity::InputSize => {
                let per_input = spec.granularity == Granularity::InputSize;
                for (l, shape) in layers.iter().enumerate() {
                    let layer = l + 1;
                    let first = roles.len();
                    let n_weight_hypers = if per_input { shape.inputs } else { 1 };
                    for k in 0..n_weight_hypers {
                        roles.push(HyperRole {
                            kind: HyperKind::Weights {
                                input: per_input.then_some(k),
                            },
                            layer,
                            fan_in: shape.inputs,
                        });
                    }
                    let bias_hyper = roles.len();
                    roles.push(HyperRole {
                        kind: HyperKind::Biases,
                        layer,
                        fan_in: shape.inputs,
                    });
                    for node in 0..shape.outputs {
                        for k in 0..shape.inputs {
                            let h = if per_input { first + k } else { first };
                            governors[shape.weight_index(node, k)] = Governor::Hyper(h);
                        }
                        governors[shape.bias_offset + node] = Governor::Hyper(bias_hyper);
                    }
                }
            }
        }

        let ordered_blocks = layers[..layers.len() - 1]
            .iter()
            .map(|s| s.bias_offset..s.bias_offset + s.outputs)
            .collect();

        Self {
            n_hyper: roles.len(),
            has_sigma: spec.variable_sigma,
            roles,
            governors,
            ordered_blocks,
        }
    }

    pub fn sigma_index(&self) -> Option<usize> {
        self.has_sigma.then_some(self.n_hyper)
    }

    /// Start of the network block in the flat vector.
    pub fn network_offset(&self) -> usize {
        self.n_hyper + usize::from(self.has_sigma)
    }

    pub fn total_len(&self) -> usize {
        self.network_offset() + self.governors.len()
    }
}

const VALID_TOKENS: &str = "r, sh, lh, ih, sv, (n1, n2, ...), or the bare name br";

/// Parses a model name, assuming the 13 housing inputs.
pub fn parse_name(s: &str) -> Result<ModelSpec> {
    parse_name_with_inputs(s, HOUSING_INPUTS)
}

pub fn parse_name_with_inputs(s: &str, input_size: usize) -> Result<ModelSpec> {
    let err = |reason: String| Error::ModelName {
        name: s.to_owned(),
        reason,
    };
    let trimmed = s.trim();
    let (head, hidden) = match trimmed.find('(') {
        Some(open) => {
            let close = trimmed
                .rfind(')')
                .filter(|&c| c > open && trimmed[c + 1..].trim().is_empty())
                .ok_or_else(|| err("unbalanced parentheses".into()))?;
            let hidden = trimmed[open + 1..close]
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| err(format!("bad layer size {:?}", t.trim())))
                })
                .collect::<Result<Vec<_>>>()?;
            (&trimmed[..open], hidden)
        }
        None => (trimmed, Vec::new()),
    };

    let tokens: Vec<&str> = head.split_whitespace().collect();
    if tokens == ["br"] && hidden.is_empty() {
        let arch = Architecture::new(input_size, hidden, Activation::Tanh)?;
        return Ok(ModelSpec::new(arch, Granularity::Fixed, false));
    }

    let mut activation = Activation::Tanh;
    let mut granularity = Granularity::Fixed;
    let mut variable_sigma = false;
    // Tokens must appear in grammar order: r, granularity, sv.
    let mut stage = 0;
    for tok in tokens {
        let tok_stage = match tok {
            "r" => 1,
            "sh" | "lh" | "ih" => 2,
            "sv" => 3,
            other => return Err(err(format!("unknown token {other:?}; valid tokens are {VALID_TOKENS}"))),
        };
        if tok_stage <= stage {
            return Err(err(format!("token {tok:?} is repeated or out of order")));
        }
        stage = tok_stage;
        match tok {
            "r" => activation = Activation::Relu,
            "sh" => granularity = Granularity::Single,
            "lh" => granularity = Granularity::Layer,
            "ih" => granularity = Granularity::InputSize,
            _ => variable_sigma = true,
        }
    }

    let arch = Architecture::new(input_size, hidden, activation)?;
    Ok(ModelSpec::new(arch, granularity, variable_sigma))
}

/// Canonical name, e.g. `lh sv (4, 4)` or `br`.
pub fn format_name(spec: &ModelSpec) -> String {
    let mut parts: Vec<String> = Vec::new();
    if spec.arch.activation() == Activation::Relu {
        parts.push("r".into());
    }
    if let Some(tok) = spec.granularity.token() {
        parts.push(tok.into());
    }
    if spec.variable_sigma {
        parts.push("sv".into());
    }
    if !spec.arch.hidden().is_empty() {
        let sizes: Vec<String> = spec.arch.hidden().iter().map(|n| n.to_string()).collect();
        parts.push(format!("({})", sizes.join(", ")));
    }
    if parts.is_empty() {
        "br".into()
    } else {
        parts.join(" ")
    }
}

/// Hidden-layer shapes of the experiment grid, in report order.
pub const GRID_ARCHITECTURES: [&[usize]; 9] = [
    &[2],
    &[4],
    &[8],
    &[2, 2],
    &[4, 4],
    &[2, 2, 2],
    &[4, 4, 4],
    &[2, 2, 2, 2],
    &[4, 4, 4, 4],
];

/// The 49 grid models in report order: the four models without hidden
/// layers, then for each architecture tanh, relu, and the three sampled-width
/// granularities.
pub fn model_grid() -> Vec<ModelSpec> {
    let mut names: Vec<String> = ["br", "sh sv", "lh sv", "ih sv"].map(String::from).to_vec();
    for hidden in GRID_ARCHITECTURES {
        let sizes: Vec<String> = hidden.iter().map(|n| n.to_string()).collect();
        let h = format!("({})", sizes.join(", "));
        for prefix in ["", "r ", "sh sv ", "lh sv ", "ih sv "] {
            names.push(format!("{prefix}{h}"));
        }
    }
    names
        .iter()
        .map(|n| parse_name(n).expect("grid names are valid"))
        .collect()
}
