use metalab_labgnn::{class_scores, predict, support_onehot, DualGraphState};
use metalab_tensor::{ops, Real, Var};
use ndarray::{s, Array2};

use crate::{EpisodeSpec, EpisodicError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaMode {
    /// `γ` for every counted generation.
    #[default]
    Constant,
    /// `γ · ĝ / g̃`, so later generations weigh more.
    Ramp,
}

impl std::str::FromStr for GammaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(GammaMode::Constant),
            "ramp" => Ok(GammaMode::Ramp),
            other => Err(format!("unknown gamma mode `{other}` (expected constant or ramp)")),
        }
    }
}

impl std::fmt::Display for GammaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GammaMode::Constant => "constant",
            GammaMode::Ramp => "ramp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// `λ`, weight of the color edge loss.
    pub lambda: f64,
    /// `β`, weight of the node loss.
    pub beta: f64,
    /// `γ`, generation factor.
    pub gamma: f64,
    /// `g̃`: only generations `1..=gate` contribute.
    pub gate: usize,
    pub gamma_mode: GammaMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 0.1, beta: 0.1, gamma: 1.0, gate: 3, gamma_mode: GammaMode::Constant }
    }
}

impl LossWeights {
    pub fn validate(&self, generations: usize) -> Result<()> {
        for (name, w) in [("lambda", self.lambda), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(EpisodicError::Config(format!("{name} must be a finite non-negative number, got {w}")));
            }
        }
        if self.gate == 0 || self.gate > generations {
            return Err(EpisodicError::Config(format!(
                "loss generations g̃ = {} must lie in [1, g = {generations}]",
                self.gate
            )));
        }
        Ok(())
    }

    pub fn gamma_at(&self, generation: usize) -> f64 {
        match self.gamma_mode {
            GammaMode::Constant => self.gamma,
            GammaMode::Ramp => self.gamma * generation as f64 / self.gate as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationLoss {
    pub generation: usize,
    pub light_edge: f64,
    pub color_edge: f64,
    pub node: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Generations `1..=g̃` in order.
    pub per_generation: Vec<GenerationLoss>,
    pub total: f64,
    /// Query accuracy from the final light edges.
    pub accuracy: f64,
}

impl LossBreakdown {
    pub fn light_edge(&self) -> f64 {
        self.per_generation.iter().map(|g| g.light_edge).sum()
    }

    pub fn color_edge(&self) -> f64 {
        self.per_generation.iter().map(|g| g.color_edge).sum()
    }

    pub fn node(&self) -> f64 {
        self.per_generation.iter().map(|g| g.node).sum()
    }
}

fn check_labels(labels: &Array2<usize>, spec: &EpisodeSpec) -> Result<()> {
    if labels.dim() != (spec.b, spec.t()) {
        return Err(EpisodicError::Config(format!(
            "labels {:?} do not match B = {}, T = {}",
            labels.dim(),
            spec.b,
            spec.t()
        )));
    }
    Ok(())
}

fn query_targets(labels: &Array2<usize>, spec: &EpisodeSpec) -> Vec<usize> {
    labels.slice(s![.., spec.support_len()..]).iter().copied().collect()
}

fn support_matrix<'g, F: Real>(like: Var<'g, F>, labels: &Array2<usize>, spec: &EpisodeSpec) -> Result<Var<'g, F>> {
    let support = labels.slice(s![.., ..spec.support_len()]).to_owned();
    Ok(like.graph().constant(support_onehot::<F>(&support, spec.k)?))
}

/// Cross-entropy of query nodes against logits `−(1/N) Σ_{j ∈ class} ‖vᵢ − vⱼ‖₁`,
/// averaged over the `B·K·Q` queries.
pub fn node_loss<'g, F: Real>(v_light: Var<'g, F>, labels: &Array2<usize>, spec: &EpisodeSpec) -> Result<Var<'g, F>> {
    check_labels(labels, spec)?;
    let nk = spec.support_len();
    let t = spec.t();
    let dist = ops::pairwise_l1(v_light)?;
    let to_support = ops::slice_axis(ops::slice_axis(dist, 1, nk..t)?, 2, 0..nk)?;
    let per_class = ops::bmm(to_support, support_matrix(v_light, labels, spec)?)?;
    let logits = ops::scale(per_class, F::of(-1.0 / spec.n as f64));
    let logits = ops::reshape(logits, &[spec.b * spec.query_len(), spec.k])?;
    Ok(ops::softmax_cross_entropy(logits, &query_targets(labels, spec))?)
}

/// Cross-entropy of query rows against summed edge weights per support
/// class, averaged over the `B·K·Q` queries.
pub fn edge_loss<'g, F: Real>(edges: Var<'g, F>, labels: &Array2<usize>, spec: &EpisodeSpec) -> Result<Var<'g, F>> {
    check_labels(labels, spec)?;
    let scores = class_scores(edges, support_matrix(edges, labels, spec)?)?;
    let logits = ops::reshape(scores, &[spec.b * spec.query_len(), spec.k])?;
    Ok(ops::softmax_cross_entropy(logits, &query_targets(labels, spec))?)
}

/// `Σ_{ĝ=1}^{g̃} γ_ĝ · (L^L_ĝ + λ·L^C_ĝ + β·L^V_ĝ)`.
///
/// Generations after `g̃` are not read, so they receive no gradient.
pub fn total_loss<'g, F: Real>(
    history: &[DualGraphState<'g, F>],
    labels: &Array2<usize>,
    spec: &EpisodeSpec,
    weights: &LossWeights,
) -> Result<(Var<'g, F>, LossBreakdown)> {
    let generations = history.len().saturating_sub(1);
    weights.validate(generations)?;
    let mut total: Option<Var<'g, F>> = None;
    let mut per_generation = Vec::with_capacity(weights.gate);
    for state in &history[1..=weights.gate] {
        let light = edge_loss(state.e_light, labels, spec)?;
        let color = edge_loss(state.e_color, labels, spec)?;
        let node = node_loss(state.v_light, labels, spec)?;
        let gamma = weights.gamma_at(state.generation);
        let inner = ops::add(
            ops::add(light, ops::scale(color, F::of(weights.lambda)))?,
            ops::scale(node, F::of(weights.beta)),
        )?;
        let term = ops::scale(inner, F::of(gamma));
        total = Some(match total {
            Some(acc) => ops::add(acc, term)?,
            None => term,
        });
        let f = |v: Var<'g, F>| v.scalar().to_f64().unwrap_or(f64::NAN);
        per_generation.push(GenerationLoss {
            generation: state.generation,
            light_edge: f(light),
            color_edge: f(color),
            node: f(node),
            gamma,
        });
    }
    let total = total.expect("gate is at least one");
    let last = history.last().expect("non-empty history");
    let support = labels.slice(s![.., ..spec.support_len()]).to_owned();
    let pred = predict(&last.e_light.value(), &support, spec.k)?;
    let queries = labels.slice(s![.., spec.support_len()..]);
    let correct = pred.labels.iter().zip(queries.iter()).filter(|(p, y)| p == y).count();
    let breakdown = LossBreakdown {
        per_generation,
        total: total.scalar().to_f64().unwrap_or(f64::NAN),
        accuracy: correct as f64 / queries.len() as f64,
    };
    Ok((total, breakdown))
}
