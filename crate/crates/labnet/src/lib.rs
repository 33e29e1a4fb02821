//! LabNet: four Lab-Blocks with two channel groups followed by per-group
//! fully connected heads at two depths.
//!
//! Channel group 0 consumes the cloned lightness channels `(L, L)` and group 1
//! the opponent channels `(a, b)`. Grouped convolutions keep the two streams
//! separate all the way to the heads, so light embeddings never depend on
//! `a`/`b` and color embeddings never depend on `L`.
//!
//! Convolutions feeding batch norm carry no bias, and neither do the
//! penultimate heads: batch norm removes a per-channel constant and the
//! penultimate embeddings are only consumed through pairwise differences, so
//! such biases would be dead parameters with identically zero gradient.

use metalab_tensor::ops::{self, Conv2dSpec};
use metalab_tensor::{BoundParams, ParamStore, Real, TensorError, Var};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;

pub const BLOCKS: usize = 4;
pub const GROUPS: usize = 2;
/// Channels per group in the LLAB input.
const INPUT_PER_GROUP: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum LabNetError {
    #[error("invalid LabNet configuration: {0}")]
    Config(String),
    #[error("block {block} expects {expected} input channels, got {got}")]
    ChannelPlan { block: usize, expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = LabNetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabNetConfig {
    /// `H`: channels per group after the first block.
    pub hidden_h: usize,
    /// Coherent embedding dimension shared with the graph nodes.
    pub embed_dim: usize,
    /// Square input side in pixels.
    pub input_size: usize,
    pub bn_eps: f64,
}

impl Default for LabNetConfig {
    fn default() -> Self {
        LabNetConfig {
            hidden_h: 96,
            embed_dim: 128,
            input_size: 84,
            bn_eps: 1e-5,
        }
    }
}

impl LabNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_h == 0 {
            return Err(LabNetError::Config("hidden_h must be positive".into()));
        }
        if self.embed_dim == 0 {
            return Err(LabNetError::Config("embed_dim must be positive".into()));
        }
        if self.input_size < 1 << BLOCKS {
            return Err(LabNetError::Config(format!(
                "input_size {} is too small for {BLOCKS} 2×2 poolings (need ≥ {})",
                self.input_size,
                1 << BLOCKS
            )));
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return Err(LabNetError::Config("bn_eps must be positive".into()));
        }
        Ok(())
    }

    /// Output channels per group of each block: `[H, 2H, 4H, 4H]`.
    pub fn group_plan(&self) -> [usize; BLOCKS] {
        let h = self.hidden_h;
        [h, 2 * h, 4 * h, 4 * h]
    }

    /// `(input, output)` channels per group of block `block` (1-based).
    pub fn block_channels(&self, block: usize) -> (usize, usize) {
        let plan = self.group_plan();
        let input = if block == 1 { INPUT_PER_GROUP } else { plan[block - 2] };
        (input, plan[block - 1])
    }

    /// Width of each head input (per group, after global max-pooling).
    pub fn head_input(&self, tier: Tier) -> usize {
        match tier {
            Tier::Penultimate => self.group_plan()[2],
            Tier::Last => self.group_plan()[3],
        }
    }

    /// Spatial side after `blocks` Lab-Blocks.
    pub fn spatial_after(&self, blocks: usize) -> usize {
        (0..blocks).fold(self.input_size, |s, _| s / 2)
    }

    /// Every parameter name with its shape, in checkpoint order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for block in 1..=BLOCKS {
            let (cin, cout) = self.block_channels(block);
            let total = GROUPS * cout;
            out.push((format!("labnet.lb{block}.conv.w"), vec![total, cin, 3, 3]));
            out.push((format!("labnet.lb{block}.bn.gamma"), vec![total]));
            out.push((format!("labnet.lb{block}.bn.beta"), vec![total]));
        }
        for tier in [Tier::Penultimate, Tier::Last] {
            for stream in [Stream::Light, Stream::Color] {
                let name = head_name(tier, stream);
                out.push((format!("{name}.w"), vec![self.embed_dim, self.head_input(tier)]));
                if tier == Tier::Last {
                    out.push((format!("{name}.b"), vec![self.embed_dim]));
                }
            }
        }
        out
    }

    /// Fresh parameters: He-uniform convolutions, unit/zero batch-norm
    /// affine, and `U(±1/√fan_in)` heads.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore<F>> {
        self.validate()?;
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
            let value = if name.ends_with(".gamma") {
                ArrayD::from_elem(shape, F::one())
            } else if name.ends_with(".beta") {
                ArrayD::zeros(shape)
            } else if name.contains(".conv.") {
                uniform(rng, &shape, (6.0 / fan_in as f64).sqrt())
            } else {
                let fan_in = if name.ends_with(".b") { self.head_input(Tier::Last) } else { fan_in };
                uniform(rng, &shape, 1.0 / (fan_in as f64).sqrt())
            };
            store.insert(name, value)?;
        }
        Ok(store)
    }
}

fn uniform<F: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> ArrayD<F> {
    ArrayD::from_shape_simple_fn(IxDyn(shape), || F::of(rng.random_range(-bound..=bound)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// After LB₃.
    Penultimate,
    /// After LB₄.
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Light,
    Color,
}

fn head_name(tier: Tier, stream: Stream) -> String {
    let t = match tier {
        Tier::Penultimate => "pe",
        Tier::Last => "ls",
    };
    let s = match stream {
        Stream::Light => "light",
        Stream::Color => "color",
    };
    format!("labnet.fc_{t}_{s}")
}

/// Two-tiered embeddings, each `[B × T × embed_dim]`.
#[derive(Debug, Clone, Copy)]
pub struct GroupedEmbedding<'g, F: Real> {
    pub pe_light: Var<'g, F>,
    pub pe_color: Var<'g, F>,
    pub ls_light: Var<'g, F>,
    pub ls_color: Var<'g, F>,
}

/// One Lab-Block on `[N × C × H × W]`: grouped 3×3 convolution, episodic
/// batch norm, ReLU, 2×2 max-pool.
pub fn lab_block_forward<'g, F: Real>(
    x: Var<'g, F>,
    block: usize,
    params: &BoundParams<'g, F>,
    cfg: &LabNetConfig,
) -> Result<Var<'g, F>> {
    if !(1..=BLOCKS).contains(&block) {
        return Err(LabNetError::Config(format!("block index {block} outside 1..={BLOCKS}")));
    }
    let (cin, _) = cfg.block_channels(block);
    let got = x.shape().get(1).copied().unwrap_or(0);
    if got != GROUPS * cin {
        return Err(LabNetError::ChannelPlan { block, expected: GROUPS * cin, got });
    }
    let p = |leaf: &str| params.get(&format!("labnet.lb{block}.{leaf}"));
    let y = ops::grouped_conv2d(
        x,
        p("conv.w")?,
        None,
        Conv2dSpec { groups: GROUPS, stride: 1, padding: 1 },
    )?;
    let y = ops::batchnorm2d(y, p("bn.gamma")?, p("bn.beta")?, F::of(cfg.bn_eps))?;
    Ok(ops::maxpool2d(ops::relu(y), 2, 2)?)
}

/// Flattens `[B × T × 4 × H × W]` to `[B·T × 4 × H × W]`.
fn flatten_episodes<'g, F: Real>(x: Var<'g, F>, cfg: &LabNetConfig) -> Result<(Var<'g, F>, usize, usize)> {
    let s = x.shape();
    if s.len() != 5 || s[2] != GROUPS * INPUT_PER_GROUP {
        return Err(LabNetError::Config(format!(
            "expected LLAB input [B × T × 4 × H × W], got {s:?}"
        )));
    }
    if s[3] != cfg.input_size || s[4] != cfg.input_size {
        return Err(LabNetError::Config(format!(
            "input is {}×{} but the encoder is configured for {}×{}",
            s[3], s[4], cfg.input_size, cfg.input_size
        )));
    }
    Ok((ops::reshape(x, &[s[0] * s[1], s[2], s[3], s[4]])?, s[0], s[1]))
}

/// Global max-pool, split by group, one FC per group.
fn heads<'g, F: Real>(
    features: Var<'g, F>,
    tier: Tier,
    params: &BoundParams<'g, F>,
    cfg: &LabNetConfig,
    episodes: usize,
    per_episode: usize,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    let pooled = ops::global_max_pool2d(features)?;
    let width = cfg.head_input(tier);
    let mut outs = Vec::with_capacity(GROUPS);
    for (g, stream) in [Stream::Light, Stream::Color].into_iter().enumerate() {
        let part = ops::slice_axis(pooled, 1, g * width..(g + 1) * width)?;
        let name = head_name(tier, stream);
        let w = params.get(&format!("{name}.w"))?;
        let bias = match tier {
            Tier::Penultimate => None,
            Tier::Last => Some(params.get(&format!("{name}.b"))?),
        };
        let y = ops::linear(part, w, bias)?;
        outs.push(ops::reshape(y, &[episodes, per_episode, cfg.embed_dim])?);
    }
    Ok((outs[0], outs[1]))
}

/// Runs LB₁..LB₄ once and returns both tiers.
pub fn encode<'g, F: Real>(
    x_llab: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &LabNetConfig,
) -> Result<GroupedEmbedding<'g, F>> {
    let (mut x, b, t) = flatten_episodes(x_llab, cfg)?;
    for block in 1..=3 {
        x = lab_block_forward(x, block, params, cfg)?;
    }
    let (pe_light, pe_color) = heads(x, Tier::Penultimate, params, cfg, b, t)?;
    let x = lab_block_forward(x, 4, params, cfg)?;
    let (ls_light, ls_color) = heads(x, Tier::Last, params, cfg, b, t)?;
    Ok(GroupedEmbedding {
        pe_light,
        pe_color,
        ls_light,
        ls_color,
    })
}

/// `(E₁^Pe, E₂^Pe)`: LB₁..LB₃, global max-pool, per-group FC.
pub fn embed_penultimate<'g, F: Real>(
    x_llab: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &LabNetConfig,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    let (mut x, b, t) = flatten_episodes(x_llab, cfg)?;
    for block in 1..=3 {
        x = lab_block_forward(x, block, params, cfg)?;
    }
    heads(x, Tier::Penultimate, params, cfg, b, t)
}

/// `(E₁^Ls, E₂^Ls)`: LB₁..LB₄, global max-pool, per-group FC.
pub fn embed_last<'g, F: Real>(
    x_llab: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &LabNetConfig,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    let (mut x, b, t) = flatten_episodes(x_llab, cfg)?;
    for block in 1..=BLOCKS {
        x = lab_block_forward(x, block, params, cfg)?;
    }
    heads(x, Tier::Last, params, cfg, b, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use metalab_tensor::Graph;
    use rand::SeedableRng;

    fn tiny() -> LabNetConfig {
        LabNetConfig { hidden_h: 2, embed_dim: 3, input_size: 16, bn_eps: 1e-5 }
    }

    #[test]
    fn channel_plan_doubles_then_holds() {
        let cfg = LabNetConfig::default();
        assert_eq!(cfg.group_plan(), [96, 192, 384, 384]);
        assert_eq!(cfg.block_channels(1), (2, 96));
        assert_eq!(cfg.block_channels(4), (384, 384));
        assert_eq!(cfg.head_input(Tier::Penultimate), 384);
        assert_eq!(cfg.spatial_after(4), 5);
    }

    #[test]
    fn parameter_names_are_stable() {
        let names: Vec<String> = tiny().param_shapes().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"labnet.lb1.conv.w".to_string()));
        assert!(names.contains(&"labnet.lb4.bn.beta".to_string()));
        assert!(names.contains(&"labnet.fc_pe_color.w".to_string()));
        assert!(names.contains(&"labnet.fc_ls_light.b".to_string()));
        assert!(!names.contains(&"labnet.fc_pe_light.b".to_string()));
        assert_eq!(names.len(), 4 * 3 + 2 + 4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(LabNetConfig { hidden_h: 0, ..tiny() }.validate().is_err());
        assert!(LabNetConfig { embed_dim: 0, ..tiny() }.validate().is_err());
        assert!(LabNetConfig { input_size: 15, ..tiny() }.validate().is_err());
    }

    #[test]
    fn block_rejects_wrong_channel_count() {
        let cfg = tiny();
        let params = cfg.init_params::<f64, _>(&mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
        let g = Graph::new();
        let bound = params.bind_frozen(&g);
        let x = g.constant(ArrayD::zeros(IxDyn(&[2, 3, 16, 16])));
        assert!(matches!(
            lab_block_forward(x, 1, &bound, &cfg),
            Err(LabNetError::ChannelPlan { block: 1, expected: 4, got: 3 })
        ));
    }
}
