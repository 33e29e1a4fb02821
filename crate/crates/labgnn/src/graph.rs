use metalab_labnet::GroupedEmbedding;
use metalab_tensor::ops;
use metalab_tensor::{BoundParams, Real, Var};
use ndarray::{Array2, Array3, ArrayD, Axis, Ix3};

use crate::params::{Branch, GnnConfig, COLOR_LAYERING, LIGHT_GRADIENT};
use crate::{GnnError, Result};

/// Nodes and edges of both subgraphs after generation `generation`.
#[derive(Debug, Clone, Copy)]
pub struct DualGraphState<'g, F: Real> {
    /// `[B × T × d]`
    pub v_light: Var<'g, F>,
    pub v_color: Var<'g, F>,
    /// `[B × T × T]`, symmetric, unit diagonal, entries in `[0, 1]`.
    pub e_light: Var<'g, F>,
    pub e_color: Var<'g, F>,
    pub generation: usize,
}

fn dims<F: Real>(v: Var<'_, F>, cfg: &GnnConfig) -> Result<(usize, usize)> {
    match v.shape()[..] {
        [b, t, d] if d == cfg.embed_dim && t >= 1 => Ok((b, t)),
        _ => Err(GnnError::Config(format!(
            "node features must be [B × T × {}], got {:?}",
            cfg.embed_dim,
            v.shape()
        ))),
    }
}

/// The nodes start as the last-tier embeddings, unchanged.
pub fn init_nodes<'g, F: Real>(emb: &GroupedEmbedding<'g, F>) -> (Var<'g, F>, Var<'g, F>) {
    (emb.ls_light, emb.ls_color)
}

/// Interacter: `S[i][j] = σ(MLP(|vᵢ − vⱼ|))` with a unit diagonal.
///
/// The MLP is affine d→d, batch norm over all `B·T·T` pairs, ReLU,
/// affine d→1.
pub fn similarity<'g, F: Real>(
    v: Var<'g, F>,
    branch: Branch,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    let (b, t) = dims(v, cfg)?;
    let p = |leaf: &str| params.get(&format!("{}.{leaf}", branch.similarity_prefix()));
    let diffs = ops::reshape(ops::pairwise_abs_diff(v)?, &[b * t * t, cfg.embed_dim])?;
    let h = ops::linear(diffs, p("fc1.w")?, None)?;
    let h = ops::relu(ops::batchnorm1d(h, p("bn.gamma")?, p("bn.beta")?, F::of(cfg.bn_eps))?);
    let s = ops::sigmoid(ops::linear(h, p("fc2.w")?, Some(p("fc2.b")?))?);
    Ok(ops::set_diagonal(ops::reshape(s, &[b, t, t])?, F::one())?)
}

/// `E₀^L` from the light penultimate embeddings and `E₀^C` from the color
/// ones.
pub fn init_edges<'g, F: Real>(
    emb: &GroupedEmbedding<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    Ok((
        similarity(emb.pe_light, Branch::Light, params, cfg)?,
        similarity(emb.pe_color, Branch::Color, params, cfg)?,
    ))
}

fn update_edges<'g, F: Real>(
    nodes: Var<'g, F>,
    previous: Var<'g, F>,
    branch: Branch,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    let s = similarity(nodes, branch, params, cfg)?;
    Ok(ops::set_diagonal(ops::mul(s, previous)?, F::one())?)
}

/// `E_ĝ^L = S^L(V^L) ∘ E_{ĝ−1}^L`, diagonal reset to one.
pub fn update_light_edges<'g, F: Real>(
    v_light: Var<'g, F>,
    previous: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    update_edges(v_light, previous, Branch::Light, params, cfg)
}

/// `E_ĝ^C = S^C(V^C) ∘ E_{ĝ−1}^C`, diagonal reset to one.
pub fn update_color_edges<'g, F: Real>(
    v_color: Var<'g, F>,
    previous: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    update_edges(v_color, previous, Branch::Color, params, cfg)
}

/// `MLP([Ê·V ; V])` with `Ê = rownorm(E ∘ (J − I) + I)`.
fn aggregate<'g, F: Real>(
    edges: Var<'g, F>,
    nodes: Var<'g, F>,
    prefix: &str,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    let (b, t) = dims(nodes, cfg)?;
    if edges.shape() != [b, t, t] {
        return Err(GnnError::Config(format!(
            "edges {:?} do not match nodes {:?}",
            edges.shape(),
            nodes.shape()
        )));
    }
    let graph = edges.graph();
    let off_diagonal = graph.constant(Array2::from_shape_fn((t, t), |(i, j)| F::of((i != j) as u8 as f64)).into_dyn());
    let identity = graph.constant(Array2::<F>::eye(t).into_dyn());
    let masked = ops::add(ops::mul(edges, off_diagonal)?, identity)?;
    let normalized = ops::div(masked, ops::sum_axis(masked, 2, true)?)?;
    let gathered = ops::bmm(normalized, nodes)?;
    let joined = ops::reshape(ops::concat(&[gathered, nodes], 2)?, &[b * t, 2 * cfg.embed_dim])?;
    let p = |leaf: &str| params.get(&format!("{prefix}.{leaf}"));
    let h = ops::relu(ops::linear(joined, p("fc1.w")?, Some(p("fc1.b")?))?);
    let out = ops::linear(h, p("fc2.w")?, Some(p("fc2.b")?))?;
    Ok(ops::reshape(out, &[b, t, cfg.embed_dim])?)
}

/// Color layering: new color nodes aggregated along light edges.
pub fn color_layering<'g, F: Real>(
    e_light: Var<'g, F>,
    v_color: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    aggregate(e_light, v_color, COLOR_LAYERING, params, cfg)
}

/// Light gradient: new light nodes aggregated along color edges.
pub fn light_gradient<'g, F: Real>(
    e_color: Var<'g, F>,
    v_light: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Var<'g, F>> {
    aggregate(e_color, v_light, LIGHT_GRADIENT, params, cfg)
}

/// Initial state plus `generations` full cycles; the result has
/// `generations + 1` entries.
pub fn run_generations<'g, F: Real>(
    emb: &GroupedEmbedding<'g, F>,
    generations: usize,
    params: &BoundParams<'g, F>,
    cfg: &GnnConfig,
) -> Result<Vec<DualGraphState<'g, F>>> {
    cfg.validate()?;
    if generations == 0 {
        return Err(GnnError::Config("at least one generation is required".into()));
    }
    let (v_light, v_color) = init_nodes(emb);
    let (e_light, e_color) = init_edges(emb, params, cfg)?;
    let mut history = vec![DualGraphState { v_light, v_color, e_light, e_color, generation: 0 }];
    for generation in 1..=generations {
        let prev = history[generation - 1];
        let e_light = update_light_edges(prev.v_light, prev.e_light, params, cfg)?;
        let v_color = color_layering(e_light, prev.v_color, params, cfg)?;
        let e_color = update_color_edges(v_color, prev.e_color, params, cfg)?;
        let v_light = light_gradient(e_color, prev.v_light, params, cfg)?;
        if !v_light.value().iter().chain(v_color.value().iter()).all(|x| x.is_finite()) {
            return Err(GnnError::NonFinite(generation));
        }
        history.push(DualGraphState { v_light, v_color, e_light, e_color, generation });
    }
    Ok(history)
}

/// `score[b][q][c] = Σ_{j < NK} E[b][NK + q][j] · H[b][j][c]`.
///
/// `support_onehot` is `[B × NK × K]`; the result is `[B × (T − NK) × K]`.
pub fn class_scores<'g, F: Real>(edges: Var<'g, F>, support_onehot: Var<'g, F>) -> Result<Var<'g, F>> {
    let es = edges.shape();
    let hs = support_onehot.shape();
    if es.len() != 3 || hs.len() != 3 || es[0] != hs[0] || es[1] != es[2] || hs[1] >= es[1] {
        return Err(GnnError::Config(format!(
            "edges {es:?} and support one-hot {hs:?} are incompatible"
        )));
    }
    let nk = hs[1];
    let query_rows = ops::slice_axis(edges, 1, nk..es[1])?;
    let to_support = ops::slice_axis(query_rows, 2, 0..nk)?;
    Ok(ops::bmm(to_support, support_onehot)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    /// `[B × T_query × K]`
    pub scores: Array3<F>,
    /// `[B × T_query]`; ties go to the lowest class index.
    pub labels: Array2<usize>,
}

/// Class scores from final light edges and the argmax label of every query.
/// `support_labels` is `[B × NK]` with values in `[0, k)`.
pub fn predict<F: Real>(e_light: &ArrayD<F>, support_labels: &Array2<usize>, k: usize) -> Result<Prediction<F>> {
    let e = e_light
        .view()
        .into_dimensionality::<Ix3>()
        .map_err(|_| GnnError::Config(format!("edges must be [B × T × T], got {:?}", e_light.shape())))?;
    let (b, t, _) = e.dim();
    let (sb, nk) = support_labels.dim();
    if sb != b || nk >= t {
        return Err(GnnError::Config(format!(
            "support labels {:?} do not fit edges {:?}",
            support_labels.dim(),
            e.dim()
        )));
    }
    if let Some(&bad) = support_labels.iter().find(|&&l| l >= k) {
        return Err(GnnError::Config(format!("support label {bad} outside [0, {k})")));
    }
    let tq = t - nk;
    let mut scores = Array3::<F>::zeros((b, tq, k));
    for bi in 0..b {
        for q in 0..tq {
            for j in 0..nk {
                scores[[bi, q, support_labels[[bi, j]]]] += e[[bi, nk + q, j]];
            }
        }
    }
    let labels = scores.map_axis(Axis(2), |row| {
        row.iter()
            .enumerate()
            .fold((0, F::neg_infinity()), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
            .0
    });
    Ok(Prediction { scores, labels })
}

/// One-hot support matrix `[B × NK × K]` for [`class_scores`].
pub fn support_onehot<F: Real>(support_labels: &Array2<usize>, k: usize) -> Result<ArrayD<F>> {
    let (b, nk) = support_labels.dim();
    let mut out = Array3::<F>::zeros((b, nk, k));
    for ((bi, j), &l) in support_labels.indexed_iter() {
        if l >= k {
            return Err(GnnError::Config(format!("support label {l} outside [0, {k})")));
        }
        out[[bi, j, l]] = F::one();
    }
    Ok(out.into_dyn())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, IxDyn};

    #[test]
    fn uniform_edges_tie_to_class_zero() {
        let e = ArrayD::from_elem(IxDyn(&[1, 4, 4]), 0.5f64);
        let labels = array![[0, 1]];
        let p = predict(&e, &labels, 2).unwrap();
        assert_eq!(p.labels, array![[0, 0]]);
        assert_eq!(p.scores[[0, 0, 0]], p.scores[[0, 0, 1]]);
    }

    #[test]
    fn support_onehot_rejects_bad_labels() {
        assert!(support_onehot::<f64>(&array![[0, 3]], 3).is_err());
        let h = support_onehot::<f64>(&array![[2, 0]], 3).unwrap();
        assert_eq!(h[[0, 0, 2]], 1.0);
        assert_eq!(h.sum(), 2.0);
    }
}
