//! Scalar-loop reference of the graph trajectory, used as a test oracle.
//!
//! Written independently of the tensor engine: plain nested `Vec`s, one
//! scalar at a time. Slow, but every formula is visible on one line.

use metalab_tensor::ParamStore;

use crate::params::{Branch, COLOR_LAYERING, LIGHT_GRADIENT};

/// `[T][d]` node features or `[T][T]` edges of one episode.
pub type Mat = Vec<Vec<f64>>;

/// Embeddings of `B` episodes, each `[T][d]`.
#[derive(Debug, Clone)]
pub struct ScalarEmbedding {
    pub pe_light: Vec<Mat>,
    pub pe_color: Vec<Mat>,
    pub ls_light: Vec<Mat>,
    pub ls_color: Vec<Mat>,
}

#[derive(Debug, Clone)]
pub struct ScalarState {
    pub v_light: Vec<Mat>,
    pub v_color: Vec<Mat>,
    pub e_light: Vec<Mat>,
    pub e_color: Vec<Mat>,
}

fn weight(params: &ParamStore<f64>, name: &str) -> Mat {
    let w = params.get(name).unwrap_or_else(|_| panic!("missing parameter {name}"));
    let (rows, cols) = (w.shape()[0], w.shape().get(1).copied().unwrap_or(1));
    let flat: Vec<f64> = w.iter().copied().collect();
    flat.chunks(cols).take(rows).map(<[f64]>::to_vec).collect()
}

fn vector(params: &ParamStore<f64>, name: &str) -> Vec<f64> {
    params
        .get(name)
        .unwrap_or_else(|_| panic!("missing parameter {name}"))
        .iter()
        .copied()
        .collect()
}

fn affine(w: &Mat, b: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(o, row)| {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for (k, wk) in row.iter().enumerate() {
                acc += wk * x[k];
            }
            acc
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pairwise similarity for every episode; batch norm statistics span all
/// `B·T·T` pairs, the diagonal included.
pub fn similarity(nodes: &[Mat], branch: Branch, params: &ParamStore<f64>, eps: f64) -> Vec<Mat> {
    let p = branch.similarity_prefix();
    let w1 = weight(params, &format!("{p}.fc1.w"));
    let gamma = vector(params, &format!("{p}.bn.gamma"));
    let beta = vector(params, &format!("{p}.bn.beta"));
    let w2 = weight(params, &format!("{p}.fc2.w"));
    let b2 = vector(params, &format!("{p}.fc2.b"));

    let mut hidden = Vec::new();
    for v in nodes {
        for vi in v {
            for vj in v {
                let diff: Vec<f64> = vi.iter().zip(vj).map(|(a, b)| (a - b).abs()).collect();
                hidden.push(affine(&w1, None, &diff));
            }
        }
    }
    let width = w1.len();
    let m = hidden.len() as f64;
    for o in 0..width {
        let mean = hidden.iter().map(|h| h[o]).sum::<f64>() / m;
        let var = hidden.iter().map(|h| (h[o] - mean).powi(2)).sum::<f64>() / m;
        for h in hidden.iter_mut() {
            h[o] = (gamma[o] * (h[o] - mean) / (var + eps).sqrt() + beta[o]).max(0.0);
        }
    }
    let mut pairs = hidden.into_iter();
    nodes
        .iter()
        .map(|v| {
            let t = v.len();
            (0..t)
                .map(|i| {
                    (0..t)
                        .map(|j| {
                            let h = pairs.next().expect("one hidden vector per pair");
                            if i == j {
                                1.0
                            } else {
                                sigmoid(affine(&w2, Some(&b2), &h)[0])
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn update_edges(nodes: &[Mat], previous: &[Mat], branch: Branch, params: &ParamStore<f64>, eps: f64) -> Vec<Mat> {
    let s = similarity(nodes, branch, params, eps);
    s.iter()
        .zip(previous)
        .map(|(s, e)| {
            (0..s.len())
                .map(|i| (0..s.len()).map(|j| if i == j { 1.0 } else { s[i][j] * e[i][j] }).collect())
                .collect()
        })
        .collect()
}

fn aggregate(edges: &[Mat], nodes: &[Mat], prefix: &str, params: &ParamStore<f64>) -> Vec<Mat> {
    let w1 = weight(params, &format!("{prefix}.fc1.w"));
    let b1 = vector(params, &format!("{prefix}.fc1.b"));
    let w2 = weight(params, &format!("{prefix}.fc2.w"));
    let b2 = vector(params, &format!("{prefix}.fc2.b"));
    edges
        .iter()
        .zip(nodes)
        .map(|(e, v)| {
            let t = v.len();
            let d = v[0].len();
            (0..t)
                .map(|i| {
                    let weights: Vec<f64> = (0..t).map(|j| if i == j { 1.0 } else { e[i][j] }).collect();
                    let total: f64 = weights.iter().sum();
                    let mut joined = vec![0.0; 2 * d];
                    for j in 0..t {
                        for k in 0..d {
                            joined[k] += weights[j] / total * v[j][k];
                        }
                    }
                    joined[d..].copy_from_slice(&v[i]);
                    let hidden: Vec<f64> = affine(&w1, Some(&b1), &joined).into_iter().map(|x| x.max(0.0)).collect();
                    affine(&w2, Some(&b2), &hidden)
                })
                .collect()
        })
        .collect()
}

/// Full trajectory, `generations + 1` states.
pub fn run_generations(emb: &ScalarEmbedding, generations: usize, params: &ParamStore<f64>, eps: f64) -> Vec<ScalarState> {
    let mut history = vec![ScalarState {
        v_light: emb.ls_light.clone(),
        v_color: emb.ls_color.clone(),
        e_light: similarity(&emb.pe_light, Branch::Light, params, eps),
        e_color: similarity(&emb.pe_color, Branch::Color, params, eps),
    }];
    for _ in 0..generations {
        let prev = history.last().expect("non-empty history");
        let e_light = update_edges(&prev.v_light, &prev.e_light, Branch::Light, params, eps);
        let v_color = aggregate(&e_light, &prev.v_color, COLOR_LAYERING, params);
        let e_color = update_edges(&v_color, &prev.e_color, Branch::Color, params, eps);
        let v_light = aggregate(&e_color, &prev.v_light, LIGHT_GRADIENT, params);
        history.push(ScalarState { v_light, v_color, e_light, e_color });
    }
    history
}
