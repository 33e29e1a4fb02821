use metalab_colorspace::RgbBatch;
use ndarray::{Array2, Array5};
use rand::seq::index::sample;
use rand::Rng;

use crate::{EpisodicError, Result, Split};

/// `K`-way `N`-shot episodes with `Q` queries per class, `B` per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeSpec {
    pub k: usize,
    pub n: usize,
    pub q: usize,
    pub b: usize,
}

impl EpisodeSpec {
    pub fn new(k: usize, n: usize, q: usize, b: usize) -> Result<Self> {
        let spec = EpisodeSpec { k, n, q, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.n < 1 || self.q < 1 || self.b < 1 {
            return Err(EpisodicError::Config(format!(
                "episodes need K ≥ 2, N ≥ 1, Q ≥ 1, B ≥ 1; got K={} N={} Q={} B={}",
                self.k, self.n, self.q, self.b
            )));
        }
        Ok(())
    }

    /// Images per episode, `K·(N+Q)`.
    pub fn t(&self) -> usize {
        self.k * (self.n + self.q)
    }

    pub fn support_len(&self) -> usize {
        self.n * self.k
    }

    pub fn query_len(&self) -> usize {
        self.k * self.q
    }
}

/// A batch of episodes. Within each episode the first `N·K` images are the
/// support set (class `c` at `c·N..(c+1)·N`) and the remaining `K·Q` are
/// queries (class `c` at `N·K + c·Q..`).
#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub spec: EpisodeSpec,
    /// `[B × T × 3 × S × S]` in `[0, 1]`.
    pub images: RgbBatch,
    /// Episode-local labels `[B × T]` in `[0, K)`.
    pub labels: Array2<usize>,
    /// `class_map[[b, c]]` is the split-level class index of local class `c`.
    pub class_map: Array2<usize>,
}

impl EpisodeBatch {
    pub fn support_labels(&self) -> Array2<usize> {
        self.labels.slice(ndarray::s![.., ..self.spec.support_len()]).to_owned()
    }

    pub fn query_labels(&self) -> Array2<usize> {
        self.labels.slice(ndarray::s![.., self.spec.support_len()..]).to_owned()
    }
}

pub fn sample_episode<R: Rng + ?Sized>(split: &Split, spec: EpisodeSpec, rng: &mut R) -> Result<EpisodeBatch> {
    spec.validate()?;
    let per_class = spec.n + spec.q;
    let eligible: Vec<usize> =
        (0..split.classes.len()).filter(|&c| split.classes[c].images.len() >= per_class).collect();
    if eligible.len() < spec.k {
        return Err(EpisodicError::Config(format!(
            "{}-way episodes need {} classes with at least {per_class} images each, the split has {}",
            spec.k,
            spec.k,
            eligible.len()
        )));
    }
    let size = split.classes[eligible[0]].images[0].width() as usize;
    let t = spec.t();
    let nk = spec.support_len();
    let mut images = Array5::<f64>::zeros((spec.b, t, 3, size, size));
    let mut labels = Array2::<usize>::zeros((spec.b, t));
    let mut class_map = Array2::<usize>::zeros((spec.b, spec.k));
    for b in 0..spec.b {
        for (local, pick) in sample(rng, eligible.len(), spec.k).into_iter().enumerate() {
            let class = &split.classes[eligible[pick]];
            class_map[[b, local]] = eligible[pick];
            for (i, item) in sample(rng, class.images.len(), per_class).into_iter().enumerate() {
                let slot = if i < spec.n { local * spec.n + i } else { nk + local * spec.q + (i - spec.n) };
                labels[[b, slot]] = local;
                let img = &class.images[item];
                if img.width() as usize != size || img.height() as usize != size {
                    return Err(EpisodicError::Dataset(format!("class {} mixes image sizes", class.name)));
                }
                for (x, y, px) in img.enumerate_pixels() {
                    for c in 0..3 {
                        images[[b, slot, c, y as usize, x as usize]] = f64::from(px[c]) / 255.0;
                    }
                }
            }
        }
    }
    Ok(EpisodeBatch { spec, images: RgbBatch::new(images)?, labels, class_map })
}
