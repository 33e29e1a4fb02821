use ndarray::{Array2, ArrayD, Ix2};

use crate::{Real, Result, TensorError, Var};

/// One-hot matrix `[n × classes]` for the given labels.
pub fn one_hot<F: Real>(labels: &[usize], classes: usize) -> Result<ArrayD<F>> {
    let mut out = Array2::<F>::zeros((labels.len(), classes));
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(TensorError::LabelOutOfRange { label, classes });
        }
        out[[row, label]] = F::one();
    }
    Ok(out.into_dyn())
}

/// Mean over rows of `−log softmax(logits)[label]`.
pub fn softmax_cross_entropy<'g, F: Real>(logits: Var<'g, F>, labels: &[usize]) -> Result<Var<'g, F>> {
    let lv = logits.value();
    let z = lv
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| TensorError::shape("softmax_cross_entropy", format!("logits must be [n × K], got {:?}", lv.shape())))?;
    let (n, k) = z.dim();
    if labels.len() != n || n == 0 {
        return Err(TensorError::shape(
            "softmax_cross_entropy",
            format!("{n} rows but {} labels", labels.len()),
        ));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(TensorError::LabelOutOfRange { label, classes: k });
    }
    let mut probs = Array2::<F>::zeros((n, k));
    let mut total = F::zero();
    for (i, row) in z.outer_iter().enumerate() {
        let (arg, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, F::neg_infinity()), |best, (c, v)| if v > best.1 { (c, v) } else { best });
        // log Σ exp(z − max) = ln(1 + rest), with the max term excluded from rest
        let mut rest = F::zero();
        for (c, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            probs[[i, c]] = e;
            if c != arg {
                rest += e;
            }
        }
        let denom = F::one() + rest;
        probs.row_mut(i).mapv_inplace(|p| p / denom);
        total += (max - row[labels[i]]) + rest.ln_1p();
    }
    let inv_n = F::one() / F::of(n as f64);
    let out = ArrayD::from_elem(ndarray::IxDyn(&[]), total * inv_n);
    let labels = labels.to_vec();
    Ok(logits.graph().push_op(
        out,
        &[logits],
        Box::new(move |g, _| {
            let s = g.iter().next().copied().unwrap_or_else(F::zero) * inv_n;
            let mut d = probs.clone();
            for (i, &l) in labels.iter().enumerate() {
                d[[i, l]] -= F::one();
            }
            d.mapv_inplace(|v| v * s);
            vec![Some(d.into_dyn())]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_k() {
        let g = Graph::<f64>::new();
        let z = g.constant(ArrayD::zeros(ndarray::IxDyn(&[3, 5])));
        let l = softmax_cross_entropy(z, &[0, 2, 4]).unwrap().scalar();
        assert!((l - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_hot_logit() {
        // -ln(e / (e + 4))
        let g = Graph::<f64>::new();
        let z = g.constant(array![[1.0, 0.0, 0.0, 0.0, 0.0]].into_dyn());
        let l = softmax_cross_entropy(z, &[0]).unwrap().scalar();
        let expected = -(1f64.exp() / (1f64.exp() + 4.0)).ln();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.9048).abs() < 1e-4);
    }

    #[test]
    fn large_margin_tends_to_zero() {
        let g = Graph::<f64>::new();
        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 100.0, 500.0] {
            let z = g.constant(array![[margin, 0.0, 0.0]].into_dyn());
            let l = softmax_cross_entropy(z, &[0]).unwrap().scalar();
            assert!(l.is_finite() && l < prev);
            prev = l;
        }
        assert!(prev < 1e-200);
    }

    #[test]
    fn label_out_of_range() {
        let g = Graph::<f64>::new();
        let z = g.constant(ArrayD::zeros(ndarray::IxDyn(&[1, 3])));
        assert!(matches!(
            softmax_cross_entropy(z, &[3]),
            Err(TensorError::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(one_hot::<f64>(&[0, 5], 5).is_err());
        assert_eq!(one_hot::<f64>(&[1], 3).unwrap(), array![[0.0, 1.0, 0.0]].into_dyn());
    }
}
