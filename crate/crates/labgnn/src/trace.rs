use std::io::Write;

use metalab_tensor::Real;
use serde_json::json;

use crate::{DualGraphState, GnnError, Result};

/// Largest episode whose edge matrices are written out.
pub const TRACE_LIMIT: usize = 10;

/// One JSON object per line and per `(generation, episode)`, holding both
/// edge matrices.
pub fn write_trace<F: Real, W: Write>(history: &[DualGraphState<'_, F>], mut out: W) -> Result<()> {
    for state in history {
        let (el, ec) = (state.e_light.value(), state.e_color.value());
        let s = el.shape();
        if s[1] > TRACE_LIMIT {
            return Err(GnnError::TraceTooLarge { limit: TRACE_LIMIT, got: s[1] });
        }
        let rows = |a: &ndarray::ArrayD<F>, b: usize| -> Vec<Vec<f64>> {
            (0..s[1])
                .map(|i| (0..s[2]).map(|j| a[[b, i, j]].to_f64().unwrap_or(f64::NAN)).collect())
                .collect()
        };
        for b in 0..s[0] {
            let line = json!({
                "generation": state.generation,
                "episode": b,
                "e_light": rows(&el, b),
                "e_color": rows(&ec, b),
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}
