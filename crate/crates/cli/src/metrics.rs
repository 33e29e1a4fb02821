use std::io::Write;

use serde::{Deserialize, Serialize};

/// One training iteration. `val_acc` and `ci95` are `null` on iterations
/// without validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_light_edge: f64,
    pub loss_color_edge: f64,
    pub loss_node: f64,
    pub val_acc: Option<f64>,
    pub ci95: Option<f64>,
    pub wall_ms: u64,
}

/// One point of an ablation curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub axis: String,
    pub value: usize,
    pub mean_acc: f64,
    pub ci95: f64,
    pub iterations: usize,
    pub wall_ms: u64,
}

pub fn write_json_line<T: Serialize, W: Write + ?Sized>(out: &mut W, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    out.flush()
}
