//! Central finite-difference check of reverse-mode gradients.

pub mod suite;

use ndarray::ArrayD;

use crate::{ops, Graph, Result, TensorError, Var};

/// Outcome of [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, floor)` over all checked
    /// entries (`floor` is 1e-8 unless set through [`GradCheckOptions`]).
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Step that produced `numeric` for the worst entry.
    pub step: f64,
    pub entries: usize,
}

/// Which entries of each input to perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    All,
    /// Every `stride`-th flat index (starting at `offset % stride`).
    Strided { stride: usize, offset: usize },
}

/// Settings of [`check_gradients_opts`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference steps, tried in order. An entry moves on to the
    /// next step only while its error is above `tolerance`, and the best
    /// agreement is kept. Several steps let an entry dodge a nearby kink
    /// (smaller step) or the roundoff floor (larger step).
    pub steps: Vec<f64>,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    /// When a plain difference at step `h` misses the tolerance, also try
    /// the Richardson combination `(4·D(h/2) − D(h)) / 3`, which cancels
    /// the `h²` truncation term.
    pub richardson: bool,
    pub coverage: Coverage,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { steps: vec![1e-5], tolerance: 1e-5, floor: 1e-8, richardson: false, coverage: Coverage::All }
    }
}

/// Compares the reverse-mode gradient of `op` against central differences
/// with step `h` for every entry of every input. Non-scalar outputs are
/// summed first.
pub fn check_gradients<Op>(op: Op, inputs: &[ArrayD<f64>], h: f64) -> Result<GradCheckReport>
where
    Op: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    check_gradients_with(op, inputs, h, Coverage::All)
}

pub fn check_gradients_with<Op>(
    op: Op,
    inputs: &[ArrayD<f64>],
    h: f64,
    coverage: Coverage,
) -> Result<GradCheckReport>
where
    Op: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    check_gradients_opts(op, inputs, &GradCheckOptions { steps: vec![h], coverage, ..GradCheckOptions::default() })
}

pub fn check_gradients_opts<Op>(op: Op, inputs: &[ArrayD<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    Op: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
{
    if opts.steps.is_empty() {
        return Err(TensorError::shape("gradcheck", "at least one step is required"));
    }
    let eval = |values: &[ArrayD<f64>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<_> = values.iter().map(|v| g.constant(v.clone())).collect();
        let out = scalarize(op(&g, &vars)?);
        let v = out.scalar();
        if !v.is_finite() {
            return Err(TensorError::NonFinite(format!(
                "gradcheck forward produced {v} (inputs of shapes {:?})",
                values.iter().map(|a| a.shape().to_vec()).collect::<Vec<_>>()
            )));
        }
        Ok(v)
    };

    let analytic: Vec<ArrayD<f64>> = {
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|v| g.leaf(v.clone())).collect();
        let out = scalarize(op(&g, &vars)?);
        if !out.scalar().is_finite() {
            return Err(TensorError::NonFinite(format!("gradcheck output {}", out.scalar())));
        }
        let grads = g.backward(out)?;
        vars.iter().map(|v| grads.wrt(*v).as_standard_layout().into_owned()).collect()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_input: 0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        step: opts.steps[0],
        entries: 0,
    };
    let mut work: Vec<ArrayD<f64>> =
        inputs.iter().map(|a| a.as_standard_layout().into_owned()).collect();
    for (input, grad) in analytic.iter().enumerate() {
        let len = work[input].len();
        let indices: Box<dyn Iterator<Item = usize>> = match opts.coverage {
            Coverage::All => Box::new(0..len),
            Coverage::Strided { stride, offset } => {
                let stride = stride.max(1);
                Box::new((offset % stride..len).step_by(stride))
            }
        };
        for idx in indices {
            let orig = flat(&work[input])[idx];
            let a = flat(grad)[idx];
            let (mut rel, mut abs, mut numeric, mut step) = (f64::INFINITY, f64::INFINITY, 0.0, opts.steps[0]);
            let central = |work: &mut Vec<ArrayD<f64>>, h: f64| -> Result<f64> {
                flat_mut(&mut work[input])[idx] = orig + h;
                let plus = eval(work)?;
                flat_mut(&mut work[input])[idx] = orig - h;
                let minus = eval(work)?;
                flat_mut(&mut work[input])[idx] = orig;
                Ok((plus - minus) / (2.0 * h))
            };
            for &h in &opts.steps {
                let d = central(&mut work, h)?;
                let mut candidates = vec![d];
                let e = (a - d).abs() / a.abs().max(opts.floor);
                if opts.richardson && e > opts.tolerance {
                    let half = central(&mut work, h / 2.0)?;
                    candidates.push((4.0 * half - d) / 3.0);
                }
                for n in candidates {
                    let e = (a - n).abs();
                    let r = e / a.abs().max(opts.floor);
                    if r < rel {
                        (rel, abs, numeric, step) = (r, e, n, h);
                    }
                }
                if rel <= opts.tolerance {
                    break;
                }
            }
            report.entries += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.entries == 1 {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst_input = input;
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
                report.step = step;
            }
        }
    }
    Ok(report)
}

fn scalarize<'g>(v: Var<'g, f64>) -> Var<'g, f64> {
    if v.value().len() == 1 {
        v
    } else {
        ops::sum(v)
    }
}

fn flat(a: &ArrayD<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn flat_mut(a: &mut ArrayD<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}
