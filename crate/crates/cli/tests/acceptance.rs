//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all ten; `-- 3 5` runs a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use metalab_cli::{commands, RunConfig};
use metalab_colorspace::{lab_to_rgb, rgb_to_llab, srgb_to_xyz, xyz_to_lab, NormMode, RgbBatch};
use metalab_episodic::{accuracy_stats, episode_input, forward, make_synthetic_dataset, sample_episode, total_loss};
use metalab_episodic::{EpisodeSpec, LossWeights, MetaLabConfig};
use metalab_labgnn::reference::{self, ScalarEmbedding};
use metalab_labgnn::{predict, run_generations, DualGraphState, GnnConfig};
use metalab_labnet::{encode, GroupedEmbedding, LabNetConfig};
use metalab_tensor::{ops, Graph, ParamStore};
use ndarray::{s, Array2, Array5, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn colorspace_round_trip() -> Outcome {
    let start = Instant::now();
    let n = 16;
    let grid = Array5::from_shape_fn((1, n * n, 3, 1, n), |(_, t, c, _, x)| [t / n, t % n, x][c] as f64 / (n - 1) as f64);
    let rgb = RgbBatch::new(grid.clone()).map_err(|e| e.to_string())?;
    let lab = xyz_to_lab(srgb_to_xyz(&rgb).view()).map_err(|e| e.to_string())?;
    let back = lab_to_rgb(lab.view()).map_err(|e| e.to_string())?;
    let err = grid.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let pixel = |v: f64| {
        let batch = RgbBatch::new(Array5::from_elem((1, 1, 3, 1, 1), v)).unwrap();
        let llab = rgb_to_llab::<f64>(&batch, NormMode::Raw).unwrap();
        let d = llab.data();
        [d[[0, 0, 1, 0, 0]], d[[0, 0, 2, 0, 0]], d[[0, 0, 3, 0, 0]]]
    };
    let white = pixel(1.0);
    let black = pixel(0.0);
    let white_err = (white[0] - 100.0).abs().max(white[1].abs()).max(white[2].abs());
    let black_err = black.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let elapsed = start.elapsed();
    ensure(
        err < 1e-5 && white_err < 1e-9 && black_err < 1e-9 && elapsed < Duration::from_secs(5),
        format!(
            "grid max err {err:.2e}, white err {white_err:.1e}, black err {black_err:.1e}, {:.2} s",
            secs(elapsed)
        ),
    )
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let summary = commands::gradcheck(100, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (name, worst) = summary.primitives.iter().fold(("", 0.0f64), |acc, &(n, e)| if e > acc.1 { (n, e) } else { acc });
    ensure(
        summary.passed() && elapsed < Duration::from_secs(120),
        format!(
            "{} primitives worst {worst:.2e} ({name}), L_total worst {:.2e}, {} trials, {:.1} s",
            summary.primitives.len(),
            summary.end_to_end_worst,
            summary.trials,
            secs(elapsed)
        ),
    )
}

struct GnnCase {
    cfg: GnnConfig,
    params: ParamStore<f64>,
    emb: [ArrayD<f64>; 4],
}

fn gnn_case(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize) -> GnnCase {
    let cfg = GnnConfig::new(d);
    let mut params = cfg.init_params::<f64, _>(rng).unwrap();
    for (_, value) in params.iter_mut() {
        value.mapv_inplace(|v| v + rng.random_range(-0.5..0.5));
    }
    let emb = [(); 4].map(|_| ArrayD::from_shape_fn(IxDyn(&[b, t, d]), |_| rng.random_range(-1.0..1.0)));
    GnnCase { cfg, params, emb }
}

fn bind<'g>(g: &'g Graph<f64>, emb: &[ArrayD<f64>; 4]) -> GroupedEmbedding<'g, f64> {
    GroupedEmbedding {
        pe_light: g.constant(emb[0].clone()),
        pe_color: g.constant(emb[1].clone()),
        ls_light: g.constant(emb[2].clone()),
        ls_color: g.constant(emb[3].clone()),
    }
}

fn nested(a: &ArrayD<f64>) -> Vec<Vec<Vec<f64>>> {
    let s = a.shape();
    (0..s[0]).map(|b| (0..s[1]).map(|i| (0..s[2]).map(|k| a[[b, i, k]]).collect()).collect()).collect()
}

fn graph_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (b, t, d, gens) = (rng.random_range(1..3), rng.random_range(2..6), rng.random_range(1..5), rng.random_range(1..4));
        let c = gnn_case(&mut rng, b, t, d);
        let g = Graph::new();
        let bound = c.params.bind(&g);
        let history = run_generations(&bind(&g, &c.emb), gens, &bound, &c.cfg).map_err(|e| e.to_string())?;
        let scalar = ScalarEmbedding {
            pe_light: nested(&c.emb[0]),
            pe_color: nested(&c.emb[1]),
            ls_light: nested(&c.emb[2]),
            ls_color: nested(&c.emb[3]),
        };
        let expected = reference::run_generations(&scalar, gens, &c.params, c.cfg.bn_eps);
        if history.len() != expected.len() {
            return Err(format!("{} generations vs {} in the oracle", history.len(), expected.len()));
        }
        for (got, want) in history.iter().zip(&expected) {
            for (x, y) in [
                (got.e_light, &want.e_light),
                (got.e_color, &want.e_color),
                (got.v_light, &want.v_light),
                (got.v_color, &want.v_color),
            ] {
                let flat = y.iter().flatten().flatten();
                worst = x.value().iter().zip(flat).fold(worst, |m, (a, b)| m.max((a - b).abs()));
            }
        }
    }
    ensure(worst < 1e-6, format!("50 instances, max deviation {worst:.2e}"))
}

fn edge_violations(history: &[DualGraphState<'_, f64>]) -> Vec<String> {
    let mut bad = Vec::new();
    for state in history {
        for (name, e) in [("light", state.e_light.value()), ("color", state.e_color.value())] {
            let sh = e.shape();
            for b in 0..sh[0] {
                for i in 0..sh[1] {
                    if e[[b, i, i]] != 1.0 {
                        bad.push(format!("{name} diagonal {} at generation {}", e[[b, i, i]], state.generation));
                    }
                    for j in 0..sh[1] {
                        let v = e[[b, i, j]];
                        if !(0.0..=1.0).contains(&v) || (v - e[[b, j, i]]).abs() > 1e-12 {
                            bad.push(format!("{name} entry ({i},{j}) = {v} at generation {}", state.generation));
                        }
                    }
                }
            }
        }
    }
    for pair in history.windows(2) {
        for (old, new) in [(pair[0].e_light, pair[1].e_light), (pair[0].e_color, pair[1].e_color)] {
            if new.value().iter().zip(old.value().iter()).any(|(n, o)| n > o) {
                bad.push(format!("edge grew at generation {}", pair[1].generation));
            }
        }
    }
    bad
}

fn graph_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let (b, t, d) = (rng.random_range(1..3), rng.random_range(2..8), rng.random_range(1..6));
        let c = gnn_case(&mut rng, b, t, d);
        let g = Graph::new();
        let bound = c.params.bind(&g);
        let history = run_generations(&bind(&g, &c.emb), 3, &bound, &c.cfg).map_err(|e| e.to_string())?;
        if let Some(v) = edge_violations(&history).first() {
            return Err(format!("instance {trial}: {v}"));
        }
    }

    for trial in 0..100 {
        let (k, n, q, d) = (rng.random_range(2..4), rng.random_range(1..3), rng.random_range(1..4), rng.random_range(2..6));
        let (nk, t) = (n * k, n * k + q);
        let c = gnn_case(&mut rng, 1, t, d);
        let labels = Array2::from_shape_fn((1, nk), |(_, j)| j % k);
        let mut perm: Vec<usize> = (0..t).collect();
        for i in (1..nk).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for i in (nk + 1..t).rev() {
            perm.swap(i, rng.random_range(nk..=i));
        }
        let permuted = c.emb.clone().map(|a| ArrayD::from_shape_fn(IxDyn(&[1, t, d]), |ix| a[[0, perm[ix[1]], ix[2]]]));
        let plabels = Array2::from_shape_fn((1, nk), |(_, j)| labels[[0, perm[j]]]);
        let run = |emb: &[ArrayD<f64>; 4], labels: &Array2<usize>| {
            let g = Graph::new();
            let bound = c.params.bind(&g);
            let history = run_generations(&bind(&g, emb), 2, &bound, &c.cfg).unwrap();
            predict(&history.last().unwrap().e_light.value(), labels, k).unwrap().labels
        };
        let base = run(&c.emb, &labels);
        let moved = run(&permuted, &plabels);
        for qi in 0..q {
            if moved[[0, qi]] != base[[0, perm[nk + qi] - nk]] {
                return Err(format!("instance {trial}: query {qi} changed label under permutation"));
            }
        }
    }
    ensure(true, "100 instances of edge invariants, 100 of label equivariance".into())
}

fn group_isolation() -> Outcome {
    let cfg = LabNetConfig { hidden_h: 4, embed_dim: 8, input_size: 32, bn_eps: 1e-5 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let embed = |params: &ParamStore<f64>, x: &Array5<f64>| {
        let g = Graph::new();
        let bound = params.bind_frozen(&g);
        let e = encode(g.constant(x.clone().into_dyn()), &bound, &cfg).unwrap();
        [e.pe_light, e.ls_light, e.pe_color, e.ls_color].map(|v| v.value().as_ref().clone())
    };
    for trial in 0..10 {
        let params = cfg.init_params::<f64, _>(&mut rng).map_err(|e| e.to_string())?;
        let rgb = Array5::from_shape_simple_fn((2, 3, 3, 32, 32), || rng.random_range(0.0..1.0));
        let llab = rgb_to_llab::<f64>(&RgbBatch::new(rgb).unwrap(), NormMode::Normalized).unwrap();
        let x = llab.data().clone();
        let mut color_moved = x.clone();
        color_moved.slice_mut(s![.., .., 2..4, .., ..]).mapv_inplace(|v| v + rng.random_range(-0.5..0.5));
        let mut light_moved = x.clone();
        let shift = rng.random_range(-0.5..0.5);
        light_moved.slice_mut(s![.., .., 0..2, .., ..]).mapv_inplace(|v| v * 0.7 + shift);

        let base = embed(&params, &x);
        let after_color = embed(&params, &color_moved);
        let after_light = embed(&params, &light_moved);
        let diff = |a: &ArrayD<f64>, b: &ArrayD<f64>| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        for i in 0..2 {
            let light = diff(&base[i], &after_color[i]);
            let color = diff(&base[2 + i], &after_light[2 + i]);
            if light != 0.0 || color != 0.0 {
                return Err(format!("trial {trial}: light moved {light:e}, color moved {color:e}"));
            }
            if diff(&base[i], &after_light[i]) == 0.0 || diff(&base[2 + i], &after_color[2 + i]) == 0.0 {
                return Err(format!("trial {trial}: a stream ignored its own channels"));
            }
        }
    }
    ensure(true, "10 trials, cross-group change exactly 0 in both directions".into())
}

fn loss_gating() -> Outcome {
    let data = make_synthetic_dataset(12, 4, 16, 6).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = MetaLabConfig {
        labnet: LabNetConfig { hidden_h: 4, embed_dim: 8, input_size: 16, bn_eps: 1e-5 },
        generations: 5,
        norm_mode: NormMode::Normalized,
    };
    let params: ParamStore<f64> = model.init_params(&mut rng).map_err(|e| e.to_string())?;
    let batch = sample_episode(&data.train, EpisodeSpec::new(3, 1, 2, 2).unwrap(), &mut rng).map_err(|e| e.to_string())?;
    let weights = LossWeights { gate: 3, ..LossWeights::default() };

    let graph = Graph::new();
    let bound = params.bind(&graph);
    let x = graph.constant(episode_input::<f64>(&batch.images, NormMode::Normalized).unwrap());
    let history = forward(x, &bound, &model).map_err(|e| e.to_string())?;
    let late: Vec<_> = history.iter().filter(|s| s.generation >= 4).flat_map(|s| [s.e_light, s.e_color, s.v_light, s.v_color]).collect();
    for &v in &late {
        graph.retain_grad(v);
    }
    let (loss, _) = total_loss(&history, &batch.labels, &batch.spec, &weights).map_err(|e| e.to_string())?;
    let grads = graph.backward(loss).map_err(|e| e.to_string())?;
    let nonzero = late.iter().filter(|&&v| grads.get(v).is_some_and(|g| g.iter().any(|&x| x != 0.0))).count();

    let perturbed: Vec<DualGraphState<'_, f64>> = history
        .iter()
        .map(|s| {
            if s.generation < 4 {
                return *s;
            }
            let bump = |v| ops::add_scalar(v, 0.37);
            DualGraphState {
                v_light: bump(s.v_light),
                v_color: bump(s.v_color),
                e_light: ops::scale(s.e_light, 0.5),
                e_color: ops::scale(s.e_color, 0.5),
                generation: s.generation,
            }
        })
        .collect();
    let (moved, _) = total_loss(&perturbed, &batch.labels, &batch.spec, &weights).map_err(|e| e.to_string())?;
    let same = moved.scalar().to_bits() == loss.scalar().to_bits();
    ensure(
        late.len() == 8 && nonzero == 0 && same,
        format!(
            "{} generation-4/5 tensors, {nonzero} with nonzero gradient; perturbed loss {} the original",
            late.len(),
            if same { "bitwise equals" } else { "differs from" }
        ),
    )
}

fn desk_config(extra: &[(&str, &str)]) -> Result<RunConfig, String> {
    let mut pairs: Vec<(String, String)> = [
        ("synth_classes", "20"),
        ("synth_per_class", "50"),
        ("image_size", "84"),
        ("k_way", "5"),
        ("n_shot", "1"),
        ("q_query", "5"),
        ("batch_episodes", "2"),
        ("hidden_h", "32"),
        ("embed_dim", "64"),
        ("generations", "5"),
        ("loss_gens", "3"),
        ("lambda", "0.1"),
        ("beta", "0.1"),
        ("lr", "0.001"),
        ("train_iters", "2000"),
        ("val_every", "10"),
        ("val_episodes", "40"),
        ("early_stop", "0.98"),
        ("eval_episodes", "500"),
        ("seed", "7"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    pairs.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    RunConfig::resolve(None, None, &pairs).map_err(|e| e.to_string())
}

fn desk_learning() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config(&[])?;
    let data = commands::load_dataset(&cfg).map_err(|e| e.to_string())?;
    let outcome = commands::train(&cfg, &data, &mut std::io::sink()).map_err(|e| e.to_string())?;
    let trained = start.elapsed();
    let row = commands::evaluate_params(&cfg, &data, &outcome.params, &[5]).map_err(|e| e.to_string())?.remove(0);
    let elapsed = start.elapsed();
    ensure(
        row.mean_acc >= 0.95 && outcome.iterations <= 2000 && elapsed < Duration::from_secs(30 * 60),
        format!(
            "test acc {:.4} ± {:.4} over {} episodes after {} iterations (train {:.0} s, total {:.0} s)",
            row.mean_acc,
            row.ci95,
            row.episodes,
            outcome.iterations,
            secs(trained),
            secs(elapsed)
        ),
    )
}

fn chance_baseline() -> Outcome {
    let cfg = desk_config(&[("q_query", "1"), ("generations", "5")])?;
    let data = commands::load_dataset(&cfg).map_err(|e| e.to_string())?;
    let params = commands::init_params(&cfg).map_err(|e| e.to_string())?;
    let row = commands::evaluate_params(&cfg, &data, &params, &[5]).map_err(|e| e.to_string())?.remove(0);
    ensure(
        (0.1..=0.3).contains(&row.mean_acc) && row.episodes == 500,
        format!("untrained 5-way acc {:.4} ± {:.4} over {} episodes", row.mean_acc, row.ci95, row.episodes),
    )
}

fn ci_statistics() -> Outcome {
    let (mean, ci) = accuracy_stats(&[1.0, 0.5]).map_err(|e| e.to_string())?;
    ensure((mean - 0.75).abs() < 1e-12 && (ci - 0.490).abs() < 1e-3, format!("mean {mean}, ci95 {ci:.6}"))
}

fn ablation_smoke() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config(&[("image_size", "42"), ("loss_gens", "auto"), ("eval_episodes", "150"), ("train_iters", "400")])?;
    let data = commands::load_dataset(&cfg).map_err(|e| e.to_string())?;
    let mut sink = std::io::sink();
    let h = commands::ablate(&cfg, &data, commands::AblationAxis::HiddenH, &[48, 96], &mut sink).map_err(|e| e.to_string())?;
    let g = commands::ablate(&cfg, &data, commands::AblationAxis::Generations, &[2, 5], &mut sink).map_err(|e| e.to_string())?;
    let detail = format!(
        "H=48 {:.4}, H=96 {:.4}, g=2 {:.4}, g=5 {:.4} ({:.0} s)",
        h[0].mean_acc,
        h[1].mean_acc,
        g[0].mean_acc,
        g[1].mean_acc,
        secs(start.elapsed())
    );
    ensure(h[0].mean_acc <= h[1].mean_acc + 0.02 && g[0].mean_acc <= g[1].mean_acc + 0.02, detail)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("colorspace round trip", colorspace_round_trip),
        ("gradient suite", gradient_suite),
        ("graph oracle", graph_oracle),
        ("graph invariants", graph_invariants),
        ("group isolation", group_isolation),
        ("loss gating", loss_gating),
        ("desk-scale learning", desk_learning),
        ("chance baseline", chance_baseline),
        ("CI statistics", ci_statistics),
        ("ablation smoke", ablation_smoke),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {number:>2} {status} {name}: {detail} [{:.1} s]", secs(start.elapsed()));
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
