//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. `ACCEPTANCE_ONLY=3,4` runs a subset.

use std::collections::HashSet;
use std::time::Instant;

use meshquery::backend::gradcheck::{check_order4, sample_coordinates, Report};
use meshquery::backend::{BackendError, ParamStore, Tape, Tensor, Var};
use meshquery::benchmarks::{
    beam_dataset, beam_instance, beam_mesh_nodes, beam_oracle, beam_schema, poisson_oracle, regular_grid, uniform_points, BeamDatasetConfig,
    BeamSpec, TopBoundary,
};
use meshquery::conditions::{assemble_batch, ConditionRecord, ConditionSchema, DIRICHLET, NEUMANN};
use meshquery::gce::{EmbeddingKind, GceLayer};
use meshquery::geometry::{hilbert_index, hilbert_inverse, reserialize, BoundingBox, Mesh};
use meshquery::model::{attention, AttentionKind, Model, ModelConfig};
use meshquery::nn::{init_wavelet, wavelet};
use meshquery::training::{
    fd_laplacian_fn, gce_ablation, patch_ablation, relative_l2_item, train, GceAblationConfig, Objective, PatchAblationConfig, PoissonTask,
    PoissonTaskConfig, SupervisedItem, SupervisedTask, SupervisedTaskConfig, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Debug>(e: E) -> String {
    format!("error: {e:?}")
}

// ---------------------------------------------------------------- helpers

/// `n` nodes on distinct cells of a 64×64 grid over the unit square, with
/// random thermal conditions.
fn random_mesh(n: usize, rng: &mut ChaCha8Rng) -> Mesh {
    let schema = ConditionSchema::thermal();
    let mut cells = HashSet::new();
    let mut nodes = Vec::with_capacity(n);
    while nodes.len() < n {
        let c = (rng.gen_range(0..64u32), rng.gen_range(0..64u32));
        if cells.insert(c) {
            nodes.push([(c.0 as f64 + rng.gen_range(0.1..0.9)) / 64.0, (c.1 as f64 + rng.gen_range(0.1..0.9)) / 64.0]);
        }
    }
    let records = (0..n)
        .map(|_| {
            let mut r = ConditionRecord::empty(&schema);
            if rng.gen_bool(0.3) {
                r.set(&schema, DIRICHLET, vec![rng.gen_range(-1.0..1.0)]).unwrap();
            }
            if rng.gen_bool(0.3) {
                r.set(&schema, NEUMANN, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            }
            r
        })
        .collect();
    Mesh::new(nodes, records, schema, Some(BoundingBox::new([0.0, 0.0], [1.0, 1.0]).unwrap())).unwrap()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn weighted_sum<'t>(tape: &'t Tape, out: &Var<'t>, seed: u64) -> Result<Var<'t>, BackendError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = out.shape().iter().product();
    let r = Tensor::new(out.shape().to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    out.mul(&tape.constant(r))?.sum()
}

/// Pins a closure to the higher-ranked loss signature.
fn as_loss<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>, String>,
{
    f
}

/// Gradient check on `count` coordinates drawn from the parameters whose
/// name passes `filter`.
fn gradient_report<F>(params: &ParamStore, filter: impl Fn(&str) -> bool, count: usize, loss: F) -> Result<Report, String>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>, String>,
{
    let tape = Tape::new();
    let l = loss(&tape, params)?;
    let g = tape.grad(&l, params).map_err(fail)?;
    let mut subset = ParamStore::new();
    for (name, t) in params.iter().filter(|(n, _)| filter(n)) {
        subset.insert(name, t.clone());
    }
    if subset.num_scalars() == 0 {
        return Err("no parameters match".into());
    }
    let coords: Vec<(String, usize)> = if subset.num_scalars() <= count {
        subset.iter().flat_map(|(n, t)| (0..t.numel()).map(move |i| (n.to_string(), i))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut picked = Vec::new();
        while picked.len() < count {
            let c = sample_coordinates(&subset, 1, &mut rng).remove(0);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        picked
    };
    check_order4(params, &g, &coords, 1e-3, |p| loss(&Tape::inference(), p).and_then(|v| v.value().item().map_err(fail)).map_err(BackendError::Shape))
        .map_err(fail)
}

// ---------------------------------------------------------------- criteria

fn c1_hilbert_bijective_adjacent() -> Outcome {
    let start = Instant::now();
    for n in 1..=6u32 {
        let side = 1u64 << n;
        let mut seen = vec![false; (side * side) as usize];
        let mut cells = vec![(0u64, 0u64); (side * side) as usize];
        for u in 0..side {
            for v in 0..side {
                let c = hilbert_index(u, v, n).map_err(fail)?;
                if c >= side * side || seen[c as usize] {
                    return Err(format!("order {n}: code {c} repeated or out of range"));
                }
                seen[c as usize] = true;
                cells[c as usize] = (u, v);
            }
        }
        for w in cells.windows(2) {
            let d = w[0].0.abs_diff(w[1].0) + w[0].1.abs_diff(w[1].1);
            if d != 1 {
                return Err(format!("order {n}: consecutive cells {:?} {:?} at distance {d}", w[0], w[1]));
            }
        }
    }
    let s = start.elapsed().as_secs_f64();
    ensure(s < 5.0, format!("orders 1..6 bijective and adjacent in {s:.3} s"))
}

fn c2_hilbert_round_trip() -> Outcome {
    let mut checked = 0;
    for n in 1..=6u32 {
        let side = 1u64 << n;
        for u in 0..side {
            for v in 0..side {
                let back = hilbert_inverse(hilbert_index(u, v, n).map_err(fail)?, n).map_err(fail)?;
                if back != (u, v) {
                    return Err(format!("order {n}: ({u}, {v}) came back as {back:?}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} cells round-trip"))
}

fn c3_query_batch_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = random_mesh(200, &mut rng);
    let queries = uniform_points(&mut rng, 64, [0.0, 0.0], [1.0, 1.0]);
    let mut worst = 0.0f64;
    for attn in [AttentionKind::DotProduct, AttentionKind::Linear] {
        let cfg = ModelConfig { attention: attn, n_head: 2, ..ModelConfig::poisson() };
        let model = Model::new(cfg, mesh.schema().clone()).map_err(fail)?;
        let params = model.init(11);
        let full = model.predict(&params, &mesh, &queries, 64).map_err(fail)?;
        for batch in [32, 1] {
            worst = worst.max(max_abs_diff(&full, &model.predict(&params, &mesh, &queries, batch).map_err(fail)?));
        }
    }
    ensure(worst <= 1e-12, format!("max |Δ| over partitions {{64}}, {{32,32}}, {{1×64}}, both attention kinds: {worst:.2e}"))
}

fn c4_mesh_order_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mesh = random_mesh(200, &mut rng);
    let codes = reserialize(&mesh, ModelConfig::poisson().order).map_err(fail)?.codes;
    if codes.iter().collect::<HashSet<_>>().len() != codes.len() {
        return Err("test mesh has repeated Hilbert codes".into());
    }
    let queries = uniform_points(&mut rng, 64, [0.0, 0.0], [1.0, 1.0]);
    let mut worst = 0.0f64;
    for (attn, patch) in [(AttentionKind::DotProduct, 4), (AttentionKind::Linear, 4), (AttentionKind::Linear, 7)] {
        let cfg = ModelConfig { attention: attn, patch_size: patch, n_head: 2, ..ModelConfig::poisson() };
        let model = Model::new(cfg, mesh.schema().clone()).map_err(fail)?;
        let params = model.init(5);
        let base = model.predict(&params, &mesh, &queries, 64).map_err(fail)?;
        for s in 0..3 {
            let mut perm: Vec<usize> = (0..mesh.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
            let shuffled = mesh.permuted(&perm).map_err(fail)?;
            worst = worst.max(max_abs_diff(&base, &model.predict(&params, &shuffled, &queries, 64).map_err(fail)?));
        }
    }
    ensure(worst <= 1e-12, format!("max |Δ| over 3 permutations × 3 configs: {worst:.2e}"))
}

fn c5_gradient_checks() -> Outcome {
    const TOL: f64 = 1e-5;
    const COUNT: usize = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mesh = random_mesh(40, &mut rng);
    let queries = uniform_points(&mut rng, 12, [0.0, 0.0], [1.0, 1.0]);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut record = |name: &str, r: Result<Report, String>| match r {
        Ok(r) => {
            let e = r.max_rel_err();
            ok &= e <= TOL;
            lines.push(format!("{name} {e:.1e} ({} params)", r.entries.len()));
        }
        Err(e) => {
            ok = false;
            lines.push(format!("{name} {e}"));
        }
    };

    // gated condition embedding on its own
    let schema = ConditionSchema::thermal();
    let layer = GceLayer::new(schema.clone(), 6, "gce");
    let mut p = ParamStore::new();
    layer.init(&mut p, &mut ChaCha8Rng::seed_from_u64(1));
    let batch = assemble_batch(mesh.records(), &schema).map_err(fail)?;
    record(
        "gce",
        gradient_report(&p, |_| true, COUNT, |t, p| weighted_sum(t, &layer.forward(t, p, &batch).map_err(fail)?, 1).map_err(fail)),
    );

    // wavelet with its input as a parameter
    let mut p = ParamStore::new();
    init_wavelet(&mut p, "act");
    p.get_mut("act.w1").map_err(fail)?.data_mut()[0] = 0.7;
    p.get_mut("act.w2").map_err(fail)?.data_mut()[0] = -1.3;
    p.insert("x", Tensor::new(vec![5, 6], (0..30).map(|_| rng.gen_range(-3.0..3.0)).collect()).map_err(fail)?);
    record(
        "wavelet",
        gradient_report(&p, |_| true, COUNT, |t, p| {
            let x = t.param("x", p.get("x").map_err(fail)?);
            weighted_sum(t, &wavelet(t, p, "act", &x).map_err(fail)?, 2).map_err(fail)
        }),
    );

    // both attention kinds on their own, gradients through q, k and v
    for kind in [AttentionKind::DotProduct, AttentionKind::Linear] {
        let mut p = ParamStore::new();
        for (n, rows, cols) in [("q", 5, 4), ("k", 7, 4), ("v", 7, 3)] {
            p.insert(n, Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).map_err(fail)?);
        }
        record(
            &format!("attention[{kind:?}]"),
            gradient_report(&p, |_| true, COUNT, |t, p| {
                let v = |n: &str| p.get(n).map(|x| t.param(n, x)).map_err(fail);
                weighted_sum(t, &attention(&v("q")?, &v("k")?, &v("v")?, kind).map_err(fail)?, 3).map_err(fail)
            }),
        );
    }

    // layers inside the full model
    for kind in [AttentionKind::DotProduct, AttentionKind::Linear] {
        let cfg = ModelConfig { d_emb: 6, d_model: 8, n_head: 2, n_encoder: 1, n_decoder: 1, attention: kind, ..ModelConfig::poisson() };
        let model = Model::new(cfg, mesh.schema().clone()).map_err(fail)?;
        let params = model.init(7);
        let loss = as_loss(|t, p| weighted_sum(t, &model.forward(t, p, &mesh, &queries).map_err(fail)?, 4).map_err(fail));
        if kind == AttentionKind::DotProduct {
            record("model:posenc", gradient_report(&params, |n| n.starts_with("posenc."), COUNT, loss));
            record("model:gce", gradient_report(&params, |n| n.starts_with("cond."), COUNT, loss));
            record("model:patch", gradient_report(&params, |n| n.starts_with("patch."), COUNT, loss));
            record("model:wavelet", gradient_report(&params, |n| n.contains(".act."), COUNT, loss));
        }
        record(&format!("model:attn[{kind:?}]"), gradient_report(&params, |n| n.contains(".attn."), COUNT, loss));
        record(&format!("model:all[{kind:?}]"), gradient_report(&params, |_| true, COUNT, loss));
    }

    // full model through the Poisson loss, stencil path included
    let cfg = ModelConfig { d_emb: 8, d_model: 8, n_encoder: 1, n_decoder: 1, ..ModelConfig::poisson() };
    let model = Model::new(cfg, meshquery::benchmarks::poisson_schema()).map_err(fail)?;
    let params = model.init(2);
    let task_cfg = PoissonTaskConfig { colloc_points: 3, data_points: 3, stencil_rel: 0.1, ..Default::default() };
    let task = std::cell::RefCell::new(PoissonTask::new(model, task_cfg).map_err(fail)?);
    record(
        "poisson_loss",
        gradient_report(&params, |_| true, COUNT, |t, p| {
            let terms = task.borrow_mut().loss(t, p, 0, 0, &mut ChaCha8Rng::seed_from_u64(9)).map_err(fail)?;
            terms[0].value.add(&terms[1].value).map_err(fail)
        }),
    );
    ensure(ok, format!("max rel err per layer, {COUNT} distinct params or all if fewer (tol {TOL:.0e}): {}", lines.join(", ")))
}

fn c6_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-3;
    let mut worst_pde = 0.0f64;
    for _ in 0..100 {
        let p = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
        let u = |q: [f64; 2]| poisson_oracle(q[0], q[1]).unwrap().0;
        let f = poisson_oracle(p[0], p[1]).map_err(fail)?.1;
        worst_pde = worst_pde.max((fd_laplacian_fn(u, p, h) + f).abs());
    }
    let spec = BeamSpec::default();
    let bb = spec.bbox();
    let mut bad = 0;
    for _ in 0..1000 {
        let (x, y) = (rng.gen_range(bb.min[0]..=bb.max[0]), rng.gen_range(bb.min[1]..=bb.max[1]));
        let m = rng.gen_range(spec.moment_range[0]..=spec.moment_range[1]);
        let b = beam_oracle(x, y, &spec, m).map_err(fail)?;
        if b.sigma_x != 12.0 * m * y / (spec.width * spec.height.powi(3)) || b.von_mises != b.sigma_x.abs() {
            bad += 1;
        }
    }
    ensure(
        worst_pde <= 1e-3 && bad == 0,
        format!("max |∇²u + f| = {worst_pde:.2e} over 100 points; beam σx/σv mismatches at {bad} of 1000 points"),
    )
}

fn c7_poisson_training() -> Outcome {
    let model = Model::new(ModelConfig::poisson(), meshquery::benchmarks::poisson_schema()).map_err(fail)?;
    let params = model.init(0);
    let mut task = PoissonTask::new(model, PoissonTaskConfig::default()).map_err(fail)?;
    let limit = 1800.0;
    let cfg = TrainConfig { epochs: 1000, target_val: Some(0.1), time_limit_s: Some(limit), ..TrainConfig::poisson() };
    let start = Instant::now();
    let out = train(&cfg, params, &mut task, None).map_err(fail)?;
    let s = start.elapsed().as_secs_f64();
    let err = task.evaluate(&out.best).map_err(fail)?;
    ensure(
        err <= 0.1 && s <= limit,
        format!("test rel L2 {err:.4} after {} epochs in {s:.0} s (target 0.1 within {limit:.0} s)", out.report.history.len()),
    )
}

fn c8_multiscale_queries() -> Outcome {
    let spec = BeamSpec::default();
    let nodes = beam_mesh_nodes(&spec);
    let data = BeamDatasetConfig { train_instances: 30, train_points: 1000, test_instances: 5, test_points: 1000 };
    let (train_set, val_set) = beam_dataset(&spec, &data, 0).map_err(fail)?;
    let items = |set: &[meshquery::benchmarks::BeamSample]| {
        set.iter()
            .map(|s| SupervisedItem::try_from(&beam_instance(&spec, &nodes, s.moment, s.queries.clone()).map_err(fail)?).map_err(fail))
            .collect::<Result<Vec<_>, String>>()
    };
    let model = Model::new(ModelConfig::beam2d(), beam_schema()).map_err(fail)?;
    let params = model.init(0);
    let task_cfg = SupervisedTaskConfig { points_per_item: Some(200), metric_field: Some(0), ..Default::default() };
    let mut task = SupervisedTask::new(model.clone(), items(&train_set)?, items(&val_set)?, 10, task_cfg).map_err(fail)?;
    let cfg = TrainConfig { epochs: 400, batch_size: 10, target_val: Some(0.08), ..TrainConfig::beam2d() };
    let start = Instant::now();
    let out = train(&cfg, params, &mut task, None).map_err(fail)?;
    let val = out.report.history.iter().filter_map(|r| r.val_rel_l2).fold(f64::INFINITY, f64::min);
    if val > 0.1 {
        return Err(format!("training reached val rel L2 {val:.4} on u only (needs ≤ 0.1)"));
    }

    // held-out moments, same mesh nodes
    let bb = spec.bbox();
    let moments = [0.6, 1.0, 1.4];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sets: Vec<(String, Vec<[f64; 2]>)> = vec![
        ("25x10".into(), regular_grid(25, 10, bb.min, bb.max)),
        ("40x16".into(), regular_grid(40, 16, bb.min, bb.max)),
        ("100x40".into(), regular_grid(100, 40, bb.min, bb.max)),
        ("random2000".into(), uniform_points(&mut rng, 2000, bb.min, bb.max)),
    ];
    let mut metrics = Vec::new();
    let mut preds: Vec<Vec<Tensor>> = Vec::new();
    for (_, q) in &sets {
        let mut sum = 0.0;
        let mut per_m = Vec::new();
        for &m in &moments {
            let inst = beam_instance(&spec, &nodes, m, q.clone()).map_err(fail)?;
            let pred = model.predict(&out.best, &inst.mesh, q, 2500).map_err(fail)?;
            let u_pred: Vec<f64> = (0..pred.rows()).map(|r| pred.get2(r, 0)).collect();
            let truth = inst.labels.as_ref().expect("labels");
            let u_true: Vec<f64> = (0..truth.rows()).map(|r| truth.get2(r, 0)).collect();
            sum += relative_l2_item(&u_pred, &u_true).map_err(fail)?;
            per_m.push(pred);
        }
        metrics.push(sum / moments.len() as f64);
        preds.push(per_m);
    }
    let (lo, hi) = metrics.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &m| (l.min(m), h.max(m)));
    let spread = (hi - lo) / lo;

    // shared coordinates must give bit-identical predictions
    let mut shared = 0;
    let mut mismatched = 0;
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            for (i, p) in sets[a].1.iter().enumerate() {
                for (j, q) in sets[b].1.iter().enumerate() {
                    if p == q {
                        shared += 1;
                        for k in 0..moments.len() {
                            if preds[a][k].row(i).iter().zip(preds[b][k].row(j)).any(|(x, y)| x.to_bits() != y.to_bits()) {
                                mismatched += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    let listing: Vec<String> = sets.iter().zip(&metrics).map(|((n, _), m)| format!("{n} {m:.4}")).collect();
    ensure(
        spread <= 0.2 && shared > 0 && mismatched == 0,
        format!(
            "val u rel L2 {val:.4} after {} epochs ({:.0} s); u rel L2 by resolution: {}; spread {:.1}%; {shared} shared points, {mismatched} mismatches",
            out.report.history.len(),
            start.elapsed().as_secs_f64(),
            listing.join(", "),
            100.0 * spread
        ),
    )
}

fn c9_gce_ablation() -> Outcome {
    let cfg = GceAblationConfig::default();
    let start = Instant::now();
    let rows = gce_ablation(&cfg, 0).map_err(fail)?;
    let err = |k: EmbeddingKind, h: TopBoundary| rows.iter().find(|r| r.embedding == k && r.half == h).map(|r| r.rel_l2).unwrap_or(f64::NAN);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut plain_max = 0.0f64;
    for h in [TopBoundary::Dirichlet, TopBoundary::Neumann] {
        let (ff, flags, gce) = (err(EmbeddingKind::Feedforward, h), err(EmbeddingKind::FeedforwardFlags, h), err(EmbeddingKind::Gce, h));
        ok &= gce < flags && flags < ff;
        plain_max = plain_max.max(ff);
        parts.push(format!("{h:?}: GCE {gce:.4} < MLP+flag {flags:.4} < MLP {ff:.4}"));
    }
    ok &= plain_max > 0.2;
    ensure(ok, format!("{} ({} epochs, {:.0} s)", parts.join("; "), cfg.train.epochs, start.elapsed().as_secs_f64()))
}

fn c10_patch_ablation() -> Outcome {
    let cfg = PatchAblationConfig { sizes: vec![1, 2, 4, 8, 128], ..Default::default() };
    let rows = patch_ablation(&cfg, 0).map_err(fail)?;
    let nodes = beam_mesh_nodes(&cfg.spec).len();
    let mut ok = nodes == 5404;
    for r in &rows {
        ok &= r.tokens == nodes.div_ceil(r.patch_size);
    }
    let at = |p: usize| rows.iter().find(|r| r.patch_size == p).expect("row");
    let (p1, p8) = (at(1), at(8));
    ok &= p8.attn_bytes < p1.attn_bytes && p8.encode_s < p1.encode_s;
    let tokens: Vec<String> = rows.iter().map(|r| format!("p={}:{}", r.patch_size, r.tokens)).collect();
    ensure(
        ok,
        format!(
            "L={nodes}, tokens {}; attention bytes {} → {}; encode {:.4} s → {:.4} s (p=1 → p=8)",
            tokens.join(" "),
            p1.attn_bytes,
            p8.attn_bytes,
            p1.encode_s,
            p8.encode_s
        ),
    )
}

fn c11_gce_disambiguation() -> Outcome {
    let schema = ConditionSchema::from_pairs(&[("lambda", 2), (DIRICHLET, 1), (NEUMANN, 4)]).map_err(fail)?;
    let mut min_dist = f64::INFINITY;
    for seed in 0..5 {
        let layer = GceLayer::new(schema.clone(), 32, "gce");
        let mut p = ParamStore::new();
        layer.init(&mut p, &mut ChaCha8Rng::seed_from_u64(seed));
        for g in schema.groups() {
            let absent = ConditionRecord::empty(&schema);
            let zero = ConditionRecord::empty(&schema).with(&schema, &g.name, vec![0.0; g.dim]).map_err(fail)?;
            let batch = assemble_batch(&[absent, zero], &schema).map_err(fail)?;
            let tape = Tape::inference();
            let e = layer.forward(&tape, &p, &batch).map_err(fail)?;
            let d = e.value().row(0).iter().zip(e.value().row(1)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            min_dist = min_dist.min(d);
        }
    }
    ensure(min_dist > 1e-3, format!("min ‖e(present 0) − e(absent)‖ over 3 groups × 5 seeds: {min_dist:.3e}"))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // `cargo test -- --list` and similar probes
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "Hilbert bijective and adjacent", c1_hilbert_bijective_adjacent),
        (2, "Hilbert round trip", c2_hilbert_round_trip),
        (3, "query-batch invariance", c3_query_batch_invariance),
        (4, "mesh-order invariance", c4_mesh_order_invariance),
        (5, "gradient checks", c5_gradient_checks),
        (6, "oracle self-consistency", c6_oracles),
        (7, "Poisson desk training", c7_poisson_training),
        (8, "multi-scale query stability", c8_multiscale_queries),
        (9, "embedding ablation ordering", c9_gce_ablation),
        (10, "patch ablation mechanics", c10_patch_ablation),
        (11, "GCE disambiguation", c11_gce_disambiguation),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let s = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d} [{s:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d} [{s:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
}
