use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use meshquery::backend::{ParamStore, Tensor};
use meshquery::benchmarks::{
    ambiguity_dataset, beam_dataset, beam_instance, beam_mesh_nodes, heatsink_instance, poisson_grids, poisson_instance, read_dataset,
    regular_grid, uniform_points, von_mises, write_dataset, BenchmarkInstance, TopBoundary,
};
use meshquery::geometry::{read_mesh_csv, read_mesh_json, Mesh};
use meshquery::model::{Model, ModelCheckpoint};
use meshquery::training::{
    gce_ablation, patch_ablation, relative_l2_item, train as run_training, HeatsinkTask, Objective, PoissonTask, SupervisedItem,
    SupervisedTask, TrainError,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Benchmark, RunConfig};
use crate::error::CliError;
use crate::{AblationKind, Common, MeshSource, PointSource};

const PREDICT_BATCH: usize = 2500;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn resolve(benchmark: Option<Benchmark>, common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, benchmark) {
        (Some(path), b) => {
            let cfg = RunConfig::load(path)?;
            if b.is_some_and(|b| b != cfg.benchmark) {
                return Err(CliError::Config(format!("--benchmark disagrees with config benchmark `{}`", cfg.benchmark.name())));
            }
            cfg
        }
        (None, Some(b)) => RunConfig::preset(b),
        (None, None) => return Err(CliError::Config("need --config or a benchmark".into())),
    };
    cfg.apply_flags(common.seed, common.precision)?;
    Ok(cfg)
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

fn write_checkpoint(path: &Path, model: &Model, params: &ParamStore, fields: &[String]) -> Result<(), CliError> {
    let ckpt = ModelCheckpoint::new(model, params).with_fields(fields.to_vec());
    let mut w = create(path)?;
    ckpt.write_json(&mut w)?;
    w.flush().map_err(|e| io_err(path, e))
}

fn load_checkpoint(path: &Path) -> Result<(Model, ParamStore, Vec<String>), CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let ckpt = ModelCheckpoint::read_json(BufReader::new(file))?;
    let fields = ckpt.field_names();
    let (model, params) = ckpt.into_parts()?;
    Ok((model, params, fields))
}

/// Materialized splits for `cfg.benchmark`, keyed by split name.
fn generate(cfg: &RunConfig, heatsink_count: usize) -> Result<BTreeMap<String, Vec<BenchmarkInstance>>, CliError> {
    let mut out = BTreeMap::new();
    match cfg.benchmark {
        Benchmark::Poisson => {
            let (train, test) = poisson_grids();
            out.insert("train".into(), vec![poisson_instance(train)?]);
            out.insert("test".into(), vec![poisson_instance(test)?]);
        }
        Benchmark::Beam2d => {
            let nodes = beam_mesh_nodes(&cfg.beam);
            let (train, test) = beam_dataset(&cfg.beam, &cfg.beam_data, cfg.seed)?;
            for (name, set) in [("train", train), ("test", test)] {
                let items = set.into_iter().map(|s| beam_instance(&cfg.beam, &nodes, s.moment, s.queries)).collect::<Result<Vec<_>, _>>()?;
                out.insert(name.into(), items);
            }
        }
        Benchmark::Heatsink2d => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut items = Vec::with_capacity(heatsink_count);
            for _ in 0..heatsink_count {
                let (h, a) = cfg.heatsink_spec.sample_params(&mut rng);
                items.push(heatsink_instance(&cfg.heatsink_spec, h, a)?.instance);
            }
            out.insert("train".into(), items);
        }
        Benchmark::Ambiguity => {
            let set = ambiguity_dataset(&cfg.ambiguity, cfg.seed)?;
            let tag = |mut inst: BenchmarkInstance, top: TopBoundary| {
                inst.params.insert("neumann_top".into(), f64::from(u8::from(top == TopBoundary::Neumann)));
                inst
            };
            out.insert("train".into(), set.iter().map(|i| tag(i.train.clone(), i.top)).collect());
            out.insert("test".into(), set.iter().map(|i| tag(i.test.clone(), i.top)).collect());
        }
    }
    Ok(out)
}

pub fn gen(benchmark: Benchmark, out: &Path, common: &Common, count: usize) -> Result<(), CliError> {
    let mut cfg = resolve(Some(benchmark), common)?;
    if common.config.is_none() {
        cfg.benchmark = benchmark;
    }
    let splits = generate(&cfg, count)?;
    let refs: Vec<(&str, &[BenchmarkInstance])> = splits.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
    let manifest = write_dataset(out, benchmark.name(), cfg.seed, &refs)?;
    for (name, entries) in &manifest.splits {
        println!("{name}: {} instances", entries.len());
    }
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}

fn supervised_items(splits: &BTreeMap<String, Vec<BenchmarkInstance>>, name: &str) -> Result<Vec<SupervisedItem>, CliError> {
    let Some(list) = splits.get(name) else {
        return Ok(Vec::new());
    };
    list.iter().map(|i| SupervisedItem::try_from(i).map_err(CliError::from)).collect()
}

pub fn train(benchmark: Option<Benchmark>, out: &Path, common: &Common, data: Option<std::path::PathBuf>, epochs: Option<usize>) -> Result<(), CliError> {
    let mut cfg = resolve(benchmark, common)?;
    if let Some(d) = data {
        cfg.dataset = Some(d);
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    prepare_out(out)?;
    fs::write(out.join("config.json"), cfg.to_json()).map_err(|e| io_err(out, e))?;

    let splits = match &cfg.dataset {
        Some(dir) => {
            let ds = read_dataset(dir)?;
            if ds.manifest.benchmark != cfg.benchmark.name() {
                return Err(CliError::Config(format!("dataset is `{}`, config is `{}`", ds.manifest.benchmark, cfg.benchmark.name())));
            }
            ds.splits
        }
        None if cfg.benchmark == Benchmark::Poisson || cfg.benchmark == Benchmark::Heatsink2d => BTreeMap::new(),
        None => generate(&cfg, 0)?,
    };
    let fields: Vec<String> = splits.values().flatten().next().map(|i| i.fields.clone()).unwrap_or_else(|| match cfg.benchmark {
        Benchmark::Poisson => vec!["u".into()],
        Benchmark::Heatsink2d => vec!["T".into()],
        _ => Vec::new(),
    });
    let schema = match splits.values().flatten().next() {
        Some(inst) => inst.mesh.schema().clone(),
        None => match cfg.benchmark {
            Benchmark::Poisson => meshquery::benchmarks::poisson_schema(),
            _ => meshquery::benchmarks::heatsink_schema(),
        },
    };
    let model = Model::new(cfg.model.clone(), schema)?;
    let params = model.init(cfg.seed);

    let mut objective: Box<dyn Objective> = match cfg.benchmark {
        Benchmark::Poisson => Box::new(PoissonTask::new(model.clone(), cfg.poisson.clone())?),
        Benchmark::Heatsink2d => {
            let val = supervised_items(&splits, "test")?;
            Box::new(HeatsinkTask::new(model.clone(), cfg.heatsink_spec.clone(), cfg.train.batch_size, cfg.heatsink.clone(), val)?)
        }
        Benchmark::Beam2d | Benchmark::Ambiguity => {
            let train = supervised_items(&splits, "train")?;
            let val = supervised_items(&splits, "test")?;
            Box::new(SupervisedTask::new(model.clone(), train, val, cfg.train.batch_size, cfg.supervised.clone())?)
        }
    };

    let log_path = out.join("train_log.csv");
    let mut log = create(&log_path)?;
    let result = run_training(&cfg.train, params, objective.as_mut(), Some(&mut log));
    log.flush().map_err(|e| io_err(&log_path, e))?;
    match result {
        Ok(outcome) => {
            write_checkpoint(&out.join("checkpoint.json"), &model, &outcome.best, &fields)?;
            let last = outcome.report.history.last();
            println!("epochs run: {}", outcome.report.history.len());
            if let Some(r) = last {
                println!("final total loss: {:.6e}", r.total);
            }
            match (outcome.best_epoch, outcome.report.history.iter().filter_map(|r| r.val_rel_l2).reduce(f64::min)) {
                (Some(e), Some(v)) => println!("best epoch {e}: val rel L2 {v:.6}"),
                (Some(e), None) => println!("best epoch {e}"),
                _ => {}
            }
            println!("wrote {}", out.join("checkpoint.json").display());
            Ok(())
        }
        Err(TrainError::Diverged { epoch, step, reason, last_good }) => {
            write_checkpoint(&out.join("last_good.json"), &model, &last_good, &fields)?;
            Err(CliError::Diverged(format!(
                "epoch {epoch} step {step}: {reason}; parameters before the step saved to {}",
                out.join("last_good.json").display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn column_values(t: &Tensor, c: usize) -> Vec<f64> {
    (0..t.rows()).map(|r| t.get2(r, c)).collect()
}

pub fn eval(checkpoint: &Path, data: &Path, split: &str, out: Option<&Path>) -> Result<(), CliError> {
    let (model, params, _) = load_checkpoint(checkpoint)?;
    let ds = read_dataset(data)?;
    let items = ds.splits.get(split).ok_or_else(|| CliError::Config(format!("dataset has no split `{split}`")))?;
    if items.is_empty() {
        return Err(CliError::Config(format!("split `{split}` is empty")));
    }
    let fields = &ds.manifest.fields;
    if fields.len() != model.config().out_dim {
        return Err(CliError::Config(format!("model predicts {} fields, dataset has {}", model.config().out_dim, fields.len())));
    }
    let stress = ["sigma_x", "sigma_y", "tau_xy"].map(|n| fields.iter().position(|f| f == n));
    let derive_vm = stress.iter().all(Option::is_some);

    let mut names: Vec<String> = fields.clone();
    if derive_vm {
        names.push("sigma_v".into());
    }
    let mut sums = vec![0.0; names.len()];
    let mut writer = match out {
        Some(p) => {
            let mut w = csv_writer(Some(p))?;
            let mut header = vec!["instance".to_string(), "x".into(), "y".into()];
            for n in &names {
                header.extend([format!("{n}_pred"), format!("{n}_true"), format!("{n}_abs_err")]);
            }
            w.write_record(&header).map_err(csv_err)?;
            Some(w)
        }
        None => None,
    };
    for (idx, inst) in items.iter().enumerate() {
        let truth = inst.labels.as_ref().ok_or_else(|| CliError::Config(format!("split `{split}` instance {idx} has no labels")))?;
        let pred = model.predict(&params, &inst.mesh, &inst.queries, PREDICT_BATCH)?;
        let mut cols_pred: Vec<Vec<f64>> = (0..fields.len()).map(|c| column_values(&pred, c)).collect();
        let mut cols_true: Vec<Vec<f64>> = (0..fields.len()).map(|c| column_values(truth, c)).collect();
        if derive_vm {
            let [sx, sy, txy] = stress.map(|s| s.expect("checked"));
            let vm = |cols: &[Vec<f64>]| (0..cols[sx].len()).map(|r| von_mises(cols[sx][r], cols[sy][r], cols[txy][r])).collect::<Vec<_>>();
            cols_pred.push(vm(&cols_pred));
            cols_true.push(vm(&cols_true));
        }
        for (k, s) in sums.iter_mut().enumerate() {
            *s += relative_l2_item(&cols_pred[k], &cols_true[k]).map_err(CliError::from)?;
        }
        if let Some(w) = writer.as_mut() {
            for (r, q) in inst.queries.iter().enumerate() {
                let mut rec = vec![idx.to_string(), q[0].to_string(), q[1].to_string()];
                for k in 0..names.len() {
                    let (p, t) = (cols_pred[k][r], cols_true[k][r]);
                    rec.extend([p.to_string(), t.to_string(), (p - t).abs().to_string()]);
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    println!("split {split}: {} instances", items.len());
    println!("field,rel_l2");
    for (n, s) in names.iter().zip(&sums) {
        println!("{n},{:.6}", s / items.len() as f64);
    }
    Ok(())
}

fn read_mesh(path: &Path, model: &Model) -> Result<Mesh, CliError> {
    let file = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mesh = if csv { read_mesh_csv(file, Some(model.schema()))? } else { read_mesh_json(file, Some(model.schema()))? };
    Ok(mesh)
}

fn select_mesh(source: &MeshSource, instance: Option<&str>, model: &Model) -> Result<Mesh, CliError> {
    if let Some(path) = &source.mesh {
        return read_mesh(path, model);
    }
    let dir = source.data.as_ref().expect("clap enforces one mesh source");
    let spec = instance.ok_or_else(|| CliError::Config("--data needs --instance split:index".into()))?;
    let (split, idx) = spec
        .split_once(':')
        .and_then(|(s, i)| i.parse::<usize>().ok().map(|i| (s, i)))
        .ok_or_else(|| CliError::Config(format!("--instance `{spec}` is not split:index")))?;
    let mut ds = read_dataset(dir)?;
    let list = ds.splits.remove(split).ok_or_else(|| CliError::Config(format!("dataset has no split `{split}`")))?;
    let n = list.len();
    list.into_iter()
        .nth(idx)
        .map(|i| i.mesh)
        .ok_or_else(|| CliError::Config(format!("split `{split}` has {n} instances, asked for {idx}")))
}

fn parse_resolution(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("--resolution `{s}` is not NXxNY"));
    let (a, b) = s.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(bad)?;
    let (nx, ny) = (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?);
    if nx == 0 || ny == 0 {
        return Err(bad());
    }
    Ok((nx, ny))
}

fn read_points(path: &Path) -> Result<Vec<[f64; 2]>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
    let header = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if header.get(0) != Some("x") || header.get(1) != Some("y") {
        return Err(CliError::Config(format!("{}: points CSV must start with columns x,y", path.display())));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| io_err(path, e))?;
        let num = |c: usize| {
            row.get(c)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{}: row {i}: {e}", path.display())))
        };
        out.push([num(0)?, num(1)?]);
    }
    Ok(out)
}

fn select_points(source: &PointSource, mesh: &Mesh, seed: u64) -> Result<Vec<[f64; 2]>, CliError> {
    let bb = mesh.bbox();
    let points = if let Some(r) = &source.resolution {
        let (nx, ny) = parse_resolution(r)?;
        regular_grid(nx, ny, bb.min, bb.max)
    } else if let Some(n) = source.random {
        uniform_points(&mut ChaCha8Rng::seed_from_u64(seed), n, bb.min, bb.max)
    } else {
        read_points(source.points.as_ref().expect("clap enforces one point source"))?
    };
    let outside = points.iter().filter(|p| !bb.contains(**p)).count();
    if outside > 0 {
        eprintln!("meshquery: warning: {outside} of {} points lie outside the mesh bounding box", points.len());
    }
    Ok(points)
}

pub fn query(
    checkpoint: &Path,
    source: &MeshSource,
    instance: Option<&str>,
    points: &PointSource,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (model, params, fields) = load_checkpoint(checkpoint)?;
    let mesh = select_mesh(source, instance, &model)?;
    let queries = select_points(points, &mesh, seed)?;
    let pred = model.predict(&params, &mesh, &queries, PREDICT_BATCH)?;
    let mut w = csv_writer(out)?;
    let mut header = vec!["x".to_string(), "y".into()];
    header.extend(fields);
    w.write_record(&header).map_err(csv_err)?;
    for (r, q) in queries.iter().enumerate() {
        let mut rec = vec![q[0].to_string(), q[1].to_string()];
        rec.extend(pred.row(r).iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_attn(
    checkpoint: &Path,
    source: &MeshSource,
    instance: Option<&str>,
    points: &PointSource,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let (model, params, _) = load_checkpoint(checkpoint)?;
    let mesh = select_mesh(source, instance, &model)?;
    let queries = select_points(points, &mesh, seed)?;
    let maps = model.decoder_attention(&params, &mesh, &queries)?;
    let mut w = csv_writer(Some(out))?;
    w.write_record(["layer", "head", "query", "token", "weight"]).map_err(csv_err)?;
    for m in &maps {
        for q in 0..m.weights.rows() {
            for (t, v) in m.weights.row(q).iter().enumerate() {
                w.write_record([m.layer.to_string(), m.head.to_string(), q.to_string(), t.to_string(), v.to_string()]).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    println!("{} maps over {} queries written to {}", maps.len(), queries.len(), out.display());
    Ok(())
}

fn enum_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn ablate(kind: AblationKind, out: &Path, common: &Common) -> Result<(), CliError> {
    let benchmark = match kind {
        AblationKind::Gce => Benchmark::Ambiguity,
        AblationKind::Patch => Benchmark::Beam2d,
    };
    let cfg = resolve(Some(benchmark), common)?;
    prepare_out(out)?;
    fs::write(out.join("config.json"), cfg.to_json()).map_err(|e| io_err(out, e))?;
    match kind {
        AblationKind::Gce => {
            let rows = gce_ablation(&cfg.gce_ablation, cfg.seed)?;
            let path = out.join("gce_ablation.csv");
            let mut w = csv_writer(Some(&path))?;
            w.write_record(["embedding", "top", "rel_l2", "epochs_run"]).map_err(csv_err)?;
            println!("embedding,top,rel_l2");
            for r in &rows {
                let (emb, top) = (enum_name(&r.embedding), enum_name(&r.half));
                println!("{emb},{top},{:.6}", r.rel_l2);
                w.write_record([emb, top, r.rel_l2.to_string(), r.epochs_run.to_string()]).map_err(csv_err)?;
            }
            w.flush()?;
        }
        AblationKind::Patch => {
            let rows = patch_ablation(&cfg.patch_ablation, cfg.seed)?;
            let path = out.join("patch_ablation.csv");
            let mut w = csv_writer(Some(&path))?;
            w.write_record(["patch_size", "tokens", "attn_bytes", "encode_s", "rel_l2"]).map_err(csv_err)?;
            println!("patch_size,tokens,attn_bytes,encode_s,rel_l2");
            for r in &rows {
                let err = r.rel_l2.map(|e| e.to_string()).unwrap_or_default();
                println!("{},{},{},{:.4},{err}", r.patch_size, r.tokens, r.attn_bytes, r.encode_s);
                w.write_record([r.patch_size.to_string(), r.tokens.to_string(), r.attn_bytes.to_string(), r.encode_s.to_string(), err])
                    .map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
