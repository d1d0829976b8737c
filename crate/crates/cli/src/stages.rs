//! Pipeline stages. Each reads its inputs from the input directory, writes
//! its outputs under the output directory and records them in the manifest.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use repscen::cflp::{generate_batch, read_manifest, to_two_stage, write_manifest, CflpInstance, ManifestRow};
use repscen::eval::{
    avg_scenario, build_report, dist_scenario, label_instance, read_results, rnd_scenario, run_ml, run_surrogate,
    timed_prediction, write_report, write_results, DistMode, EvalError, ExactRun, Method, MethodResult,
};
use repscen::features::{extract_features, read_dataset, write_dataset, DatasetRow};
use repscen::learn::{assign_splits, train_ann, train_lr, write_log, Dataset, Model, Split};
use repscen::model::TwoStageInstance;
use repscen::rs_search::{read_labels, write_labels, LabelRow};
use repscen::seeds::{derive_seed, stage_seed};
use serde_json::json;

use crate::config::{EvalSplit, RunConfig};
use crate::error::{classify, classify_cflp, CliError};
use crate::manifest::{file_entry, RunManifest, StageEntry};

pub const INSTANCE_MANIFEST: &str = "instances/manifest.csv";
pub const LABELS: &str = "labels/labels.csv";
pub const EXACT: &str = "labels/exact.json";
pub const DATASET: &str = "dataset/dataset.csv";
pub const SPLITS: &str = "models/splits.csv";
pub const RESULTS: &str = "eval/results.csv";
pub const REPORT_DIR: &str = "report";

pub fn model_path(kind: Method) -> String {
    format!("models/{}.json", kind.as_str().to_lowercase())
}

pub fn log_path(kind: Method) -> String {
    format!("models/{}_log.csv", kind.as_str().to_lowercase())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainKind {
    Lr,
    Ann,
    Both,
}

pub struct Context {
    pub cfg: RunConfig,
    /// Where upstream artifacts are read from.
    pub input: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Context {
    pub fn new(cfg: RunConfig, input: Option<PathBuf>, jobs: usize) -> Self {
        let out = cfg.out.clone();
        Context { input: input.unwrap_or_else(|| out.clone()), out, cfg, jobs: jobs.max(1) }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build().map_err(CliError::other)
    }

    fn upstream(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.input.join(rel);
        if !p.exists() {
            return Err(CliError::upstream(&p, "missing (run the previous stage first)"));
        }
        Ok(p)
    }

    fn output(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.out.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::other(format!("{}: {e}", dir.display())))?;
        }
        Ok(p)
    }

    fn record(
        &self,
        stage: &str,
        seed: u64,
        started: Instant,
        outputs: &[String],
        notes: BTreeMap<String, serde_json::Value>,
    ) -> Result<(), CliError> {
        let mut m = RunManifest::open(&self.out, &self.cfg)?;
        let outputs = outputs.iter().map(|rel| file_entry(&self.out, rel)).collect::<Result<_, _>>()?;
        m.stages.insert(
            stage.to_string(),
            StageEntry {
                config_sha256: self.cfg.sha256(),
                seed,
                jobs: self.jobs,
                elapsed_s: started.elapsed().as_secs_f64(),
                outputs,
                notes,
            },
        );
        m.save(&self.out)
    }

    fn lower(&self, inst: &CflpInstance) -> Result<TwoStageInstance, CliError> {
        to_two_stage(inst, self.cfg.generator.penalty()).map_err(classify_cflp)
    }
}

/// `(instance id, instance)` in manifest order.
pub fn load_instances(dir: &Path) -> Result<Vec<(String, CflpInstance)>, CliError> {
    let mpath = dir.join(INSTANCE_MANIFEST);
    if !mpath.exists() {
        return Err(CliError::upstream(&mpath, "missing (run `generate` first)"));
    }
    let rows = read_manifest(&mpath).map_err(|e| CliError::upstream(&mpath, e))?;
    rows.iter()
        .map(|r| {
            let path = dir.join("instances").join(&r.instance_path);
            let inst = CflpInstance::read_json(&path).map_err(|e| CliError::upstream(&path, e))?;
            let id = Path::new(&r.instance_path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| CliError::upstream(&mpath, "bad instance path"))?;
            Ok((id, inst))
        })
        .collect()
}

fn notes(pairs: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn generate(ctx: &Context) -> Result<(), CliError> {
    let started = Instant::now();
    let seed = stage_seed(ctx.cfg.seed, "generate");
    let batch = generate_batch(&ctx.cfg.generator, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rows = Vec::with_capacity(batch.len());
    let mut outputs = vec![INSTANCE_MANIFEST.to_string()];
    for (k, inst) in batch.iter().enumerate() {
        let rel = format!("inst_{k:05}.json");
        inst.write_json(&ctx.output(&format!("instances/{rel}"))?).map_err(CliError::other)?;
        outputs.push(format!("instances/{rel}"));
        rows.push(ManifestRow { instance_path: rel, seed: inst.seed, status: "generated".into() });
    }
    write_manifest(&ctx.output(INSTANCE_MANIFEST)?, &rows).map_err(CliError::other)?;
    log::info!("generated {} instances", rows.len());
    ctx.record("generate", seed, started, &outputs, notes(&[("instances", json!(rows.len()))]))
}

pub fn read_exact(path: &Path) -> Result<Vec<ExactRun>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::upstream(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::upstream(path, e))
}

pub fn label(ctx: &Context) -> Result<(), CliError> {
    let started = Instant::now();
    let instances = load_instances(&ctx.input)?;
    let c = &ctx.cfg;
    let done = AtomicUsize::new(0);
    let total = instances.len();
    let outcomes: Vec<Result<Option<(ExactRun, LabelRow)>, CliError>> = ctx.pool()?.install(|| {
        instances
            .par_iter()
            .map(|(id, inst)| {
                let ts = ctx.lower(inst)?;
                let outcome = label_instance(id, inst, &ts, &c.solver.exact, &c.rs_search, &c.solver.surrogate);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if k.is_multiple_of(100) {
                    log::info!("labeled {k}/{total}");
                }
                match outcome {
                    Ok((exact, label)) => {
                        log::debug!("{id}: found={} iterations={}", label.found, label.iterations_used);
                        Ok(Some((exact, LabelRow { instance_id: id.clone(), label })))
                    }
                    Err(EvalError::NoIncumbent(_)) => {
                        log::warn!("{id}: exact solve ended without an incumbent; excluded");
                        Ok(None)
                    }
                    Err(e) => Err(classify(e)),
                }
            })
            .collect()
    });
    let mut exact = Vec::new();
    let mut labels = Vec::new();
    for o in outcomes {
        if let Some((e, l)) = o? {
            exact.push(e);
            labels.push(l);
        }
    }
    let found = labels.iter().filter(|l| l.label.found).count();
    log::info!("labeled {} of {} instances; found {found}", labels.len(), instances.len());
    write_labels(&ctx.output(LABELS)?, &labels).map_err(CliError::other)?;
    let text = serde_json::to_string_pretty(&exact).map_err(CliError::other)?;
    std::fs::write(ctx.output(EXACT)?, text).map_err(CliError::other)?;
    ctx.record(
        "label",
        stage_seed(c.seed, "label"),
        started,
        &[LABELS.into(), EXACT.into()],
        notes(&[
            ("instances", json!(instances.len())),
            ("labeled", json!(labels.len())),
            ("excluded", json!(instances.len() - labels.len())),
            ("found", json!(found)),
        ]),
    )
}

fn load_labels(ctx: &Context) -> Result<Vec<LabelRow>, CliError> {
    let path = ctx.upstream(LABELS)?;
    read_labels(&path).map_err(|e| CliError::upstream(&path, e))
}

pub fn featurize(ctx: &Context) -> Result<(), CliError> {
    let started = Instant::now();
    let instances: HashMap<String, CflpInstance> = load_instances(&ctx.input)?.into_iter().collect();
    let labels = load_labels(ctx)?;
    let mut rows = Vec::new();
    let mut layout = None;
    for l in labels.iter().filter(|l| l.label.found || ctx.cfg.features.include_unfound) {
        let inst = instances.get(&l.instance_id).ok_or_else(|| {
            CliError::upstream(&ctx.input.join(LABELS), format!("unknown instance {}", l.instance_id))
        })?;
        let f = extract_features(inst).map_err(CliError::other)?;
        layout = Some(f.layout);
        rows.push(DatasetRow {
            instance_id: l.instance_id.clone(),
            features: f.values,
            label: l.label.xi_star.clone(),
        });
    }
    let layout = layout.ok_or_else(|| CliError::upstream(&ctx.input.join(LABELS), "no usable labels"))?;
    write_dataset(&ctx.output(DATASET)?, layout, &rows).map_err(CliError::other)?;
    log::info!("dataset: {} rows, {} features", rows.len(), layout.len());
    ctx.record(
        "featurize",
        stage_seed(ctx.cfg.seed, "featurize"),
        started,
        &[DATASET.into()],
        notes(&[("rows", json!(rows.len())), ("features", json!(layout.len()))]),
    )
}

/// Dataset with the run's split assignment.
pub fn load_dataset(ctx: &Context) -> Result<Dataset, CliError> {
    let path = ctx.upstream(DATASET)?;
    let (_, rows) = read_dataset(&path).map_err(|e| CliError::upstream(&path, e))?;
    let t = &ctx.cfg.training;
    let splits = assign_splits(rows.len(), t.train_fraction, t.val_fraction, stage_seed(ctx.cfg.seed, "split"))
        .map_err(|e| CliError::Config(e.to_string()))?;
    Dataset::new(rows, &splits).map_err(|e| CliError::upstream(&path, e))
}

pub fn train(ctx: &Context, kind: TrainKind) -> Result<(), CliError> {
    let started = Instant::now();
    let ds = load_dataset(ctx)?;
    let mut w = csv::Writer::from_path(ctx.output(SPLITS)?).map_err(CliError::other)?;
    w.write_record(["instance_id", "split"]).map_err(CliError::other)?;
    for e in &ds.examples {
        w.write_record([e.id.as_str(), e.split.as_str()]).map_err(CliError::other)?;
    }
    w.flush().map_err(CliError::other)?;
    let mut outputs = vec![SPLITS.to_string()];
    let mut note = vec![
        ("train", json!(ds.count(Split::Train))),
        ("val", json!(ds.count(Split::Val))),
        ("test", json!(ds.count(Split::Test))),
    ];
    let t = &ctx.cfg.training;
    let ann_seed = derive_seed(ctx.cfg.seed, "train-ann", t.ann.seed);
    let mut trained = Vec::new();
    if kind != TrainKind::Ann {
        trained.push((Method::Lr, train_lr(&ds, &t.lr).map_err(CliError::other)?));
    }
    if kind != TrainKind::Lr {
        let cfg = repscen::learn::AnnConfig { seed: ann_seed, ..t.ann.clone() };
        trained.push((Method::Ann, train_ann(&ds, &cfg).map_err(CliError::other)?));
    }
    for (m, (model, log)) in &trained {
        model.write_json(&ctx.output(&model_path(*m))?).map_err(CliError::other)?;
        write_log(&ctx.output(&log_path(*m))?, log).map_err(CliError::other)?;
        outputs.extend([model_path(*m), log_path(*m)]);
        log::info!("{}: train MSE {:.3}, val MSE {:.3}", m.as_str(), model.metadata.train_mse, model.metadata.val_mse);
    }
    let key = |m: &Method| format!("{}_val_mse", m.as_str().to_lowercase());
    let keys: Vec<(String, f64)> = trained.iter().map(|(m, (model, _))| (key(m), model.metadata.val_mse)).collect();
    note.extend(keys.iter().map(|(k, v)| (k.as_str(), json!(v))));
    ctx.record("train", ann_seed, started, &outputs, notes(&note))
}

pub fn read_splits(path: &Path) -> Result<HashMap<String, Split>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::upstream(path, e))?;
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::upstream(path, e))?;
        let split = match &rec[1] {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            other => return Err(CliError::upstream(path, format!("unknown split {other:?}"))),
        };
        out.insert(rec[0].to_string(), split);
    }
    Ok(out)
}

fn load_model(ctx: &Context, m: Method) -> Result<Model, CliError> {
    let path = ctx.upstream(&model_path(m))?;
    Model::read_json(&path).map_err(|e| CliError::upstream(&path, e))
}

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let started = Instant::now();
    let c = &ctx.cfg;
    let methods = &c.evaluation.methods;
    let want = match c.evaluation.split {
        EvalSplit::Train => Split::Train,
        EvalSplit::Val => Split::Val,
        EvalSplit::Test => Split::Test,
    };
    let splits = read_splits(&ctx.upstream(SPLITS)?)?;
    let exact_path = ctx.upstream(EXACT)?;
    let exact: HashMap<String, ExactRun> =
        read_exact(&exact_path)?.into_iter().map(|e| (e.result.instance_id.clone(), e)).collect();
    let instances: Vec<(String, CflpInstance)> =
        load_instances(&ctx.input)?.into_iter().filter(|(id, _)| splits.get(id) == Some(&want)).collect();
    if instances.is_empty() {
        return Err(CliError::upstream(&ctx.input.join(SPLITS), "evaluation split is empty"));
    }
    let lr = if methods.contains(&Method::Lr) || methods.contains(&Method::Dist) {
        Some(load_model(ctx, Method::Lr)?)
    } else {
        None
    };
    let ann = if methods.contains(&Method::Ann) { Some(load_model(ctx, Method::Ann)?) } else { None };
    let eval_seed = stage_seed(c.seed, "evaluate");
    let sur = &c.solver.surrogate;

    let run = |k: usize, id: &str, inst: &CflpInstance, pool: &[Vec<f64>]| -> Result<Vec<MethodResult>, CliError> {
        let ts = ctx.lower(inst)?;
        let ex = exact.get(id).ok_or_else(|| CliError::upstream(&exact_path, format!("no exact result for {id}")))?;
        let mut out = Vec::new();
        for &m in methods {
            let k = k as u64;
            let r = match m {
                Method::Grb => Ok(ex.result.clone()),
                Method::Avg => run_surrogate(id, m, &ts, inst.n, &avg_scenario(inst), sur, 0.0, 0.0),
                Method::Rnd => {
                    let xi = rnd_scenario(inst, derive_seed(eval_seed, "rnd", k));
                    run_surrogate(id, m, &ts, inst.n, &xi, sur, 0.0, 0.0)
                }
                Method::Dist => timed_prediction(inst, lr.as_ref().expect("loaded")).and_then(|p| {
                    let xi = dist_scenario(&p.values, c.evaluation.dist_mode, pool, derive_seed(eval_seed, "dist", k))?;
                    run_surrogate(id, m, &ts, inst.n, &xi, sur, p.feature_time_s, p.predict_time_s)
                }),
                Method::Lr => run_ml(id, m, inst, &ts, lr.as_ref().expect("loaded"), sur),
                Method::Ann => run_ml(id, m, inst, &ts, ann.as_ref().expect("loaded"), sur),
            };
            out.push(r.map_err(classify)?);
        }
        Ok(out)
    };

    let pool: Vec<Vec<f64>> = match (&lr, c.evaluation.dist_mode) {
        (Some(model), DistMode::Empirical) => instances
            .iter()
            .map(|(_, inst)| timed_prediction(inst, model).map(|p| p.values).map_err(classify))
            .collect::<Result<_, _>>()?,
        _ => Vec::new(),
    };
    let per_instance: Vec<Result<Vec<MethodResult>, CliError>> = ctx
        .pool()?
        .install(|| instances.par_iter().enumerate().map(|(k, (id, inst))| run(k, id, inst, &pool)).collect());
    let mut results = Vec::new();
    for r in per_instance {
        results.extend(r?);
    }
    write_results(&ctx.output(RESULTS)?, &results).map_err(CliError::other)?;
    log::info!("evaluated {} instances x {} methods", instances.len(), methods.len());
    ctx.record(
        "evaluate",
        eval_seed,
        started,
        &[RESULTS.into()],
        notes(&[("instances", json!(instances.len())), ("methods", json!(methods))]),
    )
}

pub fn report(ctx: &Context) -> Result<(), CliError> {
    let started = Instant::now();
    let rpath = ctx.upstream(RESULTS)?;
    let results = read_results(&rpath).map_err(|e| CliError::upstream(&rpath, e))?;
    let trajectories: BTreeMap<String, Vec<(f64, f64)>> =
        read_exact(&ctx.upstream(EXACT)?)?.into_iter().map(|e| (e.result.instance_id, e.trajectory)).collect();
    let evaluated: std::collections::HashSet<&str> = results.iter().map(|r| r.instance_id.as_str()).collect();
    let labels: Vec<Vec<f64>> = load_labels(ctx)?
        .into_iter()
        .filter(|l| evaluated.contains(l.instance_id.as_str()))
        .map(|l| l.label.xi_star)
        .collect();
    let rep = build_report(&results, &trajectories).map_err(|e| CliError::upstream(&rpath, e))?;
    let dir = ctx.output(&format!("{REPORT_DIR}/report.json"))?;
    let dir = dir.parent().expect("has parent");
    write_report(dir, &rep, &results, &labels, ctx.cfg.evaluation.histogram_bin_width).map_err(CliError::other)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&rep).map_err(CliError::other)?)
        .map_err(CliError::other)?;
    let mut outputs: Vec<String> = std::fs::read_dir(dir)
        .map_err(CliError::other)?
        .filter_map(|e| e.ok())
        .map(|e| format!("{REPORT_DIR}/{}", e.file_name().to_string_lossy()))
        .collect();
    outputs.sort();
    for s in &rep.diff_ratio_pct {
        log::info!("{:5} mean diff {:.3}%  median {:.3}%", s.method, s.summary.mean, s.summary.median);
    }
    ctx.record(
        "report",
        stage_seed(ctx.cfg.seed, "report"),
        started,
        &outputs,
        notes(&[("instances", json!(rep.instances))]),
    )
}

/// Every stage in order.
pub fn run_all(ctx: &Context) -> Result<(), CliError> {
    generate(ctx)?;
    label(ctx)?;
    featurize(ctx)?;
    train(ctx, TrainKind::Both)?;
    evaluate(ctx)?;
    report(ctx)
}
