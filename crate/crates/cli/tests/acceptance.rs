//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits non-zero when any fails.
//!
//! Criteria 3 and 6-8 read a full-scale run (2000 instances, n = 5, m = 20,
//! root seed 42) produced by the `repscen` binary. The run is cached under the
//! cargo target directory, keyed by the binary's hash, so it is only redone
//! after the code changes. Set `REPSCEN_ACCEPTANCE_FRESH=1` to force a rerun,
//! or `REPSCEN_ACCEPTANCE_SKIP_FULL=1` to skip it (those criteria then fail).

#![allow(clippy::needless_range_loop)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repscen::cflp::{demand_scenario, generate_instance, to_two_stage, CflpInstance, GeneratorConfig};
use repscen::eval::{read_results, Method};
use repscen::features::{extract_features, DatasetRow, FEATURES_PER_CLIENT};
use repscen::learn::{train_lr, Dataset, LrConfig, Model, ModelKind, Split};
use repscen::mip::{solve_mip, MipProblem, MipStatus, RowSense, SolverConfig};
use repscen::model::{build_extensive_form, build_surrogate};
use repscen::rs_search::read_labels;
use repscen_cli::stages::{load_instances, read_exact, EXACT, LABELS, REPORT_DIR, RESULTS};
use sha2::{Digest, Sha256};

const ROOT_SEED: u64 = 42;
const OBJ_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |k: usize, o: Outcome| {
        println!("criterion {k}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(4, criterion_4());
    report(5, criterion_5());
    let skip = std::env::var("REPSCEN_ACCEPTANCE_SKIP_FULL").is_ok_and(|v| v == "1");
    match if skip { Err("skipped by REPSCEN_ACCEPTANCE_SKIP_FULL".into()) } else { desk_run() } {
        Ok(run) => {
            report(3, criterion_3(&run));
            report(6, criterion_6(&run));
            report(7, criterion_7(&run));
            report(8, criterion_8(&run));
            report(9, criterion_9(&run));
        }
        Err(e) => {
            for k in [3, 6, 7, 8, 9] {
                report(k, outcome(false, format!("full-scale run failed: {e}")));
            }
        }
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// independent oracles

/// Minimum of a pure-binary problem by enumeration, `None` when infeasible.
fn enumerate_binary(p: &MipProblem) -> Option<f64> {
    let n = p.num_vars();
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = ((mask >> j) & 1) as f64;
        }
        if p.rows.iter().all(|r| r.violation(&x) <= 1e-9) {
            let obj: f64 = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

/// Expected total cost of first-stage `x = (b, v)` built directly from the
/// instance data: per scenario, open links `u`, ship `y`, pay `z` for unmet
/// demand.
fn independent_phi(inst: &CflpInstance, x: &[f64], penalty: f64) -> f64 {
    let n = inst.n;
    let (b, v) = x.split_at(n);
    let first: f64 = (0..n).map(|i| inst.c_f[i] * b[i] + inst.c_v[i] * v[i]).sum();
    let cfg = SolverConfig::exact();
    let u = |i: usize, j: usize| i * n + j;
    let y = |i: usize, j: usize| n * n + i * n + j;
    let z = |j: usize| 2 * n * n + j;
    let mut total = 0.0;
    for d in &inst.demand {
        let mut obj = vec![0.0; 2 * n * n + n];
        for i in 0..n {
            for j in 0..n {
                obj[u(i, j)] = inst.c_tf[i][j];
                obj[y(i, j)] = inst.c_tv[i][j];
            }
        }
        for j in 0..n {
            obj[z(j)] = penalty;
        }
        let mut p = MipProblem::new(obj);
        for i in 0..n {
            for j in 0..n {
                p.integer[u(i, j)] = true;
                p.upper[u(i, j)] = 1.0;
                p.add_row(vec![(y(i, j), 1.0), (u(i, j), -(d[j] as f64))], RowSense::Le, 0.0);
            }
            p.add_row((0..n).map(|j| (y(i, j), 1.0)).collect(), RowSense::Le, v[i].max(0.0));
        }
        for j in 0..n {
            let mut row: Vec<(usize, f64)> = (0..n).map(|i| (y(i, j), 1.0)).collect();
            row.push((z(j), 1.0));
            p.add_row(row, RowSense::Eq, d[j] as f64);
        }
        let sol = solve_mip(&p, &cfg).expect("recourse solve");
        assert_eq!(sol.status, MipStatus::Optimal, "recourse problem must solve to optimality");
        total += sol.best_objective;
    }
    first + total / inst.m as f64
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// criteria that need no full-scale run

fn random_binary_mip(rng: &mut ChaCha8Rng) -> MipProblem {
    let n = rng.random_range(1..=12);
    let m = rng.random_range(1..=10);
    let obj: Vec<f64> = (0..n).map(|_| (rng.random_range(-1000..=1000) as f64) / 100.0).collect();
    let mut p = MipProblem::new(obj);
    for j in 0..n {
        p.integer[j] = true;
        p.upper[j] = 1.0;
    }
    let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let infeasible_try = rng.random_bool(0.1);
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            let a = rng.random_range(-6..=6) as f64;
            if rng.random_bool(0.6) && a != 0.0 {
                coeffs.push((j, a));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.random_range(0..n), 1.0));
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * anchor[j]).sum();
        let slack = rng.random_range(0..4) as f64;
        let (sense, rhs) = match rng.random_range(0..10) {
            0 => (RowSense::Eq, act),
            1..=5 => (RowSense::Le, if infeasible_try { act - 3.0 } else { act + slack }),
            _ => (RowSense::Ge, act - slack),
        };
        p.add_row(coeffs, sense, rhs);
    }
    p
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let cfg = SolverConfig::exact();
    let started = Instant::now();
    let (mut mismatches, mut infeasible, mut worst) = (Vec::new(), 0, 0.0f64);
    for k in 0..100 {
        let p = random_binary_mip(&mut rng);
        let truth = enumerate_binary(&p);
        let sol = solve_mip(&p, &cfg).expect("solve");
        match (truth, sol.status) {
            (None, MipStatus::Infeasible) => infeasible += 1,
            (Some(t), MipStatus::Optimal) => {
                let err = (t - sol.best_objective).abs();
                worst = worst.max(err);
                if err > OBJ_TOL {
                    mismatches.push(k);
                }
            }
            _ => mismatches.push(k),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < 60.0,
        format!(
            "100 random binary MIPs vs enumeration: {} mismatches (tol {OBJ_TOL:e}), {infeasible} infeasible agreed, \
             max |err| {worst:.2e}, {secs:.2}s (< 60s)",
            mismatches.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let solver = SolverConfig::exact();
    let mut worst = 0.0f64;
    let mut bad = 0;
    for k in 0..50u64 {
        let gen = GeneratorConfig { n: 3 + (k as usize % 3), m: 1, ..GeneratorConfig::default() };
        let inst = generate_instance(&gen, 1000 + k).expect("instance");
        let ts = to_two_stage(&inst, gen.penalty()).expect("lowering");
        let ef = solve_mip(&build_extensive_form(&ts).unwrap(), &solver).unwrap();
        let d: Vec<f64> = inst.demand[0].iter().map(|&v| v as f64).collect();
        let xi = demand_scenario(&ts, inst.n, &d);
        let sur = solve_mip(&build_surrogate(&ts, &xi).unwrap(), &solver).unwrap();
        let ok = ef.status == MipStatus::Optimal && sur.status == MipStatus::Optimal;
        let err = (ef.best_objective - sur.best_objective).abs();
        worst = worst.max(err);
        if !ok || err > OBJ_TOL {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!("50 single-scenario instances: {bad} with |EF - surrogate| > {OBJ_TOL:e}, max {worst:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let mut problems = Vec::new();
    for n in [3usize, 5, 10] {
        let gen = GeneratorConfig { n, ..GeneratorConfig::default() };
        let inst = generate_instance(&gen, n as u64).unwrap();
        let f = extract_features(&inst).unwrap();
        if f.values.len() != 19 * n || f.layout.len() != 19 * n || FEATURES_PER_CLIENT != 19 {
            problems.push(format!("n={n}: length {}", f.values.len()));
        }
    }
    let gen = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let inst = generate_instance(&gen, 500 + k).unwrap();
        let mut shuffled = inst.clone();
        shuffled.demand.shuffle(&mut rng);
        let a = extract_features(&inst).unwrap().values;
        let b = extract_features(&shuffled).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    if worst > 1e-12 {
        problems.push(format!("permutation changed features by {worst:.2e}"));
    }
    outcome(
        problems.is_empty(),
        format!("length 19n for n in {{3,5,10}}; 20 scenario permutations, max rel change {worst:.2e} {problems:?}"),
    )
}

fn fd_max_relative_error() -> f64 {
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let mut m = Model::zeros(ModelKind::Ann, 19 * n, &[64, 32], n);
    let p: Vec<f64> = (0..m.num_params()).map(|_| rng.random_range(-0.3..0.3)).collect();
    m.set_params(&p);
    let zs: Vec<Vec<f64>> = (0..5).map(|_| (0..19 * n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ys: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
    let zr: Vec<&[f64]> = zs.iter().map(|v| v.as_slice()).collect();
    let yr: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    let (_, grad) = m.loss_and_gradient(&zr, &yr);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..p.len() {
        let mut q = p.clone();
        q[k] = p[k] + h;
        m.set_params(&q);
        let up = m.loss_and_gradient(&zr, &yr).0;
        q[k] = p[k] - h;
        m.set_params(&q);
        let down = m.loss_and_gradient(&zr, &yr).0;
        let fd = (up - down) / (2.0 * h);
        let e = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
        worst = worst.max(e);
    }
    worst
}

fn lr_closed_vs_iterative() -> (f64, f64) {
    let (count, dim, out) = (50, 38, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let w: Vec<Vec<f64>> = (0..out).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let rows: Vec<DatasetRow> = (0..count)
        .map(|k| {
            let f: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..10.0)).collect();
            let label = w
                .iter()
                .map(|wo| 30.0 + wo.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-3.0..3.0))
                .collect();
            DatasetRow { instance_id: format!("s{k}"), features: f, label }
        })
        .collect();
    let ds = Dataset::new(rows, &vec![Split::Train; count]).unwrap();
    let (model, _) = train_lr(&ds, &LrConfig::default()).unwrap();

    let st = ds.fit_standardizer();
    let xs: Vec<Vec<f64>> = ds
        .examples
        .iter()
        .map(|e| {
            let mut z = st.apply(&e.features);
            z.push(1.0);
            z
        })
        .collect();
    let d = xs[0].len();
    let nf = count as f64;
    let mut wgd = vec![vec![0.0; d]; out];
    for _ in 0..20000 {
        for (j, wj) in wgd.iter_mut().enumerate() {
            let mut g = vec![0.0; d];
            for (x, e) in xs.iter().zip(&ds.examples) {
                let r = wj.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - e.label[j];
                g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += r * xi);
            }
            wj.iter_mut().zip(&g).for_each(|(a, gi)| *a -= 0.05 * gi / nf);
        }
    }
    let mut total = 0.0;
    for (x, e) in xs.iter().zip(&ds.examples) {
        for (j, wj) in wgd.iter().enumerate() {
            let r = wj.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - e.label[j];
            total += r * r;
        }
    }
    (model.metadata.train_mse, total / (nf * out as f64))
}

fn criterion_5() -> Outcome {
    let fd = fd_max_relative_error();
    let (closed, iterative) = lr_closed_vs_iterative();
    let diff = (closed - iterative).abs();
    outcome(
        fd < 1e-4 && diff < 1e-4,
        format!(
            "backprop vs central differences max rel err {fd:.2e} (< 1e-4); LR closed-form MSE {closed:.6} vs \
             gradient descent {iterative:.6}, |diff| {diff:.2e} (< 1e-4)"
        ),
    )
}

// ---------------------------------------------------------------------------
// full-scale run

struct DeskRun {
    dir: PathBuf,
    instances: HashMap<String, CflpInstance>,
    penalty: f64,
}

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_repscen"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(binary()).args(args).status().map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("repscen {} exited with {status}", args.join(" ")))
    }
}

fn jobs() -> String {
    std::thread::available_parallelism().map_or(1, |n| n.get()).to_string()
}

fn desk_run() -> Result<DeskRun, String> {
    let bytes = std::fs::read(binary()).map_err(|e| e.to_string())?;
    let key: String = Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect();
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let dir = base.join(format!("desk-{key}"));
    let done = dir.join(REPORT_DIR).join("table1_diff_ratio.csv");
    let fresh = std::env::var("REPSCEN_ACCEPTANCE_FRESH").is_ok_and(|v| v == "1");
    if fresh || !done.exists() {
        if let Ok(entries) = std::fs::read_dir(&base) {
            for e in entries.flatten() {
                if e.file_name().to_string_lossy().starts_with("desk-") {
                    let _ = std::fs::remove_dir_all(e.path());
                }
            }
        }
        eprintln!("acceptance: running the full-scale pipeline into {} (this takes a while)", dir.display());
        let seed = ROOT_SEED.to_string();
        run_cli(&["--seed", &seed, "--jobs", &jobs(), "--out", dir.to_str().unwrap(), "run"])?;
    } else {
        eprintln!("acceptance: reusing the full-scale run in {}", dir.display());
    }
    let instances = load_instances(&dir).map_err(|e| e.to_string())?.into_iter().collect();
    let penalty = GeneratorConfig::default().shortfall_penalty;
    Ok(DeskRun { dir, instances, penalty })
}

fn criterion_3(run: &DeskRun) -> Outcome {
    let labels = match read_labels(&run.dir.join(LABELS)) {
        Ok(l) => l,
        Err(e) => return outcome(false, e.to_string()),
    };
    let exact: HashMap<String, Vec<f64>> = match read_exact(&run.dir.join(EXACT)) {
        Ok(v) => v.into_iter().map(|e| (e.result.instance_id.clone(), e.result.x)).collect(),
        Err(e) => return outcome(false, e.to_string()),
    };
    let ids: Vec<String> = (0..200).map(|k| format!("inst_{k:05}")).collect();
    let solver = SolverConfig::exact();
    let (mut found, mut verify_failures, mut worst_ratio) = (0, Vec::new(), 0.0f64);
    for row in labels.iter().filter(|r| ids.contains(&r.instance_id)) {
        if !row.label.found {
            continue;
        }
        found += 1;
        let inst = &run.instances[&row.instance_id];
        let ts = to_two_stage(inst, Some(run.penalty)).unwrap();
        let xi = demand_scenario(&ts, inst.n, &row.label.xi_star);
        let sol = solve_mip(&build_surrogate(&ts, &xi).unwrap(), &solver).unwrap();
        let x = &sol.x[..2 * inst.n];
        let phi = independent_phi(inst, x, run.penalty);
        let reference = independent_phi(inst, &exact[&row.instance_id], run.penalty);
        let ratio = phi / reference;
        worst_ratio = worst_ratio.max(ratio);
        if phi > 1.01 * reference + OBJ_TOL {
            verify_failures.push(row.instance_id.clone());
        }
    }
    let rate = found as f64 / ids.len() as f64;
    outcome(
        rate >= 0.9 && verify_failures.is_empty(),
        format!(
            "found {found}/200 = {:.1}% (>= 90%); re-verified {found} labels, {} over 1.01 x reference, max ratio {worst_ratio:.5}",
            100.0 * rate,
            verify_failures.len()
        ),
    )
}

fn table(path: &Path) -> Result<HashMap<String, HashMap<String, f64>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let mut cols = HashMap::new();
        for (h, v) in headers.iter().zip(rec.iter()).skip(1) {
            cols.insert(h.to_string(), v.parse::<f64>().map_err(|e| e.to_string())?);
        }
        out.insert(rec[0].to_string(), cols);
    }
    Ok(out)
}

fn criterion_6(run: &DeskRun) -> Outcome {
    let t = match table(&run.dir.join(REPORT_DIR).join("table1_diff_ratio.csv")) {
        Ok(t) => t,
        Err(e) => return outcome(false, e),
    };
    let mean = |m: &str| t.get(m).map_or(f64::NAN, |c| c["avg"]);
    let (lr, avg, rnd) = (mean("LR"), mean("AVG"), mean("RND"));
    outcome(
        lr < avg && lr < rnd && lr <= 3.0,
        format!(
            "test split of {} instances: mean diff LR {lr:.3}% vs AVG {avg:.3}% and RND {rnd:.3}% (LR <= 3%)",
            t.get("LR").map_or(0.0, |c| c["count"])
        ),
    )
}

fn criterion_7(run: &DeskRun) -> Outcome {
    let t = match table(&run.dir.join(REPORT_DIR).join("table2_time.csv")) {
        Ok(t) => t,
        Err(e) => return outcome(false, e),
    };
    let get = |m: &str, c: &str| t.get(m).map_or(f64::NAN, |r| r[c]);
    let grb = get("GRB", "avg");
    let (lr, ann) = (get("LR", "avg"), get("ANN", "avg"));
    let (grb_l, lr_med) = (get("GRB-L", "median"), get("LR", "median"));
    outcome(
        lr < grb / 5.0 && ann < grb / 5.0 && grb_l > lr_med,
        format!(
            "mean time GRB {grb:.4}s, LR {lr:.5}s, ANN {ann:.5}s (< GRB/5); median GRB-L {grb_l:.4}s > median LR {lr_med:.5}s"
        ),
    )
}

fn criterion_8(run: &DeskRun) -> Outcome {
    let results = match read_results(&run.dir.join(RESULTS)) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for r in &results {
        let phi = independent_phi(&run.instances[&r.instance_id], &r.x, run.penalty);
        let err = (phi - r.objective).abs();
        worst = worst.max(err);
        if !rel_close(phi, r.objective, OBJ_TOL) {
            bad.push(format!("{}/{}", r.instance_id, r.method.as_str()));
        }
    }
    let methods = Method::ALL.iter().filter(|m| results.iter().any(|r| r.method == **m)).count();
    outcome(
        bad.is_empty() && !results.is_empty(),
        format!(
            "{} reported objectives over {methods} methods recomputed from instance data: {} off by more than {OBJ_TOL:e}, \
             max |err| {worst:.2e} {:?}",
            results.len(),
            bad.len(),
            bad.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn criterion_9(run: &DeskRun) -> Outcome {
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join("repeat");
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();
    let config = base.join("small.toml");
    std::fs::write(&config, "[generator]\ncount = 60\n").unwrap();
    let seed = ROOT_SEED.to_string();
    let mut dirs = Vec::new();
    for k in 0..2 {
        let dir = base.join(format!("run{k}"));
        let args = [
            "--config",
            config.to_str().unwrap(),
            "--seed",
            &seed,
            "--jobs",
            &jobs(),
            "--out",
            dir.to_str().unwrap(),
            "run",
        ];
        if let Err(e) = run_cli(&args) {
            return outcome(false, e);
        }
        dirs.push(dir);
    }
    let mut diffs = Vec::new();
    for f in ["dataset/dataset.csv", LABELS, "models/splits.csv", "models/lr.json", "models/ann.json"] {
        match (read(&dirs[0].join(f)), read(&dirs[1].join(f))) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => diffs.push(f.to_string()),
        }
    }
    let objectives = |d: &Path| -> Vec<(String, String, f64)> {
        read_results(&d.join(RESULTS))
            .map(|rs| rs.into_iter().map(|r| (r.instance_id, r.method.as_str().to_string(), r.objective)).collect())
            .unwrap_or_default()
    };
    let (oa, ob) = (objectives(&dirs[0]), objectives(&dirs[1]));
    if oa.is_empty() || oa != ob {
        diffs.push("objectives".into());
    }

    // relabel the first 20 instances of the full-scale run
    let sub = base.join("subset");
    std::fs::write(&config, "[generator]\ncount = 20\n").unwrap();
    let labels_match = run_cli(&[
        "--config",
        config.to_str().unwrap(),
        "--seed",
        &seed,
        "--jobs",
        &jobs(),
        "--out",
        sub.to_str().unwrap(),
        "generate",
    ])
    .and_then(|_| {
        run_cli(&[
            "--config",
            config.to_str().unwrap(),
            "--seed",
            &seed,
            "--jobs",
            &jobs(),
            "--in",
            sub.to_str().unwrap(),
            "--out",
            sub.to_str().unwrap(),
            "label",
        ])
    })
    .and_then(|_| {
        let a = read_labels(&sub.join(LABELS)).map_err(|e| e.to_string())?;
        let b = read_labels(&run.dir.join(LABELS)).map_err(|e| e.to_string())?;
        let b: Vec<_> = b.into_iter().filter(|r| a.iter().any(|x| x.instance_id == r.instance_id)).collect();
        Ok(!a.is_empty() && a == b)
    });
    if labels_match != Ok(true) {
        diffs.push(format!("subset relabel vs full run: {labels_match:?}"));
    }
    outcome(
        diffs.is_empty(),
        format!(
            "two runs at seed {ROOT_SEED} give identical dataset, labels, splits, model parameters and {} objectives; \
             20 relabeled instances match the full run {diffs:?}",
            oa.len()
        ),
    )
}
