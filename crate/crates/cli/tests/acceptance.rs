//! Acceptance run: one PASS/FAIL line per criterion. Each criterion checks
//! the library or the `metaseg` binary against an oracle written here.
//!
//! Every criterion except the learning-rate trend gates the exit status. The
//! trend is an empirical outcome of a fixed experiment and is reported only.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use metaseg_core::data::{generate_synthetic_dataset, Area, SyntheticSpec};
use metaseg_core::gradcheck::{run_gradcheck, GradcheckConfig};
use metaseg_core::meta::{
    adapt_and_eval, meta_gradient, pretrain, EpisodeSource, EvalConfig, GradientMode, LossCurve, MetaConfig,
    PointNetLearner, QuadraticLearner, QuadraticTask, Schedule,
};
use metaseg_core::metrics::{compute_metrics, ConfusionMatrix};
use metaseg_core::model::{forward, init_params, PointNetConfig};
use metaseg_core::sampler::{
    build_task_distribution, index_categories, CategoryMode, Episode, EpisodeSpec, SamplePool,
};
use metaseg_core::tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn desk_areas(seed: u64) -> Vec<Area> {
    generate_synthetic_dataset(&SyntheticSpec::desk_default(), seed).expect("synthetic data")
}

fn small_model(classes: usize, points: usize) -> PointNetConfig {
    PointNetConfig {
        mlp1_widths: vec![16, 16],
        mlp2_widths: vec![16, 32, 64],
        seg_head_widths: vec![32, 16],
        points_per_block: points,
        ..PointNetConfig::new(classes)
    }
}

fn gradient_correctness() -> Outcome {
    let cfg = GradcheckConfig::default();
    let t = Instant::now();
    let report = run_gradcheck(&cfg, None).expect("gradcheck runs");
    let secs = t.elapsed().as_secs_f64();
    let ok = report.passed() && report.checks.len() == 100 && secs < 60.0;
    outcome(
        ok,
        format!(
            "max rel err {:.2e} (<= 1e-7) over {} coordinates, eps {:e}",
            report.max_rel_err,
            report.checks.len(),
            cfg.eps
        ),
    )
}

/// Closed form for L_S = (w-a)², L_Q = (w-b)² after `steps` inner steps:
/// φ = a + (θ-a)(1-2β)^steps.
fn quadratic_oracle(theta: f64, task: QuadraticTask, beta: f64, steps: i32, second_order: bool) -> f64 {
    let f = (1.0 - 2.0 * beta).powi(steps);
    let phi = task.a + (theta - task.a) * f;
    let g = 2.0 * (phi - task.b);
    if second_order {
        g * f
    } else {
        g
    }
}

fn maml_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for _ in 0..500 {
        let theta = rng.gen_range(-5.0..5.0);
        let beta = rng.gen_range(0.0..0.4);
        let steps = rng.gen_range(1..=3);
        let batch: Vec<QuadraticTask> = (0..rng.gen_range(1..=4))
            .map(|_| QuadraticTask {
                a: rng.gen_range(-5.0..5.0),
                b: rng.gen_range(-5.0..5.0),
            })
            .collect();
        for (mode, second) in [(GradientMode::FirstOrder, false), (GradientMode::SecondOrder, true)] {
            let config = MetaConfig {
                beta,
                inner_steps: steps as usize,
                gradient_mode: mode,
                ..MetaConfig::default()
            };
            let (_, g) = meta_gradient(&QuadraticLearner, &QuadraticLearner::params::<f64>(theta), &batch, &config)
                .expect("meta gradient");
            let got = g.get(QuadraticLearner::PARAM).expect("w").data()[0];
            let want = batch.iter().map(|&t| quadratic_oracle(theta, t, beta, steps, second)).sum::<f64>()
                / batch.len() as f64;
            worst = worst.max((got - want).abs() / want.abs().max(1e-8));
            trials += 1;
        }
    }
    outcome(worst <= 1e-6, format!("{trials} cases, worst rel err {worst:.2e} (<= 1e-6)"))
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    for trial in 0..1000 {
        let p = rng.gen_range(1..=500);
        let m = rng.gen_range(1..=13);
        // a random subset of classes in use, so absent classes occur
        let used: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.7)).collect();
        let used = if used.is_empty() { vec![0] } else { used };
        let truth: Vec<usize> = (0..p).map(|_| *used.choose(&mut rng).unwrap()).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.gen_bool(0.6) { t } else { *used.choose(&mut rng).unwrap() })
            .collect();
        let metrics = compute_metrics(&ConfusionMatrix::new(m).accumulate(&pred, &truth).unwrap()).unwrap();

        let correct = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let (mut accs, mut ious) = (Vec::new(), Vec::new());
        for i in 0..m {
            let n = truth.iter().filter(|&&t| t == i).count();
            let c = pred.iter().zip(&truth).filter(|&(&q, &t)| q == i && t == i).count();
            let w = pred.iter().zip(&truth).filter(|&(&q, &t)| q == i && t != i).count();
            if n + w == 0 {
                continue;
            }
            accs.push(if n == 0 { 0.0 } else { c as f64 / n as f64 });
            ious.push(c as f64 / (n + w) as f64);
        }
        let macc = accs.iter().sum::<f64>() / accs.len() as f64;
        let miou = ious.iter().sum::<f64>() / ious.len() as f64;
        let ok = metrics.oacc == correct as f64 / p as f64
            && (metrics.macc - macc).abs() <= 1e-12
            && (metrics.miou - miou).abs() <= 1e-12
            && metrics.miou <= metrics.macc;
        if !ok {
            violations.push(trial);
        }
    }
    outcome(violations.is_empty(), format!("1000 trials, {} mismatches {:?}", violations.len(), violations))
}

fn episode_violations(e: &Episode, spec: &EpisodeSpec, pool: &SamplePool) -> Vec<String> {
    let mut v = Vec::new();
    if e.support.len() != spec.n * spec.k {
        v.push(format!("|S| = {}", e.support.len()));
    }
    if e.query.len() != spec.t * spec.n * spec.k {
        v.push(format!("|Q| = {}", e.query.len()));
    }
    if e.categories.iter().collect::<BTreeSet<_>>().len() != spec.n || e.categories.len() != spec.n {
        v.push("categories not n distinct".into());
    }
    for c in 0..e.categories.len() {
        let s = e.support.iter().filter(|it| it.category == c).count();
        let q = e.query.iter().filter(|it| it.category == c).count();
        if s != spec.k || q != spec.t * spec.k {
            v.push(format!("category {c}: {s} support, {q} query"));
        }
    }
    for it in e.support.iter().chain(&e.query) {
        let room_type = pool.get(it.sample).expect("sample in pool").block.room_type.as_str();
        if e.categories.get(it.category).map(String::as_str) != Some(room_type) {
            v.push(format!("sample {} is a {room_type} block", it.sample));
        }
    }
    let all: BTreeSet<usize> = e.support.iter().chain(&e.query).map(|it| it.sample).collect();
    if all.len() != e.support.len() + e.query.len() {
        v.push("repeated sample within S ∪ Q".into());
    }
    v
}

fn sampler_properties() -> Outcome {
    let areas = desk_areas(0);
    let pool = SamplePool::from_areas(&areas, 1.0).unwrap();
    let index = index_categories(&pool, CategoryMode::RoomType).unwrap();
    let mut specs = Vec::new();
    for n in [1, 2, 6] {
        for k in [1, 2, 6] {
            for t in [1, 2] {
                specs.push(EpisodeSpec::new(n, k, t));
            }
        }
    }
    let mut violations = Vec::new();
    let mut checked = 0;
    for (si, spec) in specs.iter().enumerate() {
        let count = 1000 / specs.len() + usize::from(si < 1000 % specs.len());
        let dist = build_task_distribution(&index, *spec, count, si as u64).unwrap();
        let again = build_task_distribution(&index, *spec, count, si as u64).unwrap();
        // replay in reverse order to show episodes do not depend on a cursor
        for i in (0..count).rev() {
            let e = dist.episode(i).unwrap();
            if again.episode(i).unwrap() != e {
                violations.push(format!("{spec:?} #{i}: not reproducible"));
            }
            violations.extend(episode_violations(&e, spec, &pool).into_iter().map(|m| format!("{spec:?} #{i}: {m}")));
            checked += 1;
        }
    }
    outcome(
        violations.is_empty() && checked == 1000,
        format!(
            "{checked} episodes over {} specs, {} violations{}",
            specs.len(),
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

fn permutation_equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for trial in 0..50 {
        let config = PointNetConfig {
            use_tnet: trial % 2 == 1,
            ..PointNetConfig::new(13)
        };
        let params = init_params::<f32>(&config, trial).unwrap().params;
        let p = rng.gen_range(2..=128);
        let data: Vec<f32> = (0..p * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<f32> = perm.iter().flat_map(|&i| data[i * 9..i * 9 + 9].to_vec()).collect();
        let run = |x: Vec<f32>| {
            let mut tape = Tape::new();
            let vars = tape.register_params(&params);
            let xv = tape.constant(Tensor::new(vec![p, 9], x).unwrap());
            let out = forward(&mut tape, &vars, &config, xv).unwrap();
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<u32>>();
            (bits(tape.value(out.logits)), bits(tape.value(out.global_feature)))
        };
        let (logits, global) = run(data);
        let (plogits, pglobal) = run(permuted);
        let c = 13;
        let rows_match = perm
            .iter()
            .enumerate()
            .all(|(r, &src)| plogits[r * c..(r + 1) * c] == logits[src * c..(src + 1) * c]);
        if !(rows_match && global == pglobal) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("50 blocks (half with T-Net), {bad} not bit-identical"))
}

/// Final 50-step mean query loss per β for one seed.
fn beta_sweep(pool: &SamplePool, index: &metaseg_core::sampler::CategoryIndex, classes: usize, seed: u64) -> Vec<f64> {
    let model = small_model(classes, 64);
    let learner = PointNetLearner::new(model.clone());
    [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&beta| {
            let config = MetaConfig {
                alpha: 1e-3,
                beta,
                tasks_per_batch: 4,
                schedule: Schedule {
                    epochs: 1,
                    steps_per_epoch: 500,
                    ..Schedule::default()
                },
                ..MetaConfig::default()
            };
            let source = EpisodeSource::for_schedule(pool, index, EpisodeSpec::new(2, 6, 1), &config, 64, seed).unwrap();
            let init = init_params::<f32>(&model, seed).unwrap().params;
            let mut curve = LossCurve::default();
            pretrain(&learner, init, &config, |s, n| source.batch(s, n), &mut curve).unwrap();
            curve.tail_mean(50).unwrap()
        })
        .collect()
}

fn learning_rate_trend() -> Outcome {
    let areas = desk_areas(1);
    let pool = SamplePool::from_areas(&areas, 1.0).unwrap();
    let index = index_categories(&pool, CategoryMode::RoomType).unwrap();
    let classes = areas[0].vocab.len();
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..5 {
        let l = beta_sweep(&pool, &index, classes, seed);
        if l[1] < l[0] && l[1] < l[2] {
            wins += 1;
        }
        rows.push(format!("[{:.4} {:.4} {:.4}]", l[0], l[1], l[2]));
    }
    outcome(
        wins >= 4,
        format!(
            "beta=1e-3 lowest in {wins}/5 seeds (need >= 4); final losses for beta 1e-2/1e-3/1e-4: {}",
            rows.join(" ")
        ),
    )
}

fn meta_learning_efficacy() -> Outcome {
    let areas = desk_areas(1);
    let classes = areas[0].vocab.len();
    let train = SamplePool::from_areas(&areas[..2], 1.0).unwrap();
    let train_index = index_categories(&train, CategoryMode::RoomType).unwrap();
    let test = SamplePool::from_areas(&areas[2..], 1.0).unwrap();
    let test_index = index_categories(&test, CategoryMode::RoomType).unwrap();
    let model = small_model(classes, 64);
    let learner = PointNetLearner::new(model.clone());
    let config = MetaConfig {
        alpha: 1e-2,
        beta: 1e-2,
        tasks_per_batch: 4,
        schedule: Schedule {
            epochs: 1,
            steps_per_epoch: 500,
            ..Schedule::default()
        },
        ..MetaConfig::default()
    };
    let (mut meta, mut random) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        let source = EpisodeSource::for_schedule(&train, &train_index, EpisodeSpec::new(2, 6, 1), &config, 64, seed).unwrap();
        let init = init_params::<f32>(&model, seed).unwrap().params;
        let state = pretrain(&learner, init.clone(), &config, |s, n| source.batch(s, n), &mut ()).unwrap();
        let eval = EvalConfig {
            spec: EpisodeSpec::new(2, 6, 1),
            episodes: 20,
            beta: 1e-2,
            inner_steps: 5,
            points: 64,
            seed: 100 + seed,
        };
        meta.push(adapt_and_eval(&learner, &state.theta, &test, &test_index, &eval).unwrap().mean_oacc);
        random.push(adapt_and_eval(&learner, &init, &test, &test_index, &eval).unwrap().mean_oacc);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m, r, chance) = (mean(&meta), mean(&random), 1.0 / classes as f64);
    outcome(
        m - r >= 0.10 && m - chance >= 0.20,
        format!(
            "held-out area C, 3 seeds x 20 episodes: meta {:.1}% vs random {:.1}% (+{:.1} points, need 10); chance {:.1}% (+{:.1}, need 20)",
            100.0 * m,
            100.0 * r,
            100.0 * (m - r),
            100.0 * chance,
            100.0 * (m - chance)
        ),
    )
}

fn metaseg(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_metaseg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn files_below(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

const RUN_CONFIG: &str = r#"
seed = 11
[data]
root = "data"
train_areas = ["A", "B"]
test_areas = ["C"]
[model]
mlp1_widths = [16, 16]
mlp2_widths = [16, 32, 64]
seg_head_widths = [32, 16]
points_per_block = 64
[meta]
alpha = 1e-2
[meta.schedule]
epochs = 2
steps_per_epoch = 10
betas = [1e-2, 1e-3]
[eval]
episodes = 4
inner_steps = 2
"#;

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.toml"), RUN_CONFIG).unwrap();
    let mut differing = Vec::new();
    let mut compared = 0;
    for tag in ["1", "2"] {
        let steps: Vec<Vec<String>> = vec![
            vec!["synth".into(), "--seed".into(), "3".into(), "--out".into(), format!("synth{tag}")],
            vec!["pretrain".into(), "--config".into(), "run.toml".into(), "--out".into(), format!("train{tag}")],
            vec![
                "adapt-eval".into(),
                "--config".into(),
                "run.toml".into(),
                "--checkpoint".into(),
                "train1/beta_1e-2/final.ckpt".into(),
                "--out".into(),
                format!("eval{tag}"),
            ],
            vec![
                "export-ply".into(),
                "--checkpoint".into(),
                "train1/beta_1e-3/final.ckpt".into(),
                "--room".into(),
                "data/C/office_1.txt".into(),
                "--out".into(),
                format!("ply{tag}"),
            ],
            vec!["gradcheck".into(), "--out".into(), format!("grad{tag}")],
        ];
        if tag == "1" && !metaseg(&["synth", "--seed", "3", "--out", "data"], d) {
            return outcome(false, "synth failed");
        }
        for s in &steps {
            let args: Vec<&str> = s.iter().map(String::as_str).collect();
            if !metaseg(&args, d) {
                return outcome(false, format!("`metaseg {}` failed", args.join(" ")));
            }
        }
    }
    for name in ["synth", "train", "eval", "ply", "grad"] {
        let a = files_below(&d.join(format!("{name}1")));
        let b = files_below(&d.join(format!("{name}2")));
        compared += a.len();
        if a != b || a.is_empty() {
            differing.push(name);
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "5 commands run twice, {compared} files compared (checkpoints, CSVs, PLY, manifests); differing: {differing:?}"
        ),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, Option<Check>, bool); 9] = [
        (1, "gradient correctness", Some(gradient_correctness), true),
        (2, "analytic MAML oracle", Some(maml_oracle), true),
        (3, "metrics oracle", Some(metrics_oracle), true),
        (4, "sampler properties", Some(sampler_properties), true),
        (5, "permutation equivariance", Some(permutation_equivariance), true),
        (6, "learning-rate trend", Some(learning_rate_trend), false),
        (7, "meta-learning efficacy", Some(meta_learning_efficacy), true),
        (8, "full-scale S3DIS numbers", None, false),
        (9, "determinism", Some(determinism), true),
    ];
    let mut gated_failures = Vec::new();
    for (id, name, check, gated) in criteria {
        let Some(check) = check else {
            println!(
                "[EXCLUDED] {id}. {name}: needs the licensed dataset and hours of training; not part of this suite"
            );
            continue;
        };
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if gated { "" } else { " [reported, not gated]" };
        println!("[{verdict}] {id}. {name}: {} ({:.1}s){note}", o.detail, t.elapsed().as_secs_f64());
        if gated && !o.pass {
            gated_failures.push(id);
        }
    }
    if !gated_failures.is_empty() {
        eprintln!("failed criteria: {gated_failures:?}");
        std::process::exit(1);
    }
}
