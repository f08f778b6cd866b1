use metaseg_core::data::{generate_synthetic_dataset, Area, ClassVocab, Room, RoomPoint, RoomType, SyntheticSpec};
use metaseg_core::meta::{
    adapt_and_eval, collaborative_query_loss, inner_adapt, meta_gradient, pretrain, query_loss, EpisodeSource,
    EvalConfig, GradientMode, LossCurve, MetaConfig, PointNetLearner, Schedule,
};
use metaseg_core::model::{init_params, PointNetConfig};
use metaseg_core::sampler::{index_categories, CategoryMode, EpisodeSpec, SamplePool, TaskData};
use metaseg_core::tensor::{finite_diff_coords, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(classes: usize, points: usize) -> PointNetConfig {
    PointNetConfig {
        mlp1_widths: vec![8],
        mlp2_widths: vec![8, 16],
        seg_head_widths: vec![8],
        points_per_block: points,
        ..PointNetConfig::new(classes)
    }
}

fn desk() -> (Vec<Area>, SamplePool) {
    let areas = generate_synthetic_dataset(&SyntheticSpec::desk_default(), 2).unwrap();
    let pool = SamplePool::from_areas(&areas[..2], 1.0).unwrap();
    (areas, pool)
}

fn tasks<T: metaseg_core::tensor::Scalar>(pool: &SamplePool, n: usize, points: usize, seed: u64) -> Vec<TaskData<T>> {
    let index = index_categories(pool, CategoryMode::RoomType).unwrap();
    let config = MetaConfig {
        tasks_per_batch: n,
        schedule: Schedule {
            epochs: 1,
            steps_per_epoch: 1,
            ..Schedule::default()
        },
        ..MetaConfig::default()
    };
    let source = EpisodeSource::for_schedule(pool, &index, EpisodeSpec::new(2, 2, 1), &config, points, seed).unwrap();
    source.batch(0, n).unwrap()
}

/// Nonzero biases keep the check point off ReLU kinks.
fn jittered(config: &PointNetConfig, seed: u64) -> ParamStore<f64> {
    let mut p = init_params::<f64>(config, seed).unwrap().params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in config.layers() {
        for v in p.get_mut(&layer.bias_name()).unwrap().data_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    p
}

#[test]
fn second_order_matches_finite_differences_of_the_adapted_loss() {
    let (_, pool) = desk();
    let config = small(9, 16);
    let learner = PointNetLearner::new(config.clone());
    let theta = jittered(&config, 1);
    let batch: Vec<TaskData<f64>> = tasks(&pool, 2, 16, 3);
    let (beta, steps) = (0.05, 2);
    let meta = MetaConfig {
        beta,
        inner_steps: steps,
        gradient_mode: GradientMode::SecondOrder,
        ..MetaConfig::default()
    };
    let (_, g) = meta_gradient(&learner, &theta, &batch, &meta).unwrap();
    let flat: Vec<f64> = g.iter().flat_map(|(_, t)| t.data().to_vec()).collect();
    let coords: Vec<usize> = (0..theta.num_scalars()).step_by(37).collect();
    let numeric = finite_diff_coords(
        |p| collaborative_query_loss(&learner, p, &batch, beta, steps),
        &theta,
        1e-6,
        &coords,
    )
    .unwrap();
    for (&c, n) in coords.iter().zip(numeric) {
        let a = flat[c];
        assert!((a - n).abs() <= 1e-6 * a.abs().max(1e-2), "coord {c}: {a} vs {n}");
    }
}

#[test]
fn batch_order_does_not_change_the_meta_gradient() {
    let (_, pool) = desk();
    let config = small(9, 32);
    let learner = PointNetLearner::new(config.clone());
    let theta = init_params::<f64>(&config, 2).unwrap().params;
    let batch: Vec<TaskData<f64>> = tasks(&pool, 4, 32, 5);
    let reversed: Vec<TaskData<f64>> = batch.iter().rev().cloned().collect();
    let meta = MetaConfig::default();
    let (la, ga) = meta_gradient(&learner, &theta, &batch, &meta).unwrap();
    let (lb, gb) = meta_gradient(&learner, &theta, &reversed, &meta).unwrap();
    assert!((la - lb).abs() <= 1e-6 * la.abs());
    for ((_, a), (_, b)) in ga.iter().zip(gb.iter()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-6));
        }
    }
}

#[test]
fn single_task_collaborative_loss_is_the_query_loss() {
    let (_, pool) = desk();
    let config = small(9, 32);
    let learner = PointNetLearner::new(config.clone());
    let theta = init_params::<f64>(&config, 4).unwrap().params;
    let batch: Vec<TaskData<f64>> = tasks(&pool, 1, 32, 6);
    let before = theta.clone();
    let phi = inner_adapt(&learner, &theta, &batch[0], 1e-2, 1).unwrap();
    assert_eq!(theta, before);
    assert_eq!(
        collaborative_query_loss(&learner, &theta, &batch, 1e-2, 1).unwrap(),
        query_loss(&learner, &phi, &batch[0]).unwrap()
    );
    let zero = |mode| MetaConfig {
        beta: 0.0,
        gradient_mode: mode,
        ..MetaConfig::default()
    };
    let (_, g1) = meta_gradient(&learner, &theta, &batch, &zero(GradientMode::FirstOrder)).unwrap();
    let (_, g2) = meta_gradient(&learner, &theta, &batch, &zero(GradientMode::SecondOrder)).unwrap();
    for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-6));
        }
    }
}

#[test]
fn short_pretraining_lowers_the_loss_and_is_reproducible() {
    let (_, pool) = desk();
    let index = index_categories(&pool, CategoryMode::RoomType).unwrap();
    let config = small(9, 32);
    let learner = PointNetLearner::new(config.clone());
    let meta = MetaConfig {
        alpha: 1e-2,
        beta: 1e-3,
        tasks_per_batch: 2,
        schedule: Schedule {
            epochs: 1,
            steps_per_epoch: 200,
            ..Schedule::default()
        },
        ..MetaConfig::default()
    };
    let run = || {
        let source = EpisodeSource::for_schedule(&pool, &index, EpisodeSpec::new(2, 6, 1), &meta, 32, 9).unwrap();
        let mut curve = LossCurve::default();
        let init = init_params::<f32>(&config, 9).unwrap().params;
        let state = pretrain(&learner, init, &meta, |s, n| source.batch(s, n), &mut curve).unwrap();
        (state, curve)
    };
    let (a, curve) = run();
    let head = curve.records[..20].iter().map(|r| r.query_loss).sum::<f64>() / 20.0;
    assert!(curve.tail_mean(20).unwrap() < head);
    let (b, _) = run();
    assert_eq!(a.theta, b.theta);
}

/// Two 4 m × 4 m rooms whose labels are drawn uniformly and independently
/// of the points.
fn random_label_area(classes: usize) -> Area {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let rooms = [RoomType::Office, RoomType::Hallway]
        .iter()
        .map(|&t| {
            let points: Vec<RoomPoint> = (0..16 * 80)
                .map(|i| RoomPoint {
                    xyz: [
                        (i % 16 / 4) as f64 + rng.gen_range(0.0..1.0),
                        (i % 4) as f64 + rng.gen_range(0.0..1.0),
                        rng.gen_range(0.0..3.0),
                    ],
                    rgb: [rng.gen(), rng.gen(), rng.gen()],
                })
                .collect();
            Room {
                name: format!("{}_1", t.as_str()),
                room_type: t,
                labels: (0..points.len()).map(|_| rng.gen_range(0..classes)).collect(),
                points,
            }
        })
        .collect();
    Area {
        name: "R".into(),
        rooms,
        vocab: ClassVocab::new(names).unwrap(),
    }
}

#[test]
fn unadapted_random_network_scores_chance_on_balanced_labels() {
    let classes = 4;
    let pool = SamplePool::from_areas(&[random_label_area(classes)], 1.0).unwrap();
    let index = index_categories(&pool, CategoryMode::RoomType).unwrap();
    let config = small(classes, 64);
    let learner = PointNetLearner::new(config.clone());
    let theta = init_params::<f32>(&config, 1).unwrap().params;
    let eval = EvalConfig {
        spec: EpisodeSpec::new(2, 6, 1),
        episodes: 30,
        beta: 0.0,
        inner_steps: 1,
        points: 64,
        seed: 4,
    };
    let s = adapt_and_eval(&learner, &theta, &pool, &index, &eval).unwrap();
    // 30 · 12 · 64 scored points, labels independent of predictions
    let n = s.confusion.total() as f64;
    let p = 1.0 / classes as f64;
    let sd = (p * (1.0 - p) / n).sqrt();
    assert!((s.overall.oacc - p).abs() < 4.0 * sd + 0.01, "oAcc {} vs {p}", s.overall.oacc);
}
