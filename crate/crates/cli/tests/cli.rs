use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use metaseg_core::config::Seeds;
use metaseg_core::data::{load_dataset, load_room, partition_blocks, ply_vertex_count, ClassVocab};
use metaseg_core::model::{init_params, load_checkpoint, save_checkpoint, PointNetConfig};
use metaseg_core::tensor::Tensor;

fn metaseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metaseg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_model(classes: usize) -> PointNetConfig {
    PointNetConfig {
        mlp1_widths: vec![8],
        mlp2_widths: vec![8, 16],
        seg_head_widths: vec![8],
        points_per_block: 32,
        ..PointNetConfig::new(classes)
    }
}

const CONFIG: &str = r#"
seed = 4
[data]
root = "data"
train_areas = ["A"]
test_areas = ["C"]
[model]
mlp1_widths = [8]
mlp2_widths = [8, 16]
seg_head_widths = [8]
points_per_block = 32
[meta]
alpha = 1e-2
[meta.schedule]
epochs = 2
steps_per_epoch = 3
"#;

fn synth_dir() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    let o = metaseg(tmp.path(), &["synth", "--seed", "5", "--out", "data"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    tmp
}

/// A hand-made one-room dataset: a 3 m × 2 m office split into six 1 m
/// blocks, every point labelled `label`.
fn write_grid_room(root: &Path, area: &str, name: &str, size: (usize, usize), label: usize) -> usize {
    fs::create_dir_all(root.join(area)).unwrap();
    fs::write(root.join("classes.txt"), "0 floor\n1 wall\n").unwrap();
    let mut text = String::new();
    let mut n = 0;
    for i in 0..size.0 * 4 {
        for j in 0..size.1 * 4 {
            let (x, y) = (0.125 + i as f64 * 0.25, 0.125 + j as f64 * 0.25);
            text += &format!("{x:.3} {y:.3} {:.3} 10 20 30 {label}\n", (i + j) as f64 * 0.01);
            n += 1;
        }
    }
    fs::write(root.join(area).join(format!("{name}.txt")), text).unwrap();
    n
}

#[test]
fn synth_writes_areas_and_counts_blocks() {
    let tmp = synth_dir();
    let root = tmp.path().join("data");
    let areas: Vec<_> = fs::read_dir(&root)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(areas.len(), 3);

    let (_, loaded) = load_dataset(&root, &["A".into(), "B".into(), "C".into()]).unwrap();
    let blocks: usize = loaded
        .iter()
        .flat_map(|a| &a.rooms)
        .map(|r| partition_blocks(r, 1.0).unwrap().len())
        .sum();
    let o = metaseg(tmp.path(), &["ingest", "--data", "data"]);
    assert!(stdout(&o).contains(&format!("26 rooms, {blocks} blocks")), "{}", stdout(&o));

    let again = metaseg(tmp.path(), &["synth", "--seed", "5", "--out", "again"]);
    assert_eq!(code(&again), 0);
    let manifest = |d: &str| fs::read_to_string(tmp.path().join(d).join("manifest.json")).unwrap();
    assert_eq!(manifest("data"), manifest("again"));
}

#[test]
fn invalid_synth_spec_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("spec.toml"), "classes = 3\n").unwrap();
    let o = metaseg(tmp.path(), &["synth", "--spec", "spec.toml", "--out", "x"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_step_pretrain_checkpoint_is_the_initialisation() {
    let tmp = synth_dir();
    let cfg = CONFIG.replace("epochs = 2", "epochs = 0");
    fs::write(tmp.path().join("run.toml"), cfg).unwrap();
    let o = metaseg(tmp.path(), &["pretrain", "--config", "run.toml", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let saved = load_checkpoint::<f32>(&tmp.path().join("run/final.ckpt")).unwrap();
    let init = init_params::<f32>(&saved.config, Seeds::from_master(4).init).unwrap();
    assert_eq!(saved, init);
}

#[test]
fn beta_sweep_writes_one_run_per_beta() {
    let tmp = synth_dir();
    let cfg = CONFIG.replace("steps_per_epoch = 3", "steps_per_epoch = 2\nbetas = [1e-2, 1e-3, 1e-4]");
    fs::write(tmp.path().join("run.toml"), cfg).unwrap();
    let o = metaseg(tmp.path(), &["pretrain", "--config", "run.toml", "--out", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for beta in ["1e-2", "1e-3", "1e-4"] {
        let dir = tmp.path().join(format!("run/beta_{beta}"));
        let csv = fs::read_to_string(dir.join("loss.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(csv.lines().nth(1).unwrap().contains(&format!(",{beta},")));
        assert!(dir.join("ckpt_epoch1.ckpt").exists() && dir.join("ckpt_epoch2.ckpt").exists());
    }
}

#[test]
fn pretrain_exit_codes() {
    let tmp = synth_dir();
    fs::write(tmp.path().join("nodata.toml"), CONFIG.replace("root = \"data\"", "root = \"missing\"")).unwrap();
    assert_eq!(code(&metaseg(tmp.path(), &["pretrain", "--config", "nodata.toml", "--out", "r"])), 2);
    assert_eq!(code(&metaseg(tmp.path(), &["pretrain", "--out", "r"])), 2);

    fs::write(tmp.path().join("hot.toml"), CONFIG.replace("alpha = 1e-2", "alpha = 1e9")).unwrap();
    let o = metaseg(tmp.path(), &["pretrain", "--config", "hot.toml", "--out", "hot"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("hot/loss.csv").exists());
    assert!(!tmp.path().join("hot/final.ckpt").exists());
}

#[test]
fn adapt_eval_outputs_and_exit_codes() {
    let tmp = synth_dir();
    fs::write(tmp.path().join("run.toml"), CONFIG).unwrap();
    let model = init_params::<f32>(&tiny_model(9), 1).unwrap();
    save_checkpoint(&tmp.path().join("m.ckpt"), &model).unwrap();
    let base = ["adapt-eval", "--config", "run.toml", "--checkpoint", "m.ckpt", "--episodes", "3"];

    let o = metaseg(tmp.path(), &[&base[..], &["--out", "e"]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("oAcc "));
    let per = fs::read_to_string(tmp.path().join("e/episodes.csv")).unwrap();
    assert_eq!(per.lines().count(), 4);
    let metrics = fs::read_to_string(tmp.path().join("e/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 9 + 2);
    assert!(tmp.path().join("e/episodes.json").exists());

    let zero = ["adapt-eval", "--config", "run.toml", "--checkpoint", "m.ckpt", "--episodes", "0", "--out", "z"];
    assert_eq!(code(&metaseg(tmp.path(), &zero)), 2);
    assert_eq!(code(&metaseg(tmp.path(), &[&base[..], &["--ways", "6", "--out", "w"]].concat())), 4);
    assert_eq!(code(&metaseg(tmp.path(), &[&base[..], &["--target", "Z", "--out", "w"]].concat())), 2);
}

#[test]
fn perfect_checkpoint_on_one_class_target() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("data");
    write_grid_room(&root, "T", "office_1", (4, 4), 0);
    write_grid_room(&root, "T", "hallway_1", (4, 4), 0);
    // zero logits weights and a bias favouring class 0: always predicts 0
    let mut model = init_params::<f32>(&tiny_model(2), 3).unwrap();
    let out_layer = model.config.seg_layers().last().unwrap().clone();
    let w = model.params.get_mut(&out_layer.weight_name()).unwrap();
    *w = Tensor::zeros(&[out_layer.fan_in, 2]);
    *model.params.get_mut(&out_layer.bias_name()).unwrap() = Tensor::vector(vec![5.0, 0.0]);
    save_checkpoint(&tmp.path().join("m.ckpt"), &model).unwrap();

    let o = metaseg(
        tmp.path(),
        &["adapt-eval", "--data", "data", "--target", "T", "--checkpoint", "m.ckpt", "--beta", "0", "--episodes", "4", "--out", "e"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("oAcc 1.0000"), "{}", stdout(&o));
}

#[test]
fn cross_validation_table() {
    let tmp = synth_dir();
    let model = init_params::<f32>(&tiny_model(9), 1).unwrap();
    save_checkpoint(&tmp.path().join("m.ckpt"), &model).unwrap();
    let o = metaseg(
        tmp.path(),
        &[
            "cross-validate", "--data", "data", "--checkpoint", "A=m.ckpt", "--checkpoint", "B=m.ckpt", "--checkpoint",
            "C=m.ckpt", "--episodes", "1", "--beta", "0", "--out", "cv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("cv/cross_validation.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["pretrain", "A", "B", "C"]);
    for (i, row) in rows[1..].iter().enumerate() {
        assert_eq!(row.len(), 4);
        for (j, cell) in row[1..].iter().enumerate() {
            assert_eq!(cell.is_empty(), i == j, "row {i} col {j}: {cell:?}");
        }
    }
    assert!(tmp.path().join("cv/A_to_B/metrics.csv").exists());
}

#[test]
fn export_ply_writes_pred_and_truth_per_block() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("data");
    let points = write_grid_room(&root, "X", "office_1", (3, 2), 1);
    let model = init_params::<f32>(&tiny_model(2), 3).unwrap();
    save_checkpoint(&tmp.path().join("m.ckpt"), &model).unwrap();
    let vocab = ClassVocab::load(&root.join("classes.txt")).unwrap();
    let room = load_room(&root.join("X/office_1.txt"), &vocab).unwrap();
    assert_eq!(partition_blocks(&room, 1.0).unwrap().len(), 6);

    let o = metaseg(tmp.path(), &["export-ply", "--checkpoint", "m.ckpt", "--room", "data/X/office_1.txt", "--out", "ply"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let plys: Vec<_> = fs::read_dir(tmp.path().join("ply"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ply"))
        .collect();
    assert_eq!(plys.len(), 12);
    let count = |suffix: &str| -> usize {
        plys.iter()
            .filter(|p| p.to_string_lossy().ends_with(suffix))
            .map(|p| ply_vertex_count(&fs::read_to_string(p).unwrap()).unwrap())
            .sum()
    };
    assert_eq!(count("_pred.ply"), points);
    assert_eq!(count("_truth.ply"), points);

    fs::write(tmp.path().join("pal.txt"), "0 255 0 0\n").unwrap();
    let o = metaseg(
        tmp.path(),
        &["export-ply", "--checkpoint", "m.ckpt", "--room", "data/X/office_1.txt", "--palette", "pal.txt", "--out", "p2"],
    );
    assert_eq!(code(&o), 2);
    let o = metaseg(tmp.path(), &["export-ply", "--checkpoint", "m.ckpt", "--room", "data/X/office_9.txt", "--out", "p3"]);
    assert_eq!(code(&o), 5);
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = metaseg(tmp.path(), &["gradcheck"]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("PASS"));
    let f32_run = metaseg(tmp.path(), &["gradcheck", "--precision", "f32"]);
    assert_eq!(code(&f32_run), 0);
    let bad = metaseg(tmp.path(), &["gradcheck", "--inject-error", "1e-3"]);
    assert_ne!(code(&bad), 0);
    assert!(stdout(&bad).contains("FAIL"));
}
