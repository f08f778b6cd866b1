use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use metaseg_core::config::{RunConfig, Seeds};
use metaseg_core::data::VOCAB_FILE;
use metaseg_core::meta::{adapt_and_eval, EvalConfig, EvalSummary, PointNetLearner};
use metaseg_core::metrics::metrics_csv;
use metaseg_core::model::{load_checkpoint, peek_checkpoint};
use metaseg_core::sampler::{index_categories, CategoryMode, EpisodeManifest, EpisodeSpec, SamplePool};
use metaseg_core::tensor::{Precision, Scalar};
use serde::Serialize;

use super::{data_root, load_areas};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::Globals;

fn parse_mode(s: &str) -> std::result::Result<CategoryMode, String> {
    match s {
        "room_type" => Ok(CategoryMode::RoomType),
        "semantic_composition" => Ok(CategoryMode::SemanticComposition),
        _ => Err(format!("expected room_type or semantic_composition, got {s}")),
    }
}

/// Episode and adaptation flags; unset values come from the config file,
/// then from the built-in defaults (2-way 6-shot, one query per category
/// and shot, 20 episodes).
#[derive(Debug, Clone, Args)]
pub struct EpisodeArgs {
    /// Dataset root; defaults to the config's `data.root`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long)]
    pub shots: Option<usize>,
    /// Query multiplier t: each category gets t·k query samples.
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: Option<u64>,
    /// Inner learning rate used for adaptation.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub inner_steps: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    pub category_mode: Option<CategoryMode>,
    #[arg(long)]
    pub block_size: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct EvalSettings {
    spec: EpisodeSpec,
    episodes: usize,
    beta: f64,
    inner_steps: usize,
    block_size: f64,
    seed: u64,
}

impl EpisodeArgs {
    fn resolve(&self, g: &Globals, cfg: Option<&RunConfig>) -> Result<EvalSettings> {
        let base = cfg.map(RunConfig::eval_config);
        let mut spec = base.as_ref().map(|e| e.spec).unwrap_or_default();
        if let Some(n) = self.ways {
            spec.n = n;
        }
        if let Some(k) = self.shots {
            spec.k = k;
        }
        if let Some(t) = self.queries {
            spec.t = t;
        }
        if let Some(mode) = self.category_mode {
            spec.category_mode = mode;
        }
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let beta = self.beta.or(base.as_ref().map(|e| e.beta)).unwrap_or(1e-3);
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(CliError::Usage(format!("--beta must be finite and non-negative, got {beta}")));
        }
        let block_size = self.block_size.or(cfg.map(|c| c.data.block_size)).unwrap_or(1.0);
        if !(block_size > 0.0 && block_size.is_finite()) {
            return Err(CliError::Usage(format!("block size must be positive, got {block_size}")));
        }
        let master = g.seed.or(cfg.map(|c| c.seed)).unwrap_or(0);
        Ok(EvalSettings {
            spec,
            episodes: self.episodes.map(|e| e as usize).or(base.as_ref().map(|e| e.episodes)).unwrap_or(20),
            beta,
            inner_steps: self.inner_steps.map(|s| s as usize).or(base.as_ref().map(|e| e.inner_steps)).unwrap_or(1),
            block_size,
            seed: Seeds::from_master(master).eval,
        })
    }
}

#[derive(Debug, Args)]
pub struct AdaptEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target areas; defaults to the config's `data.test_areas`.
    #[arg(long, value_delimiter = ',')]
    pub target: Vec<String>,
    #[command(flatten)]
    pub episode: EpisodeArgs,
}

/// One adapt-eval run written below `out/dir`.
fn evaluate(
    checkpoint: &Path,
    root: &Path,
    targets: &[String],
    settings: &EvalSettings,
    out: &Path,
    dir: &Path,
    m: &mut RunManifest,
) -> Result<EvalSummary> {
    let header = peek_checkpoint(checkpoint)?;
    match header.precision {
        Precision::F32 => evaluate_as::<f32>(checkpoint, root, targets, settings, out, dir, m),
        Precision::F64 => evaluate_as::<f64>(checkpoint, root, targets, settings, out, dir, m),
    }
}

fn evaluate_as<T: Scalar>(
    checkpoint: &Path,
    root: &Path,
    targets: &[String],
    settings: &EvalSettings,
    out: &Path,
    dir: &Path,
    m: &mut RunManifest,
) -> Result<EvalSummary> {
    let model = load_checkpoint::<T>(checkpoint)?;
    let (vocab, areas) = load_areas(root, targets)?;
    if model.config.num_classes != vocab.len() {
        return Err(CliError::Usage(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            model.config.num_classes,
            vocab.len()
        )));
    }
    let pool = SamplePool::from_areas(&areas, settings.block_size)?;
    let index = index_categories(&pool, settings.spec.category_mode)?;
    let eval = EvalConfig {
        spec: settings.spec,
        episodes: settings.episodes,
        beta: settings.beta,
        inner_steps: settings.inner_steps,
        points: model.config.points_per_block,
        seed: settings.seed,
    };
    let learner = PointNetLearner::new(model.config.clone());
    let summary = adapt_and_eval(&learner, &model.params, &pool, &index, &eval)?;

    let names = vocab.names().to_vec();
    m.write(out, dir.join("metrics.csv"), metrics_csv(&summary.confusion, &summary.overall, &names))?;
    let mut per = String::from("episode,categories,oacc,macc,miou\n");
    for (i, (e, s)) in summary.episodes.iter().zip(&summary.per_episode).enumerate() {
        let _ = writeln!(per, "{i},{},{:.6},{:.6},{:.6}", e.categories.join(";"), s.oacc, s.macc, s.miou);
    }
    m.write(out, dir.join("episodes.csv"), per)?;
    let episodes = EpisodeManifest::new(&pool, settings.spec, settings.seed, &summary.episodes)?;
    m.write(out, dir.join("episodes.json"), episodes.to_json() + "\n")?;
    Ok(summary)
}

fn summary_line(s: &EvalSummary) -> String {
    format!(
        "oAcc {:.4} mAcc {:.4} mIoU {:.4} over {} episodes (per-episode mean oAcc {:.4})",
        s.overall.oacc,
        s.overall.macc,
        s.overall.miou,
        s.per_episode.len(),
        s.mean_oacc
    )
}

pub fn adapt_eval(g: &Globals, args: AdaptEvalArgs) -> Result<()> {
    let cfg = g.run_config()?;
    let root = data_root(args.episode.data.as_deref(), cfg.as_ref())?;
    let settings = args.episode.resolve(g, cfg.as_ref())?;
    let targets = if args.target.is_empty() {
        cfg.as_ref().map(|c| c.data.test_areas.clone()).unwrap_or_default()
    } else {
        args.target.clone()
    };
    if targets.is_empty() {
        return Err(CliError::Usage("no target areas: pass --target or set data.test_areas".into()));
    }
    let out = g.out()?;
    let mut m = RunManifest::new(
        "adapt-eval",
        &serde_json::json!({ "eval": &settings, "targets": &targets }),
    );
    m.seed("eval", settings.seed);
    m.input_file("checkpoint", &args.checkpoint)?;
    m.input_file("classes", &root.join(VOCAB_FILE))?;
    for t in &targets {
        if root.join(t).is_dir() {
            m.input_tree(&format!("area/{t}"), &root.join(t))?;
        }
    }
    let summary = evaluate(&args.checkpoint, &root, &targets, &settings, out, Path::new(""), &mut m)?;
    println!("{}", summary_line(&summary));
    m.save(out)
}

fn parse_pair(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (area, path) = s.split_once('=').ok_or_else(|| format!("expected AREA=PATH, got {s}"))?;
    Ok((area.to_string(), PathBuf::from(path)))
}

#[derive(Debug, Args)]
pub struct CrossValidateArgs {
    /// `AREA=PATH`: a checkpoint pretrained on AREA; repeat per area.
    #[arg(long = "checkpoint", value_parser = parse_pair, required = true)]
    pub checkpoints: Vec<(String, PathBuf)>,
    #[command(flatten)]
    pub episode: EpisodeArgs,
}

/// Square table of pooled oAcc, rows the pretraining area and columns the
/// test area; the diagonal is left empty.
pub fn cv_table(areas: &[String], cells: &BTreeMap<(String, String), f64>) -> String {
    let mut out = format!("pretrain,{}\n", areas.join(","));
    for a in areas {
        let row: Vec<String> = areas
            .iter()
            .map(|b| cells.get(&(a.clone(), b.clone())).map(|v| format!("{v:.6}")).unwrap_or_default())
            .collect();
        let _ = writeln!(out, "{a},{}", row.join(","));
    }
    out
}

pub fn cross_validate(g: &Globals, args: CrossValidateArgs) -> Result<()> {
    let cfg = g.run_config()?;
    let root = data_root(args.episode.data.as_deref(), cfg.as_ref())?;
    let settings = args.episode.resolve(g, cfg.as_ref())?;
    let checkpoints: BTreeMap<String, PathBuf> = args.checkpoints.iter().cloned().collect();
    if checkpoints.len() < 2 {
        return Err(CliError::Usage("cross-validation needs checkpoints for at least two areas".into()));
    }
    let areas: Vec<String> = checkpoints.keys().cloned().collect();
    let out = g.out()?;
    let mut m = RunManifest::new(
        "cross-validate",
        &serde_json::json!({ "eval": &settings, "areas": &areas }),
    );
    m.seed("eval", settings.seed);
    m.input_file("classes", &root.join(VOCAB_FILE))?;
    for (a, p) in &checkpoints {
        m.input_file(&format!("checkpoint/{a}"), p)?;
        if root.join(a).is_dir() {
            m.input_tree(&format!("area/{a}"), &root.join(a))?;
        }
    }
    let mut cells = BTreeMap::new();
    for (train, ckpt) in &checkpoints {
        for test in &areas {
            if test == train {
                continue;
            }
            let dir = PathBuf::from(format!("{train}_to_{test}"));
            let s = evaluate(ckpt, &root, std::slice::from_ref(test), &settings, out, &dir, &mut m)?;
            println!("{train} -> {test}: {}", summary_line(&s));
            cells.insert((train.clone(), test.clone()), s.overall.oacc);
        }
    }
    let table = cv_table(&areas, &cells);
    print!("{table}");
    m.write(out, "cross_validation.csv", table)?;
    m.save(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_empty_diagonal() {
        let areas: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
        let mut cells = BTreeMap::new();
        for a in &areas {
            for b in &areas {
                if a != b {
                    cells.insert((a.clone(), b.clone()), 0.5);
                }
            }
        }
        let t = cv_table(&areas, &cells);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "pretrain,A,B,C");
        assert_eq!(lines[1], "A,,0.500000,0.500000");
        assert_eq!(lines[2], "B,0.500000,,0.500000");
        assert_eq!(lines[3], "C,0.500000,0.500000,");
    }

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("A=x/y.ckpt").unwrap(), ("A".into(), PathBuf::from("x/y.ckpt")));
        assert!(parse_pair("A").is_err());
        assert_eq!(parse_mode("room_type").unwrap(), CategoryMode::RoomType);
        assert!(parse_mode("rooms").is_err());
    }
}
