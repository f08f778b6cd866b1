use std::path::{Path, PathBuf};

use metaseg_core::config::RunConfig;
use metaseg_core::data::VOCAB_FILE;
use metaseg_core::meta::{
    pretrain as run_pretrain, EpisodeSource, LossCurve, MetaError, PointNetLearner, StepRecord, TrainObserver,
    TrainState,
};
use metaseg_core::model::{encode_checkpoint, init_params, ModelParams, PointNetConfig};
use metaseg_core::sampler::{index_categories, CategoryIndex, SamplePool};
use metaseg_core::tensor::{Precision, Scalar};

use super::{data_root, load_areas};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::Globals;

pub const LOSS_FILE: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

pub fn epoch_checkpoint(epoch: usize) -> String {
    format!("ckpt_epoch{epoch}.ckpt")
}

/// Saves a checkpoint after every epoch and keeps the loss curve.
struct RunRecorder<'a> {
    out: &'a Path,
    dir: PathBuf,
    config: &'a PointNetConfig,
    manifest: &'a mut RunManifest,
    curve: LossCurve,
}

impl<T: Scalar> TrainObserver<T> for RunRecorder<'_> {
    fn on_step(&mut self, record: &StepRecord) -> std::result::Result<(), MetaError> {
        self.curve.records.push(*record);
        Ok(())
    }

    fn on_epoch(&mut self, epoch: usize, state: &TrainState<T>) -> std::result::Result<(), MetaError> {
        let model = ModelParams {
            config: self.config.clone(),
            params: state.theta.clone(),
        };
        let bytes = encode_checkpoint(&model)?;
        self.manifest
            .write(self.out, self.dir.join(epoch_checkpoint(epoch)), bytes)
            .map_err(|e| MetaError::Observer(e.to_string()))
    }
}

pub fn pretrain(g: &Globals) -> Result<()> {
    let cfg = g.require_config()?;
    let root = data_root(None, Some(&cfg))?;
    if cfg.data.train_areas.is_empty() {
        return Err(CliError::Usage("data.train_areas is empty".into()));
    }
    let out = g.out()?;
    let (vocab, areas) = load_areas(&root, &cfg.data.train_areas)?;
    let pool = SamplePool::from_areas(&areas, cfg.data.block_size)?;
    let index = index_categories(&pool, cfg.episode.category_mode)?;
    let model = cfg.model_for(vocab.len())?;

    let mut m = RunManifest::new("pretrain", &cfg);
    let seeds = cfg.seeds();
    m.seed("master", seeds.master);
    m.seed("init", seeds.init);
    m.seed("episodes", seeds.episodes);
    m.input_file("classes", &root.join(VOCAB_FILE))?;
    for a in &cfg.data.train_areas {
        m.input_tree(&format!("area/{a}"), &root.join(a))?;
    }
    m.write(out, "config.toml", cfg.to_toml())?;

    let result = match cfg.precision {
        Precision::F32 => train::<f32>(&cfg, &model, &pool, &index, out, &mut m),
        Precision::F64 => train::<f64>(&cfg, &model, &pool, &index, out, &mut m),
    };
    if let Err(e) = &result {
        m.status = format!("failed: {e}");
    }
    m.save(out)?;
    result
}

fn train<T: Scalar>(
    cfg: &RunConfig,
    model: &PointNetConfig,
    pool: &SamplePool,
    index: &CategoryIndex,
    out: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    let seeds = cfg.seeds();
    let init = init_params::<T>(model, seeds.init)?;
    let learner = PointNetLearner::new(model.clone());
    let runs = cfg.meta.runs();
    let sweep = runs.len() > 1;
    for run in &runs {
        let dir = if sweep {
            PathBuf::from(format!("beta_{:e}", run.beta))
        } else {
            PathBuf::new()
        };
        let source = EpisodeSource::for_schedule(pool, index, cfg.episode, run, model.points_per_block, seeds.episodes)?;
        let mut rec = RunRecorder {
            out,
            dir: dir.clone(),
            config: model,
            manifest: m,
            curve: LossCurve::default(),
        };
        let result = run_pretrain(&learner, init.params.clone(), run, |s, n| source.batch(s, n), &mut rec);
        let curve = std::mem::take(&mut rec.curve);
        m.write(out, dir.join(LOSS_FILE), curve.to_csv())?;
        let state = result?;
        m.write(out, dir.join(FINAL_CHECKPOINT), encode_checkpoint(&init.with_params(state.theta))?)?;
        match (curve.records.first(), curve.tail_mean(50)) {
            (Some(first), Some(tail)) => println!(
                "beta {:e}: {} steps, query loss {:.6} -> {:.6} (mean of last {})",
                run.beta,
                curve.records.len(),
                first.query_loss,
                tail,
                curve.records.len().min(50)
            ),
            _ => println!("beta {:e}: 0 steps, checkpoint is the initialisation", run.beta),
        }
    }
    Ok(())
}
