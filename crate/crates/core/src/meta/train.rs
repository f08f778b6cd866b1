use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inner_adapt, meta_step, MetaConfig, MetaError, MetaLearner, PointNetLearner, TrainState};
use crate::metrics::{compute_metrics, ConfusionMatrix, SegMetrics};
use crate::model::{predict_labels, predict_logits, ModelParams};
use crate::sampler::{build_task_distribution, CategoryIndex, Episode, EpisodeSpec, SamplePool, TaskData, TaskDistribution};
use crate::tensor::{ParamStore, Scalar};

/// Abort when the query loss exceeds this multiple of the first step's loss.
pub const DIVERGENCE_FACTOR: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Zero-based outer step; the loss is measured before its update.
    pub step: usize,
    pub query_loss: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Hooks called during [`pretrain`]; an error aborts training.
pub trait TrainObserver<T> {
    fn on_step(&mut self, _record: &StepRecord) -> Result<(), MetaError> {
        Ok(())
    }

    /// Called after each completed epoch (1-based).
    fn on_epoch(&mut self, _epoch: usize, _state: &TrainState<T>) -> Result<(), MetaError> {
        Ok(())
    }
}

impl<T> TrainObserver<T> for () {}

/// Collects step records; renders them as `step,query_loss,beta,alpha`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub records: Vec<StepRecord>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,query_loss,beta,alpha\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", r.step, r.query_loss, r.beta, r.alpha);
        }
        out
    }

    /// Mean loss over the last `n` records.
    pub fn tail_mean(&self, n: usize) -> Option<f64> {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        (!tail.is_empty()).then(|| tail.iter().map(|r| r.query_loss).sum::<f64>() / tail.len() as f64)
    }
}

impl<T> TrainObserver<T> for LossCurve {
    fn on_step(&mut self, record: &StepRecord) -> Result<(), MetaError> {
        self.records.push(*record);
        Ok(())
    }
}

/// Runs the outer loop over the schedule. `tasks(step, n)` supplies the
/// batch for each outer step.
pub fn pretrain<T, L, F, O>(
    learner: &L,
    init: ParamStore<T>,
    config: &MetaConfig,
    mut tasks: F,
    observer: &mut O,
) -> Result<TrainState<T>, MetaError>
where
    T: Scalar,
    L: MetaLearner<T>,
    F: FnMut(usize, usize) -> Result<Vec<L::Task>, MetaError>,
    O: TrainObserver<T> + ?Sized,
{
    config.validate()?;
    let mut state = TrainState::new(init);
    let mut initial: Option<f64> = None;
    for epoch in 0..config.schedule.epochs {
        let step_config = MetaConfig {
            beta: config.beta_at(epoch),
            ..config.clone()
        };
        for _ in 0..config.schedule.steps_per_epoch {
            let batch = tasks(state.step, config.tasks_per_batch)?;
            let next = meta_step(learner, &state, &batch, &step_config)?;
            let loss = *next.loss_history.last().expect("one loss per step");
            let first = *initial.get_or_insert(loss);
            if loss > DIVERGENCE_FACTOR * first {
                return Err(MetaError::Divergence {
                    step: state.step,
                    loss,
                });
            }
            observer.on_step(&StepRecord {
                step: state.step,
                query_loss: loss,
                beta: step_config.beta,
                alpha: config.alpha,
            })?;
            state = next;
        }
        observer.on_epoch(epoch + 1, &state)?;
    }
    Ok(state)
}

/// Episodes of a task distribution, materialized to fixed-size blocks.
pub struct EpisodeSource<'a> {
    pool: &'a SamplePool,
    distribution: TaskDistribution<'a>,
    points: usize,
}

impl<'a> EpisodeSource<'a> {
    pub fn new(pool: &'a SamplePool, distribution: TaskDistribution<'a>, points: usize) -> Self {
        Self {
            pool,
            distribution,
            points,
        }
    }

    /// Enough episodes for every step of `config`.
    pub fn for_schedule(
        pool: &'a SamplePool,
        index: &'a CategoryIndex,
        spec: EpisodeSpec,
        config: &MetaConfig,
        points: usize,
        seed: u64,
    ) -> Result<Self, MetaError> {
        let count = config.schedule.total_steps() * config.tasks_per_batch;
        Ok(Self::new(pool, build_task_distribution(index, spec, count, seed)?, points))
    }

    pub fn episode(&self, i: usize) -> Result<Episode, MetaError> {
        Ok(self.distribution.episode(i)?)
    }

    /// Episodes `step·n .. step·n + n`, materialized in parallel.
    pub fn batch<T: Scalar>(&self, step: usize, n: usize) -> Result<Vec<TaskData<T>>, MetaError> {
        (step * n..step * n + n)
            .into_par_iter()
            .map(|i| Ok(self.distribution.episode(i)?.materialize(self.pool, self.points)?))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub spec: EpisodeSpec,
    pub episodes: usize,
    pub beta: f64,
    pub inner_steps: usize,
    pub points: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// Scores over the confusion matrix pooled across all episodes.
    pub overall: SegMetrics,
    pub confusion: ConfusionMatrix,
    pub per_episode: Vec<SegMetrics>,
    pub mean_oacc: f64,
    pub mean_macc: f64,
    pub mean_miou: f64,
    pub episodes: Vec<Episode>,
}

/// For each sampled target episode: adapt θ on the support set, predict the
/// query set, and score it.
pub fn adapt_and_eval<T: Scalar>(
    learner: &PointNetLearner,
    theta: &ParamStore<T>,
    pool: &SamplePool,
    index: &CategoryIndex,
    eval: &EvalConfig,
) -> Result<EvalSummary, MetaError> {
    if eval.episodes == 0 {
        return Err(MetaError::Config("at least one evaluation episode is required".into()));
    }
    let dist = build_task_distribution(index, eval.spec, eval.episodes, eval.seed)?;
    let classes = learner.config.num_classes;
    let results = (0..eval.episodes)
        .into_par_iter()
        .map(|i| {
            let episode = dist.episode(i)?;
            let task: TaskData<T> = episode.materialize(pool, eval.points)?;
            let phi = inner_adapt(learner, theta, &task, eval.beta, eval.inner_steps)?;
            let model = ModelParams {
                config: learner.config.clone(),
                params: phi,
            };
            let mut cm = ConfusionMatrix::new(classes);
            for block in &task.query {
                let predicted = predict_labels(&predict_logits(&model, &block.features)?);
                cm = cm.accumulate(&predicted, &block.labels)?;
            }
            Ok((episode, cm))
        })
        .collect::<Result<Vec<_>, MetaError>>()?;
    let mut confusion = ConfusionMatrix::new(classes);
    let mut per_episode = Vec::with_capacity(results.len());
    let mut episodes = Vec::with_capacity(results.len());
    for (episode, cm) in results {
        confusion = confusion.merge(&cm)?;
        per_episode.push(compute_metrics(&cm)?);
        episodes.push(episode);
    }
    let n = per_episode.len() as f64;
    let mean = |f: fn(&SegMetrics) -> f64| per_episode.iter().map(f).sum::<f64>() / n;
    Ok(EvalSummary {
        overall: compute_metrics(&confusion)?,
        mean_oacc: mean(|m| m.oacc),
        mean_macc: mean(|m| m.macc),
        mean_miou: mean(|m| m.miou),
        confusion,
        per_episode,
        episodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{GradientMode, QuadraticLearner as Q, QuadraticTask, Schedule};

    fn toy_config(epochs: usize, steps: usize) -> MetaConfig {
        MetaConfig {
            alpha: 0.1,
            beta: 0.25,
            tasks_per_batch: 2,
            gradient_mode: GradientMode::FirstOrder,
            schedule: Schedule {
                epochs,
                steps_per_epoch: steps,
                ..Schedule::default()
            },
            ..MetaConfig::default()
        }
    }

    fn toy_tasks(_: usize, n: usize) -> Result<Vec<QuadraticTask>, MetaError> {
        Ok(vec![QuadraticTask { a: 1.0, b: 2.0 }; n])
    }

    #[test]
    fn zero_steps_returns_init() {
        let init = Q::params::<f64>(0.4);
        let state = pretrain(&Q, init.clone(), &toy_config(0, 10), toy_tasks, &mut ()).unwrap();
        assert_eq!(state.theta, init);
        assert!(state.loss_history.is_empty());
    }

    #[test]
    fn pretrain_converges_on_toy() {
        let mut curve = LossCurve::default();
        let state = pretrain(&Q, Q::params::<f64>(0.0), &toy_config(2, 50), toy_tasks, &mut curve).unwrap();
        assert_eq!(curve.records.len(), 100);
        assert_eq!(state.loss_history.len(), 100);
        assert!(curve.tail_mean(10).unwrap() < curve.records[0].query_loss);
        // the fixed point puts φ′ on b: θ* = 3
        assert!((Q::weight(&state.theta) - 3.0).abs() < 1e-3);
        assert!(curve.to_csv().starts_with("step,query_loss,beta,alpha\n0,"));
    }

    #[test]
    fn epoch_hook_fires_per_epoch() {
        struct Count(usize);
        impl TrainObserver<f64> for Count {
            fn on_epoch(&mut self, epoch: usize, state: &TrainState<f64>) -> Result<(), MetaError> {
                self.0 += 1;
                assert_eq!(state.step, epoch * 3);
                Ok(())
            }
        }
        let mut c = Count(0);
        pretrain(&Q, Q::params::<f64>(0.0), &toy_config(4, 3), toy_tasks, &mut c).unwrap();
        assert_eq!(c.0, 4);
    }

    #[test]
    fn blow_up_is_divergence() {
        let config = MetaConfig {
            alpha: 10.0,
            ..toy_config(1, 200)
        };
        let err = pretrain(&Q, Q::params::<f64>(0.0), &config, toy_tasks, &mut ()).unwrap_err();
        assert!(matches!(err, MetaError::Divergence { .. }));
    }
}
