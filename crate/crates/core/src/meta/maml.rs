use rayon::prelude::*;

use super::learner::ordered_mean;
use super::{GradientMode, MetaConfig, MetaError, MetaLearner};
use crate::tensor::{sgd_step, GradientMap, ParamStore, ParamVars, Scalar, Tape};

/// θ_t with its step counter and per-step query losses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub theta: ParamStore<T>,
    pub step: usize,
    pub loss_history: Vec<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(theta: ParamStore<T>) -> Self {
        Self {
            theta,
            step: 0,
            loss_history: Vec::new(),
        }
    }
}

/// `steps` gradient steps on the support loss, starting from θ. θ itself is
/// never modified.
pub fn inner_adapt<T: Scalar, L: MetaLearner<T>>(
    learner: &L,
    theta: &ParamStore<T>,
    task: &L::Task,
    beta: f64,
    steps: usize,
) -> Result<ParamStore<T>, MetaError> {
    let mut phi = theta.clone();
    if beta == 0.0 {
        return Ok(phi);
    }
    for _ in 0..steps {
        let (_, g) = learner.support_value_and_grad(&phi, task)?;
        phi = sgd_step(&phi, &g, T::lit(beta))?;
    }
    Ok(phi)
}

pub fn query_loss<T: Scalar, L: MetaLearner<T>>(learner: &L, phi: &ParamStore<T>, task: &L::Task) -> Result<T, MetaError> {
    let mut tape = Tape::new();
    let mut vars = ParamVars::default();
    for (name, t) in phi.iter() {
        let v = tape.constant(t.clone());
        vars.insert(name, v);
    }
    let l = learner.query_loss(&mut tape, &vars, task)?;
    Ok(tape.value(l).item()?)
}

/// Mean over tasks of the query loss after adapting θ to each support set.
pub fn collaborative_query_loss<T: Scalar, L: MetaLearner<T>>(
    learner: &L,
    theta: &ParamStore<T>,
    tasks: &[L::Task],
    beta: f64,
    steps: usize,
) -> Result<T, MetaError> {
    if tasks.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    let losses = tasks
        .par_iter()
        .map(|t| query_loss(learner, &inner_adapt(learner, theta, t, beta, steps)?, t))
        .collect::<Result<Vec<T>, _>>()?;
    let sum = losses.into_iter().fold(T::zero(), |a, b| a + b);
    Ok(sum / T::lit(tasks.len() as f64))
}

/// Query loss after adaptation and its gradient with respect to θ.
pub fn task_meta_gradient<T: Scalar, L: MetaLearner<T>>(
    learner: &L,
    theta: &ParamStore<T>,
    task: &L::Task,
    config: &MetaConfig,
) -> Result<(T, GradientMap<T>), MetaError> {
    match config.gradient_mode {
        GradientMode::FirstOrder => {
            let phi = inner_adapt(learner, theta, task, config.beta, config.inner_steps)?;
            learner.query_value_and_grad(&phi, task)
        }
        GradientMode::SecondOrder => {
            if !learner.second_order_capable() {
                return Err(MetaError::Unsupported(
                    "this learner cannot differentiate through its inner update".into(),
                ));
            }
            second_order(learner, theta, task, config.beta, config.inner_steps)
        }
    }
}

fn second_order<T: Scalar, L: MetaLearner<T>>(
    learner: &L,
    theta: &ParamStore<T>,
    task: &L::Task,
    beta: f64,
    steps: usize,
) -> Result<(T, GradientMap<T>), MetaError> {
    let mut tape = Tape::new();
    let mut phi = tape.register_params(theta);
    if beta != 0.0 {
        for _ in 0..steps {
            let loss = learner.support_loss(&mut tape, &phi, task)?;
            let (names, vars): (Vec<String>, Vec<_>) = phi.iter().map(|(n, v)| (n.to_string(), v)).unzip();
            let grads = tape.grad_graph(loss, &vars)?;
            let mut next = ParamVars::default();
            for ((name, v), g) in names.into_iter().zip(vars).zip(grads) {
                let step = tape.scale(g, T::lit(beta));
                next.insert(name, tape.sub(v, step)?);
            }
            phi = next;
        }
    }
    let loss = learner.query_loss(&mut tape, &phi, task)?;
    let value = tape.value(loss).item()?;
    Ok((value, tape.backward(loss)?))
}

/// Gradient of the batch-averaged adapted query loss with respect to θ, and
/// that average. Tasks run in parallel; the reduction is in batch order.
pub fn meta_gradient<T: Scalar, L: MetaLearner<T>>(
    learner: &L,
    theta: &ParamStore<T>,
    batch: &[L::Task],
    config: &MetaConfig,
) -> Result<(T, GradientMap<T>), MetaError> {
    if batch.is_empty() {
        return Err(MetaError::EmptyBatch);
    }
    let parts = batch
        .par_iter()
        .map(|t| task_meta_gradient(learner, theta, t, config))
        .collect::<Result<Vec<_>, _>>()?;
    ordered_mean(parts)
}

/// One outer update. Collaborative mode takes a single step along the
/// batch-mean meta gradient; otherwise θ is updated after each task in
/// batch order. The recorded loss is the batch mean of the adapted query
/// losses seen during the step.
pub fn meta_step<T: Scalar, L: MetaLearner<T>>(
    learner: &L,
    state: &TrainState<T>,
    batch: &[L::Task],
    config: &MetaConfig,
) -> Result<TrainState<T>, MetaError> {
    let alpha = T::lit(config.alpha);
    let (loss, theta) = if config.collaborative {
        let (loss, g) = meta_gradient(learner, &state.theta, batch, config)?;
        (loss.as_f64(), sgd_step(&state.theta, &g, alpha)?)
    } else {
        if batch.is_empty() {
            return Err(MetaError::EmptyBatch);
        }
        let mut theta = state.theta.clone();
        let mut total = 0.0;
        for task in batch {
            let (l, g) = task_meta_gradient(learner, &theta, task, config)?;
            total += l.as_f64();
            theta = sgd_step(&theta, &g, alpha)?;
        }
        (total / batch.len() as f64, theta)
    };
    if !loss.is_finite() || !theta.is_finite() {
        return Err(MetaError::Divergence {
            step: state.step,
            loss,
        });
    }
    let mut loss_history = state.loss_history.clone();
    loss_history.push(loss);
    Ok(TrainState {
        theta,
        step: state.step + 1,
        loss_history,
    })
}
