use rayon::prelude::*;

use super::MetaError;
use crate::data::BlockSample;
use crate::model::{forward, PointNetConfig};
use crate::sampler::TaskData;
use crate::tensor::{GradientMap, ParamStore, ParamVars, Scalar, Tape, Tensor, Var};

/// A model family the meta-trainer can adapt: it records support and query
/// losses for any parameter handles on a tape.
pub trait MetaLearner<T: Scalar>: Sync {
    type Task: Sync;

    fn support_loss(&self, tape: &mut Tape<T>, vars: &ParamVars, task: &Self::Task) -> Result<Var, MetaError>;

    fn query_loss(&self, tape: &mut Tape<T>, vars: &ParamVars, task: &Self::Task) -> Result<Var, MetaError>;

    fn support_value_and_grad(&self, params: &ParamStore<T>, task: &Self::Task) -> Result<(T, GradientMap<T>), MetaError> {
        value_and_grad(params, |tape, vars| self.support_loss(tape, vars, task))
    }

    fn query_value_and_grad(&self, params: &ParamStore<T>, task: &Self::Task) -> Result<(T, GradientMap<T>), MetaError> {
        value_and_grad(params, |tape, vars| self.query_loss(tape, vars, task))
    }

    /// Whether gradients can be taken through the inner update.
    fn second_order_capable(&self) -> bool {
        true
    }
}

/// Evaluates a scalar loss and its gradient with respect to `params`.
pub fn value_and_grad<T: Scalar>(
    params: &ParamStore<T>,
    loss: impl FnOnce(&mut Tape<T>, &ParamVars) -> Result<Var, MetaError>,
) -> Result<(T, GradientMap<T>), MetaError> {
    let mut tape = Tape::new();
    let vars = tape.register_params(params);
    let l = loss(&mut tape, &vars)?;
    let value = tape.value(l).item()?;
    Ok((value, tape.backward(l)?))
}

/// Adds per-part losses and gradients in order, then scales by `1 / n`.
pub(crate) fn ordered_mean<T: Scalar>(parts: Vec<(T, GradientMap<T>)>) -> Result<(T, GradientMap<T>), MetaError> {
    let n = parts.len();
    let mut it = parts.into_iter();
    let (mut loss, mut grad) = it.next().ok_or(MetaError::EmptyBatch)?;
    for (l, g) in it {
        loss = loss + l;
        grad.add_scaled(T::one(), &g)?;
    }
    let inv = T::one() / T::lit(n as f64);
    Ok((loss * inv, grad.scaled(inv)))
}

/// The segmentation network as a meta-learner. A task's loss is the mean of
/// per-block mean cross-entropies; blocks share one point count, so this is
/// the mean per-point cross-entropy over the whole set.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNetLearner {
    pub config: PointNetConfig,
}

impl PointNetLearner {
    pub fn new(config: PointNetConfig) -> Self {
        Self { config }
    }

    fn set_loss<T: Scalar>(&self, tape: &mut Tape<T>, vars: &ParamVars, blocks: &[BlockSample<T>]) -> Result<Var, MetaError> {
        let mut total: Option<Var> = None;
        for b in blocks {
            let l = self.block_loss(tape, vars, b)?;
            total = Some(match total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
        }
        let total = total.ok_or(MetaError::EmptyBatch)?;
        Ok(tape.scale(total, T::one() / T::lit(blocks.len() as f64)))
    }

    fn block_loss<T: Scalar>(&self, tape: &mut Tape<T>, vars: &ParamVars, block: &BlockSample<T>) -> Result<Var, MetaError> {
        let x = tape.constant(block.features.clone());
        let out = forward(tape, vars, &self.config, x)?;
        Ok(tape.cross_entropy(out.logits, &block.labels)?)
    }

    /// Blocks are independent given the parameters, so each gets its own
    /// tape; results are reduced in block order.
    fn set_value_and_grad<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        blocks: &[BlockSample<T>],
    ) -> Result<(T, GradientMap<T>), MetaError> {
        let parts = blocks
            .par_iter()
            .map(|b| value_and_grad(params, |tape, vars| self.block_loss(tape, vars, b)))
            .collect::<Result<Vec<_>, _>>()?;
        ordered_mean(parts)
    }
}

impl<T: Scalar> MetaLearner<T> for PointNetLearner {
    type Task = TaskData<T>;

    fn support_loss(&self, tape: &mut Tape<T>, vars: &ParamVars, task: &TaskData<T>) -> Result<Var, MetaError> {
        self.set_loss(tape, vars, &task.support)
    }

    fn query_loss(&self, tape: &mut Tape<T>, vars: &ParamVars, task: &TaskData<T>) -> Result<Var, MetaError> {
        self.set_loss(tape, vars, &task.query)
    }

    fn support_value_and_grad(&self, params: &ParamStore<T>, task: &TaskData<T>) -> Result<(T, GradientMap<T>), MetaError> {
        self.set_value_and_grad(params, &task.support)
    }

    fn query_value_and_grad(&self, params: &ParamStore<T>, task: &TaskData<T>) -> Result<(T, GradientMap<T>), MetaError> {
        self.set_value_and_grad(params, &task.query)
    }
}

/// One-parameter toy family: support loss `(w - a)²`, query loss `(w - b)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTask {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadraticLearner;

impl QuadraticLearner {
    pub const PARAM: &'static str = "w";

    pub fn params<T: Scalar>(w: f64) -> ParamStore<T> {
        let mut p = ParamStore::new();
        p.insert(Self::PARAM, Tensor::vector(vec![T::lit(w)]));
        p
    }

    pub fn weight<T: Scalar>(params: &ParamStore<T>) -> f64 {
        params.get(Self::PARAM).map(|t| t.data()[0].as_f64()).unwrap_or(f64::NAN)
    }

    fn squared_distance<T: Scalar>(tape: &mut Tape<T>, vars: &ParamVars, target: f64) -> Result<Var, MetaError> {
        let w = vars.get(Self::PARAM)?;
        let c = tape.constant(Tensor::vector(vec![T::lit(target)]));
        let d = tape.sub(w, c)?;
        let sq = tape.mul(d, d)?;
        Ok(tape.sum(sq))
    }
}

impl<T: Scalar> MetaLearner<T> for QuadraticLearner {
    type Task = QuadraticTask;

    fn support_loss(&self, tape: &mut Tape<T>, vars: &ParamVars, task: &QuadraticTask) -> Result<Var, MetaError> {
        Self::squared_distance(tape, vars, task.a)
    }

    fn query_loss(&self, tape: &mut Tape<T>, vars: &ParamVars, task: &QuadraticTask) -> Result<Var, MetaError> {
        Self::squared_distance(tape, vars, task.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn small() -> PointNetConfig {
        PointNetConfig {
            mlp1_widths: vec![4],
            mlp2_widths: vec![6],
            seg_head_widths: vec![5],
            ..PointNetConfig::new(3)
        }
    }

    fn task(blocks: usize) -> TaskData<f64> {
        let make = |seed: usize| {
            let data = (0..7 * 9).map(|i| ((i * 31 + seed * 17) % 23) as f64 / 23.0 - 0.4).collect();
            BlockSample::new(Tensor::new(vec![7, 9], data).unwrap(), (0..7).map(|i| (i + seed) % 3).collect()).unwrap()
        };
        TaskData {
            support: (0..blocks).map(make).collect(),
            query: (blocks..2 * blocks).map(make).collect(),
        }
    }

    #[test]
    fn parallel_blocks_match_single_tape() {
        let learner = PointNetLearner::new(small());
        let theta = init_params::<f64>(&small(), 1).unwrap().params;
        let t = task(3);
        let (l1, g1) = learner.support_value_and_grad(&theta, &t).unwrap();
        let (l2, g2) = value_and_grad(&theta, |tape, vars| learner.support_loss(tape, vars, &t)).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_loss_and_gradient() {
        let p = QuadraticLearner::params::<f64>(0.5);
        let (l, g) = MetaLearner::<f64>::query_value_and_grad(&QuadraticLearner, &p, &QuadraticTask { a: 1.0, b: 2.0 })
            .unwrap();
        assert_eq!(l, 2.25);
        assert_eq!(g.get("w").unwrap().data(), &[-3.0]);
    }
}
