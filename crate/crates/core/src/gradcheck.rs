//! Finite-difference check of the network's backward pass on a seeded
//! mini-model with random data.
//!
//! In 64-bit mode both the analytic gradient and the central differences are
//! computed in f64. In 32-bit mode the analytic gradient is computed in f32
//! and compared with f64 central differences of the same parameters, so the
//! tolerance measures f32 accumulation error rather than f32 cancellation in
//! the difference quotient.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{forward, init_params, ModelError, PointNetConfig};
use crate::seed::derive_seed;
use crate::tensor::{finite_diff_coords, relative_error, ParamStore, Precision, Scalar, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub points: usize,
    pub classes: usize,
    pub mlp1_widths: Vec<usize>,
    pub mlp2_widths: Vec<usize>,
    pub seg_head_widths: Vec<usize>,
    pub use_tnet: bool,
    /// Number of parameter coordinates to check (all if larger).
    pub coords: usize,
    pub eps: f64,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            points: 16,
            classes: 3,
            mlp1_widths: vec![8, 8],
            mlp2_widths: vec![8, 16, 32],
            seg_head_widths: vec![16, 8],
            use_tnet: false,
            coords: 100,
            eps: 1e-5,
            precision: Precision::F64,
            seed: 0,
        }
    }
}

/// Relative-error thresholds per precision.
pub fn tolerance(precision: Precision) -> f64 {
    match precision {
        Precision::F64 => 1e-7,
        Precision::F32 => 1e-3,
    }
}

/// Below this magnitude the absolute difference is used instead.
pub const REL_FLOOR: f64 = 1e-3;

impl GradcheckConfig {
    pub fn model(&self) -> PointNetConfig {
        PointNetConfig {
            mlp1_widths: self.mlp1_widths.clone(),
            mlp2_widths: self.mlp2_widths.clone(),
            seg_head_widths: self.seg_head_widths.clone(),
            use_tnet: self.use_tnet,
            points_per_block: self.points,
            ..PointNetConfig::new(self.classes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordCheck {
    pub coord: usize,
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub precision: Precision,
    pub tolerance: f64,
    pub checks: Vec<CoordCheck>,
    pub max_rel_err: f64,
}

impl GradcheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CoordCheck> {
        self.checks.iter().filter(|c| !(c.rel_err <= self.tolerance))
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.failures().next().is_none()
    }
}

/// Random block in the feature ranges the data pipeline produces.
fn random_block(points: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut data = Vec::with_capacity(points * 9);
    for _ in 0..points {
        data.extend((0..2).map(|_| rng.gen_range(-0.5..0.5)));
        data.push(rng.gen_range(0.0..3.0));
        data.extend((0..6).map(|_| rng.gen_range(0.0..1.0)));
    }
    Tensor::new(vec![points, 9], data).expect("P×9")
}

fn loss<T: Scalar>(config: &PointNetConfig, params: &ParamStore<T>, x: &Tensor<T>, labels: &[usize]) -> Result<T, ModelError> {
    let mut tape = Tape::new();
    let vars = tape.register_params(params);
    let xv = tape.constant(x.clone());
    let out = forward(&mut tape, &vars, config, xv)?;
    let l = tape.cross_entropy(out.logits, labels)?;
    Ok(tape.value(l).item()?)
}

fn analytic<T: Scalar>(config: &PointNetConfig, params: &ParamStore<T>, x: &Tensor<T>, labels: &[usize]) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let vars = tape.register_params(params);
    let xv = tape.constant(x.clone());
    let out = forward(&mut tape, &vars, config, xv)?;
    let l = tape.cross_entropy(out.logits, labels)?;
    let grads = tape.backward(l)?;
    Ok(grads.iter().flat_map(|(_, g)| g.data().iter().map(|v| v.as_f64())).collect())
}

/// Runs the check. `inject` adds the given offset to the first checked
/// analytic coordinate, as a negative control.
pub fn run_gradcheck(cfg: &GradcheckConfig, inject: Option<f64>) -> Result<GradcheckReport, ModelError> {
    let model = cfg.model();
    let mut params = init_params::<f64>(&model, derive_seed(cfg.seed, 0))?.params;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    // Zero biases put dead units exactly on the ReLU kink; move off it.
    for layer in model.layers() {
        if let Some(b) = params.get_mut(&layer.bias_name()) {
            for v in b.data_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
    }
    let x = random_block(cfg.points, &mut rng);
    let labels: Vec<usize> = (0..cfg.points).map(|_| rng.gen_range(0..cfg.classes)).collect();
    let total = params.num_scalars();
    let mut coords = index::sample(&mut rng, total, cfg.coords.min(total)).into_vec();
    coords.sort_unstable();

    let mut grad = match cfg.precision {
        Precision::F64 => analytic(&model, &params, &x, &labels)?,
        Precision::F32 => analytic(&model, &params.cast::<f32>(), &x.cast::<f32>(), &labels)?,
    };
    if let (Some(offset), Some(&first)) = (inject, coords.first()) {
        grad[first] += offset;
    }
    let numeric = finite_diff_coords(|p| loss(&model, p, &x, &labels), &params, cfg.eps, &coords)?;
    let tol = tolerance(cfg.precision);
    let checks: Vec<CoordCheck> = coords
        .iter()
        .zip(numeric)
        .map(|(&c, n)| CoordCheck {
            coord: c,
            param: params.flat_name(c).unwrap_or("?").to_string(),
            analytic: grad[c],
            numeric: n,
            rel_err: relative_error(grad[c], n, REL_FLOOR),
        })
        .collect();
    let max_rel_err = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        precision: cfg.precision,
        tolerance: tol,
        checks,
        max_rel_err,
    })
}
