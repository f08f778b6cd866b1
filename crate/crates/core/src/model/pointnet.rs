use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerShape, ModelError, PointNetConfig};
use crate::tensor::{ParamStore, ParamVars, Precision, Scalar, Tape, Tensor, Var};

/// Network parameters together with the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: PointNetConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Checks names and shapes against the configuration.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        let mut expected = ParamStore::<T>::new();
        for layer in self.config.layers() {
            expected.insert(layer.weight_name(), Tensor::zeros(&[layer.fan_in, layer.fan_out]));
            expected.insert(layer.bias_name(), Tensor::zeros(&[layer.fan_out]));
        }
        expected.check_matches(&self.params)?;
        Ok(())
    }

    pub fn with_params(&self, params: ParamStore<T>) -> Self {
        Self {
            config: self.config.clone(),
            params,
        }
    }
}

/// Draws fresh parameters: weights uniform in ±sqrt(6 / fan_in), biases zero.
/// The T-Net output layer starts at zero weight and identity bias.
pub fn init_params<T: Scalar>(config: &PointNetConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    for layer in config.layers() {
        let (w, b) = if layer.name == "tnet.out" {
            let ident = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
            (
                Tensor::zeros(&[layer.fan_in, 9]),
                Tensor::vector(ident.iter().map(|&v| T::lit(v)).collect()),
            )
        } else {
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            let data = (0..layer.fan_in * layer.fan_out)
                .map(|_| T::lit(rng.gen_range(-bound..bound)))
                .collect();
            (
                Tensor::new(vec![layer.fan_in, layer.fan_out], data)?,
                Tensor::zeros(&[layer.fan_out]),
            )
        };
        params.insert(layer.weight_name(), w);
        params.insert(layer.bias_name(), b);
    }
    Ok(ModelParams {
        config: config.clone(),
        params,
    })
}

/// Recorded outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    pub global_feature: Var,
}

fn dense<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    layer: &LayerShape,
    x: Var,
    relu: bool,
) -> Result<Var, ModelError> {
    let w = vars.get(&layer.weight_name())?;
    let b = vars.get(&layer.bias_name())?;
    let y = tape.linear(x, w, b)?;
    Ok(if relu { tape.relu(y) } else { y })
}

/// Predicts a 3×3 matrix from the point set and returns `xyz · matrix`.
pub fn tnet_transform<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    config: &PointNetConfig,
    xyz: Var,
) -> Result<Var, ModelError> {
    if !config.use_tnet {
        return Err(ModelError::Config("T-Net requested but use_tnet is false".into()));
    }
    let (shared, dense_layers, out) = config.tnet_layers();
    let mut h = xyz;
    for layer in &shared {
        h = dense(tape, vars, layer, h, true)?;
    }
    let (pooled, _) = tape.max_over_points(h)?;
    let width = tape.value(pooled).len();
    let mut g = tape.reshape(pooled, &[1, width])?;
    for layer in &dense_layers {
        g = dense(tape, vars, layer, g, true)?;
    }
    let flat = dense(tape, vars, &out, g, false)?;
    let matrix = tape.reshape(flat, &[3, 3])?;
    Ok(tape.matmul(xyz, matrix)?)
}

/// Records the segmentation network on `tape` for a [P×input_dim] block.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &ParamVars,
    config: &PointNetConfig,
    block: Var,
) -> Result<ForwardVars, ModelError> {
    let (points, width) = tape.value(block).dims2("forward")?;
    if width != config.input_dim {
        return Err(ModelError::InputWidth {
            expected: config.input_dim,
            actual: width,
        });
    }
    if points == 0 {
        return Err(ModelError::EmptyBlock);
    }
    let mut x = block;
    if config.use_tnet {
        let xyz = tape.slice_cols(x, 0, 3)?;
        let aligned = tnet_transform(tape, vars, config, xyz)?;
        x = if width > 3 {
            let rest = tape.slice_cols(x, 3, width)?;
            tape.concat_cols(aligned, rest)?
        } else {
            aligned
        };
    }
    for layer in &config.mlp1_layers() {
        x = dense(tape, vars, layer, x, true)?;
    }
    let local = x;
    for layer in &config.mlp2_layers() {
        x = dense(tape, vars, layer, x, true)?;
    }
    let (global_feature, _) = tape.max_over_points(x)?;
    let spread = tape.broadcast_rows(global_feature, points)?;
    let mut z = tape.concat_cols(local, spread)?;
    let seg = config.seg_layers();
    let (out, hidden) = seg.split_last().expect("logits layer");
    for layer in hidden {
        z = dense(tape, vars, layer, z, true)?;
    }
    let logits = dense(tape, vars, out, z, false)?;
    Ok(ForwardVars {
        logits,
        global_feature,
    })
}

/// Per-point logits [P×C] for one feature block, without gradient tracking.
pub fn predict_logits<T: Scalar>(model: &ModelParams<T>, block: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
    let mut tape = Tape::new();
    let mut vars = ParamVars::default();
    for (name, t) in model.params.iter() {
        let v = tape.constant(t.clone());
        vars.insert(name, v);
    }
    let x = tape.constant(block.clone());
    let out = forward(&mut tape, &vars, &model.config, x)?;
    Ok(tape.value(out.logits).clone())
}

/// Per-point argmax; ties go to the lowest class index.
pub fn predict_labels<T: Scalar>(logits: &Tensor<T>) -> Vec<usize> {
    let cols = match logits.shape() {
        [_, c] => *c,
        _ => return Vec::new(),
    };
    if cols == 0 {
        return Vec::new();
    }
    logits
        .data()
        .chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
