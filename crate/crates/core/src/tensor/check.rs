//! Central finite-difference gradient estimates, used as an independent
//! oracle for the tape's backward pass.

use super::{GradientMap, ParamStore, Scalar, Tensor, TensorError};

/// `(f(p + εe) - f(p - εe)) / 2ε` at each listed flat coordinate.
pub fn finite_diff_coords<T, F, E>(
    f: F,
    params: &ParamStore<T>,
    eps: T,
    coords: &[usize],
) -> Result<Vec<T>, E>
where
    T: Scalar,
    F: Fn(&ParamStore<T>) -> Result<T, E>,
    E: From<TensorError>,
{
    let two = T::lit(2.0);
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(coords.len());
    for &c in coords {
        let orig = params.flat_get(c).ok_or(TensorError::Empty {
            op: "finite_diff_gradient",
        })?;
        probe.flat_set(c, orig + eps);
        let up = f(&probe)?;
        probe.flat_set(c, orig - eps);
        let down = f(&probe)?;
        probe.flat_set(c, orig);
        out.push((up - down) / (two * eps));
    }
    Ok(out)
}

/// Finite-difference estimate of the full gradient of `f` at `params`.
pub fn finite_diff_gradient<T, F, E>(f: F, params: &ParamStore<T>, eps: T) -> Result<GradientMap<T>, E>
where
    T: Scalar,
    F: Fn(&ParamStore<T>) -> Result<T, E>,
    E: From<TensorError>,
{
    let coords: Vec<usize> = (0..params.num_scalars()).collect();
    let flat = finite_diff_coords(f, params, eps, &coords)?;
    let mut out = GradientMap::new();
    let mut offset = 0;
    for (name, t) in params.iter() {
        let data = flat[offset..offset + t.len()].to_vec();
        offset += t.len();
        out.insert(name, Tensor::new(t.shape().to_vec(), data)?);
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|)`, or the absolute difference when both are
/// below `floor` in magnitude.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}
