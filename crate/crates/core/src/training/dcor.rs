//! Distance correlation between two vectors, treating their `d`
//! coordinates as `d` paired scalar samples.

use alloc::vec::Vec;

use super::TrainError;
use crate::math;

/// Below this distance variance a vector is treated as constant.
pub const DEGENERATE_DVAR: f64 = 1e-12;

/// Double-centered pairwise distance matrix, row-major `d x d`.
fn centered_distances(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut a = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            a.push(math::abs(x[k] - x[l]));
        }
    }
    let row_means: Vec<f64> = (0..d).map(|k| a[k * d..(k + 1) * d].iter().sum::<f64>() / d as f64).collect();
    let grand = row_means.iter().sum::<f64>() / d as f64;
    for k in 0..d {
        for l in 0..d {
            // distance matrix is symmetric, so column means equal row means
            a[k * d + l] += grand - row_means[k] - row_means[l];
        }
    }
    a
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

struct Parts {
    a: Vec<f64>,
    b: Vec<f64>,
    v_xy: f64,
    v_xx: f64,
    v_yy: f64,
    value: f64,
}

fn parts(x: &[f64], y: &[f64]) -> Result<Parts, TrainError> {
    assert_eq!(x.len(), y.len(), "dcor needs equal-length vectors");
    if x.len() < 2 {
        return Err(TrainError::DimensionTooSmall);
    }
    let a = centered_distances(x);
    let b = centered_distances(y);
    let v_xy = mean_product(&a, &b);
    let v_xx = mean_product(&a, &a);
    let v_yy = mean_product(&b, &b);
    let (dvar_x, dvar_y) = (math::sqrt(v_xx), math::sqrt(v_yy));
    let value = if dvar_x < DEGENERATE_DVAR || dvar_y < DEGENERATE_DVAR {
        0.0
    } else {
        math::sqrt(v_xy.max(0.0)) / math::sqrt(dvar_x * dvar_y)
    };
    Ok(Parts { a, b, v_xy, v_xx, v_yy, value })
}

/// `dCov(x,y) / sqrt(dVar(x) dVar(y))`, 0 for constant inputs.
pub fn dcor(x: &[f64], y: &[f64]) -> Result<f64, TrainError> {
    parts(x, y).map(|p| p.value)
}

/// `dcor` and its gradient with respect to both inputs.
pub fn dcor_with_grad(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    let p = parts(x, y)?;
    let d = x.len();
    let mut gx = alloc::vec![0.0; d];
    let mut gy = alloc::vec![0.0; d];
    if p.value == 0.0 || p.v_xy <= 0.0 {
        return Ok((0.0, gx, gy));
    }
    // log dcor = ½ log V_xy − ¼ log V_xx − ¼ log V_yy, and
    // ∂V_xy/∂x_k = 2/d² Σ_l B_kl sgn(x_k − x_l), ∂V_xx/∂x_k = 4/d² Σ_l A_kl sgn(x_k − x_l)
    let scale = p.value / (d * d) as f64;
    for k in 0..d {
        let (mut sx, mut sy) = (0.0, 0.0);
        for l in 0..d {
            let ax = p.a[k * d + l];
            let by = p.b[k * d + l];
            let sgn_x = sign(x[k] - x[l]);
            let sgn_y = sign(y[k] - y[l]);
            sx += sgn_x * (by / p.v_xy - ax / p.v_xx);
            sy += sgn_y * (ax / p.v_xy - by / p.v_yy);
        }
        gx[k] = scale * sx;
        gy[k] = scale * sy;
    }
    Ok((p.value, gx, gy))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
