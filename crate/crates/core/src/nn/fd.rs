//! Central finite-difference estimates of first and diagonal second
//! derivatives. These only ever call `loss` / `gradient`, so they serve as
//! independent references for the analytic routines.

use super::{Batch, DifferentiableModel};
use crate::error::{Error, Result};

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("finite-difference step must be positive, got {step}")))
    }
}

fn loss_at<M: DifferentiableModel>(model: &mut M, batch: &Batch, i: usize, value: f64) -> Result<f64> {
    let original = model.params()[i];
    model.params_mut()[i] = value;
    let e = model.loss(batch);
    model.params_mut()[i] = original;
    e
}

/// `(E(θ + h e_i) - E(θ - h e_i)) / 2h` for every coordinate.
pub fn gradient_fd<M: DifferentiableModel>(model: &M, batch: &Batch, step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let mut work = model.clone();
    (0..model.num_params())
        .map(|i| {
            let t = model.params()[i];
            let plus = loss_at(&mut work, batch, i, t + step)?;
            let minus = loss_at(&mut work, batch, i, t - step)?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// `(E(θ + h e_i) - 2E(θ) + E(θ - h e_i)) / h²` for every coordinate.
pub fn hessian_diag_fd<M: DifferentiableModel>(model: &M, batch: &Batch, step: f64) -> Result<Vec<f64>> {
    check_step(step)?;
    let centre = model.loss(batch)?;
    let mut work = model.clone();
    (0..model.num_params())
        .map(|i| {
            let t = model.params()[i];
            let plus = loss_at(&mut work, batch, i, t + step)?;
            let minus = loss_at(&mut work, batch, i, t - step)?;
            Ok((plus - 2.0 * centre + minus) / (step * step))
        })
        .collect()
}

/// `(g_i(θ + h e_i) - g_i(θ - h e_i)) / 2h`, differencing the analytic gradient.
pub fn hessian_diag_fd_grad<M: DifferentiableModel>(
    model: &M,
    batch: &Batch,
    step: f64,
) -> Result<Vec<f64>> {
    check_step(step)?;
    let mut work = model.clone();
    (0..model.num_params())
        .map(|i| {
            let t = model.params()[i];
            work.params_mut()[i] = t + step;
            let plus = work.gradient(batch)?[i];
            work.params_mut()[i] = t - step;
            let minus = work.gradient(batch)?[i];
            work.params_mut()[i] = t;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
