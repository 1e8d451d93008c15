//! Central finite-difference verification of tape gradients.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-8;

/// Which coordinates of each input to probe.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// `count` coordinates per input drawn without replacement from `seed`.
    Sample { count: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, flat coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compare reverse-mode gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape and one parameter handle per input and must return a
/// single-element node. The error of a coordinate is `|ad - fd| / max(|fd|, 1e-8)`.
pub fn check_many<F>(f: F, inputs: &[Tensor], step: f64, coords: Coords) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("function value {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v0 = tape.value(out).item()?;
    if !v0.is_finite() {
        return Err(Error::NonFinite(format!("function value {v0}")));
    }
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0 };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], input.shape());
        let idx: Vec<usize> = match coords {
            Coords::All => (0..input.numel()).collect(),
            Coords::Sample { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let n = input.numel();
                sample(&mut rng, n, count.min(n)).into_vec()
            }
        };
        for i in idx {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + step;
            let fp = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let fm = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let fd = (fp - fm) / (2.0 * step);
            let ad = analytic.data()[i];
            let err = (ad - fd).abs() / fd.abs().max(REL_FLOOR);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = (k, i);
            }
        }
    }
    Ok(report)
}

/// Directional form of [`check_many`]: compares `∇f · d` against
/// `(f(x + h·d) − f(x − h·d)) / 2h` for `count` random unit directions `d` spanning
/// every input at once. `worst` holds `(direction, 0)`.
///
/// Suited to functions of many variables whose individual partials can sit far
/// below the rounding noise of `f`.
pub fn check_directional<F>(f: F, inputs: &[Tensor], step: f64, count: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("function value {v}")));
        }
        Ok(v)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item()?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = inputs.iter().zip(&vars).map(|(t, &v)| grads.get_or_zeros(v, t.shape())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0 };
    for d in 0..count {
        let mut dirs: Vec<Tensor> = inputs.iter().map(|t| Tensor::randn(t.shape(), 1.0, &mut rng)).collect();
        let norm = dirs.iter().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        dirs.iter_mut().for_each(|t| *t = t.scale(1.0 / norm));
        let shifted = |sign: f64| -> Vec<Tensor> {
            inputs.iter().zip(&dirs).map(|(x, u)| x.zip_map(u, |a, b| a + sign * step * b).expect("same shape")).collect()
        };
        let fd = (eval(&shifted(1.0))? - eval(&shifted(-1.0))?) / (2.0 * step);
        let ad: f64 = analytic.iter().zip(&dirs).map(|(g, u)| g.data().iter().zip(u.data()).map(|(a, b)| a * b).sum::<f64>()).sum();
        let err = (ad - fd).abs() / fd.abs().max(REL_FLOOR);
        report.checked += 1;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst = (d, 0);
        }
    }
    Ok(report)
}

/// Single-input form of [`check_many`], probing every coordinate.
pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    check_many(|t, v| f(t, v[0]), std::slice::from_ref(x), step, Coords::All).map(|r| r.max_rel_error)
}
