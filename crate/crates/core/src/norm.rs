//! Normalization strategies behind one interface: batch, instance and layer
//! normalization, the learnable scaler, GRN, scale propagation normalization and
//! its three ablation variants.
//!
//! All statistics-based layers use [`normalize`], whose epsilon guard is
//! proportional to the mean magnitude of the reduced values. That keeps the
//! normalized output exactly invariant to positive rescaling of the input, which
//! in turn makes SP-Norm exactly 1-homogeneous and BN/IN/LN exactly
//! scale-annihilating.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    Bn,
    In,
    Ln,
    Scaler,
    Grn,
    SpNorm,
    /// SP-Norm without the normalization operator.
    SpNormNoNorm,
    /// SP-Norm with the SLP replaced by per-channel affine factors.
    SpNormAffine,
    /// SP-Norm with the multiplier replaced by an adder.
    SpNormAdder,
}

impl NormKind {
    pub const ALL: [NormKind; 9] = [
        NormKind::Bn,
        NormKind::In,
        NormKind::Ln,
        NormKind::Scaler,
        NormKind::Grn,
        NormKind::SpNorm,
        NormKind::SpNormNoNorm,
        NormKind::SpNormAffine,
        NormKind::SpNormAdder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::Bn => "bn",
            NormKind::In => "in",
            NormKind::Ln => "ln",
            NormKind::Scaler => "scaler",
            NormKind::Grn => "grn",
            NormKind::SpNorm => "sp-norm",
            NormKind::SpNormNoNorm => "sp-norm-no-norm",
            NormKind::SpNormAffine => "sp-norm-affine",
            NormKind::SpNormAdder => "sp-norm-adder",
        }
    }

    pub fn is_conventional(self) -> bool {
        matches!(self, NormKind::Bn | NormKind::In | NormKind::Ln)
    }

    /// Reduction axes of the normalization operator over `[N, C, H, W]`.
    pub fn axes(self) -> &'static [usize] {
        match self {
            NormKind::Bn => &[0, 2, 3],
            NormKind::In | NormKind::Grn => &[2, 3],
            _ => &[1],
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown norm kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch-norm running statistics per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub momentum: f64,
    pub updates: u64,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels], momentum: BN_MOMENTUM, updates: 0 }
    }

    pub fn update(&mut self, batch: &BatchStats) {
        let m = self.momentum;
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = ((1.0 - m) * *r + m * b).max(0.0);
        }
        self.updates += 1;
    }
}

/// Per-channel batch statistics observed during a training forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// `(x - mean) / (std + eps * mean|x|)` along `axes`.
pub fn normalize(tape: &mut Tape, x: Var, axes: &[usize], eps: f64) -> Result<Var> {
    Ok(normalize_with_stats(tape, x, axes, eps)?.0)
}

fn normalize_with_stats(tape: &mut Tape, x: Var, axes: &[usize], eps: f64) -> Result<(Var, Var, Var)> {
    let (mean, var) = tape.moments(x, axes)?;
    let centered = tape.sub(x, mean)?;
    let std = tape.sqrt(var);
    let mag = tape.abs(x);
    let mag = tape.mean_axes(mag, axes)?;
    let guard = tape.scale(mag, eps);
    let denom = tape.add(std, guard)?;
    // keeps 0/0 finite for all-zero inputs; below half an ulp otherwise
    let denom = tape.add_scalar(denom, f64::MIN_POSITIVE);
    Ok((tape.div(centered, denom)?, mean, var))
}

#[derive(Clone, Debug, PartialEq)]
pub enum NormParams {
    /// `alpha`, `beta` of shape `[1, C, 1, 1]`.
    Affine { alpha: ParamId, beta: ParamId },
    Scaler { scale: ParamId },
    Grn { gamma: ParamId, beta: ParamId },
    /// Channel-mixing SLP: weight `[C, C]`, bias `[C]`.
    Slp { weight: ParamId, bias: ParamId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub kind: NormKind,
    pub channels: usize,
    pub eps: f64,
    pub params: NormParams,
    pub running: Option<RunningStats>,
}

impl NormLayer {
    /// Register the layer's parameters under `prefix` at their initial values.
    /// SLP weights are Xavier entries and stay zero until the store is initialised.
    pub fn new(kind: NormKind, channels: usize, store: &mut ParamStore, prefix: &str) -> Self {
        let per_channel = [1, channels, 1, 1];
        let params = match kind {
            NormKind::Bn | NormKind::In | NormKind::Ln | NormKind::SpNormAffine => NormParams::Affine {
                alpha: store.register(format!("{prefix}.alpha"), &per_channel, Init::Constant(1.0), false),
                beta: store.register(format!("{prefix}.beta"), &per_channel, Init::Constant(0.0), false),
            },
            NormKind::Scaler => NormParams::Scaler {
                scale: store.register(format!("{prefix}.scale"), &per_channel, Init::Constant(1.0), false),
            },
            NormKind::Grn => NormParams::Grn {
                gamma: store.register(format!("{prefix}.gamma"), &per_channel, Init::Constant(0.0), false),
                beta: store.register(format!("{prefix}.beta"), &per_channel, Init::Constant(0.0), false),
            },
            NormKind::SpNorm | NormKind::SpNormNoNorm | NormKind::SpNormAdder => {
                let shape = [channels, channels];
                NormParams::Slp {
                    weight: store.register(format!("{prefix}.slp.weight"), &shape, Init::xavier_for(&shape), true),
                    bias: store.register(format!("{prefix}.slp.bias"), &[channels], Init::Constant(0.0), false),
                }
            }
        };
        let running = (kind == NormKind::Bn).then(|| RunningStats::new(channels));
        Self { kind, channels, eps: DEFAULT_EPS, params, running }
    }

    /// Apply the layer on `tape`. Batch norm in training mode also returns the
    /// batch statistics so the caller can fold them into [`RunningStats`].
    pub fn forward(&self, tape: &mut Tape, x: Var, bound: &Bound, mode: Mode) -> Result<(Var, Option<BatchStats>)> {
        let [_, c, _, _] = tape.value(x).dims4()?;
        if c != self.channels {
            return Err(Error::Shape(format!("norm layer has {} channels, input has {c}", self.channels)));
        }
        match (self.kind, &self.params) {
            (NormKind::Bn | NormKind::In | NormKind::Ln, NormParams::Affine { alpha, beta }) => {
                let (xhat, stats) = if self.kind == NormKind::Bn && mode == Mode::Eval {
                    (self.bn_eval_normalize(tape, x)?, None)
                } else {
                    let (xhat, mean, var) = normalize_with_stats(tape, x, self.kind.axes(), self.eps)?;
                    let stats = (self.kind == NormKind::Bn && mode == Mode::Train).then(|| BatchStats {
                        mean: tape.value(mean).data().to_vec(),
                        var: tape.value(var).data().to_vec(),
                    });
                    (xhat, stats)
                };
                let scaled = tape.mul(xhat, bound.var(*alpha))?;
                Ok((tape.add(scaled, bound.var(*beta))?, stats))
            }
            (NormKind::Scaler, NormParams::Scaler { scale }) => Ok((tape.mul(x, bound.var(*scale))?, None)),
            (NormKind::Grn, NormParams::Grn { gamma, beta }) => {
                let sq = tape.mul(x, x)?;
                let energy = tape.sum_axes(sq, &[2, 3])?;
                let g = tape.sqrt(energy);
                let gmean = tape.mean_axes(g, &[1])?;
                let gmean = tape.add_scalar(gmean, self.eps);
                let n = tape.div(g, gmean)?;
                let xn = tape.mul(x, n)?;
                let scaled = tape.mul(xn, bound.var(*gamma))?;
                let shifted = tape.add(scaled, bound.var(*beta))?;
                Ok((tape.add(shifted, x)?, None))
            }
            (NormKind::SpNorm, NormParams::Slp { weight, bias }) => {
                let xhat = normalize(tape, x, &[1], self.eps)?;
                let f = tape.linear_channels(xhat, bound.var(*weight), Some(bound.var(*bias)))?;
                Ok((tape.mul(f, x)?, None))
            }
            (NormKind::SpNormNoNorm, NormParams::Slp { weight, bias }) => {
                let f = tape.linear_channels(x, bound.var(*weight), Some(bound.var(*bias)))?;
                Ok((tape.mul(f, x)?, None))
            }
            (NormKind::SpNormAdder, NormParams::Slp { weight, bias }) => {
                let xhat = normalize(tape, x, &[1], self.eps)?;
                let f = tape.linear_channels(xhat, bound.var(*weight), Some(bound.var(*bias)))?;
                Ok((tape.add(f, x)?, None))
            }
            (NormKind::SpNormAffine, NormParams::Affine { alpha, beta }) => {
                let xhat = normalize(tape, x, &[1], self.eps)?;
                let scaled = tape.mul(xhat, bound.var(*alpha))?;
                let f = tape.add(scaled, bound.var(*beta))?;
                Ok((tape.mul(f, x)?, None))
            }
            (kind, params) => Err(Error::InvalidArgument(format!("{kind} layer carries {params:?}"))),
        }
    }

    fn bn_eval_normalize(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let stats = self.running.as_ref().filter(|r| r.updates > 0).ok_or(Error::MissingRunningStats)?;
        let shape = [1, self.channels, 1, 1];
        let mean = tape.constant(Tensor::new(&shape, stats.mean.clone())?);
        let denom = Tensor::new(&shape, stats.var.iter().map(|v| v.sqrt() + self.eps).collect())?;
        let denom = tape.constant(denom);
        let centered = tape.sub(x, mean)?;
        tape.div(centered, denom)
    }

    /// Evaluate without gradients, returning the output and any batch statistics.
    pub fn apply(&self, store: &ParamStore, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<BatchStats>)> {
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let (y, stats) = self.forward(&mut tape, xv, &bound, mode)?;
        Ok((tape.value(y).clone(), stats))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self.params {
            NormParams::Affine { alpha, beta } => vec![alpha, beta],
            NormParams::Scaler { scale } => vec![scale],
            NormParams::Grn { gamma, beta } => vec![gamma, beta],
            NormParams::Slp { weight, bias } => vec![weight, bias],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_many, Coords, DEFAULT_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pixel(values: &[f64]) -> Tensor {
        Tensor::new(&[1, values.len(), 1, 1], values.to_vec()).unwrap()
    }

    fn layer(kind: NormKind, channels: usize) -> (NormLayer, ParamStore) {
        let mut store = ParamStore::new();
        let l = NormLayer::new(kind, channels, &mut store, "norm");
        (l, store)
    }

    fn normalize_value(x: &Tensor, axes: &[usize]) -> Tensor {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = normalize(&mut tape, v, axes, DEFAULT_EPS).unwrap();
        tape.value(y).clone()
    }

    fn rel_dev(a: &Tensor, b: &Tensor) -> f64 {
        let diff = a.zip_map(b, |x, y| x - y).unwrap();
        diff.max_abs() / b.max_abs()
    }

    #[test]
    fn normalize_cases() {
        let c = Tensor::full(&[1, 4, 2, 2], 1.75);
        assert!(normalize_value(&c, &[1]).max_abs() < 1e-9);
        assert_eq!(normalize_value(&Tensor::zeros(&[1, 3, 2, 2]), &[1]).max_abs(), 0.0);

        let y = normalize_value(&pixel(&[1.0, 2.0, 3.0]), &[1]);
        let e = 1.5f64.sqrt();
        for (got, want) in y.data().iter().zip([-e, 0.0, e]) {
            assert!((got - want).abs() < 1e-4);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::randn(&[2, 8, 3, 3], 1.0, &mut rng);
        let a = normalize_value(&x, &[1]);
        let b = normalize_value(&x.scale(7.3), &[1]);
        assert!(rel_dev(&b, &a) < 1e-12);
    }

    #[test]
    fn conventional_initial_state_and_constant_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[1, 64, 1, 1], 3.0, &mut rng).map(|v| v + 2.0);
        let (ln, store) = layer(NormKind::Ln, 64);
        let (y, _) = ln.apply(&store, &x, Mode::Train).unwrap();
        let mean = y.sum() / 64.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-10);
        assert!(var <= 1.0 && var > 1.0 - 1e-3, "{var}");

        let (ln, mut store) = layer(NormKind::Ln, 3);
        let NormParams::Affine { alpha, beta } = ln.params else { unreachable!() };
        store.get_mut(alpha).data_mut().fill(5.0);
        store.get_mut(beta).data_mut().fill(-2.0);
        let (y, _) = ln.apply(&store, &Tensor::zeros(&[1, 3, 2, 2]), Mode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == -2.0));
    }

    #[test]
    fn bn_eval_requires_running_stats() {
        let (mut bn, store) = layer(NormKind::Bn, 2);
        let x = Tensor::from_fn(&[2, 2, 2, 2], |i| i as f64);
        assert!(matches!(bn.apply(&store, &x, Mode::Eval), Err(Error::MissingRunningStats)));
        let (_, stats) = bn.apply(&store, &x, Mode::Train).unwrap();
        bn.running.as_mut().unwrap().update(&stats.unwrap());
        let (y, stats) = bn.apply(&store, &x, Mode::Eval).unwrap();
        assert!(stats.is_none());
        assert!(y.is_finite());
        let r = bn.running.as_ref().unwrap();
        // channel 0 holds 0,1,2,3,8,9,10,11 with mean 5.5
        assert!((r.mean[0] - 0.55).abs() < 1e-12);
    }

    #[test]
    fn scaler_cases() {
        let (sc, mut store) = layer(NormKind::Scaler, 2);
        let x = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64 - 3.0);
        assert_eq!(sc.apply(&store, &x, Mode::Train).unwrap().0, x);
        let NormParams::Scaler { scale } = sc.params else { unreachable!() };
        store.get_mut(scale).data_mut().fill(0.0);
        assert_eq!(sc.apply(&store, &x, Mode::Train).unwrap().0.max_abs(), 0.0);
    }

    #[test]
    fn sp_norm_hand_cases() {
        let (sp, mut store) = layer(NormKind::SpNorm, 2);
        let NormParams::Slp { weight, bias } = sp.params else { unreachable!() };
        store.get_mut(bias).data_mut().copy_from_slice(&[0.5, 0.5]);
        let (y, _) = sp.apply(&store, &pixel(&[2.0, 4.0]), Mode::Train).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        store.get_mut(bias).data_mut().fill(0.0);
        store.get_mut(weight).data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let (y, _) = sp.apply(&store, &pixel(&[2.0, 4.0]), Mode::Train).unwrap();
        // xhat = (-1, 1) up to the relative guard eps * 3
        let shrink = 1.0 / (1.0 + 3.0 * DEFAULT_EPS);
        assert!((y.data()[0] + 2.0 * shrink).abs() < 1e-15);
        assert!((y.data()[1] - 4.0 * shrink).abs() < 1e-15);
    }

    #[test]
    fn variant_hand_cases() {
        let (aff, store) = layer(NormKind::SpNormAffine, 2);
        let (y, _) = aff.apply(&store, &pixel(&[2.0, 4.0]), Mode::Train).unwrap();
        let shrink = 1.0 / (1.0 + 3.0 * DEFAULT_EPS);
        assert!((y.data()[0] + 2.0 * shrink).abs() < 1e-15);
        assert!((y.data()[1] - 4.0 * shrink).abs() < 1e-15);

        let (add, store) = layer(NormKind::SpNormAdder, 3);
        let x = Tensor::from_fn(&[1, 3, 2, 2], |i| (i as f64).cos());
        assert_eq!(add.apply(&store, &x, Mode::Train).unwrap().0, x);
    }

    #[test]
    fn grn_cases() {
        let (grn, mut store) = layer(NormKind::Grn, 2);
        let x = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64 * 0.3 - 1.0);
        assert_eq!(grn.apply(&store, &x, Mode::Train).unwrap().0, x);
        assert_eq!(grn.apply(&store, &Tensor::zeros(&[1, 2, 2, 2]), Mode::Train).unwrap().0.max_abs(), 0.0);

        let NormParams::Grn { gamma, .. } = grn.params else { unreachable!() };
        store.get_mut(gamma).data_mut().fill(1.0);
        let mut data = vec![1.0; 4];
        data.extend([0.0; 4]);
        let x = Tensor::new(&[1, 2, 2, 2], data).unwrap();
        let (y, _) = grn.apply(&store, &x, Mode::Train).unwrap();
        // g = (2, 0), mean g = 1, n1 = 2 / (1 + eps); out = x * n + x
        let n1 = 2.0 / (1.0 + DEFAULT_EPS);
        for v in &y.data()[..4] {
            assert!((v - (n1 + 1.0)).abs() < 1e-15);
        }
        assert!(y.data()[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn homogeneity_ledger() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::randn(&[2, 6, 3, 3], 1.0, &mut rng);
        for kind in NormKind::ALL {
            let (l, mut store) = layer(kind, 6);
            store.init(3);
            for p in store.iter_mut() {
                // generic parameters so no layer sits at a special point
                for v in p.value.data_mut() {
                    *v += 0.3 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
                }
            }
            let base = l.apply(&store, &x, Mode::Train).unwrap().0;
            for s in [0.5, 2.0, 10.0] {
                let scaled = l.apply(&store, &x.scale(s), Mode::Train).unwrap().0;
                let prop = rel_dev(&scaled, &base.scale(s));
                let inv = rel_dev(&scaled, &base);
                match kind {
                    NormKind::SpNorm | NormKind::SpNormAffine | NormKind::Scaler => {
                        assert!(prop < 1e-12, "{kind} s={s} {prop}")
                    }
                    NormKind::Bn | NormKind::In | NormKind::Ln => assert!(inv < 1e-12, "{kind} s={s} {inv}"),
                    NormKind::SpNormAdder | NormKind::Grn | NormKind::SpNormNoNorm => {
                        assert!(prop > 1e-3 && inv > 1e-3, "{kind} s={s} {prop} {inv}")
                    }
                }
            }
        }
    }

    #[test]
    fn every_kind_passes_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in NormKind::ALL {
            let (l, mut store) = layer(kind, 4);
            store.init(17);
            for p in store.iter_mut() {
                for v in p.value.data_mut() {
                    *v += 0.5 * (rand::Rng::random::<f64>(&mut rng) - 0.5);
                }
            }
            let x = Tensor::randn(&[2, 4, 3, 3], 1.0, &mut rng);
            let proj = Tensor::randn(&[2, 4, 3, 3], 1.0, &mut rng);
            let mut inputs = vec![x];
            inputs.extend(store.iter().map(|p| p.value.clone()));
            let report = check_many(
                |tape, vars| {
                    let bound = Bound(vars[1..].to_vec());
                    let (y, _) = l.forward(tape, vars[0], &bound, Mode::Train)?;
                    let p = tape.constant(proj.clone());
                    let yp = tape.mul(y, p)?;
                    tape.sum_all(yp)
                },
                &inputs,
                DEFAULT_STEP,
                Coords::Sample { count: 10, seed: 4 },
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind}: {report:?}");
        }
    }

    #[test]
    fn parse_round_trip() {
        for k in NormKind::ALL {
            assert_eq!(k.name().parse::<NormKind>().unwrap(), k);
        }
        assert!("group".parse::<NormKind>().is_err());
    }
}
