//! Verification suites and toy experiments behind the command-line tools.

use crate::autodiff::{Tape, Var};
use crate::data::{self, DepthSample, SparsifySpec};
use crate::error::{Error, Result};
use crate::gradcheck::{check_directional, check_many, Coords, DEFAULT_STEP};
use crate::moments::{self, Homogeneity, MomentCheck, SpPropertyReport};
use crate::norm::{self, Mode, NormKind, NormLayer, NormParams};
use crate::objective::{self, total_loss_vars};
use crate::params::{Bound, ParamStore};
use crate::spnet::{ModelConfig, SpNetModel};
use crate::tensor::Tensor;
use crate::train::{self, RunStatus, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const TAG_GRAD: u64 = 301;
const TAG_MOMENTS: u64 = 302;
const TAG_SP: u64 = 303;
const TAG_EVAL: u64 = 304;

// ---------------------------------------------------------------- gradcheck

pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_POINTS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub name: String,
    pub max_rel_error: f64,
    /// Input index and flat coordinate of the worst error.
    pub worst_input: usize,
    pub worst_index: usize,
    pub checked: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSuiteReport {
    pub seed: u64,
    pub tolerance: f64,
    pub points: usize,
    pub entries: Vec<GradEntry>,
    pub pass: bool,
    /// Name of the entry with the largest error.
    pub worst: String,
}

type ScalarFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Sync>;

struct GradCase {
    name: String,
    inputs: Vec<Tensor>,
    f: ScalarFn,
}

/// Reduce any node to a scalar with fixed random weights, so every output
/// coordinate contributes a distinct gradient.
fn probe(tape: &mut Tape, y: Var, salt: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(salt);
    let r = Tensor::randn(tape.value(y).shape(), 1.0, &mut rng);
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    tape.sum_all(p)
}

fn away_from_zero(t: Tensor, margin: f64) -> Tensor {
    t.map(|v| if v >= 0.0 { v + margin } else { v - margin })
}

fn op_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = |shape: &[usize]| Tensor::randn(shape, 1.0, &mut rng);
    let mut cases: Vec<GradCase> = Vec::new();
    let mut add = |name: &str, inputs: Vec<Tensor>, f: ScalarFn| cases.push(GradCase { name: name.into(), inputs, f });

    add("conv2d", vec![n(&[2, 3, 5, 5]), n(&[4, 3, 3, 3])], Box::new(|t, v| {
        let y = t.conv2d(v[0], v[1], 1, 1)?;
        probe(t, y, 1)
    }));
    add("conv2d-stride2", vec![n(&[1, 2, 6, 6]), n(&[3, 2, 2, 2])], Box::new(|t, v| {
        let y = t.conv2d(v[0], v[1], 2, 0)?;
        probe(t, y, 2)
    }));
    add("depthwise-conv2d", vec![n(&[2, 3, 6, 6]), n(&[3, 1, 3, 3])], Box::new(|t, v| {
        let y = t.depthwise_conv2d(v[0], v[1], 1)?;
        probe(t, y, 3)
    }));
    add("conv-transpose2x2", vec![n(&[2, 3, 3, 3]), n(&[3, 2, 2, 2])], Box::new(|t, v| {
        let y = t.conv_transpose2x2(v[0], v[1])?;
        probe(t, y, 4)
    }));
    add("linear-channels", vec![n(&[2, 3, 4, 4]), n(&[5, 3]), n(&[5])], Box::new(|t, v| {
        let y = t.linear_channels(v[0], v[1], Some(v[2]))?;
        probe(t, y, 5)
    }));
    add("relu", vec![away_from_zero(n(&[2, 3, 4]), 0.1)], Box::new(|t, v| {
        let y = t.relu(v[0]);
        probe(t, y, 6)
    }));
    add("gelu", vec![n(&[2, 3, 4])], Box::new(|t, v| {
        let y = t.gelu(v[0]);
        probe(t, y, 7)
    }));
    add("sqrt", vec![n(&[2, 3, 4]).map(|v| 0.5 + v.abs())], Box::new(|t, v| {
        let y = t.sqrt(v[0]);
        probe(t, y, 8)
    }));
    add("abs", vec![away_from_zero(n(&[2, 3, 4]), 0.1)], Box::new(|t, v| {
        let y = t.abs(v[0]);
        probe(t, y, 9)
    }));
    add("scale", vec![n(&[3, 4])], Box::new(|t, v| {
        let y = t.scale(v[0], -1.7);
        probe(t, y, 10)
    }));
    add("add-scalar", vec![n(&[3, 4])], Box::new(|t, v| {
        let y = t.add_scalar(v[0], 0.3);
        probe(t, y, 11)
    }));
    add("add", vec![n(&[2, 3, 4, 4]), n(&[1, 3, 1, 1])], Box::new(|t, v| {
        let y = t.add(v[0], v[1])?;
        probe(t, y, 12)
    }));
    add("sub", vec![n(&[2, 3, 4, 4]), n(&[2, 1, 4, 4])], Box::new(|t, v| {
        let y = t.sub(v[0], v[1])?;
        probe(t, y, 13)
    }));
    add("mul", vec![n(&[2, 3, 4, 4]), n(&[1, 3, 1, 1])], Box::new(|t, v| {
        let y = t.mul(v[0], v[1])?;
        probe(t, y, 14)
    }));
    add("div", vec![n(&[2, 3, 4, 4]), n(&[2, 3, 1, 1]).map(|v| 0.5 + v.abs())], Box::new(|t, v| {
        let y = t.div(v[0], v[1])?;
        probe(t, y, 15)
    }));
    add("sum-axes", vec![n(&[2, 3, 4, 4])], Box::new(|t, v| {
        let y = t.sum_axes(v[0], &[0, 2, 3])?;
        probe(t, y, 16)
    }));
    add("mean-axes", vec![n(&[2, 3, 4, 4])], Box::new(|t, v| {
        let y = t.mean_axes(v[0], &[1])?;
        probe(t, y, 17)
    }));
    add("moments", vec![n(&[2, 3, 4, 4])], Box::new(|t, v| {
        let (m, var) = t.moments(v[0], &[2, 3])?;
        let a = probe(t, m, 18)?;
        let b = probe(t, var, 19)?;
        t.add(a, b)
    }));
    add("avg-pool", vec![n(&[1, 2, 4, 4])], Box::new(|t, v| {
        let y = t.avg_pool(v[0], 2)?;
        probe(t, y, 20)
    }));
    add("pad-replicate", vec![n(&[1, 2, 3, 4])], Box::new(|t, v| {
        let y = t.pad_replicate(v[0])?;
        probe(t, y, 21)
    }));
    add("concat-channels", vec![n(&[2, 1, 3, 3]), n(&[2, 2, 3, 3])], Box::new(|t, v| {
        let y = t.concat_channels(&[v[0], v[1]])?;
        probe(t, y, 22)
    }));
    add("sobel-grad", vec![n(&[2, 1, 5, 5])], Box::new(|t, v| {
        let (gx, gy) = t.sobel_grad(v[0])?;
        let a = probe(t, gx, 23)?;
        let b = probe(t, gy, 24)?;
        t.add(a, b)
    }));
    add("avg-downsample", vec![n(&[1, 1, 16, 16])], Box::new(|t, v| {
        let y = t.avg_downsample(v[0], 3)?;
        probe(t, y, 25)
    }));
    add("normalize", vec![n(&[2, 4, 3, 3])], Box::new(|t, v| {
        let y = norm::normalize(t, v[0], &[1], norm::DEFAULT_EPS)?;
        probe(t, y, 26)
    }));
    cases
}

fn norm_case(kind: NormKind, seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let layer = NormLayer::new(kind, 4, &mut store, "norm");
    // move parameters off their init values so every path carries gradient
    let mut inputs = vec![Tensor::randn(&[2, 4, 3, 3], 1.0, &mut rng)];
    for p in store.iter() {
        let noise = Tensor::randn(p.value.shape(), 0.5, &mut rng);
        inputs.push(p.value.zip_map(&noise, |a, b| a + b).expect("same shape"));
    }
    GradCase {
        name: format!("norm-{kind}"),
        inputs,
        f: Box::new(move |t, v| {
            let bound = Bound(v[1..].to_vec());
            let (y, _) = layer.forward(t, v[0], &bound, Mode::Train)?;
            probe(t, y, 27)
        }),
    }
}

/// A fixed small batch for model-level checks.
pub fn probe_batch(seed: u64, batch: usize, size: usize) -> Result<data::Batch> {
    let samples = (0..batch as u64)
        .map(|i| {
            let s = data::gen_scene(data::derive_seed(seed, TAG_GRAD, i), size, size, data::Z_MIN, data::Z_MAX)?;
            sparsify_retry(&s, SparsifySpec::RandomRatio { ratio: 0.05 }, data::derive_seed(seed, TAG_GRAD + 1, i))
        })
        .collect::<Result<Vec<_>>>()?;
    data::collate(&samples)
}

fn model_case(seed: u64) -> Result<GradCase> {
    let model = SpNetModel::new(ModelConfig::micro(), seed)?;
    let batch = probe_batch(seed, 2, 32)?;
    let inputs: Vec<Tensor> = model.store.iter().map(|p| p.value.clone()).collect();
    Ok(GradCase {
        name: "spnet-micro-total-loss".into(),
        inputs,
        f: Box::new(move |t, v| {
            let bound = Bound(v.to_vec());
            let img = t.constant(batch.image.clone());
            let sp = t.constant(batch.sparse.clone());
            let out = model.forward(t, &bound, img, sp, Mode::Train)?;
            Ok(total_loss_vars(t, out.depth, &batch.target)?.total)
        }),
    })
}

/// How a case's gradient is probed.
#[derive(Clone, Copy, Debug)]
enum Probe {
    Coordinates,
    Directions,
}

fn run_case(case: &GradCase, probe_kind: Probe, seed: u64, fault: bool) -> Result<GradEntry> {
    // a term the tape never sees: its gradient is missing from the analytic side
    let faulty = |t: &mut Tape, v: &[Var]| -> Result<Var> {
        let y = (case.f)(t, v)?;
        if !fault {
            return Ok(y);
        }
        let hidden: f64 = t.value(v[0]).data().iter().map(|x| x * x).sum();
        let h = t.constant(Tensor::full(t.value(y).shape(), hidden));
        t.add(y, h)
    };
    let r = match probe_kind {
        Probe::Coordinates => check_many(faulty, &case.inputs, DEFAULT_STEP, Coords::Sample { count: GRAD_POINTS, seed })?,
        Probe::Directions => check_directional(faulty, &case.inputs, DEFAULT_STEP, GRAD_POINTS, seed)?,
    };
    Ok(GradEntry {
        name: case.name.clone(),
        max_rel_error: r.max_rel_error,
        worst_input: r.worst.0,
        worst_index: r.worst.1,
        checked: r.checked,
        pass: r.max_rel_error <= GRAD_TOL,
    })
}

/// Every entry name the suite checks, in report order.
pub fn gradcheck_names(include_model: bool) -> Vec<String> {
    let mut names: Vec<String> = op_cases(0).into_iter().map(|c| c.name).collect();
    names.extend(NormKind::ALL.iter().map(|k| format!("norm-{k}")));
    if include_model {
        names.push("spnet-micro-total-loss".into());
    }
    names
}

/// Finite-difference check of every differentiable op and every norm kind at
/// `GRAD_POINTS` random coordinates per input tensor, and of the SPNet-Micro total
/// loss along `GRAD_POINTS` random directions in parameter space.
///
/// `fault` names an entry whose checked function gets a term hidden from the tape.
pub fn gradcheck_suite(seed: u64, include_model: bool, fault: Option<&str>) -> Result<GradSuiteReport> {
    if let Some(f) = fault {
        if !gradcheck_names(include_model).iter().any(|n| n == f) {
            return Err(Error::InvalidArgument(format!("unknown gradcheck entry {f:?}")));
        }
    }
    let base = data::derive_seed(seed, TAG_GRAD, 0);
    let mut cases = op_cases(base);
    cases.extend(NormKind::ALL.iter().enumerate().map(|(i, &k)| norm_case(k, data::derive_seed(base, 1, i as u64))));
    let n_local = cases.len();
    if include_model {
        cases.push(model_case(data::derive_seed(base, 2, 0))?);
    }
    let entries = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let kind = if i < n_local { Probe::Coordinates } else { Probe::Directions };
            run_case(c, kind, data::derive_seed(base, 3, i as u64), fault == Some(c.name.as_str()))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = entries
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .map(|e| e.name.clone())
        .unwrap_or_default();
    Ok(GradSuiteReport {
        seed,
        tolerance: GRAD_TOL,
        points: GRAD_POINTS,
        pass: entries.iter().all(|e| e.pass),
        entries,
        worst,
    })
}

// ---------------------------------------------------------------- moments

pub const Z_MAX: f64 = 4.0;
pub const SETTINGS_PER_FAMILY: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsReport {
    pub seed: u64,
    pub trials: usize,
    pub z_max: f64,
    pub underpowered: bool,
    pub checks: Vec<MomentCheck>,
    /// Every idealized check within `z_max`. Pipeline rows are reported only.
    pub pass: bool,
    pub worst_z: f64,
}

/// Closed form against Monte Carlo for random settings of every family plus the fixed points.
pub fn moments_suite(trials: usize, seed: u64) -> Result<MomentsReport> {
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least 2 trials".into()));
    }
    let mut settings = moments::random_settings(SETTINGS_PER_FAMILY, data::derive_seed(seed, TAG_MOMENTS, 0));
    settings.extend(moments::fixed_point_settings());
    let checks: Vec<MomentCheck> = settings
        .iter()
        .enumerate()
        .map(|(i, s)| moments::check_experiment(s, trials, data::derive_seed(seed, TAG_MOMENTS, 1 + i as u64), Z_MAX))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let gated = || checks.iter().filter(|c| c.mode == "idealized");
    let worst_z = gated().map(|c| c.z_score.abs()).fold(0.0, f64::max);
    Ok(MomentsReport {
        seed,
        trials,
        z_max: Z_MAX,
        underpowered: trials < moments::MIN_POWERED_TRIALS,
        pass: gated().all(|c| c.pass),
        checks,
        worst_z,
    })
}

// ---------------------------------------------------------------- sp-check

pub const DEFAULT_SCALES: [f64; 3] = [0.5, 2.0, 10.0];
pub const PROPORTIONAL_TOL: f64 = 1e-9;
pub const INVARIANT_TOL: f64 = 1e-8;
pub const NEITHER_MIN: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpVariant {
    pub name: String,
    pub config: ModelConfig,
    pub expected: Homogeneity,
}

/// The homogeneity ledger: each norm kind of `base`, plus a GRN-enabled block variant.
pub fn sp_variants(base: &ModelConfig) -> Vec<SpVariant> {
    let mut out: Vec<SpVariant> = NormKind::ALL
        .iter()
        .map(|&k| SpVariant {
            name: k.to_string(),
            config: base.clone().with_norm(k),
            expected: match k {
                NormKind::SpNorm | NormKind::SpNormAffine | NormKind::Scaler => Homogeneity::Proportional,
                NormKind::Bn | NormKind::In | NormKind::Ln => Homogeneity::Invariant,
                NormKind::Grn | NormKind::SpNormNoNorm | NormKind::SpNormAdder => Homogeneity::Neither,
            },
        })
        .collect();
    out.push(SpVariant {
        name: "sp-norm+grn".into(),
        config: ModelConfig { use_grn: true, ..base.clone().with_norm(NormKind::SpNorm) },
        expected: Homogeneity::Neither,
    });
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpRow {
    pub variant: String,
    pub expected: Homogeneity,
    pub measured: Homogeneity,
    pub max_proportional: f64,
    pub max_invariance: f64,
    pub report: SpPropertyReport,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpLedger {
    pub seed: u64,
    pub scales: Vec<f64>,
    pub rows: Vec<SpRow>,
    pub pass: bool,
}

/// Random joint input: image in [0, 1), sparse depth on about 30% of pixels.
pub fn sp_input(seed: u64, batch: usize, size: usize) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Tensor::uniform(&[batch, 3, size, size], 0.0, 1.0, &mut rng);
    let sp = Tensor::from_fn(&[batch, 1, size, size], |_| {
        let z = rng.random_range(data::Z_MIN..data::Z_MAX);
        if rng.random_bool(0.3) { z } else { 0.0 }
    });
    (img, sp)
}

/// GRN starts as the identity (gamma = beta = 0); draw them so its scale response shows.
pub fn randomize_grn(model: &mut SpNetModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model
        .norms
        .iter()
        .filter_map(|n| match n.params {
            NormParams::Grn { gamma, beta } => Some([gamma, beta]),
            _ => None,
        })
        .flatten()
        .collect();
    for id in ids {
        model.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
    }
}

/// Scale response of a model to joint rescaling of image and sparse depth.
pub fn model_sp_report(model: &SpNetModel, img: &Tensor, sp: &Tensor, scales: &[f64]) -> Result<SpPropertyReport> {
    let x = Tensor::concat_channels(&[img, sp])?;
    let [n, c, h, w] = x.dims4()?;
    let plane = h * w;
    let split = |x: &Tensor| -> Result<Tensor> {
        let d = x.data();
        let img = Tensor::from_fn(&[n, c - 1, h, w], |i| d[(i / ((c - 1) * plane)) * c * plane + i % ((c - 1) * plane)]);
        let sp = Tensor::from_fn(&[n, 1, h, w], |i| d[(i / plane) * c * plane + (c - 1) * plane + i % plane]);
        model.predict(&img, &sp, Mode::Train)
    };
    moments::verify_sp_property(split, &x, scales)
}

fn judge(expected: Homogeneity, r: &SpPropertyReport) -> bool {
    match expected {
        Homogeneity::Proportional => r.max_proportional() < PROPORTIONAL_TOL,
        Homogeneity::Invariant => r.max_invariance() < INVARIANT_TOL,
        Homogeneity::Neither => r.min_nontrivial_deviation() > NEITHER_MIN,
    }
}

pub fn sp_row(variant: &SpVariant, model: &SpNetModel, scales: &[f64], seed: u64) -> Result<SpRow> {
    let (img, sp) = sp_input(data::derive_seed(seed, TAG_SP, 1), 2, 32);
    let report = model_sp_report(model, &img, &sp, scales)?;
    Ok(SpRow {
        variant: variant.name.clone(),
        expected: variant.expected,
        measured: report.class,
        max_proportional: report.max_proportional(),
        max_invariance: report.max_invariance(),
        pass: judge(variant.expected, &report),
        report,
    })
}

/// Build every ledger variant from `seed` and measure its scale response.
pub fn sp_check(base: &ModelConfig, scales: &[f64], seed: u64) -> Result<SpLedger> {
    let rows = sp_variants(base)
        .par_iter()
        .map(|v| {
            let mut model = SpNetModel::new(v.config.clone(), data::derive_seed(seed, TAG_SP, 0))?;
            randomize_grn(&mut model, data::derive_seed(seed, TAG_SP, 2));
            sp_row(v, &model, scales, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpLedger { seed, scales: scales.to_vec(), pass: rows.iter().all(|r| r.pass), rows })
}

// ---------------------------------------------------------------- eval

pub const SPARSITY_LEVELS: [f64; 5] = [0.1, 0.01, 0.001, 0.0005, 0.0001];
const MAX_SPARSIFY_ATTEMPTS: u64 = 256;

/// Sparsify, redrawing while no pixel survives.
pub fn sparsify_retry(sample: &DepthSample, spec: SparsifySpec, seed: u64) -> Result<DepthSample> {
    let mut attempt = 0;
    loop {
        match data::sparsify(sample, spec, data::derive_seed(seed, 0, attempt)) {
            Err(Error::EmptyReduction(_)) if attempt + 1 < MAX_SPARSIFY_ATTEMPTS => attempt += 1,
            other => return other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub level: f64,
    pub rel: f64,
    pub rmse: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    /// Both metrics non-decreasing as the sparsity level drops. Reported, not required.
    pub monotone: bool,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,rel,rmse,n_samples\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.level, r.rel, r.rmse, r.n_samples));
        }
        s
    }
}

/// Held-out dense scenes, disjoint from the training pool streams.
pub fn heldout_scenes(seed: u64, count: usize, height: usize, width: usize) -> Result<Vec<DepthSample>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| data::gen_scene(data::derive_seed(seed, TAG_EVAL, i), height, width, data::Z_MIN, data::Z_MAX))
        .collect()
}

/// Rel and RMSE of `predict` at each sparsity level, averaged over scenes.
pub fn eval_sweep<P>(predict: P, scenes: &[DepthSample], levels: &[f64], seed: u64) -> Result<EvalReport>
where
    P: Fn(&DepthSample) -> Result<Tensor> + Sync,
{
    if scenes.is_empty() {
        return Err(Error::EmptyReduction("no evaluation scenes".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let spec = SparsifySpec::RandomRatio { ratio: level };
        spec.validate()?;
        let metrics = scenes
            .par_iter()
            .enumerate()
            .map(|(si, s)| {
                let sample = sparsify_retry(s, spec, data::derive_seed(seed, TAG_EVAL + li as u64 + 1, si as u64))?;
                let z = predict(&sample)?;
                let z = z.reshape(sample.gt.shape())?;
                Ok((objective::rel(&z, &sample.gt, &sample.gt_mask)?, objective::rmse(&z, &sample.gt, &sample.gt_mask)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let k = metrics.len() as f64;
        rows.push(EvalRow {
            level,
            rel: metrics.iter().map(|m| m.0).sum::<f64>() / k,
            rmse: metrics.iter().map(|m| m.1).sum::<f64>() / k,
            n_samples: metrics.len(),
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].rel >= w[0].rel && w[1].rmse >= w[0].rmse);
    Ok(EvalReport { seed, rows, monotone })
}

/// Predictor backed by a model in evaluation mode.
pub fn model_predictor(model: &SpNetModel) -> impl Fn(&DepthSample) -> Result<Tensor> + Sync + '_ {
    move |s| {
        let b = data::collate(std::slice::from_ref(s))?;
        model.predict(&b.image, &b.sparse, Mode::Eval)
    }
}

/// Test hook: returns the ground truth.
pub fn oracle_predictor(s: &DepthSample) -> Result<Tensor> {
    Ok(s.gt.clone())
}

// ---------------------------------------------------------------- bench-variants

pub const BENCH_VARIANTS: [NormKind; 6] =
    [NormKind::SpNorm, NormKind::SpNormNoNorm, NormKind::SpNormAffine, NormKind::SpNormAdder, NormKind::Ln, NormKind::Scaler];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: NormKind,
    pub converged: bool,
    pub status: RunStatus,
    pub steps_run: usize,
    pub initial_smoothed: f64,
    pub final_smoothed: f64,
    pub ratio: f64,
    /// Error text when training aborted outside the loss check.
    pub error: Option<String>,
}

/// Train each variant under the same seed and steps; divergence is recorded, not raised.
pub fn bench_variants(config: &TrainConfig) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let mut rows = Vec::with_capacity(BENCH_VARIANTS.len());
    for kind in BENCH_VARIANTS {
        let cfg = TrainConfig { model: config.model.clone().with_norm(kind), ..config.clone() };
        rows.push(match train::train(&cfg, |_| {}) {
            Ok((_, r)) => BenchRow {
                variant: kind,
                converged: !r.diverged(cfg.divergence_factor),
                status: r.status.clone(),
                steps_run: r.records.len(),
                initial_smoothed: r.initial_smoothed,
                final_smoothed: r.final_smoothed,
                ratio: r.ratio(),
                error: None,
            },
            Err(e @ Error::NonFinite(_)) => BenchRow {
                variant: kind,
                converged: false,
                status: RunStatus::NonFinite { step: 0 },
                steps_run: 0,
                initial_smoothed: f64::NAN,
                final_smoothed: f64::NAN,
                ratio: f64::NAN,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- lambda

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub layer: String,
    pub lambda: f64,
}

/// Λ of every SP-Norm layer, measured from the current weights.
pub fn lambda_report(model: &SpNetModel) -> Vec<LambdaRow> {
    model.slp_lambdas().into_iter().map(|(layer, lambda)| LambdaRow { layer, lambda }).collect()
}
