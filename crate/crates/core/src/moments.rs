//! Closed-form moment propagation through normalization and convolution
//! layers, a Monte Carlo engine that certifies it, and the empirical
//! scale-propagation check.
//!
//! Means and variances are written `E` and `D`. Every closed form assumes its
//! inputs are mutually independent.

use crate::error::{Error, Result};
use crate::norm::{Mode, NormKind, NormLayer, NormParams};
use crate::params::ParamStore;
use crate::tensor::{pairwise_sum, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub mean: f64,
    pub variance: f64,
}

impl MomentStats {
    pub fn new(mean: f64, variance: f64) -> Self {
        debug_assert!(variance >= 0.0, "variance must be non-negative");
        Self { mean, variance }
    }

    pub fn point(c: f64) -> Self {
        Self { mean: c, variance: 0.0 }
    }
}

/// `p·q` for independent `p`, `q`.
pub fn product_moments(p: MomentStats, q: MomentStats) -> MomentStats {
    MomentStats {
        mean: p.mean * q.mean,
        variance: p.variance * q.variance + p.mean * p.mean * q.variance + q.mean * q.mean * p.variance,
    }
}

/// `p + q` for independent `p`, `q`.
pub fn sum_moments(p: MomentStats, q: MomentStats) -> MomentStats {
    MomentStats { mean: p.mean + q.mean, variance: p.variance + q.variance }
}

/// Output moments of `alpha·d̂ + beta` with `d̂` standardized.
pub fn affine_output_moments(alpha: MomentStats, beta: MomentStats) -> MomentStats {
    MomentStats {
        mean: beta.mean,
        variance: alpha.variance + alpha.mean * alpha.mean + beta.variance,
    }
}

/// Output moments of one coordinate of a bias-free convolution with `n0` inputs and
/// `n1` outputs under Xavier Normal weights.
pub fn conv_init_moments(n0: usize, n1: usize, input: MomentStats) -> Result<MomentStats> {
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidArgument("fan-in and fan-out must be >= 1".into()));
    }
    let gain = 2.0 * n0 as f64 / (n0 + n1) as f64;
    Ok(MomentStats { mean: 0.0, variance: gain * (input.variance + input.mean * input.mean) })
}

/// The parameter-only variance factor of SP-Norm: `n (D(w) + E(w)^2) + D(b)`.
pub fn spnorm_lambda(n: usize, w: MomentStats, b: MomentStats) -> f64 {
    n as f64 * (w.variance + w.mean * w.mean) + b.variance
}

/// Output moments of `(Σ_j w_j d̂_j + b) · d` and the factor Λ.
pub fn spnorm_output_moments(n: usize, w: MomentStats, b: MomentStats, input: MomentStats) -> (MomentStats, f64) {
    let lambda = spnorm_lambda(n, w, b);
    let stats = MomentStats {
        mean: b.mean * input.mean,
        variance: input.variance * (lambda + b.mean * b.mean) + input.mean * input.mean * lambda,
    };
    (stats, lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistFamily {
    Normal,
    Uniform,
    PointMass,
}

/// A scalar sampling distribution parameterised by its first two moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarDist {
    pub family: DistFamily,
    pub mean: f64,
    pub variance: f64,
}

impl ScalarDist {
    pub fn new(family: DistFamily, mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!("bad moments ({mean}, {variance})")));
        }
        if family == DistFamily::PointMass && variance != 0.0 {
            return Err(Error::InvalidArgument("a point mass has zero variance".into()));
        }
        Ok(Self { family, mean, variance })
    }

    pub fn normal(mean: f64, variance: f64) -> Self {
        Self::new(DistFamily::Normal, mean, variance).expect("valid normal")
    }

    pub fn uniform(mean: f64, variance: f64) -> Self {
        Self::new(DistFamily::Uniform, mean, variance).expect("valid uniform")
    }

    pub fn point(c: f64) -> Self {
        Self { family: DistFamily::PointMass, mean: c, variance: 0.0 }
    }

    pub fn moments(&self) -> MomentStats {
        MomentStats::new(self.mean, self.variance)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            DistFamily::PointMass => self.mean,
            DistFamily::Normal => {
                let z: f64 = StandardNormal.sample(rng);
                self.mean + self.variance.sqrt() * z
            }
            DistFamily::Uniform => {
                // half-width sqrt(3 var) gives the requested variance
                let half = (3.0 * self.variance).sqrt();
                self.mean + half * (2.0 * rng.random::<f64>() - 1.0)
            }
        }
    }
}

/// Empirical mean and variance of a Monte Carlo population with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub trials: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = pairwise_sum(samples) / n;
        let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
        let sq: Vec<f64> = centered.iter().map(|c| c * c).collect();
        let variance = pairwise_sum(&sq) / n;
        let quad: Vec<f64> = sq.iter().map(|s| s * s).collect();
        let m4 = pairwise_sum(&quad) / n;
        Self {
            mean,
            variance,
            se_mean: (variance / n).sqrt(),
            se_variance: ((m4 - variance * variance).max(0.0) / n).sqrt(),
            trials: samples.len(),
        }
    }
}

/// Minimum trial count below which an estimate is flagged as underpowered.
pub const MIN_POWERED_TRIALS: usize = 10_000;

/// Per-trial random streams: parameters and inputs are drawn independently.
pub struct TrialRngs {
    pub params: ChaCha8Rng,
    pub input: ChaCha8Rng,
}

fn trial_rngs(seed: u64, trial: usize) -> TrialRngs {
    let mut params = ChaCha8Rng::seed_from_u64(seed);
    params.set_stream(2 * trial as u64);
    let mut input = ChaCha8Rng::seed_from_u64(seed);
    input.set_stream(2 * trial as u64 + 1);
    TrialRngs { params, input }
}

/// Run `trials` independent draws of `sample` in parallel. Results depend only on
/// `(seed, trials)`, never on the worker count.
pub fn monte_carlo<F>(trials: usize, seed: u64, sample: F) -> Result<McEstimate>
where
    F: Fn(&mut TrialRngs) -> Result<f64> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let v = sample(&mut trial_rngs(seed, t))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("trial {t} produced {v}")))
            }
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_samples(&samples))
}

/// What one Monte Carlo trial samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum MomentExperiment {
    /// `p · q`.
    Product { p: ScalarDist, q: ScalarDist },
    /// `p + q`.
    Sum { p: ScalarDist, q: ScalarDist },
    /// `alpha · d̂ + beta` with `d̂ ~ N(0, 1)`.
    Affine { alpha: ScalarDist, beta: ScalarDist },
    /// One output of a bias-free Xavier-initialised convolution over `n0` inputs.
    ConvInit { n0: usize, n1: usize, input: ScalarDist },
    /// `(Σ_j w_j d̂_j + b) · d` with `d̂_j ~ N(0, 1)` i.i.d. and `d` independent.
    SpNorm { n: usize, w: ScalarDist, b: ScalarDist, input: ScalarDist },
    /// Channel 0 of a real layer applied to `n` i.i.d. input channels. Conventional
    /// layers use affine factors `alpha`, `beta`; SP-Norm draws a Xavier SLP.
    Pipeline { kind: NormKind, n: usize, input: ScalarDist, alpha: ScalarDist, beta: ScalarDist },
}

impl MomentExperiment {
    /// Closed-form prediction, when the experiment's premises admit one.
    pub fn closed_form(&self) -> Result<MomentStats> {
        Ok(match self {
            MomentExperiment::Product { p, q } => product_moments(p.moments(), q.moments()),
            MomentExperiment::Sum { p, q } => sum_moments(p.moments(), q.moments()),
            MomentExperiment::Affine { alpha, beta } => affine_output_moments(alpha.moments(), beta.moments()),
            MomentExperiment::ConvInit { n0, n1, input } => conv_init_moments(*n0, *n1, input.moments())?,
            MomentExperiment::SpNorm { n, w, b, input } => {
                spnorm_output_moments(*n, w.moments(), b.moments(), input.moments()).0
            }
            MomentExperiment::Pipeline { kind, n, input, alpha, beta } => match kind {
                NormKind::Bn | NormKind::In | NormKind::Ln => affine_output_moments(alpha.moments(), beta.moments()),
                NormKind::SpNorm => {
                    let w = MomentStats::new(0.0, 1.0 / *n as f64);
                    spnorm_output_moments(*n, w, MomentStats::point(0.0), input.moments()).0
                }
                other => {
                    return Err(Error::InvalidArgument(format!("no closed form for a {other} pipeline")))
                }
            },
        })
    }

    pub fn equation(&self) -> &'static str {
        match self {
            MomentExperiment::Product { .. } => "product",
            MomentExperiment::Sum { .. } => "sum",
            MomentExperiment::Affine { .. } => "affine",
            MomentExperiment::ConvInit { .. } => "conv-init",
            MomentExperiment::SpNorm { .. } => "sp-norm",
            MomentExperiment::Pipeline { kind: NormKind::SpNorm, .. } => "sp-norm",
            MomentExperiment::Pipeline { .. } => "affine",
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            MomentExperiment::Pipeline { .. } => "pipeline",
            _ => "idealized",
        }
    }

    /// Draw one output sample.
    pub fn sample(&self, rngs: &mut TrialRngs) -> Result<f64> {
        let TrialRngs { params, input: inp } = rngs;
        Ok(match self {
            MomentExperiment::Product { p, q } => p.sample(params) * q.sample(inp),
            MomentExperiment::Sum { p, q } => p.sample(params) + q.sample(inp),
            MomentExperiment::Affine { alpha, beta } => {
                let dhat: f64 = StandardNormal.sample(inp);
                alpha.sample(params) * dhat + beta.sample(params)
            }
            MomentExperiment::ConvInit { n0, n1, input } => {
                let w = Normal::new(0.0, (2.0 / (n0 + n1) as f64).sqrt()).expect("finite std");
                (0..*n0).map(|_| w.sample(params) * input.sample(inp)).sum()
            }
            MomentExperiment::SpNorm { n, w, b, input } => {
                let mut f = b.sample(params);
                for _ in 0..*n {
                    let dhat: f64 = StandardNormal.sample(inp);
                    f += w.sample(params) * dhat;
                }
                f * input.sample(inp)
            }
            MomentExperiment::Pipeline { kind, n, input, alpha, beta } => {
                let mut store = ParamStore::new();
                let layer = NormLayer::new(*kind, *n, &mut store, "norm");
                match layer.params {
                    NormParams::Affine { alpha: a, beta: bt } => {
                        store.get_mut(a).data_mut().iter_mut().for_each(|v| *v = alpha.sample(params));
                        store.get_mut(bt).data_mut().iter_mut().for_each(|v| *v = beta.sample(params));
                    }
                    NormParams::Slp { weight, .. } => {
                        let w = Normal::new(0.0, (1.0 / *n as f64).sqrt()).expect("finite std");
                        store.get_mut(weight).data_mut().iter_mut().for_each(|v| *v = w.sample(params));
                    }
                    _ => {}
                }
                let x = Tensor::from_fn(&[1, *n, 1, 1], |_| input.sample(inp));
                let (y, _) = layer.apply(&store, &x, Mode::Train)?;
                y.data()[0]
            }
        })
    }
}

/// Sample an experiment's output population.
pub fn mc_layer_moments(experiment: &MomentExperiment, trials: usize, seed: u64) -> Result<McEstimate> {
    monte_carlo(trials, seed, |rngs| experiment.sample(rngs))
}

/// One statistic of one experiment, compared against its closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub equation: String,
    pub mode: String,
    pub statistic: String,
    pub setting: MomentExperiment,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub se: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// z-score of an estimate; a zero standard error demands agreement to rounding.
pub fn z_score(estimate: f64, expected: f64, se: f64) -> f64 {
    let diff = estimate - expected;
    let floor = 1e-12 * expected.abs().max(1.0);
    if se > floor {
        diff / se
    } else if diff.abs() <= floor {
        0.0
    } else {
        f64::INFINITY * diff.signum()
    }
}

/// Compare closed form and Monte Carlo for mean and variance; passes at `|z| <= z_max`.
pub fn check_experiment(experiment: &MomentExperiment, trials: usize, seed: u64, z_max: f64) -> Result<[MomentCheck; 2]> {
    let cf = experiment.closed_form()?;
    let est = mc_layer_moments(experiment, trials, seed)?;
    let make = |statistic: &str, closed: f64, mc: f64, se: f64| {
        let z = z_score(mc, closed, se);
        MomentCheck {
            equation: experiment.equation().to_string(),
            mode: experiment.mode().to_string(),
            statistic: statistic.to_string(),
            setting: experiment.clone(),
            closed_form: closed,
            mc_estimate: mc,
            se,
            z_score: z,
            pass: z.abs() <= z_max,
        }
    };
    Ok([
        make("mean", cf.mean, est.mean, est.se_mean),
        make("variance", cf.variance, est.variance, est.se_variance),
    ])
}

fn random_dist<R: Rng + ?Sized>(rng: &mut R, mean_range: f64, var_max: f64) -> ScalarDist {
    let mean = rng.random_range(-mean_range..=mean_range);
    match rng.random_range(0..3) {
        0 => ScalarDist::point(mean),
        1 => ScalarDist::normal(mean, rng.random_range(0.0..var_max)),
        _ => ScalarDist::uniform(mean, rng.random_range(0.0..var_max)),
    }
}

/// `count` random parameterisations of each idealized experiment family.
pub fn random_settings(count: usize, seed: u64) -> Vec<MomentExperiment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(5 * count);
    for _ in 0..count {
        out.push(MomentExperiment::Product { p: random_dist(&mut rng, 2.0, 2.0), q: random_dist(&mut rng, 2.0, 2.0) });
    }
    for _ in 0..count {
        out.push(MomentExperiment::Sum { p: random_dist(&mut rng, 2.0, 2.0), q: random_dist(&mut rng, 2.0, 2.0) });
    }
    for _ in 0..count {
        out.push(MomentExperiment::Affine { alpha: random_dist(&mut rng, 2.0, 1.0), beta: random_dist(&mut rng, 2.0, 1.0) });
    }
    for _ in 0..count {
        out.push(MomentExperiment::ConvInit {
            n0: rng.random_range(1..=32),
            n1: rng.random_range(1..=32),
            input: random_dist(&mut rng, 2.0, 2.0),
        });
    }
    for _ in 0..count {
        let n = rng.random_range(1..=16);
        let w_var = rng.random_range(0.0..(2.0 / n as f64));
        let w_mean = rng.random_range(-0.5..=0.5) / (n as f64).sqrt();
        let w = if rng.random_bool(0.5) { ScalarDist::normal(w_mean, w_var) } else { ScalarDist::uniform(w_mean, w_var) };
        out.push(MomentExperiment::SpNorm {
            n,
            w,
            b: random_dist(&mut rng, 1.5, 0.5),
            input: random_dist(&mut rng, 2.0, 2.0),
        });
    }
    out
}

/// Known fixed points plus pipeline-mode runs of the real layers.
pub fn fixed_point_settings() -> Vec<MomentExperiment> {
    vec![
        // affine factors at init on an arbitrary standardized input
        MomentExperiment::Affine { alpha: ScalarDist::point(1.0), beta: ScalarDist::point(0.0) },
        // Xavier SLP on zero-mean input: output variance equals input variance
        MomentExperiment::SpNorm {
            n: 16,
            w: ScalarDist::normal(0.0, 1.0 / 16.0),
            b: ScalarDist::point(0.0),
            input: ScalarDist::normal(0.0, 2.5),
        },
        MomentExperiment::ConvInit { n0: 4, n1: 8, input: ScalarDist::normal(0.0, 1.0) },
        MomentExperiment::Pipeline {
            kind: NormKind::Ln,
            n: 32,
            input: ScalarDist::uniform(3.0, 4.0),
            alpha: ScalarDist::point(1.0),
            beta: ScalarDist::point(0.0),
        },
        MomentExperiment::Pipeline {
            kind: NormKind::Ln,
            n: 32,
            input: ScalarDist::normal(-1.0, 0.5),
            alpha: ScalarDist::point(2.0),
            beta: ScalarDist::point(1.0),
        },
        MomentExperiment::Pipeline {
            kind: NormKind::SpNorm,
            n: 16,
            input: ScalarDist::normal(0.0, 2.5),
            alpha: ScalarDist::point(1.0),
            beta: ScalarDist::point(0.0),
        },
    ]
}

/// How a function responds to positive rescaling of its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Homogeneity {
    /// `f(s·x) = s·f(x)`.
    Proportional,
    /// `f(s·x) = f(x)`.
    Invariant,
    Neither,
}

/// Relative max-norm tolerance for the exact classes.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpPropertyReport {
    pub scales: Vec<f64>,
    /// `‖f(s·x) − s·f(x)‖∞ / ‖s·f(x)‖∞` per scale.
    pub proportional_deviation: Vec<f64>,
    /// `‖f(s·x) − f(x)‖∞ / ‖f(x)‖∞` per scale.
    pub invariance_deviation: Vec<f64>,
    pub class: Homogeneity,
}

impl SpPropertyReport {
    pub fn max_proportional(&self) -> f64 {
        self.proportional_deviation.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_invariance(&self) -> f64 {
        self.invariance_deviation.iter().copied().fold(0.0, f64::max)
    }

    /// The smaller of the two deviations, over scales other than 1.
    pub fn min_nontrivial_deviation(&self) -> f64 {
        self.scales
            .iter()
            .zip(self.proportional_deviation.iter().zip(&self.invariance_deviation))
            .filter(|(s, _)| **s != 1.0)
            .map(|(_, (p, i))| p.min(*i))
            .fold(f64::INFINITY, f64::min)
    }
}

fn rel_max_dev(a: &Tensor, b: &Tensor) -> Result<f64> {
    // an overflowed output cannot satisfy either relation
    if !a.is_finite() || !b.is_finite() {
        return Ok(f64::INFINITY);
    }
    let denom = b.max_abs();
    let diff = a.zip_map(b, |x, y| x - y)?;
    Ok(diff.max_abs() / denom)
}

/// Measure how `f` responds to `x ↦ s·x` for each scale and classify it.
pub fn verify_sp_property<F>(f: F, x: &Tensor, scales: &[f64]) -> Result<SpPropertyReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    let base = f(x)?;
    if base.max_abs() == 0.0 {
        return Err(Error::InvalidArgument("f(x) is identically zero; deviation undefined".into()));
    }
    let mut prop = Vec::with_capacity(scales.len());
    let mut inv = Vec::with_capacity(scales.len());
    for &s in scales {
        let out = f(&x.scale(s))?;
        prop.push(rel_max_dev(&out, &base.scale(s))?);
        inv.push(rel_max_dev(&out, &base)?);
    }
    let nontrivial: Vec<usize> = (0..scales.len()).filter(|&i| scales[i] != 1.0).collect();
    let class = if nontrivial.iter().all(|&i| prop[i] < EXACT_TOL) {
        Homogeneity::Proportional
    } else if nontrivial.iter().all(|&i| inv[i] < EXACT_TOL) {
        Homogeneity::Invariant
    } else {
        Homogeneity::Neither
    };
    Ok(SpPropertyReport { scales: scales.to_vec(), proportional_deviation: prop, invariance_deviation: inv, class })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(m: f64, v: f64) -> MomentStats {
        MomentStats::new(m, v)
    }

    #[test]
    fn product_identity_cases() {
        assert_eq!(product_moments(ms(0.0, 1.0), ms(0.0, 1.0)), ms(0.0, 1.0));
        assert_eq!(product_moments(ms(1.5, 2.0), MomentStats::point(3.0)), ms(4.5, 18.0));
        assert_eq!(product_moments(ms(2.0, 3.0), ms(1.0, 4.0)), ms(2.0, 31.0));
    }

    #[test]
    fn affine_cases() {
        assert_eq!(affine_output_moments(MomentStats::point(1.0), MomentStats::point(0.0)), ms(0.0, 1.0));
        assert_eq!(affine_output_moments(MomentStats::point(0.0), MomentStats::point(0.0)), ms(0.0, 0.0));
        assert_eq!(affine_output_moments(MomentStats::point(2.0), MomentStats::point(1.0)), ms(1.0, 4.0));
    }

    #[test]
    fn conv_init_cases() {
        assert_eq!(conv_init_moments(3, 5, ms(0.0, 0.0)).unwrap(), ms(0.0, 0.0));
        let r = conv_init_moments(4, 8, ms(0.0, 1.0)).unwrap();
        assert!((r.variance - 2.0 / 3.0).abs() < 1e-15 && r.mean == 0.0);
        assert_eq!(conv_init_moments(7, 7, ms(1.5, 2.0)).unwrap(), ms(0.0, 2.0 + 2.25));
        assert!(conv_init_moments(0, 7, ms(1.5, 2.0)).is_err());
    }

    #[test]
    fn spnorm_cases() {
        let n = 8;
        let (r, lambda) = spnorm_output_moments(n, ms(0.0, 1.0 / n as f64), MomentStats::point(0.0), ms(0.0, 3.0));
        assert!((lambda - 1.0).abs() < 1e-15);
        assert!(r.mean == 0.0 && (r.variance - 3.0).abs() < 1e-15);

        // Λ = 0 forces w and b to be point masses at 0 except E(b)
        let (r, lambda) = spnorm_output_moments(n, MomentStats::point(0.0), MomentStats::point(1.5), ms(2.0, 3.0));
        assert_eq!(lambda, 0.0);
        assert_eq!(r, ms(3.0, 1.5 * 1.5 * 3.0));

        let w = ms(0.2, 0.1);
        let b = ms(0.7, 0.3);
        let (r, lambda) = spnorm_output_moments(5, w, b, ms(0.0, 2.0));
        assert_eq!(r.mean, 0.0);
        assert!((r.variance - 2.0 * (lambda + 0.49)).abs() < 1e-14);
    }

    #[test]
    fn mc_is_deterministic_and_matches_fixed_points() {
        let conv = MomentExperiment::ConvInit { n0: 4, n1: 8, input: ScalarDist::normal(0.0, 1.0) };
        let a = mc_layer_moments(&conv, 20_000, 7).unwrap();
        let b = mc_layer_moments(&conv, 20_000, 7).unwrap();
        assert_eq!(a, b);
        assert!(((a.variance - 2.0 / 3.0) / a.se_variance).abs() < 3.0, "{a:?}");

        let ln = MomentExperiment::Pipeline {
            kind: NormKind::Ln,
            n: 16,
            input: ScalarDist::uniform(1.0, 2.0),
            alpha: ScalarDist::point(1.0),
            beta: ScalarDist::point(0.0),
        };
        for check in check_experiment(&ln, 20_000, 3, 3.0).unwrap() {
            assert!(check.pass, "{check:?}");
        }
    }

    #[test]
    fn non_finite_trial_is_reported() {
        let r = monte_carlo(100, 1, |_| Ok(if true { f64::NAN } else { 0.0 }));
        assert!(matches!(r, Err(Error::NonFinite(msg)) if msg.contains("trial")));
    }

    #[test]
    fn sp_property_classes() {
        let x = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64 - 2.5);
        let r = verify_sp_property(|t| Ok(t.scale(3.0)), &x, &[1.0, 10.0]).unwrap();
        assert_eq!(r.class, Homogeneity::Proportional);
        assert_eq!(r.proportional_deviation[0], 0.0);
        assert_eq!(r.invariance_deviation[0], 0.0);

        let r = verify_sp_property(|t| Ok(t.map(|v| v.signum())), &x, &[10.0]).unwrap();
        assert_eq!(r.class, Homogeneity::Invariant);
        assert!((r.proportional_deviation[0] - 0.9).abs() < 1e-15);

        let r = verify_sp_property(|t| Ok(t.map(|v| v + 1.0)), &x, &[2.0]).unwrap();
        assert_eq!(r.class, Homogeneity::Neither);

        assert!(verify_sp_property(|t| Ok(t.scale(0.0)), &x, &[2.0]).is_err());
        let r = verify_sp_property(|t| Ok(t.scale(1e307)), &x, &[10.0]).unwrap();
        assert_eq!((r.class, r.proportional_deviation[0]), (Homogeneity::Neither, f64::INFINITY));
    }

    #[test]
    fn dist_sampling_matches_moments() {
        for d in [ScalarDist::normal(1.0, 2.0), ScalarDist::uniform(-0.5, 0.3), ScalarDist::point(4.0)] {
            let est = monte_carlo(20_000, 5, |r| Ok(d.sample(&mut r.input))).unwrap();
            assert!(z_score(est.mean, d.mean, est.se_mean).abs() < 4.0);
            assert!(z_score(est.variance, d.variance, est.se_variance).abs() < 4.0);
        }
        assert!(ScalarDist::new(DistFamily::PointMass, 1.0, 0.5).is_err());
    }
}
