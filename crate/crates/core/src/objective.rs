//! Scale-adaptive training loss and evaluation metrics.
//!
//! Depth maps are `[N,1,H,W]` tensors. Masks use the same shape with values 0 or 1.
//! All normalisation statistics are computed per image over its valid ground-truth
//! pixels; batch losses are the mean of per-image losses.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const LOSS_EPS: f64 = 1e-6;
pub const GRADIENT_WEIGHT: f64 = 0.5;
/// Downsampling levels `k = 0..GRADIENT_LEVELS` of the gradient term.
pub const GRADIENT_LEVELS: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sa: f64,
    pub l_sg: f64,
    pub total: f64,
    pub n_valid_gt: usize,
    pub n_valid_sparse: usize,
}

/// Supervision for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTarget {
    pub gt: Tensor,
    pub gt_mask: Tensor,
    pub sparse: Tensor,
    pub sparse_mask: Tensor,
}

/// Tape handles of the individual loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub l_sa: Var,
    /// First term of `l_sa`: mean |T_z - T_gt| over valid pixels.
    pub normalized: Var,
    /// Second term of `l_sa`: sparse-point L1 divided by `N_v + eps`.
    pub sparse: Var,
    pub l_sg: Var,
}

fn check_depth_map(name: &str, t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Shape(format!("{name} has shape {:?}, expected {shape:?}", t.shape())));
    }
    Ok(())
}

fn check_mask(name: &str, t: &Tensor) -> Result<()> {
    if t.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("{name} must contain only 0 and 1")));
    }
    Ok(())
}

impl LossTarget {
    pub fn new(gt: Tensor, gt_mask: Tensor, sparse: Tensor, sparse_mask: Tensor) -> Result<Self> {
        let [_, c, _, _] = gt.dims4()?;
        if c != 1 {
            return Err(Error::Shape(format!("depth maps need one channel, got {c}")));
        }
        let shape = gt.shape().to_vec();
        check_depth_map("gt_mask", &gt_mask, &shape)?;
        check_depth_map("sparse", &sparse, &shape)?;
        check_depth_map("sparse_mask", &sparse_mask, &shape)?;
        check_mask("gt_mask", &gt_mask)?;
        check_mask("sparse_mask", &sparse_mask)?;
        Ok(Self { gt, gt_mask, sparse, sparse_mask })
    }

    /// Target without sparse supervision.
    pub fn dense(gt: Tensor, gt_mask: Tensor) -> Result<Self> {
        let zeros = Tensor::zeros(gt.shape());
        Self::new(gt, gt_mask, zeros.clone(), zeros)
    }

    fn per_image_counts(mask: &Tensor) -> Result<Vec<f64>> {
        let [n, _, h, w] = mask.dims4()?;
        Ok((0..n).map(|b| mask.data()[b * h * w..(b + 1) * h * w].iter().sum()).collect())
    }
}

/// Per-image `T = (z - mean) / (mean_abs_dev + eps * mean|z|)` over `mask`.
///
/// `count` holds the number of valid pixels per image as an `[N,1,1,1]` constant.
pub fn normalized_depth(tape: &mut Tape, z: Var, mask: Var, count: Var) -> Result<Var> {
    let zm = tape.mul(z, mask)?;
    let s = tape.sum_axes(zm, &[1, 2, 3])?;
    let mean = tape.div(s, count)?;
    let centered = tape.sub(z, mean)?;
    let abs_c = tape.abs(centered);
    let abs_c = tape.mul(abs_c, mask)?;
    let dev = tape.sum_axes(abs_c, &[1, 2, 3])?;
    let dev = tape.div(dev, count)?;
    let abs_z = tape.abs(z);
    let abs_z = tape.mul(abs_z, mask)?;
    let mag = tape.sum_axes(abs_z, &[1, 2, 3])?;
    let mag = tape.div(mag, count)?;
    let guard = tape.scale(mag, LOSS_EPS);
    let denom = tape.add(dev, guard)?;
    let denom = tape.add_scalar(denom, f64::MIN_POSITIVE);
    tape.div(centered, denom)
}

/// A downsampled pixel is valid iff more than half of its source pixels are.
pub fn majority_downsample(mask: &Tensor, k: u32) -> Result<Tensor> {
    let [n, c, h, w] = mask.dims4()?;
    let f = 1usize << k;
    if h % f != 0 || w % f != 0 {
        return Err(Error::Shape(format!("{h}x{w} not divisible by {f}")));
    }
    let (ho, wo) = (h / f, w / f);
    let d = mask.data();
    Ok(Tensor::from_fn(&[n, c, ho, wo], |i| {
        let (plane, rest) = (i / (ho * wo), i % (ho * wo));
        let (oy, ox) = (rest / wo, rest % wo);
        let mut valid = 0usize;
        for y in oy * f..(oy + 1) * f {
            for x in ox * f..(ox + 1) * f {
                if d[plane * h * w + y * w + x] != 0.0 {
                    valid += 1;
                }
            }
        }
        if 2 * valid > f * f {
            1.0
        } else {
            0.0
        }
    }))
}

fn count_tensor(counts: &[f64]) -> Result<Tensor> {
    Tensor::new(&[counts.len(), 1, 1, 1], counts.to_vec())
}

fn batch_mean(tape: &mut Tape, per_image: Var) -> Result<Var> {
    let n = tape.value(per_image).numel();
    let s = tape.sum_all(per_image)?;
    Ok(tape.scale(s, 1.0 / n as f64))
}

fn gt_counts(target: &LossTarget) -> Result<Vec<f64>> {
    let counts = LossTarget::per_image_counts(&target.gt_mask)?;
    if let Some(b) = counts.iter().position(|&c| c == 0.0) {
        return Err(Error::EmptyReduction(format!("image {b} has an empty gt_mask")));
    }
    Ok(counts)
}

/// Normalised residual `(T_z - T_gt) * mask` and its supporting constants.
fn residual(tape: &mut Tape, z: Var, target: &LossTarget) -> Result<(Var, Var, Var)> {
    check_depth_map("prediction", tape.value(z), target.gt.shape())?;
    let counts = gt_counts(target)?;
    let count = tape.constant(count_tensor(&counts)?);
    let mask = tape.constant(target.gt_mask.clone());
    let gt = tape.constant(target.gt.clone());
    let tz = normalized_depth(tape, z, mask, count)?;
    let tg = normalized_depth(tape, gt, mask, count)?;
    let r = tape.sub(tz, tg)?;
    let r = tape.mul(r, mask)?;
    Ok((r, mask, count))
}

fn sparse_term(tape: &mut Tape, z: Var, target: &LossTarget) -> Result<Var> {
    let nv = LossTarget::per_image_counts(&target.sparse_mask)?;
    let denom: Vec<f64> = nv.iter().map(|c| c + LOSS_EPS).collect();
    let denom = tape.constant(count_tensor(&denom)?);
    let sparse = tape.constant(target.sparse.clone());
    let smask = tape.constant(target.sparse_mask.clone());
    let diff = tape.sub(z, sparse)?;
    let diff = tape.abs(diff);
    let diff = tape.mul(diff, smask)?;
    let s = tape.sum_axes(diff, &[1, 2, 3])?;
    let per_image = tape.div(s, denom)?;
    batch_mean(tape, per_image)
}

fn gradient_term(tape: &mut Tape, r: Var, gt_mask: &Tensor) -> Result<Var> {
    let [n, _, h, w] = gt_mask.dims4()?;
    if h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Shape(format!("gradient loss needs H, W divisible by 8, got {h}x{w}")));
    }
    let mut acc: Option<Var> = None;
    for k in 0..GRADIENT_LEVELS {
        let mk = majority_downsample(gt_mask, k)?;
        let counts: Vec<f64> = LossTarget::per_image_counts(&mk)?.into_iter().map(|c| c.max(1.0)).collect();
        let rk = tape.avg_downsample(r, k)?;
        let (gx, gy) = tape.sobel_grad(rk)?;
        let ax = tape.abs(gx);
        let ay = tape.abs(gy);
        let a = tape.add(ax, ay)?;
        let mkv = tape.constant(mk);
        let a = tape.mul(a, mkv)?;
        let s = tape.sum_axes(a, &[1, 2, 3])?;
        let cv = tape.constant(Tensor::new(&[n, 1, 1, 1], counts)?);
        let term = tape.div(s, cv)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    batch_mean(tape, acc.expect("at least one level"))
}

/// Build the full loss on `tape` for prediction `z`.
pub fn total_loss_vars(tape: &mut Tape, z: Var, target: &LossTarget) -> Result<LossVars> {
    let (r, _, _) = residual(tape, z, target)?;
    let abs_r = tape.abs(r);
    let s = tape.sum_axes(abs_r, &[1, 2, 3])?;
    let counts = tape.constant(count_tensor(&gt_counts(target)?)?);
    let per_image = tape.div(s, counts)?;
    let normalized = batch_mean(tape, per_image)?;
    let sparse = sparse_term(tape, z, target)?;
    let l_sa = tape.add(normalized, sparse)?;
    let l_sg = gradient_term(tape, r, &target.gt_mask)?;
    let weighted = tape.scale(l_sg, GRADIENT_WEIGHT);
    let total = tape.add(l_sa, weighted)?;
    Ok(LossVars { total, l_sa, normalized, sparse, l_sg })
}

/// Read the scalar values of [`LossVars`] off the tape.
pub fn breakdown(tape: &Tape, vars: &LossVars, target: &LossTarget) -> Result<LossBreakdown> {
    Ok(LossBreakdown {
        l_sa: tape.value(vars.l_sa).item()?,
        l_sg: tape.value(vars.l_sg).item()?,
        total: tape.value(vars.total).item()?,
        n_valid_gt: target.gt_mask.sum() as usize,
        n_valid_sparse: target.sparse_mask.sum() as usize,
    })
}

pub fn total_loss(z: &Tensor, target: &LossTarget) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let vars = total_loss_vars(&mut tape, zv, target)?;
    breakdown(&tape, &vars, target)
}

/// The two summands of the scale-adaptive term: (normalised, sparse).
pub fn scale_adaptive_terms(z: &Tensor, target: &LossTarget) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let (r, _, _) = residual(&mut tape, zv, target)?;
    let abs_r = tape.abs(r);
    let s = tape.sum_axes(abs_r, &[1, 2, 3])?;
    let counts = tape.constant(count_tensor(&gt_counts(target)?)?);
    let per_image = tape.div(s, counts)?;
    let normalized = batch_mean(&mut tape, per_image)?;
    let sparse = sparse_term(&mut tape, zv, target)?;
    Ok((tape.value(normalized).item()?, tape.value(sparse).item()?))
}

pub fn scale_adaptive_loss(z: &Tensor, target: &LossTarget) -> Result<f64> {
    let (a, b) = scale_adaptive_terms(z, target)?;
    Ok(a + b)
}

pub fn gradient_loss(z: &Tensor, gt: &Tensor, gt_mask: &Tensor) -> Result<f64> {
    let target = LossTarget::dense(gt.clone(), gt_mask.clone())?;
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let (r, _, _) = residual(&mut tape, zv, &target)?;
    let l = gradient_term(&mut tape, r, gt_mask)?;
    tape.value(l).item()
}

fn masked_pairs<'a>(z: &'a Tensor, gt: &'a Tensor, mask: &'a Tensor) -> Result<Vec<(f64, f64)>> {
    check_depth_map("prediction", z, gt.shape())?;
    check_depth_map("mask", mask, gt.shape())?;
    let pairs: Vec<(f64, f64)> = z
        .data()
        .iter()
        .zip(gt.data())
        .zip(mask.data())
        .filter(|(_, &m)| m != 0.0)
        .map(|((&a, &b), _)| (a, b))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyReduction("metric mask has no valid pixels".into()));
    }
    if let Some(&(_, g)) = pairs.iter().find(|(_, g)| *g <= 0.0) {
        return Err(Error::InvalidArgument(format!("ground truth {g} <= 0 under the mask")));
    }
    Ok(pairs)
}

/// Mean absolute relative error over masked pixels.
pub fn rel(z: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<f64> {
    let p = masked_pairs(z, gt, mask)?;
    let terms: Vec<f64> = p.iter().map(|(a, b)| (a - b).abs() / b).collect();
    Ok(crate::tensor::pairwise_sum(&terms) / p.len() as f64)
}

/// Root mean squared error over masked pixels.
pub fn rmse(z: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<f64> {
    let p = masked_pairs(z, gt, mask)?;
    let terms: Vec<f64> = p.iter().map(|(a, b)| (a - b) * (a - b)).collect();
    Ok((crate::tensor::pairwise_sum(&terms) / p.len() as f64).sqrt())
}

/// Average rank of each method (row) across metric columns. Ties share the mean of
/// their rank positions; `lower_better[j]` orders column `j`.
pub fn rank(table: &[Vec<f64>], lower_better: &[bool]) -> Result<Vec<f64>> {
    if table.len() < 2 {
        return Err(Error::InvalidArgument("ranking needs at least two methods".into()));
    }
    let cols = lower_better.len();
    if cols == 0 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("every row needs one score per column".into()));
    }
    if table.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN score in rank table".into()));
    }
    let m = table.len();
    let mut totals = vec![0.0; m];
    for (j, &low) in lower_better.iter().enumerate() {
        let key = |i: usize| if low { table[i][j] } else { -table[i][j] };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && key(order[end]) == key(order[start]) {
                end += 1;
            }
            let avg = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                totals[i] += avg;
            }
            start = end;
        }
    }
    Ok(totals.into_iter().map(|t| t / cols as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_many, Coords, DEFAULT_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn two_pixel_case() {
        let target = LossTarget::dense(t(&[1, 1, 1, 2], &[2.0, 2.0]), Tensor::ones(&[1, 1, 1, 2])).unwrap();
        let (norm, sparse) = scale_adaptive_terms(&t(&[1, 1, 1, 2], &[1.0, 3.0]), &target).unwrap();
        // T_z = (-1, 1) / (1 + 2e-6), T_gt = 0
        let expected = 1.0 / (1.0 + 2.0 * LOSS_EPS);
        assert!((norm - expected).abs() < 1e-12, "{norm}");
        assert!((norm - 1.0).abs() < 1e-5);
        assert_eq!(sparse, 0.0);
    }

    #[test]
    fn sparse_term_divides_by_count_plus_eps() {
        let gt = t(&[1, 1, 1, 2], &[2.0, 4.0]);
        let target = LossTarget::new(gt.clone(), Tensor::ones(&[1, 1, 1, 2]), gt, t(&[1, 1, 1, 2], &[1.0, 0.0])).unwrap();
        let (_, sparse) = scale_adaptive_terms(&t(&[1, 1, 1, 2], &[3.0, 6.0]), &target).unwrap();
        assert!((sparse - 1.0 / (1.0 + LOSS_EPS)).abs() < 1e-15);
    }

    /// Direct loop evaluation of the gradient term for one image.
    fn brute_gradient_loss(r: &[f64], mask: &[f64], h: usize, w: usize) -> f64 {
        let mut total = 0.0;
        for k in 0..4 {
            let f = 1 << k;
            let (ho, wo) = (h / f, w / f);
            let mut rk = vec![0.0; ho * wo];
            let mut mk = vec![0.0; ho * wo];
            for y in 0..ho {
                for x in 0..wo {
                    let (mut s, mut c) = (0.0, 0);
                    for dy in 0..f {
                        for dx in 0..f {
                            let i = (y * f + dy) * w + x * f + dx;
                            s += r[i] * mask[i];
                            c += mask[i] as usize;
                        }
                    }
                    rk[y * wo + x] = s / (f * f) as f64;
                    mk[y * wo + x] = if 2 * c > f * f { 1.0 } else { 0.0 };
                }
            }
            let at = |y: isize, x: isize| rk[y.clamp(0, ho as isize - 1) as usize * wo + x.clamp(0, wo as isize - 1) as usize];
            let (mut s, mut c) = (0.0, 0.0);
            for y in 0..ho as isize {
                for x in 0..wo as isize {
                    let gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2.0 * at(y, x - 1) - at(y + 1, x - 1);
                    let gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1) - at(y - 1, x - 1) - 2.0 * at(y - 1, x) - at(y - 1, x + 1);
                    let m = mk[y as usize * wo + x as usize];
                    s += m * (gx.abs() + gy.abs());
                    c += m;
                }
            }
            total += s / c.max(1.0);
        }
        total
    }

    fn t_stat(v: &[f64], mask: &[f64]) -> Vec<f64> {
        let n: f64 = mask.iter().sum();
        let mean = v.iter().zip(mask).map(|(a, m)| a * m).sum::<f64>() / n;
        let dev = v.iter().zip(mask).map(|(a, m)| (a - mean).abs() * m).sum::<f64>() / n;
        let mag = v.iter().zip(mask).map(|(a, m)| a.abs() * m).sum::<f64>() / n;
        v.iter().map(|a| (a - mean) / (dev + LOSS_EPS * mag + f64::MIN_POSITIVE)).collect()
    }

    #[test]
    fn ramp_case_matches_brute_force() {
        let (h, w) = (16, 16);
        // residual is an x-ramp after normalisation: gt constant-offset, z = ramp
        let z = Tensor::from_fn(&[1, 1, h, w], |i| 1.0 + (i % w) as f64);
        let gt = Tensor::full(&[1, 1, h, w], 3.0);
        let mask = Tensor::ones(&[1, 1, h, w]);
        let got = gradient_loss(&z, &gt, &mask).unwrap();
        let tz = t_stat(z.data(), mask.data());
        let tg = t_stat(gt.data(), mask.data());
        let r: Vec<f64> = tz.iter().zip(&tg).map(|(a, b)| a - b).collect();
        let want = brute_gradient_loss(&r, mask.data(), h, w);
        assert!((got - want).abs() < 1e-6 * want.max(1.0), "{got} vs {want}");

        // interior Sobel-x of the unit ramp is 8: at k=0 the per-pixel slope of r is 1/dev
        let dev = 4.0; // mean |x - 7.5| over x = 0..15
        let interior = 8.0 / (dev + LOSS_EPS * 8.5);
        let gx = r[5 * w + 6] - r[5 * w + 4];
        assert!((gx * 4.0 - interior).abs() < 1e-9);
    }

    #[test]
    fn ramp_with_holes_matches_brute_force() {
        let (h, w) = (16, 24);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Tensor::uniform(&[1, 1, h, w], 0.5, 5.0, &mut rng);
        let gt = Tensor::from_fn(&[1, 1, h, w], |i| 1.0 + 0.1 * (i / w) as f64);
        let mask = Tensor::from_fn(&[1, 1, h, w], |i| if (i * 7) % 5 == 0 { 0.0 } else { 1.0 });
        let got = gradient_loss(&z, &gt, &mask).unwrap();
        let tz = t_stat(z.data(), mask.data());
        let tg = t_stat(gt.data(), mask.data());
        let r: Vec<f64> = tz.iter().zip(&tg).map(|(a, b)| a - b).collect();
        let want = brute_gradient_loss(&r, mask.data(), h, w);
        assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
    }

    fn random_target(seed: u64, n: usize, h: usize, w: usize) -> (Tensor, LossTarget) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = Tensor::uniform(&[n, 1, h, w], 0.5, 10.0, &mut rng);
        let gt_mask = Tensor::from_fn(&[n, 1, h, w], |i| if i % 11 == 3 { 0.0 } else { 1.0 });
        let sparse_mask = Tensor::from_fn(&[n, 1, h, w], |i| if i % 5 == 0 && i % 11 != 3 { 1.0 } else { 0.0 });
        let sparse = gt.zip_map(&sparse_mask, |g, m| g * m).unwrap();
        let z = Tensor::uniform(&[n, 1, h, w], 0.5, 10.0, &mut rng);
        (z, LossTarget::new(gt, gt_mask, sparse, sparse_mask).unwrap())
    }

    #[test]
    fn perfect_prediction_is_zero_and_total_is_weighted_sum() {
        let (z, target) = random_target(2, 2, 16, 16);
        let l = total_loss(&target.gt, &target).unwrap();
        assert_eq!(l.total, 0.0);
        let l = total_loss(&z, &target).unwrap();
        assert!(l.total > 0.0 && l.l_sa > 0.0 && l.l_sg > 0.0);
        assert_eq!(l.total, l.l_sa + 0.5 * l.l_sg);
        assert_eq!(l.n_valid_gt, target.gt_mask.sum() as usize);
    }

    #[test]
    fn joint_rescaling_invariance() {
        let (z, target) = random_target(3, 2, 16, 16);
        let base_norm = scale_adaptive_terms(&z, &target).unwrap();
        let base_sg = gradient_loss(&z, &target.gt, &target.gt_mask).unwrap();
        for s in [0.01, 0.5, 3.0, 1000.0] {
            let scaled = LossTarget::new(target.gt.scale(s), target.gt_mask.clone(), target.sparse.scale(s), target.sparse_mask.clone()).unwrap();
            let (n, sp) = scale_adaptive_terms(&z.scale(s), &scaled).unwrap();
            assert!((n - base_norm.0).abs() <= 1e-9 * base_norm.0);
            assert!((sp - s * base_norm.1).abs() <= 1e-9 * s * base_norm.1);
            let sg = gradient_loss(&z.scale(s), &scaled.gt, &scaled.gt_mask).unwrap();
            assert!((sg - base_sg).abs() <= 1e-9 * base_sg);
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (z, target) = random_target(4, 1, 16, 16);
        let r = check_many(
            |tape, v| Ok(total_loss_vars(tape, v[0], &target)?.total),
            &[z],
            DEFAULT_STEP,
            Coords::Sample { count: 10, seed: 7 },
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn degenerate_inputs() {
        let gt = Tensor::full(&[1, 1, 8, 8], 2.0);
        let mask = Tensor::ones(&[1, 1, 8, 8]);
        let target = LossTarget::dense(gt.clone(), mask.clone()).unwrap();
        let l = total_loss(&gt, &target).unwrap();
        assert_eq!(l.total, 0.0);
        let empty = LossTarget::dense(gt.clone(), Tensor::zeros(&[1, 1, 8, 8])).unwrap();
        assert!(matches!(total_loss(&gt, &empty), Err(Error::EmptyReduction(_))));
        let odd = LossTarget::dense(Tensor::ones(&[1, 1, 12, 12]), Tensor::ones(&[1, 1, 12, 12])).unwrap();
        assert!(matches!(total_loss(&Tensor::ones(&[1, 1, 12, 12]), &odd), Err(Error::Shape(_))));
        assert!(LossTarget::dense(gt, Tensor::full(&[1, 1, 8, 8], 0.5)).is_err());
    }

    #[test]
    fn metrics() {
        let m = Tensor::ones(&[1, 1, 1, 2]);
        let (z, gt) = (t(&[1, 1, 1, 2], &[2.0, 4.0]), t(&[1, 1, 1, 2], &[1.0, 4.0]));
        assert!((rel(&z, &gt, &m).unwrap() - 0.5).abs() < 1e-15);
        assert!((rmse(&z, &gt, &m).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rel(&gt, &gt, &m).unwrap(), 0.0);
        assert_eq!(rmse(&gt, &gt, &m).unwrap(), 0.0);
        let one = Tensor::ones(&[1, 1, 1, 1]);
        assert_eq!(rel(&t(&[1, 1, 1, 1], &[3.0]), &t(&[1, 1, 1, 1], &[2.0]), &one).unwrap(), 0.5);
        assert_eq!(rmse(&t(&[1, 1, 1, 1], &[3.0]), &t(&[1, 1, 1, 1], &[2.0]), &one).unwrap(), 1.0);
        assert!(rel(&z, &t(&[1, 1, 1, 2], &[0.0, 4.0]), &m).is_err());
        // gt <= 0 outside the mask is fine
        assert!(rel(&z, &t(&[1, 1, 1, 2], &[0.0, 4.0]), &t(&[1, 1, 1, 2], &[0.0, 1.0])).is_ok());
    }

    #[test]
    fn ranks() {
        assert_eq!(rank(&[vec![1.0], vec![2.0], vec![3.0]], &[true]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank(&[vec![1.0], vec![1.0], vec![2.0]], &[true]).unwrap(), vec![1.5, 1.5, 3.0]);
        let r = rank(&[vec![0.1, 5.0], vec![0.2, 6.0]], &[true, true]).unwrap();
        assert_eq!(r[0], 1.0);
        let r = rank(&[vec![0.9], vec![0.5]], &[false]).unwrap();
        assert_eq!(r, vec![1.0, 2.0]);
        assert!(rank(&[vec![1.0]], &[true]).is_err());
    }
}
