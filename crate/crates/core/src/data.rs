//! Synthetic depth-completion scenes, sparsity patterns and augmentations.

use crate::error::{Error, Result};
use crate::objective::LossTarget;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const Z_MIN: f64 = 0.5;
pub const Z_MAX: f64 = 10.0;
const IMAGE_NOISE: f64 = 0.01;

/// One scene. Rasters are `[C,H,W]`; masks hold 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthSample {
    pub image: Tensor,
    pub gt: Tensor,
    pub sparse: Tensor,
    pub gt_mask: Tensor,
    pub sparse_mask: Tensor,
    /// Product of all depth-scaling factors applied since generation.
    pub scene_scale: f64,
}

impl DepthSample {
    pub fn height(&self) -> usize {
        self.gt.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.gt.shape()[2]
    }

    pub fn n_sparse(&self) -> usize {
        self.sparse_mask.data().iter().filter(|&&m| m != 0.0).count()
    }
}

/// Mix `seed` with a tag and index into an independent seed (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0xA24B_AED4_963E_E407) ^ index.wrapping_mul(0x9FB2_1C65_1E98_DF25);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Shape {
    Plane { inv0: f64, gu: f64, gv: f64 },
    Sphere { cu: f64, cv: f64, radius: f64, z: f64 },
    Box { u0: f64, u1: f64, v0: f64, v1: f64, z: f64, su: f64, sv: f64 },
}

impl Shape {
    /// Depth at normalised image coordinates, if the shape covers the pixel.
    fn depth(&self, u: f64, v: f64) -> Option<f64> {
        match *self {
            Shape::Plane { inv0, gu, gv } => Some(1.0 / (inv0 + gu * (u - 0.5) + gv * (v - 0.5)).max(1e-3)),
            Shape::Sphere { cu, cv, radius, z } => {
                let d2 = ((u - cu).powi(2) + (v - cv).powi(2)) / (radius * radius);
                (d2 < 1.0).then(|| z - radius * z * (1.0 - d2).sqrt())
            }
            Shape::Box { u0, u1, v0, v1, z, su, sv } => {
                (u >= u0 && u < u1 && v >= v0 && v < v1).then_some(z + su * (u - 0.5 * (u0 + u1)) + sv * (v - 0.5 * (v0 + v1)))
            }
        }
    }
}

/// Render a synthetic scene: a tilted background plane and 3 to 8 boxes or spheres,
/// Lambertian-shaded with per-object albedo plus N(0, 0.01) pixel noise.
pub fn gen_scene(seed: u64, height: usize, width: usize, z_min: f64, z_max: f64) -> Result<DepthSample> {
    if !height.is_multiple_of(32) || !width.is_multiple_of(32) || height == 0 || width == 0 {
        return Err(Error::Shape(format!("scene size {height}x{width} must be divisible by 32")));
    }
    if !(z_min > 0.0 && z_max > z_min) {
        return Err(Error::InvalidArgument(format!("bad depth range [{z_min}, {z_max}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = z_max - z_min;
    let far = z_min + span * rng.random_range(0.5..0.9);
    let mut shapes = vec![Shape::Plane {
        inv0: 1.0 / far,
        gu: rng.random_range(-0.05..0.05) / far,
        gv: rng.random_range(0.0..0.6) / far,
    }];
    let objects = rng.random_range(3..=8);
    for _ in 0..objects {
        let z = z_min + span * rng.random_range(0.05..0.6);
        if rng.random_bool(0.5) {
            shapes.push(Shape::Sphere {
                cu: rng.random_range(0.1..0.9),
                cv: rng.random_range(0.1..0.9),
                radius: rng.random_range(0.06..0.22),
                z,
            });
        } else {
            let (cu, cv) = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
            let (hu, hv) = (rng.random_range(0.05..0.2), rng.random_range(0.05..0.2));
            shapes.push(Shape::Box {
                u0: cu - hu,
                u1: cu + hu,
                v0: cv - hv,
                v1: cv + hv,
                z,
                su: rng.random_range(-1.0..1.0),
                sv: rng.random_range(-1.0..1.0),
            });
        }
    }
    let albedo: Vec<[f64; 3]> = shapes
        .iter()
        .map(|_| [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)])
        .collect();
    let light = {
        let (lx, ly) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let n = (lx * lx + ly * ly + 1.0f64).sqrt();
        [lx / n, ly / n, -1.0 / n]
    };

    let (h, w) = (height, width);
    let mut depth = vec![0.0; h * w];
    let mut owner = vec![0usize; h * w];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = ((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64);
            let mut best = (f64::INFINITY, 0);
            for (i, s) in shapes.iter().enumerate() {
                if let Some(d) = s.depth(u, v) {
                    if d < best.0 {
                        best = (d, i);
                    }
                }
            }
            depth[y * w + x] = best.0.clamp(z_min, z_max);
            owner[y * w + x] = best.1;
        }
    }

    // back-project with a pinhole of focal length `w` and take normals from finite differences
    let focal = w as f64;
    let point = |y: usize, x: usize| {
        let z = depth[y * w + x];
        [(x as f64 + 0.5 - 0.5 * w as f64) * z / focal, (y as f64 + 0.5 - 0.5 * h as f64) * z / focal, z]
    };
    let noise = Normal::new(0.0, IMAGE_NOISE).expect("finite std");
    let mut image = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let (xa, xb) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (ya, yb) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let (pa, pb, qa, qb) = (point(y, xa), point(y, xb), point(ya, x), point(yb, x));
            let du = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
            let dv = [qb[0] - qa[0], qb[1] - qa[1], qb[2] - qa[2]];
            let mut n = [du[1] * dv[2] - du[2] * dv[1], du[2] * dv[0] - du[0] * dv[2], du[0] * dv[1] - du[1] * dv[0]];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-12);
            n.iter_mut().for_each(|c| *c /= norm);
            let lambert = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).abs();
            let shade = 0.25 + 0.75 * lambert;
            let a = albedo[owner[y * w + x]];
            for c in 0..3 {
                image[c * h * w + y * w + x] = (a[c] * shade + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }

    let gt = Tensor::new(&[1, h, w], depth)?;
    Ok(DepthSample {
        image: Tensor::new(&[3, h, w], image)?,
        sparse: gt.clone(),
        gt,
        gt_mask: Tensor::ones(&[1, h, w]),
        sparse_mask: Tensor::ones(&[1, h, w]),
        scene_scale: 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SparsifySpec {
    /// Keep each valid pixel with probability `ratio`.
    RandomRatio { ratio: f64 },
    /// `lines` equally spaced scan rows with one-pixel jitter, every 4th column.
    Lines { lines: usize },
    /// Dense depth with 2 to 5 elliptical holes covering about `area_frac`.
    Holes { area_frac: f64 },
}

impl SparsifySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SparsifySpec::RandomRatio { ratio } if !(ratio > 0.0 && ratio <= 1.0) => {
                Err(Error::InvalidArgument(format!("ratio {ratio} outside (0, 1]")))
            }
            SparsifySpec::Lines { lines: 0 } => Err(Error::InvalidArgument("need at least one line".into())),
            SparsifySpec::Holes { area_frac } if !(0.0..1.0).contains(&area_frac) => {
                Err(Error::InvalidArgument(format!("hole area {area_frac} outside [0, 1)")))
            }
            _ => Ok(()),
        }
    }
}

/// Replace the sparse input by a subset of the ground truth.
pub fn sparsify(sample: &DepthSample, spec: SparsifySpec, seed: u64) -> Result<DepthSample> {
    spec.validate()?;
    let (h, w) = (sample.height(), sample.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; h * w];
    match spec {
        SparsifySpec::RandomRatio { ratio } => {
            for k in keep.iter_mut() {
                *k = rng.random_bool(ratio);
            }
        }
        SparsifySpec::Lines { lines } => {
            let offset = rng.random_range(0..4);
            for i in 0..lines {
                let base = ((i as f64 + 0.5) * h as f64 / lines as f64).floor() as isize;
                for x in (offset..w).step_by(4) {
                    let y = (base + rng.random_range(-1i64..=1) as isize).clamp(0, h as isize - 1) as usize;
                    keep[y * w + x] = true;
                }
            }
        }
        SparsifySpec::Holes { area_frac } => {
            keep.fill(true);
            let count = rng.random_range(2..=5);
            let each = area_frac * (h * w) as f64 / count as f64;
            for _ in 0..count {
                let aspect: f64 = rng.random_range(0.5..2.0);
                let a = (each * aspect / std::f64::consts::PI).sqrt();
                let b = each / (std::f64::consts::PI * a.max(1e-12));
                let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
                for y in 0..h {
                    for x in 0..w {
                        let (dx, dy) = ((x as f64 + 0.5 - cx) / a.max(1e-12), (y as f64 + 0.5 - cy) / b.max(1e-12));
                        if dx * dx + dy * dy < 1.0 {
                            keep[y * w + x] = false;
                        }
                    }
                }
            }
        }
    }
    let gt_mask = sample.gt_mask.data();
    let mask: Vec<f64> = keep.iter().zip(gt_mask).map(|(&k, &m)| if k && m != 0.0 { 1.0 } else { 0.0 }).collect();
    if mask.iter().all(|&m| m == 0.0) {
        return Err(Error::EmptyReduction(format!("{spec:?} kept no valid pixels")));
    }
    let sparse: Vec<f64> = sample.gt.data().iter().zip(&mask).map(|(&g, &m)| g * m).collect();
    Ok(DepthSample {
        sparse: Tensor::new(&[1, h, w], sparse)?,
        sparse_mask: Tensor::new(&[1, h, w], mask)?,
        ..sample.clone()
    })
}

/// Crop window in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

fn nearest(src: &Tensor, win: CropWindow, h: usize, w: usize) -> Result<Tensor> {
    let c = src.shape()[0];
    let (sh, sw) = (src.shape()[1], src.shape()[2]);
    let d = src.data();
    Ok(Tensor::from_fn(&[c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        let sy = win.top + (((y as f64 + 0.5) * win.height as f64 / h as f64).floor() as usize).min(win.height - 1);
        let sx = win.left + (((x as f64 + 0.5) * win.width as f64 / w as f64).floor() as usize).min(win.width - 1);
        d[ch * sh * sw + sy * sw + sx]
    }))
}

fn bilinear(src: &Tensor, win: CropWindow, h: usize, w: usize) -> Result<Tensor> {
    let c = src.shape()[0];
    let (sh, sw) = (src.shape()[1], src.shape()[2]);
    let d = src.data();
    let coord = |o: usize, out: usize, len: usize| {
        let p = ((o as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        (i0, (i0 + 1).min(len - 1), p - i0 as f64)
    };
    Ok(Tensor::from_fn(&[c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        let (y0, y1, fy) = coord(y, h, win.height);
        let (x0, x1, fx) = coord(x, w, win.width);
        let at = |yy: usize, xx: usize| d[ch * sh * sw + (win.top + yy) * sw + win.left + xx];
        (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
    }))
}

/// Crop `win` and resize back to the sample's size. Depth values are never
/// interpolated, so objects change apparent size at unchanged depth.
pub fn crop_resize(sample: &DepthSample, win: CropWindow) -> Result<DepthSample> {
    let (h, w) = (sample.height(), sample.width());
    if win.height == 0 || win.width == 0 || win.top + win.height > h || win.left + win.width > w {
        return Err(Error::InvalidArgument(format!("crop {win:?} outside {h}x{w}")));
    }
    Ok(DepthSample {
        image: bilinear(&sample.image, win, h, w)?,
        gt: nearest(&sample.gt, win, h, w)?,
        sparse: nearest(&sample.sparse, win, h, w)?,
        gt_mask: nearest(&sample.gt_mask, win, h, w)?,
        sparse_mask: nearest(&sample.sparse_mask, win, h, w)?,
        scene_scale: sample.scene_scale,
    })
}

/// Random crop with area fraction in [0.64, 1] and the original aspect ratio.
pub fn resized_crop(sample: &DepthSample, seed: u64) -> Result<DepthSample> {
    let (h, w) = (sample.height(), sample.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(0.64f64..=1.0).sqrt();
    let ch = ((h as f64 * side).round() as usize).clamp(1, h);
    let cw = ((w as f64 * side).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    crop_resize(sample, CropWindow { top, left, height: ch, width: cw })
}

/// Scale ground truth and sparse depth by a factor drawn from [0.8, 1.2].
pub fn depth_scaling(sample: &DepthSample, seed: u64) -> DepthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.random_range(0.8..=1.2);
    DepthSample {
        gt: sample.gt.scale(s),
        sparse: sample.sparse.scale(s),
        scene_scale: sample.scene_scale * s,
        ..sample.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augmentation {
    ResizedCrop,
    DepthScaling,
}

/// One dataset entry; a manifest is a JSON array of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub sparsify: SparsifySpec,
    #[serde(default)]
    pub augmentations: Vec<Augmentation>,
}

const TAG_SPARSIFY: u64 = 1;
const TAG_CROP: u64 = 2;
const TAG_SCALE: u64 = 3;
const TAG_ENTRY: u64 = 4;

impl ManifestEntry {
    /// Generate, sparsify, then apply each augmentation with its own derived seed.
    pub fn materialize(&self) -> Result<DepthSample> {
        let scene = gen_scene(self.seed, self.height, self.width, Z_MIN, Z_MAX)?;
        let mut s = sparsify(&scene, self.sparsify, derive_seed(self.seed, TAG_SPARSIFY, 0))?;
        for aug in &self.augmentations {
            s = match aug {
                Augmentation::ResizedCrop => resized_crop(&s, derive_seed(self.seed, TAG_CROP, 0))?,
                Augmentation::DepthScaling => depth_scaling(&s, derive_seed(self.seed, TAG_SCALE, 0)),
            };
        }
        Ok(s)
    }
}

/// `count` entries whose scene seeds are derived from `seed`.
pub fn build_manifest(
    seed: u64,
    count: usize,
    height: usize,
    width: usize,
    sparsify: SparsifySpec,
    augmentations: &[Augmentation],
) -> Vec<ManifestEntry> {
    (0..count as u64)
        .map(|i| ManifestEntry {
            seed: derive_seed(seed, TAG_ENTRY, i),
            height,
            width,
            sparsify,
            augmentations: augmentations.to_vec(),
        })
        .collect()
}

pub fn materialize_all(entries: &[ManifestEntry]) -> Result<Vec<DepthSample>> {
    entries.par_iter().map(ManifestEntry::materialize).collect()
}

pub fn save_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(entries)?)?;
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Network inputs and loss target of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub image: Tensor,
    pub sparse: Tensor,
    pub target: LossTarget,
}

pub fn collate(samples: &[DepthSample]) -> Result<Batch> {
    let stack = |f: fn(&DepthSample) -> &Tensor| Tensor::stack(&samples.iter().map(|s| f(s).clone()).collect::<Vec<_>>());
    Ok(Batch {
        image: stack(|s| &s.image)?,
        sparse: stack(|s| &s.sparse)?,
        target: LossTarget::new(stack(|s| &s.gt)?, stack(|s| &s.gt_mask)?, stack(|s| &s.sparse)?, stack(|s| &s.sparse_mask)?)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(seed: u64) -> DepthSample {
        gen_scene(seed, 64, 64, Z_MIN, Z_MAX).unwrap()
    }

    #[test]
    fn scenes_are_deterministic_bounded_and_distinct() {
        let a = scene(1);
        assert_eq!(a, scene(1));
        assert!(a.gt.data().iter().all(|&z| (Z_MIN..=Z_MAX).contains(&z)));
        assert!(a.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let b = scene(2);
        let differ = a.gt.data().iter().zip(b.gt.data()).filter(|(x, y)| x != y).count();
        assert!(differ as f64 >= 0.01 * a.gt.numel() as f64);
        assert!(gen_scene(1, 48, 64, Z_MIN, Z_MAX).is_err());
    }

    fn assert_subset(s: &DepthSample) {
        for ((&sp, &m), (&g, &gm)) in s.sparse.data().iter().zip(s.sparse_mask.data()).zip(s.gt.data().iter().zip(s.gt_mask.data())) {
            if m != 0.0 {
                assert_eq!(sp, g);
                assert_eq!(gm, 1.0);
            } else {
                assert_eq!(sp, 0.0);
            }
        }
    }

    #[test]
    fn random_ratio() {
        let s = scene(3);
        let full = sparsify(&s, SparsifySpec::RandomRatio { ratio: 1.0 }, 0).unwrap();
        assert_eq!(full.sparse, full.gt);
        assert_eq!(full.sparse_mask, full.gt_mask);
        let big = gen_scene(4, 320, 320, Z_MIN, Z_MAX).unwrap();
        let sp = sparsify(&big, SparsifySpec::RandomRatio { ratio: 0.01 }, 9).unwrap();
        let sigma = (102400.0f64 * 0.01 * 0.99).sqrt();
        assert!((sp.n_sparse() as f64 - 1024.0).abs() < 4.0 * sigma, "{}", sp.n_sparse());
        assert_subset(&sp);
        assert!(sparsify(&s, SparsifySpec::RandomRatio { ratio: 0.0 }, 0).is_err());
    }

    #[test]
    fn lines_and_holes() {
        let s = scene(5);
        let l = sparsify(&s, SparsifySpec::Lines { lines: 4 }, 1).unwrap();
        assert_subset(&l);
        let rows: Vec<usize> = (0..64).filter(|y| (0..64).any(|x| l.sparse_mask.data()[y * 64 + x] != 0.0)).collect();
        let bands = rows.windows(2).filter(|p| p[1] > p[0] + 2).count() + 1;
        assert_eq!(bands, 4);
        let cols: Vec<usize> = (0..64).filter(|x| (0..64).any(|y| l.sparse_mask.data()[y * 64 + x] != 0.0)).collect();
        assert!(cols.windows(2).all(|p| p[1] - p[0] == 4));

        let hsp = sparsify(&s, SparsifySpec::Holes { area_frac: 0.2 }, 2).unwrap();
        assert_subset(&hsp);
        let removed = 1.0 - hsp.n_sparse() as f64 / 4096.0;
        assert!(removed > 0.05 && removed <= 0.25, "{removed}");
    }

    #[test]
    fn crop_keeps_size_and_depth_values() {
        let s = sparsify(&scene(6), SparsifySpec::RandomRatio { ratio: 0.3 }, 1).unwrap();
        let c = resized_crop(&s, 3).unwrap();
        assert_eq!(c.image.shape(), s.image.shape());
        assert_eq!(c.gt.shape(), s.gt.shape());
        let (lo, hi) = s.gt.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(c.gt.data().iter().all(|&v| v >= lo && v <= hi));
        assert!(c.gt.data().iter().all(|v| s.gt.data().contains(v)));
        assert_subset(&c);
    }

    #[test]
    fn forced_left_half_crop_drops_right_half() {
        let mut s = scene(7);
        // mark the right half with a depth that never occurs on the left
        for y in 0..64 {
            for x in 32..64 {
                s.gt.data_mut()[y * 64 + x] = 123.0;
            }
        }
        let c = crop_resize(&s, CropWindow { top: 0, left: 0, height: 64, width: 32 }).unwrap();
        assert!(c.gt.data().iter().all(|&v| v != 123.0));
    }

    #[test]
    fn depth_scaling_contract() {
        let s = sparsify(&scene(8), SparsifySpec::RandomRatio { ratio: 0.1 }, 1).unwrap();
        let d = depth_scaling(&s, 4);
        assert_eq!(d.image, s.image);
        let f = d.scene_scale;
        assert!((0.8..=1.2).contains(&f));
        for ((&a, &b), &m) in d.sparse.data().iter().zip(d.gt.data()).zip(d.sparse_mask.data()) {
            if m != 0.0 {
                assert_eq!(a, b);
            }
        }
        let tiny = DepthSample {
            image: Tensor::zeros(&[3, 1, 1]),
            gt: Tensor::ones(&[1, 1, 1]),
            sparse: Tensor::ones(&[1, 1, 1]),
            gt_mask: Tensor::ones(&[1, 1, 1]),
            sparse_mask: Tensor::ones(&[1, 1, 1]),
            scene_scale: 1.0,
        };
        let draws: Vec<f64> = (0..10_000).map(|i| depth_scaling(&tiny, i).scene_scale).collect();
        assert!(draws.iter().all(|s| (0.8..=1.2).contains(s)));
        let mean = draws.iter().sum::<f64>() / 1e4;
        let sigma = 0.4 / 12f64.sqrt() / 100.0;
        assert!((mean - 1.0).abs() < 4.0 * sigma);
    }

    #[test]
    fn manifest_roundtrip_and_collate() {
        let m = build_manifest(11, 3, 32, 32, SparsifySpec::Lines { lines: 8 }, &[Augmentation::ResizedCrop, Augmentation::DepthScaling]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_manifest(&p, &m).unwrap();
        assert_eq!(load_manifest(&p).unwrap(), m);
        let samples = materialize_all(&m).unwrap();
        assert_eq!(samples, materialize_all(&m).unwrap());
        let b = collate(&samples).unwrap();
        assert_eq!(b.image.shape(), &[3, 3, 32, 32]);
        assert_eq!(b.target.gt.shape(), &[3, 1, 32, 32]);
        let json = serde_json::to_value(&m[0]).unwrap();
        assert_eq!(json["sparsify"]["kind"], "lines");
        assert_eq!(json["augmentations"][1], "depth-scaling");
    }
}
