//! The SPNet encoder-decoder for depth completion.
//!
//! Layout at resolutions `1, 1/2, 1/4, 1/8, 1/16, 1/32` (channel index `r = 0..6`):
//!
//! * stem: 3x3 conv `in -> c0` followed by a norm layer, giving `e0`
//! * five downsampling layers (norm + 2x2 stride-2 conv); the first yields `e1`
//! * four encoder stages at `1/4 .. 1/32` yielding `e2 .. e5`
//! * decoder: the 1/32 features plus a projection of the stage-4 input, then five
//!   2x2 transposed convs back to full resolution; skips from `e4, e2, e1, e0` are
//!   fused by a 1x1 projection and addition, with one basic block after fusion at
//!   1/16, 1/4 and 1/2
//! * head: 3x3 conv `c0 -> 1`
//!
//! No convolution has a bias, so with SP-Norm the whole network is positively
//! 1-homogeneous in its input.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::norm::{BatchStats, Mode, NormKind, NormLayer};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub channels: usize,
    pub dw_kernel: usize,
    pub expansion: usize,
    pub norm_kind: NormKind,
    pub activation: Activation,
    pub use_grn: bool,
}

impl BlockConfig {
    /// The SPNet block: SP-Norm, ReLU, no GRN, 7x7 depthwise, 4x expansion.
    pub fn spnet(channels: usize) -> Self {
        Self {
            channels,
            dw_kernel: 7,
            expansion: 4,
            norm_kind: NormKind::SpNorm,
            activation: Activation::Relu,
            use_grn: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dw_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("depthwise kernel {} must be odd", self.dw_kernel)));
        }
        if self.expansion == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument("channels and expansion must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub stage_blocks: [usize; 4],
    pub res_channels: [usize; 6],
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    #[serde(default = "default_norm")]
    pub norm_kind: NormKind,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub use_grn: bool,
    #[serde(default = "default_dw_kernel")]
    pub dw_kernel: usize,
}

fn default_in_channels() -> usize {
    4
}
fn default_norm() -> NormKind {
    NormKind::SpNorm
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_dw_kernel() -> usize {
    7
}

impl ModelConfig {
    fn preset(name: &str, stage_blocks: [usize; 4], res_channels: [usize; 6]) -> Self {
        Self {
            name: name.to_string(),
            stage_blocks,
            res_channels,
            in_channels: 4,
            norm_kind: NormKind::SpNorm,
            activation: Activation::Relu,
            use_grn: false,
            dw_kernel: 7,
        }
    }

    pub fn tiny() -> Self {
        Self::preset("tiny", [3, 3, 9, 3], [24, 48, 96, 192, 384, 768])
    }

    pub fn small() -> Self {
        Self::preset("small", [3, 3, 27, 3], [24, 48, 96, 192, 384, 768])
    }

    pub fn base() -> Self {
        Self::preset("base", [3, 3, 27, 3], [32, 64, 128, 256, 512, 1024])
    }

    pub fn large() -> Self {
        Self::preset("large", [3, 3, 27, 3], [48, 96, 192, 384, 768, 1536])
    }

    /// Desk-scale configuration for tests and toy training.
    pub fn micro() -> Self {
        Self::preset("micro", [1, 1, 2, 1], [8, 16, 32, 64, 128, 256])
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "small" => Ok(Self::small()),
            "base" => Ok(Self::base()),
            "large" => Ok(Self::large()),
            "micro" => Ok(Self::micro()),
            other => Err(Error::InvalidArgument(format!("unknown model config {other:?}"))),
        }
    }

    pub fn with_norm(mut self, kind: NormKind) -> Self {
        self.norm_kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_blocks.contains(&0) {
            return Err(Error::InvalidArgument("every stage needs at least one block".into()));
        }
        if self.res_channels.windows(2).any(|w| w[0] >= w[1]) || self.res_channels[0] == 0 {
            return Err(Error::InvalidArgument("resolution channels must be strictly increasing".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::InvalidArgument("need at least one input channel".into()));
        }
        self.block(1).validate()
    }

    pub fn block(&self, channels: usize) -> BlockConfig {
        BlockConfig {
            channels,
            dw_kernel: self.dw_kernel,
            expansion: 4,
            norm_kind: self.norm_kind,
            activation: self.activation,
            use_grn: self.use_grn,
        }
    }
}

/// Depthwise conv, norm, pointwise expansion, activation, optional GRN, pointwise
/// projection and a residual connection.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub config: BlockConfig,
    pub dw: ParamId,
    pub norm: usize,
    pub pw_expand: ParamId,
    pub grn: Option<usize>,
    pub pw_project: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Down {
    norm: usize,
    conv: ParamId,
}

/// Parameters and layer wiring of an SPNet instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SpNetModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    /// Every norm layer, including the GRNs inside blocks.
    pub norms: Vec<NormLayer>,
    stem: ParamId,
    stem_norm: usize,
    downs: Vec<Down>,
    stages: Vec<Vec<Block>>,
    /// Skip projections at resolutions 1, 1/2, 1/4, 1/16, 1/32.
    skips: [ParamId; 5],
    /// Transposed convs, `ups[r]` maps resolution `r + 1` to `r`.
    ups: Vec<ParamId>,
    /// Decoder blocks at 1/16, 1/4, 1/2.
    decoder: [Block; 3],
    head: ParamId,
}

/// Output of a forward pass.
pub struct ForwardOutput {
    pub depth: Var,
    /// Batch statistics of each batch-norm layer, keyed by norm index.
    pub batch_stats: Vec<(usize, BatchStats)>,
}

struct Builder {
    store: ParamStore,
    norms: Vec<NormLayer>,
}

impl Builder {
    fn conv(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.store.register(name, shape, Init::xavier_for(shape), true)
    }

    fn norm(&mut self, kind: NormKind, channels: usize, name: &str) -> usize {
        self.norms.push(NormLayer::new(kind, channels, &mut self.store, name));
        self.norms.len() - 1
    }

    fn block(&mut self, cfg: &BlockConfig, name: &str) -> Block {
        let c = cfg.channels;
        let k = cfg.dw_kernel;
        let hidden = cfg.expansion * c;
        let dw = self.conv(&format!("{name}.dw"), &[c, 1, k, k]);
        let norm = self.norm(cfg.norm_kind, c, &format!("{name}.norm"));
        let pw_expand = self.conv(&format!("{name}.pw1"), &[hidden, c]);
        let grn = cfg.use_grn.then(|| self.norm(NormKind::Grn, hidden, &format!("{name}.grn")));
        let pw_project = self.conv(&format!("{name}.pw2"), &[c, hidden]);
        Block { config: cfg.clone(), dw, norm, pw_expand, grn, pw_project }
    }
}

/// A standalone basic block with its own parameter store.
pub fn build_block(cfg: &BlockConfig, seed: u64) -> Result<(Block, Vec<NormLayer>, ParamStore)> {
    cfg.validate()?;
    let mut b = Builder { store: ParamStore::new(), norms: Vec::new() };
    let block = b.block(cfg, "block");
    b.store.init(seed);
    Ok((block, b.norms, b.store))
}

impl Block {
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        bound: &Bound,
        norms: &[NormLayer],
        mode: Mode,
        stats: &mut Vec<(usize, BatchStats)>,
    ) -> Result<Var> {
        let pad = (self.config.dw_kernel - 1) / 2;
        let mut y = tape.depthwise_conv2d(x, bound.var(self.dw), pad)?;
        y = run_norm(tape, y, bound, norms, self.norm, mode, stats)?;
        y = tape.linear_channels(y, bound.var(self.pw_expand), None)?;
        y = match self.config.activation {
            Activation::Relu => tape.relu(y),
            Activation::Gelu => tape.gelu(y),
        };
        if let Some(g) = self.grn {
            y = run_norm(tape, y, bound, norms, g, mode, stats)?;
        }
        y = tape.linear_channels(y, bound.var(self.pw_project), None)?;
        tape.add(x, y)
    }
}

fn run_norm(
    tape: &mut Tape,
    x: Var,
    bound: &Bound,
    norms: &[NormLayer],
    idx: usize,
    mode: Mode,
    stats: &mut Vec<(usize, BatchStats)>,
) -> Result<Var> {
    let (y, s) = norms[idx].forward(tape, x, bound, mode)?;
    if let Some(s) = s {
        stats.push((idx, s));
    }
    Ok(y)
}

impl SpNetModel {
    /// Build the network and initialise it with Xavier Normal weights from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::build(config)?;
        model.xavier_init(seed);
        Ok(model)
    }

    /// Build the network with Xavier entries left at zero.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let ch = config.res_channels;
        let kind = config.norm_kind;
        let mut b = Builder { store: ParamStore::new(), norms: Vec::new() };

        let stem = b.conv("stem.conv", &[ch[0], config.in_channels, 3, 3]);
        let stem_norm = b.norm(kind, ch[0], "stem.norm");
        let mut downs = Vec::new();
        let mut stages = Vec::new();
        for r in 0..5 {
            let norm = b.norm(kind, ch[r], &format!("down{r}.norm"));
            let conv = b.conv(&format!("down{r}.conv"), &[ch[r + 1], ch[r], 2, 2]);
            downs.push(Down { norm, conv });
            if r >= 1 {
                let s = r - 1;
                let cfg = config.block(ch[r + 1]);
                stages.push((0..config.stage_blocks[s]).map(|i| b.block(&cfg, &format!("stage{s}.block{i}"))).collect());
            }
        }
        let skip_res = [0, 1, 2, 4, 5];
        let skips = skip_res.map(|r| b.conv(&format!("skip{r}.proj"), &[ch[r], ch[r]]));
        let ups = (0..5).map(|r| b.conv(&format!("up{r}.convt"), &[ch[r + 1], ch[r], 2, 2])).collect();
        let decoder = [4, 2, 1].map(|r| b.block(&config.block(ch[r]), &format!("decoder{r}.block")));
        let head = b.conv("head.conv", &[1, ch[0], 3, 3]);

        Ok(Self {
            config,
            store: b.store,
            norms: b.norms,
            stem,
            stem_norm,
            downs,
            stages,
            skips,
            ups,
            decoder,
            head,
        })
    }

    /// Redraw every weight from Xavier Normal and reset norm parameters.
    pub fn xavier_init(&mut self, seed: u64) {
        self.store.init(seed);
        for n in &mut self.norms {
            if let Some(r) = &mut n.running {
                *r = crate::norm::RunningStats::new(n.channels);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.stages.iter().flatten().chain(self.decoder.iter())
    }

    /// Run the network on `[image, sparse]` concatenated along channels.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, image: Var, sparse: Var, mode: Mode) -> Result<ForwardOutput> {
        for v in [image, sparse] {
            let t = tape.value(v);
            if t.data().iter().any(|x| x.is_nan()) {
                return Err(Error::NonFinite("NaN in network input".into()));
            }
        }
        let x = tape.concat_channels(&[image, sparse])?;
        let [_, c, h, w] = tape.value(x).dims4()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!("model expects {} input channels, got {c}", self.config.in_channels)));
        }
        if h % 32 != 0 || w % 32 != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("input {h}x{w} is not divisible by 32")));
        }
        let mut stats = Vec::new();
        let p = |id: ParamId| bound.var(id);
        let norms = &self.norms;

        let mut hcur = tape.conv2d(x, p(self.stem), 1, 1)?;
        hcur = run_norm(tape, hcur, bound, norms, self.stem_norm, mode, &mut stats)?;
        let mut enc = vec![hcur];
        let mut deepest_in = hcur;
        for (r, down) in self.downs.iter().enumerate() {
            hcur = run_norm(tape, hcur, bound, norms, down.norm, mode, &mut stats)?;
            hcur = tape.conv2d(hcur, p(down.conv), 2, 0)?;
            if r >= 1 {
                if r == 4 {
                    deepest_in = hcur;
                }
                for block in &self.stages[r - 1] {
                    hcur = block.forward(tape, hcur, bound, norms, mode, &mut stats)?;
                }
            }
            enc.push(hcur);
        }

        let fuse = |tape: &mut Tape, d: Var, e: Var, proj: ParamId| -> Result<Var> {
            let s = tape.linear_channels(e, p(proj), None)?;
            tape.add(d, s)
        };
        let [skip0, skip1, skip2, skip4, skip5] = self.skips;
        let mut d = fuse(tape, enc[5], deepest_in, skip5)?;
        d = tape.conv_transpose2x2(d, p(self.ups[4]))?;
        d = fuse(tape, d, enc[4], skip4)?;
        d = self.decoder[0].forward(tape, d, bound, norms, mode, &mut stats)?;
        d = tape.conv_transpose2x2(d, p(self.ups[3]))?;
        d = tape.conv_transpose2x2(d, p(self.ups[2]))?;
        d = fuse(tape, d, enc[2], skip2)?;
        d = self.decoder[1].forward(tape, d, bound, norms, mode, &mut stats)?;
        d = tape.conv_transpose2x2(d, p(self.ups[1]))?;
        d = fuse(tape, d, enc[1], skip1)?;
        d = self.decoder[2].forward(tape, d, bound, norms, mode, &mut stats)?;
        d = tape.conv_transpose2x2(d, p(self.ups[0]))?;
        d = fuse(tape, d, enc[0], skip0)?;
        let depth = tape.conv2d(d, p(self.head), 1, 1)?;
        Ok(ForwardOutput { depth, batch_stats: stats })
    }

    /// Gradient-free prediction.
    pub fn predict(&self, image: &Tensor, sparse: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.store.bind_frozen(&mut tape);
        let i = tape.constant(image.clone());
        let s = tape.constant(sparse.clone());
        let out = self.forward(&mut tape, &bound, i, s, mode)?;
        Ok(tape.value(out.depth).clone())
    }

    /// Fold training-mode batch statistics into the batch-norm running averages.
    pub fn apply_batch_stats(&mut self, stats: &[(usize, BatchStats)]) {
        for (idx, s) in stats {
            if let Some(r) = &mut self.norms[*idx].running {
                r.update(s);
            }
        }
    }

    /// Λ = n(D(w) + E(w)^2) + D(b) of every SP-Norm SLP, measured from its current
    /// weights and bias across entries.
    pub fn slp_lambdas(&self) -> Vec<(String, f64)> {
        self.norms
            .iter()
            .filter(|n| n.kind == NormKind::SpNorm)
            .filter_map(|n| match n.params {
                crate::norm::NormParams::Slp { weight, bias } => {
                    let w = self.store.get(weight).data();
                    let b = self.store.get(bias).data();
                    let (wm, wv) = mean_var(w);
                    let (_, bv) = mean_var(b);
                    let name = self.store.param(weight).name.trim_end_matches(".slp.weight").to_string();
                    Some((name, crate::moments::spnorm_lambda(n.channels, crate::moments::MomentStats::new(wm, wv), crate::moments::MomentStats::new(0.0, bv))))
                }
                _ => None,
            })
            .collect()
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_block(block: &Block, norms: &[NormLayer], store: &ParamStore, x: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let y = block.forward(&mut tape, xv, &bound, norms, Mode::Train, &mut Vec::new()).unwrap();
        tape.value(y).clone()
    }

    fn rel(a: &Tensor, b: &Tensor) -> f64 {
        a.zip_map(b, |x, y| x - y).unwrap().max_abs() / b.max_abs()
    }

    #[test]
    fn block_zero_input_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (block, norms, store) = build_block(&BlockConfig::spnet(8), 1).unwrap();
        let zero = Tensor::zeros(&[1, 8, 8, 8]);
        assert_eq!(run_block(&block, &norms, &store, &zero).max_abs(), 0.0);

        let x = Tensor::randn(&[2, 8, 8, 8], 1.0, &mut rng);
        let base = run_block(&block, &norms, &store, &x);
        let scaled = run_block(&block, &norms, &store, &x.scale(2.0));
        assert!(rel(&scaled, &base.scale(2.0)) < 1e-12);
    }

    #[test]
    fn ln_block_is_not_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = BlockConfig::spnet(8);
        cfg.norm_kind = NormKind::Ln;
        let (block, norms, store) = build_block(&cfg, 1).unwrap();
        let x = Tensor::randn(&[1, 8, 8, 8], 1.0, &mut rng);
        let base = run_block(&block, &norms, &store, &x);
        let scaled = run_block(&block, &norms, &store, &x.scale(2.0));
        assert!(rel(&scaled, &base.scale(2.0)) > 0.1);
    }

    #[test]
    fn zeroed_pointwise_convs_give_identity() {
        let (block, norms, mut store) = build_block(&BlockConfig::spnet(4), 5).unwrap();
        store.get_mut(block.pw_project).data_mut().fill(0.0);
        let x = Tensor::from_fn(&[1, 4, 4, 4], |i| (i as f64).sin());
        assert_eq!(run_block(&block, &norms, &store, &x), x);
        assert!(build_block(&BlockConfig { dw_kernel: 4, ..BlockConfig::spnet(4) }, 0).is_err());
    }

    #[test]
    fn forward_shape_and_errors() {
        let model = SpNetModel::new(ModelConfig::micro(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Tensor::uniform(&[2, 3, 32, 64], 0.0, 1.0, &mut rng);
        let sp = Tensor::uniform(&[2, 1, 32, 64], 0.0, 5.0, &mut rng);
        let out = model.predict(&img, &sp, Mode::Train).unwrap();
        assert_eq!(out.shape(), &[2, 1, 32, 64]);

        let bad = Tensor::zeros(&[1, 3, 48, 32]);
        let bad_sp = Tensor::zeros(&[1, 1, 48, 32]);
        assert!(matches!(model.predict(&bad, &bad_sp, Mode::Train), Err(Error::Shape(_))));
        let mut nan = sp.clone();
        nan.data_mut()[3] = f64::NAN;
        assert!(matches!(model.predict(&img, &nan, Mode::Train), Err(Error::NonFinite(_))));
    }

    #[test]
    fn construction_is_deterministic() {
        let a = SpNetModel::new(ModelConfig::micro(), 9).unwrap();
        let b = SpNetModel::new(ModelConfig::micro(), 9).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        assert_eq!(a.store, b.store);
        let c = SpNetModel::new(ModelConfig::micro(), 10).unwrap();
        assert_ne!(a.store, c.store);
    }

    #[test]
    fn norm_swap_keeps_conv_shapes() {
        let sp = SpNetModel::build(ModelConfig::micro()).unwrap();
        let ln = SpNetModel::build(ModelConfig::micro().with_norm(NormKind::Ln)).unwrap();
        let convs = |m: &SpNetModel| {
            m.store
                .iter()
                .filter(|p| !p.name.contains("norm"))
                .map(|p| (p.name.clone(), p.value.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        assert_eq!(convs(&sp), convs(&ln));
    }

    #[test]
    fn xavier_statistics() {
        let mut store = ParamStore::new();
        let id = store.register("w", &[192, 96], Init::xavier_for(&[192, 96]), true);
        store.init(123);
        let w = store.get(id).data();
        let (m, v) = mean_var(w);
        let target = (2.0f64 / 288.0).sqrt();
        assert!((v.sqrt() / target - 1.0).abs() < 0.05);
        assert!(m.abs() < 4.0 * target / (w.len() as f64).sqrt());
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::micro();
        c.stage_blocks[2] = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::micro();
        c.res_channels[3] = 16;
        assert!(c.validate().is_err());
        assert!(ModelConfig::by_name("huge").is_err());
    }
}

#[cfg(test)]
mod model_tests {
    use super::*;
    use crate::moments::verify_sp_property;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(seed: u64, n: usize, h: usize, w: usize) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Tensor::uniform(&[n, 3, h, w], 0.0, 1.0, &mut rng);
        let mut sp = Tensor::uniform(&[n, 1, h, w], 0.5, 10.0, &mut rng);
        for (i, v) in sp.data_mut().iter_mut().enumerate() {
            if i % 7 != 0 {
                *v = 0.0;
            }
        }
        (img, sp)
    }

    fn joint(model: &SpNetModel, x: &Tensor) -> Result<Tensor> {
        let [n, _, h, w] = x.dims4()?;
        let img = Tensor::from_fn(&[n, 3, h, w], |i| x.data()[(i / (3 * h * w)) * 4 * h * w + i % (3 * h * w)]);
        let sp = Tensor::from_fn(&[n, 1, h, w], |i| x.data()[(i / (h * w)) * 4 * h * w + 3 * h * w + i % (h * w)]);
        model.predict(&img, &sp, Mode::Train)
    }

    #[test]
    fn param_counts() {
        let counts: Vec<usize> = ["tiny", "small", "base", "large"]
            .iter()
            .map(|n| SpNetModel::build(ModelConfig::by_name(n).unwrap()).unwrap().param_count())
            .collect();
        eprintln!("{counts:?}");
        assert!((28_000_000..=42_000_000).contains(&counts[0]));
        assert!(counts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn spnorm_model_is_homogeneous_ln_model_annihilates() {
        let (img, sp) = inputs(1, 2, 32, 32);
        let x = Tensor::concat_channels(&[&img, &sp]).unwrap();
        let sp_model = SpNetModel::new(ModelConfig::micro(), 3).unwrap();
        let r = verify_sp_property(|t| joint(&sp_model, t), &x, &[0.5, 2.0, 3.0, 10.0]).unwrap();
        assert!(r.max_proportional() < 1e-9, "{r:?}");

        for kind in [NormKind::Ln, NormKind::Bn, NormKind::In] {
            let m = SpNetModel::new(ModelConfig::micro().with_norm(kind), 3).unwrap();
            let r = verify_sp_property(|t| joint(&m, t), &x, &[0.5, 2.0, 3.0, 10.0]).unwrap();
            assert!(r.max_invariance() < 1e-8, "{kind}: {r:?}");
            assert!(r.proportional_deviation[2] >= 0.5, "{kind}: {r:?}");
        }
    }
}
