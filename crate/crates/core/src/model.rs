//! Completion network (encoder, dilated bottleneck, decoder with skips) and
//! the global + local discriminator pair fused by a linear layer.

#[cfg(not(any(feature = "std", test)))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Array, ConvSpec, Graph, Scalar, Var};
use crate::dataset::INPUT_CHANNELS;
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Stabilizer of the channel RMS normalization.
pub const LRN_EPS: f64 = 1e-8;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const KERNEL: usize = 3;
/// Channels seen by the discriminators: rgb, sketch, color, mask.
pub const DISC_CHANNELS: usize = 8;

/// `a / sqrt(mean_c a^2 + eps)` at every spatial location of `a[N, C, H, W]`.
pub fn lrn<T: Scalar>(g: &mut Graph<T>, a: Var) -> Result<Var> {
    let c = g.shape(a)[1];
    let sq = g.mul(a, a)?;
    let s = g.channel_sum(sq)?;
    let m = g.scale(s, 1.0 / c as f64);
    let m = g.add_scalar(m, LRN_EPS);
    let r = g.sqrt(m);
    let r = g.channel_repeat(r, c)?;
    g.div(a, r)
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<(String, Array<T>)>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: String, value: Array<T>) -> Result<()> {
        if self.get(&name).is_some() {
            return Err(invalid(format!("duplicate parameter {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Array<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array<T>)> {
        self.entries.iter().map(|(n, a)| (n.as_str(), a))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn arrays(&self) -> impl Iterator<Item = &Array<T>> {
        self.entries.iter().map(|(_, a)| a)
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Array<T>> {
        self.entries.iter_mut().map(|(_, a)| a)
    }

    pub fn shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.entries.iter().map(|(_, a)| a.shape())
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, a)| a.len()).sum()
    }

    /// Adds every tensor to `g` as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.entries.iter().map(|(_, a)| g.param(a.clone())).collect()
    }

    /// Adds every tensor to `g` as a constant.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.entries.iter().map(|(_, a)| g.constant(a.clone())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet { entries: self.entries.iter().map(|(n, a)| (n.clone(), a.cast())).collect() }
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_layout(&self, other: &ParamSet<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ConfigMismatch(format!("{} parameters expected, found {}", self.len(), other.len())));
        }
        for ((n, a), (m, b)) in self.entries.iter().zip(&other.entries) {
            if n != m || a.shape() != b.shape() {
                return Err(Error::ConfigMismatch(format!("parameter {n} {:?} does not match {m} {:?}", a.shape(), b.shape())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvSpec),
    /// Stride-2 transposed convolution doubling the spatial size.
    Deconv,
}

/// One convolution layer with its bias, activation and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    pub leaky: bool,
    pub lrn: bool,
    /// Index of an earlier layer whose output is concatenated to this one's.
    pub skip_from: Option<usize>,
}

impl LayerSpec {
    fn conv(name: String, spec: ConvSpec, cin: usize, cout: usize) -> Self {
        Self { name, kind: LayerKind::Conv(spec), cin, cout, leaky: true, lrn: false, skip_from: None }
    }

    /// Channels leaving the layer, including a concatenated skip.
    pub fn out_channels(&self, layers: &[LayerSpec]) -> usize {
        self.cout + self.skip_from.map_or(0, |i| layers[i].cout)
    }

    fn weight_shape(&self) -> [usize; 4] {
        match self.kind {
            LayerKind::Conv(_) => [self.cout, self.cin, KERNEL, KERNEL],
            LayerKind::Deconv => [self.cin, self.cout, KERNEL, KERNEL],
        }
    }
}

fn init_layers<T: Scalar>(prefix: &str, layers: &[LayerSpec], seed: u64, out: &mut ParamSet<T>) -> Result<()> {
    let mut r = rng::seeded(seed);
    for l in layers {
        let shape = l.weight_shape();
        let fan_in = l.cin * KERNEL * KERNEL;
        let gain = if l.leaky { 2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE) } else { 1.0 };
        let std = (gain / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                T::of(z * std)
            })
            .collect();
        out.push(format!("{prefix}/{}/w", l.name), Array::new(shape.to_vec(), data)?)?;
        out.push(format!("{prefix}/{}/b", l.name), Array::zeros(&[l.cout]))?;
    }
    Ok(())
}

/// Runs a layer stack. `params` holds (w, b) per layer in order.
fn run_layers<T: Scalar>(g: &mut Graph<T>, layers: &[LayerSpec], params: &[Var], x: Var) -> Result<Var> {
    if params.len() != 2 * layers.len() {
        return Err(invalid(format!("{} parameter tensors expected, got {}", 2 * layers.len(), params.len())));
    }
    let mut outs: Vec<Var> = Vec::with_capacity(layers.len());
    let mut h = x;
    for (i, l) in layers.iter().enumerate() {
        let (w, b) = (params[2 * i], params[2 * i + 1]);
        let y = match l.kind {
            LayerKind::Conv(spec) => g.conv2d(h, w, spec)?,
            LayerKind::Deconv => {
                let s = g.shape(h);
                let out_hw = (2 * s[2], 2 * s[3]);
                g.conv2d_transpose(h, w, ConvSpec::down(KERNEL), out_hw)?
            }
        };
        let mut y = g.add_bias(y, b)?;
        if l.leaky {
            y = g.leaky_relu(y, LEAKY_SLOPE);
        }
        if l.lrn {
            y = lrn(g, y)?;
        }
        if let Some(j) = l.skip_from {
            y = g.concat(&[y, outs[j]])?;
        }
        outs.push(y);
        h = y;
    }
    Ok(h)
}

fn check_input(g: &Graph<impl Scalar>, x: Var, channels: usize, side: usize, what: &'static str) -> Result<()> {
    let s = g.shape(x);
    if s.len() != 4 || s[1] != channels || s[2] != side || s[3] != side {
        return Err(Error::Shape { context: what, left: s.to_vec(), right: vec![s.first().copied().unwrap_or(0), channels, side, side] });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub side: usize,
    /// Channels at full resolution and after each downsampling.
    pub channels: Vec<usize>,
    pub dilated_blocks: usize,
    pub skips: bool,
    /// LRN follows the first this-many layers.
    pub lrn_layers: usize,
    pub noise: bool,
}

impl GeneratorConfig {
    /// Channels double per downsampling from `base`, capped at `max`.
    pub fn channel_table(base: usize, max: usize, downsamples: usize) -> Vec<usize> {
        (0..=downsamples).map(|k| (base << k).min(max)).collect()
    }

    pub fn full() -> Self {
        Self { side: 512, channels: Self::channel_table(64, 512, 3), dilated_blocks: 4, skips: true, lrn_layers: 14, noise: true }
    }

    pub fn desk() -> Self {
        Self { side: 64, channels: Self::channel_table(8, 64, 3), dilated_blocks: 4, skips: true, lrn_layers: 14, noise: true }
    }

    pub fn downsamples(&self) -> usize {
        self.channels.len().saturating_sub(1)
    }

    pub fn layer_count(&self) -> usize {
        4 + 5 * self.downsamples() + self.dilated_blocks
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.downsamples();
        if d == 0 || self.channels.contains(&0) {
            return Err(invalid("generator needs at least one downsampling and non-zero widths"));
        }
        if self.side == 0 || self.side % (1 << d) != 0 {
            return Err(invalid(format!("side {} is not divisible by 2^{d}", self.side)));
        }
        if self.lrn_layers > self.layer_count() {
            return Err(invalid("LRN split exceeds the layer count"));
        }
        Ok(())
    }
}

/// Encoder-decoder completion network.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    cfg: GeneratorConfig,
    layers: Vec<LayerSpec>,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let c = &cfg.channels;
        let d = cfg.downsamples();
        let same = ConvSpec::same(KERNEL, 1);
        let cin0 = if cfg.noise { INPUT_CHANNELS } else { INPUT_CHANNELS - 1 };
        let mut layers = vec![LayerSpec::conv("enc0".into(), same, cin0, c[0])];
        let mut level_out = vec![0usize];
        for k in 1..=d {
            layers.push(LayerSpec::conv(format!("down{k}"), ConvSpec::down(KERNEL), c[k - 1], c[k]));
            layers.push(LayerSpec::conv(format!("enc{k}"), same, c[k], c[k]));
            level_out.push(layers.len() - 1);
        }
        for i in 0..cfg.dilated_blocks {
            let dil = 2usize << i;
            layers.push(LayerSpec::conv(format!("dil{i}"), ConvSpec::same(KERNEL, dil), c[d], c[d]));
        }
        layers.push(LayerSpec::conv("mid0".into(), same, c[d], c[d]));
        layers.push(LayerSpec::conv("mid1".into(), same, c[d], c[d]));
        for k in (0..d).rev() {
            let prev = layers.len() - 1;
            let cin = layers[prev].out_channels(&layers);
            let mut up = LayerSpec { kind: LayerKind::Deconv, ..LayerSpec::conv(format!("up{k}"), same, cin, c[k]) };
            if cfg.skips {
                up.skip_from = Some(level_out[k]);
            }
            layers.push(up);
            let cin = layers[layers.len() - 1].out_channels(&layers);
            layers.push(LayerSpec::conv(format!("dec{k}a"), same, cin, c[k]));
            let last = if k == 0 { (c[0] / 2).max(1) } else { c[k] };
            layers.push(LayerSpec::conv(format!("dec{k}b"), same, c[k], last));
        }
        let cin = layers[layers.len() - 1].cout;
        layers.push(LayerSpec { leaky: false, ..LayerSpec::conv("out".into(), same, cin, 3) });
        for l in layers.iter_mut().take(cfg.lrn_layers) {
            l.lrn = true;
        }
        debug_assert_eq!(layers.len(), cfg.layer_count());
        Ok(Self { cfg, layers })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.cout).max().unwrap_or(0)
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamSet<T>> {
        let mut p = ParamSet::new();
        init_layers("gen", &self.layers, seed, &mut p)?;
        Ok(p)
    }

    /// `input[N, 9, S, S]` to an unclamped `[N, 3, S, S]` image. Without the
    /// noise flag the noise plane is ignored.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], input: Var) -> Result<Var> {
        check_input(g, input, INPUT_CHANNELS, self.cfg.side, "generator input")?;
        let x = if self.cfg.noise { input } else { g.slice_channels(input, 0, INPUT_CHANNELS - 1)? };
        run_layers(g, &self.layers, params, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub side: usize,
    pub global_layers: usize,
    pub local_layers: usize,
    pub base_channels: usize,
    pub feature_dim: usize,
    /// Feed the mask plane; when off it is zeroed.
    pub mask_input: bool,
}

impl DiscriminatorConfig {
    pub fn full() -> Self {
        Self { side: 512, global_layers: 17, local_layers: 16, base_channels: 32, feature_dim: 512, mask_input: true }
    }

    pub fn desk() -> Self {
        Self { side: 64, global_layers: 17, local_layers: 16, base_channels: 8, feature_dim: 64, mask_input: true }
    }

    pub fn local_side(&self) -> usize {
        self.side / 2
    }
}

fn log2_exact(v: usize) -> Option<usize> {
    (v.is_power_of_two()).then(|| v.trailing_zeros() as usize)
}

/// Strided branch reducing `side` to 1x1 with `feature_dim` channels. The
/// stride-1 layers beyond the first are spread over the levels starting at
/// the coarsest one.
fn branch_layers(side: usize, n_layers: usize, base: usize, feature_dim: usize) -> Result<Vec<LayerSpec>> {
    let d = log2_exact(side).filter(|d| *d >= 1).ok_or_else(|| invalid(format!("discriminator side {side} must be a power of two")))?;
    if n_layers < d + 1 {
        return Err(invalid(format!("{n_layers} layers cannot reduce {side} px to 1x1")));
    }
    let mut extra = vec![0usize; d + 1];
    for i in 0..n_layers - d - 1 {
        extra[d - i % d] += 1;
    }
    let width = |k: usize| (base << k).min(feature_dim);
    let same = ConvSpec::same(KERNEL, 1);
    let mut layers = vec![LayerSpec::conv("c0".into(), same, DISC_CHANNELS, width(0))];
    for (k, n_extra) in extra.iter().enumerate().skip(1) {
        let cin = layers[layers.len() - 1].cout;
        layers.push(LayerSpec::conv(format!("down{k}"), ConvSpec::down(KERNEL), cin, width(k)));
        for j in 0..*n_extra {
            layers.push(LayerSpec::conv(format!("c{k}_{j}"), same, width(k), width(k)));
        }
    }
    let last = layers.len() - 1;
    layers[last].cout = feature_dim;
    for i in 1..layers.len() {
        layers[i].cin = layers[i - 1].cout;
    }
    Ok(layers)
}

/// Global and local critic branches with a learned linear fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    global: Vec<LayerSpec>,
    local: Vec<LayerSpec>,
}

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig) -> Result<Self> {
        if cfg.feature_dim == 0 || cfg.base_channels == 0 {
            return Err(invalid("discriminator widths must be non-zero"));
        }
        let global = branch_layers(cfg.side, cfg.global_layers, cfg.base_channels, cfg.feature_dim)?;
        let local = branch_layers(cfg.local_side(), cfg.local_layers, cfg.base_channels, cfg.feature_dim)?;
        Ok(Self { cfg, global, local })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn global_layers(&self) -> &[LayerSpec] {
        &self.global
    }

    pub fn local_layers(&self) -> &[LayerSpec] {
        &self.local
    }

    /// Input width of the fusion layer.
    pub fn fusion_inputs(&self) -> usize {
        2 * self.cfg.feature_dim
    }

    pub fn init_params<T: Scalar>(&self, seed: u64) -> Result<ParamSet<T>> {
        let mut p = ParamSet::new();
        init_layers("disc/global", &self.global, rng::derive(seed, 1), &mut p)?;
        init_layers("disc/local", &self.local, rng::derive(seed, 2), &mut p)?;
        let f = self.fusion_inputs();
        let mut r = rng::seeded(rng::derive(seed, 3));
        let std = (1.0 / f as f64).sqrt();
        let w = (0..f)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                T::of(z * std)
            })
            .collect();
        p.push("disc/fuse/w".into(), Array::new(vec![f, 1], w)?)?;
        p.push("disc/fuse/b".into(), Array::zeros(&[1]))?;
        Ok(p)
    }

    /// Index ranges of the global, local and fusion parameters.
    pub fn param_split(&self) -> (core::ops::Range<usize>, core::ops::Range<usize>, core::ops::Range<usize>) {
        let g = 2 * self.global.len();
        let l = g + 2 * self.local.len();
        (0..g, g..l, l..l + 2)
    }

    /// One critic score per sample of `full[N, 8, S, S]`; the local branch
    /// sees the `S/2` square at each `(y0, x0)` box.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], full: Var, boxes: &[(usize, usize)]) -> Result<Var> {
        check_input(g, full, DISC_CHANNELS, self.cfg.side, "discriminator input")?;
        let n = g.shape(full)[0];
        let (gr, lr, fr) = self.param_split();
        if params.len() != fr.end {
            return Err(invalid(format!("{} discriminator tensors expected, got {}", fr.end, params.len())));
        }
        let x = if self.cfg.mask_input {
            full
        } else {
            let kept = g.slice_channels(full, 0, DISC_CHANNELS - 1)?;
            g.pad_channels(kept, 0, DISC_CHANNELS)?
        };
        let ls = self.cfg.local_side();
        let crop = g.crop(x, boxes, ls, ls)?;
        let fg = run_layers(g, &self.global, &params[gr], x)?;
        let fl = run_layers(g, &self.local, &params[lr], crop)?;
        let feats = g.concat(&[fg, fl])?;
        let feats = g.reshape(feats, &[n, self.fusion_inputs()])?;
        let y = g.matmul(feats, params[fr.start])?;
        let y = g.add_bias(y, params[fr.start + 1])?;
        g.reshape(y, &[n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check;

    fn rand_array(shape: &[usize], seed: u64) -> Array<f64> {
        check::random_array(&mut rng::seeded(seed), shape)
    }

    #[test]
    fn lrn_zero_and_scalar_cases() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Array::zeros(&[1, 3, 2, 2]));
        let y = lrn(&mut g, z).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));
        let a = g.constant(Array::full(&[1, 1, 1, 1], 3.0));
        let y = lrn(&mut g, a).unwrap();
        assert!((g.scalar_value(y) - 3.0 / (9.0f64 + 1e-8).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lrn_square_sum_identity() {
        for seed in 0..50 {
            let x = rand_array(&[2, 5, 3, 2], seed);
            let mut g = Graph::<f64>::new();
            let v = g.constant(x.clone());
            let y = lrn(&mut g, v).unwrap();
            let yd = g.value(y).data();
            for b in 0..2 {
                for p in 0..6 {
                    let at = |c: usize| (b * 5 + c) * 6 + p;
                    let s = (0..5).map(|c| x.data()[at(c)].powi(2)).sum::<f64>() / 5.0;
                    let lhs = (0..5).map(|c| yd[at(c)].powi(2)).sum::<f64>();
                    assert!((lhs - 5.0 * s / (s + 1e-8)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn full_scale_topology() {
        let g = Generator::new(GeneratorConfig::full()).unwrap();
        assert_eq!(g.layers().len(), 23);
        assert_eq!(g.max_width(), 512);
        assert_eq!(g.layers().iter().filter(|l| l.lrn).count(), 14);
        assert_eq!(g.layers().iter().filter(|l| matches!(l.kind, LayerKind::Conv(s) if s.stride == 2)).count(), 3);
        assert_eq!(g.layers().iter().filter(|l| l.kind == LayerKind::Deconv).count(), 3);
        assert!(!g.layers().last().unwrap().leaky);
        let d = Discriminator::new(DiscriminatorConfig::full()).unwrap();
        assert_eq!((d.global_layers().len(), d.local_layers().len()), (17, 16));
        assert_eq!(d.global_layers().last().unwrap().cout, 512);
        assert_eq!(d.local_layers().last().unwrap().cout, 512);
        assert!(d.global_layers().iter().chain(d.local_layers()).all(|l| !l.lrn));
    }

    #[test]
    fn desk_topology_matches_full_scale_structure() {
        let (p, k) = (Generator::new(GeneratorConfig::full()).unwrap(), Generator::new(GeneratorConfig::desk()).unwrap());
        assert_eq!(k.max_width(), 64);
        for (a, b) in p.layers().iter().zip(k.layers()) {
            assert_eq!((&a.name, a.kind, a.lrn, a.leaky, a.skip_from), (&b.name, b.kind, b.lrn, b.leaky, b.skip_from));
        }
        let d = Discriminator::new(DiscriminatorConfig::desk()).unwrap();
        assert_eq!((d.global_layers().len(), d.local_layers().len()), (17, 16));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = GeneratorConfig::desk();
        c.side = 60;
        assert!(Generator::new(c).is_err());
        let mut c = GeneratorConfig::desk();
        c.lrn_layers = 24;
        assert!(Generator::new(c).is_err());
        let mut d = DiscriminatorConfig::desk();
        d.global_layers = 5;
        assert!(Discriminator::new(d).is_err());
    }

    fn tiny_gen(skips: bool, noise: bool) -> Generator {
        Generator::new(GeneratorConfig { side: 8, channels: vec![2, 3], dilated_blocks: 1, skips, lrn_layers: 4, noise }).unwrap()
    }

    fn tiny_disc() -> Discriminator {
        Discriminator::new(DiscriminatorConfig { side: 8, global_layers: 5, local_layers: 4, base_channels: 2, feature_dim: 3, mask_input: true }).unwrap()
    }

    #[test]
    fn generator_shape_and_noise_flag() {
        let gen = tiny_gen(false, false);
        let p = gen.init_params::<f64>(1).unwrap();
        let mut x = rand_array(&[2, 9, 8, 8], 3);
        let run = |x: &Array<f64>| {
            let mut g = Graph::new();
            let pv = p.bind(&mut g);
            let xi = g.constant(x.clone());
            let y = gen.forward(&mut g, &pv, xi).unwrap();
            g.value(y).clone()
        };
        let a = run(&x);
        assert_eq!(a.shape(), &[2, 3, 8, 8]);
        for v in &mut x.data_mut()[8 * 64..9 * 64] {
            *v += 1.0;
        }
        assert_eq!(run(&x), a);
        let noisy = tiny_gen(true, true);
        let p = noisy.init_params::<f64>(1).unwrap();
        let mut g = Graph::new();
        let pv = p.bind(&mut g);
        let xi = g.constant(x.clone());
        assert!(noisy.forward(&mut g, &pv, xi).is_ok());
        let bad = g.constant(Array::zeros(&[1, 8, 8, 8]));
        assert!(noisy.forward(&mut g, &pv, bad).is_err());
    }

    #[test]
    fn zeroed_local_branch_has_no_local_sensitivity() {
        let d = tiny_disc();
        let mut p = d.init_params::<f64>(5).unwrap();
        let fuse = p.get_mut("disc/fuse/w").unwrap();
        for v in &mut fuse.data_mut()[3..] {
            *v = 0.0;
        }
        let x = rand_array(&[1, 8, 8, 8], 9);
        let score = |x: &Array<f64>| {
            let mut g = Graph::new();
            let pv = p.bind(&mut g);
            let xi = g.constant(x.clone());
            let y = d.forward(&mut g, &pv, xi, &[(2, 2)]).unwrap();
            g.scalar_value(y)
        };
        let base = score(&x);
        let mut dx = x.clone();
        // a pixel inside the local crop
        dx.data_mut()[3 * 8 + 3] += 1e-3;
        let probe = (score(&dx) - base) / 1e-3;
        let mut g = Graph::new();
        let pv = p.bind(&mut g);
        let xi = g.leaf(x.clone(), true);
        let crop = g.crop(xi, &[(2, 2)], 4, 4).unwrap();
        let fl = run_layers(&mut g, d.local_layers(), &pv[d.param_split().1], crop).unwrap();
        let s = g.sum(fl);
        let local_grad = g.grad(s, &[xi]).unwrap()[0];
        assert!(g.value(local_grad).data()[3 * 8 + 3].abs() > 0.0);
        // the change in score is explained entirely by the global branch
        let gp = {
            let mut g = Graph::new();
            let pv = p.bind(&mut g);
            let xi = g.leaf(x.clone(), true);
            let y = d.forward(&mut g, &pv, xi, &[(2, 2)]).unwrap();
            let s = g.sum(y);
            let gr = g.grad(s, &[xi]).unwrap()[0];
            g.value(gr).data()[3 * 8 + 3]
        };
        let gonly = {
            let mut g = Graph::new();
            let pv = p.bind(&mut g);
            let xi = g.leaf(x.clone(), true);
            let fg = run_layers(&mut g, d.global_layers(), &pv[d.param_split().0], xi).unwrap();
            let fg = g.reshape(fg, &[1, 3]).unwrap();
            let w = g.constant(Array::new(vec![3, 1], p.get("disc/fuse/w").unwrap().data()[..3].to_vec()).unwrap());
            let y = g.matmul(fg, w).unwrap();
            let s = g.sum(y);
            let gr = g.grad(s, &[xi]).unwrap()[0];
            g.value(gr).data()[3 * 8 + 3]
        };
        assert_eq!(gp, gonly);
        assert!((probe - gp).abs() < 1e-4);
    }

    #[test]
    fn disc_outputs_one_score_per_sample() {
        let d = tiny_disc();
        let p = d.init_params::<f32>(2).unwrap();
        let mut g = Graph::new();
        let pv = p.bind(&mut g);
        let x = g.constant(Array::zeros(&[3, 8, 8, 8]));
        let y = d.forward(&mut g, &pv, x, &[(0, 0), (4, 4), (1, 3)]).unwrap();
        assert_eq!(g.shape(y), &[3]);
        assert!(d.forward(&mut g, &pv, x, &[(0, 0), (5, 5), (1, 3)]).is_err());
    }

    #[test]
    fn fusion_width_doubles_with_features() {
        let mut c = DiscriminatorConfig::desk();
        let a = Discriminator::new(c.clone()).unwrap();
        c.feature_dim *= 2;
        let b = Discriminator::new(c).unwrap();
        assert_eq!(b.fusion_inputs(), 2 * a.fusion_inputs());
        let pb = b.init_params::<f32>(0).unwrap();
        assert_eq!(pb.get("disc/fuse/w").unwrap().shape(), &[b.fusion_inputs(), 1]);
    }

    #[test]
    fn mask_plane_ignored_when_disabled() {
        let mut cfg = tiny_disc().config().clone();
        cfg.mask_input = false;
        let d = Discriminator::new(cfg).unwrap();
        let p = d.init_params::<f64>(4).unwrap();
        let mut x = rand_array(&[1, 8, 8, 8], 1);
        let score = |x: &Array<f64>| {
            let mut g = Graph::new();
            let pv = p.bind(&mut g);
            let xi = g.constant(x.clone());
            let y = d.forward(&mut g, &pv, xi, &[(1, 1)]).unwrap();
            g.scalar_value(y)
        };
        let a = score(&x);
        for v in &mut x.data_mut()[7 * 64..] {
            *v = 5.0;
        }
        assert_eq!(score(&x), a);
    }

    #[test]
    fn nets_pass_gradient_checks() {
        let gen = tiny_gen(true, true);
        let disc = tiny_disc();
        let (pg, pd) = (gen.init_params::<f64>(3).unwrap(), disc.init_params::<f64>(4).unwrap());
        let ng = pg.len();
        let f = |g: &mut Graph<f64>, v: &[Var]| -> Result<Var> {
            let out = gen.forward(g, &v[1..1 + ng], v[0])?;
            let m = g.slice_channels(v[0], 7, 1)?;
            let sk = g.slice_channels(v[0], 3, 1)?;
            let col = g.slice_channels(v[0], 4, 3)?;
            let full = g.concat(&[out, sk, col, m])?;
            let score = disc.forward(g, &v[1 + ng..], full, &[(1, 2)])?;
            let s = g.sum(score);
            g.mul(s, s)
        };
        let mut inputs = vec![rand_array(&[1, 9, 8, 8], 8)];
        inputs.extend(pg.arrays().cloned());
        inputs.extend(pd.arrays().cloned());
        let (err, n) = check::first_order(&f, &inputs).unwrap();
        assert!(n > 0);
        assert!(err < 1e-3, "rel err {err}");
    }
}
