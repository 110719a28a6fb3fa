//! Losses (masked reconstruction, WGAN-GP, original GAN, drift) and the
//! alternating critic / generator update.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::autodiff::{AdamConfig, AdamState, Array, Graph, Scalar, Var};
use crate::dataset::{TrainingSample, CH_MASK, CH_SKETCH, INPUT_CHANNELS};
use crate::error::{invalid, Error, Result};
use crate::mask::local_crop_box;
use crate::model::{Discriminator, Generator, ParamSet};
use crate::rng;

/// Logits of the original GAN variant are clipped to this magnitude.
pub const LOGIT_CLIP: f64 = 30.0;
/// Keeps the gradient norm differentiable at zero.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GanVariant {
    #[default]
    WganGp,
    Original,
}

impl GanVariant {
    pub fn id(self) -> &'static str {
        match self {
            GanVariant::WganGp => "wgan_gp",
            GanVariant::Original => "original_gan",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "wgan_gp" => Ok(GanVariant::WganGp),
            "original_gan" => Ok(GanVariant::Original),
            _ => Err(invalid(alloc::format!("unknown GAN variant {id:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Reconstruction weight.
    pub alpha: f64,
    /// Gradient penalty weight.
    pub lambda: f64,
    /// Drift weight.
    pub epsilon_drift: f64,
    pub gan_variant: GanVariant,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1e-3, lambda: 100.0, epsilon_drift: 1e-3, gan_variant: GanVariant::WganGp }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha >= 0.0 && self.lambda >= 0.0 && self.epsilon_drift >= 0.0 {
            Ok(())
        } else {
            Err(invalid("loss weights must be non-negative"))
        }
    }

    /// `alpha * rec + adversarial`.
    pub fn generator_total<T: Scalar>(&self, g: &mut Graph<T>, rec: Var, adversarial: Var) -> Result<Var> {
        let r = g.scale(rec, self.alpha);
        g.add(r, adversarial)
    }

    /// `core + penalty + epsilon * mean(D(real)^2)`.
    pub fn discriminator_total<T: Scalar>(&self, g: &mut Graph<T>, core: Var, penalty: Var, real_scores: Var) -> Result<Var> {
        let drift = self.drift(g, real_scores)?;
        let a = g.add(core, penalty)?;
        g.add(a, drift)
    }

    pub fn drift<T: Scalar>(&self, g: &mut Graph<T>, real_scores: Var) -> Result<Var> {
        let sq = g.mul(real_scores, real_scores)?;
        let m = g.mean(sq);
        Ok(g.scale(m, self.epsilon_drift))
    }
}

/// `out` inside the mask, `target` outside. `mask` is `[N, 1, H, W]` of 0/1.
pub fn composite<T: Scalar>(g: &mut Graph<T>, out: Var, target: Var, mask: Var) -> Result<Var> {
    let c = g.shape(out)[1];
    let m = g.channel_repeat(mask, c)?;
    let d = g.sub(out, target)?;
    let md = g.mul(m, d)?;
    g.add(target, md)
}

/// Mean absolute difference between the composited output and the target
/// over all elements; out-of-mask differences are exactly zero.
pub fn rec_loss<T: Scalar>(g: &mut Graph<T>, out: Var, target: Var, mask: Var) -> Result<Var> {
    let comp = composite(g, out, target, mask)?;
    let d = g.sub(comp, target)?;
    let a = g.abs(d);
    Ok(g.mean(a))
}

/// Terms of the critic loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriticTerms {
    pub real_scores: Var,
    pub fake_scores: Var,
    /// `mean D(fake) - mean D(real)`.
    pub core: Var,
    /// `lambda * mean (|grad D(interp)| - 1)^2`.
    pub penalty: Var,
}

/// Per-sample interpolation weights `u ~ U(0, 1)`.
pub fn interpolation_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| r.random_range(0.0..1.0)).collect()
}

/// WGAN critic loss with gradient penalty on random real/fake interpolates.
/// The penalty is built from a create-graph gradient, so it can be
/// differentiated with respect to the critic's parameters.
pub fn wgan_gp_loss<T: Scalar>(
    g: &mut Graph<T>,
    critic: &mut impl FnMut(&mut Graph<T>, Var) -> Result<Var>,
    real: Var,
    fake: Var,
    lambda: f64,
    seed: u64,
) -> Result<CriticTerms> {
    let shape = g.shape(real).to_vec();
    if shape != g.shape(fake) {
        return Err(Error::Shape { context: "real and fake critic inputs", left: shape, right: g.shape(fake).to_vec() });
    }
    let n = shape[0];
    let real_scores = critic(g, real)?;
    let fake_scores = critic(g, fake)?;
    let mr = g.mean(real_scores);
    let mf = g.mean(fake_scores);
    let core = g.sub(mf, mr)?;

    let u = interpolation_weights(n, seed);
    let inner: usize = shape[1..].iter().product();
    let mut ud = Vec::with_capacity(n * inner);
    for v in &u {
        ud.extend(core::iter::repeat(T::of(*v)).take(inner));
    }
    let uv = g.constant(Array::new(shape.clone(), ud)?);
    let diff = g.sub(fake, real)?;
    let step = g.mul(uv, diff)?;
    let interp = g.add(real, step)?;
    let scores = critic(g, interp)?;
    let total = g.sum(scores);
    let grad = g.grad(total, &[interp])?[0];
    let sq = g.mul(grad, grad)?;
    let per = g.sum_per_sample(sq);
    let per = g.add_scalar(per, NORM_EPS);
    let norm = g.sqrt(per);
    let dev = g.add_scalar(norm, -1.0);
    let dev2 = g.mul(dev, dev)?;
    let m = g.mean(dev2);
    let penalty = g.scale(m, lambda);
    Ok(CriticTerms { real_scores, fake_scores, core, penalty })
}

/// Original GAN losses on clipped logits, in log-sigmoid form:
/// critic `mean softplus(-D(real)) + mean softplus(D(fake))`, generator
/// (non-saturating) `mean softplus(-D(fake))`.
pub fn original_gan_loss<T: Scalar>(g: &mut Graph<T>, real_logits: Var, fake_logits: Var) -> Result<(Var, Var)> {
    let r = g.clamp(real_logits, -LOGIT_CLIP, LOGIT_CLIP);
    let f = g.clamp(fake_logits, -LOGIT_CLIP, LOGIT_CLIP);
    let nr = g.neg(r);
    let a = g.softplus(nr);
    let a = g.mean(a);
    let b = g.softplus(f);
    let b = g.mean(b);
    let d = g.add(a, b)?;
    let nf = g.neg(f);
    let gl = g.softplus(nf);
    let gl = g.mean(gl);
    Ok((d, gl))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub n_critic: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch: 4, n_critic: 1, adam: AdamConfig::default(), weights: LossWeights::default(), seed: 0, checkpoint_every: 500 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch == 0 || self.n_critic == 0 {
            return Err(invalid("batch and n_critic must be at least 1"));
        }
        Ok(())
    }
}

/// Losses of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMetrics {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub rec: f64,
    pub gp: f64,
    pub drift: f64,
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub seed: u64,
    pub gen_params: ParamSet<f32>,
    pub disc_params: ParamSet<f32>,
    pub gen_adam: AdamState<f32>,
    pub disc_adam: AdamState<f32>,
}

impl TrainState {
    pub fn init(gen: &Generator, disc: &Discriminator, cfg: &TrainConfig) -> Result<Self> {
        let gen_params = gen.init_params(rng::derive(cfg.seed, 10))?;
        let disc_params = disc.init_params(rng::derive(cfg.seed, 11))?;
        let gen_adam = AdamState::new(cfg.adam, gen_params.shapes());
        let disc_adam = AdamState::new(cfg.adam, disc_params.shapes());
        Ok(Self { step: 0, seed: cfg.seed, gen_params, disc_params, gen_adam, disc_adam })
    }
}

/// Batched tensors of a list of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n: usize,
    pub side: usize,
    /// `[N, 9, S, S]`.
    pub input: Array<f32>,
    /// `[N, 3, S, S]`.
    pub target: Array<f32>,
    /// `[N, 1, S, S]`.
    pub mask: Array<f32>,
    /// `[N, 4, S, S]`: sketch and color planes.
    pub conditioning: Array<f32>,
    /// Local crop origin `(y0, x0)` per sample.
    pub boxes: Vec<(usize, usize)>,
}

impl Batch {
    pub fn new(samples: &[&TrainingSample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| invalid("empty batch"))?;
        let s = first.side();
        if samples.iter().any(|x| x.side() != s) {
            return Err(invalid("samples of one batch must share a side"));
        }
        let n = samples.len();
        let plane = s * s;
        let mut input = Vec::with_capacity(n * INPUT_CHANNELS * plane);
        let mut target = Vec::with_capacity(n * 3 * plane);
        let mut mask = Vec::with_capacity(n * plane);
        let mut cond = Vec::with_capacity(n * 4 * plane);
        let mut boxes = Vec::with_capacity(n);
        for x in samples {
            input.extend_from_slice(x.input());
            target.extend(x.target_chw());
            mask.extend_from_slice(x.channel(CH_MASK));
            cond.extend_from_slice(&x.input()[CH_SKETCH * plane..CH_MASK * plane]);
            let b = local_crop_box(&x.mask(), s / 2)?;
            boxes.push((b.y0, b.x0));
        }
        Ok(Self {
            n,
            side: s,
            input: Array::new(vec![n, INPUT_CHANNELS, s, s], input)?,
            target: Array::new(vec![n, 3, s, s], target)?,
            mask: Array::new(vec![n, 1, s, s], mask)?,
            conditioning: Array::new(vec![n, 4, s, s], cond)?,
            boxes,
        })
    }
}

/// Critic input `[image, sketch, color, mask]`.
fn critic_input<T: Scalar>(g: &mut Graph<T>, image: Var, cond: Var, mask: Var) -> Result<Var> {
    g.concat(&[image, cond, mask])
}

fn adversarial_terms(
    g: &mut Graph<f32>,
    disc: &Discriminator,
    dp: &[Var],
    batch: &Batch,
    real: Var,
    fake: Var,
    weights: &LossWeights,
    seed: u64,
) -> Result<(Var, Var, Var, Var)> {
    let mut critic = |g: &mut Graph<f32>, x: Var| disc.forward(g, dp, x, &batch.boxes);
    match weights.gan_variant {
        GanVariant::WganGp => {
            let t = wgan_gp_loss(g, &mut critic, real, fake, weights.lambda, seed)?;
            let mf = g.mean(t.fake_scores);
            let adv = g.neg(mf);
            Ok((t.core, t.penalty, t.real_scores, adv))
        }
        GanVariant::Original => {
            let rs = critic(g, real)?;
            let fs = critic(g, fake)?;
            let (d, gl) = original_gan_loss(g, rs, fs)?;
            let zero = g.constant(Array::zeros(&[1]));
            Ok((d, zero, rs, gl))
        }
    }
}

fn finite_or_report(g: &Graph<f32>) -> Result<()> {
    g.check_finite()
}

/// One critic update (repeated `n_critic` times) and one generator update.
pub fn train_step(state: &mut TrainState, gen: &Generator, disc: &Discriminator, batch: &Batch, cfg: &TrainConfig) -> Result<StepMetrics> {
    cfg.validate()?;
    let w = cfg.weights;
    let mut metrics = StepMetrics { step: state.step + 1, ..StepMetrics::default() };

    for k in 0..cfg.n_critic {
        let mut g = Graph::<f32>::new();
        let gp = state.gen_params.bind_frozen(&mut g);
        let dp = state.disc_params.bind(&mut g);
        let x = g.constant(batch.input.clone());
        let t = g.constant(batch.target.clone());
        let m = g.constant(batch.mask.clone());
        let c = g.constant(batch.conditioning.clone());
        let out = gen.forward(&mut g, &gp, x)?;
        let comp = composite(&mut g, out, t, m)?;
        let comp = g.detach(comp);
        let fake = critic_input(&mut g, comp, c, m)?;
        let real = critic_input(&mut g, t, c, m)?;
        let seed = rng::derive(state.seed, (state.step << 8) | k as u64);
        let (core, penalty, real_scores, _) = adversarial_terms(&mut g, disc, &dp, batch, real, fake, &w, seed)?;
        let drift = w.drift(&mut g, real_scores)?;
        let total = g.add(core, penalty)?;
        let total = g.add(total, drift)?;
        finite_or_report(&g)?;
        metrics.d_loss = g.scalar_value(total) as f64;
        metrics.gp = g.scalar_value(penalty) as f64;
        metrics.drift = g.scalar_value(drift) as f64;
        let grads = g.backward(total)?;
        let gl: Vec<&Array<f32>> = dp.iter().map(|v| grads.get(*v).expect("every critic parameter has a gradient")).collect();
        let mut params: Vec<Array<f32>> = state.disc_params.arrays().cloned().collect();
        state.disc_adam.update(&mut params, &gl)?;
        for (dst, src) in state.disc_params.arrays_mut().zip(params) {
            *dst = src;
        }
    }

    let mut g = Graph::<f32>::new();
    let gp = state.gen_params.bind(&mut g);
    let dp = state.disc_params.bind_frozen(&mut g);
    let x = g.constant(batch.input.clone());
    let t = g.constant(batch.target.clone());
    let m = g.constant(batch.mask.clone());
    let c = g.constant(batch.conditioning.clone());
    let out = gen.forward(&mut g, &gp, x)?;
    let rec = rec_loss(&mut g, out, t, m)?;
    let comp = composite(&mut g, out, t, m)?;
    let fake = critic_input(&mut g, comp, c, m)?;
    let adv = match w.gan_variant {
        GanVariant::WganGp => {
            let fs = disc.forward(&mut g, &dp, fake, &batch.boxes)?;
            let mf = g.mean(fs);
            g.neg(mf)
        }
        GanVariant::Original => {
            let fs = disc.forward(&mut g, &dp, fake, &batch.boxes)?;
            let f = g.clamp(fs, -LOGIT_CLIP, LOGIT_CLIP);
            let nf = g.neg(f);
            let sp = g.softplus(nf);
            g.mean(sp)
        }
    };
    let total = w.generator_total(&mut g, rec, adv)?;
    finite_or_report(&g)?;
    metrics.g_loss = g.scalar_value(total) as f64;
    metrics.rec = g.scalar_value(rec) as f64;
    let grads = g.backward(total)?;
    let gl: Vec<&Array<f32>> = gp.iter().map(|v| grads.get(*v).expect("every generator parameter has a gradient")).collect();
    let mut params: Vec<Array<f32>> = state.gen_params.arrays().cloned().collect();
    state.gen_adam.update(&mut params, &gl)?;
    for (dst, src) in state.gen_params.arrays_mut().zip(params) {
        *dst = src;
    }
    state.step += 1;
    Ok(metrics)
}

/// Generator output for a batch, `[N, 3, S, S]`, unclamped.
pub fn generate(gen: &Generator, params: &ParamSet<f32>, input: &Array<f32>) -> Result<Array<f32>> {
    let mut g = Graph::<f32>::new();
    let p = params.bind_frozen(&mut g);
    let x = g.constant(input.clone());
    let y = gen.forward(&mut g, &p, x)?;
    Ok(g.value(y).clone())
}

/// Mean masked reconstruction error of the generator over `samples`.
pub fn masked_l1(gen: &Generator, params: &ParamSet<f32>, samples: &[&TrainingSample]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(4) {
        let b = Batch::new(chunk)?;
        let mut g = Graph::<f32>::new();
        let p = params.bind_frozen(&mut g);
        let x = g.constant(b.input);
        let t = g.constant(b.target);
        let m = g.constant(b.mask);
        let out = gen.forward(&mut g, &p, x)?;
        let r = rec_loss(&mut g, out, t, m)?;
        total += g.scalar_value(r) as f64 * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}
