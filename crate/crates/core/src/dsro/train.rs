use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Adam, Denoiser, NoiseSchedule, COND_FEATURES};
use super::shape::{ShapeFamily, ShapeParam, SEAT_HEIGHT_BASE, SEAT_HEIGHT_SCALE};
use super::DsroError;
use crate::bench::templates::{SitExtras, SitTemplate};
use crate::math::Pose;
use crate::simulator::{stability_label, SettleParams, StabilityScenario};

/// Sampled parameters are clamped to this magnitude per coordinate.
pub const SAMPLE_LIMIT: f64 = 8.0;

/// Low-dimensional scenario descriptor the model is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub family: u32,
    pub seat_height: f64,
    pub occluded: bool,
}

impl Default for Condition {
    fn default() -> Self {
        Condition {
            family: 0,
            seat_height: SEAT_HEIGHT_BASE,
            occluded: false,
        }
    }
}

impl Condition {
    pub fn features(&self) -> [f64; COND_FEATURES] {
        [
            self.family as f64,
            (self.seat_height - SEAT_HEIGHT_BASE) / SEAT_HEIGHT_SCALE,
            if self.occluded { 1.0 } else { 0.0 },
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub x0: Vec<f64>,
    pub cond: Condition,
    /// Simulator stability label, 0 or 1.
    pub label: u8,
}

/// Derived seed for stream `tag` and index `i` under `seed`.
fn sub_seed(seed: u64, tag: u64, i: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `x_t = √ᾱ_t·x_0 + √(1−ᾱ_t)·ε` with `ε` drawn from `seed`; returns both.
pub fn forward_diffuse(x0: &[f64], t: usize, schedule: &NoiseSchedule, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = normals(&mut rng, x0.len());
    (diffuse_with(x0, &eps, schedule.alpha_bar[t]), eps)
}

fn diffuse_with(x0: &[f64], eps: &[f64], alpha_bar: f64) -> Vec<f64> {
    let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect()
}

/// Time steps (uniform on `1..=T`) and noise vectors for a batch.
fn draws(n: usize, dim: usize, steps: usize, seed: u64) -> Vec<(usize, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = rng.random_range(1..=steps);
            (t, normals(&mut rng, dim))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Unweighted squared denoising error per batch item.
    pub residuals: Vec<f64>,
}

/// Reward-signed denoising objective `T·mean(w(t)·(2l−1)·‖ε − ε̂‖²)` and
/// its gradient. With `clip`, an unstable item's error counts at most
/// `clip` and contributes no gradient beyond it.
pub fn dsro_loss_grad(
    batch: &[BatchItem],
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    seed: u64,
    clip: Option<f64>,
) -> LossEval {
    let n = batch.len().max(1) as f64;
    let steps = schedule.steps();
    let scale = steps as f64 / n;
    let mut loss = 0.0;
    let mut grad = vec![0.0; denoiser.params.len()];
    let mut residuals = Vec::with_capacity(batch.len());
    for (item, (t, eps)) in batch.iter().zip(draws(batch.len(), denoiser.dim, steps, seed)) {
        let xt = diffuse_with(&item.x0, &eps, schedule.alpha_bar[t]);
        let time = schedule.features(t);
        let tape = denoiser.forward_tape(denoiser.input(&xt, &time, &item.cond.features()));
        let out = denoiser.output(&tape);
        let r: f64 = eps.iter().zip(out).map(|(e, o)| (e - o) * (e - o)).sum();
        residuals.push(r);
        let sign = if item.label == 1 { 1.0 } else { -1.0 };
        let w = schedule.weight(t);
        let clipped = item.label != 1 && clip.is_some_and(|c| r > c);
        if clipped {
            loss += scale * w * sign * clip.unwrap_or(r);
            continue;
        }
        loss += scale * w * sign * r;
        let c = scale * w * sign;
        let d_out: Vec<f64> = eps.iter().zip(out).map(|(e, o)| -2.0 * c * (e - o)).collect();
        denoiser.backward(&tape, &d_out, &mut grad);
    }
    LossEval { loss, grad, residuals }
}

pub fn dsro_loss(
    batch: &[BatchItem],
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    seed: u64,
    clip: Option<f64>,
) -> f64 {
    dsro_loss_grad(batch, denoiser, schedule, seed, clip).loss
}

/// Ancestral sampling from pure noise down to `x_0`, clamped to
/// [`SAMPLE_LIMIT`].
pub fn sample_shape(denoiser: &Denoiser, cond: &Condition, schedule: &NoiseSchedule, seed: u64) -> ShapeParam {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = normals(&mut rng, denoiser.dim);
    let c = cond.features();
    for t in (1..=schedule.steps()).rev() {
        let eps = denoiser.forward(&x, &schedule.features(t), &c);
        let (b, ab) = (schedule.betas[t], schedule.alpha_bar[t]);
        let k = b / (1.0 - ab).sqrt();
        let inv = 1.0 / (1.0 - b).sqrt();
        for (xi, e) in x.iter_mut().zip(&eps) {
            *xi = inv * (*xi - k * e);
        }
        if t > 1 {
            let var = b * (1.0 - schedule.alpha_bar[t - 1]) / (1.0 - ab);
            for xi in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi += var.sqrt() * z;
            }
        }
    }
    ShapeParam(
        x.into_iter()
            .map(|v| if v.is_finite() { v.clamp(-SAMPLE_LIMIT, SAMPLE_LIMIT) } else { 0.0 })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainOptions {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            steps: 3000,
            batch: 64,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Standard denoising training on draws from `families`, indexed by each
/// condition's family id. Returns the per-step loss.
pub fn pretrain(
    denoiser: &mut Denoiser,
    families: &[ShapeFamily],
    conditions: &[Condition],
    schedule: &NoiseSchedule,
    opts: &PretrainOptions,
) -> Result<Vec<f64>, DsroError> {
    if families.is_empty() || conditions.is_empty() || opts.batch == 0 {
        return Err(DsroError::BadOptions("pretraining needs families, conditions and a batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = Adam::new(denoiser.params.len(), opts.lr);
    let mut trace = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let batch: Vec<BatchItem> = (0..opts.batch)
            .map(|_| {
                let cond = conditions[rng.random_range(0..conditions.len())];
                let family = &families[cond.family as usize % families.len()];
                BatchItem {
                    x0: family.sample(&mut rng, Some(cond.seat_height)).0,
                    cond,
                    label: 1,
                }
            })
            .collect();
        let eval = dsro_loss_grad(&batch, denoiser, schedule, sub_seed(opts.seed, 1, step as u64), None);
        adam.step(&mut denoiser.params, &eval.grad);
        trace.push(eval.loss);
    }
    Ok(trace)
}

/// The stability label of a shape: the decoded chair alone (gravity only)
/// or with the sitting template replayed on it.
pub fn label_shape(x: &ShapeParam, settle: &SettleParams, gravity_only: bool) -> u8 {
    let chair = x.decode();
    let pose = Pose::identity();
    let motion = SitTemplate::default().motion(&pose, 0, chair.seat_top(), chair.dims.seat_depth, SitExtras::default());
    let scenario = StabilityScenario {
        bodies: vec![chair.body("chair", pose)],
        motion: Some(motion),
        targets: Vec::new(),
    }
    .with_default_targets();
    stability_label(&scenario, settle, gravity_only).unwrap_or(0)
}

/// Memoized labels keyed on the quantized parameters. The label is always
/// computed from the quantized shape, so lookups never depend on which
/// member of a cell arrived first.
pub struct LabelCache {
    map: Mutex<HashMap<Vec<i64>, u8>>,
    capacity: usize,
    pub settle: SettleParams,
    pub gravity_only: bool,
}

impl LabelCache {
    pub fn new(capacity: usize, settle: SettleParams, gravity_only: bool) -> LabelCache {
        LabelCache {
            map: Mutex::new(HashMap::new()),
            capacity,
            settle,
            gravity_only,
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, x: &ShapeParam) -> u8 {
        let key = x.cache_key();
        if let Some(&l) = self.map.lock().ok().and_then(|m| m.get(&key).copied()).as_ref() {
            return l;
        }
        let l = label_shape(&ShapeParam::from_key(&key), &self.settle, self.gravity_only);
        if let Ok(mut m) = self.map.lock() {
            if m.len() < self.capacity {
                m.insert(key, l);
            }
        }
        l
    }

    pub fn labels(&self, xs: &[ShapeParam]) -> Vec<u8> {
        xs.par_iter().map(|x| self.label(x)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsroOptions {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub cache_size: usize,
    pub seed: u64,
    /// Steps between stability-rate reports.
    pub eval_every: usize,
    pub eval_samples: usize,
    /// Label with the lone-object gravity check instead of the full run.
    pub gravity_only: bool,
    /// Unstable errors are clipped at this multiple of the running median
    /// stable error.
    pub clip_factor: f64,
    pub median_window: usize,
    pub settle: SettleParams,
}

impl Default for DsroOptions {
    fn default() -> Self {
        DsroOptions {
            steps: 200,
            batch: 32,
            lr: 1e-3,
            cache_size: 100_000,
            seed: 0,
            eval_every: 20,
            eval_samples: 64,
            gravity_only: false,
            clip_factor: 4.0,
            median_window: 256,
            settle: SettleParams::default(),
        }
    }
}

impl DsroOptions {
    pub fn validate(&self) -> Result<(), DsroError> {
        if self.batch == 0 || self.eval_every == 0 || self.eval_samples == 0 || self.median_window == 0 {
            return Err(DsroError::BadOptions("batch, eval cadence, eval size and window must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.clip_factor > 0.0) {
            return Err(DsroError::BadOptions("step size and clip factor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub dsro_loss: f64,
    pub stability_rate: f64,
}

#[derive(Clone, Debug)]
pub struct DsroResult {
    pub denoiser: Denoiser,
    pub trace: Vec<TracePoint>,
    pub simulator_calls: usize,
}

fn median(v: &VecDeque<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}

/// Shapes sampled for each condition slot, `n` of them, seeds from `tag`.
fn sample_many(
    denoiser: &Denoiser,
    conds: &[Condition],
    schedule: &NoiseSchedule,
    seed: u64,
    tag: u64,
) -> Vec<ShapeParam> {
    conds
        .par_iter()
        .enumerate()
        .map(|(i, c)| sample_shape(denoiser, c, schedule, sub_seed(seed, tag, i as u64)))
        .collect()
}

/// Fresh-sample stability rate over `n` shapes drawn with fixed seeds.
pub fn stability_rate(
    denoiser: &Denoiser,
    conditions: &[Condition],
    schedule: &NoiseSchedule,
    cache: &LabelCache,
    n: usize,
    seed: u64,
) -> f64 {
    if conditions.is_empty() || n == 0 {
        return 0.0;
    }
    let conds: Vec<Condition> = (0..n).map(|i| conditions[i % conditions.len()]).collect();
    let xs = sample_many(denoiser, &conds, schedule, seed, 3);
    let labels = cache.labels(&xs);
    100.0 * labels.iter().map(|&l| l as f64).sum::<f64>() / n as f64
}

/// Fine-tunes with simulator-labelled samples from the model itself. The
/// trace holds the batch loss and the fresh-sample stability rate every
/// `eval_every` steps and at the end.
pub fn train_dsro(
    denoiser: &Denoiser,
    conditions: &[Condition],
    schedule: &NoiseSchedule,
    opts: &DsroOptions,
) -> Result<DsroResult, DsroError> {
    opts.validate()?;
    if conditions.is_empty() {
        return Err(DsroError::BadOptions("no conditions to train on".into()));
    }
    let mut net = denoiser.clone();
    let cache = LabelCache::new(opts.cache_size, opts.settle.clone(), opts.gravity_only);
    let mut adam = Adam::new(net.params.len(), opts.lr);
    let mut stable_errors: VecDeque<f64> = VecDeque::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trace = Vec::new();
    for step in 0..=opts.steps {
        let conds: Vec<Condition> = (0..opts.batch)
            .map(|_| conditions[rng.random_range(0..conditions.len())])
            .collect();
        let xs = sample_many(&net, &conds, schedule, sub_seed(opts.seed, 2, step as u64), 0);
        let labels = cache.labels(&xs);
        let batch: Vec<BatchItem> = xs
            .into_iter()
            .zip(conds)
            .zip(labels)
            .map(|((x, cond), label)| BatchItem { x0: x.0, cond, label })
            .collect();
        let clip = Some(median(&stable_errors).map_or(0.0, |m| opts.clip_factor * m));
        let eval = dsro_loss_grad(&batch, &net, schedule, sub_seed(opts.seed, 4, step as u64), clip);
        if step % opts.eval_every == 0 || step == opts.steps {
            let rate = stability_rate(&net, conditions, schedule, &cache, opts.eval_samples, opts.seed);
            log::info!("dsro step {step}: loss {:.4} stability {rate:.1}%", eval.loss);
            trace.push(TracePoint {
                step,
                dsro_loss: eval.loss,
                stability_rate: rate,
            });
        }
        if step == opts.steps {
            break;
        }
        for (item, r) in batch.iter().zip(&eval.residuals) {
            if item.label == 1 {
                stable_errors.push_back(*r);
                if stable_errors.len() > opts.median_window {
                    stable_errors.pop_front();
                }
            }
        }
        adam.step(&mut net.params, &eval.grad);
    }
    Ok(DsroResult {
        denoiser: net,
        trace,
        simulator_calls: cache.len(),
    })
}

pub fn trace_to_csv(trace: &[TracePoint]) -> Result<String, DsroError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in trace {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| DsroError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsro::D;

    fn item(x0: Vec<f64>, label: u8) -> BatchItem {
        BatchItem {
            x0,
            cond: Condition::default(),
            label,
        }
    }

    #[test]
    fn diffusion_endpoints() {
        let s = NoiseSchedule::default();
        let x0 = vec![0.5, -1.0, 2.0];
        let (x, eps) = forward_diffuse(&x0, 0, &s, 3);
        assert_eq!(x, x0);
        assert_eq!(eps.len(), 3);
        let (x, eps) = forward_diffuse(&[0.0; 3], 64, &s, 3);
        let k = (1.0 - s.alpha_bar[64]).sqrt();
        for (a, e) in x.iter().zip(&eps) {
            assert_eq!(*a, k * e);
        }
        // inverting with the known noise recovers the data
        let (x, eps) = forward_diffuse(&x0, 17, &s, 9);
        let ab = s.alpha_bar[17];
        for ((a, e), x0) in x.iter().zip(&eps).zip(&x0) {
            assert!(((a - (1.0 - ab).sqrt() * e) / ab.sqrt() - x0).abs() < 1e-10);
        }
    }

    #[test]
    fn label_sign_flips_the_loss() {
        let s = NoiseSchedule::default();
        let net = Denoiser::new(D, &[16], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| normals(&mut rng, D)).collect();
        let good: Vec<BatchItem> = xs.iter().map(|x| item(x.clone(), 1)).collect();
        let bad: Vec<BatchItem> = xs.iter().map(|x| item(x.clone(), 0)).collect();
        let lg = dsro_loss(&good, &net, &s, 5, None);
        assert!(lg > 0.0);
        assert_eq!(dsro_loss(&bad, &net, &s, 5, None), -lg);
        let gg = dsro_loss_grad(&good, &net, &s, 5, None).grad;
        let gb = dsro_loss_grad(&bad, &net, &s, 5, None).grad;
        assert!(gg.iter().zip(&gb).all(|(a, b)| *a == -b));
    }

    #[test]
    fn clipping_caps_unstable_terms() {
        let s = NoiseSchedule::default();
        let net = Denoiser::new(D, &[8], 1);
        let batch = vec![item(vec![0.1; D], 0), item(vec![-0.2; D], 0)];
        let raw = dsro_loss_grad(&batch, &net, &s, 2, None);
        let c = dsro_loss_grad(&batch, &net, &s, 2, Some(1e-6));
        assert!((c.loss + 64.0 * 1e-6).abs() < 1e-15);
        assert!(c.grad.iter().all(|g| *g == 0.0));
        assert!(raw.loss < c.loss);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let s = NoiseSchedule::default();
        let mut net = Denoiser::new(D, &[8], 1);
        let a = sample_shape(&net, &Condition::default(), &s, 4);
        assert_eq!(a, sample_shape(&net, &Condition::default(), &s, 4));
        assert_ne!(a, sample_shape(&net, &Condition::default(), &s, 5));
        for p in &mut net.params {
            *p *= 300.0;
        }
        let b = sample_shape(&net, &Condition::default(), &s, 4);
        assert!(b.0.iter().all(|v| v.abs() <= SAMPLE_LIMIT));
    }

    #[test]
    fn zero_steps_leave_the_network_alone() {
        let s = NoiseSchedule::default();
        let net = Denoiser::new(D, &[8], 3);
        let opts = DsroOptions {
            steps: 0,
            batch: 2,
            eval_samples: 2,
            gravity_only: true,
            ..DsroOptions::default()
        };
        let r = train_dsro(&net, &[Condition::default()], &s, &opts).unwrap();
        assert_eq!(r.denoiser, net);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].step, 0);
        let csv = trace_to_csv(&r.trace).unwrap();
        assert!(csv.starts_with("step,dsro_loss,stability_rate\n"));
    }

    #[test]
    fn median_of_window() {
        let v: VecDeque<f64> = [3.0, 1.0, 2.0].into_iter().collect();
        assert_eq!(median(&v), Some(2.0));
        let v: VecDeque<f64> = [4.0, 1.0, 2.0, 3.0].into_iter().collect();
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(median(&VecDeque::new()), None);
    }
}
