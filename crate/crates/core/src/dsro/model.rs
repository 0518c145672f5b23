use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DsroError;

pub const DEFAULT_STEPS: usize = 64;
const MAGIC: &[u8; 4] = b"PLDN";
const FORMAT_VERSION: u32 = 1;
/// Width of the diffusion-time features fed to the network.
pub const TIME_FEATURES: usize = 7;
/// Width of the condition descriptor.
pub const COND_FEATURES: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossWeighting {
    #[default]
    Uniform,
    /// Signal-to-noise ratio, capped at 5.
    Snr,
}

/// Variance-preserving schedule with linear betas; index 0 is clean data.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub weighting: LossWeighting,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> NoiseSchedule {
        let mut betas = vec![0.0];
        let mut alpha_bar = vec![1.0];
        for t in 1..=steps {
            let s = if steps > 1 {
                (t - 1) as f64 / (steps - 1) as f64
            } else {
                1.0
            };
            let b = beta_start + s * (beta_end - beta_start);
            betas.push(b);
            alpha_bar.push(alpha_bar[t - 1] * (1.0 - b));
        }
        NoiseSchedule {
            betas,
            alpha_bar,
            weighting: LossWeighting::Uniform,
        }
    }

    pub fn steps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn weight(&self, t: usize) -> f64 {
        match self.weighting {
            LossWeighting::Uniform => 1.0,
            LossWeighting::Snr => {
                let ab = self.alpha_bar[t];
                (ab / (1.0 - ab).max(1e-12)).min(5.0)
            }
        }
    }

    /// Network time features: the scaled step and three harmonics.
    pub fn features(&self, t: usize) -> [f64; TIME_FEATURES] {
        let s = t as f64 / self.steps() as f64;
        let mut f = [0.0; TIME_FEATURES];
        f[0] = s;
        for k in 0..3 {
            let a = std::f64::consts::PI * (k + 1) as f64 * s;
            f[1 + 2 * k] = a.sin();
            f[2 + 2 * k] = a.cos();
        }
        f
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::linear(DEFAULT_STEPS, 1e-4, 0.1)
    }
}

/// Fully connected tanh network predicting the noise from the noisy
/// vector, the time features and the condition. Parameters are one flat
/// vector, layer by layer, weights (row-major, output × input) then biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Denoiser {
    /// `hidden` widths between the input and the `dim`-wide output.
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Denoiser {
        let mut sizes = vec![dim + TIME_FEATURES + COND_FEATURES];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (i, o) = (sizes[l], sizes[l + 1]);
            let scale = (6.0 / (i + o) as f64).sqrt() * if l + 1 == layers { 0.1 } else { 1.0 };
            params.extend((0..i * o).map(|_| rng.random_range(-scale..scale)));
            params.extend(std::iter::repeat_n(0.0, o));
        }
        Denoiser { dim, sizes, params }
    }

    pub fn input(&self, x: &[f64], time: &[f64; TIME_FEATURES], cond: &[f64; COND_FEATURES]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.sizes[0]);
        v.extend_from_slice(x);
        v.extend_from_slice(time);
        v.extend_from_slice(cond);
        v
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            let last = *off.last().unwrap();
            off.push(last + w[0] * w[1] + w[1]);
        }
        off
    }

    pub fn forward_tape(&self, input: Vec<f64>) -> Tape {
        let layers = self.sizes.len() - 1;
        let off = self.layer_offsets();
        let mut acts = vec![input];
        for l in 0..layers {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off[l]..off[l] + ni * no];
            let b = &self.params[off[l] + ni * no..off[l + 1]];
            let a = &acts[l];
            let out: Vec<f64> = (0..no)
                .map(|r| {
                    let z = b[r] + w[r * ni..(r + 1) * ni].iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
                    if l + 1 < layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        Tape { acts }
    }

    pub fn forward(&self, x: &[f64], time: &[f64; TIME_FEATURES], cond: &[f64; COND_FEATURES]) -> Vec<f64> {
        self.forward_tape(self.input(x, time, cond)).acts.pop().unwrap()
    }

    /// Accumulates `dL/dθ` into `grad` given `dL/d(output)`.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let off = self.layer_offsets();
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let a = &tape.acts[l];
            let w = &self.params[off[l]..off[l] + ni * no];
            for r in 0..no {
                let g = &mut grad[off[l] + r * ni..off[l] + (r + 1) * ni];
                for (gi, ai) in g.iter_mut().zip(a) {
                    *gi += delta[r] * ai;
                }
                grad[off[l] + ni * no + r] += delta[r];
            }
            if l == 0 {
                break;
            }
            // through the weights, then the tanh of the layer below
            let mut next = vec![0.0; ni];
            for r in 0..no {
                for (c, n) in next.iter_mut().enumerate() {
                    *n += w[r * ni + c] * delta[r];
                }
            }
            for (n, a) in next.iter_mut().zip(a) {
                *n *= 1.0 - a * a;
            }
            delta = next;
        }
    }

    pub fn output<'a>(&self, tape: &'a Tape) -> &'a [f64] {
        tape.acts.last().unwrap()
    }

    /// Flat little-endian record: magic, version, D, layer count and sizes,
    /// then every parameter.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DsroError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for s in &self.sizes {
            w.write_all(&(*s as u32).to_le_bytes())?;
        }
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Denoiser, DsroError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DsroError::Format("bad magic bytes".into()));
        }
        let mut u32_at = || -> Result<u32, DsroError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = u32_at()?;
        if version != FORMAT_VERSION {
            return Err(DsroError::Format(format!("unsupported version {version}")));
        }
        let dim = u32_at()? as usize;
        let n = u32_at()? as usize;
        if !(2..=64).contains(&n) {
            return Err(DsroError::Format(format!("bad layer count {n}")));
        }
        let sizes: Vec<usize> = (0..n).map(|_| u32_at().map(|v| v as usize)).collect::<Result<_, _>>()?;
        if sizes[0] != dim + TIME_FEATURES + COND_FEATURES || sizes[n - 1] != dim || sizes.contains(&0) {
            return Err(DsroError::Format("layer sizes do not match the dimension".into()));
        }
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = Vec::with_capacity(count);
        let mut b = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut b)?;
            params.push(f64::from_le_bytes(b));
        }
        if r.read(&mut b)? != 0 {
            return Err(DsroError::Format("trailing bytes".into()));
        }
        Ok(Denoiser { dim, sizes, params })
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_invariants() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 64);
        assert_eq!(s.alpha_bar[0], 1.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar[64] < 0.05);
        let snr = NoiseSchedule {
            weighting: LossWeighting::Snr,
            ..s.clone()
        };
        for t in 1..=64 {
            assert_eq!(s.weight(t), 1.0);
            assert!(snr.weight(t) > 0.0 && snr.weight(t) <= 5.0);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Denoiser::new(3, &[5, 4], 2);
        let x = [0.3, -0.7, 1.1];
        let time = NoiseSchedule::default().features(9);
        let cond = [0.0, 0.5, 1.0];
        let probe = [0.2, -1.0, 0.4];
        let f = |n: &Denoiser| n.forward(&x, &time, &cond).iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>();
        let tape = net.forward_tape(net.input(&x, &time, &cond));
        let mut g = vec![0.0; net.params.len()];
        net.backward(&tape, &probe, &mut g);
        let h = 1e-6;
        for i in (0..net.params.len()).step_by(7) {
            let mut a = net.clone();
            let mut b = net.clone();
            a.params[i] += h;
            b.params[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn binary_round_trip_and_rejects() {
        let net = Denoiser::new(4, &[6], 1);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PLDN");
        assert_eq!(buf.len(), 4 + 3 * 4 + 3 * 4 + 8 * net.params.len());
        assert_eq!(Denoiser::read_from(&buf[..]).unwrap(), net);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Denoiser::read_from(&bad[..]).is_err());
        assert!(Denoiser::read_from(&buf[..buf.len() - 1]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(Denoiser::read_from(&long[..]).is_err());
    }

    #[test]
    fn adam_descends_a_bowl() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2), "{p:?}");
    }
}
