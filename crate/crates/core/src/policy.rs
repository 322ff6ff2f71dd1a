//! Actor-critic MLPs with hand-written backpropagation.
//!
//! Actor and critic are separate tanh networks of identical shape. The
//! actor's scalar output is a logit for taking action 1; the critic's is a
//! state value. All parameters live in one flat vector so the optimizer
//! can treat them uniformly.
//!
//! Checkpoint layout (little endian):
//!
//! ```text
//! magic    8 bytes  "RMPOLICY"
//! version  u32      currently 1
//! layers   u32      number of entries in `sizes`
//! sizes    u32 × layers
//! count    u64      number of parameters
//! params   f64 × count
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::env::OBS_DIM;
use crate::error::{Error, Result};
use crate::rng::{stream, Concern};

pub const HIDDEN: usize = 64;
pub const P_MIN: f64 = 1e-6;
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RMPOLICY";
pub const CHECKPOINT_VERSION: u32 = 1;

const TANH_GAIN: f64 = 5.0 / 3.0;
const ACTOR_HEAD_GAIN: f64 = 0.01;
const CRITIC_HEAD_GAIN: f64 = 1.0;

/// Default layer widths shared by both networks.
pub fn default_sizes() -> Vec<usize> {
    vec![OBS_DIM, HIDDEN, HIDDEN, HIDDEN, 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

/// Parameter-shaped buffer of partial derivatives.
pub type Gradients = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Net {
    Actor,
    Critic,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Per network: the input followed by each layer's output.
    actor: Vec<Vec<f64>>,
    critic: Vec<Vec<f64>>,
    n_params: usize,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// Probability of action 1, clamped away from 0 and 1.
    pub p: f64,
    pub logit: f64,
    pub v: f64,
    pub cache: ForwardCache,
}

fn net_len(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rows of a `rows × cols` matrix with orthonormal rows or columns.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut impl rand::Rng) -> Vec<f64> {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // `short` orthonormal vectors of length `long`
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = gain * if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    m
}

impl PolicyParams {
    /// Default-shaped networks initialised from `seed`.
    pub fn init(seed: u64) -> Self {
        Self::init_with(&default_sizes(), seed).expect("default sizes are valid")
    }

    pub fn init_with(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes[sizes.len() - 1] != 1 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let mut rng = stream(seed, Concern::Init, 0);
        let mut data = Vec::with_capacity(2 * net_len(sizes));
        for head_gain in [ACTOR_HEAD_GAIN, CRITIC_HEAD_GAIN] {
            let last = sizes.len() - 2;
            for (l, w) in sizes.windows(2).enumerate() {
                let gain = if l == last { head_gain } else { TANH_GAIN };
                data.extend(orthogonal(w[1], w[0], gain, &mut rng));
                data.extend(std::iter::repeat_n(0.0, w[1]));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            data,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes[sizes.len() - 1] != 1 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        if data.len() != 2 * net_len(&sizes) {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters for sizes {sizes:?}, got {}",
                2 * net_len(&sizes),
                data.len()
            )));
        }
        Ok(Self { sizes, data })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index range of one network's parameters.
    pub fn range(&self, net: Net) -> std::ops::Range<usize> {
        let n = net_len(&self.sizes);
        match net {
            Net::Actor => 0..n,
            Net::Critic => n..2 * n,
        }
    }

    pub fn zero_grad(&self) -> Gradients {
        vec![0.0; self.data.len()]
    }

    fn run_net(&self, net: Net, x: &[f64]) -> Vec<Vec<f64>> {
        let p = &self.data[self.range(net)];
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &p[off..off + n_in * n_out];
            let bias = &p[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = acts.last().unwrap();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let z = bias[o]
                        + weights[o * n_in..(o + 1) * n_in]
                            .iter()
                            .zip(input)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, obs: &[f64]) -> Result<ForwardResult> {
        if obs.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "observation has {} features, network expects {}",
                obs.len(),
                self.input_dim()
            )));
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract(format!("non-finite observation {obs:?}")));
        }
        let actor = self.run_net(Net::Actor, obs);
        let critic = self.run_net(Net::Critic, obs);
        let logit = actor.last().unwrap()[0];
        let v = critic.last().unwrap()[0];
        Ok(ForwardResult {
            p: sigmoid(logit).clamp(P_MIN, 1.0 - P_MIN),
            logit,
            v,
            cache: ForwardCache {
                actor,
                critic,
                n_params: self.data.len(),
            },
        })
    }

    fn backprop_net(&self, net: Net, acts: &[Vec<f64>], d_out: f64, grad: &mut [f64]) {
        let range = self.range(net);
        let p = &self.data[range.clone()];
        let g = &mut grad[range];
        let layers: Vec<(usize, usize, usize)> = {
            let mut off = 0;
            self.sizes
                .windows(2)
                .map(|w| {
                    let r = (off, w[0], w[1]);
                    off += w[0] * w[1] + w[1];
                    r
                })
                .collect()
        };
        let last = layers.len() - 1;
        let mut delta = vec![d_out];
        for l in (0..layers.len()).rev() {
            let (off, n_in, n_out) = layers[l];
            if l != last {
                // through tanh: d/dz = 1 - h^2
                for (d, h) in delta.iter_mut().zip(&acts[l + 1]) {
                    *d *= 1.0 - h * h;
                }
            }
            let input = &acts[l];
            for o in 0..n_out {
                let row = off + o * n_in;
                for i in 0..n_in {
                    g[row + i] += delta[o] * input[i];
                }
                g[off + n_in * n_out + o] += delta[o];
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = off + o * n_in;
                    for i in 0..n_in {
                        prev[i] += p[row + i] * delta[o];
                    }
                }
                delta = prev;
            }
        }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose
    /// derivatives with respect to the actor logit and the value are given.
    pub fn backward_into(&self, cache: &ForwardCache, d_logit: f64, d_value: f64, grad: &mut [f64]) -> Result<()> {
        if cache.n_params != self.data.len() || grad.len() != self.data.len() {
            return Err(Error::Contract("forward cache does not match these parameters".into()));
        }
        if d_logit != 0.0 {
            self.backprop_net(Net::Actor, &cache.actor, d_logit, grad);
        }
        if d_value != 0.0 {
            self.backprop_net(Net::Critic, &cache.critic, d_value, grad);
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, d_logit: f64, d_value: f64) -> Result<Gradients> {
        let mut g = self.zero_grad();
        self.backward_into(cache, d_logit, d_value, &mut g)?;
        Ok(g)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 4 * self.sizes.len() + 8 * self.data.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.data.len() as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(Error::Checkpoint("checkpoint is truncated".into()));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("not a policy checkpoint (bad magic)".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let layers = u32_at(take(4)?) as usize;
        if layers > 64 {
            return Err(bad(format!("implausible layer count {layers}")));
        }
        let mut sizes = Vec::with_capacity(layers);
        for _ in 0..layers {
            sizes.push(u32_at(take(4)?) as usize);
        }
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if sizes.len() < 2 || count != 2 * net_len(&sizes) {
            return Err(bad(format!("parameter count {count} does not fit sizes {sizes:?}")));
        }
        let raw = take(8 * count)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if !r.is_empty() {
            return Err(bad(format!("{} trailing bytes after parameters", r.len())));
        }
        Self::from_parts(sizes, data).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub fn log_prob(p: f64, action: u8) -> f64 {
    let p = p.clamp(P_MIN, 1.0 - P_MIN);
    if action == 1 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// Derivative of `log_prob` with respect to the logit.
pub fn d_log_prob_d_logit(p: f64, action: u8) -> f64 {
    if action == 1 {
        1.0 - p
    } else {
        -p
    }
}

pub fn entropy(p: f64) -> f64 {
    let p = p.clamp(P_MIN, 1.0 - P_MIN);
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

/// Derivative of `entropy` with respect to the logit.
pub fn d_entropy_d_logit(p: f64, logit: f64) -> f64 {
    -logit * p * (1.0 - p)
}

/// Draws an action from Bernoulli(`p`).
pub fn sample_action(p: f64, rng: &mut impl rand::Rng) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// RNG for action sampling in environment `index`.
pub fn action_rng(seed: u64, index: u32) -> rand_chacha::ChaCha8Rng {
    stream(seed, Concern::Actions, index)
}
