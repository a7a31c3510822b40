//! Small f64 networks with hand-written backpropagation: a two-branch 1-D
//! convolutional encoder (ego channels and neighbor channels convolved
//! along time), a dense trunk and a linear or tanh head.
//!
//! All parameters live in one flat vector so that optimizers, target-network
//! averaging and serialization treat every layer alike.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSpec {
    pub time_steps: usize,
    pub ego_channels: usize,
    pub actor_channels: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub dense: Vec<usize>,
    /// Inputs appended after pooling, e.g. the action of a critic.
    pub extra_inputs: usize,
    pub outputs: usize,
    /// Squash outputs with tanh.
    pub squash: bool,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            time_steps: crate::env::HISTORY_LEN,
            ego_channels: 2,
            actor_channels: 2 * crate::env::REGION_COUNT,
            conv_filters: vec![16, 32],
            kernel: 3,
            dense: vec![128, 128],
            extra_inputs: 0,
            outputs: 3,
            squash: false,
        }
    }
}

impl NetSpec {
    pub fn input_len(&self) -> usize {
        (self.ego_channels + self.actor_channels) * self.time_steps
    }

    pub fn validate(&self) -> Result<()> {
        let conv_len = self.time_steps as i64 - (self.conv_filters.len() * (self.kernel.max(1) - 1)) as i64;
        if self.kernel == 0 || conv_len < 1 {
            return Err(Error::Config(format!(
                "convolutions of kernel {} do not fit {} time steps",
                self.kernel, self.time_steps
            )));
        }
        if self.ego_channels == 0 || self.actor_channels == 0 || self.outputs == 0 {
            return Err(Error::Config("channel and output counts must be > 0".into()));
        }
        if self.conv_filters.contains(&0) || self.dense.contains(&0) {
            return Err(Error::Config("layer widths must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv { cin: usize, cout: usize, k: usize },
    Dense { nin: usize, nout: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Slot {
    name: String,
    kind: Kind,
    w: usize,
    b: usize,
}

impl Slot {
    fn shape(&self) -> Vec<usize> {
        match self.kind {
            Kind::Conv { cin, cout, k } => vec![cout, cin, k],
            Kind::Dense { nin, nout } => vec![nout, nin],
        }
    }

    fn n_weights(&self) -> usize {
        self.shape().iter().product()
    }

    fn n_bias(&self) -> usize {
        self.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetSpec,
    slots: Vec<Slot>,
    n_ego: usize,
    n_actor: usize,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    ego: Vec<Vec<f64>>,
    actor: Vec<Vec<f64>>,
    trunk: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Network {
    /// Network with He-uniform hidden layers and a small uniform head.
    pub fn new(spec: NetSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let mut slots = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, kind: Kind, slots: &mut Vec<Slot>| {
            let mut s = Slot { name, kind, w: offset, b: 0 };
            s.b = offset + s.n_weights();
            offset = s.b + s.n_bias();
            slots.push(s);
        };
        for (branch, cin0) in [("ego", spec.ego_channels), ("actor", spec.actor_channels)] {
            let mut cin = cin0;
            for (i, &cout) in spec.conv_filters.iter().enumerate() {
                push(format!("{branch}.conv{i}"), Kind::Conv { cin, cout, k: spec.kernel }, &mut slots);
                cin = cout;
            }
        }
        let n_ego = spec.conv_filters.len();
        let pooled = 2 * spec.conv_filters.last().copied().unwrap_or(0);
        let pooled = if spec.conv_filters.is_empty() {
            spec.input_len()
        } else {
            pooled
        };
        let mut nin = pooled + spec.extra_inputs;
        for (i, &nout) in spec.dense.iter().enumerate() {
            push(format!("trunk.dense{i}"), Kind::Dense { nin, nout }, &mut slots);
            nin = nout;
        }
        push("head".into(), Kind::Dense { nin, nout: spec.outputs }, &mut slots);

        let mut params = vec![0.0; offset];
        let last = slots.len() - 1;
        for (i, s) in slots.iter().enumerate() {
            let fan_in = match s.kind {
                Kind::Conv { cin, k, .. } => cin * k,
                Kind::Dense { nin, .. } => nin,
            };
            let bound = if i == last { 3e-3 } else { (6.0 / fan_in as f64).sqrt() };
            for p in &mut params[s.w..s.b] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            n_ego,
            n_actor: n_ego,
            spec,
            slots,
            params,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.slots.iter().map(|s| s.name.as_str()).collect()
    }

    /// Sets the head's weights and biases to zero.
    pub fn zero_head(&mut self) {
        let s = self.slots.last().expect("a head layer");
        let end = s.b + s.n_bias();
        self.params[s.w..end].fill(0.0);
    }

    fn conv_forward(&self, s: &Slot, x: &[f64], len: usize) -> Vec<f64> {
        let Kind::Conv { cin, cout, k } = s.kind else { unreachable!() };
        let lo = len + 1 - k;
        let w = &self.params[s.w..s.b];
        let b = &self.params[s.b..s.b + cout];
        let mut y = vec![0.0; cout * lo];
        for co in 0..cout {
            let row = &mut y[co * lo..(co + 1) * lo];
            row.fill(b[co]);
            for ci in 0..cin {
                let xs = &x[ci * len..(ci + 1) * len];
                for j in 0..k {
                    let wv = w[(co * cin + ci) * k + j];
                    for (t, r) in row.iter_mut().enumerate() {
                        *r += wv * xs[t + j];
                    }
                }
            }
            for r in row.iter_mut() {
                *r = r.max(0.0);
            }
        }
        y
    }

    fn dense_forward(&self, s: &Slot, x: &[f64]) -> Vec<f64> {
        let Kind::Dense { nin, nout } = s.kind else { unreachable!() };
        let w = &self.params[s.w..s.b];
        (0..nout)
            .map(|o| {
                let row = &w[o * nin..(o + 1) * nin];
                self.params[s.b + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    fn branch_forward(&self, slots: &[Slot], x: &[f64], acts: &mut Vec<Vec<f64>>) -> Vec<f64> {
        let mut len = self.spec.time_steps;
        acts.push(x.to_vec());
        for s in slots {
            let y = self.conv_forward(s, acts.last().expect("input pushed"), len);
            len = len + 1 - self.spec.kernel;
            acts.push(y);
        }
        let last = acts.last().expect("input pushed");
        let ch = last.len() / len;
        (0..ch)
            .map(|c| last[c * len..(c + 1) * len].iter().sum::<f64>() / len as f64)
            .collect()
    }

    /// Forward pass on one channel-major observation plus `extra` inputs.
    pub fn forward(&self, obs: &[f64], extra: &[f64]) -> Result<Cache> {
        let n = self.spec.input_len();
        if obs.len() != n || extra.len() != self.spec.extra_inputs {
            return Err(Error::Shape {
                expected: format!("{n} + {} inputs", self.spec.extra_inputs),
                found: format!("{} + {}", obs.len(), extra.len()),
            });
        }
        let split = self.spec.ego_channels * self.spec.time_steps;
        let mut ego = Vec::new();
        let mut actor = Vec::new();
        let mut features = if self.n_ego == 0 {
            obs.to_vec()
        } else {
            let mut f = self.branch_forward(&self.slots[..self.n_ego], &obs[..split], &mut ego);
            f.extend(self.branch_forward(
                &self.slots[self.n_ego..self.n_ego + self.n_actor],
                &obs[split..],
                &mut actor,
            ));
            f
        };
        features.extend_from_slice(extra);
        let dense = &self.slots[self.n_ego + self.n_actor..];
        let mut trunk = vec![features];
        for (i, s) in dense.iter().enumerate() {
            let mut y = self.dense_forward(s, trunk.last().expect("features pushed"));
            if i + 1 < dense.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if self.spec.squash {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            trunk.push(y);
        }
        let output = trunk.last().expect("head output").clone();
        Ok(Cache {
            ego,
            actor,
            trunk,
            output,
        })
    }

    pub fn predict(&self, obs: &[f64], extra: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(obs, extra)?.output)
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) and
    /// returns d(loss)/d(extra inputs).
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let dense = &self.slots[self.n_ego + self.n_actor..];
        let mut dy: Vec<f64> = d_out.to_vec();
        if self.spec.squash {
            for (g, y) in dy.iter_mut().zip(&cache.output) {
                *g *= 1.0 - y * y;
            }
        }
        for (i, s) in dense.iter().enumerate().rev() {
            let Kind::Dense { nin, nout } = s.kind else { unreachable!() };
            let x = &cache.trunk[i];
            let mut dx = vec![0.0; nin];
            for o in 0..nout {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                grad[s.b + o] += g;
                let w = &self.params[s.w + o * nin..s.w + (o + 1) * nin];
                let gw = &mut grad[s.w + o * nin..s.w + (o + 1) * nin];
                for j in 0..nin {
                    gw[j] += g * x[j];
                    dx[j] += g * w[j];
                }
            }
            if i > 0 {
                for (d, &xv) in dx.iter_mut().zip(x) {
                    if xv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = dx;
        }
        let n_pooled = dy.len() - self.spec.extra_inputs;
        let d_extra = dy[n_pooled..].to_vec();
        if self.n_ego > 0 {
            let half = n_pooled / 2;
            self.branch_backward(&self.slots[..self.n_ego], &cache.ego, &dy[..half], grad);
            self.branch_backward(
                &self.slots[self.n_ego..self.n_ego + self.n_actor],
                &cache.actor,
                &dy[half..n_pooled],
                grad,
            );
        }
        d_extra
    }

    fn branch_backward(&self, slots: &[Slot], acts: &[Vec<f64>], d_pool: &[f64], grad: &mut [f64]) {
        let k = self.spec.kernel;
        let mut lens = vec![self.spec.time_steps];
        for _ in slots {
            lens.push(lens.last().expect("non-empty") + 1 - k);
        }
        let out_len = *lens.last().expect("non-empty");
        let mut dy: Vec<f64> = d_pool
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g / out_len as f64, out_len))
            .collect();
        for (li, s) in slots.iter().enumerate().rev() {
            let Kind::Conv { cin, cout, k } = s.kind else { unreachable!() };
            let (len, lo) = (lens[li], lens[li + 1]);
            let x = &acts[li];
            let y = &acts[li + 1];
            for (g, &yv) in dy.iter_mut().zip(y) {
                if yv <= 0.0 {
                    *g = 0.0;
                }
            }
            let mut dx = vec![0.0; cin * len];
            for co in 0..cout {
                let gy = &dy[co * lo..(co + 1) * lo];
                grad[s.b + co] += gy.iter().sum::<f64>();
                for ci in 0..cin {
                    let xs = &x[ci * len..(ci + 1) * len];
                    for j in 0..k {
                        let idx = (co * cin + ci) * k + j;
                        let wv = self.params[s.w + idx];
                        let mut acc = 0.0;
                        let dxs = &mut dx[ci * len..(ci + 1) * len];
                        for t in 0..lo {
                            acc += gy[t] * xs[t + j];
                            dxs[t + j] += gy[t] * wv;
                        }
                        grad[s.w + idx] += acc;
                    }
                }
            }
            dy = dx;
        }
    }

    /// `self <- tau * online + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, online: &Network, tau: f64) {
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    #[serde(skip)]
    m: Vec<f64>,
    #[serde(skip)]
    v: Vec<f64>,
    #[serde(skip)]
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

const MAGIC: &[u8; 4] = b"FLNW";
pub const WEIGHTS_VERSION: u32 = 1;

fn arch_hash(nets: &[(&str, &Network)]) -> Vec<u8> {
    let mut h = Sha256::new();
    for (name, net) in nets {
        h.update(name.as_bytes());
        h.update(serde_json::to_vec(&net.spec).expect("spec serializes"));
    }
    h.finalize().to_vec()
}

fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) {
    buf.extend_from_slice(&(b.len() as u32).to_le_bytes());
    buf.extend_from_slice(b);
}

/// Writes named networks to one checksummed file.
pub fn save_weights(nets: &[(&str, &Network)], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    buf.extend_from_slice(&arch_hash(nets));
    buf.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for (name, net) in nets {
        put_bytes(&mut buf, name.as_bytes());
        put_bytes(&mut buf, &serde_json::to_vec(&net.spec)?);
        buf.extend_from_slice(&(net.slots.len() as u32).to_le_bytes());
        for s in &net.slots {
            put_bytes(&mut buf, s.name.as_bytes());
            let shape = s.shape();
            buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for p in &net.params[s.w..s.b + s.n_bias()] {
                buf.extend_from_slice(&p.to_le_bytes());
            }
        }
    }
    let sum = Sha256::digest(&buf);
    buf.extend_from_slice(&sum);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::WeightFormat("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|e| Error::WeightFormat(e.to_string()))
    }
}

fn shape_str(shape: &[usize]) -> String {
    format!("{shape:?}")
}

/// Reads every network stored in a weight file.
pub fn load_weights(path: &Path) -> Result<Vec<(String, Network)>> {
    let data = std::fs::read(path)?;
    if data.len() < 32 {
        return Err(Error::Checksum);
    }
    let (body, sum) = data.split_at(data.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Checksum);
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::WeightFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::WeightFormat(format!(
            "unsupported version {version} (expected {WEIGHTS_VERSION})"
        )));
    }
    let hash = r.take(32)?.to_vec();
    let count = r.u32()? as usize;
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let spec: NetSpec = serde_json::from_slice(r.bytes()?)?;
        let mut net = Network::new(spec, &mut rand::SeedableRng::seed_from_u64(0))?;
        let layers = r.u32()? as usize;
        if layers != net.slots.len() {
            return Err(Error::WeightFormat(format!("{name}: {layers} layers stored")));
        }
        for i in 0..layers {
            let lname = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let slot = net.slots[i].clone();
            if lname != slot.name || shape != slot.shape() {
                return Err(Error::WeightFormat(format!("{name}: layer {lname} inconsistent with its spec")));
            }
            for p in &mut net.params[slot.w..slot.b + slot.n_bias()] {
                *p = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        nets.push((name, net));
    }
    let refs: Vec<(&str, &Network)> = nets.iter().map(|(n, net)| (n.as_str(), net)).collect();
    if arch_hash(&refs) != hash {
        return Err(Error::WeightFormat("architecture hash does not match contents".into()));
    }
    Ok(nets)
}

/// Loads a weight file and checks it against the expected architectures,
/// naming the first layer that differs.
pub fn load_weights_checked(path: &Path, expected: &[(&str, &NetSpec)]) -> Result<Vec<Network>> {
    let stored = load_weights(path)?;
    let mut out = Vec::with_capacity(expected.len());
    for (name, spec) in expected {
        let Some((_, net)) = stored.iter().find(|(n, _)| n == name) else {
            return Err(Error::ArchitectureMismatch {
                layer: name.to_string(),
                expected: "network present".into(),
                found: "missing".into(),
            });
        };
        let want = Network::new((*spec).clone(), &mut rand::SeedableRng::seed_from_u64(0))?;
        let n = want.slots.len().max(net.slots.len());
        for i in 0..n {
            let (a, b) = (want.slots.get(i), net.slots.get(i));
            let same = matches!((a, b), (Some(a), Some(b)) if a.name == b.name && a.shape() == b.shape());
            if !same {
                let layer = a.or(b).map(|s| s.name.clone()).unwrap_or_default();
                return Err(Error::ArchitectureMismatch {
                    layer: format!("{name}/{layer}"),
                    expected: a.map_or("absent".into(), |s| shape_str(&s.shape())),
                    found: b.map_or("absent".into(), |s| shape_str(&s.shape())),
                });
            }
        }
        if net.spec != **spec {
            return Err(Error::ArchitectureMismatch {
                layer: format!("{name}/head"),
                expected: format!("{spec:?}"),
                found: format!("{:?}", net.spec),
            });
        }
        out.push(net.clone());
    }
    Ok(out)
}
