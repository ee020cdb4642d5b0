//! Neural-network autoencoder: five feed-forward networks (symbol encoder,
//! beamformer, presence detector, angle estimator, communication receiver)
//! trained end-to-end through the channel with a two-phase schedule.
//!
//! Layer widths (input → hidden → output):
//!
//! | network      | in      | hidden        | out | head      |
//! |--------------|---------|---------------|-----|-----------|
//! | encoder ε    | M       | K, K, 2K      | 2   | linear    |
//! | beamformer μ | 4       | N, N, N       | 2K  | linear    |
//! | presence ρ   | 2K + 2  | N, N, N       | 1   | sigmoid   |
//! | angle ν      | 2K + 2  | N, N, N       | 1   | tanh·π/2  |
//! | receiver η   | 4       | K, 2K, 2K     | M   | softmax   |
//!
//! Hidden layers use ReLU. Angles enter the networks scaled by `2/π`.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;

use isac_gradtape::{sigmoid, Adam, AdamConfig, CVar, Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::scenario::{
    complex_normal, sample_target_sector, steering_into, AngularSector, RadarArrays, ScenarioConfig, UlaGeometry, C64,
};

const MAGIC: &[u8; 4] = b"NNAE";
const VERSION: u32 = 1;
const DEG2: f64 = (180.0 / PI) * (180.0 / PI);
/// Probability clamp inside the logarithms of the losses.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Sigmoid,
    Tanh,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, head: Head) -> Result<Self> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(IsacError::Config(format!(
                "an MLP needs positive widths and at least one hidden layer, got {widths:?}"
            )));
        }
        Ok(Self { widths, head })
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Weights are `in × out` so a batch (`B × in`) multiplies on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in spec.widths.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Tensor::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..=limit)));
            biases.push(Tensor::zeros(1, w[1]));
        }
        Self { spec, weights, biases }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let weights = spec.widths.windows(2).map(|w| Tensor::zeros(w[0], w[1])).collect();
        let biases = spec.widths.windows(2).map(|w| Tensor::zeros(1, w[1])).collect();
        Self { spec, weights, biases }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// `w0, b0, w1, b1, ...`
    pub fn tensors(&self) -> Vec<Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.clone(), b.clone()]).collect()
    }

    fn set_tensors(&mut self, ts: &[Tensor]) {
        for (i, pair) in ts.chunks_exact(2).enumerate() {
            self.weights[i] = pair[0].clone();
            self.biases[i] = pair[1].clone();
        }
    }

    /// Output-layer pre-activation on the tape; `vars` as in [`Mlp::tensors`].
    pub fn logits_on_tape<'t>(vars: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let n = vars.len() / 2;
        let mut h = x;
        for l in 0..n {
            h = h.matmul(vars[2 * l])?.add(vars[2 * l + 1])?;
            if l + 1 < n {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Output-layer pre-activation for a single input vector.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = self.weights.len();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut out = b.data().to_vec();
            for (i, &hi) in h.iter().enumerate() {
                if hi != 0.0 {
                    for (o, &wij) in out.iter_mut().zip(&w.data()[i * w.cols()..(i + 1) * w.cols()]) {
                        *o += hi * wij;
                    }
                }
            }
            if l + 1 < n {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = out;
        }
        h
    }

    /// Forward pass including the output head.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        match self.spec.head {
            Head::Linear => z,
            Head::Sigmoid => z.into_iter().map(sigmoid).collect(),
            Head::Tanh => z.into_iter().map(f64::tanh).collect(),
            Head::Softmax => softmax(&z),
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Index of each network inside [`AeParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Net {
    Encoder = 0,
    Beamformer = 1,
    Presence = 2,
    Angle = 3,
    Receiver = 4,
}

pub const ALL_NETS: [Net; 5] = [Net::Encoder, Net::Beamformer, Net::Presence, Net::Angle, Net::Receiver];

/// Parameters `ε, μ, ρ, ν, η` of the five networks.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub k: usize,
    pub m: usize,
    pub hidden: usize,
    nets: [Mlp; 5],
}

impl AeParams {
    pub fn specs(k: usize, m: usize, hidden: usize) -> Result<[MlpSpec; 5]> {
        let n = hidden;
        Ok([
            MlpSpec::new(vec![m, k, k, 2 * k, 2], Head::Linear)?,
            MlpSpec::new(vec![4, n, n, n, 2 * k], Head::Linear)?,
            MlpSpec::new(vec![2 * k + 2, n, n, n, 1], Head::Sigmoid)?,
            MlpSpec::new(vec![2 * k + 2, n, n, n, 1], Head::Tanh)?,
            MlpSpec::new(vec![4, k, 2 * k, 2 * k, m], Head::Softmax)?,
        ])
    }

    pub fn glorot<R: Rng + ?Sized>(k: usize, m: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let specs = Self::specs(k, m, hidden)?;
        Ok(Self { k, m, hidden, nets: specs.map(|s| Mlp::glorot(s, rng)) })
    }

    pub fn zeros(k: usize, m: usize, hidden: usize) -> Result<Self> {
        Ok(Self { k, m, hidden, nets: Self::specs(k, m, hidden)?.map(Mlp::zeros) })
    }

    pub fn net(&self, which: Net) -> &Mlp {
        &self.nets[which as usize]
    }

    /// All parameter tensors, network by network in [`ALL_NETS`] order.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.nets.iter().flat_map(Mlp::tensors).collect()
    }

    /// Range of [`AeParams::tensors`] belonging to `which`.
    pub fn slot(&self, which: Net) -> std::ops::Range<usize> {
        let start: usize = self.nets[..which as usize].iter().map(|n| 2 * n.spec.n_layers()).sum();
        start..start + 2 * self.nets[which as usize].spec.n_layers()
    }

    pub fn set_tensors(&mut self, ts: &[Tensor]) -> Result<()> {
        let expected = self.tensors();
        if ts.len() != expected.len() || ts.iter().zip(&expected).any(|(a, b)| a.shape() != b.shape()) {
            return Err(IsacError::InvalidInput("parameter tensors do not match the architecture".into()));
        }
        for which in ALL_NETS {
            let slot = self.slot(which);
            self.nets[which as usize].set_tensors(&ts[slot]);
        }
        Ok(())
    }

    /// Normalized constellation: the encoder applied to every message, scaled
    /// so the average energy over uniform messages is exactly 1.
    pub fn constellation(&self) -> Vec<C64> {
        let raw: Vec<C64> = (0..self.m)
            .map(|j| {
                let mut onehot = vec![0.0; self.m];
                onehot[j] = 1.0;
                let o = self.net(Net::Encoder).forward(&onehot);
                C64::new(o[0], o[1])
            })
            .collect();
        let energy = raw.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.m as f64;
        let scale = if energy > 0.0 { energy.sqrt().recip() } else { 0.0 };
        raw.into_iter().map(|s| s * scale).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let ts = self.tensors();
        for v in [VERSION, self.k as u32, self.m as u32, self.hidden as u32, ts.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in &ts {
            out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| IsacError::Artifact(msg.to_string());
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(bad("not an NNAE autoencoder artifact"));
        }
        let mut pos = 4;
        let word = |pos: &mut usize| -> Result<u32> {
            let w = bytes.get(*pos..*pos + 4).ok_or_else(|| bad("truncated NNAE header"))?;
            *pos += 4;
            Ok(u32::from_le_bytes(w.try_into().unwrap()))
        };
        let version = word(&mut pos)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported NNAE version {version}")));
        }
        let (k, m, hidden, count) =
            (word(&mut pos)? as usize, word(&mut pos)? as usize, word(&mut pos)? as usize, word(&mut pos)? as usize);
        let mut params = Self::zeros(k, m, hidden).map_err(|e| bad(&e.to_string()))?;
        let expected = params.tensors();
        if count != expected.len() {
            return Err(bad(&format!("{count} tensors listed, architecture has {}", expected.len())));
        }
        let mut ts = Vec::with_capacity(count);
        for exp in &expected {
            let (rows, cols) = (word(&mut pos)? as usize, word(&mut pos)? as usize);
            if [rows, cols] != exp.shape() {
                return Err(bad(&format!("tensor shape {rows}x{cols}, expected {:?}", exp.shape())));
            }
            let n = rows * cols * 8;
            let raw = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated NNAE payload"))?;
            pos += n;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            ts.push(Tensor::from_vec(rows, cols, data)?);
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after NNAE payload"));
        }
        params.set_tensors(&ts)?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| IsacError::MissingArtifact(format!("{}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn scaled_prior(target: &AngularSector, comm: &AngularSector) -> [f64; 4] {
    [target.lo(), target.hi(), comm.lo(), comm.hi()].map(|a| a * FRAC_2_PI)
}

fn radar_features(y: &[C64], sector: &AngularSector) -> Vec<f64> {
    y.iter()
        .map(|z| z.re)
        .chain(y.iter().map(|z| z.im))
        .chain([sector.lo() * FRAC_2_PI, sector.hi() * FRAC_2_PI])
        .collect()
}

/// Encoder output for message `m`, normalized over the whole constellation.
pub fn encoder_forward(params: &AeParams, m: usize) -> Result<C64> {
    params
        .constellation()
        .get(m)
        .copied()
        .ok_or_else(|| IsacError::InvalidInput(format!("message {m} outside 0..{}", params.m)))
}

/// Precoder for the prior `(θ_min, θ_max, ϑ_min, ϑ_max)`, scaled to `‖v‖² = E_tx`.
///
/// A ReLU network can output exactly zero for some priors; there is no beam
/// to normalize then.
pub fn beamformer_forward(
    params: &AeParams,
    target: &AngularSector,
    comm: &AngularSector,
    e_tx: f64,
) -> Result<Vec<C64>> {
    let o = params.net(Net::Beamformer).forward(&scaled_prior(target, comm));
    let k = params.k;
    let v: Vec<C64> = (0..k).map(|i| C64::new(o[i], o[k + i])).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm >= 1e-12) {
        return Err(IsacError::DestructiveCombination { norm });
    }
    let scale = e_tx.sqrt() / norm;
    Ok(v.into_iter().map(|z| z * scale).collect())
}

/// Presence logit; the probability is its sigmoid.
pub fn presence_logit(params: &AeParams, y: &[C64], sector: &AngularSector) -> f64 {
    params.net(Net::Presence).logits(&radar_features(y, sector))[0]
}

pub fn presence_forward(params: &AeParams, y: &[C64], sector: &AngularSector) -> f64 {
    sigmoid(presence_logit(params, y, sector))
}

/// Angle estimate in `[−π/2, π/2]`.
pub fn angle_forward(params: &AeParams, y: &[C64], sector: &AngularSector) -> f64 {
    FRAC_PI_2 * params.net(Net::Angle).forward(&radar_features(y, sector))[0]
}

pub fn comm_rx_forward(params: &AeParams, y_c: C64, kappa: C64) -> Vec<f64> {
    params.net(Net::Receiver).forward(&[y_c.re, y_c.im, kappa.re, kappa.im])
}

pub fn bce(t: bool, p: f64) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if t {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn mse_deg(theta_hat: f64, theta: f64) -> f64 {
    (theta_hat - theta).to_degrees().powi(2)
}

pub fn cce(m: usize, probs: &[f64]) -> f64 {
    -probs[m].clamp(PROB_FLOOR, 1.0).ln()
}

/// One training batch of channel realizations; everything the networks do
/// not control is sampled up front so the loss is a deterministic function
/// of the parameters.
#[derive(Debug, Clone)]
pub struct AeBatch {
    /// `B × 4` scaled priors `(θ_min, θ_max, ϑ_min, ϑ_max)`.
    pub prior: Tensor,
    /// `B × M`
    pub onehot: Tensor,
    pub t: Tensor,
    pub theta: Tensor,
    pub g_tx: [Tensor; 2],
    /// Rows `t · α · a_rx(θ)`.
    pub g_rx: [Tensor; 2],
    pub noise_r: [Tensor; 2],
    /// Rows `β · a_tx(ϑ)ᵀ`.
    pub h_c: [Tensor; 2],
    pub noise_c: [Tensor; 2],
}

impl AeBatch {
    /// Samples with a fresh random target sector per sample.
    pub fn sample<R: Rng + ?Sized>(
        arrays: &RadarArrays<'_>,
        comm: &AngularSector,
        scenario: &ScenarioConfig,
        batch: usize,
        rng: &mut R,
    ) -> Self {
        Self::sample_with(arrays, comm, scenario, batch, |r| sample_target_sector(r), rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(
        arrays: &RadarArrays<'_>,
        comm: &AngularSector,
        scenario: &ScenarioConfig,
        batch: usize,
        mut sector: impl FnMut(&mut R) -> AngularSector,
        rng: &mut R,
    ) -> Self {
        let k = arrays.tx.k();
        let m = scenario.m;
        let z = || [Tensor::zeros(batch, k), Tensor::zeros(batch, k)];
        let (mut g_tx, mut g_rx, mut noise_r, mut h_c) = (z(), z(), z(), z());
        let mut noise_c = [Tensor::zeros(batch, 1), Tensor::zeros(batch, 1)];
        let mut prior = Tensor::zeros(batch, 4);
        let mut onehot = Tensor::zeros(batch, m);
        let mut t = Tensor::zeros(batch, 1);
        let mut theta = Tensor::zeros(batch, 1);
        let mut a_tx = vec![C64::new(0.0, 0.0); k];
        let mut a_rx = a_tx.clone();
        let put = |pair: &mut [Tensor; 2], b: usize, j: usize, v: C64| {
            pair[0].set(b, j, v.re);
            pair[1].set(b, j, v.im);
        };
        for b in 0..batch {
            let s = sector(rng);
            for (j, v) in scaled_prior(&s, comm).into_iter().enumerate() {
                prior.set(b, j, v);
            }
            onehot.set(b, rng.random_range(0..m), 1.0);
            let present = rng.random_bool(0.5);
            let th = s.sample(rng);
            let alpha = complex_normal(scenario.sigma_r2, rng);
            t.set(b, 0, present as u8 as f64);
            theta.set(b, 0, th);
            steering_into(arrays.tx, th, &mut a_tx);
            steering_into(&arrays.rx, th, &mut a_rx);
            let gain = if present { alpha } else { C64::new(0.0, 0.0) };
            for j in 0..k {
                put(&mut g_tx, b, j, a_tx[j]);
                put(&mut g_rx, b, j, gain * a_rx[j]);
                put(&mut noise_r, b, j, complex_normal(scenario.n0, rng));
            }
            let vartheta = comm.sample(rng);
            let beta = complex_normal(scenario.sigma_c2, rng);
            steering_into(arrays.tx, vartheta, &mut a_tx);
            for j in 0..k {
                put(&mut h_c, b, j, beta * a_tx[j]);
            }
            put(&mut noise_c, b, 0, complex_normal(scenario.n0, rng));
        }
        Self { prior, onehot, t, theta, g_tx, g_rx, noise_r, h_c, noise_c }
    }

    pub fn len(&self) -> usize {
        self.t.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training phase: detection (1) or angle estimation (2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Detection,
    Angle,
}

impl Phase {
    /// Networks updated in this phase.
    pub fn trained(self) -> [Net; 4] {
        match self {
            Phase::Detection => [Net::Encoder, Net::Beamformer, Net::Presence, Net::Receiver],
            Phase::Angle => [Net::Angle, Net::Encoder, Net::Beamformer, Net::Receiver],
        }
    }
}

/// Loss components of one forward pass.
pub struct AeLoss<'t> {
    pub total: Var<'t>,
    pub bce: Option<Var<'t>>,
    pub mse_deg: Option<Var<'t>>,
    pub cce: Option<Var<'t>>,
}

fn pair<'t>(tape: &'t Tape, p: &[Tensor; 2]) -> Result<CVar<'t>> {
    Ok(CVar::constant(tape, p[0].clone(), p[1].clone())?)
}

/// Forward pass through encoder, beamformer, both channels and the receivers,
/// returning the phase loss `ω·𝓙_sense + (1 − ω)·𝓙_comm`.
///
/// `vars` holds the parameters in [`AeParams::tensors`] order.
pub fn ae_loss<'t>(
    tape: &'t Tape,
    params: &AeParams,
    vars: &[Var<'t>],
    batch: &AeBatch,
    phase: Phase,
    omega_r: f64,
    bce_all_samples: bool,
    e_tx: f64,
) -> Result<AeLoss<'t>> {
    let net = |w: Net| &vars[params.slot(w)];
    let k = params.k;
    let b = batch.len();
    let const_ = |t: &Tensor| tape.constant(t.clone());

    // encoder over the full message set, normalized to unit average energy
    let points = Mlp::logits_on_tape(net(Net::Encoder), tape.constant(Tensor::identity(params.m)))?;
    let energy = points.square().sum().scale(1.0 / params.m as f64).sqrt();
    let points = points.div(energy)?;
    let sym = const_(&batch.onehot).matmul(points)?;
    let s = CVar::new(sym.slice_cols(0, 1)?, sym.slice_cols(1, 2)?)?;

    // precoder per sample, ‖v‖² = E_tx
    let raw = Mlp::logits_on_tape(net(Net::Beamformer), const_(&batch.prior))?;
    let v = CVar::new(raw.slice_cols(0, k)?, raw.slice_cols(k, 2 * k)?)?;
    let norm = v.abs_sq()?.sum_cols().sqrt();
    let v = v.div_real(norm)?.scale(e_tx.sqrt());
    let x = v.mul(s)?;

    let sensing = omega_r != 0.0;
    let comm = omega_r != 1.0;
    let mut out = AeLoss { total: tape.constant(Tensor::scalar(0.0)), bce: None, mse_deg: None, cce: None };

    if sensing {
        let gx = pair(tape, &batch.g_tx)?.mul(x)?;
        let gain = CVar::new(gx.re.sum_cols(), gx.im.sum_cols())?;
        let y = gain.mul(pair(tape, &batch.g_rx)?)?.add(pair(tape, &batch.noise_r)?)?;
        let features = tape.concat_cols(&[y.re, y.im, const_(&batch.prior).slice_cols(0, 2)?])?;
        let t = const_(&batch.t);
        let term = match phase {
            Phase::Detection => {
                let p = Mlp::logits_on_tape(net(Net::Presence), features)?.sigmoid();
                let lp = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()?;
                let lq = p.neg().offset(1.0).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()?;
                let not_t = t.neg().offset(1.0);
                let per = t.mul(lp)?.add(not_t.mul(lq)?)?;
                let (per, count) = if bce_all_samples { (per, b as f64) } else { (per.mul(t)?, batch.t.sum()) };
                let l = if count > 0.0 { per.sum().scale(-1.0 / count) } else { per.sum().scale(0.0) };
                out.bce = Some(l);
                l
            }
            Phase::Angle => {
                let th = Mlp::logits_on_tape(net(Net::Angle), features)?.tanh().scale(FRAC_PI_2);
                let err = th.sub(const_(&batch.theta))?.mul(t)?;
                let count = batch.t.sum();
                let l =
                    if count > 0.0 { err.square().sum().scale(DEG2 / count) } else { err.square().sum().scale(0.0) };
                out.mse_deg = Some(l);
                l
            }
        };
        out.total = out.total.add(term.scale(omega_r))?;
    }

    if comm {
        let hx = pair(tape, &batch.h_c)?.mul(x)?;
        let y_c = CVar::new(hx.re.sum_cols(), hx.im.sum_cols())?.add(pair(tape, &batch.noise_c)?)?;
        let hv = pair(tape, &batch.h_c)?.mul(v)?;
        let features = tape.concat_cols(&[y_c.re, y_c.im, hv.re.sum_cols(), hv.im.sum_cols()])?;
        let probs = Mlp::logits_on_tape(net(Net::Receiver), features)?.softmax_rows()?;
        let l = probs.clamp(PROB_FLOOR, 1.0).ln()?.mul(const_(&batch.onehot))?.sum().scale(-1.0 / b as f64);
        out.cce = Some(l);
        out.total = out.total.add(l.scale(1.0 - omega_r))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnTrainConfig {
    pub omega_r: f64,
    pub hidden: usize,
    /// Total iterations, split evenly between the two phases.
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub bce_all_samples: bool,
}

impl Default for NnTrainConfig {
    fn default() -> Self {
        Self { omega_r: 1.0, hidden: 21, iterations: 10_000, batch_size: 1024, lr: 1e-3, bce_all_samples: true }
    }
}

/// Per-phase loss histories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NnTrainReport {
    pub phase1: Vec<f64>,
    pub phase2: Vec<f64>,
}

/// Runs one optimizer phase in place on `params`.
#[allow(clippy::too_many_arguments)]
pub fn train_phase<R: Rng + ?Sized>(
    params: &mut AeParams,
    phase: Phase,
    iterations: usize,
    cfg: &NnTrainConfig,
    arrays: &RadarArrays<'_>,
    comm: &AngularSector,
    scenario: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut all = params.tensors();
    let trained: Vec<usize> = phase.trained().iter().flat_map(|&n| params.slot(n)).collect();
    let mut sub: Vec<Tensor> = trained.iter().map(|&i| all[i].clone()).collect();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &sub);
    let mut history = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let batch = AeBatch::sample(arrays, comm, scenario, cfg.batch_size, rng);
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = all.iter().map(|t| tape.param(t.clone())).collect();
        let loss = ae_loss(&tape, params, &vars, &batch, phase, cfg.omega_r, cfg.bce_all_samples, scenario.e_tx)?;
        let value = loss.total.item();
        if !value.is_finite() {
            return Err(IsacError::Diverged(format!("NN {phase:?} loss {value} at iteration {it}")));
        }
        let grads = tape.backward(loss.total)?;
        let g: Vec<Tensor> = trained.iter().map(|&i| grads.wrt(vars[i])).collect();
        adam.step(&mut sub, &g)?;
        for (&i, t) in trained.iter().zip(&sub) {
            all[i] = t.clone();
        }
        params.set_tensors(&all)?;
        history.push(value);
        if (it + 1) % 1000 == 0 {
            log::info!("nn {phase:?} iteration {}: loss {value:.4}", it + 1);
        }
    }
    Ok(history)
}

/// Two-phase training from a fresh Glorot initialization drawn from `rng`.
pub fn train_nn<R: Rng + ?Sized>(
    cfg: &NnTrainConfig,
    scenario: &ScenarioConfig,
    geom: &UlaGeometry,
    comm: &AngularSector,
    rng: &mut R,
) -> Result<(AeParams, NnTrainReport)> {
    let init = AeParams::glorot(geom.k(), scenario.m, cfg.hidden, rng)?;
    train_nn_from(init, cfg, scenario, geom, comm, rng)
}

pub fn train_nn_from<R: Rng + ?Sized>(
    init: AeParams,
    cfg: &NnTrainConfig,
    scenario: &ScenarioConfig,
    geom: &UlaGeometry,
    comm: &AngularSector,
    rng: &mut R,
) -> Result<(AeParams, NnTrainReport)> {
    if !(0.0..=1.0).contains(&cfg.omega_r) {
        return Err(IsacError::Config(format!("ω_r must lie in [0, 1], got {}", cfg.omega_r)));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(IsacError::Config("batch size and hidden width must be positive".into()));
    }
    if init.k != geom.k() || init.m != scenario.m {
        return Err(IsacError::Config("autoencoder shape does not match the scenario".into()));
    }
    let arrays = RadarArrays::new(geom, scenario)?;
    let mut params = init;
    let half = cfg.iterations / 2;
    let phase1 = train_phase(&mut params, Phase::Detection, half, cfg, &arrays, comm, scenario, rng)?;
    let phase2 = train_phase(&mut params, Phase::Angle, cfg.iterations - half, cfg, &arrays, comm, scenario, rng)?;
    Ok((params, NnTrainReport { phase1, phase2 }))
}
