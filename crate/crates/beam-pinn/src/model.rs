//! The hybrid ansatz: a learnable truncated Fourier modal series plus a
//! boundary-modulated MLP correction,
//!
//! `w(t,x) = sum_n [a_n cos(w_n t) + b_n sin(w_n t)] sin(k_n x)
//!          + lambda * MLP(t,x) * sin(pi x / L)`
//!
//! with `k_n = n pi / L` and `w_n = k_n^2 c`. Fourier derivatives are analytic;
//! neural derivatives go through order-2 t-jets and order-4 x-jets.

use crate::ad::{AdError, Jet, NodeId, ParamId, Tape};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEFAULT_LAYER_DIMS: [usize; 8] = [2, 128, 128, 64, 32, 16, 8, 1];
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid layer dims {0:?}: first must be 2, last must be 1, at least one layer")]
    InvalidDims(Vec<usize>),
    #[error("n_harmonics must be >= 1")]
    NoHarmonics,
    #[error("beam length and wave speed must be positive (L={0}, c={1})")]
    BadGeometry(f64, f64),
    #[error("parameter vector length {got} does not match layout ({expect})")]
    BadParamLength { got: usize, expect: usize },
    #[error("unsupported checkpoint format version {0}")]
    BadFormatVersion(u32),
    #[error("checkpoint shape does not match its config")]
    BadCheckpointShape,
    #[error("jet arithmetic: {0}")]
    Ad(#[from] AdError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Json(#[from] serde_json::Error),
}

/// Standard deviation law for the Fourier coefficient initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourierInit {
    /// std = 0.1 / (n + 1); the default.
    InverseNPlusOne,
    /// std = 0.1 / n; available behind this switch.
    InverseN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_harmonics: usize,
    pub layer_dims: Vec<usize>,
    /// Beam length L.
    pub beam_length: f64,
    /// Wave speed parameter c.
    pub wave_speed: f64,
    pub fourier_init: FourierInit,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_harmonics: 10,
            layer_dims: DEFAULT_LAYER_DIMS.to_vec(),
            beam_length: 10.0,
            wave_speed: 1.0,
            fourier_init: FourierInit::InverseNPlusOne,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_harmonics == 0 {
            return Err(ModelError::NoHarmonics);
        }
        let d = &self.layer_dims;
        if d.len() < 2 || d[0] != 2 || *d.last().unwrap() != 1 || d.iter().any(|&n| n == 0) {
            return Err(ModelError::InvalidDims(d.clone()));
        }
        if self.beam_length <= 0.0 || self.wave_speed <= 0.0 {
            return Err(ModelError::BadGeometry(self.beam_length, self.wave_speed));
        }
        Ok(())
    }

    /// Wave number of harmonic `n` (1-based).
    pub fn wave_number(&self, n: usize) -> f64 {
        n as f64 * std::f64::consts::PI / self.beam_length
    }

    /// Angular frequency of harmonic `n`: `k_n^2 * c`.
    pub fn angular_frequency(&self, n: usize) -> f64 {
        let k = self.wave_number(n);
        k * k * self.wave_speed
    }

    pub fn net_param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn fourier_param_count(&self) -> usize {
        2 * self.n_harmonics
    }

    /// Total length of the flat parameter vector, scaling factor included.
    pub fn n_params(&self) -> usize {
        self.fourier_param_count() + self.net_param_count() + 1
    }
}

/// Breakdown of trainable parameter counts. `total_reported` excludes the
/// scaling factor; `total_with_lambda` includes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub net: usize,
    pub fourier: usize,
    pub total_reported: usize,
    pub total_with_lambda: usize,
}

/// Displacement and its derivatives at one point.
#[derive(Clone, Copy, Debug, Default)]
pub struct DerivativeBundle {
    pub w: f64,
    pub w_t: f64,
    pub w_tt: f64,
    pub w_xxxx: f64,
}

/// Which derivatives `eval_jets` should populate. `w` always is.
#[derive(Clone, Copy, Debug, Default)]
pub struct DerivativeRequest {
    pub w_t: bool,
    pub w_tt: bool,
    pub w_xxxx: bool,
}

impl DerivativeRequest {
    pub fn residual() -> Self {
        DerivativeRequest { w_t: false, w_tt: true, w_xxxx: true }
    }
    pub fn initial() -> Self {
        DerivativeRequest { w_t: true, w_tt: false, w_xxxx: false }
    }
}

/// `sin(pi z)` with argument reduction so integer `z` gives an exact zero.
pub fn sin_pi(z: f64) -> f64 {
    let m = z.floor();
    let r = z - m;
    let s = (std::f64::consts::PI * r).sin();
    if (m as i64).rem_euclid(2) == 0 {
        s
    } else {
        -s
    }
}

/// `cos(pi z)` with the same reduction as [`sin_pi`].
pub fn cos_pi(z: f64) -> f64 {
    let m = z.floor();
    let r = z - m;
    let c = (std::f64::consts::PI * r).cos();
    if (m as i64).rem_euclid(2) == 0 {
        c
    } else {
        -c
    }
}

/// The hybrid model: Fourier coefficients, MLP weights, and the scaling
/// factor, stored as one flat vector so the optimizers see a single
/// parameter space.
///
/// Flat layout: `a[1..=N] | b[1..=N] | per layer (weights row-major, biases) | lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridModel {
    config: ModelConfig,
    params: Vec<f64>,
}

impl HybridModel {
    /// Seeded initialization: `a_n, b_n ~ N(0, std(n))`, MLP weights
    /// Xavier-uniform with gain 0.01, biases zero, scaling factor 1e-8.
    pub fn init(config: ModelConfig, seed: u64) -> Result<HybridModel, ModelError> {
        use rand::{Rng, SeedableRng};
        use rand_distr::{Distribution, Normal};

        config.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = config.n_harmonics;
        let mut params = Vec::with_capacity(config.n_params());

        for coeff_set in 0..2 {
            let _ = coeff_set;
            for h in 1..=n {
                let std = match config.fourier_init {
                    FourierInit::InverseNPlusOne => 0.1 / (h as f64 + 1.0),
                    FourierInit::InverseN => 0.1 / h as f64,
                };
                let dist = Normal::new(0.0, std).expect("positive std");
                params.push(dist.sample(&mut rng));
            }
        }

        const GAIN: f64 = 0.01;
        for dims in config.layer_dims.windows(2) {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let limit = GAIN * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-limit..limit));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }

        params.push(1e-8); // lambda
        debug_assert_eq!(params.len(), config.n_params());
        Ok(HybridModel { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<HybridModel, ModelError> {
        config.validate()?;
        if params.len() != config.n_params() {
            return Err(ModelError::BadParamLength { got: params.len(), expect: config.n_params() });
        }
        Ok(HybridModel { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    /// Cosine coefficient of harmonic `n` (1-based).
    pub fn a(&self, n: usize) -> f64 {
        self.params[n - 1]
    }

    /// Sine coefficient of harmonic `n` (1-based).
    pub fn b(&self, n: usize) -> f64 {
        self.params[self.config.n_harmonics + n - 1]
    }

    pub fn set_a(&mut self, n: usize, v: f64) {
        self.params[n - 1] = v;
    }

    pub fn set_b(&mut self, n: usize, v: f64) {
        let off = self.config.n_harmonics;
        self.params[off + n - 1] = v;
    }

    pub fn lambda(&self) -> f64 {
        *self.params.last().unwrap()
    }

    pub fn set_lambda(&mut self, v: f64) {
        *self.params.last_mut().unwrap() = v;
    }

    fn net_offset(&self) -> usize {
        2 * self.config.n_harmonics
    }

    pub fn lambda_index(&self) -> usize {
        self.params.len() - 1
    }

    /// Flat indices of the MLP weight matrices (biases excluded); used by the
    /// optional weight penalty.
    pub fn weight_matrix_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = Vec::new();
        let mut off = self.net_offset();
        for dims in self.config.layer_dims.windows(2) {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            ranges.push(off..off + fan_in * fan_out);
            off += fan_in * fan_out + fan_out;
        }
        ranges
    }

    pub fn param_count(&self) -> ParamCount {
        let net = self.config.net_param_count();
        let fourier = self.config.fourier_param_count();
        ParamCount {
            net,
            fourier,
            total_reported: net + fourier,
            total_with_lambda: net + fourier + 1,
        }
    }

    /// Displacement at `(t, x)`. Exactly zero at `x = 0` and `x = L` by
    /// construction: the spatial basis goes through [`sin_pi`].
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let cfg = &self.config;
        let u = x / cfg.beam_length;
        let mut w = 0.0;
        for n in 1..=cfg.n_harmonics {
            let omega = cfg.angular_frequency(n);
            let sp = sin_pi(n as f64 * u);
            w += (self.a(n) * (omega * t).cos() + self.b(n) * (omega * t).sin()) * sp;
        }
        w + self.lambda() * self.mlp_value(t, x) * sin_pi(u)
    }

    /// Plain f64 MLP forward (no derivatives).
    fn mlp_value(&self, t: f64, x: f64) -> f64 {
        let dims = &self.config.layer_dims;
        let mut act = vec![t, x];
        let mut off = self.net_offset();
        for (l, d) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (d[0], d[1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let mut next = Vec::with_capacity(fan_out);
            for i in 0..fan_out {
                let mut z = b[i];
                for j in 0..fan_in {
                    z += w[i * fan_in + j] * act[j];
                }
                next.push(if l + 2 == dims.len() { z } else { z.tanh() });
            }
            act = next;
            off += fan_in * fan_out + fan_out;
        }
        act[0]
    }

    /// Jet-valued MLP forward. `t` and `x` must have the same order.
    fn mlp_jet(&self, t: Jet, x: Jet) -> Result<Jet, AdError> {
        let dims = &self.config.layer_dims;
        let order = t.order();
        let mut act = vec![t, x];
        let mut off = self.net_offset();
        for (l, d) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (d[0], d[1]);
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let mut next = Vec::with_capacity(fan_out);
            for i in 0..fan_out {
                let mut z = Jet::constant(b[i], order)?;
                for j in 0..fan_in {
                    z = z.add(&act[j].scale(w[i * fan_in + j]))?;
                }
                next.push(if l + 2 == dims.len() { z } else { z.tanh() });
            }
            act = next;
            off += fan_in * fan_out + fan_out;
        }
        Ok(act[0])
    }

    /// Boundary modulation `sin(pi x / L)` as a jet, boundary-exact base value.
    fn modulation_jet(&self, x: Jet) -> Jet {
        let u = x.value() / self.config.beam_length;
        let arg = x.scale(std::f64::consts::PI / self.config.beam_length);
        arg.sin_cos_with_base(sin_pi(u), cos_pi(u)).0
    }

    /// Displacement derivatives at one point. Fourier contributions are
    /// analytic; neural contributions run order-2 t-jets and order-4 x-jets
    /// through the MLP and the boundary modulation (product rule by jet
    /// multiplication).
    pub fn eval_jets(
        &self,
        t: f64,
        x: f64,
        need: DerivativeRequest,
    ) -> Result<DerivativeBundle, ModelError> {
        let cfg = &self.config;
        let u = x / cfg.beam_length;
        let mut out = DerivativeBundle::default();

        for n in 1..=cfg.n_harmonics {
            let k = cfg.wave_number(n);
            let omega = cfg.angular_frequency(n);
            let sp = sin_pi(n as f64 * u);
            let (st, ct) = ((omega * t).sin(), (omega * t).cos());
            let time = self.a(n) * ct + self.b(n) * st;
            out.w += time * sp;
            if need.w_t {
                out.w_t += omega * (-self.a(n) * st + self.b(n) * ct) * sp;
            }
            if need.w_tt {
                out.w_tt += -omega * omega * time * sp;
            }
            if need.w_xxxx {
                out.w_xxxx += k.powi(4) * time * sp;
            }
        }

        let lambda = self.lambda();
        let sp1 = sin_pi(u);
        if need.w_t || need.w_tt {
            let order = if need.w_tt { 2 } else { 1 };
            let tj = self.mlp_jet(Jet::seed(t, order)?, Jet::constant(x, order)?)?;
            out.w += lambda * tj.value() * sp1;
            if need.w_t {
                out.w_t += lambda * tj.derivative(1)? * sp1;
            }
            if need.w_tt {
                out.w_tt += lambda * tj.derivative(2)? * sp1;
            }
        }
        if need.w_xxxx {
            let xj = Jet::seed(x, 4)?;
            let mlp = self.mlp_jet(Jet::constant(t, 4)?, xj)?;
            let corr = mlp.mul(&self.modulation_jet(xj))?;
            out.w_xxxx += lambda * corr.derivative(4)?;
            if !(need.w_t || need.w_tt) {
                out.w += lambda * corr.value();
            }
        }
        if !(need.w_t || need.w_tt || need.w_xxxx) {
            out.w += lambda * self.mlp_value(t, x) * sp1;
        }
        Ok(out)
    }

    /// Records the full model evaluation on `tape` with the given input jets
    /// and returns the displacement node. Every parameter becomes a leaf, so
    /// a reverse pass yields gradients for the whole flat vector.
    pub fn eval_on_tape(&self, tape: &mut Tape, t: Jet, x: Jet) -> Result<NodeId, ModelError> {
        let cfg = &self.config;
        let order = t.order();
        let t_in = tape.input(t);
        let x_in = tape.input(x);

        let mut w: Option<NodeId> = None;
        for n in 1..=cfg.n_harmonics {
            let omega = cfg.angular_frequency(n);
            let k = cfg.wave_number(n);
            let arg_t = tape.scale(t_in, omega);
            let cos_t = tape.cos(arg_t);
            let sin_t = tape.sin(arg_t);
            let arg_x = tape.scale(x_in, k);
            let sin_x = tape.sin(arg_x);
            let a_node = tape.param(self.a_index(n), self.a(n), order)?;
            let b_node = tape.param(self.b_index(n), self.b(n), order)?;
            let ac = tape.mul(a_node, cos_t)?;
            let bs = tape.mul(b_node, sin_t)?;
            let time = tape.add(ac, bs)?;
            let term = tape.mul(time, sin_x)?;
            w = Some(match w {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        let fourier = w.expect("n_harmonics >= 1");

        let mlp = self.mlp_on_tape(tape, t_in, x_in, order)?;
        let arg_mod = tape.scale(x_in, std::f64::consts::PI / cfg.beam_length);
        let modulation = tape.sin(arg_mod);
        let lambda_node = tape.param(self.lambda_index(), self.lambda(), order)?;
        let lm = tape.mul(lambda_node, mlp)?;
        let corr = tape.mul(lm, modulation)?;
        Ok(tape.add(fourier, corr)?)
    }

    fn a_index(&self, n: usize) -> ParamId {
        n - 1
    }

    fn b_index(&self, n: usize) -> ParamId {
        self.config.n_harmonics + n - 1
    }

    fn mlp_on_tape(
        &self,
        tape: &mut Tape,
        t_in: NodeId,
        x_in: NodeId,
        order: usize,
    ) -> Result<NodeId, ModelError> {
        let dims = &self.config.layer_dims;
        let mut act = vec![t_in, x_in];
        let mut off = self.net_offset();
        for (l, d) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (d[0], d[1]);
            let w_off = off;
            let b_off = off + fan_in * fan_out;
            let mut next = Vec::with_capacity(fan_out);
            for i in 0..fan_out {
                let bid = b_off + i;
                let mut z = tape.param(bid, self.params[bid], order)?;
                for j in 0..fan_in {
                    let wid = w_off + i * fan_in + j;
                    let wn = tape.param(wid, self.params[wid], order)?;
                    let prod = tape.mul(wn, act[j])?;
                    z = tape.add(z, prod)?;
                }
                next.push(if l + 2 == dims.len() { z } else { tape.tanh(z) });
            }
            act = next;
            off = b_off + fan_out;
        }
        Ok(act[0])
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let dims = &self.config.layer_dims;
        let mut layers = Vec::new();
        let mut off = self.net_offset();
        for d in dims.windows(2) {
            let (fan_in, fan_out) = (d[0], d[1]);
            let mut w = Vec::with_capacity(fan_out);
            for i in 0..fan_out {
                w.push(self.params[off + i * fan_in..off + (i + 1) * fan_in].to_vec());
            }
            off += fan_in * fan_out;
            let b = self.params[off..off + fan_out].to_vec();
            off += fan_out;
            layers.push(LayerCheckpoint { w, b });
        }
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed,
            config: self.config.clone(),
            fourier: FourierCheckpoint {
                a: (1..=self.config.n_harmonics).map(|n| self.a(n)).collect(),
                b: (1..=self.config.n_harmonics).map(|n| self.b(n)).collect(),
            },
            layers,
            lambda: self.lambda(),
        }
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<(), ModelError> {
        let doc = self.to_checkpoint(seed);
        let json = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<HybridModel, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let doc: Checkpoint = serde_json::from_str(&text)?;
        doc.into_model()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FourierCheckpoint {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// On-disk model document. Round-trips are value-exact: floats are written in
/// shortest decimal form that reparses to the identical bits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub fourier: FourierCheckpoint,
    pub layers: Vec<LayerCheckpoint>,
    pub lambda: f64,
}

impl Checkpoint {
    pub fn into_model(self) -> Result<HybridModel, ModelError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::BadFormatVersion(self.format_version));
        }
        self.config.validate()?;
        let n = self.config.n_harmonics;
        if self.fourier.a.len() != n
            || self.fourier.b.len() != n
            || self.layers.len() + 1 != self.config.layer_dims.len()
        {
            return Err(ModelError::BadCheckpointShape);
        }
        let mut params = Vec::with_capacity(self.config.n_params());
        params.extend_from_slice(&self.fourier.a);
        params.extend_from_slice(&self.fourier.b);
        for (layer, d) in self.layers.iter().zip(self.config.layer_dims.windows(2)) {
            let (fan_in, fan_out) = (d[0], d[1]);
            if layer.w.len() != fan_out
                || layer.b.len() != fan_out
                || layer.w.iter().any(|row| row.len() != fan_in)
            {
                return Err(ModelError::BadCheckpointShape);
            }
            for row in &layer.w {
                params.extend_from_slice(row);
            }
            params.extend_from_slice(&layer.b);
        }
        params.push(self.lambda);
        HybridModel::from_params(self.config, params)
    }
}
