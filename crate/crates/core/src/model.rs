//! LLaMA-style decoder with separately callable attention and FFN sub-steps.
//!
//! A layer forward is `h = x + attn(norm(x))` followed by
//! `x' = h + ffn(norm(h))`. The attention sub-step always appends the current
//! position's key and value to the cache, so any caller that skips FFN
//! sub-steps still leaves every layer's cache complete.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, vec_mat, Matrix};

/// Residual-stream state of one token at a layer boundary.
pub type HiddenState = Vec<f32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub norm_eps: f32,
    #[serde(default = "default_rope_theta")]
    pub rope_theta: f32,
}

fn default_rope_theta() -> f32 {
    10_000.0
}

impl ModelConfig {
    /// Small configuration used throughout the tests and examples.
    pub fn toy() -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 256,
            vocab_size: 258,
            max_seq_len: 256,
            norm_eps: 1e-5,
            rope_theta: 10_000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0 {
            return bad("hidden_dim, num_heads and ffn_dim must be positive");
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return bad("vocab_size and max_seq_len must be positive");
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return bad("norm_eps must be a positive finite number");
        }
        if !(self.rope_theta.is_finite() && self.rope_theta > 0.0) {
            return bad("rope_theta must be a positive finite number");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Parameters in the four attention projections of one layer.
    pub fn attention_params_per_layer(&self) -> usize {
        4 * self.hidden_dim * self.hidden_dim
    }

    /// Parameters in the three SwiGLU matrices of one layer.
    pub fn ffn_params_per_layer(&self) -> usize {
        3 * self.hidden_dim * self.ffn_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    /// hidden_dim x ffn_dim (gate)
    pub ff_w1: Matrix,
    /// ffn_dim x hidden_dim (down)
    pub ff_w2: Matrix,
    /// hidden_dim x ffn_dim (up)
    pub ff_w3: Matrix,
    pub attn_norm_gain: Vec<f32>,
    pub ffn_norm_gain: Vec<f32>,
}

impl LayerWeights {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (h, f) = (config.hidden_dim, config.ffn_dim);
        Self {
            wq: Matrix::zeros(h, h),
            wk: Matrix::zeros(h, h),
            wv: Matrix::zeros(h, h),
            wo: Matrix::zeros(h, h),
            ff_w1: Matrix::zeros(h, f),
            ff_w2: Matrix::zeros(f, h),
            ff_w3: Matrix::zeros(h, f),
            attn_norm_gain: vec![1.0; h],
            ffn_norm_gain: vec![1.0; h],
        }
    }

    pub fn zero_ffn(&mut self) {
        for m in [&mut self.ff_w1, &mut self.ff_w2, &mut self.ff_w3] {
            m.data_mut().fill(0.0);
        }
    }

    pub fn zero_attention(&mut self) {
        for m in [&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo] {
            m.data_mut().fill(0.0);
        }
    }
}

/// Shape of a stored tensor: `[n]` for vectors, `[rows, cols]` for matrices.
pub type TensorShape = Vec<usize>;

/// Borrowed view of one named tensor.
#[derive(Debug, Clone)]
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: TensorShape,
    pub data: &'a [f32],
}

/// Canonical list of (name, shape) for every tensor of a configuration.
pub fn tensor_layout(config: &ModelConfig) -> Vec<(String, TensorShape)> {
    let (h, f, v) = (config.hidden_dim, config.ffn_dim, config.vocab_size);
    let mut out = vec![("embedding".to_string(), vec![v, h])];
    for l in 0..config.num_layers {
        let p = format!("layers.{l}");
        out.push((format!("{p}.wq"), vec![h, h]));
        out.push((format!("{p}.wk"), vec![h, h]));
        out.push((format!("{p}.wv"), vec![h, h]));
        out.push((format!("{p}.wo"), vec![h, h]));
        out.push((format!("{p}.ff_w1"), vec![h, f]));
        out.push((format!("{p}.ff_w2"), vec![f, h]));
        out.push((format!("{p}.ff_w3"), vec![h, f]));
        out.push((format!("{p}.attn_norm"), vec![h]));
        out.push((format!("{p}.ffn_norm"), vec![h]));
    }
    out.push(("final_norm".to_string(), vec![h]));
    out.push(("lm_head".to_string(), vec![h, v]));
    out
}

/// Immutable model weights plus configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vec<f32>,
    pub lm_head: Matrix,
}

impl Model {
    pub fn new(
        config: ModelConfig,
        embedding: Matrix,
        layers: Vec<LayerWeights>,
        final_norm: Vec<f32>,
        lm_head: Matrix,
    ) -> Result<Self> {
        config.validate()?;
        let model = Self {
            config,
            embedding,
            layers,
            final_norm,
            lm_head,
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// All-zero projections with unit norm gains. Useful for building
    /// hand-rigged fixtures.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (h, v) = (config.hidden_dim, config.vocab_size);
        let layers = (0..config.num_layers)
            .map(|_| LayerWeights::zeros(&config))
            .collect();
        Ok(Self {
            embedding: Matrix::zeros(v, h),
            layers,
            final_norm: vec![1.0; h],
            lm_head: Matrix::zeros(h, v),
            config,
        })
    }

    fn check_shapes(&self) -> Result<()> {
        if self.layers.len() != self.config.num_layers {
            return Err(Error::Shape(format!(
                "config declares {} layers, weights hold {}",
                self.config.num_layers,
                self.layers.len()
            )));
        }
        let layout = tensor_layout(&self.config);
        for (t, (_, shape)) in self.tensors().iter().zip(&layout) {
            if &t.shape != shape {
                return Err(Error::TensorShape {
                    name: t.name.clone(),
                    expected: shape.clone(),
                    found: t.shape.clone(),
                });
            }
        }
        Ok(())
    }

    /// Every tensor in canonical order (the same order as [`tensor_layout`]).
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        fn mat(name: String, m: &Matrix) -> NamedTensor<'_> {
            NamedTensor {
                name,
                shape: vec![m.rows(), m.cols()],
                data: m.data(),
            }
        }
        fn vector(name: String, v: &[f32]) -> NamedTensor<'_> {
            NamedTensor {
                name,
                shape: vec![v.len()],
                data: v,
            }
        }
        let mut out = vec![mat("embedding".into(), &self.embedding)];
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            out.extend([
                mat(format!("{p}.wq"), &l.wq),
                mat(format!("{p}.wk"), &l.wk),
                mat(format!("{p}.wv"), &l.wv),
                mat(format!("{p}.wo"), &l.wo),
                mat(format!("{p}.ff_w1"), &l.ff_w1),
                mat(format!("{p}.ff_w2"), &l.ff_w2),
                mat(format!("{p}.ff_w3"), &l.ff_w3),
                vector(format!("{p}.attn_norm"), &l.attn_norm_gain),
                vector(format!("{p}.ffn_norm"), &l.ffn_norm_gain),
            ]);
        }
        out.push(vector("final_norm".into(), &self.final_norm));
        out.push(mat("lm_head".into(), &self.lm_head));
        out
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    pub fn embed(&self, token_id: u32) -> Result<HiddenState> {
        let id = token_id as usize;
        if id >= self.config.vocab_size {
            return Err(Error::TokenOutOfRange {
                id: token_id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(self.embedding.row(id).to_vec())
    }

    /// Pre-norm causal self-attention with RoPE; appends this position's key
    /// and value to `cache` and returns `state + attn_out`.
    pub fn attention_substep(
        &self,
        layer: usize,
        state: &[f32],
        cache: &mut KvCache,
        position: usize,
    ) -> Result<HiddenState> {
        let cfg = &self.config;
        let w = self.layer(layer)?;
        let found = cache.len(layer);
        if found != position {
            return Err(Error::CacheInvariant {
                layer,
                expected: position,
                found,
            });
        }
        if position >= cfg.max_seq_len {
            return Err(Error::ContextOverflow {
                needed: position + 1,
                max_seq_len: cfg.max_seq_len,
            });
        }
        let x = tensor::rms_norm(state, &w.attn_norm_gain, cfg.norm_eps)?;
        let mut q = vec_mat(&x, &w.wq);
        let mut k = vec_mat(&x, &w.wk);
        let v = vec_mat(&x, &w.wv);
        let head_dim = cfg.head_dim();
        apply_rope(&mut q, head_dim, position, cfg.rope_theta);
        apply_rope(&mut k, head_dim, position, cfg.rope_theta);
        cache.push(layer, &k, &v);

        let lc = &cache.layers[layer];
        let seq = lc.len;
        let h = cfg.hidden_dim;
        let scale = 1.0 / (head_dim as f32).sqrt();
        let mut attn = vec![0.0f32; h];
        let mut scores = vec![0.0f32; seq];
        for head in 0..cfg.num_heads {
            let off = head * head_dim;
            let qh = &q[off..off + head_dim];
            for (t, s) in scores.iter_mut().enumerate() {
                let kt = &lc.keys[t * h + off..t * h + off + head_dim];
                *s = tensor::dot(qh, kt) * scale;
            }
            tensor::softmax_in_place(&mut scores);
            let out = &mut attn[off..off + head_dim];
            for (t, &p) in scores.iter().enumerate() {
                let vt = &lc.values[t * h + off..t * h + off + head_dim];
                for (o, &vv) in out.iter_mut().zip(vt) {
                    *o += p * vv;
                }
            }
        }
        let proj = vec_mat(&attn, &w.wo);
        Ok(tensor::add(state, &proj))
    }

    /// `state + W2 · (silu(norm(state) · W1) ⊙ (norm(state) · W3))`. Touches no cache.
    pub fn ffn_substep(&self, layer: usize, state: &[f32]) -> Result<HiddenState> {
        let w = self.layer(layer)?;
        let x = tensor::rms_norm(state, &w.ffn_norm_gain, self.config.norm_eps)?;
        let mut gate = vec_mat(&x, &w.ff_w1);
        let up = vec_mat(&x, &w.ff_w3);
        for (g, u) in gate.iter_mut().zip(&up) {
            *g = *g * tensor::sigmoid(*g) * u;
        }
        let down = vec_mat(&gate, &w.ff_w2);
        Ok(tensor::add(state, &down))
    }

    pub fn lm_head(&self, state: &[f32]) -> Result<Vec<f32>> {
        let x = tensor::rms_norm(state, &self.final_norm, self.config.norm_eps)?;
        Ok(vec_mat(&x, &self.lm_head))
    }

    /// Runs every layer (attention then FFN) and returns the final residual state.
    pub fn forward_layers(
        &self,
        token_id: u32,
        position: usize,
        cache: &mut KvCache,
    ) -> Result<HiddenState> {
        let mut state = self.embed(token_id)?;
        for layer in 0..self.config.num_layers {
            let h = self.attention_substep(layer, &state, cache, position)?;
            state = self.ffn_substep(layer, &h)?;
        }
        Ok(state)
    }

    pub fn forward_full(
        &self,
        token_id: u32,
        position: usize,
        cache: &mut KvCache,
    ) -> Result<Vec<f32>> {
        let state = self.forward_layers(token_id, position, cache)?;
        self.lm_head(&state)
    }

    pub fn new_cache(&self) -> KvCache {
        KvCache::new(&self.config)
    }

    fn layer(&self, layer: usize) -> Result<&LayerWeights> {
        self.layers.get(layer).ok_or_else(|| {
            Error::Config(format!(
                "layer {layer} out of range for {}-layer model",
                self.config.num_layers
            ))
        })
    }
}

/// Rotates consecutive pairs `(2i, 2i+1)` inside each head. An odd trailing
/// element of a head is left as is.
fn apply_rope(x: &mut [f32], head_dim: usize, position: usize, theta: f32) {
    let pairs = head_dim / 2;
    for p in 0..pairs {
        let inv_freq = (theta as f64).powf(-(2.0 * p as f64) / head_dim as f64);
        let angle = position as f64 * inv_freq;
        let (sin, cos) = (angle.sin() as f32, angle.cos() as f32);
        for head in x.chunks_exact_mut(head_dim) {
            let (a, b) = (head[2 * p], head[2 * p + 1]);
            head[2 * p] = a * cos - b * sin;
            head[2 * p + 1] = a * sin + b * cos;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct LayerCache {
    keys: Vec<f32>,
    values: Vec<f32>,
    len: usize,
}

/// Per-layer keys and values (post-RoPE keys) for every decoded position.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    hidden_dim: usize,
    layers: Vec<LayerCache>,
}

impl KvCache {
    pub fn new(config: &ModelConfig) -> Self {
        let cap = config.hidden_dim * config.max_seq_len.min(4096);
        let layers = (0..config.num_layers)
            .map(|_| LayerCache {
                keys: Vec::with_capacity(cap),
                values: Vec::with_capacity(cap),
                len: 0,
            })
            .collect();
        Self {
            hidden_dim: config.hidden_dim,
            layers,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of cached positions at `layer`.
    pub fn len(&self, layer: usize) -> usize {
        self.layers.get(layer).map_or(0, |l| l.len)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len).collect()
    }

    /// True when every layer holds exactly `positions` entries.
    pub fn is_complete(&self, positions: usize) -> bool {
        self.layers.iter().all(|l| l.len == positions)
    }

    pub fn key(&self, layer: usize, position: usize) -> &[f32] {
        let h = self.hidden_dim;
        &self.layers[layer].keys[position * h..(position + 1) * h]
    }

    pub fn value(&self, layer: usize, position: usize) -> &[f32] {
        let h = self.hidden_dim;
        &self.layers[layer].values[position * h..(position + 1) * h]
    }

    fn push(&mut self, layer: usize, k: &[f32], v: &[f32]) {
        let lc = &mut self.layers[layer];
        lc.keys.extend_from_slice(k);
        lc.values.extend_from_slice(v);
        lc.len += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::init_random_model;

    fn tiny_config(layers: usize, hidden: usize, ffn: usize) -> ModelConfig {
        ModelConfig {
            num_layers: layers,
            hidden_dim: hidden,
            num_heads: 1,
            ffn_dim: ffn,
            vocab_size: 258,
            max_seq_len: 16,
            norm_eps: 1e-5,
            rope_theta: 10_000.0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::toy().validate().is_ok());
        let mut c = ModelConfig::toy();
        c.num_heads = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::toy();
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn embed_lookup_and_bounds() {
        let mut m = Model::zeros(tiny_config(1, 4, 4)).unwrap();
        assert_eq!(m.embed(0).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            m.embed(258),
            Err(Error::TokenOutOfRange { id: 258, .. })
        ));
        for i in 0..4 {
            m.embedding.set(i, i, 1.0);
        }
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            assert_eq!(m.embed(i as u32).unwrap(), e);
        }
    }

    #[test]
    fn zero_attention_is_identity_but_grows_cache() {
        let m = Model::zeros(tiny_config(2, 4, 4)).unwrap();
        let mut cache = m.new_cache();
        let state = vec![1.0, -2.0, 0.5, 3.0];
        let out = m.attention_substep(0, &state, &mut cache, 0).unwrap();
        assert_eq!(out, state);
        assert_eq!(cache.len(0), 1);
        assert_eq!(cache.len(1), 0);
    }

    #[test]
    fn single_position_attention_returns_own_value() {
        // wq=wk=wv=wo=I, unit gains: with one position softmax weight is 1,
        // so attn_out == norm(state) (RoPE at position 0 is the identity).
        let cfg = tiny_config(1, 4, 4);
        let mut m = Model::zeros(cfg.clone()).unwrap();
        let l = &mut m.layers[0];
        l.wq = Matrix::identity(4);
        l.wk = Matrix::identity(4);
        l.wv = Matrix::identity(4);
        l.wo = Matrix::identity(4);
        let state = vec![1.0, 2.0, -1.0, 0.5];
        let mut cache = m.new_cache();
        let out = m.attention_substep(0, &state, &mut cache, 0).unwrap();
        let normed = tensor::rms_norm(&state, &[1.0; 4], cfg.norm_eps).unwrap();
        let expected = tensor::add(&state, &normed);
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cache_mismatch_is_hard_error() {
        let m = Model::zeros(tiny_config(1, 4, 4)).unwrap();
        let mut cache = m.new_cache();
        let err = m.attention_substep(0, &[1.0; 4], &mut cache, 3).unwrap_err();
        assert!(matches!(
            err,
            Error::CacheInvariant {
                layer: 0,
                expected: 3,
                found: 0
            }
        ));
    }

    #[test]
    fn zero_ffn_is_identity() {
        let m = Model::zeros(tiny_config(1, 4, 8)).unwrap();
        let s = vec![0.3, -1.0, 2.0, 0.0];
        assert_eq!(m.ffn_substep(0, &s).unwrap(), s);
    }

    #[test]
    fn single_neuron_swiglu() {
        let mut cfg = tiny_config(1, 2, 1);
        cfg.norm_eps = f32::MIN_POSITIVE;
        let mut m = Model::zeros(cfg).unwrap();
        let l = &mut m.layers[0];
        l.ff_w1 = Matrix::from_rows(&[&[1.0], &[0.0]]);
        l.ff_w3 = Matrix::from_rows(&[&[1.0], &[0.0]]);
        l.ff_w2 = Matrix::from_rows(&[&[1.0, 0.0]]);
        // norm(3, -3) = (1, -1); gate = up = 1; silu(1) * 1 = 1/(1+e^-1).
        let out = m.ffn_substep(0, &[3.0, -3.0]).unwrap();
        let act = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((out[0] as f64 - (3.0 + act)).abs() < 1e-6);
        assert_eq!(out[1], -3.0);
    }

    #[test]
    fn ffn_delta_depends_on_state_only_through_norm() {
        let mut cfg = tiny_config(1, 8, 16);
        cfg.norm_eps = 1e-12;
        let m = init_random_model(&cfg, 3).unwrap();
        let s: Vec<f32> = (0..8).map(|i| (i as f32 - 3.5) * 0.7).collect();
        let scaled: Vec<f32> = s.iter().map(|v| v * 4.0).collect();
        let d1: Vec<f32> = m.ffn_substep(0, &s).unwrap().iter().zip(&s).map(|(a, b)| a - b).collect();
        let d2: Vec<f32> = m
            .ffn_substep(0, &scaled)
            .unwrap()
            .iter()
            .zip(&scaled)
            .map(|(a, b)| a - b)
            .collect();

        // brute-force recomputation of the SwiGLU branch in f64
        let w = &m.layers[0];
        let rms = (s.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / 8.0).sqrt();
        let x: Vec<f64> = s.iter().map(|v| *v as f64 / rms).collect();
        let mut oracle = [0.0f64; 8];
        for j in 0..16 {
            let g: f64 = (0..8).map(|i| x[i] * w.ff_w1.get(i, j) as f64).sum();
            let u: f64 = (0..8).map(|i| x[i] * w.ff_w3.get(i, j) as f64).sum();
            let a = g / (1.0 + (-g).exp()) * u;
            for (k, o) in oracle.iter_mut().enumerate() {
                *o += a * w.ff_w2.get(j, k) as f64;
            }
        }
        for k in 0..8 {
            assert!((d1[k] as f64 - oracle[k]).abs() < 1e-4, "{k}");
            assert!((d2[k] as f64 - oracle[k]).abs() < 1e-4, "{k}");
        }
    }

    #[test]
    fn lm_head_constructions() {
        let cfg = ModelConfig {
            vocab_size: 4,
            ..tiny_config(0, 4, 4)
        };
        let mut m = Model::zeros(cfg.clone()).unwrap();
        let s = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(m.lm_head(&s).unwrap(), vec![0.0; 4]);
        m.lm_head = Matrix::identity(4);
        let normed = tensor::rms_norm(&s, &[1.0; 4], cfg.norm_eps).unwrap();
        assert_eq!(m.lm_head(&s).unwrap(), normed);
    }

    #[test]
    fn forward_full_matches_manual_composition() {
        let m = init_random_model(&tiny_config(3, 16, 32), 11).unwrap();
        let mut c1 = m.new_cache();
        let mut c2 = m.new_cache();
        for (pos, tok) in [5u32, 70, 200, 9].into_iter().enumerate() {
            let logits = m.forward_full(tok, pos, &mut c1).unwrap();
            let mut s = m.embed(tok).unwrap();
            for l in 0..3 {
                let h = m.attention_substep(l, &s, &mut c2, pos).unwrap();
                s = m.ffn_substep(l, &h).unwrap();
            }
            assert_eq!(logits, m.lm_head(&s).unwrap());
            assert!(c1.is_complete(pos + 1));
        }
        assert_eq!(c1, c2);
    }

    #[test]
    fn zero_layer_model_is_embed_then_head() {
        let m = init_random_model(&tiny_config(0, 8, 8), 1).unwrap();
        let mut cache = m.new_cache();
        let logits = m.forward_full(42, 0, &mut cache).unwrap();
        assert_eq!(logits, m.lm_head(&m.embed(42).unwrap()).unwrap());
    }

    #[test]
    fn forward_is_deterministic() {
        let m = init_random_model(&tiny_config(2, 16, 32), 5).unwrap();
        let run = || {
            let mut c = m.new_cache();
            (0..4)
                .map(|p| tensor::argmax(&m.forward_full(p as u32 + 65, p, &mut c).unwrap()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rope_preserves_norm_and_is_identity_at_zero() {
        let mut x: Vec<f32> = (0..8).map(|i| i as f32 + 1.0).collect();
        let orig = x.clone();
        apply_rope(&mut x, 4, 0, 10_000.0);
        assert_eq!(x, orig);
        apply_rope(&mut x, 4, 7, 10_000.0);
        let n0: f32 = orig.iter().map(|v| v * v).sum();
        let n1: f32 = x.iter().map(|v| v * v).sum();
        assert!((n0 - n1).abs() < 1e-3);
    }

    #[test]
    fn table_one_shapes() {
        let cfg = ModelConfig {
            hidden_dim: 4096,
            ffn_dim: 11008,
            num_heads: 32,
            ..ModelConfig::toy()
        };
        assert_eq!(cfg.attention_params_per_layer(), 4 * 16_777_216);
        assert_eq!(cfg.ffn_params_per_layer(), 3 * 45_088_768);
    }
}
