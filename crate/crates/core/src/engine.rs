//! Decode controller with per-token FFN skipping.
//!
//! Each generated token is routed either to the full model (prompt prefill and
//! warm-up tokens) or to a skip policy. Every policy runs the attention
//! sub-step, and therefore the KV-cache write, at every layer; only FFN
//! sub-steps are ever dropped.
//!
//! The input-adaptive policy splits the stack into three regions. Layers below
//! `cold_s` and at or above `cold_e` always run both sub-steps. Inside
//! `[cold_s, cold_e)` the FFN is evaluated and the cosine similarity between
//! its input `h` and output `h + ffn(h)` is measured, until one layer reaches
//! `sim_threshold`. From the next layer on, FFN sub-steps are skipped (the
//! residual `h` is carried forward unchanged) for at most `max_skip_k` layers
//! or until the region ends.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KvCache, Model};
use crate::tensor;
use crate::trace::{LayerRecord, SkipTrace, TokenRecord};

/// Knobs of the input-adaptive policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipConfig {
    /// Generated tokens with `token_index <= warm_up_index` use the full model.
    pub warm_up_index: usize,
    pub cold_s: usize,
    pub cold_e: usize,
    /// A layer triggers skipping when `cosine >= sim_threshold`. Values above
    /// one disable skipping.
    pub sim_threshold: f32,
    /// Cap on consecutive skipped layers after a trigger; `None` skips to the
    /// end of the non-cold region.
    pub max_skip_k: Option<usize>,
}

impl SkipConfig {
    pub fn new(warm_up_index: usize, cold_s: usize, cold_e: usize, sim_threshold: f32) -> Self {
        Self {
            warm_up_index,
            cold_s,
            cold_e,
            sim_threshold,
            max_skip_k: None,
        }
    }

    pub fn with_max_skip_k(mut self, k: usize) -> Self {
        self.max_skip_k = Some(k);
        self
    }

    pub fn validate(&self, num_layers: usize) -> Result<()> {
        validate_cold(self.cold_s, self.cold_e, num_layers)?;
        if self.sim_threshold.is_nan() || self.sim_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "sim_threshold must be positive, got {}",
                self.sim_threshold
            )));
        }
        if self.max_skip_k == Some(0) {
            return Err(Error::Config("max_skip_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Default warm-up: 10% of the generation budget, rounded up.
pub fn default_warm_up_index(max_new_tokens: usize) -> usize {
    max_new_tokens.div_ceil(10)
}

fn validate_cold(cold_s: usize, cold_e: usize, num_layers: usize) -> Result<()> {
    if cold_s > cold_e || cold_e > num_layers {
        return Err(Error::Config(format!(
            "cold bounds must satisfy 0 <= cold_s <= cold_e <= {num_layers}, got cold_s={cold_s}, cold_e={cold_e}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SkipPolicy {
    /// Never skip.
    Full,
    /// Every layer's FFN is dropped independently with probability `p`.
    RandomAnywhere {
        p: f64,
        seed: u64,
        warm_up_index: usize,
    },
    /// Like `RandomAnywhere` but only layers in `[cold_s, cold_e)` are eligible.
    RandomNonCold {
        p: f64,
        seed: u64,
        warm_up_index: usize,
        cold_s: usize,
        cold_e: usize,
    },
    InputAdaptive(SkipConfig),
}

impl SkipPolicy {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        let check_p = |p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("skip probability must be in [0, 1], got {p}")))
            }
        };
        match self {
            SkipPolicy::Full => Ok(()),
            SkipPolicy::RandomAnywhere { p, .. } => check_p(*p),
            SkipPolicy::RandomNonCold {
                p, cold_s, cold_e, ..
            } => {
                check_p(*p)?;
                validate_cold(*cold_s, *cold_e, num_layers)
            }
            SkipPolicy::InputAdaptive(c) => c.validate(num_layers),
        }
    }

    pub fn warm_up_index(&self) -> Option<usize> {
        match self {
            SkipPolicy::Full => None,
            SkipPolicy::RandomAnywhere { warm_up_index, .. }
            | SkipPolicy::RandomNonCold { warm_up_index, .. } => Some(*warm_up_index),
            SkipPolicy::InputAdaptive(c) => Some(c.warm_up_index),
        }
    }

    /// Whether `token_index` is decoded with the full model.
    pub fn is_warm_up(&self, token_index: usize) -> bool {
        self.warm_up_index().is_none_or(|w| token_index <= w)
    }

    /// Short human-readable description, also used in reports.
    pub fn label(&self) -> String {
        match self {
            SkipPolicy::Full => "full".into(),
            SkipPolicy::RandomAnywhere {
                p,
                seed,
                warm_up_index,
            } => format!("random(p={p},seed={seed},warmup={warm_up_index})"),
            SkipPolicy::RandomNonCold {
                p,
                seed,
                warm_up_index,
                cold_s,
                cold_e,
            } => format!(
                "random-noncold(p={p},seed={seed},warmup={warm_up_index},cold={cold_s}..{cold_e})"
            ),
            SkipPolicy::InputAdaptive(c) => format!(
                "adaptive(threshold={},warmup={},cold={}..{},k={})",
                c.sim_threshold,
                c.warm_up_index,
                c.cold_s,
                c.cold_e,
                c.max_skip_k.map_or("inf".to_string(), |k| k.to_string())
            ),
        }
    }
}

/// Per-layer skip mask for the random baselines.
///
/// A pure function of `(seed, token_index)`: the generator is seeded with
/// `seed` and positioned on stream `token_index`, and one uniform draw is made
/// per layer. Warm-up tokens and non-random policies get an all-false mask.
pub fn random_skip_mask(policy: &SkipPolicy, token_index: usize, num_layers: usize) -> Vec<bool> {
    let (p, seed, eligible) = match policy {
        SkipPolicy::RandomAnywhere { p, seed, .. } => (*p, *seed, 0..num_layers),
        SkipPolicy::RandomNonCold {
            p,
            seed,
            cold_s,
            cold_e,
            ..
        } => (*p, *seed, *cold_s..*cold_e),
        _ => return vec![false; num_layers],
    };
    if policy.is_warm_up(token_index) {
        return vec![false; num_layers];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(token_index as u64);
    (0..num_layers)
        .map(|l| {
            let u: f64 = rng.gen();
            eligible.contains(&l) && u < p
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Sampling {
    Greedy,
    Temperature { temperature: f32, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeRequest {
    pub prompt: Vec<u32>,
    pub max_new_tokens: usize,
    pub sampling: Sampling,
    /// Generation stops after emitting this token.
    pub stop_token: Option<u32>,
}

impl DecodeRequest {
    pub fn greedy(prompt: Vec<u32>, max_new_tokens: usize) -> Self {
        Self {
            prompt,
            max_new_tokens,
            sampling: Sampling::Greedy,
            stop_token: None,
        }
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        let cfg = &model.config;
        if self.prompt.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        if self.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        if let Some(&id) = self.prompt.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        let needed = self.prompt.len() + self.max_new_tokens;
        if needed > cfg.max_seq_len {
            return Err(Error::ContextOverflow {
                needed,
                max_seq_len: cfg.max_seq_len,
            });
        }
        if let Sampling::Temperature { temperature, .. } = self.sampling {
            if !(temperature.is_finite() && temperature > 0.0) {
                return Err(Error::Config(format!(
                    "temperature must be positive, got {temperature}"
                )));
            }
        }
        Ok(())
    }
}

/// Output of one decode step: next-token logits plus what happened per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f32>,
    pub layers: Vec<LayerRecord>,
    pub trigger_layer: Option<usize>,
}

/// Full-model step; trace shows no skips.
pub fn decode_token_full(
    model: &Model,
    token_id: u32,
    position: usize,
    cache: &mut KvCache,
) -> Result<StepOutput> {
    let logits = model.forward_full(token_id, position, cache)?;
    Ok(StepOutput {
        logits,
        layers: vec![LayerRecord::default(); model.num_layers()],
        trigger_layer: None,
    })
}

/// Full-model step that also measures `cosine(h, h + ffn(h))` at every layer.
/// Produces the same logits and cache contents as [`decode_token_full`].
pub fn decode_token_observed(
    model: &Model,
    token_id: u32,
    position: usize,
    cache: &mut KvCache,
) -> Result<StepOutput> {
    let mut state = model.embed(token_id)?;
    let mut layers = Vec::with_capacity(model.num_layers());
    for layer in 0..model.num_layers() {
        let h = model.attention_substep(layer, &state, cache, position)?;
        let out = model.ffn_substep(layer, &h)?;
        layers.push(LayerRecord {
            ffn_skipped: false,
            sim_score: similarity(&h, &out)?,
        });
        state = out;
    }
    Ok(StepOutput {
        logits: model.lm_head(&state)?,
        layers,
        trigger_layer: None,
    })
}

/// Cosine with the zero-norm case mapped to "not measured".
fn similarity(a: &[f32], b: &[f32]) -> Result<Option<f32>> {
    match tensor::cosine_similarity(a, b) {
        Ok(s) => Ok(Some(s)),
        Err(Error::DegenerateInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Decodes one token with the input-adaptive skip rule.
///
/// The caller is responsible for routing warm-up tokens to the full model;
/// this function always applies the skip rule.
pub fn decode_token_adaptive(
    model: &Model,
    token_id: u32,
    position: usize,
    cache: &mut KvCache,
    config: &SkipConfig,
) -> Result<StepOutput> {
    let num_layers = model.num_layers();
    config.validate(num_layers)?;

    enum Phase {
        Searching,
        Skipping { remaining: usize },
        Done,
    }

    let mut phase = Phase::Searching;
    let mut trigger_layer = None;
    let mut layers = Vec::with_capacity(num_layers);
    let mut state = model.embed(token_id)?;
    for layer in 0..num_layers {
        let h = model.attention_substep(layer, &state, cache, position)?;
        let mut rec = LayerRecord::default();
        let in_region = (config.cold_s..config.cold_e).contains(&layer);
        state = match phase {
            _ if !in_region => model.ffn_substep(layer, &h)?,
            Phase::Searching => {
                let out = model.ffn_substep(layer, &h)?;
                rec.sim_score = similarity(&h, &out)?;
                if rec.sim_score.is_some_and(|s| s >= config.sim_threshold) {
                    trigger_layer = Some(layer);
                    phase = Phase::Skipping {
                        remaining: config.max_skip_k.unwrap_or(usize::MAX),
                    };
                }
                out
            }
            Phase::Skipping { remaining } => {
                rec.ffn_skipped = true;
                phase = if remaining > 1 {
                    Phase::Skipping {
                        remaining: remaining - 1,
                    }
                } else {
                    Phase::Done
                };
                h
            }
            Phase::Done => model.ffn_substep(layer, &h)?,
        };
        layers.push(rec);
    }
    Ok(StepOutput {
        logits: model.lm_head(&state)?,
        layers,
        trigger_layer,
    })
}

/// Decodes one token, dropping the FFN sub-step wherever `mask` is true.
pub fn decode_token_masked(
    model: &Model,
    token_id: u32,
    position: usize,
    cache: &mut KvCache,
    mask: &[bool],
) -> Result<StepOutput> {
    if mask.len() != model.num_layers() {
        return Err(Error::Shape(format!(
            "skip mask has {} entries for a {}-layer model",
            mask.len(),
            model.num_layers()
        )));
    }
    let mut state = model.embed(token_id)?;
    let mut layers = Vec::with_capacity(mask.len());
    for (layer, &skip) in mask.iter().enumerate() {
        let h = model.attention_substep(layer, &state, cache, position)?;
        state = if skip { h } else { model.ffn_substep(layer, &h)? };
        layers.push(LayerRecord {
            ffn_skipped: skip,
            sim_score: None,
        });
    }
    Ok(StepOutput {
        logits: model.lm_head(&state)?,
        layers,
        trigger_layer: None,
    })
}

/// One generated token under `policy`, including warm-up routing.
pub fn decode_token(
    model: &Model,
    policy: &SkipPolicy,
    token_index: usize,
    token_id: u32,
    position: usize,
    cache: &mut KvCache,
) -> Result<StepOutput> {
    if policy.is_warm_up(token_index) {
        return decode_token_full(model, token_id, position, cache);
    }
    match policy {
        SkipPolicy::Full => decode_token_full(model, token_id, position, cache),
        SkipPolicy::InputAdaptive(c) => decode_token_adaptive(model, token_id, position, cache, c),
        SkipPolicy::RandomAnywhere { .. } | SkipPolicy::RandomNonCold { .. } => {
            let mask = random_skip_mask(policy, token_index, model.num_layers());
            decode_token_masked(model, token_id, position, cache, &mask)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    /// Generated token ids (prompt excluded).
    pub tokens: Vec<u32>,
    pub trace: SkipTrace,
    /// Logits that produced the last generated token.
    pub last_logits: Vec<f32>,
    pub cache: KvCache,
    /// Wall-clock time of each generated token's decode step.
    pub token_latencies: Vec<Duration>,
    pub prefill_time: Duration,
}

impl Generation {
    /// Positions written to the cache: the prompt plus every generated token
    /// that was fed back.
    pub fn decoded_positions(&self, prompt_len: usize) -> usize {
        prompt_len + self.tokens.len() - 1
    }

    pub fn decode_time(&self) -> Duration {
        self.token_latencies.iter().sum()
    }
}

struct Sampler {
    sampling: Sampling,
    rng: Option<ChaCha8Rng>,
}

impl Sampler {
    fn new(sampling: Sampling) -> Self {
        let rng = match sampling {
            Sampling::Greedy => None,
            Sampling::Temperature { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Self { sampling, rng }
    }

    fn sample(&mut self, logits: &[f32]) -> u32 {
        match (self.sampling, self.rng.as_mut()) {
            (Sampling::Temperature { temperature, .. }, Some(rng)) => {
                let mut probs: Vec<f32> = logits.iter().map(|l| l / temperature).collect();
                tensor::softmax_in_place(&mut probs);
                let u: f32 = rng.gen();
                let mut acc = 0.0f32;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i as u32;
                    }
                }
                (probs.len() - 1) as u32
            }
            _ => tensor::argmax(logits) as u32,
        }
    }
}

/// Autoregressive generation under `policy`.
///
/// All prompt tokens but the last are prefilled with the full model. Generated
/// token `t` is produced by the step that consumes the previous token (the
/// last prompt token for `t = 0`); its skip decision is taken with
/// `token_index = t`.
pub fn generate(model: &Model, request: &DecodeRequest, policy: &SkipPolicy) -> Result<Generation> {
    request.validate(model)?;
    policy.validate(model.num_layers())?;

    let mut cache = model.new_cache();
    let (last, prefix) = request.prompt.split_last().expect("validated non-empty");
    let started = Instant::now();
    for (pos, &tok) in prefix.iter().enumerate() {
        model.forward_layers(tok, pos, &mut cache)?;
    }
    let prefill_time = started.elapsed();

    let mut sampler = Sampler::new(request.sampling);
    let mut trace = SkipTrace::new(policy.label(), model.num_layers());
    let mut tokens = Vec::with_capacity(request.max_new_tokens);
    let mut latencies = Vec::with_capacity(request.max_new_tokens);
    let mut input = *last;
    let mut last_logits = Vec::new();
    for t in 0..request.max_new_tokens {
        let position = prefix.len() + t;
        let start = Instant::now();
        let step = decode_token(model, policy, t, input, position, &mut cache)?;
        let next = sampler.sample(&step.logits);
        latencies.push(start.elapsed());
        trace.push(TokenRecord {
            token_index: t,
            token_id: next,
            trigger_layer: step.trigger_layer,
            layers: step.layers,
        });
        tokens.push(next);
        last_logits = step.logits;
        if request.stop_token == Some(next) {
            break;
        }
        input = next;
    }
    Ok(Generation {
        tokens,
        trace,
        last_logits,
        cache,
        token_latencies: latencies,
        prefill_time,
    })
}
