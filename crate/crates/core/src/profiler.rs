//! FFN saturation profiling, cold-region detection and parameter/FLOP
//! accounting.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::decode_token_observed;
use crate::error::{Error, Result};
use crate::io::fingerprint;
use crate::model::{Model, ModelConfig};
use crate::tensor;

/// Streaming mean/variance/min/max of one layer's cosine scores.
///
/// Merges with Chan's parallel update, so partial accumulators built on
/// different threads combine to the same statistics up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Default for RunningStats {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> LayerStats {
        if self.count == 0 {
            return LayerStats::default();
        }
        LayerStats {
            mean: self.mean,
            std: (self.m2 / self.count as f64).max(0.0).sqrt(),
            min: self.min,
            max: self.max,
            count: self.count,
        }
    }
}

/// Population statistics of `cosine(h, h + ffn(h))` at one layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub layers: Vec<LayerStats>,
    /// Generated tokens observed (prompts × tokens per prompt).
    pub num_samples: usize,
    pub num_prompts: usize,
    pub tokens_per_prompt: usize,
    pub model_fingerprint: String,
}

impl SimilarityProfile {
    pub fn means(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.mean).collect()
    }

    /// `layer,mean,std,min,max` with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "layer,mean,std,min,max")?;
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(out, "{i},{},{},{},{}", l.mean, l.std, l.min, l.max)?;
        }
        Ok(())
    }
}

/// Greedy full-model generation over one prompt, collecting every layer's
/// cosine score for every generated token. Returns the accumulators and the
/// generated tokens.
pub fn profile_prompt(
    model: &Model,
    prompt: &[u32],
    tokens_per_prompt: usize,
) -> Result<(Vec<RunningStats>, Vec<u32>)> {
    let request = crate::engine::DecodeRequest::greedy(prompt.to_vec(), tokens_per_prompt);
    request.validate(model)?;
    let mut cache = model.new_cache();
    let (last, prefix) = prompt.split_last().expect("validated non-empty");
    for (pos, &tok) in prefix.iter().enumerate() {
        model.forward_layers(tok, pos, &mut cache)?;
    }
    let mut stats = vec![RunningStats::default(); model.num_layers()];
    let mut tokens = Vec::with_capacity(tokens_per_prompt);
    let mut input = *last;
    for t in 0..tokens_per_prompt {
        let step = decode_token_observed(model, input, prefix.len() + t, &mut cache)?;
        for (s, r) in stats.iter_mut().zip(&step.layers) {
            if let Some(v) = r.sim_score {
                s.push(v as f64);
            }
        }
        input = tensor::argmax(&step.logits) as u32;
        tokens.push(input);
    }
    Ok((stats, tokens))
}

/// Profiles every calibration prompt, `jobs` at a time (at least one).
pub fn profile_similarity(
    model: &Model,
    calibration: &[Vec<u32>],
    tokens_per_prompt: usize,
    jobs: usize,
) -> Result<SimilarityProfile> {
    if calibration.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if tokens_per_prompt == 0 {
        return Err(Error::Config("tokens_per_prompt must be at least 1".into()));
    }
    let run = || -> Result<Vec<Vec<RunningStats>>> {
        calibration
            .par_iter()
            .map(|p| profile_prompt(model, p, tokens_per_prompt).map(|(s, _)| s))
            .collect()
    };
    let parts = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?
        .install(run)?;

    let mut total = vec![RunningStats::default(); model.num_layers()];
    for part in &parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    Ok(SimilarityProfile {
        layers: total.iter().map(RunningStats::finish).collect(),
        num_samples: calibration.len() * tokens_per_prompt,
        num_prompts: calibration.len(),
        tokens_per_prompt,
        model_fingerprint: fingerprint(model),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Minimum mean similarity for a layer to be skippable.
    pub sigma_enter: f64,
    /// Largest allowed drop between consecutive layers inside the region.
    pub slack: f64,
    /// Layers at each end of the stack that are always cold.
    pub min_margin: usize,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            sigma_enter: 0.90,
            slack: 0.01,
            min_margin: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdRegionReport {
    pub cold_s: usize,
    pub cold_e: usize,
    pub params: DetectionParams,
    /// `true` for layers outside `[cold_s, cold_e)`.
    pub cold: Vec<bool>,
    /// Set when no layer qualified and skipping is disabled.
    pub warning: Option<String>,
}

impl ColdRegionReport {
    pub fn is_disabled(&self) -> bool {
        self.cold_s == self.cold_e
    }

    /// Mean of per-layer means over (non-cold, cold) layers; `None` for an
    /// empty side.
    pub fn region_means(&self, means: &[f64]) -> (Option<f64>, Option<f64>) {
        let avg = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
        let hot = means
            .iter()
            .zip(&self.cold)
            .filter(|(_, &c)| !c)
            .map(|(m, _)| *m)
            .collect();
        let cold = means
            .iter()
            .zip(&self.cold)
            .filter(|(_, &c)| c)
            .map(|(m, _)| *m)
            .collect();
        (avg(hot), avg(cold))
    }
}

/// Finds the skippable middle of the stack from per-layer mean similarity.
///
/// The candidate region is the longest run of layers whose means are all at
/// least `sigma_enter` and whose consecutive means never drop by more than
/// `slack`; among equally long runs the deepest wins. The run is then clipped
/// so that `min_margin` layers at each end stay cold.
pub fn detect_cold_regions(means: &[f64], params: DetectionParams) -> Result<ColdRegionReport> {
    let n = means.len();
    if n < 2 * params.min_margin + 1 {
        return Err(Error::Config(format!(
            "profile has {n} layers, need at least {} for min_margin {}",
            2 * params.min_margin + 1,
            params.min_margin
        )));
    }
    let mut best: Option<(usize, usize)> = None;
    let mut run_start: Option<usize> = None;
    for i in 0..=n {
        let ok = i < n && means[i] >= params.sigma_enter;
        let continues = ok
            && run_start.is_some()
            && means[i] >= means[i - 1] - params.slack;
        if continues {
            continue;
        }
        if let Some(s) = run_start {
            if best.is_none_or(|(bs, be)| i - s >= be - bs) {
                best = Some((s, i));
            }
        }
        run_start = ok.then_some(i);
    }
    Ok(finish_report(n, best, params))
}

/// Applies the margin clip and builds the report. Shared with the test oracle.
pub(crate) fn finish_report(
    n: usize,
    interval: Option<(usize, usize)>,
    params: DetectionParams,
) -> ColdRegionReport {
    let clipped = interval.and_then(|(s, e)| {
        let s = s.max(params.min_margin);
        let e = e.min(n - params.min_margin);
        (s < e).then_some((s, e))
    });
    let (cold_s, cold_e, warning) = match clipped {
        Some((s, e)) => (s, e, None),
        None => (
            0,
            0,
            Some("no layer interval qualifies; FFN skipping disabled".to_string()),
        ),
    };
    ColdRegionReport {
        cold_s,
        cold_e,
        params,
        cold: (0..n).map(|l| !(cold_s..cold_e).contains(&l)).collect(),
        warning,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub num_layers: usize,
    /// One attention projection (hidden × hidden).
    pub params_attention_matrix: usize,
    /// One SwiGLU matrix (hidden × ffn).
    pub params_ffn_matrix: usize,
    pub params_attention_per_layer: usize,
    pub params_ffn_per_layer: usize,
    pub params_layer_total: usize,
    pub ffn_param_fraction: f64,
    pub params_model_total: usize,
    pub params_model_ffn: usize,
    /// Multiply-accumulates counted as two FLOPs.
    pub ffn_flops_per_eval: u64,
    pub attention_flops_per_eval: u64,
    pub context_len: usize,
    pub skip_ratio: f64,
    pub projected_flop_savings: f64,
}

/// Parameter and per-token FLOP accounting for a configuration at a given
/// skip ratio. Attention FLOPs include the four projections plus score and
/// value mixing over `context_len` cached positions.
pub fn savings_report(config: &ModelConfig, skip_ratio: f64, context_len: usize) -> Result<SavingsReport> {
    if !(0.0..=1.0).contains(&skip_ratio) {
        return Err(Error::Config(format!("skip_ratio must be in [0, 1], got {skip_ratio}")));
    }
    let (h, f) = (config.hidden_dim, config.ffn_dim);
    let attn = config.attention_params_per_layer();
    let ffn = config.ffn_params_per_layer();
    let norms = 2 * h;
    let layer_total = attn + ffn;
    let ffn_flops = 2 * 3 * (h as u64) * (f as u64);
    let attn_flops = 2 * 4 * (h as u64) * (h as u64) + 2 * 2 * (h as u64) * context_len as u64;
    Ok(SavingsReport {
        hidden_dim: h,
        ffn_dim: f,
        num_layers: config.num_layers,
        params_attention_matrix: h * h,
        params_ffn_matrix: h * f,
        params_attention_per_layer: attn,
        params_ffn_per_layer: ffn,
        params_layer_total: layer_total,
        ffn_param_fraction: ffn as f64 / layer_total as f64,
        params_model_total: config.num_layers * (layer_total + norms)
            + 2 * config.vocab_size * h
            + h,
        params_model_ffn: config.num_layers * ffn,
        ffn_flops_per_eval: ffn_flops,
        attention_flops_per_eval: attn_flops,
        context_len,
        skip_ratio,
        projected_flop_savings: skip_ratio * ffn_flops as f64 / (ffn_flops + attn_flops) as f64,
    })
}
