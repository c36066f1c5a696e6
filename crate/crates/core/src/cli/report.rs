//! Benchmark and threshold-sweep reports.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{generate, DecodeRequest, SkipConfig, SkipPolicy};
use crate::error::{Error, Result};
use crate::metrics::{degeneration_score, DegenerationMetrics};
use crate::model::Model;
use crate::trace::SkipTrace;

/// Reproducibility stamp embedded in every machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub model_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub policy: String,
    pub runs: usize,
    pub tokens_generated: usize,
    pub num_layers: usize,
    pub skip_ratio: f64,
    /// Median over runs; decode steps only, prefill excluded.
    pub tokens_per_sec: f64,
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    pub ffn_executed: usize,
    pub ffn_skipped: usize,
    pub degeneration: DegenerationMetrics,
}

impl BenchReport {
    /// `ffn_executed + ffn_skipped == tokens × layers`.
    pub fn accounting_holds(&self) -> bool {
        self.ffn_executed + self.ffn_skipped == self.tokens_generated * self.num_layers
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn percentile(sorted_ms: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted_ms.len() as f64).ceil() as usize).clamp(1, sorted_ms.len()) - 1;
    sorted_ms[idx]
}

fn tokens_per_sec(tokens: usize, time: Duration) -> f64 {
    let secs = time.as_secs_f64();
    if secs > 0.0 {
        tokens as f64 / secs
    } else {
        f64::INFINITY
    }
}

/// Runs the same generation `runs` times and reports median throughput.
/// Token output and trace are identical across runs; only timing varies.
pub fn bench(
    model: &Model,
    request: &DecodeRequest,
    policy: &SkipPolicy,
    runs: usize,
) -> Result<BenchReport> {
    if runs == 0 {
        return Err(Error::Config("bench needs at least one run".into()));
    }
    let mut tps = Vec::with_capacity(runs);
    let mut latencies = Vec::new();
    let mut first = None;
    for _ in 0..runs {
        let g = generate(model, request, policy)?;
        tps.push(tokens_per_sec(g.tokens.len(), g.decode_time()));
        latencies.extend(g.token_latencies.iter().map(|d| d.as_secs_f64() * 1e3));
        first.get_or_insert(g);
    }
    let g = first.expect("at least one run");
    latencies.sort_by(|a, b| a.total_cmp(b));
    let trace = &g.trace;
    Ok(BenchReport {
        policy: policy.label(),
        runs,
        tokens_generated: g.tokens.len(),
        num_layers: model.num_layers(),
        skip_ratio: trace.skip_ratio()?,
        tokens_per_sec: median(tps),
        latency_mean_ms: latencies.iter().sum::<f64>() / latencies.len() as f64,
        latency_p95_ms: percentile(&latencies, 0.95),
        ffn_executed: trace.total_ffn_evaluations(),
        ffn_skipped: trace.total_ffn_skips(),
        degeneration: DegenerationMetrics::of(&g.tokens),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f32,
    pub skip_ratio: f64,
    pub tokens_per_sec: f64,
    /// Mean bigram repetition score over prompts (prompts whose output is a
    /// single token are left out).
    pub degeneration: Option<f64>,
    pub tokens_generated: usize,
}

/// Runs the adaptive policy at each threshold over the same prompts.
/// Rows come back sorted by threshold. `base` supplies every other knob.
pub fn sweep(
    model: &Model,
    requests: &[DecodeRequest],
    base: &SkipConfig,
    thresholds: &[f32],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if thresholds.is_empty() {
        return Err(Error::Config("threshold list is empty".into()));
    }
    if requests.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));

    let row = |threshold: f32| -> Result<SweepRow> {
        let policy = SkipPolicy::InputAdaptive(SkipConfig {
            sim_threshold: threshold,
            ..base.clone()
        });
        let mut trace = SkipTrace::new(policy.label(), model.num_layers());
        let mut time = Duration::ZERO;
        let mut degen = Vec::new();
        for req in requests {
            let g = generate(model, req, &policy)?;
            time += g.decode_time();
            if let Ok(s) = degeneration_score(&g.tokens, 2) {
                degen.push(s);
            }
            trace.extend(g.trace);
        }
        Ok(SweepRow {
            threshold,
            skip_ratio: trace.skip_ratio()?,
            tokens_per_sec: tokens_per_sec(trace.tokens.len(), time),
            degeneration: (!degen.is_empty()).then(|| degen.iter().sum::<f64>() / degen.len() as f64),
            tokens_generated: trace.tokens.len(),
        })
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?
        .install(|| sorted.par_iter().map(|&t| row(t)).collect())
}
