//! Per-token record of skip decisions and its serialized forms.
//!
//! The line format holds one JSON object per generated token:
//!
//! ```text
//! {"token_index":3,"token_id":101,"trigger_layer":2,"skipped":[false,false,false,true],"sim":[null,null,0.97,null]}
//! ```
//!
//! The summary is a single JSON document with `policy`, `skip_ratio`,
//! `skips_by_layer`, `trigger_layer_histogram` and `tokens_generated`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayerRecord {
    pub ffn_skipped: bool,
    /// Present only where the cosine was measured.
    pub sim_score: Option<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub token_index: usize,
    pub token_id: u32,
    pub trigger_layer: Option<usize>,
    pub layers: Vec<LayerRecord>,
}

impl TokenRecord {
    pub fn skips(&self) -> usize {
        self.layers.iter().filter(|r| r.ffn_skipped).count()
    }

    pub fn skipped_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, r)| r.ffn_skipped)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    token_index: usize,
    token_id: u32,
    trigger_layer: Option<usize>,
    skipped: Vec<bool>,
    sim: Vec<Option<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub policy: String,
    pub skip_ratio: f64,
    pub skips_by_layer: Vec<usize>,
    pub trigger_layer_histogram: Vec<usize>,
    pub tokens_generated: usize,
    pub total_ffn_evaluations: usize,
    pub total_ffn_skips: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipTrace {
    pub policy: String,
    pub num_layers: usize,
    pub tokens: Vec<TokenRecord>,
}

impl SkipTrace {
    pub fn new(policy: impl Into<String>, num_layers: usize) -> Self {
        Self {
            policy: policy.into(),
            num_layers,
            tokens: Vec::new(),
        }
    }

    pub fn push(&mut self, record: TokenRecord) {
        debug_assert_eq!(record.layers.len(), self.num_layers);
        self.tokens.push(record);
    }

    /// Appends another trace's tokens (e.g. from a second prompt).
    pub fn extend(&mut self, other: SkipTrace) {
        self.tokens.extend(other.tokens);
    }

    pub fn total_ffn_skips(&self) -> usize {
        self.tokens.iter().map(TokenRecord::skips).sum()
    }

    pub fn total_ffn_evaluations(&self) -> usize {
        self.tokens.len() * self.num_layers - self.total_ffn_skips()
    }

    /// `total_ffn_skips / (tokens × layers)`.
    pub fn skip_ratio(&self) -> Result<f64> {
        if self.tokens.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let slots = self.tokens.len() * self.num_layers;
        if slots == 0 {
            return Ok(0.0);
        }
        Ok(self.total_ffn_skips() as f64 / slots as f64)
    }

    pub fn skips_by_layer(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_layers];
        for t in &self.tokens {
            for (o, r) in out.iter_mut().zip(&t.layers) {
                *o += r.ffn_skipped as usize;
            }
        }
        out
    }

    pub fn trigger_layer_histogram(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_layers];
        for l in self.tokens.iter().filter_map(|t| t.trigger_layer) {
            out[l] += 1;
        }
        out
    }

    pub fn summary(&self) -> Result<TraceSummary> {
        Ok(TraceSummary {
            policy: self.policy.clone(),
            skip_ratio: self.skip_ratio()?,
            skips_by_layer: self.skips_by_layer(),
            trigger_layer_histogram: self.trigger_layer_histogram(),
            tokens_generated: self.tokens.len(),
            total_ffn_evaluations: self.total_ffn_evaluations(),
            total_ffn_skips: self.total_ffn_skips(),
        })
    }

    pub fn write_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.tokens {
            let line = TraceLine {
                token_index: t.token_index,
                token_id: t.token_id,
                trigger_layer: t.trigger_layer,
                skipped: t.layers.iter().map(|r| r.ffn_skipped).collect(),
                sim: t.layers.iter().map(|r| r.sim_score).collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }

    /// Parses the line format back. The policy label is not part of the lines.
    pub fn read_lines<R: BufRead>(policy: impl Into<String>, input: R) -> Result<Self> {
        let mut trace: Option<SkipTrace> = None;
        let policy = policy.into();
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<trace>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let l: TraceLine = serde_json::from_str(&line)?;
            if l.skipped.len() != l.sim.len() {
                return Err(Error::Format("trace line with mismatched layer arrays".into()));
            }
            let t = trace.get_or_insert_with(|| SkipTrace::new(policy.clone(), l.skipped.len()));
            if l.skipped.len() != t.num_layers {
                return Err(Error::Format("trace lines disagree on layer count".into()));
            }
            t.tokens.push(TokenRecord {
                token_index: l.token_index,
                token_id: l.token_id,
                trigger_layer: l.trigger_layer,
                layers: l
                    .skipped
                    .into_iter()
                    .zip(l.sim)
                    .map(|(ffn_skipped, sim_score)| LayerRecord {
                        ffn_skipped,
                        sim_score,
                    })
                    .collect(),
            });
        }
        trace.ok_or(Error::EmptyTrace)
    }
}
