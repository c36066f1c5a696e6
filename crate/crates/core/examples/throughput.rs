//! Tokens per second with half of the FFNs skipped on an FFN-heavy model.

use ffn_skip::cli::bench;
use ffn_skip::io::{init_random_model, BOS};
use ffn_skip::{DecodeRequest, ModelConfig, SkipConfig, SkipPolicy};

fn main() -> ffn_skip::Result<()> {
    let config = ModelConfig {
        num_layers: 8,
        hidden_dim: 64,
        num_heads: 4,
        ffn_dim: 1024,
        ..ModelConfig::toy()
    };
    let mut model = init_random_model(&config, 3)?;
    // identity FFN at layer 2 triggers the skip; layers 3..7 are skipped
    model.layers[2].zero_ffn();
    let request = DecodeRequest::greedy(vec![BOS, 65], 128);

    let full = bench(&model, &request, &SkipPolicy::Full, 5)?;
    let skip = bench(&model, &request, &SkipPolicy::InputAdaptive(SkipConfig::new(0, 2, 7, 0.99)), 5)?;
    for r in [&full, &skip] {
        println!(
            "{:<50} skip {:.3}  {:>7.0} tok/s  p95 {:.3} ms",
            r.policy, r.skip_ratio, r.tokens_per_sec, r.latency_p95_ms
        );
    }
    println!("speedup {:.2}x", skip.tokens_per_sec / full.tokens_per_sec);
    Ok(())
}
