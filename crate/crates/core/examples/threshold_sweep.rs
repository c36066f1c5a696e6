//! Skip ratio and throughput as the similarity threshold is lowered.

use ffn_skip::cli::sweep;
use ffn_skip::io::{init_random_model, BOS};
use ffn_skip::{DecodeRequest, ModelConfig, SkipConfig};

fn main() -> ffn_skip::Result<()> {
    let config = ModelConfig {
        num_layers: 8,
        ..ModelConfig::toy()
    };
    let model = init_random_model(&config, 11)?;
    let requests: Vec<DecodeRequest> = [&b"alpha"[..], b"beta gamma", b"0123"]
        .iter()
        .map(|p| {
            let prompt = std::iter::once(BOS).chain(p.iter().map(|&b| b as u32)).collect();
            DecodeRequest::greedy(prompt, 48)
        })
        .collect();
    let base = SkipConfig::new(5, 1, 7, 1.0);
    let thresholds = [0.8, 0.9, 0.95, 0.97, 0.98, 0.99, 0.995, 1.5];
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());

    println!("threshold  skip_ratio  tokens/sec  bigram-rep");
    for row in sweep(&model, &requests, &base, &thresholds, jobs)? {
        println!(
            "{:>9.3}  {:>10.3}  {:>10.0}  {:>10.3}",
            row.threshold,
            row.skip_ratio,
            row.tokens_per_sec,
            row.degeneration.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
