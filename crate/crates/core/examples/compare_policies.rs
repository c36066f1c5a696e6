//! Full model, the two random baselines and the adaptive rule side by side.

use ffn_skip::cli::bench;
use ffn_skip::io::{init_random_model, BOS};
use ffn_skip::{generate, DecodeRequest, ModelConfig, SkipConfig, SkipPolicy};

fn main() -> ffn_skip::Result<()> {
    let config = ModelConfig {
        num_layers: 8,
        ffn_dim: 512,
        ..ModelConfig::toy()
    };
    let model = init_random_model(&config, 3)?;
    let request = DecodeRequest::greedy(vec![BOS, 84, 104, 101, 32], 64);
    let warm_up_index = 6;
    let policies = [
        SkipPolicy::Full,
        SkipPolicy::RandomAnywhere { p: 0.3, seed: 1, warm_up_index },
        SkipPolicy::RandomNonCold { p: 0.5, seed: 1, warm_up_index, cold_s: 2, cold_e: 6 },
        SkipPolicy::InputAdaptive(SkipConfig::new(warm_up_index, 2, 6, 0.97)),
    ];

    let reference = generate(&model, &request, &SkipPolicy::Full)?.tokens;
    println!("{:<58} {:>6} {:>9} {:>8} {:>7}", "policy", "skip", "tok/s", "agree", "rep-2");
    for policy in &policies {
        let r = bench(&model, &request, policy, 3)?;
        let tokens = generate(&model, &request, policy)?.tokens;
        let agree = tokens.iter().zip(&reference).take_while(|(a, b)| a == b).count();
        println!(
            "{:<58} {:>6.3} {:>9.0} {:>5}/{:<2} {:>7.3}",
            r.policy,
            r.skip_ratio,
            r.tokens_per_sec,
            agree,
            reference.len(),
            r.degeneration.score(2).unwrap_or(0.0)
        );
    }
    Ok(())
}
