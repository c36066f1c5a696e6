//! Skipped FFNs never leave holes in the key/value cache: attention runs in
//! every layer, so every layer holds every decoded position.

use ffn_skip::io::{init_random_model, BOS};
use ffn_skip::{generate, DecodeRequest, ModelConfig, SkipConfig, SkipPolicy};

fn main() -> ffn_skip::Result<()> {
    let mut model = init_random_model(&ModelConfig::toy(), 9)?;
    // an identity FFN at layer 1 makes every token skip layer 2
    model.layers[1].zero_ffn();
    let prompt = vec![BOS, 104, 105];
    let request = DecodeRequest::greedy(prompt.clone(), 16);
    let g = generate(&model, &request, &SkipPolicy::InputAdaptive(SkipConfig::new(1, 1, 3, 0.99)))?;

    println!("skips by layer: {:?}", g.trace.skips_by_layer());
    println!("cache lengths:  {:?}", g.cache.lengths());
    println!("decoded positions: {}", g.decoded_positions(prompt.len()));
    assert!(g.cache.is_complete(g.decoded_positions(prompt.len())));
    Ok(())
}
