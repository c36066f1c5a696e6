//! Generate from a random model with and without FFN skipping.

use ffn_skip::io::{init_random_model, ByteTokenizer, BOS};
use ffn_skip::{generate, DecodeRequest, ModelConfig, SkipConfig, SkipPolicy};

fn main() -> ffn_skip::Result<()> {
    let config = ModelConfig {
        num_layers: 8,
        ..ModelConfig::toy()
    };
    let model = init_random_model(&config, 42)?;
    let tok = ByteTokenizer::new(config.vocab_size)?;

    let mut prompt = vec![BOS];
    prompt.extend(tok.encode(b"Once upon a time"));
    let request = DecodeRequest::greedy(prompt, 40);

    let adaptive = SkipPolicy::InputAdaptive(SkipConfig::new(4, 2, 6, 0.95));
    for policy in [SkipPolicy::Full, adaptive] {
        let g = generate(&model, &request, &policy)?;
        let text = tok.decode(&g.tokens)?;
        println!("{}", policy.label());
        println!("  skip ratio {:.3}", g.trace.skip_ratio()?);
        println!("  output     {:?}", String::from_utf8_lossy(&text));
    }
    Ok(())
}
