//! Per-layer cosine similarity between the residual state before and after
//! each FFN, and the cold regions derived from it.

use ffn_skip::io::{init_random_model, ByteTokenizer, BOS};
use ffn_skip::{detect_cold_regions, profile_similarity, DetectionParams, ModelConfig};

fn main() -> ffn_skip::Result<()> {
    let config = ModelConfig {
        num_layers: 10,
        ..ModelConfig::toy()
    };
    let model = init_random_model(&config, 7)?;
    let tok = ByteTokenizer::new(config.vocab_size)?;
    let prompts: Vec<Vec<u32>> = ["The quick brown fox", "In the beginning", "fn main() {"]
        .iter()
        .map(|p| std::iter::once(BOS).chain(tok.encode(p.as_bytes())).collect())
        .collect();

    let profile = profile_similarity(&model, &prompts, 32, 2)?;
    let report = detect_cold_regions(&profile.means(), DetectionParams::default())?;

    println!("layer    mean     std  region");
    for (i, l) in profile.layers.iter().enumerate() {
        let region = if report.cold[i] { "cold" } else { "skippable" };
        println!("{i:>5}  {:.4}  {:.4}  {region}", l.mean, l.std);
    }
    println!("{} samples per layer", profile.num_samples);
    match &report.warning {
        Some(w) => println!("{w}"),
        None => println!("skip region: layers {}..{}", report.cold_s, report.cold_e),
    }
    Ok(())
}
