//! Profile the bundled byte-level checkpoint, detect its skippable layers and
//! generate with them.

use std::path::Path;

use ffn_skip::io::{load_calibration, load_model, ByteTokenizer, BOS};
use ffn_skip::{
    detect_cold_regions, generate, profile_similarity, DecodeRequest, DetectionParams, SkipConfig,
    SkipPolicy,
};

fn main() -> ffn_skip::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let model = load_model(data.join("tiny_lm.bin"))?;
    let tok = ByteTokenizer::new(model.config.vocab_size)?;
    let encode = |s: &str| -> Vec<u32> { std::iter::once(BOS).chain(tok.encode(s.as_bytes())).collect() };

    let prompts: Vec<Vec<u32>> = load_calibration(data.join("tiny_lm_calibration.txt"))?
        .iter()
        .map(|p| encode(p))
        .collect();
    let profile = profile_similarity(&model, &prompts, 32, 4)?;
    let report = detect_cold_regions(&profile.means(), DetectionParams::default())?;
    let means: Vec<String> = profile.means().iter().map(|m| format!("{m:.3}")).collect();
    println!("layer means: [{}]", means.join(", "));
    println!("skippable layers: {}..{}", report.cold_s, report.cold_e);

    let request = DecodeRequest::greedy(encode("Return the "), 60);
    let adaptive = SkipPolicy::InputAdaptive(SkipConfig::new(6, report.cold_s, report.cold_e, 0.9));
    for policy in [SkipPolicy::Full, adaptive] {
        let g = generate(&model, &request, &policy)?;
        println!("\n{} (skip ratio {:.3})", policy.label(), g.trace.skip_ratio()?);
        println!("{}", String::from_utf8_lossy(&tok.decode(&g.tokens)?));
    }
    Ok(())
}
