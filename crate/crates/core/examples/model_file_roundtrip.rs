//! Save a model, load it back and compare fingerprints.

use ffn_skip::io::{fingerprint, init_random_model, load_model, save_model, ModelHeader};
use ffn_skip::ModelConfig;

fn main() -> ffn_skip::Result<()> {
    let model = init_random_model(&ModelConfig::toy(), 1)?;
    let path = std::env::temp_dir().join(format!("ffn-skip-{}.bin", std::process::id()));
    save_model(&model, &path)?;

    let loaded = load_model(&path)?;
    let header = ModelHeader::for_model(&loaded);
    println!("{} ({} bytes)", path.display(), std::fs::metadata(&path).map_or(0, |m| m.len()));
    println!("format version {}, {} tensors", header.format_version, header.tensors.len());
    for t in header.tensors.iter().take(4) {
        println!("  {:<18} {:?} @ {}", t.name, t.shape, t.byte_offset);
    }
    println!("  ...");
    println!("saved  {}", fingerprint(&model));
    println!("loaded {}", fingerprint(&loaded));
    assert_eq!(model, loaded);
    std::fs::remove_file(&path).ok();
    Ok(())
}
