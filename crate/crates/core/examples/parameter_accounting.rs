//! Parameter and FLOP accounting for LLaMA-sized shapes.

use ffn_skip::{savings_report, ModelConfig};

fn shape(layers: usize, hidden: usize, ffn: usize) -> ModelConfig {
    ModelConfig {
        num_layers: layers,
        hidden_dim: hidden,
        num_heads: hidden / 128,
        ffn_dim: ffn,
        vocab_size: 32000,
        max_seq_len: 2048,
        norm_eps: 1e-5,
        rope_theta: 10_000.0,
    }
}

fn main() -> ffn_skip::Result<()> {
    for (name, config) in [("7B", shape(32, 4096, 11008)), ("13B", shape(40, 5120, 13824))] {
        let r = savings_report(&config, 0.0, 512)?;
        println!("{name}: {} parameters", r.params_model_total);
        println!("  attention matrix {:>12}", r.params_attention_matrix);
        println!("  FFN matrix       {:>12}", r.params_ffn_matrix);
        println!("  FFN share        {:>12.4}", r.ffn_param_fraction);
        for ratio in [0.1, 0.25, 0.4] {
            let r = savings_report(&config, ratio, 512)?;
            println!(
                "  skip ratio {ratio:.2}: {:.1}% of per-token FLOPs saved at 512 cached positions",
                100.0 * r.projected_flop_savings
            );
        }
    }
    Ok(())
}
