use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{LayerWeights, Model, ModelConfig};
use crate::tensor::Matrix;

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-scale..=scale))
        .collect();
    Matrix::new(rows, cols, data).expect("finite uniform samples")
}

/// Deterministic weights from `(config, seed)`.
///
/// Projections are uniform in `±1/sqrt(fan_in)`, embeddings uniform in
/// `±1`, norm gains are one. ChaCha8 keeps the stream identical across
/// platforms.
pub fn init_random_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, f, v) = (config.hidden_dim, config.ffn_dim, config.vocab_size);
    let sh = 1.0 / (h as f32).sqrt();
    let sf = 1.0 / (f as f32).sqrt();

    let embedding = uniform_matrix(&mut rng, v, h, 1.0);
    let mut layers = Vec::with_capacity(config.num_layers);
    for _ in 0..config.num_layers {
        let mut l = LayerWeights::zeros(config);
        l.wq = uniform_matrix(&mut rng, h, h, sh);
        l.wk = uniform_matrix(&mut rng, h, h, sh);
        l.wv = uniform_matrix(&mut rng, h, h, sh);
        l.wo = uniform_matrix(&mut rng, h, h, sh);
        l.ff_w1 = uniform_matrix(&mut rng, h, f, sh);
        l.ff_w2 = uniform_matrix(&mut rng, f, h, sf);
        l.ff_w3 = uniform_matrix(&mut rng, h, f, sh);
        layers.push(l);
    }
    let lm_head = uniform_matrix(&mut rng, h, v, sh);
    Model::new(config.clone(), embedding, layers, vec![1.0; h], lm_head)
}
