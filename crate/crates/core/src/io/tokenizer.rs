use crate::error::{Error, Result};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;

/// Ids 0-255 are raw bytes, 256 is BOS and 257 is EOS. Any further ids up to
/// `vocab_size` are unused padding and decode to nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteTokenizer {
    vocab_size: usize,
}

impl ByteTokenizer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size < 258 {
            return Err(Error::Config(format!(
                "byte tokenizer needs vocab_size >= 258, got {vocab_size}"
            )));
        }
        Ok(Self { vocab_size })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn encode(&self, text: &[u8]) -> Vec<u32> {
        text.iter().map(|&b| b as u32).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            if id as usize >= self.vocab_size {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: self.vocab_size,
                });
            }
            if id < 256 {
                out.push(id as u8);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_values() {
        let t = ByteTokenizer::new(258).unwrap();
        assert_eq!(t.encode(b"Hi"), vec![72, 105]);
        assert!(t.encode(b"").is_empty());
        assert_eq!(t.decode(&[BOS, 72, 105, EOS]).unwrap(), b"Hi");
        assert!(matches!(t.decode(&[258]), Err(Error::TokenOutOfRange { id: 258, .. })));
        assert!(ByteTokenizer::new(100).is_err());
    }

    #[test]
    fn one_kilobyte_round_trip() {
        use rand::{RngCore, SeedableRng};
        let mut bytes = vec![0u8; 1024];
        rand_chacha::ChaCha8Rng::seed_from_u64(9).fill_bytes(&mut bytes);
        let t = ByteTokenizer::new(300).unwrap();
        assert_eq!(t.decode(&t.encode(&bytes)).unwrap(), bytes);
    }

    proptest! {
        #[test]
        fn round_trip(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
            let t = ByteTokenizer::new(258).unwrap();
            prop_assert_eq!(t.decode(&t.encode(&bytes)).unwrap(), bytes);
        }
    }
}
