//! Byte-level tokenization, document packing and synthetic corpora.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Separator between packed documents, also used as padding.
pub const EOS: usize = 256;
/// 256 byte values plus the separator.
pub const VOCAB: usize = 257;

pub fn tokenize(text: &[u8]) -> Vec<usize> {
    text.iter().map(|&b| b as usize).collect()
}

/// Bytes for ids below 256; the separator is dropped.
pub fn detokenize(ids: &[usize]) -> Result<Vec<u8>> {
    ids.iter()
        .filter(|&&id| id != EOS)
        .map(|&id| {
            u8::try_from(id).map_err(|_| Error::Domain(format!("token id {id} outside 0..={EOS}")))
        })
        .collect()
}

/// A fixed-length token sequence; `mask[t]` is false for padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packed {
    pub tokens: Vec<usize>,
    pub mask: Vec<bool>,
}

/// Concatenates documents with [`EOS`] between them and cuts the stream
/// into length-`n` sequences. The last one is padded with masked [`EOS`].
pub fn pack_corpus<D: AsRef<[u8]>>(docs: &[D], n: usize) -> Result<Vec<Packed>> {
    if n < 2 {
        return Err(Error::Config(format!("sequence length must be at least 2, got {n}")));
    }
    let mut stream = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        if i > 0 {
            stream.push(EOS);
        }
        stream.extend(tokenize(doc.as_ref()));
    }
    Ok(stream
        .chunks(n)
        .map(|chunk| {
            let mut tokens = chunk.to_vec();
            let mut mask = vec![true; chunk.len()];
            tokens.resize(n, EOS);
            mask.resize(n, false);
            Packed { tokens, mask }
        })
        .collect())
}

/// Model input with next-token targets; the loss counts only positions
/// whose `mask` is true.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Example {
    /// Targets are the sequence shifted by one; the final position and any
    /// padded target are masked.
    pub fn from_packed(p: &Packed) -> Self {
        let n = p.tokens.len();
        let mut targets: Vec<usize> = p.tokens[1..].to_vec();
        targets.push(EOS);
        let mask = (0..n).map(|t| t + 1 < n && p.mask[t + 1]).collect();
        Self {
            tokens: p.tokens.clone(),
            targets,
            mask,
        }
    }

    /// `n + 1` consecutive tokens from a stream: all `n` targets count.
    pub fn from_window(window: &[usize]) -> Self {
        let n = window.len() - 1;
        Self {
            tokens: window[..n].to_vec(),
            targets: window[1..].to_vec(),
            mask: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Training and held-out examples.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
}

/// Windows of `n + 1` tokens taken every `stride` tokens.
pub fn windows(stream: &[usize], n: usize, stride: usize) -> Vec<Example> {
    if stream.len() <= n {
        return Vec::new();
    }
    (0..stream.len() - n)
        .step_by(stride.max(1))
        .map(|s| Example::from_window(&stream[s..s + n + 1]))
        .collect()
}

/// A period of 64 distinct byte values repeated to `len` tokens.
pub fn repeating_pattern(len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes: Vec<usize> = (0..256).collect();
    bytes.shuffle(&mut rng);
    (0..len).map(|i| bytes[i % 64]).collect()
}

/// Uniform random byte tokens.
pub fn random_bytes(len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(0..256)).collect()
}

/// Sequences of `n + 1` tokens whose first `lag` entries are runs of
/// `run` copies of symbols drawn uniformly from the first `alphabet` byte
/// values, and whose remaining entries copy the token `lag` positions
/// earlier. With `run = 1` the prefix is white noise.
pub fn lag_copy(
    count: usize,
    n: usize,
    lag: usize,
    alphabet: usize,
    run: usize,
    seed: u64,
) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = run.max(1);
    (0..count)
        .map(|_| {
            let mut seq = Vec::with_capacity(n + 1);
            while seq.len() < lag.min(n + 1) {
                let sym = rng.gen_range(0..alphabet);
                let take = run.min(lag.min(n + 1) - seq.len());
                seq.extend(std::iter::repeat_n(sym, take));
            }
            for t in seq.len()..=n {
                seq.push(seq[t - lag]);
            }
            Example::from_window(&seq)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bytes_map_to_ids() {
        assert_eq!(tokenize(b"ab"), vec![97, 98]);
        assert_eq!(VOCAB, 257);
        assert_eq!(detokenize(&[97, EOS, 98]).unwrap(), b"ab");
        assert!(matches!(detokenize(&[257]), Err(Error::Domain(_))));
    }

    #[test]
    fn packing_examples() {
        let packed = pack_corpus(&["a", "b"], 4).unwrap();
        assert_eq!(packed.len(), 1);
        assert_eq!(packed[0].tokens, vec![97, 256, 98, 256]);
        assert_eq!(packed[0].mask, vec![true, true, true, false]);
        let long = pack_corpus(&["abcdefg"], 3).unwrap();
        let flat: Vec<usize> = long.iter().flat_map(|p| p.tokens.clone()).collect();
        assert_eq!(&flat[..7], &tokenize(b"abcdefg")[..]);
        assert!(pack_corpus(&["a"], 1).is_err());
    }

    #[test]
    fn packed_example_masks_padding_targets() {
        let packed = pack_corpus(&["a", "b"], 4).unwrap();
        let ex = Example::from_packed(&packed[0]);
        assert_eq!(ex.targets[..3], [256, 98, 256]);
        assert_eq!(ex.mask, vec![true, true, false, false]);
    }

    #[test]
    fn pattern_has_period_64_distinct() {
        let p = repeating_pattern(200, 3);
        let mut first: Vec<usize> = p[..64].to_vec();
        first.sort_unstable();
        first.dedup();
        assert_eq!(first.len(), 64);
        assert!((64..200).all(|i| p[i] == p[i - 64]));
    }

    #[test]
    fn lag_copy_repeats() {
        let ex = &lag_copy(2, 128, 64, 16, 8, 1)[0];
        let full: Vec<usize> = ex.tokens.iter().chain(ex.targets.last()).copied().collect();
        assert!((64..=128).all(|t| full[t] == full[t - 64]));
        assert!(full.iter().all(|&v| v < 16));
        assert!((0..64).all(|t| full[t] == full[t - t % 8]));
    }

    proptest! {
        #[test]
        fn round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            prop_assert_eq!(detokenize(&tokenize(&bytes)).unwrap(), bytes);
        }

        #[test]
        fn packing_conserves_tokens(
            docs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..40), 1..6),
            n in 2usize..17,
        ) {
            let packed = pack_corpus(&docs, n).unwrap();
            let unmasked: usize = packed.iter().map(|p| p.mask.iter().filter(|&&m| m).count()).sum();
            let expected: usize = docs.iter().map(Vec::len).sum::<usize>() + docs.len() - 1;
            prop_assert_eq!(unmasked, expected);
            let kept: Vec<usize> = packed
                .iter()
                .flat_map(|p| p.tokens.iter().zip(&p.mask).filter(|(_, &m)| m).map(|(&t, _)| t))
                .collect();
            let mut want = Vec::new();
            for (i, d) in docs.iter().enumerate() {
                if i > 0 { want.push(EOS); }
                want.extend(tokenize(d));
            }
            prop_assert_eq!(kept, want);
            for p in &packed {
                prop_assert!(p.tokens.iter().zip(&p.mask).all(|(&t, &m)| m || t == EOS));
            }
        }
    }
}
