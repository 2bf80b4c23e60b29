//! Character-level vocabulary over the fixed 41-symbol TinyPy alphabet.

use thiserror::Error;

/// Every character a TinyPy snippet (code plus output comments) may contain,
/// in token-id order.
pub const ALPHABET: &str = "\n #%()*+,-0123456789:<=>abcdefghilnoprstu";

/// Number of distinct tokens.
pub const VOCAB_SIZE: usize = 41;

pub const NEWLINE: u32 = 0;

const _: () = assert!(ALPHABET.len() == VOCAB_SIZE);

const fn build_table() -> [i8; 128] {
    let bytes = ALPHABET.as_bytes();
    let mut table = [-1i8; 128];
    let mut i = 0;
    while i < bytes.len() {
        table[bytes[i] as usize] = i as i8;
        i += 1;
    }
    table
}

static LOOKUP: [i8; 128] = build_table();

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("character {ch:?} at position {position} is not in the TinyPy alphabet")]
    UnknownCharacter { ch: char, position: usize },
    #[error("token id {id} at position {position} is outside the vocabulary")]
    UnknownToken { id: u32, position: usize },
}

/// Id of a single character, if it belongs to the alphabet.
pub fn token_id(ch: char) -> Option<u32> {
    let code = ch as u32;
    if code < 128 {
        let id = LOOKUP[code as usize];
        (id >= 0).then_some(id as u32)
    } else {
        None
    }
}

pub fn tokenize(text: &str) -> Result<Vec<u32>, VocabError> {
    text.chars()
        .enumerate()
        .map(|(position, ch)| token_id(ch).ok_or(VocabError::UnknownCharacter { ch, position }))
        .collect()
}

pub fn detokenize(ids: &[u32]) -> Result<String, VocabError> {
    let bytes = ALPHABET.as_bytes();
    ids.iter()
        .enumerate()
        .map(|(position, &id)| {
            bytes
                .get(id as usize)
                .map(|&b| b as char)
                .ok_or(VocabError::UnknownToken { id, position })
        })
        .collect()
}

/// CRC-32 of the alphabet; stored in checkpoints and dataset manifests so a
/// model is never paired with a differently ordered vocabulary.
pub fn alphabet_checksum() -> u32 {
    crc32fast::hash(ALPHABET.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alphabet_is_sorted_and_unique() {
        let bytes = ALPHABET.as_bytes();
        assert!(bytes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(bytes.len(), 41);
    }

    #[test]
    fn short_line_round_trips() {
        let ids = tokenize("a=1\n").unwrap();
        assert_eq!(ids.len(), 4);
        assert_eq!(detokenize(&ids).unwrap(), "a=1\n");
    }

    #[test]
    fn uppercase_is_rejected_with_position() {
        assert_eq!(
            tokenize("ab A").unwrap_err(),
            VocabError::UnknownCharacter { ch: 'A', position: 3 }
        );
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        assert!(matches!(detokenize(&[0, 41]), Err(VocabError::UnknownToken { id: 41, position: 1 })));
    }

    proptest! {
        #[test]
        fn tokenize_detokenize_is_identity(idx in proptest::collection::vec(0usize..41, 0..200)) {
            let text: String = idx.iter().map(|&i| ALPHABET.as_bytes()[i] as char).collect();
            let ids = tokenize(&text).unwrap();
            prop_assert_eq!(ids.iter().map(|&x| x as usize).collect::<Vec<_>>(), idx);
            prop_assert_eq!(detokenize(&ids).unwrap(), text);
        }
    }
}
