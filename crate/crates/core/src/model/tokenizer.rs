//! Lowercase whitespace tokenizer with hashed ids.

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn token_id(token: &str, vocab: usize) -> usize {
    (fnv1a64(token.as_bytes()) % vocab as u64) as usize
}

pub fn encode(text: &str, vocab: usize) -> Vec<usize> {
    tokenize(text).iter().map(|t| token_id(t, vocab)).collect()
}

/// Token ids of `[text, rationale]`, cut to `max_tokens` from the rationale end.
pub fn encode_augmented(text: &str, rationale: &str, vocab: usize, max_tokens: usize) -> Vec<usize> {
    let mut ids = encode(text, vocab);
    ids.extend(encode(rationale, vocab));
    ids.truncate(max_tokens);
    ids
}
