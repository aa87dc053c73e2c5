// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level tokenizer: ids `0..256` are raw bytes, followed by three
//! reserved special ids.

/// Token id.
pub type TokenId = u32;

pub const PAD: TokenId = 256;
pub const BOS: TokenId = 257;
pub const ANSWER: TokenId = 258;

/// Vocabulary size of the byte tokenizer including special ids.
pub const VOCAB_SIZE: usize = 259;

/// Raw bytes of `text`, one token per byte.
pub fn encode(text: &str) -> Vec<TokenId> {
    text.bytes().map(TokenId::from).collect()
}

/// `BOS` followed by the bytes of `text`.
pub fn encode_prompt(text: &str) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(text.len() + 1);
    out.push(BOS);
    out.extend(encode(text));
    out
}

/// Decode byte tokens, dropping special ids. Invalid UTF-8 is replaced lossily.
pub fn decode(tokens: &[TokenId]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .filter_map(|&t| u8::try_from(t).ok())
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Number of tokens the workbench tokenizer assigns to `text`.
pub fn token_len(text: &str) -> usize {
    text.len()
}

/// Index of the first occurrence of `needle` in `haystack`.
pub fn find_subsequence(haystack: &[TokenId], needle: &[TokenId]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}
