//! Tokenizer shared by indexing and querying.
//!
//! Text is split on everything except ASCII/Unicode alphanumerics and `_`.
//! Identifiers with `_` or camelCase humps emit the whole lowercase word
//! followed by their pieces, so `expand_dims` also matches "expand dims".

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split(|c: char| !(c.is_alphanumeric() || c == '_')) {
        if word.is_empty() {
            continue;
        }
        let pieces = sub_tokens(word);
        let whole = word.to_lowercase();
        let whole_trimmed = whole.trim_matches('_');
        if pieces.len() > 1 || (pieces.len() == 1 && pieces[0] != whole_trimmed) {
            if !whole_trimmed.is_empty() {
                tokens.push(whole_trimmed.to_string());
            }
            tokens.extend(pieces);
        } else {
            tokens.extend(pieces);
        }
    }
    tokens
}

/// Splits one word on `_` and camelCase boundaries, lowercased.
fn sub_tokens(word: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in word.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
            if boundary {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    out
}
