/// Lowercases `text` and splits it on every non-alphanumeric character,
/// dropping empty fragments.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokenizes and keeps at most `max_length` tokens.
pub fn tokenize_truncated(text: &str, max_length: usize) -> Vec<String> {
    let mut tokens = tokenize(text);
    tokens.truncate(max_length);
    tokens
}
