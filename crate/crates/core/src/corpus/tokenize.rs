/// Characters removed before whitespace splitting: the Devanagari danda and
/// ASCII sentence punctuation.
const STRIPPED: [char; 7] = ['।', '.', ',', '!', '?', ';', ':'];

/// Whitespace tokenizer shared by vocabulary construction, encoding and
/// metric scoring. Stripped punctuation acts as a separator.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|c: char| c.is_whitespace() || STRIPPED.contains(&c))
        .filter(|t| !t.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_danda_and_punctuation() {
        assert_eq!(tokenize("एक मान्छे दौडिरहेको छ।"), vec!["एक", "मान्छे", "दौडिरहेको", "छ"]);
        assert_eq!(tokenize("  a man, runs!  "), vec!["a", "man", "runs"]);
        assert!(tokenize(" । ").is_empty());
    }
}
