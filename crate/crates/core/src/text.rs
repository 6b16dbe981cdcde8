//! Tokenization shared by the hashing embedder and the keyword predictor.

/// English function words ignored by the hashing embedder and the keyword
/// predictor. Sorted so membership is a binary search.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either",
    "else", "etc", "ever", "every", "few", "for", "from", "further", "get", "gets", "got", "had",
    "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "itself", "just", "let", "lets", "like", "may", "me", "might",
    "more", "most", "much", "must", "my", "no", "nor", "not", "now", "of", "off", "ok", "okay",
    "on", "once", "one", "only", "or", "other", "our", "ours", "out", "over", "own", "please",
    "really", "s", "same", "she", "should", "so", "some", "such", "tell", "than", "thanks",
    "that", "the", "their", "theirs", "them", "then", "there", "these", "they", "this", "those",
    "through", "to", "too", "under", "until", "up", "us", "very", "want", "was", "we", "well",
    "were", "what", "when", "where", "whether", "which", "while", "who", "whom", "why", "will",
    "with", "would", "yes", "you", "your", "yours",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Lowercased alphanumeric runs; everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens with stopwords removed. When every token is a stopword the full
/// token list is returned so short function-word utterances still embed.
pub fn content_tokens(text: &str) -> Vec<String> {
    let all = tokenize(text);
    let content: Vec<String> = all.iter().filter(|t| !is_stopword(t)).cloned().collect();
    if content.is_empty() {
        all
    } else {
        content
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted_and_unique() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tokenize_strips_punctuation_and_case() {
        assert_eq!(
            tokenize("How do I configure the Contacts API endpoint?"),
            ["how", "do", "i", "configure", "the", "contacts", "api", "endpoint"]
        );
        assert!(tokenize(" ... ").is_empty());
    }

    #[test]
    fn content_tokens_fall_back_to_all_tokens() {
        assert_eq!(content_tokens("what is the API"), ["api"]);
        assert_eq!(content_tokens("how do I"), ["how", "do", "i"]);
    }
}
