//! Fixed English stop-word list.
//!
//! The common NLTK English list, with contractions written the way they
//! look after punctuation removal ("don't" becomes "dont").

pub const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "ain", "all", "am", "an", "and", "any", "are",
    "aren", "arent", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "couldn", "couldnt", "d", "did", "didn", "didnt", "do", "does", "doesn", "doesnt",
    "doing", "don", "dont", "down", "during", "each", "few", "for", "from", "further", "had", "hadn",
    "hadnt", "has", "hasn", "hasnt", "have", "haven", "havent", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "isn", "isnt", "it", "its",
    "itself", "just", "ll", "m", "ma", "me", "mightn", "mightnt", "more", "most", "mustn", "mustnt", "my",
    "myself", "needn", "neednt", "no", "nor", "not", "now", "o", "of", "off", "on", "once", "only", "or",
    "other", "our", "ours", "ourselves", "out", "over", "own", "re", "s", "same", "shan", "shant", "she",
    "shes", "should", "shouldn", "shouldnt", "shouldve", "so", "some", "such", "t", "than", "that",
    "thatll", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "ve", "very", "was", "wasn", "wasnt", "we",
    "were", "weren", "werent", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "won", "wont", "wouldn", "wouldnt", "y", "you", "youd", "youll", "your", "youre", "yours",
    "yourself", "yourselves", "youve",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_is_sorted_and_unique() {
        assert!(STOP_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lookups() {
        assert!(is_stop_word("the"));
        assert!(is_stop_word("how"));
        assert!(!is_stop_word("java"));
    }
}
