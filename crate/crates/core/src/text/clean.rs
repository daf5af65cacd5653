//! HTML-aware text normalization and tokenization.

use super::porter;
use super::stopwords::is_stop_word;

pub const URL_TOKEN: &str = "urltok";
pub const NUMBER_TOKEN: &str = "numtok";

/// Strips markup and normalizes a raw post.
///
/// Tags are removed (code and pre blocks together with their content when
/// `strip_code` is set), entities decoded, URLs become [`URL_TOKEN`],
/// standalone numbers become [`NUMBER_TOKEN`], punctuation goes away and
/// whitespace is collapsed. Case is preserved for camel-case splitting.
pub fn clean_text(raw: &str, strip_code: bool) -> String {
    let stripped = strip_markup(raw, strip_code);
    let decoded = decode_entities(&stripped);
    let mut out: Vec<String> = Vec::new();
    for word in decoded.split_whitespace() {
        normalize_word(word, &mut out);
    }
    out.join(" ")
}

fn normalize_word(word: &str, out: &mut Vec<String>) {
    let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
    let lower = word.to_ascii_lowercase();
    if ["http://", "https://", "ftp://", "www."]
        .iter()
        .any(|p| lower.trim_start_matches(|c: char| !c.is_alphanumeric()).starts_with(p))
    {
        out.push(URL_TOKEN.to_string());
        return;
    }
    if is_number(trimmed) {
        out.push(NUMBER_TOKEN.to_string());
        return;
    }
    let spaced: String = word
        .chars()
        .filter(|&c| c != '\'' && c != '\u{2019}')
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    for piece in spaced.split_whitespace() {
        if piece.chars().all(|c| c.is_ascii_digit()) {
            out.push(NUMBER_TOKEN.to_string());
        } else {
            out.push(piece.to_string());
        }
    }
}

/// Digit groups optionally separated by single '.' or ',' characters.
fn is_number(s: &str) -> bool {
    !s.is_empty()
        && s.split(['.', ','])
            .all(|group| !group.is_empty() && group.chars().all(|c| c.is_ascii_digit()))
}

fn strip_markup(raw: &str, strip_code: bool) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(body) = tail.strip_prefix("<!--") {
            out.push(' ');
            rest = body.find("-->").map_or("", |end| &body[end + 3..]);
            continue;
        }
        let starts_tag = tail[1..]
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?');
        let close = tail.find('>');
        match (starts_tag, close) {
            (true, Some(end)) => {
                let inner = &tail[1..end];
                let after = &tail[end + 1..];
                out.push(' ');
                let name = tag_name(inner);
                let opening = !inner.starts_with('/') && !inner.ends_with('/');
                if strip_code && opening && (name == "code" || name == "pre") {
                    rest = skip_block(after, &name);
                } else {
                    rest = after;
                }
            }
            _ => {
                out.push('<');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn tag_name(inner: &str) -> String {
    inner
        .trim_start_matches('/')
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase()
}

/// Returns the text after the closing tag for `name`, or "" when unclosed.
fn skip_block<'t>(text: &'t str, name: &str) -> &'t str {
    let closing = format!("</{name}");
    let lower = text.to_ascii_lowercase();
    match lower.find(&closing) {
        Some(start) => {
            let from = &text[start..];
            from.find('>').map_or("", |end| &from[end + 1..])
        }
        None => "",
    }
}

fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let decoded = tail.find(';').filter(|&end| end <= 10).and_then(|end| {
            let name = &tail[1..end];
            let c = match name {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                _ => name
                    .strip_prefix("#x")
                    .or_else(|| name.strip_prefix("#X"))
                    .and_then(|hex| u32::from_str_radix(hex, 16).ok())
                    .or_else(|| name.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            c.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Splits on lower→upper and letter→digit transitions.
pub fn split_camel_case(word: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut prev: Option<char> = None;
    for (i, c) in word.char_indices() {
        if let Some(p) = prev {
            let boundary = (p.is_lowercase() && c.is_uppercase()) || (p.is_alphabetic() && c.is_numeric());
            if boundary {
                parts.push(&word[start..i]);
                start = i;
            }
        }
        prev = Some(c);
    }
    if start < word.len() {
        parts.push(&word[start..]);
    }
    parts
}

/// Whitespace split, camel-case split, lowercase, stop-word removal and
/// Porter stemming, in that order. Stems that collide with a stop word are
/// dropped as well.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        for part in split_camel_case(word) {
            // a few letters (e.g. mathematical capitals) have no lowercase form
            let lower: String = part.to_lowercase().chars().filter(|c| !c.is_uppercase()).collect();
            if lower.is_empty() || is_stop_word(&lower) {
                continue;
            }
            let stemmed = porter::stem(&lower);
            if !stemmed.is_empty() && !is_stop_word(&stemmed) {
                tokens.push(stemmed);
            }
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_examples() {
        assert_eq!(clean_text("<p>see https://x.io now</p>", true), "see urltok now");
        assert_eq!(
            clean_text("<code>int x=1;</code>use 42 threads", true),
            "use numtok threads"
        );
        assert_eq!(clean_text("", true), "");
    }

    #[test]
    fn code_kept_when_not_stripping() {
        assert_eq!(clean_text("<code>int x</code> y", false), "int x y");
    }

    #[test]
    fn malformed_markup_degrades() {
        assert_eq!(clean_text("a < b and <div class=x", true), "a b and div class x");
        assert_eq!(clean_text("<pre>never closed", true), "");
        assert_eq!(clean_text("x<!-- note -->y", true), "x y");
    }

    #[test]
    fn entities_and_numbers() {
        assert_eq!(clean_text("a &amp; b &lt;tag&gt;", true), "a b tag");
        assert_eq!(clean_text("Ubuntu 12.04, and 1,000 files", true), "Ubuntu numtok and numtok files");
        assert_eq!(clean_text("i=200 it's", true), "i numtok its");
    }

    #[test]
    fn camel_split() {
        assert_eq!(split_camel_case("getValue"), vec!["get", "Value"]);
        assert_eq!(split_camel_case("TreeMap"), vec!["Tree", "Map"]);
        assert_eq!(split_camel_case("Windows7"), vec!["Windows", "7"]);
        assert_eq!(split_camel_case("HTML"), vec!["HTML"]);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Removing html tags with regex Java"),
            vec!["remov", "html", "tag", "regex", "java"]
        );
        assert_eq!(tokenize("TreeMap getValue"), vec!["tree", "map", "get", "valu"]);
        assert!(tokenize("the of and").is_empty());
    }
}
