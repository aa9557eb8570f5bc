//! Prompt protocol, reply parsing, text normalization and judging.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::LogoRecord;

/// Identifier of the default prompt.
pub const DEFAULT_PROMPT_ID: &str = "visible-text-v1";

/// Flag attached when a reply did not follow the `TEXT:` protocol.
pub const FLAG_UNSTRUCTURED: &str = "unstructured_response";

const VISIBLE_TEXT_V1: &str = "Look at this logo image and transcribe only the characters that are \
actually legible in it. Do not name the brand or company unless its name is literally written in \
the image; shapes, symbols and colors are not text.\n\
Answer with a first line of the form `TEXT: <the legible text>`, or `TEXT: NONE` if the image \
contains no legible text. You may add a second line `CONFIDENCE: <number between 0 and 1>` giving \
the probability that the image contains legible text.";

/// Prompt text for a prompt id, if known.
pub fn prompt_text(prompt_id: &str) -> Option<&'static str> {
    match prompt_id {
        DEFAULT_PROMPT_ID => Some(VISIBLE_TEXT_V1),
        _ => None,
    }
}

/// What a reply says, after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub emitted_text: Option<String>,
    /// The `TEXT:` line was missing and the heuristic fallback decided.
    pub unstructured: bool,
    /// Value of a `CONFIDENCE:` line, when present and in [0, 1].
    pub confidence: Option<f64>,
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let head = line.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &line[prefix.len()..])
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’'), ('`', '`')] {
        if s.len() >= open.len_utf8() + close.len_utf8() && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// First quoted span in free text. Single quotes only count when they are not
/// apostrophes inside a word.
fn first_quoted(text: &str) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    let pairs = [('"', '"'), ('“', '”'), ('‘', '’'), ('\'', '\''), ('«', '»')];
    let mut best: Option<(usize, String)> = None;
    for (open, close) in pairs {
        let mut i = 0;
        while i < chars.len() {
            if chars[i] != open || (i > 0 && chars[i - 1].is_alphanumeric()) {
                i += 1;
                continue;
            }
            let mut found = None;
            for j in i + 1..chars.len() {
                let after_ok = j + 1 >= chars.len() || !chars[j + 1].is_alphanumeric();
                if chars[j] == close && after_ok {
                    found = Some(j);
                    break;
                }
            }
            match found {
                Some(j) => {
                    let inner: String = chars[i + 1..j].iter().collect();
                    let inner = inner.trim().to_string();
                    if !inner.is_empty() {
                        if best.as_ref().map_or(true, |(p, _)| i < *p) {
                            best = Some((i, inner));
                        }
                        break;
                    }
                    i = j + 1;
                }
                None => break,
            }
        }
    }
    best.map(|(_, s)| s)
}

/// Longest lexicon entry occurring as whole words in the reply.
fn lexicon_match(text: &str, lexicon: &[String]) -> Option<String> {
    // Possessives are dropped on both sides so "Toyota's" still hits "Toyota".
    let key = |s: &str| normalize_text(&s.replace("'s", "").replace("’s", ""));
    let hay = format!(" {} ", key(text));
    let mut best: Option<&String> = None;
    for entry in lexicon {
        let needle = key(entry);
        if needle.is_empty() {
            continue;
        }
        if hay.contains(&format!(" {needle} ")) && best.map_or(true, |b| key(b).len() < needle.len()) {
            best = Some(entry);
        }
    }
    best.cloned()
}

/// Extract the emitted text from a reply.
///
/// The structured `TEXT:` line wins when present. Otherwise the first quoted
/// string, then the longest brand-lexicon hit, is taken as emitted text and
/// the reply is marked unstructured.
pub fn parse_structured(raw: &str, lexicon: &[String]) -> ParsedReply {
    let mut text_line: Option<&str> = None;
    let mut confidence = None;
    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = strip_prefix_ci(line, "TEXT:") {
            if text_line.is_none() {
                text_line = Some(rest);
            }
        } else if let Some(rest) = strip_prefix_ci(line, "CONFIDENCE:") {
            if let Ok(p) = rest.trim().parse::<f64>() {
                if (0.0..=1.0).contains(&p) {
                    confidence = Some(p);
                }
            }
        }
    }
    if let Some(rest) = text_line {
        let value = unquote(rest);
        let emitted = if value.is_empty() || value.eq_ignore_ascii_case("none") {
            None
        } else {
            Some(value.to_string())
        };
        return ParsedReply {
            emitted_text: emitted,
            unstructured: false,
            confidence,
        };
    }
    ParsedReply {
        emitted_text: first_quoted(raw).or_else(|| lexicon_match(raw, lexicon)),
        unstructured: true,
        confidence,
    }
}

/// Canonical form for exact-match comparison: diacritics and the characters
/// `' ’ . , ! - &` removed, lower-cased, whitespace collapsed.
pub fn normalize_text(s: &str) -> String {
    let lowered: String = s.chars().flat_map(char::to_lowercase).collect();
    let stripped: String = lowered
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .filter(|c| !matches!(c, '\'' | '’' | '.' | ',' | '!' | '-' | '&'))
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Judgment {
    /// The model emitted textual content.
    pub y_hat: bool,
    /// Present iff the logo has ground-truth text.
    pub exact_match: Option<bool>,
}

pub fn judge(record: &LogoRecord, emitted_text: Option<&str>) -> Judgment {
    let exact_match = record.gt_text.as_deref().map(|gt| {
        emitted_text.map_or(false, |e| normalize_text(e) == normalize_text(gt))
    });
    Judgment {
        y_hat: emitted_text.is_some(),
        exact_match,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn rec(category: Category, gt: Option<&str>) -> LogoRecord {
        LogoRecord {
            id: "x".into(),
            image_path: PathBuf::from("x.png"),
            category,
            hard60: false,
            gt_text: gt.map(String::from),
            color_bucket: None,
            shape_bucket: None,
            flags: vec![],
        }
    }

    #[test]
    fn structured_replies() {
        assert_eq!(parse_structured("TEXT: NONE", &[]).emitted_text, None);
        let p = parse_structured("TEXT: McDonald's\nCONFIDENCE: 0.9", &[]);
        assert_eq!(p.emitted_text.as_deref(), Some("McDonald's"));
        assert_eq!(p.confidence, Some(0.9));
        assert!(!p.unstructured);
        assert_eq!(parse_structured("text: \"KFC\"", &[]).emitted_text.as_deref(), Some("KFC"));
        assert_eq!(parse_structured("TEXT:", &[]).emitted_text, None);
        assert_eq!(parse_structured("TEXT: none\nCONFIDENCE: 7", &[]).confidence, None);
    }

    #[test]
    fn free_form_fallback() {
        let p = parse_structured("The logo reads 'KFC'.", &[]);
        assert_eq!(p.emitted_text.as_deref(), Some("KFC"));
        assert!(p.unstructured);
        let lex = vec!["Mercedes-Benz".to_string(), "Mercedes".to_string()];
        let p = parse_structured("This is the Mercedes-Benz star.", &lex);
        assert_eq!(p.emitted_text.as_deref(), Some("Mercedes-Benz"));
        let p = parse_structured("I can't see any text here.", &lex);
        assert_eq!(p.emitted_text, None);
        assert!(p.unstructured);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_text("McDonald's"), "mcdonalds");
        assert_eq!(normalize_text("  Coca - Cola "), "coca cola");
        assert_eq!(normalize_text("agnès b"), "agnes b");
        assert_eq!(normalize_text("AT&T"), "att");
        assert_eq!(normalize_text("Michael Anthony’s. EST. 2002"), "michael anthonys est 2002");
    }

    #[test]
    fn judging() {
        let j = judge(&rec(Category::PureSymbol, None), Some("Nike"));
        assert_eq!(j, Judgment { y_hat: true, exact_match: None });
        let j = judge(&rec(Category::PureText, Some("Google")), Some("google"));
        assert_eq!(j, Judgment { y_hat: true, exact_match: Some(true) });
        let j = judge(&rec(Category::PureSymbol, None), None);
        assert_eq!(j, Judgment { y_hat: false, exact_match: None });
        let j = judge(&rec(Category::Hybrid, Some("Chanel")), None);
        assert_eq!(j.exact_match, Some(false));
    }

    #[test]
    fn default_prompt_exists() {
        let p = prompt_text(DEFAULT_PROMPT_ID).unwrap();
        assert!(p.contains("TEXT: NONE"));
        assert!(prompt_text("nope").is_none());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn judge_y_hat_tracks_emission(t in proptest::option::of("[a-zA-Z ]{1,10}")) {
            let j = judge(&rec(Category::PureSymbol, None), t.as_deref());
            prop_assert_eq!(j.y_hat, t.is_some());
        }
    }
}
