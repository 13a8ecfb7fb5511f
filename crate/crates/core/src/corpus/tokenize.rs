use serde::{Deserialize, Serialize};

/// One token of a post, with byte offsets into the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub sent_index: usize,
    pub char_start: usize,
    pub char_end: usize,
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Terminator,
    Newline,
}

fn ends_sentence(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits raw text into tokens.
///
/// Whitespace separates tokens; every other non-alphanumeric character becomes
/// a token of its own, except an apostrophe with a letter or digit on both
/// sides (`I'm`, `don't`), which stays inside the word. A sentence ends after
/// `.`, `!`, `?` or a newline.
pub fn tokenize(raw: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = raw.char_indices().collect();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sent = 0usize;
    let mut pending: Option<Boundary> = None;

    let mut push = |start: usize, end: usize, pending: &mut Option<Boundary>| {
        let surface = &raw[start..end];
        let terminator = surface.chars().all(ends_sentence);
        // "?!" and "..." stay with the sentence they close.
        let continues = terminator && *pending == Some(Boundary::Terminator);
        if pending.is_some() && !continues && !tokens.is_empty() {
            sent += 1;
        }
        *pending = terminator.then_some(Boundary::Terminator);
        tokens.push(Token {
            surface: surface.to_string(),
            lower: surface.to_lowercase(),
            sent_index: sent,
            char_start: start,
            char_end: end,
        });
    };

    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            if c == '\n' {
                pending = Some(Boundary::Newline);
            }
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_word_char(cj) {
                    j += 1;
                } else if is_apostrophe(cj) && j + 1 < chars.len() && is_word_char(chars[j + 1].1) {
                    j += 2;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(raw.len(), |&(p, _)| p);
            push(pos, end, &mut pending);
            i = j;
        } else {
            push(pos, pos + c.len_utf8(), &mut pending);
            i += 1;
        }
    }
    tokens
}

fn is_punct_token(s: &str) -> bool {
    let mut chars = s.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if !is_word_char(c) && !is_apostrophe(c))
}

/// Joins tokens with single spaces, except before punctuation and directly
/// after a standalone apostrophe.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut prev_apostrophe = false;
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        if i > 0 && !is_punct_token(tok) && !prev_apostrophe {
            out.push(' ');
        }
        out.push_str(tok);
        let mut chars = tok.chars();
        prev_apostrophe = matches!((chars.next(), chars.next()), (Some(c), None) if is_apostrophe(c));
    }
    out
}
