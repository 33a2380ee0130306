//! Keyword-table caption parser for spatial relations.

use alloc::string::{String, ToString};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Left,
    Right,
    Above,
    Below,
    Bigger,
    Smaller,
    Inside,
    None,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Bigger => "bigger",
            Relation::Smaller => "smaller",
            Relation::Inside => "inside",
            Relation::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCaption {
    pub head: String,
    pub relation: Relation,
    pub anchor: Option<String>,
    /// The relation is judged against the image frame, not another object.
    pub absolute: bool,
}

impl ParsedCaption {
    fn plain(caption: &str) -> Self {
        Self {
            head: caption.trim().to_string(),
            relation: Relation::None,
            anchor: None,
            absolute: false,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Form {
    /// Needs an anchor phrase; without one the relation is dropped.
    Anchored,
    /// Anchored when followed by text, absolute otherwise.
    Either,
    Absolute,
    /// Recognized, but not a relation we score.
    Ignored,
}

// Order matters: the first phrase found in the caption wins, so longer
// phrases come before their prefixes.
const KEYWORDS: &[(&str, Relation, Form)] = &[
    ("to the left of", Relation::Left, Form::Either),
    ("on the left of", Relation::Left, Form::Either),
    ("left of", Relation::Left, Form::Either),
    ("to the right of", Relation::Right, Form::Either),
    ("on the right of", Relation::Right, Form::Either),
    ("right of", Relation::Right, Form::Either),
    ("on top of", Relation::Above, Form::Either),
    ("above", Relation::Above, Form::Either),
    ("over", Relation::Above, Form::Either),
    ("underneath", Relation::Below, Form::Either),
    ("beneath", Relation::Below, Form::Either),
    ("below", Relation::Below, Form::Either),
    ("under", Relation::Below, Form::Either),
    ("bigger than", Relation::Bigger, Form::Anchored),
    ("larger than", Relation::Bigger, Form::Anchored),
    ("smaller than", Relation::Smaller, Form::Anchored),
    ("inside", Relation::Inside, Form::Anchored),
    ("in front of", Relation::None, Form::Ignored),
    ("behind", Relation::None, Form::Ignored),
    ("next to", Relation::None, Form::Ignored),
    ("on the left", Relation::Left, Form::Absolute),
    ("to the left", Relation::Left, Form::Absolute),
    ("leftmost", Relation::Left, Form::Absolute),
    ("on the right", Relation::Right, Form::Absolute),
    ("to the right", Relation::Right, Form::Absolute),
    ("rightmost", Relation::Right, Form::Absolute),
    ("at the top", Relation::Above, Form::Absolute),
    ("topmost", Relation::Above, Form::Absolute),
    ("top", Relation::Above, Form::Absolute),
    ("at the bottom", Relation::Below, Form::Absolute),
    ("bottom", Relation::Below, Form::Absolute),
    ("biggest", Relation::Bigger, Form::Absolute),
    ("largest", Relation::Bigger, Form::Absolute),
    ("smallest", Relation::Smaller, Form::Absolute),
    ("left", Relation::Left, Form::Absolute),
    ("right", Relation::Right, Form::Absolute),
];

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'\''
}

/// Byte offset of `phrase` in `text` as a whole-word match.
fn find_word(text: &str, phrase: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find(phrase) {
        let start = from + off;
        let end = start + phrase.len();
        let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return Some(start);
        }
        from = start + 1;
        while !text.is_char_boundary(from) {
            from += 1;
        }
    }
    None
}

fn clean(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || c == ',' || c == '.')
}

/// Splits a caption into head phrase, relation and anchor phrase.
pub fn parse_caption(caption: &str) -> ParsedCaption {
    let lower = caption.trim().to_lowercase();
    for &(phrase, relation, form) in KEYWORDS {
        let Some(at) = find_word(&lower, phrase) else {
            continue;
        };
        if form == Form::Ignored {
            return ParsedCaption::plain(&lower);
        }
        let before = clean(&lower[..at]);
        let after = clean(&lower[at + phrase.len()..]);
        let anchored = match form {
            Form::Anchored | Form::Either => !after.is_empty(),
            _ => false,
        };
        if anchored {
            return ParsedCaption {
                head: if before.is_empty() { lower.clone() } else { before.to_string() },
                relation,
                anchor: Some(after.to_string()),
                absolute: false,
            };
        }
        if form == Form::Anchored {
            return ParsedCaption::plain(&lower);
        }
        let head = match (before.is_empty(), after.is_empty()) {
            (false, _) => before,
            (true, false) => after,
            (true, true) => lower.as_str(),
        };
        return ParsedCaption {
            head: head.to_string(),
            relation,
            anchor: None,
            absolute: true,
        };
    }
    ParsedCaption::plain(&lower)
}
