use super::dp::AlignParams;
use crate::corpus::RawPair;

/// Writing system expected on one side of the bitext.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    Latin,
    Cjk,
    Cyrillic,
    /// Accept any text.
    Any,
}

impl Script {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "latin" => Some(Script::Latin),
            "cjk" => Some(Script::Cjk),
            "cyrillic" => Some(Script::Cyrillic),
            "any" => Some(Script::Any),
            _ => None,
        }
    }

    fn of(c: char) -> Option<Script> {
        let u = c as u32;
        if c.is_ascii_alphabetic() || (0xC0..=0x24F).contains(&u) {
            Some(Script::Latin)
        } else if (0x4E00..=0x9FFF).contains(&u)
            || (0x3400..=0x4DBF).contains(&u)
            || (0x3000..=0x30FF).contains(&u)
            || (0xAC00..=0xD7AF).contains(&u)
            || (0xFF00..=0xFFEF).contains(&u)
        {
            Some(Script::Cjk)
        } else if (0x400..=0x4FF).contains(&u) {
            Some(Script::Cyrillic)
        } else {
            None
        }
    }
}

/// Fraction of letter-like characters of `text` written in `script`.
/// ASCII digits, punctuation and whitespace are ignored.
pub fn script_fraction(text: &str, script: Script) -> f64 {
    if script == Script::Any {
        return 1.0;
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    for c in text.chars() {
        if c.is_whitespace() || c.is_ascii_punctuation() || c.is_ascii_digit() {
            continue;
        }
        total += 1;
        if Script::of(c) == Some(script) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub const MIN_SCRIPT_FRACTION: f64 = 0.5;

/// Drop identical pairs, pairs with a side outside its expected script, and
/// pairs scoring below `params.tau`. Pairs without a score are only subject
/// to the first two rules.
pub fn filter_pairs(
    pairs: &[RawPair],
    params: &AlignParams,
    source: Script,
    target: Script,
) -> Vec<RawPair> {
    pairs
        .iter()
        .filter(|p| p.source.trim() != p.target.trim())
        .filter(|p| script_fraction(&p.source, source) >= MIN_SCRIPT_FRACTION)
        .filter(|p| script_fraction(&p.target, target) >= MIN_SCRIPT_FRACTION)
        .filter(|p| p.score.is_none_or(|s| s >= params.tau))
        .cloned()
        .collect()
}
