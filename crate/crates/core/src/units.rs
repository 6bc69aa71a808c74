//! Engineering-notation numbers as written on schematics (`10u`, `25p`, `100k`).

use std::fmt;

use serde::de::{self, Deserializer, Visitor};

/// Parses a number with an optional SI suffix. A trailing unit symbol after
/// the suffix is tolerated (`10uH`, `100pF`, `92meV`), as long as it is
/// alphabetic.
pub fn parse_eng(text: &str) -> Option<f64> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    // longest numeric prefix
    let split = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && is_exponent(s, i)))
        })
        .map(|(i, _)| i)?;
    let (num, rest) = s.split_at(split);
    let base: f64 = num.parse().ok()?;
    let mut chars = rest.chars();
    let first = chars.next()?;
    let (scale, tail) = match first {
        'f' => (1e-15, chars.as_str()),
        'p' => (1e-12, chars.as_str()),
        'n' => (1e-9, chars.as_str()),
        'u' | 'µ' | 'μ' => (1e-6, chars.as_str()),
        'm' => (1e-3, chars.as_str()),
        'k' | 'K' => (1e3, chars.as_str()),
        'M' => (1e6, chars.as_str()),
        'G' => (1e9, chars.as_str()),
        'T' => (1e12, chars.as_str()),
        _ => (1.0, rest),
    };
    if !tail.chars().all(|c| c.is_alphabetic()) {
        return None;
    }
    Some(base * scale)
}

fn is_exponent(s: &str, i: usize) -> bool {
    // `e` only counts as an exponent marker when followed by a digit or sign
    s[i + 1..]
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit() || c == '+' || c == '-')
}

/// serde helper: accepts a TOML integer, float, or engineering string.
pub fn de_eng<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    struct EngVisitor;

    impl Visitor<'_> for EngVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or an engineering-notation string such as \"10u\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            parse_eng(v).ok_or_else(|| E::custom(format!("cannot parse `{v}` as a number")))
        }
    }

    d.deserialize_any(EngVisitor)
}

pub fn de_eng_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    de_eng(d).map(Some)
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + 273.15
}

pub fn kelvin_to_celsius(k: f64) -> f64 {
    k - 273.15
}
