use std::sync::LazyLock;

use regex::Regex;

/// The response lacked a usable `PREDICTION:` line. Carries the full response
/// for the audit trail.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{reason}")]
pub struct ParseError {
    pub reason: String,
    pub response: String,
}

static PREDICTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t>*_#`]*PR[EÉ]DICTION[ \t*_`]*[:：][ \t*_`]*(-?[0-9][0-9 ,.'\u{a0}\u{202f}]*)")
        .expect("valid regex")
});

static DOT_THOUSANDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[0-9]{1,3}(\.[0-9]{3})+$").expect("valid regex"));

/// Extracts the vote count from the last `PREDICTION: <integer>` line.
///
/// Thousands separators (`,`, spaces, `'`, or `.` in groups of three) are
/// accepted; a decimal value is rounded.
pub fn parse_prediction(response: &str) -> Result<u64, ParseError> {
    let fail = |reason: &str| ParseError { reason: reason.to_string(), response: response.to_string() };
    let caps = PREDICTION
        .captures_iter(response)
        .last()
        .ok_or_else(|| fail("no PREDICTION line in response"))?;
    let raw = caps[1].trim_end_matches(|c: char| !c.is_ascii_digit());
    if raw.starts_with('-') {
        return Err(fail("negative prediction"));
    }
    let value = parse_number(raw).map(|v| v.round() as u64);
    value.ok_or_else(|| fail("unreadable number on PREDICTION line"))
}

static AMOUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[0-9][0-9 ,.'\u{a0}\u{202f}]*").expect("valid regex"));

/// Parses a non-negative number written with optional thousands separators.
fn parse_number(raw: &str) -> Option<f64> {
    let raw = raw.trim_end_matches(|c: char| !c.is_ascii_digit());
    let compact: String = raw.chars().filter(|c| !matches!(c, ',' | ' ' | '\'' | '\u{a0}' | '\u{202f}')).collect();
    if DOT_THOUSANDS.is_match(&compact) {
        compact.replace('.', "").parse::<f64>().ok()
    } else {
        compact.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
    }
}

/// First amount in free text such as `"about 120 000 EUR"`.
pub fn parse_amount(text: &str) -> Option<f64> {
    AMOUNT.find(text).and_then(|m| parse_number(m.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_and_separated() {
        assert_eq!(parse_prediction("reasoning...\nPREDICTION: 1250").unwrap(), 1250);
        assert_eq!(parse_prediction("PREDICTION: 1,250").unwrap(), 1250);
        assert_eq!(parse_prediction("PREDICTION : 1 250").unwrap(), 1250);
        assert_eq!(parse_prediction("PREDICTION: 1\u{202f}250 voix").unwrap(), 1250);
        assert_eq!(parse_prediction("PREDICTION: 12.500").unwrap(), 12500);
        assert_eq!(parse_prediction("PREDICTION: 340.").unwrap(), 340);
        assert_eq!(parse_prediction("PREDICTION: 99.6").unwrap(), 100);
    }

    #[test]
    fn markdown_decoration_and_last_line_wins() {
        assert_eq!(parse_prediction("**PREDICTION:** 420").unwrap(), 420);
        assert_eq!(parse_prediction("PREDICTION: 10\nOn reflection:\nPREDICTION: 30").unwrap(), 30);
        assert_eq!(parse_prediction("prédiction : 75").unwrap(), 75);
    }

    #[test]
    fn amounts_in_prose() {
        assert_eq!(parse_amount("about 120 000 EUR"), Some(120000.0));
        assert_eq!(parse_amount("1.500.000 zł"), Some(1500000.0));
        assert_eq!(parse_amount("unknown"), None);
    }

    #[test]
    fn failures_carry_the_response() {
        let e = parse_prediction("I cannot answer").unwrap_err();
        assert_eq!(e.response, "I cannot answer");
        assert!(parse_prediction("PREDICTION: -5").unwrap_err().reason.contains("negative"));
        assert!(parse_prediction("PREDICTION: many").is_err());
        // Not at line start: the number is part of the prose.
        assert!(parse_prediction("my PREDICTION: 5").is_err());
    }
}
