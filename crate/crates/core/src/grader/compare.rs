//! Deterministic output comparison.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use crate::model::OutputSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub ok: bool,
    pub explanation: String,
}

impl Comparison {
    fn pass(explanation: impl Into<String>) -> Self {
        Self { ok: true, explanation: explanation.into() }
    }

    fn fail(explanation: impl Into<String>) -> Self {
        Self { ok: false, explanation: explanation.into() }
    }
}

static BRACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[^{}]*\}").expect("brace pattern"));
static ENTRY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^\s*['"]?([A-Za-z0-9_]+)['"]?\s*:\s*(\d+)\s*$"#).expect("entry pattern"));

/// Parses one `{'00': 498, '11': 526}` style literal (Python dict or JSON).
/// Every comma-separated entry must be an outcome/count pair.
pub fn parse_histogram_literal(text: &str) -> Option<BTreeMap<String, u64>> {
    let inner = text.trim().strip_prefix('{')?.strip_suffix('}')?;
    if inner.trim().is_empty() {
        return None;
    }
    let mut out = BTreeMap::new();
    for part in inner.split(',').filter(|p| !p.trim().is_empty()) {
        let caps = ENTRY.captures(part)?;
        let count: u64 = caps[2].parse().ok()?;
        if out.insert(caps[1].to_owned(), count).is_some() {
            return None;
        }
    }
    Some(out)
}

/// All histogram literals found in `text`, in order of appearance.
pub fn histogram_literals(text: &str) -> Vec<BTreeMap<String, u64>> {
    BRACES.find_iter(text).filter_map(|m| parse_histogram_literal(m.as_str())).collect()
}

fn parse_number(text: &str) -> Option<f64> {
    let trimmed = text.trim();
    trimmed
        .parse::<f64>()
        .ok()
        .or_else(|| trimmed.split_whitespace().last().and_then(|t| t.trim_matches(|c| c == ',' || c == ';').parse().ok()))
        .filter(|v: &f64| v.is_finite())
}

pub fn compare_output(actual: &str, spec: &OutputSpec) -> Comparison {
    match spec {
        OutputSpec::Exact { value } => {
            let (a, e) = (actual.trim_end(), value.trim_end());
            if a == e {
                Comparison::pass("output matches exactly")
            } else {
                Comparison::fail(format!("expected {e:?}, got {a:?}"))
            }
        }
        OutputSpec::Numeric { expected, tol } => match parse_number(actual) {
            None => Comparison::fail(format!("could not parse a number from output {:?}", actual.trim())),
            Some(v) if (v - expected).abs() <= *tol => Comparison::pass(format!("{v} is within {tol} of {expected}")),
            Some(v) => Comparison::fail(format!("{v} differs from {expected} by more than {tol}")),
        },
        OutputSpec::Histogram { counts, tol_abs, shots } => {
            let tol = OutputSpec::histogram_tolerance(counts, *tol_abs, *shots);
            // the last printed distribution is the result
            let Some(observed) = histogram_literals(actual).pop() else {
                return Comparison::fail("could not parse a measurement histogram from output");
            };
            let mut outcomes: Vec<&String> = counts.keys().chain(observed.keys()).collect();
            outcomes.sort();
            outcomes.dedup();
            for outcome in outcomes {
                let want = counts.get(outcome).copied().unwrap_or(0);
                let got = observed.get(outcome).copied().unwrap_or(0);
                if want.abs_diff(got) > tol {
                    return Comparison::fail(format!(
                        "outcome {outcome}: got {got}, expected {want} ± {tol}"
                    ));
                }
            }
            Comparison::pass(format!("every outcome within ± {tol} of the expected counts"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bell(tol: Option<u64>) -> OutputSpec {
        OutputSpec::Histogram { counts: [("00".into(), 512), ("11".into(), 512)].into(), tol_abs: tol, shots: None }
    }

    #[test]
    fn bell_within_tolerance() {
        // |498-512| = 14, |526-512| = 14, both <= 64
        assert!(compare_output("{'00': 498, '11': 526}", &bell(Some(64))).ok);
        assert!(compare_output("{\"00\": 498, \"11\": 526}\n", &bell(None)).ok);
    }

    #[test]
    fn stray_outcome_counts_against_zero() {
        assert!(!compare_output("{'00': 470, '01': 70, '11': 484}", &bell(Some(64))).ok);
        assert!(compare_output("{'00': 470, '01': 3, '11': 551}", &bell(Some(64))).ok);
    }

    #[test]
    fn empty_stdout_never_passes() {
        assert!(!compare_output("", &bell(None)).ok);
        assert!(!compare_output("", &OutputSpec::Exact { value: "hello".into() }).ok);
        let c = compare_output("", &OutputSpec::Numeric { expected: 0.5, tol: 0.01 });
        assert!(!c.ok && c.explanation.contains("parse"));
    }

    #[test]
    fn exact_strips_trailing_whitespace() {
        assert!(compare_output("hello\n", &OutputSpec::Exact { value: "hello".into() }).ok);
        assert!(!compare_output(" hello", &OutputSpec::Exact { value: "hello".into() }).ok);
    }

    #[test]
    fn numeric_tolerance() {
        let spec = OutputSpec::Numeric { expected: 0.5, tol: 0.001 };
        assert!(compare_output("0.50049\n", &spec).ok);
        assert!(compare_output("probability: 0.4995", &spec).ok);
        assert!(!compare_output("0.502", &spec).ok);
    }

    #[test]
    fn literal_parser_rejects_mixed_content() {
        assert!(parse_histogram_literal("{'00': 5, 'x': 'y'}").is_none());
        assert!(parse_histogram_literal("{}").is_none());
        assert_eq!(histogram_literals("a = {'0': 1}\nb = {'1': 2}").len(), 2);
    }

    proptest! {
        #[test]
        fn tolerance_boundary(expected in 0u64..5000, tol in 0u64..200, other in 0u64..5000) {
            let spec = OutputSpec::Histogram {
                counts: [("00".to_string(), expected), ("11".to_string(), other)].into(),
                tol_abs: Some(tol),
                shots: None,
            };
            let at = format!("{{'00': {}, '11': {}}}", expected + tol, other);
            prop_assert!(compare_output(&at, &spec).ok);
            let over = format!("{{'00': {}, '11': {}}}", expected + tol + 1, other);
            prop_assert!(!compare_output(&over, &spec).ok);
            if expected >= tol {
                let below = format!("{{'00': {}, '11': {}}}", expected - tol, other);
                prop_assert!(compare_output(&below, &spec).ok);
            }
        }
    }
}
