//! Static screen for hardcoded outputs.

use std::sync::LazyLock;

use regex::Regex;

use super::compare::histogram_literals;
use crate::model::OutputSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreenResult {
    pub flagged: bool,
    pub evidence: String,
}

static BACKTICKED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"`([A-Za-z_][A-Za-z0-9_.]*)`").expect("pattern"));
static PRINT_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"print\s*\(\s*(-?\d+(?:\.\d+)?(?:[eE]-?\d+)?)\s*\)").expect("pattern"));

/// Construction primitives named in the criteria, written in backticks,
/// e.g. "build the state with gates (`h`, `cx`)".
pub fn construction_primitives(criteria: &[String]) -> Vec<String> {
    let mut out: Vec<String> = criteria
        .iter()
        .flat_map(|c| BACKTICKED.captures_iter(c).map(|m| m[1].to_owned()).collect::<Vec<_>>())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Drops `#` comments so that commentary cannot count as code.
fn strip_comments(source: &str) -> String {
    source
        .lines()
        .map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A call to `name(...)`, or to its gate class (`cx` as `CXGate(...)`).
fn invokes(code: &str, primitive: &str) -> bool {
    let name = regex::escape(primitive.rsplit('.').next().unwrap_or(primitive));
    Regex::new(&format!(r"\b{name}\s*\(|(?i:\b{name}Gate)\s*\("))
        .map(|re| re.is_match(code))
        .unwrap_or(false)
}

/// Flags sources that embed the full expected output as a literal, or that
/// never call any construction primitive the criteria name.
pub fn screen_hardcode(source: &str, spec: &OutputSpec, approach_criteria: &[String]) -> ScreenResult {
    let code = strip_comments(source);
    match spec {
        OutputSpec::Exact { value } => {
            let v = value.trim();
            if !v.is_empty() && code.contains(v) {
                return ScreenResult { flagged: true, evidence: format!("source contains the expected output {v:?} verbatim") };
            }
        }
        OutputSpec::Histogram { counts, .. } => {
            if histogram_literals(&code).iter().any(|h| h == counts) {
                return ScreenResult {
                    flagged: true,
                    evidence: "source contains the expected histogram as a literal".into(),
                };
            }
        }
        OutputSpec::Numeric { expected, tol } => {
            let hit = PRINT_NUMBER
                .captures_iter(&code)
                .filter_map(|c| c[1].parse::<f64>().ok())
                .any(|v| (v - expected).abs() <= *tol);
            if hit {
                return ScreenResult { flagged: true, evidence: "source prints the expected number as a literal".into() };
            }
        }
    }
    let primitives = construction_primitives(approach_criteria);
    if !primitives.is_empty() && !primitives.iter().any(|p| invokes(&code, p)) {
        return ScreenResult {
            flagged: true,
            evidence: format!("no call to any required construction primitive ({})", primitives.join(", ")),
        };
    }
    ScreenResult { flagged: false, evidence: "no hardcoded output detected".into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell() -> OutputSpec {
        OutputSpec::Histogram { counts: [("00".into(), 512), ("11".into(), 512)].into(), tol_abs: None, shots: Some(1024) }
    }

    fn criteria() -> Vec<String> {
        vec!["Construct the Bell state by applying gates (`h`, `cx`) to |00>, not by writing amplitudes".into()]
    }

    #[test]
    fn gate_classes_count_as_construction() {
        let src = "bell.append(HGate(), [0])\nbell.append(CXGate(), [0, 1])\nprint(counts)";
        assert!(!screen_hardcode(src, &bell(), &criteria()).flagged);
        assert!(screen_hardcode("print(dict(counts))", &bell(), &criteria()).flagged);
    }

    #[test]
    fn printed_literal_is_flagged() {
        let r = screen_hardcode("print(\"{'00': 512, '11': 512}\")", &bell(), &[]);
        assert!(r.flagged, "{}", r.evidence);
    }

    #[test]
    fn comment_mentioning_counts_is_not_flagged() {
        let src = "qc = QuantumCircuit(2)\nqc.h(0)\nqc.cx(0, 1)  # expect about 512 of each\n# ideal {'00': 512, '11': 512}\nprint(run(qc))";
        let r = screen_hardcode(src, &bell(), &criteria());
        assert!(!r.flagged, "{}", r.evidence);
    }

    #[test]
    fn partial_literal_is_not_flagged() {
        let src = "qc.h(0); qc.cx(0, 1)\nshots = {'00': 512}\n";
        assert!(!screen_hardcode(src, &bell(), &criteria()).flagged);
    }

    #[test]
    fn no_primitive_call_is_flagged() {
        let src = "sv = Statevector([1/2**0.5, 0, 0, 1/2**0.5])\nprint(sv.sample_counts(1024))";
        let r = screen_hardcode(src, &bell(), &criteria());
        assert!(r.flagged);
        assert!(r.evidence.contains("cx, h"));
    }

    #[test]
    fn empty_criteria_only_checks_literals() {
        let src = "print(sv.sample_counts(1024))";
        assert!(!screen_hardcode(src, &bell(), &[]).flagged);
    }

    #[test]
    fn exact_and_numeric_literals() {
        let spec = OutputSpec::Exact { value: "|1>".into() };
        assert!(screen_hardcode("print('|1>')", &spec, &[]).flagged);
        let spec = OutputSpec::Numeric { expected: 0.5, tol: 0.01 };
        assert!(screen_hardcode("print(0.5)", &spec, &[]).flagged);
        assert!(!screen_hardcode("p = abs(a)**2\nprint(p)", &spec, &[]).flagged);
    }
}
