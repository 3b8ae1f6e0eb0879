use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Names the structured record a request expects back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaTag {
    VideoReport,
    GuidanceReport,
    CodeReport,
    Synthesis,
    GradeVerdict,
    QuestionCategory,
    InstructorIntent,
}

impl SchemaTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaTag::VideoReport => "video_report",
            SchemaTag::GuidanceReport => "guidance_report",
            SchemaTag::CodeReport => "code_report",
            SchemaTag::Synthesis => "synthesis",
            SchemaTag::GradeVerdict => "grade_verdict",
            SchemaTag::QuestionCategory => "question_category",
            SchemaTag::InstructorIntent => "instructor_intent",
        }
    }

    /// Field description appended to prompts sent to real models.
    pub fn describe(self) -> &'static str {
        match self {
            SchemaTag::VideoReport | SchemaTag::GuidanceReport | SchemaTag::CodeReport => {
                r#"{"confidence": number 0..1, "relevance": "primary"|"supporting"|"not_applicable", "content": string, "references": [{"timestamp_s": int} | {"code_location": string} | {"concept": string}]}"#
            }
            SchemaTag::Synthesis => r#"{"code"?: string, "guidance"?: string, "video"?: string}"#,
            SchemaTag::GradeVerdict => r#"{"approach_ok": boolean, "reasoning": string}"#,
            SchemaTag::QuestionCategory => {
                r#"{"category": "study_strategies"|"conceptual_quantum"|"mathematical_formalism"|"implementation"|"social_exploratory"|"video_reference"|"cross_lesson_synthesis"}"#
            }
            SchemaTag::InstructorIntent => {
                r#"{"template": "engagement_by_module"|"dead_zones"|"archetype_overview"|"code_failure_breakdown"|"checkpoint_outcomes"|"question_category_mix"|"unknown", "module"?: int}"#
            }
        }
    }

    pub fn validate(self, value: &Value) -> Result<(), String> {
        let obj = value.as_object().ok_or("expected a JSON object")?;
        let string = |k: &str| match obj.get(k) {
            Some(Value::String(_)) => Ok(()),
            _ => Err(format!("field '{k}' must be a string")),
        };
        match self {
            SchemaTag::VideoReport | SchemaTag::GuidanceReport | SchemaTag::CodeReport => {
                if !obj.get("confidence").is_some_and(Value::is_number) {
                    return Err("field 'confidence' must be a number".into());
                }
                string("content")?;
                match obj.get("relevance").and_then(Value::as_str) {
                    Some("primary" | "supporting" | "not_applicable") => {}
                    _ => return Err("field 'relevance' must be primary, supporting or not_applicable".into()),
                }
                match obj.get("references") {
                    None | Some(Value::Array(_)) => Ok(()),
                    _ => Err("field 'references' must be an array".into()),
                }
            }
            SchemaTag::Synthesis => {
                for (k, v) in obj {
                    if !matches!(k.as_str(), "code" | "guidance" | "video") {
                        return Err(format!("unexpected section '{k}'"));
                    }
                    if !v.is_string() {
                        return Err(format!("section '{k}' must be a string"));
                    }
                }
                Ok(())
            }
            SchemaTag::GradeVerdict => {
                if !obj.get("approach_ok").is_some_and(Value::is_boolean) {
                    return Err("field 'approach_ok' must be a boolean".into());
                }
                string("reasoning")
            }
            SchemaTag::QuestionCategory => {
                let c = obj.get("category").and_then(Value::as_str).ok_or("field 'category' must be a string")?;
                crate::model::QuestionCategory::parse(c).map(|_| ()).ok_or_else(|| format!("unknown category '{c}'"))
            }
            SchemaTag::InstructorIntent => {
                string("template")?;
                match obj.get("module") {
                    None | Some(Value::Null) => Ok(()),
                    Some(v) if v.is_u64() => Ok(()),
                    _ => Err("field 'module' must be an integer".into()),
                }
            }
        }
    }
}

impl fmt::Display for SchemaTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pulls the first JSON object out of model text, tolerating code fences and
/// surrounding prose.
pub(crate) fn extract_json(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(trimmed) {
        return Some(v);
    }
    let start = trimmed.find('{')?;
    let end = trimmed.rfind('}')?;
    if end <= start {
        return None;
    }
    match serde_json::from_str::<Value>(&trimmed[start..=end]) {
        Ok(v @ Value::Object(_)) => Some(v),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn report_schema() {
        let ok = json!({"confidence": 0.7, "relevance": "primary", "content": "x", "references": []});
        assert!(SchemaTag::CodeReport.validate(&ok).is_ok());
        let bad = json!({"confidence": "high", "relevance": "primary", "content": "x"});
        assert!(SchemaTag::CodeReport.validate(&bad).is_err());
        let bad = json!({"confidence": 0.2, "relevance": "maybe", "content": "x"});
        assert!(SchemaTag::VideoReport.validate(&bad).is_err());
    }

    #[test]
    fn fenced_json_is_extracted() {
        let v = extract_json("Sure!\n```json\n{\"category\": \"implementation\"}\n```").unwrap();
        assert!(SchemaTag::QuestionCategory.validate(&v).is_ok());
        assert!(extract_json("UNSCRIPTED").is_none());
    }

    #[test]
    fn synthesis_rejects_foreign_sections() {
        assert!(SchemaTag::Synthesis.validate(&json!({"code": "a", "video": "b"})).is_ok());
        assert!(SchemaTag::Synthesis.validate(&json!({"planner": "a"})).is_err());
    }
}
