//! Domain types for tutoring dialogues, pedagogical labels, and judgments,
//! plus JSONL dataset record parsing and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced while parsing or validating domain types.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("guidance quality out of range: {0}")]
    OutOfRange(i64),
}

/// Who is speaking in a dialogue turn. Only these two roles exist;
/// system or meta turns are rejected at parse time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Student,
    Tutor,
}

impl std::fmt::Display for Speaker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Speaker::Student => write!(f, "Student"),
            Speaker::Tutor => write!(f, "Tutor"),
        }
    }
}

/// One utterance in a dialogue. `index` is the 0-based ordinal position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub index: usize,
}

/// Guidance-quality label: how well the candidate response guides the
/// student without giving the answer away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum GuidanceQuality {
    /// 0 = Direct answer
    DirectAnswer,
    /// 1 = Partial hint
    PartialHint,
    /// 2 = Effective scaffolding
    EffectiveScaffolding,
}

impl GuidanceQuality {
    /// Validates an integer label value. Anything outside {0,1,2} is rejected.
    pub fn from_value(value: i64) -> Result<Self, ModelError> {
        match value {
            0 => Ok(GuidanceQuality::DirectAnswer),
            1 => Ok(GuidanceQuality::PartialHint),
            2 => Ok(GuidanceQuality::EffectiveScaffolding),
            other => Err(ModelError::OutOfRange(other)),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            GuidanceQuality::DirectAnswer => 0,
            GuidanceQuality::PartialHint => 1,
            GuidanceQuality::EffectiveScaffolding => 2,
        }
    }

    pub fn label_name(self) -> &'static str {
        match self {
            GuidanceQuality::DirectAnswer => "Direct answer",
            GuidanceQuality::PartialHint => "Partial hint",
            GuidanceQuality::EffectiveScaffolding => "Effective scaffolding",
        }
    }
}

impl TryFrom<u8> for GuidanceQuality {
    type Error = ModelError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        GuidanceQuality::from_value(value as i64)
    }
}

impl From<GuidanceQuality> for u8 {
    fn from(value: GuidanceQuality) -> u8 {
        value.as_u8()
    }
}

/// The pair of task labels assigned to a candidate tutor response.
///
/// The guidance component is an enum, so a `LabelVector` outside
/// {0,1} x {0,1,2} cannot be constructed anywhere in the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub mistake_identified: bool,
    pub guidance_quality: GuidanceQuality,
}

impl LabelVector {
    /// Validating constructor from a raw integer guidance value.
    pub fn new(mistake_identified: bool, guidance_value: i64) -> Result<Self, ModelError> {
        Ok(LabelVector {
            mistake_identified,
            guidance_quality: GuidanceQuality::from_value(guidance_value)?,
        })
    }
}

/// Final classification produced by the synthesis stage.
///
/// Serializes to the flat JSON shape emitted by the evaluator agents:
/// `{"mistake_identified", "guidance_quality", "confidence", "reasoning"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    #[serde(flatten)]
    pub labels: LabelVector,
    pub confidence: f64,
    pub reasoning: String,
}

impl Judgment {
    pub fn new(labels: LabelVector, confidence: f64, reasoning: String) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
            return Err(ModelError::InvariantViolation(format!(
                "confidence must be in [0,1], got {confidence}"
            )));
        }
        if reasoning.trim().is_empty() {
            return Err(ModelError::InvariantViolation(
                "reasoning must be non-empty".to_string(),
            ));
        }
        Ok(Judgment {
            labels,
            confidence,
            reasoning,
        })
    }
}

/// A tutoring dialogue: ordered student/tutor turns, the candidate tutor
/// response under evaluation, and optional gold labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
    pub candidate_response: String,
    pub gold: Option<LabelVector>,
}

impl Dialogue {
    /// Validating constructor. Checks every type invariant:
    /// non-empty id and texts, contiguous 0-based indices, at least one
    /// student turn, a student turn last, and a non-empty candidate.
    pub fn new(
        id: String,
        turns: Vec<Utterance>,
        candidate_response: String,
        gold: Option<LabelVector>,
    ) -> Result<Self, ModelError> {
        if id.trim().is_empty() {
            return Err(ModelError::InvariantViolation(
                "dialogue id must be non-empty".to_string(),
            ));
        }
        if turns.is_empty() {
            return Err(ModelError::InvariantViolation(
                "dialogue must have at least one turn".to_string(),
            ));
        }
        for (i, turn) in turns.iter().enumerate() {
            if turn.index != i {
                return Err(ModelError::InvariantViolation(format!(
                    "turn indices must be contiguous from 0; turn at position {i} has index {}",
                    turn.index
                )));
            }
            if turn.text.trim().is_empty() {
                return Err(ModelError::InvariantViolation(format!(
                    "turn {i} has empty text"
                )));
            }
        }
        if !turns.iter().any(|t| t.speaker == Speaker::Student) {
            return Err(ModelError::InvariantViolation(
                "dialogue must contain at least one student turn".to_string(),
            ));
        }
        // The final turn carries the potential misconception the candidate
        // response reacts to, so it must come from the student.
        if turns.last().map(|t| t.speaker) != Some(Speaker::Student) {
            return Err(ModelError::InvariantViolation(
                "the final turn before the candidate response must be a student turn".to_string(),
            ));
        }
        if candidate_response.trim().is_empty() {
            return Err(ModelError::InvariantViolation(
                "candidate_response must be non-empty".to_string(),
            ));
        }
        Ok(Dialogue {
            id,
            turns,
            candidate_response,
            gold,
        })
    }

    /// Convenience constructor that assigns contiguous indices.
    pub fn from_texts(
        id: &str,
        turns: &[(Speaker, &str)],
        candidate_response: &str,
        gold: Option<LabelVector>,
    ) -> Result<Self, ModelError> {
        let turns = turns
            .iter()
            .enumerate()
            .map(|(index, (speaker, text))| Utterance {
                speaker: *speaker,
                text: (*text).to_string(),
                index,
            })
            .collect();
        Dialogue::new(id.to_string(), turns, candidate_response.to_string(), gold)
    }

    /// Parses one JSONL dataset record. Unknown fields are ignored.
    pub fn parse_record(line: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| ModelError::MalformedJson(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ModelError::MalformedJson("record is not a JSON object".to_string()))?;

        let id = obj
            .get("id")
            .ok_or_else(|| ModelError::MissingField("id".to_string()))?
            .as_str()
            .ok_or_else(|| ModelError::InvariantViolation("`id` must be a string".to_string()))?
            .to_string();

        let raw_turns = obj
            .get("turns")
            .ok_or_else(|| ModelError::MissingField("turns".to_string()))?
            .as_array()
            .ok_or_else(|| ModelError::InvariantViolation("`turns` must be an array".to_string()))?;

        let mut turns = Vec::with_capacity(raw_turns.len());
        for (index, raw) in raw_turns.iter().enumerate() {
            let turn_obj = raw.as_object().ok_or_else(|| {
                ModelError::InvariantViolation(format!("turns[{index}] must be an object"))
            })?;
            let speaker_str = turn_obj
                .get("speaker")
                .ok_or_else(|| ModelError::MissingField(format!("turns[{index}].speaker")))?
                .as_str()
                .ok_or_else(|| {
                    ModelError::InvariantViolation(format!("turns[{index}].speaker must be a string"))
                })?;
            let speaker = match speaker_str {
                "student" => Speaker::Student,
                "tutor" => Speaker::Tutor,
                other => {
                    return Err(ModelError::InvariantViolation(format!(
                        "turns[{index}].speaker must be \"student\" or \"tutor\", got \"{other}\""
                    )))
                }
            };
            let text = turn_obj
                .get("text")
                .ok_or_else(|| ModelError::MissingField(format!("turns[{index}].text")))?
                .as_str()
                .ok_or_else(|| {
                    ModelError::InvariantViolation(format!("turns[{index}].text must be a string"))
                })?
                .to_string();
            turns.push(Utterance {
                speaker,
                text,
                index,
            });
        }

        let candidate_response = obj
            .get("candidate_response")
            .ok_or_else(|| ModelError::MissingField("candidate_response".to_string()))?
            .as_str()
            .ok_or_else(|| {
                ModelError::InvariantViolation("`candidate_response` must be a string".to_string())
            })?
            .to_string();

        let gold = match obj.get("gold") {
            None | Some(serde_json::Value::Null) => None,
            Some(raw) => {
                let gold_obj = raw.as_object().ok_or_else(|| {
                    ModelError::InvariantViolation("`gold` must be an object".to_string())
                })?;
                let mistake_identified = gold_obj
                    .get("mistake_identified")
                    .ok_or_else(|| ModelError::MissingField("gold.mistake_identified".to_string()))?
                    .as_bool()
                    .ok_or_else(|| {
                        ModelError::InvariantViolation(
                            "`gold.mistake_identified` must be a boolean".to_string(),
                        )
                    })?;
                let guidance = gold_obj
                    .get("guidance_quality")
                    .ok_or_else(|| ModelError::MissingField("gold.guidance_quality".to_string()))?
                    .as_i64()
                    .ok_or_else(|| {
                        ModelError::InvariantViolation(
                            "`gold.guidance_quality` must be an integer".to_string(),
                        )
                    })?;
                Some(LabelVector::new(mistake_identified, guidance)?)
            }
        };

        Dialogue::new(id, turns, candidate_response, gold)
    }

    /// Serializes to the canonical single-line JSON record. Parsing the
    /// result yields an equal `Dialogue`.
    pub fn to_record(&self) -> String {
        #[derive(Serialize)]
        struct WireTurn<'a> {
            speaker: Speaker,
            text: &'a str,
        }
        #[derive(Serialize)]
        struct WireRecord<'a> {
            id: &'a str,
            turns: Vec<WireTurn<'a>>,
            candidate_response: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            gold: Option<&'a LabelVector>,
        }
        let record = WireRecord {
            id: &self.id,
            turns: self
                .turns
                .iter()
                .map(|t| WireTurn {
                    speaker: t.speaker,
                    text: &t.text,
                })
                .collect(),
            candidate_response: &self.candidate_response,
            gold: self.gold.as_ref(),
        };
        serde_json::to_string(&record).expect("dialogue record serialization cannot fail")
    }

    /// The final student utterance (the one carrying the potential
    /// misconception). Guaranteed to exist by the type invariants.
    pub fn last_student_utterance(&self) -> &Utterance {
        self.turns
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Student)
            .expect("dialogue invariant guarantees a student turn")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_record() -> &'static str {
        r#"{"id":"d1","turns":[{"speaker":"tutor","text":"What is 2+2?"},{"speaker":"student","text":"5"}],"candidate_response":"Check again: what is 2+2 on your fingers?"}"#
    }

    #[test]
    fn parses_minimal_record() {
        let d = Dialogue::parse_record(minimal_record()).unwrap();
        assert_eq!(d.turns.len(), 2);
        assert_eq!(d.id, "d1");
        assert!(d.gold.is_none());
        assert_eq!(d.turns[1].index, 1);
    }

    #[test]
    fn missing_candidate_response_is_reported_by_name() {
        let line = r#"{"id":"d1","turns":[{"speaker":"student","text":"hi"}]}"#;
        let err = Dialogue::parse_record(line).unwrap_err();
        assert!(matches!(err, ModelError::MissingField(ref f) if f == "candidate_response"));
    }

    #[test]
    fn fraction_fixture_final_student_turn_contains_wrong_sum() {
        let line = r#"{"id":"frac-001","turns":[{"speaker":"student","text":"Can you help me add fractions? I tried 2/5 + 1/5."},{"speaker":"tutor","text":"When denominators match, add the numerators. What do you get?"},{"speaker":"student","text":"2/5 + 1/5 = 3/5."},{"speaker":"tutor","text":"Right. Now try 1/2 + 1/3."},{"speaker":"student","text":"I got 1/2 + 1/3 = 2/5."}],"candidate_response":"Are you sure? Think about what happens when you add fractions."}"#;
        let d = Dialogue::parse_record(line).unwrap();
        assert!(d.last_student_utterance().text.contains("2/5"));
        assert_eq!(d.last_student_utterance().index, 4);
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let line = r#"{"id":"d1","extra":42,"turns":[{"speaker":"student","text":"hi","note":"x"}],"candidate_response":"ok then","meta":{"a":1}}"#;
        let d = Dialogue::parse_record(line).unwrap();
        assert_eq!(d.turns.len(), 1);
    }

    #[test]
    fn rejects_system_speaker() {
        let line = r#"{"id":"d1","turns":[{"speaker":"system","text":"x"},{"speaker":"student","text":"hi"}],"candidate_response":"ok"}"#;
        let err = Dialogue::parse_record(line).unwrap_err();
        assert!(matches!(err, ModelError::InvariantViolation(_)));
    }

    #[test]
    fn rejects_final_tutor_turn() {
        let line = r#"{"id":"d1","turns":[{"speaker":"student","text":"hi"},{"speaker":"tutor","text":"hello"}],"candidate_response":"ok"}"#;
        let err = Dialogue::parse_record(line).unwrap_err();
        assert!(matches!(err, ModelError::InvariantViolation(_)));
    }

    #[test]
    fn rejects_dialogue_without_student_turn() {
        let err = Dialogue::from_texts("d1", &[(Speaker::Tutor, "hello")], "ok", None).unwrap_err();
        assert!(matches!(err, ModelError::InvariantViolation(_)));
    }

    #[test]
    fn rejects_blank_turn_text() {
        let line = r#"{"id":"d1","turns":[{"speaker":"student","text":"   "}],"candidate_response":"ok"}"#;
        assert!(Dialogue::parse_record(line).is_err());
    }

    #[test]
    fn rejects_malformed_json() {
        let err = Dialogue::parse_record("{not json").unwrap_err();
        assert!(matches!(err, ModelError::MalformedJson(_)));
    }

    #[test]
    fn gold_labels_parse_and_validate() {
        let line = r#"{"id":"d1","turns":[{"speaker":"student","text":"hi"}],"candidate_response":"ok","gold":{"mistake_identified":true,"guidance_quality":2}}"#;
        let d = Dialogue::parse_record(line).unwrap();
        let gold = d.gold.unwrap();
        assert!(gold.mistake_identified);
        assert_eq!(gold.guidance_quality, GuidanceQuality::EffectiveScaffolding);

        let bad = r#"{"id":"d1","turns":[{"speaker":"student","text":"hi"}],"candidate_response":"ok","gold":{"mistake_identified":false,"guidance_quality":3}}"#;
        let err = Dialogue::parse_record(bad).unwrap_err();
        assert!(matches!(err, ModelError::OutOfRange(3)));
    }

    #[test]
    fn validate_labels_examples() {
        assert!(LabelVector::new(true, 2).is_ok());
        let err = LabelVector::new(false, 3).unwrap_err();
        assert!(matches!(err, ModelError::OutOfRange(3)));
        let direct = LabelVector::new(true, 0).unwrap();
        assert_eq!(direct.guidance_quality.label_name(), "Direct answer");
    }

    #[test]
    fn judgment_rejects_bad_confidence_and_empty_reasoning() {
        let labels = LabelVector::new(true, 1).unwrap();
        assert!(Judgment::new(labels, 1.5, "ok".into()).is_err());
        assert!(Judgment::new(labels, -0.1, "ok".into()).is_err());
        assert!(Judgment::new(labels, 0.5, "  ".into()).is_err());
        assert!(Judgment::new(labels, 0.0, "boundary".into()).is_ok());
        assert!(Judgment::new(labels, 1.0, "boundary".into()).is_ok());
    }

    #[test]
    fn round_trip_preserves_dialogue() {
        let line = r#"{"id":"d1","turns":[{"speaker":"tutor","text":"a"},{"speaker":"student","text":"b"}],"candidate_response":"c","gold":{"mistake_identified":false,"guidance_quality":0}}"#;
        let d = Dialogue::parse_record(line).unwrap();
        let d2 = Dialogue::parse_record(&d.to_record()).unwrap();
        assert_eq!(d, d2);
    }
}
