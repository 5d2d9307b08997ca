use super::{extract_payload, ChatModel, ChatRequest, LlmError, TaskKind};

/// Deterministic offline backend.
///
/// Answers from the JSON input block that every prompt carries, using the
/// same templates the crate falls back to when no model is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullChat;

impl ChatModel for NullChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let payload = extract_payload(req.last_user())
            .ok_or_else(|| LlmError::Malformed("prompt carries no JSON input block".into()))?;
        match req.task {
            TaskKind::NlGeneration => crate::nl::offline_generate(&payload),
            TaskKind::NlVerification => crate::nl::offline_verify(&payload),
            TaskKind::SchemaStandardization => crate::metadata::offline_standardize(&payload),
            TaskKind::PairRefinement => crate::metadata::offline_refine(&payload),
            TaskKind::ReasoningStep => crate::reasoning::offline_prose(&payload),
        }
    }
}
