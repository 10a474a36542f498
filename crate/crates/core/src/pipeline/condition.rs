use serde::{Deserialize, Serialize};

use super::aspects::AspectSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    Pretrain,
    Finetune,
}

/// Pretraining condition: every aspect of the document, Document Type first.
pub fn pretrain_condition(aspects: &AspectSet) -> String {
    let mut lines = vec![
        format!("Document Type: {}", aspects.doc_type),
        format!("Keywords: {}", aspects.keywords.join(", ")),
    ];
    lines.extend(aspects.extra.iter().cloned());
    lines.join("\n")
}

/// Finetuning condition: the topic's keywords only, optionally preceded by
/// an operator-supplied Document Type. Nothing here comes from the document.
pub fn finetune_condition(topic_keywords: &[String], document_type: Option<&str>) -> String {
    let keywords = format!("Keywords: {}", topic_keywords.join(", "));
    match document_type {
        Some(t) => format!("Document Type: {t}\n{keywords}"),
        None => keywords,
    }
}

/// Renders a condition for either stage. Finetune mode ignores the
/// document's own aspects and needs the assigned topic's keywords.
pub fn build_condition(
    aspects: &AspectSet,
    mode: ConditionMode,
    topic_keywords: Option<&[String]>,
    document_type: Option<&str>,
) -> Result<String> {
    match mode {
        ConditionMode::Pretrain => Ok(pretrain_condition(aspects)),
        ConditionMode::Finetune => {
            let kws = topic_keywords
                .ok_or_else(|| Error::invalid("finetune conditions need topic keywords"))?;
            Ok(finetune_condition(kws, document_type))
        }
    }
}
