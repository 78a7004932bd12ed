//! Prompt construction from a (label-stripped) user record.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{is_label_key, UserRecord};
use crate::error::{Error, Result};

pub const TASK: &str = "Generate a descriptive paragraph about the given user's persona.";

pub const DEMANDS: [&str; 3] = [
    "For some unknown attributes, you should try to complete them with your knowledge.",
    "Your description of this user should focus on personal traits, with references to demographic details given below.",
    "Make the description concise and brief.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub user_id: usize,
    pub task_text: String,
    pub demands: Vec<String>,
    /// `(attribute name, attribute content)` in record order; missing values read `Unknown`.
    pub record_pairs: Vec<(String, String)>,
    pub rendered: String,
    pub prompt_hash: u64,
}

/// First eight bytes of the SHA-256 of `text`, big-endian.
pub fn content_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(word)
}

/// `<Name>: <Content>;` pairs joined by single spaces.
pub fn render_records(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("<{k}>: <{v}>;"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render(task: &str, demands: &[String], pairs: &[(String, String)]) -> String {
    let demand_text = demands
        .iter()
        .enumerate()
        .map(|(i, d)| format!("#{}. {d}", i + 1))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "Task: {task}\nDemand: {demand_text}\nUser Records: {}",
        render_records(pairs)
    )
}

/// Builds the enhancement prompt. The record must already be label-free.
pub fn build_prompt(record: &UserRecord) -> Result<PromptBundle> {
    if record.has_labels() {
        return Err(Error::LabelLeak(format!(
            "user {} still carries personality labels; strip them before prompting",
            record.user_id
        )));
    }
    if let Some(key) = record.attributes.keys().find(|k| is_label_key(k)) {
        return Err(Error::LabelLeak(format!(
            "user {} has label attribute {key:?}",
            record.user_id
        )));
    }
    if record.attributes.is_empty() {
        return Err(Error::Precondition(format!(
            "user {} has no attributes to describe",
            record.user_id
        )));
    }
    let record_pairs: Vec<(String, String)> = record
        .attributes
        .iter()
        .map(|(k, v)| (k.clone(), v.render()))
        .collect();
    let demands: Vec<String> = DEMANDS.iter().map(|d| d.to_string()).collect();
    let rendered = render(TASK, &demands, &record_pairs);
    Ok(PromptBundle {
        user_id: record.user_id,
        task_text: TASK.to_string(),
        demands,
        prompt_hash: content_hash(&rendered),
        record_pairs,
        rendered,
    })
}

/// Recovers the record pairs from a rendered prompt.
pub fn parse_record_pairs(prompt: &str) -> Vec<(String, String)> {
    let Some(start) = prompt.find("User Records:") else {
        return Vec::new();
    };
    let mut rest = prompt[start + "User Records:".len()..].trim_start();
    let mut pairs = Vec::new();
    while let Some(stripped) = rest.strip_prefix('<') {
        let Some(name_end) = stripped.find(">: <") else { break };
        let name = &stripped[..name_end];
        let body = &stripped[name_end + 4..];
        // Content ends at the first ">;" followed by another pair or the end.
        let mut search = 0;
        let mut content_end = None;
        while let Some(off) = body[search..].find(">;") {
            let pos = search + off;
            let after = body[pos + 2..].trim_start();
            if after.is_empty() || after.starts_with('<') {
                content_end = Some(pos);
                break;
            }
            search = pos + 2;
        }
        let Some(end) = content_end else { break };
        pairs.push((name.to_string(), body[..end].to_string()));
        rest = body[end + 2..].trim_start();
    }
    pairs
}
