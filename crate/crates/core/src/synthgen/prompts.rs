//! Versioned prompt templates shipped with the crate.
//!
//! Placeholders: `{num_questions}`, `{max_spans}`, `{doc_id}`, `{document}`.
//! A template's text never changes once released; edits get a new id.

use super::chat::ChatMessage;
use crate::corpus::Document;

pub const DEFAULT_TEMPLATE_ID: &str = "qa-anchored-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub system: &'static str,
    pub user: &'static str,
}

const TEMPLATES: &[PromptTemplate] = &[PromptTemplate {
    id: "qa-anchored-v1",
    system: include_str!("../../prompts/qa-anchored-v1.system.txt"),
    user: include_str!("../../prompts/qa-anchored-v1.user.txt"),
}];

impl PromptTemplate {
    pub fn get(id: &str) -> Option<&'static PromptTemplate> {
        TEMPLATES.iter().find(|t| t.id == id)
    }

    pub fn ids() -> impl Iterator<Item = &'static str> {
        TEMPLATES.iter().map(|t| t.id)
    }

    pub fn render(&self, doc: &Document, num_questions: usize, max_spans: usize) -> Vec<ChatMessage> {
        // document text goes in last so placeholders inside it stay literal
        let user = self
            .user
            .replace("{num_questions}", &num_questions.to_string())
            .replace("{max_spans}", &max_spans.to_string())
            .replace("{doc_id}", doc.doc_id())
            .replace("{document}", doc.text());
        vec![ChatMessage::system(self.system.trim_end()), ChatMessage::user(user)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::Role;

    #[test]
    fn renders_placeholders() {
        let d = Document::new("doc-7", "literal {num_questions} stays").unwrap();
        let t = PromptTemplate::get(DEFAULT_TEMPLATE_ID).unwrap();
        let m = t.render(&d, 4, 2);
        assert_eq!(m[0].role, Role::System);
        assert!(m[1].content.contains("Write 4 questions"));
        assert!(m[1].content.contains("1 to 2 verbatim excerpts"));
        assert!(m[1].content.contains("Document (doc-7):"));
        assert!(m[1].content.contains("literal {num_questions} stays"));
        assert!(PromptTemplate::get("missing").is_none());
        assert_eq!(PromptTemplate::ids().collect::<Vec<_>>(), ["qa-anchored-v1"]);
    }
}
