use std::path::Path;

use super::LlmError;

/// Prompt templates and reflection questions. Templates use `{name}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: String,
    pub action: String,
    pub speak: String,
    pub message: String,
    pub answer: String,
    pub dynamic_questions: String,
    pub insight_filter: String,
    pub fixed_questions: Vec<String>,
    pub spare_questions: Vec<String>,
}

const FILES: [&str; 9] = [
    "system.txt",
    "action.txt",
    "speak.txt",
    "message.txt",
    "answer.txt",
    "dynamic_questions.txt",
    "insight_filter.txt",
    "fixed_questions.txt",
    "spare_questions.txt",
];

fn lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self {
            system: include_str!("../../prompts/system.txt").to_string(),
            action: include_str!("../../prompts/action.txt").to_string(),
            speak: include_str!("../../prompts/speak.txt").to_string(),
            message: include_str!("../../prompts/message.txt").to_string(),
            answer: include_str!("../../prompts/answer.txt").to_string(),
            dynamic_questions: include_str!("../../prompts/dynamic_questions.txt").to_string(),
            insight_filter: include_str!("../../prompts/insight_filter.txt").to_string(),
            fixed_questions: lines(include_str!("../../prompts/fixed_questions.txt")),
            spare_questions: lines(include_str!("../../prompts/spare_questions.txt")),
        }
    }

    /// Built-in set with any of the files present in `dir` swapped in.
    pub fn load_dir(dir: &Path) -> Result<Self, LlmError> {
        let mut set = Self::builtin();
        for name in FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
            match name {
                "system.txt" => set.system = text,
                "action.txt" => set.action = text,
                "speak.txt" => set.speak = text,
                "message.txt" => set.message = text,
                "answer.txt" => set.answer = text,
                "dynamic_questions.txt" => set.dynamic_questions = text,
                "insight_filter.txt" => set.insight_filter = text,
                "fixed_questions.txt" => set.fixed_questions = lines(&text),
                _ => set.spare_questions = lines(&text),
            }
        }
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if self.fixed_questions.len() != 10 {
            return Err(LlmError::Config(format!(
                "fixed_questions.txt must hold 10 questions, found {}",
                self.fixed_questions.len()
            )));
        }
        if self.spare_questions.len() < 10 {
            return Err(LlmError::Config(format!(
                "spare_questions.txt must hold at least 10 questions, found {}",
                self.spare_questions.len()
            )));
        }
        Ok(())
    }
}

/// Replace each `{key}` with its value. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out.trim_end().to_string()
}
