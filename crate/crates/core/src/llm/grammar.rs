//! Parsers for model replies.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::comm::{trim_to_words, Category, WORD_CAP};
use crate::world::{AgentId, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighLevelAction {
    GoTo(Pos),
    Attack(AgentId),
    Explore,
    Stay,
}

impl fmt::Display for HighLevelAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HighLevelAction::GoTo(p) => write!(f, "go_to ({},{})", p.row, p.col),
            HighLevelAction::Attack(a) => write!(f, "attack {}", a.0),
            HighLevelAction::Explore => f.write_str("explore"),
            HighLevelAction::Stay => f.write_str("stay"),
        }
    }
}

fn integers(s: &str) -> Vec<i64> {
    s.split(|c: char| !(c.is_ascii_digit() || c == '-'))
        .filter_map(|t| t.parse().ok())
        .collect()
}

fn parse_line(line: &str) -> Option<HighLevelAction> {
    let mut l = line
        .trim()
        .trim_matches(|c: char| c == '`' || c == '*')
        .trim()
        .to_lowercase();
    if let Some(rest) = l.strip_prefix("action:") {
        l = rest.trim().to_string();
    }
    let l = l.trim_end_matches(['.', '!']);
    match l {
        "stay" => return Some(HighLevelAction::Stay),
        "explore" => return Some(HighLevelAction::Explore),
        _ => {}
    }
    if let Some(rest) = l.strip_prefix("attack") {
        let rest = rest.trim().trim_start_matches("agent").trim();
        let n: u8 = rest.parse().ok()?;
        return (n < 10).then_some(HighLevelAction::Attack(AgentId(n)));
    }
    let rest = l.strip_prefix("go_to").or_else(|| l.strip_prefix("go to"))?;
    let nums = integers(rest);
    match nums.as_slice() {
        [r, c] => Some(HighLevelAction::GoTo(Pos::new(
            i32::try_from(*r).ok()?,
            i32::try_from(*c).ok()?,
        ))),
        _ => None,
    }
}

/// First line of `reply` that matches
/// `[ACTION:] go_to (r,c) | attack <id> | explore | stay`.
pub fn parse_action(reply: &str) -> Option<HighLevelAction> {
    reply.lines().find_map(parse_line)
}

pub fn parse_yes_no(reply: &str) -> bool {
    let first = reply
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())
        .unwrap_or("");
    first.eq_ignore_ascii_case("yes")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageParse {
    Ok(Category, String),
    InvalidCategory(String),
    Empty,
}

/// `CAT: text`, text trimmed to the word cap.
pub fn parse_message(reply: &str) -> MessageParse {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let Some((code, text)) = line.split_once(':') else {
        return MessageParse::InvalidCategory(line.chars().take(12).collect());
    };
    let code = code.trim();
    let Ok(category) = code.parse::<Category>() else {
        return MessageParse::InvalidCategory(code.to_string());
    };
    let text = trim_to_words(text, WORD_CAP);
    if text.is_empty() {
        return MessageParse::Empty;
    }
    MessageParse::Ok(category, text)
}

/// Bodies of lines numbered `1.` / `1)`.
pub fn parse_numbered(reply: &str) -> Vec<String> {
    reply
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                return None;
            }
            let rest = l[digits..].strip_prefix(['.', ')'])?.trim();
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect()
}

/// Distinct numbers in `1..=max`, in order of appearance.
pub fn parse_selection(reply: &str, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for n in integers(reply) {
        if n >= 1 && (n as usize) <= max && !out.contains(&(n as usize)) {
            out.push(n as usize);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn action_forms() {
        assert_eq!(parse_action("go_to (4,7)"), Some(HighLevelAction::GoTo(Pos::new(4, 7))));
        assert_eq!(parse_action("ACTION: stay"), Some(HighLevelAction::Stay));
        assert_eq!(
            parse_action("I think...\nACTION: go to (2, 13)."),
            Some(HighLevelAction::GoTo(Pos::new(2, 13)))
        );
        assert_eq!(
            parse_action("attack agent 3"),
            Some(HighLevelAction::Attack(AgentId(3)))
        );
        assert_eq!(parse_action("Explore"), Some(HighLevelAction::Explore));
        assert_eq!(parse_action("dance wildly"), None);
        assert_eq!(parse_action("attack 12"), None);
        assert_eq!(parse_action("go_to (1)"), None);
    }

    #[test]
    fn round_trip_display() {
        for a in [
            HighLevelAction::GoTo(Pos::new(3, 9)),
            HighLevelAction::Attack(AgentId(2)),
            HighLevelAction::Explore,
            HighLevelAction::Stay,
        ] {
            assert_eq!(parse_action(&a.to_string()), Some(a));
        }
    }

    #[test]
    fn messages() {
        assert_eq!(
            parse_message("Q: north tree nearly empty"),
            MessageParse::Ok(Category::Q, "north tree nearly empty".into())
        );
        assert_eq!(parse_message("Z: hi"), MessageParse::InvalidCategory("Z".into()));
        assert_eq!(parse_message("T:   "), MessageParse::Empty);
        let long = format!("R: {}", vec!["word"; 60].join(" "));
        match parse_message(&long) {
            MessageParse::Ok(_, t) => assert_eq!(crate::comm::word_count(&t), 50),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn yes_no() {
        assert!(parse_yes_no("Yes."));
        assert!(parse_yes_no("  yes, I will"));
        assert!(!parse_yes_no("no"));
        assert!(!parse_yes_no(""));
    }

    #[test]
    fn numbered_and_selection() {
        let q = parse_numbered("Here:\n1. First?\n2) Second?\n\n3.\nx. no\n10. Tenth?");
        assert_eq!(q, vec!["First?", "Second?", "Tenth?"]);
        assert_eq!(parse_selection("2, 5, 2 and 40", 10), vec![2, 5]);
        assert!(parse_selection("none", 10).is_empty());
    }

    proptest! {
        #[test]
        fn parser_never_panics(s in "\\PC{0,80}") {
            let _ = parse_action(&s);
            let _ = parse_message(&s);
            let _ = parse_numbered(&s);
            let _ = parse_selection(&s, 20);
        }
    }
}
