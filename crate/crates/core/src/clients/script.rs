//! Scripted replies for deterministic mocks.
//!
//! A script is an ordered list of `(matcher, reply)` entries. Entries sharing a
//! matcher string form one group whose replies are consumed in order. A call is
//! routed to the first group (in script order) whose matcher accepts the call
//! key. Matchers are `*` (anything), `re:<regex>` (full regex search), or an
//! exact string.
//!
//! When a group runs out, a strict script fails the call; a lenient one repeats
//! the group's last reply. Unmatched calls are always an error.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ClientError, ClientResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Response { response: String },
    Error { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: String,
    #[serde(flatten)]
    pub reply: MockReply,
}

impl ScriptEntry {
    pub fn response(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            reply: MockReply::Response {
                response: response.into(),
            },
        }
    }

    pub fn error(matcher: impl Into<String>, error: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            reply: MockReply::Error { error: error.into() },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub strict: bool,
    pub entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Self {
        Self {
            strict: false,
            entries,
        }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn load(path: &Path) -> ClientResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))
    }

    pub fn player(&self) -> ClientResult<ScriptPlayer> {
        ScriptPlayer::new(self)
    }
}

enum Matcher {
    Any,
    Exact(String),
    Pattern(Regex),
}

impl Matcher {
    fn parse(text: &str) -> ClientResult<Self> {
        if text == "*" {
            Ok(Matcher::Any)
        } else if let Some(pattern) = text.strip_prefix("re:") {
            Regex::new(pattern)
                .map(Matcher::Pattern)
                .map_err(|e| ClientError::Config(format!("bad matcher `{text}`: {e}")))
        } else {
            Ok(Matcher::Exact(text.to_string()))
        }
    }

    fn accepts(&self, key: &str) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::Exact(s) => s == key,
            Matcher::Pattern(re) => re.is_match(key),
        }
    }
}

struct Group {
    matcher: Matcher,
    replies: Vec<MockReply>,
}

/// Runtime state of a [`MockScript`]. Consumption is serialized behind a mutex,
/// so concurrent callers observe a single global order.
pub struct ScriptPlayer {
    strict: bool,
    groups: Vec<Group>,
    exact: HashMap<String, usize>,
    inexact: Vec<usize>,
    state: Mutex<PlayerState>,
}

#[derive(Default)]
struct PlayerState {
    cursors: Vec<usize>,
    calls: Vec<String>,
}

impl ScriptPlayer {
    pub fn new(script: &MockScript) -> ClientResult<Self> {
        let mut groups: Vec<Group> = Vec::new();
        let mut by_text: HashMap<&str, usize> = HashMap::new();
        for entry in &script.entries {
            let idx = match by_text.get(entry.matcher.as_str()) {
                Some(&idx) => idx,
                None => {
                    groups.push(Group {
                        matcher: Matcher::parse(&entry.matcher)?,
                        replies: Vec::new(),
                    });
                    by_text.insert(&entry.matcher, groups.len() - 1);
                    groups.len() - 1
                }
            };
            groups[idx].replies.push(entry.reply.clone());
        }
        let mut exact = HashMap::new();
        let mut inexact = Vec::new();
        for (idx, group) in groups.iter().enumerate() {
            match &group.matcher {
                Matcher::Exact(s) => {
                    exact.insert(s.clone(), idx);
                }
                _ => inexact.push(idx),
            }
        }
        let state = PlayerState {
            cursors: vec![0; groups.len()],
            calls: Vec::new(),
        };
        Ok(Self {
            strict: script.strict,
            groups,
            exact,
            inexact,
            state: Mutex::new(state),
        })
    }

    fn route(&self, key: &str) -> Option<usize> {
        let exact = self.exact.get(key).copied();
        let inexact = self
            .inexact
            .iter()
            .copied()
            .find(|&idx| self.groups[idx].matcher.accepts(key));
        match (exact, inexact) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Next reply for `key`. Scripted errors surface as retriable transport errors.
    pub fn next(&self, key: &str) -> ClientResult<String> {
        let mut state = self.state.lock().expect("script state poisoned");
        state.calls.push(key.to_string());
        let idx = self
            .route(key)
            .ok_or_else(|| ClientError::ScriptViolation(format!("no script entry matches `{}`", preview(key))))?;
        let group = &self.groups[idx];
        let cursor = state.cursors[idx];
        let reply = if cursor < group.replies.len() {
            state.cursors[idx] += 1;
            &group.replies[cursor]
        } else if self.strict {
            return Err(ClientError::ScriptViolation(format!(
                "script exhausted for `{}`",
                preview(key)
            )));
        } else {
            group.replies.last().expect("groups are never empty")
        };
        match reply {
            MockReply::Response { response } => Ok(response.clone()),
            MockReply::Error { error } => Err(ClientError::Transport(error.clone())),
        }
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("script state poisoned").calls.len()
    }

    /// Keys of every call received, in order.
    pub fn calls(&self) -> Vec<String> {
        self.state.lock().expect("script state poisoned").calls.clone()
    }
}

fn preview(key: &str) -> String {
    let mut s: String = key.chars().take(80).collect();
    if s.len() < key.len() {
        s.push_str("...");
    }
    s
}
