//! Sectioned `key = value` text format shared by site descriptions, calibration
//! files, parameter files and mission plans.
//!
//! ```text
//! # comment
//! [patch north]
//! region = 0 0 10 10
//! layer = 0 1.0 0 0 12 7
//! ```
//!
//! `#` starts a comment anywhere on a line. A header is `[kind]` or
//! `[kind NAME]`. Entries before the first header are rejected. Keys that
//! are not repeatable follow a last-wins rule; callers can ask which lines
//! were overridden.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("section [{section}]: missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: duplicate section [{section}]")]
    DuplicateSection { line: usize, section: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub kind: String,
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// A key that appeared more than once where only the last value counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub section: String,
    pub key: String,
    pub line: usize,
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: `{}` in [{}] overrides an earlier value",
            self.line, self.key, self.section
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub sections: Vec<Section>,
}

/// Identifiers (section names, rock ids, log keys) must be a single
/// token without whitespace or `=`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfError> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let inner = rest.strip_suffix(']').ok_or_else(|| ConfError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?;
                let mut parts = inner.split_whitespace();
                let kind = parts.next().ok_or_else(|| ConfError::Syntax {
                    line,
                    message: "empty section header".into(),
                })?;
                let name = parts.next();
                if parts.next().is_some() {
                    return Err(ConfError::Syntax {
                        line,
                        message: "section header takes at most one name".into(),
                    });
                }
                if !is_identifier(kind) || name.is_some_and(|n| !is_identifier(n)) {
                    return Err(ConfError::Syntax {
                        line,
                        message: format!("invalid section header `[{inner}]`"),
                    });
                }
                sections.push(Section {
                    kind: kind.to_string(),
                    name: name.map(str::to_string),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfError::Syntax {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            if !is_identifier(key) {
                return Err(ConfError::Syntax {
                    line,
                    message: format!("invalid key `{key}`"),
                });
            }
            let section = sections.last_mut().ok_or_else(|| ConfError::Syntax {
                line,
                message: "entry outside of any section".into(),
            })?;
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Document { sections })
    }

    pub fn sections_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.kind == kind)
    }

    /// Reject any section kind outside `allowed`.
    pub fn check_kinds(&self, allowed: &[&str]) -> Result<(), ConfError> {
        for s in &self.sections {
            if !allowed.contains(&s.kind.as_str()) {
                return Err(ConfError::UnknownSection {
                    line: s.line,
                    section: s.label(),
                });
            }
        }
        Ok(())
    }

    /// The single unnamed section of this kind, if present.
    pub fn singleton(&self, kind: &str) -> Result<Option<&Section>, ConfError> {
        let mut found = None;
        for s in self.sections.iter().filter(|s| s.kind == kind) {
            if found.is_some() {
                return Err(ConfError::DuplicateSection {
                    line: s.line,
                    section: s.label(),
                });
            }
            found = Some(s);
        }
        Ok(found)
    }
}

impl Section {
    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => format!("{} {}", self.kind, n),
            None => self.kind.clone(),
        }
    }

    /// Last entry for `key` (last-wins).
    pub fn last(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    /// Earlier occurrences of non-repeatable keys that a later line overrode.
    pub fn overrides(&self, repeatable: &[&str]) -> Vec<Override> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if repeatable.contains(&e.key.as_str()) {
                continue;
            }
            if self.entries[i + 1..].iter().any(|later| later.key == e.key) {
                out.push(Override {
                    section: self.label(),
                    key: e.key.clone(),
                    line: e.line,
                });
            }
        }
        out
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfError> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(ConfError::UnknownKey {
                    line: e.line,
                    section: self.label(),
                    key: e.key.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn require(&self, key: &str) -> Result<&Entry, ConfError> {
        self.last(key).ok_or_else(|| ConfError::MissingKey {
            section: self.label(),
            key: key.to_string(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfError> {
        self.last(key).map(|e| e.parse_one()).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&self, key: &str) -> Result<T, ConfError> {
        self.require(key)?.parse_one()
    }
}

impl Entry {
    pub fn error(&self, message: impl Into<String>) -> ConfError {
        ConfError::Value {
            line: self.line,
            key: self.key.clone(),
            message: message.into(),
        }
    }

    pub fn parse_one<T: FromStr>(&self) -> Result<T, ConfError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("cannot parse `{}`", self.value)))
    }

    /// Whitespace-separated list of values.
    pub fn parse_list<T: FromStr>(&self) -> Result<Vec<T>, ConfError> {
        self.value
            .split_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|_| self.error(format!("cannot parse `{tok}`")))
            })
            .collect()
    }

    /// Exactly `N` whitespace-separated values.
    pub fn parse_array<T: FromStr + Copy + Default, const N: usize>(
        &self,
    ) -> Result<[T; N], ConfError> {
        let list = self.parse_list::<T>()?;
        if list.len() != N {
            return Err(self.error(format!("expected {N} values, found {}", list.len())));
        }
        let mut out = [T::default(); N];
        out.copy_from_slice(&list);
        Ok(out)
    }
}

/// Writes a float so that parsing it back yields the same bits.
pub struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
