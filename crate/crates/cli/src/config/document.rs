//! The `key = value` document grammar.
//!
//! ```text
//! # comment
//! key = value          # top-level entries come before any section
//! [section]
//! key = value
//! ```
//!
//! Keys are `[A-Za-z0-9_]+`. Values run to the end of the line or to an
//! unquoted `#`, with surrounding whitespace trimmed. A value may be wrapped
//! in double quotes to keep a literal `#`.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Empty for the top level.
    pub name: String,
    /// Zero for the top level.
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub sections: Vec<Section>,
}

/// A problem in a configuration, tied to a line when one applies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: (line > 0).then_some(line), message: message.into() }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every error found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn strip_comment(s: &str) -> &str {
    let mut quoted = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &s[..i],
            _ => {}
        }
    }
    s
}

fn unquote(s: &str) -> Result<String, String> {
    if let Some(rest) = s.strip_prefix('"') {
        return rest
            .strip_suffix('"')
            .filter(|inner| !inner.contains('"'))
            .map(str::to_string)
            .ok_or_else(|| format!("unterminated or malformed quoted value {s}"));
    }
    if s.contains('"') {
        return Err(format!("stray quote in value {s}"));
    }
    Ok(s.to_string())
}

impl Document {
    /// Parse the grammar, collecting every syntax error.
    pub fn parse(text: &str) -> Result<Self, ConfigErrors> {
        let mut sections = vec![Section { name: String::new(), line: 0, entries: Vec::new() }];
        let mut errors = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if valid_name(name) => {
                        if let Some(prev) = sections.iter().find(|s| s.name == name) {
                            errors.push(ConfigError::at(line, format!("section [{name}] repeats line {}", prev.line)));
                        }
                        sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
                    }
                    _ => errors.push(ConfigError::at(line, format!("malformed section header '{content}'"))),
                }
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                errors.push(ConfigError::at(line, format!("expected 'key = value', found '{content}'")));
                continue;
            };
            let key = key.trim();
            if !valid_name(key) {
                errors.push(ConfigError::at(line, format!("invalid key '{key}'")));
                continue;
            }
            let value = match unquote(value.trim()) {
                Ok(v) => v,
                Err(e) => {
                    errors.push(ConfigError::at(line, e));
                    continue;
                }
            };
            let section = sections.last_mut().expect("top level always present");
            if let Some(prev) = section.entries.iter().find(|e| e.key == key) {
                errors.push(ConfigError::at(line, format!("key '{key}' repeats line {}", prev.line)));
                continue;
            }
            section.entries.push(Entry { key: key.to_string(), value, line });
        }
        if errors.is_empty() {
            Ok(Self { sections })
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Writes documents in the grammar accepted by [`Document::parse`].
#[derive(Debug, Default)]
pub struct Renderer {
    out: String,
}

impl Renderer {
    pub fn comment(&mut self, text: &str) {
        for l in text.lines() {
            self.out.push_str("# ");
            self.out.push_str(l);
            self.out.push('\n');
        }
    }

    pub fn section(&mut self, name: &str) {
        if !self.out.is_empty() {
            self.out.push('\n');
        }
        self.out.push_str(&format!("[{name}]\n"));
    }

    pub fn entry(&mut self, key: &str, value: impl fmt::Display) {
        let v = value.to_string();
        let needs_quotes = v.contains('#') || v.trim() != v || v.is_empty();
        if needs_quotes {
            self.out.push_str(&format!("{key} = \"{v}\"\n"));
        } else {
            self.out.push_str(&format!("{key} = {v}\n"));
        }
    }

    pub fn finish(self) -> String {
        self.out
    }
}
