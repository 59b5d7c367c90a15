//! `key = value` configuration files with one `[section]` per subcommand.
//!
//! Keys before the first section header are common to every subcommand.
//! `#` starts a comment; values may be wrapped in double quotes. Keys use
//! the long flag names with `-` or `_` interchangeably.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    /// Section name (`""` for the common keys) → key → entry.
    pub sections: BTreeMap<String, BTreeMap<String, Entry>>,
    /// Line of each section header.
    pub headers: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path, l, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let err = |line: usize, message: String| ConfigError { path: origin.to_string(), line: Some(line), message };
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        sections.insert(String::new(), BTreeMap::new());
        let mut headers = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line_no, format!("unterminated section header '{line}'")))?
                    .trim();
                if name.is_empty() {
                    return Err(err(line_no, "empty section name".into()));
                }
                current = normalize_key(name);
                if let Some(prev) = headers.insert(current.clone(), line_no) {
                    return Err(err(line_no, format!("duplicate section [{current}] (first on line {prev})")));
                }
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(line_no, format!("expected 'key = value', got '{line}'")))?;
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(err(line_no, "missing key before '='".into()));
            }
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            let section = sections.get_mut(&current).expect("section inserted");
            if let Some(prev) = section.get(&key) {
                return Err(err(line_no, format!("duplicate key '{key}' (first set on line {})", prev.line)));
            }
            section.insert(key, Entry { value: value.to_string(), line: line_no });
        }
        Ok(Self { path: None, sections, headers })
    }

    fn origin(&self) -> String {
        self.path.as_ref().map_or_else(|| "<config>".to_string(), |p| p.display().to_string())
    }

    /// View of the keys visible to one subcommand.
    pub fn view<'a>(&'a self, section: &'a str) -> ConfigView<'a> {
        ConfigView { file: self, section }
    }

    /// Reject section headers not in `allowed`.
    pub fn check_sections(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        match self.headers.iter().find(|(name, _)| !allowed.contains(&name.as_str())) {
            Some((name, &line)) => {
                Err(ConfigError { path: self.origin(), line: Some(line), message: format!("unknown section [{name}]") })
            }
            None => Ok(()),
        }
    }

    /// Reject keys that the subcommand does not declare.
    pub fn check_known(&self, section: &str, known: &[&str]) -> Result<(), ConfigError> {
        for name in ["", section] {
            if let Some(keys) = self.sections.get(name) {
                for (k, e) in keys {
                    if !known.contains(&k.as_str()) {
                        return Err(ConfigError {
                            path: self.origin(),
                            line: Some(e.line),
                            message: format!(
                                "unknown key '{k}' for {}",
                                if name.is_empty() { "common settings" } else { name }
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

#[derive(Debug, Clone, Copy)]
pub struct ConfigView<'a> {
    file: &'a ConfigFile,
    section: &'a str,
}

impl<'a> ConfigView<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        let key = normalize_key(key);
        self.file
            .sections
            .get(self.section)
            .and_then(|s| s.get(&key))
            .or_else(|| self.file.sections.get("").and_then(|s| s.get(&key)))
    }

    /// Parse a key with a custom parser; errors carry the line.
    pub fn get_with<T, E: fmt::Display>(
        &self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, E>,
    ) -> Result<Option<T>, ConfigError> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(Some).map_err(|err| ConfigError {
                path: self.file.origin(),
                line: Some(e.line),
                message: format!("invalid value '{}' for {key}: {err}", e.value),
            }),
        }
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get_with(key, str::parse::<T>)
    }

    /// Line of a key, for validation errors raised after parsing.
    pub fn line(&self, key: &str) -> Option<usize> {
        self.entry(key).map(|e| e.line)
    }

    pub fn error(&self, key: &str, message: String) -> ConfigError {
        ConfigError { path: self.file.origin(), line: self.line(key), message }
    }
}
