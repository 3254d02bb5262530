use std::time::SystemTime;

use serde::{Deserialize, Serialize};

/// Lowercase, trim, and collapse internal whitespace.
pub fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Names of the objects that currently matter in the scene.
///
/// Entries are normalized and unique; insertion order is kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyObjectList {
    entries: Vec<String>,
    last_refreshed: Option<SystemTime>,
}

impl KeyObjectList {
    pub fn new() -> Self {
        Self::default()
    }

    /// List holding the given names (normalized, deduplicated, empties dropped).
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut list = Self::new();
        for n in names {
            list.insert(n.as_ref());
        }
        list
    }

    /// Adds a name; returns false if it was empty or already present.
    pub fn insert(&mut self, name: &str) -> bool {
        let n = normalize_phrase(name);
        if n.is_empty() || self.entries.contains(&n) {
            return false;
        }
        self.entries.push(n);
        true
    }

    pub fn merge<I, S>(&mut self, names: I, at: SystemTime)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for n in names {
            self.insert(n.as_ref());
        }
        self.last_refreshed = Some(at);
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_refreshed(&self) -> Option<SystemTime> {
        self.last_refreshed
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
