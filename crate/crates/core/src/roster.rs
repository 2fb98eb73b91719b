//! Country identities and name resolution.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a country in its scenario roster. Roster order is the canonical
/// iteration order for boards, application order and tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountryId(pub usize);

impl CountryId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for CountryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub name: String,
    /// Short board header.
    pub label: String,
    /// Article used in narrative prose ("the United States").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    entries: Vec<RosterEntry>,
}

impl Roster {
    pub fn new(entries: Vec<RosterEntry>) -> Self {
        Roster { entries }
    }

    /// Bare roster from names; labels default to the first character.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        Roster {
            entries: names
                .iter()
                .map(|n| RosterEntry {
                    name: n.as_ref().to_string(),
                    label: n.as_ref().chars().next().map(String::from).unwrap_or_default(),
                    article: None,
                    aliases: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = CountryId> + '_ {
        (0..self.entries.len()).map(CountryId)
    }

    pub fn entries(&self) -> &[RosterEntry] {
        &self.entries
    }

    pub fn name(&self, id: CountryId) -> &str {
        &self.entries[id.0].name
    }

    pub fn label(&self, id: CountryId) -> &str {
        &self.entries[id.0].label
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// Name as used inside a narrative sentence, with its article if any.
    pub fn prose_name(&self, id: CountryId, sentence_start: bool) -> String {
        let entry = &self.entries[id.0];
        match &entry.article {
            Some(article) => {
                let mut out = String::with_capacity(article.len() + entry.name.len() + 1);
                if sentence_start {
                    let mut chars = article.chars();
                    if let Some(first) = chars.next() {
                        out.extend(first.to_uppercase());
                        out.push_str(chars.as_str());
                    }
                } else {
                    out.push_str(article);
                }
                out.push(' ');
                out.push_str(&entry.name);
                out
            }
            None => entry.name.clone(),
        }
    }

    /// Resolves a country reference: case-insensitive, leading "the" ignored,
    /// aliases accepted.
    pub fn resolve(&self, text: &str) -> Option<CountryId> {
        let wanted = normalize_reference(text);
        if wanted.is_empty() {
            return None;
        }
        self.entries.iter().position(|e| {
            normalize_reference(&e.name) == wanted
                || e.aliases.iter().any(|a| normalize_reference(a) == wanted)
        })
        .map(CountryId)
    }
}

fn normalize_reference(text: &str) -> String {
    let trimmed = text.trim().trim_end_matches(['.', ',', ';']).trim();
    let lower = trimmed.to_lowercase();
    let stripped = lower.strip_prefix("the ").unwrap_or(&lower);
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}
