//! Scenario definitions: rosters, six-dimension profiles, triggers,
//! anonymization, ground truth and counterfactual overlays.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::roster::{CountryId, Roster, RosterEntry};

pub const NULL_TRIGGER_TEXT: &str = "Today is sunny, and nothing special happened.";

const BUILTIN_WWI: &str = include_str!("../../../scenarios/wwi.json");
const BUILTIN_WWII: &str = include_str!("../../../scenarios/wwii.json");
const BUILTIN_WSP: &str = include_str!("../../../scenarios/wsp.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("duplicate country name {0:?}")]
    DuplicateCountry(String),
    #[error("ground truth names unknown country {0:?}")]
    UnknownGroundTruthCountry(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("scenario is already anonymized")]
    AlreadyAnonymized,
    #[error("anonymization alias collision: {0}")]
    AliasCollision(String),
    #[error("overlay: {0}")]
    Overlay(String),
}

type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Leadership,
    MilitaryCapability,
    Resources,
    HistoricalBackground,
    KeyPolicy,
    PublicMorale,
}

impl Dimension {
    pub const ALL: [Dimension; 6] = [
        Dimension::Leadership,
        Dimension::MilitaryCapability,
        Dimension::Resources,
        Dimension::HistoricalBackground,
        Dimension::KeyPolicy,
        Dimension::PublicMorale,
    ];

    pub fn heading(self) -> &'static str {
        match self {
            Dimension::Leadership => "Leadership",
            Dimension::MilitaryCapability => "Military Capability",
            Dimension::Resources => "Resources",
            Dimension::HistoricalBackground => "History Background",
            Dimension::KeyPolicy => "Key Policy",
            Dimension::PublicMorale => "Public Morale",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFact {
    pub value: f64,
    pub unit: String,
    /// Accumulated overlay multiplier.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

impl NumericFact {
    pub fn effective(&self) -> f64 {
        self.value * self.scale
    }

    /// Unscaled values print as authored; scaled values round to one decimal.
    pub fn render(&self) -> String {
        if self.scale == 1.0 {
            return format!("{}", self.value);
        }
        let rounded = (self.effective() * 10.0).round() / 10.0;
        if rounded.fract() == 0.0 {
            format!("{rounded:.0}")
        } else {
            format!("{rounded:.1}")
        }
    }
}

/// A profile entry: plain text, or a template whose `{i}` slots are filled
/// from numeric facts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Text(String),
    Facts {
        template: String,
        facts: Vec<NumericFact>,
    },
}

impl Entry {
    pub fn render(&self) -> String {
        match self {
            Entry::Text(t) => t.clone(),
            Entry::Facts { template, facts } => {
                let mut out = template.clone();
                for (i, f) in facts.iter().enumerate() {
                    out = out.replace(&format!("{{{i}}}"), &f.render());
                }
                out
            }
        }
    }

    fn text_mut(&mut self) -> &mut String {
        match self {
            Entry::Text(t) => t,
            Entry::Facts { template, .. } => template,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryProfile {
    pub name: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    pub leadership: Vec<Entry>,
    pub military_capability: Vec<Entry>,
    pub resources: Vec<Entry>,
    pub historical_background: Vec<Entry>,
    pub key_policy: Vec<Entry>,
    pub public_morale: Vec<Entry>,
}

impl CountryProfile {
    pub fn dimension(&self, d: Dimension) -> &[Entry] {
        match d {
            Dimension::Leadership => &self.leadership,
            Dimension::MilitaryCapability => &self.military_capability,
            Dimension::Resources => &self.resources,
            Dimension::HistoricalBackground => &self.historical_background,
            Dimension::KeyPolicy => &self.key_policy,
            Dimension::PublicMorale => &self.public_morale,
        }
    }

    pub fn dimension_mut(&mut self, d: Dimension) -> &mut Vec<Entry> {
        match d {
            Dimension::Leadership => &mut self.leadership,
            Dimension::MilitaryCapability => &mut self.military_capability,
            Dimension::Resources => &mut self.resources,
            Dimension::HistoricalBackground => &mut self.historical_background,
            Dimension::KeyPolicy => &mut self.key_policy,
            Dimension::PublicMorale => &mut self.public_morale,
        }
    }

    fn entries_mut(&mut self) -> impl Iterator<Item = &mut Entry> {
        self.leadership
            .iter_mut()
            .chain(self.military_capability.iter_mut())
            .chain(self.resources.iter_mut())
            .chain(self.historical_background.iter_mut())
            .chain(self.key_policy.iter_mut())
            .chain(self.public_morale.iter_mut())
    }
}

/// Markdown-style profile block.
pub fn render_profile(profile: &CountryProfile) -> String {
    let mut out = format!("## {} profile\n", profile.name);
    for d in Dimension::ALL {
        out.push_str(&format!("\n# {} for {}\n", d.heading(), profile.name));
        for (i, e) in profile.dimension(d).iter().enumerate() {
            out.push_str(&format!("({}) {}\n", i + 1, e.render()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub id: String,
    pub text: String,
}

impl TriggerEvent {
    pub fn null() -> Self {
        TriggerEvent {
            id: "null".into(),
            text: NULL_TRIGGER_TEXT.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    #[serde(default)]
    pub countries: Vec<(String, String)>,
    #[serde(default)]
    pub locations: Vec<(String, String)>,
    #[serde(default)]
    pub events: Vec<(String, String)>,
}

/// Single-pass, longest-first, word-bounded phrase replacement.
struct Rewriter {
    regex: Option<Regex>,
    table: Vec<(String, String)>,
}

impl Rewriter {
    fn new(pairs: &[(String, String)]) -> Self {
        let mut table: Vec<(String, String)> = pairs
            .iter()
            .filter(|(from, _)| !from.is_empty())
            .cloned()
            .collect();
        table.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        table.dedup_by(|a, b| a.0 == b.0);
        if table.is_empty() {
            return Rewriter { regex: None, table };
        }
        let alternation = table
            .iter()
            .map(|(from, _)| bounded(from))
            .collect::<Vec<_>>()
            .join("|");
        let regex = Regex::new(&alternation).expect("escaped alternation is valid");
        Rewriter {
            regex: Some(regex),
            table,
        }
    }

    fn apply(&self, text: &str) -> String {
        let Some(re) = &self.regex else {
            return text.to_string();
        };
        re.replace_all(text, |caps: &regex::Captures<'_>| {
            let m = caps.get(0).expect("whole match").as_str();
            self.table
                .iter()
                .find(|(from, _)| from == m)
                .map(|(_, to)| to.clone())
                .unwrap_or_else(|| m.to_string())
        })
        .into_owned()
    }
}

fn bounded(phrase: &str) -> String {
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    let mut p = String::new();
    if is_word(phrase.chars().next()) {
        p.push_str(r"\b");
    }
    p.push_str(&regex::escape(phrase));
    if is_word(phrase.chars().last()) {
        p.push_str(r"\b");
    }
    p
}

fn contains_word(text: &str, phrase: &str) -> bool {
    Regex::new(&bounded(phrase))
        .map(|re| re.is_match(text))
        .unwrap_or(false)
}

impl AnonymizationMap {
    pub fn is_empty(&self) -> bool {
        self.countries.is_empty() && self.locations.is_empty() && self.events.is_empty()
    }

    /// Rewrites events, then locations, then countries. `extra_countries`
    /// adds alias spellings that map onto a country's alias.
    pub fn apply_text(&self, text: &str, extra_countries: &[(String, String)]) -> String {
        let mut countries = self.countries.clone();
        countries.extend_from_slice(extra_countries);
        let events = Rewriter::new(&self.events).apply(text);
        let located = Rewriter::new(&self.locations).apply(&events);
        Rewriter::new(&countries).apply(&located)
    }

    fn validate(&self) -> Result<()> {
        for group in [&self.countries, &self.locations, &self.events] {
            let mut seen = HashSet::new();
            for (from, to) in group.iter() {
                if !seen.insert(to.as_str()) {
                    return Err(ScenarioError::AliasCollision(format!(
                        "{to:?} is the alias of more than one name"
                    )));
                }
                if from.is_empty() {
                    return Err(ScenarioError::AliasCollision("empty source name".into()));
                }
            }
        }
        for (real, _) in &self.countries {
            for (other, alias) in &self.countries {
                if real == other && real == alias {
                    continue;
                }
                if contains_word(alias, real) {
                    return Err(ScenarioError::AliasCollision(format!(
                        "alias {alias:?} contains real name {real:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth as named in the scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alliances: Vec<(String, String)>,
    /// `None` means war declarations are not evaluated.
    #[serde(default)]
    pub war_declarations: Option<Vec<(String, String)>>,
    pub mobilized: Vec<String>,
    #[serde(default = "default_snapshot")]
    pub snapshot_round: u32,
}

fn default_snapshot() -> u32 {
    6
}

pub type Pair = (CountryId, CountryId);

pub fn unordered(a: CountryId, b: CountryId) -> Pair {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Ground truth resolved against a roster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSets {
    pub alliances: BTreeSet<Pair>,
    pub war_declarations: Option<BTreeSet<Pair>>,
    pub mobilized: BTreeSet<CountryId>,
    pub snapshot_round: u32,
}

impl GroundTruth {
    pub fn resolve(&self, roster: &Roster) -> Result<GroundTruthSets> {
        let id = |name: &str| {
            roster
                .resolve(name)
                .ok_or_else(|| ScenarioError::UnknownGroundTruthCountry(name.to_string()))
        };
        let pairs = |list: &[(String, String)]| -> Result<BTreeSet<Pair>> {
            list.iter()
                .map(|(a, b)| {
                    let (a, b) = (id(a)?, id(b)?);
                    if a == b {
                        return Err(ScenarioError::Invalid(format!(
                            "ground-truth pair repeats {}",
                            roster.name(a)
                        )));
                    }
                    Ok(unordered(a, b))
                })
                .collect()
        };
        Ok(GroundTruthSets {
            alliances: pairs(&self.alliances)?,
            war_declarations: self.war_declarations.as_deref().map(pairs).transpose()?,
            mobilized: self
                .mobilized
                .iter()
                .map(|n| id(n))
                .collect::<Result<_>>()?,
            snapshot_round: self.snapshot_round,
        })
    }

    fn rename(&mut self, f: impl Fn(&str) -> String) {
        for (a, b) in &mut self.alliances {
            *a = f(a);
            *b = f(b);
        }
        if let Some(wars) = &mut self.war_declarations {
            for (a, b) in wars {
                *a = f(a);
                *b = f(b);
            }
        }
        for m in &mut self.mobilized {
            *m = f(m);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attitude {
    #[default]
    Default,
    Aggressive,
    Conservative,
}

impl fmt::Display for Attitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attitude::Default => "default",
            Attitude::Aggressive => "aggressive",
            Attitude::Conservative => "conservative",
        })
    }
}

impl std::str::FromStr for Attitude {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Attitude::Default),
            "aggressive" => Ok(Attitude::Aggressive),
            "conservative" => Ok(Attitude::Conservative),
            other => Err(ScenarioError::Overlay(format!("unknown attitude {other:?}"))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "_comment", skip_serializing_if = "String::is_empty")]
    pub comment: String,
    pub roster: Vec<CountryProfile>,
    pub trigger: TriggerEvent,
    #[serde(default)]
    pub anonymization: AnonymizationMap,
    pub ground_truth: GroundTruth,
    #[serde(default = "default_true")]
    pub deanonymized: bool,
    #[serde(default, skip_serializing_if = "is_default")]
    pub attitude: Attitude,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn roster(&self) -> Roster {
        Roster::new(
            self.roster
                .iter()
                .map(|p| RosterEntry {
                    name: p.name.clone(),
                    label: p.label.clone(),
                    article: p.article.clone(),
                    aliases: p.aliases.clone(),
                })
                .collect(),
        )
    }

    pub fn ground_truth_sets(&self) -> Result<GroundTruthSets> {
        self.ground_truth.resolve(&self.roster())
    }

    pub fn profile(&self, id: CountryId) -> &CountryProfile {
        &self.roster[id.0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(ScenarioError::Invalid("scenario id is empty".into()));
        }
        if self.roster.len() < 2 {
            return Err(ScenarioError::Invalid("roster needs at least two countries".into()));
        }
        let mut names = HashSet::new();
        let mut labels = HashSet::new();
        for p in &self.roster {
            if p.name.trim().is_empty() {
                return Err(ScenarioError::Invalid("country name is empty".into()));
            }
            for n in std::iter::once(&p.name).chain(&p.aliases) {
                if !names.insert(n.to_lowercase()) {
                    return Err(ScenarioError::DuplicateCountry(n.clone()));
                }
            }
            if p.label.is_empty() || !labels.insert(p.label.clone()) {
                return Err(ScenarioError::Invalid(format!(
                    "label {:?} of {} is empty or repeated",
                    p.label, p.name
                )));
            }
            for d in Dimension::ALL {
                let entries = p.dimension(d);
                if entries.is_empty() {
                    return Err(ScenarioError::Invalid(format!(
                        "{} has no {} entries",
                        p.name,
                        d.heading()
                    )));
                }
                for e in entries {
                    if let Entry::Facts { template, facts } = e {
                        for (i, f) in facts.iter().enumerate() {
                            let positive = |x: f64| x > 0.0 && x.is_finite();
                            if !positive(f.value) || !positive(f.scale) {
                                return Err(ScenarioError::Invalid(format!(
                                    "{}: numeric fact {} must be positive",
                                    p.name, f.value
                                )));
                            }
                            if !template.contains(&format!("{{{i}}}")) {
                                return Err(ScenarioError::Invalid(format!(
                                    "{}: template {template:?} lacks slot {{{i}}}",
                                    p.name
                                )));
                            }
                        }
                    }
                }
            }
        }
        if self.trigger.text.trim().is_empty() {
            return Err(ScenarioError::Invalid("trigger text is empty".into()));
        }
        if self.ground_truth.snapshot_round == 0 {
            return Err(ScenarioError::Invalid("snapshot_round must be at least 1".into()));
        }
        self.ground_truth_sets()?;
        Ok(())
    }

    /// Applies the anonymization map to every text, the roster and the
    /// ground truth.
    pub fn anonymize(&self) -> Result<Scenario> {
        if !self.deanonymized {
            return Err(ScenarioError::AlreadyAnonymized);
        }
        self.anonymization.validate()?;
        let alias_of = |name: &str| {
            self.anonymization
                .countries
                .iter()
                .find(|(real, _)| real == name)
                .map(|(_, alias)| alias.clone())
        };
        // Alternate spellings map onto the owning country's alias.
        let mut extra = Vec::new();
        for p in &self.roster {
            if let Some(alias) = alias_of(&p.name) {
                for a in &p.aliases {
                    extra.push((a.clone(), alias.clone()));
                }
            }
        }
        let mut taken: HashSet<String> = HashSet::new();
        let mut out = self.clone();
        for p in &mut out.roster {
            if let Some(alias) = alias_of(&p.name) {
                if alias != p.name {
                    p.article = None;
                }
                p.name = alias;
            }
            if !taken.insert(p.name.to_lowercase()) {
                return Err(ScenarioError::AliasCollision(format!(
                    "{:?} names two roster countries",
                    p.name
                )));
            }
            p.aliases.clear();
            for e in p.entries_mut() {
                let t = e.text_mut();
                *t = self.anonymization.apply_text(t, &extra);
            }
        }
        out.trigger.text = self.anonymization.apply_text(&self.trigger.text, &extra);
        out.ground_truth
            .rename(|n| alias_of(n).unwrap_or_else(|| n.to_string()));
        out.deanonymized = false;
        out.validate()?;
        Ok(out)
    }

    /// Returns a patched copy; `self` is untouched.
    pub fn apply_overlay(&self, overlay: &Overlay) -> Result<Scenario> {
        let mut out = self.clone();
        let roster = self.roster();
        for patch in &overlay.profile_patches {
            let id = roster.resolve(&patch.country).ok_or_else(|| {
                ScenarioError::Overlay(format!("unknown country {:?}", patch.country))
            })?;
            let multiplier = match (&patch.replace, &patch.multiplier) {
                (Some(_), None) => None,
                (None, Some(m)) => {
                    let v = m.value();
                    let standard = [3.0, 1.0 / 3.0].iter().any(|s| (v - s).abs() < 1e-9);
                    if !(v > 0.0 && v.is_finite()) || (!standard && !overlay.allow_custom_multipliers)
                    {
                        return Err(ScenarioError::Overlay(format!(
                            "multiplier {v} is not 3 or 1/3"
                        )));
                    }
                    Some(v)
                }
                _ => {
                    return Err(ScenarioError::Overlay(
                        "a patch needs exactly one of replace or multiplier".into(),
                    ))
                }
            };
            let entries = out.roster[id.0].dimension_mut(patch.dimension);
            let selected: Vec<usize> = match &patch.selector {
                Selector::Index(i) if (1..=entries.len()).contains(i) => vec![i - 1],
                Selector::Index(_) => Vec::new(),
                Selector::Contains(needle) => entries
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.render().contains(needle.as_str()))
                    .map(|(i, _)| i)
                    .collect(),
                Selector::All => (0..entries.len())
                    .filter(|&i| multiplier.is_none() || matches!(entries[i], Entry::Facts { .. }))
                    .collect(),
            };
            if selected.is_empty() {
                return Err(ScenarioError::Overlay(format!(
                    "selector {:?} matches no {} entry of {}",
                    patch.selector,
                    patch.dimension.heading(),
                    patch.country
                )));
            }
            for i in selected {
                match (multiplier, &patch.replace) {
                    (Some(m), _) => match &mut entries[i] {
                        Entry::Facts { facts, .. } => facts.iter_mut().for_each(|f| f.scale *= m),
                        Entry::Text(t) => {
                            return Err(ScenarioError::Overlay(format!(
                                "entry {t:?} carries no numeric facts"
                            )))
                        }
                    },
                    (None, Some(text)) => entries[i] = Entry::Text(text.clone()),
                    (None, None) => unreachable!("checked above"),
                }
            }
        }
        if let Some(t) = &overlay.trigger_override {
            out.trigger = t.resolve()?;
        }
        if let Some(a) = overlay.attitude {
            out.attitude = a;
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// One-based, as rendered.
    Index(usize),
    Contains(String),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMultiplier {
    Abundant,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Multiplier {
    Named(NamedMultiplier),
    Value(f64),
}

impl Multiplier {
    pub fn value(self) -> f64 {
        match self {
            Multiplier::Named(NamedMultiplier::Abundant) => 3.0,
            Multiplier::Named(NamedMultiplier::Sparse) => 1.0 / 3.0,
            Multiplier::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePatch {
    pub country: String,
    pub dimension: Dimension,
    pub selector: Selector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replace: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<Multiplier>,
}

/// Either a built-in trigger name or a full event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TriggerSpec {
    Builtin(String),
    Event(TriggerEvent),
}

impl TriggerSpec {
    pub fn resolve(&self) -> Result<TriggerEvent> {
        match self {
            TriggerSpec::Builtin(name) => builtin_trigger(name).ok_or_else(|| {
                ScenarioError::Overlay(format!("unknown built-in trigger {name:?}"))
            }),
            TriggerSpec::Event(e) if e.text.trim().is_empty() => {
                Err(ScenarioError::Overlay("trigger text is empty".into()))
            }
            TriggerSpec::Event(e) => Ok(e.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profile_patches: Vec<ProfilePatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_override: Option<TriggerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attitude: Option<Attitude>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_custom_multipliers: bool,
}

impl Overlay {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read(path)?)
    }

    pub fn is_empty(&self) -> bool {
        *self == Overlay::default()
    }

    /// Sequential composition: later patches apply after earlier ones.
    pub fn merge(mut self, other: Overlay) -> Overlay {
        self.profile_patches.extend(other.profile_patches);
        self.trigger_override = other.trigger_override.or(self.trigger_override);
        self.attitude = other.attitude.or(self.attitude);
        self.allow_custom_multipliers |= other.allow_custom_multipliers;
        self
    }

    /// Hex sha256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("overlay serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_json(&read(path)?)
}

pub const BUILTIN_NAMES: [&str; 3] = ["wwi", "wwii", "wsp"];

pub fn builtin_scenario(name: &str) -> Option<Result<Scenario>> {
    let text = match name {
        "wwi" => BUILTIN_WWI,
        "wwii" => BUILTIN_WWII,
        "wsp" => BUILTIN_WSP,
        _ => return None,
    };
    Some(Scenario::from_json(text))
}

pub const BUILTIN_TRIGGERS: [&str; 3] = ["null", "naval_incident", "dardanelles"];

const TRIGGER_NAVAL: &str = include_str!("../../../triggers/naval_incident.json");
const TRIGGER_DARDANELLES: &str = include_str!("../../../triggers/dardanelles.json");

pub fn builtin_trigger(name: &str) -> Option<TriggerEvent> {
    let text = match name {
        "null" => return Some(TriggerEvent::null()),
        "naval_incident" => TRIGGER_NAVAL,
        "dardanelles" => TRIGGER_DARDANELLES,
        _ => return None,
    };
    Some(serde_json::from_str(text).expect("built-in trigger parses"))
}

/// A trigger file path, or a built-in trigger name.
pub fn resolve_trigger(name_or_path: &str) -> Result<TriggerEvent> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        let event: TriggerEvent = serde_json::from_str(&read(path)?)?;
        return TriggerSpec::Event(event).resolve();
    }
    builtin_trigger(name_or_path).ok_or_else(|| {
        ScenarioError::Overlay(format!("unknown trigger {name_or_path:?}"))
    })
}

/// Paths that exist win; otherwise bare names resolve to built-ins.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        return load_scenario(path);
    }
    let stem = name_or_path.strip_suffix(".json").unwrap_or(name_or_path);
    builtin_scenario(stem)
        .unwrap_or_else(|| Err(ScenarioError::UnknownScenario(name_or_path.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wwi() -> Scenario {
        builtin_scenario("wwi").unwrap().unwrap()
    }

    fn entry_text(s: &Scenario, country: &str, d: Dimension, i: usize) -> String {
        let id = s.roster().resolve(country).unwrap();
        s.profile(id).dimension(d)[i].render()
    }

    #[test]
    fn builtin_rosters() {
        let s = wwi();
        assert_eq!(
            s.roster().names(),
            vec![
                "Britain",
                "France",
                "German Empire",
                "Austria-Hungary",
                "Russia",
                "Serbia",
                "United States",
                "Ottoman Empire"
            ]
        );
        let wsp = builtin_scenario("wsp").unwrap().unwrap();
        assert_eq!(
            wsp.roster().names(),
            vec!["Qi", "Chu", "Yan", "Han", "Zhao", "Wei", "Qin"]
        );
        assert_eq!(builtin_scenario("wwii").unwrap().unwrap().roster.len(), 9);
        assert!(wsp.ground_truth.war_declarations.is_none());
    }

    #[test]
    fn rejects_duplicates_and_unknown_ground_truth() {
        let mut v: serde_json::Value = serde_json::from_str(BUILTIN_WWI).unwrap();
        v["roster"][1]["name"] = "X".into();
        v["roster"][2]["name"] = "X".into();
        v["roster"][2]["aliases"] = serde_json::json!([]);
        assert!(matches!(
            Scenario::from_json(&v.to_string()),
            Err(ScenarioError::DuplicateCountry(n)) if n == "X"
        ));

        let mut v: serde_json::Value = serde_json::from_str(BUILTIN_WWI).unwrap();
        v["ground_truth"]["mobilized"][0] = "Atlantis".into();
        assert!(matches!(
            Scenario::from_json(&v.to_string()),
            Err(ScenarioError::UnknownGroundTruthCountry(_))
        ));

        let mut v: serde_json::Value = serde_json::from_str(BUILTIN_WWI).unwrap();
        v["roster"][0]["military_capability"][0]["facts"][0]["value"] = (-1.0).into();
        assert!(matches!(
            Scenario::from_json(&v.to_string()),
            Err(ScenarioError::Invalid(_))
        ));

        let mut v: serde_json::Value = serde_json::from_str(BUILTIN_WWI).unwrap();
        v["roster"][0]["public_morale"] = serde_json::json!([]);
        assert!(Scenario::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn renders_listing_layout() {
        let s = wwi();
        let text = render_profile(&s.roster[0]);
        assert!(text.starts_with("## Britain profile\n\n# Leadership for Britain\n(1) "));
        assert!(text.contains(
            "# Military Capability for Britain\n(1) Standing army population: 0.53 million soldiers\n(2) Naval tonnage: 2.7 million"
        ));
        assert!(text.contains("(2) Population: 46 million\n(3) GDP: 11 billion, consisting 13.6% of the world GDP\n"));
        assert_eq!(text, render_profile(&s.roster[0]));
    }

    #[test]
    fn minimal_profile_has_single_entries() {
        let p = CountryProfile {
            name: "X".into(),
            label: "X".into(),
            article: None,
            aliases: vec![],
            leadership: vec![Entry::Text("a".into())],
            military_capability: vec![Entry::Text("b".into())],
            resources: vec![Entry::Text("c".into())],
            historical_background: vec![Entry::Text("d".into())],
            key_policy: vec![Entry::Text("e".into())],
            public_morale: vec![Entry::Text("f".into())],
        };
        let text = render_profile(&p);
        assert_eq!(text.matches("(1) ").count(), 6);
        assert!(!text.contains("(2)"));
    }

    #[test]
    fn anonymizes_trigger_locations_and_ground_truth() {
        let s = wwi();
        let a = s.anonymize().unwrap();
        assert!(!a.deanonymized);
        assert_eq!(
            a.trigger.text,
            "Assassination of King of Country A by assassins sent from Country S."
        );
        let france = a.roster().resolve("Country F").unwrap();
        let history: String = a
            .profile(france)
            .historical_background
            .iter()
            .map(Entry::render)
            .collect();
        assert!(history.contains("two iron mines"), "{history}");
        assert!(!history.contains("Alsace-Lorraine"));
        assert!(a.ground_truth.alliances.contains(&("Country B".into(), "Country F".into())));
        assert!(a.ground_truth.mobilized.contains(&"Country O".to_string()));
        assert_eq!(a.roster().name(CountryId(6)), "United States");
        assert!(matches!(a.anonymize(), Err(ScenarioError::AlreadyAnonymized)));
    }

    #[test]
    fn anonymized_text_has_no_real_names() {
        for name in BUILTIN_NAMES {
            let s = builtin_scenario(name).unwrap().unwrap();
            let a = s.anonymize().unwrap();
            let real: Vec<String> = s
                .anonymization
                .countries
                .iter()
                .filter(|(r, al)| r != al)
                .map(|(r, _)| r.clone())
                .chain(s.roster.iter().flat_map(|p| p.aliases.clone()))
                .collect();
            let mut texts: Vec<String> = vec![a.trigger.text.clone()];
            for p in &a.roster {
                for d in Dimension::ALL {
                    texts.extend(p.dimension(d).iter().map(Entry::render));
                }
                texts.push(p.name.clone());
            }
            let gt = serde_json::to_string(&a.ground_truth).unwrap();
            texts.push(gt);
            for t in &texts {
                for r in &real {
                    assert!(!contains_word(t, r), "{name}: {r:?} survives in {t:?}");
                }
            }
        }
    }

    #[test]
    fn empty_map_flips_flag_only() {
        let mut s = wwi();
        s.anonymization = AnonymizationMap::default();
        let a = s.anonymize().unwrap();
        assert!(!a.deanonymized);
        assert_eq!(a.trigger, s.trigger);
        let names: Vec<_> = a.roster.iter().map(|p| p.name.clone()).collect();
        assert_eq!(names, s.roster.iter().map(|p| p.name.clone()).collect::<Vec<_>>());
        assert_eq!(render_profile(&a.roster[2]), render_profile(&s.roster[2]));
    }

    #[test]
    fn rejects_alias_collisions() {
        let mut s = wwi();
        s.anonymization.countries[1].1 = "Country B".into();
        assert!(matches!(s.anonymize(), Err(ScenarioError::AliasCollision(_))));
        let mut s = wwi();
        s.anonymization.countries[0].1 = "Old Russia".into();
        assert!(matches!(s.anonymize(), Err(ScenarioError::AliasCollision(_))));
    }

    fn multiply(country: &str, d: Dimension, m: Multiplier) -> ProfilePatch {
        ProfilePatch {
            country: country.into(),
            dimension: d,
            selector: Selector::All,
            replace: None,
            multiplier: Some(m),
        }
    }

    #[test]
    fn sparse_and_abundant_multipliers() {
        let s = wwi();
        let sparse = Overlay {
            profile_patches: vec![
                multiply(
                    "German Empire",
                    Dimension::MilitaryCapability,
                    Multiplier::Named(NamedMultiplier::Sparse),
                ),
                multiply(
                    "German Empire",
                    Dimension::Resources,
                    Multiplier::Named(NamedMultiplier::Sparse),
                ),
            ],
            ..Overlay::default()
        };
        let g = s.apply_overlay(&sparse).unwrap();
        let mil = Dimension::MilitaryCapability;
        assert!(entry_text(&g, "German Empire", mil, 0).starts_with("Standing army: 0.3 million soldiers"));
        assert_eq!(entry_text(&g, "German Empire", mil, 1), "Naval tonnage: 0.4 million");
        assert_eq!(
            entry_text(&g, "German Empire", Dimension::Resources, 2),
            "GDP: 4 billion, consisting 4.9% of the world GDP"
        );
        assert_eq!(
            entry_text(&g, "German Empire", Dimension::Resources, 1),
            "Population: 22.3 million"
        );

        let abundant = Overlay {
            profile_patches: vec![multiply("France", Dimension::Resources, Multiplier::Value(3.0))],
            ..Overlay::default()
        };
        let f = s.apply_overlay(&abundant).unwrap();
        assert_eq!(entry_text(&f, "France", Dimension::Resources, 1), "Population: 120 million");
        assert_eq!(
            entry_text(&f, "France", Dimension::Resources, 2),
            "GDP: 18 billion, consisting 18.3% of the world GDP"
        );
        // Input untouched.
        assert_eq!(entry_text(&s, "France", Dimension::Resources, 1), "Population: 40 million");
    }

    #[test]
    fn multiplier_round_trip_restores_facts() {
        let s = wwi();
        let there = Overlay {
            profile_patches: vec![multiply("France", Dimension::Resources, Multiplier::Value(3.0))],
            ..Overlay::default()
        };
        let back = Overlay {
            profile_patches: vec![multiply(
                "France",
                Dimension::Resources,
                Multiplier::Value(1.0 / 3.0),
            )],
            ..Overlay::default()
        };
        let r = s.apply_overlay(&there).unwrap().apply_overlay(&back).unwrap();
        for (a, b) in s.roster[1].resources.iter().zip(&r.roster[1].resources) {
            if let (Entry::Facts { facts: fa, .. }, Entry::Facts { facts: fb, .. }) = (a, b) {
                for (x, y) in fa.iter().zip(fb) {
                    assert!((x.effective() - y.effective()).abs() < 0.05);
                }
            }
        }
    }

    #[test]
    fn overlay_errors_and_purity() {
        let s = wwi();
        assert_eq!(s.apply_overlay(&Overlay::default()).unwrap(), s);
        let bad_selector = Overlay {
            profile_patches: vec![ProfilePatch {
                country: "France".into(),
                dimension: Dimension::Resources,
                selector: Selector::Contains("Unicorns".into()),
                replace: Some("x".into()),
                multiplier: None,
            }],
            ..Overlay::default()
        };
        assert!(matches!(s.apply_overlay(&bad_selector), Err(ScenarioError::Overlay(_))));
        let odd = Overlay {
            profile_patches: vec![multiply("France", Dimension::Resources, Multiplier::Value(2.0))],
            ..Overlay::default()
        };
        assert!(s.apply_overlay(&odd).is_err());
        let allowed = Overlay {
            allow_custom_multipliers: true,
            ..odd
        };
        assert!(s.apply_overlay(&allowed).is_ok());
    }

    #[test]
    fn builtin_triggers_and_overlay_files() {
        for name in BUILTIN_TRIGGERS {
            assert!(!resolve_trigger(name).unwrap().text.is_empty());
        }
        assert!(resolve_trigger("meteor").is_err());
        let s = wwi();
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../overlays");
        for f in ["germany_sparse", "france_abundant", "us_morale", "us_policy"] {
            let o = Overlay::load(Path::new(&format!("{dir}/{f}.json"))).unwrap();
            let patched = s.apply_overlay(&o).unwrap();
            assert_ne!(patched, s, "{f} changes nothing");
        }
        let o = Overlay::load(Path::new(&format!("{dir}/germany_sparse.json"))).unwrap();
        let g = s.apply_overlay(&o).unwrap();
        assert_eq!(
            entry_text(&g, "German Empire", Dimension::MilitaryCapability, 1),
            "Naval tonnage: 0.4 million"
        );
        assert!(entry_text(&g, "German Empire", Dimension::MilitaryCapability, 0)
            .contains("outside the leading armies"));
    }

    #[test]
    fn trigger_override_and_text_patch() {
        let s = wwi();
        let o = Overlay::from_json(
            r#"{"trigger_override": "null", "attitude": "aggressive",
                "profile_patches": [{"country": "France", "dimension": "historical_background",
                                     "selector": {"index": 1}, "replace": "France has no recent quarrels."}]}"#,
        )
        .unwrap();
        let p = s.apply_overlay(&o).unwrap();
        assert_eq!(p.trigger.text, "Today is sunny, and nothing special happened.");
        assert_eq!(p.attitude, Attitude::Aggressive);
        assert_eq!(
            entry_text(&p, "France", Dimension::HistoricalBackground, 0),
            "France has no recent quarrels."
        );
        assert_ne!(o.digest(), Overlay::default().digest());
    }
}
