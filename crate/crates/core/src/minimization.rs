//! Data-collection minimization: category classification and plan linting.
//!
//! Every collectable category is classified into one of four classes,
//! ordered from "collect nothing" to "sensitive":
//!
//! ```text
//! ZERO < PA_PD < PI_PD < SPI_PD
//! ```
//!
//! `ZERO` marks data that carries no personal information, `PA_PD` is
//! pseudonym-associated data (cookies, session ids, IPs), `PI_PD` is
//! directly identifying data (name, date of birth, mobile number) and
//! `SPI_PD` is sensitive data (health, financial, biometric, and similar).
//! A collection plan declares what a purpose wants to collect and the
//! maximum class its policy allows; the linter flags every requested
//! category whose class exceeds that bound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MinimizationError {
    #[error("unknown category \"{0}\"")]
    UnknownCategory(String),
    #[error("invalid taxonomy config line {line}: {reason}")]
    InvalidConfig { line: usize, reason: String },
}

/// Collection class, totally ordered by sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DataClass {
    Zero,
    PaPd,
    PiPd,
    SpiPd,
}

impl DataClass {
    pub const ALL: [DataClass; 4] = [
        DataClass::Zero,
        DataClass::PaPd,
        DataClass::PiPd,
        DataClass::SpiPd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DataClass::Zero => "ZERO",
            DataClass::PaPd => "PA_PD",
            DataClass::PiPd => "PI_PD",
            DataClass::SpiPd => "SPI_PD",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        DataClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown data class \"{s}\"")))
    }
}

impl fmt::Display for DataClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryInfo {
    pub label: String,
    pub class: DataClass,
    pub notes: String,
}

/// Category id → classification table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Taxonomy {
    entries: BTreeMap<String, CategoryInfo>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        category_id: impl Into<String>,
        class: DataClass,
        label: impl Into<String>,
    ) {
        self.entries.insert(
            category_id.into(),
            CategoryInfo {
                label: label.into(),
                class,
                notes: String::new(),
            },
        );
    }

    pub fn contains(&self, category_id: &str) -> bool {
        self.entries.contains_key(category_id)
    }

    pub fn get(&self, category_id: &str) -> Option<&CategoryInfo> {
        self.entries.get(category_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &CategoryInfo)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Built-in table covering the common category names. Ambiguous fields
    /// (device identifiers, location traces) sit in the higher class.
    pub fn default_table() -> Self {
        let mut t = Taxonomy::new();
        // Nothing personal.
        t.insert(
            "anonymous_usage_stats",
            DataClass::Zero,
            "Aggregated anonymous usage counters",
        );
        t.insert("public_content", DataClass::Zero, "Already-public content");
        // Pseudonym-associated.
        t.insert("ip_address", DataClass::PaPd, "Client IP address");
        t.insert(
            "cookie_session_id",
            DataClass::PaPd,
            "Session cookie identifier",
        );
        t.insert("session_id", DataClass::PaPd, "Server session identifier");
        t.insert(
            "browser_info",
            DataClass::PaPd,
            "Browser and user-agent details",
        );
        t.insert("nickname", DataClass::PaPd, "Self-chosen pseudonym");
        // Personally identifiable.
        t.insert("name", DataClass::PiPd, "Full name");
        t.insert("date_of_birth", DataClass::PiPd, "Date of birth");
        t.insert("mobile_number", DataClass::PiPd, "Mobile phone number");
        t.insert("email_address", DataClass::PiPd, "Email address");
        t.insert("postal_address", DataClass::PiPd, "Postal address");
        t.insert("device_id", DataClass::PiPd, "Hardware device identifier");
        // Sensitive.
        t.insert("health_record", DataClass::SpiPd, "Health data");
        t.insert("biometric_template", DataClass::SpiPd, "Biometric data");
        t.insert("genetic_data", DataClass::SpiPd, "Genetic status");
        t.insert(
            "financial_account",
            DataClass::SpiPd,
            "Financial account data",
        );
        t.insert("card_number", DataClass::SpiPd, "Payment card number");
        t.insert("pan_number", DataClass::SpiPd, "Tax identification number");
        t.insert("caste_or_tribe", DataClass::SpiPd, "Caste or tribe");
        t.insert(
            "religious_belief",
            DataClass::SpiPd,
            "Religious belief or affiliation",
        );
        t.insert(
            "political_affiliation",
            DataClass::SpiPd,
            "Political belief or affiliation",
        );
        t.insert("sexual_orientation", DataClass::SpiPd, "Sexual orientation");
        t.insert("sex_life", DataClass::SpiPd, "Sex life");
        t
    }

    /// Parse the line-oriented taxonomy config:
    ///
    /// ```text
    /// # comment
    /// category <id> <CLASS> [label words...]
    /// ```
    pub fn parse_config(text: &str) -> Result<Self, MinimizationError> {
        let mut taxonomy = Taxonomy::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("category") => {
                    let id = parts.next().ok_or(MinimizationError::InvalidConfig {
                        line: idx + 1,
                        reason: "missing category id".to_string(),
                    })?;
                    let class_text = parts.next().ok_or(MinimizationError::InvalidConfig {
                        line: idx + 1,
                        reason: "missing data class".to_string(),
                    })?;
                    let class = DataClass::parse(class_text).map_err(|e| {
                        MinimizationError::InvalidConfig {
                            line: idx + 1,
                            reason: e.to_string(),
                        }
                    })?;
                    let label = parts.collect::<Vec<_>>().join(" ");
                    taxonomy.insert(id, class, label);
                }
                Some(other) => {
                    return Err(MinimizationError::InvalidConfig {
                        line: idx + 1,
                        reason: format!("unknown directive \"{other}\""),
                    })
                }
                None => unreachable!("blank lines are skipped"),
            }
        }
        Ok(taxonomy)
    }

    pub fn to_config(&self) -> String {
        let mut out = String::new();
        for (id, info) in &self.entries {
            out.push_str(&format!("category {} {} {}\n", id, info.class, info.label));
        }
        out
    }
}

impl Canonical for Taxonomy {
    fn to_value(&self) -> Value {
        let mut entries = MapBuilder::new();
        for (id, info) in &self.entries {
            entries = entries.field(
                id,
                MapBuilder::new()
                    .field("class", Value::str(info.class.as_str()))
                    .field("label", Value::str(&info.label))
                    .field("notes", Value::str(&info.notes))
                    .build(),
            );
        }
        MapBuilder::new()
            .field("categories", entries.build())
            .build()
    }
}

/// Classify one category.
pub fn classify(category_id: &str, taxonomy: &Taxonomy) -> Result<DataClass, MinimizationError> {
    taxonomy
        .get(category_id)
        .map(|info| info.class)
        .ok_or_else(|| MinimizationError::UnknownCategory(category_id.to_string()))
}

/// A declared intent to collect `requested_categories` for one purpose,
/// bounded by the purpose policy's maximum class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionPlan {
    pub purpose_id: String,
    pub requested_categories: BTreeSet<String>,
    pub max_class_allowed: DataClass,
}

impl Canonical for CollectionPlan {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("max_class", Value::str(self.max_class_allowed.as_str()))
            .field("purpose_id", Value::str(&self.purpose_id))
            .field(
                "requested_categories",
                Value::list(self.requested_categories.iter().map(Value::str)),
            )
            .build()
    }
}

impl FromValue for CollectionPlan {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let max_class_allowed = DataClass::parse(r.str("max_class")?)?;
        let purpose_id = r.string("purpose_id")?;
        let requested_categories = r
            .list("requested_categories")?
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Result<BTreeSet<_>, _>>()?;
        r.finish()?;
        Ok(CollectionPlan {
            purpose_id,
            requested_categories,
            max_class_allowed,
        })
    }
}

/// One over-collection hit: a requested category above the allowed class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlanViolation {
    pub purpose_id: String,
    pub category_id: String,
    pub class: DataClass,
    pub max_class_allowed: DataClass,
}

impl PlanViolation {
    pub const CODE: &'static str = "OVER_COLLECTION";
}

/// Lint a plan: one violation per requested category whose class strictly
/// exceeds the allowed maximum. An empty result means the plan is minimal
/// under the declared policy.
pub fn lint_plan(
    plan: &CollectionPlan,
    taxonomy: &Taxonomy,
) -> Result<Vec<PlanViolation>, MinimizationError> {
    let mut violations = Vec::new();
    for category_id in &plan.requested_categories {
        let class = classify(category_id, taxonomy)?;
        if class > plan.max_class_allowed {
            violations.push(PlanViolation {
                purpose_id: plan.purpose_id.clone(),
                category_id: category_id.clone(),
                class,
                max_class_allowed: plan.max_class_allowed,
            });
        }
    }
    Ok(violations)
}

/// Per-purpose class histogram plus the overall over-collection verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimizationReport {
    pub per_purpose: BTreeMap<String, BTreeMap<DataClass, u64>>,
    pub violations: Vec<PlanViolation>,
    pub over_collection_count: u64,
    pub pass: bool,
}

pub fn minimization_report(
    plans: &[CollectionPlan],
    taxonomy: &Taxonomy,
) -> Result<MinimizationReport, MinimizationError> {
    let mut per_purpose: BTreeMap<String, BTreeMap<DataClass, u64>> = BTreeMap::new();
    let mut violations = Vec::new();
    for plan in plans {
        let histogram = per_purpose.entry(plan.purpose_id.clone()).or_default();
        for category_id in &plan.requested_categories {
            let class = classify(category_id, taxonomy)?;
            *histogram.entry(class).or_insert(0) += 1;
        }
        violations.extend(lint_plan(plan, taxonomy)?);
    }
    let over_collection_count = violations.len() as u64;
    Ok(MinimizationReport {
        per_purpose,
        violations,
        over_collection_count,
        pass: over_collection_count == 0,
    })
}

/// Purpose id → maximum collection class, with a default for purposes the
/// policy does not name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionPolicy {
    pub max_by_purpose: BTreeMap<String, DataClass>,
    pub default_max: DataClass,
}

impl CollectionPolicy {
    pub fn max_for(&self, purpose_id: &str) -> DataClass {
        self.max_by_purpose
            .get(purpose_id)
            .copied()
            .unwrap_or(self.default_max)
    }

    /// Shipped defaults: informational services collect nothing, session
    /// personalization stops at pseudonymous data, account service at
    /// identifying data, payment and health purposes may reach sensitive
    /// data. Unlisted purposes are unconstrained by default.
    pub fn default_table() -> Self {
        let mut max_by_purpose = BTreeMap::new();
        max_by_purpose.insert("informational".to_string(), DataClass::Zero);
        max_by_purpose.insert("session_personalization".to_string(), DataClass::PaPd);
        max_by_purpose.insert("account_service".to_string(), DataClass::PiPd);
        max_by_purpose.insert("payment".to_string(), DataClass::SpiPd);
        max_by_purpose.insert("health_service".to_string(), DataClass::SpiPd);
        CollectionPolicy {
            max_by_purpose,
            default_max: DataClass::SpiPd,
        }
    }
}

impl Canonical for CollectionPolicy {
    fn to_value(&self) -> Value {
        let mut purposes = MapBuilder::new();
        for (purpose, class) in &self.max_by_purpose {
            purposes = purposes.field(purpose, Value::str(class.as_str()));
        }
        MapBuilder::new()
            .field("default_max", Value::str(self.default_max.as_str()))
            .field("max_by_purpose", purposes.build())
            .build()
    }
}
