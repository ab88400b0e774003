use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field label is empty")]
pub struct EmptyLabel;

/// The class of a form field.
///
/// The four built-in kinds are the target fields of the FIR form; any other
/// label is carried as [`FieldKind::Other`] so the toolkit works on new form
/// types without code changes. Variant order is the canonical report order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldKind {
    Year,
    Statute,
    PoliceStation,
    ComplainantName,
    /// Lower-cased, trimmed, non-empty label.
    Other(String),
}

impl FieldKind {
    pub const BUILTIN: [FieldKind; 4] = [
        FieldKind::Year,
        FieldKind::Statute,
        FieldKind::PoliceStation,
        FieldKind::ComplainantName,
    ];

    /// Parses a label case-insensitively. Spaces, hyphens and underscores are
    /// interchangeable when recognizing the built-in kinds; `name` is accepted
    /// as shorthand for the complainant name.
    pub fn parse(label: &str) -> Result<Self, EmptyLabel> {
        let norm = label.trim().to_lowercase();
        if norm.is_empty() {
            return Err(EmptyLabel);
        }
        let key: String = norm
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .collect();
        Ok(match key.as_str() {
            "year" => FieldKind::Year,
            "statute" | "statutes" | "act" | "acts" => FieldKind::Statute,
            "policestation" | "station" => FieldKind::PoliceStation,
            "complainantname" | "name" => FieldKind::ComplainantName,
            _ => FieldKind::Other(norm),
        })
    }

    /// Machine label used in files and JSON.
    pub fn label(&self) -> &str {
        match self {
            FieldKind::Year => "year",
            FieldKind::Statute => "statute",
            FieldKind::PoliceStation => "police_station",
            FieldKind::ComplainantName => "complainant_name",
            FieldKind::Other(s) => s,
        }
    }

    /// Human label used in markdown tables.
    pub fn display_name(&self) -> &str {
        match self {
            FieldKind::Year => "Year",
            FieldKind::Statute => "Statute",
            FieldKind::PoliceStation => "Police Station",
            FieldKind::ComplainantName => "Complainant Name",
            FieldKind::Other(s) => s,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self, FieldKind::Other(_))
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FieldKind {
    type Err = EmptyLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldKind::parse(s)
    }
}

impl Serialize for FieldKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for FieldKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FieldKind::parse(&s).map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}
