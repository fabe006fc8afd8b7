use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub display_min: f64,
    pub display_max: f64,
}

impl Attribute {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, display_min: f64, display_max: f64) -> Self {
        Attribute {
            name: name.into(),
            unit: unit.into(),
            display_min,
            display_max,
        }
    }

    /// "Weight (kg)", or the bare name when there is no unit.
    pub fn label(&self) -> String {
        if self.unit.is_empty() {
            self.name.clone()
        } else {
            format!("{} ({})", self.name, self.unit)
        }
    }
}

/// Ordered attribute list shared by an explainer and the data it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    attributes: Vec<Attribute>,
}

impl TryFrom<SchemaDoc> for AttributeSchema {
    type Error = Error;
    fn try_from(doc: SchemaDoc) -> Result<Self> {
        AttributeSchema::new(doc.attributes)
    }
}

impl From<AttributeSchema> for SchemaDoc {
    fn from(s: AttributeSchema) -> Self {
        SchemaDoc {
            attributes: s.attributes,
        }
    }
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate attribute name {:?}", a.name)));
            }
            if !(a.display_min < a.display_max) {
                return Err(Error::InvalidSchema(format!(
                    "attribute {:?}: display_min {} must be below display_max {}",
                    a.name, a.display_min, a.display_max
                )));
            }
        }
        Ok(AttributeSchema { attributes })
    }

    /// Schema with unit-less attributes and a placeholder display range.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|n| Attribute::new(n.as_ref(), "", 0.0, 1.0))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, index: usize) -> &Attribute {
        &self.attributes[index]
    }

    pub fn names(&self) -> Vec<&str> {
        self.attributes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Membership of each of this schema's attributes in the set shared with `other`.
    pub fn shared_mask(&self, other: &AttributeSchema) -> Vec<bool> {
        self.attributes
            .iter()
            .map(|a| other.index_of(&a.name).is_some())
            .collect()
    }

    /// Index pairs `(self, other)` of attributes present in both schemas, in `self` order.
    pub fn shared_pairs(&self, other: &AttributeSchema) -> Vec<(usize, usize)> {
        self.attributes
            .iter()
            .enumerate()
            .filter_map(|(i, a)| other.index_of(&a.name).map(|j| (i, j)))
            .collect()
    }
}
