//! Domain banks and their expansion into prompt text.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const DEFAULT_TEMPLATE_DOMAIN: &str = "a {domain} photo of a {class}";
pub const DEFAULT_TEMPLATE_STANDARD: &str = "a photo of a {class}";

const PACS: &[&str] = &["photo", "art painting", "cartoon", "sketch"];
const VLCS: &[&str] = &["caltech", "labelme", "sun", "voc"];
const OFFICE_HOME: &[&str] = &["art", "clipart", "product", "real world"];
const TERRA_INCOGNITA: &[&str] = &["location 38", "location 43", "location 46", "location 100"];
const DOMAIN_NET: &[&str] = &[
    "clipart",
    "infograph",
    "painting",
    "quickdraw",
    "real",
    "sketch",
];

/// Style-bearing domain names of the five benchmark datasets. VLCS and
/// TerraIncognita domains are collection sources, not styles, and are left out.
pub const COMBINED: &[&str] = &[
    "photo",
    "art painting",
    "cartoon",
    "sketch",
    "clipart",
    "infograph",
    "painting",
    "quickdraw",
    "real",
    "product",
];

/// Extra open-world styles appended to [`COMBINED`] for the expanded bank.
pub const EXPANSION: &[&str] = &[
    "watercolor",
    "pixelate",
    "geometric",
    "mosaic",
    "abstract",
    "science fiction",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBank {
    pub name: String,
    pub domains: Vec<String>,
    pub template_domain: String,
    pub template_standard: String,
}

/// One expanded prompt and its position in the M x C grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub domain_index: usize,
    pub class_index: usize,
    pub text: String,
}

impl DomainBank {
    /// Builds a bank with the default templates. Descriptors are trimmed and
    /// lowercased before validation.
    pub fn new<S: AsRef<str>>(name: impl Into<String>, domains: &[S]) -> Result<Self> {
        Self::with_templates(
            name,
            domains,
            DEFAULT_TEMPLATE_DOMAIN,
            DEFAULT_TEMPLATE_STANDARD,
        )
    }

    pub fn with_templates<S: AsRef<str>>(
        name: impl Into<String>,
        domains: &[S],
        template_domain: impl Into<String>,
        template_standard: impl Into<String>,
    ) -> Result<Self> {
        let bank = Self {
            name: name.into(),
            domains: domains.iter().map(|d| canonical(d.as_ref())).collect(),
            template_domain: template_domain.into(),
            template_standard: template_standard.into(),
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut dups = Vec::new();
        for d in &self.domains {
            if d.is_empty() {
                return Err(Error::Bank("empty domain descriptor".into()));
            }
            if *d != canonical(d) {
                return Err(Error::Bank(format!(
                    "descriptor {d:?} must be trimmed and lowercase"
                )));
            }
            if !seen.insert(d.as_str()) && !dups.contains(d) {
                dups.push(d.clone());
            }
        }
        if !dups.is_empty() {
            return Err(Error::Bank(format!(
                "duplicate descriptors: {}",
                dups.join(", ")
            )));
        }
        check_placeholders(&self.template_domain, &["class", "domain"])?;
        check_placeholders(&self.template_standard, &["class"])?;
        Ok(())
    }

    /// Number of domain descriptors (M). Zero for the empty bank.
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    /// Domain axis of the prompt grid this bank produces: the descriptors, or
    /// a single "standard" entry for the empty bank.
    pub fn grid_domains(&self) -> Vec<String> {
        if self.domains.is_empty() {
            vec!["standard".to_string()]
        } else {
            self.domains.clone()
        }
    }

    /// Expands the bank into `max(M, 1) * C` prompts, domain-major.
    pub fn expand<S: AsRef<str>>(&self, classes: &[S]) -> Result<Vec<Prompt>> {
        self.validate()?;
        if classes.is_empty() {
            return Err(Error::Bank("class list is empty".into()));
        }
        let mut seen = HashSet::new();
        for c in classes {
            if !seen.insert(c.as_ref()) {
                return Err(Error::Bank(format!("duplicate class {:?}", c.as_ref())));
            }
        }
        let class_text: Vec<String> = classes
            .iter()
            .map(|c| c.as_ref().replace('_', " "))
            .collect();

        if self.domains.is_empty() {
            return Ok(class_text
                .iter()
                .enumerate()
                .map(|(ci, c)| Prompt {
                    domain_index: 0,
                    class_index: ci,
                    text: self.template_standard.replace("{class}", c),
                })
                .collect());
        }
        let mut out = Vec::with_capacity(self.domains.len() * classes.len());
        for (di, d) in self.domains.iter().enumerate() {
            for (ci, c) in class_text.iter().enumerate() {
                // Substitute the class last so a class name containing
                // "{domain}" is not rewritten.
                let text = self
                    .template_domain
                    .replace("{domain}", d)
                    .replace("{class}", c);
                out.push(Prompt {
                    domain_index: di,
                    class_index: ci,
                    text,
                });
            }
        }
        Ok(out)
    }

    /// Looks up a built-in bank: `empty`, `task:<dataset>`, `combined`, `expanded`.
    pub fn preset(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase();
        let domains: Vec<&str> = match key.as_str() {
            "empty" => Vec::new(),
            "combined" => COMBINED.to_vec(),
            "expanded" => COMBINED.iter().chain(EXPANSION).copied().collect(),
            _ => match key.strip_prefix("task:") {
                Some(dataset) => dataset_domains(dataset)
                    .ok_or_else(|| Error::UnknownPreset(name.to_string()))?
                    .to_vec(),
                None => return Err(Error::UnknownPreset(name.to_string())),
            },
        };
        Self::new(key, &domains)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bank: Self = serde_json::from_str(&text)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

fn dataset_domains(dataset: &str) -> Option<&'static [&'static str]> {
    let key: String = dataset
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    Some(match key.as_str() {
        "pacs" => PACS,
        "vlcs" => VLCS,
        "officehome" => OFFICE_HOME,
        "terraincognita" | "terrainc" => TERRA_INCOGNITA,
        "domainnet" => DOMAIN_NET,
        _ => return None,
    })
}

fn canonical(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Every `{name}` in `template` must be in `required`, and each required
/// name must appear exactly once.
fn check_placeholders(template: &str, required: &[&str]) -> Result<()> {
    let mut found = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Bank(format!("unclosed placeholder in {template:?}")))?;
        found.push(&after[..close]);
        rest = &after[close + 1..];
    }
    for f in &found {
        if !required.contains(f) {
            return Err(Error::Bank(format!(
                "template {template:?} has unknown placeholder {{{f}}}"
            )));
        }
    }
    for r in required {
        let n = found.iter().filter(|f| *f == r).count();
        if n != 1 {
            return Err(Error::Bank(format!(
                "template {template:?} must contain {{{r}}} exactly once (found {n})"
            )));
        }
    }
    Ok(())
}
