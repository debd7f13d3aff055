//! vCluster manifests: parsing, validation, canonicalization, content
//! hashing.
//!
//! A manifest is a TOML document with a top-level `name` and repeated
//! `[[vservice]]` tables, each carrying `name`, a `source` attribute with
//! the repository reference and version, and an optional `[vservice.config]`
//! table of scalars or lists. Exactly one vservice carries the `hsm_groups`
//! config key binding the vcluster to infrastructure labels.
//!
//! Validation is total: `parse_manifest` reports every violation in the
//! document, not just the first. Parsed manifests are canonical (refs sorted
//! by name), so equality, round-tripping and the content digest are all
//! stable against reordering in the source text.

pub mod catalog;
pub mod recipe;
pub mod registry;
pub mod resolve;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::{Error, Result};
use crate::inventory::VC_PREFIX;
use recipe::parse_semver;

/// A config scalar: bool, integer, or string. Floats are rejected to keep
/// canonical hashing trivial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigScalar {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl fmt::Display for ConfigScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigScalar::Bool(b) => write!(f, "{b}"),
            ConfigScalar::Int(i) => write!(f, "{i}"),
            ConfigScalar::Str(s) => write!(f, "{s:?}"),
        }
    }
}

/// A config value: scalar or list of scalars.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Scalar(ConfigScalar),
    List(Vec<ConfigScalar>),
}

pub type ConfigMap = BTreeMap<String, ConfigValue>;

/// A reference to a versioned vService inside a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VServiceRef {
    pub name: String,
    pub source_repo: String,
    pub source_version: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: ConfigMap,
}

impl VServiceRef {
    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.source_version)
    }

    /// Digest of this ref's config map; drives restart-on-config-change.
    pub fn config_digest(&self) -> String {
        canon::content_digest(&self.config)
    }
}

/// A named, content-hashed list of vService references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VClusterManifest {
    pub vcluster_name: String,
    /// Sorted by vService name; canonical order.
    pub refs: Vec<VServiceRef>,
}

/// One validation failure. `parse_manifest` reports all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ManifestViolation {
    Syntax {
        line: Option<u32>,
        column: Option<u32>,
        message: String,
    },
    MissingHsmGroups,
    MultipleHsmGroups { refs: Vec<String> },
    DuplicateVService { name: String },
    BadVersion { name: String, version: String },
}

impl fmt::Display for ManifestViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestViolation::Syntax { line, column, message } => match (line, column) {
                (Some(l), Some(c)) => write!(f, "syntax error at {l}:{c}: {message}"),
                _ => write!(f, "syntax error: {message}"),
            },
            ManifestViolation::MissingHsmGroups => {
                write!(f, "no vservice carries the hsm_groups config key")
            }
            ManifestViolation::MultipleHsmGroups { refs } => {
                write!(f, "hsm_groups carried by more than one vservice: {}", refs.join(", "))
            }
            ManifestViolation::DuplicateVService { name } => {
                write!(f, "duplicate vservice {name}")
            }
            ManifestViolation::BadVersion { name, version } => {
                write!(f, "vservice {name}: version {version:?} is not MAJOR.MINOR.PATCH")
            }
        }
    }
}

// lenient raw shape: every field optional so that validation can collect
// all violations instead of stopping at the first missing field
#[derive(Debug, Deserialize)]
struct RawManifest {
    name: Option<String>,
    #[serde(default)]
    vservice: Vec<RawRef>,
}

#[derive(Debug, Deserialize)]
struct RawRef {
    name: Option<String>,
    source: Option<RawSource>,
    config: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
struct RawSource {
    repo: Option<String>,
    version: Option<String>,
}

fn offset_to_line_col(text: &str, offset: usize) -> (u32, u32) {
    let mut line = 1u32;
    let mut col = 1u32;
    for (i, ch) in text.char_indices() {
        if i >= offset {
            break;
        }
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

fn convert_config(
    ref_name: &str,
    table: toml::Table,
    violations: &mut Vec<ManifestViolation>,
) -> ConfigMap {
    let mut out = ConfigMap::new();
    for (key, value) in table {
        match convert_value(&value) {
            Some(v) => {
                out.insert(key, v);
            }
            None => violations.push(ManifestViolation::Syntax {
                line: None,
                column: None,
                message: format!(
                    "vservice {ref_name}: config key {key:?} must be a bool/integer/string or a list of them"
                ),
            }),
        }
    }
    out
}

fn convert_value(value: &toml::Value) -> Option<ConfigValue> {
    match value {
        toml::Value::Boolean(b) => Some(ConfigValue::Scalar(ConfigScalar::Bool(*b))),
        toml::Value::Integer(i) => Some(ConfigValue::Scalar(ConfigScalar::Int(*i))),
        toml::Value::String(s) => Some(ConfigValue::Scalar(ConfigScalar::Str(s.clone()))),
        toml::Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                match convert_value(item)? {
                    ConfigValue::Scalar(s) => out.push(s),
                    ConfigValue::List(_) => return None,
                }
            }
            Some(ConfigValue::List(out))
        }
        _ => None,
    }
}

/// Parse and fully validate a manifest document. Returns the validated
/// manifest or every violation found; parsing never leaves partial state.
pub fn parse_manifest(text: &str) -> std::result::Result<VClusterManifest, Vec<ManifestViolation>> {
    let raw: RawManifest = match toml::from_str(text) {
        Ok(raw) => raw,
        Err(e) => {
            let (line, column) = e
                .span()
                .map(|s| offset_to_line_col(text, s.start))
                .map(|(l, c)| (Some(l), Some(c)))
                .unwrap_or((None, None));
            return Err(vec![ManifestViolation::Syntax {
                line,
                column,
                message: e.message().to_string(),
            }]);
        }
    };

    let mut violations = Vec::new();

    let vcluster_name = match raw.name {
        Some(name) if !name.is_empty() => name,
        Some(_) => {
            violations.push(ManifestViolation::Syntax {
                line: None,
                column: None,
                message: "top-level key `name` must be non-empty".into(),
            });
            String::new()
        }
        None => {
            violations.push(ManifestViolation::Syntax {
                line: None,
                column: None,
                message: "missing top-level key `name`".into(),
            });
            String::new()
        }
    };

    let mut refs: Vec<VServiceRef> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut hsm_carriers: Vec<String> = Vec::new();

    for (idx, raw_ref) in raw.vservice.into_iter().enumerate() {
        let name = match raw_ref.name {
            Some(name) if !name.is_empty() => name,
            _ => {
                violations.push(ManifestViolation::Syntax {
                    line: None,
                    column: None,
                    message: format!("vservice #{}: missing key `name`", idx + 1),
                });
                continue;
            }
        };
        if !seen.insert(name.clone()) {
            violations.push(ManifestViolation::DuplicateVService { name: name.clone() });
            continue;
        }
        let (repo, version) = match raw_ref.source {
            Some(RawSource { repo: Some(repo), version: Some(version) }) => (repo, version),
            _ => {
                violations.push(ManifestViolation::Syntax {
                    line: None,
                    column: None,
                    message: format!(
                        "vservice {name}: `source` must carry both `repo` and `version`"
                    ),
                });
                continue;
            }
        };
        if parse_semver(&version).is_none() {
            violations.push(ManifestViolation::BadVersion {
                name: name.clone(),
                version: version.clone(),
            });
        }
        let config = match raw_ref.config {
            Some(table) => convert_config(&name, table, &mut violations),
            None => ConfigMap::new(),
        };
        if config.contains_key("hsm_groups") {
            hsm_carriers.push(name.clone());
        }
        refs.push(VServiceRef { name, source_repo: repo, source_version: version, config });
    }

    match hsm_carriers.len() {
        0 => violations.push(ManifestViolation::MissingHsmGroups),
        1 => {}
        _ => violations.push(ManifestViolation::MultipleHsmGroups { refs: hsm_carriers }),
    }

    // canonical order: refs sorted by name
    refs.sort_by(|a, b| a.name.cmp(&b.name));

    if violations.is_empty() {
        let manifest = VClusterManifest { vcluster_name, refs };
        if let Err(v) = manifest.validate_hsm_values() {
            return Err(vec![v]);
        }
        Ok(manifest)
    } else {
        Err(violations)
    }
}

/// `parse_manifest` with the violation list folded into the crate error.
pub fn parse_manifest_strict(text: &str) -> Result<VClusterManifest> {
    parse_manifest(text).map_err(Error::ManifestInvalid)
}

impl VClusterManifest {
    /// The cluster names listed in the hsm_groups config key.
    pub fn hsm_groups(&self) -> Vec<String> {
        for r in &self.refs {
            if let Some(value) = r.config.get("hsm_groups") {
                return match value {
                    ConfigValue::Scalar(ConfigScalar::Str(s)) => vec![s.clone()],
                    ConfigValue::List(items) => items
                        .iter()
                        .filter_map(|s| match s {
                            ConfigScalar::Str(s) => Some(s.clone()),
                            _ => None,
                        })
                        .collect(),
                    _ => vec![],
                };
            }
        }
        vec![]
    }

    /// Infrastructure labels binding this vcluster: "vc:" + group name.
    pub fn membership_labels(&self) -> Vec<String> {
        self.hsm_groups()
            .into_iter()
            .map(|g| {
                if g.starts_with(VC_PREFIX) {
                    g
                } else {
                    format!("{VC_PREFIX}{g}")
                }
            })
            .collect()
    }

    fn validate_hsm_values(&self) -> std::result::Result<(), ManifestViolation> {
        let groups = self.hsm_groups();
        if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
            return Err(ManifestViolation::Syntax {
                line: None,
                column: None,
                message: "hsm_groups must name at least one non-empty label".into(),
            });
        }
        Ok(())
    }

    /// Content digest: SHA-256 of the canonical JSON form, 64 hex chars.
    /// Stable across reordering in the source text; any semantic change
    /// changes it.
    pub fn digest(&self) -> String {
        canon::content_digest(self)
    }

    /// Canonical JSON form (`manifest show --json`).
    pub fn to_canonical_json(&self) -> String {
        canon::to_snapshot_string(self)
    }

    /// Canonical TOML rendering; `parse(canonical_toml(m)) == m`.
    pub fn to_canonical_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name = {}\n", toml_str(&self.vcluster_name)));
        for r in &self.refs {
            out.push('\n');
            out.push_str("[[vservice]]\n");
            out.push_str(&format!("name = {}\n", toml_str(&r.name)));
            out.push_str(&format!(
                "source = {{ repo = {}, version = {} }}\n",
                toml_str(&r.source_repo),
                toml_str(&r.source_version)
            ));
            if !r.config.is_empty() {
                out.push('\n');
                out.push_str("[vservice.config]\n");
                for (key, value) in &r.config {
                    out.push_str(&format!("{key} = {}\n", toml_value(value)));
                }
            }
        }
        out
    }
}

fn toml_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(ch),
        }
    }
    out.push('"');
    out
}

fn toml_scalar(s: &ConfigScalar) -> String {
    match s {
        ConfigScalar::Bool(b) => b.to_string(),
        ConfigScalar::Int(i) => i.to_string(),
        ConfigScalar::Str(s) => toml_str(s),
    }
}

fn toml_value(v: &ConfigValue) -> String {
    match v {
        ConfigValue::Scalar(s) => toml_scalar(s),
        ConfigValue::List(items) => {
            let inner: Vec<String> = items.iter().map(toml_scalar).collect();
            format!("[{}]", inner.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAINT: &str = r#"
        name = "daint"

        [[vservice]]
        name = "vs-cscs-config"
        source = { repo = "git.example/vservices/vs-cscs-config", version = "2.0.1" }

        [vservice.config]
        hsm_groups = ["daint"]

        [[vservice]]
        name = "vs-storage"
        source = { repo = "git.example/vservices/vs-storage", version = "1.4.0" }

        [vservice.config]
        mounts = ["/capstor/scratch", "/users"]
    "#;

    #[test]
    fn daint_shaped_document_parses() {
        let m = parse_manifest(DAINT).unwrap();
        assert_eq!(m.vcluster_name, "daint");
        assert_eq!(m.refs.len(), 2);
        assert_eq!(m.hsm_groups(), vec!["daint"]);
        assert_eq!(m.membership_labels(), vec!["vc:daint"]);
        assert_eq!(m.refs[0].name, "vs-cscs-config");
    }

    #[test]
    fn empty_document_reports_both_violations() {
        let violations = parse_manifest("").unwrap_err();
        assert!(violations
            .iter()
            .any(|v| matches!(v, ManifestViolation::Syntax { .. })));
        assert!(violations.contains(&ManifestViolation::MissingHsmGroups));
    }

    #[test]
    fn duplicate_vservice_reported() {
        let text = r#"
            name = "x"
            [[vservice]]
            name = "vs-storage"
            source = { repo = "r", version = "1.0.0" }
            [vservice.config]
            hsm_groups = ["x"]
            [[vservice]]
            name = "vs-storage"
            source = { repo = "r", version = "1.0.1" }
        "#;
        let violations = parse_manifest(text).unwrap_err();
        assert!(violations
            .contains(&ManifestViolation::DuplicateVService { name: "vs-storage".into() }));
    }

    #[test]
    fn bad_version_reported_alongside_other_violations() {
        let text = r#"
            name = "x"
            [[vservice]]
            name = "a"
            source = { repo = "r", version = "1.0" }
            [[vservice]]
            name = "a"
            source = { repo = "r", version = "1.0.0" }
        "#;
        let violations = parse_manifest(text).unwrap_err();
        assert!(violations.contains(&ManifestViolation::BadVersion {
            name: "a".into(),
            version: "1.0".into()
        }));
        assert!(violations
            .contains(&ManifestViolation::DuplicateVService { name: "a".into() }));
        assert!(violations.contains(&ManifestViolation::MissingHsmGroups));
    }

    #[test]
    fn true_syntax_error_has_line_and_column() {
        let violations = parse_manifest("name = \"x\"\n[[vservice]\n").unwrap_err();
        match &violations[0] {
            ManifestViolation::Syntax { line, .. } => assert_eq!(*line, Some(2)),
            other => panic!("expected syntax violation, got {other:?}"),
        }
    }

    #[test]
    fn digest_stable_across_ref_reordering() {
        let reordered = r#"
            name = "daint"

            [[vservice]]
            name = "vs-storage"
            source = { repo = "git.example/vservices/vs-storage", version = "1.4.0" }

            [vservice.config]
            mounts = ["/capstor/scratch", "/users"]

            [[vservice]]
            name = "vs-cscs-config"
            source = { repo = "git.example/vservices/vs-cscs-config", version = "2.0.1" }

            [vservice.config]
            hsm_groups = ["daint"]
        "#;
        let a = parse_manifest(DAINT).unwrap();
        let b = parse_manifest(reordered).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn version_bump_changes_digest() {
        let bumped = DAINT.replace("2.0.1", "2.0.2");
        let a = parse_manifest(DAINT).unwrap();
        let b = parse_manifest(&bumped).unwrap();
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn round_trip_through_canonical_toml() {
        let m = parse_manifest(DAINT).unwrap();
        let text = m.to_canonical_toml();
        let back = parse_manifest(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.digest(), back.digest());
    }

    #[test]
    fn float_config_rejected() {
        let text = r#"
            name = "x"
            [[vservice]]
            name = "a"
            source = { repo = "r", version = "1.0.0" }
            [vservice.config]
            hsm_groups = ["x"]
            ratio = 0.5
        "#;
        let violations = parse_manifest(text).unwrap_err();
        assert!(matches!(violations[0], ManifestViolation::Syntax { .. }));
    }
}
