//! Versioned vService recipes: kind, plane placement, dependencies, and
//! effect-based lifecycle hooks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory::Plane;

/// Behaviour class of a recipe. Scheduler/Storage/Network have ordering and
/// lifecycle semantics; the rest are catalog taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecipeKind {
    Plain,
    Scheduler,
    Storage,
    Network,
    Health,
    Identity,
    ApiGateway,
    ContainerRuntime,
    UserEnv,
}

impl RecipeKind {
    /// Apply-order rank among independent recipes: Network before Storage
    /// before Scheduler; everything else ties and falls to the name.
    pub fn order_rank(&self) -> u8 {
        match self {
            RecipeKind::Network => 0,
            RecipeKind::Storage => 1,
            RecipeKind::Scheduler => 2,
            _ => 3,
        }
    }
}

/// Declarative stand-in for a lifecycle script action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectVerb {
    PackageAdd,
    PackageRemove,
    FileWrite,
    Mount,
    Unmount,
    DaemonStart,
    DaemonStop,
    RegisterHealthCheck,
    OpenEndpoint,
}

/// One declarative effect: verb, subject, free-form args.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Effect {
    pub verb: EffectVerb,
    pub subject: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, String>,
}

impl Effect {
    pub fn new(verb: EffectVerb, subject: &str) -> Self {
        Effect { verb, subject: subject.to_string(), args: BTreeMap::new() }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {}", self.verb, self.subject)
    }
}

/// Lifecycle hook names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HookKind {
    Install,
    Configure,
    Start,
    Stop,
    Remove,
    Test,
}

impl HookKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HookKind::Install => "install",
            HookKind::Configure => "configure",
            HookKind::Start => "start",
            HookKind::Stop => "stop",
            HookKind::Remove => "remove",
            HookKind::Test => "test",
        }
    }
}

/// Hook table mapping each lifecycle phase to its effect list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hooks {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub install: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub configure: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub start: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remove: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test: Vec<Effect>,
}

impl Hooks {
    pub fn get(&self, kind: HookKind) -> &[Effect] {
        match kind {
            HookKind::Install => &self.install,
            HookKind::Configure => &self.configure,
            HookKind::Start => &self.start,
            HookKind::Stop => &self.stop,
            HookKind::Remove => &self.remove,
            HookKind::Test => &self.test,
        }
    }
}

/// A versioned, declarative service definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VServiceRecipe {
    pub name: String,
    pub version: String,
    pub kind: RecipeKind,
    pub planes: Vec<Plane>,
    #[serde(default)]
    pub depends: Vec<String>,
    pub hooks: Hooks,
}

impl VServiceRecipe {
    pub fn id(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }

    pub fn on_plane(&self, plane: Plane) -> bool {
        self.planes.contains(&plane)
    }

    /// Parse and validate a recipe TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let recipe: VServiceRecipe =
            toml::from_str(text).map_err(|e| Error::RecipeInvalid(e.to_string()))?;
        recipe.validate()?;
        Ok(recipe)
    }

    /// Structural validation: version shape, non-empty test hook, mount
    /// pairing for storage recipes, absolute mount subjects.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::RecipeInvalid("empty recipe name".into()));
        }
        if parse_semver(&self.version).is_none() {
            return Err(Error::RecipeInvalid(format!(
                "{}: version {:?} is not MAJOR.MINOR.PATCH",
                self.name, self.version
            )));
        }
        if self.planes.is_empty() {
            return Err(Error::RecipeInvalid(format!("{}: empty planes list", self.name)));
        }
        if self.hooks.test.is_empty() {
            return Err(Error::RecipeInvalid(format!("{}: test hook must be non-empty", self.name)));
        }
        for hook in [HookKind::Install, HookKind::Configure, HookKind::Start, HookKind::Stop, HookKind::Remove, HookKind::Test] {
            for effect in self.hooks.get(hook) {
                if matches!(effect.verb, EffectVerb::Mount | EffectVerb::Unmount)
                    && !effect.subject.starts_with('/')
                {
                    return Err(Error::RecipeInvalid(format!(
                        "{}: {} subject {:?} must be an absolute path",
                        self.name,
                        effect,
                        effect.subject
                    )));
                }
            }
        }
        if self.kind == RecipeKind::Storage {
            let mounts: Vec<&str> = self
                .hooks
                .install
                .iter()
                .filter(|e| e.verb == EffectVerb::Mount)
                .map(|e| e.subject.as_str())
                .collect();
            let unmounts: Vec<&str> = self
                .hooks
                .remove
                .iter()
                .filter(|e| e.verb == EffectVerb::Unmount)
                .map(|e| e.subject.as_str())
                .collect();
            for m in &mounts {
                if !unmounts.contains(m) {
                    return Err(Error::RecipeInvalid(format!(
                        "{}: mount {m} has no matching unmount in the remove hook",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// MAJOR.MINOR.PATCH, digits only.
pub fn parse_semver(version: &str) -> Option<(u64, u64, u64)> {
    let mut parts = version.split('.');
    let major = parts.next()?.parse().ok()?;
    let minor = parts.next()?.parse().ok()?;
    let patch = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((major, minor, patch))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: RecipeKind) -> VServiceRecipe {
        VServiceRecipe {
            name: "vs-test".into(),
            version: "1.0.0".into(),
            kind,
            planes: vec![Plane::Resource],
            depends: vec![],
            hooks: Hooks {
                test: vec![Effect::new(EffectVerb::DaemonStart, "self-test")],
                ..Default::default()
            },
        }
    }

    #[test]
    fn version_must_be_semver() {
        assert!(parse_semver("1.2.3").is_some());
        assert!(parse_semver("1.2").is_none());
        assert!(parse_semver("1.2.3.4").is_none());
        assert!(parse_semver("v1.2.3").is_none());
        let mut r = minimal(RecipeKind::Plain);
        r.version = "2".into();
        assert!(r.validate().is_err());
    }

    #[test]
    fn empty_test_hook_rejected() {
        let mut r = minimal(RecipeKind::Plain);
        r.hooks.test.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn storage_mount_unmount_pairing() {
        let mut r = minimal(RecipeKind::Storage);
        r.hooks.install.push(Effect::new(EffectVerb::Mount, "/capstor/scratch"));
        assert!(r.validate().is_err(), "mount without unmount must fail");
        r.hooks.remove.push(Effect::new(EffectVerb::Unmount, "/capstor/scratch"));
        r.validate().unwrap();
    }

    #[test]
    fn mount_subject_must_be_absolute() {
        let mut r = minimal(RecipeKind::Storage);
        r.hooks.install.push(Effect::new(EffectVerb::Mount, "scratch"));
        r.hooks.remove.push(Effect::new(EffectVerb::Unmount, "scratch"));
        assert!(r.validate().is_err());
    }

    #[test]
    fn parses_from_toml() {
        let r = VServiceRecipe::parse(
            r#"
            name = "vs-storage"
            version = "1.4.0"
            kind = "storage"
            planes = ["resource"]

            [[hooks.install]]
            verb = "mount"
            subject = "/users"

            [[hooks.remove]]
            verb = "unmount"
            subject = "/users"

            [[hooks.test]]
            verb = "file-write"
            subject = "/users/.probe"
        "#,
        )
        .unwrap();
        assert_eq!(r.kind, RecipeKind::Storage);
        assert_eq!(r.id(), "vs-storage@1.4.0");
    }
}
