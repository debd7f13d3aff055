//! Append-only recipe registry.
//!
//! Published versions are immutable: publishing a (name, version) pair twice
//! is an error. On disk the registry is `registry/<name>/<version>.toml`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::recipe::VServiceRecipe;
use crate::manifest::VClusterManifest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecipeRegistry {
    /// name -> version -> recipe
    recipes: BTreeMap<String, BTreeMap<String, VServiceRecipe>>,
}

impl RecipeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with the built-in catalog.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        for recipe in super::catalog::builtin_recipes() {
            reg.publish(recipe).expect("builtin catalog is valid");
        }
        reg
    }

    /// Publish a new recipe version. Existing versions never change.
    pub fn publish(&mut self, recipe: VServiceRecipe) -> Result<()> {
        recipe.validate()?;
        let versions = self.recipes.entry(recipe.name.clone()).or_default();
        if versions.contains_key(&recipe.version) {
            return Err(Error::RecipeExists { name: recipe.name, version: recipe.version });
        }
        versions.insert(recipe.version.clone(), recipe);
        Ok(())
    }

    pub fn get(&self, name: &str, version: &str) -> Result<&VServiceRecipe> {
        self.recipes
            .get(name)
            .and_then(|versions| versions.get(version))
            .ok_or_else(|| Error::UnknownRecipe { name: name.to_string(), version: version.to_string() })
    }

    pub fn contains(&self, name: &str, version: &str) -> bool {
        self.get(name, version).is_ok()
    }

    /// All (name, version) pairs, sorted.
    pub fn list(&self) -> Vec<(String, String)> {
        self.recipes
            .iter()
            .flat_map(|(name, versions)| {
                versions.keys().map(move |v| (name.clone(), v.clone()))
            })
            .collect()
    }

    pub fn versions_of(&self, name: &str) -> Vec<String> {
        self.recipes
            .get(name)
            .map(|versions| versions.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// Every recipe a manifest references, or the first unknown one.
    pub fn recipes_for(&self, manifest: &VClusterManifest) -> Result<Vec<&VServiceRecipe>> {
        manifest
            .refs
            .iter()
            .map(|r| self.get(&r.name, &r.source_version))
            .collect()
    }

    /// Write the registry as `dir/<name>/<version>.toml`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        for (name, versions) in &self.recipes {
            let subdir = dir.join(name);
            std::fs::create_dir_all(&subdir).map_err(|e| Error::State(e.to_string()))?;
            for (version, recipe) in versions {
                let text = toml::to_string_pretty(recipe).map_err(|e| Error::State(e.to_string()))?;
                std::fs::write(subdir.join(format!("{version}.toml")), text)
                    .map_err(|e| Error::State(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Load every `dir/<name>/<version>.toml` into a fresh registry.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut reg = Self::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::State(e.to_string()))?;
        let mut names: Vec<_> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.path())
            .collect();
        names.sort();
        for name_dir in names {
            let mut files: Vec<_> = std::fs::read_dir(&name_dir)
                .map_err(|e| Error::State(e.to_string()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|ext| ext == "toml"))
                .collect();
            files.sort();
            for file in files {
                let text =
                    std::fs::read_to_string(&file).map_err(|e| Error::State(e.to_string()))?;
                reg.publish(VServiceRecipe::parse(&text)?)?;
            }
        }
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::recipe::{Effect, EffectVerb, Hooks, RecipeKind};
    use crate::inventory::Plane;

    fn recipe(name: &str, version: &str) -> VServiceRecipe {
        VServiceRecipe {
            name: name.into(),
            version: version.into(),
            kind: RecipeKind::Plain,
            planes: vec![Plane::Resource],
            depends: vec![],
            hooks: Hooks {
                test: vec![Effect::new(EffectVerb::FileWrite, "/tmp/probe")],
                ..Default::default()
            },
        }
    }

    #[test]
    fn publish_is_append_only() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("vs-a", "1.0.0")).unwrap();
        reg.publish(recipe("vs-a", "1.0.1")).unwrap();
        let err = reg.publish(recipe("vs-a", "1.0.0")).unwrap_err();
        assert_eq!(err.code(), "RECIPE_EXISTS");
        assert_eq!(reg.versions_of("vs-a"), vec!["1.0.0", "1.0.1"]);
    }

    #[test]
    fn unknown_recipe_is_an_error() {
        let reg = RecipeRegistry::new();
        assert_eq!(reg.get("vs-x", "0.0.1").unwrap_err().code(), "UNKNOWN_RECIPE");
    }

    #[test]
    fn directory_round_trip() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("vs-a", "1.0.0")).unwrap();
        reg.publish(recipe("vs-b", "2.1.0")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        reg.save_dir(dir.path()).unwrap();
        let loaded = RecipeRegistry::load_dir(dir.path()).unwrap();
        assert_eq!(reg, loaded);
    }
}
