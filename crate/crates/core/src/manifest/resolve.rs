//! Manifest resolution: deterministic apply order.
//!
//! Order is topological over `depends` (edges restricted to recipes present
//! in the manifest), with independent recipes ranked Network before Storage
//! before Scheduler and ties broken lexicographically by name.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::manifest::recipe::VServiceRecipe;
use crate::manifest::registry::RecipeRegistry;
use crate::manifest::VClusterManifest;

/// Resolve every ref to a concrete recipe, in apply order.
pub fn resolve(
    manifest: &VClusterManifest,
    registry: &RecipeRegistry,
) -> Result<Vec<VServiceRecipe>> {
    let recipes = registry.recipes_for(manifest)?;
    let in_manifest: BTreeSet<&str> = recipes.iter().map(|r| r.name.as_str()).collect();

    // indegree counts and reverse adjacency over manifest members only
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for recipe in &recipes {
        indegree.entry(recipe.name.as_str()).or_insert(0);
        for dep in &recipe.depends {
            if in_manifest.contains(dep.as_str()) {
                *indegree.entry(recipe.name.as_str()).or_insert(0) += 1;
                dependents.entry(dep.as_str()).or_default().push(recipe.name.as_str());
            }
        }
    }

    let by_name: BTreeMap<&str, &VServiceRecipe> =
        recipes.iter().map(|r| (r.name.as_str(), *r)).collect();

    // Kahn's algorithm with a (rank, name) priority frontier
    let mut frontier: BTreeSet<(u8, &str)> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(name, _)| (by_name[name].kind.order_rank(), *name))
        .collect();
    let mut order: Vec<VServiceRecipe> = Vec::with_capacity(recipes.len());

    while let Some(&(rank, name)) = frontier.iter().next() {
        frontier.remove(&(rank, name));
        order.push(by_name[name].clone());
        if let Some(children) = dependents.get(name) {
            for child in children {
                let d = indegree.get_mut(child).expect("child tracked");
                *d -= 1;
                if *d == 0 {
                    frontier.insert((by_name[child].kind.order_rank(), child));
                }
            }
        }
    }

    if order.len() != recipes.len() {
        let cycle: Vec<String> = indegree
            .iter()
            .filter(|(_, d)| **d > 0)
            .map(|(name, _)| (*name).to_string())
            .collect();
        return Err(Error::DependencyCycle(cycle));
    }

    Ok(order)
}

/// Check that `order` is a valid topological order of the manifest's
/// dependency edges; used by tests and the scenario invariant sweep.
pub fn is_valid_topological_order(order: &[VServiceRecipe]) -> bool {
    let position: BTreeMap<&str, usize> =
        order.iter().enumerate().map(|(i, r)| (r.name.as_str(), i)).collect();
    for recipe in order {
        for dep in &recipe.depends {
            if let Some(&dep_pos) = position.get(dep.as_str()) {
                if dep_pos >= position[recipe.name.as_str()] {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::Plane;
    use crate::manifest::recipe::{Effect, EffectVerb, Hooks, RecipeKind};
    use crate::manifest::{ConfigScalar, ConfigValue, VServiceRef};

    fn recipe(name: &str, kind: RecipeKind, depends: &[&str]) -> VServiceRecipe {
        VServiceRecipe {
            name: name.into(),
            version: "1.0.0".into(),
            kind,
            planes: vec![Plane::Resource],
            depends: depends.iter().map(|s| s.to_string()).collect(),
            hooks: Hooks {
                test: vec![Effect::new(EffectVerb::FileWrite, "/tmp/t")],
                ..Default::default()
            },
        }
    }

    fn manifest_of(names: &[&str]) -> VClusterManifest {
        let refs = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut config = std::collections::BTreeMap::new();
                if i == 0 {
                    config.insert(
                        "hsm_groups".to_string(),
                        ConfigValue::List(vec![ConfigScalar::Str("t".into())]),
                    );
                }
                VServiceRef {
                    name: name.to_string(),
                    source_repo: "repo".into(),
                    source_version: "1.0.0".into(),
                    config,
                }
            })
            .collect();
        VClusterManifest { vcluster_name: "t".into(), refs }
    }

    #[test]
    fn dependency_orders_storage_before_slurm() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("slurm", RecipeKind::Scheduler, &["storage"])).unwrap();
        reg.publish(recipe("storage", RecipeKind::Storage, &[])).unwrap();
        let order = resolve(&manifest_of(&["slurm", "storage"]), &reg).unwrap();
        let names: Vec<&str> = order.iter().map(|r| r.name.as_str()).collect();

        // oracle: enumerate both permutations of the 2-node DAG, keep the
        // topologically valid ones, and require our answer to be among them
        let valid: Vec<Vec<&str>> = vec![vec!["storage", "slurm"], vec!["slurm", "storage"]]
            .into_iter()
            .filter(|perm| {
                let slurm_pos = perm.iter().position(|n| *n == "slurm").unwrap();
                let storage_pos = perm.iter().position(|n| *n == "storage").unwrap();
                storage_pos < slurm_pos
            })
            .collect();
        assert_eq!(valid, vec![vec!["storage", "slurm"]]);
        assert_eq!(names, valid[0]);
        assert!(is_valid_topological_order(&order));
    }

    #[test]
    fn single_plain_recipe_resolves_to_itself() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("only", RecipeKind::Plain, &[])).unwrap();
        let order = resolve(&manifest_of(&["only"]), &reg).unwrap();
        assert_eq!(order.len(), 1);
        assert_eq!(order[0].name, "only");
    }

    #[test]
    fn cycle_is_reported_with_members() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("a", RecipeKind::Plain, &["b"])).unwrap();
        reg.publish(recipe("b", RecipeKind::Plain, &["a"])).unwrap();
        match resolve(&manifest_of(&["a", "b"]), &reg).unwrap_err() {
            Error::DependencyCycle(members) => {
                assert_eq!(members, vec!["a".to_string(), "b".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kind_ranking_among_independent_recipes() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("zz-sched", RecipeKind::Scheduler, &[])).unwrap();
        reg.publish(recipe("aa-plain", RecipeKind::Plain, &[])).unwrap();
        reg.publish(recipe("m-storage", RecipeKind::Storage, &[])).unwrap();
        reg.publish(recipe("z-net", RecipeKind::Network, &[])).unwrap();
        let order =
            resolve(&manifest_of(&["zz-sched", "aa-plain", "m-storage", "z-net"]), &reg).unwrap();
        let names: Vec<&str> = order.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["z-net", "m-storage", "zz-sched", "aa-plain"]);
    }

    #[test]
    fn unknown_recipe_names_the_missing_pair() {
        let reg = RecipeRegistry::new();
        match resolve(&manifest_of(&["ghost"]), &reg).unwrap_err() {
            Error::UnknownRecipe { name, version } => {
                assert_eq!(name, "ghost");
                assert_eq!(version, "1.0.0");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn depends_outside_manifest_are_ignored() {
        let mut reg = RecipeRegistry::new();
        reg.publish(recipe("pyxis", RecipeKind::Plain, &["slurm"])).unwrap();
        let order = resolve(&manifest_of(&["pyxis"]), &reg).unwrap();
        assert_eq!(order.len(), 1);
    }
}
