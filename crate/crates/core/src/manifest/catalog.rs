//! Built-in vService catalog.
//!
//! Thirteen recipes covering the common platform services: site config,
//! user environments, container engines and plugins, API gateway, identity,
//! network, health validation, scheduler, storage, and Kubernetes bridging.
//! All lifecycle hooks are declarative effect stubs.

use std::collections::BTreeMap;

use crate::inventory::Plane;
use crate::manifest::recipe::{Effect, EffectVerb, HookKind, Hooks, RecipeKind, VServiceRecipe};

fn effect(verb: EffectVerb, subject: &str) -> Effect {
    Effect::new(verb, subject)
}

fn effect_args(verb: EffectVerb, subject: &str, args: &[(&str, &str)]) -> Effect {
    let mut map = BTreeMap::new();
    for (k, v) in args {
        map.insert((*k).to_string(), (*v).to_string());
    }
    Effect { verb, subject: subject.to_string(), args: map }
}

struct Spec {
    name: &'static str,
    version: &'static str,
    kind: RecipeKind,
    planes: &'static [Plane],
    depends: &'static [&'static str],
}

fn base(spec: &Spec, hooks: Hooks) -> VServiceRecipe {
    VServiceRecipe {
        name: spec.name.to_string(),
        version: spec.version.to_string(),
        kind: spec.kind,
        planes: spec.planes.to_vec(),
        depends: spec.depends.iter().map(|s| s.to_string()).collect(),
        hooks,
    }
}

/// Standard hook set for a daemon-style service.
fn daemon_hooks(package: &str, daemon: &str, config_path: &str) -> Hooks {
    Hooks {
        install: vec![effect(EffectVerb::PackageAdd, package)],
        configure: vec![effect(EffectVerb::FileWrite, config_path)],
        start: vec![effect(EffectVerb::DaemonStart, daemon)],
        stop: vec![effect(EffectVerb::DaemonStop, daemon)],
        remove: vec![effect(EffectVerb::PackageRemove, package)],
        test: vec![effect_args(EffectVerb::FileWrite, "/var/run/vcforge/test", &[("probe", daemon)])],
    }
}

/// The full built-in catalog, one current version per service.
pub fn builtin_recipes() -> Vec<VServiceRecipe> {
    let mut recipes = Vec::new();

    recipes.push(base(
        &Spec {
            name: "vs-cscs-config",
            version: "2.0.1",
            kind: RecipeKind::Plain,
            planes: &[Plane::Resource],
            depends: &[],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "site-config")],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/site/config.toml")],
            remove: vec![effect(EffectVerb::PackageRemove, "site-config")],
            test: vec![effect(EffectVerb::FileWrite, "/etc/site/.validated")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-uenv",
            version: "5.1.0",
            kind: RecipeKind::UserEnv,
            planes: &[Plane::Resource],
            depends: &[],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "uenv")],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/uenv/repo.toml")],
            remove: vec![effect(EffectVerb::PackageRemove, "uenv")],
            test: vec![effect(EffectVerb::FileWrite, "/tmp/uenv-smoke")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-enroot",
            version: "3.4.0",
            kind: RecipeKind::ContainerRuntime,
            planes: &[Plane::Resource],
            depends: &[],
        },
        daemon_hooks("enroot", "enroot-hookd", "/etc/enroot/enroot.conf"),
    ));

    recipes.push(base(
        &Spec {
            name: "vs-podman",
            version: "4.9.3",
            kind: RecipeKind::ContainerRuntime,
            planes: &[Plane::Resource],
            depends: &[],
        },
        daemon_hooks("podman", "podman-api", "/etc/containers/storage.conf"),
    ));

    recipes.push(base(
        &Spec {
            name: "vs-pyxis",
            version: "0.20.0",
            kind: RecipeKind::Plain,
            planes: &[Plane::Resource],
            depends: &["vs-slurm"],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "slurm-spank-pyxis")],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/slurm/plugstack.conf.d/pyxis.conf")],
            remove: vec![effect(EffectVerb::PackageRemove, "slurm-spank-pyxis")],
            test: vec![effect(EffectVerb::FileWrite, "/tmp/pyxis-smoke")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-cdi",
            version: "0.8.0",
            kind: RecipeKind::ContainerRuntime,
            planes: &[Plane::Resource],
            depends: &[],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "cdi-device-plugins")],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/cdi/devices.json")],
            remove: vec![effect(EffectVerb::PackageRemove, "cdi-device-plugins")],
            test: vec![effect(EffectVerb::FileWrite, "/tmp/cdi-devices-visible")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-firecrest",
            version: "2.2.7",
            kind: RecipeKind::ApiGateway,
            planes: &[Plane::Resource, Plane::Service],
            depends: &["vs-iam"],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "firecrest")],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/firecrest/gateway.yaml")],
            start: vec![
                effect(EffectVerb::DaemonStart, "firecrest-api"),
                effect_args(EffectVerb::OpenEndpoint, "https://api.cluster.local", &[("port", "8443")]),
            ],
            stop: vec![effect(EffectVerb::DaemonStop, "firecrest-api")],
            remove: vec![effect(EffectVerb::PackageRemove, "firecrest")],
            test: vec![effect_args(EffectVerb::OpenEndpoint, "https://api.cluster.local/health", &[("expect", "200")])],
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-iam",
            version: "1.8.2",
            kind: RecipeKind::Identity,
            planes: &[Plane::Resource],
            depends: &[],
        },
        daemon_hooks("sssd", "sssd", "/etc/sssd/sssd.conf"),
    ));

    recipes.push(base(
        &Spec {
            name: "vs-network",
            version: "1.3.0",
            kind: RecipeKind::Network,
            planes: &[Plane::Service],
            depends: &[],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "dns-manager")],
            configure: vec![
                effect(EffectVerb::FileWrite, "/etc/dns/zones.toml"),
                effect_args(EffectVerb::OpenEndpoint, "dns://cluster.local", &[("proto", "udp")]),
            ],
            remove: vec![effect(EffectVerb::PackageRemove, "dns-manager")],
            test: vec![effect(EffectVerb::FileWrite, "/tmp/dns-resolve-smoke")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-node-validator",
            version: "0.9.0",
            kind: RecipeKind::Health,
            planes: &[Plane::Resource, Plane::Service],
            depends: &[],
        },
        Hooks {
            install: vec![
                effect(EffectVerb::PackageAdd, "reframe"),
                effect(EffectVerb::RegisterHealthCheck, "node-responsive"),
                effect(EffectVerb::RegisterHealthCheck, "gpu-link"),
                effect(EffectVerb::RegisterHealthCheck, "filesystem-mounts"),
            ],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/reframe/checks.py")],
            remove: vec![effect(EffectVerb::PackageRemove, "reframe")],
            test: vec![effect(EffectVerb::FileWrite, "/tmp/reframe-selfcheck")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-slurm",
            version: "23.2.7",
            kind: RecipeKind::Scheduler,
            planes: &[Plane::Resource, Plane::Service],
            depends: &["vs-storage"],
        },
        Hooks {
            install: vec![
                effect(EffectVerb::PackageAdd, "slurm"),
                effect(EffectVerb::PackageAdd, "slurm-db"),
            ],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/slurm/slurm.conf")],
            start: vec![
                effect(EffectVerb::DaemonStart, "slurmd"),
                effect_args(EffectVerb::OpenEndpoint, "slurmrestd://cluster.local", &[("port", "6820")]),
            ],
            stop: vec![effect(EffectVerb::DaemonStop, "slurmd")],
            remove: vec![
                effect(EffectVerb::PackageRemove, "slurm-db"),
                effect(EffectVerb::PackageRemove, "slurm"),
            ],
            test: vec![effect_args(EffectVerb::FileWrite, "/tmp/sinfo-smoke", &[("expect", "idle")])],
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-storage",
            version: "1.4.0",
            kind: RecipeKind::Storage,
            planes: &[Plane::Resource],
            depends: &[],
        },
        Hooks {
            install: vec![
                effect(EffectVerb::Mount, "/capstor/scratch"),
                effect(EffectVerb::Mount, "/users"),
            ],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/fstab.d/vcluster.conf")],
            stop: vec![],
            remove: vec![
                effect(EffectVerb::Unmount, "/users"),
                effect(EffectVerb::Unmount, "/capstor/scratch"),
            ],
            test: vec![effect(EffectVerb::FileWrite, "/capstor/scratch/.probe")],
            ..Default::default()
        },
    ));

    recipes.push(base(
        &Spec {
            name: "vs-alpernetes",
            version: "0.6.1",
            kind: RecipeKind::Plain,
            planes: &[Plane::Resource, Plane::Service],
            depends: &[],
        },
        Hooks {
            install: vec![effect(EffectVerb::PackageAdd, "alpernetes-agent")],
            configure: vec![effect(EffectVerb::FileWrite, "/etc/alpernetes/join.yaml")],
            start: vec![effect(EffectVerb::DaemonStart, "alpernetes-agent")],
            stop: vec![effect(EffectVerb::DaemonStop, "alpernetes-agent")],
            remove: vec![effect(EffectVerb::PackageRemove, "alpernetes-agent")],
            test: vec![effect(EffectVerb::FileWrite, "/tmp/alpernetes-node-joined")],
        },
    ));

    recipes
}

/// Check names for the health checks registered by the built-in validator.
pub fn builtin_check_names() -> Vec<&'static str> {
    vec!["node-responsive", "gpu-link", "filesystem-mounts"]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_thirteen_valid_recipes_with_test_hooks() {
        let recipes = builtin_recipes();
        assert_eq!(recipes.len(), 13);
        for r in &recipes {
            r.validate().unwrap_or_else(|e| panic!("{}: {e}", r.name));
            assert!(!r.hooks.get(HookKind::Test).is_empty(), "{} test hook", r.name);
        }
    }

    #[test]
    fn scheduler_and_storage_present() {
        let recipes = builtin_recipes();
        let slurm = recipes.iter().find(|r| r.name == "vs-slurm").unwrap();
        assert_eq!(slurm.kind, RecipeKind::Scheduler);
        assert!(slurm.depends.contains(&"vs-storage".to_string()));
        let storage = recipes.iter().find(|r| r.name == "vs-storage").unwrap();
        assert_eq!(storage.kind, RecipeKind::Storage);
    }

    #[test]
    fn validator_registers_checks() {
        let recipes = builtin_recipes();
        let validator = recipes.iter().find(|r| r.name == "vs-node-validator").unwrap();
        let registered: Vec<&str> = validator
            .hooks
            .install
            .iter()
            .filter(|e| e.verb == EffectVerb::RegisterHealthCheck)
            .map(|e| e.subject.as_str())
            .collect();
        assert_eq!(registered, builtin_check_names());
    }
}
