//! Fault injection: specs armed by scenarios or tests, drawn against the
//! per-node seed streams.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::recipe::HookKind;
use crate::state::ControlPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    NodeCrash,
    CheckFail,
    HookFail,
    RebootFail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", content = "name", rename_all = "kebab-case")]
pub enum FaultTarget {
    Node(String),
    AllNodes,
    Recipe(String),
    Check(String),
    AllChecks,
}

/// An armed fault: scheduled (fires once at `at_tick`) or probabilistic
/// (drawn on each opportunity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: FaultTarget,
    pub probability: Option<f64>,
    pub at_tick: Option<u64>,
    /// HookFail only: restrict to one hook.
    pub hook: Option<HookKind>,
    #[serde(default)]
    pub fired: bool,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<()> {
        if self.probability.is_none() && self.at_tick.is_none() {
            return Err(Error::InvalidFaultSpec(
                "either probability or at-tick must be given".into(),
            ));
        }
        if let Some(p) = self.probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidFaultSpec(format!("probability {p} outside [0, 1]")));
            }
        }
        match (self.kind, &self.target) {
            (FaultKind::NodeCrash | FaultKind::RebootFail, FaultTarget::Node(_) | FaultTarget::AllNodes) => Ok(()),
            (FaultKind::CheckFail, FaultTarget::Check(_) | FaultTarget::AllChecks) => Ok(()),
            (FaultKind::HookFail, FaultTarget::Recipe(_)) => Ok(()),
            (kind, target) => Err(Error::InvalidFaultSpec(format!(
                "kind {kind:?} cannot target {target:?}"
            ))),
        }
    }
}

impl ControlPlane {
    /// Arm a fault. Node and recipe targets must exist; check targets must
    /// be registered by some recipe in the registry.
    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<()> {
        spec.validate()?;
        match &spec.target {
            FaultTarget::Node(node) => {
                if !self.inventory.nodes.contains_key(node) {
                    return Err(Error::UnknownTarget(node.clone()));
                }
            }
            FaultTarget::Recipe(name) => {
                if self.registry.versions_of(name).is_empty() {
                    return Err(Error::UnknownTarget(name.clone()));
                }
            }
            FaultTarget::Check(name) => {
                if !self.known_checks().iter().any(|c| c == name) {
                    return Err(Error::UnknownTarget(name.clone()));
                }
            }
            FaultTarget::AllNodes | FaultTarget::AllChecks => {}
        }
        self.emit(
            "fault-armed",
            serde_json::json!({
                "kind": format!("{:?}", spec.kind),
                "target": format!("{:?}", spec.target),
            }),
        );
        self.faults.push(spec);
        Ok(())
    }

    /// All check names any registry recipe registers, plus the fallback.
    pub fn known_checks(&self) -> Vec<String> {
        let mut checks = std::collections::BTreeSet::new();
        checks.insert("node-up".to_string());
        for (name, version) in self.registry.list() {
            if let Ok(recipe) = self.registry.get(&name, &version) {
                for hook in [HookKind::Install, HookKind::Configure, HookKind::Start] {
                    for effect in recipe.hooks.get(hook) {
                        if effect.verb == crate::manifest::recipe::EffectVerb::RegisterHealthCheck {
                            checks.insert(effect.subject.clone());
                        }
                    }
                }
            }
        }
        checks.into_iter().collect()
    }

    /// Scheduled node crashes due at the current tick (marks them fired).
    pub(crate) fn due_crashes(&mut self) -> Vec<String> {
        let tick = self.clock.tick;
        let mut due = Vec::new();
        for spec in &mut self.faults {
            if spec.kind != FaultKind::NodeCrash || spec.fired {
                continue;
            }
            if spec.at_tick == Some(tick) {
                spec.fired = true;
                if let FaultTarget::Node(node) = &spec.target {
                    due.push(node.clone());
                }
            }
        }
        // probabilistic crashes: one draw per target node per tick
        let probabilistic: Vec<(FaultTarget, f64)> = self
            .faults
            .iter()
            .filter(|s| s.kind == FaultKind::NodeCrash && s.at_tick.is_none())
            .filter_map(|s| s.probability.map(|p| (s.target.clone(), p)))
            .collect();
        for (target, p) in probabilistic {
            match target {
                FaultTarget::Node(node) => {
                    if self.rng(&node).chance(p) {
                        due.push(node);
                    }
                }
                FaultTarget::AllNodes => {
                    let nodes: Vec<String> = self.inventory.nodes.keys().cloned().collect();
                    for node in nodes {
                        if self.rng(&node).chance(p) {
                            due.push(node);
                        }
                    }
                }
                _ => {}
            }
        }
        due.sort();
        due.dedup();
        due
    }

    /// Whether `check` fails on `node` right now.
    pub(crate) fn fault_check_fails(&mut self, node: &str, check: &str) -> bool {
        let tick = self.clock.tick;
        let specs: Vec<(Option<f64>, Option<u64>)> = self
            .faults
            .iter()
            .filter(|s| s.kind == FaultKind::CheckFail)
            .filter(|s| match &s.target {
                FaultTarget::Check(name) => name == check,
                FaultTarget::AllChecks => true,
                _ => false,
            })
            .map(|s| (s.probability, s.at_tick))
            .collect();
        for (probability, at_tick) in specs {
            if at_tick == Some(tick) {
                return true;
            }
            if let Some(p) = probability {
                if self.rng(node).chance(p) {
                    return true;
                }
            }
        }
        false
    }

    /// Whether a hook execution fails at `location` for `recipe`.
    pub(crate) fn fault_hook_fails(&mut self, location: &str, recipe: &str, hook: HookKind) -> bool {
        let tick = self.clock.tick;
        let specs: Vec<(Option<f64>, Option<u64>)> = self
            .faults
            .iter()
            .filter(|s| s.kind == FaultKind::HookFail)
            .filter(|s| matches!(&s.target, FaultTarget::Recipe(name) if name == recipe))
            .filter(|s| s.hook.is_none() || s.hook == Some(hook))
            .map(|s| (s.probability, s.at_tick))
            .collect();
        for (probability, at_tick) in specs {
            if at_tick == Some(tick) {
                return true;
            }
            if let Some(p) = probability {
                if self.rng(location).chance(p) {
                    return true;
                }
            }
        }
        false
    }

    /// Whether a reboot attempt of `node` fails.
    pub(crate) fn fault_reboot_fails(&mut self, node: &str) -> bool {
        let tick = self.clock.tick;
        let specs: Vec<(Option<f64>, Option<u64>)> = self
            .faults
            .iter()
            .filter(|s| s.kind == FaultKind::RebootFail)
            .filter(|s| match &s.target {
                FaultTarget::Node(name) => name == node,
                FaultTarget::AllNodes => true,
                _ => false,
            })
            .map(|s| (s.probability, s.at_tick))
            .collect();
        for (probability, at_tick) in specs {
            if at_tick == Some(tick) {
                return true;
            }
            if let Some(p) = probability {
                if self.rng(node).chance(p) {
                    return true;
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let ok = FaultSpec {
            kind: FaultKind::CheckFail,
            target: FaultTarget::AllChecks,
            probability: Some(0.5),
            at_tick: None,
            hook: None,
            fired: false,
        };
        ok.validate().unwrap();

        let bad_p = FaultSpec { probability: Some(1.5), ..ok.clone() };
        assert!(bad_p.validate().is_err());

        let no_trigger = FaultSpec { probability: None, ..ok.clone() };
        assert!(no_trigger.validate().is_err());

        let wrong_target = FaultSpec {
            kind: FaultKind::HookFail,
            target: FaultTarget::AllNodes,
            ..ok
        };
        assert!(wrong_target.validate().is_err());
    }
}
