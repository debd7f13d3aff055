//! Multi-tenant role-based access control.
//!
//! Five roles, tenant-scoped except where noted. The permission matrix below
//! is normative; `authorize` is a pure decision function and every mutating
//! operation in the crate calls it first.
//!
//! | verb                | InfraAdmin | TenantAdmin | PlatformEngineer | ServiceManager | Scientist |
//! |---------------------|------------|-------------|------------------|----------------|-----------|
//! | inventory.load      | yes        | -           | -                | -              | -         |
//! | group.assign        | yes        | tenant      | -                | -              | -         |
//! | node.power          | yes        | tenant      | -                | -              | -         |
//! | node.partition      | yes        | tenant      | -                | -              | -         |
//! | image.stage         | yes        | tenant      | -                | -              | -         |
//! | registry.publish    | yes        | -           | -                | global         | -         |
//! | pipeline.integrate  | yes        | -           | yes              | -              | -         |
//! | pipeline.deploy     | yes        | -           | tenant           | -              | -         |
//! | update.rolling      | yes        | -           | tenant           | -              | -         |
//! | rollback            | yes        | -           | tenant           | -              | -         |
//! | reconcile.apply     | yes        | -           | tenant           | -              | -         |
//! | vet.repair-done     | yes        | tenant      | -                | -              | -         |
//! | vet.reintegrate     | yes        | tenant      | -                | -              | -         |
//! | job.submit          | yes        | tenant      | tenant           | -              | tenant    |
//! | fault.inject        | yes        | -           | -                | -              | -         |
//!
//! "tenant" means allowed only when the resource belongs to the principal's
//! tenant (or the resource is unowned). Unknown verbs deny. Read-only
//! operations do not authorize at all.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five control-plane roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    InfraAdmin,
    TenantAdmin,
    PlatformEngineer,
    ServiceManager,
    Scientist,
}

impl Role {
    pub fn all() -> &'static [Role] {
        &[
            Role::InfraAdmin,
            Role::TenantAdmin,
            Role::PlatformEngineer,
            Role::ServiceManager,
            Role::Scientist,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::InfraAdmin => "infra-admin",
            Role::TenantAdmin => "tenant-admin",
            Role::PlatformEngineer => "platform-engineer",
            Role::ServiceManager => "service-manager",
            Role::Scientist => "scientist",
        }
    }
}

/// Tenant scope of a principal: a concrete tenant, or all (`"*"`,
/// InfraAdmin only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TenantScope {
    All,
    Tenant(String),
}

impl TenantScope {
    fn parse(raw: &str) -> Self {
        if raw == "*" {
            TenantScope::All
        } else {
            TenantScope::Tenant(raw.to_string())
        }
    }

    pub fn tenant_id(&self) -> Option<&str> {
        match self {
            TenantScope::All => None,
            TenantScope::Tenant(t) => Some(t.as_str()),
        }
    }
}

/// An authenticated actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub principal_id: String,
    pub role: Role,
    pub tenant: TenantScope,
}

/// A tenant owning labels and vclusters within the shared infrastructure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tenant {
    pub tenant_id: String,
    pub platform: String,
}

/// The resource an action targets, resolved to its owning tenant.
/// `Unowned` covers idle nodes, shared labels and the global registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResourceOwner {
    Tenant(String),
    Unowned,
}

/// Authorization outcome. Deny is a value, not an error; callers convert it
/// to `Error::RbacDenied` at the operation boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(String),
}

impl Decision {
    pub fn into_result(self) -> Result<()> {
        match self {
            Decision::Allow => Ok(()),
            Decision::Deny(reason) => Err(Error::RbacDenied(reason)),
        }
    }
}

/// How a (role, verb) cell behaves before tenant scoping is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Grant {
    /// Allowed anywhere.
    Global,
    /// Allowed when the resource is owned by the principal's tenant or unowned.
    OwnTenant,
    /// Never allowed.
    No,
}

/// Every mutating verb in the control plane, with its grant per role.
/// Order: InfraAdmin, TenantAdmin, PlatformEngineer, ServiceManager, Scientist.
const MATRIX: &[(&str, [Grant; 5])] = &[
    ("inventory.load", [Grant::Global, Grant::No, Grant::No, Grant::No, Grant::No]),
    ("group.assign", [Grant::Global, Grant::OwnTenant, Grant::No, Grant::No, Grant::No]),
    ("node.power", [Grant::Global, Grant::OwnTenant, Grant::No, Grant::No, Grant::No]),
    ("node.partition", [Grant::Global, Grant::OwnTenant, Grant::No, Grant::No, Grant::No]),
    ("image.stage", [Grant::Global, Grant::OwnTenant, Grant::No, Grant::No, Grant::No]),
    ("registry.publish", [Grant::Global, Grant::No, Grant::No, Grant::Global, Grant::No]),
    ("pipeline.integrate", [Grant::Global, Grant::No, Grant::Global, Grant::No, Grant::No]),
    ("pipeline.deploy", [Grant::Global, Grant::No, Grant::OwnTenant, Grant::No, Grant::No]),
    ("update.rolling", [Grant::Global, Grant::No, Grant::OwnTenant, Grant::No, Grant::No]),
    ("rollback", [Grant::Global, Grant::No, Grant::OwnTenant, Grant::No, Grant::No]),
    ("reconcile.apply", [Grant::Global, Grant::No, Grant::OwnTenant, Grant::No, Grant::No]),
    ("vet.repair-done", [Grant::Global, Grant::OwnTenant, Grant::No, Grant::No, Grant::No]),
    ("vet.reintegrate", [Grant::Global, Grant::OwnTenant, Grant::No, Grant::No, Grant::No]),
    ("job.submit", [Grant::Global, Grant::OwnTenant, Grant::OwnTenant, Grant::No, Grant::OwnTenant]),
    ("fault.inject", [Grant::Global, Grant::No, Grant::No, Grant::No, Grant::No]),
];

/// All mutating verbs covered by the matrix.
pub fn mutating_verbs() -> Vec<&'static str> {
    MATRIX.iter().map(|(v, _)| *v).collect()
}

fn role_index(role: Role) -> usize {
    match role {
        Role::InfraAdmin => 0,
        Role::TenantAdmin => 1,
        Role::PlatformEngineer => 2,
        Role::ServiceManager => 3,
        Role::Scientist => 4,
    }
}

/// Decide whether `principal` may perform `action` on a resource owned by
/// `owner`. Unknown verbs deny.
pub fn authorize(principal: &Principal, action: &str, owner: &ResourceOwner) -> Decision {
    let Some((_, grants)) = MATRIX.iter().find(|(verb, _)| *verb == action) else {
        return Decision::Deny(format!("unknown verb {action}"));
    };
    match grants[role_index(principal.role)] {
        Grant::Global => Decision::Allow,
        Grant::No => Decision::Deny(format!(
            "role {} lacks privilege {action}",
            principal.role.as_str()
        )),
        Grant::OwnTenant => match (&principal.tenant, owner) {
            (TenantScope::All, _) => Decision::Allow,
            (TenantScope::Tenant(_), ResourceOwner::Unowned) => Decision::Allow,
            (TenantScope::Tenant(mine), ResourceOwner::Tenant(theirs)) => {
                if mine == theirs {
                    Decision::Allow
                } else {
                    Decision::Deny("foreign tenant".to_string())
                }
            }
        },
    }
}

/// Principals and tenants loaded from `principals.toml`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantDirectory {
    pub tenants: BTreeMap<String, Tenant>,
    pub principals: BTreeMap<String, Principal>,
}

#[derive(Debug, Deserialize)]
struct PrincipalsFile {
    #[serde(default)]
    tenants: Vec<TenantEntry>,
    #[serde(default)]
    principals: Vec<PrincipalEntry>,
}

#[derive(Debug, Deserialize)]
struct TenantEntry {
    tenant_id: String,
    #[serde(default)]
    platform: String,
}

#[derive(Debug, Deserialize)]
struct PrincipalEntry {
    id: String,
    role: Role,
    tenant: String,
}

impl TenantDirectory {
    /// Parse a `principals.toml` document.
    pub fn parse(text: &str) -> Result<Self> {
        let file: PrincipalsFile =
            toml::from_str(text).map_err(|e| Error::PrincipalsParse(e.to_string()))?;
        let mut dir = TenantDirectory::default();
        for t in file.tenants {
            if dir.tenants.contains_key(&t.tenant_id) {
                return Err(Error::PrincipalsParse(format!(
                    "duplicate tenant {}",
                    t.tenant_id
                )));
            }
            dir.tenants.insert(
                t.tenant_id.clone(),
                Tenant {
                    tenant_id: t.tenant_id,
                    platform: t.platform,
                },
            );
        }
        for p in file.principals {
            let scope = TenantScope::parse(&p.tenant);
            if scope == TenantScope::All && p.role != Role::InfraAdmin {
                return Err(Error::PrincipalsParse(format!(
                    "principal {}: scope \"*\" is reserved for infra-admin",
                    p.id
                )));
            }
            if let TenantScope::Tenant(t) = &scope {
                if !dir.tenants.contains_key(t) {
                    return Err(Error::PrincipalsParse(format!(
                        "principal {}: unknown tenant {t}",
                        p.id
                    )));
                }
            }
            if dir.principals.contains_key(&p.id) {
                return Err(Error::PrincipalsParse(format!("duplicate principal {}", p.id)));
            }
            dir.principals.insert(
                p.id.clone(),
                Principal {
                    principal_id: p.id,
                    role: p.role,
                    tenant: scope,
                },
            );
        }
        Ok(dir)
    }

    pub fn principal(&self, id: &str) -> Result<&Principal> {
        self.principals
            .get(id)
            .ok_or_else(|| Error::UnknownPrincipal(id.to_string()))
    }

    pub fn tenant(&self, id: &str) -> Result<&Tenant> {
        self.tenants
            .get(id)
            .ok_or_else(|| Error::UnknownTenant(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn principal(role: Role, tenant: &str) -> Principal {
        Principal {
            principal_id: "p".into(),
            role,
            tenant: TenantScope::parse(tenant),
        }
    }

    #[test]
    fn tenant_admin_own_label_allowed() {
        let p = principal(Role::TenantAdmin, "mch");
        let d = authorize(&p, "group.assign", &ResourceOwner::Tenant("mch".into()));
        assert_eq!(d, Decision::Allow);
    }

    #[test]
    fn tenant_admin_foreign_label_denied() {
        let p = principal(Role::TenantAdmin, "mch");
        let d = authorize(&p, "node.power", &ResourceOwner::Tenant("psi".into()));
        assert_eq!(d, Decision::Deny("foreign tenant".into()));
    }

    #[test]
    fn scientist_cannot_deploy() {
        let p = principal(Role::Scientist, "mch");
        let d = authorize(&p, "pipeline.deploy", &ResourceOwner::Tenant("mch".into()));
        assert!(matches!(d, Decision::Deny(_)));
    }

    #[test]
    fn unknown_verb_denies_even_for_infra_admin() {
        let p = principal(Role::InfraAdmin, "*");
        let d = authorize(&p, "frobnicate", &ResourceOwner::Unowned);
        assert!(matches!(d, Decision::Deny(_)));
    }

    #[test]
    fn matrix_covers_every_role_for_every_verb() {
        // Exhaustive role x verb enumeration against the published table:
        // InfraAdmin always allowed, everyone else compared cell by cell.
        for (verb, grants) in MATRIX {
            for role in Role::all() {
                let own = principal(*role, "t1");
                let d_own = authorize(&own, verb, &ResourceOwner::Tenant("t1".into()));
                let d_foreign = authorize(&own, verb, &ResourceOwner::Tenant("t2".into()));
                match grants[role_index(*role)] {
                    Grant::Global => {
                        assert_eq!(d_own, Decision::Allow, "{verb}/{role:?}");
                        assert_eq!(d_foreign, Decision::Allow, "{verb}/{role:?}");
                    }
                    Grant::OwnTenant => {
                        assert_eq!(d_own, Decision::Allow, "{verb}/{role:?}");
                        assert!(matches!(d_foreign, Decision::Deny(_)), "{verb}/{role:?}");
                    }
                    Grant::No => {
                        assert!(matches!(d_own, Decision::Deny(_)), "{verb}/{role:?}");
                        assert!(matches!(d_foreign, Decision::Deny(_)), "{verb}/{role:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn principals_file_round_trip() {
        let text = r#"
            [[tenants]]
            tenant_id = "mch"
            platform = "mch-icon-22"

            [[tenants]]
            tenant_id = "psi"
            platform = "merlin7"

            [[principals]]
            id = "root"
            role = "infra-admin"
            tenant = "*"

            [[principals]]
            id = "ana"
            role = "tenant-admin"
            tenant = "mch"
        "#;
        let dir = TenantDirectory::parse(text).unwrap();
        assert_eq!(dir.tenants.len(), 2);
        assert_eq!(dir.principal("ana").unwrap().role, Role::TenantAdmin);
        assert_eq!(dir.principal("root").unwrap().tenant, TenantScope::All);
        assert!(dir.principal("ghost").is_err());
    }

    #[test]
    fn star_scope_rejected_for_non_infra_roles() {
        let text = r#"
            [[principals]]
            id = "s"
            role = "scientist"
            tenant = "*"
        "#;
        assert!(TenantDirectory::parse(text).is_err());
    }
}
