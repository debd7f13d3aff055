//! Inventory fixture parsing.
//!
//! A fixture is a TOML document with one `[[nodes]]` table per homogeneous
//! block (`prefix`, `count`, `hw_kind`, `gpus_per_node`, `site`, `plane`)
//! and optional `[[sites]]` tables naming each site's backend dialect and
//! power-completion delay. Sites referenced only from `[[nodes]]` default
//! to DialectA.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inventory::backend::Dialect;
use crate::inventory::{HwKind, Node, Plane, PowerState, Site};

#[derive(Debug, Deserialize)]
struct FixtureFile {
    #[serde(default)]
    sites: Vec<SiteBlock>,
    #[serde(default)]
    nodes: Vec<NodeBlock>,
}

#[derive(Debug, Deserialize)]
struct SiteBlock {
    site_id: String,
    dialect: Dialect,
    power_delay: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct NodeBlock {
    prefix: String,
    count: u32,
    hw_kind: String,
    #[serde(default)]
    gpus_per_node: u32,
    site: String,
    plane: Plane,
}

/// Parsed fixture: sites plus fully expanded node records, all powered off
/// with no labels.
pub struct ParsedFixture {
    pub sites: BTreeMap<String, Site>,
    pub nodes: BTreeMap<String, Node>,
}

pub fn parse_fixture(text: &str) -> Result<ParsedFixture> {
    let file: FixtureFile = toml::from_str(text).map_err(|e| Error::FixtureParse(e.to_string()))?;

    let mut sites: BTreeMap<String, Site> = BTreeMap::new();
    for s in file.sites {
        if sites.contains_key(&s.site_id) {
            return Err(Error::FixtureParse(format!("duplicate site {}", s.site_id)));
        }
        let power_delay = s.power_delay.unwrap_or_else(|| s.dialect.default_power_delay());
        if power_delay == 0 {
            return Err(Error::FixtureParse(format!(
                "site {}: power_delay must be >= 1",
                s.site_id
            )));
        }
        sites.insert(
            s.site_id.clone(),
            Site {
                site_id: s.site_id,
                backend_dialect: s.dialect,
                power_delay,
                node_ids: Default::default(),
            },
        );
    }

    let mut nodes: BTreeMap<String, Node> = BTreeMap::new();
    for block in file.nodes {
        let hw_kind = HwKind::parse(&block.hw_kind)?;
        let site = sites.entry(block.site.clone()).or_insert_with(|| Site {
            site_id: block.site.clone(),
            backend_dialect: Dialect::DialectA,
            power_delay: Dialect::DialectA.default_power_delay(),
            node_ids: Default::default(),
        });
        for i in 1..=block.count {
            let node_id = format!("{}-{:04}", block.prefix, i);
            if nodes.contains_key(&node_id) {
                return Err(Error::DuplicateNode(node_id));
            }
            site.node_ids.insert(node_id.clone());
            nodes.insert(
                node_id.clone(),
                Node {
                    node_id,
                    site_id: block.site.clone(),
                    hw_kind,
                    gpus: block.gpus_per_node,
                    labels: Default::default(),
                    power: PowerState::Off,
                    base_image: None,
                    partition_id: None,
                    plane: block.plane,
                },
            );
        }
    }

    Ok(ParsedFixture { sites, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_blocks_with_padded_ids() {
        let f = parse_fixture(
            r#"
            [[nodes]]
            prefix = "gh"
            count = 3
            hw_kind = "gpu-gh200"
            gpus_per_node = 4
            site = "s1"
            plane = "resource"
        "#,
        )
        .unwrap();
        assert_eq!(f.nodes.len(), 3);
        assert!(f.nodes.contains_key("gh-0001"));
        assert!(f.nodes.contains_key("gh-0003"));
        assert_eq!(f.sites["s1"].backend_dialect, Dialect::DialectA);
    }

    #[test]
    fn unknown_hw_kind_rejected() {
        let err = parse_fixture(
            r#"
            [[nodes]]
            prefix = "x"
            count = 1
            hw_kind = "quantum"
            site = "s1"
            plane = "resource"
        "#,
        )
        .unwrap_err();
        assert_eq!(err.code(), "UNKNOWN_HW_KIND");
    }

    #[test]
    fn duplicate_node_id_rejected() {
        let err = parse_fixture(
            r#"
            [[nodes]]
            prefix = "n"
            count = 2
            hw_kind = "service"
            site = "s1"
            plane = "service"

            [[nodes]]
            prefix = "n"
            count = 1
            hw_kind = "service"
            site = "s2"
            plane = "service"
        "#,
        )
        .unwrap_err();
        assert_eq!(err.code(), "DUPLICATE_NODE");
    }

    #[test]
    fn site_blocks_set_dialect_and_delay() {
        let f = parse_fixture(
            r#"
            [[sites]]
            site_id = "s2"
            dialect = "dialect-b"
            power_delay = 3

            [[nodes]]
            prefix = "n"
            count = 1
            hw_kind = "cpu-rome"
            site = "s2"
            plane = "resource"
        "#,
        )
        .unwrap();
        assert_eq!(f.sites["s2"].backend_dialect, Dialect::DialectB);
        assert_eq!(f.sites["s2"].power_delay, 3);
    }
}
