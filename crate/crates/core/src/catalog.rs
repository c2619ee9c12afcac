//! Reference problems shipped with the crate.

use crate::error::Result;
use crate::model::Problem;

#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub toml: &'static str,
}

impl CatalogEntry {
    pub fn problem(&self) -> Result<Problem> {
        Problem::from_toml(self.toml)
    }
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "ou",
        toml: include_str!("../../../configs/ou.toml"),
    },
    CatalogEntry {
        name: "drift_control",
        toml: include_str!("../../../configs/drift_control.toml"),
    },
    CatalogEntry {
        name: "diffusion_control",
        toml: include_str!("../../../configs/diffusion_control.toml"),
    },
    CatalogEntry {
        name: "nonlinear",
        toml: include_str!("../../../configs/nonlinear.toml"),
    },
];

pub fn entry(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name)
}
