//! The shipped 45-organ layout: names, laterality groups and simplified 2D geometry.

use std::sync::OnceLock;

use serde::Deserialize;

use super::{Laterality, OrganId};

const LAYOUT_JSON: &str = include_str!("../../data/organ_layout.json");

#[derive(Debug, Clone, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub laterality: Laterality,
    pub polygon: Vec<[f64; 2]>,
    pub label: [f64; 2],
}

#[derive(Debug, Deserialize)]
struct LayoutFile {
    organs: Vec<LayoutEntry>,
}

fn layout() -> &'static [LayoutEntry] {
    static LAYOUT: OnceLock<Vec<LayoutEntry>> = OnceLock::new();
    LAYOUT.get_or_init(|| {
        serde_json::from_str::<LayoutFile>(LAYOUT_JSON)
            .expect("bundled organ layout is valid JSON")
            .organs
    })
}

/// Raw text of the bundled layout file, served to the UI as-is.
pub fn organ_layout_json() -> &'static str {
    LAYOUT_JSON
}

pub fn layout_entries() -> &'static [LayoutEntry] {
    layout()
}

/// The default organ list, in layout order.
pub fn default_organs() -> Vec<OrganId> {
    layout()
        .iter()
        .map(|e| OrganId::new(e.name.clone(), e.laterality))
        .collect()
}

/// Laterality of a named organ: from the layout when listed, otherwise from an
/// `_Ipsi` / `_Contra` suffix, otherwise midline.
pub fn laterality_of(name: &str) -> Laterality {
    if let Some(entry) = layout().iter().find(|e| e.name == name) {
        return entry.laterality;
    }
    if name.ends_with("_Ipsi") {
        Laterality::Ipsilateral
    } else if name.ends_with("_Contra") {
        Laterality::Contralateral
    } else {
        Laterality::Midline
    }
}
