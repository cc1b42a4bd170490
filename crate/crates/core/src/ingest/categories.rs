use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

const BUNDLED_MAP: &str = include_str!("../../data/category_map.json");

/// Fallback for roots outside the map.
pub const OTHER: &str = "Other";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regrouped {
    pub main: String,
    pub big: String,
    pub known: bool,
}

/// Root category → "main" category → "big" category.
#[derive(Debug, Clone, Deserialize)]
pub struct CategoryMap {
    #[serde(rename = "main_cats_regroup_big")]
    main_to_big: BTreeMap<String, String>,
    #[serde(default)]
    aliases: BTreeMap<String, String>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        CategoryMap::from_json(BUNDLED_MAP).expect("bundled category map is valid")
    }
}

impl CategoryMap {
    pub fn from_json(text: &str) -> Result<CategoryMap, String> {
        let map: CategoryMap = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let Some((alias, target)) = map.aliases.iter().find(|(_, t)| !map.main_to_big.contains_key(*t)) {
            return Err(format!("alias {alias:?} targets unknown main category {target:?}"));
        }
        Ok(map)
    }

    pub fn main_categories(&self) -> BTreeSet<&str> {
        self.main_to_big.keys().map(String::as_str).collect()
    }

    pub fn big_categories(&self) -> BTreeSet<&str> {
        self.main_to_big.values().map(String::as_str).collect()
    }

    pub fn big_of(&self, main: &str) -> Option<&str> {
        self.main_to_big.get(main).map(String::as_str)
    }

    /// Uses the root of the first category path.
    pub fn regroup(&self, paths: &[Vec<String>]) -> Regrouped {
        let root = paths.first().and_then(|p| p.first()).map(|s| s.trim());
        let main = root.and_then(|r| {
            if self.main_to_big.contains_key(r) {
                Some(r.to_string())
            } else {
                self.aliases.get(r).cloned()
            }
        });
        match main {
            Some(main) => Regrouped {
                big: self.main_to_big[&main].clone(),
                main,
                known: true,
            },
            None => Regrouped {
                main: OTHER.to_string(),
                big: OTHER.to_string(),
                known: false,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(p: &[&str]) -> Vec<Vec<String>> {
        vec![p.iter().map(|s| s.to_string()).collect()]
    }

    #[test]
    fn bundled_map_shape() {
        let m = CategoryMap::default();
        assert_eq!(m.main_categories().len(), 18);
        assert_eq!(
            m.big_categories().into_iter().collect::<Vec<_>>(),
            vec!["Culture", "Entertainment", "Home", "Personal & Family", "Products"]
        );
    }

    #[test]
    fn regroup_examples() {
        let m = CategoryMap::default();
        let r = m.regroup(&path(&["Books", "Politics"]));
        assert_eq!((r.main.as_str(), r.big.as_str()), ("Books", "Culture"));
        let r = m.regroup(&path(&["Automotive", "Tools"]));
        assert_eq!((r.main.as_str(), r.big.as_str()), ("Automotive", "Home"));
        let r = m.regroup(&path(&["CDs & Vinyl", "Rock"]));
        assert_eq!((r.main.as_str(), r.big.as_str()), ("Music", "Culture"));
        let r = m.regroup(&path(&["UnknownRoot"]));
        assert_eq!((r.main.as_str(), r.big.as_str(), r.known), (OTHER, OTHER, false));
        assert!(!m.regroup(&[]).known);
    }

    #[test]
    fn alias_to_unknown_main_rejected() {
        let bad = r#"{"main_cats_regroup_big":{"Books":"Culture"},"aliases":{"X":"Nope"}}"#;
        assert!(CategoryMap::from_json(bad).is_err());
    }
}
