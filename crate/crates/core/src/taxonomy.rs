//! Category declarations: thing/stuff kind and the role each category plays
//! in grading.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CategoryId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Thing,
    Stuff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Unannotated pixels. Excluded from every metric denominator.
    Void,
    FruitForeground,
    FruitBackground,
    /// Scene background that is annotated but is neither fruit nor defect.
    Background,
    Defect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub color: [u8; 3],
    pub id: CategoryId,
    pub kind: Kind,
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("category id 0 is reserved")]
    ZeroId,
    #[error("duplicate category id {0}")]
    DuplicateId(CategoryId),
    #[error("duplicate category name {0:?}")]
    DuplicateName(String),
    #[error("expected exactly one void category, found {0}")]
    VoidCount(usize),
    #[error("category {0} has role {1:?} but kind {2:?}")]
    KindRoleConflict(CategoryId, Role, Kind),
    #[error("more than one category with role {0:?}")]
    DuplicateRole(Role),
    #[error("invalid taxonomy JSON: {0}")]
    Json(String),
}

/// Validated list of categories, sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    categories: Vec<Category>,
    by_id: BTreeMap<CategoryId, usize>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    categories: Vec<Category>,
}

impl Taxonomy {
    pub fn new(mut categories: Vec<Category>) -> Result<Self, TaxonomyError> {
        categories.sort_by_key(|c| c.id);
        let mut by_id = BTreeMap::new();
        let mut names = std::collections::BTreeSet::new();
        for (i, c) in categories.iter().enumerate() {
            if c.id == 0 {
                return Err(TaxonomyError::ZeroId);
            }
            if by_id.insert(c.id, i).is_some() {
                return Err(TaxonomyError::DuplicateId(c.id));
            }
            if !names.insert(c.name.as_str()) {
                return Err(TaxonomyError::DuplicateName(c.name.clone()));
            }
            let ok = match c.role {
                Role::Defect => c.kind == Kind::Thing,
                Role::FruitForeground | Role::FruitBackground => c.kind == Kind::Stuff,
                Role::Void | Role::Background => true,
            };
            if !ok {
                return Err(TaxonomyError::KindRoleConflict(c.id, c.role, c.kind));
            }
        }
        let voids = categories.iter().filter(|c| c.role == Role::Void).count();
        if voids != 1 {
            return Err(TaxonomyError::VoidCount(voids));
        }
        for role in [Role::FruitForeground, Role::FruitBackground] {
            if categories.iter().filter(|c| c.role == role).count() > 1 {
                return Err(TaxonomyError::DuplicateRole(role));
            }
        }
        Ok(Self { categories, by_id })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile = serde_json::from_slice(bytes).map_err(|e| TaxonomyError::Json(e.to_string()))?;
        Self::new(file.categories)
    }

    pub fn to_json(&self) -> String {
        let file = TaxonomyFile {
            categories: self.categories.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("taxonomy serializes");
        s.push('\n');
        s
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn get(&self, id: CategoryId) -> Option<&Category> {
        self.by_id.get(&id).map(|&i| &self.categories[i])
    }

    pub fn by_name(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn void_id(&self) -> CategoryId {
        self.categories
            .iter()
            .find(|c| c.role == Role::Void)
            .map(|c| c.id)
            .expect("validated taxonomy has a void category")
    }

    pub fn role_id(&self, role: Role) -> Option<CategoryId> {
        self.categories.iter().find(|c| c.role == role).map(|c| c.id)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Category> {
        self.categories.iter().filter(move |c| c.role == role)
    }

    pub fn is_void(&self, id: CategoryId) -> bool {
        self.get(id).is_some_and(|c| c.role == Role::Void)
    }

    /// Six-class banana taxonomy: four defect things, two fruit stuff
    /// classes, plain background, and void.
    pub fn banana() -> Self {
        let cat = |id, name: &str, kind, role, color| Category {
            color,
            id,
            kind,
            name: name.to_string(),
            role,
        };
        Self::new(vec![
            cat(1, "Old Bruise", Kind::Thing, Role::Defect, [200, 0, 0]),
            cat(2, "New Bruise", Kind::Thing, Role::Defect, [255, 105, 180]),
            cat(3, "Old Scar", Kind::Thing, Role::Defect, [128, 0, 128]),
            cat(4, "New Scar", Kind::Thing, Role::Defect, [0, 128, 128]),
            cat(
                5,
                "Foreground Banana",
                Kind::Stuff,
                Role::FruitForeground,
                [255, 225, 0],
            ),
            cat(
                6,
                "Background Banana",
                Kind::Stuff,
                Role::FruitBackground,
                [255, 140, 0],
            ),
            cat(7, "Background", Kind::Stuff, Role::Background, [40, 40, 40]),
            cat(8, "Void", Kind::Stuff, Role::Void, [0, 0, 0]),
        ])
        .expect("built-in taxonomy is valid")
    }

    /// Single generic defect class variant.
    pub fn banana_single_defect() -> Self {
        let cat = |id, name: &str, kind, role, color| Category {
            color,
            id,
            kind,
            name: name.to_string(),
            role,
        };
        Self::new(vec![
            cat(1, "Defect", Kind::Thing, Role::Defect, [200, 0, 0]),
            cat(
                5,
                "Foreground Banana",
                Kind::Stuff,
                Role::FruitForeground,
                [255, 225, 0],
            ),
            cat(
                6,
                "Background Banana",
                Kind::Stuff,
                Role::FruitBackground,
                [255, 140, 0],
            ),
            cat(7, "Background", Kind::Stuff, Role::Background, [40, 40, 40]),
            cat(8, "Void", Kind::Stuff, Role::Void, [0, 0, 0]),
        ])
        .expect("built-in taxonomy is valid")
    }
}
