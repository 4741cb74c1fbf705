//! Ordered label set shared by masks, models and metrics.
//!
//! Class ids are contiguous from zero. Extension only ever appends, so masks
//! written against an older taxonomy stay valid against every extension of it.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ROAD: &str = "road";
pub const BACKGROUND: &str = "background";

/// Index of a class in a [`LabelTaxonomy`]; also the pixel value in mask files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl ClassId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub is_surface_material: bool,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassInfo>", into = "Vec<ClassInfo>")]
pub struct LabelTaxonomy {
    classes: Vec<ClassInfo>,
}

// Colors for classes appended by `extend` when the name has no canonical color.
const EXTENSION_PALETTE: [[u8; 3]; 6] = [
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
    [188, 189, 34],
    [227, 119, 194],
    [140, 86, 75],
];

const CANONICAL: [(&str, bool, [u8; 3]); 10] = [
    ("concrete", true, [190, 190, 190]),
    ("brick", true, [178, 34, 34]),
    ("granite/bluestone", true, [70, 110, 160]),
    ("asphalt", true, [60, 60, 60]),
    ("mixed", true, [218, 165, 32]),
    ("granite block/stone", true, [120, 80, 160]),
    ("hexagonal asphalt paver", true, [34, 139, 34]),
    ("cobblestone", true, [139, 90, 43]),
    (ROAD, false, [128, 64, 128]),
    (BACKGROUND, false, [0, 0, 0]),
];

/// Names of the three classes added when extending the base taxonomy.
pub const EXTENSION_CLASSES: [&str; 3] = ["granite block/stone", "hexagonal asphalt paver", "cobblestone"];

fn canonical_color(name: &str) -> Option<[u8; 3]> {
    CANONICAL.iter().find(|(n, _, _)| *n == name).map(|(_, _, c)| *c)
}

impl LabelTaxonomy {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self> {
        let taxonomy = Self { classes };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    /// The full ten-class label set: eight paving materials, road and background.
    pub fn canonical() -> Self {
        Self::from_names(CANONICAL.iter().map(|(n, m, c)| (*n, *m, *c)))
    }

    /// The five-material set an inventory-seeded model starts from, plus road and background.
    pub fn base() -> Self {
        Self::from_names(
            ["concrete", "brick", "granite/bluestone", "asphalt", "mixed", ROAD, BACKGROUND]
                .into_iter()
                .map(|n| {
                    let (_, m, c) = CANONICAL.iter().find(|(cn, _, _)| *cn == n).unwrap();
                    (n, *m, *c)
                }),
        )
    }

    /// `materials` in the given order, followed by road and background.
    pub fn with_materials<S: AsRef<str>>(materials: &[S]) -> Result<Self> {
        let mut classes = Vec::with_capacity(materials.len() + 2);
        for (k, name) in materials.iter().enumerate() {
            let name = name.as_ref();
            classes.push(ClassInfo {
                id: ClassId(k as u8),
                name: name.to_string(),
                is_surface_material: true,
                color: canonical_color(name).unwrap_or(EXTENSION_PALETTE[k % EXTENSION_PALETTE.len()]),
            });
        }
        for name in [ROAD, BACKGROUND] {
            classes.push(ClassInfo {
                id: ClassId(classes.len() as u8),
                name: name.to_string(),
                is_surface_material: false,
                color: canonical_color(name).expect("reserved classes have colors"),
            });
        }
        Self::new(classes)
    }

    fn from_names<'a>(it: impl Iterator<Item = (&'a str, bool, [u8; 3])>) -> Self {
        let classes = it
            .enumerate()
            .map(|(i, (name, material, color))| ClassInfo {
                id: ClassId(i as u8),
                name: name.to_string(),
                is_surface_material: material,
                color,
            })
            .collect();
        Self::new(classes).expect("built-in taxonomy is valid")
    }

    fn validate(&self) -> Result<()> {
        if self.classes.len() > u8::MAX as usize + 1 {
            return Err(Error::Integrity("more than 256 classes".into()));
        }
        for (i, class) in self.classes.iter().enumerate() {
            if class.id.index() != i {
                return Err(Error::Integrity(format!(
                    "class ids must be contiguous from 0; position {i} has id {}",
                    class.id
                )));
            }
            if self.classes[..i].iter().any(|c| c.name == class.name) {
                return Err(Error::Integrity(format!("duplicate class name {:?}", class.name)));
            }
        }
        for reserved in [ROAD, BACKGROUND] {
            match self.classes.iter().filter(|c| c.name == reserved).collect::<Vec<_>>()[..] {
                [c] if !c.is_surface_material => {}
                [_] => {
                    return Err(Error::Integrity(format!("{reserved} cannot be a surface material")))
                }
                _ => return Err(Error::Integrity(format!("exactly one {reserved} class required"))),
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassInfo> {
        self.classes.get(id.index())
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn road(&self) -> ClassId {
        self.id_of(ROAD).expect("validated")
    }

    pub fn background(&self) -> ClassId {
        self.id_of(BACKGROUND).expect("validated")
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id.index() < self.classes.len()
    }

    pub fn is_material(&self, id: ClassId) -> bool {
        self.get(id).is_some_and(|c| c.is_surface_material)
    }

    pub fn material_ids(&self) -> Vec<ClassId> {
        self.classes
            .iter()
            .filter(|c| c.is_surface_material)
            .map(|c| c.id)
            .collect()
    }

    /// Appends `new_classes` as surface materials with the next free ids.
    pub fn extend<S: AsRef<str>>(&self, new_classes: &[S]) -> Result<Self> {
        let mut classes = self.classes.clone();
        for (k, name) in new_classes.iter().enumerate() {
            let name = name.as_ref();
            if classes.iter().any(|c| c.name == name) {
                return Err(Error::Precondition(format!("class {name:?} already exists")));
            }
            let color = canonical_color(name).unwrap_or(EXTENSION_PALETTE[k % EXTENSION_PALETTE.len()]);
            classes.push(ClassInfo {
                id: ClassId(classes.len() as u8),
                name: name.to_string(),
                is_surface_material: true,
                color,
            });
        }
        Self::new(classes)
    }

    /// Short content fingerprint stored in checkpoints.
    pub fn version(&self) -> String {
        let json = serde_json::to_vec(&self.classes).expect("serializable");
        let digest = Sha256::digest(&json);
        let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        format!("{}c-{hex}", self.classes.len())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl TryFrom<Vec<ClassInfo>> for LabelTaxonomy {
    type Error = Error;

    fn try_from(classes: Vec<ClassInfo>) -> Result<Self> {
        Self::new(classes)
    }
}

impl From<LabelTaxonomy> for Vec<ClassInfo> {
    fn from(t: LabelTaxonomy) -> Self {
        t.classes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_has_ten_classes_with_two_non_materials() {
        let t = LabelTaxonomy::canonical();
        assert_eq!(t.len(), 10);
        assert_eq!(t.material_ids().len(), 8);
        assert!(!t.is_material(t.road()));
        assert!(!t.is_material(t.background()));
    }

    #[test]
    fn extending_base_appends_three_materials() {
        let base = LabelTaxonomy::base();
        assert_eq!(base.len(), 7);
        let ext = base.extend(&EXTENSION_CLASSES).unwrap();
        assert_eq!(ext.len(), 10);
        for c in base.classes() {
            assert_eq!(ext.id_of(&c.name), Some(c.id));
        }
        assert_eq!(ext.id_of("cobblestone"), Some(ClassId(9)));
    }

    #[test]
    fn extend_with_nothing_is_identity() {
        let base = LabelTaxonomy::base();
        assert_eq!(base.extend::<&str>(&[]).unwrap(), base);
    }

    #[test]
    fn extend_with_existing_name_fails() {
        assert!(matches!(
            LabelTaxonomy::base().extend(&["brick"]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn file_format_round_trips_and_validates() {
        let t = LabelTaxonomy::canonical();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.starts_with("[{\"id\":0,\"name\":\"concrete\""));
        let back: LabelTaxonomy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);

        let no_road = r#"[{"id":0,"name":"brick","is_surface_material":true,"color":[1,2,3]},
                          {"id":1,"name":"background","is_surface_material":false,"color":[0,0,0]}]"#;
        assert!(serde_json::from_str::<LabelTaxonomy>(no_road).is_err());
        let gap = r#"[{"id":0,"name":"road","is_surface_material":false,"color":[1,2,3]},
                      {"id":2,"name":"background","is_surface_material":false,"color":[0,0,0]}]"#;
        assert!(serde_json::from_str::<LabelTaxonomy>(gap).is_err());
    }
}
