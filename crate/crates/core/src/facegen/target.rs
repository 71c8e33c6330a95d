//! Flat target-vector encoding of recipes: continuous slots copied through,
//! discrete choices one-hot encoded, scale excluded.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegen::schema::{FaceSchema, Region};

/// What a layout group holds: raw continuous values or a one-hot slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Continuous,
    OneHot,
}

/// One named group of adjacent target dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGroup {
    pub name: String,
    pub region: Option<Region>,
    pub kind: SlotKind,
    pub start: usize,
    pub len: usize,
}

impl TargetGroup {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Index map over the flat target vector. Groups are disjoint and cover the
/// vector; names here key the loss parts, ensemble weights file, and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetLayout {
    pub groups: Vec<TargetGroup>,
    pub dim_names: Vec<String>,
}

impl TargetLayout {
    pub fn from_schema(schema: &FaceSchema) -> TargetLayout {
        let mut groups = Vec::new();
        let mut dim_names = Vec::new();
        let mut cursor = 0usize;
        for rs in &schema.regions {
            groups.push(TargetGroup {
                name: rs.region.as_str().to_string(),
                region: Some(rs.region),
                kind: SlotKind::Continuous,
                start: cursor,
                len: rs.continuous_params.len(),
            });
            for p in &rs.continuous_params {
                dim_names.push(format!("{}.{}", rs.region, p.name));
            }
            cursor += rs.continuous_params.len();
        }
        groups.push(TargetGroup {
            name: "globals".to_string(),
            region: None,
            kind: SlotKind::Continuous,
            start: cursor,
            len: schema.global_params.len(),
        });
        for g in &schema.global_params {
            dim_names.push(format!("global.{g}"));
        }
        cursor += schema.global_params.len();
        for rs in &schema.regions {
            groups.push(TargetGroup {
                name: format!("{}_variant", rs.region),
                region: Some(rs.region),
                kind: SlotKind::OneHot,
                start: cursor,
                len: rs.discrete_option_count,
            });
            for k in 0..rs.discrete_option_count {
                dim_names.push(format!("{}.variant{k}", rs.region));
            }
            cursor += rs.discrete_option_count;
        }
        TargetLayout { groups, dim_names }
    }

    pub fn total_len(&self) -> usize {
        self.dim_names.len()
    }

    pub fn group(&self, name: &str) -> Option<&TargetGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn continuous_range(&self, region: Region) -> Range<usize> {
        self.groups
            .iter()
            .find(|g| g.region == Some(region) && g.kind == SlotKind::Continuous)
            .expect("layout covers all regions")
            .range()
    }

    pub fn onehot_range(&self, region: Region) -> Range<usize> {
        self.groups
            .iter()
            .find(|g| g.region == Some(region) && g.kind == SlotKind::OneHot)
            .expect("layout covers all regions")
            .range()
    }

    pub fn globals_range(&self) -> Range<usize> {
        self.group("globals").expect("globals group").range()
    }

    /// All continuous dims (region groups plus globals), in vector order.
    pub fn continuous_dims(&self) -> Vec<usize> {
        self.groups
            .iter()
            .filter(|g| g.kind == SlotKind::Continuous)
            .flat_map(|g| g.range())
            .collect()
    }

    /// Dims predicted by the local model of `region`: that region's
    /// continuous group (Global-tagged params included) plus its one-hot
    /// slice.
    pub fn local_dims(&self, region: Region) -> Vec<usize> {
        let mut dims: Vec<usize> = self.continuous_range(region).collect();
        dims.extend(self.onehot_range(region));
        dims
    }
}

/// A complete parameter set for one face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub continuous: BTreeMap<Region, Vec<f64>>,
    pub globals: Vec<f64>,
    pub discrete: BTreeMap<Region, usize>,
    pub scale: f64,
}

impl Recipe {
    /// All-zero parameters, variant 0 everywhere: the reference face.
    pub fn zero(schema: &FaceSchema) -> Recipe {
        let mut continuous = BTreeMap::new();
        let mut discrete = BTreeMap::new();
        for rs in &schema.regions {
            continuous.insert(rs.region, vec![0.0; rs.continuous_params.len()]);
            discrete.insert(rs.region, 0);
        }
        Recipe {
            continuous,
            globals: vec![0.0; schema.global_params.len()],
            discrete,
            scale: 0.0,
        }
    }

    pub fn validate(&self, schema: &FaceSchema) -> Result<()> {
        for rs in &schema.regions {
            let values = self.continuous.get(&rs.region).ok_or_else(|| {
                Error::InvalidRecipe(format!("missing continuous params for {}", rs.region))
            })?;
            if values.len() != rs.continuous_params.len() {
                return Err(Error::InvalidRecipe(format!(
                    "region {} expects {} continuous params, got {}",
                    rs.region,
                    rs.continuous_params.len(),
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
                return Err(Error::InvalidRecipe(format!(
                    "region {} has continuous values outside [-1, 1]",
                    rs.region
                )));
            }
            let index = *self.discrete.get(&rs.region).ok_or_else(|| {
                Error::InvalidRecipe(format!("missing discrete option for {}", rs.region))
            })?;
            if index >= rs.discrete_option_count {
                return Err(Error::InvalidOption {
                    region: rs.region,
                    index,
                    count: rs.discrete_option_count,
                });
            }
        }
        if self.globals.len() != schema.global_params.len() {
            return Err(Error::InvalidRecipe(format!(
                "expected {} globals, got {}",
                schema.global_params.len(),
                self.globals.len()
            )));
        }
        if self.globals.iter().any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::InvalidRecipe(
                "globals outside [-1, 1]".to_string(),
            ));
        }
        if !self.scale.is_finite() {
            return Err(Error::InvalidRecipe("scale is not finite".to_string()));
        }
        Ok(())
    }
}

/// Flat numeric encoding of a recipe plus its index map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub layout: TargetLayout,
}

/// Continuous values copied into their slots, each discrete index one-hot
/// encoded; scale is excluded from the vector.
pub fn encode_recipe(recipe: &Recipe, schema: &FaceSchema) -> Result<TargetVector> {
    recipe.validate(schema)?;
    let layout = TargetLayout::from_schema(schema);
    let mut values = vec![0.0; layout.total_len()];
    for rs in &schema.regions {
        let range = layout.continuous_range(rs.region);
        values[range].copy_from_slice(&recipe.continuous[&rs.region]);
        let onehot = layout.onehot_range(rs.region);
        values[onehot.start + recipe.discrete[&rs.region]] = 1.0;
    }
    let globals = layout.globals_range();
    values[globals].copy_from_slice(&recipe.globals);
    Ok(TargetVector { values, layout })
}

/// Argmax with ties broken by lowest index.
pub fn argmax_lowest(slice: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in slice.iter().enumerate().skip(1) {
        if *v > slice[best] {
            best = i;
        }
    }
    best
}

/// Inverse of [`encode_recipe`] for predicted vectors: continuous values
/// clamped to [-1, 1], discrete index recovered by argmax (ties to the
/// lowest index), scale pinned to 0.
pub fn decode_target(vector: &TargetVector, schema: &FaceSchema) -> Result<Recipe> {
    let layout = TargetLayout::from_schema(schema);
    if vector.layout != layout {
        return Err(Error::LayoutMismatch(
            "vector layout does not match schema layout".to_string(),
        ));
    }
    if vector.values.len() != layout.total_len() {
        return Err(Error::LayoutMismatch(format!(
            "vector has {} values, layout expects {}",
            vector.values.len(),
            layout.total_len()
        )));
    }
    let mut continuous = BTreeMap::new();
    let mut discrete = BTreeMap::new();
    for rs in &schema.regions {
        let values: Vec<f64> = vector.values[layout.continuous_range(rs.region)]
            .iter()
            .map(|v| v.clamp(-1.0, 1.0))
            .collect();
        continuous.insert(rs.region, values);
        let slice = &vector.values[layout.onehot_range(rs.region)];
        discrete.insert(rs.region, argmax_lowest(slice));
    }
    let globals: Vec<f64> = vector.values[layout.globals_range()]
        .iter()
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();
    Ok(Recipe {
        continuous,
        globals,
        discrete,
        scale: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::facegen::schema::default_schema;

    #[test]
    fn layout_covers_24_dims_disjointly() {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        assert_eq!(layout.total_len(), 24);
        let mut covered = vec![false; layout.total_len()];
        for g in &layout.groups {
            for i in g.range() {
                assert!(!covered[i], "dim {i} covered twice");
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|c| *c));
        assert_eq!(layout.dim_names.len(), 24);
    }

    #[test]
    fn encode_zero_recipe() {
        let schema = default_schema();
        let recipe = Recipe::zero(&schema);
        let tv = encode_recipe(&recipe, &schema).unwrap();
        assert_eq!(tv.values.len(), 24);
        assert!(tv.values[..15].iter().all(|v| *v == 0.0));
        for region in Region::ALL {
            let slice = &tv.values[tv.layout.onehot_range(region)];
            assert_eq!(slice, &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn encode_onehot_index_one() {
        let schema = default_schema();
        let mut recipe = Recipe::zero(&schema);
        recipe.discrete.insert(Region::Nose, 1);
        let tv = encode_recipe(&recipe, &schema).unwrap();
        let slice = &tv.values[tv.layout.onehot_range(Region::Nose)];
        assert_eq!(slice, &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn encode_rejects_bad_option_index() {
        let schema = default_schema();
        let mut recipe = Recipe::zero(&schema);
        recipe.discrete.insert(Region::Mouth, 7);
        let err = encode_recipe(&recipe, &schema).unwrap_err();
        match err {
            Error::InvalidOption { region, index, count } => {
                assert_eq!(region, Region::Mouth);
                assert_eq!(index, 7);
                assert_eq!(count, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn decode_argmax_and_ties() {
        assert_eq!(argmax_lowest(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax_lowest(&[0.4, 0.4, 0.2]), 0);
    }

    #[test]
    fn decode_clamps_continuous() {
        let schema = default_schema();
        let layout = TargetLayout::from_schema(&schema);
        let mut values = vec![0.0; layout.total_len()];
        values[1] = 1.7;
        values[2] = -3.0;
        for region in Region::ALL {
            values[layout.onehot_range(region).start] = 1.0;
        }
        let tv = TargetVector { values, layout };
        let recipe = decode_target(&tv, &schema).unwrap();
        assert_eq!(recipe.continuous[&Region::Eyes][1], 1.0);
        assert_eq!(recipe.continuous[&Region::Eyes][2], -1.0);
        assert_eq!(recipe.scale, 0.0);
    }

    #[test]
    fn decode_rejects_wrong_layout() {
        let schema = default_schema();
        let mut layout = TargetLayout::from_schema(&schema);
        layout.groups[0].len = 2;
        let tv = TargetVector {
            values: vec![0.0; 24],
            layout,
        };
        assert!(matches!(
            decode_target(&tv, &schema),
            Err(Error::LayoutMismatch(_))
        ));
    }

    pub(crate) fn random_recipe(rng: &mut ChaCha8Rng, schema: &FaceSchema) -> Recipe {
        let mut recipe = Recipe::zero(schema);
        for rs in &schema.regions {
            let values = recipe.continuous.get_mut(&rs.region).unwrap();
            for v in values.iter_mut() {
                *v = rng.random_range(-1.0..=1.0);
            }
            recipe
                .discrete
                .insert(rs.region, rng.random_range(0..rs.discrete_option_count));
        }
        for v in recipe.globals.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        recipe
    }

    #[test]
    fn roundtrip_1000_random_recipes() {
        let schema = default_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let recipe = random_recipe(&mut rng, &schema);
            let tv = encode_recipe(&recipe, &schema).unwrap();
            let back = decode_target(&tv, &schema).unwrap();
            assert_eq!(back, recipe);
        }
    }
}
