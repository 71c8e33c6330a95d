//! The parametric face schema: regions, their continuous parameters, and
//! discrete variant counts.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A facial region with its own parameter group and discrete variants.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Eyes,
    Nose,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Eyes, Region::Nose, Region::Mouth];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Eyes => "eyes",
            Region::Nose => "nose",
            Region::Mouth => "mouth",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        match s {
            "eyes" => Some(Region::Eyes),
            "nose" => Some(Region::Nose),
            "mouth" => Some(Region::Mouth),
            _ => None,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a continuous parameter describes intrinsic shape (`Local`) or
/// placement relative to the rest of the face (`Global`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParam {
    pub name: String,
    pub locality: Locality,
}

impl ContinuousParam {
    fn new(name: &str, locality: Locality) -> Self {
        ContinuousParam {
            name: name.to_string(),
            locality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSchema {
    pub region: Region,
    pub continuous_params: Vec<ContinuousParam>,
    pub discrete_option_count: usize,
}

/// The complete schema: per-region parameter groups, whole-face globals, and
/// the pinned scale parameter (excluded from the target vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSchema {
    pub regions: Vec<RegionSchema>,
    pub global_params: Vec<String>,
    pub scale_param: String,
}

impl FaceSchema {
    pub fn region(&self, region: Region) -> &RegionSchema {
        self.regions
            .iter()
            .find(|r| r.region == region)
            .expect("schema covers all regions")
    }

    /// Region-group continuous dims plus whole-face globals.
    pub fn continuous_dim_count(&self) -> usize {
        let region_dims: usize = self.regions.iter().map(|r| r.continuous_params.len()).sum();
        region_dims + self.global_params.len()
    }

    pub fn onehot_dim_count(&self) -> usize {
        self.regions.iter().map(|r| r.discrete_option_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != 3 {
            return Err(Error::InvalidSchema(format!(
                "expected exactly 3 regions, got {}",
                self.regions.len()
            )));
        }
        let mut names: Vec<String> = Vec::new();
        for rs in &self.regions {
            if rs.continuous_params.len() < 3 {
                return Err(Error::InvalidSchema(format!(
                    "region {} has {} continuous params; at least 3 required",
                    rs.region,
                    rs.continuous_params.len()
                )));
            }
            if rs.discrete_option_count < 2 {
                return Err(Error::InvalidSchema(format!(
                    "region {} has {} discrete options; at least 2 required",
                    rs.region, rs.discrete_option_count
                )));
            }
            let has_local = rs
                .continuous_params
                .iter()
                .any(|p| p.locality == Locality::Local);
            let has_global = rs
                .continuous_params
                .iter()
                .any(|p| p.locality == Locality::Global);
            if !has_local || !has_global {
                return Err(Error::InvalidSchema(format!(
                    "region {} must mix Local and Global parameters",
                    rs.region
                )));
            }
            for p in &rs.continuous_params {
                names.push(format!("{}.{}", rs.region, p.name));
            }
        }
        for g in &self.global_params {
            names.push(format!("global.{g}"));
            if *g == self.scale_param {
                return Err(Error::InvalidSchema(format!(
                    "scale parameter {g} must not appear among globals"
                )));
            }
        }
        names.push(self.scale_param.clone());
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        if dedup.len() != names.len() {
            return Err(Error::InvalidSchema(
                "parameter names are not unique".to_string(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization. Manifests and model
    /// checkpoints carry this so stale artifacts are rejected at load time.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The canonical fixed schema: 12 region continuous dims + 3 globals = 15
/// continuous target dims, and 3 three-way variants = 9 one-hot dims.
pub fn default_schema() -> FaceSchema {
    use Locality::{Global, Local};
    FaceSchema {
        regions: vec![
            RegionSchema {
                region: Region::Eyes,
                continuous_params: vec![
                    ContinuousParam::new("spacing", Global),
                    ContinuousParam::new("size", Local),
                    ContinuousParam::new("tilt", Local),
                    ContinuousParam::new("vertical_position", Global),
                ],
                discrete_option_count: 3,
            },
            RegionSchema {
                region: Region::Nose,
                continuous_params: vec![
                    ContinuousParam::new("length", Local),
                    ContinuousParam::new("width", Local),
                    ContinuousParam::new("tip_curve", Local),
                    ContinuousParam::new("vertical_position", Global),
                ],
                discrete_option_count: 3,
            },
            RegionSchema {
                region: Region::Mouth,
                continuous_params: vec![
                    ContinuousParam::new("width", Local),
                    ContinuousParam::new("thickness", Local),
                    ContinuousParam::new("curvature", Local),
                    ContinuousParam::new("vertical_position", Global),
                ],
                discrete_option_count: 3,
            },
        ],
        global_params: vec![
            "face_width".to_string(),
            "jaw_width".to_string(),
            "chin_length".to_string(),
        ],
        scale_param: "scale".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_shape() {
        let schema = default_schema();
        schema.validate().unwrap();
        assert_eq!(schema.regions.len(), 3);
        assert_eq!(schema.continuous_dim_count(), 15);
        assert_eq!(schema.onehot_dim_count(), 9);
        assert_eq!(schema.region(Region::Nose).discrete_option_count, 3);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = default_schema();
        let b = default_schema();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = default_schema();
        c.regions[0].discrete_option_count = 4;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn validate_rejects_missing_locality_mix() {
        let mut schema = default_schema();
        for p in &mut schema.regions[1].continuous_params {
            p.locality = Locality::Local;
        }
        assert!(schema.validate().is_err());
    }
}
