//! Reproducible corpus generation: samples recipes, renders jittered views,
//! and persists images, masks, crops, and a JSONL manifest.
//!
//! Layout under the output directory:
//!   manifest.jsonl            header line, then one record per line
//!   img/<id>.png              full frame
//!   mask/<id>_<region>.png    per-region mask
//!   crop/<id>_<region>.png    per-region crop, CROP_SIZE square
//!   .INCOMPLETE               partial-output marker, removed on success

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facegen::{
    crop_region, encode_recipe, render, FaceSchema, Image, PixelRect, Recipe, Region, ViewParams,
    CROP_SIZE, MAX_JITTER,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const INCOMPLETE_MARKER: &str = ".INCOMPLETE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Eval => "eval",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub eval: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, val: 0.1, eval: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterRanges {
    pub max_dx: f64,
    pub max_dy: f64,
    pub max_brightness: f64,
    pub contrast_lo: f64,
    pub contrast_hi: f64,
    pub max_noise_amp: f64,
}

impl Default for JitterRanges {
    fn default() -> Self {
        JitterRanges {
            max_dx: 4.0,
            max_dy: 4.0,
            max_brightness: 0.06,
            contrast_lo: 0.9,
            contrast_hi: 1.1,
            max_noise_amp: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Number of sampled recipes; each yields `views_per_recipe` records.
    pub sample_count: usize,
    pub seed: u64,
    pub jitter: JitterRanges,
    pub splits: SplitFractions,
    pub views_per_recipe: usize,
    pub out_dir: PathBuf,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            sample_count: 5000,
            seed: 7,
            jitter: JitterRanges::default(),
            splits: SplitFractions::default(),
            views_per_recipe: 1,
            out_dir: PathBuf::from("f2p_out/dataset"),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 10 {
            return Err(Error::InvalidConfig(format!(
                "sample_count {} < 10",
                self.sample_count
            )));
        }
        if self.views_per_recipe == 0 {
            return Err(Error::InvalidConfig("views_per_recipe must be >= 1".into()));
        }
        let s = &self.splits;
        if s.train <= 0.0 || s.val <= 0.0 || s.eval <= 0.0 {
            return Err(Error::InvalidConfig("split fractions must be positive".into()));
        }
        if (s.train + s.val + s.eval - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {}, expected 1",
                s.train + s.val + s.eval
            )));
        }
        let j = &self.jitter;
        if j.max_dx > MAX_JITTER || j.max_dy > MAX_JITTER || j.max_dx < 0.0 || j.max_dy < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "jitter range exceeds renderer bound of {MAX_JITTER} px"
            )));
        }
        if j.contrast_lo <= 0.0 || j.contrast_hi < j.contrast_lo {
            return Err(Error::InvalidConfig("bad contrast range".into()));
        }
        if j.max_noise_amp < 0.0 || j.max_noise_amp > 0.2 {
            return Err(Error::InvalidConfig("noise amplitude outside [0, 0.2]".into()));
        }
        if j.max_brightness < 0.0 || j.max_brightness > 0.5 {
            return Err(Error::InvalidConfig("brightness range outside [0, 0.5]".into()));
        }
        Ok(())
    }

    /// Exact split sizes: train and val floor, eval absorbs the remainder.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.sample_count;
        let n_train = (self.splits.train * n as f64).floor() as usize;
        let n_val = (self.splits.val * n as f64).floor() as usize;
        (n_train, n_val, n - n_train - n_val)
    }
}

/// One training example. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub split: Split,
    pub recipe: Recipe,
    pub target: Vec<f64>,
    pub view: ViewParams,
    pub image_path: String,
    pub mask_paths: BTreeMap<Region, String>,
    pub crop_paths: BTreeMap<Region, String>,
    pub crop_boxes: BTreeMap<Region, PixelRect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub config: DatasetConfig,
    pub schema_fingerprint: String,
    pub record_count: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.records_in(split).count()
    }

    pub fn load_image(&self, record: &SampleRecord) -> Result<Image> {
        Image::load_png(&self.root.join(&record.image_path))
    }

    pub fn load_crop(&self, record: &SampleRecord, region: Region) -> Result<Image> {
        Image::load_png(&self.root.join(&record.crop_paths[&region]))
    }
}

/// Uniform draw over the full parameter space; scale is pinned to 0.
pub fn sample_recipe<R: Rng>(rng: &mut R, schema: &FaceSchema) -> Recipe {
    let mut recipe = Recipe::zero(schema);
    for rs in &schema.regions {
        let values = recipe.continuous.get_mut(&rs.region).expect("region");
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
    recipe.scale = 0.0;
    recipe
}

fn sample_view<R: Rng>(rng: &mut R, jitter: &JitterRanges) -> ViewParams {
    ViewParams {
        dx: rng.random_range(-jitter.max_dx..=jitter.max_dx),
        dy: rng.random_range(-jitter.max_dy..=jitter.max_dy),
        brightness: rng.random_range(-jitter.max_brightness..=jitter.max_brightness),
        contrast: rng.random_range(jitter.contrast_lo..=jitter.contrast_hi),
        noise_amp: rng.random_range(0.0..=jitter.max_noise_amp),
        noise_seed: rng.random::<u64>(),
    }
}

/// Deterministic exact partition: recipe indices are shuffled with a
/// dedicated RNG stream and cut at the configured fractions, so every view
/// of a recipe lands in the same split.
fn assign_splits(config: &DatasetConfig) -> Vec<Split> {
    let n = config.sample_count;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (n_train, n_val, _) = config.split_counts();
    let mut splits = vec![Split::Eval; n];
    for (rank, recipe_idx) in order.into_iter().enumerate() {
        splits[recipe_idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Eval
        };
    }
    splits
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Render and persist the whole corpus. A partial-output marker guards the
/// directory while writing; any I/O failure leaves it in place so readers
/// reject the corpus.
pub fn generate_dataset(config: &DatasetConfig, schema: &FaceSchema) -> Result<DatasetManifest> {
    config.validate()?;
    schema.validate()?;
    let root = config.out_dir.clone();
    for sub in ["", "img", "mask", "crop"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let marker = root.join(INCOMPLETE_MARKER);
    write_file(&marker, b"generation in progress\n")?;

    let splits = assign_splits(config);
    let fingerprint = schema.fingerprint();
    let views = config.views_per_recipe;

    let per_recipe: Vec<Result<Vec<SampleRecord>>> = (0..config.sample_count)
        .into_par_iter()
        .map(|recipe_idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + recipe_idx as u64);
            let recipe = sample_recipe(&mut rng, schema);
            let target = encode_recipe(&recipe, schema)?;
            let mut records = Vec::with_capacity(views);
            for view_idx in 0..views {
                let view = sample_view(&mut rng, &config.jitter);
                let output = render(&recipe, &view, schema)?;
                let id = format!("{:06}", recipe_idx * views + view_idx);
                let image_path = format!("img/{id}.png");
                output.image.save_png(&root.join(&image_path))?;
                let mut mask_paths = BTreeMap::new();
                let mut crop_paths = BTreeMap::new();
                for region in Region::ALL {
                    let mask_path = format!("mask/{id}_{region}.png");
                    output.masks[&region].save_png(&root.join(&mask_path))?;
                    mask_paths.insert(region, mask_path);
                    let crop_path = format!("crop/{id}_{region}.png");
                    crop_region(&output, region, CROP_SIZE).save_png(&root.join(&crop_path))?;
                    crop_paths.insert(region, crop_path);
                }
                records.push(SampleRecord {
                    id,
                    split: splits[recipe_idx],
                    recipe: recipe.clone(),
                    target: target.values.clone(),
                    view,
                    image_path,
                    mask_paths,
                    crop_paths,
                    crop_boxes: output.crop_boxes.clone(),
                });
            }
            Ok(records)
        })
        .collect();

    let mut records = Vec::with_capacity(config.sample_count * views);
    for chunk in per_recipe {
        records.extend(chunk?);
    }

    let header = ManifestHeader {
        config: config.clone(),
        schema_fingerprint: fingerprint,
        record_count: records.len(),
    };
    let manifest_path = root.join(MANIFEST_FILE);
    let mut buf = Vec::new();
    serde_json::to_writer(&mut buf, &header)?;
    buf.push(b'\n');
    for record in &records {
        serde_json::to_writer(&mut buf, record)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(&manifest_path, e))?;
    file.sync_all().map_err(|e| Error::io(&manifest_path, e))?;

    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(DatasetManifest { header, records, root })
}

/// Load and validate a corpus: rejects incomplete output, schema drift, and
/// missing files.
pub fn load_dataset(root: &Path, schema: &FaceSchema) -> Result<DatasetManifest> {
    let marker = root.join(INCOMPLETE_MARKER);
    if marker.exists() {
        return Err(Error::IncompleteDataset(root.to_path_buf()));
    }
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("manifest is empty".into()))?;
    let header: ManifestHeader = serde_json::from_str(header_line)?;
    let expected = schema.fingerprint();
    if header.schema_fingerprint != expected {
        return Err(Error::FingerprintMismatch {
            found: header.schema_fingerprint,
            expected,
        });
    }
    let mut records = Vec::with_capacity(header.record_count);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<SampleRecord>(line)?);
    }
    if records.len() != header.record_count {
        return Err(Error::InvalidConfig(format!(
            "manifest declares {} records but contains {}",
            header.record_count,
            records.len()
        )));
    }
    for record in &records {
        let mut paths: Vec<&String> = vec![&record.image_path];
        paths.extend(record.mask_paths.values());
        paths.extend(record.crop_paths.values());
        for rel in paths {
            let path = root.join(rel);
            if !path.exists() {
                return Err(Error::MissingFile {
                    id: record.id.clone(),
                    path,
                });
            }
        }
    }
    Ok(DatasetManifest {
        header,
        records,
        root: root.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facegen::default_schema;

    fn tiny_config(dir: &Path) -> DatasetConfig {
        DatasetConfig {
            sample_count: 20,
            seed: 11,
            out_dir: dir.to_path_buf(),
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn sampled_recipes_pin_scale_and_repeat_under_seed() {
        let schema = default_schema();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let ra = sample_recipe(&mut a, &schema);
            let rb = sample_recipe(&mut b, &schema);
            assert_eq!(ra, rb);
            assert_eq!(ra.scale, 0.0);
            ra.validate(&schema).unwrap();
        }
    }

    #[test]
    fn discrete_frequencies_are_roughly_uniform() {
        let schema = default_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mut counts: BTreeMap<Region, Vec<usize>> = Region::ALL
            .iter()
            .map(|r| (*r, vec![0usize; schema.region(*r).discrete_option_count]))
            .collect();
        for _ in 0..n {
            let recipe = sample_recipe(&mut rng, &schema);
            for region in Region::ALL {
                counts.get_mut(&region).unwrap()[recipe.discrete[&region]] += 1;
            }
        }
        for region in Region::ALL {
            let k = schema.region(region).discrete_option_count as f64;
            for c in &counts[&region] {
                let freq = *c as f64 / n as f64;
                assert!(
                    (freq - 1.0 / k).abs() < 0.05,
                    "{region} option frequency {freq} too far from {}",
                    1.0 / k
                );
            }
        }
    }

    #[test]
    fn split_partition_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.sample_count = 100;
        let schema = default_schema();
        let manifest = generate_dataset(&config, &schema).unwrap();
        assert_eq!(manifest.split_len(Split::Train), 80);
        assert_eq!(manifest.split_len(Split::Val), 10);
        assert_eq!(manifest.split_len(Split::Eval), 10);
    }

    #[test]
    fn generation_is_byte_identical_across_runs() {
        let schema = default_schema();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_config(dir_a.path());
        let mut cfg_b = tiny_config(dir_b.path());
        // Same out_dir in the config echo so manifests can be compared bytewise.
        let shared = PathBuf::from("dataset");
        cfg_a.out_dir = dir_a.path().join(&shared);
        cfg_b.out_dir = dir_b.path().join(&shared);
        generate_dataset(&cfg_a, &schema).unwrap();
        generate_dataset(&cfg_b, &schema).unwrap();
        let norm = |root: &Path, text: String| text.replace(&root.to_string_lossy().to_string(), "");
        let ma = norm(
            dir_a.path(),
            std::fs::read_to_string(cfg_a.out_dir.join(MANIFEST_FILE)).unwrap(),
        );
        let mb = norm(
            dir_b.path(),
            std::fs::read_to_string(cfg_b.out_dir.join(MANIFEST_FILE)).unwrap(),
        );
        assert_eq!(ma, mb);
        let img_a = std::fs::read(cfg_a.out_dir.join("img/000003.png")).unwrap();
        let img_b = std::fs::read(cfg_b.out_dir.join("img/000003.png")).unwrap();
        assert_eq!(img_a, img_b);
    }

    #[test]
    fn stored_targets_match_reencoding() {
        let schema = default_schema();
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let manifest = generate_dataset(&config, &schema).unwrap();
        for record in &manifest.records {
            let tv = encode_recipe(&record.recipe, &schema).unwrap();
            assert_eq!(tv.values, record.target, "record {}", record.id);
        }
    }

    #[test]
    fn load_roundtrip_and_validation_errors() {
        let schema = default_schema();
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let generated = generate_dataset(&config, &schema).unwrap();
        let loaded = load_dataset(dir.path(), &schema).unwrap();
        assert_eq!(loaded.records, generated.records);
        assert_eq!(loaded.header, generated.header);

        // Fingerprint drift is rejected.
        let mut drifted = default_schema();
        drifted.regions[0].discrete_option_count = 4;
        assert!(matches!(
            load_dataset(dir.path(), &drifted),
            Err(Error::FingerprintMismatch { .. })
        ));

        // Missing file names the sample.
        let victim = dir.path().join(&generated.records[4].image_path);
        fs::remove_file(&victim).unwrap();
        match load_dataset(dir.path(), &schema) {
            Err(Error::MissingFile { id, .. }) => assert_eq!(id, generated.records[4].id),
            other => panic!("expected MissingFile, got {other:?}"),
        }

        // Incomplete marker blocks loading.
        write_file(&dir.path().join(INCOMPLETE_MARKER), b"x").unwrap();
        assert!(matches!(
            load_dataset(dir.path(), &schema),
            Err(Error::IncompleteDataset(_))
        ));
    }
}
