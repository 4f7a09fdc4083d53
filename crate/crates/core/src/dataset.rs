//! Image manifests: building from a class-per-directory layout, CSV I/O,
//! validation, area-based auto-labelling and seeded stratified splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imgcore::read_image;
use crate::rng::XorShift64Star;
use crate::sizing::{
    classify_area, measure_image, MeasureConfig, PixelScale, SizeClass, SizeThresholds,
};
use crate::{Error, Result};

/// Height label for records whose capture height is unknown or mixed.
pub const ANY_HEIGHT: &str = "any";

/// Image file extensions picked up when scanning a directory tree.
pub const IMAGE_EXTENSIONS: [&str; 2] = ["png", "pgm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_path: String,
    pub label: String,
    pub height_label: String,
    pub area_mm2: Option<f64>,
}

impl ManifestRecord {
    pub fn new(image_path: impl Into<String>, label: impl Into<String>) -> Self {
        ManifestRecord {
            image_path: image_path.into(),
            label: label.into(),
            height_label: ANY_HEIGHT.to_string(),
            area_mm2: None,
        }
    }

    pub fn with_height(mut self, height_label: impl Into<String>) -> Self {
        self.height_label = height_label.into();
        self
    }
}

/// Labelled image list. `class_names` order is the canonical label index.
///
/// Duplicate paths are tolerated here so that [`validate_manifest`] can
/// report them; [`build_manifest`] never produces them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
    class_names: Vec<String>,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>, class_names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &class_names {
            if name.is_empty() {
                return Err(Error::Manifest("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Manifest(format!("class {name:?} listed twice")));
            }
        }
        for (i, r) in records.iter().enumerate() {
            if r.image_path.is_empty() {
                return Err(Error::Manifest(format!("record {i}: empty image path")));
            }
            if r.label.is_empty() {
                return Err(Error::Manifest(format!("record {i}: empty label")));
            }
            if !seen.contains(r.label.as_str()) {
                return Err(Error::UnknownLabel(r.label.clone()));
            }
        }
        Ok(DatasetManifest {
            records,
            class_names,
        })
    }

    /// Class names are the sorted distinct labels.
    pub fn from_records(records: Vec<ManifestRecord>) -> Result<Self> {
        let classes: BTreeSet<String> = records.iter().map(|r| r.label.clone()).collect();
        Self::new(records, classes.into_iter().collect())
    }

    pub fn empty() -> Self {
        DatasetManifest {
            records: Vec::new(),
            class_names: Vec::new(),
        }
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == label)
    }

    /// Record count per class, in class order.
    pub fn class_counts(&self) -> Vec<(String, usize)> {
        self.class_names
            .iter()
            .map(|c| {
                (
                    c.clone(),
                    self.records.iter().filter(|r| &r.label == c).count(),
                )
            })
            .collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["image_path", "label", "height_label", "area_mm2"]
        {
            return Err(Error::Manifest(format!(
                "expected header image_path,label,height_label,area_mm2, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let record: ManifestRecord = row?;
            records.push(record);
        }
        Self::from_records(records)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        wtr.write_record(["image_path", "label", "height_label", "area_mm2"])?;
        for r in &self.records {
            let area = r.area_mm2.map(|a| a.to_string()).unwrap_or_default();
            wtr.write_record([
                r.image_path.as_str(),
                r.label.as_str(),
                r.height_label.as_str(),
                area.as_str(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<manifest>", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Manifest from `(class directory, file names)` pairs. Paths are
/// `class/file`; class names are sorted. Empty classes are kept and
/// reported in the returned warnings.
pub fn build_manifest(listing: &[(String, Vec<String>)]) -> Result<(DatasetManifest, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut classes = BTreeSet::new();
    for (class, files) in listing {
        if !classes.insert(class.clone()) {
            return Err(Error::Manifest(format!(
                "class directory {class:?} listed twice"
            )));
        }
        if files.is_empty() {
            warnings.push(format!("class {class:?} has no images"));
        }
        for file in files {
            let path = format!("{class}/{file}");
            if !seen.insert(path.clone()) {
                return Err(Error::DuplicatePath(path));
            }
            records.push(ManifestRecord::new(path, class.clone()));
        }
    }
    let manifest = DatasetManifest::new(records, classes.into_iter().collect())?;
    Ok((manifest, warnings))
}

/// Lists `root/<class>/<image>` for every subdirectory, sorted by name.
pub fn scan_directory(root: impl AsRef<Path>) -> Result<Vec<(String, Vec<String>)>> {
    let root = root.as_ref();
    let mut listing = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let class = entry.file_name().to_string_lossy().into_owned();
        let mut files = Vec::new();
        for file in std::fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
            let file = file.map_err(|e| Error::io(&path, e))?.path();
            let is_image = file
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if file.is_file() && is_image {
                files.push(file.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
        files.sort();
        listing.push((class, files));
    }
    listing.sort();
    Ok(listing)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestSize {
    /// Exactly this many test records per class.
    Count(usize),
    /// `floor(fraction · n)` test records per class, fraction in (0, 1).
    Fraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_size: TestSize,
    pub seed: u64,
}

fn sort_records(records: &mut [ManifestRecord]) {
    records.sort_by(|a, b| {
        a.image_path
            .cmp(&b.image_path)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.height_label.cmp(&b.height_label))
            .then_with(|| {
                a.area_mm2
                    .partial_cmp(&b.area_mm2)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
}

/// Per-class train/test partition.
///
/// Classes are visited in lexicographic order with one generator seeded
/// from `spec.seed`. Within a class the records are sorted by path, shuffled
/// with Fisher–Yates, and the first `k` go to test. Both outputs keep the
/// input's class list and are sorted by path.
pub fn stratified_split(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if let TestSize::Fraction(f) = spec.test_size {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Split(format!("test fraction {f} not in (0, 1)")));
        }
    }
    let mut by_class: BTreeMap<&str, Vec<ManifestRecord>> = BTreeMap::new();
    for r in manifest.records() {
        by_class
            .entry(r.label.as_str())
            .or_default()
            .push(r.clone());
    }

    let mut rng = XorShift64Star::new(spec.seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut records) in by_class {
        let n = records.len();
        let k = match spec.test_size {
            TestSize::Count(k) => k,
            TestSize::Fraction(f) => (f * n as f64).floor() as usize,
        };
        if k > n {
            return Err(Error::SplitTooLarge {
                class: class.to_string(),
                requested: k,
                available: n,
            });
        }
        sort_records(&mut records);
        rng.shuffle(&mut records);
        let rest = records.split_off(k);
        test.extend(records);
        train.extend(rest);
    }
    // Requested count must also fit classes that have no records.
    if let TestSize::Count(k) = spec.test_size {
        if k > 0 {
            for (class, count) in manifest.class_counts() {
                if count == 0 {
                    return Err(Error::SplitTooLarge {
                        class,
                        requested: k,
                        available: 0,
                    });
                }
            }
        }
    }
    sort_records(&mut train);
    sort_records(&mut test);
    let classes = manifest.class_names().to_vec();
    Ok((
        DatasetManifest::new(train, classes.clone())?,
        DatasetManifest::new(test, classes)?,
    ))
}

/// Label string for a measured area.
pub fn auto_label(area_mm2: f64, thresholds: &SizeThresholds) -> Result<String> {
    Ok(classify_area(area_mm2, thresholds)?.to_string())
}

/// Measures every image of `manifest` (paths relative to `base_dir`) and
/// relabels it by size class. Each record's height label must match the
/// calibration's.
pub fn auto_label_manifest(
    manifest: &DatasetManifest,
    base_dir: &Path,
    scale: &PixelScale,
    config: &MeasureConfig,
) -> Result<DatasetManifest> {
    let mut records = Vec::with_capacity(manifest.len());
    for r in manifest.records() {
        scale.check_height(&r.height_label)?;
        let img = read_image(base_dir.join(&r.image_path))?;
        let m = measure_image(&img, scale, config)?;
        records.push(ManifestRecord {
            image_path: r.image_path.clone(),
            label: m.class.to_string(),
            height_label: r.height_label.clone(),
            area_mm2: Some(m.area_mm2),
        });
    }
    let mut classes: Vec<String> = SizeClass::ALL.iter().map(|c| c.to_string()).collect();
    classes.sort();
    DatasetManifest::new(records, classes)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub class_counts: Vec<(String, usize)>,
    pub missing_files: Vec<String>,
    pub duplicate_paths: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.missing_files.is_empty() && self.duplicate_paths.is_empty()
    }
}

/// Checks duplicates, per-class balance and height mixing, and (when
/// `base_dir` is given) that every image file exists.
pub fn validate_manifest(manifest: &DatasetManifest, base_dir: Option<&Path>) -> ValidationReport {
    let mut report = ValidationReport {
        class_counts: manifest.class_counts(),
        ..Default::default()
    };

    let mut seen = HashSet::new();
    let mut dups = BTreeSet::new();
    for r in manifest.records() {
        if !seen.insert(r.image_path.as_str()) {
            dups.insert(r.image_path.clone());
        }
    }
    report.duplicate_paths = dups.into_iter().collect();

    if let Some(base) = base_dir {
        let mut missing: Vec<String> = manifest
            .records()
            .iter()
            .filter(|r| !base.join(&r.image_path).is_file())
            .map(|r| r.image_path.clone())
            .collect();
        missing.sort();
        missing.dedup();
        report.missing_files = missing;
    }

    for (class, count) in &report.class_counts {
        if *count == 0 {
            report
                .warnings
                .push(format!("class {class:?} has no records"));
        }
        let heights: BTreeSet<&str> = manifest
            .records()
            .iter()
            .filter(|r| &r.label == class)
            .map(|r| r.height_label.as_str())
            .collect();
        if heights.len() > 1 {
            let list: Vec<&str> = heights.into_iter().collect();
            report.warnings.push(format!(
                "class {class:?} mixes height labels: {}",
                list.join(", ")
            ));
        }
    }
    let counts: BTreeSet<usize> = report.class_counts.iter().map(|(_, n)| *n).collect();
    if counts.len() > 1 {
        let desc: Vec<String> = report
            .class_counts
            .iter()
            .map(|(c, n)| format!("{c}={n}"))
            .collect();
        report
            .warnings
            .push(format!("class imbalance: {}", desc.join(", ")));
    }
    report
}
