//! Dataset manifests, class rebalancing, images and their train/test
//! transforms.

pub mod fixture;
mod image;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub use image::{
    augment_train, center_crop, crop, flip_horizontal, load_image, random_crop_flip, reflect_pad, save_image,
    ten_crop, to_tensor, CropDraw, Image, Normalization,
};

pub const NUM_CLASSES: usize = 7;

/// The seven basic expressions, encoded 0..6 in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expression {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Neutral,
}

impl Expression {
    pub const ALL: [Expression; NUM_CLASSES] = [
        Expression::Anger,
        Expression::Disgust,
        Expression::Fear,
        Expression::Happiness,
        Expression::Sadness,
        Expression::Surprise,
        Expression::Neutral,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Expression::ALL.get(label).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Anger => "anger",
            Expression::Disgust => "disgust",
            Expression::Fear => "fear",
            Expression::Happiness => "happy",
            Expression::Sadness => "sad",
            Expression::Surprise => "surprise",
            Expression::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Ok(n) = lower.parse::<usize>() {
            return Expression::from_label(n)
                .ok_or_else(|| Error::invalid("expression", format!("label {n} out of range")));
        }
        Ok(match lower.as_str() {
            "anger" | "angry" => Expression::Anger,
            "disgust" => Expression::Disgust,
            "fear" => Expression::Fear,
            "happy" | "happiness" => Expression::Happiness,
            "sad" | "sadness" => Expression::Sadness,
            "surprise" => Expression::Surprise,
            "neutral" => Expression::Neutral,
            _ => return Err(Error::invalid("expression", format!("unknown class {s:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Primary,
    ExternalA,
    ExternalB,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sequence_id: String,
    pub frame_index: u64,
    pub image_path: String,
    pub label: usize,
    pub source: Source,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<SampleRecord>,
}

pub const MANIFEST_HEADER: [&str; 5] = ["sequence_id", "frame_index", "image_path", "label", "source"];

impl DatasetManifest {
    /// Validates labels and `(sequence_id, frame_index)` uniqueness.
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.label >= NUM_CLASSES {
                return Err(Error::invalid("manifest", format!("record {i}: label {} out of range", r.label)));
            }
            if !seen.insert((r.sequence_id.as_str(), r.frame_index)) {
                return Err(Error::invalid(
                    "manifest",
                    format!("record {i}: duplicate ({}, {})", r.sequence_id, r.frame_index),
                ));
            }
        }
        Ok(DatasetManifest { records })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for r in &self.records {
            w.serialize(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid("manifest", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid("manifest", e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid("manifest", e.to_string())
}

/// Parses a manifest CSV with header `sequence_id,frame_index,image_path,label,source`.
pub fn parse_manifest(csv_text: &str) -> Result<DatasetManifest> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
        .clone();
    if headers.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {:?}, got {:?}", MANIFEST_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut records = Vec::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let rec: SampleRecord = row
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.label >= NUM_CLASSES {
            return Err(Error::Parse {
                line,
                msg: format!("label {} out of range [0, {NUM_CLASSES})", rec.label),
            });
        }
        if !seen.insert((rec.sequence_id.clone(), rec.frame_index)) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate (sequence_id, frame_index) = ({}, {})", rec.sequence_id, rec.frame_index),
            });
        }
        records.push(rec);
    }
    Ok(DatasetManifest { records })
}

/// Keeps every `k`-th frame of each run, starting at the run's first frame.
///
/// A run is a maximal span of consecutive frame indices sharing
/// `(sequence_id, label)`. Classes missing from `k_by_class` keep every
/// frame. Surviving records stay in manifest order.
pub fn undersample_sequences(manifest: &DatasetManifest, k_by_class: &BTreeMap<usize, usize>) -> Result<DatasetManifest> {
    for (&label, &k) in k_by_class {
        if k == 0 {
            return Err(Error::invalid("undersample_sequences", format!("k for class {label} must be at least 1")));
        }
    }
    let mut groups: HashMap<(&str, usize), Vec<u64>> = HashMap::new();
    for r in &manifest.records {
        if k_by_class.get(&r.label).is_some_and(|&k| k > 1) {
            groups.entry((&r.sequence_id, r.label)).or_default().push(r.frame_index);
        }
    }
    let mut keep: HashSet<(&str, u64)> = HashSet::new();
    for ((seq, label), mut frames) in groups {
        let k = k_by_class[&label] as u64;
        frames.sort_unstable();
        let mut run_start = frames[0];
        let mut prev = frames[0];
        for &f in &frames {
            if f != prev + 1 && f != run_start {
                run_start = f;
            }
            if (f - run_start) % k == 0 {
                keep.insert((seq, f));
            }
            prev = f;
        }
    }
    let records = manifest
        .records
        .iter()
        .filter(|r| {
            !k_by_class.get(&r.label).is_some_and(|&k| k > 1) || keep.contains(&(r.sequence_id.as_str(), r.frame_index))
        })
        .cloned()
        .collect();
    Ok(DatasetManifest { records })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QuotaOutcome {
    pub requested: usize,
    pub added: usize,
    pub shortfall: usize,
}

/// Appends up to `quota_by_class[c]` supplement records of each class, in
/// supplement order. Base records are never altered.
pub fn merge_external(
    base: &DatasetManifest,
    supplement: &DatasetManifest,
    quota_by_class: &BTreeMap<usize, usize>,
) -> Result<(DatasetManifest, BTreeMap<usize, QuotaOutcome>)> {
    let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
    let mut records = base.records.clone();
    let mut seen: HashSet<(String, u64)> = base.records.iter().map(|r| (r.sequence_id.clone(), r.frame_index)).collect();
    for r in &supplement.records {
        let quota = quota_by_class.get(&r.label).copied().unwrap_or(0);
        let count = taken.entry(r.label).or_default();
        if *count >= quota {
            continue;
        }
        if r.source == Source::Primary {
            return Err(Error::invalid(
                "merge_external",
                format!("supplement record ({}, {}) is tagged primary", r.sequence_id, r.frame_index),
            ));
        }
        if !seen.insert((r.sequence_id.clone(), r.frame_index)) {
            return Err(Error::invalid(
                "merge_external",
                format!("supplement record ({}, {}) collides with an existing record", r.sequence_id, r.frame_index),
            ));
        }
        records.push(r.clone());
        *count += 1;
    }
    let outcomes = quota_by_class
        .iter()
        .map(|(&label, &requested)| {
            let added = taken.get(&label).copied().unwrap_or(0);
            (label, QuotaOutcome { requested, added, shortfall: requested - added })
        })
        .collect();
    Ok((DatasetManifest { records }, outcomes))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub before: usize,
    pub removed: usize,
    pub added: usize,
    pub after: usize,
}

/// Per-class bookkeeping of a rebalance, serialized as
/// `{class: {before, removed, added, after}}` in label order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RebalanceReport {
    pub classes: [ClassCounts; NUM_CLASSES],
    pub shortfall: BTreeMap<usize, usize>,
}

impl RebalanceReport {
    pub fn total_after(&self) -> usize {
        self.classes.iter().map(|c| c.after).sum()
    }
}

impl Serialize for RebalanceReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(NUM_CLASSES))?;
        for (e, c) in Expression::ALL.iter().zip(&self.classes) {
            map.serialize_entry(e.name(), c)?;
        }
        map.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RebalanceOutcome {
    pub manifest: DatasetManifest,
    pub report: RebalanceReport,
}

/// Undersampling followed by external supplementation.
pub fn rebalance(
    manifest: &DatasetManifest,
    k_by_class: &BTreeMap<usize, usize>,
    supplement: &DatasetManifest,
    quota_by_class: &BTreeMap<usize, usize>,
) -> Result<RebalanceOutcome> {
    let before = manifest.class_counts();
    let thinned = undersample_sequences(manifest, k_by_class)?;
    let mid = thinned.class_counts();
    let (merged, outcomes) = merge_external(&thinned, supplement, quota_by_class)?;
    let after = merged.class_counts();
    let mut classes = [ClassCounts::default(); NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        classes[c] = ClassCounts {
            before: before[c],
            removed: before[c] - mid[c],
            added: after[c] - mid[c],
            after: after[c],
        };
    }
    let shortfall = outcomes
        .into_iter()
        .filter(|(_, o)| o.shortfall > 0)
        .map(|(c, o)| (c, o.shortfall))
        .collect();
    Ok(RebalanceOutcome {
        manifest: merged,
        report: RebalanceReport { classes, shortfall },
    })
}
