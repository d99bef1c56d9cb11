//! Count-level stand-ins for the expression training set: manifests whose
//! per-class sizes follow the published distribution, split into runs so
//! that thinning reproduces the published rebalanced counts.

use std::collections::BTreeMap;

use super::{DatasetManifest, Expression, SampleRecord, Source, NUM_CLASSES};

/// Training images per class before rebalancing.
pub const ORIGINAL_TRAIN_COUNTS: [usize; NUM_CLASSES] = [25634, 11490, 19279, 171902, 102934, 43306, 546039];
pub const ORIGINAL_TRAIN_TOTAL: usize = 920584;

/// Per-class counts after thinning neutral and happy.
pub const UNDERSAMPLED_COUNTS: [usize; NUM_CLASSES] = [25634, 11490, 19279, 86164, 102934, 43306, 46073];
/// External images added per class.
pub const EXTERNAL_COUNTS: [usize; NUM_CLASSES] = [24242, 5062, 6192, 0, 0, 0, 0];
pub const REBALANCED_TOTAL: usize = 370376;

pub const K_NEUTRAL: usize = 12;
pub const K_HAPPY: usize = 2;

/// Thinning factors: every 12th neutral frame, every 2nd happy frame.
pub fn default_k_by_class() -> BTreeMap<usize, usize> {
    BTreeMap::from([
        (Expression::Neutral.label(), K_NEUTRAL),
        (Expression::Happiness.label(), K_HAPPY),
    ])
}

pub fn default_quotas() -> BTreeMap<usize, usize> {
    EXTERNAL_COUNTS
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0)
        .map(|(c, &q)| (c, q))
        .collect()
}

/// Frames kept from one run of `len` frames when keeping every `k`-th.
pub fn retained_per_run(len: usize, k: usize) -> usize {
    len.div_ceil(k)
}

/// Run lengths summing to `total` whose thinning by `k` keeps exactly
/// `target` frames: some single-frame runs plus one long run.
pub fn partition_for_target(total: usize, k: usize, target: usize) -> Option<Vec<usize>> {
    if k == 0 {
        return None;
    }
    // kept(singles) = singles + ceil((total - singles) / k) rises by 0 or 1 per extra single
    let kept = |singles: usize| singles + retained_per_run(total - singles, k);
    let singles = (0..=total).find(|&s| kept(s) == target)?;
    let mut runs = vec![1; singles];
    if total > singles {
        runs.push(total - singles);
    }
    Some(runs)
}

fn record(sequence_id: String, frame_index: u64, label: usize, source: Source) -> SampleRecord {
    SampleRecord {
        image_path: format!("{sequence_id}/{frame_index}.ppm"),
        sequence_id,
        frame_index,
        label,
        source,
    }
}

/// Builds a manifest with one sequence per run.
pub fn manifest_from_runs(runs_by_class: &[(usize, Vec<usize>)]) -> DatasetManifest {
    let mut records = Vec::new();
    for (label, runs) in runs_by_class {
        for (r, &len) in runs.iter().enumerate() {
            let seq = format!("c{label}r{r}");
            records.extend((0..len as u64).map(|f| record(seq.clone(), f, *label, Source::Primary)));
        }
    }
    DatasetManifest { records }
}

/// The base training manifest and an external supplement sized so the
/// default rebalance yields the published per-class counts.
pub fn published_fixture() -> (DatasetManifest, DatasetManifest) {
    let ks = default_k_by_class();
    let runs: Vec<(usize, Vec<usize>)> = (0..NUM_CLASSES)
        .map(|c| {
            let total = ORIGINAL_TRAIN_COUNTS[c];
            let runs = match ks.get(&c) {
                Some(&k) => partition_for_target(total, k, UNDERSAMPLED_COUNTS[c]).expect("target reachable"),
                None => vec![total],
            };
            (c, runs)
        })
        .collect();
    let base = manifest_from_runs(&runs);

    let mut supplement = Vec::new();
    for (c, &n) in EXTERNAL_COUNTS.iter().enumerate() {
        for i in 0..n {
            // disgust draws from both external sets
            let source = if c == Expression::Disgust.label() && i >= n / 2 {
                Source::ExternalB
            } else {
                Source::ExternalA
            };
            supplement.push(record(format!("x{c}s{i}"), 0, c, source));
        }
    }
    (base, DatasetManifest { records: supplement })
}
