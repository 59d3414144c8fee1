//! Seeded train/valid/test partitioning of a dataset manifest.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, IngestError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// What gets shuffled and partitioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitUnit {
    #[default]
    Instance,
    /// Whole subjects/recordings stay in one split.
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub ratios: [f64; 3],
    pub seed: u64,
    /// Partition every class separately so each split mirrors the class mix.
    pub stratify: bool,
    pub unit: SplitUnit,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            ratios: [0.6, 0.2, 0.2],
            seed: 0,
            stratify: false,
            unit: SplitUnit::Instance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub stratify: bool,
    pub unit: SplitUnit,
    /// Checksum of the dataset this split was drawn from.
    pub dataset_checksum: String,
    pub assignment: BTreeMap<String, Split>,
}

impl SplitManifest {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignment.get(id).copied()
    }

    pub fn sizes(&self) -> [usize; 3] {
        let mut s = [0; 3];
        for split in self.assignment.values() {
            s[split.index()] += 1;
        }
        s
    }

    /// Ids of `split`, in manifest order.
    pub fn ids_in<'a>(&self, manifest: &'a DatasetManifest, split: Split) -> Vec<&'a str> {
        manifest
            .instances
            .iter()
            .filter(|r| self.get(&r.id) == Some(split))
            .map(|r| r.id.as_str())
            .collect()
    }
}

/// Sizes of the three parts for `n` items: train and valid rounded to
/// nearest, test takes the remainder, so each part is within one item of its
/// requested share.
pub fn partition_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let train = ((ratios[0] * n as f64).round() as usize).min(n);
    let valid = ((ratios[1] * n as f64).round() as usize).min(n - train);
    [train, valid, n - train - valid]
}

fn check_ratios(ratios: [f64; 3]) -> Result<(), IngestError> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(IngestError::InvalidSplit(format!(
            "ratios must be positive, got {ratios:?}"
        )));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(IngestError::InvalidSplit(format!(
            "ratios must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

fn assign_contiguous(
    items: &[usize],
    ratios: [f64; 3],
    out: &mut Vec<(usize, Split)>,
) {
    let [train, valid, _] = partition_sizes(items.len(), ratios);
    for (pos, &item) in items.iter().enumerate() {
        let split = if pos < train {
            Split::Train
        } else if pos < train + valid {
            Split::Valid
        } else {
            Split::Test
        };
        out.push((item, split));
    }
}

/// Shuffle with a seeded ChaCha stream, then cut into contiguous parts.
pub fn split_dataset(
    manifest: &DatasetManifest,
    options: &SplitOptions,
) -> Result<SplitManifest, IngestError> {
    check_ratios(options.ratios)?;
    let n = manifest.len();
    if n < 3 {
        return Err(IngestError::InvalidSplit(format!(
            "need at least 3 instances, have {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut by_index: Vec<(usize, Split)> = Vec::with_capacity(n);

    match options.unit {
        SplitUnit::Instance if options.stratify => {
            let mut strata = vec![Vec::new(); manifest.class_count().max(1)];
            let last = strata.len() - 1;
            for (i, r) in manifest.instances.iter().enumerate() {
                strata[r.label.min(last)].push(i);
            }
            // Interleave the shuffled classes by relative rank so that any
            // contiguous cut takes the same share of every class.
            let mut ranked: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
            for (class, stratum) in strata.iter_mut().enumerate() {
                stratum.shuffle(&mut rng);
                let len = stratum.len() as f64;
                ranked.extend(
                    stratum
                        .iter()
                        .enumerate()
                        .map(|(pos, &i)| ((pos as f64 + 0.5) / len, class, i)),
                );
            }
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let order: Vec<usize> = ranked.into_iter().map(|(_, _, i)| i).collect();
            assign_contiguous(&order, options.ratios, &mut by_index);
        }
        SplitUnit::Instance => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            assign_contiguous(&order, options.ratios, &mut by_index);
        }
        SplitUnit::Group => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, r) in manifest.instances.iter().enumerate() {
                let g = r.group.as_deref().ok_or_else(|| {
                    IngestError::InvalidSplit(format!("instance {} has no group", r.id))
                })?;
                groups.entry(g).or_default().push(i);
            }
            let mut order: Vec<Vec<usize>> = groups.into_values().collect();
            order.shuffle(&mut rng);
            // Whole groups are added to a part until its instance quota is reached.
            let [train, valid, _] = partition_sizes(n, options.ratios);
            let mut filled = 0;
            for group in order {
                let split = if filled < train {
                    Split::Train
                } else if filled < train + valid {
                    Split::Valid
                } else {
                    Split::Test
                };
                filled += group.len();
                by_index.extend(group.into_iter().map(|i| (i, split)));
            }
        }
    }

    let assignment = by_index
        .into_iter()
        .map(|(i, s)| (manifest.instances[i].id.clone(), s))
        .collect();
    Ok(SplitManifest {
        seed: options.seed,
        ratios: options.ratios,
        stratify: options.stratify,
        unit: options.unit,
        dataset_checksum: manifest.checksum.clone(),
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::InstanceRecord;
    use proptest::prelude::*;

    fn manifest(n: usize, classes: usize) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            class_names: (0..classes).map(|c| c.to_string()).collect(),
            channels: 1,
            length: 1,
            checksum: "abc".into(),
            instances: (0..n)
                .map(|i| InstanceRecord {
                    id: format!("i{i:06}"),
                    source: "s".into(),
                    offset: i as u64,
                    label: i % classes,
                    group: Some(format!("g{}", i / 7)),
                })
                .collect(),
        }
    }

    #[test]
    fn ten_items_split_six_two_two() {
        for seed in 0..5 {
            let s = split_dataset(&manifest(10, 2), &SplitOptions { seed, ..Default::default() })
                .unwrap();
            assert_eq!(s.sizes(), [6, 2, 2]);
        }
    }

    #[test]
    fn seizure_scale_sizes() {
        assert_eq!(partition_sizes(11500, [0.6, 0.2, 0.2]), [6900, 2300, 2300]);
        assert_eq!(partition_sizes(7352, [0.6, 0.2, 0.2]), [4411, 1470, 1471]);
    }

    #[test]
    fn same_seed_same_assignment() {
        let m = manifest(200, 3);
        let opts = SplitOptions { seed: 42, ..Default::default() };
        assert_eq!(split_dataset(&m, &opts).unwrap(), split_dataset(&m, &opts).unwrap());
        let other = SplitOptions { seed: 43, ..Default::default() };
        assert_ne!(
            split_dataset(&m, &opts).unwrap().assignment,
            split_dataset(&m, &other).unwrap().assignment
        );
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(split_dataset(&manifest(2, 1), &SplitOptions::default()).is_err());
        let bad = SplitOptions { ratios: [0.5, 0.2, 0.2], ..Default::default() };
        assert!(split_dataset(&manifest(10, 1), &bad).is_err());
        let neg = SplitOptions { ratios: [1.2, -0.1, -0.1], ..Default::default() };
        assert!(split_dataset(&manifest(10, 1), &neg).is_err());
    }

    #[test]
    fn stratified_split_mirrors_classes() {
        let m = manifest(600, 3);
        let s = split_dataset(&m, &SplitOptions { stratify: true, ..Default::default() }).unwrap();
        for split in Split::ALL {
            let ids = s.ids_in(&m, split);
            let mut counts = [0usize; 3];
            for r in m.instances.iter().filter(|r| ids.contains(&r.id.as_str())) {
                counts[r.label] += 1;
            }
            assert!(counts.iter().all(|&c| c == counts[0]), "{split}: {counts:?}");
        }
    }

    #[test]
    fn unstratified_split_stays_near_global_mix() {
        let m = manifest(900, 3);
        let s = split_dataset(&m, &SplitOptions { seed: 9, ..Default::default() }).unwrap();
        for split in Split::ALL {
            let ids = s.ids_in(&m, split);
            let n = ids.len() as f64;
            for class in 0..3 {
                let c = m
                    .instances
                    .iter()
                    .filter(|r| r.label == class && s.get(&r.id) == Some(split))
                    .count() as f64;
                assert!((c / n - 1.0 / 3.0).abs() < 0.05, "{split} class {class}");
            }
        }
    }

    #[test]
    fn group_split_keeps_groups_together() {
        let m = manifest(140, 2);
        let s = split_dataset(&m, &SplitOptions { unit: SplitUnit::Group, ..Default::default() })
            .unwrap();
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for r in &m.instances {
            let split = s.get(&r.id).unwrap();
            let g = r.group.as_deref().unwrap();
            assert_eq!(*seen.entry(g).or_insert(split), split);
        }
        assert_eq!(s.sizes().iter().sum::<usize>(), 140);
    }

    proptest! {
        #[test]
        fn sizes_within_one_item(n in 3usize..5000, a in 1u32..100, b in 1u32..100, c in 1u32..100) {
            let total = (a + b + c) as f64;
            let ratios = [a as f64 / total, b as f64 / total, 1.0 - a as f64 / total - b as f64 / total];
            prop_assume!(ratios[2] > 0.0);
            let sizes = partition_sizes(n, ratios);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            for k in 0..3 {
                prop_assert!((sizes[k] as f64 / n as f64 - ratios[k]).abs() <= 1.0 / n as f64 + 1e-12);
            }
        }
    }
}
