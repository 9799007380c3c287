use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::f1_of;
use crate::featurize::FeatureGroup;
use crate::learn::{Dataset, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_drop: f64,
    pub sd: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_f1: f64,
    pub repetitions: usize,
    /// Sorted by rank.
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "mean_drop", "sd", "rank"])
            .expect("in-memory csv write");
        for e in &self.entries {
            w.write_record([
                e.feature.clone(),
                e.mean_drop.to_string(),
                e.sd.to_string(),
                e.rank.to_string(),
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.rank)
    }
}

fn class_f1(model: &TrainedModel, data: &Dataset, x: &crate::matrix::Matrix) -> f64 {
    let classes = model.predict_proba(x).into_iter().map(|p| (p >= 0.5) as u8);
    f1_of(classes, &data.y)
}

/// Mean drop in anomalous-class F1 when a feature group's columns are
/// row-permuted together. Repetition `r` of group `g` draws its permutation
/// from stream `g * R + r` of a seeded ChaCha generator.
pub fn permutation_importance(
    model: &TrainedModel,
    data: &Dataset,
    groups: &[FeatureGroup],
    repetitions: usize,
    seed: u64,
) -> ImportanceReport {
    let baseline = class_f1(model, data, &data.x);
    let n = data.len();
    let reps = repetitions.max(1);
    let mut entries: Vec<ImportanceEntry> = groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let drops: Vec<f64> = (0..reps)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream((g * reps + r) as u64);
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng);
                    let mut x = data.x.clone();
                    for (i, &src) in perm.iter().enumerate() {
                        for c in group.columns() {
                            x.set(i, c, data.x.get(src, c));
                        }
                    }
                    baseline - class_f1(model, data, &x)
                })
                .collect();
            let mean = drops.iter().sum::<f64>() / reps as f64;
            let sd = if reps > 1 {
                (drops.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (reps - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            ImportanceEntry {
                feature: group.name.clone(),
                mean_drop: mean,
                sd,
                rank: 0,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));
    for (k, e) in entries.iter_mut().enumerate() {
        e.rank = k + 1;
    }
    ImportanceReport {
        baseline_f1: baseline,
        repetitions: reps,
        entries,
    }
}
