use super::classification::{classify_with_table, FeatureTable};
use super::{ClassificationOptions, ClassificationReport, ExperimentError, REPORT_SCHEMA_VERSION};
use crate::dataset::{ChannelSet, Dataset, NECK_CHANNELS};
use crate::learn::{mean, t_interval, ForestConfig};
use crate::seed;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Neck electrodes ordered outward from the throat-center pair.
pub const CENTER_OUT_ORDER: [usize; 10] = [4, 5, 3, 6, 2, 7, 1, 8, 0, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AblationPolicy {
    CenterOut,
    /// `subsets` seeded random k-subsets per k, accuracies pooled.
    RandomSubsets { subsets: usize },
}

impl std::str::FromStr for AblationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "center_out" | "center-out" => Ok(AblationPolicy::CenterOut),
            "random_subsets" | "random-subsets" | "random" => Ok(AblationPolicy::RandomSubsets { subsets: 5 }),
            other => Err(format!("unknown ablation policy '{other}' (expected center_out or random_subsets)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub policy: AblationPolicy,
    /// Keyed by electrode count k.
    pub per_k: BTreeMap<usize, ClassificationReport>,
    /// The channel subsets evaluated at each k.
    pub subsets: BTreeMap<usize, Vec<Vec<usize>>>,
}

impl AblationReport {
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.per_k.get(&k).map(|r| r.mean)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(" k  mean    ci95\n");
        for (k, r) in &self.per_k {
            s.push_str(&format!("{k:2}  {:.4}  [{:.4}, {:.4}]\n", r.mean, r.ci95.0, r.ci95.1));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,mean,ci_lo,ci_hi\n");
        for (k, r) in &self.per_k {
            s.push_str(&format!("{k},{},{},{}\n", r.mean, r.ci95.0, r.ci95.1));
        }
        s
    }
}

fn subsets_for(policy: AblationPolicy, k: usize, seed_v: u64) -> Vec<Vec<usize>> {
    match policy {
        AblationPolicy::CenterOut => {
            let mut v = CENTER_OUT_ORDER[..k].to_vec();
            v.sort_unstable();
            vec![v]
        }
        AblationPolicy::RandomSubsets { subsets } => (0..subsets)
            .map(|m| {
                let mut rng = seed::rng(seed::derive_path(seed_v, &[0xAB, k as u64, m as u64]));
                let mut v: Vec<usize> = sample(&mut rng, NECK_CHANNELS.len(), k)
                    .into_iter()
                    .map(|i| NECK_CHANNELS[i])
                    .collect();
                v.sort_unstable();
                v
            })
            .collect(),
    }
}

/// Classification accuracy as a function of the number of neck electrodes,
/// k = 1..=10. All k share split and forest seeds.
pub fn run_ablation(
    ds: &Dataset,
    policy: AblationPolicy,
    cfg: &ForestConfig,
    opts: &ClassificationOptions,
) -> Result<AblationReport, ExperimentError> {
    if let AblationPolicy::RandomSubsets { subsets: 0 } = policy {
        return Err(ExperimentError::Config("random_subsets needs at least one subset".into()));
    }
    if ds.channel_count() < NECK_CHANNELS.len() {
        return Err(ExperimentError::MissingChannel {
            channel: NECK_CHANNELS.len() - 1,
            available: ds.channel_count(),
        });
    }
    let table = FeatureTable::build(ds, cfg.execution)?;
    let mut per_k = BTreeMap::new();
    let mut subsets = BTreeMap::new();
    for k in 1..=NECK_CHANNELS.len() {
        let sets = subsets_for(policy, k, opts.seed);
        let mut reports = Vec::with_capacity(sets.len());
        for set in &sets {
            reports.push(classify_with_table(ds, &table, &ChannelSet::Custom(set.clone()), cfg, opts)?);
        }
        let report = if reports.len() == 1 {
            reports.pop().unwrap()
        } else {
            let mut pooled = reports[0].clone();
            pooled.per_split_accuracy = reports.iter().flat_map(|r| r.per_split_accuracy.clone()).collect();
            pooled.confusion = reports[1..].iter().fold(reports[0].confusion.clone(), |a, r| a.add(&r.confusion));
            pooled.channel_set = format!("random{k}");
            pooled.channels = Vec::new();
            pooled.mean = mean(&pooled.per_split_accuracy);
            let ci = t_interval(&pooled.per_split_accuracy, 0.95);
            pooled.ci95 = (ci.0.min(pooled.mean), ci.1.max(pooled.mean));
            pooled
        };
        per_k.insert(k, report);
        subsets.insert(k, sets);
    }
    Ok(AblationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        policy,
        per_k,
        subsets,
    })
}
