use super::classification::{evaluate_split, word_labels, FeatureTable};
use super::{ExperimentError, REPORT_SCHEMA_VERSION};
use crate::dataset::{ChannelSet, Dataset};
use crate::learn::{ConfusionMatrix, ForestConfig, Split};
use crate::seed;
use crate::word::Word;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub train_speaker: u8,
    pub test_speaker: u8,
    pub n_train: usize,
    pub n_test: usize,
    /// Dataset ids of the one utterance per word borrowed from the test speaker.
    pub shots: Vec<String>,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneShotReport {
    pub schema_version: u32,
    pub channel_set: String,
    pub seed: u64,
    pub directions: Vec<DirectionSummary>,
    /// Element-wise sum of both directions.
    pub confusion: ConfusionMatrix,
}

impl OneShotReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for d in &self.directions {
            s.push_str(&format!(
                "speaker {} -> {}: train {} test {} accuracy {:.4}\n",
                d.train_speaker, d.test_speaker, d.n_train, d.n_test, d.accuracy
            ));
        }
        s.push_str(&format!(
            "summed ({} items, accuracy {:.4}):\n",
            self.confusion.total(),
            self.confusion.accuracy()
        ));
        s.push_str(&self.confusion.to_table());
        s
    }
}

/// One-shot cross-speaker protocol: for each ordered speaker pair (A, B),
/// train on all of A plus one seeded utterance per word from B and test on
/// the rest of B. The two directions' matrices are summed.
pub fn run_one_shot_confusion(
    ds: &Dataset,
    channel_set: &ChannelSet,
    cfg: &ForestConfig,
    seed_v: u64,
) -> Result<OneShotReport, ExperimentError> {
    let speakers = ds.speakers();
    if speakers.len() != 2 {
        return Err(ExperimentError::Speakers(speakers));
    }
    let table = FeatureTable::build(ds, cfg.execution)?;
    let mut channels = channel_set.indices();
    channels.sort_unstable();
    channels.dedup();

    let mut directions = Vec::with_capacity(2);
    for (dir, (a, b)) in [(speakers[0], speakers[1]), (speakers[1], speakers[0])].into_iter().enumerate() {
        let mut rng = seed::rng(seed::derive_path(seed_v, &[0x05, dir as u64]));
        let mut train: Vec<usize> = (0..ds.len()).filter(|&i| ds.utterances[i].speaker == a).collect();
        let mut shots = Vec::with_capacity(Word::ALL.len());
        for w in Word::ALL {
            let cands: Vec<usize> = (0..ds.len())
                .filter(|&i| ds.utterances[i].speaker == b && ds.utterances[i].word == w)
                .collect();
            let &pick = cands.choose(&mut rng).ok_or(ExperimentError::Unbalanced)?;
            shots.push(pick);
        }
        train.extend_from_slice(&shots);
        train.sort_unstable();
        let test: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.utterances[i].speaker == b && !shots.contains(&i))
            .collect();
        let split = Split { train, test };
        let dir_cfg = ForestConfig {
            seed: seed::derive(cfg.seed, dir as u64),
            ..cfg.clone()
        };
        let m = evaluate_split(&table, &table.labels, &channels, &split, &dir_cfg)?;
        directions.push(DirectionSummary {
            train_speaker: a,
            test_speaker: b,
            n_train: split.train.len(),
            n_test: split.test.len(),
            shots: shots.iter().map(|&i| ds.utterances[i].id.clone()).collect(),
            accuracy: m.accuracy(),
            confusion: m,
        });
    }
    let confusion = directions
        .iter()
        .fold(ConfusionMatrix::new(word_labels()), |acc, d| acc.add(&d.confusion));
    Ok(OneShotReport {
        schema_version: REPORT_SCHEMA_VERSION,
        channel_set: channel_set.label(),
        seed: seed_v,
        directions,
        confusion,
    })
}
