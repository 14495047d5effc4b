use emgdeck::dataset::ChannelSet;
use emgdeck::experiments::*;
use emgdeck::learn::{make_splits, ForestConfig};
use emgdeck::par::Execution;
use emgdeck::synth::{generate_synthetic, SynthConfig};
use std::collections::BTreeMap;

fn small() -> SynthConfig {
    SynthConfig {
        utterances_per_cell: 5,
        acoustic_dim: 32,
        ..SynthConfig::default()
    }
}

fn forest() -> ForestConfig {
    ForestConfig {
        n_trees: 15,
        ..ForestConfig::default()
    }
}

fn opts() -> ClassificationOptions {
    ClassificationOptions {
        n_splits: 3,
        ..ClassificationOptions::default()
    }
}

#[test]
fn default_corpus_splits_are_176_44_and_stratified() {
    let (ds, _) = generate_synthetic(&SynthConfig {
        acoustic_dim: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let splits = make_splits(&ds, 10, 0.8, 2024).unwrap();
    assert_eq!(splits.len(), 10);
    for s in &splits {
        assert_eq!((s.train.len(), s.test.len()), (176, 44));
        let mut per_cell = BTreeMap::new();
        for &i in &s.test {
            let u = &ds.utterances[i];
            *per_cell.entry((u.word, u.speaker)).or_insert(0) += 1;
        }
        assert_eq!(per_cell.len(), 22);
        assert!(per_cell.values().all(|&n| n == 2));
    }
}

#[test]
fn classification_is_deterministic_and_mode_independent() {
    let (ds, _) = generate_synthetic(&small()).unwrap();
    let a = run_classification(&ds, &ChannelSet::Full13, &forest(), &opts()).unwrap();
    let b = run_classification(&ds, &ChannelSet::Full13, &forest(), &opts()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let seq = ForestConfig {
        execution: Execution::Sequential,
        ..forest()
    };
    let c = run_classification(&ds, &ChannelSet::Full13, &seq, &opts()).unwrap();
    assert_eq!(a, c);
    assert_eq!(a.confusion.total(), 3 * 22);
    let from_confusion = a.confusion.trace() as f64 / a.confusion.total() as f64;
    let from_splits = a.per_split_accuracy.iter().sum::<f64>() / 3.0;
    assert!((from_confusion - from_splits).abs() < 1e-12);
}

#[test]
fn ablation_top_k_equals_neck10() {
    let (ds, _) = generate_synthetic(&small()).unwrap();
    let abl = run_ablation(&ds, AblationPolicy::CenterOut, &forest(), &opts()).unwrap();
    assert_eq!(abl.per_k.len(), 10);
    let neck = run_classification(&ds, &ChannelSet::Neck10, &forest(), &opts()).unwrap();
    let k10 = &abl.per_k[&10];
    assert_eq!(k10.per_split_accuracy, neck.per_split_accuracy);
    assert_eq!(k10.confusion, neck.confusion);
    assert_eq!(abl.subsets[&1], vec![vec![CENTER_OUT_ORDER[0]]]);

    let rnd = run_ablation(&ds, AblationPolicy::RandomSubsets { subsets: 2 }, &forest(), &opts()).unwrap();
    for (k, subs) in &rnd.subsets {
        for s in subs {
            assert_eq!(s.len(), *k);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&c| c < 10));
        }
    }
}

#[test]
fn permuted_labels_are_near_chance() {
    let (ds, _) = generate_synthetic(&SynthConfig {
        acoustic_dim: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let r = run_classification(
        &ds,
        &ChannelSet::Full13,
        &forest(),
        &ClassificationOptions {
            permute_labels: true,
            ..ClassificationOptions::default()
        },
    )
    .unwrap();
    assert!(r.mean < 0.2, "{}", r.mean);
    assert!(r.permute_labels);
}

#[test]
fn one_shot_arithmetic_on_small_corpus() {
    let (ds, _) = generate_synthetic(&small()).unwrap();
    let r = run_one_shot_confusion(&ds, &ChannelSet::Full13, &forest(), 3).unwrap();
    assert_eq!(r.directions.len(), 2);
    for d in &r.directions {
        // 55 own + 11 shots; the 44 remaining test-speaker utterances are scored.
        assert_eq!((d.n_train, d.n_test), (66, 44));
        assert_eq!(d.shots.len(), 11);
        assert_eq!(d.confusion.total(), 44);
        assert_ne!(d.train_speaker, d.test_speaker);
    }
    assert_eq!(r.confusion.total(), 88);
    assert!(r.confusion.row_sums().iter().all(|&s| s == 8));
    assert_eq!(r.confusion, r.directions[0].confusion.add(&r.directions[1].confusion));
}

#[test]
fn one_shot_needs_two_speakers() {
    let (ds, _) = generate_synthetic(&SynthConfig {
        speakers: vec![1],
        ..small()
    })
    .unwrap();
    assert!(matches!(
        run_one_shot_confusion(&ds, &ChannelSet::Full13, &forest(), 1),
        Err(ExperimentError::Speakers(_))
    ));
}

#[test]
fn correlation_shapes_and_pooled_in_sample_r_is_nonnegative() {
    let (ds, ac) = generate_synthetic(&small()).unwrap();
    let r = run_correlation(
        &ds,
        &ac,
        &CorrelationConfig {
            averaging: Averaging::Pooled,
            control_seed: Some(9),
            ..CorrelationConfig::default()
        },
    )
    .unwrap();
    assert_eq!(r.n_dims, 1290);
    assert_eq!((r.n_bins, r.n_frames), (129, 29));
    assert_eq!(r.n_rows, 110 * 29);
    assert_eq!(r.per_dim_r.len(), 1290);
    for v in r.per_dim_r.iter().flatten() {
        assert!(*v >= -1e-9 && *v <= 1.0 + 1e-9, "{v}");
    }
    let c = r.control_fraction.unwrap();
    assert!((0.0..=1.0).contains(&c));
    let again = run_correlation(
        &ds,
        &ac,
        &CorrelationConfig {
            averaging: Averaging::Pooled,
            control_seed: Some(9),
            execution: Execution::Sequential,
            ..CorrelationConfig::default()
        },
    )
    .unwrap();
    assert_eq!(r, again);
}

#[test]
fn held_out_correlation_runs() {
    let (ds, ac) = generate_synthetic(&small()).unwrap();
    let r = run_correlation(
        &ds,
        &ac,
        &CorrelationConfig {
            evaluation: Evaluation::HeldOut {
                train_frac: 0.8,
                seed: 1,
            },
            ..CorrelationConfig::default()
        },
    )
    .unwrap();
    assert!(r.fraction_ge_threshold > 0.0);
    assert!(r.per_dim_r.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn unbalanced_input_is_rejected() {
    let (mut ds, _) = generate_synthetic(&small()).unwrap();
    ds.utterances.pop();
    assert!(run_classification(&ds, &ChannelSet::Full13, &forest(), &opts()).is_err());
}
