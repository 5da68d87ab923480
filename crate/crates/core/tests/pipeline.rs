use std::fs;

use abduct_core::corpus::{group_by_context, load_records, partition_trainable};
use abduct_core::encoder::{load_feature_file, toy_encoder, write_feature_file, FileEncoder};
use abduct_core::gradcheck::{central_difference, relative_error};
use abduct_core::interaction::{self, init_params, Checkpoint};
use abduct_core::trainer::{self, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RECORDS: &str = r#"{"story_id":"a","obs1":"Ann lost her keys.","obs2":"She got into the house.","hyp1":"Ann found a spare key under the mat.","hyp2":"Ann went to the beach."}
{"story_id":"b","obs1":"Ann lost her keys.","obs2":"She got into the house.","hyp1":"Ann climbed through an open window.","hyp2":"Ann threw the spare key in the lake."}
{"story_id":"c","obs1":"The milk smelled sour.","obs2":"Ben drank orange juice instead.","hyp1":"Ben poured the milk down the sink.","hyp2":"Ben bought fresh milk yesterday."}
{"story_id":"d","obs1":"It snowed all night.","obs2":"School was cancelled.","hyp1":"The roads were blocked by snow.","hyp2":"The roads were blocked by snow."}
"#;

#[test]
fn records_to_evaluation_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let (records_path, labels_path) = (dir.path().join("r.jsonl"), dir.path().join("l.lst"));
    fs::write(&records_path, RECORDS).unwrap();
    fs::write(&labels_path, "1\n1\n1\n2\n").unwrap();

    let records = load_records(&records_path, &labels_path).unwrap();
    let (samples, quarantined) = partition_trainable(group_by_context(&records));
    assert_eq!(samples.len(), 2);
    assert_eq!(quarantined.len(), 1);
    assert_eq!(samples[0].len(), 4);
    assert_eq!(samples[0].correct_count(), 2);

    let encoder = toy_encoder(5, 12).unwrap();
    let config = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let state = trainer::train(&config, &samples, &encoder).unwrap();
    assert_eq!(state.loss_history.len(), 3 * 2);
    let report = trainer::evaluate(&state.params, &samples, &encoder, true).unwrap();

    // reloading the checkpoint and serving frozen features reproduces the scores exactly
    let ckpt_path = dir.path().join("ckpt.json");
    state.checkpoint().save(&ckpt_path).unwrap();
    let restored = Checkpoint::load(&ckpt_path).unwrap();
    let feat_path = dir.path().join("f.tsv");
    write_feature_file(&feat_path, &FileEncoder::capture(&encoder, &samples).unwrap()).unwrap();
    let served = load_feature_file(&feat_path).unwrap();
    let again = trainer::evaluate(&restored.params, &samples, &served, true).unwrap();
    assert_eq!(report, again);
}

#[test]
fn bilstm_blocks_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let mut params = init_params(rng.random(), 2, 2).unwrap();
        for v in params.values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let feats: Vec<_> = (0..3)
            .map(|_| {
                abduct_core::encoder::FeatureVector::new((0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
            })
            .collect();
        let upstream: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, trace) = interaction::forward(&params, &feats).unwrap();
        let analytic = interaction::backward(&params, &feats, &trace, &upstream)
            .unwrap()
            .0
            .to_vec();
        let point = params.to_vec();
        let numeric = central_difference(
            |x| {
                params.set_from_slice(x).unwrap();
                let s = interaction::score(&params, &feats).unwrap();
                s.iter().zip(&upstream).map(|(a, b)| a * b).sum()
            },
            &point,
            1e-5,
        );
        for (name, range) in params.blocks() {
            let err = relative_error(&analytic[range.clone()], &numeric[range]);
            assert!(err < 1e-4, "{name}: {err:e}");
        }
    }
}
