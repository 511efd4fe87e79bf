use std::fs;

use cardioquant::models::*;
use cardioquant::phantom::{generate_subjects, PhantomSpec};
use cardioquant::tensor::gradcheck::{check_gradients, GradCheckOptions};
use cardioquant::tensor::{Graph as G, ParamStore as Store, Tensor as T};
use cardioquant::{Error, Graph, IndexVector, Tensor, INDEX_COUNT};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_input(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(0.0..1.0))
}

#[test]
fn normalization_examples() {
    let v = IndexVector([1024.0, 512.0, 32.0, 16.0, 8.0, 6.4, 3.2, 1.6, 0.0, 64.0, 32.0]);
    let n = normalize_targets(&v, 64);
    assert_eq!(n[0], 0.25);
    assert_eq!(n[1], 0.125);
    assert_eq!(n[2], 0.5);
    assert_eq!(n[9], 1.0);
    assert_eq!(denormalize_targets(&n, 64), v);
}

proptest! {
    #[test]
    fn normalization_round_trips(vals in prop::array::uniform11(0.0f64..5000.0), size in prop::sample::select(vec![64usize, 80, 96])) {
        let v = IndexVector(vals);
        let back = denormalize_targets(&normalize_targets(&v, size), size);
        for i in 0..INDEX_COUNT {
            prop_assert!((back.0[i] - vals[i]).abs() <= 1e-12 * vals[i].max(1.0));
        }
    }
}

#[test]
fn output_shapes_for_each_input_size() {
    for size in [64, 80, 96] {
        for kind in ModelKind::ALL {
            let arch = Architecture::default_for(kind, size);
            let w = ModelWeights::<f32>::init(arch.clone(), &mut rng(1)).unwrap();
            let x = random_input(&[2, arch.in_channels, size, size], 2);
            let mut g = Graph::new();
            let y = forward_infer(&w, &mut g, x, None).unwrap();
            let want = match kind {
                ModelKind::UNet => vec![2, 3, size, size],
                _ => vec![2, INDEX_COUNT],
            };
            assert_eq!(g.value(y).shape(), want.as_slice(), "{kind} at {size}");
        }
    }
}

#[test]
fn unet_probabilities_sum_to_one() {
    let w = ModelWeights::<f32>::init(Architecture::unet(64), &mut rng(3)).unwrap();
    let mut g = Graph::new();
    let y = forward_infer(&w, &mut g, random_input(&[1, 1, 64, 64], 4), None).unwrap();
    let p = g.value(y).data();
    for i in 0..64 * 64 {
        let s: f32 = (0..3).map(|c| p[c * 64 * 64 + i]).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}

#[test]
fn wrong_input_shape_rejected() {
    let w = ModelWeights::<f32>::init(Architecture::direct(64), &mut rng(5)).unwrap();
    let mut g = Graph::new();
    let err = forward_infer(&w, &mut g, random_input(&[1, 1, 32, 32], 0), None).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
    let mut g = Graph::new();
    assert!(forward_infer(&w, &mut g, random_input(&[1, 3, 64, 64], 0), None).is_err());
}

#[test]
fn odd_sizes_fail_validation() {
    assert!(Architecture::direct(60).validate().is_err());
    assert!(Architecture::unet(68).validate().is_err());
    assert!(Architecture::masknet(72).validate().is_ok());
}

/// Swaps `store` into a model shell so the generic gradient checker can
/// drive a full network forward pass.
fn check_network(arch: Architecture, batch: usize, seed: u64) -> f64 {
    let mut w = ModelWeights::<f64>::init(arch.clone(), &mut rng(seed)).unwrap();
    let mut r = rng(seed + 100);
    // The regression head starts at zero, which would starve every earlier
    // layer of gradient.
    if let Some(id) = w.store.find("fc2.weight") {
        for v in w.store.get_mut(id).data_mut() {
            *v = r.random_range(-0.5..0.5);
        }
    }
    let s = arch.input_size;
    let x = T::<f64>::from_fn(vec![batch, arch.in_channels, s, s], |_| r.random_range(-1.0..1.0));
    let mut store = std::mem::replace(&mut w.store, Store::new());
    let forward = |g: &mut G<f64>, st: &mut Store<f64>| {
        std::mem::swap(&mut w.store, st);
        let out = forward_train(&mut w, g, x.clone());
        std::mem::swap(&mut w.store, st);
        out.map_err(|e| match e {
            Error::Tensor(t) => t,
            other => panic!("{other}"),
        })
    };
    let opts = GradCheckOptions { step: 1e-6, max_elements_per_param: 16, seed };
    let report = check_gradients(&mut store, forward, opts).unwrap();
    report.max_rel_error()
}

#[test]
fn miniature_unet_gradients_match_finite_differences() {
    let arch = Architecture { channels: vec![2, 2, 2, 2], ..Architecture::unet(16) };
    for seed in 0..3 {
        let err = check_network(arch.clone(), 2, seed);
        assert!(err < 1e-4, "seed {seed}: {err:.3e}");
    }
}

#[test]
fn miniature_regressors_gradients_match_finite_differences() {
    let direct = Architecture { channels: vec![2, 3], hidden: 4, ..Architecture::direct(8) };
    let masknet = Architecture { channels: vec![2, 3], hidden: 4, ..Architecture::masknet(8) };
    for seed in 0..3 {
        for arch in [&direct, &masknet] {
            let err = check_network(arch.clone(), 3, seed);
            assert!(err < 1e-4, "{} seed {seed}: {err:.3e}", arch.kind);
        }
    }
}

#[test]
fn persistence_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let w = ModelWeights::<f32>::init(Architecture::default_for(kind, 64), &mut rng(9)).unwrap();
        let a = dir.path().join(format!("{kind}_a"));
        let b = dir.path().join(format!("{kind}_b"));
        save_weights(&w, &a).unwrap();
        let loaded = load_weights(&a, Some(kind)).unwrap();
        assert_eq!(loaded, w);
        save_weights(&loaded, &b).unwrap();
        let (ja, ba) = weight_paths(&a);
        let (jb, bb) = weight_paths(&b);
        assert_eq!(fs::read(ba).unwrap(), fs::read(bb).unwrap());
        assert_eq!(fs::read(ja).unwrap(), fs::read(jb).unwrap());
    }
}

#[test]
fn corrupted_blob_and_wrong_architecture_are_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("direct");
    let w = ModelWeights::<f32>::init(Architecture::direct(64), &mut rng(11)).unwrap();
    save_weights(&w, &stem).unwrap();

    let err = load_weights(&stem, Some(ModelKind::UNet)).unwrap_err();
    assert!(matches!(err, Error::ArchitectureMismatch { .. }), "{err}");

    let (json, blob) = weight_paths(&stem);
    let mut bytes = fs::read(&blob).unwrap();
    bytes[100] ^= 0x40;
    fs::write(&blob, &bytes).unwrap();
    let err = load_weights(&stem, Some(ModelKind::Direct)).unwrap_err();
    assert!(matches!(err, Error::Checksum { .. }), "{err}");

    let text = fs::read_to_string(&json).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
    fs::write(&json, text).unwrap();
    assert!(matches!(load_weights(&stem, None).unwrap_err(), Error::FormatVersion { found: 9, .. }));
}

#[test]
fn tampered_plan_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("m");
    let w = ModelWeights::<f32>::init(Architecture::masknet(64), &mut rng(12)).unwrap();
    save_weights(&w, &stem).unwrap();
    let (json, _) = weight_paths(&stem);
    let text = fs::read_to_string(&json).unwrap().replacen("conv1.bias", "conv1.bogus", 1);
    fs::write(&json, text).unwrap();
    assert!(matches!(load_weights(&stem, None).unwrap_err(), Error::PlanMismatch(_)));
}

#[test]
fn missing_weights_error_names_the_path() {
    let err = load_weights(std::path::Path::new("/nonexistent/net"), None).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/net.weights.json"), "{err}");
}

#[test]
fn feature_map_grid_tiles_every_channel() {
    let w = ModelWeights::<f32>::init(Architecture::direct(64), &mut rng(13)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conv1.pgm");
    let img = export_feature_maps(&w, &random_input(&[1, 64, 64], 14), "conv1", &path).unwrap();
    // 16 channels of 64×64 in a 4×4 grid with one-pixel separators.
    assert_eq!((img.width, img.height), (4 * 64 + 3, 4 * 64 + 3));
    assert_eq!(cardioquant::pgm::read_pgm(&path).unwrap(), img);
    assert!(export_feature_maps(&w, &random_input(&[1, 64, 64], 14), "conv9", &path).is_err());
}

#[test]
fn constant_channel_renders_black() {
    let act = Tensor::from_fn(vec![1, 2, 4, 4], |i| if i < 16 { 0.5 } else { i as f32 });
    let img = feature_map_grid(&act).unwrap();
    assert_eq!(img.width, 2 * 4 + 1);
    assert_eq!(img.pixels[0], 0);
}

fn tiny_subjects() -> Vec<cardioquant::Subject> {
    generate_subjects(&PhantomSpec::default(), 4, 21).unwrap()
}

#[test]
fn training_is_deterministic() {
    let subjects = tiny_subjects();
    let refs: Vec<_> = subjects.iter().collect();
    let cfg = TrainConfig { epochs: 1, batch_size: 16, lr: 1e-3, seed: 5 };
    let a = train_direct(&refs, &cfg).unwrap();
    let b = train_direct(&refs, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train_direct(&refs, &cfg.clone().with_seed(6)).unwrap();
    assert_ne!(a.store, c.store);
}

#[test]
fn direct_net_fits_a_small_set() {
    let subjects = tiny_subjects();
    let refs: Vec<_> = subjects[..2].iter().collect();
    let cfg = TrainConfig { epochs: 30, batch_size: 8, lr: 1e-3, seed: 1 };
    let w = train_direct(&refs, &cfg).unwrap();
    let hist = &w.meta.as_ref().unwrap().loss_history;
    assert!(hist.last().unwrap() < &(0.2 * hist[0]), "{hist:?}");
}

#[test]
fn unet_learns_the_segmentation() {
    let subjects = tiny_subjects();
    let refs: Vec<_> = subjects[..2].iter().collect();
    let cfg = TrainConfig { epochs: 4, batch_size: 8, lr: 1e-3, seed: 1 };
    let w = train_unet(&refs, &cfg).unwrap();
    let frame = &subjects[0].frames[0];
    let mask = segment_batch(&w, std::slice::from_ref(&frame.image)).unwrap().remove(0);
    let d = cardioquant::geometry::dice(&mask, &frame.labels, cardioquant::geometry::CAVITY).unwrap();
    assert!(d > 0.8, "training-set cavity dice {d}");
}

#[test]
fn predictions_are_non_negative() {
    let w = ModelWeights::<f32>::init(Architecture::direct(64), &mut rng(17)).unwrap();
    let p = predict_direct(&w, &random_input(&[1, 64, 64], 3)).unwrap();
    assert!(p.0.iter().all(|&v| v >= 0.0));
}

#[test]
fn invalid_train_config_rejected() {
    let subjects = tiny_subjects();
    let refs: Vec<_> = subjects.iter().collect();
    let cfg = TrainConfig { epochs: 0, batch_size: 8, lr: 1e-3, seed: 1 };
    assert!(train_masknet(&refs, &cfg).is_err());
    assert!(train_direct(&[], &TrainConfig::default_for(ModelKind::Direct)).is_err());
}
