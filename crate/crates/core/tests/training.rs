use shapeshift::dataset::{build_dataset, DatasetConfig};
use shapeshift::distortions::{add_uniform_noise, to_grayscale};
use shapeshift::model::{predict, train, TrainConfig};
use shapeshift::numerics::RandomStream;
use shapeshift::spectrum::{image_profile, spectral_divergence, ProfileMode};
use shapeshift::Image;

fn small_data(per_class: usize) -> shapeshift::dataset::Dataset {
    build_dataset(&DatasetConfig {
        train_per_class: per_class,
        test_per_class: 2,
        cue_conflict_count: 8,
        seed: 11,
        ..DatasetConfig::default()
    })
    .unwrap()
}

#[test]
fn training_is_deterministic() {
    let ds = small_data(4);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train(&cfg, 8, &ds.train, &ds.test).unwrap();
    let b = train(&cfg, 8, &ds.train, &ds.test).unwrap();
    assert_eq!(a, b);
    let c = train(&TrainConfig { seed: 5, ..cfg }, 8, &ds.train, &ds.test).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn overfits_a_small_subset() {
    let ds = small_data(4);
    let subset = &ds.train[..32];
    let cfg = TrainConfig {
        epochs: 50,
        seed: 1,
        ..TrainConfig::default()
    };
    let m = train(&cfg, 8, subset, subset).unwrap();
    let images: Vec<&Image> = subset.iter().map(|s| &s.image).collect();
    let pred = predict(&m.params, &images).unwrap();
    let correct = pred.iter().zip(subset).filter(|(p, s)| **p == s.shape_label).count();
    assert_eq!(correct, subset.len(), "history {:?}", m.history.last());
}

#[test]
fn greyscale_moves_the_spectrum_less_than_noise() {
    let ds = small_data(1);
    for (i, s) in ds.train.iter().enumerate() {
        let p = image_profile(&s.image, ProfileMode::PerRadius).unwrap();
        let grey = image_profile(&to_grayscale(&s.image).unwrap(), ProfileMode::PerRadius).unwrap();
        let mut rs = RandomStream::new(i as u64);
        let noisy = image_profile(&add_uniform_noise(&s.image, 0.2, &mut rs).unwrap(), ProfileMode::PerRadius).unwrap();
        let (dg, dn) = (spectral_divergence(&p, &grey).unwrap().total, spectral_divergence(&p, &noisy).unwrap().total);
        assert!(dg < dn, "sample {i}: greyscale {dg} vs noise {dn}");
    }
}
