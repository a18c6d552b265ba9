use std::collections::HashSet;

use super::*;

fn small(naevi: usize, melanoma: usize, artifact: Artifact) -> GenConfig {
    GenConfig {
        height: 16,
        width: 16,
        naevi,
        melanoma,
        test_per_class: 0,
        artifact,
        ..GenConfig::clean(3)
    }
}

fn corner_mean(t: &Tensor) -> f64 {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut sum = 0.0;
    for c in 0..3 {
        for (y, x) in [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)] {
            sum += t.at3(c, y, x) as f64;
        }
    }
    sum / 12.0
}

#[test]
fn zero_probability_artifacts_leave_images_untouched() {
    let none = generate_dataset(&small(20, 20, Artifact::None)).unwrap();
    let zero = generate_dataset(&small(
        20,
        20,
        Artifact::DarkCorners {
            strength: 1.0,
            p0: 0.0,
            p1: 0.0,
        },
    ))
    .unwrap();
    assert!(zero.train.iter().all(|i| !i.artifact));
    for (a, b) in none.train.iter().zip(&zero.train) {
        assert_eq!(a.image, b.image);
        assert_eq!(corner_mean(&a.image), corner_mean(&b.image));
    }
}

#[test]
fn artifact_flag_is_truthful() {
    let art = Artifact::DarkCorners {
        strength: 0.8,
        p0: 0.3,
        p1: 0.7,
    };
    let with = generate_dataset(&small(30, 30, art)).unwrap();
    let without = generate_dataset(&small(30, 30, Artifact::None)).unwrap();
    let mut flagged = 0;
    for (a, b) in with.train.iter().zip(&without.train) {
        if a.artifact {
            flagged += 1;
            assert!(corner_mean(&a.image) < corner_mean(&b.image));
        } else {
            assert_eq!(a.image, b.image);
        }
    }
    assert!(flagged > 0);
}

#[test]
fn artifact_frequency_within_binomial_bounds() {
    let cfg = small(
        200,
        200,
        Artifact::DarkCorners {
            strength: 0.8,
            p0: 0.1,
            p1: 0.9,
        },
    );
    let ds = generate_dataset(&cfg).unwrap();
    let z = 2.576; // two-sided 99%
    for (label, p) in [(Label::Naevus, 0.1f64), (Label::Melanoma, 0.9)] {
        let hits = ds.train.iter().filter(|i| i.label == label && i.artifact).count() as f64;
        let (mean, sd) = (200.0 * p, (200.0 * p * (1.0 - p)).sqrt());
        assert!((hits - mean).abs() <= z * sd, "{label:?}: {hits} flagged");
    }
}

#[test]
fn imbalanced_preset_mirrors_reference_ratio() {
    let cfg = GenConfig::imbalanced(0);
    let ratio = cfg.naevi as f64 / cfg.melanoma as f64;
    // 5403 : 614 scaled by 0.1
    assert!((ratio - 5403.0 / 614.0).abs() < 0.1, "{ratio}");
}

#[test]
fn generation_is_deterministic_and_in_range() {
    let cfg = GenConfig {
        test_per_class: 3,
        ..small(10, 10, GenConfig::biased(0).artifact)
    };
    let a = generate_dataset(&cfg).unwrap();
    let b = generate_dataset(&cfg).unwrap();
    assert_eq!(a, b);
    for img in a.train.iter().chain(&a.test) {
        assert!(img.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    let c = generate_dataset(&GenConfig { seed: 99, ..cfg }).unwrap();
    assert_ne!(a.train[0].image, c.train[0].image);
}

#[test]
fn test_split_is_balanced_and_disjoint() {
    let cfg = GenConfig {
        test_per_class: 4,
        ..small(12, 9, Artifact::None)
    };
    let ds = generate_dataset(&cfg).unwrap();
    assert_eq!(Dataset::count(&ds.test, Label::Naevus), 4);
    assert_eq!(Dataset::count(&ds.test, Label::Melanoma), 4);
    assert_eq!(ds.train.len(), 13);
    let train: HashSet<_> = ds.train.iter().map(|i| &i.id).collect();
    assert!(ds.test.iter().all(|i| !train.contains(&i.id)));
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(matches!(
        generate_dataset(&small(0, 0, Artifact::None)),
        Err(Error::Config(_))
    ));
    let cfg = GenConfig {
        test_per_class: 5,
        ..small(10, 0, Artifact::None)
    };
    assert!(matches!(generate_dataset(&cfg), Err(Error::Config(_))));
    let bad = small(
        2,
        2,
        Artifact::DarkCorners {
            strength: 1.5,
            p0: 0.0,
            p1: 0.0,
        },
    );
    assert!(generate_dataset(&bad).is_err());
}

#[test]
fn melanomas_and_naevi_differ_in_tone_structure() {
    let ds = generate_dataset(&GenConfig {
        height: 32,
        width: 32,
        test_per_class: 0,
        ..GenConfig::clean(5)
    })
    .unwrap();
    // Melanomas carry 2-3 tones, so the lesion interior is more varied.
    let spread = |img: &Tensor| {
        let (h, w) = (img.shape()[1], img.shape()[2]);
        let vals: Vec<f64> = (h / 2 - 3..h / 2 + 3)
            .flat_map(|y| (w / 2 - 3..w / 2 + 3).map(move |x| (y, x)))
            .map(|(y, x)| img.at3(2, y, x) as f64)
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64
    };
    let mean_spread = |label| {
        let v: Vec<f64> = ds
            .train
            .iter()
            .filter(|i| i.label == label)
            .map(|i| spread(&i.image))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_spread(Label::Melanoma) > mean_spread(Label::Naevus));
}

#[test]
fn augmentation_yields_seven_distinct_label_preserving_images() {
    let ds = generate_dataset(&small(0, 1, Artifact::None)).unwrap();
    let img = &ds.train[0];
    let aug = augment(img, 10, 1);
    assert_eq!(aug.len(), 7);
    let mut seen = vec![img.image.clone()];
    for a in &aug {
        assert_eq!(a.label, Label::Melanoma);
        assert_eq!(a.source_id, img.id);
        assert!(a.transform.is_some());
        assert!(!seen.contains(&a.image));
        seen.push(a.image.clone());
    }
}

#[test]
fn double_flip_is_identity() {
    let ds = generate_dataset(&small(1, 0, Artifact::None)).unwrap();
    let t = &ds.train[0].image;
    for tr in [
        Transform::FlipHorizontal,
        Transform::FlipVertical,
        Transform::Rotate180,
        Transform::Transpose,
    ] {
        assert_eq!(&tr.apply(&tr.apply(t)), t);
    }
    let r = Transform::Rotate90;
    assert_eq!(&Transform::Rotate270.apply(&r.apply(t)), t);
}

#[test]
fn augmentation_keeps_corners_dark() {
    let cfg = small(
        0,
        4,
        Artifact::DarkCorners {
            strength: 0.9,
            p0: 1.0,
            p1: 1.0,
        },
    );
    let ds = generate_dataset(&cfg).unwrap();
    for img in &ds.train {
        for a in augment(img, 7, 0) {
            assert!(a.artifact);
            assert!((corner_mean(&a.image) - corner_mean(&img.image)).abs() < 1e-6);
        }
    }
}

#[test]
fn minority_expansion_reaches_reference_factor() {
    let ds = generate_dataset(&small(20, 61, Artifact::None)).unwrap();
    // 614 → 1656 in the reference data
    let factor = 1656.0 / 614.0;
    let grown = expand_class(&ds.train, Label::Melanoma, factor, 3).unwrap();
    let mel = Dataset::count(&grown, Label::Melanoma);
    assert_eq!(mel, (61.0 * factor).round() as usize);
    assert_eq!(Dataset::count(&grown, Label::Naevus), 20);
    let ids: HashSet<_> = grown.iter().map(|i| &i.id).collect();
    assert_eq!(ids.len(), grown.len());
    assert!(expand_class(&ds.train, Label::Melanoma, 9.0, 0).is_err());
}

#[test]
fn balanced_subsampling() {
    let ds = generate_dataset(&small(30, 25, Artifact::None)).unwrap();
    let all = subsample_balanced(&ds.train, 25, 0).unwrap();
    assert_eq!(Dataset::count(&all, Label::Melanoma), 25);
    let a = subsample_balanced(&ds.train, 5, 1).unwrap();
    let b = subsample_balanced(&ds.train, 5, 2).unwrap();
    assert_eq!(a, subsample_balanced(&ds.train, 5, 1).unwrap());
    assert_ne!(
        a.iter().map(|i| &i.id).collect::<Vec<_>>(),
        b.iter().map(|i| &i.id).collect::<Vec<_>>()
    );
    assert!(matches!(subsample_balanced(&ds.train, 26, 0), Err(Error::Size(_))));
    let subsets: Vec<_> = (0..15).map(|s| subsample_balanced(&ds.train, 10, s).unwrap()).collect();
    assert!(subsets.iter().all(|s| s.len() == 20));
}

#[test]
fn disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenConfig {
        test_per_class: 2,
        ..small(5, 5, GenConfig::biased(0).artifact)
    };
    let ds = generate_dataset(&cfg).unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    assert!(dir.path().join("train/naevus").is_dir());
    assert!(dir.path().join("test/melanoma").is_dir());
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.manifest(), ds.manifest());
    for (a, b) in back.train.iter().zip(&ds.train) {
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
