use essm::linalg::{symmetric_eig, Matrix};
use essm::loss::Target;
use essm::model::{InputKind, ModelInput};
use essm::tasks::bytes::{byte_windows, decode, encode};
use essm::tasks::copy::{copy_sequence, MARKER};
use essm::tasks::{
    build_dataset, load_dataset, save_dataset, spectral_radius_estimate, MetricKind, SyntheticLds, TaskSpec,
    TeacherSpectrum,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lds(spectrum: TeacherSpectrum) -> TaskSpec {
    TaskSpec::Lds {
        state_dim: 6,
        input_dim: 3,
        output_dim: 2,
        rho_max: 0.9,
        spectrum,
        train_samples: 5,
        test_samples: 3,
    }
}

#[test]
fn simulation_equals_impulse_response_convolution() {
    for spectrum in [TeacherSpectrum::Psd, TeacherSpectrum::General] {
        let t = SyntheticLds::random(4, 6, 3, 2, 0.9, spectrum).unwrap();
        let len = 40;
        let (u, y) = t.sample(1, len, 1).unwrap().remove(0);
        let g = t.impulse_response(len);
        for s in 0..len {
            for o in 0..2 {
                let want: f64 = (0..=s)
                    .map(|tau| (0..3).map(|j| g[tau][(o, j)] * u[(s - tau, j)]).sum::<f64>())
                    .sum();
                assert!((y[(s, o)] - want).abs() < 1e-10 * (1.0 + want.abs()));
            }
        }
    }
}

#[test]
fn psd_teacher_has_real_spectrum_inside_the_radius() {
    for seed in 0..10 {
        let t = SyntheticLds::random(seed, 8, 2, 2, 0.95, TeacherSpectrum::Psd).unwrap();
        let asym = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).map(|(i, j)| (t.a[(i, j)] - t.a[(j, i)]).abs()).fold(0.0, f64::max);
        assert!(asym < 1e-12);
        let eig = symmetric_eig(&t.a).unwrap();
        assert!(eig.values.iter().all(|&v| v >= -1e-12 && v <= 0.95 + 1e-9), "{:?}", eig.values);
        assert!((t.spectral_radius - eig.values[0]).abs() < 1e-6);
    }
}

#[test]
fn general_teacher_is_stable() {
    for seed in 0..10 {
        let t = SyntheticLds::random(seed, 8, 2, 2, 0.9, TeacherSpectrum::General).unwrap();
        assert!(t.spectral_radius <= 0.9 + 1e-6);
        // stable systems have a decaying impulse response
        let g = t.impulse_response(400);
        assert!(g[399].max_abs() < 1e-6 * g[1].max_abs().max(1e-300) + 1e-12);
    }
}

#[test]
fn radius_estimate_on_known_matrices() {
    let rot = Matrix::from_vec(2, 2, vec![0.0, -0.5, 0.5, 0.0]).unwrap();
    assert!((spectral_radius_estimate(&rot).unwrap() - 0.5).abs() < 1e-9);
    // non-normal: norm 10, radius 0.3
    let jordan = Matrix::from_vec(2, 2, vec![0.3, 10.0, 0.0, 0.3]).unwrap();
    let r = spectral_radius_estimate(&jordan).unwrap();
    assert!(r >= 0.3 - 1e-12 && r < 0.31, "{r}");
    assert_eq!(spectral_radius_estimate(&Matrix::zeros(3, 3)).unwrap(), 0.0);
    assert!(spectral_radius_estimate(&Matrix::zeros(2, 3)).is_err());
}

#[test]
fn datasets_are_deterministic_and_splits_differ() {
    for spec in [
        lds(TeacherSpectrum::Psd),
        lds(TeacherSpectrum::General),
        TaskSpec::Copy {
            n_symbols: 5,
            delay: 4,
            train_samples: 6,
            test_samples: 2,
        },
    ] {
        let a = build_dataset(&spec, 32, 9).unwrap();
        let b = build_dataset(&spec, 32, 9).unwrap();
        assert_eq!(a, b);
        let c = build_dataset(&spec, 32, 10).unwrap();
        assert_ne!(a.train, c.train);
        assert!(a.test.iter().all(|ex| !a.train.contains(ex)));
    }
}

#[test]
fn lds_dataset_shapes_and_metric() {
    let d = build_dataset(&lds(TeacherSpectrum::Psd), 20, 1).unwrap();
    assert_eq!(d.metric, MetricKind::R2);
    assert_eq!((d.train.len(), d.test.len()), (5, 3));
    let ex = &d.train[0];
    match (&ex.input, &ex.target) {
        (ModelInput::Real(u), Target::Values(y)) => {
            assert_eq!(u.shape(), (20, 3));
            assert_eq!(y.shape(), (20, 2));
        }
        _ => panic!("unexpected example kinds"),
    }
}

#[test]
fn copy_labels_are_delayed_symbols() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, delay, len) = (6, 5, 30);
    let (tokens, labels) = copy_sequence(&mut rng, len, n, delay);
    assert_eq!(tokens[0], MARKER);
    assert!(tokens[1..].iter().all(|&t| (1..=n).contains(&t)));
    for t in 0..len {
        if t > delay {
            assert_eq!(labels[t], Some(tokens[t - delay] - 1));
        } else {
            assert_eq!(labels[t], None);
        }
    }
    let spec = TaskSpec::Copy {
        n_symbols: n,
        delay,
        train_samples: 1,
        test_samples: 1,
    };
    assert_eq!(spec.input_kind(), InputKind::Tokens { vocab: n + 1 });
    assert_eq!(spec.output_dim(), n);
    let too_long = TaskSpec::Copy {
        n_symbols: n,
        delay: 29,
        train_samples: 1,
        test_samples: 1,
    };
    assert!(build_dataset(&too_long, 30, 0).is_err());
    assert!(build_dataset(&spec, 30, 0).is_ok());
}

#[test]
fn byte_windows_shift_targets_and_split_contiguously() {
    let text: Vec<u8> = (0..2000u32).map(|i| (i * 7 % 251) as u8).collect();
    let (train, test) = byte_windows(&text, 16).unwrap();
    let all: Vec<_> = train.iter().chain(&test).collect();
    assert!(test.len() >= 1 && train.len() > test.len());
    for (i, (x, y)) in all.iter().enumerate() {
        assert_eq!(x.len(), 16);
        assert_eq!(*x, encode(&text[i * 16..i * 16 + 16]));
        assert_eq!(*y, encode(&text[i * 16 + 1..i * 16 + 17]));
    }
    assert_eq!(decode(&encode(b"hello")).unwrap(), b"hello");
    assert!(decode(&[256]).is_err());
    assert!(byte_windows(&text[..10], 16).is_err());
}

#[test]
fn byte_lm_dataset_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.txt");
    std::fs::write(&path, "the quick brown fox jumps over the lazy dog. ".repeat(40)).unwrap();
    let spec = TaskSpec::ByteLm { path: path.clone() };
    let d = build_dataset(&spec, 32, 0).unwrap();
    assert_eq!(d.metric, MetricKind::Bpb);
    assert!(!d.train.is_empty() && !d.test.is_empty());
    assert!(build_dataset(&TaskSpec::ByteLm { path: dir.path().join("missing") }, 32, 0).is_err());
}

#[test]
fn dataset_cache_round_trips_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lds.esds");
    for spec in [
        lds(TeacherSpectrum::General),
        TaskSpec::Copy {
            n_symbols: 3,
            delay: 2,
            train_samples: 4,
            test_samples: 2,
        },
    ] {
        let d = build_dataset(&spec, 16, 5).unwrap();
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d);
        let mut bytes = std::fs::read(&path).unwrap();
        let i = bytes.len() / 3;
        bytes[i] ^= 1;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_dataset(&path).is_err());
    }
}

#[test]
fn task_spec_rejects_unknown_fields() {
    let ok = r#"{"kind":"copy","n_symbols":4,"delay":2,"train_samples":3,"test_samples":1}"#;
    assert!(serde_json::from_str::<TaskSpec>(ok).is_ok());
    let bad = r#"{"kind":"copy","n_symbols":4,"delay":2,"train_samples":3,"test_samples":1,"extra":0}"#;
    assert!(serde_json::from_str::<TaskSpec>(bad).is_err());
    let lds = r#"{"kind":"lds","state_dim":4,"input_dim":2,"output_dim":1,"train_samples":3,"test_samples":1}"#;
    let spec: TaskSpec = serde_json::from_str(lds).unwrap();
    assert!(matches!(spec, TaskSpec::Lds { spectrum: TeacherSpectrum::Psd, .. }));
}
