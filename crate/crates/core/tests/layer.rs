mod oracles;

use essm::basis::SpectralBasis;
use essm::eval::{bibo_audit, bibo_constant};
use essm::linalg::{operator_norm, Matrix};
use essm::model::{layer_forward, Budget, LayerMode, LayerParams, SpectralEngine, TruncationMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_layer(d: usize, dg: usize, cap: usize, rng: &mut ChaCha8Rng) -> LayerParams {
    let mut p = LayerParams::init(d, dg, cap, 1e-6, rng);
    p.skip = gaussian(d, d, 0.5, rng);
    p.mixing = (0..cap).map(|_| gaussian(d, d, 1.0, rng)).collect();
    p.gate.b1 = (0..dg).map(|_| rng.sample(StandardNormal)).collect();
    p.gate.b2 = (0..cap).map(|_| rng.sample(StandardNormal)).collect();
    p
}

fn setup(len: usize, cap: usize) -> (SpectralEngine, Vec<Vec<f64>>) {
    let engine = SpectralEngine::new(SpectralBasis::build(len, cap).unwrap()).unwrap();
    let filters = engine.basis().filters().iter().map(|f| f.taps().to_vec()).collect();
    (engine, filters)
}

const MODES: [LayerMode; 4] = [
    LayerMode { gate_enabled: true, truncation: TruncationMode::MaskedSoftmax },
    LayerMode { gate_enabled: true, truncation: TruncationMode::DirectPrefix },
    LayerMode { gate_enabled: false, truncation: TruncationMode::MaskedSoftmax },
    LayerMode { gate_enabled: false, truncation: TruncationMode::DirectPrefix },
];

#[test]
fn matches_naive_evaluator_in_every_mode() {
    let (len, d, cap) = (16, 2, 6);
    let (engine, filters) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let p = random_layer(d, 3, cap, &mut rng);
        let u = gaussian(len, d, 1.0, &mut rng);
        for mode in MODES {
            for k in [2, 3, 5, 6] {
                let (y, _) = layer_forward(&u, &p, &engine, Budget::new(k, cap).unwrap(), mode).unwrap();
                let r = oracles::naive_layer(
                    &u,
                    &p,
                    engine.basis().eigenvalues(),
                    &filters,
                    k,
                    mode.gate_enabled,
                    mode.truncation,
                );
                let err = oracles::max_abs_diff(&y, &r);
                assert!(err < 1e-10, "{mode:?} K={k}: {err}");
            }
        }
    }
}

#[test]
fn full_budget_masked_equals_unmasked_path() {
    // at K = K̄ the masked softmax spans every channel, so it must agree
    // with the direct path, which never renormalises
    let (len, d, cap) = (32, 3, 8);
    let (engine, _) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_layer(d, 4, cap, &mut rng);
    let u = gaussian(len, d, 1.0, &mut rng);
    let full = Budget::new(cap, cap).unwrap();
    let (a, ca) = layer_forward(&u, &p, &engine, full, MODES[0]).unwrap();
    let (b, cb) = layer_forward(&u, &p, &engine, full, MODES[1]).unwrap();
    assert!(oracles::max_abs_diff(&a, &b) < 1e-12);
    assert!(oracles::max_abs_diff(ca.alpha(), cb.alpha()) < 1e-15);
}

#[test]
fn output_is_causal() {
    let (len, d, cap) = (24, 2, 6);
    let (engine, _) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_layer(d, 3, cap, &mut rng);
    let u = gaussian(len, d, 1.0, &mut rng);
    let (y, _) = layer_forward(&u, &p, &engine, Budget::new(4, cap).unwrap(), MODES[0]).unwrap();
    for t0 in [0, 5, 17, 23] {
        let mut v = u.clone();
        for t in t0..len {
            v.row_mut(t).iter_mut().for_each(|x| *x += 10.0);
        }
        let (z, _) = layer_forward(&v, &p, &engine, Budget::new(4, cap).unwrap(), MODES[0]).unwrap();
        // FFT rounding leaks at the 1e-15 level; a causal violation would be O(10)
        for t in 0..t0 {
            let leak = y.row(t).iter().zip(z.row(t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(leak < 1e-10, "t={t} changed by {leak} from input at {t0}");
        }
        assert!((y[(t0, 0)] - z[(t0, 0)]).abs() > 1e-3);
    }
}

#[test]
fn inactive_parameters_do_not_affect_output() {
    let (len, d, cap) = (16, 3, 8);
    let (engine, _) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_layer(d, 4, cap, &mut rng);
    let u = gaussian(len, d, 1.0, &mut rng);
    for k in 2..cap {
        let budget = Budget::new(k, cap).unwrap();
        let (y, _) = layer_forward(&u, &p, &engine, budget, MODES[0]).unwrap();
        let mut q = p.clone();
        for m in &mut q.mixing[k..] {
            *m = gaussian(d, d, 100.0, &mut rng);
        }
        for r in k..cap {
            q.gate.w2.row_mut(r).iter_mut().for_each(|v| *v = 1e3 * rng.sample::<f64, _>(StandardNormal));
            q.gate.b2[r] = -1e3;
        }
        let (z, _) = layer_forward(&u, &q, &engine, budget, MODES[0]).unwrap();
        assert_eq!(y, z, "K={k}");
    }
}

#[test]
fn zero_input_with_zero_biases_gives_zero() {
    let (len, d, cap) = (16, 3, 6);
    let (engine, _) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = random_layer(d, 4, cap, &mut rng);
    p.gate.b1.iter_mut().for_each(|v| *v = 0.0);
    p.gate.b2.iter_mut().for_each(|v| *v = 0.0);
    for mode in MODES {
        let (y, _) = layer_forward(&Matrix::zeros(len, d), &p, &engine, Budget::new(3, cap).unwrap(), mode).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gate_off_layer_is_homogeneous() {
    let (len, d, cap) = (32, 3, 8);
    let (engine, _) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_layer(d, 4, cap, &mut rng);
    let u = gaussian(len, d, 1.0, &mut rng);
    for mode in &MODES[2..] {
        let (y, _) = layer_forward(&u, &p, &engine, Budget::new(5, cap).unwrap(), *mode).unwrap();
        for c in [-3.0, 0.25, 7.5] {
            let (z, _) = layer_forward(&u.scaled(c), &p, &engine, Budget::new(5, cap).unwrap(), *mode).unwrap();
            assert!(oracles::max_abs_diff(&z, &y.scaled(c)) < 1e-10 * (1.0 + c.abs() * y.max_abs()));
        }
    }
}

#[test]
fn bibo_bound_is_tight_for_skip_only_layer() {
    let (len, d, cap) = (32, 4, 8);
    let (engine, _) = setup(len, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut p = random_layer(d, 4, cap, &mut rng);
    p.mixing.iter_mut().for_each(|m| m.scale(0.0));
    let c = bibo_constant(&p, &engine).unwrap();
    assert!((c - operator_norm(&p.skip).unwrap()).abs() < 1e-12);

    // the top right singular vector as a constant input attains the bound
    let gram = p.skip.t_matmul(&p.skip);
    let eig = essm::linalg::symmetric_eig(&gram).unwrap();
    let v = eig.vector(0);
    let u = Matrix::from_fn(len, d, |_, j| v[j]);
    let (y, _) = layer_forward(&u, &p, &engine, Budget::new(2, cap).unwrap(), LayerMode::default()).unwrap();
    let out = essm::linalg::norm2(y.row(0));
    assert!((out - c).abs() < 1e-10, "{out} vs {c}");

    let r = bibo_audit(&[&p], &engine, LayerMode::default(), &[2, 4, 8], 20, 2.0, 1).unwrap();
    assert!(r.pass && r.max_ratio <= 1.0 + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_layers_respect_bibo(seed in 0u64..10_000, k in 2usize..=8, scale in 0.01f64..10.0) {
        let (engine, _) = setup(32, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_layer(3, 4, 8, &mut rng);
        p.gate.w1.scale(scale);
        p.gate.w2.scale(scale);
        let r = bibo_audit(&[&p], &engine, LayerMode::default(), &[k], 3, scale, seed).unwrap();
        prop_assert!(r.pass, "{:?}", r.violations.first());
    }

    #[test]
    fn alpha_is_a_masked_simplex(seed in 0u64..10_000, k in 2usize..=8) {
        let (engine, _) = setup(16, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_layer(3, 4, 8, &mut rng);
        let u = gaussian(16, 3, 5.0, &mut rng);
        for mode in MODES {
            let (_, c) = layer_forward(&u, &p, &engine, Budget::new(k, 8).unwrap(), mode).unwrap();
            for t in 0..16 {
                let row = c.alpha().row(t);
                prop_assert!(row.iter().all(|&a| a >= 0.0));
                prop_assert!(row[k..].iter().all(|&a| a == 0.0));
                let s: f64 = row.iter().sum();
                if mode.truncation == TruncationMode::MaskedSoftmax {
                    prop_assert!((s - 1.0).abs() < 1e-12);
                } else {
                    prop_assert!(s <= 1.0 + 1e-12);
                }
            }
        }
    }
}
