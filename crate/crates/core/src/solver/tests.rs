use super::*;
use crate::degrade::{convolve2d, degrade, downsample_s, DegradationSpec};
use crate::harness::charts::{chart, ChartKind};
use crate::operators::unfold_downsampled;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(h, w, 1, |_, _, _| rng.random::<f64>()).unwrap()
}

fn random_kernel(p: usize, rng: &mut ChaCha8Rng) -> Kernel {
    Kernel::normalized(p, (0..p * p).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Fidelity through the degradation module's own forward path.
fn oracle_fidelity(y: &Image, x: &Image, k: &Kernel, s: usize, b: Boundary) -> f64 {
    let ax = downsample_s(&convolve2d(x, k, b).unwrap(), s).unwrap();
    0.5 * ax.data().iter().zip(y.data()).map(|(a, y)| (a - y).powi(2)).sum::<f64>()
}

fn cfg(s: usize, p: usize, b: Boundary) -> SolverConfig {
    SolverConfig {
        scale: s,
        kernel_size: p,
        boundary: b,
        ..SolverConfig::default()
    }
}

fn gt_problem(s: usize, p: usize, b: Boundary, seed: u64) -> (Image, Image, Kernel) {
    let x = chart(ChartKind::Blocks, 8 * s, 8 * s, seed).unwrap();
    let spec = DegradationSpec {
        scale: s,
        kernel_size: p,
        kernel: KernelShape::Iso { sigma: 1.0 },
        noise: 0.0,
        seed,
        boundary: b,
    };
    let (y, k) = degrade(&x, &spec).unwrap();
    (y, x, k)
}

#[test]
fn init_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = random_image(6, 7, &mut rng);
    let st = init(&y, &cfg(1, 5, Boundary::Replicate)).unwrap();
    for (a, b) in st.x.data().iter().zip(y.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    let st = init(&y, &cfg(3, 7, Boundary::Replicate)).unwrap();
    assert_eq!((st.x.height(), st.x.width()), (18, 21));
    assert_eq!(st.stage, 0);
    let k = &st.k;
    assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for a in 0..7 {
        for b in 0..7 {
            assert!((k.get(a, b) - k.get(b, 6 - a)).abs() < 1e-15);
        }
    }
}

#[test]
fn residual_examples() {
    let (y, x, k) = gt_problem(2, 5, Boundary::Replicate, 1);
    let r = residual_lr(&y, &x, &k, 2, Boundary::Replicate).unwrap();
    assert!(r.data().iter().all(|v| v.abs() < 1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_image(8, 8, &mut rng);
    let y = random_image(8, 8, &mut rng);
    let r = residual_lr(&y, &x, &Kernel::delta(3).unwrap(), 1, Boundary::Circular).unwrap();
    assert_eq!(r, y.sub(&x).unwrap());

    let k = random_kernel(3, &mut rng);
    let y = random_image(4, 4, &mut rng);
    let r = residual_lr(&y, &x, &k, 2, Boundary::Zero).unwrap();
    let pipeline = y.sub(&downsample_s(&convolve2d(&x, &k, Boundary::Zero).unwrap(), 2).unwrap()).unwrap();
    assert_eq!(r, pipeline);

    assert!(residual_lr(&random_image(3, 4, &mut rng), &x, &k, 2, Boundary::Zero).is_err());
}

#[test]
fn gradients_vanish_at_ground_truth() {
    for b in [Boundary::Replicate, Boundary::Circular] {
        let (y, x, k) = gt_problem(2, 5, b, 3);
        assert!(grad_k(&y, &x, &k, 2, b).unwrap().iter().all(|g| g.abs() < 1e-10));
        assert!(grad_x(&y, &x, &k, 2, b).unwrap().data().iter().all(|g| g.abs() < 1e-10));
    }
}

#[test]
fn grad_k_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let b = Boundary::Circular;
    for s in [1, 2] {
        let x = random_image(8, 8, &mut rng);
        let y = random_image(8 / s, 8 / s, &mut rng);
        let k = random_kernel(3, &mut rng);
        let g = grad_k(&y, &x, &k, s, b).unwrap();
        let h = 1e-5;
        for n in 0..9 {
            // Perturbations leave the simplex; the fidelity is defined anyway.
            let mut plus = k.weights().to_vec();
            let mut minus = k.weights().to_vec();
            plus[n] += h;
            minus[n] -= h;
            let f = |w: Vec<f64>| {
                let kk = Kernel::normalized(3, w.clone()).unwrap();
                let scale: f64 = w.iter().sum();
                // Undo the normalization so the kernel is exactly `w`.
                let ax = downsample_s(&convolve2d(&x, &kk, b).unwrap(), s).unwrap().scale(scale);
                0.5 * ax.data().iter().zip(y.data()).map(|(a, y)| (a - y).powi(2)).sum::<f64>()
            };
            let fd = (f(plus) - f(minus)) / (2.0 * h);
            assert!((g[n] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "s={s} n={n}: {} vs {fd}", g[n]);
        }
    }
}

#[test]
fn grad_k_scalar_kernel_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_image(6, 6, &mut rng);
    let y = random_image(3, 3, &mut rng);
    let k = Kernel::delta(1).unwrap();
    let g = grad_k(&y, &x, &k, 2, Boundary::Replicate).unwrap();
    let mut expected = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let xv = x.get(2 * i, 2 * j, 0);
            expected += xv * (xv * 1.0 - y.get(i, j, 0));
        }
    }
    assert_eq!(g.len(), 1);
    assert!((g[0] - expected).abs() < 1e-12);
}

#[test]
fn grad_k_matrix_free_equals_materialized() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for b in [Boundary::Replicate, Boundary::Circular, Boundary::Zero] {
        let x = random_image(12, 9, &mut rng);
        let y = random_image(4, 3, &mut rng);
        let k = random_kernel(5, &mut rng);
        let free = grad_k(&y, &x, &k, 3, b).unwrap();
        let m = unfold_downsampled(&x, 5, 3, b).unwrap();
        let r: Vec<f64> = m.matvec(k.weights()).unwrap().iter().zip(y.data()).map(|(a, y)| a - y).collect();
        let dense = m.transpose_matvec(&r).unwrap();
        for (u, v) in free.iter().zip(&dense) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}

#[test]
fn grad_x_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = Boundary::Circular;
    for s in [1, 2] {
        let x = random_image(8, 8, &mut rng);
        let y = random_image(8 / s, 8 / s, &mut rng);
        let k = random_kernel(3, &mut rng);
        let g = grad_x(&y, &x, &k, s, b).unwrap();
        let h = 1e-5;
        for n in 0..64 {
            let mut plus = x.data().to_vec();
            let mut minus = x.data().to_vec();
            plus[n] += h;
            minus[n] -= h;
            let fp = oracle_fidelity(&y, &Image::new(8, 8, 1, plus).unwrap(), &k, s, b);
            let fm = oracle_fidelity(&y, &Image::new(8, 8, 1, minus).unwrap(), &k, s, b);
            let fd = (fp - fm) / (2.0 * h);
            assert!((g.data()[n] - fd).abs() <= 1e-5 * fd.abs().max(1.0));
        }
    }
}

#[test]
fn grad_x_identity_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_image(5, 5, &mut rng);
    let y = random_image(5, 5, &mut rng);
    let g = grad_x(&y, &x, &Kernel::delta(3).unwrap(), 1, Boundary::Replicate).unwrap();
    assert_eq!(g, x.sub(&y).unwrap());
}

#[test]
fn k_step_examples() {
    let b = Boundary::Circular;
    let (y, x, k) = gt_problem(2, 5, b, 9);
    let mut c = cfg(2, 5, b);
    let st = SolverState::new(&y, x.clone(), k.clone(), &c).unwrap();
    let next = k_step(&st, &y, &c).unwrap();
    for (a, b) in next.weights().iter().zip(k.weights()) {
        assert!((a - b).abs() < 1e-12);
    }

    // δ1 = 0 from an arbitrary state.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let other = random_kernel(5, &mut rng);
    c.kernel_step = StepSize::Fixed { delta: 0.0 };
    let st = SolverState::new(&y, x.clone(), other.clone(), &c).unwrap();
    let next = k_step(&st, &y, &c).unwrap();
    for (a, b) in next.weights().iter().zip(other.weights()) {
        assert!((a - b).abs() < 1e-12);
    }

    // Backtracking from a perturbed ground-truth kernel strictly descends.
    c.kernel_step = StepSize::Backtracking { initial: 1.0 };
    let perturbed = Kernel::normalized(
        5,
        k.weights().iter().map(|w| w + 0.05 * rng.random::<f64>()).collect(),
    )
    .unwrap();
    let st = SolverState::new(&y, x.clone(), perturbed.clone(), &c).unwrap();
    let next = k_step(&st, &y, &c).unwrap();
    let before = fidelity(&y, &x, &perturbed, 2, b).unwrap();
    let after = fidelity(&y, &x, &next, 2, b).unwrap();
    assert!(after < before, "{after} !< {before}");
    assert!((next.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn x_step_examples() {
    // Zero gradient.
    let b = Boundary::Circular;
    let (y, x, k) = gt_problem(2, 5, b, 11);
    let c = cfg(2, 5, b);
    let st = SolverState::new(&y, x.clone(), k.clone(), &c).unwrap();
    let next = x_step(&st, &y, &c).unwrap();
    for (a, b) in next.data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-12);
    }

    // One exact step of the identity problem.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x0 = random_image(6, 6, &mut rng);
    let y = random_image(6, 6, &mut rng);
    let c = SolverConfig {
        image_step: StepSize::Fixed { delta: 1.0 },
        ..cfg(1, 3, b)
    };
    let st = SolverState::new(&y, x0, Kernel::delta(3).unwrap(), &c).unwrap();
    let next = x_step(&st, &y, &c).unwrap();
    for (a, b) in next.data().iter().zip(y.data()) {
        assert!((a - b).abs() < 1e-12);
    }

    // Tikhonov on a consistent constant image shrinks by 1 / (1 + τδ2).
    let flat_hr = Image::filled(8, 8, 1, 0.6).unwrap();
    let flat_lr = Image::filled(4, 4, 1, 0.6).unwrap();
    let c = SolverConfig {
        image_step: StepSize::Fixed { delta: 0.5 },
        image_prox: ImageProx::Tikhonov { tau: 0.2 },
        ..cfg(2, 3, b)
    };
    let st = SolverState::new(&flat_lr, flat_hr, Kernel::uniform(3).unwrap(), &c).unwrap();
    let next = x_step(&st, &flat_lr, &c).unwrap();
    assert!(next.data().iter().all(|v| (v - 0.6 / 1.1).abs() < 1e-12));
}

#[test]
fn zero_stages_returns_initialization() {
    let (y, _, _) = gt_problem(2, 5, Boundary::Replicate, 13);
    let c = SolverConfig { stages: 0, ..cfg(2, 5, Boundary::Replicate) };
    let st = run(&y, &c, None).unwrap();
    let fresh = init(&y, &c).unwrap();
    assert_eq!((st.x, st.k, st.stage), (fresh.x, fresh.k, 0));
    assert_eq!(st.trace.len(), 1);
}

#[test]
fn ground_truth_is_a_fixed_point() {
    let b = Boundary::Replicate;
    let (y, x, k) = gt_problem(2, 5, b, 14);
    let c = SolverConfig { stages: 10, ..cfg(2, 5, b) };
    let st = SolverState::new(&y, x.clone(), k.clone(), &c).unwrap();
    let out = run_from(st, &y, &c, &c.image_prox, Some(GroundTruth::new(&x, &k))).unwrap();
    assert_eq!(out.stage, 10);
    assert_eq!(out.trace.len(), 11);
    assert!(out.x.data().iter().zip(x.data()).all(|(a, b)| (a - b).abs() <= 1e-9));
    assert!(out.k.weights().iter().zip(k.weights()).all(|(a, b)| (a - b).abs() <= 1e-9));
}

#[test]
fn fixed_kernel_fidelity_is_monotone() {
    let b = Boundary::Replicate;
    let x_gt = chart(ChartKind::Disks, 32, 32, 15).unwrap();
    let spec = DegradationSpec {
        scale: 2,
        kernel_size: 7,
        kernel: KernelShape::Iso { sigma: 1.1 },
        noise: 0.0,
        seed: 0,
        boundary: b,
    };
    let (y, k) = degrade(&x_gt, &spec).unwrap();
    let c = SolverConfig { stages: 50, update_kernel: false, ..cfg(2, 7, b) };
    let st = init(&y, &c).unwrap();
    let st = SolverState { k: k.clone(), ..st };
    let st = SolverState::new(&y, st.x, st.k, &c).unwrap();
    let out = run_from(st, &y, &c, &c.image_prox, None).unwrap();
    for pair in out.trace.windows(2) {
        assert!(pair[1].fidelity <= pair[0].fidelity);
    }
    assert!(out.trace.last().unwrap().fidelity < out.trace[0].fidelity);
    assert_eq!(out.k, k);
}

#[test]
fn divergence_reports_stage_and_last_state() {
    let (y, _, _) = gt_problem(2, 5, Boundary::Replicate, 16);
    let c = SolverConfig {
        stages: 20,
        image_step: StepSize::Fixed { delta: 1e300 },
        update_kernel: false,
        ..cfg(2, 5, Boundary::Replicate)
    };
    match run(&y, &c, None) {
        Err(Error::Divergence { stage, state: Some(state), .. }) => {
            assert!(stage >= 1);
            assert!(state.x.is_finite());
            assert_eq!(state.stage + 1, stage);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_rejects_bad_values() {
    assert!(SolverConfig { kernel_size: 4, ..SolverConfig::default() }.validate().is_err());
    assert!(SolverConfig { scale: 0, ..SolverConfig::default() }.validate().is_err());
    assert!(SolverConfig { kernel_step: StepSize::Fixed { delta: -1.0 }, ..SolverConfig::default() }
        .validate()
        .is_err());
    assert!(SolverConfig { image_prox: ImageProx::Tikhonov { tau: -0.1 }, ..SolverConfig::default() }
        .validate()
        .is_err());
    let json = serde_json::to_string(&SolverConfig::default()).unwrap();
    let back: SolverConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, SolverConfig::default());
}

#[test]
fn blind_run_reduces_kernel_error() {
    let b = Boundary::Replicate;
    let x = chart(ChartKind::Disks, 64, 64, 3).unwrap();
    let spec = DegradationSpec {
        scale: 2,
        kernel_size: 11,
        kernel: KernelShape::Iso { sigma: 1.2 },
        noise: 0.0,
        seed: 3,
        boundary: b,
    };
    let (y, k) = degrade(&x, &spec).unwrap();
    let c = SolverConfig {
        stages: 20,
        image_prox: ImageProx::Tikhonov { tau: 1e-3 },
        ..cfg(2, 11, b)
    };
    let out = run(&y, &c, Some(GroundTruth::new(&x, &k))).unwrap();
    let first = out.trace[0].kernel_l1.unwrap();
    let last = out.trace.last().unwrap().kernel_l1.unwrap();
    assert!(last < first, "kernel error {first} -> {last}");
}
