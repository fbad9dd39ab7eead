use lingua_model::{Gradients, Mat};
use lingua_train::{lr_at, Error, Optimizer, OptimizerKind, TrainConfig};

fn scalar(v: f64) -> Vec<Mat<f64>> {
    vec![Mat::from_vec(1, 1, vec![v])]
}

fn grad(g: f64) -> Gradients<f64> {
    Gradients { tensors: scalar(g) }
}

fn trace(kind: OptimizerKind, grads: &[f64], lr: f64) -> Vec<f64> {
    let mut p = scalar(0.5);
    let mut opt = Optimizer::new(kind, 0.9, 0.999, 1e-8, 0.0, &p);
    grads
        .iter()
        .map(|&g| {
            opt.update(&mut p, &grad(g), lr).unwrap();
            p[0].data[0]
        })
        .collect()
}

/// Textbook Adam on one scalar.
fn adam_reference(grads: &[f64], lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut x, mut m, mut v) = (0.5, 0.0, 0.0);
    let mut out = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        x -= lr * mhat / (vhat.sqrt() + eps);
        out.push(x);
    }
    out
}

/// Adamax: exponentially weighted infinity norm in place of the second moment.
fn adamax_reference(grads: &[f64], lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut x, mut m, mut u) = (0.5, 0.0, 0.0f64);
    let mut out = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        u = (b2 * u).max(g.abs() + eps);
        x -= lr / (1.0 - b1.powi(i as i32 + 1)) * m / u;
        out.push(x);
    }
    out
}

#[test]
fn adam_first_step_is_minus_lr() {
    let t = trace(OptimizerKind::Adam, &[1.0], 0.1);
    assert!((t[0] - 0.5 - (-0.1)).abs() <= 1e-6);
}

#[test]
fn ten_step_traces_match_scalar_reference() {
    let constant = [1.0; 10];
    let varying = [0.3, -1.2, 2.0, 0.0, 0.7, -0.1, 5.0, -3.0, 0.01, 1.0];
    for grads in [&constant[..], &varying[..]] {
        for (kind, reference) in [
            (OptimizerKind::Adam, adam_reference(grads, 0.01)),
            (OptimizerKind::Adamax, adamax_reference(grads, 0.01)),
        ] {
            let got = trace(kind, grads, 0.01);
            for (a, b) in got.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-6, "{kind:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn zero_gradients_leave_parameters_alone() {
    for kind in [OptimizerKind::Adam, OptimizerKind::Adamax] {
        let mut p = vec![Mat::from_vec(2, 2, vec![0.1, -0.2, 0.3, 4.0])];
        let before = p.clone();
        let mut opt = Optimizer::new(kind, 0.9, 0.999, 1e-8, 0.0, &p);
        let zeros = Gradients::zeros_like(&p);
        for _ in 0..5 {
            opt.update(&mut p, &zeros, 0.1).unwrap();
        }
        assert_eq!(p, before);
    }
}

#[test]
fn weight_decay_is_decoupled() {
    let mut p = scalar(2.0);
    let mut opt = Optimizer::new(OptimizerKind::Adam, 0.9, 0.999, 1e-8, 0.01, &p);
    opt.update(&mut p, &grad(0.0), 0.5).unwrap();
    assert!((p[0].data[0] - 2.0 * (1.0 - 0.5 * 0.01)).abs() < 1e-15);
}

#[test]
fn non_finite_gradient_aborts_without_changes() {
    let mut p = vec![Mat::from_vec(1, 2, vec![1.0, 2.0])];
    let mut opt = Optimizer::new(OptimizerKind::Adam, 0.9, 0.999, 1e-8, 0.01, &p);
    opt.update(
        &mut p,
        &Gradients {
            tensors: vec![Mat::from_vec(1, 2, vec![0.5, 0.5])],
        },
        0.1,
    )
    .unwrap();
    let (p0, o0) = (p.clone(), opt.clone());
    let bad = Gradients {
        tensors: vec![Mat::from_vec(1, 2, vec![0.5, f64::NAN])],
    };
    assert!(matches!(
        opt.update(&mut p, &bad, 0.1),
        Err(Error::NonFiniteGradient)
    ));
    assert_eq!(p, p0);
    assert_eq!(opt, o0);
}

#[test]
fn schedule_peaks_at_end_of_warmup() {
    let cfg = TrainConfig::pretrain_full_scale();
    assert_eq!(lr_at(0, &cfg), 0.0);
    assert_eq!(lr_at(4000, &cfg), 2e-4);
    let desk = TrainConfig::pretrain_desk();
    let mid = (desk.warmup_steps + desk.total_decay_steps) / 2;
    assert_eq!(lr_at(mid, &desk), desk.base_lr / 2.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = TrainConfig::pretrain_desk();
    cfg.warmup_steps = cfg.total_decay_steps + 1;
    assert!(cfg.validate().is_err());
    let mut cfg = TrainConfig::pretrain_desk();
    cfg.steps = 0;
    assert!(cfg.validate().is_err());
}
