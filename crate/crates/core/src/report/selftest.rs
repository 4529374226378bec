use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::emit::{emit_csv, emit_ppm_overlay};
use crate::continual::{forgetting_events, label_dispersion};
use crate::data::{parse_mnist_idx, write_mnist_idx, LabeledImage};
use crate::explain::gradcam_from;
use crate::models::{lssvm_solve, lssvm_system, quantum_kernel, KernelMatrix};
use crate::quantum::{EmbeddingMode, Gate, HeadAngles, Observable, QuantumHead, ShiftTarget, Statevector};

/// Outcome of one built-in oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> SelfCheck {
    SelfCheck {
        name,
        passed: worst < tol,
        detail: format!("worst {worst:.3e}, tolerance {tol:.0e}"),
    }
}

fn closed_forms() -> SelfCheck {
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let t = -PI + 2.0 * PI * i as f64 / 999.0;
        let s = Statevector::zero().run(&[Gate::Hadamard, Gate::Ry(t)]).expect("unit state");
        worst = worst.max((s.expectation_z() + t.sin()).abs());
        worst = worst.max((s.prob1() - (1.0 + t.sin()) / 2.0).abs());
        let (phi, w) = (t / 2.0, 0.3 * t);
        let a = HeadAngles::Amplitude { phi, w }.state();
        worst = worst.max((a.prob1() - (phi + w / 2.0).sin().powi(2)).abs());
    }
    check("quantum closed forms", worst, 1e-12)
}

fn parameter_shift() -> SelfCheck {
    let head = QuantumHead::new(EmbeddingMode::Angle, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let theta = rng.random_range(-PI..PI);
        let g = head
            .param_shift_grad(ShiftTarget::Theta, &HeadAngles::Angle { theta }, Observable::PauliZ, 0)
            .unwrap_or(f64::NAN);
        worst = worst.max((g + theta.cos()).abs());
    }
    check("parameter shift", worst, 1e-12)
}

fn gradcam_oracle() -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let acts: Vec<f64> = (0..48).map(|_| rng.random_range(0.0..1.0)).collect();
        let grads: Vec<f64> = (0..48).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = gradcam_from(&acts, &grads, 3, 4, 4).unwrap_or_default();
        let alpha: Vec<f64> = (0..3).map(|k| grads[k * 16..(k + 1) * 16].iter().sum::<f64>() / 16.0).collect();
        let raw: Vec<f64> = (0..16)
            .map(|i| (0..3).map(|k| alpha[k] * acts[k * 16 + i]).sum::<f64>().max(0.0))
            .collect();
        let m = raw.iter().cloned().fold(0.0, f64::max);
        for (g, r) in got.iter().zip(&raw) {
            let want = if m > 0.0 { r / m } else { 0.0 };
            worst = worst.max((g - want).abs());
        }
        if got.len() != 16 {
            worst = f64::INFINITY;
        }
    }
    check("gradcam oracle", worst, 1e-10)
}

fn forgetting_oracle() -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let c: Vec<bool> = pred.iter().map(|&p| p == 1).collect();
        let events = (1..n).filter(|&t| c[t - 1] && !c[t]).count();
        let f = forgetting_events(&c);
        let ones = pred.iter().filter(|&&p| p == 1).count();
        let disp = 1.0 - ones.max(n - ones) as f64 / n as f64;
        if f.events != events || label_dispersion(&pred) != disp {
            bad += 1;
        }
    }
    check("forgetting oracle", bad as f64, 0.5)
}

fn kernel_and_lssvm() -> SelfCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..40).map(|_| rng.random_range(-PI..PI)).collect();
    let mut worst = 0.0f64;
    for &x in &xs[..10] {
        for &y in &xs[..10] {
            let a = Statevector::zero().run(&[Gate::Ry(2.0 * x)]).expect("unit state");
            let b = Statevector::zero().run(&[Gate::Ry(2.0 * y)]).expect("unit state");
            worst = worst.max((quantum_kernel(x, y) - a.fidelity(&b)).abs());
        }
    }
    let ys: Vec<f64> = xs.iter().map(|x| if x.sin() > 0.0 { 1.0 } else { -1.0 }).collect();
    let k = KernelMatrix::quantum(&xs);
    let residual = match (lssvm_system(&k, &ys, 10.0), lssvm_solve(&k, &ys, 10.0)) {
        (Ok((a, rhs)), Ok((alpha, b))) => {
            let n = rhs.len();
            let sol: Vec<f64> = std::iter::once(b).chain(alpha).collect();
            (0..n)
                .map(|i| ((0..n).map(|j| a[i * n + j] * sol[j]).sum::<f64>() - rhs[i]).abs())
                .fold(0.0, f64::max)
        }
        _ => f64::INFINITY,
    };
    check("kernel and ls-svm residual", worst.max(residual), 1e-8)
}

fn formats() -> SelfCheck {
    let images: Vec<LabeledImage> = (0..5)
        .map(|i| LabeledImage::new((0..12).map(|p| ((p * 7 + i * 13) % 256) as f64).collect(), [1, 3, 4], i % 2, i))
        .collect::<Result<_, _>>()
        .unwrap_or_default();
    let idx_ok = write_mnist_idx(&images)
        .and_then(|(im, lab)| parse_mnist_idx(&im, &lab))
        .map(|back| back == images)
        .unwrap_or(false);
    let csv_ok = emit_csv(&["a"], &[vec!["x,y".into()]]).map(|b| b == b"a\n\"x,y\"\n").unwrap_or(false);
    let ppm_ok = images
        .first()
        .and_then(|im| emit_ppm_overlay(im, &[0.0; 12], 0.0).ok())
        .is_some_and(|b| b.starts_with(b"P6\n4 3\n255\n") && b.len() == 11 + 36);
    SelfCheck {
        name: "file formats",
        passed: idx_ok && csv_ok && ppm_ok,
        detail: format!("idx {idx_ok}, csv {csv_ok}, ppm {ppm_ok}"),
    }
}

/// Fast oracle checks that run without data files.
pub fn selftest() -> Vec<SelfCheck> {
    vec![closed_forms(), parameter_shift(), gradcam_oracle(), forgetting_oracle(), kernel_and_lssvm(), formats()]
}
