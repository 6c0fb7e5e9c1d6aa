//! Finite-difference verification of the analytic loss gradients.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Execution;
use crate::losses::{bss_grad_w, bss_loss, ib_factor_bss, FlareLoss, HeadState};
use crate::types::{ClassWeights, FlareClass, OneHotLabel, NUM_CLASSES};

pub const FD_STEP: f64 = 1e-6;
pub const GRADIENT_TOL: f64 = 1e-6;
pub const FACTOR_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("gradcheck seed={} trials={}\n", self.seed, self.trials);
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<5} {:<28} max_rel_err={:.3e} tol={:.0e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.max_error,
                c.tolerance
            );
        }
        let _ = writeln!(
            out,
            "{}",
            if self.passed() {
                "all checks passed"
            } else {
                "gradient check FAILED"
            }
        );
        out
    }
}

/// `max|a − b| / max(max|a|, max|b|)`; zero when both vectors vanish.
pub fn normwise_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_state<R: Rng>(rng: &mut R) -> (HeadState, OneHotLabel) {
    let l = rng.random_range(1..=8);
    let h: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..NUM_CLASSES * l)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let y = OneHotLabel::new(FlareClass::ALL[rng.random_range(0..NUM_CLASSES)]);
    (HeadState::new(h, w).expect("consistent shapes"), y)
}

fn bss_weight_fd(state: &HeadState, y: OneHotLabel) -> Vec<f64> {
    let mut out = Vec::with_capacity(state.weights().len());
    for i in 0..state.weights().len() {
        let probe = |delta: f64| {
            let mut w = state.weights().to_vec();
            w[i] += delta;
            let s = HeadState::new(state.hidden().to_vec(), w).expect("same shape");
            bss_loss(y, s.probs())
        };
        out.push((probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP));
    }
    out
}

/// Runs the three gradient checks. `corruption` is added to every analytic
/// gradient entry to exercise the failure path.
pub fn run_gradcheck(seed: u64, trials: usize, corruption: Option<f64>) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bump = corruption.unwrap_or(0.0);
    let mut grad_err: f64 = 0.0;
    let mut factor_err: f64 = 0.0;
    let mut loss_err: f64 = 0.0;

    let loss = FlareLoss::default().with_execution(Execution::Sequential);
    for _ in 0..trials {
        let (state, y) = random_state(&mut rng);
        let analytic: Vec<f64> = bss_grad_w(&state, y).iter().map(|g| g + bump).collect();
        grad_err = grad_err.max(normwise_relative_error(
            &analytic,
            &bss_weight_fd(&state, y),
        ));

        let l1: f64 = analytic.iter().map(|g| g.abs()).sum();
        let f = ib_factor_bss(&state, y);
        if l1 > 0.0 {
            factor_err = factor_err.max((f - l1).abs() / l1);
        }

        let batch: Vec<_> = (0..rng.random_range(1..=8))
            .map(|_| random_state(&mut rng))
            .collect();
        let gamma = ClassWeights::from_raw([0.0; NUM_CLASSES].map(|_| rng.random_range(0.2..6.0)))
            .expect("positive weights");
        let factors = loss.factors(&batch);
        let grads = loss
            .logit_grads_frozen(&batch, &gamma, true, &factors)
            .expect("non-empty batch");
        for (i, (s, _)) in batch.iter().enumerate() {
            let mut fd = [0.0; NUM_CLASSES];
            for (k, fdk) in fd.iter_mut().enumerate() {
                let probe = |delta: f64| {
                    let mut z = *s.logits();
                    z[k] += delta;
                    let mut b = batch.clone();
                    b[i].0 = s.with_logits(z);
                    loss.evaluate_frozen(&b, &gamma, true, &factors)
                        .expect("valid batch")
                        .total
                };
                *fdk = (probe(FD_STEP) - probe(-FD_STEP)) / (2.0 * FD_STEP);
            }
            let analytic: Vec<f64> = grads[i].iter().map(|g| g + bump).collect();
            loss_err = loss_err.max(normwise_relative_error(&analytic, &fd));
        }
    }

    GradcheckReport {
        seed,
        trials,
        checks: vec![
            CheckResult {
                name: "bss_grad_w vs central FD",
                max_error: grad_err,
                tolerance: GRADIENT_TOL,
            },
            CheckResult {
                name: "ib_factor_bss = sum|dL/dW|",
                max_error: factor_err,
                tolerance: FACTOR_IDENTITY_TOL,
            },
            CheckResult {
                name: "flare_loss_grad vs central FD",
                max_error: loss_err,
                tolerance: GRADIENT_TOL,
            },
        ],
    }
}
