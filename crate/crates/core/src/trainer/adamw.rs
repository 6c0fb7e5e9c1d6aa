use crate::error::{FlareError, Result};

/// Decoupled-weight-decay Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            learning_rate: 4.0e-5,
            weight_decay: 5.0e-2,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update. `step` counts from 1.
///
/// ```text
/// m ← β1 m + (1 − β1) g        v ← β2 v + (1 − β2) g²
/// θ ← θ (1 − lr·wd) − lr · m̂ / (sqrt(v̂) + ε)
/// ```
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    opt: &AdamW,
    step: u64,
) -> Result<()> {
    if step == 0 {
        return Err(FlareError::InvalidConfig(
            "AdamW step index starts at 1".into(),
        ));
    }
    let n = params.len();
    for len in [grads.len(), moments.m.len(), moments.v.len()] {
        if len != n {
            return Err(FlareError::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(FlareError::Diverged(format!(
            "non-finite gradient at parameter {i}"
        )));
    }
    let bc1 = 1.0 - opt.beta1.powi(step as i32);
    let bc2 = 1.0 - opt.beta2.powi(step as i32);
    let decay = 1.0 - opt.learning_rate * opt.weight_decay;
    for i in 0..n {
        let g = grads[i];
        moments.m[i] = opt.beta1 * moments.m[i] + (1.0 - opt.beta1) * g;
        moments.v[i] = opt.beta2 * moments.v[i] + (1.0 - opt.beta2) * g * g;
        let m_hat = moments.m[i] / bc1;
        let v_hat = moments.v[i] / bc2;
        params[i] = params[i] * decay - opt.learning_rate * m_hat / (v_hat.sqrt() + opt.eps);
    }
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(FlareError::Diverged(format!("non-finite parameter {i}")));
    }
    Ok(())
}
