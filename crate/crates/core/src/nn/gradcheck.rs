//! Central finite-difference verification of the analytic gradients.

use rand::distributions::{Distribution, Uniform};
use rand::seq::index;

use super::layers::dense_softmax_xent;
use super::model::{BackwardFault, SpeakerModel, DEFAULT_KERNELS};
use super::tensor::{Param, Tensor4};
use crate::error::Result;
use crate::seed;

/// Toy problem for the full architecture: the smallest square input that
/// survives five pooling stages is 63 pixels, so 64x64 is used.
pub const TOY_INPUT: usize = 64;
pub const TOY_BATCH: usize = 4;
pub const TOY_CLASSES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub max_params_per_tensor: usize,
    pub tolerance: f64,
    /// Denominator floor of the relative error, so gradients that are
    /// analytically zero are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_params_per_tensor: 200,
            tolerance: 1e-4,
            floor: 1e-5,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Entries whose perturbation crossed a ReLU or pool decision and whose
    /// difference quotient disagreed.
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped).sum()
    }

    pub fn passed(&self) -> bool {
        self.checked() > 0 && self.max_rel_error() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn sample_indices(len: usize, max: usize, seed: u64) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut v = index::sample(&mut seed::rng(seed), len, max).into_vec();
    v.sort_unstable();
    v
}

/// Checks every trainable tensor of `model` on the training-mode loss.
pub fn check_model(
    model: &SpeakerModel<f64>,
    x: &Tensor4<f64>,
    labels: &[usize],
    cfg: &GradCheckConfig,
    fault: Option<BackwardFault>,
) -> Result<GradCheckReport> {
    let analytic = model.loss_and_grads(x, labels, fault)?;
    let (_, base_sig) = model.loss_with_signature(x, labels)?;
    let names = model.param_names();
    let mut m = model.clone();
    let mut tensors = Vec::with_capacity(names.len());
    for (ti, name) in names.iter().enumerate() {
        let len = analytic.grads[ti].len();
        let idx = sample_indices(len, cfg.max_params_per_tensor, seed::derive(cfg.seed, &["gradcheck", name]));
        let mut t = TensorCheck {
            name: name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        for i in idx {
            let orig = m.params()[ti].data[i];
            m.params_mut()[ti].data[i] = orig + cfg.step;
            let (lp, sp) = m.loss_with_signature(x, labels)?;
            m.params_mut()[ti].data[i] = orig - cfg.step;
            let (lm, sm) = m.loss_with_signature(x, labels)?;
            m.params_mut()[ti].data[i] = orig;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let err = relative_error(analytic.grads[ti].data[i], numeric, cfg.floor);
            // A perturbation that crosses a ReLU or pool decision makes the
            // difference quotient meaningless; such entries count only if
            // they agree anyway.
            if (sp != base_sig || sm != base_sig) && err >= cfg.tolerance {
                t.skipped += 1;
                continue;
            }
            t.max_rel_error = t.max_rel_error.max(err);
            t.checked += 1;
        }
        tensors.push(t);
    }
    Ok(GradCheckReport {
        tensors,
        tolerance: cfg.tolerance,
    })
}

/// Checks the dense + softmax cross-entropy fragment on its own.
pub fn check_dense(
    features: &[f64],
    batch: usize,
    w: &Param<f64>,
    b: &Param<f64>,
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = dense_softmax_xent(features, batch, w, b, labels)?;
    let mut params = [w.clone(), b.clone()];
    let mut tensors = Vec::new();
    for (ti, (name, grad)) in [("dense.weight", &analytic.grad_w), ("dense.bias", &analytic.grad_b)]
        .into_iter()
        .enumerate()
    {
        let idx = sample_indices(grad.len(), cfg.max_params_per_tensor, seed::derive(cfg.seed, &["gradcheck", name]));
        let mut t = TensorCheck {
            name: name.to_string(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        for i in idx {
            let orig = params[ti].data[i];
            params[ti].data[i] = orig + cfg.step;
            let lp = dense_softmax_xent(features, batch, &params[0], &params[1], labels)?.loss;
            params[ti].data[i] = orig - cfg.step;
            let lm = dense_softmax_xent(features, batch, &params[0], &params[1], labels)?.loss;
            params[ti].data[i] = orig;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            t.max_rel_error = t.max_rel_error.max(relative_error(grad.data[i], numeric, cfg.floor));
            t.checked += 1;
        }
        tensors.push(t);
    }
    Ok(GradCheckReport {
        tensors,
        tolerance: cfg.tolerance,
    })
}

/// Five-block model, random uniform input in [0, 1), distinct labels.
pub fn toy_problem(seed: u64) -> Result<(SpeakerModel<f64>, Tensor4<f64>, Vec<usize>)> {
    let model = SpeakerModel::new(TOY_INPUT, TOY_INPUT, &DEFAULT_KERNELS, TOY_CLASSES, seed)?;
    let mut rng = seed::rng(seed::derive(seed, &["toy-input"]));
    let u = Uniform::new(0.0, 1.0);
    let n = TOY_BATCH * TOY_INPUT * TOY_INPUT;
    let x = Tensor4::from_vec(
        [TOY_BATCH, 1, TOY_INPUT, TOY_INPUT],
        (0..n).map(|_| u.sample(&mut rng)).collect(),
    )?;
    let labels = (0..TOY_BATCH).map(|i| (3 * i + 1) % TOY_CLASSES).collect();
    Ok((model, x, labels))
}

/// Full-architecture check on the toy problem.
pub fn check_toy_model(cfg: &GradCheckConfig, fault: Option<BackwardFault>) -> Result<GradCheckReport> {
    let (model, x, labels) = toy_problem(cfg.seed)?;
    check_model(&model, &x, &labels, cfg, fault)
}

/// Dense-only check on random features.
pub fn check_toy_dense(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (batch, f, k) = (3, 20, 5);
    let mut rng = seed::rng(seed::derive(cfg.seed, &["toy-dense"]));
    let u = Uniform::new(-1.0, 1.0);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| u.sample(&mut rng)).collect() };
    let features = draw(batch * f);
    let w = Param { dims: vec![k, f], data: draw(k * f) };
    let b = Param { dims: vec![k], data: draw(k) };
    check_dense(&features, batch, &w, &b, &[0, 4, 2], cfg)
}
