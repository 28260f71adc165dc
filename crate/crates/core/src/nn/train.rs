use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;

use super::model::{argmax, images_to_tensor, Mode, SpeakerModel};
use super::optim::Sgdm;
use super::tensor::Real;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            l2_lambda: 1e-4,
            seed: 42,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    /// Fraction of training samples classified correctly during the epoch,
    /// measured on the train-mode forward pass.
    pub train_acc: f64,
}

/// Splits a shuffled index list into batches. A trailing batch of one sample
/// is folded into its predecessor so batch statistics stay defined.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("nonempty") = &order[start..];
    }
    out
}

/// Minibatch SGDM training. Leaves the model in infer mode.
pub fn train<T: Real>(
    model: &mut SpeakerModel<T>,
    images: &[Matrix],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if images.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParam("batch size must be >= 1".into()));
    }
    let (h, w) = model.input_dims();
    if let Some(m) = images.iter().find(|m| m.rows() != h || m.cols() != w) {
        return Err(Error::Shape(format!(
            "image {}x{}, model expects {h}x{w}",
            m.rows(),
            m.cols()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= model.n_speakers()) {
        return Err(Error::InvalidParam(format!(
            "label {l} out of range for {} speakers",
            model.n_speakers()
        )));
    }
    if labels.iter().collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::InvalidParam("training needs at least 2 classes".into()));
    }
    let mut opt = Sgdm::new(cfg.learning_rate, cfg.momentum, cfg.l2_lambda)?;
    let decay = model.decay_mask();
    let mut rng = seed::rng(seed::derive(cfg.seed, &["shuffle"]));
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    model.set_mode(Mode::Train);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(&order, cfg.batch_size) {
            let refs: Vec<&Matrix> = batch.iter().map(|&i| &images[i]).collect();
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let x = images_to_tensor::<T>(&refs)?;
            let g = model.loss_and_grads(&x, &batch_labels, None)?;
            loss_sum += g.loss * batch.len() as f64;
            correct += g
                .probs
                .chunks(model.n_speakers())
                .zip(&batch_labels)
                .filter(|(p, &l)| argmax(p) == l)
                .count();
            model.update_running_stats(&g.batch_stats)?;
            opt.step(&mut model.params_mut(), &g.grads, &decay)?;
        }
        let n = images.len() as f64;
        log.push(EpochLog {
            epoch,
            loss: loss_sum / n,
            train_acc: correct as f64 / n,
        });
    }
    model.set_mode(Mode::Infer);
    Ok(log)
}

/// CSV `epoch,loss,train_acc`.
pub fn write_train_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["epoch", "loss", "train_acc"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            format!("{:.6}", e.loss),
            format!("{:.6}", e.train_acc),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_split_keeps_partial_and_folds_singletons() {
        let order: Vec<usize> = (0..10).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(batches(&order[..1], 4).len(), 1);
    }

    #[test]
    fn input_validation() {
        let mut m = SpeakerModel::<f64>::new(8, 8, &[2], 2, 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut m, &[], &[], &cfg), Err(Error::EmptyDataset)));
        let imgs = vec![Matrix::zeros(8, 8), Matrix::zeros(8, 8)];
        assert!(train(&mut m, &imgs, &[0, 0], &cfg).is_err());
        assert!(train(&mut m, &imgs, &[0, 2], &cfg).is_err());
        let bad = vec![Matrix::zeros(8, 8), Matrix::zeros(7, 8)];
        assert!(train(&mut m, &bad, &[0, 1], &cfg).is_err());
    }

    #[test]
    fn zero_epochs_keeps_initial_weights() {
        let mut m = SpeakerModel::<f32>::new(8, 8, &[2], 2, 3).unwrap();
        let init = m.clone();
        let imgs = vec![Matrix::zeros(8, 8), Matrix::zeros(8, 8)];
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(train(&mut m, &imgs, &[0, 1], &cfg).unwrap().is_empty());
        assert_eq!(m.params(), init.params());
        assert_eq!(m.mode(), Mode::Infer);
    }
}
