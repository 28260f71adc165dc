use cochsid::nn::{
    self, load_model, load_model_header, save_model, train, Mode, SpeakerModel, TrainConfig,
    DEFAULT_KERNELS,
};
use cochsid::Matrix;
use std::sync::OnceLock;

const SIDE: usize = 64;

fn toy_set() -> (Vec<Matrix>, Vec<usize>) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..16 {
        let label = i % 2;
        let v = if label == 0 { 0.2 } else { 0.8 };
        images.push(Matrix::from_vec(SIDE, SIDE, vec![v; SIDE * SIDE]));
        labels.push(label);
    }
    (images, labels)
}

fn toy_config() -> TrainConfig {
    TrainConfig {
        epochs: 100,
        // Full batch. A batch holding one class of constant images has zero
        // variance and normalizes to identical features, and uneven class
        // mixes make the batch statistics, hence the loss, jitter per epoch.
        batch_size: 16,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Running batch-norm statistics start at (0, 1) and decay with momentum
/// 0.9, so infer-mode predictions need enough steps for the initial unit
/// variance to wash out of the running estimate.
fn train_toy() -> (SpeakerModel<f32>, Vec<nn::EpochLog>) {
    let (images, labels) = toy_set();
    let mut m = SpeakerModel::new(SIDE, SIDE, &DEFAULT_KERNELS, 2, 11).unwrap();
    let log = train(&mut m, &images, &labels, &toy_config()).unwrap();
    (m, log)
}

fn trained() -> &'static (SpeakerModel<f32>, Vec<nn::EpochLog>) {
    static CELL: OnceLock<(SpeakerModel<f32>, Vec<nn::EpochLog>)> = OnceLock::new();
    CELL.get_or_init(train_toy)
}

#[test]
fn separable_toy_reaches_full_accuracy() {
    let (m, log) = trained();
    for e in log {
        eprintln!("epoch {} loss {:.5} acc {:.3}", e.epoch, e.loss, e.train_acc);
    }
    assert_eq!(log.len(), 100);
    assert_eq!(log[4].train_acc, 1.0);
    for w in log[1..].windows(2) {
        assert!(w[1].loss <= w[0].loss, "loss rose after epoch 2: {log:?}");
    }
    assert_eq!(m.mode(), Mode::Infer);
    let (images, labels) = toy_set();
    for (img, &l) in images.iter().zip(&labels) {
        let p = m.predict(img).unwrap();
        assert_eq!(p.speaker, l);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.probabilities.iter().all(|&q| q >= 0.0));
    }
}

#[test]
fn training_is_deterministic() {
    let (a, la) = trained();
    let (b, lb) = train_toy();
    assert_eq!(a, &b);
    assert_eq!(la, &lb);
}

#[test]
fn save_load_round_trip_predictions() {
    let (m, _) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.cspk");
    save_model(m, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(load_model_header(&path).unwrap().n_speakers, 2);
    let probe = Matrix::from_vec(SIDE, SIDE, (0..SIDE * SIDE).map(|i| (i % 7) as f64 / 7.0).collect());
    for img in toy_set().0.iter().chain([&probe]) {
        assert_eq!(m.predict(img).unwrap(), loaded.predict(img).unwrap());
    }
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_model(&path).is_err());
}

#[test]
fn ten_class_header() {
    let m = SpeakerModel::<f32>::new(SIDE, SIDE, &DEFAULT_KERNELS, 10, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ten.cspk");
    save_model(&m, &path).unwrap();
    let h = load_model_header(&path).unwrap();
    assert_eq!(h.n_speakers, 10);
    assert_eq!(h.kernels, DEFAULT_KERNELS.to_vec());
}

#[test]
fn full_size_input_forward_shape() {
    let mut m = SpeakerModel::<f32>::full_size(7, 1).unwrap();
    m.set_mode(Mode::Infer);
    let img = Matrix::from_vec(500, 400, (0..200_000).map(|i| (i % 13) as f64 / 13.0).collect());
    let x = nn::images_to_tensor::<f32>(&[&img]).unwrap();
    let f = m.features(&x).unwrap();
    assert_eq!(f.dims, [1, 32, 14, 11]);
    let p = m.predict(&img).unwrap();
    assert_eq!(p.probabilities.len(), 7);
    assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}
