//! Experiment harness: manifests, synthetic corpus, noise-adapted training
//! sets, evaluation grids and reports.

mod adapt;
mod eval;
mod manifest;
mod report;
mod synth;

pub use adapt::{
    build_adapted_training_set, corrupted_image, prepare_split, utterance_seed, AdaptationPlan,
    LabeledImages, PreparedUtterance,
};
pub use eval::{
    evaluate_clipping, evaluate_noise_grid, evaluate_reverb_grid, evaluate_specs,
    noise_grid_specs, reverb_grid_specs, EvalCell, EvalGrid, EvaluationReport, CLIP_REPEATS,
};
pub use manifest::{load_manifest, write_manifest, DatasetManifest, ManifestEntry, Split};
pub use report::{
    gnuplot_curves, parse_report_csv, read_report, render_pretty, report_csv, write_report,
    ReportFormat, ReportRow, REPORT_HEADER,
};
pub use synth::{
    n_test_utterances, speaker_signatures, synth_speaker_dataset, synth_utterance,
    SpeakerSignature, SynthConfig,
};

use crate::error::Result;
use crate::gammatone::Frontend;
use crate::nn::{train, EpochLog, SpeakerModel, TrainConfig, DEFAULT_KERNELS};

/// Builds the training set for `plan` and trains a fresh five-block model
/// sized to the front end's images.
pub fn train_speaker_model(
    manifest: &DatasetManifest,
    plan: &AdaptationPlan,
    frontend: &Frontend,
    cfg: &TrainConfig,
) -> Result<(SpeakerModel<f32>, Vec<EpochLog>)> {
    let data = build_adapted_training_set(manifest, plan, frontend, cfg.seed)?;
    let mut model = SpeakerModel::new(
        frontend.config.image_height,
        frontend.config.image_width,
        &DEFAULT_KERNELS,
        data.n_speakers,
        cfg.seed,
    )?;
    let log = train(&mut model, &data.images, &data.labels, cfg)?;
    Ok((model, log))
}
