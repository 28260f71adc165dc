use rayon::prelude::*;

use super::adapt::{corrupted_image, prepare_split, utterance_seed, PreparedUtterance};
use super::manifest::{DatasetManifest, Split};
use crate::corruption::{ClipKind, ClipSpec, CorruptionSpec, NoiseSource, NoiseSpec};
use crate::error::{Error, Result};
use crate::gammatone::Frontend;
use crate::matrix::Matrix;
use crate::nn::{Real, SpeakerModel};
use crate::seed;

/// Repetitions averaged per clipping cell.
pub const CLIP_REPEATS: usize = 5;

/// Axes of the evaluation matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    pub noises: Vec<NoiseSource>,
    pub snrs: Vec<f64>,
    /// Add the noise-free cell to noise grids.
    pub include_clean: bool,
    pub reverb_delays_ms: Vec<f64>,
    pub clip_specs: Vec<ClipSpec>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self {
            noises: vec![NoiseSource::white(), NoiseSource::pink()],
            snrs: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
            include_clean: true,
            reverb_delays_ms: vec![100.0, 200.0, 500.0, 800.0],
            clip_specs: [ClipKind::Center, ClipKind::Peak]
                .into_iter()
                .flat_map(|kind| {
                    [0.3, 0.6, 0.9].map(|fraction| ClipSpec { kind, fraction })
                })
                .collect(),
        }
    }
}

/// One evaluated condition. An empty spec is the clean condition.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCell {
    pub spec: CorruptionSpec,
    pub n_correct: usize,
    pub n_total: usize,
    pub accuracy_pct: f64,
}

impl EvalCell {
    /// `clean` or the canonical corruption spec.
    pub fn condition(&self) -> String {
        if self.spec.is_empty() {
            "clean".into()
        } else {
            self.spec.to_string()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    /// Cells in grid order.
    pub cells: Vec<EvalCell>,
    pub seed: u64,
}

impl EvaluationReport {
    pub fn cell(&self, spec: &CorruptionSpec) -> Option<&EvalCell> {
        self.cells.iter().find(|c| &c.spec == spec)
    }

    /// Accuracy of the clean cell or of `noise` at `snr_db`.
    pub fn accuracy(&self, noise: Option<(&NoiseSource, f64)>) -> Option<f64> {
        let spec = match noise {
            None => CorruptionSpec::default(),
            Some((n, snr)) => CorruptionSpec::noise(n.clone(), snr),
        };
        self.cell(&spec).map(|c| c.accuracy_pct)
    }
}

fn count_correct<T: Real>(
    model: &SpeakerModel<T>,
    utts: &[PreparedUtterance],
    spec: &CorruptionSpec,
    frontend: &Frontend,
    seed: u64,
) -> Result<usize> {
    let images = utts
        .par_iter()
        .map(|u| corrupted_image(u, spec, frontend, utterance_seed(seed, "eval", &u.utterance_id, spec)))
        .collect::<Result<Vec<Matrix>>>()?;
    let refs: Vec<&Matrix> = images.iter().collect();
    let preds = model.predict_batch(&refs)?;
    Ok(preds.iter().zip(utts).filter(|(p, u)| p.speaker == u.label).count())
}

fn check_model<T: Real>(model: &SpeakerModel<T>, manifest: &DatasetManifest, frontend: &Frontend) -> Result<()> {
    let n = manifest.speakers().len();
    if model.n_speakers() != n {
        return Err(Error::Shape(format!(
            "model has {} speakers, manifest {n}",
            model.n_speakers()
        )));
    }
    let dims = (frontend.config.image_height, frontend.config.image_width);
    if model.input_dims() != dims {
        return Err(Error::Shape(format!(
            "model input {:?}, front end produces {dims:?}",
            model.input_dims()
        )));
    }
    Ok(())
}

/// Evaluates each spec on the test split, in order.
pub fn evaluate_specs<T: Real>(
    model: &SpeakerModel<T>,
    manifest: &DatasetManifest,
    specs: &[CorruptionSpec],
    frontend: &Frontend,
    seed: u64,
) -> Result<EvaluationReport> {
    if specs.is_empty() {
        return Err(Error::InvalidParam("evaluation grid has no cells".into()));
    }
    check_model(model, manifest, frontend)?;
    let utts = prepare_split(manifest, Split::Test, frontend)?;
    let cells = specs
        .iter()
        .map(|spec| {
            let n_correct = count_correct(model, &utts, spec, frontend, seed)?;
            Ok(EvalCell {
                spec: spec.clone(),
                n_correct,
                n_total: utts.len(),
                accuracy_pct: 100.0 * n_correct as f64 / utts.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport { cells, seed })
}

/// Clean cell (if enabled), then every noise at every SNR, noise-major.
pub fn noise_grid_specs(grid: &EvalGrid) -> Result<Vec<CorruptionSpec>> {
    if grid.noises.is_empty() || grid.snrs.is_empty() {
        return Err(Error::InvalidParam("noise grid needs noises and SNRs".into()));
    }
    let mut specs = Vec::new();
    if grid.include_clean {
        specs.push(CorruptionSpec::default());
    }
    for n in &grid.noises {
        for &snr in &grid.snrs {
            specs.push(CorruptionSpec::noise(n.clone(), snr));
        }
    }
    Ok(specs)
}

pub fn evaluate_noise_grid<T: Real>(
    model: &SpeakerModel<T>,
    manifest: &DatasetManifest,
    grid: &EvalGrid,
    frontend: &Frontend,
    seed: u64,
) -> Result<EvaluationReport> {
    evaluate_specs(model, manifest, &noise_grid_specs(grid)?, frontend, seed)
}

/// One cell per delay, or per (delay, SNR) when `noisy` is given; delays
/// are rows, SNRs columns.
pub fn reverb_grid_specs(grid: &EvalGrid, noisy: Option<(&NoiseSource, &[f64])>) -> Result<Vec<CorruptionSpec>> {
    if grid.reverb_delays_ms.is_empty() {
        return Err(Error::InvalidParam("reverb grid needs delays".into()));
    }
    let mut specs = Vec::new();
    for &ms in &grid.reverb_delays_ms {
        match noisy {
            None => specs.push(CorruptionSpec::reverb(ms)),
            Some((_, [])) => return Err(Error::InvalidParam("noisy reverb grid needs SNRs".into())),
            Some((noise, snrs)) => {
                for &snr in snrs {
                    specs.push(CorruptionSpec {
                        noise: Some(NoiseSpec {
                            source: noise.clone(),
                            snr_db: snr,
                        }),
                        reverb_ms: Some(ms),
                        clip: None,
                    });
                }
            }
        }
    }
    Ok(specs)
}

pub fn evaluate_reverb_grid<T: Real>(
    model: &SpeakerModel<T>,
    manifest: &DatasetManifest,
    grid: &EvalGrid,
    noisy: Option<(&NoiseSource, &[f64])>,
    frontend: &Frontend,
    seed: u64,
) -> Result<EvaluationReport> {
    evaluate_specs(model, manifest, &reverb_grid_specs(grid, noisy)?, frontend, seed)
}

/// Clip kinds x fractions. Each cell is evaluated [`CLIP_REPEATS`] times
/// with distinct seeds and the accuracies averaged; clipping itself is
/// deterministic, so every repeat agrees.
pub fn evaluate_clipping<T: Real>(
    model: &SpeakerModel<T>,
    manifest: &DatasetManifest,
    grid: &EvalGrid,
    frontend: &Frontend,
    seed: u64,
) -> Result<EvaluationReport> {
    if grid.clip_specs.is_empty() {
        return Err(Error::InvalidParam("clipping grid needs clip specs".into()));
    }
    check_model(model, manifest, frontend)?;
    let utts = prepare_split(manifest, Split::Test, frontend)?;
    let mut cells = Vec::new();
    for c in &grid.clip_specs {
        let spec = CorruptionSpec::clip(c.kind, c.fraction);
        let runs = (0..CLIP_REPEATS)
            .map(|r| {
                let s = seed::derive(seed, &["repeat", &r.to_string()]);
                count_correct(model, &utts, &spec, frontend, s)
            })
            .collect::<Result<Vec<_>>>()?;
        let mean = runs.iter().sum::<usize>() as f64 / CLIP_REPEATS as f64;
        cells.push(EvalCell {
            spec,
            n_correct: mean.round() as usize,
            n_total: utts.len(),
            accuracy_pct: 100.0 * mean / utts.len() as f64,
        });
    }
    Ok(EvaluationReport { cells, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = EvalGrid::default();
        assert_eq!(noise_grid_specs(&g).unwrap().len(), 2 * 5 + 1);
        assert_eq!(reverb_grid_specs(&g, None).unwrap().len(), 4);
        let w = NoiseSource::white();
        let specs = reverb_grid_specs(&g, Some((&w, &[-5.0, 0.0]))).unwrap();
        assert_eq!(specs.len(), 8);
        assert_eq!(specs[1].to_string(), "noise=white@0dB;reverb=100ms");
        assert_eq!(g.clip_specs.len(), 6);
        let single = EvalGrid { reverb_delays_ms: vec![100.0], ..EvalGrid::default() };
        assert_eq!(reverb_grid_specs(&single, None).unwrap().len(), 1);
        let empty = EvalGrid { noises: vec![], ..EvalGrid::default() };
        assert!(noise_grid_specs(&empty).is_err());
    }
}
