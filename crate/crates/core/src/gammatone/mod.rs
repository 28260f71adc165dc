//! Auditory front end: a gammatone filterbank on the ERB scale, framed
//! log-energy cochleagrams and fixed-size feature images for the classifier.

mod cochleagram;
mod filterbank;

pub use cochleagram::{
    cochleagram, frame_len_for, load_cgrm, matrix_to_feature_image, n_frames, read_cgrm,
    resize_bilinear, save_cgrm, save_pgm, to_feature_image, write_cgrm, Cochleagram,
    FeatureImage, CGRM_MAGIC, CGRM_VERSION, LOG_FLOOR,
};
pub use filterbank::{
    erb, erb_number, erb_number_to_hz, make_filterbank, FilterbankConfig, GammatoneChannel,
    GammatoneFilterbank,
};

use crate::error::Result;
use crate::signal::{resample, AudioClip};

/// Everything needed to turn a clip into a network input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrontendConfig {
    pub filterbank: FilterbankConfig,
    pub frame_ms: f64,
    pub image_height: usize,
    pub image_width: usize,
}

impl FrontendConfig {
    /// 128 channels, 50-8000 Hz, 40 ms frames, 500x400 images.
    pub fn new(sample_rate: u32) -> Self {
        Self {
            filterbank: FilterbankConfig::new(sample_rate),
            frame_ms: 40.0,
            image_height: 500,
            image_width: 400,
        }
    }

    /// Same filterbank with a small image, for desk-scale runs.
    pub fn desk_scale(sample_rate: u32) -> Self {
        Self {
            image_height: 100,
            image_width: 80,
            ..Self::new(sample_rate)
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.filterbank.sample_rate
    }
}

/// A built filterbank plus framing and image settings.
#[derive(Clone, Debug)]
pub struct Frontend {
    pub config: FrontendConfig,
    pub filterbank: GammatoneFilterbank,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        Ok(Self {
            filterbank: make_filterbank(&config.filterbank)?,
            config,
        })
    }

    pub fn frame_len(&self) -> usize {
        frame_len_for(self.config.frame_ms, self.config.sample_rate())
    }

    /// Resamples to the filterbank rate if needed, then builds the cochleagram.
    pub fn cochleagram(&self, clip: &AudioClip) -> Result<Cochleagram> {
        let clip = if clip.sample_rate == self.config.sample_rate() {
            std::borrow::Cow::Borrowed(clip)
        } else {
            std::borrow::Cow::Owned(resample(clip, self.config.sample_rate())?)
        };
        cochleagram(&self.filterbank, &clip, self.frame_len())
    }

    pub fn feature_image(&self, clip: &AudioClip) -> Result<FeatureImage> {
        let coch = self.cochleagram(clip)?;
        to_feature_image(&coch, self.config.image_height, self.config.image_width)
    }
}
