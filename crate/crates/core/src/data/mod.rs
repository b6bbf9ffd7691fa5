//! Class vocabulary and task grammar, split arithmetic, normalization and
//! the synthetic demonstration generator.

mod split;
mod synth;
mod vocab;
mod zscore;

use alloc::string::String;
use alloc::vec::Vec;

use crate::numcore::Tensor;

pub use split::{split_counts, SplitCounts, SplitSpec};
pub use synth::{
    generate_dataset, generate_demo, jitter, standard_dominance, video_rng, Dataset,
    SyntheticGenConfig, FLOW_DOMINANT,
};
pub use vocab::{ClassVocabulary, TaskGrammar, STANDARD_CLASSES, STANDARD_TASKS};
pub use zscore::{zscore_fit_apply, ZScore, STD_FLOOR};

/// Paired `T × D` feature streams with per-frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub name: String,
    pub task: String,
    pub rgb: Tensor,
    pub flow: Tensor,
    pub labels: Vec<usize>,
}

impl Video {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Statistics for each stream, fitted on training videos only.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamNormalizer {
    pub rgb: ZScore,
    pub flow: ZScore,
}

impl StreamNormalizer {
    pub fn fit(train: &[Video]) -> crate::Result<Self> {
        let rgb: Vec<&Tensor> = train.iter().map(|v| &v.rgb).collect();
        let flow: Vec<&Tensor> = train.iter().map(|v| &v.flow).collect();
        Ok(Self {
            rgb: ZScore::fit(&rgb)?,
            flow: ZScore::fit(&flow)?,
        })
    }

    pub fn apply(&self, video: &Video) -> crate::Result<Video> {
        Ok(Video {
            rgb: self.rgb.apply(&video.rgb)?,
            flow: self.flow.apply(&video.flow)?,
            ..video.clone()
        })
    }

    pub fn apply_all(&self, videos: &[Video]) -> crate::Result<Vec<Video>> {
        videos.iter().map(|v| self.apply(v)).collect()
    }
}
