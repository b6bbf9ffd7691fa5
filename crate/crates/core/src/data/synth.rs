use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::split::{split_counts, SplitSpec};
use super::vocab::{ClassVocabulary, TaskGrammar};
use super::Video;
use crate::error::{dim_err, Error, Result};
use crate::fusion::Modality;
use crate::numcore::Tensor;

/// Classes whose prototype lives in the flow stream; all others use RGB.
pub const FLOW_DOMINANT: [&str; 4] = ["reach", "retract", "wipe", "move"];

/// Parameters of the synthetic demonstration generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGenConfig {
    /// Per-modality width `D`.
    pub feature_dim: usize,
    /// Inclusive `(min, max)` segment length per class.
    pub durations: Vec<(usize, usize)>,
    /// `C × D` class prototypes, placed in the dominant stream.
    pub prototypes: Tensor,
    pub dominance: Vec<Modality>,
    /// Standard deviation of the per-frame Gaussian noise in both streams.
    pub noise: f64,
    /// Per-frame probability of starting a 1–3 frame burst that shows another
    /// class's features while keeping the true label.
    pub glitch: f64,
    pub seed: u64,
}

pub fn standard_dominance(vocab: &ClassVocabulary) -> Vec<Modality> {
    vocab
        .names()
        .iter()
        .map(|n| {
            if FLOW_DOMINANT.contains(&n.as_str()) {
                Modality::Flow
            } else {
                Modality::Rgb
            }
        })
        .collect()
}

impl SyntheticGenConfig {
    /// Standard-normal prototypes drawn from `seed`, durations 8–16 frames.
    pub fn new(vocab: &ClassVocabulary, feature_dim: usize, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = vocab.len();
        let protos = (0..c * feature_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            feature_dim,
            durations: alloc::vec![(8, 16); c],
            prototypes: Tensor::new(&[c, feature_dim.max(1)], protos)
                .unwrap_or_else(|_| Tensor::zeros(&[c, 1])),
            dominance: standard_dominance(vocab),
            noise,
            glitch: 0.0,
            seed,
        }
    }

    /// `D = 64`, unit noise.
    pub fn standard(vocab: &ClassVocabulary, seed: u64) -> Self {
        Self::new(vocab, 64, 1.0, seed)
    }

    pub fn classes(&self) -> usize {
        self.dominance.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.classes();
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.durations.len() != c || self.prototypes.shape() != [c, self.feature_dim] {
            return Err(dim_err!(
                "{} classes need {} duration ranges and {}×{} prototypes",
                c,
                c,
                c,
                self.feature_dim
            ));
        }
        if self.durations.iter().any(|&(lo, hi)| lo == 0 || hi < lo) {
            return Err(Error::Config("duration ranges need 1 ≤ min ≤ max".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config(alloc::format!(
                "noise {} must be nonnegative",
                self.noise
            )));
        }
        if !(0.0..=1.0).contains(&self.glitch) {
            return Err(Error::Config(alloc::format!(
                "glitch rate {} must lie in [0, 1]",
                self.glitch
            )));
        }
        if self.dominance.iter().any(|m| *m == Modality::Fused) {
            return Err(Error::Config("dominance must be rgb or flow".into()));
        }
        Ok(())
    }
}

/// One synthetic demonstration of `task`.
pub fn generate_demo<R: Rng + ?Sized>(
    task: &str,
    grammar: &TaskGrammar,
    cfg: &SyntheticGenConfig,
    rng: &mut R,
) -> Result<Video> {
    cfg.validate()?;
    let seq = grammar.sequence(task)?;
    if let Some(&bad) = seq.iter().find(|&&c| c >= cfg.classes()) {
        return Err(dim_err!(
            "grammar uses class {} but generator knows {}",
            bad,
            cfg.classes()
        ));
    }
    let mut labels = Vec::new();
    for &c in seq {
        let (lo, hi) = cfg.durations[c];
        let n = rng.random_range(lo..=hi);
        labels.extend(core::iter::repeat_n(c, n));
    }
    let d = cfg.feature_dim;
    let mut rgb = Vec::with_capacity(labels.len() * d);
    let mut flow = Vec::with_capacity(labels.len() * d);
    let classes = cfg.classes();
    let mut burst = (0usize, 0usize);
    for &label in &labels {
        if burst.0 == 0 && classes > 1 && cfg.glitch > 0.0 && rng.random_bool(cfg.glitch) {
            let other = (label + rng.random_range(1..classes)) % classes;
            burst = (rng.random_range(1..=3), other);
        }
        let c = if burst.0 > 0 {
            burst.0 -= 1;
            burst.1
        } else {
            label
        };
        let proto = cfg.prototypes.row(c);
        for &p in proto {
            let nr: f64 = rng.sample(StandardNormal);
            let nf: f64 = rng.sample(StandardNormal);
            let (pr, pf) = match cfg.dominance[c] {
                Modality::Flow => (0.0, p),
                _ => (p, 0.0),
            };
            rgb.push(pr + cfg.noise * nr);
            flow.push(pf + cfg.noise * nf);
        }
    }
    let t = labels.len();
    Ok(Video {
        name: String::from(task),
        task: String::from(task),
        rgb: Tensor::new(&[t, d], rgb)?,
        flow: Tensor::new(&[t, d], flow)?,
        labels,
    })
}

/// Copy of `video` with additive Gaussian jitter of deviation `sigma`.
pub fn jitter<R: Rng + ?Sized>(video: &Video, sigma: f64, rng: &mut R) -> Video {
    let mut add = |x: &Tensor| {
        let data = x
            .data()
            .iter()
            .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor::new(x.shape(), data).expect("same shape")
    };
    let rgb = add(&video.rgb);
    let flow = add(&video.flow);
    Video {
        rgb,
        flow,
        ..video.clone()
    }
}

/// Training and hold-out videos.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Video>,
    pub val: Vec<Video>,
}

/// Generator for video `index` of task `task_index`, independent of every
/// other video.
pub fn video_rng(seed: u64, task_index: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + ((task_index as u64) << 32) + index as u64);
    rng
}

/// Builds the split described by `split` with one generator stream per
/// video. The first `(1 − r_val)·N_t` videos of each task are training
/// videos; each receives `|A|` jittered copies of deviation `jitter_sigma`.
pub fn generate_dataset(
    grammar: &TaskGrammar,
    cfg: &SyntheticGenConfig,
    split: &SplitSpec,
    jitter_sigma: f64,
) -> Result<Dataset> {
    if split.tasks != grammar.len() {
        return Err(Error::Config(alloc::format!(
            "split expects {} tasks, grammar has {}",
            split.tasks,
            grammar.len()
        )));
    }
    let counts = split_counts(split)?;
    let mut train = Vec::with_capacity(counts.total_train);
    let mut val = Vec::with_capacity(counts.total_val);
    for (ti, task) in grammar.task_names().into_iter().enumerate() {
        for vi in 0..split.videos_per_task {
            let mut rng = video_rng(cfg.seed, ti, vi);
            let mut video = generate_demo(task, grammar, cfg, &mut rng)?;
            video.name = alloc::format!("{}-{:03}", task, vi);
            if vi < counts.train_per_task {
                for a in 0..split.augmentations {
                    let mut v = jitter(&video, jitter_sigma, &mut rng);
                    v.name = alloc::format!("{}-{:03}-aug{}", task, vi, a + 1);
                    train.push(v);
                }
                train.push(video);
            } else {
                val.push(video);
            }
        }
    }
    Ok(Dataset { train, val })
}
