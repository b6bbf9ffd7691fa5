//! Flat `key = value` run configuration.
//!
//! Values come from the defaults, then a config file, then command-line
//! overrides, each layer replacing the previous one key by key.

use std::fmt::Write as _;
use std::path::Path;

use subtask_core::data::{ClassVocabulary, SplitSpec, SyntheticGenConfig};
use subtask_core::exec::ControllerConfig;
use subtask_core::loss::LossConfig;
use subtask_core::metrics::Matching;
use subtask_core::model::ModelConfig;
use subtask_core::postprocess::PostprocessConfig;
use subtask_core::tcn::ScheduleKind;
use subtask_core::trainer::TrainConfig;

use crate::error::{usage, FormatError, Result};
use crate::formats::read_text;

trait Value: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|_| format!("`{}` is not a valid {}", s, stringify!($t)))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
numeric_value!(f64, usize, u64);

impl Value for bool {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(format!("`{}` is not a boolean", s)),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

macro_rules! config {
    ($($key:ident : $ty:ty = $default:expr),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Config {
            $(pub $key: $ty,)*
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $($key: $default,)* }
            }
        }

        impl Config {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Sets one key; unknown keys and unparsable values are errors.
            pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $(stringify!($key) => self.$key = <$ty as Value>::parse_value(value)?,)*
                    _ => return Err(format!("unknown config key `{}`", key)),
                }
                Ok(())
            }

            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($key), Value::render(&self.$key)),)*]
            }
        }
    };
}

config! {
    seed: u64 = 0,
    // synthetic data
    feature_dim: usize = 64,
    videos_per_task: usize = 25,
    r_val: f64 = 0.2,
    augmentations: usize = 0,
    jitter: f64 = 0.05,
    noise: f64 = 1.0,
    glitch: f64 = 0.0,
    min_duration: usize = 8,
    max_duration: usize = 16,
    // model
    stages: usize = 4,
    layers: usize = 10,
    kernel: usize = 3,
    channels: usize = 64,
    schedule: String = "fibonacci".into(),
    dropout: f64 = 0.5,
    // loss
    lambda: f64 = 0.15,
    gamma: f64 = 0.25,
    tau: f64 = 4.0,
    class_weights: String = "inverse".into(),
    // optimization
    eta0: f64 = 5e-4,
    warmup_epochs: usize = 5,
    max_epochs: usize = 50,
    batch_size: usize = 8,
    clip_norm: f64 = 5.0,
    weight_decay: f64 = 1e-4,
    patience: usize = 5,
    // post-processing and evaluation
    median: bool = true,
    window: usize = 3,
    collapse: bool = true,
    min_len: usize = 5,
    matching: String = "optimal".into(),
    // execution
    n_basis: usize = 20,
    dmp_duration: f64 = 1.0,
    dmp_dt: f64 = 1e-3,
    k_x: f64 = 1.0,
    k_pz: f64 = 1.0,
    d_ref: f64 = 0.5,
    v_max: f64 = 0.25,
    tolerance: f64 = 1e-3,
    max_servo_steps: usize = 20000,
    home_x: f64 = 0.2,
    home_y: f64 = 0.0,
    home_z: f64 = 0.35,
}

impl Config {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> std::result::Result<(), FormatError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FormatError::line(i + 1, "expected `key = value`"))?;
            self.set(k.trim(), v.trim())
                .map_err(|m| FormatError::line(i + 1, m))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&read_text(path)?)
            .map_err(|e| e.in_file(path))
    }

    /// Applies `key=value` overrides from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("override `{}` is not key=value", o)))?;
            self.set(k.trim(), v.trim()).map_err(usage)?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides`.
    pub fn load<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    /// Every key, one `key = value` line each, in declaration order.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .fold(String::new(), |mut s, (k, v)| {
                let _ = writeln!(s, "{} = {}", k, v);
                s
            })
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        Ok(ScheduleKind::parse(&self.schedule)?)
    }

    pub fn model(&self, classes: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            feature_dim: self.feature_dim,
            classes,
            channels: self.channels,
            layers: self.layers,
            kernel: self.kernel,
            stages: self.stages,
            schedule: self.schedule_kind()?,
            dropout: self.dropout,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loss weights; class weights are filled in from the training labels
    /// when `class_weights = inverse`.
    pub fn loss<'a>(
        &self,
        classes: usize,
        train: impl IntoIterator<Item = &'a [usize]>,
    ) -> Result<LossConfig> {
        let class_weights = match self.class_weights.as_str() {
            "inverse" => subtask_core::loss::inverse_frequency_weights(train, classes),
            "uniform" => vec![1.0; classes],
            other => {
                return Err(usage(format!(
                    "class_weights must be inverse or uniform, got `{}`",
                    other
                )))
            }
        };
        let cfg = LossConfig {
            lambda: self.lambda,
            gamma: self.gamma,
            tau: self.tau,
            class_weights,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn postprocess(&self) -> PostprocessConfig {
        PostprocessConfig {
            median: self.median,
            window: self.window,
            collapse: self.collapse,
            min_len: self.min_len,
        }
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            eta0: self.eta0,
            warmup_epochs: self.warmup_epochs,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            weight_decay: self.weight_decay,
            patience: self.patience,
            seed: self.seed,
            postprocess: self.postprocess(),
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn matching(&self) -> Result<Matching> {
        match self.matching.as_str() {
            "optimal" => Ok(Matching::Optimal),
            "reference" => Ok(Matching::Reference),
            other => Err(usage(format!(
                "matching must be optimal or reference, got `{}`",
                other
            ))),
        }
    }

    pub fn split(&self, tasks: usize) -> SplitSpec {
        SplitSpec {
            r_val: self.r_val,
            videos_per_task: self.videos_per_task,
            augmentations: self.augmentations,
            tasks,
        }
    }

    pub fn generator(&self, vocab: &ClassVocabulary) -> Result<SyntheticGenConfig> {
        let mut g = SyntheticGenConfig::new(vocab, self.feature_dim, self.noise, self.seed);
        g.durations = vec![(self.min_duration, self.max_duration); vocab.len()];
        g.glitch = self.glitch;
        g.validate()?;
        Ok(g)
    }

    pub fn controller(&self) -> Result<ControllerConfig> {
        let cfg = ControllerConfig {
            k_x: self.k_x,
            k_pz: self.k_pz,
            d_ref: self.d_ref,
            v_max: [self.v_max; 3],
            tolerance: [self.tolerance; 3],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn home(&self) -> [f64; 3] {
        [self.home_x, self.home_y, self.home_z]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let mut cfg = Config::default();
        cfg.apply_text("eta0 = 1e-3\n# comment\nwindow=5 # trailing\n")
            .unwrap();
        cfg.apply_overrides(&["window=7"]).unwrap();
        assert_eq!((cfg.eta0, cfg.window, cfg.min_len), (1e-3, 7, 5));
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut cfg = Config::default();
        let err = cfg.apply_text("eta0 = 1\nlearning_rate = 2\n").unwrap_err();
        assert_eq!(err.at, crate::error::Location::Line(2));
        assert!(cfg.apply_overrides(&["bogus=1"]).is_err());
        assert!(cfg.apply_overrides(&["window=three"]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = Config {
            eta0: 1.0 / 3.0,
            median: false,
            ..Config::default()
        };
        cfg.schedule = "exponential".into();
        let mut back = Config::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.entries().len(), Config::KEYS.len());
    }

    #[test]
    fn defaults_match_library() {
        let cfg = Config::default();
        let v = ClassVocabulary::standard();
        assert_eq!(cfg.model(8).unwrap(), ModelConfig::standard(64, 8));
        assert_eq!(cfg.train().unwrap(), TrainConfig::default());
        assert_eq!(cfg.postprocess(), PostprocessConfig::default());
        assert_eq!(cfg.controller().unwrap(), ControllerConfig::default());
        assert_eq!(
            cfg.generator(&v).unwrap(),
            SyntheticGenConfig::standard(&v, 0)
        );
    }
}
