use crate::error::{Error, Result};

/// Hold-out fraction, videos per task and augmentation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub r_val: f64,
    pub videos_per_task: usize,
    /// `|A|`, the number of augmentations applied to each training video.
    pub augmentations: usize,
    pub tasks: usize,
}

/// Video counts implied by a [`SplitSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    /// Original training videos per task, before augmentation.
    pub train_per_task: usize,
    /// `(1 − r_val)·N_t·(1 + |A|)`.
    pub train_aug_per_task: usize,
    pub val_per_task: usize,
    pub total_train: usize,
    pub total_val: usize,
}

pub fn split_counts(spec: &SplitSpec) -> Result<SplitCounts> {
    if !(0.0..1.0).contains(&spec.r_val) {
        return Err(Error::Config(alloc::format!(
            "r_val {} outside [0, 1)",
            spec.r_val
        )));
    }
    if spec.videos_per_task == 0 || spec.tasks == 0 {
        return Err(Error::Config(
            "need at least one task and one video per task".into(),
        ));
    }
    let val = spec.r_val * spec.videos_per_task as f64;
    let rounded = libm::round(val);
    if (val - rounded).abs() > 1e-9 {
        return Err(Error::Config(alloc::format!(
            "r_val {} of {} videos is not an integral split",
            spec.r_val,
            spec.videos_per_task
        )));
    }
    let val_per_task = rounded as usize;
    let train_per_task = spec.videos_per_task - val_per_task;
    let train_aug_per_task = train_per_task * (1 + spec.augmentations);
    Ok(SplitCounts {
        train_per_task,
        train_aug_per_task,
        val_per_task,
        total_train: train_aug_per_task * spec.tasks,
        total_val: val_per_task * spec.tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_counts() {
        let c = split_counts(&SplitSpec {
            r_val: 0.2,
            videos_per_task: 200,
            augmentations: 2,
            tasks: 4,
        })
        .unwrap();
        assert_eq!(
            (c.train_aug_per_task, c.total_train, c.total_val),
            (480, 1920, 160)
        );
    }

    #[test]
    fn no_op_split() {
        let c = split_counts(&SplitSpec {
            r_val: 0.0,
            videos_per_task: 13,
            augmentations: 0,
            tasks: 1,
        })
        .unwrap();
        assert_eq!((c.train_aug_per_task, c.val_per_task), (13, 0));
    }

    #[test]
    fn fractional_split_rejected() {
        let r = split_counts(&SplitSpec {
            r_val: 0.3,
            videos_per_task: 25,
            augmentations: 0,
            tasks: 4,
        });
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
