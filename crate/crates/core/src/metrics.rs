//! Frame accuracy, segmental F1@k and edit score.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};

/// F1 overlap thresholds reported by default, as fractions.
pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

/// A maximal constant run `[start, end)` of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub class: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Intersection over union of half-open frame intervals.
    pub fn iou(&self, other: &Segment) -> f64 {
        let inter = self
            .end
            .min(other.end)
            .saturating_sub(self.start.max(other.start));
        let union = self.end.max(other.end) - self.start.min(other.start);
        inter as f64 / union as f64
    }
}

/// Run-length form of a label sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentList(Vec<Segment>);

impl SegmentList {
    pub fn segments(&self) -> &[Segment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.0.last().map_or(0, |s| s.end)
    }

    pub fn transcript(&self) -> Vec<usize> {
        self.0.iter().map(|s| s.class).collect()
    }

    pub fn expand(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.frames());
        for s in &self.0 {
            out.extend(core::iter::repeat_n(s.class, s.len()));
        }
        out
    }
}

pub fn to_segments(labels: &[usize]) -> SegmentList {
    let mut segs: Vec<Segment> = Vec::new();
    for (t, &c) in labels.iter().enumerate() {
        match segs.last_mut() {
            Some(s) if s.class == c => s.end = t + 1,
            _ => segs.push(Segment {
                class: c,
                start: t,
                end: t + 1,
            }),
        }
    }
    SegmentList(segs)
}

/// Class order of the maximal runs.
pub fn transcript(labels: &[usize]) -> Vec<usize> {
    to_segments(labels).transcript()
}

fn check_pair(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(dim_err!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        ));
    }
    if gt.is_empty() {
        return Err(dim_err!("empty label sequences"));
    }
    Ok(())
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Parameter(alloc::format!(
            "IoU threshold {} outside (0, 1]",
            threshold
        )));
    }
    Ok(())
}

pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_pair(pred, gt)?;
    let hits = pred.iter().zip(gt).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / gt.len() as f64)
}

/// True positives, false positives and false negatives of segment matching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl SegmentCounts {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            return 100.0;
        }
        100.0 * 2.0 * self.tp as f64 / denom as f64
    }

    pub fn add(&mut self, other: SegmentCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// How predicted segments are paired with ground-truth segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matching {
    /// Maximum one-to-one matching over same-class pairs with IoU ≥ threshold.
    #[default]
    Optimal,
    /// Reference-evaluation convention: each prediction looks only at its
    /// best-IoU ground-truth segment and counts a false positive if that
    /// segment is already taken.
    Reference,
}

fn optimal_counts(p: &[Segment], g: &[Segment], threshold: f64) -> SegmentCounts {
    // candidates per prediction, best IoU first, earliest GT on ties
    let adj: Vec<Vec<usize>> = p
        .iter()
        .map(|ps| {
            let mut c: Vec<(usize, f64)> = g
                .iter()
                .enumerate()
                .filter(|(_, gs)| gs.class == ps.class)
                .map(|(j, gs)| (j, ps.iou(gs)))
                .filter(|&(_, iou)| iou >= threshold)
                .collect();
            c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            c.into_iter().map(|(j, _)| j).collect()
        })
        .collect();

    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none() || augment(owner[j].unwrap(), adj, seen, owner) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; g.len()];
    let mut tp = 0;
    for i in 0..p.len() {
        let mut seen = vec![false; g.len()];
        if augment(i, &adj, &mut seen, &mut owner) {
            tp += 1;
        }
    }
    SegmentCounts {
        tp,
        fp: p.len() - tp,
        fn_: g.len() - tp,
    }
}

fn reference_counts(p: &[Segment], g: &[Segment], threshold: f64) -> SegmentCounts {
    let mut taken = vec![false; g.len()];
    let mut tp = 0;
    for ps in p {
        let mut best: Option<(usize, f64)> = None;
        for (j, gs) in g.iter().enumerate() {
            let iou = if gs.class == ps.class {
                ps.iou(gs)
            } else {
                0.0
            };
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, iou)) = best {
            if iou >= threshold && !taken[j] {
                taken[j] = true;
                tp += 1;
            }
        }
    }
    SegmentCounts {
        tp,
        fp: p.len() - tp,
        fn_: g.len() - tp,
    }
}

pub fn segment_counts(
    pred: &[usize],
    gt: &[usize],
    threshold: f64,
    matching: Matching,
) -> Result<SegmentCounts> {
    check_pair(pred, gt)?;
    check_threshold(threshold)?;
    let (p, g) = (to_segments(pred), to_segments(gt));
    Ok(match matching {
        Matching::Optimal => optimal_counts(p.segments(), g.segments(), threshold),
        Matching::Reference => reference_counts(p.segments(), g.segments(), threshold),
    })
}

/// Segmental F1 in percent at IoU `threshold` with optimal matching.
pub fn f1_at(pred: &[usize], gt: &[usize], threshold: f64) -> Result<f64> {
    segment_counts(pred, gt, threshold, Matching::Optimal).map(|c| c.f1())
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn edit_score(pred: &[usize], gt: &[usize]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(dim_err!("edit score needs nonempty sequences"));
    }
    let (p, g) = (transcript(pred), transcript(gt));
    let d = levenshtein(&p, &g);
    Ok((100.0 * (1.0 - d as f64 / p.len().max(g.len()) as f64)).max(0.0))
}

/// Dataset-level scores in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub acc: f64,
    /// `(threshold, F1)` pairs in ascending threshold order.
    pub f1: Vec<(f64, f64)>,
    pub edit: f64,
}

impl MetricReport {
    pub fn f1_at(&self, threshold: f64) -> Option<f64> {
        self.f1
            .iter()
            .find(|(t, _)| (t - threshold).abs() < 1e-12)
            .map(|&(_, v)| v)
    }

    /// `acc=… f1@10=… f1@25=… f1@50=… edit=…` records, one per line.
    pub fn key_values(&self) -> Vec<(alloc::string::String, f64)> {
        let mut out = vec![("acc".into(), self.acc)];
        for &(t, v) in &self.f1 {
            out.push((alloc::format!("f1@{}", libm::round(t * 100.0) as u32), v));
        }
        out.push(("edit".into(), self.edit));
        out
    }
}

/// Accumulates per-video results: frames and segment counts are pooled,
/// edit scores are averaged over videos.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    matching: Matching,
    correct: usize,
    frames: usize,
    counts: Vec<SegmentCounts>,
    edit_sum: f64,
    videos: usize,
}

impl MetricAccumulator {
    pub fn new(matching: Matching) -> Self {
        Self {
            matching,
            correct: 0,
            frames: 0,
            counts: vec![SegmentCounts::default(); F1_THRESHOLDS.len()],
            edit_sum: 0.0,
            videos: 0,
        }
    }

    pub fn add(&mut self, pred: &[usize], gt: &[usize]) -> Result<()> {
        check_pair(pred, gt)?;
        let mut per = Vec::with_capacity(F1_THRESHOLDS.len());
        for &t in &F1_THRESHOLDS {
            per.push(segment_counts(pred, gt, t, self.matching)?);
        }
        for (acc, c) in self.counts.iter_mut().zip(per) {
            acc.add(c);
        }
        self.correct += pred.iter().zip(gt).filter(|(a, b)| a == b).count();
        self.frames += gt.len();
        self.edit_sum += edit_score(pred, gt)?;
        self.videos += 1;
        Ok(())
    }

    pub fn videos(&self) -> usize {
        self.videos
    }

    pub fn report(&self) -> Result<MetricReport> {
        if self.videos == 0 {
            return Err(Error::Usage("no videos accumulated".into()));
        }
        Ok(MetricReport {
            acc: 100.0 * self.correct as f64 / self.frames as f64,
            f1: F1_THRESHOLDS
                .iter()
                .zip(&self.counts)
                .map(|(&t, c)| (t, c.f1()))
                .collect(),
            edit: self.edit_sum / self.videos as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: usize = 0;
    const B: usize = 1;

    fn runs(spec: &[(usize, usize)]) -> Vec<usize> {
        spec.iter()
            .flat_map(|&(c, n)| core::iter::repeat_n(c, n))
            .collect()
    }

    #[test]
    fn segments_round_trip() {
        let s = to_segments(&[A, A, B, B, B]);
        assert_eq!(
            s.segments(),
            &[
                Segment {
                    class: A,
                    start: 0,
                    end: 2
                },
                Segment {
                    class: B,
                    start: 2,
                    end: 5
                }
            ]
        );
        assert_eq!(
            to_segments(&[A]).segments(),
            &[Segment {
                class: A,
                start: 0,
                end: 1
            }]
        );
        assert_eq!(s.expand(), vec![A, A, B, B, B]);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(frame_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(frame_accuracy(&[0, 1, 0], &[1, 0, 1]).unwrap(), 0.0);
        let gt = [0; 10];
        let pred = runs(&[(0, 5), (1, 5)]);
        assert_eq!(frame_accuracy(&pred, &gt).unwrap(), 50.0);
        assert!(matches!(
            frame_accuracy(&[0], &[0, 0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn f1_cases() {
        let gt = runs(&[(A, 10), (B, 10)]);
        for t in F1_THRESHOLDS {
            assert_eq!(f1_at(&gt, &gt, t).unwrap(), 100.0);
        }
        let merged = runs(&[(A, 20)]);
        assert!((f1_at(&merged, &gt, 0.5).unwrap() - 200.0 / 3.0).abs() < 1e-9);
        let shifted = runs(&[(A, 9), (B, 11)]);
        assert_eq!(f1_at(&shifted, &gt, 0.5).unwrap(), 100.0);
        assert!(f1_at(&gt, &gt, 0.0).is_err());
    }

    #[test]
    fn optimal_beats_greedy_here() {
        // greedy by best IoU pairs pred A[2,8) with gt A[5,12), leaving A[9,12) unmatched
        let gt = runs(&[(A, 4), (B, 1), (A, 7)]);
        let pred = runs(&[(B, 2), (A, 6), (B, 1), (A, 3)]);
        let opt = segment_counts(&pred, &gt, 0.25, Matching::Optimal).unwrap();
        let reference = segment_counts(&pred, &gt, 0.25, Matching::Reference).unwrap();
        assert_eq!((opt.tp, reference.tp), (2, 1));
    }

    #[test]
    fn edit_cases() {
        assert_eq!(edit_score(&[0, 0, 1], &[0, 1, 1]).unwrap(), 100.0);
        let gt = [0, 1, 2, 3];
        let pred = [0, 1, 9, 2, 3];
        assert!((edit_score(&pred, &gt).unwrap() - 80.0).abs() < 1e-12);
        assert_eq!(edit_score(&[0, 1, 0], &[2, 3, 2]).unwrap(), 0.0);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn accumulator_pools_counts() {
        let mut acc = MetricAccumulator::new(Matching::Optimal);
        let gt = runs(&[(A, 10), (B, 10)]);
        acc.add(&gt, &gt).unwrap();
        acc.add(&runs(&[(A, 20)]), &gt).unwrap();
        let r = acc.report().unwrap();
        assert_eq!(r.acc, 75.0);
        // tp 3, fp 0, fn 1
        assert!((r.f1_at(0.5).unwrap() - 600.0 / 7.0).abs() < 1e-9);
        assert_eq!(r.edit, 75.0);
        assert_eq!(r.key_values()[3].0, "f1@50");
    }
}
