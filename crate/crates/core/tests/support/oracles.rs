//! Brute-force references for the segmental metrics. Shared with the
//! acceptance harness.

use rand::Rng;

/// `(class, start, end)` runs, end exclusive.
pub fn runs(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.0 == l => r.2 = t + 1,
            _ => out.push((l, t, t + 1)),
        }
    }
    out
}

fn iou(a: (usize, usize, usize), b: (usize, usize, usize)) -> f64 {
    let inter = a.2.min(b.2).saturating_sub(a.1.max(b.1));
    let union = a.2.max(b.2) - a.1.min(b.1);
    inter as f64 / union as f64
}

/// Largest number of one-to-one same-class pairs with IoU ≥ `threshold`,
/// by exhaustive search over assignments.
pub fn brute_force_tp(pred: &[usize], gt: &[usize], threshold: f64) -> usize {
    let (p, g) = (runs(pred), runs(gt));
    fn search(
        i: usize,
        p: &[(usize, usize, usize)],
        g: &[(usize, usize, usize)],
        used: &mut Vec<bool>,
        thr: f64,
    ) -> usize {
        if i == p.len() {
            return 0;
        }
        let mut best = search(i + 1, p, g, used, thr);
        for j in 0..g.len() {
            if !used[j] && p[i].0 == g[j].0 && iou(p[i], g[j]) >= thr {
                used[j] = true;
                best = best.max(1 + search(i + 1, p, g, used, thr));
                used[j] = false;
            }
        }
        best
    }
    search(0, &p, &g, &mut vec![false; g.len()], threshold)
}

pub fn brute_force_f1(pred: &[usize], gt: &[usize], threshold: f64) -> f64 {
    let tp = brute_force_tp(pred, gt, threshold);
    let (np, ng) = (runs(pred).len(), runs(gt).len());
    let (fp, fn_) = (np - tp, ng - tp);
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return 100.0;
    }
    100.0 * 2.0 * tp as f64 / denom as f64
}

/// Full-table edit distance.
pub fn dp_levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

pub fn dp_edit_score(pred: &[usize], gt: &[usize]) -> f64 {
    let p: Vec<usize> = runs(pred).iter().map(|r| r.0).collect();
    let g: Vec<usize> = runs(gt).iter().map(|r| r.0).collect();
    let d = dp_levenshtein(&p, &g);
    (100.0 * (1.0 - d as f64 / p.len().max(g.len()) as f64)).max(0.0)
}

/// A label sequence of exactly `len` frames with `segments` runs over
/// `classes` classes.
pub fn random_runs<R: Rng>(rng: &mut R, len: usize, segments: usize, classes: usize) -> Vec<usize> {
    let segments = segments.clamp(1, len);
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, len - 1, segments - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    cuts.push(len);
    let mut out = Vec::with_capacity(len);
    let mut prev = usize::MAX;
    let mut start = 0;
    for end in cuts {
        let mut c = rng.random_range(0..classes);
        while c == prev {
            c = rng.random_range(0..classes);
        }
        out.extend(std::iter::repeat_n(c, end - start));
        prev = c;
        start = end;
    }
    out
}

/// A random `(pred, gt)` pair, each with at most `max_segments` runs.
pub fn random_instance<R: Rng>(rng: &mut R, max_segments: usize) -> (Vec<usize>, Vec<usize>) {
    let len = rng.random_range(max_segments..=4 * max_segments);
    let (kg, kp) = (
        rng.random_range(1..=max_segments),
        rng.random_range(1..=max_segments),
    );
    let gt = random_runs(rng, len, kg, 3);
    let pred = random_runs(rng, len, kp, 3);
    (pred, gt)
}
