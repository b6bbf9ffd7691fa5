//! Label cleanup applied after inference: a mode filter followed by merging
//! of runs shorter than a minimum length.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metrics::to_segments;

/// One pass of the windowed mode filter. Windows are truncated at the edges.
fn mode_pass(labels: &[usize], half: usize, out: &mut Vec<usize>) {
    out.clear();
    let t_len = labels.len();
    for t in 0..t_len {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(t_len);
        let window = &labels[lo..hi];
        let center = labels[t];
        let count = |c: usize| window.iter().filter(|&&x| x == c).count();
        let center_count = count(center);
        let mut best = center;
        let mut best_count = center_count;
        for &c in window {
            let n = count(c);
            if n > best_count {
                best = c;
                best_count = n;
            }
        }
        out.push(best);
    }
}

/// Mode filter of odd width `window`, repeated until nothing changes.
///
/// Ties keep the center label when it is among the modes, otherwise the
/// mode appearing first in the window wins. Repetition makes the filter
/// idempotent; a single pass is not (alternating labels shift rather than
/// settle).
pub fn median_filter(labels: &[usize], window: usize) -> Result<Vec<usize>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Parameter(alloc::format!(
            "window {} must be odd and positive",
            window
        )));
    }
    let half = window / 2;
    let mut cur = labels.to_vec();
    let mut next = Vec::with_capacity(labels.len());
    // each effective pass removes at least one boundary, so T passes suffice
    for _ in 0..=labels.len() {
        mode_pass(&cur, half, &mut next);
        if next == cur {
            return Ok(cur);
        }
        core::mem::swap(&mut cur, &mut next);
    }
    Err(Error::Numerical(
        "mode filter did not reach a fixed point".into(),
    ))
}

/// Merges runs shorter than `min_len` into a neighbour until none remain or
/// a single run is left.
///
/// The shortest offending run goes first (the later one on ties) and joins
/// the longer adjacent run, the preceding one on ties.
pub fn collapse_short_runs(labels: &[usize], min_len: usize) -> Result<Vec<usize>> {
    if min_len == 0 {
        return Err(Error::Parameter("min_len must be at least 1".into()));
    }
    let mut runs: Vec<(usize, usize)> = to_segments(labels)
        .segments()
        .iter()
        .map(|s| (s.class, s.len()))
        .collect();
    while runs.len() > 1 {
        let mut pick: Option<usize> = None;
        for (i, &(_, n)) in runs.iter().enumerate() {
            if n < min_len && pick.is_none_or(|p| n <= runs[p].1) {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let into = match (i.checked_sub(1), (i + 1 < runs.len()).then_some(i + 1)) {
            (Some(p), Some(n)) => {
                if runs[n].1 > runs[p].1 {
                    n
                } else {
                    p
                }
            }
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => unreachable!("more than one run"),
        };
        runs[into].1 += runs[i].1;
        runs.remove(i);
        // neighbours of the removed run may now share a class
        let j = i.min(runs.len() - 1).saturating_sub(1);
        if j + 1 < runs.len() && runs[j].0 == runs[j + 1].0 {
            runs[j].1 += runs[j + 1].1;
            runs.remove(j + 1);
        }
    }
    Ok(runs
        .iter()
        .flat_map(|&(c, n)| core::iter::repeat_n(c, n))
        .collect())
}

/// Which cleanup steps run and with what parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostprocessConfig {
    pub median: bool,
    pub window: usize,
    pub collapse: bool,
    pub min_len: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            median: true,
            window: 3,
            collapse: true,
            min_len: 5,
        }
    }
}

impl PostprocessConfig {
    pub fn disabled() -> Self {
        Self {
            median: false,
            collapse: false,
            ..Self::default()
        }
    }
}

/// Mode filter, then run collapsing.
pub fn postprocess(labels: &[usize], cfg: &PostprocessConfig) -> Result<Vec<usize>> {
    let mut out = labels.to_vec();
    if cfg.median {
        out = median_filter(&out, cfg.window)?;
    }
    if cfg.collapse {
        out = collapse_short_runs(&out, cfg.min_len)?;
    }
    Ok(out)
}
