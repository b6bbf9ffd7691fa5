//! On-disk formats: feature matrices, label and mapping files, dataset
//! manifests, transition matrices, normalization statistics, plans and
//! trajectory dumps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use subtask_core::data::{ClassVocabulary, StreamNormalizer, ZScore};
use subtask_core::exec::{GoalTable, PrimitivePlan, Trajectory};
use subtask_core::loss::TransitionMatrix;
use subtask_core::numcore::Tensor;

use crate::error::{io_err, FormatError, Result};

pub const FEATURE_MAGIC: &[u8; 5] = b"SSEQ1";
const FEATURE_HEADER: usize = 13;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

/// `T × D` matrix as `SSEQ1`, u32 LE `T` and `D`, then f32 LE row-major.
pub fn encode_features(x: &Tensor) -> Vec<u8> {
    let (t, d) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(FEATURE_HEADER + 4 * t * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> std::result::Result<Tensor, FormatError> {
    if bytes.len() < FEATURE_MAGIC.len() || &bytes[..FEATURE_MAGIC.len()] != FEATURE_MAGIC {
        return Err(FormatError::byte(0, "bad magic, expected SSEQ1"));
    }
    if bytes.len() < FEATURE_HEADER {
        return Err(FormatError::byte(bytes.len() as u64, "truncated header"));
    }
    let u32_at =
        |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (t, d) = (u32_at(5), u32_at(9));
    if t == 0 || d == 0 {
        return Err(FormatError::byte(5, format!("empty matrix {}×{}", t, d)));
    }
    let need = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(FEATURE_HEADER))
        .ok_or_else(|| FormatError::byte(5, "dimensions overflow"))?;
    if bytes.len() < need {
        return Err(FormatError::byte(
            bytes.len() as u64,
            format!(
                "truncated data: {}×{} needs {} bytes, file has {}",
                t,
                d,
                need,
                bytes.len()
            ),
        ));
    }
    if bytes.len() > need {
        return Err(FormatError::byte(need as u64, "trailing bytes after data"));
    }
    let mut data = Vec::with_capacity(t * d);
    for (i, chunk) in bytes[FEATURE_HEADER..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(FormatError::byte(
                (FEATURE_HEADER + 4 * i) as u64,
                format!("non-finite value {}", v),
            ));
        }
        data.push(v as f64);
    }
    Tensor::new(&[t, d], data).map_err(|e| FormatError::byte(0, e.to_string()))
}

pub fn read_features(path: &Path) -> Result<Tensor> {
    decode_features(&read_bytes(path)?).map_err(|e| e.in_file(path))
}

pub fn write_features(path: &Path, x: &Tensor) -> Result<()> {
    write_file(path, encode_features(x))
}

/// Splits a stored `T × 2D` matrix into its RGB and flow halves.
pub fn split_streams(x: &Tensor) -> std::result::Result<(Tensor, Tensor), FormatError> {
    if x.cols() % 2 != 0 {
        return Err(FormatError::byte(
            9,
            format!("width {} is not rgb‖flow (odd)", x.cols()),
        ));
    }
    let d = x.cols() / 2;
    let split = |a, b| {
        x.slice_cols(a, b)
            .map_err(|e| FormatError::byte(9, e.to_string()))
    };
    Ok((split(0, d)?, split(d, 2 * d)?))
}

pub fn read_streams(path: &Path) -> Result<(Tensor, Tensor)> {
    split_streams(&read_features(path)?).map_err(|e| e.in_file(path))
}

pub fn write_streams(path: &Path, rgb: &Tensor, flow: &Tensor) -> Result<()> {
    write_features(path, &rgb.concat_cols(flow)?)
}

/// One class name per line.
pub fn encode_labels(labels: &[usize], vocab: &ClassVocabulary) -> Result<String> {
    let mut out = String::new();
    for &l in labels {
        out.push_str(vocab.name(l)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_labels(
    text: &str,
    vocab: &ClassVocabulary,
) -> std::result::Result<Vec<usize>, FormatError> {
    let labels = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            vocab
                .id(line.trim())
                .map_err(|_| FormatError::line(i + 1, format!("unknown class `{}`", line.trim())))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if labels.is_empty() {
        return Err(FormatError::line(1, "empty label file"));
    }
    Ok(labels)
}

pub fn read_labels(path: &Path, vocab: &ClassVocabulary) -> Result<Vec<usize>> {
    decode_labels(&read_text(path)?, vocab).map_err(|e| e.in_file(path))
}

pub fn write_labels(path: &Path, labels: &[usize], vocab: &ClassVocabulary) -> Result<()> {
    write_file(path, encode_labels(labels, vocab)?)
}

/// `id name` per line.
pub fn encode_mapping(vocab: &ClassVocabulary) -> String {
    vocab
        .names()
        .iter()
        .enumerate()
        .fold(String::new(), |mut s, (i, n)| {
            let _ = writeln!(s, "{} {}", i, n);
            s
        })
}

/// Ids must be dense from 0 and unique; lines may come in any order.
pub fn decode_mapping(text: &str) -> std::result::Result<ClassVocabulary, FormatError> {
    let mut slots: Vec<Option<String>> = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let bad = |msg: String| FormatError::line(i + 1, msg);
        let (id, name) = line
            .trim()
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad("expected `id name`".into()))?;
        let id: usize = id.parse().map_err(|_| bad(format!("bad id `{}`", id)))?;
        let name = name.trim();
        if id >= slots.len() {
            slots.resize(id + 1, None);
        }
        if slots[id].is_some() {
            return Err(bad(format!("duplicate id {}", id)));
        }
        slots[id] = Some(name.to_string());
    }
    if slots.is_empty() {
        return Err(FormatError::line(1, "empty mapping"));
    }
    let names = slots
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            n.ok_or_else(|| FormatError::line(0, format!("ids are not dense: {} missing", i)))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    ClassVocabulary::new(&names).map_err(|e| FormatError::line(0, e.to_string()))
}

pub fn read_mapping(path: &Path) -> Result<ClassVocabulary> {
    decode_mapping(&read_text(path)?).map_err(|e| e.in_file(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: String,
    pub task: String,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl ManifestEntry {
    /// File stem of the feature file, used to name outputs.
    pub fn name(&self) -> String {
        self.features
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// `split<TAB>task<TAB>feature-path<TAB>label-path`; paths are written as given.
pub fn encode_manifest(entries: &[ManifestEntry]) -> String {
    entries.iter().fold(String::new(), |mut s, e| {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            e.split,
            e.task,
            e.features.display(),
            e.labels.display()
        );
        s
    })
}

/// Relative paths are resolved against `base`.
pub fn decode_manifest(
    text: &str,
    base: &Path,
) -> std::result::Result<Vec<ManifestEntry>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let fields: Vec<&str> = line.split('\t').collect();
        let [split, task, features, labels] = fields[..] else {
            return Err(FormatError::line(
                i + 1,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        };
        if split.is_empty() || task.is_empty() || features.is_empty() || labels.is_empty() {
            return Err(FormatError::line(i + 1, "empty field"));
        }
        out.push(ManifestEntry {
            split: split.to_string(),
            task: task.to_string(),
            features: base.join(features),
            labels: base.join(labels),
        });
    }
    if out.is_empty() {
        return Err(FormatError::line(1, "empty manifest"));
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new(""));
    decode_manifest(&read_text(path)?, base).map_err(|e| e.in_file(path))
}

/// Size on the first line, then one row of space-separated 0/1 per line.
pub fn encode_transitions(m: &TransitionMatrix) -> String {
    let n = m.size();
    let mut s = format!("{}\n", n);
    for row in m.entries().chunks(n.max(1)) {
        let cells: Vec<String> = row.iter().map(u8::to_string).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn decode_transitions(text: &str) -> std::result::Result<TransitionMatrix, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| FormatError::line(1, "empty transition file"))?;
    let n: usize = first
        .trim()
        .parse()
        .map_err(|_| FormatError::line(1, format!("bad size `{}`", first.trim())))?;
    let mut entries = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, line) in lines {
        let row = line
            .split_whitespace()
            .map(|c| {
                c.parse::<u8>()
                    .map_err(|_| FormatError::line(i + 1, format!("bad entry `{}`", c)))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if row.len() != n {
            return Err(FormatError::line(
                i + 1,
                format!("expected {} entries, got {}", n, row.len()),
            ));
        }
        entries.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(FormatError::line(
            rows + 1,
            format!("expected {} rows, got {}", n, rows),
        ));
    }
    TransitionMatrix::new(n, entries).map_err(|e| FormatError::line(0, e.to_string()))
}

pub fn read_transitions(path: &Path) -> Result<TransitionMatrix> {
    decode_transitions(&read_text(path)?).map_err(|e| e.in_file(path))
}

fn encode_floats(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for v in values {
        let _ = write!(s, " {}", v);
    }
    s.push('\n');
}

/// Four lines `rgb_mean`, `rgb_std`, `flow_mean`, `flow_std`, each followed
/// by the per-channel values in shortest round-trip form.
pub fn encode_normalizer(n: &StreamNormalizer) -> String {
    let mut s = String::new();
    encode_floats(&mut s, "rgb_mean", &n.rgb.mean);
    encode_floats(&mut s, "rgb_std", &n.rgb.std);
    encode_floats(&mut s, "flow_mean", &n.flow.mean);
    encode_floats(&mut s, "flow_std", &n.flow.std);
    s
}

pub fn decode_normalizer(text: &str) -> std::result::Result<StreamNormalizer, FormatError> {
    const KEYS: [&str; 4] = ["rgb_mean", "rgb_std", "flow_mean", "flow_std"];
    let mut rows: [Option<Vec<f64>>; 4] = Default::default();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let k = KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| FormatError::line(i + 1, format!("unknown key `{}`", key)))?;
        let values = parts
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| FormatError::line(i + 1, format!("bad number `{}`", v)))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows[k] = Some(values);
    }
    let [rm, rs, fm, fs] =
        rows.map(|r| r.ok_or_else(|| FormatError::line(0, "missing statistics line")));
    let (rm, rs, fm, fs) = (rm?, rs?, fm?, fs?);
    if rm.len() != rs.len() || fm.len() != fs.len() || rm.is_empty() || fm.is_empty() {
        return Err(FormatError::line(0, "statistics widths disagree"));
    }
    if rs.iter().chain(&fs).any(|s| !(*s > 0.0)) {
        return Err(FormatError::line(0, "standard deviations must be positive"));
    }
    Ok(StreamNormalizer {
        rgb: ZScore { mean: rm, std: rs },
        flow: ZScore { mean: fm, std: fs },
    })
}

/// `subtask<TAB>gx<TAB>gy<TAB>gz` per step.
pub fn encode_plan(plan: &PrimitivePlan, vocab: &ClassVocabulary) -> Result<String> {
    let mut s = String::new();
    for step in &plan.steps {
        let [x, y, z] = step.goal;
        let _ = writeln!(s, "{}\t{}\t{}\t{}", vocab.name(step.label)?, x, y, z);
    }
    Ok(s)
}

/// Parses plan-format lines into `(class, goal)` pairs.
pub fn decode_plan(
    text: &str,
    vocab: &ClassVocabulary,
) -> std::result::Result<Vec<(usize, [f64; 3])>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let bad = |msg: String| FormatError::line(i + 1, msg);
        let fields: Vec<&str> = line.split('\t').collect();
        let [name, x, y, z] = fields[..] else {
            return Err(bad(format!(
                "expected 4 tab-separated fields, got {}",
                fields.len()
            )));
        };
        let class = vocab
            .id(name.trim())
            .map_err(|_| bad(format!("unknown class `{}`", name)))?;
        let mut goal = [0.0; 3];
        for (g, v) in goal.iter_mut().zip([x, y, z]) {
            let c: f64 = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad coordinate `{}`", v)))?;
            if !c.is_finite() {
                return Err(bad(format!("non-finite coordinate `{}`", v)));
            }
            *g = c;
        }
        out.push((class, goal));
    }
    Ok(out)
}

/// Goal table from a plan-format file; classes it does not mention keep
/// their entry in `base`.
pub fn read_goals(path: &Path, vocab: &ClassVocabulary, mut base: GoalTable) -> Result<GoalTable> {
    let rows = decode_plan(&read_text(path)?, vocab).map_err(|e| e.in_file(path))?;
    for (class, goal) in rows {
        base.set(class, goal)?;
    }
    Ok(base)
}

/// `t x y z vx vy vz` per sample, times offset by `t0`.
pub fn encode_trajectory(traj: &Trajectory, t0: f64) -> String {
    let mut s = String::new();
    for (i, (p, v)) in traj.positions().iter().zip(traj.velocities()).enumerate() {
        let _ = write!(s, "{}", t0 + i as f64 * traj.dt());
        for a in 0..3 {
            let _ = write!(s, " {}", p.get(a).copied().unwrap_or(0.0));
        }
        for a in 0..3 {
            let _ = write!(s, " {}", v.get(a).copied().unwrap_or(0.0));
        }
        s.push('\n');
    }
    s
}

/// `pick&place` → `pick_and_place`, safe as a file name component.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .flat_map(|c| match c {
            '&' => "_and_".chars().collect::<Vec<_>>(),
            c if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' => vec![c],
            _ => vec!['_'],
        })
        .collect()
}
