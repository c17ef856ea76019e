//! Dataset manifests (JSON lines) and stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{ops, RandomStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub duration_s: f64,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TrainMini,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::TrainMini, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TrainMini => "train_mini",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub train: Manifest,
    pub train_mini: Manifest,
    pub validation: Manifest,
    pub test: Manifest,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.10, validation: 0.10, test: 0.80 }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitLine {
    path: String,
    label: String,
    duration_s: f64,
    sample_rate: u32,
    split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitHeader {
    seed: u64,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, lineno: usize, line: &str) -> Result<T> {
    serde_json::from_str(line)
        .map_err(|source| Error::Json { context: format!("{}:{lineno}", path.display()), source })
}

fn write_jsonl<T: Serialize>(path: &Path, header: Option<&SplitHeader>, rows: impl Iterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    if let Some(h) = header {
        serde_json::to_writer(&mut buf, h).expect("serializable");
        buf.push(b'\n');
    }
    for row in rows {
        serde_json::to_writer(&mut buf, &row).expect("serializable");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate manifest path `{}`", e.path)));
            }
        }
        Ok(Manifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted, de-duplicated label set.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.entries.iter().map(|e| e.label.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let entries = read_lines(path)?
            .into_iter()
            .map(|(n, l)| parse_line(path, n, &l))
            .collect::<Result<Vec<_>>>()?;
        Manifest::new(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path.as_ref(), None, self.entries.iter())
    }

    /// Resolves an entry path relative to the directory holding the manifest.
    pub fn resolve(manifest_path: &Path, entry_path: &str) -> PathBuf {
        let p = Path::new(entry_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

impl SplitManifest {
    pub fn get(&self, split: Split) -> &Manifest {
        match split {
            Split::Train => &self.train,
            Split::TrainMini => &self.train_mini,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Manifest {
        match split {
            Split::Train => &mut self.train,
            Split::TrainMini => &mut self.train_mini,
            Split::Validation => &mut self.validation,
            Split::Test => &mut self.test,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = Split::ALL.into_iter().flat_map(|split| {
            self.get(split).entries.iter().map(move |e| SplitLine {
                path: e.path.clone(),
                label: e.label.clone(),
                duration_s: e.duration_s,
                sample_rate: e.sample_rate,
                split,
            })
        });
        write_jsonl(path.as_ref(), Some(&SplitHeader { seed: self.seed }), rows)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let lines = read_lines(path)?;
        let ((n0, first), rest) = lines
            .split_first()
            .ok_or_else(|| Error::config(path.display().to_string(), "split manifest has no header line"))?;
        let header: SplitHeader = parse_line(path, *n0, first)?;
        let mut out = SplitManifest {
            train: Manifest::default(),
            train_mini: Manifest::default(),
            validation: Manifest::default(),
            test: Manifest::default(),
            seed: header.seed,
        };
        for (n, l) in rest {
            let row: SplitLine = parse_line(path, *n, l)?;
            out.get_mut(row.split).entries.push(ManifestEntry {
                path: row.path,
                label: row.label,
                duration_s: row.duration_s,
                sample_rate: row.sample_rate,
            });
        }
        Ok(out)
    }
}

/// Splits `total` items over `weights` so each count is the floor or ceiling of
/// its exact share; leftovers go to the largest remainders, ties to the lower index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class stratified train/validation/test split plus a stratified
/// train mini-set drawn from the train split.
pub fn stratified_split(
    manifest: &Manifest,
    fractions: SplitFractions,
    mini_fraction: f64,
    seed: u64,
) -> Result<SplitManifest> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let f = [fractions.train, fractions.validation, fractions.test];
    if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions must be in [0,1] and sum to 1, got {f:?}")));
    }
    if !(0.0..=1.0).contains(&mini_fraction) {
        return Err(Error::InvalidArgument(format!("mini fraction must be in [0,1], got {mini_fraction}")));
    }

    let mut by_class: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        by_class.entry(e.label.as_str()).or_default().push(e);
    }

    let mut out = SplitManifest {
        train: Manifest::default(),
        train_mini: Manifest::default(),
        validation: Manifest::default(),
        test: Manifest::default(),
        seed,
    };
    for (class_index, (_, mut members)) in by_class.into_iter().enumerate() {
        members.sort_by(|a, b| a.path.cmp(&b.path));
        members.shuffle(&mut RandomStream::lane(seed, 0, class_index as u64, ops::SPLIT));
        let counts = largest_remainder(members.len(), &f);
        let (train, rest) = members.split_at(counts[0]);
        let (val, test) = rest.split_at(counts[1]);
        let mini = largest_remainder(train.len(), &[mini_fraction, 1.0 - mini_fraction])[0];
        out.train.entries.extend(train.iter().map(|&e| e.clone()));
        out.train_mini.entries.extend(train[..mini].iter().map(|&e| e.clone()));
        out.validation.entries.extend(val.iter().map(|&e| e.clone()));
        out.test.entries.extend(test.iter().map(|&e| e.clone()));
    }
    Ok(out)
}
