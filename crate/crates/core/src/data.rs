//! Datasets: two moons, Iris, the two regression targets, min-max scaling
//! and stratified splits.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, QukanError, Result};

/// Canonical 150-row Iris file shipped with the crate.
pub const IRIS_CSV: &str = include_str!("../data/iris.csv");

pub const IRIS_CLASSES: [&str; 3] = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Classes { labels: Vec<usize>, n_classes: usize },
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Real(v) => Targets::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub targets: Targets,
    pub feature_ranges: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Targets) -> Result<Self> {
        if features.len() != targets.len() {
            return domain(format!(
                "{} feature rows but {} targets",
                features.len(),
                targets.len()
            ));
        }
        let d = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != d) {
            return domain("feature rows have different lengths");
        }
        if let Targets::Classes { labels, n_classes } = &targets {
            if labels.iter().any(|&l| l >= *n_classes) {
                return domain("class label out of range");
            }
        }
        let feature_ranges = column_ranges(&features, d);
        Ok(Self {
            features,
            targets,
            feature_ranges,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ranges.len()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Real(_) => None,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { n_classes, .. } => Some(*n_classes),
            Targets::Real(_) => None,
        }
    }

    pub fn real_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Real(v) => Some(v),
            Targets::Classes { .. } => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let features: Vec<Vec<f64>> = idx.iter().map(|&i| self.features[i].clone()).collect();
        let d = self.n_features();
        Self {
            feature_ranges: column_ranges(&features, d),
            features,
            targets: self.targets.select(idx),
        }
    }

    /// Comma-separated rows `x0,…,x{d-1},target` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.n_features()).map(|i| format!("x{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",target\n");
        for (i, row) in self.features.iter().enumerate() {
            for v in row {
                out.push_str(&format!("{v},"));
            }
            match &self.targets {
                Targets::Classes { labels, .. } => out.push_str(&labels[i].to_string()),
                Targets::Real(v) => out.push_str(&v[i].to_string()),
            }
            out.push('\n');
        }
        out
    }
}

fn column_ranges(features: &[Vec<f64>], d: usize) -> Vec<(f64, f64)> {
    (0..d)
        .map(|c| {
            features.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r[c]), hi.max(r[c]))
            })
        })
        .collect()
}

/// Standard normal draw via Box–Muller.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // 1 - u keeps the argument of ln in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Two interleaving half circles, labels 0 (outer) and 1 (inner).
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return domain("make_moons needs at least two points");
    }
    if !(noise >= 0.0) {
        return domain(format!("noise must be nonnegative, got {noise}"));
    }
    let n_out = n.div_ceil(2);
    let n_in = n / 2;
    let spaced = |m: usize, i: usize| {
        if m == 1 {
            0.0
        } else {
            PI * i as f64 / (m - 1) as f64
        }
    };
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_out {
        let t = spaced(n_out, i);
        features.push(vec![t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..n_in {
        let t = spaced(n_in, i);
        features.push(vec![1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for row in features.iter_mut() {
            for v in row.iter_mut() {
                *v += noise * standard_normal(&mut rng);
            }
        }
    }
    Dataset::new(features, Targets::Classes { labels, n_classes: 2 })
}

/// Parses the 5-column Iris format. Line numbers in errors are 1-based.
pub fn parse_iris(text: &str) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(QukanError::Parse {
                line: line_no,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(4);
        for f in &fields[..4] {
            let v: f64 = f.parse().map_err(|_| QukanError::Parse {
                line: line_no,
                reason: format!("not a number: {f:?}"),
            })?;
            row.push(v);
        }
        let class = IRIS_CLASSES
            .iter()
            .position(|c| *c == fields[4] || c.trim_start_matches("Iris-") == fields[4])
            .ok_or_else(|| QukanError::Parse {
                line: line_no,
                reason: format!("unknown class {:?}", fields[4]),
            })?;
        features.push(row);
        labels.push(class);
    }
    Dataset::new(features, Targets::Classes { labels, n_classes: 3 })
}

pub fn load_iris(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_iris(&text)
}

/// The bundled Iris copy.
pub fn iris() -> Dataset {
    parse_iris(IRIS_CSV).expect("bundled iris file is well formed")
}

/// Per-column affine map onto `[0, 1]`, fitted once and reused on test data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(ds: &Dataset) -> Self {
        Self {
            mins: ds.feature_ranges.iter().map(|r| r.0).collect(),
            maxs: ds.feature_ranges.iter().map(|r| r.1).collect(),
        }
    }

    /// Columns that were constant during fitting; they map to 0.5.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.mins.len()).filter(|&c| self.maxs[c] <= self.mins[c]).collect()
    }

    pub fn scale_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, &v)| {
                let span = self.maxs[c] - self.mins[c];
                if span > 0.0 {
                    (v - self.mins[c]) / span
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn unscale_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, &v)| {
                let span = self.maxs[c] - self.mins[c];
                if span > 0.0 {
                    self.mins[c] + v * span
                } else {
                    self.mins[c]
                }
            })
            .collect()
    }

    /// No clamping: test rows may land outside `[0, 1]`.
    pub fn transform(&self, ds: &Dataset) -> Dataset {
        let features: Vec<Vec<f64>> = ds.features.iter().map(|r| self.scale_row(r)).collect();
        Dataset::new(features, ds.targets.clone()).expect("shape is preserved")
    }
}

/// Fits a scaler on `ds` and applies it.
pub fn minmax_scale(ds: &Dataset) -> (Dataset, MinMaxScaler) {
    let scaler = MinMaxScaler::fit(ds);
    (scaler.transform(ds), scaler)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionKind {
    /// `2x₁ − 3x₂ + 1` on `[0, 1]²`.
    Linear,
    /// `ln(x₀ / x₁)` on `[0.05, 1]²`.
    LogRatio,
}

pub const LOG_RATIO_FLOOR: f64 = 0.05;

impl RegressionKind {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            RegressionKind::Linear => 2.0 * x[0] - 3.0 * x[1] + 1.0,
            RegressionKind::LogRatio => (x[0] / x[1]).ln(),
        }
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            RegressionKind::Linear => (0.0, 1.0),
            RegressionKind::LogRatio => (LOG_RATIO_FLOOR, 1.0),
        }
    }
}

pub fn regression_targets(kind: RegressionKind, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return domain("regression dataset needs at least one point");
    }
    let (lo, hi) = kind.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)])
        .collect();
    let y = features.iter().map(|x| kind.eval(x)).collect();
    Dataset::new(features, Targets::Real(y))
}

/// Per-class proportional split after a seeded shuffle within each class.
pub fn stratified_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(QukanError::Split(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let (labels, n_classes) = match &ds.targets {
        Targets::Classes { labels, n_classes } => (labels, *n_classes),
        Targets::Real(_) => return Err(QukanError::Split("stratified split needs class labels".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(QukanError::Split(format!("class {c} has fewer than 2 members")));
        }
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64 * train_fraction).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    Ok((ds.subset(&train), ds.subset(&test)))
}
