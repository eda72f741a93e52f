//! Per-sample contribution reports and dataset-level statistics over
//! routing coefficients and activations.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoders::{FeatureIndex, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::head::{argmax, contribution_terms, decomposition_gap, ReadoutWeights, Target, Task};
use crate::model::ForwardPass;

/// Everything needed to explain one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalContribution {
    pub id: String,
    pub features: Vec<String>,
    pub activations: Vec<f64>,
    /// `r[i][j]`.
    pub routing: Vec<Vec<f64>>,
    /// `p_i · r[i][j]`.
    pub assignment: Vec<Vec<f64>>,
    /// `p_i · r[i][j] · ⟨o_j, ĥ_ij⟩`; column `j` sums to `logits[j]`.
    pub contribution: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub predicted: Target,
    #[serde(rename = "true", default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Target>,
}

impl LocalContribution {
    /// Largest absolute gap between a logit and the sum of its terms.
    pub fn decomposition_gap(&self) -> f64 {
        decomposition_gap(&self.logits, &self.contribution)
    }
}

pub fn local_contributions(
    id: &str,
    fw: &ForwardPass,
    readout: &ReadoutWeights,
    truth: Option<Target>,
) -> Result<LocalContribution> {
    let state = fw
        .routing
        .as_ref()
        .ok_or_else(|| Error::Contract("local contributions need routing coefficients; GAM mode has none".into()))?;
    let p = &fw.features.activations;
    let contribution = contribution_terms(p, &state.r, &state.hhat, readout);
    let assignment = state.r.iter().zip(p).map(|(ri, &pi)| ri.iter().map(|r| pi * r).collect()).collect();
    let predicted = match fw.prediction.task {
        Task::Multiclass => Target::Class(fw.prediction.argmax()),
        Task::Multilabel => Target::Labels(fw.prediction.active_labels()),
    };
    Ok(LocalContribution {
        id: id.to_string(),
        features: FeatureIndex::ALL.iter().map(|i| i.name().to_string()).collect(),
        activations: p.clone(),
        routing: state.r.clone(),
        assignment,
        contribution,
        logits: fw.prediction.logits.clone(),
        predicted,
        truth,
    })
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two disjoint streams.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// `NaN` when empty.
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance; `NaN` below two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        confidence_interval(self.mean(), self.variance(), self.n, level)
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Two-sided standard normal quantile for a confidence level.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if (level - 0.95).abs() < 1e-12 {
        return Ok(1.959964);
    }
    Ok(inverse_normal_cdf(0.5 + level / 2.0))
}

// Rational approximation, relative error below 1.2e-9 on (0, 1).
fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Normal-approximation interval `mean ± z·√(var/n)`.
pub fn confidence_interval(mean: f64, var: f64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("an interval needs at least 2 observations, got {n}")));
    }
    if !var.is_finite() || var < 0.0 || !mean.is_finite() {
        return Err(Error::Numerical(format!("bad moments mean={mean} var={var}")));
    }
    let half = z_for_level(level)? * (var / n as f64).sqrt();
    Ok((mean - half, mean + half))
}

/// True when the whole interval sits strictly above the uniform share `1/J`.
pub fn significance_vs_uniform(lo: f64, num_concepts: usize) -> Result<bool> {
    if num_concepts < 2 {
        return Err(Error::Contract(format!("uniform baseline needs at least 2 concepts, got {num_concepts}")));
    }
    Ok(lo > 1.0 / num_concepts as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    /// Routing coefficients `r_ij`.
    R,
    /// Activations `p_i`.
    P,
    /// `p_i · r_ij`.
    Pr,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::R => "r",
            Quantity::P => "p",
            Quantity::Pr => "pr",
        })
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" => Ok(Quantity::R),
            "p" => Ok(Quantity::P),
            "pr" => Ok(Quantity::Pr),
            _ => Err(Error::Validation(format!("unknown quantity {s:?}, expected r, p or pr"))),
        }
    }
}

/// Which samples feed cell `(i, j)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    /// Every sample feeds every cell.
    #[default]
    None,
    /// Only samples whose true label includes `j`.
    TrueLabel,
    /// Only samples whose prediction includes `j`.
    PredictedLabel,
}

impl FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GroupBy::None),
            "true-label" | "label" => Ok(GroupBy::TrueLabel),
            "predicted-label" | "predicted" => Ok(GroupBy::PredictedLabel),
            _ => Err(Error::Validation(format!("unknown grouping {s:?}"))),
        }
    }
}

fn selected_labels(t: &Target, num_labels: usize) -> Vec<usize> {
    match t {
        Target::Class(k) => vec![*k],
        Target::Labels(y) => (0..num_labels).filter(|&j| y.get(j).is_some_and(|&v| v > 0.5)).collect(),
    }
}

/// Running statistics for `r`, `p` and `p·r` over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    num_labels: usize,
    group_by: GroupBy,
    samples: u64,
    has_routing: bool,
    r: Vec<RunningStats>,
    pr: Vec<RunningStats>,
    /// `[i][j]` when grouped, `[i]` otherwise.
    p: Vec<RunningStats>,
}

impl GlobalStats {
    pub fn new(num_labels: usize, group_by: GroupBy) -> Self {
        let cells = NUM_FEATURES * num_labels;
        let p_cells = if group_by == GroupBy::None { NUM_FEATURES } else { cells };
        Self {
            num_labels,
            group_by,
            samples: 0,
            has_routing: true,
            r: vec![RunningStats::new(); cells],
            pr: vec![RunningStats::new(); cells],
            p: vec![RunningStats::new(); p_cells],
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn cell(&self, q: Quantity, i: FeatureIndex, j: usize) -> &RunningStats {
        let i = i.position();
        match q {
            Quantity::R => &self.r[i * self.num_labels + j],
            Quantity::Pr => &self.pr[i * self.num_labels + j],
            Quantity::P if self.group_by == GroupBy::None => &self.p[i],
            Quantity::P => &self.p[i * self.num_labels + j],
        }
    }

    pub fn accumulate(&mut self, fw: &ForwardPass, truth: &Target) -> Result<()> {
        let p = &fw.features.activations;
        let labels: Vec<usize> = match self.group_by {
            GroupBy::None => (0..self.num_labels).collect(),
            GroupBy::TrueLabel => selected_labels(truth, self.num_labels),
            GroupBy::PredictedLabel => match fw.prediction.task {
                Task::Multiclass => vec![argmax(&fw.prediction.logits)],
                Task::Multilabel => selected_labels(&Target::Labels(fw.prediction.active_labels()), self.num_labels),
            },
        };
        if let Some(&j) = labels.iter().find(|&&j| j >= self.num_labels) {
            return Err(Error::Contract(format!("label {j} out of range for {} labels", self.num_labels)));
        }
        match &fw.routing {
            Some(state) => {
                if state.r.len() != NUM_FEATURES || state.r.iter().any(|ri| ri.len() != self.num_labels) {
                    return Err(Error::Dimension("routing coefficients do not match the label count".into()));
                }
                for i in 0..NUM_FEATURES {
                    for &j in &labels {
                        self.r[i * self.num_labels + j].push(state.r[i][j]);
                        self.pr[i * self.num_labels + j].push(p[i] * state.r[i][j]);
                    }
                }
            }
            None => self.has_routing = false,
        }
        for i in 0..NUM_FEATURES {
            if self.group_by == GroupBy::None {
                self.p[i].push(p[i]);
            } else {
                for &j in &labels {
                    self.p[i * self.num_labels + j].push(p[i]);
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &GlobalStats) -> Result<()> {
        if other.num_labels != self.num_labels || other.group_by != self.group_by {
            return Err(Error::Contract("cannot merge statistics with different layouts".into()));
        }
        for (a, b) in self.r.iter_mut().zip(&other.r) {
            a.merge(b);
        }
        for (a, b) in self.pr.iter_mut().zip(&other.pr) {
            a.merge(b);
        }
        for (a, b) in self.p.iter_mut().zip(&other.p) {
            a.merge(b);
        }
        self.samples += other.samples;
        self.has_routing &= other.has_routing;
        Ok(())
    }

    /// Builds the interval table for one quantity. Column names come from
    /// `labels`, which must have one entry per concept.
    pub fn report(&self, quantity: Quantity, labels: &[String], level: f64) -> Result<CiReport> {
        if labels.len() != self.num_labels {
            return Err(Error::Dimension(format!("{} label names for {} labels", labels.len(), self.num_labels)));
        }
        if quantity != Quantity::P && !self.has_routing {
            return Err(Error::Contract(format!("quantity {quantity} needs routing coefficients; GAM mode has none")));
        }
        z_for_level(level)?;
        let baseline = match quantity {
            Quantity::P => None,
            _ if self.num_labels >= 2 => Some(1.0 / self.num_labels as f64),
            _ => None,
        };
        let columns: Vec<String> = if quantity == Quantity::P && self.group_by == GroupBy::None {
            vec!["all".into()]
        } else {
            labels.to_vec()
        };
        let mut records = Vec::new();
        if self.samples > 0 {
            for i in FeatureIndex::ALL {
                for (j, label) in columns.iter().enumerate() {
                    let s = self.cell(quantity, i, j);
                    let mean = (s.count() > 0).then(|| s.mean());
                    let (lo, hi) = match s.interval(level) {
                        Ok((lo, hi)) => (Some(lo), Some(hi)),
                        Err(Error::InsufficientData(_)) => (None, None),
                        Err(e) => return Err(e),
                    };
                    let significant = match (lo, baseline) {
                        (Some(lo), Some(_)) => significance_vs_uniform(lo, self.num_labels)?,
                        _ => false,
                    };
                    records.push(CiRecord { feature: i.name().into(), label: label.clone(), mean, lo, hi, significant });
                }
            }
        }
        Ok(CiReport { quantity, level, columns, baseline, records })
    }
}

/// One cell of an interval table. Missing values are cells with too few
/// observations.
#[derive(Debug, Clone, PartialEq)]
pub struct CiRecord {
    pub feature: String,
    pub label: String,
    pub mean: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiReport {
    pub quantity: Quantity,
    pub level: f64,
    pub columns: Vec<String>,
    pub baseline: Option<f64>,
    pub records: Vec<CiRecord>,
}

impl CiReport {
    pub fn get(&self, feature: FeatureIndex, label: &str) -> Option<&CiRecord> {
        self.records.iter().find(|r| r.feature == feature.name() && r.label == label)
    }
}

pub const CSV_HEADER: [&str; 6] = ["feature", "label", "mean", "lo", "hi", "significant"];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn render_csv(records: &[CiRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.feature.clone(),
            r.label.clone(),
            opt(r.mean),
            opt(r.lo),
            opt(r.hi),
            r.significant.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<CiRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse { line: 1, message: format!("expected header {}", CSV_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse { line, message: format!("bad number {s:?}") })
        };
        let significant = match &rec[5] {
            "true" => true,
            "false" => false,
            s => return Err(Error::Parse { line, message: format!("bad flag {s:?}") }),
        };
        out.push(CiRecord {
            feature: rec[0].to_string(),
            label: rec[1].to_string(),
            mean: num(&rec[2])?,
            lo: num(&rec[3])?,
            hi: num(&rec[4])?,
            significant,
        });
    }
    Ok(out)
}

/// Aligned table, one row per feature and one column per label; significant
/// cells carry a trailing `*`.
pub fn render_text(report: &CiReport) -> String {
    let cell = |r: &CiRecord| match (r.mean, r.lo, r.hi) {
        (Some(m), Some(lo), Some(hi)) => {
            format!("{m:.3} ({lo:.3}, {hi:.3}){}", if r.significant { "*" } else { "" })
        }
        (Some(m), ..) => format!("{m:.3} (NA)"),
        _ => "NA".into(),
    };
    let mut rows: Vec<Vec<String>> = vec![std::iter::once(String::from("feature")).chain(report.columns.iter().cloned()).collect()];
    for i in FeatureIndex::ALL {
        let cells: Vec<String> =
            report.columns.iter().map(|l| report.get(i, l).map_or_else(|| "NA".into(), cell)).collect();
        if report.records.is_empty() {
            break;
        }
        rows.push(std::iter::once(i.name().to_string()).chain(cells).collect());
    }
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let _ = write!(out, "quantity={} level={}", report.quantity, report.level);
    if let Some(b) = report.baseline {
        let _ = write!(out, " baseline={b:.4}");
    }
    out.push('\n');
    for row in &rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
