//! Severity classes, maintenance priorities and classification safety.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecisionError {
    #[error("PCI value is NaN")]
    NotANumber,
    #[error("length mismatch: {predicted} predictions, {other} {what}")]
    LengthMismatch {
        predicted: usize,
        other: usize,
        what: &'static str,
    },
    #[error("profile has no actual PCI values")]
    MissingActuals,
    #[error("k = {k} is outside 1..={len}")]
    KOutOfRange { k: usize, len: usize },
    #[error("empty profile")]
    Empty,
}

/// Condition band with its maintenance action, ordered from best to worst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityClass {
    Excellent,
    Good,
    Fair,
    Poor,
    VeryPoor,
}

impl SeverityClass {
    pub const ALL: [SeverityClass; 5] = [
        SeverityClass::Excellent,
        SeverityClass::Good,
        SeverityClass::Fair,
        SeverityClass::Poor,
        SeverityClass::VeryPoor,
    ];

    /// 1 for Excellent through 5 for VeryPoor.
    pub fn rank(self) -> u8 {
        self as u8 + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            SeverityClass::Excellent => "Excellent",
            SeverityClass::Good => "Good",
            SeverityClass::Fair => "Fair",
            SeverityClass::Poor => "Poor",
            SeverityClass::VeryPoor => "VeryPoor",
        }
    }

    pub fn recommended_action(self) -> &'static str {
        match self {
            SeverityClass::Excellent => "Routine monitoring",
            SeverityClass::Good => "Preventive",
            SeverityClass::Fair => "Corrective",
            SeverityClass::Poor => "Major overlay",
            SeverityClass::VeryPoor => "Full reconstruction",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lower bounds of Excellent, Good, Fair and Poor; anything below the last is VeryPoor.
pub const CLASS_THRESHOLDS: [f64; 4] = [85.0, 70.0, 55.0, 40.0];

/// Half-open bands: `[85, 100]`, `[70, 85)`, `[55, 70)`, `[40, 55)`, below 40.
///
/// Values outside `[0, 100]` are clamped with a warning.
pub fn classify(pci: f64) -> Result<SeverityClass, DecisionError> {
    if pci.is_nan() {
        return Err(DecisionError::NotANumber);
    }
    let v = if (0.0..=100.0).contains(&pci) {
        pci
    } else {
        log::warn!("PCI {pci} outside [0, 100]; clamping");
        pci.clamp(0.0, 100.0)
    };
    Ok(CLASS_THRESHOLDS
        .iter()
        .position(|&t| v >= t)
        .map_or(SeverityClass::VeryPoor, |i| SeverityClass::ALL[i]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentPriority {
    pub segment_id: String,
    pub predicted_pci: f64,
    pub predicted_class: SeverityClass,
    pub actual_pci: Option<f64>,
    pub actual_class: Option<SeverityClass>,
    /// 1 is the most urgent segment.
    pub priority_rank: usize,
}

/// Per-segment classes in input order, each carrying its priority rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceProfile {
    pub records: Vec<SegmentPriority>,
}

impl MaintenanceProfile {
    /// Records sorted by priority rank.
    pub fn by_priority(&self) -> Vec<&SegmentPriority> {
        let mut v: Vec<&SegmentPriority> = self.records.iter().collect();
        v.sort_by_key(|r| r.priority_rank);
        v
    }

    pub fn has_actuals(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.actual_class.is_some())
    }
}

pub fn build_profile<S: AsRef<str>>(
    predicted: &[f64],
    actual: Option<&[f64]>,
    segment_ids: &[S],
) -> Result<MaintenanceProfile, DecisionError> {
    if segment_ids.len() != predicted.len() {
        return Err(DecisionError::LengthMismatch {
            predicted: predicted.len(),
            other: segment_ids.len(),
            what: "segment ids",
        });
    }
    if let Some(a) = actual {
        if a.len() != predicted.len() {
            return Err(DecisionError::LengthMismatch {
                predicted: predicted.len(),
                other: a.len(),
                what: "actual values",
            });
        }
    }
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| {
        predicted[a]
            .total_cmp(&predicted[b])
            .then_with(|| segment_ids[a].as_ref().cmp(segment_ids[b].as_ref()))
    });
    let mut rank = vec![0; predicted.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let mut records = Vec::with_capacity(predicted.len());
    for i in 0..predicted.len() {
        let actual_pci = actual.map(|a| a[i]);
        records.push(SegmentPriority {
            segment_id: segment_ids[i].as_ref().to_owned(),
            predicted_pci: predicted[i],
            predicted_class: classify(predicted[i])?,
            actual_pci,
            actual_class: actual_pci.map(classify).transpose()?,
            priority_rank: rank[i],
        });
    }
    Ok(MaintenanceProfile { records })
}

/// Agreement between actual (rows) and predicted (columns) classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub confusion: [[usize; 5]; 5],
    pub total: usize,
    pub exact_count: usize,
    pub adjacent_count: usize,
    pub critical_count: usize,
    pub exact_match: f64,
    /// Share of segments whose predicted rank is within one tier of the actual rank.
    pub adjacent_match: f64,
    /// Share more than one tier away; always `1 - adjacent_match`.
    pub critical_misclassification: f64,
}

pub fn safety_report(profile: &MaintenanceProfile) -> Result<SafetyReport, DecisionError> {
    if profile.records.is_empty() {
        return Err(DecisionError::Empty);
    }
    let mut confusion = [[0usize; 5]; 5];
    let (mut exact, mut adjacent) = (0, 0);
    for r in &profile.records {
        let actual = r.actual_class.ok_or(DecisionError::MissingActuals)?;
        confusion[actual.index()][r.predicted_class.index()] += 1;
        let diff = actual.rank().abs_diff(r.predicted_class.rank());
        exact += usize::from(diff == 0);
        adjacent += usize::from(diff <= 1);
    }
    let total = profile.records.len();
    let adjacent_match = adjacent as f64 / total as f64;
    Ok(SafetyReport {
        confusion,
        total,
        exact_count: exact,
        adjacent_count: adjacent,
        critical_count: total - adjacent,
        exact_match: exact as f64 / total as f64,
        adjacent_match,
        critical_misclassification: 1.0 - adjacent_match,
    })
}

/// The `k` most urgent segment ids, most urgent first.
pub fn top_k_critical(profile: &MaintenanceProfile, k: usize) -> Result<Vec<String>, DecisionError> {
    let len = profile.records.len();
    if k == 0 || k > len {
        return Err(DecisionError::KOutOfRange { k, len });
    }
    Ok(profile
        .by_priority()
        .into_iter()
        .take(k)
        .map(|r| r.segment_id.clone())
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalPoint {
    pub segment_index: usize,
    pub predicted_pci: f64,
    pub actual_pci: f64,
}

/// Predicted and observed PCI along the segment index, for plotting against the class thresholds.
pub fn longitudinal_profile(
    predicted: &[f64],
    actual: &[f64],
) -> Result<Vec<LongitudinalPoint>, DecisionError> {
    if predicted.len() != actual.len() {
        return Err(DecisionError::LengthMismatch {
            predicted: predicted.len(),
            other: actual.len(),
            what: "actual values",
        });
    }
    Ok(predicted
        .iter()
        .zip(actual)
        .enumerate()
        .map(|(i, (&p, &a))| LongitudinalPoint {
            segment_index: i,
            predicted_pci: p,
            actual_pci: a,
        })
        .collect())
}
