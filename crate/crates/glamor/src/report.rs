//! Shared report types for sensitivity results.

use serde::{Deserialize, Serialize};

/// MC estimates can leave [0,1] by sampling noise; displayed values are
/// clipped to this range while the raw estimate is kept alongside.
pub const CLIP_RANGE: (f64, f64) = (-0.1, 1.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    /// Closed index of the subset (first-order for singletons).
    First,
    /// Total index: every contribution touching the subset.
    Total,
    /// Pure interaction of exactly this subset.
    Interaction,
    /// Closed index of a multi-variable subset: all contributions inside it.
    Closed,
}

impl IndexKind {
    pub fn label(&self) -> &'static str {
        match self {
            IndexKind::First => "first",
            IndexKind::Total => "total",
            IndexKind::Interaction => "interaction",
            IndexKind::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEntry {
    /// 0-based input-variable indices the index refers to.
    pub subset: Vec<usize>,
    pub kind: IndexKind,
    /// Raw value clipped to the reporting range.
    pub estimate: f64,
    pub raw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

impl SobolEntry {
    pub fn new(subset: Vec<usize>, kind: IndexKind, raw: f64) -> Self {
        SobolEntry {
            subset,
            kind,
            estimate: raw.clamp(CLIP_RANGE.0, CLIP_RANGE.1),
            raw,
            ci: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    /// QoI the indices refer to; "classical" for the response itself.
    pub qoi: String,
    /// "pce" or "pick-freeze".
    pub estimator: String,
    /// PCE fitting sample count or MC sample count, depending on estimator.
    pub n_samples: usize,
    /// Relative LOO of the underlying PCE, when one was fitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loo_error: Option<f64>,
    /// Set when loo_error exceeds the configured quality gate.
    #[serde(default)]
    pub loo_warning: bool,
    pub entries: Vec<SobolEntry>,
    /// Free-form provenance notes (grids, seeds, budgets).
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SobolReport {
    pub fn get(&self, subset: &[usize], kind: IndexKind) -> Option<&SobolEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.subset == subset)
    }

    pub fn raw(&self, subset: &[usize], kind: IndexKind) -> Option<f64> {
        self.get(subset, kind).map(|e| e.raw)
    }

    pub fn first_order(&self, var: usize) -> Option<f64> {
        self.raw(&[var], IndexKind::First)
    }

    pub fn total(&self, var: usize) -> Option<f64> {
        self.raw(&[var], IndexKind::Total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates_are_clipped_and_raw_kept() {
        let e = SobolEntry::new(vec![0], IndexKind::First, 1.37);
        assert_eq!(e.estimate, 1.1);
        assert_eq!(e.raw, 1.37);
        let e = SobolEntry::new(vec![1], IndexKind::Total, -0.4);
        assert_eq!(e.estimate, -0.1);
    }

    #[test]
    fn report_lookup_by_subset_and_kind() {
        let rep = SobolReport {
            qoi: "classical".into(),
            estimator: "pce".into(),
            n_samples: 100,
            loo_error: Some(1e-4),
            loo_warning: false,
            entries: vec![
                SobolEntry::new(vec![0], IndexKind::First, 0.5),
                SobolEntry::new(vec![0], IndexKind::Total, 0.7),
                SobolEntry::new(vec![0, 1], IndexKind::Interaction, 0.2),
            ],
            notes: vec![],
        };
        assert_eq!(rep.first_order(0), Some(0.5));
        assert_eq!(rep.total(0), Some(0.7));
        assert_eq!(rep.raw(&[0, 1], IndexKind::Interaction), Some(0.2));
        assert_eq!(rep.first_order(3), None);
    }
}
