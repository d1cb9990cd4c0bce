//! Per-class nuclear-norm residues and the multi-order polling decision.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{admm_solve, nuclear_norm, ClassId, Dictionary, SolverConfig, SolverResult};

pub const DEFAULT_M_FRACTION: f64 = 0.10;

/// Per-order residues over a shared list of classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub class_ids: Vec<ClassId>,
    /// `residues[w][i]` is the residue of `class_ids[i]` for order `w + 1`.
    pub residues: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub identity: ClassId,
    pub frequencies: BTreeMap<ClassId, usize>,
    /// Mean 1-based rank over the lists containing the class.
    pub average_ranks: BTreeMap<ClassId, f64>,
    /// Set when more than one class shared the top frequency.
    pub tie_broken: bool,
}

impl Verdict {
    pub fn frequency(&self) -> usize {
        self.frequencies[&self.identity]
    }
}

/// Residue `||Mat(y - A delta_n(x) - L)||_*` for every class of `dict`, in
/// `dict.class_ids()` order.
pub fn class_residues(
    dict: &Dictionary,
    y: &[f64],
    result: &SolverResult,
    shape: (usize, usize),
) -> Result<Vec<f64>> {
    if y.len() != dict.dim() || result.l.len() != dict.dim() || result.x.len() != dict.len() {
        return Err(Error::arg("residue inputs do not match the dictionary"));
    }
    let base = DVector::from_column_slice(y) - DVector::from_column_slice(&result.l);
    dict.class_ids()
        .iter()
        .map(|class| {
            let selected: Vec<f64> = result
                .x
                .iter()
                .zip(dict.labels())
                .map(|(&xj, label)| if label == class { xj } else { 0.0 })
                .collect();
            let r = &base - dict.apply(&selected);
            nuclear_norm(r.as_slice(), shape)
        })
        .collect()
}

/// Classes with the smallest residues: the first `max(1, ceil(m * classes))`
/// after a stable ascending sort (ties keep `class_ids` order).
pub fn top_fraction(
    residues: &[f64],
    class_ids: &[ClassId],
    m_fraction: f64,
) -> Result<Vec<ClassId>> {
    if residues.is_empty() {
        return Err(Error::arg("no residues to rank"));
    }
    if residues.len() != class_ids.len() {
        return Err(Error::arg("residues and class ids differ in length"));
    }
    if !(m_fraction > 0.0 && m_fraction <= 1.0) {
        return Err(Error::arg(format!(
            "top fraction must lie in (0, 1], got {m_fraction}"
        )));
    }
    let count = top_count(residues.len(), m_fraction);
    let mut order: Vec<usize> = (0..residues.len()).collect();
    order.sort_by(|&a, &b| {
        residues[a]
            .total_cmp(&residues[b])
            .then_with(|| class_ids[a].cmp(&class_ids[b]))
    });
    Ok(order
        .into_iter()
        .take(count)
        .map(|i| class_ids[i].clone())
        .collect())
}

/// `max(1, ceil(m * classes))`, robust to representation error in `m`.
pub fn top_count(classes: usize, m_fraction: f64) -> usize {
    let raw = m_fraction * classes as f64;
    let rounded = raw.round();
    let count = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (count as usize).clamp(1, classes)
}

/// Picks the most frequent class across ranked lists; frequency ties go to
/// the least average rank, then to the least class id.
pub fn poll(lists: &[Vec<ClassId>]) -> Result<Verdict> {
    if lists.is_empty() || lists.iter().any(|l| l.is_empty()) {
        return Err(Error::arg("polling needs non-empty ranked lists"));
    }
    let mut frequencies: BTreeMap<ClassId, usize> = BTreeMap::new();
    let mut rank_sums: BTreeMap<ClassId, usize> = BTreeMap::new();
    for list in lists {
        for (rank, class) in list.iter().enumerate() {
            *frequencies.entry(class.clone()).or_default() += 1;
            *rank_sums.entry(class.clone()).or_default() += rank + 1;
        }
    }
    let average_ranks: BTreeMap<ClassId, f64> = rank_sums
        .iter()
        .map(|(c, &s)| (c.clone(), s as f64 / frequencies[c] as f64))
        .collect();

    let best_freq = *frequencies.values().max().expect("non-empty");
    let tied: Vec<ClassId> = frequencies
        .iter()
        .filter(|(_, &f)| f == best_freq)
        .map(|(c, _)| c.clone())
        .collect();
    // BTreeMap iteration is id-ascending, so min_by keeps the least id on ties
    let identity = tied
        .iter()
        .min_by(|a, b| average_ranks[*a].total_cmp(&average_ranks[*b]))
        .expect("non-empty")
        .clone();

    Ok(Verdict {
        identity,
        frequencies,
        average_ranks,
        tie_broken: tied.len() > 1,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub residuals: ResidualTable,
    pub top_lists: Vec<Vec<ClassId>>,
    pub results: Vec<SolverResult>,
}

/// Solves, ranks and polls one test sample against one dictionary per
/// feature order.
pub fn classify<F: AsRef<[f64]>>(
    dicts: &[Dictionary],
    features: &[F],
    cfg: &SolverConfig,
    m_fraction: f64,
) -> Result<Classification> {
    if dicts.is_empty() || dicts.len() != features.len() {
        return Err(Error::arg(format!(
            "{} dictionaries for {} feature orders",
            dicts.len(),
            features.len()
        )));
    }
    let class_ids = dicts[0].class_ids().to_vec();
    if dicts
        .iter()
        .any(|d| d.class_ids() != class_ids.as_slice() || d.len() != dicts[0].len())
    {
        return Err(Error::arg("dictionaries disagree on classes or size"));
    }

    let mut results = Vec::with_capacity(dicts.len());
    let mut residues = Vec::with_capacity(dicts.len());
    let mut top_lists = Vec::with_capacity(dicts.len());
    for (dict, y) in dicts.iter().zip(features) {
        let y = y.as_ref();
        let result = admm_solve(dict, y, cfg)?;
        let r = class_residues(dict, y, &result, cfg.image_shape)?;
        top_lists.push(top_fraction(&r, &class_ids, m_fraction)?);
        residues.push(r);
        results.push(result);
    }
    let verdict = poll(&top_lists)?;
    Ok(Classification {
        verdict,
        residuals: ResidualTable {
            class_ids,
            residues,
        },
        top_lists,
        results,
    })
}
