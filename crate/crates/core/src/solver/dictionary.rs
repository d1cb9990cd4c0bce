use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class identifier.
///
/// Ordering is numeric when both identifiers parse as integers and
/// lexicographic otherwise, so "2" sorts before "10".
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub String);

impl ClassId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Ord for ClassId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.0.parse::<i64>(), other.0.parse::<i64>()) {
            (Ok(a), Ok(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Ok(_), Err(_)) => Ordering::Less,
            (Err(_), Ok(_)) => Ordering::Greater,
            _ => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for ClassId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        ClassId(s.to_owned())
    }
}

impl From<String> for ClassId {
    fn from(s: String) -> Self {
        ClassId(s)
    }
}

impl From<usize> for ClassId {
    fn from(n: usize) -> Self {
        ClassId(n.to_string())
    }
}

/// Training dictionary: unit-norm feature columns with class labels.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    labels: Vec<ClassId>,
    column_norms: Vec<f64>,
    class_ids: Vec<ClassId>,
}

impl Dictionary {
    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    /// Norms of the columns before normalization.
    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// Distinct class identifiers, sorted.
    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    /// Feature dimension d.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms n.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.atoms * DVector::from_column_slice(x)
    }

    /// Same atoms with labels remapped by `f`.
    pub fn relabel(&self, f: impl Fn(&ClassId) -> ClassId) -> Dictionary {
        let labels: Vec<ClassId> = self.labels.iter().map(f).collect();
        Dictionary {
            atoms: self.atoms.clone(),
            class_ids: sorted_unique(&labels),
            labels,
            column_norms: self.column_norms.clone(),
        }
    }
}

fn sorted_unique(labels: &[ClassId]) -> Vec<ClassId> {
    let mut ids = labels.to_vec();
    ids.sort();
    ids.dedup();
    ids
}

/// Stacks labeled feature vectors into a column-normalized dictionary.
pub fn build_dictionary<I, V>(features: I) -> Result<Dictionary>
where
    I: IntoIterator<Item = (V, ClassId)>,
    V: AsRef<[f64]>,
{
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut column_norms = Vec::new();
    let mut dim = None;
    for (i, (v, label)) in features.into_iter().enumerate() {
        let v = v.as_ref();
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::arg(format!(
                    "feature {i} has length {}, expected {d}",
                    v.len()
                )))
            }
            _ => {}
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg(format!("feature {i} has non-finite entries")));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::arg(format!(
                "feature {i} (label {label}) is a zero vector"
            )));
        }
        data.extend(v.iter().map(|x| x / norm));
        labels.push(label);
        column_norms.push(norm);
    }
    let d = dim.ok_or_else(|| Error::arg("dictionary needs at least one feature"))?;
    if d == 0 {
        return Err(Error::arg("dictionary features are empty"));
    }
    let atoms = DMatrix::from_column_slice(d, labels.len(), &data);
    Ok(Dictionary {
        atoms,
        class_ids: sorted_unique(&labels),
        labels,
        column_norms,
    })
}
