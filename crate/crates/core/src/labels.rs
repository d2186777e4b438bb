use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary class labels, each `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct LabelVector(Vec<i8>);

impl LabelVector {
    pub fn new(labels: Vec<i8>) -> Result<Self> {
        if let Some((i, bad)) = labels.iter().enumerate().find(|(_, &l)| l != 1 && l != -1) {
            return Err(Error::Domain(format!(
                "label {i} is {bad}, expected +1 or -1"
            )));
        }
        Ok(Self(labels))
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        f64::from(self.0[i])
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector(idx.iter().map(|&i| self.0[i]).collect())
    }

    pub fn negated(&self) -> LabelVector {
        LabelVector(self.0.iter().map(|l| -l).collect())
    }
}

impl TryFrom<Vec<i8>> for LabelVector {
    type Error = Error;

    fn try_from(v: Vec<i8>) -> Result<Self> {
        LabelVector::new(v)
    }
}

impl From<LabelVector> for Vec<i8> {
    fn from(l: LabelVector) -> Self {
        l.0
    }
}
