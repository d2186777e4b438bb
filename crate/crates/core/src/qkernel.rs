//! Quantum kernel estimation.
//!
//! `K(x_i, x_j) = |⟨φ(x_i)|φ(x_j)⟩|²` is evaluated either exactly from the
//! simulated statevectors or by sampling the compute–uncompute circuit
//! `V_θ† U(x_j)† U(x_i) V_θ |0…0⟩`, whose all-zeros probability equals the
//! same fidelity.
//!
//! Gram matrices compute the upper triangle once and mirror it. The diagonal
//! is set to 1 in both modes. In shot mode every entry draws from its own
//! seed derived from `(seed, i, j)`, so results are independent of thread
//! count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featuremap::{embed, embedding_circuit, AnsatzParams, DataPoint, FeatureMapConfig};
use crate::matrix::{KernelMatrix, Matrix};
use crate::statevector::{Circuit, StateVector};
use crate::{seed, Error, Result};

/// Tolerance for exact fidelities straying outside `[0, 1]`.
const RANGE_TOL: f64 = 1e-9;

const CROSS_STREAM: u64 = 0xC5055;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum KernelMode {
    Exact,
    Shots { count: u64, seed: u64 },
}

impl KernelMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelMode::Shots { count: 0, .. } => {
                Err(Error::Size("shot count must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// The same mode with its sampling seed replaced by a child seed.
    pub fn reseeded(&self, path: &[u64]) -> KernelMode {
        match *self {
            KernelMode::Exact => KernelMode::Exact,
            KernelMode::Shots { count, seed: s } => KernelMode::Shots {
                count,
                seed: seed::derive(s, path),
            },
        }
    }
}

/// Shared, validated inputs for a batch of kernel evaluations.
#[derive(Debug, Clone, Copy)]
pub struct QuantumKernel<'a> {
    pub params: &'a AnsatzParams,
    pub config: &'a FeatureMapConfig,
    pub mode: KernelMode,
}

impl<'a> QuantumKernel<'a> {
    pub fn new(params: &'a AnsatzParams, config: &'a FeatureMapConfig, mode: KernelMode) -> Self {
        Self {
            params,
            config,
            mode,
        }
    }

    pub fn entry(&self, xi: &DataPoint, xj: &DataPoint) -> Result<f64> {
        kernel_entry(xi, xj, self.params, self.config, self.mode)
    }

    pub fn gram(&self, xs: &[DataPoint]) -> Result<KernelMatrix> {
        gram_matrix(xs, self.params, self.config, self.mode)
    }

    pub fn cross(&self, test: &[DataPoint], train: &[DataPoint]) -> Result<Matrix> {
        cross_gram(test, train, self.params, self.config, self.mode)
    }
}

fn check_range(v: f64) -> Result<f64> {
    if (-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Consistency(format!(
            "kernel value {v} outside [0, 1]"
        )))
    }
}

fn uncompute(prep_i: &Circuit, prep_j: &Circuit) -> Result<Circuit> {
    let mut c = prep_i.clone();
    c.append(&prep_j.inverse())?;
    Ok(c)
}

fn sampled(prep_i: &Circuit, prep_j: &Circuit, shots: u64, entry_seed: u64) -> Result<f64> {
    let circuit = uncompute(prep_i, prep_j)?;
    StateVector::zero(circuit.n_qubits())?
        .evolved(&circuit)?
        .sample_all_zeros(shots, entry_seed)
}

/// A single kernel value. In shot mode the mode's seed is used directly.
pub fn kernel_entry(
    xi: &DataPoint,
    xj: &DataPoint,
    params: &AnsatzParams,
    config: &FeatureMapConfig,
    mode: KernelMode,
) -> Result<f64> {
    mode.validate()?;
    match mode {
        KernelMode::Exact => {
            let a = embed(xi, params, config)?;
            let b = embed(xj, params, config)?;
            check_range(a.fidelity(&b)?)
        }
        KernelMode::Shots { count, seed } => {
            let pi = embedding_circuit(xi, params, config)?;
            let pj = embedding_circuit(xj, params, config)?;
            sampled(&pi, &pj, count, seed)
        }
    }
}

/// Symmetric Gram matrix over `xs`.
pub fn gram_matrix(
    xs: &[DataPoint],
    params: &AnsatzParams,
    config: &FeatureMapConfig,
    mode: KernelMode,
) -> Result<KernelMatrix> {
    if xs.is_empty() {
        return Err(Error::Size("gram matrix of an empty dataset".into()));
    }
    mode.validate()?;
    let n = xs.len();
    let upper: Vec<Vec<f64>> = match mode {
        KernelMode::Exact => {
            let states = embed_all(xs, params, config)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i + 1..n)
                        .map(|j| check_range(states[i].fidelity(&states[j])?))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
        KernelMode::Shots { count, seed: s } => {
            let preps = circuits_all(xs, params, config)?;
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (i + 1..n)
                        .map(|j| {
                            let entry_seed = seed::derive(s, &[i as u64, j as u64]);
                            sampled(&preps[i], &preps[j], count, entry_seed)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
    };
    let mut k = Matrix::identity(n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

/// Kernel rows for prediction: entry `(t, s)` is `K(test[t], train[s])`.
pub fn cross_gram(
    test: &[DataPoint],
    train: &[DataPoint],
    params: &AnsatzParams,
    config: &FeatureMapConfig,
    mode: KernelMode,
) -> Result<Matrix> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::Size(
            "cross gram needs nonempty test and train sets".into(),
        ));
    }
    mode.validate()?;
    let rows: Vec<Vec<f64>> = match mode {
        KernelMode::Exact => {
            let a = embed_all(test, params, config)?;
            let b = embed_all(train, params, config)?;
            a.par_iter()
                .map(|sa| {
                    b.iter()
                        .map(|sb| check_range(sa.fidelity(sb)?))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
        KernelMode::Shots { count, seed: s } => {
            let a = circuits_all(test, params, config)?;
            let b = circuits_all(train, params, config)?;
            a.par_iter()
                .enumerate()
                .map(|(t, ca)| {
                    b.iter()
                        .enumerate()
                        .map(|(r, cb)| {
                            let entry_seed = seed::derive(s, &[CROSS_STREAM, t as u64, r as u64]);
                            sampled(ca, cb, count, entry_seed)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
    };
    Matrix::from_rows(&rows)
}

fn embed_all(
    xs: &[DataPoint],
    params: &AnsatzParams,
    config: &FeatureMapConfig,
) -> Result<Vec<StateVector>> {
    xs.par_iter().map(|x| embed(x, params, config)).collect()
}

fn circuits_all(
    xs: &[DataPoint],
    params: &AnsatzParams,
    config: &FeatureMapConfig,
) -> Result<Vec<Circuit>> {
    xs.iter()
        .map(|x| embedding_circuit(x, params, config))
        .collect()
}
