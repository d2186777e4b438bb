//! Parameterized ZZ feature map.
//!
//! A data point `x ∈ [0,1]^m` is embedded on `n = m` qubits as
//! `U_φ(x)^d · V_θ |0…0⟩`, where `V_θ` is a trainable ansatz and each of the
//! `d` repetitions of the feature map applies a Hadamard layer followed by the
//! phase layer `exp(i Σ_i φ_i(x) Z_i + i Σ_{i<j} φ_ij(x) Z_i Z_j)` with
//!
//! ```text
//! φ_i(x)  = π x_i
//! φ_ij(x) = π (1 - x_i)(1 - x_j)
//! ```
//!
//! The phase layer is realized with `RZ(2φ_i)` and `RZZ(2φ_ij)` gates, which
//! agree with the exponential above up to a global phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::statevector::{Circuit, Gate, StateVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    /// Number of features, which is also the number of qubits.
    pub n_features: usize,
    /// Number of feature-map repetitions.
    pub depth: usize,
}

impl FeatureMapConfig {
    pub fn new(n_features: usize, depth: usize) -> Result<Self> {
        let cfg = Self { n_features, depth };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.depth == 0 {
            return Err(Error::Size(format!(
                "feature map needs n_features >= 1 and depth >= 1, got {} and {}",
                self.n_features, self.depth
            )));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_features
    }

    /// Gates in the full feature map: `d · (2n + n(n-1)/2)`.
    pub fn gate_count(&self) -> usize {
        let n = self.n_features;
        self.depth * (2 * n + n * (n - 1) / 2)
    }
}

/// Ansatz angles: the first `n` for the opening RY layer, the next `n` for the
/// closing RY layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnsatzParams(Vec<f64>);

impl AnsatzParams {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if let Some(bad) = thetas.iter().find(|t| !t.is_finite()) {
            return Err(Error::Domain(format!("ansatz angle {bad} is not finite")));
        }
        Ok(Self(thetas))
    }

    pub fn zeros(n_qubits: usize) -> Self {
        Self(vec![0.0; Self::len_for(n_qubits)])
    }

    pub fn len_for(n_qubits: usize) -> usize {
        2 * n_qubits
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A feature vector with every component in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DataPoint(Vec<f64>);

impl DataPoint {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Size("data point has no features".into()));
        }
        for (i, &v) in features.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "feature {i} = {v} is outside [0, 1]; normalize before embedding"
                )));
            }
        }
        Ok(Self(features))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for DataPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        DataPoint::new(v)
    }
}

impl From<DataPoint> for Vec<f64> {
    fn from(p: DataPoint) -> Self {
        p.0
    }
}

pub fn phi_single(x: f64) -> f64 {
    PI * x
}

pub fn phi_pair(xi: f64, xj: f64) -> f64 {
    PI * ((1.0 - xi) * (1.0 - xj))
}

/// `d` repetitions of `[H on every qubit; RZ(2φ_i); RZZ(2φ_ij) for i < j]`.
pub fn zz_feature_map_circuit(x: &DataPoint, config: &FeatureMapConfig) -> Result<Circuit> {
    config.validate()?;
    let n = config.n_features;
    if x.dim() != n {
        return Err(Error::Shape(format!(
            "data point has {} features, feature map expects {n}",
            x.dim()
        )));
    }
    let xs = x.as_slice();
    let mut block = Vec::with_capacity(config.gate_count() / config.depth);
    block.extend((0..n).map(Gate::H));
    block.extend((0..n).map(|i| Gate::Rz(i, 2.0 * phi_single(xs[i]))));
    for i in 0..n {
        for j in i + 1..n {
            block.push(Gate::Rzz(i, j, 2.0 * phi_pair(xs[i], xs[j])));
        }
    }
    let mut gates = Vec::with_capacity(config.gate_count());
    for _ in 0..config.depth {
        gates.extend_from_slice(&block);
    }
    Circuit::from_gates(n, gates)
}

/// RY layer, CX entangler, RY layer.
///
/// The entangler is the chain `CX(i → i+1)` for `i < n-1`, closed into a ring
/// by `CX(n-1 → 0)` when `n ≥ 3`. With two qubits the closing gate would
/// duplicate the chain edge in reverse, so it is left out.
pub fn ansatz_circuit(params: &AnsatzParams, n_qubits: usize) -> Result<Circuit> {
    let expected = AnsatzParams::len_for(n_qubits);
    if params.len() != expected {
        return Err(Error::Shape(format!(
            "ansatz on {n_qubits} qubits takes {expected} angles, got {}",
            params.len()
        )));
    }
    let t = params.as_slice();
    let mut c = Circuit::new(n_qubits)?;
    for (q, &angle) in t.iter().enumerate().take(n_qubits) {
        c.push(Gate::Ry(q, angle))?;
    }
    for q in 0..n_qubits.saturating_sub(1) {
        c.push(Gate::Cx {
            control: q,
            target: q + 1,
        })?;
    }
    if n_qubits >= 3 {
        c.push(Gate::Cx {
            control: n_qubits - 1,
            target: 0,
        })?;
    }
    for q in 0..n_qubits {
        c.push(Gate::Ry(q, t[n_qubits + q]))?;
    }
    Ok(c)
}

/// Ansatz followed by the feature map.
pub fn embedding_circuit(
    x: &DataPoint,
    params: &AnsatzParams,
    config: &FeatureMapConfig,
) -> Result<Circuit> {
    let mut c = ansatz_circuit(params, config.n_qubits())?;
    c.append(&zz_feature_map_circuit(x, config)?)?;
    Ok(c)
}

pub fn embed(
    x: &DataPoint,
    params: &AnsatzParams,
    config: &FeatureMapConfig,
) -> Result<StateVector> {
    StateVector::zero(config.n_qubits())?.evolved(&embedding_circuit(x, params, config)?)
}
