//! Dense statevector simulation.
//!
//! Qubit 0 is the least-significant bit of the basis index, so the amplitude
//! of `|q_{n-1} ... q_1 q_0⟩` lives at index `Σ q_k 2^k`.
//!
//! Gate conventions:
//!
//! ```text
//! H       = 1/√2 [[1, 1], [1, -1]]
//! RY(θ)   = exp(-iθY/2) = [[cos θ/2, -sin θ/2], [sin θ/2, cos θ/2]]
//! RZ(θ)   = exp(-iθZ/2) = diag(e^{-iθ/2}, e^{iθ/2})
//! RZZ(θ)  = exp(-iθ Z⊗Z/2): e^{-iθ/2} on even parity, e^{iθ/2} on odd parity
//! CX(c,t) = flips t when c is set
//! ```

use std::fmt;

use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};

use crate::fmt::fmt_sig;
use crate::{seed, Error, Result};

pub const MAX_QUBITS: usize = 16;

/// A single gate of the supported set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    Ry(usize, f64),
    Rz(usize, f64),
    Rzz(usize, usize, f64),
    Cx { control: usize, target: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    Ry,
    Rz,
    Rzz,
    Cx,
}

impl GateKind {
    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Rzz => "RZZ",
            GateKind::Cx => "CX",
        }
    }
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::H(_) => GateKind::H,
            Gate::Ry(..) => GateKind::Ry,
            Gate::Rz(..) => GateKind::Rz,
            Gate::Rzz(..) => GateKind::Rzz,
            Gate::Cx { .. } => GateKind::Cx,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Ry(_, a) | Gate::Rz(_, a) | Gate::Rzz(_, _, a) => Some(a),
            Gate::H(_) | Gate::Cx { .. } => None,
        }
    }

    /// Qubits touched by the gate; for CX the control comes first.
    pub fn targets(&self) -> ([usize; 2], usize) {
        match *self {
            Gate::H(q) | Gate::Ry(q, _) | Gate::Rz(q, _) => ([q, q], 1),
            Gate::Rzz(a, b, _) => ([a, b], 2),
            Gate::Cx { control, target } => ([control, target], 2),
        }
    }

    /// The adjoint gate.
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Ry(q, a) => Gate::Ry(q, -a),
            Gate::Rz(q, a) => Gate::Rz(q, -a),
            Gate::Rzz(a, b, t) => Gate::Rzz(a, b, -t),
            g @ (Gate::H(_) | Gate::Cx { .. }) => g,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let (qs, len) = self.targets();
        for &q in &qs[..len] {
            if q >= n_qubits {
                return Err(Error::Index { index: q, n_qubits });
            }
        }
        if len == 2 && qs[0] == qs[1] {
            return Err(Error::Shape(format!(
                "{} needs two distinct qubits, got {} twice",
                self.kind().name(),
                qs[0]
            )));
        }
        if let Some(a) = self.angle() {
            if !a.is_finite() {
                return Err(Error::Domain(format!(
                    "{} angle is not finite",
                    self.kind().name()
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (qs, len) = self.targets();
        write!(f, "{}", self.kind().name())?;
        for q in &qs[..len] {
            write!(f, " {q}")?;
        }
        if let Some(a) = self.angle() {
            write!(f, " {}", fmt_sig(a))?;
        }
        Ok(())
    }
}

/// Ordered gate list; the first gate acts on the state first.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        Ok(Self {
            n_qubits,
            gates: Vec::new(),
        })
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(n_qubits)?;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    /// Append every gate of `other` after the gates of `self`.
    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::Shape(format!(
                "cannot append a {}-qubit circuit to a {}-qubit circuit",
                other.n_qubits, self.n_qubits
            )));
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    /// The adjoint circuit: reversed order, each gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// One gate per line: `KIND targets angle`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            out.push_str(&g.to_string());
            out.push('\n');
        }
        out
    }
}

fn check_qubits(n_qubits: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n_qubits) {
        Ok(())
    } else {
        Err(Error::Size(format!(
            "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Wrap raw amplitudes. The length must be a power of two and the vector
    /// must have unit norm within 1e-10.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Size(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        let state = Self {
            n_qubits,
            amplitudes,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match *gate {
            Gate::H(q) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_pair(q, |x, y| ((x + y) * s, (x - y) * s));
            }
            Gate::Ry(q, theta) => {
                let (sin, cos) = (theta / 2.0).sin_cos();
                self.apply_pair(q, |x, y| (x * cos - y * sin, x * sin + y * cos));
            }
            Gate::Rz(q, theta) => {
                let lo = Complex64::from_polar(1.0, -theta / 2.0);
                let hi = lo.conj();
                let mask = 1usize << q;
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    *a *= if i & mask == 0 { lo } else { hi };
                }
            }
            Gate::Rzz(qa, qb, theta) => {
                let even = Complex64::from_polar(1.0, -theta / 2.0);
                let odd = even.conj();
                for (i, a) in self.amplitudes.iter_mut().enumerate() {
                    let parity = ((i >> qa) ^ (i >> qb)) & 1;
                    *a *= if parity == 0 { even } else { odd };
                }
            }
            Gate::Cx { control, target } => {
                let cmask = 1usize << control;
                let tmask = 1usize << target;
                for i in 0..self.amplitudes.len() {
                    if i & cmask != 0 && i & tmask == 0 {
                        self.amplitudes.swap(i, i | tmask);
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_pair<F>(&mut self, q: usize, f: F)
    where
        F: Fn(Complex64, Complex64) -> (Complex64, Complex64),
    {
        let mask = 1usize << q;
        for i in 0..self.amplitudes.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (x, y) = f(self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = x;
                self.amplitudes[j] = y;
            }
        }
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n_qubits != self.n_qubits {
            return Err(Error::Shape(format!(
                "circuit has {} qubits, state has {}",
                circuit.n_qubits, self.n_qubits
            )));
        }
        for g in &circuit.gates {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    /// Consuming form of [`apply_circuit`](Self::apply_circuit).
    pub fn evolved(mut self, circuit: &Circuit) -> Result<Self> {
        self.apply_circuit(circuit)?;
        Ok(self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Shape(format!(
                "states have {} and {} qubits",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Probability of measuring every qubit as 0.
    pub fn all_zeros_probability(&self) -> f64 {
        self.amplitudes[0].norm_sqr()
    }

    /// Fraction of `shots` computational-basis measurements that return the
    /// all-zeros outcome. Deterministic in `seed`.
    pub fn sample_all_zeros(&self, shots: u64, seed: u64) -> Result<f64> {
        if shots == 0 {
            return Err(Error::Size("shot count must be at least 1".into()));
        }
        let p = self.all_zeros_probability().clamp(0.0, 1.0);
        let dist = Binomial::new(shots, p)
            .map_err(|e| Error::Consistency(format!("binomial({shots}, {p}): {e}")))?;
        let hits = dist.sample(&mut seed::rng(seed));
        Ok(hits as f64 / shots as f64)
    }
}
