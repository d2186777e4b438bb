//! Kernel target alignment and its SPSA maximization.
//!
//! The alignment of a kernel `K` with labels `y` is the cosine between `K` and
//! the ideal kernel `y yᵀ` under the Frobenius inner product:
//!
//! ```text
//! T(K) = ⟨K, K̄⟩_F / sqrt(⟨K, K⟩_F ⟨K̄, K̄⟩_F),   ⟨A, B⟩_F = Σ_ij A_ij B_ij
//! ```

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::featuremap::{AnsatzParams, DataPoint, FeatureMapConfig};
use crate::fmt::fmt_sig;
use crate::labels::LabelVector;
use crate::matrix::{KernelMatrix, Matrix};
use crate::qkernel::{gram_matrix, KernelMode};
use crate::{seed, Error, Result};

/// `K̄_ij = y_i y_j`.
pub fn ideal_kernel(y: &LabelVector) -> Result<KernelMatrix> {
    if y.is_empty() {
        return Err(Error::Size("ideal kernel of an empty label vector".into()));
    }
    Ok(Matrix::from_fn(y.len(), y.len(), |i, j| {
        y.get(i) * y.get(j)
    }))
}

pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "Frobenius product of {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum())
}

pub fn target_alignment(k: &KernelMatrix, ideal: &KernelMatrix) -> Result<f64> {
    let cross = frobenius_inner(k, ideal)?;
    let kk = frobenius_inner(k, k)?;
    let ii = frobenius_inner(ideal, ideal)?;
    if kk == 0.0 {
        return Err(Error::Degenerate(
            "kernel matrix has zero Frobenius norm".into(),
        ));
    }
    if ii == 0.0 {
        return Err(Error::Degenerate(
            "target kernel has zero Frobenius norm".into(),
        ));
    }
    Ok(cross / (kk * ii).sqrt())
}

/// Alignment of the quantum Gram matrix at `theta` with the labels.
pub fn alignment_objective(
    theta: &AnsatzParams,
    xs: &[DataPoint],
    y: &LabelVector,
    config: &FeatureMapConfig,
    mode: KernelMode,
) -> Result<f64> {
    if xs.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            xs.len(),
            y.len()
        )));
    }
    let k = gram_matrix(xs, theta, config, mode)?;
    target_alignment(&k, &ideal_kernel(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpsaConfig {
    pub iterations: usize,
    /// Step scale `a`.
    pub a: f64,
    /// Perturbation scale `c`.
    pub c: f64,
    /// Step decay exponent.
    pub alpha: f64,
    /// Perturbation decay exponent.
    pub gamma_exp: f64,
    /// Stability constant `A` in the step schedule.
    pub stability_a: f64,
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            a: 0.1,
            c: 0.1,
            alpha: 0.602,
            gamma_exp: 0.101,
            stability_a: 0.0,
            seed: 0,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.c > 0.0
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.gamma_exp > 0.0
            && self.gamma_exp <= 1.0
            && self.stability_a >= 0.0
            && self.a.is_finite()
            && self.c.is_finite()
            && self.stability_a.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid SPSA configuration {self:?}"
            )))
        }
    }

    /// Step size `a / (k + 1 + A)^α`.
    pub fn step(&self, k: usize) -> f64 {
        self.a / (k as f64 + 1.0 + self.stability_a).powf(self.alpha)
    }

    /// Perturbation size `c / (k + 1)^γ`.
    pub fn perturbation(&self, k: usize) -> f64 {
        self.c / (k as f64 + 1.0).powf(self.gamma_exp)
    }
}

/// Which evaluation SPSA is asking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsaStage {
    Initial,
    /// Perturbed evaluation during iteration `k`; `plus` tells the side.
    Perturbed {
        k: usize,
        plus: bool,
    },
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpsaTrace {
    pub initial: f64,
    pub final_value: f64,
    /// `iterations + 1` entries. The first is the objective at the starting
    /// point and the last at the returned point; entry `k` in between is the
    /// midpoint `(f(θ_k + c_k Δ_k) + f(θ_k − c_k Δ_k)) / 2` of the two
    /// evaluations made at iterate `θ_k`.
    pub values: Vec<f64>,
    pub theta: Vec<f64>,
}

fn finite(v: f64, stage: SpsaStage) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!(
            "objective returned {v} at {stage:?}"
        )))
    }
}

/// Maximize `objective` with simultaneous perturbation stochastic
/// approximation. Uses exactly `2·iterations + 2` objective evaluations; the
/// two perturbed evaluations of an iteration run concurrently.
pub fn spsa_maximize<F>(objective: F, theta0: &[f64], cfg: &SpsaConfig) -> Result<SpsaTrace>
where
    F: Fn(&[f64], SpsaStage) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let dim = theta0.len();
    let mut rng = seed::rng(cfg.seed);
    let mut theta = theta0.to_vec();
    let initial = finite(objective(&theta, SpsaStage::Initial)?, SpsaStage::Initial)?;
    let mut values = Vec::with_capacity(cfg.iterations + 1);
    values.push(initial);

    let mut plus = vec![0.0; dim];
    let mut minus = vec![0.0; dim];
    for k in 0..cfg.iterations {
        let ak = cfg.step(k);
        let ck = cfg.perturbation(k);
        let delta: Vec<f64> = (0..dim)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        for i in 0..dim {
            plus[i] = theta[i] + ck * delta[i];
            minus[i] = theta[i] - ck * delta[i];
        }
        let sp = SpsaStage::Perturbed { k, plus: true };
        let sm = SpsaStage::Perturbed { k, plus: false };
        let (fp, fm) = rayon::join(|| objective(&plus, sp), || objective(&minus, sm));
        let fp = finite(fp?, sp)?;
        let fm = finite(fm?, sm)?;
        if k > 0 {
            values.push(0.5 * (fp + fm));
        }
        let diff = (fp - fm) / (2.0 * ck);
        for i in 0..dim {
            theta[i] += ak * diff / delta[i];
        }
    }
    let final_value = if cfg.iterations == 0 {
        initial
    } else {
        let v = finite(objective(&theta, SpsaStage::Final)?, SpsaStage::Final)?;
        values.push(v);
        v
    };
    Ok(SpsaTrace {
        initial,
        final_value,
        values,
        theta,
    })
}

/// Result of alignment maximization over ansatz angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrace {
    pub initial_alignment: f64,
    pub final_alignment: f64,
    pub values: Vec<f64>,
    pub theta_final: AnsatzParams,
}

impl AlignmentTrace {
    /// `iter,alignment` records, 12 significant digits.
    pub fn to_lines(&self) -> String {
        let mut out = String::from("iter,alignment\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{}", fmt_sig(*v)).unwrap();
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "T_i": crate::fmt::round_sig(self.initial_alignment),
            "T_f": crate::fmt::round_sig(self.final_alignment),
            "theta_final": self
                .theta_final
                .as_slice()
                .iter()
                .map(|&t| crate::fmt::round_sig(t))
                .collect::<Vec<_>>(),
        })
    }
}

/// Options for [`optimize_alignment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub spsa: SpsaConfig,
    pub mode: KernelMode,
    /// When set and smaller than the training set, each iteration scores the
    /// alignment on a fresh random subset of this size. The initial and final
    /// alignments always use the full set.
    pub subset: Option<usize>,
}

/// Maximize the alignment of the quantum kernel on `(xs, y)` starting from
/// `theta0`.
pub fn optimize_alignment(
    xs: &[DataPoint],
    y: &LabelVector,
    config: &FeatureMapConfig,
    theta0: &AnsatzParams,
    opts: &AlignOptions,
) -> Result<AlignmentTrace> {
    if xs.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            xs.len(),
            y.len()
        )));
    }
    let expected = AnsatzParams::len_for(config.n_qubits());
    if theta0.len() != expected {
        return Err(Error::Shape(format!(
            "expected {expected} ansatz angles, got {}",
            theta0.len()
        )));
    }
    let n = xs.len();
    let subset = opts.subset.filter(|&s| s < n);
    let objective = |theta: &[f64], stage: SpsaStage| -> Result<f64> {
        let params = AnsatzParams::new(theta.to_vec())?;
        let (tag, k, side) = match stage {
            SpsaStage::Initial => (0u64, 0u64, 0u64),
            SpsaStage::Perturbed { k, plus } => (1, k as u64, u64::from(plus)),
            SpsaStage::Final => (2, 0, 0),
        };
        let mode = opts.mode.reseeded(&[tag, k, side]);
        match (stage, subset) {
            (SpsaStage::Perturbed { k, .. }, Some(s)) => {
                let mut rng = seed::rng(seed::derive(
                    opts.spsa.seed,
                    &[seed::stream::SUBSET, k as u64],
                ));
                let mut idx = index::sample(&mut rng, n, s).into_vec();
                idx.sort_unstable();
                let sub: Vec<DataPoint> = idx.iter().map(|&i| xs[i].clone()).collect();
                alignment_objective(&params, &sub, &y.select(&idx), config, mode)
            }
            _ => alignment_objective(&params, xs, y, config, mode),
        }
    };
    let trace = spsa_maximize(objective, theta0.as_slice(), &opts.spsa)?;
    Ok(AlignmentTrace {
        initial_alignment: trace.initial,
        final_alignment: trace.final_value,
        values: trace.values,
        theta_final: AnsatzParams::new(trace.theta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[i8]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ideal_kernel_examples() {
        assert_eq!(
            ideal_kernel(&labels(&[1, 1])).unwrap().as_slice(),
            &[1.0; 4]
        );
        assert_eq!(
            ideal_kernel(&labels(&[1, -1])).unwrap().as_slice(),
            &[1.0, -1.0, -1.0, 1.0]
        );
        let y = labels(&[1, -1, -1, 1, 1]);
        let k = ideal_kernel(&y).unwrap();
        for i in 0..5 {
            assert_eq!(k.get(i, i), 1.0);
            for j in 0..5 {
                assert_eq!(k.get(i, j), y.get(i) * y.get(j));
            }
        }
        assert!(ideal_kernel(&labels(&[])).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let i2 = Matrix::identity(2);
        assert_eq!(frobenius_inner(&i2, &i2).unwrap(), 2.0);
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        assert_eq!(frobenius_inner(&a, &b).unwrap(), 70.0);
        assert!(frobenius_inner(&a, &a).unwrap() >= 0.0);
        assert!(matches!(
            frobenius_inner(&a, &Matrix::identity(3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn alignment_examples() {
        let ideal = ideal_kernel(&labels(&[1, -1, 1, -1])).unwrap();
        assert!((target_alignment(&ideal, &ideal).unwrap() - 1.0).abs() < 1e-12);
        let ones = Matrix::from_fn(4, 4, |_, _| 1.0);
        assert_eq!(target_alignment(&ones, &ideal).unwrap(), 0.0);
        assert!(matches!(
            target_alignment(&Matrix::zeros(4, 4), &ideal),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn opposite_labels_on_identical_points_align_to_zero() {
        let cfg = FeatureMapConfig::new(2, 2).unwrap();
        let p = DataPoint::new(vec![0.3, 0.6]).unwrap();
        let xs = vec![p.clone(), p];
        let y = labels(&[1, -1]);
        for t in [[0.0; 4], [0.3, -1.0, 2.0, 0.7]] {
            let theta = AnsatzParams::new(t.to_vec()).unwrap();
            let v = alignment_objective(&theta, &xs, &y, &cfg, KernelMode::Exact).unwrap();
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn zero_iterations_leave_theta_unchanged() {
        let cfg = SpsaConfig {
            iterations: 0,
            ..SpsaConfig::default()
        };
        let theta0 = [0.4, -0.2];
        let tr = spsa_maximize(|t, _| Ok(-t[0] * t[0]), &theta0, &cfg).unwrap();
        assert_eq!(tr.theta, theta0);
        assert_eq!(tr.initial, tr.final_value);
        assert_eq!(tr.values.len(), 1);
    }

    #[test]
    fn spsa_reaches_quadratic_optimum() {
        let target = [0.3, -0.2];
        let f = |t: &[f64], _| {
            Ok(-t
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>())
        };
        let hits = (0..20)
            .filter(|&s| {
                let cfg = SpsaConfig {
                    iterations: 200,
                    seed: s,
                    ..SpsaConfig::default()
                };
                let tr = spsa_maximize(f, &[0.0, 0.0], &cfg).unwrap();
                let dist = tr
                    .theta
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                dist < 0.05
            })
            .count();
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn non_finite_objective_aborts() {
        let cfg = SpsaConfig {
            iterations: 3,
            ..SpsaConfig::default()
        };
        let r = spsa_maximize(
            |_, s| {
                Ok(if s == SpsaStage::Initial {
                    0.0
                } else {
                    f64::NAN
                })
            },
            &[0.0],
            &cfg,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn trace_export() {
        let tr = AlignmentTrace {
            initial_alignment: 0.05,
            final_alignment: 0.25,
            values: vec![0.05, 0.1, 0.25],
            theta_final: AnsatzParams::new(vec![0.5, 1.0 / 3.0]).unwrap(),
        };
        assert_eq!(tr.to_lines(), "iter,alignment\n0,0.05\n1,0.1\n2,0.25\n");
        let js = tr.summary_json();
        assert_eq!(js["T_f"], 0.25);
        assert_eq!(js["theta_final"][1], 0.333333333333);
    }
}
