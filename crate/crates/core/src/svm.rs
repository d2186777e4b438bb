//! Soft-margin SVM trained by SMO on a precomputed kernel, plus the RBF
//! baseline.
//!
//! The solver works on the dual in minimization form
//!
//! ```text
//! min ½ αᵀQα − Σα,   Q_ij = y_i y_j K_ij,   0 ≤ α_i ≤ C,   Σ y_i α_i = 0
//! ```
//!
//! selecting the maximal violating pair each iteration and stopping once the
//! KKT gap `max_{I_up} −y G − min_{I_low} −y G` falls to the tolerance.
//! The decision function is `f(x) = Σ_s α_s y_s K(x, x_s) + b`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fmt::fmt_sig;
use crate::labels::LabelVector;
use crate::matrix::{KernelMatrix, Matrix};
use crate::{Error, Result};

/// Lower bound on the curvature along a working pair.
const TAU: f64 = 1e-12;
/// Multipliers above this count as support vectors.
const SV_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Precomputed,
    Rbf { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration budget in passes; one pass is `N` pair updates.
    pub max_passes: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Indices of the support vectors in the training set, ascending.
    pub support_indices: Vec<usize>,
    /// `α_s · y_s` for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    /// Support-vector features, kept for kernels evaluated at prediction time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_vectors: Option<Matrix>,
    #[serde(skip)]
    pub alphas: Vec<f64>,
    #[serde(skip)]
    pub iterations: usize,
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.support_indices.len()
    }

    /// Decision values for rows of kernel entries against the support vectors.
    pub fn decision_function(&self, kernel_rows: &Matrix) -> Result<Vec<f64>> {
        if kernel_rows.cols() != self.n_support() {
            return Err(Error::Shape(format!(
                "kernel rows have {} columns, model has {} support vectors",
                kernel_rows.cols(),
                self.n_support()
            )));
        }
        Ok(kernel_rows
            .iter_rows()
            .map(|r| {
                r.iter()
                    .zip(&self.dual_coefs)
                    .map(|(k, a)| k * a)
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }

    /// Plain-text model record.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "C {}", fmt_sig(self.c)).unwrap();
        match self.kernel {
            KernelSpec::Precomputed => writeln!(out, "kernel precomputed").unwrap(),
            KernelSpec::Rbf { gamma } => writeln!(out, "kernel rbf {}", fmt_sig(gamma)).unwrap(),
        }
        writeln!(out, "bias {}", fmt_sig(self.bias)).unwrap();
        writeln!(out, "support {}", self.n_support()).unwrap();
        for (s, (&idx, &coef)) in self
            .support_indices
            .iter()
            .zip(&self.dual_coefs)
            .enumerate()
        {
            write!(out, "{idx} {}", fmt_sig(coef)).unwrap();
            if let Some(sv) = &self.support_vectors {
                for &v in sv.row(s) {
                    write!(out, " {}", fmt_sig(v)).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<SvmModel> {
        let bad = |m: &str| Error::Shape(format!("model text: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(name) {
                return Err(bad(&format!("expected {name} line, got {line:?}")));
            }
            Ok(toks.map(str::to_string).collect())
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(&format!("bad number {s:?}")))
        };
        let c = num(field("C")?.first().ok_or_else(|| bad("C value"))?)?;
        let kernel = match field("kernel")?.as_slice() {
            [k] if k == "precomputed" => KernelSpec::Precomputed,
            [k, g] if k == "rbf" => KernelSpec::Rbf { gamma: num(g)? },
            other => return Err(bad(&format!("kernel {other:?}"))),
        };
        let bias = num(field("bias")?.first().ok_or_else(|| bad("bias value"))?)?;
        let count: usize = field("support")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("support count"))?;
        let mut support_indices = Vec::with_capacity(count);
        let mut dual_coefs = Vec::with_capacity(count);
        let mut sv_rows = Vec::new();
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| bad("missing support line"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < 2 {
                return Err(bad(&format!("support line {line:?}")));
            }
            support_indices.push(toks[0].parse().map_err(|_| bad("support index"))?);
            dual_coefs.push(num(toks[1])?);
            if toks.len() > 2 {
                sv_rows.push(
                    toks[2..]
                        .iter()
                        .map(|t| num(t))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        let support_vectors = if sv_rows.is_empty() {
            None
        } else {
            Some(Matrix::from_rows(&sv_rows)?)
        };
        Ok(SvmModel {
            c,
            kernel,
            support_indices,
            dual_coefs,
            bias,
            support_vectors,
            alphas: Vec::new(),
            iterations: 0,
        })
    }
}

/// Train with the default SMO tolerance (1e-3).
pub fn train(k: &KernelMatrix, y: &LabelVector, c: f64) -> Result<SvmModel> {
    train_with(k, y, c, &SmoConfig::default())
}

pub fn train_with(k: &KernelMatrix, y: &LabelVector, c: f64, cfg: &SmoConfig) -> Result<SvmModel> {
    let n = y.len();
    if !k.is_square() || k.rows() != n {
        return Err(Error::Shape(format!(
            "kernel is {}x{}, labels have length {n}",
            k.rows(),
            k.cols()
        )));
    }
    if n == 0 {
        return Err(Error::Size("cannot train on an empty set".into()));
    }
    if !k.is_symmetric(1e-10) {
        return Err(Error::Shape(format!(
            "kernel matrix is not symmetric (max asymmetry {:e})",
            k.asymmetry().unwrap_or(f64::NAN)
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("C must be positive, got {c}")));
    }

    let yv: Vec<f64> = (0..n).map(|i| y.get(i)).collect();
    let q = |i: usize, j: usize| yv[i] * yv[j] * k.get(i, j);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let max_iter = cfg.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -yv[t] * grad[t];
            if in_up(alpha[t], yv[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], yv[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin <= cfg.tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence(format!(
                "{iterations} iterations on {n} points, KKT gap {:e} > tolerance {:e}",
                gmax - gmin,
                cfg.tol
            )));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if yv[i] != yv[j] {
            let quad = (k.get(i, i) + k.get(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k.get(i, i) + k.get(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    let bias = compute_bias(&alpha, &grad, &yv, c);
    let support_indices: Vec<usize> = (0..n).filter(|&i| alpha[i] > SV_THRESHOLD).collect();
    let dual_coefs = support_indices.iter().map(|&i| alpha[i] * yv[i]).collect();
    Ok(SvmModel {
        c,
        kernel: KernelSpec::Precomputed,
        support_indices,
        dual_coefs,
        bias,
        support_vectors: None,
        alphas: alpha,
        iterations,
    })
}

/// Mean of `y_i − f_i` over free multipliers; the midpoint of the KKT bounds
/// from the bounded ones when none is free.
fn compute_bias(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for i in 0..alpha.len() {
        // y_i − f_i(without b) = −y_i G_i.
        let r = -y[i] * grad[i];
        if alpha[i] > 0.0 && alpha[i] < c {
            free_sum += r;
            free_count += 1;
        } else if (alpha[i] <= 0.0) == (y[i] > 0.0) {
            lower = lower.max(r);
        } else {
            upper = upper.min(r);
        }
    }
    if free_count > 0 {
        free_sum / free_count as f64
    } else if lower.is_finite() && upper.is_finite() {
        0.5 * (lower + upper)
    } else if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        0.0
    }
}

/// `Σα_i − ½ Σ_ij α_i α_j y_i y_j K_ij`.
pub fn dual_objective(alpha: &[f64], k: &KernelMatrix, y: &LabelVector) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y.get(i) * y.get(j) * k.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Sign of the decision function; exact zero maps to +1.
pub fn predict(model: &SvmModel, kernel_rows: &Matrix) -> Result<LabelVector> {
    let d = model.decision_function(kernel_rows)?;
    LabelVector::new(
        d.into_iter()
            .map(|v| if v >= 0.0 { 1 } else { -1 })
            .collect(),
    )
}

pub fn accuracy(predicted: &LabelVector, actual: &LabelVector) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Size("accuracy of an empty set".into()));
    }
    let hits = predicted
        .as_slice()
        .iter()
        .zip(actual.as_slice())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / actual.len() as f64)
}

/// `1 / (m σ²)` with `σ²` the population variance of all feature values.
pub fn rbf_default_gamma(x: &Matrix) -> Result<f64> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::Size("RBF gamma of an empty feature matrix".into()));
    }
    let vals = x.as_slice();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Degenerate(
            "feature values have zero variance".into(),
        ));
    }
    Ok(1.0 / (x.cols() as f64 * var))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "RBF gamma must be positive, got {gamma}"
        )))
    }
}

pub fn rbf_gram(x: &Matrix, gamma: f64) -> Result<KernelMatrix> {
    rbf_cross(x, x, gamma)
}

/// `exp(−γ ‖a_t − b_s‖²)` for every row pair.
pub fn rbf_cross(a: &Matrix, b: &Matrix, gamma: f64) -> Result<Matrix> {
    check_gamma(gamma)?;
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    Ok(Matrix::from_fn(a.rows(), b.rows(), |t, s| {
        (-gamma * sq_dist(a.row(t), b.row(s))).exp()
    }))
}

/// Train an RBF SVM; the model keeps its support vectors.
pub fn train_rbf(x: &Matrix, y: &LabelVector, gamma: f64, c: f64) -> Result<SvmModel> {
    let k = rbf_gram(x, gamma)?;
    let mut model = train(&k, y, c)?;
    let all: Vec<usize> = (0..x.cols()).collect();
    model.support_vectors = Some(x.select(&model.support_indices, &all));
    model.kernel = KernelSpec::Rbf { gamma };
    Ok(model)
}

pub fn predict_rbf(model: &SvmModel, x: &Matrix) -> Result<LabelVector> {
    let (KernelSpec::Rbf { gamma }, Some(sv)) = (model.kernel, &model.support_vectors) else {
        return Err(Error::Shape(
            "model is not an RBF model with stored support vectors".into(),
        ));
    };
    predict(model, &rbf_cross(x, sv, gamma)?)
}
