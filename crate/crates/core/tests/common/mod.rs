//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use hybrid_svm::featuremap::DataPoint;
use hybrid_svm::matrix::Matrix;
use hybrid_svm::statevector::{Circuit, Gate};

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn eye(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)])
}

pub fn ry(t: f64) -> CMat {
    let (s, co) = (t / 2.0).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)])
}

/// exp(-iθZ/2), built as cos(θ/2) I - i sin(θ/2) Z.
pub fn rz(t: f64) -> CMat {
    let (s, co) = (t / 2.0).sin_cos();
    eye(2) * c(co, 0.0) - pauli_z() * c(0.0, s)
}

/// Lift single-qubit operators to the full register. Qubit 0 is the least
/// significant bit of the basis index, so it sits rightmost in the product.
pub fn lift(n: usize, ops: &[(usize, CMat)]) -> CMat {
    let mut m = CMat::identity(1, 1);
    for q in (0..n).rev() {
        let op = ops
            .iter()
            .find(|(k, _)| *k == q)
            .map(|(_, o)| o.clone())
            .unwrap_or_else(|| eye(2));
        m = kron(&m, &op);
    }
    m
}

pub fn gate_matrix(n: usize, g: &Gate) -> CMat {
    let d = 1 << n;
    match *g {
        Gate::H(q) => lift(n, &[(q, hadamard())]),
        Gate::Ry(q, t) => lift(n, &[(q, ry(t))]),
        Gate::Rz(q, t) => lift(n, &[(q, rz(t))]),
        Gate::Rzz(a, b, t) => {
            let zz = lift(n, &[(a, pauli_z()), (b, pauli_z())]);
            let (s, co) = (t / 2.0).sin_cos();
            eye(d) * c(co, 0.0) - zz * c(0.0, s)
        }
        Gate::Cx { control, target } => {
            let p0 =
                CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
            let p1 =
                CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
            lift(n, &[(control, p0)]) + lift(n, &[(control, p1), (target, pauli_x())])
        }
    }
}

pub fn circuit_matrix(circuit: &Circuit) -> CMat {
    let n = circuit.n_qubits();
    let mut u = eye(1 << n);
    for g in circuit.gates() {
        u = gate_matrix(n, g) * u;
    }
    u
}

pub fn zero_state(n: usize) -> DVector<Complex64> {
    let mut v = DVector::from_element(1 << n, c(0.0, 0.0));
    v[0] = c(1.0, 0.0);
    v
}

pub fn random_gate<R: Rng>(rng: &mut R, n: usize) -> Gate {
    let angle = rng.random_range(-4.0 * std::f64::consts::PI..4.0 * std::f64::consts::PI);
    let q = rng.random_range(0..n);
    let kinds = if n >= 2 { 5 } else { 3 };
    match rng.random_range(0..kinds) {
        0 => Gate::H(q),
        1 => Gate::Ry(q, angle),
        2 => Gate::Rz(q, angle),
        k => {
            let mut r = rng.random_range(0..n - 1);
            if r >= q {
                r += 1;
            }
            if k == 3 {
                Gate::Rzz(q, r, angle)
            } else {
                Gate::Cx {
                    control: q,
                    target: r,
                }
            }
        }
    }
}

pub fn random_circuit<R: Rng>(rng: &mut R, n: usize, max_gates: usize) -> Circuit {
    let len = rng.random_range(0..=max_gates);
    let gates = (0..len).map(|_| random_gate(rng, n)).collect();
    Circuit::from_gates(n, gates).unwrap()
}

pub fn random_points<R: Rng>(rng: &mut R, count: usize, dim: usize) -> Vec<DataPoint> {
    (0..count)
        .map(|_| DataPoint::new((0..dim).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect()
}

/// Fidelity kernel straight from the definition: dense unitaries for the
/// ansatz and the ZZ map, applied to |0…0⟩, then |⟨ψ_i|ψ_j⟩|².
pub fn dense_embedding(x: &[f64], theta: &[f64], depth: usize) -> DVector<Complex64> {
    use std::f64::consts::PI;
    let n = x.len();
    let mut state = zero_state(n);
    let mut apply = |m: CMat| state = &m * &state;
    for (q, &t) in theta[..n].iter().enumerate() {
        apply(lift(n, &[(q, ry(t))]));
    }
    let ring = n >= 3;
    for q in 0..n.saturating_sub(1) {
        apply(gate_matrix(
            n,
            &Gate::Cx {
                control: q,
                target: q + 1,
            },
        ));
    }
    if ring {
        apply(gate_matrix(
            n,
            &Gate::Cx {
                control: n - 1,
                target: 0,
            },
        ));
    }
    for (q, &t) in theta[n..].iter().enumerate() {
        apply(lift(n, &[(q, ry(t))]));
    }
    for _ in 0..depth {
        for q in 0..n {
            apply(lift(n, &[(q, hadamard())]));
        }
        for (q, &xq) in x.iter().enumerate().take(n) {
            apply(lift(n, &[(q, rz(2.0 * PI * xq))]));
        }
        for i in 0..n {
            for j in i + 1..n {
                let t = 2.0 * PI * (1.0 - x[i]) * (1.0 - x[j]);
                apply(gate_matrix(n, &Gate::Rzz(i, j, t)));
            }
        }
    }
    state
}

pub fn dense_kernel(xi: &[f64], xj: &[f64], theta: &[f64], depth: usize) -> f64 {
    let a = dense_embedding(xi, theta, depth);
    let b = dense_embedding(xj, theta, depth);
    a.dotc(&b).norm_sqr()
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    SymmetricEigen::new(to_dmatrix(m)).eigenvalues.min()
}

/// Euclidean projection onto {0 ≤ α ≤ C, yᵀα = 0} by bisection on the
/// multiplier of the equality constraint.
pub fn project_box_hyperplane(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> (Vec<f64>, f64) {
        let a: Vec<f64> = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect();
        let s = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
        (a, s)
    };
    let bound = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if at(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi)).0
}

/// Dual soft-margin SVM solved by accelerated projected gradient ascent.
/// Returns α and the dual objective.
pub fn qp_oracle(k: &Matrix, y: &[f64], c: f64, tol: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k.get(i, j));
    let lip = SymmetricEigen::new(q.clone()).eigenvalues.max().max(1e-12);
    let objective = |a: &[f64]| -> f64 {
        let av = DVector::from_column_slice(a);
        a.iter().sum::<f64>() - 0.5 * av.dot(&(&q * &av))
    };
    let grad = |a: &[f64]| -> Vec<f64> {
        let av = DVector::from_column_slice(a);
        let qa = &q * &av;
        (0..n).map(|i| 1.0 - qa[i]).collect()
    };
    // Stationarity: distance from x to its own projected gradient step.
    let residual = |a: &[f64]| -> f64 {
        let g = grad(a);
        let step: Vec<f64> = a.iter().zip(&g).map(|(ai, gi)| ai + gi / lip).collect();
        let p = project_box_hyperplane(&step, y, c);
        p.iter()
            .zip(a)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for it in 0..1_000_000 {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + gi / lip).collect();
        let next = project_box_hyperplane(&step, y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moment = (t - 1.0) / t_next;
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + moment * (a - b))
            .collect();
        // Restart when the momentum step goes downhill.
        if objective(&next) < objective(&x) {
            z = next.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        x = next;
        if it % 16 == 0 && residual(&x) < tol {
            break;
        }
    }
    let f = objective(&x);
    (x, f)
}

/// Every sign assignment of the ranks, counting those whose positive sum is
/// at most `w`; returns the two-sided p.
pub fn wilcoxon_enumeration(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|&x| x != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|a| {
            let less = abs.iter().filter(|b| *b < a).count() as f64;
            let equal = abs.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let w_minus: f64 = (0..n).filter(|&i| d[i] < 0.0).map(|i| ranks[i]).sum();
    let w = w_plus.min(w_minus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if s <= w + 1e-9 {
            hits += 1;
        }
    }
    (w, (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0))
}

/// Bias from a dual solution: mean of `y_i − f_i` over free multipliers,
/// otherwise the midpoint of the bounds implied by the bounded ones.
pub fn oracle_bias(alpha: &[f64], k: &Matrix, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let eps = 1e-9;
    let f = |i: usize| (0..n).map(|j| alpha[j] * y[j] * k.get(i, j)).sum::<f64>();
    let free: Vec<usize> = (0..n)
        .filter(|&i| alpha[i] > eps && alpha[i] < c - eps)
        .collect();
    if !free.is_empty() {
        return free.iter().map(|&i| y[i] - f(i)).sum::<f64>() / free.len() as f64;
    }
    // y_i (f_i + b) >= 1 at α = 0, <= 1 at α = C.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let r = y[i] - f(i);
        let at_zero = alpha[i] <= eps;
        if (y[i] > 0.0) == at_zero {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        _ => 0.0,
    }
}

/// Sign of `Σ α_s y_s K(x, s) + b`, zero mapping to +1.
pub fn oracle_predict(alpha: &[f64], y: &[f64], bias: f64, rows: &Matrix) -> Vec<i8> {
    (0..rows.rows())
        .map(|t| {
            let v: f64 = (0..y.len())
                .map(|s| alpha[s] * y[s] * rows.get(t, s))
                .sum::<f64>()
                + bias;
            if v >= 0.0 {
                1
            } else {
                -1
            }
        })
        .collect()
}
