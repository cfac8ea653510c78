//! Gauss rules for the symmetric Jacobi weight `(1 - t²)^α` and product rules
//! on round spheres built from them.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

/// Γ(x) for `x` a positive integer or half-integer, given as `twice = 2x`.
fn half_integer_gamma(twice: u32) -> f64 {
    assert!(twice > 0);
    let (mut x, mut value) = if twice % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = twice as f64 / 2.0;
    while x < target {
        value *= x;
        x += 1.0;
    }
    value
}

/// Recurrence coefficient β_k of the monic orthogonal polynomials for
/// `(1 - t²)^α` on [-1, 1].
fn beta(k: usize, alpha: f64) -> f64 {
    let k = k as f64;
    k * (k + 2.0 * alpha) / (4.0 * (k + alpha) * (k + alpha) - 1.0)
}

/// Orthonormal polynomial values q_0..q_{n} and the derivative of q_n at `t`.
fn orthonormal_values(n: usize, alpha: f64, mu0: f64, t: f64) -> (Vec<f64>, f64) {
    let mut q = vec![0.0; n + 1];
    let mut dq = vec![0.0; n + 1];
    q[0] = 1.0 / mu0.sqrt();
    if n >= 1 {
        let b1 = beta(1, alpha).sqrt();
        q[1] = t * q[0] / b1;
        dq[1] = q[0] / b1;
    }
    for k in 1..n {
        let bk = beta(k, alpha).sqrt();
        let bk1 = beta(k + 1, alpha).sqrt();
        q[k + 1] = (t * q[k] - bk * q[k - 1]) / bk1;
        dq[k + 1] = (q[k] + t * dq[k] - bk * dq[k - 1]) / bk1;
    }
    (q, dq[n])
}

/// `n`-point Gauss rule for `∫_{-1}^{1} f(t) (1 - t²)^α dt` with `2α` a
/// non-negative integer. Exact for polynomials of degree `2n - 1`.
pub fn gauss_jacobi_symmetric(n: usize, twice_alpha: u32) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let alpha = twice_alpha as f64 / 2.0;
    let mu0 = PI.sqrt() * half_integer_gamma(twice_alpha + 2) / half_integer_gamma(twice_alpha + 3);

    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = beta(k, alpha).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Newton polish on q_n, then Christoffel weights 1 / Σ q_k(t)².
    let mut weights = Vec::with_capacity(n);
    for t in nodes.iter_mut() {
        for _ in 0..3 {
            let (q, dqn) = orthonormal_values(n, alpha, mu0, *t);
            if dqn != 0.0 {
                *t -= q[n] / dqn;
            }
        }
        let (q, _) = orthonormal_values(n, alpha, mu0, *t);
        let s: f64 = q[..n].iter().map(|v| v * v).sum();
        weights.push(1.0 / s);
    }
    // Enforce exact antisymmetry of the nodes.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let t = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -t;
        nodes[j] = t;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Product rule on the unit sphere S^{ambient-1} ⊂ ℝ^{ambient}, exact for
/// polynomial integrands of total degree ≤ `exactness`.
///
/// Nodes are returned as flat rows of length `ambient`. The last coordinate
/// is the outermost polar variable; the first two coordinates form the
/// periodic circle.
pub fn unit_sphere_rule(ambient: usize, exactness: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!(ambient >= 2);
    if ambient == 2 {
        let count = exactness + 1;
        let step = 2.0 * PI / count as f64;
        let nodes = (0..count)
            .map(|i| {
                let angle = step * i as f64;
                vec![angle.cos(), angle.sin()]
            })
            .collect();
        return (nodes, vec![step; count]);
    }
    let points = exactness / 2 + 1;
    // S^m with m = ambient - 1 carries the weight (1 - t²)^{(m-2)/2}.
    let (ts, tw) = gauss_jacobi_symmetric(points, (ambient - 3) as u32);
    let (sub_nodes, sub_weights) = unit_sphere_rule(ambient - 1, exactness);
    let mut nodes = Vec::with_capacity(ts.len() * sub_nodes.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (&t, &wt) in ts.iter().zip(&tw) {
        let s = (1.0 - t * t).max(0.0).sqrt();
        for (y, &wy) in sub_nodes.iter().zip(&sub_weights) {
            let mut x: Vec<f64> = y.iter().map(|v| s * v).collect();
            x.push(t);
            nodes.push(x);
            weights.push(wt * wy);
        }
    }
    (nodes, weights)
}

/// Surface area of the unit sphere S^{ambient-1}.
pub fn unit_sphere_area(ambient: usize) -> f64 {
    // 2 π^{n/2} / Γ(n/2)
    2.0 * PI.powf(ambient as f64 / 2.0) / half_integer_gamma(ambient as u32)
}
