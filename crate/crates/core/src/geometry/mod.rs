//! Model 4-manifold backends: quadrature, Laplace eigenbases with
//! derivatives, and curvature data for the round S⁴, flat T⁴ and S²×S².

pub mod harmonics;
pub mod quadrature;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use harmonics::HarmonicBasis;

/// Which model manifold a backend discretizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BackendKind {
    Sphere4 { radius: f64 },
    Torus4 { periods: [f64; 4] },
    S2xS2 { radius_a: f64, radius_b: f64 },
}

/// JSON-friendly description of a backend, `{"kind", "params", "max_degree"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: String,
    pub params: Vec<f64>,
    pub max_degree: usize,
}

impl BackendDescriptor {
    pub fn build(&self) -> Result<ManifoldBackend> {
        match self.kind.as_str() {
            "sphere" => {
                let radius = match self.params.as_slice() {
                    [] => 1.0,
                    [r] => *r,
                    _ => return Err(Error::Config("sphere takes one parameter (radius)".into())),
                };
                build_sphere(radius, self.max_degree)
            }
            "torus" => {
                let periods = match self.params.as_slice() {
                    [] => [1.0; 4],
                    [p] => [*p; 4],
                    [a, b, c, d] => [*a, *b, *c, *d],
                    _ => return Err(Error::Config("torus takes 1 or 4 periods".into())),
                };
                build_torus(periods, self.max_degree)
            }
            "s2xs2" => {
                let (a, b) = match self.params.as_slice() {
                    [] => (1.0, 1.0),
                    [a, b] => (*a, *b),
                    _ => return Err(Error::Config("s2xs2 takes two radii".into())),
                };
                build_s2xs2(a, b, self.max_degree)
            }
            other => Err(Error::Config(format!("unknown backend kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
struct FourierMode {
    k: [i32; 4],
    /// `false` for cosine, `true` for sine; the zero mode is a cosine.
    sine: bool,
}

#[derive(Debug, Clone)]
enum BasisRepr {
    Sphere { harmonics: HarmonicBasis },
    Torus { modes: Vec<FourierMode> },
    S2xS2 { a: HarmonicBasis, b: HarmonicBasis, pairs: Vec<(usize, usize)> },
}

/// A discretized closed 4-manifold.
///
/// Node data are stored with one row per quadrature node and one column per
/// basis function. Gradients are given in ambient (sphere, S²×S²) or
/// coordinate (torus) components; on the curved backends they are tangent
/// to the embedded manifold.
#[derive(Debug, Clone)]
pub struct ManifoldBackend {
    kind: BackendKind,
    max_degree: usize,
    exactness: usize,
    nodes: Vec<Vec<f64>>,
    weights: DVector<f64>,
    values: DMatrix<f64>,
    gradients: Vec<DMatrix<f64>>,
    laplacians: DMatrix<f64>,
    laplace_eigenvalues: Vec<f64>,
    /// μ-weighted Ricci contraction per basis function: Ric(∇φ,∇φ) integrates
    /// to this value for the normalized φ.
    ricci_eigenvalues: Vec<f64>,
    degrees: Vec<usize>,
    scalar_curvature: f64,
    /// Ricci acts diagonally on gradient components.
    ricci_diagonal: Vec<f64>,
    volume: f64,
    repr: BasisRepr,
}

/// Round S⁴ of the given radius with harmonics through `max_degree`.
pub fn build_sphere(radius: f64, max_degree: usize) -> Result<ManifoldBackend> {
    build_sphere_with_exactness(radius, max_degree, 4 * max_degree + 4)
}

/// As [`build_sphere`] with an explicit polynomial exactness degree for the
/// quadrature (at least `2 * max_degree`).
pub fn build_sphere_with_exactness(radius: f64, max_degree: usize, exactness: usize) -> Result<ManifoldBackend> {
    if max_degree < 2 {
        return Err(Error::Config(format!(
            "sphere backend needs max_degree >= 2 to represent degree-2 harmonics, got {max_degree}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
    }
    if exactness < 2 * max_degree {
        return Err(Error::Config("quadrature exactness below 2 * max_degree".into()));
    }
    let (unit_nodes, unit_weights) = quadrature::unit_sphere_rule(5, exactness);
    let harmonics = HarmonicBasis::build(5, max_degree, &unit_nodes, &unit_weights);
    let tab = harmonics.tabulate(&unit_nodes);

    let r2 = radius * radius;
    let value_scale = 1.0 / r2;
    let weights = DVector::from_iterator(unit_weights.len(), unit_weights.iter().map(|w| w * r2 * r2));
    let nodes: Vec<Vec<f64>> = unit_nodes.iter().map(|x| x.iter().map(|v| v * radius).collect()).collect();
    let degrees = harmonics.degrees().to_vec();
    let laplace_eigenvalues: Vec<f64> = degrees.iter().map(|&l| (l * (l + 3)) as f64 / r2).collect();
    let ricci = 3.0 / r2;
    Ok(ManifoldBackend {
        kind: BackendKind::Sphere4 { radius },
        max_degree,
        exactness,
        nodes,
        volume: weights.sum(),
        weights,
        values: tab.values * value_scale,
        gradients: tab.gradients.into_iter().map(|g| g * (value_scale / radius)).collect(),
        laplacians: tab.laplacians * (value_scale / r2),
        ricci_eigenvalues: laplace_eigenvalues.iter().map(|m| ricci * m).collect(),
        laplace_eigenvalues,
        degrees,
        scalar_curvature: 12.0 / r2,
        ricci_diagonal: vec![ricci; 5],
        repr: BasisRepr::Sphere { harmonics },
    })
}

/// Flat T⁴ with real Fourier modes `|k_j| ≤ max_freq`.
///
/// Uses a uniform grid of `4 * max_freq + 1` points per direction, which
/// integrates products of four basis functions exactly.
pub fn build_torus(periods: [f64; 4], max_freq: usize) -> Result<ManifoldBackend> {
    if periods.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::Config(format!("torus periods must be positive, got {periods:?}")));
    }
    if max_freq < 1 {
        return Err(Error::Config("torus backend needs max_freq >= 1".into()));
    }
    let f = max_freq as i32;
    let mut modes = vec![FourierMode { k: [0; 4], sine: false }];
    let mut ks = Vec::new();
    for k0 in -f..=f {
        for k1 in -f..=f {
            for k2 in -f..=f {
                for k3 in -f..=f {
                    let k = [k0, k1, k2, k3];
                    let first = k.iter().find(|&&c| c != 0);
                    if matches!(first, Some(&c) if c > 0) {
                        ks.push(k);
                    }
                }
            }
        }
    }
    let mu = |k: &[i32; 4]| -> f64 {
        (0..4).map(|j| (2.0 * PI * k[j] as f64 / periods[j]).powi(2)).sum()
    };
    ks.sort_by(|a, b| mu(a).partial_cmp(&mu(b)).unwrap().then(b.cmp(a)));
    for k in ks {
        modes.push(FourierMode { k, sine: false });
        modes.push(FourierMode { k, sine: true });
    }

    let n = 4 * max_freq + 1;
    let volume: f64 = periods.iter().product();
    let mut nodes = Vec::with_capacity(n.pow(4));
    for i0 in 0..n {
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    let idx = [i0, i1, i2, i3];
                    nodes.push((0..4).map(|j| periods[j] * idx[j] as f64 / n as f64).collect::<Vec<f64>>());
                }
            }
        }
    }
    let weights = DVector::from_element(nodes.len(), volume / nodes.len() as f64);

    let nb = modes.len();
    let mut values = DMatrix::zeros(nodes.len(), nb);
    let mut gradients: Vec<DMatrix<f64>> = (0..4).map(|_| DMatrix::zeros(nodes.len(), nb)).collect();
    let mut laplacians = DMatrix::zeros(nodes.len(), nb);
    for (q, x) in nodes.iter().enumerate() {
        for (a, mode) in modes.iter().enumerate() {
            let (v, g, lap) = fourier_eval(mode, &periods, volume, x);
            values[(q, a)] = v;
            for j in 0..4 {
                gradients[j][(q, a)] = g[j];
            }
            laplacians[(q, a)] = lap;
        }
    }
    let laplace_eigenvalues: Vec<f64> = modes.iter().map(|m| mu(&m.k)).collect();
    let degrees = modes.iter().map(|m| m.k.iter().map(|c| c.unsigned_abs() as usize).max().unwrap()).collect();
    Ok(ManifoldBackend {
        kind: BackendKind::Torus4 { periods },
        max_degree: max_freq,
        exactness: 4 * max_freq,
        nodes,
        weights,
        values,
        gradients,
        laplacians,
        ricci_eigenvalues: vec![0.0; nb],
        laplace_eigenvalues,
        degrees,
        scalar_curvature: 0.0,
        ricci_diagonal: vec![0.0; 4],
        volume,
        repr: BasisRepr::Torus { modes },
    })
}

fn fourier_eval(mode: &FourierMode, periods: &[f64; 4], volume: f64, x: &[f64]) -> (f64, [f64; 4], f64) {
    let omega: [f64; 4] = std::array::from_fn(|j| 2.0 * PI * mode.k[j] as f64 / periods[j]);
    if mode.k == [0; 4] {
        return (1.0 / volume.sqrt(), [0.0; 4], 0.0);
    }
    let scale = (2.0 / volume).sqrt();
    let theta: f64 = (0..4).map(|j| omega[j] * x[j]).sum();
    let (s, c) = theta.sin_cos();
    let (v, dv) = if mode.sine { (s, c) } else { (c, -s) };
    let grad = std::array::from_fn(|j| scale * dv * omega[j]);
    let lap = -scale * v * omega.iter().map(|o| o * o).sum::<f64>();
    (scale * v, grad, lap)
}

/// Product of round spheres of radii `a` and `b`; basis functions are
/// products of S² harmonics with degree sum ≤ `max_degree`.
pub fn build_s2xs2(radius_a: f64, radius_b: f64, max_degree: usize) -> Result<ManifoldBackend> {
    for r in [radius_a, radius_b] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("S2xS2 radii must be positive, got {r}")));
        }
    }
    if max_degree < 1 {
        return Err(Error::Config("S2xS2 backend needs max_degree >= 1".into()));
    }
    let exactness = 4 * max_degree + 4;
    let (unit_nodes, unit_weights) = quadrature::unit_sphere_rule(3, exactness);
    let basis = HarmonicBasis::build(3, max_degree, &unit_nodes, &unit_weights);
    let tab = basis.tabulate(&unit_nodes);

    let mut pairs = Vec::new();
    for total in 0..=max_degree {
        for la in (0..=total).rev() {
            let lb = total - la;
            for i in (0..basis.len()).filter(|&i| basis.degrees()[i] == la) {
                for j in (0..basis.len()).filter(|&j| basis.degrees()[j] == lb) {
                    pairs.push((i, j));
                }
            }
        }
    }

    // Per-factor scaled data: value scale 1/r, gradient 1/r², Laplacian 1/r³.
    let factor = |r: f64| {
        let vals = &tab.values / r;
        let grads: Vec<DMatrix<f64>> = tab.gradients.iter().map(|g| g / (r * r)).collect();
        let laps = &tab.laplacians / (r * r * r);
        let pts: Vec<Vec<f64>> = unit_nodes.iter().map(|x| x.iter().map(|v| v * r).collect()).collect();
        let wts: Vec<f64> = unit_weights.iter().map(|w| w * r * r).collect();
        (vals, grads, laps, pts, wts)
    };
    let (va, ga, la_, pa, wa) = factor(radius_a);
    let (vb, gb, lb_, pb, wb) = factor(radius_b);

    let m = unit_nodes.len();
    let nq = m * m;
    let nb = pairs.len();
    let mut nodes = Vec::with_capacity(nq);
    let mut weights = DVector::zeros(nq);
    for i in 0..m {
        for j in 0..m {
            let mut x = pa[i].clone();
            x.extend_from_slice(&pb[j]);
            nodes.push(x);
            weights[i * m + j] = wa[i] * wb[j];
        }
    }
    let mut values = DMatrix::zeros(nq, nb);
    let mut gradients: Vec<DMatrix<f64>> = (0..6).map(|_| DMatrix::zeros(nq, nb)).collect();
    let mut laplacians = DMatrix::zeros(nq, nb);
    for (c, &(fa, fb)) in pairs.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                let q = i * m + j;
                let (x, y) = (va[(i, fa)], vb[(j, fb)]);
                values[(q, c)] = x * y;
                for d in 0..3 {
                    gradients[d][(q, c)] = ga[d][(i, fa)] * y;
                    gradients[3 + d][(q, c)] = x * gb[d][(j, fb)];
                }
                laplacians[(q, c)] = la_[(i, fa)] * y + x * lb_[(j, fb)];
            }
        }
    }
    let (ra2, rb2) = (radius_a * radius_a, radius_b * radius_b);
    let mu_a = |i: usize| {
        let l = basis.degrees()[i];
        (l * (l + 1)) as f64 / ra2
    };
    let mu_b = |j: usize| {
        let l = basis.degrees()[j];
        (l * (l + 1)) as f64 / rb2
    };
    let laplace_eigenvalues = pairs.iter().map(|&(i, j)| mu_a(i) + mu_b(j)).collect();
    let ricci_eigenvalues = pairs.iter().map(|&(i, j)| mu_a(i) / ra2 + mu_b(j) / rb2).collect();
    let degrees = pairs.iter().map(|&(i, j)| basis.degrees()[i] + basis.degrees()[j]).collect();
    let mut ricci_diagonal = vec![1.0 / ra2; 3];
    ricci_diagonal.extend([1.0 / rb2; 3]);
    Ok(ManifoldBackend {
        kind: BackendKind::S2xS2 { radius_a, radius_b },
        max_degree,
        exactness,
        nodes,
        volume: weights.sum(),
        weights,
        values,
        gradients,
        laplacians,
        laplace_eigenvalues,
        ricci_eigenvalues,
        degrees,
        scalar_curvature: 2.0 / ra2 + 2.0 / rb2,
        ricci_diagonal,
        repr: BasisRepr::S2xS2 { b: basis.clone(), a: basis, pairs },
    })
}

/// `Σ_q weight_q f(x_q)`.
pub fn integrate(backend: &ManifoldBackend, node_function: &[f64]) -> Result<f64> {
    if node_function.len() != backend.num_nodes() {
        return Err(Error::Usage(format!(
            "node function has {} entries, backend has {} nodes",
            node_function.len(),
            backend.num_nodes()
        )));
    }
    Ok(backend.weights.iter().zip(node_function).map(|(w, f)| w * f).sum())
}

impl ManifoldBackend {
    pub fn kind(&self) -> &BackendKind {
        &self.kind
    }

    pub fn descriptor(&self) -> BackendDescriptor {
        let (kind, params) = match &self.kind {
            BackendKind::Sphere4 { radius } => ("sphere", vec![*radius]),
            BackendKind::Torus4 { periods } => ("torus", periods.to_vec()),
            BackendKind::S2xS2 { radius_a, radius_b } => ("s2xs2", vec![*radius_a, *radius_b]),
        };
        BackendDescriptor { kind: kind.into(), params, max_degree: self.max_degree }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.kind, BackendKind::Sphere4 { .. })
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Polynomial (or trigonometric) degree integrated exactly.
    pub fn exactness(&self) -> usize {
        self.exactness
    }

    pub fn basis_dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Components per gradient vector.
    pub fn gradient_dim(&self) -> usize {
        self.gradients.len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Volume of the base metric, i.e. the sum of the quadrature weights.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// `values()[(q, a)] = φ_a(x_q)`.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `gradients()[i][(q, a)]` is the i-th component of ∇φ_a(x_q).
    pub fn gradients(&self) -> &[DMatrix<f64>] {
        &self.gradients
    }

    /// Δφ_a(x_q) with Δ the trace of the Hessian.
    pub fn laplacians(&self) -> &DMatrix<f64> {
        &self.laplacians
    }

    /// μ_a ≥ 0 with Δφ_a = −μ_a φ_a.
    pub fn laplace_eigenvalues(&self) -> &[f64] {
        &self.laplace_eigenvalues
    }

    /// Harmonic degree (sphere, S²×S² degree sum) or max frequency (torus).
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn scalar_curvature(&self) -> f64 {
        self.scalar_curvature
    }

    /// Scalar curvature at node `q`; constant on every shipped backend.
    pub fn scalar_curvature_at(&self, _q: usize) -> f64 {
        self.scalar_curvature
    }

    /// Ricci coefficients per gradient component.
    pub fn ricci_diagonal(&self) -> &[f64] {
        &self.ricci_diagonal
    }

    /// Ric(u, v) at node `q` for tangent vectors given in gradient components.
    pub fn ricci(&self, _q: usize, u: &[f64], v: &[f64]) -> f64 {
        self.ricci_diagonal.iter().zip(u.iter().zip(v)).map(|(r, (a, b))| r * a * b).sum()
    }

    /// Closed-form eigenvalue of the Paneitz operator on each basis function:
    /// μ² + (2/3) R μ − 2 ρ, where ρ is the Ricci-weighted Laplace eigenvalue.
    /// All shipped backends are homogeneous, so P is diagonal in the basis.
    pub fn paneitz_symbol(&self) -> Vec<f64> {
        self.laplace_eigenvalues
            .iter()
            .zip(&self.ricci_eigenvalues)
            .map(|(mu, rho)| mu * mu + 2.0 / 3.0 * self.scalar_curvature * mu - 2.0 * rho)
            .collect()
    }

    /// Coordinate Hessians of a basis expansion at every node; flat torus only.
    pub fn hessians_of(&self, coeffs: &DVector<f64>) -> Option<Vec<[[f64; 4]; 4]>> {
        let BasisRepr::Torus { modes } = &self.repr else {
            return None;
        };
        let BackendKind::Torus4 { periods } = &self.kind else {
            return None;
        };
        let mut out = vec![[[0.0; 4]; 4]; self.num_nodes()];
        for (a, mode) in modes.iter().enumerate() {
            let c = coeffs[a];
            if c == 0.0 || mode.k == [0; 4] {
                continue;
            }
            let omega: [f64; 4] = std::array::from_fn(|j| 2.0 * PI * mode.k[j] as f64 / periods[j]);
            for (q, h) in out.iter_mut().enumerate() {
                // ∂_i∂_j of cos θ or sin θ is −ω_iω_j times the mode itself.
                let v = self.values[(q, a)];
                for i in 0..4 {
                    for j in 0..4 {
                        h[i][j] -= c * omega[i] * omega[j] * v;
                    }
                }
            }
        }
        Some(out)
    }

    pub fn has_hessians(&self) -> bool {
        matches!(self.repr, BasisRepr::Torus { .. })
    }

    /// Basis values at an arbitrary point, given in node coordinates.
    pub fn basis_at(&self, point: &[f64]) -> DVector<f64> {
        match (&self.repr, &self.kind) {
            (BasisRepr::Sphere { harmonics }, BackendKind::Sphere4 { radius }) => {
                let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u: Vec<f64> = point.iter().map(|v| v / norm).collect();
                harmonics.values_at(&u) / (radius * radius)
            }
            (BasisRepr::Torus { modes }, BackendKind::Torus4 { periods }) => {
                let volume: f64 = periods.iter().product();
                DVector::from_iterator(modes.len(), modes.iter().map(|m| fourier_eval(m, periods, volume, point).0))
            }
            (BasisRepr::S2xS2 { a, b, pairs }, BackendKind::S2xS2 { radius_a, radius_b }) => {
                let unit = |p: &[f64]| {
                    let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    p.iter().map(|v| v / n).collect::<Vec<f64>>()
                };
                let fa = a.values_at(&unit(&point[..3])) / *radius_a;
                let fb = b.values_at(&unit(&point[3..])) / *radius_b;
                DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| fa[i] * fb[j]))
            }
            _ => unreachable!("backend kind and basis representation always agree"),
        }
    }

    /// Basis expansion `Σ_a c_a φ_a` at arbitrary points (node coordinates).
    pub fn evaluate_at_points(&self, coeffs: &DVector<f64>, points: &[Vec<f64>]) -> DVector<f64> {
        match (&self.repr, &self.kind) {
            (BasisRepr::Sphere { harmonics }, BackendKind::Sphere4 { radius }) => {
                let poly = harmonics.polynomial_of(coeffs) / (radius * radius);
                DVector::from_iterator(
                    points.len(),
                    points.iter().map(|p| {
                        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let u: Vec<f64> = p.iter().map(|v| v / norm).collect();
                        harmonics.monomials().eval_polynomial(&poly, &u)
                    }),
                )
            }
            _ => DVector::from_iterator(points.len(), points.iter().map(|p| self.basis_at(p).dot(coeffs))),
        }
    }

    /// Basis expansion `Σ_a c_a φ_a` at every node.
    pub fn evaluate(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.values * coeffs
    }

    /// Gradient components of a basis expansion at every node.
    pub fn evaluate_gradient(&self, coeffs: &DVector<f64>) -> Vec<DVector<f64>> {
        self.gradients.iter().map(|g| g * coeffs).collect()
    }

    pub fn evaluate_laplacian(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.laplacians * coeffs
    }

    /// L² projection of node data onto the basis: `c_a = Σ_q w_q f(x_q) φ_a(x_q)`.
    /// Exact for functions in the span whenever the quadrature is exact for
    /// their products with the basis.
    pub fn project(&self, node_values: &DVector<f64>) -> DVector<f64> {
        self.values.tr_mul(&node_values.component_mul(&self.weights))
    }

    /// Coefficient vector of the constant function `c`.
    pub fn constant(&self, c: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.basis_dim());
        v[0] = c * self.volume.sqrt();
        v
    }

    /// Σ_q w_q φ_a φ_b, which is the identity for an orthonormal basis.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let weighted = DMatrix::from_fn(self.num_nodes(), self.basis_dim(), |q, a| self.weights[q] * self.values[(q, a)]);
        self.values.tr_mul(&weighted)
    }

    /// Σ_q w_q ⟨∇φ_a, ∇φ_b⟩, which equals diag(μ) for a Laplace eigenbasis.
    pub fn weak_laplacian(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.basis_dim(), self.basis_dim());
        for g in &self.gradients {
            let weighted = DMatrix::from_fn(self.num_nodes(), self.basis_dim(), |q, a| self.weights[q] * g[(q, a)]);
            out += g.tr_mul(&weighted);
        }
        out
    }
}

/// The conformal factor `w` of `g_w = e^{2w} g`.
///
/// Factors built from coefficients keep them alongside node values; factors
/// obtained by pulling back along a diffeomorphism exist only as node values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalFactor {
    coeffs: Option<DVector<f64>>,
    node_values: DVector<f64>,
}

/// e^{4w} must stay a positive normal float at every node.
fn check_density_range(node_values: &DVector<f64>) -> Result<()> {
    match node_values.iter().find(|w| !(4.0 * *w).exp().is_normal()) {
        Some(w) => Err(Error::Parameter(format!("conformal factor value {w} puts e^(4w) outside floating-point range"))),
        None => Ok(()),
    }
}

impl ConformalFactor {
    pub fn zero(backend: &ManifoldBackend) -> Self {
        Self {
            coeffs: Some(DVector::zeros(backend.basis_dim())),
            node_values: DVector::zeros(backend.num_nodes()),
        }
    }

    pub fn from_coeffs(backend: &ManifoldBackend, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != backend.basis_dim() {
            return Err(Error::Usage(format!(
                "conformal factor has {} coefficients, basis has {}",
                coeffs.len(),
                backend.basis_dim()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Usage("conformal factor coefficients must be finite".into()));
        }
        let node_values = backend.evaluate(&coeffs);
        check_density_range(&node_values)?;
        Ok(Self { coeffs: Some(coeffs), node_values })
    }

    pub fn from_node_values(backend: &ManifoldBackend, node_values: DVector<f64>) -> Result<Self> {
        if node_values.len() != backend.num_nodes() {
            return Err(Error::Usage(format!(
                "conformal factor has {} node values, backend has {} nodes",
                node_values.len(),
                backend.num_nodes()
            )));
        }
        if node_values.iter().any(|c| !c.is_finite()) {
            return Err(Error::Usage("conformal factor values must be finite".into()));
        }
        check_density_range(&node_values)?;
        Ok(Self { coeffs: None, node_values })
    }

    pub fn coeffs(&self) -> Option<&DVector<f64>> {
        self.coeffs.as_ref()
    }

    pub fn node_values(&self) -> &DVector<f64> {
        &self.node_values
    }

    pub fn is_zero(&self) -> bool {
        self.node_values.iter().all(|v| *v == 0.0)
    }

    /// e^{4w} at the nodes, the density of dv_{g_w} against dv_g.
    pub fn volume_density(&self) -> DVector<f64> {
        let d = self.node_values.map(|w| (4.0 * w).exp());
        assert!(d.iter().all(|v| *v > 0.0), "e^(4w) must be positive");
        d
    }

    /// Vol(M, g_w) by quadrature.
    pub fn volume(&self, backend: &ManifoldBackend) -> f64 {
        self.volume_density().dot(backend.weights())
    }

    /// The factor `w + c` for a constant `c`.
    pub fn shifted(&self, backend: &ManifoldBackend, c: f64) -> Self {
        match &self.coeffs {
            Some(coeffs) => {
                let coeffs = coeffs + backend.constant(c);
                let node_values = backend.evaluate(&coeffs);
                Self { coeffs: Some(coeffs), node_values }
            }
            None => Self { coeffs: None, node_values: self.node_values.add_scalar(c) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA4: f64 = 8.0 * PI * PI / 3.0;

    fn max_dev_from_identity(m: &DMatrix<f64>) -> f64 {
        (m - DMatrix::identity(m.nrows(), m.ncols())).amax()
    }

    #[test]
    fn sphere_dimensions_and_eigenvalues() {
        let s = build_sphere(1.0, 2).unwrap();
        assert_eq!(s.basis_dim(), 20);
        assert!(((s.volume() - OMEGA4) / OMEGA4).abs() < 1e-12);
        for a in 1..6 {
            assert!((s.laplace_eigenvalues()[a] - 4.0).abs() < 1e-15);
        }
        let s2 = build_sphere(2.0, 2).unwrap();
        assert!((s2.laplace_eigenvalues()[1] - 1.0).abs() < 1e-15);
        assert!(((s2.volume() - 16.0 * OMEGA4) / (16.0 * OMEGA4)).abs() < 1e-12);
    }

    #[test]
    fn sphere_rejects_low_degree() {
        assert!(matches!(build_sphere(1.0, 1), Err(Error::Config(_))));
        assert!(matches!(build_sphere(-1.0, 2), Err(Error::Config(_))));
    }

    #[test]
    fn sphere_degree_one_functions_are_coordinates() {
        let s = build_sphere(1.0, 2).unwrap();
        let scale = (5.0 / OMEGA4).sqrt();
        for (q, x) in s.nodes().iter().enumerate() {
            for i in 0..5 {
                assert!((s.values()[(q, 1 + i)] - scale * x[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormality_and_laplace_consistency_all_backends() {
        let backends = [
            build_sphere(1.0, 3).unwrap(),
            build_sphere(1.7, 2).unwrap(),
            build_torus([1.0, 1.0, 1.0, 1.0], 1).unwrap(),
            build_torus([1.0, 2.0, 0.5, 1.5], 1).unwrap(),
            build_s2xs2(1.0, 1.0, 2).unwrap(),
            build_s2xs2(1.0, 2.0, 2).unwrap(),
        ];
        for b in &backends {
            assert!(max_dev_from_identity(&b.gram_matrix()) < 1e-10, "{:?}", b.kind());
            let weak = b.weak_laplacian();
            let diag = DMatrix::from_diagonal(&DVector::from_column_slice(b.laplace_eigenvalues()));
            let scale = 1.0 + b.laplace_eigenvalues().iter().cloned().fold(0.0, f64::max);
            assert!((weak - diag).amax() < 1e-9 * scale, "{:?}", b.kind());
            for a in 0..b.basis_dim() {
                let mu = b.laplace_eigenvalues()[a];
                for q in 0..b.num_nodes() {
                    let lhs = b.laplacians()[(q, a)];
                    let rhs = -mu * b.values()[(q, a)];
                    assert!((lhs - rhs).abs() < 1e-10 * (1.0 + mu), "{:?} a={a}", b.kind());
                }
            }
        }
    }

    #[test]
    fn sphere_curvature() {
        let s = build_sphere(1.0, 2).unwrap();
        assert_eq!(s.scalar_curvature(), 12.0);
        let x = &s.nodes()[7];
        // a tangent vector at x: project e1
        let mut u = vec![1.0, 0.0, 0.0, 0.0, 0.0];
        let d: f64 = x[0];
        for i in 0..5 {
            u[i] -= d * x[i];
        }
        let uu: f64 = u.iter().map(|v| v * v).sum();
        assert!((s.ricci(7, &u, &u) - 3.0 * uu).abs() < 1e-14);
    }

    #[test]
    fn torus_spectrum_counts() {
        let t = build_torus([1.0; 4], 1).unwrap();
        assert_eq!(t.basis_dim(), 81);
        assert!((t.volume() - 1.0).abs() < 1e-14);
        assert_eq!(t.laplace_eigenvalues()[0], 0.0);
        let first = 4.0 * PI * PI;
        let count = t.laplace_eigenvalues().iter().filter(|m| (*m - first).abs() < 1e-9).count();
        assert_eq!(count, 8);
        assert!(t.laplace_eigenvalues()[1..].iter().all(|m| *m >= first - 1e-9));
        assert_eq!(t.scalar_curvature(), 0.0);
        assert!(t.has_hessians());
    }

    #[test]
    fn torus_first_eigenvalue_matches_lattice_enumeration() {
        // Oracle: enumerate the dual lattice directly.
        let periods = [1.0, 2.0, 0.5, 1.5];
        let t = build_torus(periods, 1).unwrap();
        let mut lattice: Vec<f64> = Vec::new();
        for k0 in -1i32..=1 {
            for k1 in -1i32..=1 {
                for k2 in -1i32..=1 {
                    for k3 in -1i32..=1 {
                        let k = [k0, k1, k2, k3];
                        lattice.push((0..4).map(|j| (2.0 * PI * k[j] as f64 / periods[j]).powi(2)).sum());
                    }
                }
            }
        }
        lattice.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut mine = t.laplace_eigenvalues().to_vec();
        mine.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in lattice.iter().zip(&mine) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a));
        }
    }

    #[test]
    fn torus_hessian_trace_is_laplacian() {
        let t = build_torus([1.0, 2.0, 1.0, 1.0], 1).unwrap();
        let coeffs = DVector::from_fn(t.basis_dim(), |a, _| ((a * 7 % 11) as f64 - 5.0) / 10.0);
        let h = t.hessians_of(&coeffs).unwrap();
        let lap = t.evaluate_laplacian(&coeffs);
        for q in 0..t.num_nodes() {
            let tr = h[q][0][0] + h[q][1][1] + h[q][2][2] + h[q][3][3];
            assert!((tr - lap[q]).abs() < 1e-9);
        }
        assert!(build_sphere(1.0, 2).unwrap().hessians_of(&DVector::zeros(20)).is_none());
    }

    #[test]
    fn s2xs2_data() {
        let p = build_s2xs2(1.0, 1.0, 2).unwrap();
        assert_eq!(p.basis_dim(), 1 + 3 + 3 + 5 + 9 + 5);
        assert!((p.laplace_eigenvalues()[1] - 2.0).abs() < 1e-14);
        assert!((p.scalar_curvature() - 4.0).abs() < 1e-14);
        let q = build_s2xs2(1.0, 2.0, 1).unwrap();
        let vol = 64.0 * PI * PI;
        assert!(((q.volume() - vol) / vol).abs() < 1e-12);
        assert_eq!(q.ricci_diagonal(), &[1.0, 1.0, 1.0, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn integrate_examples() {
        let s = build_sphere(1.0, 2).unwrap();
        let ones = vec![1.0; s.num_nodes()];
        assert!((integrate(&s, &ones).unwrap() - OMEGA4).abs() < 1e-12);
        let x1sq: Vec<f64> = s.nodes().iter().map(|x| x[0] * x[0]).collect();
        assert!((integrate(&s, &x1sq).unwrap() - OMEGA4 / 5.0).abs() < 1e-12);
        let zeros = vec![0.0; s.num_nodes()];
        assert_eq!(integrate(&s, &zeros).unwrap(), 0.0);
        assert!(matches!(integrate(&s, &[1.0, 2.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn sphere_quartic_moments() {
        // Closed forms: ∫x₁⁴ = 3ω₄/35 and ∫x₁²x₂² = ω₄/35.
        let s = build_sphere(1.0, 2).unwrap();
        let f: Vec<f64> = s.nodes().iter().map(|x| x[0].powi(4)).collect();
        let g: Vec<f64> = s.nodes().iter().map(|x| x[0] * x[0] * x[1] * x[1]).collect();
        assert!(((integrate(&s, &f).unwrap() - 3.0 * OMEGA4 / 35.0) / OMEGA4).abs() < 1e-12);
        assert!(((integrate(&s, &g).unwrap() - OMEGA4 / 35.0) / OMEGA4).abs() < 1e-12);
    }

    #[test]
    fn basis_at_matches_node_values() {
        for b in [build_sphere(1.3, 2).unwrap(), build_torus([1.0, 2.0, 1.0, 1.0], 1).unwrap(), build_s2xs2(1.0, 2.0, 2).unwrap()] {
            for q in [0, 5, b.num_nodes() / 2] {
                let v = b.basis_at(&b.nodes()[q]);
                for a in 0..b.basis_dim() {
                    assert!((v[a] - b.values()[(q, a)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn evaluate_at_points_matches_nodes() {
        for b in [build_sphere(1.3, 3).unwrap(), build_torus([1.0, 2.0, 1.0, 1.0], 1).unwrap()] {
            let c = DVector::from_fn(b.basis_dim(), |a, _| ((a * 5) as f64).sin());
            let pts: Vec<Vec<f64>> = b.nodes()[..50].to_vec();
            let direct = b.evaluate(&c);
            let at = b.evaluate_at_points(&c, &pts);
            for q in 0..50 {
                assert!((direct[q] - at[q]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn conformal_factor_consistency() {
        let s = build_sphere(1.0, 2).unwrap();
        let coeffs = DVector::from_fn(s.basis_dim(), |a, _| 0.1 * (a as f64).sin());
        let w = ConformalFactor::from_coeffs(&s, coeffs.clone()).unwrap();
        let direct = s.evaluate(&coeffs);
        assert!((w.node_values() - direct).amax() < 1e-12);
        assert!(w.volume_density().iter().all(|v| *v > 0.0));
        assert!(ConformalFactor::from_coeffs(&s, DVector::zeros(3)).is_err());
        let shifted = w.shifted(&s, 0.25);
        assert!((shifted.node_values() - w.node_values().add_scalar(0.25)).amax() < 1e-12);
        let huge = DVector::from_element(s.num_nodes(), -200.0);
        assert!(matches!(ConformalFactor::from_node_values(&s, huge), Err(Error::Parameter(_))));
    }

    #[test]
    fn descriptor_round_trip() {
        let d = BackendDescriptor { kind: "torus".into(), params: vec![1.0, 1.0, 1.0, 2.0], max_degree: 1 };
        let json = serde_json::to_string(&d).unwrap();
        let back: BackendDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
        let built = back.build().unwrap();
        assert_eq!(built.descriptor(), d);
        assert!(BackendDescriptor { kind: "klein".into(), params: vec![], max_degree: 2 }.build().is_err());
    }
}
