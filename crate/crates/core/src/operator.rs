//! Paneitz energy form and weighted mass matrices, plus pointwise
//! identities that use the closed-form action of P on Laplace eigenbases.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ConformalFactor, ManifoldBackend};

/// Nodes per partial sum. Fixed so reductions are independent of thread count.
const CHUNK: usize = 1024;

/// Energy and mass matrices of the generalized problem `K v = λ M_w v`.
#[derive(Debug, Clone)]
pub struct PaneitzSystem {
    energy: DMatrix<f64>,
    mass: DMatrix<f64>,
    factor: ConformalFactor,
}

impl PaneitzSystem {
    /// `K_ab = ∫ Δφ_aΔφ_b + (2/3)R⟨∇φ_a,∇φ_b⟩ − 2Ric(∇φ_a,∇φ_b) dv_g`.
    pub fn energy(&self) -> &DMatrix<f64> {
        &self.energy
    }

    /// `(M_w)_ab = ∫ e^{4w} φ_aφ_b dv_g`.
    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn conformal_factor(&self) -> &ConformalFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.energy.nrows()
    }

    /// Same energy, new conformal factor. The energy form is conformally
    /// invariant, so only the mass matrix is rebuilt.
    pub fn reweighted(&self, backend: &ManifoldBackend, factor: ConformalFactor) -> Result<Self> {
        check_factor(backend, &factor)?;
        Ok(Self { energy: self.energy.clone(), mass: mass_matrix(backend, &factor), factor })
    }

    /// The system for the constant multiple `c·g` of the base metric: the
    /// energy is unchanged and the volume form scales by `c²`.
    pub fn scaled_metric(&self, c: f64) -> Self {
        Self { energy: self.energy.clone(), mass: &self.mass * (c * c), factor: self.factor.clone() }
    }

    /// Builds a system from explicit matrices.
    pub fn from_parts(energy: DMatrix<f64>, mass: DMatrix<f64>, factor: ConformalFactor) -> Result<Self> {
        if !energy.is_square() || energy.shape() != mass.shape() {
            return Err(Error::Usage("energy and mass must be square and of equal size".into()));
        }
        Ok(Self { energy, mass, factor })
    }
}

fn check_factor(backend: &ManifoldBackend, w: &ConformalFactor) -> Result<()> {
    if w.node_values().len() != backend.num_nodes() {
        return Err(Error::Usage(format!(
            "conformal factor has {} node values, backend has {} nodes",
            w.node_values().len(),
            backend.num_nodes()
        )));
    }
    if let Some(c) = w.coeffs() {
        if c.len() != backend.basis_dim() {
            return Err(Error::Usage(format!(
                "conformal factor has {} coefficients, basis has {}",
                c.len(),
                backend.basis_dim()
            )));
        }
    }
    Ok(())
}

/// Assembles the energy form of the base metric and the mass matrix of `g_w`.
pub fn assemble(backend: &ManifoldBackend, w: &ConformalFactor) -> Result<PaneitzSystem> {
    check_factor(backend, w)?;
    Ok(PaneitzSystem { energy: energy_matrix(backend), mass: mass_matrix(backend, w), factor: w.clone() })
}

/// Sums `f(start, len)` over fixed node chunks in index order.
pub(crate) fn chunked_sum<F>(nodes: usize, dim: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> DMatrix<f64> + Sync,
{
    let ranges: Vec<(usize, usize)> = (0..nodes).step_by(CHUNK).map(|s| (s, CHUNK.min(nodes - s))).collect();
    let parts: Vec<DMatrix<f64>> = ranges.par_iter().map(|&(s, l)| f(s, l)).collect();
    let mut total = DMatrix::zeros(dim, dim);
    for p in parts {
        total += p;
    }
    total
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        for i in 0..j {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// `Aᵀ diag(d) B` restricted to the node rows `start..start+len`.
pub(crate) fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, d: &[f64], start: usize, len: usize) -> DMatrix<f64> {
    let a = a.rows(start, len);
    let mut db = b.rows(start, len).into_owned();
    for (r, mut row) in db.row_iter_mut().enumerate() {
        row *= d[start + r];
    }
    a.tr_mul(&db)
}

pub fn energy_matrix(backend: &ManifoldBackend) -> DMatrix<f64> {
    let n = backend.basis_dim();
    let w = backend.weights().as_slice();
    let r = backend.scalar_curvature();
    let coef: Vec<f64> = backend.ricci_diagonal().iter().map(|ric| 2.0 / 3.0 * r - 2.0 * ric).collect();
    let grad_weights: Vec<Vec<f64>> =
        coef.iter().map(|c| w.iter().map(|wq| wq * c).collect()).collect();
    let mut k = chunked_sum(backend.num_nodes(), n, |s, l| {
        let mut part = weighted_cross(backend.laplacians(), backend.laplacians(), w, s, l);
        for (g, gw) in backend.gradients().iter().zip(&grad_weights) {
            if gw.iter().any(|v| *v != 0.0) {
                part += weighted_cross(g, g, gw, s, l);
            }
        }
        part
    });
    symmetrize(&mut k);
    k
}

pub fn mass_matrix(backend: &ManifoldBackend, w: &ConformalFactor) -> DMatrix<f64> {
    let n = backend.basis_dim();
    let density = w.volume_density();
    let d: Vec<f64> = backend.weights().iter().zip(density.iter()).map(|(a, b)| a * b).collect();
    let mut m = chunked_sum(backend.num_nodes(), n, |s, l| weighted_cross(backend.values(), backend.values(), &d, s, l));
    symmetrize(&mut m);
    m
}

/// Coefficients of `P_g φ` on the round sphere: each degree-ℓ harmonic is
/// multiplied by `μ_ℓ(μ_ℓ + 2/r²)`, which is `μ(μ+2)` at radius 1.
pub fn apply_paneitz_sphere(backend: &ManifoldBackend, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
    if !backend.is_sphere() {
        return Err(Error::UnsupportedBackend("pointwise Paneitz application needs the sphere backend".into()));
    }
    apply_symbol(backend, coeffs)
}

/// `P φ` in coefficients via the closed-form symbol of the backend.
pub(crate) fn apply_symbol(backend: &ManifoldBackend, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
    if coeffs.len() != backend.basis_dim() {
        return Err(Error::Usage(format!("expected {} coefficients, got {}", backend.basis_dim(), coeffs.len())));
    }
    let symbol = DVector::from_vec(backend.paneitz_symbol());
    Ok(coeffs.component_mul(&symbol))
}

/// Highest basis degree carrying a coefficient above roundoff.
pub(crate) fn effective_degree(backend: &ManifoldBackend, coeffs: &DVector<f64>) -> usize {
    let scale = coeffs.amax();
    coeffs
        .iter()
        .zip(backend.degrees())
        .filter(|(c, _)| c.abs() > 1e-12 * scale)
        .map(|(_, d)| *d)
        .max()
        .unwrap_or(0)
}

/// Both sides of the Leibniz rule for `P(φψ)` sampled at the nodes.
#[derive(Debug, Clone)]
pub struct LeibnizReport {
    pub lhs: DVector<f64>,
    pub rhs: DVector<f64>,
    pub residual: f64,
}

/// Compares `P(φψ)` with
/// `ψPφ + φPψ + 2ΔφΔψ + 2⟨∇Δφ,∇ψ⟩ + 2⟨∇Δψ,∇φ⟩ + 2Δ⟨∇φ,∇ψ⟩ − (4/3)R⟨∇φ,∇ψ⟩ + 4Ric(∇φ,∇ψ)`
/// at every node of the sphere backend.
pub fn leibniz_residual(backend: &ManifoldBackend, phi: &DVector<f64>, psi: &DVector<f64>) -> Result<LeibnizReport> {
    if !backend.is_sphere() {
        return Err(Error::UnsupportedBackend("Leibniz check runs on the sphere backend".into()));
    }
    for c in [phi, psi] {
        if c.len() != backend.basis_dim() {
            return Err(Error::Usage(format!("expected {} coefficients, got {}", backend.basis_dim(), c.len())));
        }
    }
    let required = effective_degree(backend, phi) + effective_degree(backend, psi);
    if required > backend.max_degree() {
        return Err(Error::Truncation { required, available: backend.max_degree() });
    }

    let mu = DVector::from_column_slice(backend.laplace_eigenvalues());
    let nodes = backend.num_nodes();

    let phi_v = backend.evaluate(phi);
    let psi_v = backend.evaluate(psi);
    let product = phi_v.component_mul(&psi_v);
    let lhs = backend.evaluate(&apply_symbol(backend, &backend.project(&product))?);

    let p_phi = backend.evaluate(&apply_symbol(backend, phi)?);
    let p_psi = backend.evaluate(&apply_symbol(backend, psi)?);
    let lap_phi = backend.evaluate_laplacian(phi);
    let lap_psi = backend.evaluate_laplacian(psi);
    let grad_phi = backend.evaluate_gradient(phi);
    let grad_psi = backend.evaluate_gradient(psi);
    let grad_lap_phi = backend.evaluate_gradient(&(-phi.component_mul(&mu)));
    let grad_lap_psi = backend.evaluate_gradient(&(-psi.component_mul(&mu)));

    let dot = |a: &[DVector<f64>], b: &[DVector<f64>], q: usize| -> f64 { a.iter().zip(b).map(|(x, y)| x[q] * y[q]).sum() };
    let inner = DVector::from_fn(nodes, |q, _| dot(&grad_phi, &grad_psi, q));
    let lap_inner = backend.evaluate_laplacian(&backend.project(&inner));
    let r = backend.scalar_curvature();

    let mut u = vec![0.0; backend.gradient_dim()];
    let mut v = vec![0.0; backend.gradient_dim()];
    let rhs = DVector::from_fn(nodes, |q, _| {
        for i in 0..u.len() {
            u[i] = grad_phi[i][q];
            v[i] = grad_psi[i][q];
        }
        psi_v[q] * p_phi[q]
            + phi_v[q] * p_psi[q]
            + 2.0 * lap_phi[q] * lap_psi[q]
            + 2.0 * dot(&grad_lap_phi, &grad_psi, q)
            + 2.0 * dot(&grad_lap_psi, &grad_phi, q)
            + 2.0 * lap_inner[q]
            - 4.0 / 3.0 * r * inner[q]
            + 4.0 * backend.ricci(q, &u, &v)
    });
    let residual = (&lhs - &rhs).amax();
    Ok(LeibnizReport { lhs, rhs, residual })
}

/// Pointwise energy density
/// `e_g(U) = Σ_i U_iΔ²U_i + (2/3)R|∇U_i|² − 2Ric(∇U_i,∇U_i)` at the nodes,
/// with Δ²U_i taken from the Laplace eigenvalues of the basis.
pub fn density(backend: &ManifoldBackend, components: &[DVector<f64>]) -> Result<DVector<f64>> {
    if components.len() < 2 {
        return Err(Error::Usage(format!("a sphere-valued map needs at least 2 components, got {}", components.len())));
    }
    let mu = DVector::from_column_slice(backend.laplace_eigenvalues());
    let mu2 = mu.component_mul(&mu);
    let r = backend.scalar_curvature();
    let mut e = DVector::zeros(backend.num_nodes());
    for c in components {
        if c.len() != backend.basis_dim() {
            return Err(Error::Usage(format!("expected {} coefficients, got {}", backend.basis_dim(), c.len())));
        }
        let u = backend.evaluate(c);
        let bilap = backend.evaluate(&c.component_mul(&mu2));
        let grad = backend.evaluate_gradient(c);
        for q in 0..backend.num_nodes() {
            let mut g2 = 0.0;
            let mut ric = 0.0;
            for (i, gi) in grad.iter().enumerate() {
                let v = gi[q] * gi[q];
                g2 += v;
                ric += backend.ricci_diagonal()[i] * v;
            }
            e[q] += u[q] * bilap[q] + 2.0 / 3.0 * r * g2 - 2.0 * ric;
        }
    }
    Ok(e)
}
