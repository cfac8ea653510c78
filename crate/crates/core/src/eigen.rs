//! Dense solver for `K v = λ M_w v`, multiplicity clustering and Rayleigh
//! quotients. Eigenvalue indices are 1-based.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::PaneitzSystem;

pub const DEFAULT_CLUSTER_TOLERANCE: f64 = 1e-6;
/// Mass matrices with a larger condition number are rejected.
pub const MAX_MASS_CONDITION: f64 = 1e12;
/// Eigenvalues with `|λ| ≤ KERNEL_TOLERANCE` count as zero.
pub const KERNEL_TOLERANCE: f64 = 1e-8;

/// A contiguous group of eigenvalues, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub first: usize,
    pub last: usize,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: usize) -> bool {
        (self.first..=self.last).contains(&k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub tolerance: f64,
    pub clusters: Vec<Cluster>,
    /// Smallest relative gap between neighbouring clusters, if there are two.
    pub min_gap: Option<f64>,
    /// 1-based indices `k` whose gap to `k+1` lies within a factor 100 of the
    /// tolerance on either side. These splits are reported, not decided.
    pub ambiguous: Vec<usize>,
}

impl Clustering {
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::len).collect()
    }

    pub fn cluster_of(&self, k: usize) -> Option<Cluster> {
        self.clusters.iter().copied().find(|c| c.contains(k))
    }
}

/// Greedy grouping: `λ_{i+1}` joins the cluster of `λ_i` when
/// `λ_{i+1} − λ_i ≤ tolerance · max(1, |λ_i|)`.
pub fn cluster(eigenvalues: &[f64], tolerance: f64) -> Clustering {
    let mut clusters = Vec::new();
    let mut ambiguous = Vec::new();
    let mut min_gap: Option<f64> = None;
    if eigenvalues.is_empty() {
        return Clustering { tolerance, clusters, min_gap, ambiguous };
    }
    let mut first = 1;
    for i in 1..eigenvalues.len() {
        let scale = eigenvalues[i - 1].abs().max(1.0);
        let gap = (eigenvalues[i] - eigenvalues[i - 1]) / scale;
        if gap > tolerance / 100.0 && gap < tolerance * 100.0 {
            ambiguous.push(i);
        }
        if gap > tolerance {
            clusters.push(Cluster { first, last: i });
            min_gap = Some(min_gap.map_or(gap, |m: f64| m.min(gap)));
            first = i + 1;
        }
    }
    clusters.push(Cluster { first, last: eigenvalues.len() });
    Clustering { tolerance, clusters, min_gap, ambiguous }
}

/// Lowest eigenpairs of the generalized problem.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    clustering: Clustering,
    residual_norms: Vec<f64>,
}

impl SpectrumResult {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// λ_k with `k` 1-based.
    pub fn eigenvalue(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.eigenvalues.get(i).copied())
    }

    /// M_w-orthonormal coefficient vectors, one column per eigenvalue.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k - 1).into_owned()
    }

    pub fn clustering(&self) -> &Clustering {
        &self.clustering
    }

    pub fn residual_norms(&self) -> &[f64] {
        &self.residual_norms
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Columns of the eigenvectors in the cluster containing `k`.
    pub fn cluster_basis(&self, k: usize) -> Option<(Cluster, DMatrix<f64>)> {
        let c = self.clustering.cluster_of(k)?;
        Some((c, self.eigenvectors.columns(c.first - 1, c.len()).into_owned()))
    }

    /// Number of eigenvalues with `|λ| ≤` [`KERNEL_TOLERANCE`].
    pub fn kernel_dimension(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() <= KERNEL_TOLERANCE).count()
    }

    pub fn negative_count(&self) -> usize {
        self.eigenvalues.iter().filter(|l| **l < -KERNEL_TOLERANCE).count()
    }

    /// Re-clusters with a different tolerance.
    pub fn with_cluster_tolerance(mut self, tolerance: f64) -> Self {
        self.clustering = cluster(&self.eigenvalues, tolerance);
        self
    }

    /// `{eigenvalues, clusters, residual_norms}` as JSON.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "eigenvalues": self.eigenvalues,
            "clusters": self.clustering.clusters,
            "cluster_sizes": self.clustering.sizes(),
            "cluster_tolerance": self.clustering.tolerance,
            "min_gap": self.clustering.min_gap,
            "ambiguous_gaps": self.clustering.ambiguous,
            "residual_norms": self.residual_norms,
        })
    }
}

pub fn solve(system: &PaneitzSystem, count: usize) -> Result<SpectrumResult> {
    solve_with_tolerance(system, count, DEFAULT_CLUSTER_TOLERANCE)
}

/// Reduces to standard form through the Cholesky factor of `M_w` and
/// diagonalizes densely.
pub fn solve_with_tolerance(system: &PaneitzSystem, count: usize, cluster_tolerance: f64) -> Result<SpectrumResult> {
    let n = system.dim();
    if count > n {
        return Err(Error::Usage(format!("requested {count} eigenvalues from a basis of dimension {n}")));
    }
    if count == 0 {
        return Ok(SpectrumResult {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(n, 0),
            clustering: cluster(&[], cluster_tolerance),
            residual_norms: Vec::new(),
        });
    }
    let mass = system.mass();
    let mass_eigs = SymmetricEigen::new(mass.clone()).eigenvalues;
    let (lo, hi) = (mass_eigs.min(), mass_eigs.max());
    if lo <= 0.0 || hi / lo > MAX_MASS_CONDITION {
        let condition = if lo <= 0.0 { f64::INFINITY } else { hi / lo };
        return Err(Error::IllConditionedMass { condition });
    }
    let chol = mass.clone().cholesky().ok_or(Error::IllConditionedMass { condition: f64::INFINITY })?;
    let l = chol.l();
    // C = L⁻¹ K L⁻ᵀ
    let linv_k = l.solve_lower_triangular(system.energy()).expect("Cholesky factor is nonsingular");
    let c = l.solve_lower_triangular(&linv_k.transpose()).expect("Cholesky factor is nonsingular");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = DMatrix::zeros(n, count);
    let mut residual_norms = Vec::with_capacity(count);
    for (j, &i) in order.iter().take(count).enumerate() {
        let lambda = eig.eigenvalues[i];
        let mut v = lt.solve_upper_triangular(&eig.eigenvectors.column(i).into_owned()).expect("nonsingular");
        // Deterministic sign: largest-magnitude component positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        let r = system.energy() * &v - mass * &v * lambda;
        residual_norms.push(r.norm());
        eigenvalues.push(lambda);
        eigenvectors.set_column(j, &v);
    }
    Ok(SpectrumResult { clustering: cluster(&eigenvalues, cluster_tolerance), eigenvalues, eigenvectors, residual_norms })
}

/// `cᵀKc / cᵀM_w c`.
pub fn rayleigh(system: &PaneitzSystem, coeffs: &DVector<f64>) -> Result<f64> {
    if coeffs.len() != system.dim() {
        return Err(Error::Usage(format!("expected {} coefficients, got {}", system.dim(), coeffs.len())));
    }
    let denom = coeffs.dot(&(system.mass() * coeffs));
    if coeffs.iter().all(|c| *c == 0.0) || denom <= 0.0 {
        return Err(Error::Usage("Rayleigh quotient of the zero vector".into()));
    }
    Ok(coeffs.dot(&(system.energy() * coeffs)) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_s2xs2, build_sphere, build_sphere_with_exactness, build_torus, ConformalFactor};
    use crate::operator::assemble;
    use std::f64::consts::PI;

    #[test]
    fn cluster_examples() {
        let c = cluster(&[0.0, 24.0 - 1e-9, 24.0 + 1e-9], 1e-6);
        assert_eq!(c.clusters, vec![Cluster { first: 1, last: 1 }, Cluster { first: 2, last: 3 }]);
        assert!(cluster(&[], 1e-6).clusters.is_empty());
        let c = cluster(&[1.0, 1.0 + 5e-6, 2.0], 1e-6);
        assert_eq!(c.sizes(), vec![1, 1, 1]);
        assert_eq!(c.ambiguous, vec![1]);
    }

    #[test]
    fn sphere_low_spectrum() {
        let s = build_sphere(1.0, 2).unwrap();
        let sys = assemble(&s, &ConformalFactor::zero(&s)).unwrap();
        let spec = solve(&sys, 7).unwrap();
        let expected = [0.0, 24.0, 24.0, 24.0, 24.0, 24.0, 120.0];
        for (a, b) in spec.eigenvalues().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b));
        }
        assert_eq!(spec.clustering().sizes(), vec![1, 5, 1]);
        assert_eq!(spec.kernel_dimension(), 1);
        let v1 = spec.eigenvector(1);
        let c = s.evaluate(&v1);
        assert!((c.max() - c.min()).abs() < 1e-10);
        let gram = spec.eigenvectors().transpose() * sys.mass() * spec.eigenvectors();
        assert!((gram - DMatrix::identity(7, 7)).amax() < 1e-9);
        for (k, r) in spec.residual_norms().iter().enumerate() {
            assert!(*r <= 1e-8 * (1.0 + spec.eigenvalues()[k].abs()));
        }
    }

    #[test]
    fn torus_low_spectrum() {
        let t = build_torus([1.0; 4], 1).unwrap();
        let sys = assemble(&t, &ConformalFactor::zero(&t)).unwrap();
        let spec = solve(&sys, 9).unwrap();
        assert!(spec.eigenvalues()[0].abs() < 1e-9);
        let target = 16.0 * PI.powi(4);
        for l in &spec.eigenvalues()[1..] {
            assert!(((l - target) / target).abs() < 1e-10);
        }
    }

    #[test]
    fn count_bounds() {
        let s = build_sphere(1.0, 2).unwrap();
        let sys = assemble(&s, &ConformalFactor::zero(&s)).unwrap();
        assert!(solve(&sys, 0).unwrap().is_empty());
        assert!(matches!(solve(&sys, 21), Err(Error::Usage(_))));
    }

    #[test]
    fn ill_conditioned_mass_is_rejected() {
        let s = build_sphere(1.0, 2).unwrap();
        let sys = assemble(&s, &ConformalFactor::zero(&s)).unwrap();
        let mut mass = sys.mass().clone();
        mass[(3, 3)] = 1e-14;
        let bad = PaneitzSystem::from_parts(sys.energy().clone(), mass, ConformalFactor::zero(&s)).unwrap();
        assert!(matches!(solve(&bad, 3), Err(Error::IllConditionedMass { .. })));
    }

    #[test]
    fn rayleigh_examples() {
        let s = build_sphere(1.0, 2).unwrap();
        let sys = assemble(&s, &ConformalFactor::zero(&s)).unwrap();
        let mut x1 = DVector::zeros(20);
        x1[1] = 1.0;
        assert!((rayleigh(&sys, &x1).unwrap() - 24.0).abs() < 1e-10);
        let mut x12 = x1.clone();
        x12[2] = 1.0;
        assert!((rayleigh(&sys, &x12).unwrap() - 24.0).abs() < 1e-10);
        let w = ConformalFactor::from_coeffs(&s, DVector::from_fn(20, |a, _| 0.1 * (a as f64).cos())).unwrap();
        let sys_w = sys.reweighted(&s, w).unwrap();
        assert!(rayleigh(&sys_w, &s.constant(1.0)).unwrap().abs() < 1e-10);
        assert!(matches!(rayleigh(&sys, &DVector::zeros(20)), Err(Error::Usage(_))));
    }

    #[test]
    fn refinement_is_monotone_with_shared_quadrature() {
        // Nested trial spaces on a common rule: every Galerkin eigenvalue can
        // only decrease as the degree grows.
        let coeff = |a: usize| 0.15 * ((a as f64) * 1.3).sin();
        let sphere: Vec<_> = (2..=4).map(|l| build_sphere_with_exactness(1.0, l, 20).unwrap()).collect();
        check_monotone(&sphere, coeff, 20);
    }

    fn check_monotone(backends: &[crate::ManifoldBackend], coeff: impl Fn(usize) -> f64, count: usize) {
        let base = &backends[0];
        let mut previous: Option<Vec<f64>> = None;
        for b in backends {
            let mut c = DVector::zeros(b.basis_dim());
            for a in 1..base.basis_dim() {
                c[a] = coeff(a);
            }
            let w = ConformalFactor::from_coeffs(b, c).unwrap();
            let spec = solve(&assemble(b, &w).unwrap(), count).unwrap();
            if let Some(prev) = &previous {
                for (new, old) in spec.eigenvalues().iter().zip(prev) {
                    assert!(*new <= old + 1e-9 * (1.0 + old.abs()), "{new} > {old}");
                }
            }
            previous = Some(spec.eigenvalues().to_vec());
        }
    }

    #[test]
    fn refinement_torus_and_product() {
        let coeff = |a: usize| 0.1 * ((a as f64) * 0.7).cos();
        // A max_freq-2 grid integrates the max_freq-1 problem exactly too, so
        // the max_freq-1 system is assembled on the finer grid by restriction.
        let fine = build_torus([1.0; 4], 2).unwrap();
        let coarse = build_torus([1.0; 4], 1).unwrap();
        let mut c = DVector::zeros(fine.basis_dim());
        for a in 1..coarse.basis_dim() {
            c[a] = coeff(a);
        }
        let w = ConformalFactor::from_coeffs(&fine, c).unwrap();
        let sys = assemble(&fine, &w).unwrap();
        let fine_spec = solve(&sys, 20).unwrap();
        // Coarse basis functions are the leading fine ones with |k_j| ≤ 1.
        let keep: Vec<usize> = (0..fine.basis_dim()).filter(|&a| fine.degrees()[a] <= 1).collect();
        assert_eq!(keep.len(), coarse.basis_dim());
        let sub = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        let coarse_sys = PaneitzSystem::from_parts(sub(sys.energy()), sub(sys.mass()), w.clone()).unwrap();
        let coarse_spec = solve(&coarse_sys, 20).unwrap();
        for (f, c) in fine_spec.eigenvalues().iter().zip(coarse_spec.eigenvalues()) {
            assert!(*f <= c + 1e-9 * (1.0 + c.abs()));
        }

        let product: Vec<_> = (2..=3).map(|l| build_s2xs2(1.0, 1.3, l).unwrap()).collect();
        // Different quadrature per degree; the mass is polynomial-exact here
        // because w = 0, so nesting still holds exactly.
        check_monotone(&product, |_| 0.0, 20);
    }

    #[test]
    fn constant_scaling_law() {
        let s = build_sphere(1.0, 2).unwrap();
        let w = ConformalFactor::from_coeffs(&s, DVector::from_fn(20, |a, _| 0.1 * (a as f64).sin())).unwrap();
        let sys = assemble(&s, &w).unwrap();
        let base = solve(&sys, 12).unwrap();
        for c in [0.5, 2.0, 3.7] {
            let scaled = solve(&sys.scaled_metric(c), 12).unwrap();
            for (a, b) in scaled.eigenvalues().iter().zip(base.eigenvalues()) {
                assert!((a - b / (c * c)).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn radius_scaling_matches_metric_multiplier() {
        // radius r means the metric r²·g, so λ scales by r⁻⁴.
        let unit = build_sphere(1.0, 2).unwrap();
        let big = build_sphere(1.6, 2).unwrap();
        let a = solve(&assemble(&unit, &ConformalFactor::zero(&unit)).unwrap(), 20).unwrap();
        let b = solve(&assemble(&big, &ConformalFactor::zero(&big)).unwrap(), 20).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            assert!((y - x / 1.6f64.powi(4)).abs() < 1e-10 * (1.0 + x));
        }
    }
}
