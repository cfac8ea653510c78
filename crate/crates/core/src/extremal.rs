//! One-sided eigenvalue derivatives along volume-preserving conformal
//! directions, the PSD certificate `Σ S_ab ψ_aψ_b ≡ 1` for a cluster,
//! local-extremum obstructions, and projected ascent of `λ_k`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::normalize_volume;
use crate::eigen::{solve, Cluster, SpectrumResult, KERNEL_TOLERANCE};
use crate::error::{Error, Result};
use crate::geometry::{ConformalFactor, ManifoldBackend};
use crate::operator::{density, energy_matrix, mass_matrix, PaneitzSystem};

/// Relative bound on `|∫α dv_{g_w}|` for an admissible direction.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_CERTIFICATE_TOLERANCE: f64 = 1e-6;

/// Position of `k` inside its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapCase {
    /// `λ_k > λ_{k−1}`: k opens its cluster.
    BelowGap,
    /// `λ_k < λ_{k+1}`: k closes its cluster.
    AboveGap,
    Interior,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub k: usize,
    pub lambda_k: f64,
    pub cluster: Cluster,
    /// Eigenvalues of Q, ascending.
    pub branch_derivatives: Vec<f64>,
    pub d_plus: f64,
    pub d_minus: f64,
    /// Indices into `branch_derivatives` of `d_plus` and `d_minus`. Ties go
    /// to the lowest index.
    pub d_plus_branch: usize,
    pub d_minus_branch: usize,
    /// Both gap cases when the eigenvalue is simple.
    pub cases: Vec<GapCase>,
    /// `Q_ij = −λ_k ∫ α ψ_iψ_j dv_{g_w}` over the cluster basis.
    pub perturbation: DMatrix<f64>,
    pub note: Option<String>,
}

/// Node weights of dv_{g_w}.
fn volume_weights(backend: &ManifoldBackend, system: &PaneitzSystem) -> DVector<f64> {
    backend.weights().component_mul(&system.conformal_factor().volume_density())
}

fn check_index(spectrum: &SpectrumResult, system: &PaneitzSystem, k: usize) -> Result<Cluster> {
    if k == 0 || k > spectrum.len() {
        return Err(Error::Usage(format!("k = {k} outside 1..={}", spectrum.len())));
    }
    let c = spectrum.clustering().cluster_of(k).expect("k is in range");
    if c.last == spectrum.len() && spectrum.len() < system.dim() {
        return Err(Error::Usage(format!(
            "cluster of λ_{k} reaches the last computed eigenvalue; compute at least {} eigenvalues",
            c.last + 1
        )));
    }
    Ok(c)
}

fn lowest_index_of(values: &[f64], target: f64) -> usize {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    values.iter().position(|v| (v - target).abs() <= 1e-12 * scale).expect("target is one of the values")
}

/// Mean of the node function `alpha` against dv_{g_w}, with the absolute
/// integral for scale.
pub fn direction_mean(backend: &ManifoldBackend, system: &PaneitzSystem, alpha: &DVector<f64>) -> (f64, f64) {
    let d = volume_weights(backend, system);
    (d.dot(alpha), d.dot(&alpha.abs()))
}

/// Removes the dv_{g_w} mean of a node function.
pub fn remove_mean(backend: &ManifoldBackend, system: &PaneitzSystem, alpha: &DVector<f64>) -> DVector<f64> {
    let d = volume_weights(backend, system);
    alpha.add_scalar(-d.dot(alpha) / d.sum())
}

/// Branch derivatives of the cluster of `λ_k` for `w_t` with
/// `4·(d/dt)w_t = α`, and the one-sided derivatives of `λ_k(t)`.
pub fn one_sided_derivatives(
    backend: &ManifoldBackend,
    system: &PaneitzSystem,
    spectrum: &SpectrumResult,
    k: usize,
    alpha: &DVector<f64>,
) -> Result<DerivativeReport> {
    if alpha.len() != backend.num_nodes() {
        return Err(Error::Usage(format!("direction has {} node values, backend has {} nodes", alpha.len(), backend.num_nodes())));
    }
    let cluster = check_index(spectrum, system, k)?;
    let (mean, abs) = direction_mean(backend, system, alpha);
    if mean.abs() > ADMISSIBILITY_TOLERANCE * (1.0 + abs) {
        return Err(Error::DirectionNotAdmissible { mean });
    }
    let lambda = spectrum.eigenvalue(k).expect("k is in range");
    let (_, coeffs) = spectrum.cluster_basis(k).expect("k is in range");
    let psi = backend.values() * &coeffs;
    let m = cluster.len();
    let j = k - cluster.first + 1;
    let mut cases = Vec::new();
    if j == 1 {
        cases.push(GapCase::BelowGap);
    }
    if j == m {
        cases.push(GapCase::AboveGap);
    }
    if cases.is_empty() {
        cases.push(GapCase::Interior);
    }

    if lambda.abs() <= KERNEL_TOLERANCE {
        return Ok(DerivativeReport {
            k,
            lambda_k: lambda,
            cluster,
            branch_derivatives: vec![0.0; m],
            d_plus: 0.0,
            d_minus: 0.0,
            d_plus_branch: 0,
            d_minus_branch: 0,
            cases,
            perturbation: DMatrix::zeros(m, m),
            note: Some("λ_k = 0: every branch derivative carries the factor λ_k".into()),
        });
    }

    let weight = volume_weights(backend, system).component_mul(alpha);
    let mut scaled = psi.clone();
    for (q, mut row) in scaled.row_iter_mut().enumerate() {
        row *= weight[q];
    }
    let mut q = psi.tr_mul(&scaled) * (-lambda);
    q = (&q + q.transpose()) * 0.5;
    let mut branches: Vec<f64> = SymmetricEigen::new(q.clone()).eigenvalues.iter().copied().collect();
    branches.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // For t > 0 the k-th eigenvalue follows the j-th smallest branch; for
    // t < 0 the branch order reverses.
    let d_plus = branches[j - 1];
    let d_minus = branches[m - j];
    Ok(DerivativeReport {
        k,
        lambda_k: lambda,
        cluster,
        d_plus_branch: lowest_index_of(&branches, d_plus),
        d_minus_branch: lowest_index_of(&branches, d_minus),
        branch_derivatives: branches,
        d_plus,
        d_minus,
        cases,
        perturbation: q,
        note: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremalityCertificate {
    pub k: usize,
    pub lambda_k: f64,
    pub cluster: Cluster,
    /// S over the M_w-orthonormal cluster basis returned by the solver.
    pub gram: DMatrix<f64>,
    /// `‖Σ S_ab ψ_aψ_b − 1‖` in L²(dv_{g_w}).
    pub residual: f64,
    pub certified: bool,
    pub tolerance: f64,
    pub iterations: usize,
    pub reason: Option<String>,
    /// Coefficients of the cluster basis, one column per ψ_a.
    pub cluster_coeffs: DMatrix<f64>,
}

impl ExtremalityCertificate {
    /// Smallest eigenvalue of S.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.gram.clone()).eigenvalues.min()
    }

    /// Coefficients of φ_i = Σ_a ψ_a F_ai with S = FFᵀ, F = U√Λ; only
    /// positive eigenvalues of S contribute.
    pub fn family(&self) -> Vec<DVector<f64>> {
        let eig = SymmetricEigen::new(self.gram.clone());
        let top = eig.eigenvalues.max().max(0.0);
        let mut out = Vec::new();
        for i in 0..eig.eigenvalues.len() {
            let l = eig.eigenvalues[i];
            if l > 1e-14 * top && l > 0.0 {
                out.push(&self.cluster_coeffs * eig.eigenvectors.column(i) * l.sqrt());
            }
        }
        out
    }
}

fn to_sym(u: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(m, m);
    let mut p = 0;
    let r2 = std::f64::consts::SQRT_2;
    for a in 0..m {
        for b in a..m {
            if a == b {
                s[(a, a)] = u[p];
            } else {
                s[(a, b)] = u[p] / r2;
                s[(b, a)] = u[p] / r2;
            }
            p += 1;
        }
    }
    s
}

fn from_sym(s: &DMatrix<f64>) -> DVector<f64> {
    let m = s.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut u = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..m {
        for b in a..m {
            u.push(if a == b { s[(a, a)] } else { r2 * s[(a, b)] });
        }
    }
    DVector::from_vec(u)
}

fn project_psd(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((s + s.transpose()) * 0.5);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Searches for `S ⪰ 0` with `Σ S_ab ψ_aψ_b ≡ 1` over the cluster of `λ_k`.
///
/// The unconstrained least-squares solution is projected to the PSD cone
/// and refined by accelerated projected gradient.
pub fn extremality_certificate(
    backend: &ManifoldBackend,
    system: &PaneitzSystem,
    spectrum: &SpectrumResult,
    k: usize,
    tolerance: f64,
) -> Result<ExtremalityCertificate> {
    if !(tolerance > 0.0) {
        return Err(Error::Usage(format!("tolerance must be positive, got {tolerance}")));
    }
    let cluster = check_index(spectrum, system, k)?;
    let lambda = spectrum.eigenvalue(k).expect("k is in range");
    if lambda.abs() <= KERNEL_TOLERANCE {
        return Err(Error::Usage(format!("λ_{k} = 0; the certificate concerns nonzero eigenvalues")));
    }
    let (_, coeffs) = spectrum.cluster_basis(k).expect("k is in range");
    let psi = backend.values() * &coeffs;
    let d = volume_weights(backend, system);
    let m = cluster.len();
    let nq = backend.num_nodes();
    let p = m * (m + 1) / 2;

    // Columns are isometric coordinates of symmetric matrices.
    let r2 = std::f64::consts::SQRT_2;
    let mut features = DMatrix::zeros(nq, p);
    let mut col = 0;
    for a in 0..m {
        for b in a..m {
            let f = if a == b { 1.0 } else { r2 };
            for q in 0..nq {
                features[(q, col)] = f * psi[(q, a)] * psi[(q, b)];
            }
            col += 1;
        }
    }
    let residual_of = |u: &DVector<f64>| -> (DVector<f64>, f64) {
        let r = (&features * u).add_scalar(-1.0);
        let norm = r.component_mul(&r).dot(&d).max(0.0).sqrt();
        (r, norm)
    };
    let mut weighted = features.clone();
    for (q, mut row) in weighted.row_iter_mut().enumerate() {
        row *= d[q];
    }
    let gram = features.tr_mul(&weighted);
    let rhs = weighted.row_sum().transpose();

    let svd = gram.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let u0 = svd.solve(&rhs, cutoff).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut best_u = from_sym(&project_psd(&to_sym(&u0, m)));
    let (_, mut best) = residual_of(&best_u);

    let mut iterations = 0;
    if m > 1 && best > tolerance * 1e-3 {
        let lipschitz = 2.0 * SymmetricEigen::new(gram.clone()).eigenvalues.max();
        let step = 1.0 / lipschitz;
        let mut x = best_u.clone();
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut since_best = 0;
        while iterations < 20_000 && since_best < 500 {
            iterations += 1;
            let grad = (&gram * &y - &rhs) * 2.0;
            let next = from_sym(&project_psd(&to_sym(&(&y - grad * step), m)));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &next + (&next - &x) * ((t - 1.0) / t_next);
            x = next;
            t = t_next;
            let (_, r) = residual_of(&x);
            if r < best * (1.0 - 1e-9) {
                best = r;
                best_u = x.clone();
                since_best = 0;
            } else {
                since_best += 1;
            }
            if best <= tolerance * 1e-3 {
                break;
            }
        }
    }
    let gram_s = to_sym(&best_u, m);
    let reason = if m == 1 {
        Some(format!("λ_{k} is simple; a certified metric needs a degenerate eigenvalue"))
    } else if best > tolerance {
        Some(format!("least residual {best:.3e} exceeds tolerance {tolerance:.1e}"))
    } else {
        None
    };
    Ok(ExtremalityCertificate {
        k,
        lambda_k: lambda,
        cluster,
        gram: gram_s,
        residual: best,
        certified: m > 1 && best <= tolerance,
        tolerance,
        iterations,
        reason,
        cluster_coeffs: coeffs,
    })
}

/// Max over nodes of `|Σ_i φ_iΔ²φ_i + (2/3)R|∇φ_i|² − 2Ric(∇φ_i,∇φ_i) − λ_k|`
/// for the family of a certified certificate at the base metric.
pub fn pointwise_formula_check(backend: &ManifoldBackend, system: &PaneitzSystem, certificate: &ExtremalityCertificate) -> Result<f64> {
    if !certificate.certified {
        return Err(Error::Usage("the pointwise formula needs a certified family".into()));
    }
    if !system.conformal_factor().is_zero() {
        return Err(Error::UnsupportedBackend(
            "the pointwise formula is evaluated at the base metric only (w ≡ 0)".into(),
        ));
    }
    let family = certificate.family();
    let e = if family.len() >= 2 {
        density(backend, &family)?
    } else {
        let zero = DVector::zeros(backend.basis_dim());
        density(backend, &[family[0].clone(), zero])?
    };
    Ok(e.add_scalar(-certificate.lambda_k).amax())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub k: usize,
    pub lambda_k: f64,
    pub cluster_size: usize,
    pub can_be_local_max: bool,
    pub can_be_local_min: bool,
    pub note: Option<String>,
}

/// A local maximizer of `λ_k` needs `λ_k = λ_{k+1}`; a local minimizer
/// needs `λ_k = λ_{k−1}`. Equality is decided by the spectrum's clustering.
pub fn obstruction_report(spectrum: &SpectrumResult, k: usize) -> Result<ObstructionReport> {
    if k == 0 || k + 1 > spectrum.len() {
        return Err(Error::Usage(format!("obstruction flags for k = {k} need λ_1..λ_{} computed", k + 1)));
    }
    let lambda = spectrum.eigenvalue(k).expect("k is in range");
    let c = spectrum.clustering().cluster_of(k).expect("k is in range");
    if lambda.abs() <= KERNEL_TOLERANCE {
        return Ok(ObstructionReport {
            k,
            lambda_k: lambda,
            cluster_size: c.len(),
            can_be_local_max: true,
            can_be_local_min: true,
            note: Some("λ_k = 0 is fixed across the conformal class".into()),
        });
    }
    let note = (c.len() > 1).then(|| {
        format!("at most {} of the consecutive indices {}..={} can be local maxima", c.len() - 1, c.first, c.last)
    });
    Ok(ObstructionReport {
        k,
        lambda_k: lambda,
        cluster_size: c.len(),
        can_be_local_max: c.contains(k + 1),
        can_be_local_min: k > 1 && c.contains(k - 1),
        note,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AscentOptions {
    pub steps: usize,
    pub step_size: f64,
    /// Direction basis: basis functions of degree 1..=max_direction_degree.
    pub max_direction_degree: usize,
    /// Steps shorter than this end the run.
    pub min_step_size: f64,
    /// Candidates whose first-order gain is at most this (relative to λ_k)
    /// count as non-improving.
    pub stationarity_tolerance: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { steps: 200, step_size: 0.1, max_direction_degree: 2, min_step_size: 1e-8, stationarity_tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AscentStep {
    pub step: usize,
    /// λ_k of the current iterate (after this step's accept/reject).
    pub lambda_k: f64,
    /// λ_k · Vol(g_w) / target volume.
    pub normalized: f64,
    pub step_size: f64,
    /// Index of the candidate direction tried, if any.
    pub direction_id: Option<usize>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AscentStatus {
    /// No candidate direction has a positive first-order gain.
    Stationary,
    /// The step size fell below the minimum without improvement.
    StepTooSmall,
    StepsExhausted,
}

#[derive(Debug, Clone)]
pub struct AscentResult {
    pub w_best: ConformalFactor,
    pub trajectory: Vec<AscentStep>,
    pub status: AscentStatus,
    pub target_volume: f64,
}

struct Iterate {
    w: ConformalFactor,
    system: PaneitzSystem,
    spectrum: SpectrumResult,
    lambda: f64,
}

/// Coefficient vectors of mean-zero candidate directions `ψ_a − mean`.
fn direction_basis(backend: &ManifoldBackend, system: &PaneitzSystem, max_degree: usize) -> Vec<DVector<f64>> {
    let d = volume_weights(backend, system);
    let volume = d.sum();
    let values = backend.values();
    (1..backend.basis_dim())
        .filter(|&a| (1..=max_degree).contains(&backend.degrees()[a]))
        .map(|a| {
            let mean = values.column(a).dot(&d) / volume;
            let mut c = backend.constant(-mean);
            c[a] += 1.0;
            c
        })
        .collect()
}

/// Projected ascent of `λ_k` over conformal factors with fixed volume.
pub fn maximize_lambda_k(backend: &ManifoldBackend, k: usize, w_init: &ConformalFactor, options: &AscentOptions) -> Result<AscentResult> {
    if w_init.coeffs().is_none() {
        return Err(Error::Usage("ascent needs w as basis coefficients".into()));
    }
    if !(options.step_size > 0.0) || !(options.min_step_size > 0.0) {
        return Err(Error::Usage("step sizes must be positive".into()));
    }
    let count = (k + 1).min(backend.basis_dim());
    if k == 0 || k > count {
        return Err(Error::Usage(format!("k = {k} outside 1..={}", backend.basis_dim())));
    }
    let target = backend.volume();
    let energy = energy_matrix(backend);
    let evaluate = |w: ConformalFactor| -> Result<Iterate> {
        let w = normalize_volume(backend, &w, target);
        let system = PaneitzSystem::from_parts(energy.clone(), mass_matrix(backend, &w), w.clone())?;
        let spectrum = solve(&system, backend.basis_dim().min(count + 8))?;
        let lambda = spectrum.eigenvalue(k).expect("k is in range");
        Ok(Iterate { w, system, spectrum, lambda })
    };

    let mut current = evaluate(w_init.clone())?;
    if current.lambda.abs() <= KERNEL_TOLERANCE {
        return Err(Error::Usage(format!("λ_{k} = 0 at the initial metric")));
    }
    let normalized = |it: &Iterate| it.lambda * it.w.volume(backend) / target;
    let mut trajectory = vec![AscentStep {
        step: 0,
        lambda_k: current.lambda,
        normalized: normalized(&current),
        step_size: options.step_size,
        direction_id: None,
        accepted: true,
    }];
    let mut h = options.step_size;
    let mut status = AscentStatus::StepsExhausted;
    let mut step = 0;
    'outer: while step < options.steps {
        let basis = direction_basis(backend, &current.system, options.max_direction_degree);
        let node_dirs: Vec<DVector<f64>> = basis.iter().map(|c| backend.evaluate(c)).collect();
        let gains: Vec<Result<DerivativeReport>> = node_dirs
            .par_iter()
            .map(|alpha| one_sided_derivatives(backend, &current.system, &current.spectrum, k, alpha))
            .collect();
        let gains: Vec<DerivativeReport> = gains.into_iter().collect::<Result<_>>()?;

        // ±basis directions plus the normalized gradient of the branch sum.
        let mut candidates: Vec<DVector<f64>> = Vec::new();
        for c in &basis {
            candidates.push(c.clone());
            candidates.push(-c.clone());
        }
        let grad = DVector::from_iterator(gains.len(), gains.iter().map(|g| g.perturbation.trace()));
        if grad.norm() > 0.0 {
            let mut agg = DVector::zeros(backend.basis_dim());
            for (g, c) in grad.iter().zip(&basis) {
                agg += c * *g;
            }
            candidates.push(agg / grad.norm());
        }
        let reports: Vec<Result<(f64, usize)>> = candidates
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let alpha = backend.evaluate(c);
                let alpha = remove_mean(backend, &current.system, &alpha);
                let r = one_sided_derivatives(backend, &current.system, &current.spectrum, k, &alpha)?;
                Ok((r.d_plus, i))
            })
            .collect();
        let mut scored: Vec<(f64, usize)> = reports.into_iter().collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        if scored[0].0 <= options.stationarity_tolerance * current.lambda.abs() {
            status = AscentStatus::Stationary;
            break;
        }
        let improving: Vec<usize> = scored
            .iter()
            .filter(|(g, _)| *g > options.stationarity_tolerance * current.lambda.abs())
            .map(|&(_, i)| i)
            .collect();

        loop {
            if step >= options.steps {
                break 'outer;
            }
            step += 1;
            // Try the best candidate first, then the runners-up at the same
            // step size before shrinking it.
            let mut accepted = None;
            for &i in improving.iter().take(3) {
                let coeffs = current.w.coeffs().expect("iterates carry coefficients") + &candidates[i] * (h / 4.0);
                let trial = evaluate(ConformalFactor::from_coeffs(backend, coeffs)?)?;
                if trial.lambda > current.lambda {
                    accepted = Some((i, trial));
                    break;
                }
            }
            match accepted {
                Some((i, trial)) => {
                    current = trial;
                    trajectory.push(AscentStep {
                        step,
                        lambda_k: current.lambda,
                        normalized: normalized(&current),
                        step_size: h,
                        direction_id: Some(i),
                        accepted: true,
                    });
                    h = (h * 1.5).min(options.step_size);
                    continue 'outer;
                }
                None => {
                    trajectory.push(AscentStep {
                        step,
                        lambda_k: current.lambda,
                        normalized: normalized(&current),
                        step_size: h,
                        direction_id: improving.first().copied(),
                        accepted: false,
                    });
                    h *= 0.5;
                    if h < options.min_step_size {
                        status = AscentStatus::StepTooSmall;
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(AscentResult { w_best: current.w, trajectory, status, target_volume: target })
}

/// Certificate, obstruction flags, pointwise check and derivatives along
/// the given directions, gathered for one index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremalityReport {
    pub certificate: ExtremalityCertificate,
    pub obstruction: ObstructionReport,
    pub pointwise_deviation: Option<f64>,
    pub pointwise_note: Option<String>,
    pub derivatives: Vec<DerivativeReport>,
    /// Every tested direction has `d₊·d₋ ≤ 0`.
    pub opposite_signs: bool,
}

pub fn extremality_report(
    backend: &ManifoldBackend,
    system: &PaneitzSystem,
    spectrum: &SpectrumResult,
    k: usize,
    tolerance: f64,
    directions: &[DVector<f64>],
) -> Result<ExtremalityReport> {
    let certificate = extremality_certificate(backend, system, spectrum, k, tolerance)?;
    let obstruction = obstruction_report(spectrum, k)?;
    let (pointwise_deviation, pointwise_note) = if certificate.certified {
        match pointwise_formula_check(backend, system, &certificate) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("not certified".into()))
    };
    let derivatives = directions
        .iter()
        .map(|a| one_sided_derivatives(backend, system, spectrum, k, a))
        .collect::<Result<Vec<_>>>()?;
    let scale = spectrum.eigenvalue(k).unwrap_or(0.0).abs().max(1.0);
    let opposite_signs = derivatives.iter().all(|d| d.d_plus * d.d_minus <= 1e-12 * scale * scale);
    Ok(ExtremalityReport { certificate, obstruction, pointwise_deviation, pointwise_note, derivatives, opposite_signs })
}
