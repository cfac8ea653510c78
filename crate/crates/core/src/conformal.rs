//! Volume normalization, conformal curvature on the flat torus, and the
//! Möbius balancing of conformal volume on the round S⁴.

use nalgebra::{DMatrix, DVector, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BackendKind, ConformalFactor, ManifoldBackend};
use crate::operator::{chunked_sum, symmetrize, weighted_cross};

/// Shifts `w` by a constant so that `∫ e^{4w} dv_g = target_volume`.
pub fn normalize_volume(backend: &ManifoldBackend, w: &ConformalFactor, target_volume: f64) -> ConformalFactor {
    let volume = w.volume(backend);
    w.shifted(backend, -0.25 * (volume / target_volume).ln())
}

/// Curvature and metric data of `ĝ = e^{2w} g` on a flat torus.
///
/// Tensors are in coordinate components; `ricci[q][i][j]` is the (0,2)
/// Ricci tensor of ĝ at node `q`.
#[derive(Debug, Clone)]
pub struct ConformalCurvature {
    pub scalar: DVector<f64>,
    pub ricci: Vec<[[f64; 4]; 4]>,
    /// `weight_q · e^{4w}`, the quadrature weights of dv_ĝ.
    pub volume_weights: DVector<f64>,
    /// `e^{-2w}`, so that ⟨∇̂φ,∇̂ψ⟩_ĝ = e^{-2w}⟨∇φ,∇ψ⟩.
    pub inverse_metric_factor: DVector<f64>,
    pub w_gradient: Vec<[f64; 4]>,
}

impl ConformalCurvature {
    /// Δ̂φ = e^{-2w}(Δφ + 2⟨∇w,∇φ⟩) from base-metric data at node `q`.
    pub fn laplacian(&self, q: usize, base_laplacian: f64, base_gradient: &[f64; 4]) -> f64 {
        let dot: f64 = (0..4).map(|i| self.w_gradient[q][i] * base_gradient[i]).sum();
        self.inverse_metric_factor[q] * (base_laplacian + 2.0 * dot)
    }

    /// Ric_ĝ(∇̂φ, ∇̂ψ) at node `q` given base gradients of φ and ψ.
    pub fn ricci_on_gradients(&self, q: usize, u: &[f64; 4], v: &[f64; 4]) -> f64 {
        let f2 = self.inverse_metric_factor[q] * self.inverse_metric_factor[q];
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += self.ricci[q][i][j] * u[i] * v[j];
            }
        }
        f2 * s
    }
}

/// Scalar and Ricci curvature of `e^{2w} g` for flat `g` in dimension four:
///
/// * `Ric_ĝ = −2(∇²w − dw⊗dw) − (Δw + 2|∇w|²) g`
/// * `R_ĝ = e^{−2w}(−6Δw − 6|∇w|²)`
pub fn conformal_curvature_torus(backend: &ManifoldBackend, w: &ConformalFactor) -> Result<ConformalCurvature> {
    if !backend.has_hessians() {
        return Err(Error::UnsupportedBackend("conformal curvature needs coordinate Hessians (torus backend)".into()));
    }
    let coeffs = w
        .coeffs()
        .ok_or_else(|| Error::Usage("conformal curvature needs w as basis coefficients".into()))?;
    let hess = backend.hessians_of(coeffs).expect("torus provides Hessians");
    let grad = backend.evaluate_gradient(coeffs);
    let wv = w.node_values();
    let n = backend.num_nodes();

    let mut scalar = DVector::zeros(n);
    let mut ricci = vec![[[0.0; 4]; 4]; n];
    let mut w_gradient = vec![[0.0; 4]; n];
    for q in 0..n {
        let dw: [f64; 4] = std::array::from_fn(|i| grad[i][q]);
        let lap = hess[q][0][0] + hess[q][1][1] + hess[q][2][2] + hess[q][3][3];
        let dw2: f64 = dw.iter().map(|v| v * v).sum();
        for i in 0..4 {
            for j in 0..4 {
                let delta = if i == j { 1.0 } else { 0.0 };
                ricci[q][i][j] = -2.0 * (hess[q][i][j] - dw[i] * dw[j]) - (lap + 2.0 * dw2) * delta;
            }
        }
        scalar[q] = (-2.0 * wv[q]).exp() * (-6.0 * lap - 6.0 * dw2);
        w_gradient[q] = dw;
    }
    let volume_weights = backend.weights().component_mul(&w.volume_density());
    let inverse_metric_factor = wv.map(|v| (-2.0 * v).exp());
    Ok(ConformalCurvature { scalar, ricci, volume_weights, inverse_metric_factor, w_gradient })
}

/// Energy form assembled entirely from ĝ data:
/// `∫ Δ̂φΔ̂ψ + (2/3)R̂⟨∇̂φ,∇̂ψ⟩_ĝ − 2Riĉ(∇̂φ,∇̂ψ) dv_ĝ`.
pub fn energy_from_curvature(backend: &ManifoldBackend, curvature: &ConformalCurvature) -> DMatrix<f64> {
    let n = backend.basis_dim();
    let nq = backend.num_nodes();
    let grads = backend.gradients();
    let mut hat_lap = backend.laplacians().clone();
    for q in 0..nq {
        for a in 0..n {
            let g: [f64; 4] = std::array::from_fn(|i| grads[i][(q, a)]);
            hat_lap[(q, a)] = curvature.laplacian(q, backend.laplacians()[(q, a)], &g);
        }
    }
    let vw = curvature.volume_weights.as_slice();
    let grad_weight: Vec<f64> = (0..nq)
        .map(|q| vw[q] * 2.0 / 3.0 * curvature.scalar[q] * curvature.inverse_metric_factor[q])
        .collect();
    let ricci_weight: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| {
                    (0..nq)
                        .map(|q| {
                            let f = curvature.inverse_metric_factor[q];
                            -2.0 * vw[q] * f * f * curvature.ricci[q][i][j]
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut k = chunked_sum(nq, n, |s, l| {
        let mut part = weighted_cross(&hat_lap, &hat_lap, vw, s, l);
        for i in 0..4 {
            part += weighted_cross(&grads[i], &grads[i], &grad_weight, s, l);
            for j in 0..4 {
                part += weighted_cross(&grads[i], &grads[j], &ricci_weight[i][j], s, l);
            }
        }
        part
    });
    symmetrize(&mut k);
    k
}

/// A conformal dilation of the unit S⁴: stereographic projection from
/// `−center`, scaling by `dilation`, and projecting back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoebiusParams {
    pub center: [f64; 5],
    pub dilation: f64,
}

impl MoebiusParams {
    pub fn identity() -> Self {
        Self { center: [0.0, 0.0, 0.0, 0.0, 1.0], dilation: 1.0 }
    }

    pub fn new(center: [f64; 5], dilation: f64) -> Result<Self> {
        let p = Self { center, dilation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dilation > 0.0 && self.dilation.is_finite()) {
            return Err(Error::Parameter(format!("dilation must be positive and finite, got {}", self.dilation)));
        }
        let norm = self.center.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("center must be a unit vector, |center| = {norm}")));
        }
        Ok(())
    }

    /// Exponential coordinates: `v = log(t) · center`, so `v = 0` is the
    /// identity and the family is smooth in `v`.
    pub fn from_vector(v: &Vector5<f64>, fallback_center: [f64; 5]) -> Self {
        let s = v.norm();
        if s == 0.0 {
            return Self { center: fallback_center, dilation: 1.0 };
        }
        let c = v / s;
        Self { center: [c[0], c[1], c[2], c[3], c[4]], dilation: s.exp() }
    }

    /// Image of the unit vector `x` and the linear stretch factor `J` with
    /// `φ*g_round = J² g_round` at `x`.
    pub fn apply(&self, x: &[f64]) -> ([f64; 5], f64) {
        let t = self.dilation;
        let s: f64 = (0..5).map(|i| x[i] * self.center[i]).sum();
        let denom = (1.0 + s) + t * t * (1.0 - s);
        let along = ((1.0 + s) - t * t * (1.0 - s)) / denom;
        let image = std::array::from_fn(|i| {
            let perp = x[i] - s * self.center[i];
            along * self.center[i] + 2.0 * t * perp / denom
        });
        (image, 2.0 * t / denom)
    }
}

fn unit_sphere_check(backend: &ManifoldBackend) -> Result<()> {
    match backend.kind() {
        BackendKind::Sphere4 { radius } if (*radius - 1.0).abs() < 1e-14 => Ok(()),
        _ => Err(Error::UnsupportedBackend("Möbius maps need the unit sphere backend".into())),
    }
}

/// `w_φ` with `e^{2w_φ} g = φ*(e^{2w} g)`, i.e. `w_φ = w∘φ + log J`, as
/// node values.
pub fn moebius_pullback_factor(backend: &ManifoldBackend, params: &MoebiusParams, w: &ConformalFactor) -> Result<ConformalFactor> {
    unit_sphere_check(backend)?;
    params.validate()?;
    let coeffs = w
        .coeffs()
        .ok_or_else(|| Error::Usage("pullback needs w as basis coefficients".into()))?;
    let (images, stretch): (Vec<Vec<f64>>, Vec<f64>) = backend
        .nodes()
        .iter()
        .map(|x| {
            let (y, j) = params.apply(x);
            (y.to_vec(), j)
        })
        .unzip();
    let composed = backend.evaluate_at_points(coeffs, &images);
    let values = DVector::from_iterator(composed.len(), composed.iter().zip(&stretch).map(|(w, j)| w + j.ln()));
    ConformalFactor::from_node_values(backend, values)
}

/// `∫ x_i e^{4w} dv_g` for the five ambient coordinates.
pub fn first_moments(backend: &ManifoldBackend, w: &ConformalFactor) -> [f64; 5] {
    let d = backend.weights().component_mul(&w.volume_density());
    let mut m = [0.0; 5];
    for (q, x) in backend.nodes().iter().enumerate() {
        for i in 0..5 {
            m[i] += d[q] * x[i];
        }
    }
    m
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceOptions {
    /// Required bound on `max_i |m_i| / ω₄`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 50, fd_step: 1e-5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceIteration {
    pub iteration: usize,
    /// `max_i |m_i| / Vol` before the step.
    pub residual: f64,
    pub step_scale: f64,
    pub dilation: f64,
}

#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub params: MoebiusParams,
    pub factor: ConformalFactor,
    pub moments: [f64; 5],
    pub iterations: Vec<BalanceIteration>,
}

impl BalanceReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "moments": self.moments,
            "iterations": self.iterations,
        })
    }
}

/// Finds a conformal dilation whose pullback of `e^{2w} g` has vanishing
/// first moments. Damped Newton in exponential coordinates with a
/// central-difference Jacobian; the returned factor is renormalized to the
/// volume of `w`.
pub fn hersch_balance(backend: &ManifoldBackend, w: &ConformalFactor, options: &BalanceOptions) -> Result<BalanceReport> {
    unit_sphere_check(backend)?;
    if w.coeffs().is_none() {
        return Err(Error::Usage("balancing needs w as basis coefficients".into()));
    }
    let volume = w.volume(backend);
    let com = first_moments(backend, w);
    let com_norm = com.iter().map(|c| c * c).sum::<f64>().sqrt();
    let fallback = if com_norm > 0.0 {
        com.map(|c| c / com_norm)
    } else {
        MoebiusParams::identity().center
    };

    let residual_at = |v: &Vector5<f64>| -> Result<(Vector5<f64>, ConformalFactor)> {
        let params = MoebiusParams::from_vector(v, fallback);
        let pulled = moebius_pullback_factor(backend, &params, w)?;
        let m = first_moments(backend, &pulled);
        Ok((Vector5::from_column_slice(&m) / volume, pulled))
    };

    let target = options.tolerance * 1e-4;
    let mut v = Vector5::zeros();
    let (mut f, mut pulled) = residual_at(&v)?;
    let mut iterations = Vec::new();
    for iteration in 0..=options.max_iterations {
        let res = f.amax();
        if res <= target || iteration == options.max_iterations {
            iterations.push(BalanceIteration { iteration, residual: res, step_scale: 0.0, dilation: v.norm().exp() });
            break;
        }
        let mut jac = nalgebra::Matrix5::zeros();
        for j in 0..5 {
            let mut plus = v;
            let mut minus = v;
            plus[j] += options.fd_step;
            minus[j] -= options.fd_step;
            let col = (residual_at(&plus)?.0 - residual_at(&minus)?.0) / (2.0 * options.fd_step);
            jac.set_column(j, &col);
        }
        let step = jac.lu().solve(&(-f)).ok_or_else(|| Error::Numerical("singular balancing Jacobian".into()))?;
        let mut scale = 1.0;
        let mut accepted = None;
        while scale > 1e-12 {
            let trial = v + step * scale;
            let (ft, pt) = residual_at(&trial)?;
            if ft.norm() < f.norm() {
                accepted = Some((trial, ft, pt));
                break;
            }
            scale *= 0.5;
        }
        iterations.push(BalanceIteration { iteration, residual: res, step_scale: scale, dilation: v.norm().exp() });
        match accepted {
            Some((nv, nf, np)) => {
                v = nv;
                f = nf;
                pulled = np;
            }
            None => break,
        }
    }
    let best = f.amax();
    if best > options.tolerance {
        return Err(Error::NonConvergence { iterations: iterations.len(), best_residual: best });
    }
    let params = if v.norm() == 0.0 { MoebiusParams::identity() } else { MoebiusParams::from_vector(&v, fallback) };
    let factor = normalize_volume(backend, &pulled, volume);
    let moments = first_moments(backend, &factor);
    Ok(BalanceReport { params, factor, moments, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve;
    use crate::geometry::{build_sphere, build_sphere_with_exactness, build_torus};
    use crate::operator::{assemble, energy_matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const OMEGA4: f64 = 8.0 * PI * PI / 3.0;

    fn random_factor(backend: &ManifoldBackend, seed: u64, max_degree: usize, magnitude: f64) -> ConformalFactor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = DVector::from_fn(backend.basis_dim(), |a, _| {
            if a > 0 && backend.degrees()[a] <= max_degree {
                rng.gen_range(-magnitude..magnitude)
            } else {
                0.0
            }
        });
        ConformalFactor::from_coeffs(backend, c).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let t = build_torus([1.0; 4], 1).unwrap();
        let w = ConformalFactor::from_coeffs(&t, t.constant(0.7)).unwrap();
        let n = normalize_volume(&t, &w, 1.0);
        assert!(n.node_values().amax() < 1e-14);

        let s = build_sphere(1.0, 2).unwrap();
        let z = normalize_volume(&s, &ConformalFactor::zero(&s), s.volume());
        assert!(z.node_values().amax() < 1e-13);

        let mut c = DVector::zeros(s.basis_dim());
        c[1] = 0.3 * (OMEGA4 / 5.0).sqrt();
        let w = ConformalFactor::from_coeffs(&s, c).unwrap();
        let n = normalize_volume(&s, &w, OMEGA4);
        assert!(((n.volume(&s) - OMEGA4) / OMEGA4).abs() < 1e-12);
    }

    #[test]
    fn scaling_covariance() {
        // e^{2c} g multiplies the metric by e^{2c}, so λ_k scales by e^{-4c}.
        let s = build_sphere(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_factor(&s, 3, 2, 0.2);
        let base = solve(&assemble(&s, &w).unwrap(), 12).unwrap();
        for _ in 0..5 {
            let c: f64 = rng.gen_range(-1.0..1.0);
            let shifted = w.shifted(&s, c);
            let spec = solve(&assemble(&s, &shifted).unwrap(), 12).unwrap();
            for (a, b) in spec.eigenvalues().iter().zip(base.eigenvalues()) {
                assert!((a - (-4.0 * c).exp() * b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn flat_curvature_for_constant_factor() {
        let t = build_torus([1.0; 4], 1).unwrap();
        let w = ConformalFactor::from_coeffs(&t, t.constant(0.4)).unwrap();
        let curv = conformal_curvature_torus(&t, &w).unwrap();
        assert!(curv.scalar.amax() < 1e-14);
        assert!(curv.ricci.iter().flatten().flatten().all(|v| v.abs() < 1e-14));
        let expected = (1.6f64).exp() / t.num_nodes() as f64;
        assert!(curv.volume_weights.iter().all(|v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn curvature_requires_torus() {
        let s = build_sphere(1.0, 2).unwrap();
        assert!(matches!(conformal_curvature_torus(&s, &ConformalFactor::zero(&s)), Err(Error::UnsupportedBackend(_))));
    }

    #[test]
    fn scalar_curvature_is_ricci_trace() {
        let t = build_torus([1.0, 1.5, 1.0, 0.8], 1).unwrap();
        let w = random_factor(&t, 9, 1, 0.2);
        let curv = conformal_curvature_torus(&t, &w).unwrap();
        for q in 0..t.num_nodes() {
            let f = curv.inverse_metric_factor[q];
            let trace: f64 = (0..4).map(|i| curv.ricci[q][i][i]).sum::<f64>() * f;
            assert!((trace - curv.scalar[q]).abs() < 1e-10 * (1.0 + trace.abs()));
        }
    }

    #[test]
    fn energy_invariance_by_independent_assembly() {
        let t = build_torus([1.0; 4], 1).unwrap();
        let k = energy_matrix(&t);
        for seed in 0..3 {
            let w = random_factor(&t, seed, 1, 0.15);
            let curv = conformal_curvature_torus(&t, &w).unwrap();
            let k_hat = energy_from_curvature(&t, &curv);
            assert!((&k_hat - &k).amax() < 1e-7, "seed {seed}: {}", (&k_hat - &k).amax());
        }
    }

    #[test]
    fn moebius_identity_and_parameters() {
        let s = build_sphere(1.0, 2).unwrap();
        let w = random_factor(&s, 1, 2, 0.3);
        let id = moebius_pullback_factor(&s, &MoebiusParams::identity(), &w).unwrap();
        assert!((id.node_values() - w.node_values()).amax() < 1e-12);
        assert!(MoebiusParams::new([0.0, 0.0, 0.0, 0.0, 1.0], 0.0).is_err());
        assert!(MoebiusParams::new([1.0, 1.0, 0.0, 0.0, 0.0], 2.0).is_err());
        let t = build_torus([1.0; 4], 1).unwrap();
        assert!(moebius_pullback_factor(&t, &MoebiusParams::identity(), &ConformalFactor::zero(&t)).is_err());
    }

    #[test]
    fn moebius_maps_sphere_to_sphere() {
        let p = MoebiusParams::new([0.6, 0.0, 0.0, 0.0, 0.8], 2.5).unwrap();
        let s = build_sphere(1.0, 2).unwrap();
        for x in s.nodes().iter().step_by(97) {
            let (y, _) = p.apply(x);
            let n: f64 = y.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-13);
        }
        // The center's antipode is fixed, the center too.
        let (y, j) = p.apply(&p.center);
        assert!((0..5).all(|i| (y[i] - p.center[i]).abs() < 1e-14));
        assert!((j - 2.5).abs() < 1e-14);
    }

    #[test]
    fn moebius_stretch_matches_finite_differences() {
        // Oracle: ratio of chord lengths for a short tangent displacement.
        let p = MoebiusParams::new([0.0, 0.6, 0.0, 0.8, 0.0], 1.7).unwrap();
        let x = [0.3, -0.2, 0.5, 0.1, 0.0];
        let n = (x.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let x: Vec<f64> = x.iter().map(|v| v / n).collect();
        let mut dir = [0.0, 0.0, 0.0, 0.0, 1.0];
        let d: f64 = (0..5).map(|i| dir[i] * x[i]).sum();
        for i in 0..5 {
            dir[i] -= d * x[i];
        }
        let h = 1e-6;
        let moved: Vec<f64> = (0..5).map(|i| x[i] + h * dir[i]).collect();
        let mn = moved.iter().map(|v| v * v).sum::<f64>().sqrt();
        let moved: Vec<f64> = moved.iter().map(|v| v / mn).collect();
        let (a, j) = p.apply(&x);
        let (b, _) = p.apply(&moved);
        let num = (0..5).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
        let den = (0..5).map(|i| (x[i] - moved[i]).powi(2)).sum::<f64>().sqrt();
        assert!((num / den - j).abs() < 1e-5);
    }

    #[test]
    fn pullback_preserves_volume() {
        let s = build_sphere_with_exactness(1.0, 2, 40).unwrap();
        let w = normalize_volume(&s, &random_factor(&s, 5, 2, 0.2), OMEGA4);
        for (center, t) in [([0.0, 0.0, 0.0, 0.0, 1.0], 1.5), ([0.6, 0.0, 0.8, 0.0, 0.0], 2.0)] {
            let p = MoebiusParams::new(center, t).unwrap();
            for factor in [ConformalFactor::zero(&s), w.clone()] {
                let pulled = moebius_pullback_factor(&s, &p, &factor).unwrap();
                let rel = (pulled.volume(&s) - factor.volume(&s)) / factor.volume(&s);
                assert!(rel.abs() < 1e-9, "t={t}: {rel}");
            }
        }
    }

    #[test]
    fn concentration_grows_with_dilation() {
        let s = build_sphere(1.0, 2).unwrap();
        let mut last = 0.0;
        for t in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let p = MoebiusParams::new([0.0, 0.0, 0.0, 0.0, 1.0], t).unwrap();
            let pulled = moebius_pullback_factor(&s, &p, &ConformalFactor::zero(&s)).unwrap();
            let max_weight = s.weights().component_mul(&pulled.volume_density()).max();
            assert!(max_weight > last);
            last = max_weight;
        }
    }

    #[test]
    fn balance_zero_is_identity() {
        let s = build_sphere(1.0, 2).unwrap();
        let rep = hersch_balance(&s, &ConformalFactor::zero(&s), &BalanceOptions::default()).unwrap();
        assert_eq!(rep.params, MoebiusParams::identity());
        assert!(rep.moments.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn balance_north_pole_bump() {
        let s = build_sphere(1.0, 3).unwrap();
        let mut c = DVector::zeros(s.basis_dim());
        c[5] = 0.5;
        let w = normalize_volume(&s, &ConformalFactor::from_coeffs(&s, c).unwrap(), OMEGA4);
        let rep = hersch_balance(&s, &w, &BalanceOptions::default()).unwrap();
        assert!(rep.moments.iter().all(|m| m.abs() <= 1e-8 * OMEGA4), "{:?}", rep.moments);
        assert!(rep.params.center[..4].iter().all(|c| c.abs() < 1e-6));
        assert!((rep.params.center[4].abs() - 1.0).abs() < 1e-9);
        assert!(rep.params.dilation > 1.0);
    }

    #[test]
    fn balance_even_factor_stays_at_identity() {
        let s = build_sphere(1.0, 2).unwrap();
        let mut c = DVector::zeros(s.basis_dim());
        c[6] = 0.4;
        c[9] = -0.2;
        let w = normalize_volume(&s, &ConformalFactor::from_coeffs(&s, c).unwrap(), OMEGA4);
        let rep = hersch_balance(&s, &w, &BalanceOptions::default()).unwrap();
        assert!((rep.params.dilation - 1.0).abs() < 1e-6);
    }

    #[test]
    fn balance_random_factors() {
        let s = build_sphere(1.0, 2).unwrap();
        for seed in 0..4 {
            let w = normalize_volume(&s, &random_factor(&s, 100 + seed, 2, 0.5), OMEGA4);
            let rep = hersch_balance(&s, &w, &BalanceOptions::default()).unwrap();
            assert!(rep.moments.iter().all(|m| m.abs() <= 1e-8 * OMEGA4));
            assert!(((rep.factor.volume(&s) - OMEGA4) / OMEGA4).abs() < 1e-12);
        }
    }
}
