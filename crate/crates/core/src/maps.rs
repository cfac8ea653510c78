//! Sphere-valued maps `U: M → S^{p−1}`: the residual of `P_g U = e_g(U) U`
//! and the conformal metric `e_g(Φ)^{1/2} g` built from a map.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::eigen::{solve, SpectrumResult};
use crate::error::{Error, Result};
use crate::geometry::{ConformalFactor, ManifoldBackend};
use crate::operator::{apply_symbol, assemble, density, PaneitzSystem};

/// Allowed deviation of `Σ U_i²` from 1 at the nodes.
pub const SPHERE_CONSTRAINT_TOLERANCE: f64 = 1e-6;
/// Relative residual for a component to count as an eigenvector.
pub const EIGENVECTOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereValuedMap {
    pub p: usize,
    pub components: Vec<DVector<f64>>,
}

impl SphereValuedMap {
    pub fn new(backend: &ManifoldBackend, components: Vec<DVector<f64>>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Usage(format!("a sphere-valued map needs at least 2 components, got {}", components.len())));
        }
        if let Some(c) = components.iter().find(|c| c.len() != backend.basis_dim()) {
            return Err(Error::Usage(format!("component has {} coefficients, basis has {}", c.len(), backend.basis_dim())));
        }
        Ok(Self { p: components.len(), components })
    }

    /// `max_q |Σ_i U_i(x_q)² − 1|`.
    pub fn constraint_violation(&self, backend: &ManifoldBackend) -> f64 {
        let mut s = DVector::zeros(backend.num_nodes());
        for c in &self.components {
            let u = backend.evaluate(c);
            s += u.component_mul(&u);
        }
        s.add_scalar(-1.0).amax()
    }

    fn check(&self, backend: &ManifoldBackend) -> Result<()> {
        if self.p != self.components.len() {
            return Err(Error::Usage(format!("p = {} but {} components given", self.p, self.components.len())));
        }
        Self::new(backend, self.components.clone())?;
        let violation = self.constraint_violation(backend);
        if violation > SPHERE_CONSTRAINT_TOLERANCE {
            return Err(Error::InvalidMap { violation });
        }
        Ok(())
    }
}

/// `max_{i,q} |P_g U_i − e_g(U) U_i|` at the nodes.
pub fn paneitz_map_residual(backend: &ManifoldBackend, map: &SphereValuedMap) -> Result<f64> {
    map.check(backend)?;
    let e = density(backend, &map.components)?;
    let mut worst = 0.0f64;
    for c in &map.components {
        let pu = backend.evaluate(&apply_symbol(backend, c)?);
        let u = backend.evaluate(c);
        worst = worst.max((pu - e.component_mul(&u)).amax());
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct MapMetric {
    /// `w_Φ = (1/4) log e_g(Φ)` at the nodes.
    pub factor: ConformalFactor,
    pub system: PaneitzSystem,
    pub spectrum: SpectrumResult,
    /// `‖K u − M u‖ / ‖M u‖` per component.
    pub component_residuals: Vec<f64>,
    /// First index of the cluster containing eigenvalue 1.
    pub k: Option<usize>,
    pub multiplicity: usize,
}

impl MapMetric {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "multiplicity": self.multiplicity,
            "component_residuals": self.component_residuals,
            "w_min": self.factor.node_values().min(),
            "w_max": self.factor.node_values().max(),
            "spectrum": self.spectrum.to_json(),
        })
    }
}

/// Builds `g_Φ = e_g(Φ)^{1/2} g`, in which every component of Φ solves
/// `P φ = φ`, and locates eigenvalue 1 in its spectrum.
pub fn metric_from_map(backend: &ManifoldBackend, map: &SphereValuedMap) -> Result<MapMetric> {
    map.check(backend)?;
    let e = density(backend, &map.components)?;
    let (node, value) = e.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (q, v)| if v < acc.1 { (q, v) } else { acc });
    if value <= 0.0 {
        return Err(Error::HypothesisViolation { node, value });
    }
    let factor = ConformalFactor::from_node_values(backend, e.map(|v| 0.25 * v.ln()))?;
    let system = assemble(backend, &factor)?;
    let component_residuals = map
        .components
        .iter()
        .map(|u| {
            let mu = system.mass() * u;
            (system.energy() * u - &mu).norm() / mu.norm()
        })
        .collect();
    let spectrum = solve(&system, backend.basis_dim())?;
    let k = spectrum
        .eigenvalues()
        .iter()
        .position(|l| (l - 1.0).abs() <= EIGENVECTOR_TOLERANCE)
        .map(|i| spectrum.clustering().cluster_of(i + 1).expect("index in range").first);
    let multiplicity = k.map_or(0, |k| spectrum.clustering().cluster_of(k).expect("index in range").len());
    Ok(MapMetric { factor, system, spectrum, component_residuals, k, multiplicity })
}
