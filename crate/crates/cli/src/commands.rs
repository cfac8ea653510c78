use std::f64::consts::PI;

use nalgebra::DVector;
use paneitz_core::conformal::{conformal_curvature_torus, energy_from_curvature, hersch_balance, normalize_volume, BalanceOptions};
use paneitz_core::eigen::{solve, SpectrumResult};
use paneitz_core::export::{matrix_csv, spectrum_csv, trajectory_csv};
use paneitz_core::extremal::{extremality_report, maximize_lambda_k, one_sided_derivatives, AscentOptions};
use paneitz_core::maps::{paneitz_map_residual, SphereValuedMap};
use paneitz_core::operator::{assemble, energy_matrix, leibniz_residual, PaneitzSystem};
use paneitz_core::{BackendKind, ConformalFactor, Error, ManifoldBackend, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, FactorSpec};

pub const EXIT_CERTIFICATION: i32 = 4;

pub struct CommandOutput {
    pub result: Value,
    pub csv: String,
    pub exit: i32,
}

impl CommandOutput {
    fn ok(result: Value, csv: String) -> Self {
        Self { result, csv, exit: 0 }
    }
}

pub fn run(config: &ExperimentConfig) -> Result<CommandOutput> {
    config.validate()?;
    let backend = config.backend.build().map_err(|e| match e {
        Error::Config(m) | Error::Parameter(m) => Error::Config(m),
        other => Error::Config(other.to_string()),
    })?;
    match config.command.as_str() {
        "spectrum" => spectrum(&backend, config),
        "balance" => balance(&backend, config),
        "extremal" => extremal(&backend, config),
        "maximize" => maximize(&backend, config),
        "derivative" => derivative(&backend, config),
        "verify" => verify(&backend, config),
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn system_for(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<PaneitzSystem> {
    assemble(backend, &config.w.factor(backend, config.seed)?)
}

fn check_count(backend: &ManifoldBackend, count: usize) -> Result<usize> {
    if count > backend.basis_dim() {
        return Err(Error::Config(format!("count {count} exceeds the basis dimension {}", backend.basis_dim())));
    }
    Ok(count)
}

fn spectrum(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<CommandOutput> {
    let count = check_count(backend, config.count.unwrap_or(10.min(backend.basis_dim())))?;
    let spec = solve(&system_for(backend, config)?, count)?;
    let mut result = spec.to_json();
    result["kernel_dimension"] = json!(spec.kernel_dimension());
    result["negative_count"] = json!(spec.negative_count());
    result["basis_dimension"] = json!(backend.basis_dim());
    Ok(CommandOutput::ok(result, spectrum_csv(&spec)))
}

fn full_spectrum(system: &PaneitzSystem) -> Result<SpectrumResult> {
    solve(system, system.dim())
}

fn balance(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<CommandOutput> {
    let w = config.w.factor(backend, config.seed)?;
    let opts = BalanceOptions { tolerance: config.tolerance, ..Default::default() };
    let report = hersch_balance(backend, &w, &opts)?;
    let count = 6.min(backend.basis_dim());
    let before = solve(&assemble(backend, &w)?, count)?;
    let after = solve(&assemble(backend, &report.factor)?, count)?;
    let mut result = report.to_json();
    result["volume"] = json!(report.factor.volume(backend));
    result["eigenvalues_before"] = json!(before.eigenvalues());
    result["eigenvalues_after"] = json!(after.eigenvalues());
    let mut csv = String::from("iteration,residual,step_scale,dilation\n");
    for it in &report.iterations {
        csv.push_str(&format!("{},{:.16e},{:.16e},{:.16e}\n", it.iteration, it.residual, it.step_scale, it.dilation));
    }
    Ok(CommandOutput::ok(result, csv))
}

fn sample_directions(backend: &ManifoldBackend, system: &PaneitzSystem, seed: u64, n: usize) -> Vec<DVector<f64>> {
    let density = system.conformal_factor().volume_density();
    (0..n as u64)
        .map(|i| {
            FactorSpec::Preset("random:1".into())
                .direction(backend, seed.wrapping_mul(1000).wrapping_add(i), &density)
                .expect("random directions are well formed")
        })
        .collect()
}

fn extremal(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<CommandOutput> {
    let system = system_for(backend, config)?;
    let spec = full_spectrum(&system)?;
    let directions = sample_directions(backend, &system, config.seed, config.count.unwrap_or(20));
    let report = extremality_report(backend, &system, &spec, config.k, config.tolerance, &directions)?;
    let exit = if report.certificate.certified { 0 } else { EXIT_CERTIFICATION };
    let csv = matrix_csv(&report.certificate.gram);
    Ok(CommandOutput { result: serde_json::to_value(&report).expect("report serializes"), csv, exit })
}

fn maximize(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<CommandOutput> {
    let w = config.w.factor(backend, config.seed)?;
    let opts = AscentOptions { steps: config.steps, step_size: config.step_size, ..Default::default() };
    let r = maximize_lambda_k(backend, config.k, &w, &opts)?;
    let last = r.trajectory.last().expect("trajectory starts with the initial iterate");
    let result = json!({
        "status": r.status,
        "target_volume": r.target_volume,
        "initial_lambda_k": r.trajectory[0].lambda_k,
        "final_lambda_k": last.lambda_k,
        "final_normalized": last.normalized,
        "w_best": r.w_best.coeffs().map(|c| c.as_slice().to_vec()),
        "trajectory": r.trajectory,
    });
    Ok(CommandOutput::ok(result, trajectory_csv(&r.trajectory)))
}

fn derivative(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<CommandOutput> {
    let spec_dir = config.direction.as_ref().ok_or_else(|| Error::Config("derivative needs --direction".into()))?;
    let system = system_for(backend, config)?;
    let spec = full_spectrum(&system)?;
    let alpha = spec_dir.direction(backend, config.seed, &system.conformal_factor().volume_density())?;
    let report = one_sided_derivatives(backend, &system, &spec, config.k, &alpha)?;
    let mut csv = String::from("branch,derivative\n");
    for (i, d) in report.branch_derivatives.iter().enumerate() {
        csv.push_str(&format!("{},{:.16e}\n", i + 1, d));
    }
    Ok(CommandOutput::ok(serde_json::to_value(&report).expect("report serializes"), csv))
}

struct Check {
    name: &'static str,
    value: Option<f64>,
    tolerance: f64,
    note: Option<String>,
}

impl Check {
    fn measured(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self { name, value: Some(value), tolerance, note: None }
    }

    fn skipped(name: &'static str, why: &str) -> Self {
        Self { name, value: None, tolerance: 0.0, note: Some(why.into()) }
    }

    fn passed(&self) -> Option<bool> {
        self.value.map(|v| v <= self.tolerance)
    }
}

/// Random factors with sup-norm in `[0.2, 1]`, normalized to the base volume.
fn random_factor(backend: &ManifoldBackend, rng: &mut ChaCha8Rng) -> Result<ConformalFactor> {
    let c = DVector::from_fn(backend.basis_dim(), |a, _| {
        if (1..=2).contains(&backend.degrees()[a]) {
            rng.gen_range(-1.0..1.0)
        } else {
            0.0
        }
    });
    let c = &c * (rng.gen_range(0.2..1.0) / backend.evaluate(&c).amax());
    Ok(normalize_volume(backend, &ConformalFactor::from_coeffs(backend, c)?, backend.volume()))
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

fn verify(backend: &ManifoldBackend, config: &ExperimentConfig) -> Result<CommandOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut checks = Vec::new();
    let zero = ConformalFactor::zero(backend);
    let base_system = assemble(backend, &zero)?;
    let count = backend.basis_dim();
    let base = solve(&base_system, count)?;

    let k = base_system.energy();
    let symbol = backend.paneitz_symbol();
    let diag_err = (0..count).map(|a| (k[(a, a)] - symbol[a]).abs() / symbol[a].abs().max(1.0)).fold(0.0, f64::max);
    let off = k.clone() - nalgebra::DMatrix::from_diagonal(&k.diagonal());
    checks.push(Check::measured("energy_matches_symbol", diag_err.max(off.amax() / symbol.iter().fold(1.0f64, |m, v| m.max(v.abs()))), 1e-9));

    let c = 1.7;
    let scaled = solve(&base_system.scaled_metric(c), count)?;
    let expected: Vec<f64> = base.eigenvalues().iter().map(|l| l / (c * c)).collect();
    checks.push(Check::measured("constant_scaling", max_rel(scaled.eigenvalues(), &expected), 1e-9));

    let w = random_factor(backend, &mut rng)?;
    let s0 = solve(&assemble(backend, &w)?, count)?;
    let shift = 0.3;
    let s1 = solve(&assemble(backend, &w.shifted(backend, shift))?, count)?;
    let expected: Vec<f64> = s0.eigenvalues().iter().map(|l| l * (-4.0 * shift).exp()).collect();
    checks.push(Check::measured("conformal_shift_covariance", max_rel(s1.eigenvalues(), &expected), 1e-9));

    let mut mismatches = 0.0;
    for _ in 0..5 {
        let s = solve(&assemble(backend, &random_factor(backend, &mut rng)?)?, count)?;
        if s.kernel_dimension() != base.kernel_dimension() || s.negative_count() != base.negative_count() {
            mismatches += 1.0;
        }
    }
    checks.push(Check::measured("kernel_and_negative_count_invariance", mismatches, 0.0));

    if backend.is_sphere() && backend.max_degree() >= 2 {
        let e = |i: usize| {
            let mut v = DVector::zeros(backend.basis_dim());
            v[i] = 1.0;
            v
        };
        let a = leibniz_residual(backend, &e(1), &e(2))?.residual;
        let b = leibniz_residual(backend, &e(1), &e(1))?.residual;
        let scale = backend.paneitz_symbol()[6].abs().max(1.0);
        checks.push(Check::measured("leibniz_identity", a.max(b) / scale, 1e-9));
    } else {
        checks.push(Check::skipped("leibniz_identity", "runs on the sphere backend with max degree ≥ 2"));
    }

    if backend.has_hessians() {
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let c = DVector::from_fn(backend.basis_dim(), |a, _| if a > 0 { rng.gen_range(-1.0..1.0) } else { 0.0 });
            let c = &c * (0.5 / backend.evaluate(&c).amax());
            let w = ConformalFactor::from_coeffs(backend, c)?;
            let curv = conformal_curvature_torus(backend, &w)?;
            worst = worst.max((energy_from_curvature(backend, &curv) - energy_matrix(backend)).amax());
        }
        let scale = symbol.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        checks.push(Check::measured("energy_from_conformal_curvature", worst / scale, 1e-9));
    } else {
        checks.push(Check::skipped("energy_from_conformal_curvature", "needs coordinate Hessians (torus backend)"));
    }

    let map = match backend.kind() {
        BackendKind::Sphere4 { radius } if (*radius - 1.0).abs() < 1e-14 => {
            let comps = (0..5)
                .map(|i| {
                    let mut v = DVector::zeros(backend.basis_dim());
                    v[1 + i] = (backend.volume() / 5.0).sqrt();
                    v
                })
                .collect();
            Some(comps)
        }
        BackendKind::Torus4 { periods } => {
            let f = |g: fn(f64) -> f64| {
                let v = DVector::from_iterator(backend.num_nodes(), backend.nodes().iter().map(|x| g(2.0 * PI * x[0] / periods[0])));
                backend.project(&v)
            };
            Some(vec![f(f64::cos), f(f64::sin)])
        }
        _ => None,
    };
    match map {
        Some(comps) => {
            let map = SphereValuedMap::new(backend, comps)?;
            let scale = symbol.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            checks.push(Check::measured("paneitz_map_residual", paneitz_map_residual(backend, &map)? / scale, 1e-9));
        }
        None => checks.push(Check::skipped("paneitz_map_residual", "needs the unit sphere or a torus")),
    }

    let all_passed = checks.iter().all(|c| c.passed() != Some(false));
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| json!({"check": c.name, "value": c.value, "tolerance": c.value.map(|_| c.tolerance), "passed": c.passed(), "note": c.note}))
        .collect();
    let mut csv = String::from("check,value,tolerance,passed\n");
    for c in &checks {
        let v = c.value.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let (tol, p) = match c.passed() {
            Some(p) => (format!("{:e}", c.tolerance), p.to_string()),
            None => (String::new(), "skipped".to_string()),
        };
        csv.push_str(&format!("{},{},{},{}\n", c.name, v, tol, p));
    }
    Ok(CommandOutput {
        result: json!({"all_passed": all_passed, "checks": rows}),
        csv,
        exit: if all_passed { 0 } else { EXIT_CERTIFICATION },
    })
}
