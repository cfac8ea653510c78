//! Plot-ready CSV text. Floats are written with 17 significant digits so
//! values round-trip exactly.

use nalgebra::DMatrix;

use crate::eigen::SpectrumResult;
use crate::extremal::AscentStep;

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per matrix row, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| float(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `index,eigenvalue,cluster,residual_norm` with 1-based indices.
pub fn spectrum_csv(spectrum: &SpectrumResult) -> String {
    let mut out = String::from("index,eigenvalue,cluster,residual_norm\n");
    for (i, l) in spectrum.eigenvalues().iter().enumerate() {
        let cluster = spectrum.clustering().clusters.iter().position(|c| c.contains(i + 1)).expect("every index is clustered") + 1;
        out.push_str(&format!("{},{},{},{}\n", i + 1, float(*l), cluster, float(spectrum.residual_norms()[i])));
    }
    out
}

/// `step,lambda_k,normalized,step_size,direction_id,accepted`; an empty
/// direction id means no direction was tried.
pub fn trajectory_csv(steps: &[AscentStep]) -> String {
    let mut out = String::from("step,lambda_k,normalized,step_size,direction_id,accepted\n");
    for s in steps {
        let dir = s.direction_id.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.step,
            float(s.lambda_k),
            float(s.normalized),
            float(s.step_size),
            dir,
            s.accepted
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve;
    use crate::geometry::{build_sphere, ConformalFactor};
    use crate::operator::assemble;

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -2.5e-300, std::f64::consts::PI, 0.0]);
        let text = matrix_csv(&m);
        let parsed: Vec<f64> = text.lines().flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap())).collect();
        assert_eq!(parsed, vec![m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
    }

    #[test]
    fn spectrum_rows() {
        let s = build_sphere(1.0, 2).unwrap();
        let spec = solve(&assemble(&s, &ConformalFactor::zero(&s)).unwrap(), 7).unwrap();
        let text = spectrum_csv(&spec);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        let lambda2: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert!((lambda2 - 24.0).abs() < 1e-9);
        assert_eq!(lines[6].split(',').nth(2), Some("2"));
        assert_eq!(lines[7].split(',').nth(2), Some("3"));
    }

    #[test]
    fn trajectory_rows() {
        let steps = vec![
            AscentStep { step: 0, lambda_k: 23.0, normalized: 23.0, step_size: 0.1, direction_id: None, accepted: true },
            AscentStep { step: 1, lambda_k: 23.5, normalized: 23.5, step_size: 0.1, direction_id: Some(3), accepted: true },
        ];
        let text = trajectory_csv(&steps);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1].split(',').nth(4), Some(""));
        assert_eq!(lines[2].split(',').nth(4), Some("3"));
    }
}
