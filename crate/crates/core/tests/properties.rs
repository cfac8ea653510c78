use nalgebra::DVector;
use paneitz_core::eigen::{cluster, solve};
use paneitz_core::geometry::build_sphere;
use paneitz_core::operator::assemble;
use paneitz_core::ConformalFactor;
use proptest::prelude::*;

proptest! {
    #[test]
    fn clusters_partition_sorted_input(mut values in prop::collection::vec(-50.0f64..50.0, 0..40), tol in 1e-9f64..1e-2) {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let c = cluster(&values, tol);
        let mut next = 1;
        for cl in &c.clusters {
            prop_assert_eq!(cl.first, next);
            prop_assert!(cl.last >= cl.first);
            for i in cl.first..cl.last {
                let scale = values[i - 1].abs().max(1.0);
                prop_assert!(values[i] - values[i - 1] <= tol * scale);
            }
            next = cl.last + 1;
        }
        prop_assert_eq!(next, values.len() + 1);
        prop_assert_eq!(c.sizes().iter().sum::<usize>(), values.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sphere_spectrum_invariants(coeffs in prop::collection::vec(-0.3f64..0.3, 20)) {
        let s = build_sphere(1.0, 2).unwrap();
        let mut c = DVector::from_vec(coeffs);
        c[0] = 0.0;
        let w = ConformalFactor::from_coeffs(&s, c).unwrap();
        let sys = assemble(&s, &w).unwrap();
        let spec = solve(&sys, sys.dim()).unwrap();
        let eigs = spec.eigenvalues();
        // Constants span the kernel and the operator is non-negative on S⁴.
        prop_assert!(eigs[0].abs() < 1e-8);
        prop_assert!(eigs[1] > 1e-6);
        prop_assert!(eigs.windows(2).all(|p| p[0] <= p[1]));
        let v = spec.eigenvectors();
        let gram = v.transpose() * sys.mass() * v;
        prop_assert!((gram - nalgebra::DMatrix::identity(v.ncols(), v.ncols())).amax() < 1e-9);
        prop_assert!(spec.residual_norms().iter().all(|r| *r < 1e-8));
    }
}
