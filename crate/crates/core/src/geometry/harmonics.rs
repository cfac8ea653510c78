//! Real spherical harmonics on S^{n-1} ⊂ ℝⁿ as homogeneous harmonic
//! polynomials, orthonormalized against a quadrature rule.

use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

/// All monomials in `vars` variables of total degree ≤ `max_degree`.
#[derive(Debug, Clone)]
pub struct MonomialSet {
    vars: usize,
    exponents: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl MonomialSet {
    pub fn new(vars: usize, max_degree: usize) -> Self {
        let mut exponents = Vec::new();
        for degree in 0..=max_degree {
            let mut current = vec![0u32; vars];
            push_exponents(&mut exponents, &mut current, 0, degree as u32);
        }
        let index = exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Self { vars, exponents, index }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self, m: usize) -> &[u32] {
        &self.exponents[m]
    }

    pub fn degree(&self, m: usize) -> usize {
        self.exponents[m].iter().sum::<u32>() as usize
    }

    pub fn lookup(&self, exps: &[u32]) -> Option<usize> {
        self.index.get(exps).copied()
    }

    /// Values and gradients of every monomial at `x`.
    pub fn evaluate(&self, x: &[f64], values: &mut [f64], gradients: &mut [Vec<f64>]) {
        let max_exp = self.exponents.iter().flatten().copied().max().unwrap_or(0) as usize;
        let powers: Vec<Vec<f64>> = x
            .iter()
            .map(|&xi| {
                let mut p = vec![1.0; max_exp + 1];
                for e in 1..=max_exp {
                    p[e] = p[e - 1] * xi;
                }
                p
            })
            .collect();
        for (m, exps) in self.exponents.iter().enumerate() {
            let mut v = 1.0;
            for (i, &e) in exps.iter().enumerate() {
                v *= powers[i][e as usize];
            }
            values[m] = v;
            for j in 0..self.vars {
                let ej = exps[j] as usize;
                gradients[j][m] = if ej == 0 {
                    0.0
                } else {
                    let mut g = ej as f64 * powers[j][ej - 1];
                    for (i, &e) in exps.iter().enumerate() {
                        if i != j {
                            g *= powers[i][e as usize];
                        }
                    }
                    g
                };
            }
        }
    }

    /// Value of the polynomial with monomial coefficients `p` at `x`.
    pub fn eval_polynomial(&self, p: &DVector<f64>, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (m, exps) in self.exponents.iter().enumerate() {
            let c = p[m];
            if c == 0.0 {
                continue;
            }
            let mut v = c;
            for (xi, &e) in x.iter().zip(exps) {
                v *= xi.powi(e as i32);
            }
            total += v;
        }
        total
    }

    /// Coefficients of `|x|² · p`, dropping terms beyond the set's degree.
    pub fn times_radius_squared(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        let mut shifted = vec![0u32; self.vars];
        for (m, &c) in p.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for i in 0..self.vars {
                shifted.copy_from_slice(&self.exponents[m]);
                shifted[i] += 2;
                if let Some(target) = self.lookup(&shifted) {
                    out[target] += c;
                }
            }
        }
        out
    }

    /// Coefficients of the Euclidean Laplacian `Σ ∂²p/∂x_i²`.
    pub fn euclidean_laplacian(&self, p: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        let mut lowered = vec![0u32; self.vars];
        for (m, &c) in p.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for i in 0..self.vars {
                let e = self.exponents[m][i];
                if e >= 2 {
                    lowered.copy_from_slice(&self.exponents[m]);
                    lowered[i] -= 2;
                    let target = self.lookup(&lowered).expect("lower monomial present");
                    out[target] += c * (e * (e - 1)) as f64;
                }
            }
        }
        out
    }
}

/// Exponent vectors of fixed total degree in descending lexicographic order,
/// so `x1` precedes `x2` and `x1²` precedes `x1 x2`.
fn push_exponents(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, var: usize, remaining: u32) {
    if var + 1 == current.len() {
        current[var] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        push_exponents(out, current, var + 1, remaining - e);
    }
    current[var] = 0;
}

/// Dimension of the space of degree-ℓ spherical harmonics on S^{n-1}.
pub fn harmonic_dimension(vars: usize, degree: usize) -> usize {
    let binom = |n: usize, k: usize| -> usize {
        if k > n {
            return 0;
        }
        let mut r = 1usize;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    };
    let homogeneous = |d: usize| binom(d + vars - 1, vars - 1);
    if degree < 2 {
        homogeneous(degree)
    } else {
        homogeneous(degree) - homogeneous(degree - 2)
    }
}

/// Orthonormal spherical harmonics on the unit sphere, stored as homogeneous
/// polynomial coefficient columns over a [`MonomialSet`].
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    monomials: MonomialSet,
    coeffs: DMatrix<f64>,
    degrees: Vec<usize>,
}

impl HarmonicBasis {
    /// Builds degrees `0..=max_degree` by Gram–Schmidt on restricted
    /// monomials, using the supplied unit-sphere quadrature as inner product.
    /// Lower-degree components are removed after homogenizing them with
    /// powers of `|x|²`, so every column stays a homogeneous polynomial.
    pub fn build(vars: usize, max_degree: usize, nodes: &[Vec<f64>], weights: &[f64]) -> Self {
        let monomials = MonomialSet::new(vars, max_degree);
        let table = monomial_table(&monomials, nodes);
        let w = DVector::from_column_slice(weights);

        let mut columns: Vec<DVector<f64>> = Vec::new();
        // lifts[b][j] = |x|^{2j} · columns[b]
        let mut lifts: Vec<Vec<DVector<f64>>> = Vec::new();
        let mut values: Vec<DVector<f64>> = Vec::new();
        let mut degrees = Vec::new();

        for degree in 0..=max_degree {
            let target = harmonic_dimension(vars, degree);
            let mut accepted = 0;
            for m in (0..monomials.len()).filter(|&m| monomials.degree(m) == degree) {
                if accepted == target {
                    break;
                }
                let mut c = DVector::zeros(monomials.len());
                c[m] = 1.0;
                let mut v = &table * &c;
                let initial = weighted_norm(&v, &w);
                for _pass in 0..2 {
                    for b in 0..columns.len() {
                        let gap = degree - degrees[b];
                        if gap % 2 == 1 {
                            continue;
                        }
                        let p = v.component_mul(&values[b]).dot(&w);
                        v.axpy(-p, &values[b], 1.0);
                        while lifts[b].len() <= gap / 2 {
                            let next = monomials.times_radius_squared(lifts[b].last().unwrap());
                            lifts[b].push(next);
                        }
                        c.axpy(-p, &lifts[b][gap / 2], 1.0);
                    }
                }
                let norm = weighted_norm(&v, &w);
                if norm > 1e-8 * initial {
                    c /= norm;
                    let v = &table * &c;
                    let renorm = weighted_norm(&v, &w);
                    c /= renorm;
                    values.push(&table * &c);
                    lifts.push(vec![c.clone()]);
                    columns.push(c);
                    degrees.push(degree);
                    accepted += 1;
                }
            }
            assert_eq!(accepted, target, "harmonic space of degree {degree} not spanned");
        }

        let mut coeffs = DMatrix::zeros(monomials.len(), columns.len());
        for (j, c) in columns.iter().enumerate() {
            coeffs.set_column(j, c);
        }
        Self { monomials, coeffs, degrees }
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn monomials(&self) -> &MonomialSet {
        &self.monomials
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Values, tangential gradients (ambient components) and Laplace–Beltrami
    /// values of every basis function at points of the unit sphere.
    pub fn tabulate(&self, nodes: &[Vec<f64>]) -> Tabulation {
        let vars = self.monomials.vars;
        let nm = self.monomials.len();
        let table = monomial_table(&self.monomials, nodes);
        let values = &table * &self.coeffs;

        let mut grad_tables: Vec<DMatrix<f64>> =
            (0..vars).map(|_| DMatrix::zeros(nodes.len(), nm)).collect();
        let mut vbuf = vec![0.0; nm];
        let mut gbuf = vec![vec![0.0; nm]; vars];
        for (q, x) in nodes.iter().enumerate() {
            self.monomials.evaluate(x, &mut vbuf, &mut gbuf);
            for (i, g) in gbuf.iter().enumerate() {
                for m in 0..nm {
                    grad_tables[i][(q, m)] = g[m];
                }
            }
        }
        let ambient: Vec<DMatrix<f64>> = grad_tables.iter().map(|t| t * &self.coeffs).collect();

        let mut radial = DMatrix::zeros(nodes.len(), self.len());
        for (q, x) in nodes.iter().enumerate() {
            for a in 0..self.len() {
                radial[(q, a)] = (0..vars).map(|i| x[i] * ambient[i][(q, a)]).sum::<f64>();
            }
        }
        let gradients: Vec<DMatrix<f64>> = (0..vars)
            .map(|i| {
                let mut g = ambient[i].clone();
                for (q, x) in nodes.iter().enumerate() {
                    for a in 0..self.len() {
                        g[(q, a)] -= radial[(q, a)] * x[i];
                    }
                }
                g
            })
            .collect();

        // Δ_S f = Δ_ℝ F − ∂²_r F − (n−1) ∂_r F on the unit sphere; for a
        // homogeneous F of degree d, ∂²_r F = d(d−1) F.
        let mut euclid = DMatrix::zeros(nm, self.len());
        for a in 0..self.len() {
            euclid.set_column(a, &self.monomials.euclidean_laplacian(&self.coeffs.column(a).into_owned()));
        }
        let euclid_values = &table * &euclid;
        let mut laplacians = DMatrix::zeros(nodes.len(), self.len());
        for a in 0..self.len() {
            let d = self.degrees[a] as f64;
            for q in 0..nodes.len() {
                laplacians[(q, a)] = euclid_values[(q, a)]
                    - d * (d - 1.0) * values[(q, a)]
                    - (vars as f64 - 1.0) * radial[(q, a)];
            }
        }
        Tabulation { values, gradients, laplacians }
    }

    /// Basis values at a single point of the unit sphere.
    pub fn values_at(&self, x: &[f64]) -> DVector<f64> {
        let nm = self.monomials.len();
        let mut vbuf = vec![0.0; nm];
        let mut gbuf = vec![vec![0.0; nm]; self.monomials.vars];
        self.monomials.evaluate(x, &mut vbuf, &mut gbuf);
        self.coeffs.tr_mul(&DVector::from_vec(vbuf))
    }

    /// Monomial coefficients of the expansion `Σ_a c_a Y_a`.
    pub fn polynomial_of(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.coeffs * coeffs
    }

    /// Largest coefficient of the Euclidean Laplacian over all basis
    /// polynomials; zero up to roundoff for genuine harmonics.
    pub fn harmonicity_defect(&self) -> f64 {
        (0..self.len())
            .map(|a| self.monomials.euclidean_laplacian(&self.coeffs.column(a).into_owned()).amax())
            .fold(0.0, f64::max)
    }
}

/// Node data of a basis: rows are nodes, columns basis functions.
pub struct Tabulation {
    pub values: DMatrix<f64>,
    pub gradients: Vec<DMatrix<f64>>,
    pub laplacians: DMatrix<f64>,
}

fn monomial_table(monomials: &MonomialSet, nodes: &[Vec<f64>]) -> DMatrix<f64> {
    let nm = monomials.len();
    let mut table = DMatrix::zeros(nodes.len(), nm);
    let mut vbuf = vec![0.0; nm];
    let mut gbuf = vec![vec![0.0; nm]; monomials.vars];
    for (q, x) in nodes.iter().enumerate() {
        monomials.evaluate(x, &mut vbuf, &mut gbuf);
        for m in 0..nm {
            table[(q, m)] = vbuf[m];
        }
    }
    table
}

fn weighted_norm(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter().zip(w.iter()).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::super::quadrature::unit_sphere_rule;
    use super::*;

    #[test]
    fn dimension_counts() {
        let dims: Vec<usize> = (0..5).map(|l| harmonic_dimension(5, l)).collect();
        assert_eq!(dims, vec![1, 5, 14, 30, 55]);
        for l in 0..6 {
            assert_eq!(harmonic_dimension(5, l), (2 * l + 3) * (l + 2) * (l + 1) / 6);
            assert_eq!(harmonic_dimension(3, l), 2 * l + 1);
        }
    }

    #[test]
    fn monomial_order_puts_x1_first() {
        let set = MonomialSet::new(5, 2);
        let deg2: Vec<&[u32]> = (0..set.len()).filter(|&m| set.degree(m) == 2).map(|m| set.exponents(m)).collect();
        assert_eq!(deg2[0], &[2, 0, 0, 0, 0]);
        assert_eq!(deg2[1], &[1, 1, 0, 0, 0]);
    }

    #[test]
    fn basis_is_harmonic_and_orthonormal() {
        let (nodes, weights) = unit_sphere_rule(5, 12);
        let basis = HarmonicBasis::build(5, 2, &nodes, &weights);
        assert_eq!(basis.len(), 20);
        assert!(basis.harmonicity_defect() < 1e-10);
        let tab = basis.tabulate(&nodes);
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&weights));
        let gram = tab.values.transpose() * &w * &tab.values;
        assert!((gram - DMatrix::identity(20, 20)).amax() < 1e-12);
    }
}
