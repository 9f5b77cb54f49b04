//! Discrete compact operator `K` on the velocity nodes.
//!
//! Off-diagonal entries are `k(v_i, v_j) w_j`. The diagonal carries the
//! singular part: `K_ii = ∫k(v_i,u)du − Σ_{j≠i} k(v_i,v_j) w_j`, so constants
//! are integrated exactly up to the row integral. A symmetric rank-ten
//! correction in `W^{1/2}` coordinates then enforces `K ψ = ν ψ` for the five
//! collision invariants `ψ ∈ √μ·{1, v, |v|²}`.

use nalgebra::{DMatrix, DVector};

use crate::collision::{grad_kernel, kernel_row_integral, KernelParams, SingularRule};
use crate::quadrature::VelocityQuadrature;
use crate::reduce::par_map;

#[derive(Debug, Clone)]
pub struct CollisionMatrix {
    /// `K` acting on nodal values.
    pub k: DMatrix<f64>,
    pub nu: Vec<f64>,
    /// `max |Kψ − νψ|` over the normalized invariants before correction.
    pub invariant_defect: f64,
}

impl CollisionMatrix {
    pub fn new(q: &VelocityQuadrature, nu: &[f64], params: &KernelParams, singular: &SingularRule) -> Self {
        let n = q.len();
        let rows: Vec<Vec<f64>> = par_map(n, |i| {
            let vi = &q.nodes[i];
            let mut row = vec![0.0; n];
            let mut off = 0.0;
            for j in 0..n {
                if j != i {
                    let k = grad_kernel(vi, &q.nodes[j], params).unwrap_or(0.0);
                    row[j] = k;
                    off += k * q.weights[j];
                }
            }
            row[i] = kernel_row_integral(vi, params, singular) - off;
            row
        });
        // Symmetric form A = W^{1/2} K W^{-1/2}.
        let sw: Vec<f64> = q.weights.iter().map(|w| w.sqrt()).collect();
        let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { rows[i][i] } else { sw[i] * rows[i][j] * sw[j] });
        a = (&a + a.transpose()) * 0.5;

        let mut psi = DMatrix::zeros(n, 5);
        for (j, v) in q.nodes.iter().enumerate() {
            let s = crate::collision::sqrt_mu(v) * sw[j];
            let vals = [1.0, v.x, v.y, v.z, v.norm_squared()];
            for (c, val) in vals.iter().enumerate() {
                psi[(j, c)] = s * val;
            }
        }
        let qm = psi.qr().q();
        let nu_diag = DMatrix::from_diagonal(&DVector::from_column_slice(nu));
        let b = (&a - &nu_diag) * &qm;
        let invariant_defect = b.amax();
        let qtb = qm.transpose() * &b;
        let e = &b * qm.transpose() + &qm * b.transpose() - &qm * &qtb * qm.transpose();
        let a = a - e;

        let k = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * sw[j] / sw[i]);
        Self { k, nu: nu.to_vec(), invariant_defect }
    }

    pub fn n(&self) -> usize {
        self.nu.len()
    }

    /// `K f` for a field laid out as `x · n_v + v`.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let nv = self.n();
        let f = DMatrix::from_column_slice(nv, values.len() / nv, values);
        let kf = &self.k * f;
        kf.as_slice().to_vec()
    }

    /// Symmetric form `W^{1/2}(ν − K)W^{−1/2}` of the linearized operator `L`.
    pub fn symmetric_l(&self, weights: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { self.nu[i] } else { 0.0 };
            d - self.k[(i, j)] * weights[i].sqrt() / weights[j].sqrt()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{nu_exact, sqrt_mu};
    use nalgebra::SymmetricEigen;

    fn setup() -> (VelocityQuadrature, CollisionMatrix) {
        let q = VelocityQuadrature::new(8, 6, 10, 6.0);
        let nu: Vec<f64> = q.nodes.iter().map(nu_exact).collect();
        let m = CollisionMatrix::new(&q, &nu, &KernelParams::default(), &SingularRule::default());
        (q, m)
    }

    #[test]
    fn invariants_are_in_the_kernel_of_l() {
        let (q, m) = setup();
        for c in 0..5 {
            let psi: Vec<f64> = q
                .nodes
                .iter()
                .map(|v| sqrt_mu(v) * [1.0, v.x, v.y, v.z, v.norm_squared()][c])
                .collect();
            let kpsi = m.apply(&psi);
            for i in 0..q.len() {
                assert!((kpsi[i] - m.nu[i] * psi[i]).abs() < 1e-10 * m.nu[i], "invariant {c}");
            }
        }
        // The uncorrected defect is a quadrature error, not a modelling error.
        assert!(m.invariant_defect < 1.0, "defect {}", m.invariant_defect);
    }

    #[test]
    fn discrete_l_is_symmetric_nonnegative() {
        let (q, m) = setup();
        let l = m.symmetric_l(&q.weights);
        assert!((&l - l.transpose()).amax() < 1e-9 * l.amax());
        let eig = SymmetricEigen::new(l);
        let min = eig.eigenvalues.min();
        assert!(min > -1e-8 * eig.eigenvalues.max(), "min eigenvalue {min}");
    }
}
