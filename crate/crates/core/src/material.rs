//! Simo-Ciarlet neo-Hookean constitutive law in plane strain, and Q4
//! kinematics at a quadrature point.
//!
//! Tensors are flattened row-major: index `2i + J` holds component `(i, J)`,
//! so a flattened displacement gradient reads
//! `(∂uₓ/∂X, ∂uₓ/∂Y, ∂u_y/∂X, ∂u_y/∂Y)`.
//!
//! The stored energy is
//!
//! ```text
//! W(F) = μ/2 (tr(FᵀF) − 2 − 2 ln J) + λ/4 (J² − 1 − 2 ln J)
//! ```
//!
//! with first Piola-Kirchhoff stress `P = μ (F − F⁻ᵀ) + λ/2 (J² − 1) F⁻ᵀ`.

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maps the 8 element displacements to the flattened displacement gradient.
pub type GradientMatrix = SMatrix<f64, 4, 8>;
pub type ElementVector = SVector<f64, 8>;
pub type ElementMatrix = SMatrix<f64, 8, 8>;

const GP: f64 = 0.577_350_269_189_625_8;

/// 2×2 Gauss rule on the reference square; all weights are 1.
pub const GAUSS_POINTS: [(f64, f64); 4] = [(-GP, -GP), (GP, -GP), (GP, GP), (-GP, GP)];

const REF_NODES: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub young: f64,
    pub poisson: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl MaterialParams {
    /// Plane-strain Lamé constants from Young's modulus and Poisson's ratio.
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        if !(young > 0.0 && young.is_finite()) {
            return Err(Error::invalid(format!("Young's modulus must be positive, got {young}")));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::invalid(format!("Poisson's ratio must lie in (-1, 0.5), got {poisson}")));
        }
        let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = young / (2.0 * (1.0 + poisson));
        Ok(MaterialParams { young, poisson, lambda, mu })
    }
}

/// Shape-function gradient matrix `G` and the reference-to-physical Jacobian
/// determinant at `(xi, eta)` for a bilinear quadrilateral with corners
/// `nodes` listed counter-clockwise.
pub fn shape_gradients(nodes: &[[f64; 2]; 4], xi: f64, eta: f64) -> Result<(GradientMatrix, f64)> {
    let mut dxi = [0.0; 4];
    let mut deta = [0.0; 4];
    for (a, &(xa, ea)) in REF_NODES.iter().enumerate() {
        dxi[a] = 0.25 * xa * (1.0 + ea * eta);
        deta[a] = 0.25 * ea * (1.0 + xa * xi);
    }
    let mut jac = Matrix2::<f64>::zeros();
    for a in 0..4 {
        jac[(0, 0)] += dxi[a] * nodes[a][0];
        jac[(0, 1)] += dxi[a] * nodes[a][1];
        jac[(1, 0)] += deta[a] * nodes[a][0];
        jac[(1, 1)] += deta[a] * nodes[a][1];
    }
    let det = jac.determinant();
    let scale = jac.abs().max().powi(2);
    if !(det > 1e-14 * scale) {
        return Err(Error::SingularGeometry { det });
    }
    let inv = Matrix2::new(jac[(1, 1)], -jac[(0, 1)], -jac[(1, 0)], jac[(0, 0)]) / det;
    let mut g = GradientMatrix::zeros();
    for a in 0..4 {
        let dx = inv[(0, 0)] * dxi[a] + inv[(0, 1)] * deta[a];
        let dy = inv[(1, 0)] * dxi[a] + inv[(1, 1)] * deta[a];
        g[(0, 2 * a)] = dx;
        g[(1, 2 * a)] = dy;
        g[(2, 2 * a + 1)] = dx;
        g[(3, 2 * a + 1)] = dy;
    }
    Ok((g, det))
}

/// `F = I + ∇u` and `J = det F`. Fails with [`Error::NonPositiveJacobian`]
/// when `J ≤ 0`.
pub fn deformation_gradient(g: &GradientMatrix, u_e: &ElementVector) -> Result<(Matrix2<f64>, f64)> {
    let grad = g * u_e;
    let f = Matrix2::new(1.0 + grad[0], grad[1], grad[2], 1.0 + grad[3]);
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::NonPositiveJacobian { j });
    }
    Ok((f, j))
}

fn inverse_and_det(f: &Matrix2<f64>) -> Result<(Matrix2<f64>, f64)> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(Error::NonPositiveJacobian { j });
    }
    let inv = Matrix2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / j;
    Ok((inv, j))
}

pub fn strain_energy(f: &Matrix2<f64>, params: &MaterialParams) -> Result<f64> {
    let (_, j) = inverse_and_det(f)?;
    let ln_j = j.ln();
    let tr_c = f.norm_squared();
    Ok(0.5 * params.mu * (tr_c - 2.0 - 2.0 * ln_j) + 0.25 * params.lambda * (j * j - 1.0 - 2.0 * ln_j))
}

/// Flattened first Piola-Kirchhoff stress `∂W/∂F`.
pub fn pk1_stress(f: &Matrix2<f64>, params: &MaterialParams) -> Result<Vector4<f64>> {
    let (inv, j) = inverse_and_det(f)?;
    let c = 0.5 * params.lambda * (j * j - 1.0) - params.mu;
    let mut p = Vector4::zeros();
    for i in 0..2 {
        for jj in 0..2 {
            // F⁻ᵀ(i, J) = F⁻¹(J, i)
            p[2 * i + jj] = params.mu * f[(i, jj)] + c * inv[(jj, i)];
        }
    }
    Ok(p)
}

/// Flattened tangent modulus `∂P/∂F`, a symmetric 4×4 matrix.
pub fn tangent_modulus(f: &Matrix2<f64>, params: &MaterialParams) -> Result<Matrix4<f64>> {
    let (inv, j) = inverse_and_det(f)?;
    let c1 = params.mu - 0.5 * params.lambda * (j * j - 1.0);
    let c2 = params.lambda * j * j;
    let mut d = Matrix4::zeros();
    for i in 0..2 {
        for jj in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut v = c1 * inv[(jj, k)] * inv[(l, i)] + c2 * inv[(jj, i)] * inv[(l, k)];
                    if i == k && jj == l {
                        v += params.mu;
                    }
                    d[(2 * i + jj, 2 * k + l)] = v;
                }
            }
        }
    }
    Ok(d)
}

/// The tangent modulus at `F = I`: the plane-strain elasticity tensor acting
/// on the flattened displacement gradient.
pub fn small_strain_modulus(params: &MaterialParams) -> Matrix4<f64> {
    let (l, m) = (params.lambda, params.mu);
    Matrix4::new(
        l + 2.0 * m, 0.0, 0.0, l, //
        0.0, m, m, 0.0, //
        0.0, m, m, 0.0, //
        l, 0.0, 0.0, l + 2.0 * m,
    )
}
