//! SIMP-penalized element and global tangent stiffness, internal forces,
//! residual, and the residual's density derivative.
//!
//! The residual over free DOFs is `r(u, ρ) = Σ ρₑᵖ ∫ Gᵀσ + K_s u − f`, where
//! `K_s` holds the linear port springs. Element work runs in parallel and is
//! scattered serially in element order, so results do not depend on the
//! thread count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::material::{
    deformation_gradient, pk1_stress, shape_gradients, small_strain_modulus, strain_energy, tangent_modulus,
    ElementMatrix, ElementVector, GradientMatrix, MaterialParams, GAUSS_POINTS,
};
use crate::mesh::{LoadCase, Mesh};
use crate::sparse::{Ordering, SparseSym, SymPattern, SymbolicLdlt};
use crate::{Error, Result};

/// Per-element densities with their SIMP parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub rho: Vec<f64>,
    pub penalty: f64,
    pub rho_min: f64,
    pub volumes: Vec<f64>,
}

impl DensityField {
    pub fn new(rho: Vec<f64>, penalty: f64, rho_min: f64, volumes: Vec<f64>) -> Result<Self> {
        if rho.len() != volumes.len() {
            return Err(Error::invalid(format!("{} densities for {} elements", rho.len(), volumes.len())));
        }
        if !(penalty >= 1.0) {
            return Err(Error::invalid(format!("SIMP penalty must be at least 1, got {penalty}")));
        }
        if !(rho_min > 0.0 && rho_min <= 1.0) {
            return Err(Error::invalid(format!("rho_min must lie in (0, 1], got {rho_min}")));
        }
        if let Some((e, &r)) = rho.iter().enumerate().find(|(_, &r)| !(r >= rho_min && r <= 1.0)) {
            return Err(Error::invalid(format!("density {r} of element {e} outside [{rho_min}, 1]")));
        }
        if volumes.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("element volumes must be positive"));
        }
        Ok(DensityField { rho, penalty, rho_min, volumes })
    }

    pub fn uniform(mesh: &Mesh, value: f64, penalty: f64, rho_min: f64) -> Result<Self> {
        Self::new(vec![value; mesh.n_elements()], penalty, rho_min, mesh.element_volumes())
    }

    /// `Σ vᵢ ρᵢ`.
    pub fn volume(&self) -> f64 {
        self.rho.iter().zip(&self.volumes).map(|(r, v)| r * v).sum()
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// `ρₑᵖ`.
    pub fn stiffness_factor(&self, e: usize) -> f64 {
        self.rho[e].powf(self.penalty)
    }

    /// `p ρₑᵖ⁻¹`.
    pub fn stiffness_factor_derivative(&self, e: usize) -> f64 {
        self.penalty * self.rho[e].powf(self.penalty - 1.0)
    }
}

/// Large-deformation neo-Hookean model, or the small-strain linear model
/// whose stiffness depends on `ρ` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Kinematics {
    #[default]
    Nonlinear,
    Linear,
}

/// Global tangent and residual over free DOFs.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub k: SparseSym,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct GaussData {
    g: GradientMatrix,
    weight: f64,
}

/// Caches geometry, the sparsity pattern and scatter maps of one mesh and
/// load case.
#[derive(Debug)]
pub struct Assembler {
    mesh: Arc<Mesh>,
    params: MaterialParams,
    kinematics: Kinematics,
    gauss: Vec<[GaussData; 4]>,
    k_linear: Vec<ElementMatrix>,
    elem_free: Vec<[Option<usize>; 8]>,
    /// Per element, value positions of the lower-triangle pairs `(a, b)`
    /// with `a, b` free, listed as `(a, b, position)`.
    scatter: Vec<Vec<(u8, u8, usize)>>,
    pattern: Arc<SymPattern>,
    symbolic: Arc<SymbolicLdlt>,
    springs: Vec<(usize, f64)>,
    spring_pos: Vec<usize>,
    force: Vec<f64>,
    output: Vec<f64>,
}

impl Assembler {
    pub fn new(mesh: Arc<Mesh>, params: MaterialParams, loads: &LoadCase, kinematics: Kinematics) -> Result<Self> {
        let n = mesh.n_free();
        if n == 0 {
            return Err(Error::invalid("mesh has no free degrees of freedom"));
        }
        let ne = mesh.n_elements();
        let mut gauss = Vec::with_capacity(ne);
        let mut k_linear = Vec::with_capacity(ne);
        let d0 = small_strain_modulus(&params);
        // Elements of a regular grid share one geometry; compute it once per
        // distinct shape.
        let mut cache: Option<([[f64; 2]; 4], [GaussData; 4], ElementMatrix)> = None;
        for e in 0..ne {
            let c = mesh.element_coords(e);
            let rel = c.map(|p| [p[0] - c[0][0], p[1] - c[0][1]]);
            if let Some((shape, g, k)) = &cache {
                if *shape == rel {
                    gauss.push(*g);
                    k_linear.push(*k);
                    continue;
                }
            }
            let mut gd = [GaussData { g: GradientMatrix::zeros(), weight: 0.0 }; 4];
            let mut k = ElementMatrix::zeros();
            for (q, &(xi, eta)) in GAUSS_POINTS.iter().enumerate() {
                let (g, det) = shape_gradients(&rel, xi, eta).map_err(|err| err.in_element(e))?;
                let weight = det * mesh.thickness();
                k += g.transpose() * d0 * g * weight;
                gd[q] = GaussData { g, weight };
            }
            gauss.push(gd);
            k_linear.push(k);
            cache = Some((rel, gd, k));
        }

        let elem_free: Vec<[Option<usize>; 8]> =
            (0..ne).map(|e| mesh.element_dofs(e).map(|d| mesh.free_index(d))).collect();
        let coords = elem_free.iter().flat_map(|fr| {
            let fr = *fr;
            (0..8).flat_map(move |a| (0..=a).filter_map(move |b| Some((fr[a]?, fr[b]?))))
        });
        let mut block_starts = vec![0];
        for k in 1..n {
            let dofs = mesh.free_dofs();
            if dofs[k] / 2 != dofs[k - 1] / 2 {
                block_starts.push(k);
            }
        }
        block_starts.push(n);
        let pattern = Arc::new(SymPattern::from_coords(n, coords, Some(block_starts))?);
        let scatter = elem_free
            .iter()
            .map(|fr| {
                let mut s = Vec::new();
                for a in 0..8 {
                    for b in 0..=a {
                        if let (Some(i), Some(j)) = (fr[a], fr[b]) {
                            s.push((a as u8, b as u8, pattern.find(i, j).expect("entry in pattern")));
                        }
                    }
                }
                s
            })
            .collect();
        let symbolic = SymbolicLdlt::analyze(Arc::clone(&pattern), Ordering::Amd)?;
        let springs = loads.spring_diagonal(&mesh);
        let spring_pos = springs.iter().map(|&(i, _)| pattern.find(i, i).expect("diagonal")).collect();
        let force = loads.force_vector(&mesh);
        let output = loads.output_vector(&mesh);
        Ok(Assembler {
            mesh,
            params,
            kinematics,
            gauss,
            k_linear,
            elem_free,
            scatter,
            pattern,
            symbolic,
            springs,
            spring_pos,
            force,
            output,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn kinematics(&self) -> Kinematics {
        self.kinematics
    }

    pub fn pattern(&self) -> &Arc<SymPattern> {
        &self.pattern
    }

    /// Fill-reducing symbolic analysis shared by every tangent of this mesh.
    pub fn symbolic(&self) -> &Arc<SymbolicLdlt> {
        &self.symbolic
    }

    pub fn n_free(&self) -> usize {
        self.pattern.dim()
    }

    /// External load `f` over free DOFs.
    pub fn force(&self) -> &[f64] {
        &self.force
    }

    /// Objective selector `l` over free DOFs.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn springs(&self) -> &[(usize, f64)] {
        &self.springs
    }

    /// Element displacement vector gathered from reduced `u`.
    pub fn element_displacements(&self, e: usize, u: &[f64]) -> ElementVector {
        ElementVector::from_fn(|a, _| self.elem_free[e][a].map_or(0.0, |i| u[i]))
    }

    /// Unpenalized element internal force `∫ Gᵀσ`.
    pub fn element_force_unit(&self, e: usize, u_e: &ElementVector) -> Result<ElementVector> {
        match self.kinematics {
            Kinematics::Linear => Ok(self.k_linear[e] * u_e),
            Kinematics::Nonlinear => {
                let mut f = ElementVector::zeros();
                for gd in &self.gauss[e] {
                    let (fg, _) = deformation_gradient(&gd.g, u_e)?;
                    let s = pk1_stress(&fg, &self.params)?;
                    f += gd.g.transpose() * s * gd.weight;
                }
                Ok(f)
            }
        }
    }

    fn element_unit(&self, e: usize, u_e: &ElementVector, with_k: bool) -> Result<(ElementVector, ElementMatrix)> {
        match self.kinematics {
            Kinematics::Linear => Ok((self.k_linear[e] * u_e, self.k_linear[e])),
            Kinematics::Nonlinear => {
                let mut f = ElementVector::zeros();
                let mut k = ElementMatrix::zeros();
                for gd in &self.gauss[e] {
                    let (fg, _) = deformation_gradient(&gd.g, u_e)?;
                    let s = pk1_stress(&fg, &self.params)?;
                    let gt = gd.g.transpose();
                    f += gt * s * gd.weight;
                    if with_k {
                        let d = tangent_modulus(&fg, &self.params)?;
                        k += gt * (d * gd.g) * gd.weight;
                    }
                }
                Ok((f, k))
            }
        }
    }

    /// `K_e = ρₑᵖ ∫ Gᵀ D G`.
    pub fn element_tangent(&self, rho_e: f64, penalty: f64, u_e: &ElementVector, e: usize) -> Result<ElementMatrix> {
        let (_, k) = self.element_unit(e, u_e, true).map_err(|err| err.in_element(e))?;
        Ok(k * rho_e.powf(penalty))
    }

    /// `f_e = ρₑᵖ ∫ Gᵀ σ`.
    pub fn element_internal_force(&self, rho_e: f64, penalty: f64, u_e: &ElementVector, e: usize) -> Result<ElementVector> {
        Ok(self.element_force_unit(e, u_e).map_err(|err| err.in_element(e))? * rho_e.powf(penalty))
    }

    /// Unpenalized element strain energy `∫ W` (or `½ uᵀK u` in linear mode).
    pub fn element_energy_unit(&self, e: usize, u_e: &ElementVector) -> Result<f64> {
        match self.kinematics {
            Kinematics::Linear => Ok(0.5 * u_e.dot(&(self.k_linear[e] * u_e))),
            Kinematics::Nonlinear => {
                let mut w = 0.0;
                for gd in &self.gauss[e] {
                    let (fg, _) = deformation_gradient(&gd.g, u_e)?;
                    w += strain_energy(&fg, &self.params)? * gd.weight;
                }
                Ok(w)
            }
        }
    }

    /// Total potential `Π(u) = Σ ρᵖ∫W − fᵀu + ½ uᵀK_s u`.
    pub fn potential_energy(&self, density: &DensityField, u: &[f64]) -> Result<f64> {
        self.check(density, u)?;
        let parts: Vec<Result<f64>> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let u_e = self.element_displacements(e, u);
                Ok(density.stiffness_factor(e) * self.element_energy_unit(e, &u_e).map_err(|err| err.in_element(e))?)
            })
            .collect();
        let mut total = 0.0;
        for p in parts {
            total += p?;
        }
        for &(i, k) in &self.springs {
            total += 0.5 * k * u[i] * u[i];
        }
        total -= self.force.iter().zip(u).map(|(f, x)| f * x).sum::<f64>();
        Ok(total)
    }

    fn check(&self, density: &DensityField, u: &[f64]) -> Result<()> {
        if density.rho.len() != self.mesh.n_elements() {
            return Err(Error::invalid(format!(
                "{} densities for {} elements",
                density.rho.len(),
                self.mesh.n_elements()
            )));
        }
        if u.len() != self.n_free() {
            return Err(Error::invalid(format!("displacement of length {} for {} free DOFs", u.len(), self.n_free())));
        }
        Ok(())
    }

    fn assemble_impl(&self, density: &DensityField, u: &[f64], with_k: bool) -> Result<(Option<SparseSym>, Vec<f64>)> {
        self.check(density, u)?;
        let local: Vec<Result<(ElementVector, ElementMatrix)>> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let u_e = self.element_displacements(e, u);
                let (f, k) = self.element_unit(e, &u_e, with_k).map_err(|err| err.in_element(e))?;
                let s = density.stiffness_factor(e);
                Ok((f * s, k * s))
            })
            .collect();
        let mut r: Vec<f64> = self.force.iter().map(|f| -f).collect();
        let mut k = with_k.then(|| SparseSym::zeros(Arc::clone(&self.pattern)));
        for (e, item) in local.into_iter().enumerate() {
            let (fe, ke) = item?;
            for (a, slot) in self.elem_free[e].iter().enumerate() {
                if let Some(i) = slot {
                    r[*i] += fe[a];
                }
            }
            if let Some(k) = k.as_mut() {
                let values = k.values_mut();
                for &(a, b, pos) in &self.scatter[e] {
                    values[pos] += ke[(a as usize, b as usize)];
                }
            }
        }
        for (&(i, ks), &pos) in self.springs.iter().zip(&self.spring_pos) {
            r[i] += ks * u[i];
            if let Some(k) = k.as_mut() {
                k.values_mut()[pos] += ks;
            }
        }
        Ok((k, r))
    }

    /// Tangent `K_T(u, ρ)` and residual `r(u, ρ)` in one pass.
    pub fn assemble(&self, density: &DensityField, u: &[f64]) -> Result<GlobalSystem> {
        let (k, r) = self.assemble_impl(density, u, true)?;
        Ok(GlobalSystem { k: k.expect("tangent requested"), r })
    }

    pub fn residual(&self, density: &DensityField, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.assemble_impl(density, u, false)?.1)
    }

    pub fn tangent(&self, density: &DensityField, u: &[f64]) -> Result<SparseSym> {
        Ok(self.assemble(density, u)?.k)
    }

    /// `∂r/∂ρₑ = p ρₑᵖ⁻¹ ∫ Gᵀσ` as `(reduced DOF, value)` pairs.
    pub fn residual_density_derivative(&self, e: usize, density: &DensityField, u: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.check(density, u)?;
        let u_e = self.element_displacements(e, u);
        let f = self.element_force_unit(e, &u_e).map_err(|err| err.in_element(e))? * density.stiffness_factor_derivative(e);
        Ok(self.elem_free[e]
            .iter()
            .enumerate()
            .filter_map(|(a, slot)| slot.map(|i| (i, f[a])))
            .collect())
    }

    /// `λₑᵀ ∂r/∂ρₑ` for every element.
    pub fn adjoint_products(&self, density: &DensityField, u: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        self.check(density, u)?;
        if lambda.len() != self.n_free() {
            return Err(Error::invalid("adjoint vector length differs from the free DOF count"));
        }
        let parts: Vec<Result<f64>> = (0..self.mesh.n_elements())
            .into_par_iter()
            .map(|e| {
                let u_e = self.element_displacements(e, u);
                let l_e = self.element_displacements(e, lambda);
                let f = self.element_force_unit(e, &u_e).map_err(|err| err.in_element(e))?;
                Ok(density.stiffness_factor_derivative(e) * l_e.dot(&f))
            })
            .collect();
        parts.into_iter().collect()
    }
}
