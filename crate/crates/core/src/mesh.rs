//! Regular rectangular Q4 meshes, DOF numbering, supports and load cases.
//!
//! Nodes and elements are numbered row-major from the bottom-left corner.
//! Node `n` owns global DOFs `2n` (x) and `2n + 1` (y). Fixed DOFs are removed
//! from the reduced ("free") vector space used by the solvers.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn offset(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Which displacement components a support constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    X,
    Y,
    Both,
}

impl Constraint {
    fn axes(self) -> &'static [Axis] {
        match self {
            Constraint::X => &[Axis::X],
            Constraint::Y => &[Axis::Y],
            Constraint::Both => &[Axis::X, Axis::Y],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    elem_w: f64,
    elem_h: f64,
    thickness: f64,
    coords: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
    fixed: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
}

impl Mesh {
    /// Builds an `nx × ny` grid over `[0, width] × [0, height]`.
    pub fn build_grid(nx: usize, ny: usize, width: f64, height: f64, thickness: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!("grid needs at least one element per axis, got {nx}x{ny}")));
        }
        for (name, value) in [("width", width), ("height", height), ("thickness", thickness)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {value}")));
            }
        }
        let elem_w = width / nx as f64;
        let elem_h = height / ny as f64;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                coords.push([i as f64 * elem_w, j as f64 * elem_h]);
            }
        }
        let mut elements = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n0 = j * (nx + 1) + i;
                elements.push([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]);
            }
        }
        let n_dof = 2 * coords.len();
        let mut mesh = Mesh {
            nx,
            ny,
            elem_w,
            elem_h,
            thickness,
            coords,
            elements,
            fixed: vec![false; n_dof],
            free_index: Vec::new(),
            free_dofs: Vec::new(),
        };
        mesh.renumber();
        Ok(mesh)
    }

    fn renumber(&mut self) {
        self.free_dofs.clear();
        self.free_index = vec![None; self.fixed.len()];
        for (dof, &fixed) in self.fixed.iter().enumerate() {
            if !fixed {
                self.free_index[dof] = Some(self.free_dofs.len());
                self.free_dofs.push(dof);
            }
        }
    }

    /// Fixes the selected components of every node whose coordinates satisfy
    /// `predicate`. An empty selection leaves the mesh unchanged.
    pub fn fix_region(mut self, predicate: impl Fn(f64, f64) -> bool, constraint: Constraint) -> Self {
        let selected: Vec<usize> = (0..self.n_nodes())
            .filter(|&n| predicate(self.coords[n][0], self.coords[n][1]))
            .collect();
        if selected.is_empty() {
            warn!("support predicate selected no nodes");
            return self;
        }
        for n in selected {
            for axis in constraint.axes() {
                self.fixed[2 * n + axis.offset()] = true;
            }
        }
        self.renumber();
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn elem_w(&self) -> f64 {
        self.elem_w
    }

    pub fn elem_h(&self) -> f64 {
        self.elem_h
    }

    pub fn width(&self) -> f64 {
        self.elem_w * self.nx as f64
    }

    pub fn height(&self) -> f64 {
        self.elem_h * self.ny as f64
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.fixed.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.n_dofs() - self.n_free()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        self.elements[e]
    }

    /// Corner coordinates of element `e`, counter-clockwise.
    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elements[e].map(|n| self.coords[n])
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let (i, j) = (e % self.nx, e / self.nx);
        [(i as f64 + 0.5) * self.elem_w, (j as f64 + 0.5) * self.elem_h]
    }

    pub fn element_volume(&self) -> f64 {
        self.elem_w * self.elem_h * self.thickness
    }

    pub fn element_volumes(&self) -> Vec<f64> {
        vec![self.element_volume(); self.n_elements()]
    }

    /// Global DOFs of element `e` in the order `(x0, y0, x1, y1, ...)`.
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.elements[e];
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn dof(&self, node: usize, axis: Axis) -> usize {
        2 * node + axis.offset()
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    /// Reduced index of a global DOF, `None` when it is fixed.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Restricts a full-length vector to the free DOFs.
    pub fn gather(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.n_dofs() {
            return Err(Error::invalid(format!(
                "expected a full vector of length {}, got {}",
                self.n_dofs(),
                full.len()
            )));
        }
        Ok(self.free_dofs.iter().map(|&d| full[d]).collect())
    }

    /// Expands a reduced vector to full length with zeros at fixed DOFs.
    pub fn scatter(&self, reduced: &[f64]) -> Result<Vec<f64>> {
        if reduced.len() != self.n_free() {
            return Err(Error::invalid(format!(
                "expected a reduced vector of length {}, got {}",
                self.n_free(),
                reduced.len()
            )));
        }
        let mut full = vec![0.0; self.n_dofs()];
        for (&d, &v) in self.free_dofs.iter().zip(reduced) {
            full[d] = v;
        }
        Ok(full)
    }

    /// Nodes whose coordinates satisfy `predicate`, in node order.
    pub fn select_nodes(&self, predicate: impl Fn(f64, f64) -> bool) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&n| predicate(self.coords[n][0], self.coords[n][1]))
            .collect()
    }

    /// Distributes a point location on a boundary edge over the nearest
    /// node(s): one node with weight 1 when the location coincides with a
    /// node, otherwise the two bracketing nodes along the edge with weight ½.
    pub fn nodes_at(&self, x: f64, y: f64) -> Vec<(usize, f64)> {
        let fi = x / self.elem_w;
        let fj = y / self.elem_h;
        let split = |f: f64, n: usize| -> Vec<(usize, f64)> {
            let lo = f.floor().clamp(0.0, n as f64) as usize;
            if (f - f.round()).abs() < 1e-9 {
                vec![(f.round() as usize, 1.0)]
            } else {
                vec![(lo, 0.5), ((lo + 1).min(n), 0.5)]
            }
        };
        let mut out = Vec::new();
        for (i, wi) in split(fi, self.nx) {
            for (j, wj) in split(fj, self.ny) {
                out.push((self.node(i, j), wi * wj));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLoad {
    pub node: usize,
    pub axis: Axis,
    pub magnitude: f64,
}

/// Linear grounded spring at a port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub node: usize,
    pub axis: Axis,
    pub stiffness: f64,
}

/// Output port of a mechanism: the displacement of `node` along `axis`,
/// measured positive in the direction `sign` (±1) the mechanism should move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputPort {
    pub node: usize,
    pub axis: Axis,
    pub sign: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    pub loads: Vec<PointLoad>,
    pub springs: Vec<Spring>,
    /// Empty for compliance problems, where the objective selector is `f`.
    pub outputs: Vec<OutputPort>,
}

impl LoadCase {
    pub fn is_mechanism(&self) -> bool {
        !self.outputs.is_empty()
    }

    /// External force vector over free DOFs. Loads on fixed DOFs are dropped.
    pub fn force_vector(&self, mesh: &Mesh) -> Vec<f64> {
        let mut f = vec![0.0; mesh.n_free()];
        for load in &self.loads {
            if let Some(i) = mesh.free_index(mesh.dof(load.node, load.axis)) {
                f[i] += load.magnitude;
            }
        }
        f
    }

    /// Objective selector `l` over free DOFs: `f` for structures, and
    /// `−sign` at each output DOF for mechanisms, so that minimizing `lᵀu`
    /// maximizes the output displacement in the requested direction.
    pub fn output_vector(&self, mesh: &Mesh) -> Vec<f64> {
        if !self.is_mechanism() {
            return self.force_vector(mesh);
        }
        let mut l = vec![0.0; mesh.n_free()];
        for port in &self.outputs {
            if let Some(i) = mesh.free_index(mesh.dof(port.node, port.axis)) {
                l[i] = -port.sign;
            }
        }
        l
    }

    /// Spring stiffness per free DOF, summed over coincident springs.
    pub fn spring_diagonal(&self, mesh: &Mesh) -> Vec<(usize, f64)> {
        let mut diag: Vec<(usize, f64)> = Vec::new();
        for s in &self.springs {
            if let Some(i) = mesh.free_index(mesh.dof(s.node, s.axis)) {
                match diag.iter_mut().find(|(d, _)| *d == i) {
                    Some(entry) => entry.1 += s.stiffness,
                    None => diag.push((i, s.stiffness)),
                }
            }
        }
        diag.sort_by_key(|&(d, _)| d);
        diag
    }
}
