//! The four benchmark problems: two stiff structures and two compliant
//! mechanisms, at their canonical resolution or any coarser mesh.
//!
//! Geometry, supports and ports are stored in physical coordinates so a spec
//! can be rebuilt on any grid. Mechanisms are half models cut along their
//! horizontal symmetry line `y = 0`; loads and springs lying on that line
//! carry half of their full-model values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, Kinematics};
use crate::material::MaterialParams;
use crate::mesh::{Axis, Constraint, LoadCase, Mesh, OutputPort, PointLoad, Spring};
use crate::{Error, Result};

/// Smallest filter radius (in elements) used on coarse meshes.
pub const MIN_FILTER_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Cantilever,
    Slender,
    Inverter,
    Gripper,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [ProblemKind::Cantilever, ProblemKind::Slender, ProblemKind::Inverter, ProblemKind::Gripper];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Cantilever => "cantilever",
            ProblemKind::Slender => "slender",
            ProblemKind::Inverter => "inverter",
            ProblemKind::Gripper => "gripper",
        }
    }

    /// Canonical spec of this problem.
    pub fn canonical(self) -> ProblemSpec {
        match self {
            ProblemKind::Cantilever => cantilever(1.0),
            ProblemKind::Slender => slender(1.0),
            ProblemKind::Inverter => inverter(1.0),
            ProblemKind::Gripper => gripper(1.0),
        }
    }

    /// Spec on the default desk-scale mesh.
    pub fn desk(self) -> ProblemSpec {
        let (nx, ny) = match self {
            ProblemKind::Cantilever => (60, 15),
            ProblemKind::Slender => (120, 15),
            ProblemKind::Inverter => (60, 30),
            ProblemKind::Gripper => (64, 32),
        };
        self.canonical().with_mesh(nx, ny)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown problem '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `fᵀu`.
    Compliance,
    /// Displacement of the output port, as `lᵀu` with `l = −1` along the
    /// desired motion.
    OutputDisplacement,
}

/// Axis-aligned rectangle of supported nodes, in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub constraint: Constraint,
}

/// Point force, spring or output at a physical location. Forces between two
/// nodes are split evenly; springs and outputs snap to the nearest node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSpec {
    pub at: [f64; 2],
    pub axis: Axis,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub canonical_mesh: (usize, usize),
    pub young: f64,
    pub poisson: f64,
    pub thickness: f64,
    pub volume_fraction: f64,
    /// Filter radius in element widths on the current mesh.
    pub filter_radius: f64,
    pub canonical_filter_radius: f64,
    pub objective: Objective,
    pub kinematics: Kinematics,
    pub supports: Vec<Support>,
    pub loads: Vec<PointSpec>,
    pub springs: Vec<PointSpec>,
    /// `value` is the sign (±1) of the desired motion along `axis`.
    pub outputs: Vec<PointSpec>,
}

/// The assembled pieces of a problem.
#[derive(Debug)]
pub struct BuiltProblem {
    pub mesh: Arc<Mesh>,
    pub loads: LoadCase,
    pub assembler: Assembler,
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

fn edge(value: f64, lo: f64, hi: f64, constraint: Constraint, vertical: bool) -> Support {
    if vertical {
        Support { x: [value, value], y: [lo, hi], constraint }
    } else {
        Support { x: [lo, hi], y: [value, value], constraint }
    }
}

fn base(kind: ProblemKind, width: f64, height: f64, canonical: (usize, usize)) -> ProblemSpec {
    ProblemSpec {
        kind,
        width,
        height,
        nx: canonical.0,
        ny: canonical.1,
        canonical_mesh: canonical,
        young: 0.0,
        poisson: 0.0,
        thickness: 1.0,
        volume_fraction: 0.0,
        filter_radius: 0.0,
        canonical_filter_radius: 0.0,
        objective: Objective::Compliance,
        kinematics: Kinematics::Nonlinear,
        supports: Vec::new(),
        loads: Vec::new(),
        springs: Vec::new(),
        outputs: Vec::new(),
    }
}

impl ProblemSpec {
    fn finish(mut self, radius: f64, scale: f64) -> Self {
        self.canonical_filter_radius = radius;
        self.filter_radius = radius;
        let (cx, cy) = self.canonical_mesh;
        self.with_mesh(scaled(cx, scale), scaled(cy, scale))
    }

    /// Same physics on an `nx × ny` mesh. The filter radius keeps its
    /// physical size, floored at [`MIN_FILTER_RADIUS`] elements.
    pub fn with_mesh(mut self, nx: usize, ny: usize) -> Self {
        self.nx = nx.max(1);
        self.ny = ny.max(1);
        if (self.nx, self.ny) == self.canonical_mesh {
            self.filter_radius = self.canonical_filter_radius;
        } else {
            let r = self.canonical_filter_radius * self.nx as f64 / self.canonical_mesh.0 as f64;
            self.filter_radius = r.max(MIN_FILTER_RADIUS);
        }
        self
    }

    pub fn with_filter_radius(mut self, radius: f64) -> Self {
        self.filter_radius = radius;
        self
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn material(&self) -> Result<MaterialParams> {
        MaterialParams::new(self.young, self.poisson)
    }

    /// Prescribed volume `V*`.
    pub fn target_volume(&self) -> f64 {
        self.volume_fraction * self.width * self.height * self.thickness
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let mut mesh = Mesh::build_grid(self.nx, self.ny, self.width, self.height, self.thickness)?;
        let tol = 1e-9 * self.width.max(self.height);
        for s in &self.supports {
            let s = *s;
            mesh = mesh.fix_region(
                move |x, y| x >= s.x[0] - tol && x <= s.x[1] + tol && y >= s.y[0] - tol && y <= s.y[1] + tol,
                s.constraint,
            );
        }
        Ok(mesh)
    }

    fn nearest_node(mesh: &Mesh, at: [f64; 2]) -> usize {
        let i = (at[0] / mesh.elem_w()).round().clamp(0.0, mesh.nx() as f64) as usize;
        let j = (at[1] / mesh.elem_h()).round().clamp(0.0, mesh.ny() as f64) as usize;
        mesh.node(i, j)
    }

    pub fn load_case(&self, mesh: &Mesh) -> LoadCase {
        let mut loads = Vec::new();
        for p in &self.loads {
            for (node, w) in mesh.nodes_at(p.at[0], p.at[1]) {
                loads.push(PointLoad { node, axis: p.axis, magnitude: w * p.value });
            }
        }
        let springs = self
            .springs
            .iter()
            .map(|p| Spring { node: Self::nearest_node(mesh, p.at), axis: p.axis, stiffness: p.value })
            .collect();
        let outputs = self
            .outputs
            .iter()
            .map(|p| OutputPort { node: Self::nearest_node(mesh, p.at), axis: p.axis, sign: p.value })
            .collect();
        LoadCase { loads, springs, outputs }
    }

    pub fn build(&self) -> Result<BuiltProblem> {
        let mesh = Arc::new(self.mesh()?);
        let loads = self.load_case(&mesh);
        let assembler = Assembler::new(mesh.clone(), self.material()?, &loads, self.kinematics)?;
        Ok(BuiltProblem { mesh, loads, assembler })
    }
}

/// Cantilever beam, 120 × 30 mm, loaded at the middle of its free end.
pub fn cantilever(scale: f64) -> ProblemSpec {
    let (w, h) = (120.0, 30.0);
    let mut s = base(ProblemKind::Cantilever, w, h, (400, 100));
    s.young = 3000.0;
    s.poisson = 0.4;
    s.thickness = 1.0;
    s.volume_fraction = 0.5;
    s.supports = vec![edge(0.0, 0.0, h, Constraint::Both, true)];
    s.loads = vec![PointSpec { at: [w, h / 2.0], axis: Axis::Y, value: -120.0 }];
    s.finish(10.0, scale)
}

/// Slender beam, 400 × 50 mm, clamped at both ends and loaded at the middle
/// of its bottom edge.
pub fn slender(scale: f64) -> ProblemSpec {
    let (w, h) = (400.0, 50.0);
    let mut s = base(ProblemKind::Slender, w, h, (600, 75));
    s.young = 3000.0;
    s.poisson = 0.3;
    s.thickness = 1.0;
    s.volume_fraction = 0.2;
    s.supports = vec![edge(0.0, 0.0, h, Constraint::Both, true), edge(w, 0.0, h, Constraint::Both, true)];
    s.loads = vec![PointSpec { at: [w / 2.0, 0.0], axis: Axis::Y, value: -40.0 }];
    s.finish(5.0, scale)
}

fn mechanism(kind: ProblemKind, l: f64, canonical: (usize, usize), support_len: f64) -> ProblemSpec {
    let (w, h) = (l, l / 2.0);
    let mut s = base(kind, w, h, canonical);
    s.young = 180.0;
    s.poisson = 0.3;
    s.thickness = 7.0;
    s.volume_fraction = 0.2;
    s.objective = Objective::OutputDisplacement;
    s.supports = vec![
        edge(0.0, h - support_len, h, Constraint::Both, true),
        edge(0.0, 0.0, w, Constraint::Y, false),
    ];
    s
}

/// Displacement inverter, upper half of a 300 × 300 μm square. A push to the
/// right at the middle of the left edge should move the middle of the right
/// edge to the left.
pub fn inverter(scale: f64) -> ProblemSpec {
    let l = 300.0;
    let mut s = mechanism(ProblemKind::Inverter, l, (300, 150), l / 60.0);
    s.loads = vec![PointSpec { at: [0.0, 0.0], axis: Axis::X, value: 25.0 }];
    s.springs = vec![
        PointSpec { at: [0.0, 0.0], axis: Axis::X, value: 2.0 },
        PointSpec { at: [l, 0.0], axis: Axis::X, value: 0.5 },
    ];
    s.outputs = vec![PointSpec { at: [l, 0.0], axis: Axis::X, value: -1.0 }];
    s.finish(7.5, scale)
}

/// Gripper, upper half of a 320 × 320 μm square. A push to the right at the
/// middle of the left edge should close the jaw at the right edge towards
/// the symmetry line.
pub fn gripper(scale: f64) -> ProblemSpec {
    let l = 320.0;
    let mut s = mechanism(ProblemKind::Gripper, l, (320, 160), l / 20.0);
    let jaw = [l, l / 16.0];
    s.loads = vec![PointSpec { at: [0.0, 0.0], axis: Axis::X, value: 2.0 }];
    s.springs = vec![
        PointSpec { at: [0.0, 0.0], axis: Axis::X, value: 0.1 },
        PointSpec { at: jaw, axis: Axis::Y, value: 1.0 },
    ];
    s.outputs = vec![PointSpec { at: jaw, axis: Axis::Y, value: -1.0 }];
    s.finish(5.0, scale)
}

/// Small-displacement variant: `K(ρ) u = f` with the small-strain stiffness.
pub fn linear_mode(mut spec: ProblemSpec) -> ProblemSpec {
    spec.kinematics = Kinematics::Linear;
    spec
}
