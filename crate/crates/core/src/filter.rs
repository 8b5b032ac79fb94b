//! Density filter mapping design densities to physical densities.
//!
//! `ρ_phys = W ρ` with `Wᵢⱼ ∝ w(dᵢⱼ) vⱼ` normalized per row, where `dᵢⱼ` is
//! the distance between element centers. Rows are convex combinations, so the
//! filter preserves bounds and uniform fields.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKernel {
    /// Linear hat `max(0, 1 − d/r)`.
    #[default]
    Cone,
    /// `exp(−d²/(2σ²))` with `σ = r/2`, truncated at `d ≥ r`.
    Gaussian,
}

impl FilterKernel {
    fn weight(self, d: f64, r: f64) -> f64 {
        if d >= r {
            return 0.0;
        }
        match self {
            FilterKernel::Cone => 1.0 - d / r,
            FilterKernel::Gaussian => {
                let sigma = 0.5 * r;
                (-d * d / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

impl fmt::Display for FilterKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKernel::Cone => "cone",
            FilterKernel::Gaussian => "gaussian",
        })
    }
}

impl FromStr for FilterKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cone" => Ok(FilterKernel::Cone),
            "gaussian" => Ok(FilterKernel::Gaussian),
            _ => Err(Error::invalid(format!("unknown filter kernel '{s}'"))),
        }
    }
}

/// Row-normalized sparse filter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFilter {
    radius: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl DensityFilter {
    /// Builds the filter for a radius given in element widths.
    pub fn build(mesh: &Mesh, radius_elements: f64, kernel: FilterKernel) -> Result<Self> {
        if !(radius_elements >= 0.0 && radius_elements.is_finite()) {
            return Err(Error::invalid(format!("filter radius must be non-negative, got {radius_elements}")));
        }
        let r = radius_elements * mesh.elem_w();
        let (nx, ny) = (mesh.nx(), mesh.ny());
        let reach_x = (r / mesh.elem_w()).ceil() as usize;
        let reach_y = (r / mesh.elem_h()).ceil() as usize;
        let volumes = mesh.element_volumes();
        let mut row_ptr = Vec::with_capacity(mesh.n_elements() + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_ptr.push(0);
        for j in 0..ny {
            for i in 0..nx {
                let e = j * nx + i;
                let ce = mesh.element_center(e);
                let start = weights.len();
                for jj in j.saturating_sub(reach_y)..=(j + reach_y).min(ny - 1) {
                    for ii in i.saturating_sub(reach_x)..=(i + reach_x).min(nx - 1) {
                        let k = jj * nx + ii;
                        let w = if k == e {
                            1.0
                        } else {
                            let ck = mesh.element_center(k);
                            kernel.weight(((ce[0] - ck[0]).powi(2) + (ce[1] - ck[1]).powi(2)).sqrt(), r)
                        };
                        if w > 0.0 {
                            cols.push(k);
                            weights.push(w * volumes[k]);
                        }
                    }
                }
                let sum: f64 = weights[start..].iter().sum();
                weights[start..].iter_mut().for_each(|w| *w /= sum);
                row_ptr.push(weights.len());
            }
        }
        Ok(DensityFilter { radius: radius_elements, row_ptr, cols, weights })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nonzero `(column, weight)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::invalid(format!("filter of size {} applied to a vector of length {}", self.len(), x.len())));
        }
        Ok(())
    }

    /// `W x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok((0..self.len()).map(|i| self.row(i).map(|(j, w)| w * x[j]).sum()).collect())
    }

    /// `Wᵀ g`.
    pub fn backpropagate(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check(g)?;
        let mut out = vec![0.0; self.len()];
        for (i, &gi) in g.iter().enumerate() {
            for (j, w) in self.row(i) {
                out[j] += w * gi;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(nx: usize, ny: usize) -> Mesh {
        Mesh::build_grid(nx, ny, nx as f64, ny as f64, 1.0).unwrap()
    }

    #[test]
    fn small_radius_is_identity() {
        let mesh = grid(5, 4);
        for r in [0.0, 0.5, 1.0] {
            let f = DensityFilter::build(&mesh, r, FilterKernel::Cone).unwrap();
            for i in 0..f.len() {
                assert_eq!(f.row(i).collect::<Vec<_>>(), vec![(i, 1.0)]);
            }
        }
    }

    #[test]
    fn three_element_hand_weights() {
        let f = DensityFilter::build(&grid(3, 1), 1.5, FilterKernel::Cone).unwrap();
        let row: Vec<(usize, f64)> = f.row(1).collect();
        // Weights 1/3, 1, 1/3 normalized by 5/3.
        let expected = [(0, 0.2), (1, 0.6), (2, 0.2)];
        for ((c, w), (ce, we)) in row.iter().zip(expected) {
            assert_eq!(*c, ce);
            assert!((w - we).abs() < 1e-15);
        }
        let row0: Vec<(usize, f64)> = f.row(0).collect();
        assert!((row0[0].1 - 0.75).abs() < 1e-15 && (row0[1].1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rows_are_convex_and_transpose_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mesh = grid(12, 7);
        for kernel in [FilterKernel::Cone, FilterKernel::Gaussian] {
            let f = DensityFilter::build(&mesh, 2.7, kernel).unwrap();
            for i in 0..f.len() {
                let s: f64 = f.row(i).map(|(_, w)| w).sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(f.row(i).all(|(_, w)| w >= 0.0));
                assert!(f.row(i).any(|(j, w)| j == i && w > 0.0));
            }
            assert!(f.apply(&vec![0.37; f.len()]).unwrap().iter().all(|v| (v - 0.37).abs() < 1e-15));
            let x: Vec<f64> = (0..f.len()).map(|_| rng.gen_range(1e-3..1.0)).collect();
            let y: Vec<f64> = (0..f.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wx = f.apply(&x).unwrap();
            let wty = f.backpropagate(&y).unwrap();
            let lhs: f64 = wx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&wty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
            assert!(wx.iter().all(|&v| (1e-3..=1.0).contains(&v)));
        }
        let f = DensityFilter::build(&mesh, 2.0, FilterKernel::Cone).unwrap();
        assert!(f.apply(&[1.0; 3]).is_err());
        assert!(f.backpropagate(&[1.0; 3]).is_err());
        assert!(DensityFilter::build(&mesh, -1.0, FilterKernel::Cone).is_err());
    }

    #[test]
    fn kernel_names_parse() {
        assert_eq!("Gaussian".parse::<FilterKernel>().unwrap(), FilterKernel::Gaussian);
        assert_eq!(FilterKernel::Cone.to_string(), "cone");
        assert!("box".parse::<FilterKernel>().is_err());
    }
}
