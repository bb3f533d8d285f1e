//! Cartesian boxes `[-L, L]^d` and their nested exhaustion by smaller boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that lengths are integer multiples
/// of the spacing.
const MULTIPLE_TOL: f64 = 1e-9;

pub(crate) fn as_multiple(value: f64, spacing: f64, what: &str) -> Result<usize> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::Config(format!("{what} = {value} must be positive and finite")));
    }
    let ratio = value / spacing;
    let k = ratio.round();
    if (ratio - k).abs() > MULTIPLE_TOL * ratio.max(1.0) || k < 1.0 {
        return Err(Error::Config(format!(
            "{what} = {value} is not an integer multiple of spacing {spacing}"
        )));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianGrid {
    dim: usize,
    half_width: f64,
    spacing: f64,
    /// half_width / spacing
    half_nodes: usize,
}

impl CartesianGrid {
    pub fn new(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("dim = {dim}, expected 1 or 2")));
        }
        if !spacing.is_finite() || spacing <= 0.0 {
            return Err(Error::Config(format!("spacing = {spacing} must be positive")));
        }
        let half_nodes = as_multiple(half_width, spacing, "half_width")?;
        Ok(CartesianGrid {
            dim,
            half_width,
            spacing,
            half_nodes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Nodes per axis, `2 L / h + 1`.
    pub fn nodes_per_axis(&self) -> usize {
        2 * self.half_nodes + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    /// `h^dim`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        -self.half_width + index as f64 * self.spacing
    }

    /// Inverse of [`coordinate`](Self::coordinate); `None` off the lattice.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let r = (x + self.half_width) / self.spacing;
        let k = r.round();
        if (r - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.nodes_per_axis() {
            return None;
        }
        Some(k as usize)
    }

    /// Flat lexicographic index; the first axis varies slowest.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let n = self.nodes_per_axis();
        multi.iter().fold(0, |acc, &i| acc * n + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let n = self.nodes_per_axis();
        let mut out = vec![0; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = flat % n;
            flat /= n;
        }
        out
    }

    pub fn node_coordinates(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| self.coordinate(i))
            .collect()
    }

}

/// Nested boxes `M_1 ⊂ M_2 ⊂ … ⊂ M_J` on one grid, `M_J` being the whole box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionFamily {
    grid: CartesianGrid,
    radii: Vec<f64>,
    /// radii in units of the spacing
    radius_nodes: Vec<usize>,
}

impl ExhaustionFamily {
    pub fn new(grid: CartesianGrid, radii: &[f64]) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::Config("radii must be nonempty".into()));
        }
        let mut radius_nodes = Vec::with_capacity(radii.len());
        for &r in radii {
            let k = as_multiple(r, grid.spacing, &format!("radius {r}"))?;
            if k < 2 {
                return Err(Error::Config(format!(
                    "radius {r} leaves no interior node at spacing {}",
                    grid.spacing
                )));
            }
            if k > grid.half_nodes {
                return Err(Error::Config(format!(
                    "radius {r} exceeds half_width {}",
                    grid.half_width
                )));
            }
            if let Some(&prev) = radius_nodes.last() {
                if k <= prev {
                    return Err(Error::Config(format!("radii must be strictly ascending, got {r} after a larger or equal radius")));
                }
            }
            radius_nodes.push(k);
        }
        if *radius_nodes.last().unwrap() != grid.half_nodes {
            return Err(Error::Config(format!(
                "largest radius {} must equal half_width {}",
                radii[radii.len() - 1],
                grid.half_width
            )));
        }
        Ok(ExhaustionFamily {
            grid,
            radii: radii.to_vec(),
            radius_nodes,
        })
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn levels(&self) -> usize {
        self.radii.len()
    }

    pub fn top(&self) -> usize {
        self.levels() - 1
    }

    pub fn radius(&self, level: usize) -> f64 {
        self.radii[level]
    }

    /// Grid index of the first interior node of `level` along an axis.
    pub(crate) fn interior_offset(&self, level: usize) -> usize {
        self.grid.half_nodes - self.radius_nodes[level] + 1
    }

    /// Interior nodes per axis of `level`.
    pub fn interior_per_axis(&self, level: usize) -> usize {
        2 * self.radius_nodes[level] - 1
    }

    pub fn interior_count(&self, level: usize) -> usize {
        self.interior_per_axis(level).pow(self.grid.dim as u32)
    }

    /// Grid flat indices of the interior nodes of `level`, lexicographic.
    pub fn interior_nodes(&self, level: usize) -> Vec<usize> {
        let off = self.interior_offset(level);
        let m = self.interior_per_axis(level);
        match self.grid.dim {
            1 => (off..off + m).collect(),
            _ => {
                let mut out = Vec::with_capacity(m * m);
                for i in off..off + m {
                    for j in off..off + m {
                        out.push(self.grid.flat_index(&[i, j]));
                    }
                }
                out
            }
        }
    }
}

/// Builds the grid and its exhaustion in one call.
pub fn build_grid(
    dim: usize,
    half_width: f64,
    spacing: f64,
    radii: &[f64],
) -> Result<(CartesianGrid, ExhaustionFamily)> {
    let grid = CartesianGrid::new(dim, half_width, spacing)?;
    let family = ExhaustionFamily::new(grid.clone(), radii)?;
    Ok((grid, family))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_node_count() {
        let (grid, ex) = build_grid(1, 40.0, 0.1, &[10.0, 20.0, 40.0]).unwrap();
        assert_eq!(grid.nodes_per_axis(), 801);
        assert_eq!(ex.levels(), 3);
        assert_eq!(ex.interior_count(2), 799);
        assert_eq!(ex.interior_count(0), 199);
    }

    #[test]
    fn two_dimensional_node_count() {
        let (grid, ex) = build_grid(2, 8.0, 0.05, &[4.0, 8.0]).unwrap();
        assert_eq!(grid.nodes_per_axis(), 321);
        assert_eq!(grid.node_count(), 321 * 321);
        assert_eq!(ex.levels(), 2);
    }

    #[test]
    fn non_multiple_radius_is_named() {
        let err = build_grid(1, 10.0, 0.3, &[10.0]).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("10"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn radii_must_ascend_and_reach_the_box() {
        assert!(build_grid(1, 4.0, 0.5, &[2.0, 1.0, 4.0]).is_err());
        assert!(build_grid(1, 4.0, 0.5, &[1.0, 2.0]).is_err());
        assert!(build_grid(3, 4.0, 0.5, &[4.0]).is_err());
    }

    #[test]
    fn interior_sets_are_nested() {
        let (_, ex) = build_grid(2, 2.0, 0.25, &[1.0, 1.5, 2.0]).unwrap();
        for j in 0..2 {
            let inner = ex.interior_nodes(j);
            let outer = ex.interior_nodes(j + 1);
            assert!(inner.iter().all(|n| outer.binary_search(n).is_ok()));
        }
    }

    #[test]
    fn index_and_coordinate_are_inverse() {
        let grid = CartesianGrid::new(1, 40.0, 0.1).unwrap();
        for i in 0..grid.nodes_per_axis() {
            assert_eq!(grid.index_of(grid.coordinate(i)), Some(i));
        }
        assert_eq!(grid.index_of(0.05), None);
    }
}
