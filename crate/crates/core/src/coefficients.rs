//! Node samples of the diffusion matrix `a`, drift `b` and potential `c`.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::CartesianGrid;

/// Per-node coefficients of `P = -Σ a_ij ∂i∂j + Σ b_i ∂i + c` on a grid.
///
/// `a` is stored as `[a11, a12, a22]` (the last two unused in 1D) and `b` as
/// `[b1, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    grid: CartesianGrid,
    a: Vec<[f64; 3]>,
    b: Vec<[f64; 2]>,
    c: Vec<f64>,
}

impl CoefficientField {
    /// Samples closure-defined coefficients at every grid node and checks
    /// ellipticity.
    pub fn from_fn(
        grid: &CartesianGrid,
        mut f: impl FnMut(&[f64]) -> ([f64; 3], [f64; 2], f64),
    ) -> Result<Self> {
        let n = grid.node_count();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for k in 0..n {
            let x = grid.node_coordinates(k);
            let (ak, bk, ck) = f(&x);
            a.push(ak);
            b.push(bk);
            c.push(ck);
        }
        let field = CoefficientField {
            grid: grid.clone(),
            a,
            b,
            c,
        };
        field.validate()?;
        Ok(field)
    }

    /// `a = diffusion·I`, constant drift, constant potential.
    pub fn constant(grid: &CartesianGrid, diffusion: f64, drift: &[f64], potential: f64) -> Result<Self> {
        let mut b = [0.0; 2];
        for (slot, v) in b.iter_mut().zip(drift) {
            *slot = *v;
        }
        CoefficientField::from_fn(grid, |_| ([diffusion, 0.0, diffusion], b, potential))
    }

    /// Linear drift `b(x) = rate·x` with unit diffusion: the Ornstein–Uhlenbeck
    /// generator when `rate > 0`.
    pub fn linear_drift(grid: &CartesianGrid, rate: f64) -> Result<Self> {
        CoefficientField::from_fn(grid, |x| {
            let mut b = [0.0; 2];
            for (slot, xi) in b.iter_mut().zip(x) {
                *slot = rate * xi;
            }
            ([1.0, 0.0, 1.0], b, 0.0)
        })
    }

    /// Reads a tabulated field. Header `x[,y],a11[,a12,a22],b1[,b2],c`, one
    /// row per node in lexicographic order.
    pub fn from_csv_path(grid: &CartesianGrid, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        CoefficientField::from_csv_reader(grid, file)
    }

    pub fn from_csv_reader<R: Read>(grid: &CartesianGrid, reader: R) -> Result<Self> {
        let dim = grid.dim();
        let expected: &[&str] = if dim == 1 {
            &["x", "a11", "b1", "c"]
        } else {
            &["x", "y", "a11", "a12", "a22", "b1", "b2", "c"]
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != expected {
            return Err(Error::Config(format!(
                "coefficient table header {header:?}, expected {expected:?}"
            )));
        }
        let n = grid.node_count();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for (row_no, record) in rdr.records().enumerate() {
            let record = record?;
            if row_no >= n {
                return Err(Error::Config(format!("coefficient table has more than {n} rows")));
            }
            let vals: Vec<f64> = record
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| {
                        Error::Config(format!("row {}: cannot parse {s:?}", row_no + 1))
                    })
                })
                .collect::<Result<_>>()?;
            let coord = grid.node_coordinates(row_no);
            for (axis, want) in coord.iter().enumerate() {
                if (vals[axis] - want).abs() > 1e-6 * grid.spacing() {
                    return Err(Error::Config(format!(
                        "row {}: coordinate {} does not match node {want} (rows must be lexicographic)",
                        row_no + 1,
                        vals[axis]
                    )));
                }
            }
            if dim == 1 {
                a.push([vals[1], 0.0, vals[1]]);
                b.push([vals[2], 0.0]);
                c.push(vals[3]);
            } else {
                a.push([vals[2], vals[3], vals[4]]);
                b.push([vals[5], vals[6]]);
                c.push(vals[7]);
            }
        }
        if a.len() != n {
            return Err(Error::Config(format!(
                "coefficient table has {} rows, grid has {n} nodes",
                a.len()
            )));
        }
        let field = CoefficientField {
            grid: grid.clone(),
            a,
            b,
            c,
        };
        field.validate()?;
        Ok(field)
    }

    fn validate(&self) -> Result<()> {
        for k in 0..self.a.len() {
            let coord = || self.grid.node_coordinates(k);
            let [a11, a12, a22] = self.a[k];
            let finite = self.a[k].iter().chain(&self.b[k]).all(|v| v.is_finite()) && self.c[k].is_finite();
            if !finite {
                return Err(Error::Coefficient {
                    coord: coord(),
                    message: "non-finite coefficient sample".into(),
                });
            }
            // Cholesky of the 1x1 or 2x2 block
            let spd = if self.grid.dim() == 1 {
                a11 > 0.0
            } else {
                a11 > 0.0 && a22 - a12 * a12 / a11 > 0.0
            };
            if !spd {
                return Err(Error::Coefficient {
                    coord: coord(),
                    message: format!("diffusion matrix {:?} is not positive definite", self.a[k]),
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn a(&self, node: usize) -> [f64; 3] {
        self.a[node]
    }

    pub fn b(&self, node: usize) -> [f64; 2] {
        self.b[node]
    }

    pub fn c(&self, node: usize) -> f64 {
        self.c[node]
    }

    /// Smallest eigenvalue of `a` over all nodes.
    pub fn min_diffusion(&self) -> f64 {
        self.a
            .iter()
            .map(|&[a11, a12, a22]| {
                if self.grid.dim() == 1 {
                    a11
                } else {
                    let mean = 0.5 * (a11 + a22);
                    let r = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
                    mean - r
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest eigenvalue of `a` over all nodes.
    pub fn max_diffusion(&self) -> f64 {
        self.a
            .iter()
            .map(|&[a11, a12, a22]| {
                if self.grid.dim() == 1 {
                    a11
                } else {
                    0.5 * (a11 + a22) + (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt()
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn max_drift(&self) -> f64 {
        self.b
            .iter()
            .map(|b| b[..self.grid.dim()].iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Grid Péclet number `max|b| h / (2 min eig a)`.
    pub fn peclet(&self) -> f64 {
        self.max_drift() * self.grid.spacing() / (2.0 * self.min_diffusion())
    }

    /// True for constant `a`, constant `b` and `c ≡ 0`: after the gauge
    /// transform the potential is the constant `|b|²/4a`, so Dirichlet
    /// eigenvalues approach their limit like `1/r²`.
    pub fn is_translation_invariant(&self) -> bool {
        let a0 = self.a[0];
        let b0 = self.b[0];
        self.a.iter().all(|a| *a == a0) && self.b.iter().all(|b| *b == b0) && self.c.iter().all(|c| *c == 0.0)
    }

    pub fn potential_vanishes(&self) -> bool {
        self.c.iter().all(|c| *c == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indefinite_diffusion() {
        let grid = CartesianGrid::new(2, 1.0, 0.5).unwrap();
        let err = CoefficientField::from_fn(&grid, |x| {
            let a12 = if x[0] == 0.5 && x[1] == -0.5 { 2.0 } else { 0.0 };
            ([1.0, a12, 1.0], [0.0; 2], 0.0)
        })
        .unwrap_err();
        match err {
            Error::Coefficient { coord, .. } => assert_eq!(coord, vec![0.5, -0.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reads_tabulated_csv() {
        let grid = CartesianGrid::new(1, 1.0, 0.5).unwrap();
        let text = "x,a11,b1,c\n-1,1,0,0\n-0.5,1,0.5,0\n0,2,0,0.1\n0.5,1,0,0\n1,1,0,0\n";
        let field = CoefficientField::from_csv_reader(&grid, text.as_bytes()).unwrap();
        assert_eq!(field.a(2)[0], 2.0);
        assert_eq!(field.b(1)[0], 0.5);
        assert_eq!(field.c(2), 0.1);
    }

    #[test]
    fn tabulated_rows_must_be_lexicographic() {
        let grid = CartesianGrid::new(1, 1.0, 0.5).unwrap();
        let text = "x,a11,b1,c\n-0.5,1,0,0\n-1,1,0,0\n0,1,0,0\n0.5,1,0,0\n1,1,0,0\n";
        assert!(matches!(
            CoefficientField::from_csv_reader(&grid, text.as_bytes()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn peclet_of_linear_drift() {
        let grid = CartesianGrid::new(1, 8.0, 0.05).unwrap();
        let ou = CoefficientField::linear_drift(&grid, 1.0).unwrap();
        assert!((ou.peclet() - 0.2).abs() < 1e-12);
        assert!(!ou.is_translation_invariant());
        let bm = CoefficientField::constant(&grid, 1.0, &[-1.0], 0.0).unwrap();
        assert!(bm.is_translation_invariant());
    }
}
