//! Finite-difference realizations of `P` on exhaustion levels, their
//! adjoints and Doob transforms.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::ExhaustionFamily;
use crate::linalg::CsrMatrix;

/// Which node set a [`ScalarField`] or operator lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldDomain {
    /// Interior nodes of exhaustion level `j`.
    Level(usize),
    /// Interior nodes of level `j` of a skew product.
    ProductLevel(usize),
}

/// One axis of the tensor lattice of interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Half-width of the enclosing grid box.
    pub half_width: f64,
    pub spacing: f64,
    /// Grid index of the first interior node.
    pub offset: usize,
    pub len: usize,
}

impl Axis {
    pub fn coordinate(&self, k: usize) -> f64 {
        -self.half_width + (self.offset + k) as f64 * self.spacing
    }

    fn index_of(&self, x: f64) -> Option<usize> {
        let r = (x + self.half_width) / self.spacing;
        let g = r.round();
        if (r - g).abs() > 1e-6 || g < self.offset as f64 {
            return None;
        }
        let k = g as usize - self.offset;
        (k < self.len).then_some(k)
    }
}

/// Node samples over the interior of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub domain: FieldDomain,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: FieldDomain, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value {v}")));
        }
        Ok(ScalarField { domain, values })
    }

    /// Samples `f` at the operator's nodes.
    pub fn from_fn(op: &DiscreteOperator, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..op.len()).map(|u| f(&op.coordinates(u))).collect();
        ScalarField {
            domain: op.domain(),
            values,
        }
    }

    pub fn constant(op: &DiscreteOperator, value: f64) -> Self {
        ScalarField {
            domain: op.domain(),
            values: vec![value; op.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sparse matrix of `P` (or of its adjoint) acting on the interior unknowns
/// of one level, homogeneous Dirichlet data eliminated.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    level: usize,
    domain: FieldDomain,
    axes: Vec<Axis>,
    matrix: CsrMatrix,
    adjoint: bool,
    peclet: f64,
}

impl DiscreteOperator {
    pub(crate) fn from_parts(
        level: usize,
        domain: FieldDomain,
        axes: Vec<Axis>,
        matrix: CsrMatrix,
        peclet: f64,
    ) -> Self {
        DiscreteOperator {
            level,
            domain,
            axes,
            matrix,
            adjoint: false,
            peclet,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn domain(&self) -> FieldDomain {
        self.domain
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    /// Grid Péclet number of the coefficients this operator was built from.
    pub fn peclet(&self) -> f64 {
        self.peclet
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Product of the axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    /// Distance from the origin to the nearest face of the level box.
    pub fn box_radius(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.coordinate(a.len - 1) + a.spacing)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn coordinates(&self, unknown: usize) -> Vec<f64> {
        let mut rem = unknown;
        let mut ks = vec![0; self.axes.len()];
        for (slot, axis) in ks.iter_mut().zip(&self.axes).rev() {
            *slot = rem % axis.len;
            rem /= axis.len;
        }
        ks.iter().zip(&self.axes).map(|(&k, a)| a.coordinate(k)).collect()
    }

    /// Unknown index of the node at `coords`, if it is an interior node.
    pub fn node_at(&self, coords: &[f64]) -> Option<usize> {
        if coords.len() != self.axes.len() {
            return None;
        }
        let mut flat = 0;
        for (x, axis) in coords.iter().zip(&self.axes) {
            flat = flat * axis.len + axis.index_of(*x)?;
        }
        Some(flat)
    }

    pub fn require_node(&self, coords: &[f64]) -> Result<usize> {
        self.node_at(coords).ok_or_else(|| {
            Error::Domain(format!(
                "point {coords:?} is not an interior node of level {}",
                self.level
            ))
        })
    }

    /// Interior node nearest the origin.
    pub fn anchor(&self) -> usize {
        let mut flat = 0;
        for axis in &self.axes {
            let k = (0..axis.len)
                .min_by(|&p, &q| axis.coordinate(p).abs().total_cmp(&axis.coordinate(q).abs()))
                .unwrap_or(0);
            flat = flat * axis.len + k;
        }
        flat
    }

    /// For each unknown of `self`, its index in the larger `outer` operator.
    pub fn embedding_into(&self, outer: &DiscreteOperator) -> Result<Vec<usize>> {
        (0..self.len())
            .map(|u| {
                outer.node_at(&self.coordinates(u)).ok_or_else(|| {
                    Error::Domain(format!(
                        "level {} is not contained in level {}",
                        self.level, outer.level
                    ))
                })
            })
            .collect()
    }

    pub(crate) fn with_matrix(&self, matrix: CsrMatrix) -> Self {
        DiscreteOperator {
            matrix,
            ..self.clone()
        }
    }

    pub(crate) fn check_field(&self, field: &ScalarField) -> Result<()> {
        if field.domain != self.domain || field.len() != self.len() {
            return Err(Error::Domain(format!(
                "field on {:?} ({} values) used with operator on {:?} ({} unknowns)",
                field.domain,
                field.len(),
                self.domain,
                self.len()
            )));
        }
        Ok(())
    }
}

/// Second-order centered differences of `P` on level `level`, exterior
/// unknowns eliminated.
pub fn discretize(
    coeffs: &CoefficientField,
    exhaustion: &ExhaustionFamily,
    level: usize,
) -> Result<DiscreteOperator> {
    if level >= exhaustion.levels() {
        return Err(Error::Config(format!(
            "level {level} out of range ({} levels)",
            exhaustion.levels()
        )));
    }
    let grid = exhaustion.grid();
    if coeffs.grid() != grid {
        return Err(Error::Config("coefficient grid differs from exhaustion grid".into()));
    }
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let inv_2h = 1.0 / (2.0 * h);
    let off = exhaustion.interior_offset(level);
    let m = exhaustion.interior_per_axis(level);
    let axis = Axis {
        half_width: grid.half_width(),
        spacing: h,
        offset: off,
        len: m,
    };
    let mut t = Vec::new();
    match grid.dim() {
        1 => {
            for k in 0..m {
                let node = off + k;
                let a = coeffs.a(node)[0];
                let b = coeffs.b(node)[0];
                let c = coeffs.c(node);
                if k > 0 {
                    t.push((k, k - 1, -a * inv_h2 - b * inv_2h));
                }
                t.push((k, k, 2.0 * a * inv_h2 + c));
                if k + 1 < m {
                    t.push((k, k + 1, -a * inv_h2 + b * inv_2h));
                }
            }
        }
        _ => {
            let idx = |k1: usize, k2: usize| k1 * m + k2;
            for k1 in 0..m {
                for k2 in 0..m {
                    let node = grid.flat_index(&[off + k1, off + k2]);
                    let [a11, a12, a22] = coeffs.a(node);
                    let [b1, b2] = coeffs.b(node);
                    let c = coeffs.c(node);
                    let row = idx(k1, k2);
                    t.push((row, row, 2.0 * (a11 + a22) * inv_h2 + c));
                    if k1 > 0 {
                        t.push((row, idx(k1 - 1, k2), -a11 * inv_h2 - b1 * inv_2h));
                    }
                    if k1 + 1 < m {
                        t.push((row, idx(k1 + 1, k2), -a11 * inv_h2 + b1 * inv_2h));
                    }
                    if k2 > 0 {
                        t.push((row, idx(k1, k2 - 1), -a22 * inv_h2 - b2 * inv_2h));
                    }
                    if k2 + 1 < m {
                        t.push((row, idx(k1, k2 + 1), -a22 * inv_h2 + b2 * inv_2h));
                    }
                    if a12 != 0.0 {
                        // -2 a12 ∂1∂2 with the four-point cross stencil
                        let w = 0.5 * a12 * inv_h2;
                        let corners = [(1i64, 1i64, -w), (1, -1, w), (-1, 1, w), (-1, -1, -w)];
                        for (d1, d2, v) in corners {
                            let (p1, p2) = (k1 as i64 + d1, k2 as i64 + d2);
                            if (0..m as i64).contains(&p1) && (0..m as i64).contains(&p2) {
                                t.push((row, idx(p1 as usize, p2 as usize), v));
                            }
                        }
                    }
                }
            }
        }
    }
    let n = m.pow(grid.dim() as u32);
    let matrix = CsrMatrix::from_triplets(n, n, &t);
    Ok(DiscreteOperator::from_parts(
        level,
        FieldDomain::Level(level),
        vec![axis; grid.dim()],
        matrix,
        coeffs.peclet(),
    ))
}

/// Discrete adjoint: the exact matrix transpose.
pub fn adjoint(op: &DiscreteOperator) -> DiscreteOperator {
    DiscreteOperator {
        matrix: op.matrix.transpose(),
        adjoint: !op.adjoint,
        ..op.clone()
    }
}

/// Doob transform `D_h^{-1} A D_h`.
pub fn h_transform(op: &DiscreteOperator, h_field: &ScalarField) -> Result<DiscreteOperator> {
    op.check_field(h_field)?;
    if let Some(u) = h_field.values.iter().position(|&v| v <= 0.0) {
        return Err(Error::Domain(format!(
            "h-transform needs a positive field; value {} at {:?}",
            h_field.values[u],
            op.coordinates(u)
        )));
    }
    let inv: Vec<f64> = h_field.values.iter().map(|v| 1.0 / v).collect();
    Ok(op.with_matrix(op.matrix.scaled(&inv, &h_field.values)))
}

/// How per-level principal eigenvalues are extrapolated to the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Richardson in `1/r²`.
    InverseSquare,
    /// Use the top-level value.
    LastValue,
}

/// A nested family of discrete operators, one per exhaustion level.
pub trait OperatorFamily: Sync {
    fn levels(&self) -> usize;
    fn radius(&self, level: usize) -> f64;
    fn dim(&self) -> usize;
    fn operator(&self, level: usize) -> Result<DiscreteOperator>;
    fn extrapolation(&self) -> Extrapolation;
    /// Largest diffusion eigenvalue, for Gaussian-scale heuristics.
    fn max_diffusion(&self) -> f64;

    fn top(&self) -> usize {
        self.levels() - 1
    }
}

/// Coefficients plus an exhaustion: the basic operator family.
#[derive(Debug, Clone)]
pub struct EllipticModel {
    pub coeffs: CoefficientField,
    pub exhaustion: ExhaustionFamily,
}

impl EllipticModel {
    pub fn new(coeffs: CoefficientField, exhaustion: ExhaustionFamily) -> Result<Self> {
        if coeffs.grid() != exhaustion.grid() {
            return Err(Error::Config("coefficient grid differs from exhaustion grid".into()));
        }
        Ok(EllipticModel { coeffs, exhaustion })
    }
}

impl OperatorFamily for EllipticModel {
    fn levels(&self) -> usize {
        self.exhaustion.levels()
    }

    fn radius(&self, level: usize) -> f64 {
        self.exhaustion.radius(level)
    }

    fn dim(&self) -> usize {
        self.exhaustion.grid().dim()
    }

    fn operator(&self, level: usize) -> Result<DiscreteOperator> {
        discretize(&self.coeffs, &self.exhaustion, level)
    }

    fn extrapolation(&self) -> Extrapolation {
        if self.coeffs.is_translation_invariant() {
            Extrapolation::InverseSquare
        } else {
            Extrapolation::LastValue
        }
    }

    fn max_diffusion(&self) -> f64 {
        self.coeffs.max_diffusion()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn laplace_1d(h: f64) -> (CoefficientField, ExhaustionFamily) {
        let (grid, ex) = build_grid(1, 1.0, h, &[1.0]).unwrap();
        (CoefficientField::constant(&grid, 1.0, &[0.0], 0.0).unwrap(), ex)
    }

    #[test]
    fn laplacian_rows() {
        let (c, ex) = laplace_1d(0.1);
        let op = discretize(&c, &ex, 0).unwrap();
        let m = op.matrix();
        assert_eq!(op.len(), 19);
        assert!((m.get(5, 4) + 100.0).abs() < 1e-9);
        assert!((m.get(5, 5) - 200.0).abs() < 1e-9);
        assert!((m.get(5, 6) + 100.0).abs() < 1e-9);
        assert_eq!(m.get(5, 7), 0.0);
    }

    #[test]
    fn centered_drift_entries() {
        let (grid, ex) = build_grid(1, 1.0, 0.1, &[1.0]).unwrap();
        let c = CoefficientField::linear_drift(&grid, 1.0).unwrap();
        let op = discretize(&c, &ex, 0).unwrap();
        for k in 1..op.len() - 1 {
            let x = op.coordinates(k)[0];
            let h = 0.1;
            assert!((op.matrix().get(k, k + 1) - (-1.0 / (h * h) + x / (2.0 * h))).abs() < 1e-9);
            assert!((op.matrix().get(k, k - 1) - (-1.0 / (h * h) - x / (2.0 * h))).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_potential_shifts_the_diagonal() {
        let (grid, ex) = build_grid(1, 1.0, 0.1, &[1.0]).unwrap();
        let plain = discretize(&CoefficientField::constant(&grid, 1.0, &[0.0], 0.0).unwrap(), &ex, 0).unwrap();
        let shifted = discretize(&CoefficientField::constant(&grid, 1.0, &[0.0], 0.25).unwrap(), &ex, 0).unwrap();
        assert_eq!(shifted.matrix(), &plain.matrix().shifted(1.0, 0.25));
    }

    #[test]
    fn quadratics_are_differentiated_exactly() {
        let (c, ex) = laplace_1d(0.05);
        let op = discretize(&c, &ex, 0).unwrap();
        let u: Vec<f64> = (0..op.len()).map(|k| op.coordinates(k)[0].powi(2)).collect();
        let au = op.matrix().matvec(&u);
        for k in 1..op.len() - 1 {
            assert!((au[k] + 2.0).abs() <= 1e-9, "residual at {k}: {}", au[k] + 2.0);
        }
    }

    #[test]
    fn zero_drift_row_sums_vanish_in_the_bulk() {
        let (grid, ex) = build_grid(2, 1.0, 0.25, &[1.0]).unwrap();
        let c = CoefficientField::from_fn(&grid, |x| ([1.0 + x[0].powi(2), 0.3, 2.0], [0.0; 2], 0.0)).unwrap();
        let op = discretize(&c, &ex, 0).unwrap();
        let m = ex.interior_per_axis(0);
        let sums = op.matrix().row_sums();
        for k1 in 1..m - 1 {
            for k2 in 1..m - 1 {
                assert!(sums[k1 * m + k2].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_is_an_involution() {
        let (grid, ex) = build_grid(1, 1.0, 0.1, &[1.0]).unwrap();
        let c = CoefficientField::linear_drift(&grid, 2.0).unwrap();
        let op = discretize(&c, &ex, 0).unwrap();
        let back = adjoint(&adjoint(&op));
        assert_eq!(back, op);
        assert!(adjoint(&op).is_adjoint());
    }

    #[test]
    fn symmetric_operator_is_self_adjoint() {
        let (c, ex) = laplace_1d(0.1);
        let op = discretize(&c, &ex, 0).unwrap();
        assert_eq!(adjoint(&op).matrix(), op.matrix());
    }

    #[test]
    fn adjoint_of_drift_is_reversed_drift() {
        // Symmetric boxes have an odd interior count; 11 nodes here. With
        // constant drift the transpose coincides with the direct
        // discretization of the formal adjoint -u'' - b u'.
        let (grid, ex) = build_grid(1, 1.2, 0.2, &[1.2]).unwrap();
        let fwd = CoefficientField::constant(&grid, 1.0, &[1.0], 0.0).unwrap();
        let bwd = CoefficientField::constant(&grid, 1.0, &[-1.0], 0.0).unwrap();
        let a = discretize(&fwd, &ex, 0).unwrap();
        let b = discretize(&bwd, &ex, 0).unwrap();
        assert_eq!(a.len(), 11);
        let at = adjoint(&a);
        for (i, j, v) in b.matrix().triplets() {
            assert!((at.matrix().get(i, j) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_h_transform_is_identity() {
        let (grid, ex) = build_grid(1, 1.0, 0.1, &[1.0]).unwrap();
        let c = CoefficientField::linear_drift(&grid, 1.0).unwrap();
        let op = discretize(&c, &ex, 0).unwrap();
        let one = ScalarField::constant(&op, 1.0);
        assert_eq!(h_transform(&op, &one).unwrap(), op);
    }

    #[test]
    fn h_transform_rejects_nonpositive_fields() {
        let (c, ex) = laplace_1d(0.1);
        let op = discretize(&c, &ex, 0).unwrap();
        let mut h = ScalarField::constant(&op, 1.0);
        h.values[3] = 0.0;
        match h_transform(&op, &h) {
            Err(Error::Domain(msg)) => assert!(msg.contains("-0.6"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nodes_round_trip() {
        let (grid, ex) = build_grid(2, 2.0, 0.5, &[1.0, 2.0]).unwrap();
        let c = CoefficientField::constant(&grid, 1.0, &[0.0, 0.0], 0.0).unwrap();
        let op = discretize(&c, &ex, 1).unwrap();
        for u in 0..op.len() {
            assert_eq!(op.node_at(&op.coordinates(u)), Some(u));
        }
        assert_eq!(op.coordinates(op.anchor()), vec![0.0, 0.0]);
        let inner = discretize(&c, &ex, 0).unwrap();
        let emb = inner.embedding_into(&op).unwrap();
        assert_eq!(emb.len(), 9);
        assert_eq!(op.coordinates(emb[4]), vec![0.0, 0.0]);
    }
}
