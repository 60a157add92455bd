//! One-dimensional Lagrange finite element meshes on `[-m, ell]` with a vertex at the interface.

use crate::error::{Error, Result, Side};
use crate::quadrature::gauss_legendre;

/// Default number of Gauss points per element.
pub const DEFAULT_QUAD_POINTS: usize = 3;

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<f64>,
    order: usize,
    quad_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    interface_vertex: usize,
}

impl Mesh {
    /// `per_side` equal elements on each layer.
    pub fn uniform(m: f64, ell: f64, per_side: usize, order: usize) -> Result<Self> {
        Self::uniform_split(m, ell, per_side, per_side, order)
    }

    pub fn uniform_split(m: f64, ell: f64, lower: usize, upper: usize, order: usize) -> Result<Self> {
        if lower == 0 || upper == 0 {
            return Err(Error::Config("`mesh.elements` must be at least 1 per side".into()));
        }
        let mut v: Vec<f64> = (0..lower).map(|i| -m + m * i as f64 / lower as f64).collect();
        v.extend((0..=upper).map(|i| ell * i as f64 / upper as f64));
        Self::new(v, order, DEFAULT_QUAD_POINTS)
    }

    pub fn new(vertices: Vec<f64>, order: usize, quad_points: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::Config(format!("`mesh.order` must be 1 or 2, got {order}")));
        }
        if quad_points < order + 1 {
            return Err(Error::Config(format!(
                "{quad_points} quadrature points cannot integrate order-{order} mass terms exactly"
            )));
        }
        if vertices.len() < 3 || vertices.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("mesh vertices must be strictly increasing, at least one element per side".into()));
        }
        let interface_vertex = vertices
            .iter()
            .position(|&x| x == 0.0)
            .ok_or_else(|| Error::Config("the interface x3 = 0 must be a mesh vertex".into()))?;
        if interface_vertex == 0 || interface_vertex == vertices.len() - 1 {
            return Err(Error::Config("the interface must be an interior vertex".into()));
        }
        let (quad_nodes, quad_weights) = gauss_legendre(quad_points);
        Ok(Self {
            vertices,
            order,
            quad_nodes,
            quad_weights,
            interface_vertex,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn n_elements(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn lower(&self) -> f64 {
        self.vertices[0]
    }

    pub fn upper(&self) -> f64 {
        self.vertices[self.vertices.len() - 1]
    }

    /// Largest element length.
    pub fn h_max(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn n_nodes(&self) -> usize {
        self.order * self.n_elements() + 1
    }

    pub fn interface_node(&self) -> usize {
        self.order * self.interface_vertex
    }

    /// Coordinates of all Lagrange nodes, including the two Dirichlet ends.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_nodes());
        for e in 0..self.n_elements() {
            let (a, b) = (self.vertices[e], self.vertices[e + 1]);
            for k in 0..self.order {
                out.push(a + (b - a) * k as f64 / self.order as f64);
            }
        }
        out.push(self.upper());
        out
    }

    pub fn element_nodes(&self, e: usize) -> std::ops::RangeInclusive<usize> {
        self.order * e..=self.order * (e + 1)
    }

    pub fn element_side(&self, e: usize) -> Side {
        if e < self.interface_vertex {
            Side::Lower
        } else {
            Side::Upper
        }
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.vertices[e], self.vertices[e + 1])
    }

    /// Free nodes are all nodes except the two ends; two dofs `(phi, psi)` each.
    pub fn n_dofs(&self) -> usize {
        2 * (self.n_nodes() - 2)
    }

    /// Half-bandwidth of the interleaved dof ordering.
    pub fn bandwidth(&self) -> usize {
        2 * self.order + 1
    }

    /// `(phi dof, psi dof)` of a node, `None` for the Dirichlet ends.
    pub fn node_dofs(&self, node: usize) -> Option<(usize, usize)> {
        if node == 0 || node + 1 >= self.n_nodes() {
            None
        } else {
            Some((2 * (node - 1), 2 * (node - 1) + 1))
        }
    }

    pub fn interface_psi_dof(&self) -> usize {
        self.node_dofs(self.interface_node()).expect("interface is interior").1
    }

    pub fn quadrature(&self) -> (&[f64], &[f64]) {
        (&self.quad_nodes, &self.quad_weights)
    }

    /// Element containing `x`; at a shared vertex the element on `side` of
    /// the interface wins, otherwise the left one.
    pub fn locate(&self, x: f64, side: Side) -> Result<usize> {
        let (lo, hi) = (self.lower(), self.upper());
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!("x3 = {x} outside the mesh [{lo}, {hi}]")));
        }
        if x == 0.0 {
            return Ok(match side {
                Side::Lower => self.interface_vertex - 1,
                Side::Upper => self.interface_vertex,
            });
        }
        let i = self.vertices.partition_point(|&v| v < x);
        Ok(i.saturating_sub(1).min(self.n_elements() - 1))
    }

    /// Nodal values at a point: value, first and second derivative of the interpolant.
    pub fn interpolate(&self, nodal: &[f64], x: f64, side: Side) -> Result<[f64; 3]> {
        if nodal.len() != self.n_nodes() {
            return Err(Error::Layout {
                expected: self.n_nodes(),
                got: nodal.len(),
            });
        }
        let e = self.locate(x, side)?;
        let (a, b) = self.element_bounds(e);
        let t = (2.0 * x - a - b) / (b - a);
        let basis = shape(self.order, t, b - a);
        let mut out = [0.0; 3];
        for (k, node) in self.element_nodes(e).enumerate() {
            for d in 0..3 {
                out[d] += basis[d][k] * nodal[node];
            }
        }
        Ok(out)
    }
}

/// Shape function values, first and second derivatives in physical
/// coordinates, for reference coordinate `t` in `[-1, 1]` and element length `h`.
pub fn shape(order: usize, t: f64, h: f64) -> [[f64; 3]; 3] {
    let j = 2.0 / h;
    match order {
        1 => [[0.5 * (1.0 - t), 0.5 * (1.0 + t), 0.0], [-0.5 * j, 0.5 * j, 0.0], [0.0; 3]],
        2 => [
            [0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
            [(t - 0.5) * j, -2.0 * t * j, (t + 0.5) * j],
            [j * j, -2.0 * j * j, j * j],
        ],
        _ => unreachable!("mesh order validated at construction"),
    }
}

/// Split a dof vector into nodal `(phi, psi)` arrays including zero end values.
pub fn split_dofs(mesh: &Mesh, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != mesh.n_dofs() {
        return Err(Error::Layout {
            expected: mesh.n_dofs(),
            got: x.len(),
        });
    }
    let n = mesh.n_nodes();
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; n];
    for k in 1..n - 1 {
        phi[k] = x[2 * (k - 1)];
        psi[k] = x[2 * (k - 1) + 1];
    }
    Ok((phi, psi))
}

/// Inverse of [`split_dofs`]; end values are dropped.
pub fn join_dofs(mesh: &Mesh, phi: &[f64], psi: &[f64]) -> Result<Vec<f64>> {
    let n = mesh.n_nodes();
    if phi.len() != n || psi.len() != n {
        return Err(Error::Layout {
            expected: n,
            got: phi.len().min(psi.len()),
        });
    }
    let mut x = vec![0.0; mesh.n_dofs()];
    for k in 1..n - 1 {
        x[2 * (k - 1)] = phi[k];
        x[2 * (k - 1) + 1] = psi[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_layout() {
        let m = Mesh::uniform(1.0, 2.0, 4, 2).unwrap();
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.n_nodes(), 17);
        assert_eq!(m.n_dofs(), 30);
        let nodes = m.nodes();
        assert_eq!(nodes[m.interface_node()], 0.0);
        assert_eq!(nodes[0], -1.0);
        assert_eq!(*nodes.last().unwrap(), 2.0);
        assert_eq!(m.element_side(3), Side::Lower);
        assert_eq!(m.element_side(4), Side::Upper);
        assert_eq!(m.interface_psi_dof(), 2 * (8 - 1) + 1);
    }

    #[test]
    fn rejects_bad_meshes() {
        assert!(Mesh::new(vec![-1.0, -0.5, 1.0], 2, 3).is_err());
        assert!(Mesh::new(vec![-1.0, 0.0, 1.0], 3, 3).is_err());
        assert!(Mesh::new(vec![-1.0, 0.0, 0.0, 1.0], 1, 3).is_err());
        assert!(Mesh::uniform(1.0, 1.0, 0, 1).is_err());
    }

    #[test]
    fn interpolation_reproduces_quadratics() {
        let m = Mesh::uniform(1.0, 1.0, 3, 2).unwrap();
        let f = |x: f64| 3.0 * x * x - x + 0.5;
        let nodal: Vec<f64> = m.nodes().iter().map(|&x| f(x)).collect();
        for &x in &[-0.77, -0.2, 0.0, 0.41, 0.99] {
            let [v, d, dd] = m.interpolate(&nodal, x, Side::Upper).unwrap();
            assert!((v - f(x)).abs() < 1e-13);
            assert!((d - (6.0 * x - 1.0)).abs() < 1e-12);
            assert!((dd - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_functions_partition_unity() {
        for order in 1..=2 {
            for &t in &[-1.0, -0.3, 0.2, 1.0] {
                let s = shape(order, t, 0.7);
                let sum: f64 = s[0].iter().sum();
                let dsum: f64 = s[1].iter().sum();
                assert!((sum - 1.0).abs() < 1e-15 && dsum.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dof_round_trip() {
        let m = Mesh::uniform(1.0, 1.0, 2, 1).unwrap();
        let x: Vec<f64> = (0..m.n_dofs()).map(|i| i as f64).collect();
        let (phi, psi) = split_dofs(&m, &x).unwrap();
        assert_eq!(phi[0], 0.0);
        assert_eq!(join_dofs(&m, &phi, &psi).unwrap(), x);
        assert!(matches!(split_dofs(&m, &x[1..]), Err(Error::Layout { .. })));
    }
}
