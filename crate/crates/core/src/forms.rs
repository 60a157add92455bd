//! Finite element matrices of the quadratic forms `E0`, `E1` and `J` at a fixed `|xi|`.
//!
//! Each matrix `M` represents its form as `x^T M x`. Unknowns are the nodal
//! values of `(phi, psi)` interleaved per node, with the two Dirichlet end
//! nodes removed. With `a = P'(rho0) rho0`:
//!
//! ```text
//! E0 = sigma xi^2 / 2 psi(0)^2 + 1/2 int a (psi' + xi phi)^2 - 2 g rho0 xi phi psi
//! E1 = 1/2 int (delta0 + eps0/3)(psi' + xi phi)^2 + eps0 [(phi' - xi psi)^2 + (psi' - xi phi)^2]
//! J  = 1/2 int rho0 (phi^2 + psi^2)
//! ```
//!
//! Interface stress conditions are natural and are not imposed.

use std::io::Write;
use std::sync::Arc;

use crate::band::SymBand;
use crate::error::{Error, Result, Side};
use crate::mesh::{shape, Mesh};
use crate::profile::{Coefficients, SteadyProfile};

/// Profile coefficients and shape functions at one quadrature point.
#[derive(Debug, Clone)]
pub struct QuadSample {
    pub element: usize,
    pub side: Side,
    pub x: f64,
    pub weight: f64,
    pub coef: Coefficients,
    /// `P'(rho0)` at the point.
    pub slope: f64,
    pub basis: [f64; 3],
    pub dbasis: [f64; 3],
}

/// A mesh paired with a profile, with coefficients cached at quadrature points.
/// Independent of `|xi|`, so one instance serves a whole sweep.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub profile: Arc<SteadyProfile>,
    pub mesh: Arc<Mesh>,
    pub samples: Vec<QuadSample>,
}

impl Discretization {
    pub fn new(profile: Arc<SteadyProfile>, mesh: Arc<Mesh>) -> Result<Self> {
        let geo = &profile.geometry;
        let tol = 1e-12 * (geo.m + geo.ell);
        if (mesh.lower() + geo.m).abs() > tol || (mesh.upper() - geo.ell).abs() > tol {
            return Err(Error::Config(format!(
                "mesh spans [{}, {}] but the slab is [-{}, {}]",
                mesh.lower(),
                mesh.upper(),
                geo.m,
                geo.ell
            )));
        }
        let (qx, qw) = mesh.quadrature();
        let mut samples = Vec::with_capacity(mesh.n_elements() * qx.len());
        for e in 0..mesh.n_elements() {
            let (a, b) = mesh.element_bounds(e);
            let h = b - a;
            let side = mesh.element_side(e);
            for (&t, &w) in qx.iter().zip(qw) {
                let x = 0.5 * (a + b) + 0.5 * h * t;
                let coef = profile.coefficients(side, x)?;
                let slope = profile.fluid(side).law.slope(coef.rho)?;
                let s = shape(mesh.order(), t, h);
                samples.push(QuadSample {
                    element: e,
                    side,
                    x,
                    weight: 0.5 * h * w,
                    coef,
                    slope,
                    basis: s[0],
                    dbasis: s[1],
                });
            }
        }
        Ok(Self { profile, mesh, samples })
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    /// Global `(phi, psi)` dof indices of the local nodes of element `e`.
    fn local_dofs(&self, e: usize) -> Vec<Option<(usize, usize)>> {
        self.mesh.element_nodes(e).map(|n| self.mesh.node_dofs(n)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FormSet {
    pub xi_mag: f64,
    pub e0: SymBand,
    pub e1: SymBand,
    pub j: SymBand,
    pub interface_dof: usize,
    pub disc: Arc<Discretization>,
}

/// Row vector of a linear functional of `(phi, phi', psi, psi')` at a quadrature point,
/// expressed on the local dofs.
struct Functional {
    phi: [f64; 3],
    psi: [f64; 3],
}

impl Functional {
    fn new(q: &QuadSample, c_phi: f64, c_dphi: f64, c_psi: f64, c_dpsi: f64) -> Self {
        let mut f = Functional {
            phi: [0.0; 3],
            psi: [0.0; 3],
        };
        for k in 0..3 {
            f.phi[k] = c_phi * q.basis[k] + c_dphi * q.dbasis[k];
            f.psi[k] = c_psi * q.basis[k] + c_dpsi * q.dbasis[k];
        }
        f
    }
}

/// Accumulate `w * (f . x) (g . x)` symmetrized into `m`.
fn add_product(m: &mut SymBand, dofs: &[Option<(usize, usize)>], f: &Functional, g: &Functional, w: f64) {
    let entries = |fun: &Functional| {
        let mut v = Vec::with_capacity(6);
        for (k, d) in dofs.iter().enumerate() {
            if let Some((ip, is)) = d {
                v.push((*ip, fun.phi[k]));
                v.push((*is, fun.psi[k]));
            }
        }
        v
    };
    let fe = entries(f);
    let ge = entries(g);
    for &(i, fi) in &fe {
        if fi == 0.0 {
            continue;
        }
        for &(j, gj) in &ge {
            if gj == 0.0 {
                continue;
            }
            let v = 0.5 * w * fi * gj;
            // add() fills the (i, j)/(j, i) pair once; halving keeps the quadratic form exact.
            if i == j {
                m.add(i, i, 2.0 * v);
            } else {
                m.add(i, j, v);
            }
        }
    }
}

fn add_square(m: &mut SymBand, dofs: &[Option<(usize, usize)>], f: &Functional, w: f64) {
    add_product(m, dofs, f, f, w);
}

/// Assemble the three forms for `xi_mag > 0`.
pub fn assemble(disc: &Arc<Discretization>, xi_mag: f64) -> Result<FormSet> {
    if !(xi_mag > 0.0) || !xi_mag.is_finite() {
        return Err(Error::Domain(format!("|xi| must be positive, got {xi_mag}")));
    }
    Ok(assemble_any(disc, xi_mag))
}

/// Convenience wrapper building the discretization on the fly.
pub fn assemble_on(profile: Arc<SteadyProfile>, mesh: Arc<Mesh>, xi_mag: f64) -> Result<FormSet> {
    let disc = Arc::new(Discretization::new(profile, mesh)?);
    assemble(&disc, xi_mag)
}

/// Forms for a lattice frequency, which may be the zero mode.
pub fn assemble_lattice_mode(disc: &Arc<Discretization>, xi_mag: f64) -> Result<FormSet> {
    if !(xi_mag >= 0.0) || !xi_mag.is_finite() {
        return Err(Error::Domain(format!("|xi| must be nonnegative, got {xi_mag}")));
    }
    Ok(assemble_any(disc, xi_mag))
}

fn assemble_any(disc: &Arc<Discretization>, xi: f64) -> FormSet {
    let n = disc.n_dofs();
    let kd = disc.mesh.bandwidth();
    let g = disc.profile.geometry.g;
    let sigma = disc.profile.geometry.sigma;
    let mut e0 = SymBand::zeros(n, kd);
    let mut e1 = SymBand::zeros(n, kd);
    let mut jm = SymBand::zeros(n, kd);
    let mut current = usize::MAX;
    let mut dofs = Vec::new();
    for q in &disc.samples {
        if q.element != current {
            current = q.element;
            dofs = disc.local_dofs(current);
        }
        let c = &q.coef;
        let w = q.weight;
        let div = Functional::new(q, xi, 0.0, 0.0, 1.0); // psi' + xi phi
        let curl = Functional::new(q, 0.0, 1.0, -xi, 0.0); // phi' - xi psi
        let skew = Functional::new(q, -xi, 0.0, 0.0, 1.0); // psi' - xi phi
        let phi = Functional::new(q, 1.0, 0.0, 0.0, 0.0);
        let psi = Functional::new(q, 0.0, 0.0, 1.0, 0.0);

        add_square(&mut e0, &dofs, &div, 0.5 * w * c.a);
        // -g rho xi phi psi as a symmetric product
        add_product(&mut e0, &dofs, &phi, &psi, -g * c.rho * xi * w);

        add_square(&mut e1, &dofs, &div, 0.5 * w * (c.delta + c.eps / 3.0));
        add_square(&mut e1, &dofs, &curl, 0.5 * w * c.eps);
        add_square(&mut e1, &dofs, &skew, 0.5 * w * c.eps);

        add_square(&mut jm, &dofs, &phi, 0.5 * w * c.rho);
        add_square(&mut jm, &dofs, &psi, 0.5 * w * c.rho);
    }
    let interface_dof = disc.mesh.interface_psi_dof();
    e0.add(interface_dof, interface_dof, 0.5 * sigma * xi * xi);
    FormSet {
        xi_mag: xi,
        e0,
        e1,
        j: jm,
        interface_dof,
        disc: Arc::clone(disc),
    }
}

/// `E0` assembled from the completed square
/// `1/2 int a (psi' + xi phi - g psi / P')^2 + (sigma xi^2 - g [[rho0]]) / 2 psi(0)^2`,
/// an independent route to the same form.
pub fn assemble_completed_square(disc: &Arc<Discretization>, xi: f64) -> Result<SymBand> {
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("|xi| must be positive, got {xi}")));
    }
    let n = disc.n_dofs();
    let kd = disc.mesh.bandwidth();
    let geo = &disc.profile.geometry;
    let mut e0 = SymBand::zeros(n, kd);
    let mut current = usize::MAX;
    let mut dofs = Vec::new();
    for q in &disc.samples {
        if q.element != current {
            current = q.element;
            dofs = disc.local_dofs(current);
        }
        let f = Functional::new(q, xi, 0.0, -geo.g / q.slope, 1.0);
        add_square(&mut e0, &dofs, &f, 0.5 * q.weight * q.coef.a);
    }
    let i = disc.mesh.interface_psi_dof();
    e0.add(i, i, 0.5 * (geo.sigma * xi * xi - geo.g * disc.profile.jump()));
    Ok(e0)
}

impl FormSet {
    pub fn n_dofs(&self) -> usize {
        self.j.dim()
    }

    pub fn check_layout(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_dofs() {
            return Err(Error::Layout {
                expected: self.n_dofs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `E0 + s E1`.
    pub fn pencil(&self, s: f64) -> SymBand {
        SymBand::combine(&[(1.0, &self.e0), (s, &self.e1)])
    }

    pub fn psi0(&self, x: &[f64]) -> f64 {
        x[self.interface_dof]
    }

    /// Write the three matrices as `matrix row col value` lines (lower triangle, 0-based).
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# xi = {:.17e}, n = {}, interface_dof = {}", self.xi_mag, self.n_dofs(), self.interface_dof)?;
        writeln!(out, "# matrix row col value (symmetric; lower triangle)")?;
        for (name, m) in [("E0", &self.e0), ("E1", &self.e1), ("J", &self.j)] {
            for (i, j, v) in m.triplets() {
                writeln!(out, "{name} {i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

/// `x^T (E0 + s E1) x`.
pub fn form_value(forms: &FormSet, x: &[f64], s: f64) -> Result<f64> {
    forms.check_layout(x)?;
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("s must be nonnegative, got {s}")));
    }
    Ok(forms.e0.quad(x) + s * forms.e1.quad(x))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::profile::tests::default_profile;
    use crate::quadrature::adaptive_integrate;

    pub fn default_disc(per_side: usize, order: usize, sigma: f64) -> Arc<Discretization> {
        let profile = Arc::new(default_profile(sigma));
        let mesh = Arc::new(Mesh::uniform(1.0, 1.0, per_side, order).unwrap());
        Arc::new(Discretization::new(profile, mesh).unwrap())
    }

    fn interpolate(disc: &Discretization, phi: impl Fn(f64) -> f64, psi: impl Fn(f64) -> f64) -> Vec<f64> {
        let nodes = disc.mesh.nodes();
        let ph: Vec<f64> = nodes.iter().map(|&x| phi(x)).collect();
        let ps: Vec<f64> = nodes.iter().map(|&x| psi(x)).collect();
        crate::mesh::join_dofs(&disc.mesh, &ph, &ps).unwrap()
    }

    #[test]
    fn matrices_symmetric_and_zero_at_origin() {
        let disc = default_disc(8, 2, 0.1);
        let f = assemble(&disc, 1.3).unwrap();
        let zero = vec![0.0; f.n_dofs()];
        assert_eq!(form_value(&f, &zero, 2.0).unwrap(), 0.0);
        assert_eq!(f.j.quad(&zero), 0.0);
        let d = f.e0.to_dense();
        assert_eq!(d.clone(), d.transpose());
        assert!(matches!(assemble(&disc, 0.0), Err(Error::Domain(_))));
        assert!(matches!(form_value(&f, &zero[1..], 1.0), Err(Error::Layout { .. })));
    }

    #[test]
    fn forms_match_high_accuracy_quadrature() {
        // smooth fields vanishing at both ends, integrated independently
        let phi = |x: f64| (1.0 - x * x) * (0.3 + x);
        let dphi = |x: f64| -2.0 * x * (0.3 + x) + (1.0 - x * x);
        let psi = |x: f64| (1.0 - x * x) * (1.0 + 0.5 * x * x);
        let dpsi = |x: f64| -2.0 * x * (1.0 + 0.5 * x * x) + (1.0 - x * x) * x;
        let xi = 0.8;
        let (g, sigma, eps) = (1.0, 0.1, 0.1);
        let rho = |x: f64| if x < 0.0 { (-x / 2.0).exp() } else { 2.0 * (-x).exp() };
        let a = |x: f64| if x < 0.0 { 2.0 * rho(x) } else { rho(x) };
        let both = |f: &dyn Fn(f64) -> f64| {
            adaptive_integrate(f, -1.0, 0.0, 1e-13) + adaptive_integrate(f, 0.0, 1.0, 1e-13)
        };
        let e0 = 0.5 * sigma * xi * xi * psi(0.0).powi(2)
            + 0.5 * both(&|x| a(x) * (dpsi(x) + xi * phi(x)).powi(2) - 2.0 * g * rho(x) * xi * phi(x) * psi(x));
        let e1 = 0.5
            * both(&|x| {
                (eps / 3.0) * (dpsi(x) + xi * phi(x)).powi(2)
                    + eps * ((dphi(x) - xi * psi(x)).powi(2) + (dpsi(x) - xi * phi(x)).powi(2))
            });
        let j = 0.5 * both(&|x| rho(x) * (phi(x).powi(2) + psi(x).powi(2)));

        // Forms at the interpolant converge to the exact values at rate h^(p+1) or better.
        let errs: Vec<[f64; 3]> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let disc = default_disc(n, 2, sigma);
                let f = assemble(&disc, xi).unwrap();
                let x = interpolate(&disc, phi, psi);
                [(f.e0.quad(&x) - e0).abs(), (f.e1.quad(&x) - e1).abs(), (f.j.quad(&x) - j).abs()]
            })
            .collect();
        for k in 0..3 {
            assert!(errs[2][k] < 1e-6, "form {k}: {:?}", errs);
            assert!(errs[1][k] / errs[2][k] > 3.5, "form {k}: {:?}", errs);
        }
    }

    #[test]
    fn completed_square_agrees() {
        let disc = default_disc(64, 2, 0.1);
        let xi = 1.7;
        let f = assemble(&disc, xi).unwrap();
        let cs = assemble_completed_square(&disc, xi).unwrap();
        let x = interpolate(&disc, |x| (1.0 - x * x) * x.cos(), |x| (1.0 - x * x) * (1.0 + x));
        let (a, b) = (f.e0.quad(&x), cs.quad(&x));
        assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn e1_nonnegative_and_form_value_monotone_in_s() {
        let disc = default_disc(8, 1, 0.1);
        let f = assemble(&disc, 0.6).unwrap();
        let x: Vec<f64> = (0..f.n_dofs()).map(|i| ((i * 7 % 5) as f64) - 2.0).collect();
        assert!(f.e1.quad(&x) > 0.0);
        assert!(form_value(&f, &x, 2.0).unwrap() > form_value(&f, &x, 1.0).unwrap());
        assert_eq!(form_value(&f, &x, 0.0).unwrap(), f.e0.quad(&x));
    }

    #[test]
    fn dump_lists_all_three() {
        let disc = default_disc(2, 1, 0.1);
        let f = assemble(&disc, 1.0).unwrap();
        let mut buf = Vec::new();
        f.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\nE0 ") && text.contains("\nE1 ") && text.contains("\nJ "));
    }
}
