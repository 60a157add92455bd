//! Three-dimensional growing solutions built from reduced-frame modes.
//!
//! A mode at `xi = |xi| (cos a, sin a)` has the complex profile
//! `w(xi, x3) = (-i phi cos a, -i phi sin a, psi)`, where `phi, psi` solve the
//! reduced problem at `|xi|`. Fields are superpositions of
//! `w(xi, x3) e^{lambda t} e^{i x'.xi}`: two conjugate lattice terms in the
//! periodic case, a polar quadrature of a radial profile `f(|xi|)` otherwise.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dispersion::{critical_period, growth_rate, lattice_modes, GrowthOutcome, ModeSolution, ModeSolver};
use crate::error::{Error, Result, Side};
use crate::profile::SteadyProfile;
use crate::quadrature::{gauss_legendre, gauss_legendre_on};

pub const DEFAULT_RADIAL_NODES: usize = 16;
pub const DEFAULT_ANGULAR_NODES: usize = 64;
/// Gauss points per element for `x3` integrals in norms.
const NORM_QUAD_POINTS: usize = 5;
/// Relative tolerance on `|xi|` agreement in [`extend_to_plane`].
const MAGNITUDE_TOL: f64 = 1e-12;

/// Reduced-frame values and up to two `x3` derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub phi: [f64; 3],
    pub psi: [f64; 3],
}

/// Evaluate a mode and its derivatives at `x3`; second derivatives come from
/// the mode equations, not from the discrete profile.
pub fn mode_jet(mode: &ModeSolution, x3: f64, side: Side) -> Result<Jet> {
    let disc = &mode.forms.disc;
    let mesh = &disc.mesh;
    let profile = &disc.profile;
    let [f, df, _] = mesh.interpolate(&mode.phi, x3, side)?;
    let [p, dp, _] = mesh.interpolate(&mode.psi, x3, side)?;
    let c = profile.coefficients(side, x3)?;
    let g = profile.geometry.g;
    let s = mode.s_star;
    let mu = -mode.lambda * mode.lambda;
    let xi = mode.xi_mag;
    let (et, det) = (s * c.eps, s * c.deps);
    let (dt, ddt) = (s * c.delta, s * c.ddelta);
    let big_b = 4.0 * et / 3.0 + dt + c.a;
    let dbig_b = 4.0 * det / 3.0 + ddt + c.da;
    let big_c = dt + et / 3.0 + c.a;
    let dbig_c = ddt + det / 3.0 + c.da;
    let ddf = (-det * df + xi * xi * big_b * f + xi * (big_c * dp + (det - g * c.rho) * p) - mu * c.rho * f) / et;
    let ddp = (-dbig_b * dp + et * xi * xi * p - xi * (dbig_c * f + big_c * df + (g * c.rho - det) * f) - mu * c.rho * p)
        / big_b;
    Ok(Jet {
        phi: [f, df, ddf],
        psi: [p, dp, ddp],
    })
}

/// A reduced mode rotated onto a planar frequency.
#[derive(Debug, Clone)]
pub struct NormalMode3D {
    pub xi: [f64; 2],
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
}

impl NormalMode3D {
    /// `w(xi, x3)` at node `k` as `(-i phi, -i theta, psi)`.
    pub fn w_hat(&self, k: usize) -> [Complex64; 3] {
        let mi = Complex64::new(0.0, -1.0);
        [mi * self.phi[k], mi * self.theta[k], Complex64::new(self.psi[k], 0.0)]
    }
}

/// `(phi, theta) = R^{-1} (phi_reduced, 0)` for the rotation `R` taking `xi` to `(|xi|, 0)`.
pub fn extend_to_plane(mode: &ModeSolution, xi: [f64; 2]) -> Result<NormalMode3D> {
    let r = xi[0].hypot(xi[1]);
    if (r - mode.xi_mag).abs() > MAGNITUDE_TOL * mode.xi_mag.max(1.0) {
        return Err(Error::Domain(format!(
            "|xi| = {r} does not match the mode frequency {}",
            mode.xi_mag
        )));
    }
    let (c, s) = (xi[0] / r, xi[1] / r);
    Ok(NormalMode3D {
        xi,
        lambda: mode.lambda,
        phi: mode.phi.iter().map(|v| c * v).collect(),
        theta: mode.phi.iter().map(|v| s * v).collect(),
        psi: mode.psi.clone(),
    })
}

/// Standard bump `amp exp(-1 / (1 - u^2))` on `[a, b]`, `u` the centered coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub a: f64,
    pub b: f64,
    pub amp: f64,
}

impl Bump {
    /// Amplitude 1 on the middle 40% of `(0, xi_c)`.
    pub fn default_for(xi_c: f64) -> Self {
        Self {
            a: 0.3 * xi_c,
            b: 0.7 * xi_c,
            amp: 1.0,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let u = (2.0 * r - self.a - self.b) / (self.b - self.a);
        if u.abs() >= 1.0 {
            0.0
        } else {
            self.amp * (-1.0 / (1.0 - u * u)).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Eta,
    Velocity,
    Density,
}

#[derive(Debug, Clone)]
struct RadialNode {
    r: f64,
    /// Gauss weight times `r`.
    weight: f64,
    f: f64,
    mode: Arc<ModeSolution>,
}

#[derive(Debug, Clone)]
enum Representation {
    Lattice { period: f64, xi: [f64; 2], mode: Arc<ModeSolution> },
    Radial { nodes: Vec<RadialNode>, min_angular: usize },
}

/// Complex field values at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FieldValue {
    pub eta: [Complex64; 3],
    pub v: [Complex64; 3],
    pub q: Complex64,
}

impl FieldValue {
    fn all(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.eta.iter().chain(&self.v).copied().chain(std::iter::once(self.q))
    }

    /// Largest `|Im|` over components relative to the largest magnitude.
    pub fn imaginary_ratio(&self) -> f64 {
        let mag = self.all().fold(0.0f64, |m, z| m.max(z.norm()));
        let im = self.all().fold(0.0f64, |m, z| m.max(z.im.abs()));
        if mag == 0.0 {
            0.0
        } else {
            im / mag
        }
    }

    pub fn real(&self) -> RealSample {
        RealSample {
            eta: self.eta.map(|z| z.re),
            v: self.v.map(|z| z.re),
            q: self.q.re,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RealSample {
    pub eta: [f64; 3],
    pub v: [f64; 3],
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct SynthesizedField {
    repr: Representation,
    profile: Arc<SteadyProfile>,
    /// Smallest rate on the support (periodic: `Lambda_L`).
    pub lambda0: f64,
    /// Largest rate on the support (periodic: `Lambda_L`).
    pub lambda_top: f64,
}

/// Growing mode on the `2 pi L` periodic cell from the maximizing lattice pair.
pub fn synthesize_periodic(solver: &ModeSolver, period: f64) -> Result<SynthesizedField> {
    let lattice = lattice_modes(solver, period, None)?;
    if lattice.certificate || lattice.points.is_empty() {
        return Err(Error::Config(format!(
            "L = {period} is at or below the critical period {:.6}: the lattice stability certificate holds \
             and no growing mode exists; use `lattice` to inspect",
            critical_period(solver.profile())
        )));
    }
    let top = lattice.lambda_l.expect("nonempty lattice has a maximum");
    // Deterministic representative of the maximizing pair: first point in (k1, k2) order with k1 > 0 or (k1 = 0, k2 > 0).
    let best = lattice
        .points
        .iter()
        .filter(|p| p.lambda == top && (p.k[0] > 0 || (p.k[0] == 0 && p.k[1] > 0)))
        .min_by_key(|p| p.k)
        .expect("maximizing points come in antipodal pairs");
    let xi = [best.k[0] as f64 / period, best.k[1] as f64 / period];
    let mode = match growth_rate(solver, best.xi)? {
        GrowthOutcome::Unstable(m) => Arc::new(*m),
        GrowthOutcome::Stable { .. } => return Err(Error::Solver("maximizing lattice mode lost its growth".into())),
    };
    Ok(SynthesizedField {
        repr: Representation::Lattice { period, xi, mode },
        profile: Arc::clone(&solver.disc.profile),
        lambda0: top,
        lambda_top: top,
    })
}

/// Fourier synthesis over the annulus `supp f` with `radial` Gauss nodes.
pub fn synthesize_nonperiodic(solver: &ModeSolver, f: Bump, radial: usize, min_angular: usize) -> Result<SynthesizedField> {
    let xi_c = solver.profile().xi_c();
    if !(f.a > 0.0 && f.b > f.a && f.b < xi_c) {
        return Err(Error::Config(format!(
            "bump support [{}, {}] must lie inside (0, {xi_c})",
            f.a, f.b
        )));
    }
    if radial == 0 || min_angular < 4 || min_angular % 2 == 1 {
        return Err(Error::Config("need radial >= 1 and an even angular count >= 4".into()));
    }
    let (rs, ws) = gauss_legendre_on(radial, f.a, f.b);
    let solved: Vec<Result<GrowthOutcome>> = rs
        .par_iter()
        .chain([f.a, f.b].par_iter())
        .map(|&r| growth_rate(solver, r))
        .collect();
    let mut nodes = Vec::with_capacity(radial);
    let mut lambda0 = f64::INFINITY;
    let mut lambda_top: f64 = 0.0;
    for (i, o) in solved.into_iter().enumerate() {
        let mode = match o? {
            GrowthOutcome::Unstable(m) => Arc::new(*m),
            GrowthOutcome::Stable { .. } => {
                return Err(Error::Solver(format!("no growing mode inside the bump support (node {i})")))
            }
        };
        lambda0 = lambda0.min(mode.lambda);
        lambda_top = lambda_top.max(mode.lambda);
        if i < radial {
            nodes.push(RadialNode {
                r: rs[i],
                weight: ws[i] * rs[i],
                f: f.eval(rs[i]),
                mode,
            });
        }
    }
    Ok(SynthesizedField {
        repr: Representation::Radial { nodes, min_angular },
        profile: Arc::clone(&solver.disc.profile),
        lambda0,
        lambda_top,
    })
}

impl SynthesizedField {
    pub fn is_periodic(&self) -> bool {
        matches!(self.repr, Representation::Lattice { .. })
    }

    /// Lattice frequency `xi_1` of a periodic field.
    pub fn lattice_xi(&self) -> Option<[f64; 2]> {
        match &self.repr {
            Representation::Lattice { xi, .. } => Some(*xi),
            _ => None,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match &self.repr {
            Representation::Lattice { period, .. } => Some(*period),
            _ => None,
        }
    }

    /// Distinct reduced modes used by the representation.
    pub fn modes(&self) -> Vec<Arc<ModeSolution>> {
        match &self.repr {
            Representation::Lattice { mode, .. } => vec![Arc::clone(mode)],
            Representation::Radial { nodes, .. } => nodes.iter().map(|n| Arc::clone(&n.mode)).collect(),
        }
    }

    /// Angular node count used at horizontal radius `rho`: even, and enough to
    /// resolve `exp(i r rho cos a)` for the outermost radial node.
    fn angular_count(&self, rho: f64) -> usize {
        match &self.repr {
            Representation::Lattice { .. } => 0,
            Representation::Radial { nodes, min_angular } => {
                let r_max = nodes.iter().fold(0.0f64, |m, n| m.max(n.r));
                let need = (1.5 * r_max * rho).ceil() as usize + 40;
                let n = need.max(*min_angular);
                n + n % 2
            }
        }
    }

    /// Complex field at `x`; at `x3 = 0` the one-sided limit from `side` is used.
    pub fn evaluate_on(&self, x: [f64; 3], t: f64, side: Side) -> Result<FieldValue> {
        let mut out = FieldValue::default();
        let rho = self.profile.rho(side, x[2])?;
        let mut add = |xi: [f64; 2], amp: f64, mode: &ModeSolution, jet: &Jet| {
            let r = mode.xi_mag;
            let (ca, sa) = (xi[0] / r, xi[1] / r);
            let phase = Complex64::from_polar(amp * (mode.lambda * t).exp(), x[0] * xi[0] + x[1] * xi[1]);
            let mi = Complex64::new(0.0, -1.0);
            let w = [mi * jet.phi[0] * ca, mi * jet.phi[0] * sa, Complex64::new(jet.psi[0], 0.0)];
            for k in 0..3 {
                out.eta[k] += w[k] * phase;
                out.v[k] += w[k] * phase * mode.lambda;
            }
            out.q += phase * (-rho * (r * jet.phi[0] + jet.psi[1]));
        };
        match &self.repr {
            Representation::Lattice { xi, mode, .. } => {
                let jet = mode_jet(mode, x[2], side)?;
                add(*xi, 1.0, mode, &jet);
                add([-xi[0], -xi[1]], 1.0, mode, &jet);
            }
            Representation::Radial { nodes, .. } => {
                let n_alpha = self.angular_count(x[0].hypot(x[1]));
                let d_alpha = 2.0 * PI / n_alpha as f64;
                for node in nodes {
                    let jet = mode_jet(&node.mode, x[2], side)?;
                    let amp = node.weight * node.f * d_alpha / (4.0 * PI * PI);
                    for j in 0..n_alpha {
                        let a = j as f64 * d_alpha;
                        add([node.r * a.cos(), node.r * a.sin()], amp, &node.mode, &jet);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: [f64; 3], t: f64) -> Result<FieldValue> {
        self.evaluate_on(x, t, SteadyProfile::side_of(x[2]))
    }

    /// Piecewise Sobolev norm of order `k` computed on the Fourier side.
    /// `Eta` and `Velocity` allow `k <= 2`, `Density` allows `k <= 1`.
    pub fn sobolev_norm(&self, kind: FieldKind, k: usize, t: f64) -> Result<f64> {
        let cap = if kind == FieldKind::Density { 1 } else { 2 };
        if k > cap {
            return Err(Error::Domain(format!(
                "order {k} exceeds the {cap} derivatives available for {kind:?}"
            )));
        }
        let terms: Vec<(f64, &ModeSolution)> = match &self.repr {
            Representation::Lattice { period, mode, .. } => {
                // two conjugate terms, each with Parseval weight (2 pi L)^2
                vec![(2.0 * (2.0 * PI * period).powi(2), mode.as_ref())]
            }
            Representation::Radial { nodes, .. } => nodes
                .iter()
                .map(|n| (n.weight * 2.0 * PI * n.f * n.f / (4.0 * PI * PI), n.mode.as_ref()))
                .collect(),
        };
        let mut total = 0.0;
        for (w, mode) in terms {
            let growth = (2.0 * mode.lambda * t).exp();
            let rate = if kind == FieldKind::Velocity { mode.lambda * mode.lambda } else { 1.0 };
            let r2 = mode.xi_mag * mode.xi_mag;
            let derivs = derivative_norms(&self.profile, mode, kind, k)?;
            let sum: f64 = (0..=k).map(|j| (1.0 + r2).powi((k - j) as i32) * derivs[j]).sum();
            total += w * growth * rate * sum;
        }
        Ok(total.sqrt())
    }

    /// Complex samples on a rectilinear grid; `x3` varies fastest, then `x2`.
    pub fn sample_grid(&self, grid: &Grid, t: f64) -> Result<Vec<([f64; 3], FieldValue)>> {
        let points = grid.points();
        points
            .par_iter()
            .map(|&x| self.evaluate(x, t).map(|v| (x, v)))
            .collect()
    }

    /// `int |field|^2` over one periodic cell by direct quadrature of the real
    /// field: trapezoid with `n_xy` points per horizontal direction, Gauss in `x3`.
    pub fn direct_l2_periodic(&self, kind: FieldKind, t: f64, n_xy: usize) -> Result<f64> {
        let period = self
            .period()
            .ok_or_else(|| Error::Domain("direct cell quadrature needs a periodic field".into()))?;
        let mode = &self.modes()[0];
        let mesh = &mode.forms.disc.mesh;
        let (gx, gw) = gauss_legendre(NORM_QUAD_POINTS);
        let h = 2.0 * PI * period / n_xy as f64;
        let mut total = 0.0;
        for e in 0..mesh.n_elements() {
            let (a, b) = mesh.element_bounds(e);
            let side = mesh.element_side(e);
            for (t3, w3) in gx.iter().zip(&gw) {
                let x3 = 0.5 * (a + b) + 0.5 * (b - a) * t3;
                let w = 0.5 * (b - a) * w3 * h * h;
                for i in 0..n_xy {
                    for j in 0..n_xy {
                        let v = self.evaluate_on([i as f64 * h, j as f64 * h, x3], t, side)?.real();
                        let sq = match kind {
                            FieldKind::Eta => v.eta.iter().map(|c| c * c).sum::<f64>(),
                            FieldKind::Velocity => v.v.iter().map(|c| c * c).sum::<f64>(),
                            FieldKind::Density => v.q * v.q,
                        };
                        total += w * sq;
                    }
                }
            }
        }
        Ok(total.sqrt())
    }
}

/// `||d^j coefficient||^2_{L^2(-m, ell)}` for `j = 0..=k`, integrated side by side.
fn derivative_norms(profile: &SteadyProfile, mode: &ModeSolution, kind: FieldKind, k: usize) -> Result<Vec<f64>> {
    let mesh = &mode.forms.disc.mesh;
    let (gx, gw) = gauss_legendre(NORM_QUAD_POINTS);
    let r = mode.xi_mag;
    let mut out = vec![0.0; k + 1];
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_bounds(e);
        let side = mesh.element_side(e);
        for (t, w) in gx.iter().zip(&gw) {
            let x3 = 0.5 * (a + b) + 0.5 * (b - a) * t;
            let w = 0.5 * (b - a) * w;
            let jet = mode_jet(mode, x3, side)?;
            match kind {
                FieldKind::Eta | FieldKind::Velocity => {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += w * (jet.phi[j] * jet.phi[j] + jet.psi[j] * jet.psi[j]);
                    }
                }
                FieldKind::Density => {
                    let c = profile.coefficients(side, x3)?;
                    let div = r * jet.phi[0] + jet.psi[1];
                    out[0] += w * (c.rho * div).powi(2);
                    if k >= 1 {
                        let ddiv = r * jet.phi[1] + jet.psi[2];
                        out[1] += w * (c.drho * div + c.rho * ddiv).powi(2);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Rectilinear sampling box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub n: [usize; 3],
}

impl Grid {
    pub fn points(&self) -> Vec<[f64; 3]> {
        let axis = |d: usize| -> Vec<f64> {
            if self.n[d] <= 1 {
                vec![self.lo[d]]
            } else {
                (0..self.n[d])
                    .map(|i| self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (self.n[d] - 1) as f64)
                    .collect()
            }
        };
        let (a, b, c) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(a.len() * b.len() * c.len());
        for &x in &a {
            for &y in &b {
                for &z in &c {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::Auto;
    use crate::forms::tests::default_disc;

    fn solver(per_side: usize) -> ModeSolver {
        ModeSolver {
            disc: default_disc(per_side, 2, 0.1),
            eigen: Arc::new(Auto),
        }
    }

    fn mode(s: &ModeSolver, xi: f64) -> ModeSolution {
        match growth_rate(s, xi).unwrap() {
            GrowthOutcome::Unstable(m) => *m,
            _ => panic!("stable"),
        }
    }

    #[test]
    fn rotation_examples() {
        let s = solver(16);
        let m = mode(&s, 1.0);
        let e = extend_to_plane(&m, [1.0, 0.0]).unwrap();
        assert_eq!(e.phi, m.phi);
        assert!(e.theta.iter().all(|v| *v == 0.0));
        let e = extend_to_plane(&m, [0.0, 1.0]).unwrap();
        assert!(e.phi.iter().all(|v| v.abs() == 0.0));
        assert_eq!(e.theta, m.phi);
        let d = 0.5f64.sqrt();
        let e = extend_to_plane(&m, [d, d]).unwrap();
        for k in 0..m.phi.len() {
            assert!((e.phi[k] - m.phi[k] * d).abs() < 1e-15);
            assert!((e.theta[k] - m.phi[k] * d).abs() < 1e-15);
        }
        assert!(matches!(extend_to_plane(&m, [1.1, 0.0]), Err(Error::Domain(_))));
        let w = e.w_hat(m.phi.len() / 2);
        assert_eq!(w[2].im, 0.0);
    }

    #[test]
    fn periodic_trace_growth_and_continuity() {
        let s = solver(16);
        let f = synthesize_periodic(&s, 1.0).unwrap();
        let xi = f.lattice_xi().unwrap();
        let m = &f.modes()[0];
        for &x in &[0.0, 0.7, 2.1] {
            let v = f.evaluate([x, 0.3, 0.0], 0.0).unwrap();
            let expect = 2.0 * m.psi0 * (x * xi[0] + 0.3 * xi[1]).cos();
            assert!((v.eta[2].re - expect).abs() < 1e-12);
            assert!(v.imaginary_ratio() < 1e-12);
            let lo = f.evaluate_on([x, 0.3, 0.0], 0.0, Side::Lower).unwrap();
            let hi = f.evaluate_on([x, 0.3, 0.0], 0.0, Side::Upper).unwrap();
            for k in 0..3 {
                assert!((lo.eta[k] - hi.eta[k]).norm() < 1e-10);
                assert!((lo.v[k] - hi.v[k]).norm() < 1e-10);
            }
            let later = f.evaluate([x, 0.3, -0.4], 1.0).unwrap();
            let now = f.evaluate([x, 0.3, -0.4], 0.0).unwrap();
            let ratio = later.eta[2].re / now.eta[2].re;
            assert!((ratio - f.lambda0.exp()).abs() < 1e-10 * ratio);
        }
        assert!(matches!(synthesize_periodic(&s, 0.3), Err(Error::Config(_))));
    }

    #[test]
    fn parseval_on_one_cell() {
        let s = solver(8);
        let f = synthesize_periodic(&s, 1.0).unwrap();
        for kind in [FieldKind::Eta, FieldKind::Velocity, FieldKind::Density] {
            let spectral = f.sobolev_norm(kind, 0, 0.0).unwrap();
            let direct = f.direct_l2_periodic(kind, 0.0, 12).unwrap();
            assert!((spectral - direct).abs() <= 1e-6 * spectral, "{kind:?}: {spectral} vs {direct}");
        }
        assert!(f.sobolev_norm(FieldKind::Eta, 1, 0.0).unwrap() >= f.sobolev_norm(FieldKind::Eta, 0, 0.0).unwrap());
        assert!(f.sobolev_norm(FieldKind::Density, 2, 0.0).is_err());
    }

    #[test]
    fn bump_support() {
        let b = Bump { a: 1.0, b: 2.0, amp: 2.0 };
        assert_eq!(b.eval(1.0), 0.0);
        assert_eq!(b.eval(2.5), 0.0);
        assert!((b.eval(1.5) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn nonperiodic_is_real_and_equivariant() {
        let s = solver(8);
        let xi_c = s.profile().xi_c();
        let f = synthesize_nonperiodic(&s, Bump::default_for(xi_c), 6, 64).unwrap();
        let x = [0.8, -0.5, -0.3];
        let v = f.evaluate(x, 0.5).unwrap();
        assert!(v.imaginary_ratio() < 1e-10);
        let ang: f64 = 0.37;
        let (c, sn) = (ang.cos(), ang.sin());
        let rx = [c * x[0] - sn * x[1], sn * x[0] + c * x[1], x[2]];
        let w = f.evaluate(rx, 0.5).unwrap().real();
        let u = v.real();
        let rot = [c * u.eta[0] - sn * u.eta[1], sn * u.eta[0] + c * u.eta[1], u.eta[2]];
        for k in 0..3 {
            assert!((rot[k] - w.eta[k]).abs() < 1e-9 * (1.0 + u.eta[2].abs()));
        }
        assert!((w.q - u.q).abs() < 1e-9 * (1.0 + u.q.abs()));
        let bad = Bump { a: 0.5, b: 1.2 * xi_c, amp: 1.0 };
        assert!(matches!(synthesize_nonperiodic(&s, bad, 4, 64), Err(Error::Config(_))));
    }
}
