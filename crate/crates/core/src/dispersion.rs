//! Growth rates `lambda(|xi|)` from the fixed point `s = sqrt(-mu(s))`,
//! frequency sweeps, and periodic lattice enumeration.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use crate::eigen::{smallest_eig, EigenResult, PencilSolver};
use crate::error::{Error, Result, Side};
use crate::forms::{assemble, Discretization, FormSet};
use crate::mesh::{split_dofs, Mesh};
use crate::profile::SteadyProfile;

pub const S_LO: f64 = 1e-8;
pub const FIXED_POINT_TOL: f64 = 1e-9;
/// Target for the root iteration itself, well below the accepted residual.
const ROOT_TOL: f64 = 1e-13;
const ROOT_ITERATION_CAP: usize = 100;
pub const MAX_DOUBLINGS: usize = 60;
/// Relative slack in `sigma |xi|^2 >= g [[rho0]]` comparisons.
pub const CRITICAL_REL_TOL: f64 = 1e-12;
pub const DEFAULT_SWEEP_N: usize = 48;
pub const DEFAULT_SWEEP_LO: f64 = 0.02;
pub const DEFAULT_SWEEP_HI: f64 = 0.98;

/// Profile, mesh and eigensolver bundled for repeated per-frequency solves.
#[derive(Debug, Clone)]
pub struct ModeSolver {
    pub disc: Arc<Discretization>,
    pub eigen: Arc<dyn PencilSolver>,
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    /// Representative frequency `(|xi|, 0)`.
    pub xi: [f64; 2],
    pub xi_mag: f64,
    pub lambda: f64,
    pub s_star: f64,
    /// `|s* - sqrt(-mu(s*))|`
    pub fixed_point_residual: f64,
    /// Minimizer dofs with `x^T J x = 1` and `psi(0) > 0`.
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Identically zero in the reduced frame.
    pub theta: Vec<f64>,
    pub psi0: f64,
    pub eig_residual: f64,
    pub forms: FormSet,
}

#[derive(Debug, Clone)]
pub enum GrowthOutcome {
    Unstable(Box<ModeSolution>),
    /// `resolution_warning` is set when instability was expected but `mu(s_lo) >= 0`.
    Stable { resolution_warning: bool },
}

impl GrowthOutcome {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            GrowthOutcome::Unstable(m) => Some(m.lambda),
            GrowthOutcome::Stable { .. } => None,
        }
    }

    pub fn mode(&self) -> Option<&ModeSolution> {
        match self {
            GrowthOutcome::Unstable(m) => Some(m),
            GrowthOutcome::Stable { .. } => None,
        }
    }
}

impl ModeSolver {
    pub fn new(profile: Arc<SteadyProfile>, mesh: Arc<Mesh>, eigen: Arc<dyn PencilSolver>) -> Result<Self> {
        Ok(Self {
            disc: Arc::new(Discretization::new(profile, mesh)?),
            eigen,
        })
    }

    pub fn profile(&self) -> &SteadyProfile {
        &self.disc.profile
    }

    pub fn mu(&self, forms: &FormSet, s: f64, guess: Option<&[f64]>) -> Result<EigenResult> {
        smallest_eig(self.eigen.as_ref(), forms, s, guess)
    }

    /// `sigma |xi|^2 >= g [[rho0]]`, the surface-tension stabilized range.
    pub fn at_or_above_critical(&self, xi_mag: f64) -> bool {
        let p = self.profile();
        let g = p.geometry.g;
        p.geometry.sigma > 0.0 && p.geometry.sigma * xi_mag * xi_mag >= g * p.jump() * (1.0 - CRITICAL_REL_TOL)
    }
}

fn f_of(s: f64, mu: f64) -> f64 {
    s - (-mu).max(0.0).sqrt()
}

/// Solve the fixed point at one frequency magnitude.
pub fn growth_rate(solver: &ModeSolver, xi_mag: f64) -> Result<GrowthOutcome> {
    if !(xi_mag > 0.0) || !xi_mag.is_finite() {
        return Err(Error::Domain(format!("|xi| must be positive, got {xi_mag}")));
    }
    if solver.at_or_above_critical(xi_mag) {
        return Ok(GrowthOutcome::Stable {
            resolution_warning: false,
        });
    }
    let forms = assemble(&solver.disc, xi_mag)?;
    let lo = solver.mu(&forms, S_LO, None)?;
    if lo.mu >= 0.0 {
        warn!(
            "mu({S_LO:e}) = {:.3e} >= 0 at |xi| = {xi_mag} below the critical frequency; refine the mesh",
            lo.mu
        );
        return Ok(GrowthOutcome::Stable {
            resolution_warning: true,
        });
    }
    let mut s_lo = S_LO;
    let f_lo = f_of(S_LO, lo.mu);
    let mut best = (f_lo.abs(), S_LO, lo);
    if f_lo >= 0.0 {
        return Ok(GrowthOutcome::Unstable(Box::new(package(solver, forms, xi_mag, best.1, best.2, f_lo.abs()))));
    }

    let g = solver.profile().geometry.g;
    let mut s_hi = (g * xi_mag).sqrt();
    let mut f_lo = f_lo;
    let mut guess = best.2.minimizer.clone();
    let mut doublings = 0;
    let mut f_hi = loop {
        let r = solver.mu(&forms, s_hi, Some(&guess))?;
        let f = f_of(s_hi, r.mu);
        if r.mu >= 0.0 || f > 0.0 {
            break f;
        }
        s_lo = s_hi;
        f_lo = f;
        guess = r.minimizer;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Solver(format!(
                "no bracket for the fixed point at |xi| = {xi_mag} after {MAX_DOUBLINGS} doublings (s = {s_hi:e})"
            )));
        }
        s_hi *= 2.0;
    };

    // Illinois regula falsi on the bracket; F is continuous and increasing.
    let mut last_side = 0i8;
    for _ in 0..ROOT_ITERATION_CAP {
        let mut mid = s_hi - f_hi * (s_hi - s_lo) / (f_hi - f_lo);
        if !(mid > s_lo && mid < s_hi) {
            mid = 0.5 * (s_lo + s_hi);
        }
        let r = solver.mu(&forms, mid, Some(&guess))?;
        let f = f_of(mid, r.mu);
        guess.clone_from(&r.minimizer);
        if f.abs() < best.0 {
            best = (f.abs(), mid, r);
        }
        if f.abs() <= ROOT_TOL * mid.max(1.0) {
            break;
        }
        if f < 0.0 {
            s_lo = mid;
            f_lo = f;
            if last_side < 0 {
                f_hi *= 0.5;
            }
            last_side = -1;
        } else {
            s_hi = mid;
            f_hi = f;
            if last_side > 0 {
                f_lo *= 0.5;
            }
            last_side = 1;
        }
        if s_hi - s_lo <= 4.0 * f64::EPSILON * s_hi {
            break;
        }
    }
    let (res, s_star, r) = best;
    if r.mu >= 0.0 {
        // The fixed point collapsed onto the stability boundary.
        return Ok(GrowthOutcome::Stable {
            resolution_warning: true,
        });
    }
    Ok(GrowthOutcome::Unstable(Box::new(package(solver, forms, xi_mag, s_star, r, res))))
}

fn package(solver: &ModeSolver, forms: FormSet, xi_mag: f64, s: f64, r: EigenResult, res: f64) -> ModeSolution {
    let (phi, psi) = split_dofs(&solver.disc.mesh, &r.minimizer).expect("solver returns conforming vectors");
    let psi0 = forms.psi0(&r.minimizer);
    ModeSolution {
        xi: [xi_mag, 0.0],
        xi_mag,
        lambda: s,
        s_star: s,
        fixed_point_residual: res,
        theta: vec![0.0; phi.len()],
        phi,
        psi,
        psi0,
        eig_residual: r.residual,
        u: r.minimizer,
        forms,
    }
}

/// Strong-form residual at element midpoints and the four interface jump
/// quantities `[[phi]]`, `[[psi]]`, `[[s eps0 (phi' - |xi| psi)]]` and the
/// normal-stress jump minus `sigma |xi|^2 psi(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    pub strong_residual: f64,
    pub jumps: [f64; 4],
}

pub fn fidelity(solver: &ModeSolver, mode: &ModeSolution) -> Result<Fidelity> {
    let mesh = &solver.disc.mesh;
    let profile = solver.profile();
    let g = profile.geometry.g;
    let s = mode.s_star;
    let mu = -mode.lambda * mode.lambda;
    let xi = mode.xi_mag;
    let mut worst: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_bounds(e);
        let x = 0.5 * (a + b);
        let side = mesh.element_side(e);
        let [f, df, ddf] = mesh.interpolate(&mode.phi, x, side)?;
        let [p, dp, ddp] = mesh.interpolate(&mode.psi, x, side)?;
        let c = profile.coefficients(side, x)?;
        let (et, det) = (s * c.eps, s * c.deps);
        let (dt, ddt) = (s * c.delta, s * c.ddelta);
        let big_b = 4.0 * et / 3.0 + dt + c.a;
        let dbig_b = 4.0 * det / 3.0 + ddt + c.da;
        let big_c = dt + et / 3.0 + c.a;
        let dbig_c = ddt + det / 3.0 + c.da;
        let r1 = -(det * df + et * ddf) + xi * xi * big_b * f + xi * (big_c * dp + (det - g * c.rho) * p) - mu * c.rho * f;
        let r2 = -(dbig_b * dp + big_b * ddp) + et * xi * xi * p - xi * (dbig_c * f + big_c * df + (g * c.rho - det) * f)
            - mu * c.rho * p;
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    let one_sided = |side: Side| -> Result<(f64, f64, f64, f64, f64)> {
        let [f, df, _] = mesh.interpolate(&mode.phi, 0.0, side)?;
        let [p, dp, _] = mesh.interpolate(&mode.psi, 0.0, side)?;
        let c = profile.coefficients(side, 0.0)?;
        let et = s * c.eps;
        let shear = et * (df - xi * p);
        let big_c = s * c.delta + et / 3.0 + c.a;
        let normal = big_c * (dp + xi * f) + et * (dp - xi * f);
        Ok((f, p, shear, normal, 0.0))
    };
    let lo = one_sided(Side::Lower)?;
    let hi = one_sided(Side::Upper)?;
    let sigma = profile.geometry.sigma;
    Ok(Fidelity {
        strong_residual: worst,
        jumps: [
            (hi.0 - lo.0).abs(),
            (hi.1 - lo.1).abs(),
            (hi.2 - lo.2).abs(),
            (hi.3 - lo.3 - sigma * xi * xi * mode.psi0).abs(),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub xi: f64,
    /// Zero when stable.
    pub lambda: f64,
    pub s_star: f64,
    pub psi0: f64,
    pub residual: f64,
    pub stable: bool,
    pub resolution_warning: bool,
}

impl Sample {
    fn from_outcome(xi: f64, o: &GrowthOutcome) -> Self {
        match o {
            GrowthOutcome::Unstable(m) => Sample {
                xi,
                lambda: m.lambda,
                s_star: m.s_star,
                psi0: m.psi0,
                residual: m.fixed_point_residual,
                stable: false,
                resolution_warning: false,
            },
            GrowthOutcome::Stable { resolution_warning } => Sample {
                xi,
                lambda: 0.0,
                s_star: 0.0,
                psi0: 0.0,
                residual: 0.0,
                stable: true,
                resolution_warning: *resolution_warning,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DispersionCurve {
    pub samples: Vec<Sample>,
    /// Max over samples and the fitted vertex.
    pub lambda_max: f64,
    pub argmax: f64,
    /// Largest sampled rate, before the fit.
    pub sample_max: f64,
    /// `|lambda(vertex) - parabola(vertex)|`, the declared uncertainty of `lambda_max`.
    pub fit_tolerance: f64,
}

/// `n` log-spaced samples on `[xi_min, xi_max]`, solved in parallel.
pub fn sweep(solver: &ModeSolver, xi_min: f64, xi_max: f64, n: usize) -> Result<DispersionCurve> {
    if n == 0 || !(xi_min > 0.0) || !(xi_max >= xi_min) || (n > 1 && !(xi_max > xi_min)) {
        return Err(Error::Config(format!(
            "sweep needs 0 < xi_min < xi_max and n >= 1, got [{xi_min}, {xi_max}] with n = {n}"
        )));
    }
    let xi_c = solver.profile().xi_c();
    if xi_max > xi_c * (1.0 + CRITICAL_REL_TOL) {
        return Err(Error::Config(format!("sweep.xi_max = {xi_max} exceeds the critical frequency {xi_c}")));
    }
    let xs: Vec<f64> = if n == 1 {
        vec![xi_min]
    } else {
        let (l0, l1) = (xi_min.ln(), xi_max.ln());
        (0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()).collect()
    };
    let outcomes: Vec<Result<GrowthOutcome>> = xs.par_iter().map(|&x| growth_rate(solver, x)).collect();
    let mut samples = Vec::with_capacity(n);
    for (x, o) in xs.iter().zip(outcomes) {
        samples.push(Sample::from_outcome(*x, &o?));
    }
    let (imax, smax) = samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, s)| if s.lambda > bv { (i, s.lambda) } else { (bi, bv) });
    let mut curve = DispersionCurve {
        lambda_max: smax,
        argmax: samples[imax].xi,
        sample_max: smax,
        fit_tolerance: 0.0,
        samples,
    };
    if imax > 0 && imax + 1 < n && smax > 0.0 {
        let p = |i: usize| (curve.samples[i].xi, curve.samples[i].lambda);
        if let Some((xv, yv)) = parabola_vertex(p(imax - 1), p(imax), p(imax + 1)) {
            if let GrowthOutcome::Unstable(m) = growth_rate(solver, xv)? {
                curve.fit_tolerance = (m.lambda - yv).abs();
                if m.lambda > curve.lambda_max {
                    curve.lambda_max = m.lambda;
                    curve.argmax = xv;
                }
            }
        }
    }
    Ok(curve)
}

/// Refine a maximum bracketed by three increasing frequencies: solve at each,
/// then at the parabola vertex, and return the best `(xi, lambda)` seen.
pub fn local_maximum(solver: &ModeSolver, bracket: [f64; 3]) -> Result<(f64, f64)> {
    let rates: Vec<Result<GrowthOutcome>> = bracket.par_iter().map(|&x| growth_rate(solver, x)).collect();
    let mut pts = [(0.0, 0.0); 3];
    for (i, r) in rates.into_iter().enumerate() {
        pts[i] = (bracket[i], r?.lambda().unwrap_or(0.0));
    }
    let mut best = pts.iter().copied().fold((0.0, f64::NEG_INFINITY), |b, p| if p.1 > b.1 { p } else { b });
    if let Some((xv, _)) = parabola_vertex(pts[0], pts[1], pts[2]) {
        if let Some(l) = growth_rate(solver, xv)?.lambda() {
            if l > best.1 {
                best = (xv, l);
            }
        }
    }
    Ok(best)
}

/// Vertex of the parabola through three points, if it is a maximum inside their span.
fn parabola_vertex((x0, y0): (f64, f64), (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> Option<(f64, f64)> {
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let a = (d1 - d0) / (x2 - x0);
    if !(a < 0.0) {
        return None;
    }
    let b = d0 - a * (x0 + x1);
    let xv = -b / (2.0 * a);
    if !(xv > x0 && xv < x2) {
        return None;
    }
    let yv = y1 + (xv - x1) * (d0 + a * (xv - x0));
    Some((xv, yv))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub k: [i64; 2],
    pub xi: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct LatticeCurve {
    pub period: f64,
    /// Unstable lattice points, sorted by `|xi|` then `k`.
    pub points: Vec<LatticePoint>,
    /// Distinct magnitudes with their rate (zero when stable).
    pub magnitudes: Vec<(f64, f64)>,
    /// `Lambda_L`, absent when the unstable set is empty.
    pub lambda_l: Option<f64>,
    /// Set when the period is at or below the surface-tension threshold.
    pub certificate: bool,
}

impl LatticeCurve {
    pub fn is_stable(&self) -> bool {
        self.points.is_empty()
    }
}

/// `sqrt(sigma / (g [[rho0]]))`, the largest stable period scale.
pub fn critical_period(profile: &SteadyProfile) -> f64 {
    (profile.geometry.sigma / (profile.geometry.g * profile.jump())).sqrt()
}

/// Rates on the lattice `(Z / L)^2` below the critical frequency (or below
/// `xi_cap` when there is no surface tension).
pub fn lattice_modes(solver: &ModeSolver, period: f64, xi_cap: Option<f64>) -> Result<LatticeCurve> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Config(format!("`lattice.L` must be positive, got {period}")));
    }
    let p = solver.profile();
    let sigma = p.geometry.sigma;
    let threshold_sq = if sigma > 0.0 {
        // |k|^2 / L^2 < g[[rho]] / sigma
        p.geometry.g * p.jump() * period * period / sigma
    } else {
        match xi_cap {
            Some(cap) if cap > 0.0 => cap * cap * period * period,
            _ => {
                return Err(Error::Config(
                    "without surface tension the unstable lattice is infinite; set `lattice.xi_cap`".into(),
                ))
            }
        }
    };
    let threshold_sq = match (sigma > 0.0, xi_cap) {
        (true, Some(cap)) => threshold_sq.min(cap * cap * period * period),
        _ => threshold_sq,
    };
    let certificate = sigma > 0.0 && period <= critical_period(p) * (1.0 + CRITICAL_REL_TOL);
    let bound = threshold_sq.sqrt().floor() as i64 + 1;
    let mut groups: std::collections::BTreeMap<i64, Vec<[i64; 2]>> = Default::default();
    for k1 in -bound..=bound {
        for k2 in -bound..=bound {
            let n2 = k1 * k1 + k2 * k2;
            if n2 > 0 && (n2 as f64) < threshold_sq * (1.0 - CRITICAL_REL_TOL) {
                groups.entry(n2).or_default().push([k1, k2]);
            }
        }
    }
    let mags: Vec<(i64, f64)> = groups.keys().map(|&n2| (n2, (n2 as f64).sqrt() / period)).collect();
    let rates: Vec<Result<GrowthOutcome>> = mags.par_iter().map(|&(_, xi)| growth_rate(solver, xi)).collect();
    let mut points = Vec::new();
    let mut magnitudes = Vec::new();
    for ((n2, xi), r) in mags.iter().zip(rates) {
        let lambda = r?.lambda().unwrap_or(0.0);
        magnitudes.push((*xi, lambda));
        if lambda > 0.0 {
            for k in &groups[n2] {
                points.push(LatticePoint { k: *k, xi: *xi, lambda });
            }
        }
    }
    let lambda_l = points.iter().map(|p| p.lambda).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(LatticeCurve {
        period,
        points,
        magnitudes,
        lambda_l,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{Auto, Dense};
    use crate::forms::tests::default_disc;

    fn solver(per_side: usize, sigma: f64) -> ModeSolver {
        ModeSolver {
            disc: default_disc(per_side, 2, sigma),
            eigen: Arc::new(Auto),
        }
    }

    #[test]
    fn unstable_at_half_critical_with_bounds() {
        let s = solver(32, 0.1);
        let xi_c = s.profile().xi_c();
        let xi = xi_c / 2.0;
        let m = growth_rate(&s, xi).unwrap();
        let m = m.mode().expect("unstable");
        assert!(m.lambda > 0.0);
        assert!(m.lambda * m.lambda <= xi + 1e-8);
        assert!(m.fixed_point_residual <= FIXED_POINT_TOL);
        assert!(m.psi0 >= 1e-6);
        let chained = (1.0 - 0.1 * xi * xi) / (0.1 * xi);
        assert!(m.lambda * m.lambda <= chained + 1e-6);
        // independent check: dense solve at s* reproduces mu = -lambda^2
        let d = smallest_eig(&Dense, &m.forms, m.s_star, None).unwrap();
        assert!((d.mu + m.lambda * m.lambda).abs() < 2e-9);
    }

    #[test]
    fn stable_at_and_above_critical() {
        let s = solver(16, 0.1);
        let xi_c = s.profile().xi_c();
        for f in [1.0, 1.5, 3.0] {
            assert!(matches!(
                growth_rate(&s, f * xi_c).unwrap(),
                GrowthOutcome::Stable {
                    resolution_warning: false
                }
            ));
        }
        assert!(growth_rate(&s, 0.0).is_err());
    }

    #[test]
    fn no_surface_tension_tail_decays() {
        let s = solver(32, 0.0);
        let l: Vec<f64> = [0.5, 5.0, 50.0].iter().map(|&x| growth_rate(&s, x).unwrap().lambda().unwrap()).collect();
        assert!(l.iter().all(|&v| v > 0.0));
        assert!(l[2] < l[1], "{l:?}");
    }

    #[test]
    fn single_sample_sweep() {
        let s = solver(16, 0.1);
        let c = sweep(&s, 1.0, 1.0, 1).unwrap();
        assert_eq!(c.samples.len(), 1);
        assert_eq!(c.lambda_max, c.samples[0].lambda);
    }

    #[test]
    fn parabola_vertex_exact() {
        let f = |x: f64| 2.0 - 3.0 * (x - 1.2).powi(2);
        let (xv, yv) = parabola_vertex((1.0, f(1.0)), (1.1, f(1.1)), (1.5, f(1.5))).unwrap();
        assert!((xv - 1.2).abs() < 1e-12 && (yv - 2.0).abs() < 1e-12);
        assert!(parabola_vertex((0.0, 0.0), (1.0, 1.0), (2.0, 4.0)).is_none());
    }

    #[test]
    fn lattice_examples() {
        let s = solver(16, 0.1);
        let c = lattice_modes(&s, 1.0, None).unwrap();
        let mags: Vec<f64> = c.magnitudes.iter().map(|m| m.0 * m.0).collect();
        assert_eq!(mags.iter().map(|v| v.round() as i64).collect::<Vec<_>>(), vec![1, 2, 4, 5, 8, 9]);
        assert!(c.lambda_l.unwrap() > 0.0);
        assert!(!c.certificate);
        let c = lattice_modes(&s, critical_period(s.profile()), None).unwrap();
        assert!(c.certificate && c.is_stable() && c.lambda_l.is_none());
        let s0 = solver(8, 0.0);
        assert!(matches!(lattice_modes(&s0, 1.0, None), Err(Error::Config(_))));
    }
}
