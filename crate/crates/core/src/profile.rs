//! Hydrostatic steady state of the two-layer slab.
//!
//! The lower fluid occupies `(-m, 0)`, the upper fluid `(0, ell)`, gravity
//! points down. On each side the density solves `d P(rho)/dx3 = -g rho`, i.e.
//! `h(rho(x3)) = h(rho(0)) - g x3`, and the interface densities are tied by
//! pressure continuity `P_+(rho+) = P_-(rho-)`.

use std::sync::Arc;

use crate::eos::{admissible, PressureLaw};
use crate::error::{Error, Result, Side};
use crate::viscosity::ViscosityLaw;

/// Relative tolerance on interface pressure continuity.
pub const PRESSURE_MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabGeometry {
    pub m: f64,
    pub ell: f64,
    pub g: f64,
    pub sigma: f64,
    /// Horizontal period scale `L` (the cell is `2 pi L` wide).
    pub period: Option<f64>,
}

impl SlabGeometry {
    pub fn new(m: f64, ell: f64, g: f64, sigma: f64, period: Option<f64>) -> Result<Self> {
        let geo = Self {
            m,
            ell,
            g,
            sigma,
            period,
        };
        geo.validate()?;
        Ok(geo)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`geometry.{name}` must be positive and finite, got {v}")))
            }
        };
        positive("m", self.m)?;
        positive("ell", self.ell)?;
        positive("g", self.g)?;
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "`geometry.sigma` must be nonnegative and finite, got {}",
                self.sigma
            )));
        }
        if let Some(l) = self.period {
            positive("L", l)?;
        }
        Ok(())
    }
}

/// Pressure law and viscosity law of one layer.
#[derive(Debug, Clone)]
pub struct Fluid {
    pub law: Arc<dyn PressureLaw>,
    pub viscosity: Arc<dyn ViscosityLaw>,
}

/// Profile coefficients and their `x3`-derivatives at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coefficients {
    pub rho: f64,
    pub drho: f64,
    /// `P'(rho0) rho0`
    pub a: f64,
    pub da: f64,
    pub eps: f64,
    pub deps: f64,
    pub delta: f64,
    pub ddelta: f64,
}

#[derive(Debug, Clone)]
pub struct SteadyProfile {
    pub geometry: SlabGeometry,
    pub lower: Fluid,
    pub upper: Fluid,
    pub rho_minus: f64,
    pub rho_plus: f64,
    h_minus: f64,
    h_plus: f64,
}

pub fn build_profile(lower: Fluid, upper: Fluid, rho_minus: f64, geometry: SlabGeometry) -> Result<SteadyProfile> {
    geometry.validate()?;
    if !(rho_minus > 0.0) || !rho_minus.is_finite() {
        return Err(Error::Config(format!(
            "`fluid.lower.rho0` must be positive, got {rho_minus}"
        )));
    }
    if !admissible(lower.law.as_ref(), upper.law.as_ref(), rho_minus)? {
        return Err(Error::Config(format!(
            "`fluid.lower.rho0` = {rho_minus} is not admissible: the upper fluid must be heavier at the interface \
             (need P_-(rho0) > P_+(rho0) with P_-(rho0) attainable by the upper law)"
        )));
    }
    let p_interface = lower.law.pressure(rho_minus)?;
    let rho_plus = upper.law.pressure_inverse(p_interface)?;
    let mismatch = (upper.law.pressure(rho_plus)? - p_interface).abs();
    if mismatch > PRESSURE_MATCH_TOL * p_interface {
        return Err(Error::Config(format!(
            "interface pressure mismatch {mismatch:e} exceeds tolerance; the upper law is too coarse near rho = {rho_plus}"
        )));
    }
    let h_minus = lower.law.enthalpy(rho_minus)?;
    let h_plus = upper.law.enthalpy(rho_plus)?;

    let (lo, hi) = lower.law.enthalpy_image();
    let bottom = h_minus + geometry.g * geometry.m;
    if !(bottom > lo && bottom <= hi) {
        return Err(Error::Vacuum {
            side: Side::Lower,
            detail: format!(
                "enthalpy {bottom} required at x3 = -m lies outside the law's image ({lo}, {hi}]; reduce geometry.m"
            ),
        });
    }
    let (lo, hi) = upper.law.enthalpy_image();
    let top = h_plus - geometry.g * geometry.ell;
    // The closed endpoint only exists for tabulated laws, whose image includes it.
    let top_ok = if lower_closed(upper.law.as_ref()) { top >= lo } else { top > lo };
    if !(top_ok && top <= hi) {
        return Err(Error::Vacuum {
            side: Side::Upper,
            detail: format!(
                "enthalpy {top} required at x3 = ell lies outside the law's image ({lo}, {hi}]; \
                 the density would vanish inside the slab, reduce geometry.ell"
            ),
        });
    }
    Ok(SteadyProfile {
        geometry,
        lower,
        upper,
        rho_minus,
        rho_plus,
        h_minus,
        h_plus,
    })
}

fn lower_closed(law: &dyn PressureLaw) -> bool {
    law.working_range().0 > 0.0
}

impl SteadyProfile {
    /// `[[rho0]] = rho0+ - rho0-`.
    pub fn jump(&self) -> f64 {
        self.rho_plus - self.rho_minus
    }

    /// `sqrt(g [[rho0]] / sigma)`, infinite without surface tension.
    pub fn xi_c(&self) -> f64 {
        if self.geometry.sigma > 0.0 {
            (self.geometry.g * self.jump() / self.geometry.sigma).sqrt()
        } else {
            f64::INFINITY
        }
    }

    pub fn fluid(&self, side: Side) -> &Fluid {
        match side {
            Side::Lower => &self.lower,
            Side::Upper => &self.upper,
        }
    }

    /// Side containing `x3`; the interface itself is assigned to the lower side.
    pub fn side_of(x3: f64) -> Side {
        if x3 <= 0.0 {
            Side::Lower
        } else {
            Side::Upper
        }
    }

    fn check_x(&self, side: Side, x3: f64) -> Result<()> {
        let ok = match side {
            Side::Lower => x3 >= -self.geometry.m && x3 <= 0.0,
            Side::Upper => x3 >= 0.0 && x3 <= self.geometry.ell,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("x3 = {x3} is not in the closed {side} layer")))
        }
    }

    /// Steady density on `side` at `x3`.
    pub fn rho(&self, side: Side, x3: f64) -> Result<f64> {
        self.check_x(side, x3)?;
        let (fluid, h0) = match side {
            Side::Lower => (&self.lower, self.h_minus),
            Side::Upper => (&self.upper, self.h_plus),
        };
        fluid.law.enthalpy_inverse(h0 - self.geometry.g * x3)
    }

    /// All profile coefficients with their derivatives, using the
    /// hydrostatic relation `rho0' = -g rho0 / P'(rho0)` and the chain rule.
    pub fn coefficients(&self, side: Side, x3: f64) -> Result<Coefficients> {
        let rho = self.rho(side, x3)?;
        let fluid = self.fluid(side);
        let dp = fluid.law.slope(rho)?;
        let d2p = fluid.law.curvature(rho)?;
        let drho = -self.geometry.g * rho / dp;
        let eps = fluid.viscosity.shear(rho);
        let delta = fluid.viscosity.bulk(rho);
        Ok(Coefficients {
            rho,
            drho,
            a: dp * rho,
            da: (d2p * rho + dp) * drho,
            eps: eps.value,
            deps: eps.deriv * drho,
            delta: delta.value,
            ddelta: delta.deriv * drho,
        })
    }

    /// Max over `n_check` interior points per side of
    /// `|d P(rho0)/dx3 + g rho0|`, with a centered difference of step `h_fd`.
    pub fn verify_hydrostatic(&self, n_check: usize, h_fd: f64) -> Result<f64> {
        if n_check == 0 || !(h_fd > 0.0) {
            return Err(Error::Domain("need n_check > 0 and h_fd > 0".into()));
        }
        let mut worst: f64 = 0.0;
        for (side, a, b) in [(Side::Lower, -self.geometry.m, 0.0), (Side::Upper, 0.0, self.geometry.ell)] {
            let law = &self.fluid(side).law;
            let span = b - a;
            if 2.0 * h_fd >= span / (n_check + 1) as f64 {
                return Err(Error::Domain(format!("h_fd = {h_fd} too large for {n_check} checks on the {side} side")));
            }
            for i in 1..=n_check {
                let x = a + span * i as f64 / (n_check + 1) as f64;
                let pp = law.pressure(self.rho(side, x + h_fd)?)?;
                let pm = law.pressure(self.rho(side, x - h_fd)?)?;
                let r = (pp - pm) / (2.0 * h_fd) + self.geometry.g * self.rho(side, x)?;
                worst = worst.max(r.abs());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::eos::Polytropic;
    use crate::viscosity::Constant;

    pub fn fluid(k: f64, gamma: f64) -> Fluid {
        Fluid {
            law: Arc::new(Polytropic::new(k, gamma).unwrap()),
            viscosity: Arc::new(Constant::default()),
        }
    }

    pub fn default_profile(sigma: f64) -> SteadyProfile {
        let geo = SlabGeometry::new(1.0, 1.0, 1.0, sigma, None).unwrap();
        build_profile(fluid(2.0, 1.0), fluid(1.0, 1.0), 1.0, geo).unwrap()
    }

    #[test]
    fn isothermal_closed_form() {
        let p = default_profile(0.0);
        assert!((p.rho_plus - 2.0).abs() < 1e-14);
        for &x in &[-1.0, -0.5, -0.1, 0.0] {
            assert!((p.rho(Side::Lower, x).unwrap() - (-x / 2.0).exp()).abs() < 1e-14);
        }
        for &x in &[0.0, 0.3, 1.0] {
            assert!((p.rho(Side::Upper, x).unwrap() - 2.0 * (-x).exp()).abs() < 1e-14);
        }
        assert!(p.xi_c().is_infinite());
    }

    #[test]
    fn critical_frequency() {
        let p = default_profile(0.1);
        assert!((p.jump() - 1.0).abs() < 1e-14);
        assert!((p.xi_c() - 10f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn vacuum_side_is_named() {
        // lower: P = 4 rho at rho = 1/4 gives P = 1, so rho+ = 1 for P_+ = rho^2
        let build = |ell: f64| {
            let geo = SlabGeometry::new(1.0, ell, 1.0, 0.0, None).unwrap();
            build_profile(fluid(4.0, 1.0), fluid(1.0, 2.0), 0.25, geo)
        };
        let ok = build(1.0).unwrap();
        assert!((ok.rho_plus - 1.0).abs() < 1e-14);
        match build(3.0) {
            Err(Error::Vacuum { side, .. }) => assert_eq!(side, Side::Upper),
            other => panic!("expected vacuum error, got {other:?}"),
        }
    }

    #[test]
    fn inadmissible_and_bad_geometry() {
        let geo = SlabGeometry::new(1.0, 1.0, 1.0, 0.0, None).unwrap();
        assert!(matches!(
            build_profile(fluid(1.0, 1.0), fluid(2.0, 1.0), 1.0, geo),
            Err(Error::Config(_))
        ));
        assert!(matches!(SlabGeometry::new(1.0, 1.0, 0.0, 0.0, None), Err(Error::Config(_))));
        let err = SlabGeometry::new(1.0, 1.0, 1.0, -0.1, None).unwrap_err().to_string();
        assert!(err.contains("geometry.sigma"));
    }

    #[test]
    fn hydrostatic_residual_is_second_order() {
        let p = default_profile(0.1);
        let r1 = p.verify_hydrostatic(50, 1e-4).unwrap();
        let r2 = p.verify_hydrostatic(50, 5e-5).unwrap();
        assert!(r1 <= 1e-6, "{r1}");
        let ratio = r1 / r2;
        assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}");
    }

    #[test]
    fn coefficient_derivatives_match_differences() {
        let geo = SlabGeometry::new(1.0, 1.0, 1.0, 0.0, None).unwrap();
        let lower = Fluid {
            law: Arc::new(Polytropic::new(3.0, 1.4).unwrap()),
            viscosity: Arc::new(crate::viscosity::PowerLaw::new(0.2, 1.3, 0.05, 0.7).unwrap()),
        };
        let p = build_profile(lower, fluid(1.0, 1.0), 1.0, geo).unwrap();
        let h = 1e-6;
        let x = -0.4;
        let c = p.coefficients(Side::Lower, x).unwrap();
        let cp = p.coefficients(Side::Lower, x + h).unwrap();
        let cm = p.coefficients(Side::Lower, x - h).unwrap();
        let d = |f: fn(&Coefficients) -> f64| (f(&cp) - f(&cm)) / (2.0 * h);
        assert!((d(|c| c.rho) - c.drho).abs() < 1e-7);
        assert!((d(|c| c.a) - c.da).abs() < 1e-7);
        assert!((d(|c| c.eps) - c.deps).abs() < 1e-7);
        assert!((d(|c| c.delta) - c.ddelta).abs() < 1e-7);
    }

    #[test]
    fn profile_decreasing_and_xi_c_monotone() {
        let p = default_profile(0.1);
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let x = -1.0 + i as f64 / 100.0;
            let r = p.rho(Side::Lower, x).unwrap();
            assert!(r < prev);
            prev = r;
        }
        let q = default_profile(0.2);
        assert!(q.xi_c() < p.xi_c());
    }
}
