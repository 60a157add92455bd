//! Density-dependent shear and bulk viscosity coefficients `eps(rho) > 0`, `delta(rho) >= 0`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::{param_f64_or, Params, Registry};

pub const DEFAULT_EPS: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.0;

/// Value and first derivative of a coefficient at a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coef {
    pub value: f64,
    pub deriv: f64,
}

pub trait ViscosityLaw: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    /// Shear viscosity `eps(rho)` and `eps'(rho)`.
    fn shear(&self, rho: f64) -> Coef;
    /// Bulk viscosity `delta(rho)` and `delta'(rho)`.
    fn bulk(&self, rho: f64) -> Coef;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub eps: f64,
    pub delta: f64,
}

impl Constant {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        check(eps, delta)?;
        Ok(Self { eps, delta })
    }
}

impl Default for Constant {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            delta: DEFAULT_DELTA,
        }
    }
}

impl ViscosityLaw for Constant {
    fn name(&self) -> &'static str {
        "constant"
    }
    fn shear(&self, _rho: f64) -> Coef {
        Coef { value: self.eps, deriv: 0.0 }
    }
    fn bulk(&self, _rho: f64) -> Coef {
        Coef { value: self.delta, deriv: 0.0 }
    }
}

/// `eps = eps_c rho^eps_exp`, `delta = delta_c rho^delta_exp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub eps: f64,
    pub eps_exp: f64,
    pub delta: f64,
    pub delta_exp: f64,
}

impl PowerLaw {
    pub fn new(eps: f64, eps_exp: f64, delta: f64, delta_exp: f64) -> Result<Self> {
        check(eps, delta)?;
        Ok(Self {
            eps,
            eps_exp,
            delta,
            delta_exp,
        })
    }
}

fn power(c: f64, p: f64, rho: f64) -> Coef {
    if c == 0.0 {
        return Coef { value: 0.0, deriv: 0.0 };
    }
    let value = c * rho.powf(p);
    Coef {
        value,
        deriv: p * value / rho,
    }
}

impl ViscosityLaw for PowerLaw {
    fn name(&self) -> &'static str {
        "power"
    }
    fn shear(&self, rho: f64) -> Coef {
        power(self.eps, self.eps_exp, rho)
    }
    fn bulk(&self, rho: f64) -> Coef {
        power(self.delta, self.delta_exp, rho)
    }
}

fn check(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!("shear viscosity eps must be positive, got {eps}")));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("bulk viscosity delta must be >= 0, got {delta}")));
    }
    Ok(())
}

fn build_constant(p: &Params) -> Result<Arc<dyn ViscosityLaw>> {
    Ok(Arc::new(Constant::new(
        param_f64_or(p, "eps", DEFAULT_EPS)?,
        param_f64_or(p, "delta", DEFAULT_DELTA)?,
    )?))
}

fn build_power(p: &Params) -> Result<Arc<dyn ViscosityLaw>> {
    Ok(Arc::new(PowerLaw::new(
        param_f64_or(p, "eps", DEFAULT_EPS)?,
        param_f64_or(p, "eps_exp", 0.0)?,
        param_f64_or(p, "delta", DEFAULT_DELTA)?,
        param_f64_or(p, "delta_exp", 0.0)?,
    )?))
}

/// Registry keyed by `viscosity.<side>.kind`.
pub fn viscosity_laws() -> Registry<dyn ViscosityLaw> {
    let mut r = Registry::new("viscosity law");
    r.register("constant", &["eps", "delta"], "constant eps (default 0.1) and delta (default 0)", build_constant);
    r.register(
        "power",
        &["eps", "eps_exp", "delta", "delta_exp"],
        "eps * rho^eps_exp and delta * rho^delta_exp",
        build_power,
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_derivative_matches_difference_quotient() {
        let law = PowerLaw::new(0.3, 1.7, 0.2, -0.5).unwrap();
        for &rho in &[0.4, 1.0, 2.5] {
            let h = 1e-6;
            for f in [|l: &PowerLaw, r| l.shear(r), |l: &PowerLaw, r| l.bulk(r)] {
                let fd = (f(&law, rho + h).value - f(&law, rho - h).value) / (2.0 * h);
                assert!((fd - f(&law, rho).deriv).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_shear() {
        assert!(Constant::new(0.0, 0.0).is_err());
        assert!(Constant::new(0.1, -1.0).is_err());
        let mut p = Params::new();
        p.insert("eps".into(), "-2".into());
        assert!(viscosity_laws().build("constant", &p).is_err());
    }

    #[test]
    fn defaults() {
        let law = viscosity_laws().build("constant", &Params::new()).unwrap();
        assert_eq!(law.shear(3.0).value, 0.1);
        assert_eq!(law.bulk(3.0).value, 0.0);
    }
}
