//! Barotropic pressure laws `P(rho)`, their enthalpies and inverses.
//!
//! Laws are trait objects selected by name (`polytropic`, `tabulated`)
//! through [`pressure_laws`]. Every law is strictly increasing on its working
//! range, so the enthalpy `h(rho) = int_1^rho P'(r)/r dr` is invertible on its
//! image; inversion is what produces the hydrostatic density profile.

use std::fmt::Debug;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_integrate;
use crate::registry::{param_f64, Params, Registry};

/// Relative tolerance of tabulated enthalpy quadrature.
pub const ENTHALPY_QUAD_TOL: f64 = 1e-12;
/// Residual tolerance of enthalpy inversion, relative to `1 + |h|`.
pub const ENTHALPY_INVERSE_TOL: f64 = 1e-11;
/// Smallest admissible slope of a tabulated law.
pub const MIN_SLOPE: f64 = 1e3 * f64::MIN_POSITIVE;

/// A barotropic equation of state for one fluid.
pub trait PressureLaw: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Densities for which the law is defined, `(lo, hi)`. `lo` is exclusive
    /// when it is zero.
    fn working_range(&self) -> (f64, f64);

    /// `P(rho)`.
    fn pressure(&self, rho: f64) -> Result<f64>;
    /// `P'(rho) > 0`.
    fn slope(&self, rho: f64) -> Result<f64>;
    /// `P''(rho)`.
    fn curvature(&self, rho: f64) -> Result<f64>;

    fn enthalpy(&self, rho: f64) -> Result<f64>;
    fn enthalpy_inverse(&self, h: f64) -> Result<f64>;
    /// Open interval `(lo, hi)` of attainable enthalpies (closed for tabulated laws).
    fn enthalpy_image(&self) -> (f64, f64);

    fn pressure_inverse(&self, p: f64) -> Result<f64>;
    fn pressure_image(&self) -> (f64, f64);
}

fn check_rho(law: &dyn PressureLaw, rho: f64) -> Result<()> {
    let (lo, hi) = law.working_range();
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("density must be positive, got {rho}")));
    }
    if rho < lo || rho > hi {
        return Err(Error::Domain(format!(
            "density {rho} outside the working range [{lo}, {hi}] of the {} law",
            law.name()
        )));
    }
    Ok(())
}

/// `P(rho)` for any law.
pub fn pressure(law: &dyn PressureLaw, rho: f64) -> Result<f64> {
    law.pressure(rho)
}

/// `h(rho) = int_1^rho P'(r)/r dr`.
pub fn enthalpy(law: &dyn PressureLaw, rho: f64) -> Result<f64> {
    law.enthalpy(rho)
}

pub fn enthalpy_inverse(law: &dyn PressureLaw, h: f64) -> Result<f64> {
    law.enthalpy_inverse(h)
}

/// Whether `rho_minus` produces a Rayleigh–Taylor (heavy-over-light) state:
/// `P_-(rho) > P_+(rho)` and `P_-(rho)` attainable by the upper law.
pub fn admissible(lower: &dyn PressureLaw, upper: &dyn PressureLaw, rho_minus: f64) -> Result<bool> {
    let p_lower = lower.pressure(rho_minus)?;
    let (plo, phi) = upper.pressure_image();
    if !(p_lower > plo && p_lower <= phi) {
        return Ok(false);
    }
    // The upper law may not be defined at rho_minus itself (tabulated range);
    // compare through the inverse instead, which is equivalent for increasing P_+.
    let rho_plus = upper.pressure_inverse(p_lower)?;
    Ok(rho_plus > rho_minus)
}

/// `P(rho) = K rho^gamma` with `K > 0`, `gamma >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polytropic {
    pub k: f64,
    pub gamma: f64,
}

impl Polytropic {
    pub fn new(k: f64, gamma: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Config(format!("polytropic K must be positive, got {k}")));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("polytropic gamma must be >= 1, got {gamma}")));
        }
        Ok(Self { k, gamma })
    }

    fn isothermal(&self) -> bool {
        self.gamma == 1.0
    }
}

impl PressureLaw for Polytropic {
    fn name(&self) -> &'static str {
        "polytropic"
    }

    fn working_range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn pressure(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        Ok(self.k * rho.powf(self.gamma))
    }

    fn slope(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        Ok(self.k * self.gamma * rho.powf(self.gamma - 1.0))
    }

    fn curvature(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        if self.isothermal() {
            return Ok(0.0);
        }
        Ok(self.k * self.gamma * (self.gamma - 1.0) * rho.powf(self.gamma - 2.0))
    }

    fn enthalpy(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        if self.isothermal() {
            return Ok(self.k * rho.ln());
        }
        let gm1 = self.gamma - 1.0;
        // expm1 keeps gamma -> 1 continuous with the logarithmic branch
        Ok(self.k * self.gamma * (gm1 * rho.ln()).exp_m1() / gm1)
    }

    fn enthalpy_inverse(&self, h: f64) -> Result<f64> {
        let (lo, hi) = self.enthalpy_image();
        if !(h > lo && h < hi) {
            return Err(Error::Range(format!(
                "enthalpy {h} outside the image ({lo}, {hi}) of the polytropic law"
            )));
        }
        if self.isothermal() {
            return Ok((h / self.k).exp());
        }
        let gm1 = self.gamma - 1.0;
        let rho = ((h * gm1 / (self.k * self.gamma)).ln_1p() / gm1).exp();
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Range(format!("enthalpy {h} maps to a non-positive density")));
        }
        Ok(rho)
    }

    fn enthalpy_image(&self) -> (f64, f64) {
        if self.isothermal() {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (-self.k * self.gamma / (self.gamma - 1.0), f64::INFINITY)
        }
    }

    fn pressure_inverse(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Range(format!("pressure {p} outside (0, inf)")));
        }
        Ok((p / self.k).powf(1.0 / self.gamma))
    }

    fn pressure_image(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

/// Shape-preserving (Fritsch–Carlson / PCHIP) interpolant through strictly
/// increasing `(rho, P)` samples.
///
/// The enthalpy base point is `rho = 1` when the table covers it and the
/// smallest tabulated density otherwise; only enthalpy differences enter the
/// steady profile, so the base point is immaterial there.
#[derive(Debug, Clone)]
pub struct Tabulated {
    rho: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
    base: f64,
    /// Enthalpy at every knot, relative to `base`.
    h_knots: Vec<f64>,
}

impl Tabulated {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("tabulated law needs at least two samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 > w[0].1) {
                return Err(Error::Config(format!(
                    "tabulated samples must be strictly increasing in rho and P; offending pair {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        if !(samples[0].0 > 0.0) || !(samples[0].1 > 0.0) {
            return Err(Error::Config("tabulated densities and pressures must be positive".into()));
        }
        let rho: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let p: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let dp = pchip_slopes(&rho, &p);
        if let Some(bad) = dp.iter().position(|d| !(*d > MIN_SLOPE)) {
            return Err(Error::Config(format!(
                "tabulated law has non-positive slope at rho = {}",
                rho[bad]
            )));
        }
        let base = if rho[0] <= 1.0 && 1.0 <= rho[rho.len() - 1] { 1.0 } else { rho[0] };
        let mut law = Self {
            rho,
            p,
            dp,
            base,
            h_knots: Vec::new(),
        };
        law.h_knots = law.rho.iter().map(|&r| law.integral_from_base(r)).collect();
        Ok(law)
    }

    /// Load a two-column CSV with header `rho,P`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Config(format!("cannot read table {}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            .clone();
        if headers.len() != 2 || &headers[0] != "rho" || &headers[1] != "P" {
            return Err(Error::Config(format!(
                "{}: expected header `rho,P`, found `{}`",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| {
                    Error::Config(format!("{}: bad number on data row {}", path.display(), line + 1))
                })
            };
            samples.push((parse(0)?, parse(1)?));
        }
        Self::new(&samples)
    }

    fn interval(&self, rho: f64) -> usize {
        let n = self.rho.len();
        match self.rho.binary_search_by(|r| r.partial_cmp(&rho).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Hermite cubic value, first and second derivative at `rho`.
    fn eval(&self, rho: f64) -> (f64, f64, f64) {
        let i = self.interval(rho);
        let h = self.rho[i + 1] - self.rho[i];
        let t = (rho - self.rho[i]) / h;
        let (p0, p1) = (self.p[i], self.p[i + 1]);
        let (m0, m1) = (self.dp[i] * h, self.dp[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let d1 = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        let d2 = ((12.0 * t - 6.0) * p0 + (6.0 * t - 4.0) * m0 + (-12.0 * t + 6.0) * p1 + (6.0 * t - 2.0) * m1)
            / (h * h);
        (val, d1, d2)
    }

    fn integrand(&self, r: f64) -> f64 {
        self.eval(r).1 / r
    }

    /// `int_base^rho P'(r)/r dr`, integrating knot interval by knot interval.
    fn integral_from_base(&self, rho: f64) -> f64 {
        let (a, b, sign) = if rho >= self.base { (self.base, rho, 1.0) } else { (rho, self.base, -1.0) };
        let mut total = 0.0;
        let mut lo = a;
        for &knot in self.rho.iter().filter(|&&k| k > a && k < b) {
            total += adaptive_integrate(|r| self.integrand(r), lo, knot, ENTHALPY_QUAD_TOL);
            lo = knot;
        }
        total += adaptive_integrate(|r| self.integrand(r), lo, b, ENTHALPY_QUAD_TOL);
        sign * total
    }
}

/// Fritsch–Butland harmonic-mean slopes with shape-preserving end slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let w1 = 2.0 * h[i] + h[i - 1];
        let w2 = h[i] + 2.0 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| -> f64 {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        // Keep the end slope strictly inside (0, 3 d0) so the cubic stays strictly increasing.
        s.clamp(0.25 * d0, 2.9 * d0)
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

impl PressureLaw for Tabulated {
    fn name(&self) -> &'static str {
        "tabulated"
    }

    fn working_range(&self) -> (f64, f64) {
        (self.rho[0], self.rho[self.rho.len() - 1])
    }

    fn pressure(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        Ok(self.eval(rho).0)
    }

    fn slope(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        Ok(self.eval(rho).1.max(MIN_SLOPE))
    }

    fn curvature(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        Ok(self.eval(rho).2)
    }

    fn enthalpy(&self, rho: f64) -> Result<f64> {
        check_rho(self, rho)?;
        let i = self.interval(rho);
        let start = self.rho[i];
        Ok(self.h_knots[i] + adaptive_integrate(|r| self.integrand(r), start, rho, ENTHALPY_QUAD_TOL))
    }

    fn enthalpy_inverse(&self, h: f64) -> Result<f64> {
        let (lo, hi) = self.enthalpy_image();
        if !(h >= lo && h <= hi) {
            return Err(Error::Range(format!(
                "enthalpy {h} outside the image [{lo}, {hi}] of the tabulated law"
            )));
        }
        let (mut a, mut b) = self.working_range();
        let tol = ENTHALPY_INVERSE_TOL * (1.0 + h.abs());
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let hm = self.enthalpy(mid)?;
            if (hm - h).abs() <= tol || b - a <= 4.0 * f64::EPSILON * mid {
                return Ok(mid);
            }
            if hm < h {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }

    fn enthalpy_image(&self) -> (f64, f64) {
        (self.h_knots[0], self.h_knots[self.h_knots.len() - 1])
    }

    fn pressure_inverse(&self, p: f64) -> Result<f64> {
        let (lo, hi) = self.pressure_image();
        if !(p >= lo && p <= hi) {
            return Err(Error::Range(format!("pressure {p} outside [{lo}, {hi}]")));
        }
        let (mut a, mut b) = self.working_range();
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if b - a <= 2.0 * f64::EPSILON * mid {
                break;
            }
            if self.eval(mid).0 < p {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }

    fn pressure_image(&self) -> (f64, f64) {
        (self.p[0], self.p[self.p.len() - 1])
    }
}

fn build_polytropic(p: &Params) -> Result<Arc<dyn PressureLaw>> {
    Ok(Arc::new(Polytropic::new(param_f64(p, "K")?, param_f64(p, "gamma")?)?))
}

fn build_tabulated(p: &Params) -> Result<Arc<dyn PressureLaw>> {
    let path = p
        .get("table")
        .ok_or_else(|| Error::Config("tabulated law needs `table = <csv path>`".into()))?;
    Ok(Arc::new(Tabulated::from_csv(Path::new(path))?))
}

/// Registry of pressure-law constructors, keyed by `fluid.<side>.law`.
pub fn pressure_laws() -> Registry<dyn PressureLaw> {
    let mut r = Registry::new("pressure law");
    r.register("polytropic", &["K", "gamma"], "P = K rho^gamma, K > 0, gamma >= 1", build_polytropic);
    r.register(
        "tabulated",
        &["table"],
        "monotone cubic through a `rho,P` CSV table",
        build_tabulated,
    );
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(k: f64, g: f64) -> Polytropic {
        Polytropic::new(k, g).unwrap()
    }

    #[test]
    fn pressure_examples() {
        assert_eq!(pressure(&poly(1.0, 1.0), 1.0).unwrap(), 1.0);
        assert_eq!(pressure(&poly(2.0, 1.0), 3.0).unwrap(), 6.0);
        assert!((pressure(&poly(1.0, 5.0 / 3.0), 8.0).unwrap() - 32.0).abs() < 1e-12);
        assert!(matches!(pressure(&poly(1.0, 1.0), 0.0), Err(Error::Domain(_))));
        assert!(matches!(pressure(&poly(1.0, 1.0), -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn enthalpy_examples() {
        assert_eq!(enthalpy(&poly(1.0, 1.0), 1.0).unwrap(), 0.0);
        assert!((enthalpy(&poly(2.0, 1.0), std::f64::consts::E).unwrap() - 2.0).abs() < 1e-15);
        assert!((enthalpy(&poly(1.0, 2.0), 3.0).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(enthalpy(&poly(1.0, 2.0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn enthalpy_inverse_examples() {
        assert_eq!(enthalpy_inverse(&poly(1.0, 1.0), 0.0).unwrap(), 1.0);
        let e = enthalpy_inverse(&poly(2.0, 1.0), 2.0).unwrap();
        assert!((e - std::f64::consts::E).abs() < 1e-14);
        assert!(matches!(enthalpy_inverse(&poly(1.0, 2.0), -2.0), Err(Error::Range(_))));
        assert!(matches!(enthalpy_inverse(&poly(1.0, 2.0), -3.0), Err(Error::Range(_))));
    }

    #[test]
    fn admissibility_examples() {
        assert!(admissible(&poly(2.0, 1.0), &poly(1.0, 1.0), 1.0).unwrap());
        assert!(!admissible(&poly(1.0, 1.0), &poly(2.0, 1.0), 1.0).unwrap());
        assert!(admissible(&poly(1.0, 2.0), &poly(1.0, 1.0), 2.0).unwrap());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Polytropic::new(0.0, 1.0).is_err());
        assert!(Polytropic::new(1.0, 0.5).is_err());
        assert!(Tabulated::new(&[(1.0, 1.0)]).is_err());
        assert!(Tabulated::new(&[(1.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(Tabulated::new(&[(2.0, 1.0), (1.0, 2.0)]).is_err());
    }

    fn table_from(law: &Polytropic, lo: f64, hi: f64, n: usize) -> Tabulated {
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let r = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (r, law.pressure(r).unwrap())
            })
            .collect();
        Tabulated::new(&samples).unwrap()
    }

    #[test]
    fn tabulated_tracks_smooth_law() {
        let exact = poly(1.5, 1.4);
        let tab = table_from(&exact, 0.2, 5.0, 400);
        for &r in &[0.3, 0.9, 1.0, 2.2, 4.7] {
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
            assert!(rel(tab.pressure(r).unwrap(), exact.pressure(r).unwrap()) < 1e-5, "P at {r}");
            assert!(rel(tab.slope(r).unwrap(), exact.slope(r).unwrap()) < 1e-3, "slope at {r}");
            let dh = tab.enthalpy(r).unwrap() - exact.enthalpy(r).unwrap();
            assert!(dh.abs() < 1e-4, "r={r} dh={dh}");
        }
        // inverse round trip on the tabulated law itself
        for &r in &[0.25, 1.7, 4.9] {
            let h = tab.enthalpy(r).unwrap();
            let back = tab.enthalpy_inverse(h).unwrap();
            assert!((tab.enthalpy(back).unwrap() - h).abs() <= ENTHALPY_INVERSE_TOL * (1.0 + h.abs()));
        }
        assert!(matches!(tab.pressure(6.0), Err(Error::Domain(_))));
        assert!(matches!(tab.enthalpy_inverse(1e3), Err(Error::Range(_))));
    }

    #[test]
    fn tabulated_is_strictly_monotone_on_rough_data() {
        let samples = [(0.5, 0.1), (1.0, 0.11), (1.5, 3.0), (2.0, 3.01), (4.0, 9.0)];
        let tab = Tabulated::new(&samples).unwrap();
        let mut prev = tab.pressure(0.5).unwrap();
        for i in 1..=3500 {
            let r = 0.5 + 3.5 * i as f64 / 3500.0;
            let p = tab.pressure(r).unwrap();
            assert!(p > prev, "not increasing at {r}");
            assert!(tab.slope(r).unwrap() > 0.0);
            prev = p;
        }
    }

    proptest! {
        #[test]
        fn polytropic_enthalpy_round_trip(k in 0.1f64..10.0, g in 1.0f64..3.0, rho in 0.1f64..10.0) {
            let law = poly(k, g);
            let h = law.enthalpy(rho).unwrap();
            let back = law.enthalpy_inverse(h).unwrap();
            prop_assert!((back - rho).abs() <= 1e-10 * rho);
        }

        #[test]
        fn enthalpy_strictly_increasing(k in 0.1f64..10.0, g in 1.0f64..3.0, a in 0.1f64..10.0, d in 1e-3f64..5.0) {
            let law = poly(k, g);
            prop_assert!(law.enthalpy(a).unwrap() < law.enthalpy(a + d).unwrap());
        }

        #[test]
        fn admissible_matches_polytropic_inequalities(
            km in 0.2f64..5.0, kp in 0.2f64..5.0, gm in 1.0f64..2.5, gp in 1.0f64..2.5, rho in 0.1f64..5.0
        ) {
            let lower = poly(km, gm);
            let upper = poly(kp, gp);
            // (rho)^(gm-gp) > kp/km, compared in log space
            let lhs = (gm - gp) * rho.ln();
            let rhs = (kp / km).ln();
            prop_assume!((lhs - rhs).abs() > 1e-9);
            let expected = lhs > rhs;
            prop_assert_eq!(admissible(&lower, &upper, rho).unwrap(), expected);
        }
    }
}
