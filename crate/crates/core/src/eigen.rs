//! Smallest eigenpair of the symmetric-definite pencil `(E0 + s E1, J)`.
//!
//! Solvers are registered by name: `dense` reduces with a Cholesky factor of
//! `J` and diagonalizes; `shift-invert` runs a restarted Lanczos iteration on
//! `(A - tau J)^{-1} J` with `tau` below the spectrum and polishes with
//! Rayleigh quotient iteration; `auto` picks by problem size.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::band::{dot, norm, BandLu, SymBand};
use crate::error::{Error, Result};
use crate::forms::FormSet;
use crate::registry::{Params, Registry};

pub const ITERATION_CAP: usize = 500;
/// Tolerance on eigenvalue increments, relative to `1 + |mu|`.
pub const INCREMENT_TOL: f64 = 1e-11;
/// Residual requirement relative to `||E0|| + s ||E1||`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Largest problem handed to the dense solver by `auto`.
pub const AUTO_DENSE_MAX: usize = 600;
const KRYLOV_DIM: usize = 20;

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub mu: f64,
    /// `x^T J x = 1`, sign fixed so that `psi(0) >= 0`.
    pub minimizer: Vec<f64>,
    /// `||A x - mu J x|| / ||x||`.
    pub residual: f64,
}

pub trait PencilSolver: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Smallest eigenpair of `(a, m)`; `lower_bound` is a strict lower bound
    /// of the spectrum, `guess` an optional starting vector.
    fn smallest(&self, a: &SymBand, m: &SymBand, lower_bound: f64, guess: Option<&[f64]>) -> Result<EigenResult>;
}

#[derive(Debug, Default)]
pub struct Dense;

#[derive(Debug, Default)]
pub struct ShiftInvert;

#[derive(Debug, Default)]
pub struct Auto;

fn finish(a: &SymBand, m: &SymBand, mu: f64, mut x: Vec<f64>, interface: Option<usize>) -> EigenResult {
    let mx = m.matvec(&x);
    let scale = dot(&x, &mx).sqrt();
    x.iter_mut().for_each(|v| *v /= scale);
    if let Some(i) = interface {
        if x[i] < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let residual = residual(a, m, mu, &x);
    EigenResult {
        mu,
        minimizer: x,
        residual,
    }
}

pub fn residual(a: &SymBand, m: &SymBand, mu: f64, x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let mx = m.matvec(x);
    let r: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - mu * q).collect();
    norm(&r) / norm(x)
}

impl PencilSolver for Dense {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn smallest(&self, a: &SymBand, m: &SymBand, _lower: f64, _guess: Option<&[f64]>) -> Result<EigenResult> {
        let (mu, x) = dense_bottom(&a.to_dense(), &m.to_dense())?;
        Ok(finish(a, m, mu, x, None))
    }
}

/// Smallest generalized eigenpair of dense symmetric `(a, m)`, `m` positive definite.
pub fn dense_bottom(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let (vals, vecs) = dense_spectrum(a, m)?;
    let k = vals.iter().enumerate().fold(0, |best, (i, v)| if *v < vals[best] { i } else { best });
    Ok((vals[k], vecs.column(k).iter().copied().collect()))
}

/// All generalized eigenpairs of dense `(a, m)`; eigenvectors are `m`-orthonormal columns.
pub fn dense_spectrum(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let vecs = l
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| Error::Solver("singular Cholesky factor".into()))?;
    Ok((eig.eigenvalues.iter().copied().collect(), vecs))
}

impl PencilSolver for ShiftInvert {
    fn name(&self) -> &'static str {
        "shift-invert"
    }

    fn smallest(&self, a: &SymBand, m: &SymBand, lower: f64, guess: Option<&[f64]>) -> Result<EigenResult> {
        let n = a.dim();
        let a_scale = a.norm_inf().max(f64::MIN_POSITIVE);
        // tau strictly below the spectrum keeps A - tau M positive definite
        let mut tau = lower - 1e-3 * (1.0 + lower.abs());
        let factor = loop {
            let shifted = SymBand::combine(&[(1.0, a), (-tau, m)]);
            match shifted.cholesky() {
                Ok(f) => break f,
                Err(_) if tau > lower - 1e6 * (1.0 + lower.abs()) => tau -= 10.0 * (1.0 + (lower - tau).abs()),
                Err(e) => return Err(e),
            }
        };

        let mut v: Vec<f64> = match guess {
            Some(g) if g.len() == n && norm(g) > 0.0 => g.to_vec(),
            _ => (0..n).map(|i| 1.0 + 0.1 * ((i as f64) * 0.618).sin()).collect(),
        };
        let mut mu_prev = f64::INFINITY;
        let mut applications = 0usize;
        let mut mu = f64::NAN;
        let dim = KRYLOV_DIM.min(n);
        while applications < ITERATION_CAP {
            let (theta, ritz) = lanczos(m, &factor, &v, dim, &mut applications)?;
            mu = tau + 1.0 / theta;
            v = ritz;
            let res = residual(a, m, mu, &v) * norm(&v) / norm(&m.matvec(&v)).max(f64::MIN_POSITIVE);
            let converged_value = (mu - mu_prev).abs() <= INCREMENT_TOL * (1.0 + mu.abs());
            mu_prev = mu;
            if converged_value || res <= 1e-3 * RESIDUAL_TOL * a_scale {
                break;
            }
        }
        if !mu.is_finite() {
            return Err(Error::Solver("shift-invert iteration produced no eigenvalue".into()));
        }
        let (mu, v) = rayleigh_polish(a, m, mu, v)?;
        let out = finish(a, m, mu, v, None);
        if out.residual > RESIDUAL_TOL * a_scale {
            return Err(Error::Solver(format!(
                "shift-invert did not converge after {applications} operator applications: \
                 mu = {mu:.12e}, residual {:.3e} > {:.3e}",
                out.residual,
                RESIDUAL_TOL * a_scale
            )));
        }
        Ok(out)
    }
}

/// One Lanczos cycle in the `M` inner product on `(A - tau M)^{-1} M`,
/// with full reorthogonalization. Returns the largest Ritz value and its vector.
fn lanczos(
    m: &SymBand,
    factor: &crate::band::BandCholesky,
    start: &[f64],
    dim: usize,
    applications: &mut usize,
) -> Result<(f64, Vec<f64>)> {
    let n = start.len();
    let m_norm = |x: &[f64]| dot(x, &m.matvec(x)).max(0.0).sqrt();
    let s = m_norm(start);
    if !(s > 0.0) {
        return Err(Error::Solver("Lanczos start vector has zero mass".into()));
    }
    let mut q: Vec<Vec<f64>> = vec![start.iter().map(|v| v / s).collect()];
    let mut mq: Vec<Vec<f64>> = vec![m.matvec(&q[0])];
    let mut alpha = Vec::with_capacity(dim);
    let mut beta: Vec<f64> = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut w = factor.solve(&mq[j]);
        *applications += 1;
        let a_j = dot(&w, &mq[j]);
        alpha.push(a_j);
        for _ in 0..2 {
            for (qi, mqi) in q.iter().zip(&mq) {
                let c = dot(&w, mqi);
                w.iter_mut().zip(qi).for_each(|(wv, qv)| *wv -= c * qv);
            }
        }
        let b = m_norm(&w);
        if j + 1 == dim || b <= 1e-13 * a_j.abs().max(f64::MIN_POSITIVE) || q.len() == n {
            break;
        }
        beta.push(b);
        let next: Vec<f64> = w.iter().map(|v| v / b).collect();
        mq.push(m.matvec(&next));
        q.push(next);
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > eig.eigenvalues[best] { i } else { best });
    let theta = eig.eigenvalues[top];
    if !(theta > 0.0) {
        return Err(Error::Solver("shift-invert operator lost positivity".into()));
    }
    let mut ritz = vec![0.0; n];
    for (i, qi) in q.iter().take(k).enumerate() {
        let c = eig.eigenvectors[(i, top)];
        ritz.iter_mut().zip(qi).for_each(|(r, v)| *r += c * v);
    }
    Ok((theta, ritz))
}

/// A few Rayleigh quotient iterations from a converged Ritz pair.
fn rayleigh_polish(a: &SymBand, m: &SymBand, mut mu: f64, mut x: Vec<f64>) -> Result<(f64, Vec<f64>)> {
    let rq = |x: &[f64]| a.quad(x) / m.quad(x);
    let mut best = (residual(a, m, mu, &x), mu, x.clone());
    for _ in 0..3 {
        let shifted = SymBand::combine(&[(1.0, a), (-mu, m)]);
        let lu = match BandLu::factor_sym(&shifted) {
            Ok(lu) => lu,
            Err(_) => break, // exact eigenvalue hit
        };
        let y = lu.solve(&m.matvec(&x));
        let ny = norm(&y);
        if !ny.is_finite() || ny == 0.0 {
            break;
        }
        x = y.iter().map(|v| v / ny).collect();
        mu = rq(&x);
        let r = residual(a, m, mu, &x);
        if r < best.0 {
            best = (r, mu, x.clone());
        } else {
            break;
        }
    }
    Ok((best.1, best.2))
}

impl PencilSolver for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn smallest(&self, a: &SymBand, m: &SymBand, lower: f64, guess: Option<&[f64]>) -> Result<EigenResult> {
        if a.dim() <= AUTO_DENSE_MAX {
            Dense.smallest(a, m, lower, guess)
        } else {
            ShiftInvert.smallest(a, m, lower, guess)
        }
    }
}

fn build_dense(_: &Params) -> Result<Arc<dyn PencilSolver>> {
    Ok(Arc::new(Dense))
}
fn build_shift_invert(_: &Params) -> Result<Arc<dyn PencilSolver>> {
    Ok(Arc::new(ShiftInvert))
}
fn build_auto(_: &Params) -> Result<Arc<dyn PencilSolver>> {
    Ok(Arc::new(Auto))
}

/// Registry keyed by `solver.eigen`.
pub fn pencil_solvers() -> Registry<dyn PencilSolver> {
    let mut r = Registry::new("eigensolver");
    r.register("dense", &[], "Cholesky reduction and full symmetric diagonalization", build_dense);
    r.register(
        "shift-invert",
        &[],
        "banded shift-invert Lanczos with Rayleigh quotient polish",
        build_shift_invert,
    );
    r.register("auto", &[], "dense up to 600 dofs, shift-invert above", build_auto);
    r
}

/// `mu(s)` for `(E0 + s E1, J)` with its `J`-normalized minimizer, `psi(0) >= 0`.
pub fn smallest_eig(solver: &dyn PencilSolver, forms: &FormSet, s: f64, guess: Option<&[f64]>) -> Result<EigenResult> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("s must be nonnegative, got {s}")));
    }
    let a = forms.pencil(s);
    let lower = -forms.disc.profile.geometry.g * forms.xi_mag;
    let r = solver.smallest(&a, &forms.j, lower, guess)?;
    Ok(finish(&a, &forms.j, r.mu, r.minimizer, Some(forms.interface_dof)))
}

/// Smallest eigenvalue of `(E1, J)`, a computable lower slope of `mu(s)`.
pub fn c2_diagnostic(solver: &dyn PencilSolver, forms: &FormSet) -> Result<f64> {
    Ok(solver.smallest(&forms.e1, &forms.j, 0.0, None)?.mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::assemble;
    use crate::forms::tests::default_disc;

    #[test]
    fn dense_and_shift_invert_agree() {
        let disc = default_disc(48, 2, 0.1);
        let forms = assemble(&disc, 1.0).unwrap();
        for &s in &[0.0, 0.05, 0.7, 5.0] {
            let d = smallest_eig(&Dense, &forms, s, None).unwrap();
            let k = smallest_eig(&ShiftInvert, &forms, s, None).unwrap();
            assert!((d.mu - k.mu).abs() < 1e-10 * (1.0 + d.mu.abs()), "s={s}: {} vs {}", d.mu, k.mu);
            let overlap = dot(&d.minimizer, &forms.j.matvec(&k.minimizer));
            assert!((overlap - 1.0).abs() < 1e-7, "overlap {overlap}");
            assert!((forms.j.quad(&k.minimizer) - 1.0).abs() < 1e-12);
            let scale = forms.e0.norm_inf() + s * forms.e1.norm_inf();
            assert!(k.residual <= RESIDUAL_TOL * scale);
            assert!(d.residual <= RESIDUAL_TOL * scale);
        }
    }

    #[test]
    fn unstable_below_and_stable_above_critical() {
        let disc = default_disc(32, 2, 0.1);
        let f = assemble(&disc, 1.0).unwrap();
        assert!(smallest_eig(&Dense, &f, 1e-6, None).unwrap().mu < 0.0);
        let xi_c = disc.profile.xi_c();
        let f = assemble(&disc, 2.0 * xi_c).unwrap();
        for &s in &[0.01, 0.1, 1.0] {
            assert!(smallest_eig(&Dense, &f, s, None).unwrap().mu >= -1e-9);
        }
    }

    #[test]
    fn c2_positive_and_lower_slope() {
        let disc = default_disc(32, 2, 0.1);
        let f = assemble(&disc, 1.0).unwrap();
        let c2 = c2_diagnostic(&Dense, &f).unwrap();
        assert!(c2 > 0.0);
        for &s in &[0.1, 1.0, 10.0] {
            let mu = smallest_eig(&Dense, &f, s, None).unwrap().mu;
            assert!(mu >= -1.0 + s * c2 - 1e-8);
        }
    }

    #[test]
    fn registry_builds_all() {
        let reg = pencil_solvers();
        for name in reg.names() {
            assert_eq!(reg.build(name, &Params::new()).unwrap().name(), name);
        }
    }
}
