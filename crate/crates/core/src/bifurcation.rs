//! Hopf analysis at `u = u0/2` and the saddle-node normal form at `u = u0`.
//!
//! The first focus quantity is computed twice: from a closed form in
//! `(k, m)` and from the generic normal-form expression
//!
//! ```text
//! a1 = (F_xxx + F_xyy + G_xxy + G_yyy) / 16
//!    + (F_xy (F_xx + F_yy) - G_xy (G_xx + G_yy) - F_xx G_xx + F_yy G_yy) / (16 b)
//! ```
//!
//! evaluated on the vector field brought to rotation form by finite
//! differences. The two must agree.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::equilibria::{saddle_node_coefficient, thresholds, THRESHOLD_TOL};
use crate::error::{Error, Result};
use crate::model::{jacobian_normalized, rhs_normalized, NormalizedParams, State};

/// Direction conventions differ between references; the report keeps the
/// signs and the stability facts and carries the alternate name separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfVerdict {
    /// Bifurcating periodic orbits are orbitally asymptotically stable.
    pub orbits_stable: bool,
    /// Periodic orbits exist for release rates below the critical value.
    pub orbits_below_critical: bool,
    /// Name under the convention where a negative first Lyapunov
    /// coefficient is called supercritical.
    pub standard_label: String,
    /// Name used by the original model analysis for the same bifurcation.
    pub literature_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfReport {
    pub u_critical: f64,
    pub x3: f64,
    pub y3: f64,
    /// Real part of the eigenvalues of `J(E3)` at `u_critical`.
    pub alpha: f64,
    /// Imaginary part of the eigenvalues at `u_critical`.
    pub beta: f64,
    /// `d alpha / d u` at `u_critical`, equal to `-1 / y3`.
    pub alpha_prime: f64,
    /// First focus quantity (closed form).
    pub alpha1: f64,
    /// First Lyapunov coefficient `-alpha1 / alpha_prime`.
    pub l1: f64,
    pub omega: f64,
    pub predicted_period: f64,
    pub verdict: HopfVerdict,
}

/// Real part of the eigenvalues of `J(E3)` as a function of the release
/// rate: `m/2 - u/y3`.
pub fn focus_real_part(p: &NormalizedParams) -> f64 {
    0.5 * p.m - p.u / thresholds(p).y3
}

/// Hopf analysis of the positive equilibrium at `u = u0/2`. The release
/// rate in `p` is ignored.
pub fn hopf_analysis(p: &NormalizedParams) -> Result<HopfReport> {
    p.validate()?;
    let th = thresholds(p);
    let (k, m, y3) = (p.k, p.m, th.y3);
    let u_c = th.u_hopf;
    let x3 = (m * y3 - u_c) / (y3 * y3);
    let g = k * y3 * y3 + 1.0;
    let alpha = 0.5 * m - u_c / y3;
    let det = y3 * y3 * x3 * g;
    let beta = (det - alpha * alpha).sqrt();
    let omega = (x3 * g).sqrt();
    let alpha_prime = -1.0 / y3;
    let alpha1 = alpha1_closed_form(k, x3, y3, beta);
    let l1 = -alpha1 / alpha_prime;

    // cycles live where alpha has the opposite sign to alpha1
    let orbits_below_critical = (alpha1 < 0.0) == (alpha_prime < 0.0);
    let standard_label = if l1 < 0.0 {
        "supercritical"
    } else {
        "subcritical"
    };
    Ok(HopfReport {
        u_critical: u_c,
        x3,
        y3,
        alpha,
        beta,
        alpha_prime,
        alpha1,
        l1,
        omega,
        predicted_period: 2.0 * PI / beta,
        verdict: HopfVerdict {
            orbits_stable: alpha1 < 0.0,
            orbits_below_critical,
            standard_label: standard_label.to_string(),
            literature_label: "subcritical".to_string(),
        },
    })
}

/// `(x3 y3 M / (4 beta)) (kappa^2 / ((kappa+2)(2 kappa+2)) - 1)` with
/// `kappa = sqrt(1+4k) - 1` and `M = beta / (x3 (k y3^2 + 1))`.
fn alpha1_closed_form(k: f64, x3: f64, y3: f64, beta: f64) -> f64 {
    let kappa = 4.0 * k / ((1.0 + 4.0 * k).sqrt() + 1.0);
    let mm = beta / (x3 * (k * y3 * y3 + 1.0));
    let bracket = kappa * kappa / ((kappa + 2.0) * (2.0 * kappa + 2.0)) - 1.0;
    x3 * y3 * mm / (4.0 * beta) * bracket
}

/// Second and third partial derivatives of the rotated nonlinearity at the
/// origin.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NormalFormPartials {
    pub f_xxx: f64,
    pub f_xyy: f64,
    pub f_xy: f64,
    pub f_xx: f64,
    pub f_yy: f64,
    pub g_xxy: f64,
    pub g_yyy: f64,
    pub g_xy: f64,
    pub g_xx: f64,
    pub g_yy: f64,
    pub beta: f64,
}

impl NormalFormPartials {
    fn alpha1(&self) -> f64 {
        (self.f_xxx + self.f_xyy + self.g_xxy + self.g_yyy) / 16.0
            + (self.f_xy * (self.f_xx + self.f_yy)
                - self.g_xy * (self.g_xx + self.g_yy)
                - self.f_xx * self.g_xx
                + self.f_yy * self.g_yy)
                / (16.0 * self.beta)
    }
}

/// Base step of the finite-difference stencils.
const FD_STEP: f64 = 1e-2;

/// Relative disagreement between successive Richardson levels above which
/// the numeric derivative is rejected.
const RICHARDSON_REJECT: f64 = 1e-5;

fn stencil(order: usize) -> &'static [(f64, f64)] {
    match order {
        0 => &[(0.0, 1.0)],
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        _ => unreachable!("derivative order {order} not supported"),
    }
}

fn central_partial<F: Fn(f64, f64) -> f64>(f: &F, ox: usize, oy: usize, h: f64) -> f64 {
    let mut acc = 0.0;
    for &(i, wi) in stencil(ox) {
        for &(j, wj) in stencil(oy) {
            acc += wi * wj * f(i * h, j * h);
        }
    }
    acc / h.powi((ox + oy) as i32)
}

/// Central difference with two levels of Richardson extrapolation
/// (`h`, `h/2`, `h/4`).
fn richardson_partial<F: Fn(f64, f64) -> f64>(f: &F, ox: usize, oy: usize) -> Result<f64> {
    let h = FD_STEP;
    let d0 = central_partial(f, ox, oy, h);
    let d1 = central_partial(f, ox, oy, h / 2.0);
    let d2 = central_partial(f, ox, oy, h / 4.0);
    let r01 = (4.0 * d1 - d0) / 3.0;
    let r12 = (4.0 * d2 - d1) / 3.0;
    let r = (16.0 * r12 - r01) / 15.0;
    if !r.is_finite() || (r - r12).abs() > RICHARDSON_REJECT * r.abs().max(1.0) {
        return Err(Error::NumericalInstability(format!(
            "Richardson refinement of d^{ox}+{oy} did not settle: {r01} / {r12} / {r}"
        )));
    }
    Ok(r)
}

pub(crate) fn normal_form_partials(p: &NormalizedParams) -> Result<NormalFormPartials> {
    p.validate()?;
    let th = thresholds(p);
    let pc = p.with_u(th.u_hopf);
    let y3 = th.y3;
    let e3 = State::new((pc.m * y3 - pc.u) / (y3 * y3), y3);
    let j = jacobian_normalized(&pc, &e3)?;
    let alpha = 0.5 * j.trace();
    let beta = (j.det() - alpha * alpha).sqrt();
    if beta.is_nan() || beta <= 0.0 || j.j12 == 0.0 {
        return Err(Error::NumericalInstability(format!(
            "J(E3) is not a rotation at the Hopf point: {j:?}"
        )));
    }
    // P = ((1, 0), (n, mm)) brings J to ((alpha, -beta), (beta, alpha))
    let n = alpha / j.j12;
    let mm = -beta / j.j12;
    let base = rhs_normalized(&pc, &e3);

    let remainder = |dx: f64, dy: f64| {
        let v = rhs_normalized(&pc, &State::new(e3.x + dx, e3.y + dy));
        (
            v.dx - base.dx - (j.j11 * dx + j.j12 * dy),
            v.dy - base.dy - (j.j21 * dx + j.j22 * dy),
        )
    };
    let big_f = |xi: f64, eta: f64| remainder(xi, n * xi + mm * eta).0;
    let big_g = |xi: f64, eta: f64| {
        let (f, g) = remainder(xi, n * xi + mm * eta);
        (-n * f + g) / mm
    };

    Ok(NormalFormPartials {
        f_xxx: richardson_partial(&big_f, 3, 0)?,
        f_xyy: richardson_partial(&big_f, 1, 2)?,
        f_xy: richardson_partial(&big_f, 1, 1)?,
        f_xx: richardson_partial(&big_f, 2, 0)?,
        f_yy: richardson_partial(&big_f, 0, 2)?,
        g_xxy: richardson_partial(&big_g, 2, 1)?,
        g_yyy: richardson_partial(&big_g, 0, 3)?,
        g_xy: richardson_partial(&big_g, 1, 1)?,
        g_xx: richardson_partial(&big_g, 2, 0)?,
        g_yy: richardson_partial(&big_g, 0, 2)?,
        beta,
    })
}

/// First focus quantity from the generic normal-form formula with numeric
/// partial derivatives. Independent check on [`HopfReport::alpha1`].
pub fn first_lyapunov_numeric(p: &NormalizedParams) -> Result<f64> {
    Ok(normal_form_partials(p)?.alpha1())
}

/// Hopf report with the closed-form focus quantity checked against the
/// numeric one. Fails with [`Error::Consistency`] when they disagree by more
/// than `rel_tol`.
pub fn hopf_analysis_checked(p: &NormalizedParams, rel_tol: f64) -> Result<HopfReport> {
    let report = hopf_analysis(p)?;
    let numeric = first_lyapunov_numeric(p)?;
    if (numeric - report.alpha1).abs() > rel_tol * report.alpha1.abs() {
        return Err(Error::Consistency(format!(
            "first focus quantity: closed form {} vs normal form {numeric}",
            report.alpha1
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleNodeReport {
    pub u_critical: f64,
    pub y2: f64,
    /// Coefficient of `X^2` in the center-manifold flow after rescaling
    /// time by `-m`; always positive.
    pub quadratic_coefficient: f64,
    /// Coefficient of `X^3` in the same flow, `-k^2 y2^7 / m^3`.
    pub cubic_coefficient: f64,
    pub attracting: bool,
}

/// Center-manifold normal form of the pest-free equilibrium when it merges
/// with the positive one at `u = u0`.
pub fn saddle_node_normal_form(p: &NormalizedParams) -> Result<SaddleNodeReport> {
    p.validate()?;
    let th = thresholds(p);
    if (p.u - th.u0).abs() > THRESHOLD_TOL * th.u0 {
        return Err(Error::NotApplicable(format!(
            "saddle-node normal form needs u = u0 = {}, got {}",
            th.u0, p.u
        )));
    }
    let y2 = p.u / p.m;
    let a = saddle_node_coefficient(p.k, p.m, y2);
    Ok(SaddleNodeReport {
        u_critical: th.u0,
        y2,
        quadratic_coefficient: a,
        cubic_coefficient: -p.k * p.k * y2.powi(7) / p.m.powi(3),
        attracting: a > 0.0,
    })
}
