//! Equilibria, release thresholds and linear stability of the model family.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bifurcation;
use crate::error::{Error, Result};
use crate::model::{
    jacobian_normalized, jacobian_original, nondimensionalize, Jacobian2, NormalizedParams,
    OriginalParams, State, UnitSystem,
};

/// Relative band around `u0` and `u0 / 2` inside which a release rate is
/// treated as sitting exactly on the threshold.
pub const THRESHOLD_TOL: f64 = 1e-9;

/// Below this inhibition level `y3_of` switches to its Taylor series.
pub const SMALL_K: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    Saddle,
    StableNode,
    UnstableNode,
    StableFocus,
    UnstableFocus,
    CenterTypeStableFocus,
    AttractingSaddleNode,
    DegenerateOther,
}

impl StabilityClass {
    pub fn is_attracting(self) -> bool {
        matches!(
            self,
            StabilityClass::StableNode
                | StabilityClass::StableFocus
                | StabilityClass::CenterTypeStableFocus
                | StabilityClass::AttractingSaddleNode
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Saddle => "saddle",
            StabilityClass::StableNode => "stable_node",
            StabilityClass::UnstableNode => "unstable_node",
            StabilityClass::StableFocus => "stable_focus",
            StabilityClass::UnstableFocus => "unstable_focus",
            StabilityClass::CenterTypeStableFocus => "center_type_stable_focus",
            StabilityClass::AttractingSaddleNode => "attracting_saddle_node",
            StabilityClass::DegenerateOther => "degenerate_other",
        }
    }
}

/// Verdict of the trace/determinant test alone. `Center` and
/// `NonHyperbolic` need nonlinear refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearClass {
    Saddle,
    StableNode,
    UnstableNode,
    StableFocus,
    UnstableFocus,
    Center,
    NonHyperbolic,
}

impl LinearClass {
    pub fn to_stability(self) -> StabilityClass {
        match self {
            LinearClass::Saddle => StabilityClass::Saddle,
            LinearClass::StableNode => StabilityClass::StableNode,
            LinearClass::UnstableNode => StabilityClass::UnstableNode,
            LinearClass::StableFocus => StabilityClass::StableFocus,
            LinearClass::UnstableFocus => StabilityClass::UnstableFocus,
            LinearClass::Center | LinearClass::NonHyperbolic => StabilityClass::DegenerateOther,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    NoRelease,
    WithRelease,
}

/// `E0`, `E1` belong to the system without release, `E2`, `E3` to the
/// system with release.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumLabel {
    E0,
    E1,
    E2,
    E3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub label: EquilibriumLabel,
    pub location: State,
    pub class: StabilityClass,
    pub system: SystemKind,
    pub units: UnitSystem,
    pub eigenvalues: [Complex64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Nematode level of the positive equilibrium.
    pub y3: f64,
    /// Elimination threshold `m y3`.
    pub u0: f64,
    /// Hopf point `u0 / 2`.
    pub u_hopf: f64,
}

/// Positive root of `1/(1 + k y) = y`.
pub fn y3_of(k: f64) -> f64 {
    if k <= SMALL_K {
        1.0 - k + 2.0 * k * k
    } else {
        // (sqrt(1+4k) - 1) / (2k), rationalized
        2.0 / (1.0 + (1.0 + 4.0 * k).sqrt())
    }
}

pub fn thresholds(p: &NormalizedParams) -> Thresholds {
    let y3 = y3_of(p.k);
    let u0 = p.m * y3;
    Thresholds {
        y3,
        u0,
        u_hopf: 0.5 * u0,
    }
}

fn max_abs_entry(j: &Jacobian2) -> f64 {
    j.j11
        .abs()
        .max(j.j12.abs())
        .max(j.j21.abs())
        .max(j.j22.abs())
}

/// Trace/determinant classification with a tolerance relative to the
/// largest matrix entry.
pub fn classify_linear(j: &Jacobian2, tol: f64) -> Result<LinearClass> {
    if !j.is_finite() {
        return Err(Error::invalid(format!("non-finite Jacobian {j:?}")));
    }
    let scale = max_abs_entry(j);
    if scale == 0.0 {
        return Ok(LinearClass::NonHyperbolic);
    }
    let (tr, det, disc) = (j.trace(), j.det(), j.discriminant());
    let (tr_tol, det_tol) = (tol * scale, tol * scale * scale);
    if det < -det_tol {
        return Ok(LinearClass::Saddle);
    }
    if det <= det_tol {
        return Ok(LinearClass::NonHyperbolic);
    }
    if tr.abs() <= tr_tol {
        return Ok(LinearClass::Center);
    }
    // repeated eigenvalues inside the band count as a (degenerate) node
    let node = disc >= -det_tol;
    Ok(match (tr < 0.0, node) {
        (true, true) => LinearClass::StableNode,
        (true, false) => LinearClass::StableFocus,
        (false, true) => LinearClass::UnstableNode,
        (false, false) => LinearClass::UnstableFocus,
    })
}

/// Quadratic coefficient of the center-manifold flow at the saddle node,
/// `y2^2 (k y2^2 + 1) / m^2`.
pub(crate) fn saddle_node_coefficient(k: f64, m: f64, y2: f64) -> f64 {
    y2 * y2 * (k * y2 * y2 + 1.0) / (m * m)
}

pub fn classify_e2(p: &NormalizedParams, tol: f64) -> StabilityClass {
    let th = thresholds(p);
    if p.u < th.u0 * (1.0 - tol) {
        StabilityClass::Saddle
    } else if p.u > th.u0 * (1.0 + tol) {
        StabilityClass::StableNode
    } else if saddle_node_coefficient(p.k, p.m, p.u / p.m) > 0.0 {
        StabilityClass::AttractingSaddleNode
    } else {
        StabilityClass::DegenerateOther
    }
}

/// Stability of the positive equilibrium. Away from `u0 / 2` the sign of
/// the trace decides stability and the discriminant decides node vs focus;
/// at `u0 / 2` the sign of the first focus quantity decides.
pub fn classify_e3(p: &NormalizedParams, tol: f64) -> Result<StabilityClass> {
    let th = thresholds(p);
    if p.u >= th.u0 * (1.0 - tol) {
        return Err(Error::NoPositiveEquilibrium { u: p.u, u0: th.u0 });
    }
    if (p.u - th.u_hopf).abs() <= tol * th.u_hopf {
        let report = bifurcation::hopf_analysis(p)?;
        return Ok(if report.alpha1 < 0.0 {
            StabilityClass::CenterTypeStableFocus
        } else {
            StabilityClass::DegenerateOther
        });
    }
    let j = jacobian_normalized(p, &e3_location(p, &th))?;
    let node = j.discriminant() >= 0.0;
    Ok(match (p.u < th.u_hopf, node) {
        (true, false) => StabilityClass::UnstableFocus,
        (true, true) => StabilityClass::UnstableNode,
        (false, false) => StabilityClass::StableFocus,
        (false, true) => StabilityClass::StableNode,
    })
}

fn e3_location(p: &NormalizedParams, th: &Thresholds) -> State {
    let y3 = th.y3;
    State::new((p.m * y3 - p.u) / (y3 * y3), y3)
}

/// Equilibria of the system without release (original units): the saddle at
/// the origin and the unstable positive equilibrium.
pub fn equilibria_no_release(p: &OriginalParams) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    if p.u != 0.0 {
        return Err(Error::NotApplicable(format!(
            "system without release requires u = 0, got u = {}",
            p.u
        )));
    }
    let e0 = State::ORIGIN;
    // y1 = (-c + sqrt(c^2 + 4crk)) / (2ck) = (r/c) y3(kr/c); x1 from c x1 y1 = m
    let y1 = p.r / p.c * y3_of(p.k * p.r / p.c);
    let e1 = State::new(p.m / (p.c * y1), y1);

    [(EquilibriumLabel::E0, e0), (EquilibriumLabel::E1, e1)]
        .into_iter()
        .map(|(label, location)| {
            let j = jacobian_original(p, &location)?;
            Ok(Equilibrium {
                label,
                location,
                class: classify_linear(&j, THRESHOLD_TOL)?.to_stability(),
                system: SystemKind::NoRelease,
                units: UnitSystem::Original,
                eigenvalues: j.eigenvalues(),
            })
        })
        .collect()
}

/// Equilibria of the normalized system with release. `E2` is always
/// present; `E3` only while `u < u0` (outside the threshold band).
pub fn equilibria_with_release(p: &NormalizedParams) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    let th = thresholds(p);
    let e2 = State::new(0.0, p.u / p.m);
    let j2 = jacobian_normalized(p, &e2)?;
    let mut out = vec![Equilibrium {
        label: EquilibriumLabel::E2,
        location: e2,
        class: classify_e2(p, THRESHOLD_TOL),
        system: SystemKind::WithRelease,
        units: UnitSystem::Normalized,
        eigenvalues: j2.eigenvalues(),
    }];
    if p.u < th.u0 * (1.0 - THRESHOLD_TOL) {
        let e3 = e3_location(p, &th);
        let j3 = jacobian_normalized(p, &e3)?;
        out.push(Equilibrium {
            label: EquilibriumLabel::E3,
            location: e3,
            class: classify_e3(p, THRESHOLD_TOL)?,
            system: SystemKind::WithRelease,
            units: UnitSystem::Normalized,
            eigenvalues: j3.eigenvalues(),
        });
    }
    Ok(out)
}

/// Same equilibria as [`equilibria_with_release`], located directly in
/// original units from `r/(1 + k y) = c y` and `c x y^2 - m y + u = 0`.
/// Classes are invariant under the rescaling and are taken from the
/// normalized classifiers.
pub fn equilibria_with_release_original(p: &OriginalParams) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    let (np, _) = nondimensionalize(p);
    let normalized = equilibria_with_release(&np)?;
    let y3 = 2.0 * p.r / (p.c + (p.c * p.c + 4.0 * p.c * p.k * p.r).sqrt());
    normalized
        .into_iter()
        .map(|eq| {
            let location = match eq.label {
                EquilibriumLabel::E2 => State::new(0.0, p.u / p.m),
                _ => State::new((p.m * y3 - p.u) / (p.c * y3 * y3), y3),
            };
            let j = jacobian_original(p, &location)?;
            Ok(Equilibrium {
                location,
                units: UnitSystem::Original,
                eigenvalues: j.eigenvalues(),
                ..eq
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DulacCertificate {
    /// `d(BP)/dx + d(BQ)/dy` with `B = 1/(xy)`, which reduces to `c`.
    pub symbolic_divergence: f64,
    pub samples: usize,
    pub min_numeric: f64,
    pub max_numeric: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Maximum deviation of the sampled divergence from `c` that still passes.
pub const DULAC_TOL: f64 = 1e-4;

/// Bendixson-Dulac check for the system without release, `B = 1/(xy)`.
/// The weighted divergence is sampled by central differences at random
/// interior points of `(0.05, 5)^2`.
pub fn dulac_certificate(
    p: &OriginalParams,
    sample_count: usize,
    seed: u64,
) -> Result<DulacCertificate> {
    p.validate()?;
    if p.u != 0.0 {
        return Err(Error::NotApplicable(format!(
            "Dulac certificate holds only without release (u = {})",
            p.u
        )));
    }
    if sample_count == 0 {
        return Err(Error::invalid("sample_count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi, mut dev) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..sample_count {
        let x = rng.gen_range(0.05..5.0);
        let y = rng.gen_range(0.05..5.0);
        let d = dulac_divergence_fd(p, x, y);
        lo = lo.min(d);
        hi = hi.max(d);
        dev = dev.max((d - p.c).abs());
    }
    Ok(DulacCertificate {
        symbolic_divergence: p.c,
        samples: sample_count,
        min_numeric: lo,
        max_numeric: hi,
        max_deviation: dev,
        passed: lo > 0.0 && dev <= DULAC_TOL,
    })
}

/// Central-difference divergence of `(B P, B Q)` at `(x, y)`.
pub fn dulac_divergence_fd(p: &OriginalParams, x: f64, y: f64) -> f64 {
    let bp = |x: f64, y: f64| (p.r * x / (1.0 + p.k * y) - p.c * x * y) / (x * y);
    let bq = |x: f64, y: f64| (p.c * x * y * y - p.m * y) / (x * y);
    let hx = 1e-4 * x.max(1e-2);
    let hy = 1e-4 * y.max(1e-2);
    (bp(x + hx, y) - bp(x - hx, y)) / (2.0 * hx) + (bq(x, y + hy) - bq(x, y - hy)) / (2.0 * hy)
}
