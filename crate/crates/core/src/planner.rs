//! Release-rate sweeps, regime labels and release plans in original units.

use serde::{Deserialize, Serialize};

use crate::equilibria::{
    equilibria_with_release, thresholds, Equilibrium, EquilibriumLabel, StabilityClass,
    THRESHOLD_TOL,
};
use crate::error::{Error, Result};
use crate::model::{nondimensionalize, Model, NormalizedParams, OriginalParams, State};
use crate::simulator::{detect_attractor, integrate, AttractorKind, IntegratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    /// `u < u0/2`: both equilibria unstable.
    BelowHopf,
    AtHopf,
    /// `u0/2 < u < u0`: stable coexistence at reduced pest density.
    Controlled,
    AtElimination,
    /// `u > u0`: the pest-free equilibrium is globally attracting.
    Eliminating,
}

impl RegimeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::BelowHopf => "below_hopf",
            RegimeLabel::AtHopf => "at_hopf",
            RegimeLabel::Controlled => "controlled",
            RegimeLabel::AtElimination => "at_elimination",
            RegimeLabel::Eliminating => "eliminating",
        }
    }

    fn rank(self) -> u8 {
        self as u8
    }
}

pub fn regime_label(p: &NormalizedParams, tol: f64) -> RegimeLabel {
    let th = thresholds(p);
    let near = |target: f64| (p.u - target).abs() <= tol * target;
    if near(th.u_hopf) {
        RegimeLabel::AtHopf
    } else if near(th.u0) {
        RegimeLabel::AtElimination
    } else if p.u < th.u_hopf {
        RegimeLabel::BelowHopf
    } else if p.u < th.u0 {
        RegimeLabel::Controlled
    } else {
        RegimeLabel::Eliminating
    }
}

/// Outcome of simulating one sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub initial: State,
    pub attractor: AttractorKind,
    /// Simulated behavior is what the row's regime predicts.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub u: f64,
    pub regime: RegimeLabel,
    pub equilibria: Vec<Equilibrium>,
    pub spot_check: Option<SpotCheck>,
}

impl SweepRow {
    pub fn e2(&self) -> &Equilibrium {
        &self.equilibria[0]
    }

    pub fn e3(&self) -> Option<&Equilibrium> {
        self.equilibria
            .iter()
            .find(|e| e.label == EquilibriumLabel::E3)
    }

    /// Regime label and equilibrium classes tell the same story.
    pub fn is_consistent(&self) -> bool {
        let e2 = self.e2().class;
        let e3 = self.e3().map(|e| e.class);
        match self.regime {
            RegimeLabel::BelowHopf => {
                e2 == StabilityClass::Saddle && e3.is_some_and(|c| !c.is_attracting())
            }
            RegimeLabel::AtHopf => {
                e2 == StabilityClass::Saddle && e3 == Some(StabilityClass::CenterTypeStableFocus)
            }
            RegimeLabel::Controlled => {
                e2 == StabilityClass::Saddle && e3.is_some_and(|c| c.is_attracting())
            }
            RegimeLabel::AtElimination => {
                e2 == StabilityClass::AttractingSaddleNode && e3.is_none()
            }
            RegimeLabel::Eliminating => e2 == StabilityClass::StableNode && e3.is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub k: f64,
    pub m: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Regime labels never step backwards as `u` grows.
    pub fn labels_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].regime.rank() <= w[1].regime.rank())
    }
}

/// Tabulates equilibria, classes and regime for each release rate, sorted
/// by `u`. With `spot_check` set, every row is also simulated from a fixed
/// initial condition and the attractor compared with the regime.
pub fn sweep_u(
    k: f64,
    m: f64,
    u_values: &[f64],
    spot_check: Option<&IntegratorConfig>,
) -> Result<SweepTable> {
    NormalizedParams::new(k, m, 0.0)?;
    if let Some(bad) = u_values.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
        return Err(Error::invalid(format!(
            "release rates must be positive, got {bad}"
        )));
    }
    let mut us = u_values.to_vec();
    us.sort_by(f64::total_cmp);
    let rows = us
        .into_iter()
        .map(|u| {
            let p = NormalizedParams::new(k, m, u)?;
            let equilibria = equilibria_with_release(&p)?;
            let regime = regime_label(&p, THRESHOLD_TOL);
            let spot_check = match spot_check {
                Some(cfg) => Some(simulate_row(&p, regime, &equilibria, cfg)?),
                None => None,
            };
            Ok(SweepRow {
                u,
                regime,
                equilibria,
                spot_check,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { k, m, rows })
}

fn simulate_row(
    p: &NormalizedParams,
    regime: RegimeLabel,
    equilibria: &[Equilibrium],
    cfg: &IntegratorConfig,
) -> Result<SpotCheck> {
    let th = thresholds(p);
    // start beside the positive equilibrium's nematode level
    let x_ref = ((p.m * th.y3 - p.u) / (th.y3 * th.y3)).max(0.0);
    let initial = State::new(x_ref + 0.05, th.y3);
    let traj = integrate(&Model::Normalized(*p), initial, cfg)?;
    let report = detect_attractor(&traj, equilibria)?;
    let converged_to = |want: EquilibriumLabel| matches!(report.kind, AttractorKind::Equilibrium { label, .. } if label == want);
    let agrees = match regime {
        RegimeLabel::Eliminating => converged_to(EquilibriumLabel::E2),
        RegimeLabel::AtElimination => {
            // algebraic approach along the center manifold
            converged_to(EquilibriumLabel::E2)
                || (report.evidence.nearest == Some(EquilibriumLabel::E2)
                    && report.evidence.terminal_distance < 1e-2)
        }
        RegimeLabel::Controlled => converged_to(EquilibriumLabel::E3),
        RegimeLabel::AtHopf => !matches!(report.kind, AttractorKind::LimitCycle { .. }),
        RegimeLabel::BelowHopf => !matches!(report.kind, AttractorKind::Equilibrium { .. }),
    };
    Ok(SpotCheck {
        initial,
        attractor: report.kind,
        agrees,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasePlan {
    /// Release rate (original units) at or above which the pest-free state
    /// is the only equilibrium and is stable.
    pub u_eliminate: f64,
    /// Release rate above which the coexistence equilibrium is stable.
    pub u_control: f64,
    /// Pest-free nematode level in original units.
    pub y3_original: f64,
    /// Elimination threshold of the normalized system.
    pub u0_normalized: f64,
    /// `c^2 m / (2 k r^4) (sqrt(1 + 4kr/c) - 1)`, an alternative closed form
    /// that does not agree with the model; kept for comparison only.
    pub alternative_closed_form: Option<f64>,
    pub notes: Vec<String>,
}

/// Agreement required between the direct and the normalized computation.
pub const PLAN_CROSS_CHECK_TOL: f64 = 1e-10;

/// Release thresholds in original units. The release rate of `p` is
/// ignored.
pub fn release_plan(p: &OriginalParams) -> Result<ReleasePlan> {
    let p = p.with_u(0.0);
    p.validate()?;
    let (r, k, c, m) = (p.r, p.k, p.c, p.m);

    // positive root of c k y^2 + c y - r = 0, rationalized
    let y3 = 2.0 * r / (c + (c * c + 4.0 * c * k * r).sqrt());
    let u_eliminate = m * y3;

    let (np, sm) = nondimensionalize(&p);
    let u0_normalized = thresholds(&np).u0;
    let via_normalized = sm.release_to_original(u0_normalized);
    let gap = (via_normalized - u_eliminate).abs();
    if gap > PLAN_CROSS_CHECK_TOL * u_eliminate {
        return Err(Error::Consistency(format!(
            "elimination rate {u_eliminate} vs {via_normalized} through the scaled system"
        )));
    }

    let alternative = (k > 0.0)
        .then(|| c * c * m / (2.0 * k * r.powi(4)) * ((1.0 + 4.0 * k * r / c).sqrt() - 1.0));
    let mut notes = vec![
        "u_eliminate = m y3 with y3 the positive root of r/(1+k y) = c y".to_string(),
        format!(
            "cross-checked against u = (r^2/c) u0' with u0' = {u0_normalized} (relative gap {:.1e})",
            gap / u_eliminate
        ),
    ];
    if let Some(alt) = alternative {
        notes.push(format!(
            "the closed form c^2 m/(2 k r^4) (sqrt(1+4kr/c) - 1) = {alt} inverts the release \
             scaling as u = (c/r^2) u' instead of u = (r^2/c) u'; it is not used"
        ));
    }
    Ok(ReleasePlan {
        u_eliminate,
        u_control: 0.5 * u_eliminate,
        y3_original: y3,
        u0_normalized,
        alternative_closed_form: alternative,
        notes,
    })
}
