//! Adaptive integration, attractor detection and limit-cycle measurement.
//!
//! The integrator is the Dormand-Prince 5(4) pair with a PI step-size
//! controller and the standard fourth-order continuous extension for dense
//! output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{thresholds, Equilibrium, EquilibriumLabel, THRESHOLD_TOL};
use crate::error::{Error, Result};
use crate::model::{Model, NormalizedParams, State, UnitSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    pub dense_output_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 1.0,
            t_end: 500.0,
            dense_output_dt: 0.05,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(self, t_end: f64) -> Self {
        Self { t_end, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.rel_tol) && pos(self.abs_tol)) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !pos(self.t_end) {
            return Err(Error::invalid("t_end must be positive"));
        }
        if !(pos(self.max_step) && pos(self.dense_output_dt)) {
            return Err(Error::invalid(
                "max_step and dense_output_dt must be positive",
            ));
        }
        Ok(())
    }
}

/// Dense samples of one solution together with the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub units: UnitSystem,
    pub model: Model,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<State> {
        self.states.last().copied()
    }
}

// Dormand-Prince 5(4) tableau. The field is autonomous, so the nodes c_i
// never enter.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
// PI controller exponents for an order-5 error estimate
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;
const MAX_STEPS: usize = 20_000_000;

#[derive(Clone, Copy, Default)]
struct V2 {
    x: f64,
    y: f64,
}

impl V2 {
    fn from_state(s: State) -> Self {
        Self { x: s.x, y: s.y }
    }
    fn state(self) -> State {
        State::new(self.x, self.y)
    }
}

fn eval(model: &Model, v: V2) -> V2 {
    let d = model.rhs(&v.state());
    V2 { x: d.dx, y: d.dy }
}

/// `base + h * sum(w_i k_i)`
fn comb(base: V2, h: f64, terms: &[(f64, V2)]) -> V2 {
    let (mut x, mut y) = (0.0, 0.0);
    for &(w, k) in terms {
        x += w * k.x;
        y += w * k.y;
    }
    V2 {
        x: base.x + h * x,
        y: base.y + h * y,
    }
}

struct Dense {
    r1: V2,
    r2: V2,
    r3: V2,
    r4: V2,
    r5: V2,
}

impl Dense {
    fn at(&self, theta: f64) -> V2 {
        let t1 = 1.0 - theta;
        let f = |a: f64, b: f64, c: f64, d: f64, e: f64| {
            a + theta * (b + t1 * (c + theta * (d + t1 * e)))
        };
        V2 {
            x: f(self.r1.x, self.r2.x, self.r3.x, self.r4.x, self.r5.x),
            y: f(self.r1.y, self.r2.y, self.r3.y, self.r4.y, self.r5.y),
        }
    }
}

fn initial_step(model: &Model, y0: V2, f0: V2, cfg: &IntegratorConfig) -> f64 {
    let sc = |v: f64| cfg.abs_tol + cfg.rel_tol * v.abs();
    let d0 = (y0.x / sc(y0.x)).abs().max((y0.y / sc(y0.y)).abs());
    let d1 = (f0.x / sc(y0.x)).abs().max((f0.y / sc(y0.y)).abs());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1 = comb(y0, h0, &[(1.0, f0)]);
    let f1 = eval(model, y1);
    let d2 = ((f1.x - f0.x) / sc(y0.x))
        .abs()
        .max(((f1.y - f0.y) / sc(y0.y)).abs())
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.max_step).min(cfg.t_end)
}

/// Integrates `model` from `s0` over `[0, cfg.t_end]`, sampling the dense
/// output every `cfg.dense_output_dt` and at `t_end`.
pub fn integrate(model: &Model, s0: State, cfg: &IntegratorConfig) -> Result<Trajectory> {
    model.validate()?;
    cfg.validate()?;
    let s0 = State::first_quadrant(s0.x, s0.y)?;

    let n_guess = (cfg.t_end / cfg.dense_output_dt).ceil() as usize + 2;
    let mut times = Vec::with_capacity(n_guess);
    let mut states = Vec::with_capacity(n_guess);
    times.push(0.0);
    states.push(s0);

    let dt = cfg.dense_output_dt;
    let mut next_sample: usize = 1;
    let mut t = 0.0;
    let mut y = V2::from_state(s0);
    let mut k1 = eval(model, y);
    let mut h = initial_step(model, y, k1, cfg);
    let mut err_prev: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = 0usize;

    let fail =
        |t: f64, reason: String, times: Vec<f64>, states: Vec<State>| Error::IntegrationFailure {
            t,
            reason,
            partial: Box::new(Trajectory {
                times,
                states,
                units: model.units(),
                model: *model,
            }),
        };

    while t < cfg.t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(fail(t, "step budget exhausted".into(), times, states));
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return Err(fail(
                t,
                format!("step size underflow (h = {h:e})"),
                times,
                states,
            ));
        }
        let last = t + h >= cfg.t_end;
        if last {
            h = cfg.t_end - t;
        }

        let k2 = eval(model, comb(y, h, &[(A21, k1)]));
        let k3 = eval(model, comb(y, h, &[(A31, k1), (A32, k2)]));
        let k4 = eval(model, comb(y, h, &[(A41, k1), (A42, k2), (A43, k3)]));
        let k5 = eval(
            model,
            comb(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]),
        );
        let k6 = eval(
            model,
            comb(
                y,
                h,
                &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
            ),
        );
        let y_new = comb(
            y,
            h,
            &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)],
        );
        let k7 = eval(model, y_new);
        let e = comb(
            V2::default(),
            h,
            &[(E1, k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)],
        );

        let sc_x = cfg.abs_tol + cfg.rel_tol * y.x.abs().max(y_new.x.abs());
        let sc_y = cfg.abs_tol + cfg.rel_tol * y.y.abs().max(y_new.y.abs());
        let err = (e.x / sc_x).abs().max((e.y / sc_y).abs());

        let finite = y_new.x.is_finite() && y_new.y.is_finite() && err.is_finite();
        if !finite {
            h *= FAC_MIN;
            rejected_last = true;
            continue;
        }
        if y_new.x < -cfg.abs_tol || y_new.y < -cfg.abs_tol {
            h *= 0.5;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            let dense = Dense {
                r1: y,
                r2: V2 {
                    x: y_new.x - y.x,
                    y: y_new.y - y.y,
                },
                r3: V2 {
                    x: h * k1.x - (y_new.x - y.x),
                    y: h * k1.y - (y_new.y - y.y),
                },
                r4: V2 {
                    x: (y_new.x - y.x) - h * k7.x - (h * k1.x - (y_new.x - y.x)),
                    y: (y_new.y - y.y) - h * k7.y - (h * k1.y - (y_new.y - y.y)),
                },
                r5: comb(
                    V2::default(),
                    h,
                    &[(D1, k1), (D3, k3), (D4, k4), (D5, k5), (D6, k6), (D7, k7)],
                ),
            };
            let t_new = if last { cfg.t_end } else { t + h };
            loop {
                let ts = next_sample as f64 * dt;
                // the final sample is t_end itself; drop grid points that
                // only differ from it by rounding
                if ts >= t_new || cfg.t_end - ts <= 1e-9 * dt {
                    break;
                }
                let s = dense.at((ts - t) / h).state();
                times.push(ts);
                states.push(s);
                next_sample += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k7;

            let mut fac = SAFETY * err.max(1e-10).powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_prev = err.max(1e-4);
            h = (h * fac).min(cfg.max_step);
            rejected_last = false;
        } else {
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            rejected_last = true;
        }
    }

    times.push(cfg.t_end);
    states.push(y.state());
    Ok(Trajectory {
        times,
        states,
        units: model.units(),
        model: *model,
    })
}

/// Independent integrations from each initial condition, returned in input
/// order. A failure in one run does not abort the others.
pub fn phase_portrait_batch(
    model: &Model,
    initial: &[State],
    cfg: &IntegratorConfig,
) -> Vec<Result<Trajectory>> {
    initial
        .par_iter()
        .map(|&s0| integrate(model, s0, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttractorKind {
    Equilibrium {
        label: EquilibriumLabel,
        target: State,
    },
    LimitCycle {
        period: f64,
        amplitude_x: f64,
        amplitude_y: f64,
    },
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorEvidence {
    /// Distance from the final state to the nearest listed equilibrium.
    pub terminal_distance: f64,
    pub nearest: Option<EquilibriumLabel>,
    /// Peak-to-trough amplitudes of `x` over the second half, oldest first
    /// (at most the last ten).
    pub peak_amplitudes: Vec<f64>,
    /// Relative spread of the last five amplitudes.
    pub amplitude_variation: Option<f64>,
    /// Relative spread of the last five peak spacings.
    pub period_variation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorReport {
    pub kind: AttractorKind,
    pub evidence: AttractorEvidence,
}

pub const MIN_SAMPLES: usize = 50;
/// Terminal distance below which a run counts as converged.
pub const CONVERGED_DISTANCE: f64 = 1e-4;
/// Relative spread of the last five amplitudes for a settled cycle.
pub const CYCLE_AMPLITUDE_VARIATION: f64 = 1e-3;
/// Relative spread of the last five peak spacings for a settled cycle.
pub const CYCLE_PERIOD_VARIATION: f64 = 1e-2;

/// Vertex of the parabola through three equally spaced samples, as
/// `(offset in samples from the middle one, value)`.
fn parabolic_vertex(a: f64, b: f64, c: f64) -> (f64, f64) {
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return (0.0, b);
    }
    let off = 0.5 * (a - c) / denom;
    (off, b - 0.25 * (a - c) * off)
}

struct Extremum {
    time: f64,
    value: f64,
    is_max: bool,
}

fn extrema(times: &[f64], xs: &[f64]) -> Vec<Extremum> {
    let mut out = Vec::new();
    for i in 1..xs.len().saturating_sub(1) {
        let (a, b, c) = (xs[i - 1], xs[i], xs[i + 1]);
        let is_max = b > a && b >= c;
        let is_min = b < a && b <= c;
        if is_max || is_min {
            let (off, value) = parabolic_vertex(a, b, c);
            let dt = 0.5 * (times[i + 1] - times[i - 1]);
            out.push(Extremum {
                time: times[i] + off * dt,
                value,
                is_max,
            });
        }
    }
    out
}

fn rel_spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (hi - lo) / mean.abs()
}

/// Classifies the terminal behavior of `traj` as convergence to one of
/// `equilibria`, a settled periodic orbit, or neither.
pub fn detect_attractor(traj: &Trajectory, equilibria: &[Equilibrium]) -> Result<AttractorReport> {
    let n = traj.len();
    if n < MIN_SAMPLES {
        return Err(Error::TrajectoryTooShort {
            len: n,
            needed: MIN_SAMPLES,
        });
    }
    if let Some(eq) = equilibria.iter().find(|e| e.units != traj.units) {
        return Err(Error::UnitMismatch {
            expected: traj.units,
            found: eq.units,
        });
    }
    let last = traj.states[n - 1];
    let nearest = equilibria
        .iter()
        .map(|e| (e, e.location.distance(&last)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let terminal_distance = nearest.map_or(f64::INFINITY, |(_, d)| d);

    let mut evidence = AttractorEvidence {
        terminal_distance,
        nearest: nearest.map(|(e, _)| e.label),
        peak_amplitudes: Vec::new(),
        amplitude_variation: None,
        period_variation: None,
    };

    if let Some((eq, d)) = nearest {
        // interior orbits only pass by saddles and repellers; the one stable
        // manifold known exactly is the invariant axis x = 0 through E2
        let reachable = eq.class.is_attracting()
            || (eq.label == EquilibriumLabel::E2
                && traj.states[3 * n / 4..].iter().all(|s| s.x == 0.0));
        if d < CONVERGED_DISTANCE && reachable {
            // distance must not grow over the last quarter
            let q = 3 * n / 4;
            let mid = (q + n) / 2;
            let mean_dist = |r: std::ops::Range<usize>| {
                let len = r.len() as f64;
                r.map(|i| traj.states[i].distance(&eq.location))
                    .sum::<f64>()
                    / len
            };
            let (early, late) = (mean_dist(q..mid), mean_dist(mid..n));
            if late <= early * (1.0 + 1e-9) + f64::MIN_POSITIVE {
                return Ok(AttractorReport {
                    kind: AttractorKind::Equilibrium {
                        label: eq.label,
                        target: eq.location,
                    },
                    evidence,
                });
            }
        }
    }

    let half = n / 2;
    let xs: Vec<f64> = traj.states[half..].iter().map(|s| s.x).collect();
    let ext = extrema(&traj.times[half..], &xs);
    let mut amps = Vec::new();
    let mut peak_times = Vec::new();
    let mut peak_index = Vec::new();
    for (i, e) in ext.iter().enumerate() {
        if !e.is_max {
            continue;
        }
        peak_times.push(e.time);
        peak_index.push(i);
        if let Some(trough) = ext[i + 1..].iter().find(|t| !t.is_max) {
            amps.push(e.value - trough.value);
        }
    }
    evidence.peak_amplitudes = amps[amps.len().saturating_sub(10)..].to_vec();

    if amps.len() >= 5 && peak_times.len() >= 6 {
        let last_amps = &amps[amps.len() - 5..];
        let spacings: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
        let last_spacings = &spacings[spacings.len() - 5..];
        let av = rel_spread(last_amps);
        let pv = rel_spread(last_spacings);
        evidence.amplitude_variation = Some(av);
        evidence.period_variation = Some(pv);
        let mean_amp = last_amps.iter().sum::<f64>() / 5.0;
        if av < CYCLE_AMPLITUDE_VARIATION
            && pv < CYCLE_PERIOD_VARIATION
            && mean_amp > CONVERGED_DISTANCE
        {
            let period = last_spacings.iter().sum::<f64>() / 5.0;
            let t_from = peak_times[peak_times.len() - 6];
            let window = traj
                .times
                .iter()
                .zip(&traj.states)
                .filter(|(t, _)| **t >= t_from)
                .map(|(_, s)| s.y);
            let (lo, hi) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
                (lo.min(y), hi.max(y))
            });
            return Ok(AttractorReport {
                kind: AttractorKind::LimitCycle {
                    period,
                    amplitude_x: mean_amp,
                    amplitude_y: hi - lo,
                },
                evidence,
            });
        }
    }

    Ok(AttractorReport {
        kind: AttractorKind::Undecided,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    /// Mean spacing of the counted section crossings.
    pub mean: f64,
    /// Standard deviation of the spacings.
    pub spread: f64,
    pub crossings: usize,
    /// Range of `y` over the counted window.
    pub amplitude_y: f64,
}

pub const MIN_CROSSINGS: usize = 8;

/// Upward crossings of the horizontal line `y = level`, located on the
/// cubic Hermite interpolant of the samples.
pub fn upward_crossings(traj: &Trajectory, level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..traj.len() {
        let (a, b) = (traj.states[i - 1], traj.states[i]);
        if !(a.y < level && b.y >= level) {
            continue;
        }
        let (t0, t1) = (traj.times[i - 1], traj.times[i]);
        let h = t1 - t0;
        let da = traj.model.rhs(&a).dy * h;
        let db = traj.model.rhs(&b).dy * h;
        let hermite = |s: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * a.y
                + (s3 - 2.0 * s2 + s) * da
                + (-2.0 * s3 + 3.0 * s2) * b.y
                + (s3 - s2) * db
                - level
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        if hermite(lo) * hermite(hi) > 0.0 {
            // interpolant disagrees with the samples; fall back to linear
            out.push(t0 + h * (level - a.y) / (b.y - a.y));
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (hermite(lo) < 0.0) == (hermite(mid) < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(t0 + h * 0.5 * (lo + hi));
    }
    out
}

/// Period of the cycle around `E3`, measured from upward crossings of
/// `y = y3` after discarding the first half of the horizon. The run starts
/// at `E3 + (radius, 0)`.
pub fn limit_cycle_period(
    p: &NormalizedParams,
    radius: f64,
    cfg: &IntegratorConfig,
) -> Result<PeriodEstimate> {
    p.validate()?;
    let th = thresholds(p);
    if p.u >= th.u0 * (1.0 - THRESHOLD_TOL) {
        return Err(Error::NotApplicable(format!(
            "no positive equilibrium to orbit for u = {} >= u0 = {}",
            p.u, th.u0
        )));
    }
    let x3 = (p.m * th.y3 - p.u) / (th.y3 * th.y3);
    let s0 = State::first_quadrant(x3 + radius, th.y3)?;
    let traj = integrate(&Model::Normalized(*p), s0, cfg)?;
    period_from_trajectory(&traj, th.y3, 0.5 * cfg.t_end)
}

/// Section-crossing period estimate on an existing trajectory; only
/// crossings after `t_from` count. Decaying oscillations (the amplitude of
/// the last counted cycle below half that of the first) do not count as
/// sustained.
pub fn period_from_trajectory(
    traj: &Trajectory,
    level: f64,
    t_from: f64,
) -> Result<PeriodEstimate> {
    let crossings: Vec<f64> = upward_crossings(traj, level)
        .into_iter()
        .filter(|&t| t >= t_from)
        .collect();
    if crossings.len() < MIN_CROSSINGS {
        return Err(Error::InsufficientData {
            found: crossings.len(),
            needed: MIN_CROSSINGS,
        });
    }
    let cycle_range = |t0: f64, t1: f64| {
        let (lo, hi) = traj
            .times
            .iter()
            .zip(&traj.states)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| {
                (lo.min(s.y), hi.max(s.y))
            });
        hi - lo
    };
    let first = cycle_range(crossings[0], crossings[1]);
    let n = crossings.len();
    let last = cycle_range(crossings[n - 2], crossings[n - 1]);
    if last.is_nan() || last < 0.5 * first || last <= 0.0 {
        return Err(Error::InsufficientData {
            found: 0,
            needed: MIN_CROSSINGS,
        });
    }
    let spacings: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let var = spacings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / spacings.len() as f64;
    Ok(PeriodEstimate {
        mean,
        spread: var.sqrt(),
        crossings: n,
        amplitude_y: cycle_range(crossings[0], crossings[n - 1]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nullclines {
    /// Height of the horizontal branch `y = y3` of the x-nullcline.
    pub x_nullcline_level: f64,
    /// Vertical branch `x = 0` of the x-nullcline, sampled on the y range.
    pub x_nullcline_axis: Vec<State>,
    /// `x = (m y - u) / y^2`, points with `x < 0` dropped.
    pub y_nullcline: Vec<State>,
}

pub fn nullclines(p: &NormalizedParams, y_range: (f64, f64), samples: usize) -> Result<Nullclines> {
    p.validate()?;
    let (lo, hi) = y_range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(Error::invalid(format!("invalid y range {y_range:?}")));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let ys: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let y_nullcline = ys
        .iter()
        .filter(|&&y| y > 0.0)
        .map(|&y| State::new((p.m * y - p.u) / (y * y), y))
        .filter(|s| s.x >= 0.0)
        .collect();
    Ok(Nullclines {
        x_nullcline_level: thresholds(p).y3,
        x_nullcline_axis: ys.iter().map(|&y| State::new(0.0, y)).collect(),
        y_nullcline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::equilibria_with_release;

    fn norm(k: f64, m: f64, u: f64) -> Model {
        Model::Normalized(NormalizedParams::new(k, m, u).unwrap())
    }

    #[test]
    fn exponential_decay_is_accurate() {
        // x-axis with u = 0, k = 0: dy/dt = -m y exactly
        let model = norm(0.0, 0.5, 0.0);
        let cfg = IntegratorConfig::default().with_t_end(10.0);
        let traj = integrate(&model, State::new(0.0, 1.0), &cfg).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert_eq!(s.x, 0.0);
            let exact = (-0.5 * t).exp();
            assert!((s.y - exact).abs() < 1e-8, "t = {t}: {} vs {exact}", s.y);
        }
        assert_eq!(*traj.times.last().unwrap(), 10.0);
    }

    #[test]
    fn dense_output_matches_logistic_like_solution() {
        // x' = x (1 - y) with y fixed at 0 on the x-axis for u = 0: x = x0 e^t
        let model = norm(0.0, 0.2, 0.0);
        let cfg = IntegratorConfig {
            dense_output_dt: 0.013,
            ..IntegratorConfig::default().with_t_end(5.0)
        };
        let traj = integrate(&model, State::new(1e-3, 0.0), &cfg).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let exact = 1e-3 * t.exp();
            assert!((s.x - exact).abs() < 1e-8 * exact.max(1.0), "t = {t}");
        }
    }

    #[test]
    fn times_strictly_increasing() {
        let cfg = IntegratorConfig::default().with_t_end(37.3);
        let traj = integrate(&norm(0.5, 0.2, 0.1), State::new(0.3, 0.9), &cfg).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.times.len(), traj.states.len());
        assert_eq!(*traj.times.last().unwrap(), 37.3);
    }

    #[test]
    fn stable_node_run_converges() {
        let cfg = IntegratorConfig::default().with_t_end(200.0);
        let traj = integrate(&norm(0.5, 0.2, 0.2), State::new(0.3, 0.3), &cfg).unwrap();
        let end = traj.last_state().unwrap();
        assert!(end.distance(&State::new(0.0, 1.0)) < 1e-4, "{end:?}");
    }

    #[test]
    fn fixed_point_stays_put() {
        let p = NormalizedParams::new(0.5, 0.2, 0.1).unwrap();
        let cfg = IntegratorConfig::default();
        for eq in equilibria_with_release(&p).unwrap() {
            let traj = integrate(&Model::Normalized(p), eq.location, &cfg).unwrap();
            for s in &traj.states {
                assert!(s.distance(&eq.location) < 1e-6);
            }
        }
    }

    #[test]
    fn tolerance_halving_is_self_consistent() {
        let model = norm(0.5, 0.2, 0.1);
        let s0 = State::new(0.3, 0.9);
        let coarse = IntegratorConfig {
            rel_tol: 1e-7,
            abs_tol: 1e-9,
            ..IntegratorConfig::default().with_t_end(50.0)
        };
        let fine = IntegratorConfig {
            rel_tol: 0.5e-7,
            abs_tol: 0.5e-9,
            ..coarse
        };
        let a = integrate(&model, s0, &coarse)
            .unwrap()
            .last_state()
            .unwrap();
        let b = integrate(&model, s0, &fine).unwrap().last_state().unwrap();
        assert!(a.distance(&b) < 10.0 * coarse.rel_tol, "{a:?} {b:?}");
    }

    #[test]
    fn error_decays_with_tolerance() {
        let model = norm(0.5, 0.2, 0.1);
        let s0 = State::new(0.3, 0.9);
        let run = |tol: f64| {
            let cfg = IntegratorConfig {
                rel_tol: tol,
                abs_tol: tol * 1e-2,
                ..IntegratorConfig::default().with_t_end(10.0)
            };
            integrate(&model, s0, &cfg).unwrap().last_state().unwrap()
        };
        let reference = run(1e-14);
        let errors: Vec<f64> = (6..=10)
            .map(|e| run(10f64.powi(-e)).distance(&reference))
            .collect();
        for w in errors.windows(2) {
            assert!(w[0] / w[1] >= 8.0, "{errors:?}");
        }
    }

    #[test]
    fn y_axis_is_preserved_exactly() {
        let cfg = IntegratorConfig::default().with_t_end(100.0);
        let traj = integrate(&norm(0.5, 0.2, 0.05), State::new(0.0, 2.0), &cfg).unwrap();
        assert!(traj.states.iter().all(|s| s.x == 0.0));
    }

    #[test]
    fn positivity_guard_holds_near_axis() {
        let cfg = IntegratorConfig::default().with_t_end(500.0);
        let traj = integrate(
            &norm(0.5, 0.2, 0.1 * (2f64.sqrt() - 1.0)),
            State::new(0.3, 0.9),
            &cfg,
        )
        .unwrap();
        assert!(traj
            .states
            .iter()
            .all(|s| s.x >= -10.0 * cfg.abs_tol && s.y >= -10.0 * cfg.abs_tol));
    }

    #[test]
    fn blow_up_reports_partial_trajectory() {
        // x*y^2 overflows within the first steps
        let model = norm(0.0, 0.01, 0.0);
        let cfg = IntegratorConfig::default().with_t_end(50.0);
        match integrate(&model, State::new(1e100, 1e100), &cfg) {
            Err(Error::IntegrationFailure { partial, t, .. }) => {
                assert!(t < 50.0);
                assert!(!partial.is_empty());
                assert_eq!(partial.states[0], State::new(1e100, 1e100));
            }
            other => panic!("expected failure, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn saddle_is_reached_only_along_the_axis() {
        // below the Hopf point E2 is a saddle whose stable manifold is x = 0
        let u = 0.1 * (2f64.sqrt() - 1.0);
        let model = norm(0.5, 0.2, u);
        let Model::Normalized(p) = model else {
            unreachable!()
        };
        let eqs = equilibria_with_release(&p).unwrap();
        let cfg = IntegratorConfig::default().with_t_end(300.0);
        let axis = integrate(&model, State::new(0.0, 2.0), &cfg).unwrap();
        assert!(matches!(
            detect_attractor(&axis, &eqs).unwrap().kind,
            AttractorKind::Equilibrium {
                label: EquilibriumLabel::E2,
                ..
            }
        ));
        let interior = integrate(&model, State::new(0.25, 0.7), &cfg.with_t_end(500.0)).unwrap();
        let report = detect_attractor(&interior, &eqs).unwrap();
        assert!(
            !matches!(report.kind, AttractorKind::Equilibrium { .. }),
            "{report:?}"
        );
    }

    #[test]
    fn invalid_config_rejected() {
        let model = norm(0.5, 0.2, 0.1);
        let bad = IntegratorConfig::default().with_t_end(0.0);
        assert!(matches!(
            integrate(&model, State::new(0.1, 0.1), &bad),
            Err(Error::InvalidInput(_))
        ));
        let cfg = IntegratorConfig::default();
        assert!(integrate(&model, State::new(-0.1, 0.1), &cfg).is_err());
    }

    #[test]
    fn detect_focus_convergence() {
        let p = NormalizedParams::new(0.5, 0.2, 0.1).unwrap();
        let eqs = equilibria_with_release(&p).unwrap();
        let traj = integrate(
            &Model::Normalized(p),
            State::new(0.3, 0.9),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let rep = detect_attractor(&traj, &eqs).unwrap();
        match rep.kind {
            AttractorKind::Equilibrium { label, target } => {
                assert_eq!(label, EquilibriumLabel::E3);
                assert!((target.x - 0.0866).abs() < 1e-4 && (target.y - 0.7321).abs() < 1e-4);
            }
            k => panic!("{k:?}"),
        }
    }

    #[test]
    fn detect_constant_trajectory() {
        let p = NormalizedParams::new(0.5, 0.2, 0.1).unwrap();
        let eqs = equilibria_with_release(&p).unwrap();
        let e2 = eqs[0].location;
        let traj = Trajectory {
            times: (0..100).map(f64::from).collect(),
            states: vec![e2; 100],
            units: UnitSystem::Normalized,
            model: Model::Normalized(p),
        };
        let rep = detect_attractor(&traj, &eqs).unwrap();
        assert_eq!(
            rep.kind,
            AttractorKind::Equilibrium {
                label: EquilibriumLabel::E2,
                target: e2
            }
        );
        let short = Trajectory {
            times: traj.times[..10].to_vec(),
            states: traj.states[..10].to_vec(),
            ..traj
        };
        assert!(matches!(
            detect_attractor(&short, &eqs),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn detect_near_hopf_cycle() {
        let base = NormalizedParams::new(0.5, 0.2, 0.0).unwrap();
        let u = 0.99 * thresholds(&base).u_hopf;
        let p = base.with_u(u);
        let eqs = equilibria_with_release(&p).unwrap();
        let e3 = eqs[1].location;
        let cfg = IntegratorConfig::default().with_t_end(10_000.0);
        let traj = integrate(&Model::Normalized(p), State::new(e3.x + 0.01, e3.y), &cfg).unwrap();
        let rep = detect_attractor(&traj, &eqs).unwrap();
        match rep.kind {
            AttractorKind::LimitCycle {
                period,
                amplitude_x,
                amplitude_y,
            } => {
                assert!((period - 21.1).abs() < 0.2, "period {period}");
                assert!(amplitude_x > 0.1 && amplitude_y > 0.1);
            }
            k => panic!("{k:?} {:?}", rep.evidence),
        }
    }

    #[test]
    fn period_on_stable_side_is_insufficient() {
        let p = NormalizedParams::new(0.5, 0.2, 0.1).unwrap();
        let cfg = IntegratorConfig::default().with_t_end(2000.0);
        assert!(matches!(
            limit_cycle_period(&p, 0.01, &cfg),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn nullcline_examples() {
        let p = NormalizedParams::new(0.5, 0.2, 0.1).unwrap();
        let nc = nullclines(&p, (0.0, 3.0), 301).unwrap();
        let y3 = nc.x_nullcline_level;
        assert!((y3 - 0.7320508).abs() < 1e-7);
        let x_at = (p.m * y3 - p.u) / (y3 * y3);
        assert!((x_at - 0.0866).abs() < 1e-4);
        assert!(nc.y_nullcline.iter().all(|s| s.x >= 0.0));
        // far up the curve tends to the axis
        let far = nullclines(&p, (1e3, 1e4), 10).unwrap();
        assert!(far.y_nullcline.last().unwrap().x < 1e-4);

        // without release the curve x = m / y passes through E1
        let q = NormalizedParams::new(0.5, 0.2, 0.0).unwrap();
        let y1 = thresholds(&q).y3;
        let nc = nullclines(&q, (y1, y1 + 1.0), 2).unwrap();
        assert!((nc.y_nullcline[0].x - q.m / y1).abs() < 1e-15);

        assert!(nullclines(&p, (1.0, 0.5), 10).is_err());
    }

    #[test]
    fn batch_preserves_order_and_handles_empty() {
        let model = norm(0.5, 0.2, 0.2);
        let cfg = IntegratorConfig::default().with_t_end(10.0);
        assert!(phase_portrait_batch(&model, &[], &cfg).is_empty());
        let ics = [
            State::new(0.1, 0.1),
            State::new(0.5, 2.0),
            State::new(1.0, 0.2),
        ];
        let out = phase_portrait_batch(&model, &ics, &cfg);
        for (ic, r) in ics.iter().zip(&out) {
            assert_eq!(r.as_ref().unwrap().states[0], *ic);
        }
    }
}
