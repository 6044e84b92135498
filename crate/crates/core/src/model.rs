//! Model family, parameterizations and the scaling between them.
//!
//! Original units:
//!
//! ```text
//! dx/dt = r x / (1 + k y) - c x y
//! dy/dt = c x y^2 - m y + u
//! ```
//!
//! `u = 0` gives the inhibited model without release, `k = 0, u = 0` the
//! uninhibited baseline. Substituting `y' = (c/r) y`, `t' = r t` collapses the
//! five parameters to three:
//!
//! ```text
//! dx/dt = x / (1 + k y) - x y
//! dy/dt = x y^2 - m y + u
//! ```
//!
//! with `k' = k r / c`, `m' = m / r`, `u' = c u / r^2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Trajectory;

/// Which coordinate system a state, trajectory or equilibrium lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitSystem {
    Original,
    Normalized,
}

/// Dimensional parameters `(r, k, c, m, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginalParams {
    /// Pest birth rate.
    pub r: f64,
    /// Inhibition level.
    pub k: f64,
    /// Predation / conversion rate.
    pub c: f64,
    /// Nematode death rate.
    pub m: f64,
    /// Nematode release rate.
    pub u: f64,
}

impl OriginalParams {
    pub fn new(r: f64, k: f64, c: f64, m: f64, u: f64) -> Result<Self> {
        let p = Self { r, k, c, m, u };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.k, self.c, self.m, self.u];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameter in {self:?}")));
        }
        if self.r <= 0.0 || self.c <= 0.0 || self.m <= 0.0 {
            return Err(Error::invalid("r, c and m must be positive"));
        }
        if self.k < 0.0 || self.u < 0.0 {
            return Err(Error::invalid("k and u must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_u(self, u: f64) -> Self {
        Self { u, ..self }
    }
}

/// Dimensionless parameters `(k, m, u)` of the rescaled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    pub k: f64,
    pub m: f64,
    pub u: f64,
}

impl NormalizedParams {
    pub fn new(k: f64, m: f64, u: f64) -> Result<Self> {
        let p = Self { k, m, u };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.k, self.m, self.u].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameter in {self:?}")));
        }
        if self.m <= 0.0 {
            return Err(Error::invalid("m must be positive"));
        }
        if self.k < 0.0 || self.u < 0.0 {
            return Err(Error::invalid("k and u must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_u(self, u: f64) -> Self {
        Self { u, ..self }
    }
}

/// Linear map between original and normalized coordinates. `x` is not
/// rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMap {
    /// `c / r`, multiplies `y`.
    pub state_scale_y: f64,
    /// `r`, multiplies `t`.
    pub time_scale: f64,
}

impl ScaleMap {
    pub fn identity() -> Self {
        Self {
            state_scale_y: 1.0,
            time_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.state_scale_y) && ok(self.time_scale) {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid scale map {self:?}")))
        }
    }

    pub fn is_identity(&self) -> bool {
        self.state_scale_y == 1.0 && self.time_scale == 1.0
    }

    pub fn state_to_normalized(&self, s: State) -> State {
        State {
            x: s.x,
            y: s.y * self.state_scale_y,
        }
    }

    pub fn state_to_original(&self, s: State) -> State {
        State {
            x: s.x,
            y: s.y / self.state_scale_y,
        }
    }

    pub fn time_to_normalized(&self, t: f64) -> f64 {
        t * self.time_scale
    }

    pub fn time_to_original(&self, tau: f64) -> f64 {
        tau / self.time_scale
    }

    /// Release rate in original units for a normalized release rate.
    pub fn release_to_original(&self, u_bar: f64) -> f64 {
        // u = r^2 u' / c = r u' / (c / r)
        u_bar * self.time_scale / self.state_scale_y
    }

    pub fn release_to_normalized(&self, u: f64) -> f64 {
        u * self.state_scale_y / self.time_scale
    }
}

/// Pest density `x` and nematode density `y`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const ORIGIN: State = State { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Validated constructor for user-supplied initial conditions.
    pub fn first_quadrant(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::invalid(format!("non-finite state ({x}, {y})")));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::invalid(format!(
                "state ({x}, {y}) is outside the first quadrant"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Round-off negatives clamped to zero, for reporting only.
    pub fn clamped(&self) -> State {
        State {
            x: self.x.max(0.0),
            y: self.y.max(0.0),
        }
    }
}

/// Time derivative `(dx/dt, dy/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub dx: f64,
    pub dy: f64,
}

impl Velocity {
    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

/// 2x2 real matrix `((j11, j12), (j21, j22))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2 {
    pub j11: f64,
    pub j12: f64,
    pub j21: f64,
    pub j22: f64,
}

impl Jacobian2 {
    pub fn new(j11: f64, j12: f64, j21: f64, j22: f64) -> Self {
        Self { j11, j12, j21, j22 }
    }

    pub fn trace(&self) -> f64 {
        self.j11 + self.j22
    }

    pub fn det(&self) -> f64 {
        self.j11 * self.j22 - self.j12 * self.j21
    }

    /// `trace^2 - 4 det`.
    pub fn discriminant(&self) -> f64 {
        let t = self.trace();
        t * t - 4.0 * self.det()
    }

    pub fn is_finite(&self) -> bool {
        [self.j11, self.j12, self.j21, self.j22]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Eigenvalues ordered by descending real part, then descending
    /// imaginary part.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let half_tr = 0.5 * self.trace();
        // (j11 - j22)^2 + 4 j12 j21 avoids cancellation in tr^2 - 4 det
        let d = self.j11 - self.j22;
        let disc = 0.25 * (d * d + 4.0 * self.j12 * self.j21);
        if disc >= 0.0 {
            let s = disc.sqrt();
            // larger root computed without cancellation, smaller from det
            let big = if half_tr >= 0.0 {
                half_tr + s
            } else {
                half_tr - s
            };
            let small = if big != 0.0 { self.det() / big } else { 0.0 };
            let (a, b) = if big >= small {
                (big, small)
            } else {
                (small, big)
            };
            [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
        } else {
            let w = (-disc).sqrt();
            [Complex64::new(half_tr, w), Complex64::new(half_tr, -w)]
        }
    }
}

fn check_finite(s: &State) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite state {s:?}")))
    }
}

pub fn vector_field_original(p: &OriginalParams, s: &State) -> Result<Velocity> {
    p.validate()?;
    check_finite(s)?;
    Ok(rhs_original(p, s))
}

pub fn vector_field_normalized(p: &NormalizedParams, s: &State) -> Result<Velocity> {
    p.validate()?;
    check_finite(s)?;
    Ok(rhs_normalized(p, s))
}

#[inline]
pub(crate) fn rhs_original(p: &OriginalParams, s: &State) -> Velocity {
    let (x, y) = (s.x, s.y);
    Velocity {
        dx: p.r * x / (1.0 + p.k * y) - p.c * x * y,
        dy: p.c * x * y * y - p.m * y + p.u,
    }
}

#[inline]
pub(crate) fn rhs_normalized(p: &NormalizedParams, s: &State) -> Velocity {
    let (x, y) = (s.x, s.y);
    Velocity {
        dx: x / (1.0 + p.k * y) - x * y,
        dy: x * y * y - p.m * y + p.u,
    }
}

pub fn jacobian_original(p: &OriginalParams, s: &State) -> Result<Jacobian2> {
    p.validate()?;
    check_finite(s)?;
    let (x, y) = (s.x, s.y);
    let q = 1.0 + p.k * y;
    Ok(Jacobian2 {
        j11: p.r / q - p.c * y,
        j12: -p.r * p.k * x / (q * q) - p.c * x,
        j21: p.c * y * y,
        j22: 2.0 * p.c * x * y - p.m,
    })
}

pub fn jacobian_normalized(p: &NormalizedParams, s: &State) -> Result<Jacobian2> {
    p.validate()?;
    check_finite(s)?;
    let (x, y) = (s.x, s.y);
    let q = 1.0 + p.k * y;
    Ok(Jacobian2 {
        j11: 1.0 / q - y,
        j12: -p.k * x / (q * q) - x,
        j21: y * y,
        j22: 2.0 * x * y - p.m,
    })
}

pub fn nondimensionalize(p: &OriginalParams) -> (NormalizedParams, ScaleMap) {
    let np = NormalizedParams {
        k: p.k * p.r / p.c,
        m: p.m / p.r,
        u: p.c * p.u / (p.r * p.r),
    };
    let sm = ScaleMap {
        state_scale_y: p.c / p.r,
        time_scale: p.r,
    };
    (np, sm)
}

/// Inverse of [`nondimensionalize`]: recovers `(r, k, c, m, u)` from the
/// dimensionless parameters and the scale map that produced them.
pub fn dimensionalize(p: &NormalizedParams, sm: &ScaleMap) -> Result<OriginalParams> {
    sm.validate()?;
    let r = sm.time_scale;
    let c = sm.state_scale_y * r;
    OriginalParams::new(
        r,
        p.k * sm.state_scale_y,
        c,
        p.m * r,
        sm.release_to_original(p.u),
    )
}

/// Maps a trajectory computed in normalized units back to original units.
pub fn dimensionalize_trajectory(traj: &Trajectory, sm: &ScaleMap) -> Result<Trajectory> {
    sm.validate()?;
    if traj.units != UnitSystem::Normalized {
        return Err(Error::UnitMismatch {
            expected: UnitSystem::Normalized,
            found: traj.units,
        });
    }
    let model = match traj.model {
        Model::Normalized(np) => Model::Original(dimensionalize(&np, sm)?),
        Model::Original(_) => {
            return Err(Error::UnitMismatch {
                expected: UnitSystem::Normalized,
                found: UnitSystem::Original,
            })
        }
    };
    Ok(Trajectory {
        times: traj.times.iter().map(|&t| sm.time_to_original(t)).collect(),
        states: traj
            .states
            .iter()
            .map(|&s| sm.state_to_original(s))
            .collect(),
        units: UnitSystem::Original,
        model,
    })
}

/// A member of the model family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "units", rename_all = "snake_case")]
pub enum Model {
    Original(OriginalParams),
    Normalized(NormalizedParams),
}

impl Model {
    pub fn units(&self) -> UnitSystem {
        match self {
            Model::Original(_) => UnitSystem::Original,
            Model::Normalized(_) => UnitSystem::Normalized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Original(p) => p.validate(),
            Model::Normalized(p) => p.validate(),
        }
    }

    #[inline]
    pub fn rhs(&self, s: &State) -> Velocity {
        match self {
            Model::Original(p) => rhs_original(p, s),
            Model::Normalized(p) => rhs_normalized(p, s),
        }
    }

    pub fn jacobian(&self, s: &State) -> Result<Jacobian2> {
        match self {
            Model::Original(p) => jacobian_original(p, s),
            Model::Normalized(p) => jacobian_normalized(p, s),
        }
    }

    /// Normalized parameters and the scale map into them.
    pub fn normalized(&self) -> (NormalizedParams, ScaleMap) {
        match self {
            Model::Original(p) => nondimensionalize(p),
            Model::Normalized(p) => (*p, ScaleMap::identity()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn original_field_examples() {
        let p = OriginalParams::new(2.0, 0.5, 2.0, 0.4, 0.0).unwrap();
        let v = vector_field_original(&p, &State::ORIGIN).unwrap();
        assert_eq!(v, Velocity { dx: 0.0, dy: 0.0 });

        let v = vector_field_original(&p.with_u(0.2), &State::new(0.0, 0.5)).unwrap();
        assert!(v.dx == 0.0 && close(v.dy, 0.0, 1e-15));

        let v = vector_field_original(&p, &State::new(1.0, 1.0)).unwrap();
        assert!(close(v.dx, 2.0 / 1.5 - 2.0, 1e-15));
        assert!(close(v.dy, 1.6, 1e-15));
    }

    #[test]
    fn normalized_field_examples() {
        let p = NormalizedParams::new(0.5, 0.2, 0.1).unwrap();
        let v = vector_field_normalized(&p, &State::new(0.087, 0.732)).unwrap();
        assert!(v.dx.abs() < 1e-3 && v.dy.abs() < 1e-3);

        let p = NormalizedParams::new(0.0, 0.2, 0.0).unwrap();
        let v = vector_field_normalized(&p, &State::new(1.0, 1.0)).unwrap();
        assert!(close(v.dx, 0.0, 1e-15) && close(v.dy, 0.8, 1e-15));

        let p = NormalizedParams::new(0.5, 0.2, 0.2).unwrap();
        let v = vector_field_normalized(&p, &State::new(0.0, 1.0)).unwrap();
        assert_eq!(v.dx, 0.0);
        assert!(close(v.dy, 0.0, 1e-15));
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = NormalizedParams {
            k: 0.5,
            m: 0.2,
            u: 0.1,
        };
        assert!(matches!(
            vector_field_normalized(&p, &State::new(f64::NAN, 1.0)),
            Err(Error::InvalidInput(_))
        ));
        let bad = NormalizedParams {
            k: f64::INFINITY,
            ..p
        };
        assert!(vector_field_normalized(&bad, &State::ORIGIN).is_err());
        assert!(OriginalParams::new(0.0, 0.5, 2.0, 0.4, 0.0).is_err());
        assert!(OriginalParams::new(1.0, -0.5, 2.0, 0.4, 0.0).is_err());
        assert!(State::first_quadrant(-1e-3, 1.0).is_err());
    }

    #[test]
    fn jacobian_at_pest_free_node() {
        let p = NormalizedParams::new(0.5, 0.2, 0.2).unwrap();
        let j = jacobian_normalized(&p, &State::new(0.0, 1.0)).unwrap();
        assert!(close(j.j11, -1.0 / 3.0, 1e-15));
        assert_eq!(j.j12, 0.0);
        assert_eq!(j.j21, 1.0);
        assert!(close(j.j22, -0.2, 1e-15));
        let ev = j.eigenvalues();
        assert!(close(ev[0].re, -0.2, 1e-15) && close(ev[1].re, -1.0 / 3.0, 1e-15));
    }

    #[test]
    fn jacobian_upper_left_vanishes_at_positive_equilibrium() {
        for &k in &[0.0, 0.1, 0.5, 2.0, 10.0] {
            let y3 = crate::equilibria::y3_of(k);
            let p = NormalizedParams::new(k, 0.2, 0.05 * y3).unwrap();
            let x3 = (p.m * y3 - p.u) / (y3 * y3);
            let j = jacobian_normalized(&p, &State::new(x3, y3)).unwrap();
            assert!(j.j11.abs() < 1e-15, "k = {k}: j11 = {}", j.j11);
        }
    }

    fn central_diff_jacobian(p: &NormalizedParams, s: &State) -> Jacobian2 {
        let h = 1e-6;
        let f = |x: f64, y: f64| rhs_normalized(p, &State::new(x, y));
        let (xp, xm) = (f(s.x + h, s.y), f(s.x - h, s.y));
        let (yp, ym) = (f(s.x, s.y + h), f(s.x, s.y - h));
        Jacobian2 {
            j11: (xp.dx - xm.dx) / (2.0 * h),
            j12: (yp.dx - ym.dx) / (2.0 * h),
            j21: (xp.dy - xm.dy) / (2.0 * h),
            j22: (yp.dy - ym.dy) / (2.0 * h),
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = NormalizedParams::new(
                rng.gen_range(0.0..5.0),
                rng.gen_range(0.05..2.0),
                rng.gen_range(0.0..0.5),
            )
            .unwrap();
            let s = State::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
            let a = jacobian_normalized(&p, &s).unwrap();
            let b = central_diff_jacobian(&p, &s);
            for (u, v) in [
                (a.j11, b.j11),
                (a.j12, b.j12),
                (a.j21, b.j21),
                (a.j22, b.j22),
            ] {
                assert!(
                    (u - v).abs() <= 1e-6 * u.abs().max(1.0),
                    "analytic {u} vs fd {v} at {p:?} {s:?}"
                );
            }
        }
    }

    #[test]
    fn axes_are_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = OriginalParams::new(
                rng.gen_range(0.1..3.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.1..3.0),
                rng.gen_range(0.1..1.0),
                0.0,
            )
            .unwrap();
            let y = rng.gen_range(0.0..3.0);
            let x = rng.gen_range(0.0..3.0);
            assert_eq!(rhs_original(&p, &State::new(0.0, y)).dx, 0.0);
            assert_eq!(rhs_original(&p, &State::new(x, 0.0)).dy, 0.0);
            // with release only the y-axis stays invariant
            let q = p.with_u(0.3);
            assert_eq!(rhs_original(&q, &State::new(0.0, y)).dx, 0.0);
            assert!(rhs_original(&q, &State::new(x, 0.0)).dy > 0.0);
        }
    }

    #[test]
    fn nondimensionalize_example() {
        let p = OriginalParams::new(2.0, 0.5, 2.0, 0.4, 0.2).unwrap();
        let (np, sm) = nondimensionalize(&p);
        assert!(close(np.k, 0.5, 1e-15) && close(np.m, 0.2, 1e-15) && close(np.u, 0.1, 1e-15));
        assert_eq!(sm.state_scale_y, 1.0);
        assert_eq!(sm.time_scale, 2.0);

        let (np, sm) = nondimensionalize(&OriginalParams::new(1.0, 0.0, 1.0, 1.0, 0.0).unwrap());
        assert_eq!((np.k, np.m, np.u), (0.0, 1.0, 0.0));
        assert!(sm.is_identity());
    }

    #[test]
    fn single_sample_maps_back() {
        let p = OriginalParams::new(2.0, 0.5, 2.0, 0.4, 0.2).unwrap();
        let (np, sm) = nondimensionalize(&p);
        let traj = Trajectory {
            times: vec![2.0],
            states: vec![State::new(0.3, 1.0)],
            units: UnitSystem::Normalized,
            model: Model::Normalized(np),
        };
        let back = dimensionalize_trajectory(&traj, &sm).unwrap();
        assert_eq!(back.times, vec![1.0]);
        assert_eq!(back.states, vec![State::new(0.3, 1.0)]);
        assert_eq!(back.units, UnitSystem::Original);

        // identity map leaves samples untouched
        let id = dimensionalize_trajectory(&traj, &ScaleMap::identity()).unwrap();
        assert_eq!(id.times, traj.times);
        assert_eq!(id.states, traj.states);

        // an original-unit trajectory cannot be mapped again
        assert!(matches!(
            dimensionalize_trajectory(&back, &sm),
            Err(Error::UnitMismatch { .. })
        ));
        let bad = ScaleMap {
            state_scale_y: 0.0,
            time_scale: 1.0,
        };
        assert!(dimensionalize_trajectory(&traj, &bad).is_err());
    }

    #[test]
    fn eigenvalues_of_rotation() {
        let j = Jacobian2::new(0.0, -2.0, 0.5, 0.0);
        let ev = j.eigenvalues();
        assert_eq!(ev[0].re, 0.0);
        assert!(close(ev[0].im, 1.0, 1e-15) && close(ev[1].im, -1.0, 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaling_round_trip(
                r in 0.01f64..100.0,
                k in 0.0f64..50.0,
                c in 0.01f64..100.0,
                m in 0.01f64..10.0,
                u in 0.0f64..10.0,
            ) {
                let p = OriginalParams::new(r, k, c, m, u).unwrap();
                let (np, sm) = nondimensionalize(&p);
                let q = dimensionalize(&np, &sm).unwrap();
                for (a, b) in [(p.r, q.r), (p.k, q.k), (p.c, q.c), (p.m, q.m), (p.u, q.u)] {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(f64::MIN_POSITIVE));
                }
                let s = State::new(u + 0.3, k + 0.7);
                let back = sm.state_to_original(sm.state_to_normalized(s));
                prop_assert!((back.y - s.y).abs() <= 4.0 * f64::EPSILON * s.y);
                let t = 3.7;
                prop_assert!((sm.time_to_original(sm.time_to_normalized(t)) - t).abs() <= 4.0 * f64::EPSILON * t);
            }

            #[test]
            fn eigenvalues_solve_characteristic_polynomial(
                a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0,
            ) {
                let j = Jacobian2::new(a, b, c, d);
                let (tr, det) = (j.trace(), j.det());
                for l in j.eigenvalues() {
                    let res = l * l - l * tr + det;
                    prop_assert!(res.norm() < 1e-10 * (1.0 + tr.abs() + det.abs()).powi(2));
                }
            }
        }
    }
}
