//! Discretized chordal and radial Loewner flows.
//!
//! The chordal flow is driven by a piecewise-constant approximation of
//! sqrt(kappa) B_t. Within one step the flow has the exact solution
//! g -> W + sqrt((g - W)^2 + 4h), so the only discretization error is in
//! the driving path itself. The trace is recovered by composing the
//! per-step inverse slit maps in reverse order.
//!
//! Swallowing of a tracked point is declared when its image collides with
//! the driving singularity, lands on the elementary slit, or (for points
//! hugging the real axis below the slit-tip height) when the driving value
//! jumps across it.

pub use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::trial_rng;

/// Collision tolerance: |g - W| below this means the point hit the
/// singularity.
pub const SWALLOW_GAP: f64 = 1e-8;
/// Points this close to the slit axis are treated as on it.
pub const AXIS_TOL: f64 = 1e-9;
/// Alive positions and trace points must satisfy Im >= IM_FLOOR.
pub const IM_FLOOR: f64 = -1e-9;

#[derive(Debug, Error)]
pub enum LoewnerError {
    #[error("kappa must be finite and nonnegative, got {0}")]
    BadKappa(f64),
    #[error("dt must be finite and positive, got {0}")]
    BadDt(f64),
    #[error("horizon must be finite and positive, got {0}")]
    BadHorizon(f64),
    #[error("horizon {horizon} is shorter than one step dt = {dt}")]
    HorizonTooShort { horizon: f64, dt: f64 },
    #[error("point must lie in the closed upper half-plane, got Im = {0}")]
    LowerHalfPlane(f64),
    #[error("query time {t} exceeds the path horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },
    #[error("point must lie in the closed unit disk, got |z| = {0}")]
    OutsideDisk(f64),
    #[error("driving path must start at zero, got {0}")]
    NonzeroStart(f64),
    #[error("driving path needs at least one step")]
    TooShort,
}

/// State of a tracked point under the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowState {
    /// Image of the point, in the closed upper half-plane (chordal) or the
    /// closed unit disk (radial).
    Alive(Complex64),
    /// First time the point entered the hull.
    Swallowed(f64),
}

impl FlowState {
    pub fn is_alive(&self) -> bool {
        matches!(self, FlowState::Alive(_))
    }

    pub fn swallow_time(&self) -> Option<f64> {
        match self {
            FlowState::Alive(_) => None,
            FlowState::Swallowed(t) => Some(*t),
        }
    }
}

/// Discretized driving function W_k ~ sqrt(kappa) B_{k dt}.
#[derive(Debug, Clone)]
pub struct DrivingPath {
    pub kappa: f64,
    pub dt: f64,
    /// W_0..W_N with W_0 = 0.
    pub values: Vec<f64>,
}

impl DrivingPath {
    pub fn from_values(kappa: f64, dt: f64, values: Vec<f64>) -> Result<Self, LoewnerError> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(LoewnerError::BadKappa(kappa));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(LoewnerError::BadDt(dt));
        }
        if values.len() < 2 {
            return Err(LoewnerError::TooShort);
        }
        if values[0] != 0.0 {
            return Err(LoewnerError::NonzeroStart(values[0]));
        }
        Ok(DrivingPath { kappa, dt, values })
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    /// Constant driving level on step k (left endpoint of the step).
    #[inline]
    pub fn level(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// CSV with header `t,w`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,w\n");
        for (k, w) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k as f64 * self.dt, w));
        }
        out
    }
}

/// Sample a driving path: W_0 = 0, i.i.d. centered Gaussian increments of
/// variance kappa dt, N = ceil(horizon/dt) steps. Deterministic in `seed`.
pub fn sample_driving(
    kappa: f64,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<DrivingPath, LoewnerError> {
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(LoewnerError::BadKappa(kappa));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(LoewnerError::BadDt(dt));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(LoewnerError::BadHorizon(horizon));
    }
    if horizon < dt {
        return Err(LoewnerError::HorizonTooShort { horizon, dt });
    }
    let n = (horizon / dt).ceil() as usize;
    let mut rng = trial_rng(seed);
    let scale = (kappa * dt).sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        w += scale * z;
        values.push(w);
    }
    Ok(DrivingPath { kappa, dt, values })
}

/// sqrt with image in the closed upper half-plane. For real results the
/// sign is resolved by `side` (which side of the slit the point came from).
#[inline]
pub fn upper_sqrt(v: Complex64, side: f64) -> Complex64 {
    let w = v.sqrt();
    if w.im > 0.0 {
        w
    } else if w.im < 0.0 {
        -w
    } else if side < 0.0 {
        -w
    } else {
        w
    }
}

/// A point tracked under the forward chordal flow, with the spatial
/// derivative g_t'(z) accumulated alongside.
#[derive(Debug, Clone)]
pub struct FlowPoint {
    g: Complex64,
    deriv: Complex64,
    /// Last resolved side of the slit axis: sign of Re(g - W).
    side: f64,
    swallowed_at: Option<f64>,
}

impl FlowPoint {
    pub fn new(z: Complex64) -> Self {
        FlowPoint {
            g: z,
            deriv: Complex64::new(1.0, 0.0),
            side: 0.0,
            swallowed_at: None,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.swallowed_at.is_none()
    }

    pub fn position(&self) -> Complex64 {
        self.g
    }

    /// g_t'(z); 1 at t = 0, shrinking along the flow.
    pub fn derivative(&self) -> Complex64 {
        self.deriv
    }

    pub fn state(&self) -> FlowState {
        match self.swallowed_at {
            Some(t) => FlowState::Swallowed(t),
            None => FlowState::Alive(self.g),
        }
    }

    /// Conformal radius of the point in the current domain,
    /// 2 Im(g) / |g'|. Koebe: distance to the hull union R is within
    /// [crad/4, crad]. Nonincreasing along the flow.
    pub fn conformal_radius(&self) -> f64 {
        2.0 * self.g.im / self.deriv.norm()
    }

    /// Advance by one slit step of duration `h` at driving level `level`.
    /// `t0` is the time at the start of the step.
    pub fn step(&mut self, level: f64, h: f64, t0: f64) {
        if self.swallowed_at.is_some() {
            return;
        }
        let u = self.g - level;
        let (x, y) = (u.re, u.im);
        if u.norm_sqr() < SWALLOW_GAP * SWALLOW_GAP {
            self.swallowed_at = Some(t0);
            return;
        }
        let tip = 2.0 * h.sqrt();
        if x.abs() <= AXIS_TOL {
            // On the slit axis: captured if at or below the tip.
            if y <= tip + AXIS_TOL {
                self.swallowed_at = Some(t0 + (y * y / 4.0).min(h));
                return;
            }
        } else if y <= tip && self.side != 0.0 && x.signum() != self.side {
            // The driving value jumped across a point sitting below the
            // slit-tip height: the curve swept over it.
            self.swallowed_at = Some(t0);
            return;
        }
        let v = u * u + 4.0 * h;
        let w = upper_sqrt(v, x.signum());
        self.deriv *= u / w;
        self.g = level + w;
        if self.g.im < IM_FLOOR {
            // Branch-cut trip; can only happen through rounding right at
            // the singularity.
            self.swallowed_at = Some(t0 + h);
            return;
        }
        if self.g.im < 0.0 {
            self.g.im = 0.0;
        }
        if x.abs() > AXIS_TOL {
            self.side = x.signum();
        }
    }

    /// Entry checks of the upcoming step: collision with the new driving
    /// value, or a near-axis point the driving just jumped across. These
    /// describe the state AT `t0`, so grid queries must see them too.
    fn probe_entry(&mut self, level: f64, h: f64, t0: f64) {
        if self.swallowed_at.is_some() {
            return;
        }
        let u = self.g - level;
        if u.norm_sqr() < SWALLOW_GAP * SWALLOW_GAP {
            self.swallowed_at = Some(t0);
        } else if u.re.abs() > AXIS_TOL
            && u.im <= 2.0 * h.sqrt()
            && self.side != 0.0
            && u.re.signum() != self.side
        {
            self.swallowed_at = Some(t0);
        }
    }

    /// Run the flow along `path` up to time `t` (grid-aligned or not).
    /// Times within relative 1e-9 of a grid point snap to the grid so that
    /// grid queries replay the exact same step arithmetic.
    pub fn run(&mut self, path: &DrivingPath, t: f64) {
        let dt = path.dt;
        let steps_f = t / dt;
        let full = if (steps_f - steps_f.round()).abs() < 1e-9 {
            steps_f.round() as usize
        } else {
            steps_f.floor() as usize
        };
        let full = full.min(path.steps());
        for k in 0..full {
            if self.swallowed_at.is_some() {
                return;
            }
            self.step(path.level(k), dt, k as f64 * dt);
        }
        let rem = t - full as f64 * dt;
        if rem > 1e-12 && full < path.values.len() {
            self.step(path.level(full), rem, full as f64 * dt);
        } else if full < path.steps() {
            self.probe_entry(path.level(full), dt, full as f64 * dt);
        }
    }
}

/// Solve the flow for one point: Alive(g_t(z)) or Swallowed(first time).
pub fn forward_flow(z: Complex64, path: &DrivingPath, t: f64) -> Result<FlowState, LoewnerError> {
    if z.im < 0.0 {
        return Err(LoewnerError::LowerHalfPlane(z.im));
    }
    if t > path.horizon() + 1e-9 {
        return Err(LoewnerError::BeyondHorizon {
            t,
            horizon: path.horizon(),
        });
    }
    let mut p = FlowPoint::new(z);
    p.run(path, t);
    Ok(p.state())
}

/// First time the point enters the hull; +inf if alive at the horizon.
pub fn swallow_time(z: Complex64, path: &DrivingPath) -> Result<f64, LoewnerError> {
    let state = forward_flow(z, path, path.horizon())?;
    Ok(state.swallow_time().unwrap_or(f64::INFINITY))
}

/// Lean tracker for a real point: follows the gap to the driving value.
/// Used by the boundary-time machinery where thousands of restarts are
/// needed per path.
#[derive(Debug, Clone, Copy)]
pub struct RealGap {
    g: f64,
    side: f64,
    alive: bool,
}

impl RealGap {
    pub fn new(x: f64, level0: f64) -> Self {
        let side = (x - level0).signum();
        RealGap {
            g: x,
            side,
            alive: (x - level0).abs() >= SWALLOW_GAP,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    #[inline]
    pub fn step(&mut self, level: f64, h: f64) {
        if !self.alive {
            return;
        }
        let u = self.g - level;
        if u.abs() < SWALLOW_GAP || u.signum() != self.side {
            self.alive = false;
            return;
        }
        self.g = level + self.side * (u * u + 4.0 * h).sqrt();
    }

    /// Run over path steps [k0, k1); returns true if still alive after.
    pub fn run(&mut self, path: &DrivingPath, k0: usize, k1: usize) -> bool {
        for k in k0..k1.min(path.steps()) {
            if !self.alive {
                return false;
            }
            self.step(path.level(k), path.dt);
        }
        self.alive
    }
}

/// Sampled trace gamma(t_k) with capacity-time indexing.
#[derive(Debug, Clone)]
pub struct TracePolyline {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
    /// Set for kappa >= 8 where geometric tolerances are unreliable.
    pub note: Option<String>,
}

impl TracePolyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from z to the polyline, measured on segments.
    pub fn distance_to(&self, z: Complex64) -> f64 {
        let mut best = f64::INFINITY;
        for w in windows2(&self.points) {
            let d = segment_distance(z, w.0, w.1);
            if d < best {
                best = d;
            }
        }
        best
    }

    /// First grid time at which a polyline segment meets the closed ball
    /// B(center, r); None if it never does.
    pub fn first_entry_time(&self, center: Complex64, r: f64) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        if (self.points[0] - center).norm() <= r {
            return Some(self.times[0]);
        }
        for (k, w) in windows2(&self.points).enumerate() {
            if segment_distance(center, w.0, w.1) <= r {
                return Some(self.times[k + 1]);
            }
        }
        None
    }

    /// CSV with header `t,re,im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im\n");
        for (t, p) in self.times.iter().zip(&self.points) {
            out.push_str(&format!("{},{},{}\n", t, p.re, p.im));
        }
        out
    }
}

fn windows2(pts: &[Complex64]) -> impl Iterator<Item = (Complex64, Complex64)> + '_ {
    pts.windows(2).map(|w| (w[0], w[1]))
}

/// Distance from z to the segment [a, b].
pub fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a).re * ab.re + (z - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

/// Inverse slit step: maps the half-plane back through one elementary map.
#[inline]
fn inverse_step(w: Complex64, level: f64, h: f64) -> Complex64 {
    let u = w - level;
    let v = u * u - 4.0 * h;
    level + upper_sqrt(v, u.re.signum())
}

/// Evaluate the trace point at grid index m >= 1 (time m dt).
fn trace_point(path: &DrivingPath, m: usize) -> Complex64 {
    let dt = path.dt;
    let mut w = Complex64::new(path.level(m - 1), 2.0 * dt.sqrt());
    for k in (0..m.saturating_sub(1)).rev() {
        w = inverse_step(w, path.level(k), dt);
    }
    if w.im < 0.0 {
        w.im = 0.0;
    }
    w
}

/// Trace of the flow sampled at every step. O(N^2) in the step count.
pub fn trace(path: &DrivingPath) -> TracePolyline {
    trace_with_stride(path, 1)
}

/// Trace sampled every `stride` steps; cost N^2/stride. The stride keeps
/// long-horizon dimension experiments tractable.
pub fn trace_with_stride(path: &DrivingPath, stride: usize) -> TracePolyline {
    let stride = stride.max(1);
    let n = path.steps();
    let indices: Vec<usize> = (1..=n / stride).map(|j| j * stride).collect();
    let points: Vec<Complex64> = if indices.len() > 512 {
        indices.par_iter().map(|&m| trace_point(path, m)).collect()
    } else {
        indices.iter().map(|&m| trace_point(path, m)).collect()
    };
    let mut times = Vec::with_capacity(indices.len() + 1);
    let mut pts = Vec::with_capacity(indices.len() + 1);
    times.push(0.0);
    pts.push(Complex64::new(0.0, 0.0));
    for (m, p) in indices.into_iter().zip(points) {
        times.push(m as f64 * path.dt);
        pts.push(p);
    }
    let note = if path.kappa >= 8.0 {
        Some("space-filling regime; geometric tolerances unreliable".to_string())
    } else {
        None
    };
    TracePolyline {
        times,
        points: pts,
        note,
    }
}

/// Driving process on the unit circle: beta_t = exp(i theta_t).
#[derive(Debug, Clone)]
pub struct RadialDrivingPath {
    pub kappa: f64,
    pub dt: f64,
    /// theta_0..theta_N with theta_0 = 0.
    pub angles: Vec<f64>,
}

impl RadialDrivingPath {
    pub fn steps(&self) -> usize {
        self.angles.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    #[inline]
    pub fn beta(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angles[k])
    }
}

/// Sample a radial driving path; same step discipline as [`sample_driving`].
pub fn sample_radial_driving(
    kappa: f64,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<RadialDrivingPath, LoewnerError> {
    let p = sample_driving(kappa, dt, horizon, seed)?;
    Ok(RadialDrivingPath {
        kappa,
        dt,
        angles: p.values,
    })
}

/// Radial vector field g (beta + g)/(beta - g).
#[inline]
fn radial_field(g: Complex64, beta: Complex64) -> Complex64 {
    g * (beta + g) / (beta - g)
}

const RADIAL_ABSORB: f64 = 1e-6;

/// Integrate the radial Loewner flow for one point of the closed unit
/// disk. Sub-stepped 4th-order integration: the substep shrinks with the
/// distance to the driving singularity, and a point whose substep floors
/// out is declared swallowed.
pub fn radial_forward_flow(
    z: Complex64,
    path: &RadialDrivingPath,
    t: f64,
) -> Result<FlowState, LoewnerError> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(LoewnerError::OutsideDisk(z.norm()));
    }
    if t > path.horizon() + 1e-9 {
        return Err(LoewnerError::BeyondHorizon {
            t,
            horizon: path.horizon(),
        });
    }
    if z.norm() == 0.0 {
        // The growth target is fixed by the flow.
        return Ok(FlowState::Alive(z));
    }
    let boundary = (z.norm() - 1.0).abs() < 1e-9;
    let mut g = z;
    let dt = path.dt;
    let h_floor = dt * 1e-6;
    let full = ((t / dt + 1e-12).floor() as usize).min(path.steps());
    for k in 0..=full {
        let step_len = if k < full {
            dt
        } else {
            let rem = t - full as f64 * dt;
            if rem <= 1e-12 {
                break;
            }
            rem
        };
        let beta = path.beta(k);
        let t0 = k as f64 * dt;
        let mut done = 0.0;
        while done < step_len {
            let gap = (g - beta).norm();
            if gap < RADIAL_ABSORB {
                return Ok(FlowState::Swallowed(t0 + done));
            }
            let f0 = radial_field(g, beta);
            let speed = f0.norm().max(1e-12);
            let mut h = (0.05 * gap / speed).min(step_len - done);
            if h < h_floor {
                return Ok(FlowState::Swallowed(t0 + done));
            }
            h = h.max(h_floor.min(step_len - done));
            // RK4 with frozen driving.
            let k1 = f0;
            let k2 = radial_field(g + k1 * (h / 2.0), beta);
            let k3 = radial_field(g + k2 * (h / 2.0), beta);
            let k4 = radial_field(g + k3 * h, beta);
            g += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            if boundary || g.norm() > 1.0 {
                g /= g.norm();
            }
            done += h;
        }
    }
    Ok(FlowState::Alive(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zero_path(dt: f64, horizon: f64) -> DrivingPath {
        sample_driving(0.0, dt, horizon, 7).unwrap()
    }

    #[test]
    fn zero_kappa_driving_is_identically_zero() {
        let p = sample_driving(0.0, 0.01, 1.0, 12345).unwrap();
        assert_eq!(p.steps(), 100);
        assert!(p.values.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn sample_driving_rejects_bad_input() {
        assert!(sample_driving(6.0, 0.0, 1.0, 0).is_err());
        assert!(sample_driving(6.0, -0.1, 1.0, 0).is_err());
        assert!(sample_driving(6.0, f64::NAN, 1.0, 0).is_err());
        assert!(sample_driving(6.0, 0.01, 0.0, 0).is_err());
        assert!(sample_driving(6.0, 0.01, f64::INFINITY, 0).is_err());
        assert!(sample_driving(6.0, 0.5, 0.25, 0).is_err());
        assert!(sample_driving(-1.0, 0.01, 1.0, 0).is_err());
    }

    #[test]
    fn exact_step_matches_closed_form() {
        // One slit step at a nonzero level against the closed form,
        // and a composed zero-driving flow against g_t(z) = sqrt(z^2 + 4t).
        let z = c(0.3, 1.2);
        let level = 0.7;
        let h = 0.05;
        let mut p = FlowPoint::new(z);
        p.step(level, h, 0.0);
        let expect = level + upper_sqrt((z - level) * (z - level) + 4.0 * h, (z.re - level).signum());
        match p.state() {
            FlowState::Alive(g) => assert!((g - expect).norm() < 1e-12),
            _ => panic!("unexpected swallow"),
        }

        let path = zero_path(0.01, 1.0);
        let g = match forward_flow(c(1.0, 2.0), &path, 1.0).unwrap() {
            FlowState::Alive(g) => g,
            _ => panic!("point should survive"),
        };
        let z = c(1.0, 2.0);
        let expect = (z * z + 4.0).sqrt();
        assert!((g - expect).norm() < 1e-12);
    }

    #[test]
    fn zero_driving_swallows_axis_points_at_y2_over_4() {
        let dt = 0.01;
        let path = zero_path(dt, 2.0);
        let t2 = swallow_time(c(0.0, 2.0), &path).unwrap();
        assert!((t2 - 1.0).abs() <= dt + 1e-12, "got {t2}");
        let t1 = swallow_time(c(0.0, 1.0), &path).unwrap();
        assert!((t1 - 0.25).abs() <= dt + 1e-12, "got {t1}");
        // Non-grid-aligned height.
        let y = 1.37;
        let ty = swallow_time(c(0.0, y), &path).unwrap();
        assert!((ty - y * y / 4.0).abs() <= dt + 1e-12, "got {ty}");
    }

    #[test]
    fn origin_is_swallowed_immediately() {
        let path = sample_driving(6.0, 0.01, 1.0, 3).unwrap();
        assert_eq!(swallow_time(c(0.0, 0.0), &path).unwrap(), 0.0);
    }

    #[test]
    fn off_axis_points_survive_zero_driving() {
        let path = zero_path(0.01, 1.0);
        assert!(forward_flow(c(0.5, 0.5), &path, 1.0).unwrap().is_alive());
        assert_eq!(swallow_time(c(0.5, 0.5), &path).unwrap(), f64::INFINITY);
    }

    #[test]
    fn lower_half_plane_rejected() {
        let path = zero_path(0.01, 1.0);
        assert!(forward_flow(c(0.0, -0.1), &path, 1.0).is_err());
    }

    #[test]
    fn trace_of_zero_driving_is_vertical_segment() {
        let dt = 1e-3;
        let path = zero_path(dt, 1.0);
        let tr = trace(&path);
        let last = *tr.points.last().unwrap();
        assert!((last - c(0.0, 2.0)).norm() < 10.0 * dt);
        // gamma(t) = 2 i sqrt(t) along the way.
        for (t, p) in tr.times.iter().zip(&tr.points) {
            assert!((p - c(0.0, 2.0 * t.sqrt())).norm() < 1e-9);
        }
        assert_eq!(tr.points[0], c(0.0, 0.0));
    }

    #[test]
    fn trace_scaling_is_exact_for_zero_kappa() {
        let lambda: f64 = 1.7;
        let base = zero_path(0.01, 1.0);
        let scaled = zero_path(0.01 * lambda * lambda, lambda * lambda);
        let t1 = trace(&base);
        let t2 = trace(&scaled);
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.points.iter().zip(&t2.points) {
            assert!((b - a * lambda).norm() < 1e-9);
        }
    }

    #[test]
    fn trace_stays_in_upper_half_plane() {
        for seed in 0..20u64 {
            let path = sample_driving(6.0, 1e-3, 1.0, seed).unwrap();
            let tr = trace_with_stride(&path, 4);
            let min_im = tr.points.iter().map(|p| p.im).fold(f64::INFINITY, f64::min);
            assert!(min_im >= IM_FLOOR);
        }
    }

    #[test]
    fn space_filling_regime_is_flagged() {
        let path = sample_driving(9.0, 1e-2, 0.5, 1).unwrap();
        assert!(trace(&path).note.is_some());
        let path = sample_driving(2.0, 1e-2, 0.5, 1).unwrap();
        assert!(trace(&path).note.is_none());
    }

    #[test]
    fn hull_monotonicity_once_swallowed_always_swallowed() {
        let path = sample_driving(6.0, 1e-3, 4.0, 11).unwrap();
        let zs = [c(0.4, 0.3), c(-0.8, 0.5), c(0.1, 0.9), c(1.5, 0.2)];
        for z in zs {
            let s = swallow_time(z, &path).unwrap();
            if s.is_finite() {
                // Monotonicity holds at grid times.
                let mut k = (s / path.dt).ceil() as usize;
                while k <= path.steps() {
                    let t = k as f64 * path.dt;
                    let st = forward_flow(z, &path, t).unwrap();
                    match st {
                        FlowState::Swallowed(at) => assert!(at <= t + 1e-12),
                        FlowState::Alive(_) => panic!("point resurrected at t = {t}"),
                    }
                    k += 501;
                }
            }
        }
    }

    #[test]
    fn real_gap_matches_flow_point_on_reals() {
        let path = sample_driving(6.0, 1e-3, 2.0, 5).unwrap();
        for &x in &[0.3, 1.1, -0.7, 2.5] {
            let mut lean = RealGap::new(x, path.level(0));
            lean.run(&path, 0, path.steps());
            let heavy = forward_flow(c(x, 0.0), &path, path.horizon()).unwrap();
            assert_eq!(lean.is_alive(), heavy.is_alive(), "x = {x}");
        }
    }

    #[test]
    fn radial_fixed_point_is_stationary() {
        // beta == 1 constant, z = -1: the vector field vanishes.
        let path = RadialDrivingPath {
            kappa: 0.0,
            dt: 0.01,
            angles: vec![0.0; 101],
        };
        match radial_forward_flow(c(-1.0, 0.0), &path, 1.0).unwrap() {
            FlowState::Alive(g) => assert!((g - c(-1.0, 0.0)).norm() < 1e-9),
            _ => panic!("fixed point absorbed"),
        }
    }

    #[test]
    fn radial_rejects_outside_disk() {
        let path = RadialDrivingPath {
            kappa: 0.0,
            dt: 0.01,
            angles: vec![0.0; 11],
        };
        assert!(radial_forward_flow(c(1.5, 0.0), &path, 0.1).is_err());
    }

    #[test]
    fn radial_target_never_swallowed() {
        let path = sample_radial_driving(6.0, 1e-3, 1.0, 9).unwrap();
        assert!(radial_forward_flow(c(0.0, 0.0), &path, 1.0).unwrap().is_alive());
    }

    #[test]
    fn driving_csv_round_trips_header() {
        let p = zero_path(0.25, 1.0);
        let csv = p.to_csv();
        assert!(csv.starts_with("t,w\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
