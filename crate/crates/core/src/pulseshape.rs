//! Itinerant-phonon temporal modes and the coupler schedules that emit or
//! absorb them.

use alloc::boxed::Box;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::{invalid, Result, TWO_PI};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

/// Amplitudes below this fraction of the peak are outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-4;

/// A capture coupler opens once the incoming amplitude reaches this
/// fraction of its peak. Opening at the support edge instead would switch
/// κ from 0 to κc while 1e-4 of the amplitude is already arriving, an O(dt)
/// disturbance that spoils the integrator's convergence order.
pub const CAPTURE_OPEN_THRESHOLD: f64 = 1e-8;

/// Symmetric sech wavepacket, |φ(t)|² = norm·(κc/4)·sech²(κc(t − tc)/2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalMode {
    pub kappa_c: f64,
    pub norm: f64,
    pub t_center: f64,
    pub t_start: f64,
    pub t_end: f64,
}

pub fn sech_mode(kappa_c: f64, norm: f64, t_center: f64) -> Result<TemporalMode> {
    if !(kappa_c > 0.0) || !kappa_c.is_finite() {
        return Err(invalid("kappa_c", "must be positive and finite"));
    }
    if !(norm > 0.0 && norm <= 1.0) {
        return Err(invalid("norm", "must lie in (0, 1]"));
    }
    let half = 2.0 * (1.0 / SUPPORT_THRESHOLD).acosh() / kappa_c;
    Ok(TemporalMode { kappa_c, norm, t_center, t_start: t_center - half, t_end: t_center + half })
}

impl TemporalMode {
    fn x(&self, t: f64) -> f64 {
        self.kappa_c * (t - self.t_center) / 2.0
    }

    pub fn in_support(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }

    pub fn amplitude(&self, t: f64) -> Complex64 {
        Complex64::new(self.intensity(t).sqrt(), 0.0)
    }

    pub fn intensity(&self, t: f64) -> f64 {
        if !self.in_support(t) {
            return 0.0;
        }
        let s = 1.0 / self.x(t).cosh();
        self.norm * self.kappa_c / 4.0 * s * s
    }

    /// ∫_{−∞}^{t} |φ|², i.e. the tail before the support counts as already
    /// emitted. The difference from integrating over the support is below
    /// 1e-8 of the norm.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t > self.t_end {
            return self.norm;
        }
        self.norm * (1.0 + self.x(t).tanh()) / 2.0
    }

    /// Peak amplitude times this is where |φ| drops to one half.
    pub fn amplitude_fwhm(&self) -> f64 {
        4.0 * 2.0f64.acosh() / self.kappa_c
    }

    pub fn peak_intensity(&self) -> f64 {
        self.norm * self.kappa_c / 4.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Emit,
    Capture,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Off,
    Constant { rate: f64, t_on: f64, t_off: f64 },
    Emit(TemporalMode),
    Capture(TemporalMode),
    Reversed { inner: Box<CouplerSchedule>, t_mirror: f64 },
    Sum(Vec<CouplerSchedule>),
}

/// Time-dependent coupler rate κ(t) in rad/s, always within [0, kappa_max].
#[derive(Clone, Debug, PartialEq)]
pub struct CouplerSchedule {
    shape: Shape,
    kappa_max: f64,
    direction: Direction,
    /// κ is forced to zero before this time (qubit not yet prepared).
    active_from: f64,
    /// κ is forced to zero from this time on.
    active_until: f64,
}

pub fn emission_schedule(mode: &TemporalMode, kappa_max: f64) -> Result<CouplerSchedule> {
    check_mode(mode, kappa_max)?;
    Ok(CouplerSchedule::with_shape(Shape::Emit(*mode), kappa_max, Direction::Emit))
}

pub fn capture_schedule(mode: &TemporalMode, kappa_max: f64) -> Result<CouplerSchedule> {
    check_mode(mode, kappa_max)?;
    Ok(CouplerSchedule::with_shape(Shape::Capture(*mode), kappa_max, Direction::Capture))
}

fn check_mode(mode: &TemporalMode, kappa_max: f64) -> Result<()> {
    if !(mode.norm > 0.0 && mode.norm <= 1.0) {
        return Err(invalid("norm", "mode norm must lie in (0, 1]"));
    }
    if !(kappa_max > 0.0) {
        return Err(invalid("kappa_max", "must be positive"));
    }
    Ok(())
}

impl CouplerSchedule {
    fn with_shape(shape: Shape, kappa_max: f64, direction: Direction) -> Self {
        Self { shape, kappa_max, direction, active_from: f64::NEG_INFINITY, active_until: f64::INFINITY }
    }

    pub fn off() -> Self {
        Self::with_shape(Shape::Off, f64::INFINITY, Direction::Emit)
    }

    /// Constant rate between `t_on` and `t_off`.
    pub fn constant(rate: f64, t_on: f64, t_off: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(invalid("rate", "must be non-negative and finite"));
        }
        Ok(Self::with_shape(Shape::Constant { rate, t_on, t_off }, rate.max(f64::MIN_POSITIVE), Direction::Emit))
    }

    /// κ'(t) = κ(2·t_mirror − t). Reversing an emission gives a capture.
    pub fn time_reversed(&self, t_mirror: f64) -> Self {
        let direction = match self.direction {
            Direction::Emit => Direction::Capture,
            Direction::Capture => Direction::Emit,
        };
        Self::with_shape(Shape::Reversed { inner: Box::new(self.clone()), t_mirror }, self.kappa_max, direction)
    }

    /// Pointwise sum of several schedules, e.g. an emission followed by a
    /// later capture on the same coupler. Each part keeps its own cap.
    pub fn sum(parts: Vec<CouplerSchedule>, kappa_max: f64) -> Result<Self> {
        if parts.is_empty() {
            return Err(invalid("parts", "need at least one schedule"));
        }
        let direction = parts[0].direction;
        Ok(Self::with_shape(Shape::Sum(parts), kappa_max, direction))
    }

    pub fn active_from(mut self, t: f64) -> Self {
        self.active_from = t;
        self
    }

    pub fn active_until(mut self, t: f64) -> Self {
        self.active_until = t;
        self
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    fn raw(&self, t: f64) -> f64 {
        match &self.shape {
            Shape::Off => 0.0,
            Shape::Constant { rate, t_on, t_off } => {
                if t >= *t_on && t < *t_off {
                    *rate
                } else {
                    0.0
                }
            }
            Shape::Emit(m) => {
                if !m.in_support(t) {
                    return 0.0;
                }
                // 1 − cumulative written so it stays accurate as it → 0
                let x = m.x(t);
                let rem = (1.0 - m.norm) + m.norm / (1.0 + (2.0 * x).exp());
                let k = m.intensity(t);
                if rem > 0.0 {
                    k / rem
                } else {
                    f64::INFINITY
                }
            }
            Shape::Capture(m) => {
                let open = m.t_center - 2.0 * (1.0 / CAPTURE_OPEN_THRESHOLD).acosh() / m.kappa_c;
                if t < open || t > m.t_end {
                    return 0.0;
                }
                // |φ|²/∫|φ|² is independent of the norm: κc/(1 + e^{2x})
                m.kappa_c / (1.0 + (2.0 * m.x(t)).exp())
            }
            Shape::Reversed { inner, t_mirror } => inner.kappa(2.0 * t_mirror - t),
            Shape::Sum(parts) => parts.iter().map(|p| p.kappa(t)).sum(),
        }
    }

    /// Coupler rate at time t (rad/s).
    pub fn kappa(&self, t: f64) -> f64 {
        if t < self.active_from || t >= self.active_until {
            return 0.0;
        }
        let k = self.raw(t);
        if k > self.kappa_max {
            self.kappa_max
        } else {
            k
        }
    }

    /// True if the ceiling clips the requested rate anywhere in [t0, t1].
    pub fn cap_engaged(&self, t0: f64, t1: f64, dt: f64) -> bool {
        let n = ((t1 - t0) / dt).ceil() as usize;
        (0..=n).any(|k| {
            let t = t0 + k as f64 * dt;
            t >= self.active_from && t < self.active_until && self.raw(t) > self.kappa_max
        })
    }

    /// Samples as (t in ns, κ/2π in MHz) pairs.
    pub fn sample(&self, t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
        let n = ((t1 - t0) / dt).round() as usize;
        (0..=n)
            .map(|k| {
                let t = t0 + k as f64 * dt;
                (t * 1e9, self.kappa(t) / TWO_PI / 1e6)
            })
            .collect()
    }
}

/// Output of a lone qubit driven by a schedule: da/dt = −κ/2·a − √κ·b_in,
/// b_out = b_in + √κ·a.
#[derive(Clone, Debug)]
pub struct SingleNodeRun {
    pub times: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    pub output: Vec<Complex64>,
}

impl SingleNodeRun {
    pub fn final_population(&self) -> f64 {
        self.amplitude.last().map(|a| a.norm_sqr()).unwrap_or(0.0)
    }

    pub fn emitted(&self, dt: f64) -> f64 {
        // trapezoid; the output vanishes at both ends
        self.output.iter().map(|c| c.norm_sqr()).sum::<f64>() * dt
    }
}

/// Integrates a single node with RK4 on a uniform grid, starting from
/// qubit amplitude `a0` and driven by the incoming field `input`.
pub fn simulate_single_node(
    schedule: &CouplerSchedule,
    input: &dyn Fn(f64) -> Complex64,
    a0: Complex64,
    t0: f64,
    t1: f64,
    dt: f64,
) -> SingleNodeRun {
    let rhs = |t: f64, a: Complex64| {
        let k = schedule.kappa(t);
        a * (-k / 2.0) - input(t) * k.sqrt()
    };
    let n = ((t1 - t0) / dt).round() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut amplitude = Vec::with_capacity(n + 1);
    let mut output = Vec::with_capacity(n + 1);
    let mut a = a0;
    for k in 0..=n {
        let t = t0 + k as f64 * dt;
        times.push(t);
        amplitude.push(a);
        output.push(input(t) + a * schedule.kappa(t).sqrt());
        if k == n {
            break;
        }
        let k1 = rhs(t, a);
        let k2 = rhs(t + dt / 2.0, a + k1 * (dt / 2.0));
        let k3 = rhs(t + dt / 2.0, a + k2 * (dt / 2.0));
        let k4 = rhs(t + dt * (1.0 - crate::qmath::LEFT_LIMIT), a + k3 * dt);
        a += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    }
    SingleNodeRun { times, amplitude, output }
}

/// Relative L2 distance between the emitted intensity and the target.
pub fn emission_l2_error(run: &SingleNodeRun, mode: &TemporalMode) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, c) in run.times.iter().zip(&run.output) {
        let want = mode.intensity(*t);
        num += (c.norm_sqr() - want).powi(2);
        den += want * want;
    }
    (num / den).sqrt()
}
