//! Dispersive-shift estimates and the curve fits used on simulated data.
//! Frequencies are ordinary Hz here (not rad/s).

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::{invalid, Error, Result, TWO_PI};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

/// g = √(κ_q·κ_UDT)/2, i.e. κ_q = 4g²/κ_UDT.
pub fn purcell_coupling(kappa_q: f64, kappa_udt: f64) -> Result<f64> {
    if !(kappa_udt > 0.0) {
        return Err(invalid("kappa_udt", "must be positive"));
    }
    if !(kappa_q >= 0.0) {
        return Err(invalid("kappa_q", "must be non-negative"));
    }
    Ok((kappa_q * kappa_udt).sqrt() / 2.0)
}

/// χ = g²/Δ.
pub fn dispersive_shift(g: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(invalid("delta", "detuning must be non-zero"));
    }
    Ok(g * g / delta)
}

/// Δφ = 2π·χ·Δt.
pub fn dispersive_phase(chi: f64, dt: f64) -> Result<f64> {
    if !(dt >= 0.0) {
        return Err(invalid("dt", "interaction time must be non-negative"));
    }
    Ok(TWO_PI * chi * dt)
}

/// Decay rate of a detuned qubit through a broad transducer,
/// 4g²κ/(κ² + 4Δ²), in Hz.
pub fn detuned_purcell_rate(g: f64, kappa_udt: f64, delta: f64) -> f64 {
    4.0 * g * g * kappa_udt / (kappa_udt * kappa_udt + 4.0 * delta * delta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersiveConfig {
    pub g: f64,
    pub delta: f64,
    pub kappa_udt: f64,
    pub kappa_q: f64,
    pub dt: f64,
}

impl DispersiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta == 0.0 {
            return Err(invalid("delta", "detuning must be non-zero"));
        }
        if !(self.g >= 0.0 && self.kappa_udt >= 0.0 && self.kappa_q >= 0.0 && self.dt >= 0.0) {
            return Err(invalid("dispersive", "rates and duration must be non-negative"));
        }
        Ok(())
    }

    pub fn chi(&self) -> Result<f64> {
        self.validate()?;
        dispersive_shift(self.g, self.delta)
    }

    pub fn phase(&self) -> Result<f64> {
        dispersive_phase(self.chi()?, self.dt)
    }
}

/// y = C + A·cos(x − φ0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeFit {
    pub amplitude: f64,
    pub offset: f64,
    pub phase0: f64,
    /// (max − min)/(max + min) of the fitted curve, clipped to [0, 1].
    pub visibility: f64,
    pub residual_norm: f64,
    /// Variances of (offset, amplitude, phase0).
    pub variance: [f64; 3],
}

/// Least squares on the linear form C + a·cos x + b·sin x.
pub fn fit_cosine(samples: &[(f64, f64)]) -> Result<FringeFit> {
    if samples.len() < 5 {
        return Err(invalid("samples", "need at least five samples"));
    }
    let n = samples.len();
    let x = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => 1.0,
        1 => samples[r].0.cos(),
        _ => samples[r].0.sin(),
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let xtx = x.transpose() * &x;
    let sv = xtx.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::Degenerate("sample angles do not determine a cosine"));
    }
    let inv = xtx.try_inverse().ok_or(Error::Degenerate("sample angles do not determine a cosine"))?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let (c, a, b) = (beta[0], beta[1], beta[2]);
    let amp = a.hypot(b);
    let phase0 = b.atan2(a);
    let s2 = if n > 3 { rss / (n - 3) as f64 } else { 0.0 };
    let (va, vb, cab) = (s2 * inv[(1, 1)], s2 * inv[(2, 2)], s2 * inv[(1, 2)]);
    let (var_amp, var_phase) = if amp > 0.0 {
        (
            (a * a * va + b * b * vb + 2.0 * a * b * cab) / (amp * amp),
            (b * b * va + a * a * vb - 2.0 * a * b * cab) / amp.powi(4),
        )
    } else {
        (va + vb, f64::INFINITY)
    };
    let visibility = if c > 0.0 { (amp / c).clamp(0.0, 1.0) } else { 0.0 };
    Ok(FringeFit {
        amplitude: amp,
        offset: c,
        phase0,
        visibility,
        residual_norm: rss.sqrt(),
        variance: [s2 * inv[(0, 0)], var_amp, var_phase],
    })
}

/// Wraps an angle into [0, 2π).
pub fn wrap_phase(x: f64) -> f64 {
    let r = x % TWO_PI;
    if r < 0.0 { (r + TWO_PI) % TWO_PI } else { r }
}

/// y = A·e^{−t/T}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub amplitude: f64,
    pub decay_time: f64,
    pub residual_norm: f64,
    /// Variances of (amplitude, decay_time).
    pub variance: [f64; 2],
}

/// Log-linear start, then Gauss–Newton on the unweighted residuals.
pub fn fit_exponential_decay(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < 3 {
        return Err(invalid("samples", "need at least three samples"));
    }
    if samples.iter().any(|s| !(s.1 > 0.0)) {
        return Err(invalid("samples", "values must be positive"));
    }
    let n = samples.len() as f64;
    let tm = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let stt: f64 = samples.iter().map(|s| (s.0 - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::Degenerate("all samples at the same time"));
    }
    let lm = samples.iter().map(|s| s.1.ln()).sum::<f64>() / n;
    let slope = samples.iter().map(|s| (s.0 - tm) * (s.1.ln() - lm)).sum::<f64>() / stt;
    if !(slope < 0.0) {
        return Err(Error::Degenerate("samples do not decay"));
    }
    // parametrise by (A, k = 1/T)
    let mut amp = (lm - slope * tm).exp();
    let mut k = -slope;
    let resid = |amp: f64, k: f64| -> Vec<f64> { samples.iter().map(|&(t, y)| y - amp * (-k * t).exp()).collect() };
    let mut jtj_inv = DMatrix::<f64>::identity(2, 2);
    for _ in 0..100 {
        let r = resid(amp, k);
        let mut jtj = DMatrix::<f64>::zeros(2, 2);
        let mut jtr = DVector::<f64>::zeros(2);
        for (&(t, _), ri) in samples.iter().zip(&r) {
            let e = (-k * t).exp();
            let j = [e, -amp * t * e];
            for a in 0..2 {
                jtr[a] += j[a] * ri;
                for b in 0..2 {
                    jtj[(a, b)] += j[a] * j[b];
                }
            }
        }
        jtj_inv = jtj.try_inverse().ok_or(Error::Degenerate("decay fit Jacobian is singular"))?;
        let step = &jtj_inv * jtr;
        amp += step[0];
        k += step[1];
        if !(k > 0.0) || !amp.is_finite() {
            return Err(Error::Degenerate("decay fit diverged"));
        }
        if step[0].abs() <= 1e-15 * amp.abs() && step[1].abs() <= 1e-15 * k {
            break;
        }
    }
    let rss: f64 = resid(amp, k).iter().map(|r| r * r).sum();
    let s2 = if samples.len() > 2 { rss / (samples.len() - 2) as f64 } else { 0.0 };
    let t = 1.0 / k;
    Ok(DecayFit {
        amplitude: amp,
        decay_time: t,
        residual_norm: rss.sqrt(),
        // dT = −dk/k²
        variance: [s2 * jtj_inv[(0, 0)], s2 * jtj_inv[(1, 1)] * t.powi(4)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn purcell_examples() {
        let g = purcell_coupling(6e6, 147e6).unwrap();
        assert!((g - 14.85e6).abs() < 0.01e6, "{g}");
        assert_eq!(purcell_coupling(0.0, 147e6).unwrap(), 0.0);
        assert!((4.0 * 14.85e6f64.powi(2) / 147e6 - 6.00e6).abs() < 0.01e6);
        assert!(purcell_coupling(1.0, 0.0).is_err());
    }

    #[test]
    fn dispersive_examples() {
        let delta = 4.190e9 - 3.976e9;
        assert!((dispersive_shift(14.85e6, delta).unwrap() - 1.03e6).abs() < 0.005e6);
        assert!((dispersive_shift(23.72e6, delta).unwrap() - 2.63e6).abs() < 0.005e6);
        let a = dispersive_shift(3e6, delta).unwrap();
        assert!((dispersive_shift(6e6, delta).unwrap() - 4.0 * a).abs() < 1e-9);
        assert!(dispersive_shift(1.0, 0.0).is_err());
    }

    #[test]
    fn phase_examples() {
        assert!((dispersive_phase(1.00e6, 200e-9).unwrap() / PI - 0.40).abs() < 1e-12);
        assert!((dispersive_phase(2.63e6, 190e-9).unwrap() / PI - 0.9994).abs() < 1e-4);
        assert_eq!(dispersive_phase(2.63e6, 0.0).unwrap(), 0.0);
        assert!(dispersive_phase(1.0, -1.0).is_err());
    }

    #[test]
    fn detuned_leakage_for_ramsey_parameters() {
        let r = detuned_purcell_rate(23.72e6, 147e6, 214e6);
        assert!((r - 1.615e6).abs() < 0.01e6, "{r}");
        // on resonance it reduces to the Purcell relation
        assert!((detuned_purcell_rate(14.85e6, 147e6, 0.0) - 6.0e6).abs() < 0.01e6);
    }

    fn fringe(c: f64, a: f64, p0: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let x = TWO_PI * k as f64 / n as f64;
                (x, c + a * (x - p0).cos())
            })
            .collect()
    }

    #[test]
    fn exact_cosine_recovered() {
        let f = fit_cosine(&fringe(0.4, 0.3, 1.2, 16)).unwrap();
        assert!((f.offset - 0.4).abs() < 1e-9);
        assert!((f.amplitude - 0.3).abs() < 1e-9);
        assert!((f.phase0 - 1.2).abs() < 1e-9);
        assert!((f.visibility - 0.75).abs() < 1e-9);
        assert!(f.residual_norm < 1e-9);
    }

    #[test]
    fn cosine_fit_rejects_bad_sampling() {
        assert!(fit_cosine(&fringe(0.4, 0.3, 1.2, 4)).is_err());
        let same: Vec<_> = (0..6).map(|_| (0.3, 1.0)).collect();
        assert!(matches!(fit_cosine(&same), Err(Error::Degenerate(_))));
    }

    /// Box–Muller from the uniform generator.
    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
    }

    #[test]
    fn noisy_cosine_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<_> = fringe(0.5, 0.25, 0.7, 36).into_iter().map(|(x, y)| (x, y + 0.01 * gauss(&mut rng))).collect();
        let f = fit_cosine(&s).unwrap();
        assert!((f.phase0 - 0.7).abs() < 0.01 * PI);
        assert!(f.variance[2] > 0.0);
    }

    #[test]
    fn exponential_exact() {
        let s: Vec<_> = (1..=4).map(|n| (n as f64 * 1.035e-6, 0.8 * (-(n as f64) * 1.035e-6 / 1.5e-6).exp())).collect();
        let f = fit_exponential_decay(&s).unwrap();
        assert!((f.amplitude - 0.8).abs() < 1e-9);
        assert!((f.decay_time - 1.5e-6).abs() < 1e-9 * 1.5e-6);
        assert!((1.0 / (3863.0 * f.decay_time) - 172.6).abs() < 0.05);
    }

    #[test]
    fn exponential_rejects_bad_input() {
        assert!(fit_exponential_decay(&[(0.0, 1.0), (1.0, 0.5)]).is_err());
        assert!(fit_exponential_decay(&[(0.0, 1.0), (1.0, 0.0), (2.0, 0.1)]).is_err());
        assert!(fit_exponential_decay(&[(1.0, 1.0), (1.0, 0.5), (1.0, 0.2)]).is_err());
    }
}
