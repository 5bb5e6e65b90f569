//! P-matrix model of the unidirectional transducer: a double-electrode IDT
//! with a reflective grating behind it.
//!
//! Port 0 is the acoustic port on the left, port 1 on the right, port 2 is
//! electrical. The mirror sits on the left, so "forward" means rightwards,
//! into the channel. Acoustic amplitudes are power normalised; with the
//! reciprocity convention P₃ᵢ = −2·Pᵢ₃ a lossless element satisfies
//! |b|² − |a|² = Re(V̄·I).

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::device::{udt, SAW_VELOCITY};
use crate::{invalid, Error, Result, TWO_PI};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PMatrix(pub [[Complex64; 3]; 3]);

impl PMatrix {
    /// Free propagation over `length` at wavenumber `k`.
    pub fn propagation(k: f64, length: f64) -> Self {
        let e = Complex64::from_polar(1.0, -k * length);
        let mut p = [[ZERO; 3]; 3];
        p[0][1] = e;
        p[1][0] = e;
        PMatrix(p)
    }

    /// Thin reflector; `r` must be purely imaginary for the element to be
    /// lossless.
    pub fn reflector(r: Complex64) -> Self {
        let t = Complex64::new((1.0 - r.norm_sqr()).max(0.0).sqrt(), 0.0);
        let mut p = [[ZERO; 3]; 3];
        p[0][0] = r;
        p[1][1] = r;
        p[0][1] = t;
        p[1][0] = t;
        PMatrix(p)
    }

    /// Point source of strength β and polarity ±1.
    pub fn source(beta: f64, polarity: f64) -> Self {
        let mut p = [[ZERO; 3]; 3];
        p[0][1] = ONE;
        p[1][0] = ONE;
        p[0][2] = I * (beta * polarity);
        p[1][2] = I * (beta * polarity);
        p[2][0] = I * (-2.0 * beta * polarity);
        p[2][1] = I * (-2.0 * beta * polarity);
        p[2][2] = Complex64::new(2.0 * beta * beta, 0.0);
        PMatrix(p)
    }

    /// `self` on the left, `right` on the right, sharing the electrical port.
    pub fn cascade(&self, right: &PMatrix) -> Self {
        let a = &self.0;
        let b = &right.0;
        let den = ONE - a[1][1] * b[0][0];
        // x: wave travelling right across the junction, y: travelling left,
        // both as linear forms in (a_left, a_right, V)
        let cx = [a[1][0] / den, a[1][1] * b[0][1] / den, (a[1][1] * b[0][2] + a[1][2]) / den];
        let cy = [b[0][0] * cx[0], b[0][0] * cx[1] + b[0][1], b[0][0] * cx[2] + b[0][2]];
        let mut p = [[ZERO; 3]; 3];
        let base0 = [a[0][0], ZERO, a[0][2]];
        let base1 = [ZERO, b[1][1], b[1][2]];
        let base2 = [a[2][0], b[2][1], a[2][2] + b[2][2]];
        for c in 0..3 {
            p[0][c] = base0[c] + a[0][1] * cy[c];
            p[1][c] = base1[c] + b[1][0] * cx[c];
            p[2][c] = base2[c] + a[2][1] * cy[c] + b[2][0] * cx[c];
        }
        PMatrix(p)
    }

    /// `n`-fold cascade by repeated squaring.
    pub fn power(&self, mut n: usize) -> Self {
        assert!(n > 0);
        let mut acc: Option<PMatrix> = None;
        let mut base = *self;
        while n > 0 {
            if n & 1 == 1 {
                acc = Some(match acc {
                    None => base,
                    Some(a) => a.cascade(&base),
                });
            }
            n >>= 1;
            if n > 0 {
                base = base.cascade(&base);
            }
        }
        acc.unwrap_or(base)
    }

    /// Largest singular value of the 2×2 acoustic block.
    pub fn acoustic_norm(&self) -> f64 {
        let p = &self.0;
        let (a, b, c, d) = (p[0][0], p[0][1], p[1][0], p[1][1]);
        // eigenvalues of AᴴA = [[x, z], [z*, y]], in a form without cancellation
        let x = a.norm_sqr() + c.norm_sqr();
        let y = b.norm_sqr() + d.norm_sqr();
        let z = a.conj() * b + c.conj() * d;
        ((x + y) / 2.0 + ((x - y) / 2.0).hypot(z.norm())).sqrt()
    }

    /// Largest violation of P₁₂ = P₂₁, P₃₁ = −2P₁₃, P₃₂ = −2P₂₃.
    pub fn reciprocity_error(&self) -> f64 {
        let p = &self.0;
        let e1 = (p[0][1] - p[1][0]).norm();
        let e2 = (p[2][0] + p[0][2] * 2.0).norm();
        let e3 = (p[2][1] + p[1][2] * 2.0).norm();
        e1.max(e2).max(e3)
    }

    /// |P₁₃|² + |P₂₃|² − Re P₃₃: radiated power minus delivered power per |V|².
    pub fn power_balance_error(&self) -> f64 {
        let p = &self.0;
        (p[0][2].norm_sqr() + p[1][2].norm_sqr() - p[2][2].re).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdtParams {
    pub cells: usize,
    pub wavelength: f64,
    pub aperture: f64,
    pub metallization: f64,
    /// Per-electrode reflectivity.
    pub reflectivity: Complex64,
    /// Piezoelectric coupling Δv/v; sets the transduction strength.
    pub dv_v: f64,
    pub velocity: f64,
}

impl Default for IdtParams {
    fn default() -> Self {
        Self {
            cells: udt::IDT_CELLS,
            wavelength: udt::IDT_WAVELENGTH,
            aperture: udt::IDT_APERTURE,
            metallization: udt::IDT_METALLIZATION,
            reflectivity: Complex64::new(0.0, -udt::IDT_REFLECTIVITY),
            dv_v: udt::IDT_DV_V,
            velocity: SAW_VELOCITY,
        }
    }
}

impl IdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(invalid("cells", "need at least one cell"));
        }
        if !(self.metallization > 0.0 && self.metallization < 1.0) {
            return Err(invalid("metallization", "must lie in (0, 1)"));
        }
        check_common(self.wavelength, self.velocity, self.reflectivity)?;
        if !(self.dv_v > 0.0) {
            return Err(invalid("dv_v", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MirrorParams {
    pub electrodes: usize,
    pub wavelength: f64,
    pub reflectivity: Complex64,
    /// Recorded only; the grating is modelled at `velocity`.
    pub dv_v: f64,
    pub velocity: f64,
}

impl Default for MirrorParams {
    fn default() -> Self {
        Self {
            electrodes: udt::MIRROR_ELECTRODES,
            wavelength: udt::MIRROR_WAVELENGTH,
            reflectivity: Complex64::new(0.0, -udt::MIRROR_REFLECTIVITY),
            dv_v: udt::MIRROR_DV_V,
            velocity: udt::MIRROR_VELOCITY,
        }
    }
}

impl MirrorParams {
    pub fn validate(&self) -> Result<()> {
        if self.electrodes == 0 {
            return Err(invalid("electrodes", "need at least one electrode"));
        }
        check_common(self.wavelength, self.velocity, self.reflectivity)
    }
}

fn check_common(wavelength: f64, velocity: f64, r: Complex64) -> Result<()> {
    if !(wavelength > 0.0) || !(velocity > 0.0) {
        return Err(invalid("wavelength", "wavelength and velocity must be positive"));
    }
    if r.norm() > 1.0 {
        return Err(invalid("reflectivity", "magnitude exceeds 1"));
    }
    Ok(())
}

fn check_f(f: f64) -> Result<()> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(invalid("f", "frequency must be positive"));
    }
    Ok(())
}

/// Double-electrode IDT: per cell, four electrodes at λ/8 spacing with two
/// sources of opposite polarity λ/2 apart.
pub fn idt_pmatrix(p: &IdtParams, f: f64) -> Result<PMatrix> {
    check_f(f)?;
    p.validate()?;
    let k = TWO_PI * f / p.velocity;
    let lam = p.wavelength;
    let beta = p.dv_v.sqrt() / 4.0;
    let r = PMatrix::reflector(p.reflectivity);
    let seq = [
        r,
        PMatrix::propagation(k, lam / 8.0),
        PMatrix::source(beta, 1.0),
        PMatrix::propagation(k, lam / 8.0),
        r,
        PMatrix::propagation(k, lam / 4.0),
        r,
        PMatrix::propagation(k, lam / 8.0),
        PMatrix::source(beta, -1.0),
        PMatrix::propagation(k, lam / 8.0),
        r,
        PMatrix::propagation(k, lam / 8.0),
    ];
    let mut cell = PMatrix::propagation(k, lam / 8.0);
    for e in &seq {
        cell = cell.cascade(e);
    }
    Ok(cell.power(p.cells))
}

/// Uniform grating with electrode pitch λ/2.
pub fn mirror_pmatrix(p: &MirrorParams, f: f64) -> Result<PMatrix> {
    check_f(f)?;
    p.validate()?;
    let k = TWO_PI * f / p.velocity;
    let half = PMatrix::propagation(k, p.wavelength / 4.0);
    let el = half.cascade(&PMatrix::reflector(p.reflectivity)).cascade(&half);
    Ok(el.power(p.electrodes))
}

/// Mirror, gap `d_eff`, IDT.
pub fn udt_pmatrix(idt: &IdtParams, mirror: &MirrorParams, d_eff: f64, f: f64) -> Result<PMatrix> {
    if !(d_eff >= 0.0) {
        return Err(invalid("d_eff", "must be non-negative"));
    }
    let m = mirror_pmatrix(mirror, f)?;
    let i = idt_pmatrix(idt, f)?;
    let gap = PMatrix::propagation(TWO_PI * f / idt.velocity, d_eff);
    Ok(m.cascade(&gap).cascade(&i))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UdtPoint {
    pub frequency: f64,
    pub forward: Complex64,
    pub backward: Complex64,
    pub directivity_db: f64,
    /// Emission rate into the acoustic channel, rad/s.
    pub kappa_udt: f64,
    /// Channel-side reflection with the electrical port shorted.
    pub reflection: Complex64,
    /// Radiation conductance of the full transducer (model units).
    pub conductance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UdtResponse {
    pub points: Vec<UdtPoint>,
    /// Single-pole κ of the bare IDT, rad/s.
    pub kappa_ref: f64,
    /// Peak bare-IDT conductance, used to scale κ_UDT(f).
    pub g_ref: f64,
}

/// FWHM of the bare-IDT radiation conductance, as an angular rate.
pub fn kappa_udt_fit(idt: &IdtParams) -> Result<f64> {
    let f0 = idt.velocity / idt.wavelength;
    let n = 4001;
    let (lo, hi) = (0.9 * f0, 1.1 * f0);
    let step = (hi - lo) / (n - 1) as f64;
    let g: Vec<f64> =
        (0..n).map(|k| idt_pmatrix(idt, lo + k as f64 * step).map(|p| p.0[2][2].re)).collect::<Result<_>>()?;
    let (imax, gmax) = g.iter().copied().enumerate().fold((0, f64::MIN), |a, (i, x)| if x > a.1 { (i, x) } else { a });
    let half = gmax / 2.0;
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if g[i] < half {
                let w = (g[prev] - half) / (g[prev] - g[i]);
                return Some(lo + (prev as f64 + w * (i as f64 - prev as f64)) * step);
            }
            prev = i;
        }
        None
    };
    let right = cross(&mut (imax + 1..n)).ok_or(Error::Degenerate("conductance never drops to half maximum"))?;
    let left = cross(&mut (0..imax).rev()).ok_or(Error::Degenerate("conductance never drops to half maximum"))?;
    Ok(TWO_PI * (right - left))
}

pub fn udt_response(idt: &IdtParams, mirror: &MirrorParams, d_eff: f64, freqs: &[f64]) -> Result<UdtResponse> {
    if freqs.is_empty() {
        return Err(invalid("freqs", "empty frequency grid"));
    }
    if freqs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("freqs", "frequency grid must be increasing"));
    }
    let kappa_ref = kappa_udt_fit(idt)?;
    let f0 = idt.velocity / idt.wavelength;
    let g_ref = idt_pmatrix(idt, f0)?.0[2][2].re;
    let points = freqs
        .iter()
        .map(|&f| {
            let u = udt_pmatrix(idt, mirror, d_eff, f)?;
            let forward = u.0[1][2];
            let backward = u.0[0][2];
            let g = u.0[2][2].re;
            Ok(UdtPoint {
                frequency: f,
                forward,
                backward,
                directivity_db: 10.0 * (forward.norm_sqr() / backward.norm_sqr()).log10(),
                // a perfectly unidirectional UDT doubles the bare conductance
                kappa_udt: kappa_ref * g / (2.0 * g_ref),
                reflection: u.0[1][1],
                conductance: g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UdtResponse { points, kappa_ref, g_ref })
}

/// Evenly spaced grid helper.
pub fn frequency_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return alloc::vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// D = 1/(1 + 10^{−dB/10}).
pub fn fraction_from_db(db: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(-db / 10.0))
}

impl UdtResponse {
    fn bracket(&self, f: f64) -> Result<(usize, f64)> {
        let p = &self.points;
        let (first, last) = (p[0].frequency, p[p.len() - 1].frequency);
        if f < first || f > last {
            return Err(Error::OutOfGrid(f));
        }
        if p.len() == 1 {
            return Ok((0, 0.0));
        }
        let k = p.partition_point(|x| x.frequency <= f).clamp(1, p.len() - 1);
        let (a, b) = (p[k - 1].frequency, p[k].frequency);
        Ok((k - 1, (f - a) / (b - a)))
    }

    fn interp(&self, f: f64, g: impl Fn(&UdtPoint) -> f64) -> Result<f64> {
        let (k, w) = self.bracket(f)?;
        if w == 0.0 {
            return Ok(g(&self.points[k]));
        }
        Ok(g(&self.points[k]) * (1.0 - w) + g(&self.points[k + 1]) * w)
    }

    pub fn kappa_at(&self, f: f64) -> Result<f64> {
        self.interp(f, |p| p.kappa_udt)
    }

    pub fn directivity_db_at(&self, f: f64) -> Result<f64> {
        self.interp(f, |p| p.directivity_db)
    }

    pub fn reflection_at(&self, f: f64) -> Result<Complex64> {
        let re = self.interp(f, |p| p.reflection.re)?;
        let im = self.interp(f, |p| p.reflection.im)?;
        Ok(Complex64::new(re, im))
    }

    /// Deepest dip of κ_UDT relative to its constructive value inside
    /// [lo, hi], with the full width at half depth.
    pub fn find_notch(&self, lo: f64, hi: f64) -> Option<Notch> {
        let ratio: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.frequency >= lo && p.frequency <= hi)
            .map(|p| (p.frequency, p.kappa_udt / self.kappa_ref))
            .collect();
        if ratio.len() < 3 {
            return None;
        }
        let (imin, &(f_min, depth)) =
            ratio.iter().enumerate().min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(core::cmp::Ordering::Equal))?;
        if imin == 0 || imin == ratio.len() - 1 {
            return None;
        }
        let level = (1.0 + depth) / 2.0;
        let mut l = imin;
        while l > 0 && ratio[l].1 < level {
            l -= 1;
        }
        let mut r = imin;
        while r < ratio.len() - 1 && ratio[r].1 < level {
            r += 1;
        }
        Some(Notch { frequency: f_min, depth, width: ratio[r].0 - ratio[l].0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Notch {
    pub frequency: f64,
    /// κ_UDT at the notch over its constructive value.
    pub depth: f64,
    pub width: f64,
}

/// D = |forward|²/(|forward|² + |backward|²) at f (linear interpolation).
pub fn directivity_fraction(resp: &UdtResponse, f: f64) -> Result<f64> {
    resp.interp(f, |p| {
        let a = p.forward.norm_sqr();
        a / (a + p.backward.norm_sqr())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn elements_are_lossless_and_reciprocal() {
        let k = TWO_PI * 4e9 / SAW_VELOCITY;
        for p in [
            PMatrix::propagation(k, 0.3e-6),
            PMatrix::reflector(Complex64::new(0.0, -0.3)),
            PMatrix::source(0.2, -1.0),
        ] {
            assert!(p.reciprocity_error() < 1e-15);
            assert!(p.power_balance_error() < 1e-15);
            assert!(close(p.acoustic_norm(), 1.0, 1e-12));
        }
    }

    #[test]
    fn cascade_with_transparent_element_is_identity() {
        let a = PMatrix::source(0.3, 1.0).cascade(&PMatrix::reflector(Complex64::new(0.0, -0.2)));
        let id = PMatrix::propagation(0.0, 0.0);
        let b = a.cascade(&id);
        for r in 0..3 {
            for c in 0..3 {
                assert!((a.0[r][c] - b.0[r][c]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn power_and_cascade_agree() {
        let e = PMatrix::reflector(Complex64::new(0.0, -0.1)).cascade(&PMatrix::propagation(1.3, 1.0));
        let direct = e.cascade(&e).cascade(&e).cascade(&e).cascade(&e);
        let fast = e.power(5);
        for r in 0..3 {
            for c in 0..3 {
                assert!((direct.0[r][c] - fast.0[r][c]).norm() < 1e-12);
            }
        }
    }

    /// Energy balance |b|² − |a|² = Re(V̄ I) for arbitrary excitation.
    #[test]
    fn idt_energy_balance() {
        let idt = IdtParams::default();
        let p = idt_pmatrix(&idt, 3.95e9).unwrap();
        let a = [Complex64::new(0.3, -0.1), Complex64::new(-0.2, 0.5)];
        let v = Complex64::new(0.7, 0.4);
        let b0 = p.0[0][0] * a[0] + p.0[0][1] * a[1] + p.0[0][2] * v;
        let b1 = p.0[1][0] * a[0] + p.0[1][1] * a[1] + p.0[1][2] * v;
        let cur = p.0[2][0] * a[0] + p.0[2][1] * a[1] + p.0[2][2] * v;
        let lhs = b0.norm_sqr() + b1.norm_sqr() - a[0].norm_sqr() - a[1].norm_sqr();
        assert!(close(lhs, (v.conj() * cur).re, 1e-10));
    }

    #[test]
    fn bare_idt_is_symmetric_at_centre() {
        let idt = IdtParams::default();
        let f0 = idt.velocity / idt.wavelength;
        let p = idt_pmatrix(&idt, f0).unwrap();
        assert!(close(p.0[0][2].norm(), p.0[1][2].norm(), 1e-9 * p.0[0][2].norm()));
    }

    #[test]
    fn idt_conductance_peaks_in_band() {
        let idt = IdtParams::default();
        let fs = frequency_grid(3.7e9, 4.2e9, 1001);
        let (fpk, _) = fs
            .iter()
            .map(|&f| (f, idt_pmatrix(&idt, f).unwrap().0[2][2].re))
            .fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert!((3.87e9..=4.01e9).contains(&fpk), "{fpk}");
    }

    #[test]
    fn kappa_fit_near_transducer_rate() {
        let k = kappa_udt_fit(&IdtParams::default()).unwrap() / TWO_PI;
        assert!(close(k, 147e6, 3e6), "{k}");
    }

    /// Uniform lossless grating: |Γ| at the Bragg frequency is tanh(N·|r|).
    #[test]
    fn grating_stopband_follows_tanh() {
        for (n, r) in [(10usize, 0.05), (40, 0.02), (488, 0.12)] {
            let m = MirrorParams { electrodes: n, reflectivity: Complex64::new(0.0, -r), ..Default::default() };
            let fb = m.velocity / m.wavelength;
            let g = mirror_pmatrix(&m, fb).unwrap().0[1][1].norm();
            let want = (n as f64 * r.atanh()).tanh();
            assert!(close(g, want, 1e-9), "n={n}: {g} vs {want}");
        }
    }

    #[test]
    fn strong_grating_reflects_in_band() {
        let m = MirrorParams { reflectivity: Complex64::new(0.0, -0.60), ..Default::default() };
        let fb = m.velocity / m.wavelength;
        assert!(mirror_pmatrix(&m, fb).unwrap().0[1][1].norm() > 0.99);
        let d = MirrorParams::default();
        assert!(mirror_pmatrix(&d, fb).unwrap().0[1][1].norm() > 0.99);
    }

    // coupled-mode envelope κ/√(δ² − κ²) bounds the sidelobes
    #[test]
    fn grating_sidelobes_under_envelope() {
        let m = MirrorParams::default();
        let kappa = 2.0 * udt::MIRROR_REFLECTIVITY / m.wavelength;
        for f in [3.0e9, 3.3e9, 4.6e9, 5.0e9] {
            let p = mirror_pmatrix(&m, f).unwrap();
            let delta = TWO_PI * f / m.velocity - TWO_PI / m.wavelength;
            let env = kappa / (delta * delta - kappa * kappa).sqrt();
            assert!(p.0[1][1].norm() < 1.05 * env, "f={f}: {} vs {env}", p.0[1][1].norm());
            assert!((p.0[0][1].norm_sqr() + p.0[1][1].norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grating_phase_at_bragg() {
        for r in [0.05, 0.12, 0.6] {
            let m = MirrorParams { electrodes: 101, reflectivity: Complex64::new(0.0, -r), ..Default::default() };
            let fb = m.velocity / m.wavelength;
            let g = mirror_pmatrix(&m, fb).unwrap().0[1][1];
            // −i up to the half-period offset of the outermost half cell
            let arg = g.arg();
            let want = -core::f64::consts::FRAC_PI_2;
            let d = (arg - want + core::f64::consts::PI).rem_euclid(TWO_PI) - core::f64::consts::PI;
            assert!(d.abs() < 1e-6 || (d.abs() - core::f64::consts::PI).abs() < 1e-6, "r={r}: {arg}");
        }
    }

    #[test]
    fn weak_grating_follows_coupled_mode_theory() {
        let r = 0.02;
        let n = 150;
        let m = MirrorParams { electrodes: n, reflectivity: Complex64::new(0.0, -r), ..Default::default() };
        let p = m.wavelength / 2.0;
        let kappa = r / p;
        let len = n as f64 * p;
        for x in [-3.0, -1.7, -0.6, 0.0, 0.4, 0.9, 2.2] {
            let delta = x * kappa;
            let f = (delta + TWO_PI / m.wavelength) * m.velocity / TWO_PI;
            let want = if x.abs() < 1.0 {
                let s = (kappa * kappa - delta * delta).sqrt();
                let sh = (s * len).sinh();
                kappa * sh / (s * s * (s * len).cosh().powi(2) + delta * delta * sh * sh).sqrt()
            } else {
                let s = (delta * delta - kappa * kappa).sqrt();
                let sn = (s * len).sin();
                kappa * sn.abs() / (s * s * (s * len).cos().powi(2) + delta * delta * sn * sn).sqrt()
            };
            let got = mirror_pmatrix(&m, f).unwrap().0[1][1].norm();
            assert!((got - want).abs() < 0.02, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn fraction_from_directivity() {
        assert!(close(fraction_from_db(20.0), 0.990, 1e-3));
        assert!(close(fraction_from_db(0.0), 0.5, 1e-15));
    }

    #[test]
    fn response_interpolation_and_grid_guard() {
        let fs = frequency_grid(3.95e9, 4.0e9, 11);
        let r = udt_response(&IdtParams::default(), &MirrorParams::default(), udt::D_EFF, &fs).unwrap();
        assert!(matches!(directivity_fraction(&r, 4.2e9), Err(Error::OutOfGrid(_))));
        let d = directivity_fraction(&r, 3.976e9).unwrap();
        assert!(d >= 0.95, "{d}");
        for p in &r.points {
            assert!(p.kappa_udt >= 0.0);
            let want = 10.0 * (p.forward.norm_sqr() / p.backward.norm_sqr()).log10();
            assert!(close(p.directivity_db, want, 1e-12));
        }
    }

    #[test]
    fn default_unidirectional_band() {
        let fs = frequency_grid(3.7e9, 4.2e9, 1001);
        let r = udt_response(&IdtParams::default(), &MirrorParams::default(), udt::D_EFF, &fs).unwrap();
        let strong: Vec<f64> = r.points.iter().filter(|p| p.directivity_db > 20.0).map(|p| p.frequency).collect();
        let (lo, hi) = (strong[0], strong[strong.len() - 1]);
        assert!(close(lo, 3.87e9, 5e6) && close(hi, 4.01e9, 5e6), "{lo} {hi}");
        assert!(r.directivity_db_at(4.102e9).unwrap() < 3.0);
    }

    /// Width of the contiguous |Γ| > 0.9 region around the Bragg frequency.
    fn stopband_width(electrodes: usize) -> f64 {
        let m = MirrorParams { electrodes, ..MirrorParams::default() };
        let f0 = m.velocity / m.wavelength;
        let refl = |f: f64| mirror_pmatrix(&m, f).unwrap().0[1][1].norm() > 0.9;
        let step = 0.5e6;
        let edge = |dir: f64| (0..1000).take_while(|&k| refl(f0 + dir * k as f64 * step)).count() as f64 * step;
        edge(1.0) + edge(-1.0)
    }

    #[test]
    fn stopband_widens_then_settles_at_coupled_mode_width() {
        // widening holds while the peak reflectivity is still building up
        let w: Vec<f64> = [24, 32, 40, 48].into_iter().map(stopband_width).collect();
        assert!(w.windows(2).all(|p| p[1] > p[0]), "{w:?}");
        let m = MirrorParams::default();
        let cmt = 2.0 * m.reflectivity.norm() / core::f64::consts::PI * m.velocity / m.wavelength;
        let full = stopband_width(m.electrodes);
        assert!((full / cmt - 1.0).abs() < 0.03, "{full} vs {cmt}");
    }

    proptest::proptest! {
        #[test]
        fn udt_is_reciprocal_and_passive(f in 3.0e9f64..5.0e9, d in 0.0f64..1e-6) {
            let u = udt_pmatrix(&IdtParams::default(), &MirrorParams::default(), d, f).unwrap();
            proptest::prop_assert!(u.reciprocity_error() < 1e-9);
            proptest::prop_assert!(u.power_balance_error() < 1e-9);
            proptest::prop_assert!(u.acoustic_norm() <= 1.0 + 1e-9);
        }
    }
}
