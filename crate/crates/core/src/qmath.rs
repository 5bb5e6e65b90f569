//! Dense complex linear algebra and a fixed-step Lindblad integrator for
//! Hilbert spaces of one or two qubits.
//!
//! Conventions: ħ = 1, rates and frequencies in rad/s, single-qubit basis
//! {|g⟩, |e⟩} with |g⟩ first, two-qubit basis {|gg⟩, |ge⟩, |eg⟩, |ee⟩}.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::{invalid, Error, Result};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest Hilbert space the integrator accepts.
pub const MAX_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    m: CMatrix,
}

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.nrows() == 0 {
            return Err(invalid("dim", "operator dimension must be positive"));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("entries", "operator entries must be finite"));
        }
        Ok(Self { m })
    }

    pub fn from_row_slice(dim: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        Self::new(CMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = entries.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_row_slice(dim, &c)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: CMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: CMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.m[(r, c)]
    }

    pub fn dagger(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { m: &self.m * s }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|r| (0..n).all(|c| (self.m[(r, c)] - self.m[(c, r)].conj()).norm() <= tol))
    }

    /// |g⟩⟨e|, lowers |e⟩ to |g⟩.
    pub fn sigma_minus() -> Self {
        Self { m: CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]) }
    }

    pub fn sigma_plus() -> Self {
        Self::sigma_minus().dagger()
    }

    pub fn sigma_x() -> Self {
        Self { m: CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]) }
    }

    pub fn sigma_y() -> Self {
        Self { m: CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]) }
    }

    /// diag(+1, −1) in the {|g⟩, |e⟩} basis.
    pub fn sigma_z() -> Self {
        Self { m: CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]) }
    }

    /// |e⟩⟨e|
    pub fn proj_e() -> Self {
        Self { m: CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]) }
    }

    /// The four Paulis in the order I, X, Y, Z.
    pub fn paulis() -> [Self; 4] {
        [Self::identity(2), Self::sigma_x(), Self::sigma_y(), Self::sigma_z()]
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self { m: &self.m * &other.m })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self { m: &self.m + &other.m })
    }
}

impl Mul for &Operator {
    type Output = Operator;
    /// Panics on mismatched dimensions; use `try_mul` for fallible composition.
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator dimensions must match")
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator dimensions must match")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.check_same_dim(rhs).expect("operator dimensions must match");
        Operator { m: &self.m - &rhs.m }
    }
}

/// Kronecker product, first factor as the slow index.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator { m: a.m.kronecker(&b.m) }
}

/// Embeds a single-qubit operator on qubit `node` (1 or 2) of a pair.
pub fn on_qubit(op: &Operator, node: usize) -> Operator {
    let id = Operator::identity(op.dim());
    if node == 1 {
        kron(op, &id)
    } else {
        kron(&id, op)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const EIGEN_TOL: f64 = 1e-9;

impl DensityMatrix {
    /// Validating constructor: Hermitian, unit trace, positive semidefinite.
    pub fn new(m: CMatrix) -> Result<Self> {
        let op = Operator::new(m)?;
        if !op.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::NotHermitian);
        }
        let rho = Self { m: op.m };
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(invalid("rho", alloc::format!("trace {tr} differs from 1")));
        }
        let lmin = rho.min_eigenvalue();
        if lmin < -EIGEN_TOL {
            return Err(invalid("rho", alloc::format!("negative eigenvalue {lmin}")));
        }
        Ok(rho)
    }

    /// Wraps a matrix that the caller has already checked or will check.
    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self { m }
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalised) state vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(invalid("psi", "state vector must have positive finite norm"));
        }
        let n = psi.len();
        let m = CMatrix::from_fn(n, n, |r, c| psi[r] * psi[c].conj() / norm2);
        Ok(Self { m })
    }

    /// Computational basis state |k⟩⟨k|.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = ONE;
        Self { m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { m: CMatrix::identity(dim, dim) / Complex64::new(dim as f64, 0.0) }
    }

    pub fn product(a: &DensityMatrix, b: &DensityMatrix) -> Self {
        Self { m: a.m.kronecker(&b.m) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.m[(r, c)]
    }

    pub fn population(&self, k: usize) -> f64 {
        self.m[(k, k)].re
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(hermitized(&self.m));
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Nearest unit-trace PSD matrix in Frobenius norm: clip negative
    /// eigenvalues, then renormalise.
    pub fn project_psd(m: &CMatrix) -> Result<Self> {
        let eig = SymmetricEigen::new(hermitized(m));
        let n = m.nrows();
        let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("matrix has no positive spectrum"));
        }
        let mut out = CMatrix::zeros(n, n);
        for (k, &l) in clipped.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            out += (v * v.adjoint()) * Complex64::new(l / total, 0.0);
        }
        Ok(Self { m: out })
    }

    /// Trace distance ½‖a − b‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let d = &self.m - &other.m;
        let eig = SymmetricEigen::new(hermitized(&d));
        0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
    }

    /// Conjugates by a unitary: U ρ U†.
    pub fn transform(&self, u: &Operator) -> Self {
        Self { m: &u.m * &self.m * u.m.adjoint() }
    }
}

pub(crate) fn hermitized(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub type RateFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A Lindblad channel with a time-dependent rate (rad/s, ≥ 0).
pub struct CollapseChannel {
    op: Operator,
    rate: RateFn,
}

impl CollapseChannel {
    pub fn new(op: Operator, rate: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { op, rate: Box::new(rate) }
    }

    pub fn constant(op: Operator, rate: f64) -> Self {
        Self::new(op, move |_| rate)
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn rate(&self, t: f64) -> f64 {
        (self.rate)(t)
    }
}

impl core::fmt::Debug for CollapseChannel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CollapseChannel").field("op", &self.op).finish_non_exhaustive()
    }
}

/// Uniform time grid. The final step is shortened if (t1 − t0) is not a
/// multiple of dt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

pub const MAX_STEPS: f64 = 1e7;

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(t1 > t0) {
            return Err(invalid("t1", "end time must exceed start time"));
        }
        if !(dt > 0.0) {
            return Err(invalid("dt", "step must be positive"));
        }
        if (t1 - t0) / dt > MAX_STEPS {
            return Err(invalid("dt", "grid exceeds 1e7 steps"));
        }
        Ok(Self { t0, t1, dt })
    }

    pub fn steps(&self) -> usize {
        let n = (self.t1 - self.t0) / self.dt;
        // tolerate rounding in t1 = t0 + n·dt
        let r = n.round();
        if (n - r).abs() < 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.steps();
        (0..=n).map(|k| (self.t0 + k as f64 * self.dt).min(self.t1)).collect()
    }
}

fn check_dims(h: &Operator, channels: &[CollapseChannel], dim: usize) -> Result<()> {
    if h.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: h.dim() });
    }
    for ch in channels {
        if ch.op.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: ch.op.dim() });
        }
    }
    Ok(())
}

/// Right-hand side on a raw matrix (intermediate RK stages need not be
/// valid states). `ldl` caches L†L per channel.
fn rhs_raw(h: &Operator, channels: &[CollapseChannel], ldl: &[CMatrix], rho: &CMatrix, t: f64) -> Result<CMatrix> {
    let hr = &h.m * rho;
    let mut out = (&hr - hr.adjoint()) * (-I);
    // (Hρ)† = ρH since both are Hermitian, so −i(Hρ − ρH) = −i(Hρ − (Hρ)†)
    for (ch, ldl) in channels.iter().zip(ldl) {
        let g = ch.rate(t);
        if !(g >= 0.0) || !g.is_finite() {
            return Err(invalid("rate", alloc::format!("channel rate {g} at t = {t:e} is negative or not finite")));
        }
        if g == 0.0 {
            continue;
        }
        let l = &ch.op.m;
        let lrl = l * rho * l.adjoint();
        let anti = ldl * rho;
        out += (lrl - (&anti + anti.adjoint()) * Complex64::new(0.5, 0.0)) * Complex64::new(g, 0.0);
    }
    Ok(out)
}

/// dρ/dt = −i[H,ρ] + Σ_k γ_k(t)(L_k ρ L_k† − ½{L_k†L_k, ρ}).
pub fn lindblad_rhs(
    h: &dyn Fn(f64) -> Operator,
    channels: &[CollapseChannel],
    rho: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    let ht = h(t);
    check_dims(&ht, channels, rho.dim())?;
    let ldl: Vec<CMatrix> = channels.iter().map(|c| c.op.m.adjoint() * &c.op.m).collect();
    rhs_raw(&ht, channels, &ldl, &rho.m, t)
}

/// States of an integration, one per grid point including the start.
#[derive(Clone, Debug)]
pub struct MeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl MeTrajectory {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Tolerances checked on every stored state.
pub const STEP_TRACE_TOL: f64 = 1e-6;
pub const STEP_EIGEN_TOL: f64 = 1e-6;

/// A Hamiltonian plus jump operators with their rates already folded in
/// (L = √γ·op), for dynamics whose operators change shape in time.
#[derive(Clone, Debug)]
pub struct Generator {
    pub h: Operator,
    pub jumps: Vec<Operator>,
}

impl Generator {
    pub fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let hr = &self.h.m * rho;
        let mut out = (&hr - hr.adjoint()) * (-I);
        for l in &self.jumps {
            let l = &l.m;
            let ld = l.adjoint();
            let anti = (&ld * l) * rho;
            out += l * rho * ld - (&anti + anti.adjoint()) * Complex64::new(0.5, 0.0);
        }
        out
    }
}

/// Fixed-step RK4 with hermitization after every step.
pub fn integrate_me(
    h: &dyn Fn(f64) -> Operator,
    channels: &[CollapseChannel],
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<MeTrajectory> {
    let dim = rho0.dim();
    check_dims(&h(grid.t0), channels, dim)?;
    let ldl: Vec<CMatrix> = channels.iter().map(|c| c.op.m.adjoint() * &c.op.m).collect();
    let f = |t: f64, r: &CMatrix| rhs_raw(&h(t), channels, &ldl, r, t);
    integrate_rhs(&f, rho0, grid)
}

/// Same integrator driven by a time-dependent [`Generator`].
pub fn integrate_generator(
    gen: &dyn Fn(f64) -> Result<Generator>,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<MeTrajectory> {
    let g0 = gen(grid.t0)?;
    check_dims(&g0.h, &[], rho0.dim())?;
    for l in &g0.jumps {
        if l.dim() != rho0.dim() {
            return Err(Error::DimensionMismatch { expected: rho0.dim(), got: l.dim() });
        }
    }
    let f = |t: f64, r: &CMatrix| Ok(gen(t)?.rhs(r));
    integrate_rhs(&f, rho0, grid)
}

fn integrate_rhs(
    f: &dyn Fn(f64, &CMatrix) -> Result<CMatrix>,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<MeTrajectory> {
    if rho0.dim() > MAX_DIM {
        return Err(invalid("dim", "Hilbert space above 64 is out of scope"));
    }
    let n = grid.steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut rho = rho0.m.clone();
    let mut t = grid.t0;
    times.push(t);
    states.push(rho0.clone());
    for k in 0..n {
        // grid times are recomputed, not accumulated, so they land exactly
        // on schedule boundaries placed at multiples of dt
        let next = (grid.t0 + (k + 1) as f64 * grid.dt).min(grid.t1);
        let dt = next - t;
        rho = rk4_step(f, t, &rho, dt)?;
        rho = hermitized(&rho);
        t = next;
        let state = DensityMatrix { m: rho.clone() };
        check_state(&state, t, grid.dt)?;
        times.push(t);
        states.push(state);
    }
    Ok(MeTrajectory { times, states })
}

pub(crate) fn check_state(state: &DensityMatrix, t: f64, dt: f64) -> Result<()> {
    if (state.trace() - 1.0).abs() > STEP_TRACE_TOL {
        return Err(Error::InvariantViolation { t, what: "trace drifted from 1", suggested_dt: dt / 4.0 });
    }
    if state.min_eigenvalue() < -STEP_EIGEN_TOL {
        return Err(Error::InvariantViolation { t, what: "negative eigenvalue", suggested_dt: dt / 4.0 });
    }
    Ok(())
}

/// Relative offset at which the last RK4 stage samples the coefficients,
/// so a switch exactly at t + dt is seen from the left.
pub(crate) const LEFT_LIMIT: f64 = 1e-9;

/// Classical RK4 step for a matrix ODE. Coefficients are taken as right
/// limits at t and left limits at t + dt.
pub fn rk4_step(
    f: &dyn Fn(f64, &CMatrix) -> Result<CMatrix>,
    t: f64,
    y: &CMatrix,
    dt: f64,
) -> Result<CMatrix> {
    let h = Complex64::new(dt, 0.0);
    let half = Complex64::new(dt / 2.0, 0.0);
    let k1 = f(t, y)?;
    let k2 = f(t + dt / 2.0, &(y + &k1 * half))?;
    let k3 = f(t + dt / 2.0, &(y + &k2 * half))?;
    let k4 = f(t + dt * (1.0 - LEFT_LIMIT), &(y + &k3 * h))?;
    Ok(y + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(dt / 6.0, 0.0))
}

/// Tr(op·ρ) for Hermitian `op`.
pub fn expect(op: &Operator, rho: &DensityMatrix) -> Result<f64> {
    if op.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: op.dim() });
    }
    if !op.is_hermitian(1e-12) {
        return Err(Error::NotHermitian);
    }
    Ok((&op.m * &rho.m).trace().re)
}

/// Reduced state of qubit `keep` (1 or 2) of a two-qubit state.
pub fn partial_trace(rho: &DensityMatrix, keep: usize) -> Result<DensityMatrix> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    if keep != 1 && keep != 2 {
        return Err(invalid("keep", "node index must be 1 or 2"));
    }
    let mut m = CMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            let mut s = ZERO;
            for k in 0..2 {
                s += if keep == 1 { rho.m[(2 * a + k, 2 * b + k)] } else { rho.m[(2 * k + a, 2 * k + b)] };
            }
            m[(a, b)] = s;
        }
    }
    Ok(DensityMatrix { m })
}

/// Pure dephasing rate Γφ = 1/T2 − 1/(2T1), clamped at zero.
pub fn pure_dephasing_rate(t1: f64, t2: f64) -> f64 {
    let g = 1.0 / t2 - 1.0 / (2.0 * t1);
    if g > 0.0 {
        g
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn kron_identity_and_ordering() {
        let id4 = kron(&Operator::identity(2), &Operator::identity(2));
        assert_eq!(id4, Operator::identity(4));

        let x1 = kron(&Operator::sigma_x(), &Operator::identity(2));
        let gg = DensityMatrix::basis(4, 0);
        let out = gg.transform(&x1);
        assert!(close(out.population(2), 1.0, 1e-15), "σx on the first factor maps |gg⟩ to |eg⟩");

        let zz = kron(&Operator::sigma_z(), &Operator::sigma_z());
        let diag: Vec<f64> = (0..4).map(|k| zz.get(k, k).re).collect();
        assert_eq!(diag, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn decay_rhs_matches_analytic_rate() {
        let t1 = 51e-6;
        let ch = [CollapseChannel::constant(Operator::sigma_minus(), 1.0 / t1)];
        let rho = DensityMatrix::basis(2, 1);
        let d = lindblad_rhs(&|_| Operator::zeros(2), &ch, &rho, 0.0).unwrap();
        assert!(close(d[(1, 1)].re, -1.0 / t1, 1e-9));
        assert!(close(d[(0, 0)].re, 1.0 / t1, 1e-9));
    }

    #[test]
    fn rhs_is_traceless() {
        let h = |_t: f64| kron(&Operator::sigma_x(), &Operator::sigma_y()).scale_re(3.0e7);
        let ch = [
            CollapseChannel::constant(on_qubit(&Operator::sigma_minus(), 1), 1e6),
            CollapseChannel::constant(on_qubit(&Operator::sigma_z(), 2), 2e5),
        ];
        let psi = [c(0.3), Complex64::new(0.1, 0.7), c(-0.4), Complex64::new(0.2, -0.1)];
        let rho = DensityMatrix::pure(&psi).unwrap();
        let d = lindblad_rhs(&h, &ch, &rho, 0.0).unwrap();
        assert!(d.trace().norm() < 1e-12 * 3.0e7);
    }

    #[test]
    fn rhs_rejects_dimension_mismatch() {
        let ch = [CollapseChannel::constant(Operator::sigma_minus(), 1.0)];
        let rho = DensityMatrix::basis(4, 0);
        assert!(matches!(
            lindblad_rhs(&|_| Operator::zeros(4), &ch, &rho, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unitary_limit_rotates_coherence() {
        let delta = crate::TWO_PI * 1e6;
        let h = move |_t: f64| Operator::sigma_z().scale_re(delta / 2.0);
        let plus = DensityMatrix::pure(&[c(1.0), c(1.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 250e-9, 1e-9).unwrap();
        let tr = integrate_me(&h, &[], &plus, &grid).unwrap();
        let end = tr.last();
        // ρ_ge picks up e^{-iΔt}; a quarter period turns 1/2 into -i/2
        assert!((end.get(0, 1) - Complex64::new(0.0, -0.5)).norm() < 1e-9);
        for s in &tr.states {
            assert!(close(s.get(0, 1).norm(), 0.5, 1e-9));
        }
    }

    #[test]
    fn t1_decay_reaches_one_over_e() {
        let t1 = 51e-6;
        let ch = [CollapseChannel::constant(Operator::sigma_minus(), 1.0 / t1)];
        let grid = TimeGrid::new(0.0, t1, 1e-8).unwrap();
        let tr = integrate_me(&|_| Operator::zeros(2), &ch, &DensityMatrix::basis(2, 1), &grid).unwrap();
        assert!(close(tr.last().population(1), (-1.0f64).exp(), 1e-6));
    }

    #[test]
    fn no_dynamics_is_identity() {
        let rho = DensityMatrix::pure(&[c(0.6), Complex64::new(0.0, 0.8)]).unwrap();
        let grid = TimeGrid::new(0.0, 1e-6, 1e-9).unwrap();
        let tr = integrate_me(&|_| Operator::zeros(2), &[], &rho, &grid).unwrap();
        assert_eq!(tr.last(), &rho);
    }

    #[test]
    fn ramsey_matches_closed_form() {
        let (t1, t2) = (51e-6, 0.79e-6);
        let gphi = pure_dephasing_rate(t1, t2);
        let delta = crate::TWO_PI * 1e6;
        let h = move |_t: f64| Operator::sigma_z().scale_re(delta / 2.0);
        let ch = [
            CollapseChannel::constant(Operator::sigma_minus(), 1.0 / t1),
            CollapseChannel::constant(Operator::sigma_z(), gphi / 2.0),
        ];
        let plus = DensityMatrix::pure(&[c(1.0), c(1.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 2e-6, 1e-9).unwrap();
        let tr = integrate_me(&h, &ch, &plus, &grid).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states).step_by(97) {
            let env = (-t / (2.0 * t1) - gphi * t).exp();
            let want = Complex64::from_polar(0.5 * env, -delta * t);
            assert!((s.get(0, 1) - want).norm() < 1e-6, "t = {t}");
            assert!(close(s.population(1), 0.5 * (-t / t1).exp(), 1e-6));
        }
        // total coherence decay rate is 1/T2
        assert!(close(1.0 / (2.0 * t1) + gphi, 1.0 / t2, 1e-6));
    }

    #[test]
    fn dephasing_rate_clamps() {
        assert_eq!(pure_dephasing_rate(1e-6, 3e-6), 0.0);
    }

    #[test]
    fn expect_values() {
        let e = DensityMatrix::basis(2, 1);
        assert!(close(expect(&Operator::proj_e(), &e).unwrap(), 1.0, 1e-15));
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(close(expect(&Operator::sigma_z(), &mixed).unwrap(), 0.0, 1e-15));
        let s = c(core::f64::consts::FRAC_1_SQRT_2);
        let bell = DensityMatrix::pure(&[c(0.0), s, s, c(0.0)]).unwrap();
        let pee = kron(&Operator::proj_e(), &Operator::proj_e());
        assert!(close(expect(&pee, &bell).unwrap(), 0.0, 1e-15));
        assert_eq!(expect(&Operator::sigma_minus(), &e), Err(Error::NotHermitian));
    }

    #[test]
    fn partial_trace_cases() {
        let a = DensityMatrix::pure(&[c(0.6), Complex64::new(0.0, 0.8)]).unwrap();
        let b = DensityMatrix::maximally_mixed(2);
        let ab = DensityMatrix::product(&a, &b);
        let ra = partial_trace(&ab, 1).unwrap();
        assert!((ra.matrix() - a.matrix()).norm() < 1e-12);
        let rb = partial_trace(&ab, 2).unwrap();
        assert!((rb.matrix() - b.matrix()).norm() < 1e-12);

        let s = c(core::f64::consts::FRAC_1_SQRT_2);
        let bell = DensityMatrix::pure(&[c(0.0), s, s, c(0.0)]).unwrap();
        for keep in [1, 2] {
            let r = partial_trace(&bell, keep).unwrap();
            assert!((r.matrix() - DensityMatrix::maximally_mixed(2).matrix()).norm() < 1e-12);
        }

        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.4), c(0.1), c(0.3), c(0.2)]));
        let rho = DensityMatrix::new(diag).unwrap();
        assert!(close(partial_trace(&rho, 1).unwrap().population(1), 0.5, 1e-15));
        assert!(partial_trace(&DensityMatrix::basis(2, 0), 1).is_err());
    }

    #[test]
    fn density_validation() {
        let bad = CMatrix::from_row_slice(2, 2, &[c(0.5), c(0.7), c(0.7), c(0.5)]);
        assert!(DensityMatrix::new(bad.clone()).is_err());
        let fixed = DensityMatrix::project_psd(&bad).unwrap();
        assert!(fixed.min_eigenvalue() > -1e-12);
        assert!(close(fixed.trace(), 1.0, 1e-12));
    }

    #[test]
    fn grid_guards() {
        assert!(TimeGrid::new(1.0, 0.0, 1e-9).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1e-8).is_err());
        assert_eq!(TimeGrid::new(0.0, 1e-6, 1e-9).unwrap().steps(), 1000);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn state(amps: &[(f64, f64)]) -> Option<DensityMatrix> {
            let psi: Vec<Complex64> = amps.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            if n < 1e-6 {
                return None;
            }
            let psi: Vec<Complex64> = psi.iter().map(|z| z / n.sqrt()).collect();
            DensityMatrix::pure(&psi).ok()
        }

        proptest! {
            #[test]
            fn lindblad_flow_keeps_a_valid_state(
                amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
                g1 in 0.0f64..5e6,
                g2 in 0.0f64..5e6,
                gphi in 0.0f64..5e6,
                w in -3e7f64..3e7,
                j in 0.0f64..2e7,
            ) {
                let Some(rho0) = state(&amps) else { return Ok(()) };
                let flip = &kron(&Operator::sigma_plus(), &Operator::sigma_minus())
                    + &kron(&Operator::sigma_minus(), &Operator::sigma_plus());
                let h = &on_qubit(&Operator::sigma_z(), 1).scale_re(w / 2.0) + &flip.scale_re(j);
                let channels = [
                    CollapseChannel::constant(on_qubit(&Operator::sigma_minus(), 1), g1),
                    CollapseChannel::constant(on_qubit(&Operator::sigma_minus(), 2), g2),
                    CollapseChannel::constant(on_qubit(&Operator::sigma_z(), 1), gphi / 2.0),
                ];
                let grid = TimeGrid::new(0.0, 2e-7, 1e-9).unwrap();
                let traj = integrate_me(&|_| h.clone(), &channels, &rho0, &grid).unwrap();
                for r in &traj.states {
                    prop_assert!((r.trace() - 1.0).abs() < 1e-9);
                    prop_assert!(r.min_eigenvalue() > -1e-9);
                    prop_assert!((r.matrix() - r.matrix().adjoint()).norm() < 1e-12);
                }
            }

            #[test]
            fn partial_trace_keeps_unit_trace(amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)) {
                let Some(rho) = state(&amps) else { return Ok(()) };
                for keep in [1, 2] {
                    let r = partial_trace(&rho, keep).unwrap();
                    prop_assert!((r.trace() - 1.0).abs() < 1e-12);
                    prop_assert!(r.min_eigenvalue() > -1e-12);
                }
            }
        }
    }
}
