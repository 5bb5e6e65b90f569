//! Readout correction, state and process tomography, entanglement metrics.
//!
//! Two-qubit probabilities are ordered {gg, ge, eg, ee}, i.e. index
//! 2·q1 + q2 with g = 0.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::device::VISIBILITY_PRINTED;
use crate::qmath::{kron, CMatrix, DensityMatrix, Operator};
use crate::{invalid, Error, Result};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

pub type ProbabilityVector = [f64; 4];

/// Condition numbers above this are refused by [`correct_readout`].
pub const MAX_CONDITION: f64 = 1e3;

/// Column-stochastic map from true to measured probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilityMatrix {
    m: [[f64; 4]; 4],
}

impl VisibilityMatrix {
    /// `m[measured][prepared]`; every column must sum to one.
    pub fn new(m: [[f64; 4]; 4]) -> Result<Self> {
        for c in 0..4 {
            let mut s = 0.0;
            for r in 0..4 {
                let x = m[r][c];
                if !(0.0..=1.0).contains(&x) {
                    return Err(invalid("visibility", "entries must lie in [0, 1]"));
                }
                s += x;
            }
            if (s - 1.0).abs() > 1e-6 {
                return Err(invalid("visibility", alloc::format!("column {c} sums to {s}")));
            }
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (k, row) in m.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        Self { m }
    }

    /// From a table whose rows are prepared states: transpose, then
    /// renormalise each column.
    pub fn from_printed(rows: [[f64; 4]; 4]) -> Result<Self> {
        let mut m = [[0.0; 4]; 4];
        for (prep, row) in rows.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) {
                return Err(invalid("visibility", "row with no weight"));
            }
            for (meas, &x) in row.iter().enumerate() {
                m[meas][prep] = x / s;
            }
        }
        Self::new(m)
    }

    /// The device's measured matrix.
    pub fn device() -> Self {
        Self::from_printed(VISIBILITY_PRINTED).expect("device table is valid")
    }

    pub fn entries(&self) -> [[f64; 4]; 4] {
        self.m
    }

    /// Tr V / 4.
    pub fn total_visibility(&self) -> f64 {
        (0..4).map(|k| self.m[k][k]).sum::<f64>() / 4.0
    }

    pub fn apply(&self, p: &ProbabilityVector) -> ProbabilityVector {
        let mut out = [0.0; 4];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|c| self.m[r][c] * p[c]).sum();
        }
        out
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(4, 4, |r, c| self.m[r][c])
    }

    /// 2-norm condition number.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix().singular_values();
        let max = sv.iter().copied().fold(0.0, f64::max);
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }
}

/// Trace/4 of a table as printed, before any renormalisation.
pub fn printed_total_visibility(rows: &[[f64; 4]; 4]) -> f64 {
    (0..4).map(|k| rows[k][k]).sum::<f64>() / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corrected {
    pub p: ProbabilityVector,
    /// Total negative weight removed before renormalising.
    pub clamped: f64,
}

/// V⁻¹·p, negatives clamped to zero, renormalised.
pub fn correct_readout(p: &ProbabilityVector, v: &VisibilityMatrix) -> Result<Corrected> {
    let cond = v.condition_number();
    if !(cond < MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let inv = v.matrix().try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let mut out = [0.0; 4];
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|c| inv[(r, c)] * p[c]).sum();
    }
    let clamped: f64 = out.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    if clamped > 0.0 {
        for x in out.iter_mut() {
            *x = x.max(0.0);
        }
        let s: f64 = out.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Degenerate("corrected probabilities vanish"));
        }
        for x in out.iter_mut() {
            *x /= s;
        }
    }
    Ok(Corrected { p: out, clamped })
}

/// P_e of qubit 1 (eg + ee) or qubit 2 (ge + ee).
pub fn marginal_pe(p: &ProbabilityVector, qubit: usize) -> Result<f64> {
    match qubit {
        1 => Ok(p[2] + p[3]),
        2 => Ok(p[1] + p[3]),
        _ => Err(invalid("qubit", "must be 1 or 2")),
    }
}

/// Multinomial sample of V·p, returned as frequencies.
pub fn sample_shots<R: Rng + ?Sized>(
    p: &ProbabilityVector,
    v: &VisibilityMatrix,
    n_shots: usize,
    rng: &mut R,
) -> Result<ProbabilityVector> {
    if n_shots == 0 {
        return Err(invalid("n_shots", "must be positive"));
    }
    let q = v.apply(p);
    let mut cdf = [0.0; 4];
    let mut acc = 0.0;
    for (c, x) in cdf.iter_mut().zip(q) {
        acc += x.max(0.0);
        *c = acc;
    }
    let mut counts = [0usize; 4];
    for _ in 0..n_shots {
        let u: f64 = rng.random::<f64>() * acc;
        let k = cdf.iter().position(|&c| u < c).unwrap_or(3);
        counts[k] += 1;
    }
    Ok(counts.map(|c| c as f64 / n_shots as f64))
}

/// Measurement axis of one qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn pauli_index(self) -> usize {
        match self {
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 3,
        }
    }
}

/// Projector onto the ±1 eigenspace of a Pauli; outcome 0 is +1.
fn projector(axis: Axis, outcome: usize) -> Operator {
    let p = &Operator::paulis()[axis.pauli_index()];
    let s = if outcome == 0 { 0.5 } else { -0.5 };
    &Operator::identity(2).scale_re(0.5) + &p.scale_re(s)
}

/// Outcome probabilities when measuring qubit 1 along `a` and qubit 2
/// along `b`, ordered like the computational basis (0 = +1 eigenvalue).
pub fn setting_probabilities(rho: &DensityMatrix, a: Axis, b: Axis) -> Result<ProbabilityVector> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let proj = kron(&projector(a, k >> 1), &projector(b, k & 1));
        *o = (proj.matrix() * rho.matrix()).trace().re;
    }
    Ok(out)
}

/// Probabilities of all nine settings, in the order of [`Axis::ALL`]² with
/// qubit 1 as the slow index.
pub fn all_settings(rho: &DensityMatrix) -> Result<Vec<ProbabilityVector>> {
    let mut out = Vec::with_capacity(9);
    for a in Axis::ALL {
        for b in Axis::ALL {
            out.push(setting_probabilities(rho, a, b)?);
        }
    }
    Ok(out)
}

/// ⟨P_i ⊗ P_j⟩, i, j ∈ {I, X, Y, Z}; `[0][0]` is 1.
pub type Correlators = [[f64; 4]; 4];

/// Correlators from the nine settings, each optionally readout-corrected.
/// Single-qubit terms are averaged over the settings that contain them.
pub fn correlators_from_settings(settings: &[ProbabilityVector], v: Option<&VisibilityMatrix>) -> Result<Correlators> {
    if settings.len() != 9 {
        return Err(invalid("settings", alloc::format!("expected 9 measurement settings, got {}", settings.len())));
    }
    let mut c = [[0.0; 4]; 4];
    let mut n1 = [0usize; 4];
    let mut n2 = [0usize; 4];
    c[0][0] = 1.0;
    for (s, raw) in settings.iter().enumerate() {
        let p = match v {
            Some(v) => correct_readout(raw, v)?.p,
            None => *raw,
        };
        let (a, b) = (Axis::ALL[s / 3].pauli_index(), Axis::ALL[s % 3].pauli_index());
        let sign = |k: usize, bit: usize| if (k >> bit) & 1 == 0 { 1.0 } else { -1.0 };
        let mut zz = 0.0;
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            zz += sign(k, 1) * sign(k, 0) * pk;
            z1 += sign(k, 1) * pk;
            z2 += sign(k, 0) * pk;
        }
        c[a][b] = zz;
        c[a][0] += z1;
        c[0][b] += z2;
        n1[a] += 1;
        n2[b] += 1;
    }
    for k in 1..4 {
        c[k][0] /= n1[k] as f64;
        c[0][k] /= n2[k] as f64;
    }
    Ok(c)
}

/// Exact correlators of a state.
pub fn correlators_of(rho: &DensityMatrix) -> Result<Correlators> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let p = Operator::paulis();
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (kron(&p[i], &p[j]).matrix() * rho.matrix()).trace().re;
        }
    }
    Ok(c)
}

/// ρ = ¼ Σ ⟨P_i⊗P_j⟩ P_i⊗P_j, then clipped to the nearest state.
pub fn state_tomography(c: &Correlators) -> Result<DensityMatrix> {
    let p = Operator::paulis();
    let mut m = CMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            m += kron(&p[i], &p[j]).matrix() * Complex64::new(c[i][j] / 4.0, 0.0);
        }
    }
    DensityMatrix::project_psd(&m)
}

/// The state an uncorrected tomography would report for `rho` when every
/// setting is read out through `v`.
pub fn measured_state(rho: &DensityMatrix, v: &VisibilityMatrix) -> Result<DensityMatrix> {
    let noisy: Vec<ProbabilityVector> = all_settings(rho)?.iter().map(|p| v.apply(p)).collect();
    state_tomography(&correlators_from_settings(&noisy, None)?)
}

/// Process matrix in the Pauli basis {I, X, Y, Z}.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiMatrix {
    m: CMatrix,
}

impl ChiMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != 4 || m.ncols() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: m.nrows() });
        }
        Ok(Self { m })
    }

    /// χ of the identity channel.
    pub fn identity() -> Self {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        Self { m }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.m[(r, c)]
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// Tr(χ·other).
    pub fn fidelity(&self, other: &ChiMatrix) -> f64 {
        (&self.m * &other.m).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.m + self.m.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Outputs for the inputs |g⟩, |e⟩, |+⟩, |+i⟩.
#[derive(Clone, Debug)]
pub struct ProcessData {
    pub g: DensityMatrix,
    pub e: DensityMatrix,
    pub plus: DensityMatrix,
    pub plus_i: DensityMatrix,
}

/// Input states of [`ProcessData`], in the same order.
pub fn process_inputs() -> [DensityMatrix; 4] {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    [
        DensityMatrix::basis(2, 0),
        DensityMatrix::basis(2, 1),
        DensityMatrix::pure(&[c(s, 0.0), c(s, 0.0)]).expect("normalised"),
        DensityMatrix::pure(&[c(s, 0.0), c(0.0, s)]).expect("normalised"),
    ]
}

/// χ from the four input/output pairs via the Choi matrix,
/// χ_mn = ⟨⟨P_m|J|P_n⟩⟩/4, then Hermitised and clipped to PSD.
pub fn process_tomography(d: &ProcessData) -> Result<ChiMatrix> {
    for r in [&d.g, &d.e, &d.plus, &d.plus_i] {
        if r.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: r.dim() });
        }
    }
    let i = Complex64::new(0.0, 1.0);
    let half = Complex64::new(0.5, 0.5);
    let e00 = d.g.matrix().clone();
    let e11 = d.e.matrix().clone();
    // E(|g⟩⟨e|) = E(+) + i·E(+i) − (1+i)/2·(E(g) + E(e))
    let e01 = d.plus.matrix() + d.plus_i.matrix() * i - (&e00 + &e11) * half;
    let e10 = e01.adjoint();
    let blocks = [[&e00, &e01], [&e10, &e11]];
    let mut choi = CMatrix::zeros(4, 4);
    for j in 0..2 {
        for k in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    choi[(2 * j + a, 2 * k + b)] = blocks[j][k][(a, b)];
                }
            }
        }
    }
    // |P⟩⟩ = Σ_j |j⟩ ⊗ P|j⟩
    let vecs: Vec<nalgebra::DVector<Complex64>> = Operator::paulis()
        .iter()
        .map(|p| nalgebra::DVector::from_fn(4, |idx, _| p.get(idx & 1, idx >> 1)))
        .collect();
    let mut chi = CMatrix::zeros(4, 4);
    for m in 0..4 {
        let jm = &choi * &vecs[m];
        for n in 0..4 {
            chi[(n, m)] = vecs[n].dotc(&jm) / Complex64::new(4.0, 0.0);
        }
    }
    let rho = DensityMatrix::project_psd(&chi)?;
    Ok(ChiMatrix { m: rho.matrix().clone() })
}

/// √(Tr (a − b)²).
pub fn chi_trace_distance(a: &ChiMatrix, b: &ChiMatrix) -> f64 {
    let d = &a.m - &b.m;
    (&d * &d).trace().re.max(0.0).sqrt()
}

/// Overlap with (|eg⟩ + e^{iφ}|ge⟩)/√2; maximised over φ when `phase` is
/// `None`.
pub fn bell_fidelity(rho: &DensityMatrix, phase: Option<f64>) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let pops = rho.population(1) + rho.population(2);
    let coh = rho.get(2, 1);
    let cross = match phase {
        Some(phi) => (Complex64::from_polar(1.0, phi) * coh).re,
        None => coh.norm(),
    };
    Ok(0.5 * pops + cross)
}

/// The φ that maximises [`bell_fidelity`].
pub fn bell_phase(rho: &DensityMatrix) -> f64 {
    -rho.get(2, 1).arg()
}

/// Wootters concurrence, from the spectrum of √ρ·ρ̃·√ρ.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let yy = kron(&Operator::sigma_y(), &Operator::sigma_y());
    let conj = rho.matrix().map(|z| z.conj());
    let tilde = yy.matrix() * conj * yy.matrix();
    let eig = SymmetricEigen::new(rho.matrix().clone());
    let mut sqrt = CMatrix::zeros(4, 4);
    for k in 0..4 {
        let l = eig.eigenvalues[k].max(0.0).sqrt();
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            sqrt += (v * v.adjoint()) * Complex64::new(l, 0.0);
        }
    }
    let m = &sqrt * tilde * &sqrt;
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut lam: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().map(|&x| x.max(0.0).sqrt()).collect();
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    Ok((lam[0] - lam[1] - lam[2] - lam[3]).max(0.0))
}
