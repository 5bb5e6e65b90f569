//! Single-excitation engine with an explicit delay line.
//!
//! The state is an exact density matrix over {vacuum, q1, q2, output bins of
//! node 1, output bins of node 2}. Each node's output is sampled once per
//! step into a ring buffer; the far node reads it back τ later, attenuated
//! by e^{−αℓ/2}. A step only changes the q1/q2 rows (RK4 of the linear
//! qubit–field equations, pure dephasing included) and the two freshly
//! written bins, so the update is O(n) instead of a full matrix product.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::cascaded::snap_dt;
use super::{ChannelParams, Hygiene, NodeParams, Trajectory};
use crate::qmath::{check_state, DensityMatrix, LEFT_LIMIT};
use crate::{invalid, Error, Result};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const VAC: usize = 0;
const Q: [usize; 2] = [1, 2];

/// Lagrange weights for samples at 0, 1, …, count − 1 evaluated at p.
fn lagrange(count: usize, p: f64) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (m, wm) in w.iter_mut().enumerate().take(count) {
        let mut v = 1.0;
        for l in 0..count {
            if l != m {
                v *= (p - l as f64) / (m as f64 - l as f64);
            }
        }
        *wm = v;
    }
    w
}

#[derive(Clone, Debug)]
pub struct SingleExcitationSetup {
    pub node1: NodeParams,
    pub node2: NodeParams,
    pub channel: ChannelParams,
    /// Initial state over {vacuum, q1 excited, q2 excited}.
    pub initial: [[Complex64; 3]; 3],
    pub t_end: f64,
    /// Requested step; snapped so that τ is a whole number of steps.
    pub dt: f64,
    /// Instantaneous z rotations of qubit 1: (time, phase).
    pub z_phases: Vec<(f64, f64)>,
    pub snapshot_times: Vec<f64>,
}

impl SingleExcitationSetup {
    /// Qubit 1 in (α|g⟩ + β|e⟩), qubit 2 in |g⟩, empty channel.
    pub fn with_q1_state(
        node1: NodeParams,
        node2: NodeParams,
        channel: ChannelParams,
        alpha: Complex64,
        beta: Complex64,
        t_end: f64,
        dt: f64,
    ) -> Self {
        let v = [alpha, beta, ZERO];
        let mut initial = [[ZERO; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                initial[r][c] = v[r] * v[c].conj();
            }
        }
        Self { node1, node2, channel, initial, t_end, dt, z_phases: Vec::new(), snapshot_times: Vec::new() }
    }

    /// Builds the initial block from a two-qubit state with no |ee⟩ weight.
    pub fn initial_from_two_qubit(rho: &DensityMatrix) -> Result<[[Complex64; 3]; 3]> {
        if rho.dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
        }
        if rho.population(3) > 1e-12 {
            return Err(invalid("initial", "multi-excitation initial states need the cascaded engine"));
        }
        // {gg, eg, ge} ↔ {vacuum, q1, q2}
        let map = [0usize, 2, 1];
        let mut out = [[ZERO; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = rho.get(map[r], map[c]);
            }
        }
        Ok(out)
    }
}

/// Energy profile of the channel at one instant.
#[derive(Clone, Debug)]
pub struct FieldSnapshot {
    pub t: f64,
    pub pe_q1: f64,
    pub pe_q2: f64,
    /// Energy per cell travelling 1 → 2, indexed by distance from node 1.
    pub right_mover: Vec<f64>,
    /// Energy per cell travelling 2 → 1, indexed by distance from node 1.
    pub left_mover: Vec<f64>,
    /// Probability that no excitation is left anywhere in the system.
    pub vacuum: f64,
}

#[derive(Clone, Debug)]
pub struct FieldRun {
    pub trajectory: Trajectory,
    pub final_state: DensityMatrix,
    pub snapshots: Vec<FieldSnapshot>,
    pub dt: f64,
    pub cells: usize,
}

struct Engine<'a> {
    s: &'a SingleExcitationSetup,
    n_tau: usize,
    cap: usize,
    n: usize,
    rho: Vec<Complex64>,
    dt: f64,
    lambda: f64,
    /// Bin indices where each output stream jumps: its start and every
    /// reflected copy of the other stream's jumps. Interpolation never
    /// reaches across one.
    jumps: [Vec<i64>; 2],
}

impl<'a> Engine<'a> {
    fn slot(&self, stream: usize, j: i64) -> usize {
        3 + stream * self.cap + j.rem_euclid(self.cap as i64) as usize
    }

    fn at(&self, r: usize, c: usize) -> Complex64 {
        self.rho[r * self.n + c]
    }

    fn node(&self, i: usize) -> &NodeParams {
        if i == 0 {
            &self.s.node1
        } else {
            &self.s.node2
        }
    }

    /// Segment [lo, hi) of `stream` holding bin j, or None before the
    /// stream starts.
    fn segment(&self, stream: usize, j: i64) -> Option<(i64, i64)> {
        let js = &self.jumps[stream];
        let lo = js.iter().rev().find(|&&x| x <= j)?;
        let hi = js.iter().find(|&&x| x > j).copied().unwrap_or(i64::MAX);
        Some((*lo, hi))
    }

    /// Bins feeding node i at offset x ∈ [0, 1] into step k, as (slot,
    /// weight). At x = 1 this is the left limit, which differs from the
    /// stored bin only where the stream jumps.
    fn input_taps(&self, i: usize, k: i64, x: f64) -> Taps {
        let stream = 1 - i;
        let j0 = k - self.n_tau as i64;
        let Some((lo, hi)) = self.segment(stream, j0) else {
            return Taps::default();
        };
        if x == 0.0 {
            return Taps::single(self.slot(stream, j0));
        }
        if x == 1.0 && j0 + 1 < hi {
            return Taps::single(self.slot(stream, j0 + 1));
        }
        // cubic through the four nearest samples of this segment
        let last = hi.saturating_sub(1);
        let count = (last - lo + 1).min(4) as usize;
        let m0 = (j0 - 1).min(last + 1 - count as i64).max(lo);
        let mut taps = Taps { default: self.stencil(stream, m0, count, j0 as f64 + x), special: Vec::new() };
        if x < 1.0 && count == 4 {
            // Pure dephasing gives the field's two-time correlation a cusp
            // at equal times, so columns holding the bins either side of
            // the interpolation point get a one-sided stencil where the
            // segment is long enough for one.
            let p = j0 as f64 + x;
            if j0 + 3 <= k.min(last) {
                let right = self.stencil(stream, j0, 4, p);
                taps.special.push((self.slot(stream, j0), right.clone()));
                if self.node(i).reflection != ZERO {
                    // node i's newest bin echoes bin j0 of its input
                    taps.special.push((self.slot(i, k), right));
                }
            }
            if j0 - 2 >= lo && j0 < last {
                taps.special.push((self.slot(stream, j0 + 1), self.stencil(stream, j0 - 2, 4, p)));
            }
        }
        taps
    }

    fn stencil(&self, stream: usize, m0: i64, count: usize, p: f64) -> Vec<(usize, f64)> {
        let w = lagrange(count, p - m0 as f64);
        (0..count).map(|m| (self.slot(stream, m0 + m as i64), w[m])).collect()
    }

    /// Right limit of node i's input at t_k + x·Δt.
    fn input_taps_right(&self, i: usize, k: i64, x: f64) -> Vec<(usize, f64)> {
        if x == 1.0 {
            let j = k + 1 - self.n_tau as i64;
            return match self.segment(1 - i, j) {
                Some(_) => vec![(self.slot(1 - i, j), 1.0)],
                None => Vec::new(),
            };
        }
        self.input_taps(i, k, x).default
    }

    fn pop(&self, i: usize) -> f64 {
        self.at(Q[i], Q[i]).re
    }

    /// Energy in flight after bin k. `frac` < 1 marks a short newest step.
    fn field_energy(&self, k: i64, frac: f64) -> f64 {
        let atten = (-self.s.channel.loss_alpha * self.s.channel.velocity * self.dt).exp();
        let mut e = 0.0;
        // Trapezoid over the bins spanning the channel, piecewise between
        // the stream's jumps. The step just before a jump is closed with the
        // left value held constant.
        let n = self.n_tau as i64;
        let oldest = (k - n).max(0);
        for stream in 0..2 {
            let mut w = vec![1.0; (k - oldest + 1) as usize];
            let idx = |j: i64| (j - oldest) as usize;
            w[idx(oldest)] = 0.5;
            w[idx(k)] -= 0.5;
            if frac < 1.0 && k > oldest {
                w[idx(k - 1)] -= 0.5 * (1.0 - frac);
                if k - n >= 0 {
                    w[idx(oldest)] += 1.0 - frac;
                }
            }
            for &j in &self.jumps[stream] {
                if j > oldest && j <= k {
                    w[idx(j)] -= 0.5;
                    w[idx(j - 1)] += 0.5;
                }
            }
            for j in oldest..=k {
                let sl = self.slot(stream, j);
                e += self.at(sl, sl).re * w[idx(j)] * atten.powi((k - j) as i32);
            }
        }
        e
    }

    fn two_qubit(&self) -> DensityMatrix {
        let (p1, p2) = (self.pop(0), self.pop(1));
        let mut m = DMatrix::<Complex64>::zeros(4, 4);
        m[(0, 0)] = Complex64::new(1.0 - p1 - p2, 0.0);
        m[(1, 1)] = Complex64::new(p2, 0.0);
        m[(2, 2)] = Complex64::new(p1, 0.0);
        m[(0, 1)] = self.at(VAC, Q[1]);
        m[(0, 2)] = self.at(VAC, Q[0]);
        m[(2, 1)] = self.at(Q[0], Q[1]);
        m[(1, 0)] = m[(0, 1)].conj();
        m[(2, 0)] = m[(0, 2)].conj();
        m[(1, 2)] = m[(2, 1)].conj();
        DensityMatrix::from_matrix_unchecked(m)
    }

    fn snapshot(&self, k: i64, t: f64) -> FieldSnapshot {
        let atten = (-self.s.channel.loss_alpha * self.s.channel.velocity * self.dt).exp();
        let mut right = vec![0.0; self.n_tau];
        let mut left = vec![0.0; self.n_tau];
        let mut w = 1.0;
        for m in 0..self.n_tau {
            let a = self.slot(0, k - m as i64);
            let b = self.slot(1, k - m as i64);
            right[m] = self.at(a, a).re * w;
            left[self.n_tau - 1 - m] = self.at(b, b).re * w;
            w *= atten;
        }
        let (p1, p2) = (self.pop(0), self.pop(1));
        let vacuum = 1.0 - p1 - p2 - right.iter().sum::<f64>() - left.iter().sum::<f64>();
        FieldSnapshot { t, pe_q1: p1, pe_q2: p2, right_mover: right, left_mover: left, vacuum }
    }

    fn apply_z(&mut self, phase: f64) {
        let u = Complex64::from_polar(1.0, phase);
        let q = Q[0];
        let n = self.n;
        for y in 0..n {
            if y == q {
                continue;
            }
            self.rho[q * n + y] *= u;
            self.rho[y * n + q] *= u.conj();
        }
    }

    /// Time derivative of the q1/q2 rows.
    #[allow(clippy::too_many_arguments)]
    fn rows_rhs(
        &self,
        rows: &[Vec<Complex64>; 2],
        out: &mut [Vec<Complex64>; 2],
        gamma: [Complex64; 2],
        coup: [Complex64; 2],
        taps: &[Taps; 2],
        gphi: [f64; 2],
    ) {
        let scale = self.lambda / self.dt.sqrt();
        for i in 0..2 {
            let j = 1 - i;
            let r = &rows[i];
            let o = &mut out[i];
            let ci = coup[i] * scale;
            for y in 0..self.n {
                // left action of the qubit equation on row q_i
                let mut inp = ZERO;
                for &(b, w) in taps[i].for_column(y) {
                    let s_by = if y == Q[0] {
                        rows[0][b].conj()
                    } else if y == Q[1] {
                        rows[1][b].conj()
                    } else {
                        self.at(b, y)
                    };
                    inp += s_by * w;
                }
                let deph = if y == Q[i] {
                    0.0
                } else if y == Q[j] {
                    gphi[i] + gphi[j]
                } else {
                    gphi[i]
                };
                let mut d = -(gamma[i] + deph) * r[y] + ci * inp;
                // right action where the column is itself a qubit
                for (m, &qm) in Q.iter().enumerate() {
                    if y == qm {
                        let mut back = ZERO;
                        for &(b, w) in &taps[m].default {
                            back += r[b] * w;
                        }
                        d += -gamma[m].conj() * r[y] + (coup[m] * scale).conj() * back;
                    }
                }
                o[y] = d;
            }
        }
    }

    /// Advances from t_k by h ≤ Δt. Only the last step may be short.
    fn step(&mut self, k: i64, h: f64, bufs: &mut StepBuffers) {
        let dt = h;
        let t = k as f64 * self.dt;
        let frac = h / self.dt;
        let mut gamma = [[ZERO; 2]; 3];
        let mut coup = [[ZERO; 2]; 3];
        let mut gphi = [0.0; 2];
        let mut kap_end = [0.0; 2];
        for i in 0..2 {
            let nd = self.node(i);
            gphi[i] = nd.gamma_phi();
            for (th, tt) in [t, t + dt / 2.0, t + dt * (1.0 - LEFT_LIMIT)].into_iter().enumerate() {
                let kap = nd.schedule.kappa(tt);
                gamma[th][i] = Complex64::new(kap / 2.0 + nd.gamma1() / 2.0, nd.detuning_rad());
                coup[th][i] = nd.input_coupling(kap);
            }
            kap_end[i] = nd.schedule.kappa(t + dt);
        }
        let xs = [0.0, frac / 2.0, frac];
        let taps: [[Taps; 2]; 3] =
            core::array::from_fn(|th| [self.input_taps(0, k, xs[th]), self.input_taps(1, k, xs[th])]);

        for i in 0..2 {
            let q = Q[i];
            bufs.y0[i].copy_from_slice(&self.rho[q * self.n..(q + 1) * self.n]);
        }
        // classic RK4 on the two rows
        let stages: [(usize, f64); 4] = [(0, 0.0), (1, 0.5), (1, 0.5), (2, 1.0)];
        for (st, &(th, c)) in stages.iter().enumerate() {
            for i in 0..2 {
                if st == 0 {
                    bufs.tmp[i].copy_from_slice(&bufs.y0[i]);
                } else {
                    let prev = &bufs.k[st - 1][i];
                    for (x, (y, kk)) in bufs.tmp[i].iter_mut().zip(bufs.y0[i].iter().zip(prev)) {
                        *x = *y + *kk * (c * dt);
                    }
                }
            }
            let tmp = core::mem::take(&mut bufs.tmp);
            let mut kk = core::mem::take(&mut bufs.k[st]);
            self.rows_rhs(&tmp, &mut kk, gamma[th], coup[th], &taps[th], gphi);
            bufs.k[st] = kk;
            bufs.tmp = tmp;
        }
        let n = self.n;
        let mut new_rows = [vec![ZERO; n], vec![ZERO; n]];
        for i in 0..2 {
            for y in 0..n {
                new_rows[i][y] = bufs.y0[i][y]
                    + (bufs.k[0][i][y] + (bufs.k[1][i][y] + bufs.k[2][i][y]) * 2.0 + bufs.k[3][i][y]) * (dt / 6.0);
            }
        }
        // write the qubit rows and columns back, keeping ρ Hermitian
        for i in 0..2 {
            let q = Q[i];
            for y in 0..n {
                if y == Q[0] || y == Q[1] {
                    continue;
                }
                self.rho[q * n + y] = new_rows[i][y];
                self.rho[y * n + q] = new_rows[i][y].conj();
            }
            self.rho[q * n + q] = Complex64::new(new_rows[i][q].re, 0.0);
        }
        let c12 = (new_rows[0][Q[1]] + new_rows[1][Q[0]].conj()) * 0.5;
        self.rho[Q[0] * n + Q[1]] = c12;
        self.rho[Q[1] * n + Q[0]] = c12.conj();

        let src: [Vec<(usize, f64)>; 2] = core::array::from_fn(|i| self.input_taps_right(i, k, frac));
        self.write_bins(k + 1, kap_end, frac, &src);
    }

    /// Writes the bins sampled at t_j: b = ρ·λ·b_in + √(Δt·D·κ)·a. A short
    /// final step (frac < 1) writes a proportionally thinner bin.
    fn write_bins(&mut self, j: i64, kap: [f64; 2], frac: f64, src: &[Vec<(usize, f64)>; 2]) {
        let n = self.n;
        let mut targets: [(usize, Vec<(usize, Complex64)>); 2] = [(0, Vec::new()), (0, Vec::new())];
        for i in 0..2 {
            let nd = self.node(i);
            let mut w: Vec<(usize, Complex64)> =
                src[i].iter().map(|&(b, x)| (b, nd.reflection * (self.lambda * x * frac.sqrt()))).collect();
            w.push((Q[i], Complex64::new((frac * self.dt * nd.directivity * kap[i]).sqrt(), 0.0)));
            targets[i] = (self.slot(i, j), w);
        }
        for i in 0..2 {
            let echoed = self.jumps[1 - i].contains(&(j - self.n_tau as i64));
            if echoed && self.node(i).reflection != ZERO && !self.jumps[i].contains(&j) {
                self.jumps[i].push(j);
            }
        }
        let rows: [Vec<Complex64>; 2] = core::array::from_fn(|t| {
            let mut r = vec![ZERO; n];
            for &(s, w) in &targets[t].1 {
                if w == ZERO {
                    continue;
                }
                for y in 0..n {
                    r[y] += w * self.rho[s * n + y];
                }
            }
            r
        });
        for t in 0..2 {
            let tgt = targets[t].0;
            self.rho[tgt * n..(tgt + 1) * n].copy_from_slice(&rows[t]);
        }
        let cols: [Vec<Complex64>; 2] = core::array::from_fn(|t| {
            let mut c = vec![ZERO; n];
            for &(s, w) in &targets[t].1 {
                if w == ZERO {
                    continue;
                }
                let wc = w.conj();
                for x in 0..n {
                    c[x] += self.rho[x * n + s] * wc;
                }
            }
            c
        });
        for t in 0..2 {
            let tgt = targets[t].0;
            for x in 0..n {
                self.rho[x * n + tgt] = cols[t][x];
            }
        }
    }
}


#[derive(Clone, Debug, Default)]
struct Taps {
    default: Vec<(usize, f64)>,
    /// Per-column replacements of `default`.
    special: Vec<(usize, Vec<(usize, f64)>)>,
}

impl Taps {
    fn single(slot: usize) -> Self {
        Self { default: vec![(slot, 1.0)], special: Vec::new() }
    }

    fn for_column(&self, y: usize) -> &[(usize, f64)] {
        self.special.iter().find(|(c, _)| *c == y).map(|(_, t)| t.as_slice()).unwrap_or(&self.default)
    }
}

struct StepBuffers {
    y0: [Vec<Complex64>; 2],
    tmp: [Vec<Complex64>; 2],
    k: [[Vec<Complex64>; 2]; 4],
}

/// Runs the single-excitation engine from t = 0 to `t_end`.
pub fn run_single_excitation(setup: &SingleExcitationSetup) -> Result<FieldRun> {
    setup.node1.validate()?;
    setup.node2.validate()?;
    if !(setup.t_end > 0.0) {
        return Err(invalid("t_end", "must be positive"));
    }
    let init = &setup.initial;
    let tr = init[0][0].re + init[1][1].re + init[2][2].re;
    if (tr - 1.0).abs() > 1e-9 {
        return Err(invalid("initial", "initial state must have unit trace"));
    }
    let tau = setup.channel.delay();
    let (dt, n_tau) = snap_dt(tau, setup.dt)?;
    // a delay line plus the widest one-sided stencil reaching back past it
    let cap = n_tau + 5;
    let n = 3 + 2 * cap;
    let mut rho = vec![ZERO; n * n];
    for r in 0..3 {
        for c in 0..3 {
            rho[r * n + c] = init[r][c];
        }
    }
    let mut eng = Engine {
        s: setup,
        n_tau,
        cap,
        n,
        rho,
        dt,
        lambda: (-setup.channel.loss_alpha * setup.channel.length / 2.0).exp(),
        jumps: [vec![0], vec![0]],
    };
    // both streams start at t = 0 with whatever the qubits already emit
    let kap0 = [setup.node1.schedule.kappa(0.0), setup.node2.schedule.kappa(0.0)];
    eng.write_bins(0, kap0, 1.0, &[Vec::new(), Vec::new()]);

    let full = (setup.t_end / dt + 1e-9).floor() as usize;
    let rest = setup.t_end - full as f64 * dt;
    let steps = if rest > 1e-9 * dt { full + 1 } else { full };
    let mut times = Vec::with_capacity(steps + 1);
    let mut pe1 = Vec::with_capacity(steps + 1);
    let mut pe2 = Vec::with_capacity(steps + 1);
    let mut field = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let mut z_done = vec![false; setup.z_phases.len()];
    let mut snap_done = vec![false; setup.snapshot_times.len()];
    let excitation = init[1][1].re + init[2][2].re;
    let mut hygiene = Hygiene::default();
    let mut bufs = StepBuffers {
        y0: [vec![ZERO; n], vec![ZERO; n]],
        tmp: [vec![ZERO; n], vec![ZERO; n]],
        k: core::array::from_fn(|_| [vec![ZERO; n], vec![ZERO; n]]),
    };
    for k in 0..=steps {
        let t = if k > full { setup.t_end } else { k as f64 * dt };
        for (e, &(tz, phase)) in setup.z_phases.iter().enumerate() {
            if !z_done[e] && t >= tz - 1e-15 {
                eng.apply_z(phase);
                z_done[e] = true;
            }
        }
        times.push(t);
        pe1.push(eng.pop(0));
        pe2.push(eng.pop(1));
        field.push(eng.field_energy(k as i64, if k > full { rest / dt } else { 1.0 }));
        for (e, &ts) in setup.snapshot_times.iter().enumerate() {
            if !snap_done[e] && t >= ts - 1e-15 {
                snapshots.push(eng.snapshot(k as i64, t));
                snap_done[e] = true;
            }
        }
        let two = eng.two_qubit();
        check_state(&two, t, dt)?;
        let excess = eng.pop(0) + eng.pop(1) + field.last().copied().unwrap_or(0.0) - excitation;
        hygiene.observe(&two);
        hygiene.excitation_excess = hygiene.excitation_excess.max(excess);
        if k < steps {
            let h = if k == full { rest } else { dt };
            eng.step(k as i64, h, &mut bufs);
        }
    }
    let final_state = eng.two_qubit();
    Ok(FieldRun {
        trajectory: Trajectory { times, pe_q1: pe1, pe_q2: pe2, field_energy: Some(field), rho: None, hygiene },
        final_state,
        snapshots,
        dt,
        cells: n_tau,
    })
}
