use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{ChannelParams, Hygiene, NodeParams, Trajectory};
use crate::qmath::{integrate_generator, on_qubit, DensityMatrix, Generator, MeTrajectory, Operator, TimeGrid};
use crate::{Error, Result};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

/// Result of the cascaded engine. The joint trajectory runs on the node-2
/// clock s; node 1 sits at physical time s − τ.
#[derive(Clone, Debug)]
pub struct CascadedRun {
    pub trajectory: Trajectory,
    joint: MeTrajectory,
    node1: NodeParams,
    node2: NodeParams,
    eta: f64,
    tau: f64,
    dt: f64,
    t0: f64,
}

struct Ops {
    s1: Operator,
    s2: Operator,
    z1: Operator,
    z2: Operator,
    n1: Operator,
    n2: Operator,
}

impl Ops {
    fn new() -> Self {
        Self {
            s1: on_qubit(&Operator::sigma_minus(), 1),
            s2: on_qubit(&Operator::sigma_minus(), 2),
            z1: on_qubit(&Operator::sigma_z(), 1),
            z2: on_qubit(&Operator::sigma_z(), 2),
            n1: on_qubit(&Operator::proj_e(), 1),
            n2: on_qubit(&Operator::proj_e(), 2),
        }
    }
}

/// Snaps dt so that the channel delay is a whole number of steps.
pub(crate) fn snap_dt(tau: f64, dt: f64) -> Result<(f64, usize)> {
    let n = (tau / dt).round();
    if n < 3.0 {
        return Err(Error::InvalidParameter { name: "dt", reason: "step must resolve the channel delay".into() });
    }
    Ok((tau / n, n as usize))
}

/// Cascaded two-qubit master equation for a unidirectional link.
///
/// `grid` is on the physical axis starting at the preparation time; dt is
/// adjusted so τ is a whole number of steps and t1 is rounded up to the grid.
pub fn run_cascaded(
    node1: &NodeParams,
    node2: &NodeParams,
    channel: &ChannelParams,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<CascadedRun> {
    node1.validate()?;
    node2.validate()?;
    if rho0.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho0.dim() });
    }
    let tau = channel.delay();
    let (dt, n_tau) = snap_dt(tau, grid.dt)?;
    let n_phys = ((grid.t1 - grid.t0) / dt - 1e-9).ceil() as usize;
    let t0 = grid.t0;
    check_no_reentry(node1, node2, t0, t0 + n_phys as f64 * dt, tau, dt)?;

    let eta = channel.transmission();
    let ops = Ops::new();
    let gen = |s: f64| -> Result<Generator> { Ok(joint_generator(&ops, node1, node2, eta, tau, t0, dt, s)) };
    let s_grid = TimeGrid::new(t0, t0 + (n_phys + n_tau) as f64 * dt, dt)?;
    let joint = integrate_generator(&gen, rho0, &s_grid)?;

    let pe = |k: usize, node: usize| {
        let r = &joint.states[k];
        if node == 1 {
            r.population(2) + r.population(3)
        } else {
            r.population(1) + r.population(3)
        }
    };
    let times: Vec<f64> = (0..=n_phys).map(|k| t0 + k as f64 * dt).collect();
    let pe_q1: Vec<f64> = (0..=n_phys).map(|k| pe(k + n_tau, 1)).collect();
    let pe_q2: Vec<f64> = (0..=n_phys).map(|k| pe(k, 2)).collect();

    // energy in flight: node-1 flux over the last τ, attenuated by distance
    // (trapezoid rule)
    let decay = (-channel.loss_alpha * channel.velocity * dt).exp();
    let flux: Vec<f64> = times
        .iter()
        .zip(&pe_q1)
        .map(|(&t, &p)| node1.directivity * node1.schedule.kappa(t) * p * dt)
        .collect();
    let mut field = vec![0.0; times.len()];
    for k in 0..times.len() {
        let mut w = 1.0;
        let mut e = 0.0;
        for m in 0..=n_tau.min(k) {
            let end = if m == 0 || m == n_tau { 0.5 } else { 1.0 };
            e += flux[k - m] * w * end;
            w *= decay;
        }
        field[k] = e;
    }

    let mut hygiene = Hygiene::default();
    for r in &joint.states {
        hygiene.observe(r);
    }

    Ok(CascadedRun {
        trajectory: Trajectory { times, pe_q1, pe_q2, field_energy: Some(field), rho: None, hygiene },
        joint,
        node1: node1.clone(),
        node2: node2.clone(),
        eta,
        tau,
        dt,
        t0,
    })
}

/// Node-1 clock for node-2 time s. Values within rounding of a grid point
/// are put exactly on it so switches at grid points are resolved the same
/// way on both clocks.
fn retarded(s: f64, tau: f64, t0: f64, dt: f64) -> f64 {
    let x = (s - tau - t0) / dt;
    let m = x.round();
    if (x - m).abs() < 1e-11 * m.abs().max(1.0) {
        t0 + m * dt
    } else {
        s - tau
    }
}

#[allow(clippy::too_many_arguments)]
fn joint_generator(
    ops: &Ops,
    node1: &NodeParams,
    node2: &NodeParams,
    eta: f64,
    tau: f64,
    t0: f64,
    dt: f64,
    s: f64,
) -> Generator {
    let t1 = retarded(s, tau, t0, dt);
    let local1 = t1 >= t0;
    let a = if local1 { node1.schedule.kappa(t1) } else { 0.0 };
    let b = node2.schedule.kappa(s);
    let ell2 = -node2.input_coupling(b).conj();
    let l1 = ops.s1.scale_re((eta * node1.directivity * a).sqrt());
    let l2 = ops.s2.scale(ell2);
    // SLH cascade 1 → 2
    let hc = (&(&l1.dagger() * &l2) - &(&l2.dagger() * &l1)).scale(Complex64::new(0.0, 0.5));
    let mut h = &hc + &ops.n2.scale_re(node2.detuning_rad());
    let mut jumps = vec![&l1 + &l2];
    let side1 = a * (1.0 - eta * node1.directivity);
    if side1 > 0.0 {
        jumps.push(ops.s1.scale_re(side1.sqrt()));
    }
    let side2 = b - ell2.norm_sqr();
    if side2 > 0.0 {
        jumps.push(ops.s2.scale_re(side2.sqrt()));
    }
    if local1 {
        h = &h + &ops.n1.scale_re(node1.detuning_rad());
        push_decoherence(&mut jumps, &ops.s1, &ops.z1, node1);
    }
    push_decoherence(&mut jumps, &ops.s2, &ops.z2, node2);
    Generator { h, jumps }
}

fn push_decoherence(jumps: &mut Vec<Operator>, sm: &Operator, sz: &Operator, node: &NodeParams) {
    let g1 = node.gamma1();
    if g1 > 0.0 {
        jumps.push(sm.scale_re(g1.sqrt()));
    }
    let gp = node.gamma_phi();
    if gp > 0.0 {
        jumps.push(sz.scale_re((gp / 2.0).sqrt()));
    }
}

fn check_no_reentry(node1: &NodeParams, node2: &NodeParams, t0: f64, t1: f64, tau: f64, dt: f64) -> Result<()> {
    if node2.reflection.norm() == 0.0 {
        return Ok(());
    }
    let n = ((t1 - t0) / dt).round() as usize;
    let first = (0..=n).map(|k| t0 + k as f64 * dt).find(|&t| node1.schedule.kappa(t) > 0.0);
    if let Some(te) = first {
        let late = (0..=n).map(|k| t0 + k as f64 * dt).any(|t| t >= te + 2.0 * tau && node1.schedule.kappa(t) > 0.0);
        if late {
            return Err(Error::Unsupported(
                "node-1 coupler is still on when its own reflected emission returns; use the single-excitation engine".into(),
            ));
        }
    }
    Ok(())
}

impl CascadedRun {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Joint two-qubit state at physical time `t_m`: run the joint equation
    /// to s = t_m, then let node 1 alone catch up by τ.
    pub fn joint_state_at(&self, t_m: f64) -> Result<DensityMatrix> {
        let (tau, t0, dt) = (self.tau, self.t0, self.dt);
        let x = (t_m - t0) / dt;
        let k = (x + 1e-9).floor();
        let n_phys = self.trajectory.times.len() - 1;
        if k < 0.0 || x > n_phys as f64 + 1e-9 {
            return Err(Error::InvalidParameter { name: "t_m", reason: "analysis time is outside the simulated window".into() });
        }
        let ops = Ops::new();
        let mut start = self.joint.states[k as usize].clone();
        let s_k = t0 + k * dt;
        if t_m - s_k > 1e-9 * dt {
            let gen = |s: f64| -> Result<Generator> {
                Ok(joint_generator(&ops, &self.node1, &self.node2, self.eta, tau, t0, dt, s))
            };
            let tail = integrate_generator(&gen, &start, &TimeGrid::new(s_k, t_m, dt)?)?;
            start = tail.last().clone();
        }
        let node1 = &self.node1;
        let gen = |s: f64| -> Result<Generator> {
            let mut jumps = Vec::new();
            let mut h = Operator::zeros(4);
            let t1 = retarded(s, tau, t0, dt);
            if t1 >= t0 {
                let a = node1.schedule.kappa(t1);
                if a > 0.0 {
                    jumps.push(ops.s1.scale_re(a.sqrt()));
                }
                h = ops.n1.scale_re(node1.detuning_rad());
                push_decoherence(&mut jumps, &ops.s1, &ops.z1, node1);
            }
            Ok(Generator { h, jumps })
        };
        // node-1 switches sit on grid points of s, so step on that grid
        let mut rho = start;
        let mut s = t_m;
        let next = t0 + (k + 1.0) * dt;
        if next - t_m > 1e-9 * dt && next < t_m + tau {
            rho = integrate_generator(&gen, &rho, &TimeGrid::new(s, next, dt)?)?.last().clone();
            s = next;
        }
        let tr = integrate_generator(&gen, &rho, &TimeGrid::new(s, t_m + tau, dt)?)?;
        Ok(tr.last().clone())
    }

    /// Reduced state of node 2 at the end of the physical window.
    pub fn final_node2_state(&self) -> Result<DensityMatrix> {
        let n = self.trajectory.times.len() - 1;
        crate::qmath::partial_trace(&self.joint.states[n], 2)
    }

    /// Reduced state of node 1 at the end of the physical window.
    pub fn final_node1_state(&self) -> Result<DensityMatrix> {
        let n = self.trajectory.times.len() - 1;
        let k = n + (self.tau / self.dt).round() as usize;
        crate::qmath::partial_trace(&self.joint.states[k], 1)
    }
}
