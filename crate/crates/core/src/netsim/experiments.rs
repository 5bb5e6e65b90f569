//! The device experiments: transfer, Bell generation, process tomography,
//! the phonon interferometer, the Ramsey probe, loss characterisation and
//! the frequency map.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::field::{run_single_excitation, FieldRun, SingleExcitationSetup};
use super::{run_cascaded, ChannelParams, NodeParams, Trajectory};
use crate::analysis::{
    detuned_purcell_rate, dispersive_phase, dispersive_shift, fit_cosine, fit_exponential_decay, purcell_coupling,
    wrap_phase, DecayFit, FringeFit,
};
use crate::device::{self, Carrier, Coherence, DephasingSource};
use crate::pulseshape::{capture_schedule, emission_schedule, sech_mode, CouplerSchedule, TemporalMode, SUPPORT_THRESHOLD};
use crate::qmath::{
    integrate_me, on_qubit, partial_trace, CMatrix, CollapseChannel, DensityMatrix, Operator, TimeGrid,
};
use crate::sawmodel::{udt_pmatrix, IdtParams, MirrorParams};
use crate::tomo::{bell_fidelity, bell_phase, concurrence, process_inputs, process_tomography, ChiMatrix, ProcessData};
use crate::{invalid, Error, Result, TWO_PI};
#[allow(unused_imports)] // std supplies f64 math in test builds
use num_traits::Float;

/// Transducer geometry used to derive directivity and reflection.
#[derive(Clone, Debug, PartialEq)]
pub struct SawSetup {
    pub idt: IdtParams,
    pub mirror: MirrorParams,
    pub d_eff: f64,
}

impl Default for SawSetup {
    fn default() -> Self {
        Self { idt: IdtParams::default(), mirror: MirrorParams::default(), d_eff: device::udt::D_EFF }
    }
}

impl SawSetup {
    /// Directivity fraction and channel-side reflection at `f`.
    pub fn at(&self, f: f64) -> Result<(f64, Complex64)> {
        let u = udt_pmatrix(&self.idt, &self.mirror, self.d_eff, f)?;
        let fw = u.0[1][2].norm_sqr();
        let bw = u.0[0][2].norm_sqr();
        Ok((fw / (fw + bw), u.0[1][1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Cascaded two-qubit master equation.
    Cascaded,
    /// Single-excitation field engine.
    Field,
}

/// Everything a two-node protocol needs.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub carrier: Carrier,
    pub channel: ChannelParams,
    pub q1: Coherence,
    pub q2: Coherence,
    pub dephasing: Option<DephasingSource>,
    /// Sech coupler rate, rad/s.
    pub kappa_c: f64,
    pub kappa_max: f64,
    /// Preparation to emission centre.
    pub lead: f64,
    pub directivity1: f64,
    pub directivity2: f64,
    pub reflection1: Complex64,
    pub reflection2: Complex64,
    /// Qubit minus carrier frequency, Hz.
    pub detuning1: f64,
    pub detuning2: f64,
    pub dt: f64,
    pub t_m: f64,
    pub engine: Engine,
}

impl NetworkConfig {
    pub fn new(carrier: Carrier) -> Result<Self> {
        let (d, r, engine) = match carrier {
            Carrier::Uni => (SawSetup::default().at(carrier.frequency())?.0, Complex64::new(1.0, 0.0), Engine::Cascaded),
            Carrier::Bi => (0.5, Complex64::new(0.0, 0.0), Engine::Field),
        };
        Ok(Self {
            carrier,
            channel: ChannelParams::device(),
            q1: carrier.coherence(1),
            q2: carrier.coherence(2),
            dephasing: Some(DephasingSource::default()),
            kappa_c: TWO_PI * carrier.kappa_c_hz(),
            kappa_max: TWO_PI * device::KAPPA_MAX_HZ,
            lead: carrier.lead(),
            directivity1: d,
            directivity2: d,
            reflection1: r,
            reflection2: r,
            detuning1: 0.0,
            detuning2: 0.0,
            dt: 1e-9,
            t_m: device::BELL_ANALYSIS_TIME,
            engine,
        })
    }

    pub fn uni() -> Self {
        Self::new(Carrier::Uni).expect("default transducer model evaluates")
    }

    pub fn bi() -> Self {
        Self::new(Carrier::Bi).expect("default transducer model evaluates")
    }

    /// No channel loss.
    pub fn lossless(mut self) -> Self {
        self.channel = self.channel.lossless();
        self
    }

    /// Perfect qubits.
    pub fn ideal_qubits(mut self) -> Self {
        self.q1 = Coherence::IDEAL;
        self.q2 = Coherence::IDEAL;
        self.dephasing = None;
        self
    }

    /// Lossless channel, perfect qubits, perfectly directional transducers.
    pub fn ideal(mut self) -> Self {
        self.directivity1 = 1.0;
        self.directivity2 = 1.0;
        self.reflection1 = Complex64::new(1.0, 0.0);
        self.reflection2 = Complex64::new(1.0, 0.0);
        self.lossless().ideal_qubits()
    }

    pub fn mode(&self, norm: f64, center: f64) -> Result<TemporalMode> {
        sech_mode(self.kappa_c, norm, center)
    }

    /// Half length of the truncated sech support.
    pub fn support_half_width(&self) -> f64 {
        2.0 * (1.0 / SUPPORT_THRESHOLD).acosh() / self.kappa_c
    }

    /// End of a one-way transfer: the capture centre plus the same margin
    /// the emission had after preparation.
    pub fn transfer_end(&self) -> f64 {
        2.0 * self.lead + self.channel.delay()
    }

    pub fn node1(&self, schedule: CouplerSchedule) -> NodeParams {
        NodeParams {
            bare_frequency: self.carrier.frequency() + self.detuning1,
            detuning: self.detuning1,
            coherence: self.q1,
            dephasing: self.dephasing,
            schedule,
            directivity: self.directivity1,
            reflection: self.reflection1,
        }
    }

    pub fn node2(&self, schedule: CouplerSchedule) -> NodeParams {
        NodeParams {
            bare_frequency: self.carrier.frequency() + self.detuning2,
            detuning: self.detuning2,
            coherence: self.q2,
            dephasing: self.dephasing,
            schedule,
            directivity: self.directivity2,
            reflection: self.reflection2,
        }
    }

    /// Emission of a mode of the given norm by node 1, centred at `lead`.
    pub fn emission(&self, norm: f64) -> Result<CouplerSchedule> {
        let m = self.mode(norm, self.lead)?;
        Ok(emission_schedule(&m, self.kappa_max)?.active_from(0.0).active_until(m.t_end))
    }

    /// Capture at node 2 of a mode that left node 1 at `lead`.
    pub fn capture(&self) -> Result<CouplerSchedule> {
        let m = self.mode(1.0, self.lead + self.channel.delay())?;
        capture_schedule(&m, self.kappa_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_c > 0.0) || !(self.kappa_max > 0.0) {
            return Err(invalid("kappa_c", "coupler rates must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.lead >= 0.0) {
            return Err(invalid("lead", "must be non-negative"));
        }
        self.node1(CouplerSchedule::off()).validate()?;
        self.node2(CouplerSchedule::off()).validate()
    }
}

/// Runs a one-way protocol from a two-qubit initial state with no |ee⟩
/// weight and returns the trajectory and the final two-qubit state.
fn run_protocol(
    cfg: &NetworkConfig,
    n1: &NodeParams,
    n2: &NodeParams,
    rho0: &DensityMatrix,
    t_end: f64,
) -> Result<(Trajectory, DensityMatrix, f64)> {
    match cfg.engine {
        Engine::Cascaded => {
            let grid = TimeGrid::new(0.0, t_end, cfg.dt)?;
            let run = run_cascaded(n1, n2, &cfg.channel, rho0, &grid)?;
            let rho = run.joint_state_at(t_end)?;
            let dt = run.dt();
            Ok((run.trajectory, rho, dt))
        }
        Engine::Field => {
            let setup = SingleExcitationSetup {
                node1: n1.clone(),
                node2: n2.clone(),
                channel: cfg.channel,
                initial: SingleExcitationSetup::initial_from_two_qubit(rho0)?,
                t_end,
                dt: cfg.dt,
                z_phases: Vec::new(),
                snapshot_times: Vec::new(),
            };
            let run = run_single_excitation(&setup)?;
            Ok((run.trajectory, run.final_state, run.dt))
        }
    }
}

fn excited_q1() -> DensityMatrix {
    DensityMatrix::basis(4, 2)
}

#[derive(Clone, Debug)]
pub struct TransferResult {
    pub trajectory: Trajectory,
    pub final_pe_q2: f64,
    pub final_state: DensityMatrix,
    pub engine: Engine,
    pub cap_engaged: bool,
    pub dt: f64,
}

/// Q1 excited, full emission, matched capture at Q2.
pub fn transfer_experiment(cfg: &NetworkConfig) -> Result<TransferResult> {
    cfg.validate()?;
    let e = cfg.emission(1.0)?;
    let c = cfg.capture()?;
    let t_end = cfg.transfer_end();
    let cap = e.cap_engaged(0.0, t_end, cfg.dt) || c.cap_engaged(0.0, t_end, cfg.dt);
    let (trajectory, final_state, dt) = run_protocol(cfg, &cfg.node1(e), &cfg.node2(c), &excited_q1(), t_end)?;
    Ok(TransferResult {
        final_pe_q2: final_state.population(1) + final_state.population(3),
        trajectory,
        final_state,
        engine: cfg.engine,
        cap_engaged: cap,
        dt,
    })
}

/// Penalties relative to a perfect transfer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBudget {
    pub pe_q2: f64,
    /// Same protocol on a lossless channel.
    pub pe_q2_lossless: f64,
    /// Pe(η = 1) − Pe.
    pub loss_penalty: f64,
    /// 1 − Pe(η = 1).
    pub coherence_penalty: f64,
    /// Coherence penalty with only qubit 1 (resp. 2) decohering.
    pub coherence_penalty_q1: f64,
    pub coherence_penalty_q2: f64,
}

pub fn loss_budget(cfg: &NetworkConfig) -> Result<LossBudget> {
    let pe = transfer_experiment(cfg)?.final_pe_q2;
    let lossless = cfg.clone().lossless();
    let pe1 = transfer_experiment(&lossless)?.final_pe_q2;
    let only = |which: usize| -> Result<f64> {
        let mut c = lossless.clone();
        if which == 1 {
            c.q2 = Coherence::IDEAL;
        } else {
            c.q1 = Coherence::IDEAL;
        }
        Ok(1.0 - transfer_experiment(&c)?.final_pe_q2)
    };
    Ok(LossBudget {
        pe_q2: pe,
        pe_q2_lossless: pe1,
        loss_penalty: pe1 - pe,
        coherence_penalty: 1.0 - pe1,
        coherence_penalty_q1: only(1)?,
        coherence_penalty_q2: only(2)?,
    })
}

#[derive(Clone, Debug)]
pub struct BellResult {
    pub trajectory: Trajectory,
    pub rho: DensityMatrix,
    pub t_m: f64,
    pub fidelity: f64,
    pub phase: f64,
    pub concurrence: f64,
}

/// Half emission from Q1, capture at Q2, two-qubit state at `t_m`.
/// `z_phase` rotates Q1 about z before analysis.
pub fn bell_experiment(cfg: &NetworkConfig, z_phase: f64) -> Result<BellResult> {
    cfg.validate()?;
    let n1 = cfg.node1(cfg.emission(0.5)?);
    let n2 = cfg.node2(cfg.capture()?);
    let (trajectory, rho) = match cfg.engine {
        Engine::Cascaded => {
            let grid = TimeGrid::new(0.0, cfg.t_m, cfg.dt)?;
            let run = run_cascaded(&n1, &n2, &cfg.channel, &excited_q1(), &grid)?;
            (run.trajectory.clone(), run.joint_state_at(cfg.t_m)?)
        }
        Engine::Field => {
            let (t, r, _) = run_protocol(cfg, &n1, &n2, &excited_q1(), cfg.t_m)?;
            (t, r)
        }
    };
    let rz = {
        let mut m = CMatrix::identity(2, 2);
        m[(1, 1)] = Complex64::from_polar(1.0, z_phase);
        on_qubit(&Operator::new(m)?, 1)
    };
    let rho = rho.transform(&rz);
    let t_m = cfg.t_m;
    Ok(BellResult {
        fidelity: bell_fidelity(&rho, None)?,
        phase: bell_phase(&rho),
        concurrence: concurrence(&rho)?,
        trajectory,
        rho,
        t_m,
    })
}

#[derive(Clone, Debug)]
pub struct ProcessResult {
    pub chi: ChiMatrix,
    /// Tr(χ·χ_ideal) with χ_ideal the identity process.
    pub fidelity: f64,
    /// Frame rotation applied to the Q2 outputs.
    pub virtual_z: f64,
    pub outputs: ProcessData,
}

/// Transfers each tomography input from Q1 to Q2 and reconstructs χ.
/// A virtual Z on Q2 removes the deterministic transfer phase.
pub fn process_tomography_experiment(cfg: &NetworkConfig) -> Result<ProcessResult> {
    cfg.validate()?;
    let n1 = cfg.node1(cfg.emission(1.0)?);
    let n2 = cfg.node2(cfg.capture()?);
    let t_end = cfg.transfer_end();
    let g2 = DensityMatrix::basis(2, 0);
    let mut outs = Vec::with_capacity(4);
    for input in process_inputs() {
        let rho0 = DensityMatrix::product(&input, &g2);
        let (_, fin, _) = run_protocol(cfg, &n1, &n2, &rho0, t_end)?;
        outs.push(partial_trace(&fin, 2)?);
    }
    let angle = outs[2].get(0, 1).arg();
    let rot = Complex64::from_polar(1.0, -angle);
    let outs: Vec<DensityMatrix> = outs
        .into_iter()
        .map(|r| {
            let mut m = r.matrix().clone();
            m[(0, 1)] *= rot;
            m[(1, 0)] *= rot.conj();
            DensityMatrix::new(m)
        })
        .collect::<Result<_>>()?;
    let data = ProcessData { g: outs[0].clone(), e: outs[1].clone(), plus: outs[2].clone(), plus_i: outs[3].clone() };
    let chi = process_tomography(&data)?;
    Ok(ProcessResult { fidelity: chi.fidelity(&ChiMatrix::identity()), chi, virtual_z: -angle, outputs: data })
}

/// Dispersive parameters of the two probe experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    /// Qubit–phonon coupling, Hz.
    pub g: f64,
    /// Qubit frequency during the interaction minus carrier, Hz.
    pub delta: f64,
    pub kappa_udt: f64,
    /// Interaction time.
    pub dt_interaction: f64,
}

impl ProbeConfig {
    /// g from the Purcell relation with κ_q/2π = 6 MHz.
    pub fn interferometer() -> Self {
        let g = purcell_coupling(device::KAPPA_Q_INTERF_HZ, device::KAPPA_UDT_HZ).expect("positive κ_UDT");
        Self {
            g,
            delta: device::Q2_PROBE_FREQUENCY - Carrier::Uni.frequency(),
            kappa_udt: device::KAPPA_UDT_HZ,
            dt_interaction: device::DT_INTERF,
        }
    }

    /// g taken directly from the device table.
    pub fn ramsey() -> Self {
        Self {
            g: device::G_RAMSEY_HZ,
            delta: device::Q2_PROBE_FREQUENCY - Carrier::Uni.frequency(),
            kappa_udt: device::KAPPA_UDT_HZ,
            dt_interaction: device::DT_RAMSEY,
        }
    }

    pub fn chi(&self) -> Result<f64> {
        dispersive_shift(self.g, self.delta)
    }

    pub fn phase(&self) -> Result<f64> {
        dispersive_phase(self.chi()?, self.dt_interaction)
    }

    /// Leakage of the detuned qubit into the channel while its coupler is on, Hz.
    pub fn leakage(&self) -> f64 {
        detuned_purcell_rate(self.g, self.kappa_udt, self.delta)
    }
}

#[derive(Clone, Debug)]
pub struct Fringe {
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: FringeFit,
}

/// Evenly spaced phases over one period.
pub fn phase_sweep(n: usize) -> Vec<f64> {
    (0..n).map(|k| TWO_PI * k as f64 / n as f64).collect()
}

/// Node-1 half emission, reflection at the far end with the dispersive
/// phase when Q2 is excited, recapture by the time-reversed schedule; a z
/// phase φ on Q1 while the phonon is in flight.
pub fn interferometer_experiment(
    cfg: &NetworkConfig,
    probe: &ProbeConfig,
    q2_excited: bool,
    phases: &[f64],
) -> Result<Fringe> {
    cfg.validate()?;
    let m = cfg.mode(0.5, cfg.lead)?;
    let emit = emission_schedule(&m, cfg.kappa_max)?;
    let t_mirror = cfg.lead + cfg.channel.delay();
    let sched = CouplerSchedule::sum(vec![emit.clone(), emit.time_reversed(t_mirror)], cfg.kappa_max)?.active_from(0.0);
    let theta = if q2_excited { probe.phase()? } else { 0.0 };
    let mut n2 = cfg.node2(CouplerSchedule::off());
    n2.reflection = Complex64::from_polar(1.0, theta);
    let n1 = cfg.node1(sched);
    let t_end = 2.0 * cfg.lead + 2.0 * cfg.channel.delay();
    let mut values = Vec::with_capacity(phases.len());
    for &phi in phases {
        let mut setup = SingleExcitationSetup::with_q1_state(
            n1.clone(),
            n2.clone(),
            cfg.channel,
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            t_end,
            cfg.dt,
        );
        setup.z_phases.push((t_mirror, phi));
        values.push(run_single_excitation(&setup)?.trajectory.final_pe_q1());
    }
    let samples: Vec<(f64, f64)> = phases.iter().copied().zip(values.iter().copied()).collect();
    Ok(Fringe { phases: phases.to_vec(), fit: fit_cosine(&samples)?, values })
}

/// Uni link as used by the interferometer. Q1 holds a superposition for
/// about 1.2 μs with no echo, long against T2*, so the Ramsey-derived rate
/// describes its dephasing better than the echo rate used elsewhere.
pub fn interferometer_network() -> NetworkConfig {
    NetworkConfig { dephasing: Some(DephasingSource::Ramsey), ..NetworkConfig::uni() }
}

#[derive(Clone, Debug)]
pub struct InterferometerResult {
    pub ground: Fringe,
    pub excited: Fringe,
    /// φ0(e) − φ0(g), wrapped to [0, 2π).
    pub phase_shift: f64,
}

pub fn interferometer_pair(cfg: &NetworkConfig, probe: &ProbeConfig, phases: &[f64]) -> Result<InterferometerResult> {
    let ground = interferometer_experiment(cfg, probe, false, phases)?;
    let excited = interferometer_experiment(cfg, probe, true, phases)?;
    let phase_shift = wrap_phase(excited.fit.phase0 - ground.fit.phase0);
    Ok(InterferometerResult { ground, excited, phase_shift })
}

/// Ramsey probe of Q2 with a phonon from Q1 present with probability
/// `p_phonon`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RamseyConfig {
    pub probe: ProbeConfig,
    pub p_phonon: f64,
    /// Q2 decay into the channel while its coupler is on, Hz.
    pub leakage: f64,
    pub coherence: Coherence,
    pub dephasing: Option<DephasingSource>,
    pub dt: f64,
}

impl RamseyConfig {
    pub fn device() -> Self {
        let probe = ProbeConfig::ramsey();
        let d = SawSetup::default().at(Carrier::Uni.frequency()).map(|x| x.0).unwrap_or(1.0);
        Self {
            probe,
            p_phonon: ChannelParams::device().transmission() * d,
            leakage: probe.leakage(),
            coherence: device::Q2_UNI,
            dephasing: Some(DephasingSource::default()),
            dt: 1e-9,
        }
    }
}

/// Pe of Q2 after the final π/2 for each preparation phase θ.
pub fn ramsey_probe_experiment(cfg: &RamseyConfig, thetas: &[f64], q1_excited: bool) -> Result<Fringe> {
    if !(0.0..=1.0).contains(&cfg.p_phonon) {
        return Err(invalid("p_phonon", "must lie in [0, 1]"));
    }
    if !(cfg.leakage >= 0.0) {
        return Err(invalid("leakage", "must be non-negative"));
    }
    let chi = cfg.probe.chi()?;
    let p = if q1_excited { cfg.p_phonon } else { 0.0 };
    let mut values = Vec::with_capacity(thetas.len());
    let sm = Operator::sigma_minus();
    let sz = Operator::sigma_z();
    let mut channels = Vec::new();
    let g1 = if cfg.coherence.t1.is_finite() { 1.0 / cfg.coherence.t1 } else { 0.0 };
    channels.push(CollapseChannel::constant(sm.clone(), g1 + TWO_PI * cfg.leakage));
    let gphi = cfg.dephasing.map(|s| cfg.coherence.dephasing_rate(s)).unwrap_or(0.0);
    channels.push(CollapseChannel::constant(sz.clone(), gphi / 2.0));
    let grid = TimeGrid::new(0.0, cfg.probe.dt_interaction, cfg.dt)?;
    // H = (ω/2)σz advances the |e⟩ phase by ω·t relative to |g⟩
    let shifted = move |_t: f64| Operator::sigma_z().scale_re(-TWO_PI * chi / 2.0);
    let free = |_t: f64| Operator::zeros(2);
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let rx = Operator::new(CMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, -s), Complex64::new(s, 0.0)],
    ))?;
    for &theta in thetas {
        let psi = [Complex64::new(s, 0.0), Complex64::from_polar(s, theta)];
        let rho0 = DensityMatrix::pure(&psi)?;
        let pe = |with: bool| -> Result<f64> {
            let tr = if with { integrate_me(&shifted, &channels, &rho0, &grid)? } else { integrate_me(&free, &channels, &rho0, &grid)? };
            Ok(tr.last().transform(&rx).population(1))
        };
        let v = if p > 0.0 { (1.0 - p) * pe(false)? + p * pe(true)? } else { pe(false)? };
        values.push(v);
    }
    let samples: Vec<(f64, f64)> = thetas.iter().copied().zip(values.iter().copied()).collect();
    Ok(Fringe { phases: thetas.to_vec(), fit: fit_cosine(&samples)?, values })
}

#[derive(Clone, Debug)]
pub struct RamseyResult {
    pub off: Fringe,
    pub on: Fringe,
    /// φ0(on) − φ0(off), wrapped to [0, 2π).
    pub phase_shift: f64,
}

pub fn ramsey_pair(cfg: &RamseyConfig, thetas: &[f64]) -> Result<RamseyResult> {
    let off = ramsey_probe_experiment(cfg, thetas, false)?;
    let on = ramsey_probe_experiment(cfg, thetas, true)?;
    let phase_shift = wrap_phase(on.fit.phase0 - off.fit.phase0);
    Ok(RamseyResult { off, on, phase_shift })
}

#[derive(Clone, Debug)]
pub struct LossCharacterization {
    pub round_trips: Vec<usize>,
    /// Storage time in the channel, n·τ_RT.
    pub times: Vec<f64>,
    pub recaptured: Vec<f64>,
    pub fit: DecayFit,
    /// recaptured[n+1]/recaptured[n].
    pub ratios: Vec<f64>,
}

impl LossCharacterization {
    /// α = 1/(v·T_saw) from the fit.
    pub fn alpha(&self, velocity: f64) -> f64 {
        1.0 / (velocity * self.fit.decay_time)
    }
}

/// Q1 emits a full sech mode, both ends reflect, Q1 recaptures after n
/// round trips. The recaptured population decays as e^{−t/T_saw}.
pub fn loss_characterization(cfg: &NetworkConfig, round_trips: &[usize]) -> Result<LossCharacterization> {
    cfg.validate()?;
    if round_trips.len() < 3 {
        return Err(invalid("round_trips", "need at least three storage times"));
    }
    let m = cfg.mode(1.0, cfg.lead)?;
    let emit = emission_schedule(&m, cfg.kappa_max)?;
    let trt = cfg.channel.round_trip();
    let mut n2 = cfg.node2(CouplerSchedule::off());
    n2.reflection = Complex64::new(1.0, 0.0);
    let mut n1 = cfg.node1(CouplerSchedule::off());
    n1.reflection = Complex64::new(1.0, 0.0);
    let mut recaptured = Vec::with_capacity(round_trips.len());
    let mut times = Vec::with_capacity(round_trips.len());
    for &n in round_trips {
        if n == 0 {
            return Err(invalid("round_trips", "storage needs at least one round trip"));
        }
        let tc = cfg.lead + n as f64 * trt;
        let cap = capture_schedule(&cfg.mode(1.0, tc)?, cfg.kappa_max)?;
        // the capture half starts after the emission support has ended
        let sched = CouplerSchedule::sum(vec![emit.clone(), cap], cfg.kappa_max)?.active_from(0.0);
        let mut node1 = n1.clone();
        node1.schedule = sched;
        let setup = SingleExcitationSetup::with_q1_state(
            node1,
            n2.clone(),
            cfg.channel,
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            tc + cfg.lead,
            cfg.dt,
        );
        recaptured.push(run_single_excitation(&setup)?.trajectory.final_pe_q1());
        times.push(n as f64 * trt);
    }
    let samples: Vec<(f64, f64)> = times.iter().copied().zip(recaptured.iter().copied()).collect();
    let fit = fit_exponential_decay(&samples)?;
    let ratios = recaptured.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(LossCharacterization { round_trips: round_trips.to_vec(), times, recaptured, fit, ratios })
}

/// Constant-coupling emission with reflecting ends: Q1 population revives
/// at multiples of the round-trip time.
#[derive(Clone, Debug, PartialEq)]
pub struct RevivalConfig {
    pub kappa: f64,
    pub t_end: f64,
    pub dt: f64,
    pub channel: ChannelParams,
    pub coherence: Coherence,
    pub dephasing: Option<DephasingSource>,
    pub directivity: f64,
    pub reflection1: Complex64,
    pub reflection2: Complex64,
}

impl RevivalConfig {
    pub fn device() -> Self {
        Self {
            kappa: TWO_PI * device::KAPPA_REVIVAL_HZ,
            t_end: 4e-6,
            dt: 1e-9,
            channel: ChannelParams::device(),
            coherence: device::Q1_UNI,
            dephasing: Some(DephasingSource::default()),
            directivity: 1.0,
            reflection1: Complex64::new(1.0, 0.0),
            reflection2: Complex64::new(1.0, 0.0),
        }
    }
}

pub fn revival_experiment(cfg: &RevivalConfig) -> Result<FieldRun> {
    let node = |schedule, reflection, directivity| NodeParams {
        bare_frequency: Carrier::Uni.frequency(),
        detuning: 0.0,
        coherence: cfg.coherence,
        dephasing: cfg.dephasing,
        schedule,
        directivity,
        reflection,
    };
    let n1 = node(CouplerSchedule::constant(cfg.kappa, 0.0, f64::INFINITY)?, cfg.reflection1, cfg.directivity);
    let n2 = node(CouplerSchedule::off(), cfg.reflection2, 1.0);
    let n2 = NodeParams { coherence: Coherence::IDEAL, dephasing: None, ..n2 };
    let setup = SingleExcitationSetup::with_q1_state(
        n1,
        n2,
        cfg.channel,
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        cfg.t_end,
        cfg.dt,
    );
    run_single_excitation(&setup)
}

/// Largest Pe_Q1 within ±`window` of t = n·τ_RT, with its time.
pub fn revival_peaks(run: &FieldRun, round_trip: f64, count: usize, window: f64) -> Vec<(f64, f64)> {
    let tr = &run.trajectory;
    (1..=count)
        .filter_map(|n| {
            let c = n as f64 * round_trip;
            tr.times
                .iter()
                .zip(&tr.pe_q1)
                .filter(|(t, _)| (**t - c).abs() <= window)
                .map(|(t, p)| (*t, *p))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FreqMapPoint {
    pub frequency: f64,
    pub directivity: f64,
    pub reflection: Complex64,
    pub times: Vec<f64>,
    pub pe_q1: Vec<f64>,
    /// Peak Pe_Q1 around the first round trip.
    pub first_revival: f64,
}

/// One column of the emission map: D and the end reflections from the
/// transducer model at `f`.
pub fn freq_map_point(cfg: &RevivalConfig, saw: &SawSetup, f: f64) -> Result<FreqMapPoint> {
    let (d, r) = saw.at(f)?;
    let point = RevivalConfig { directivity: d, reflection1: r, reflection2: r, ..cfg.clone() };
    let run = revival_experiment(&point)?;
    let trt = cfg.channel.round_trip();
    let first = revival_peaks(&run, trt, 1, 0.25 * trt).first().map(|p| p.1).unwrap_or(0.0);
    Ok(FreqMapPoint {
        frequency: f,
        directivity: d,
        reflection: r,
        times: run.trajectory.times,
        pe_q1: run.trajectory.pe_q1,
        first_revival: first,
    })
}

/// A first revival counts as visible when it returns at least a tenth of
/// what a lossless-transducer round trip through `channel` would, η²/10.
pub fn revival_threshold(channel: &ChannelParams) -> f64 {
    0.1 * channel.transmission().powi(2)
}

/// Sanity check shared by the experiments: the engines must not be asked
/// for schedules beyond the ceiling.
pub fn check_cap(s: &CouplerSchedule, t0: f64, t1: f64, dt: f64) -> Result<()> {
    if s.cap_engaged(t0, t1, dt) {
        return Err(Error::Unsupported("schedule exceeds the coupler ceiling".into()));
    }
    Ok(())
}
