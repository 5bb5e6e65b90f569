//! The named experiments. Each returns tagged scalar metrics and, when
//! asked for detail, the files that go with them.

use phononlab_core::analysis::{dispersive_phase, dispersive_shift};
use phononlab_core::netsim::{
    bell_experiment, freq_map_point, interferometer_pair, loss_budget, loss_characterization, phase_sweep,
    process_tomography_experiment, ramsey_pair, revival_threshold, transfer_experiment, Fringe, FreqMapPoint,
    Trajectory,
};
use phononlab_core::qmath::DensityMatrix;
use phononlab_core::sawmodel::{frequency_grid, udt_response};
use phononlab_core::tomo::{
    all_settings, bell_fidelity, concurrence, correct_readout, correlators_from_settings, marginal_pe, measured_state,
    sample_shots, state_tomography, ChiMatrix, VisibilityMatrix,
};
use phononlab_core::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::PI;

use crate::config::{ExperimentConfig, Scenario, SweepSpec};
use crate::error::CliError;
use crate::svg::{line_plot, Series};

/// A scalar result and the key of its definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub key: String,
    pub value: f64,
    pub definition: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, Default)]
pub struct ScenarioOutput {
    pub metrics: Vec<Metric>,
    pub artifacts: Vec<Artifact>,
}

impl ScenarioOutput {
    fn metric(&mut self, key: &str, value: f64, definition: &str) {
        self.metrics.push(Metric { key: key.into(), value, definition: definition.into() });
    }

    fn file(&mut self, name: &str, contents: String) {
        self.artifacts.push(Artifact { name: name.into(), contents });
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.key == key).map(|m| m.value)
    }
}

/// Runs one scenario. `detail` adds trajectories, matrices and plots.
pub fn run_scenario(cfg: &ExperimentConfig, detail: bool, seed: u64) -> Result<ScenarioOutput, CliError> {
    let scenario = cfg.scenario()?;
    let mut out = ScenarioOutput::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match scenario {
        Scenario::Transfer => transfer(cfg, detail, &mut rng, &mut out)?,
        Scenario::Bell => bell(cfg, detail, &mut rng, &mut out)?,
        Scenario::ProcessTomo => process(cfg, detail, &mut out)?,
        Scenario::Interferometer => interferometer(cfg, detail, &mut out)?,
        Scenario::RamseyProbe => ramsey(cfg, detail, &mut out)?,
        Scenario::LossCharacterization => loss(cfg, detail, &mut out)?,
        Scenario::FreqMap => freq_map(cfg, detail, &mut out)?,
    }
    Ok(out)
}

fn channel_metrics(cfg: &ExperimentConfig, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let ch = cfg.channel()?;
    out.metric("tau_ns", ch.delay() * 1e9, "one-way delay L/v");
    out.metric("round_trip_ns", ch.round_trip() * 1e9, "round-trip delay 2L/v");
    out.metric("eta", ch.transmission(), "single-pass energy transmission exp(-alpha L)");
    Ok(())
}

fn hygiene_metrics(tr: &Trajectory, out: &mut ScenarioOutput) {
    out.metric("max_trace_error", tr.hygiene.max_trace_error, "largest |Tr rho - 1| over the run");
    out.metric("min_eigenvalue", tr.hygiene.min_eigenvalue, "smallest eigenvalue of rho over the run");
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut s = String::from("t_ns,Pe_Q1,Pe_Q2,field_energy\n");
    for (k, t) in tr.times.iter().enumerate() {
        let field = tr.field_energy.as_ref().map(|f| f[k].to_string()).unwrap_or_else(|| "NaN".into());
        s.push_str(&format!("{},{},{},{}\n", t * 1e9, tr.pe_q1[k], tr.pe_q2[k], field));
    }
    s
}

fn population_plot(title: &str, tr: &Trajectory) -> String {
    let ns = |v: &[f64]| tr.times.iter().zip(v).map(|(t, p)| (t * 1e9, *p)).collect();
    line_plot(
        title,
        "t (ns)",
        "population",
        &[Series { label: "Pe Q1", points: ns(&tr.pe_q1) }, Series { label: "Pe Q2", points: ns(&tr.pe_q2) }],
    )
}

fn matrix_json(dim: usize, get: impl Fn(usize, usize) -> Complex64) -> serde_json::Value {
    let part = |f: &dyn Fn(Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..dim).map(|r| (0..dim).map(|c| f(get(r, c))).collect()).collect()
    };
    json!({ "re": part(&|z| z.re), "im": part(&|z| z.im) })
}

fn density_json(rho: &DensityMatrix) -> serde_json::Value {
    matrix_json(rho.dim(), |r, c| rho.get(r, c))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s
}

fn sampled_state(
    rho: &DensityMatrix,
    v: &VisibilityMatrix,
    shots: usize,
    correct: bool,
    rng: &mut ChaCha8Rng,
) -> Result<DensityMatrix, CliError> {
    let settings = all_settings(rho)?
        .iter()
        .map(|p| sample_shots(p, v, shots, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(state_tomography(&correlators_from_settings(&settings, correct.then_some(v))?)?)
}

fn transfer(cfg: &ExperimentConfig, detail: bool, rng: &mut ChaCha8Rng, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let net = cfg.network(Scenario::Transfer)?;
    let run = transfer_experiment(&net)?;
    let budget = loss_budget(&net)?;
    out.metric("final_pe_q2", run.final_pe_q2, "Pe of Q2 at the end of the transfer window");
    out.metric("final_pe_q1", run.trajectory.final_pe_q1(), "Pe of Q1 at the end of the transfer window");
    out.metric("pe_q2_lossless", budget.pe_q2_lossless, "final Pe of Q2 with a lossless channel");
    out.metric("loss_penalty", budget.loss_penalty, "Pe_Q2(lossless) - Pe_Q2");
    out.metric("coherence_penalty", budget.coherence_penalty, "1 - Pe_Q2(lossless)");
    out.metric("coherence_penalty_q1", budget.coherence_penalty_q1, "coherence penalty with only Q1 decohering");
    out.metric("coherence_penalty_q2", budget.coherence_penalty_q2, "coherence penalty with only Q2 decohering");
    out.metric("directivity", net.directivity1, "fraction of emitted energy sent toward the far node");
    out.metric("cap_engaged", f64::from(u8::from(run.cap_engaged)), "1 if a coupler schedule hit kappa_max");
    out.metric("dt_ns", run.dt * 1e9, "integration step after snapping to the delay");
    channel_metrics(cfg, out)?;
    hygiene_metrics(&run.trajectory, out);
    if cfg.shots > 0 {
        let p: [f64; 4] = core::array::from_fn(|k| run.final_state.population(k));
        let v = cfg.visibility()?;
        let mut q = sample_shots(&p, &v, cfg.shots, rng)?;
        if cfg.readout.correct {
            q = correct_readout(&q, &v)?.p;
        }
        out.metric("final_pe_q2_sampled", marginal_pe(&q, 2)?, "final Pe of Q2 estimated from sampled shots");
    }
    if detail {
        out.file("trajectory.csv", trajectory_csv(&run.trajectory));
        out.file("final_state.json", pretty(&density_json(&run.final_state)));
        out.file("populations.svg", population_plot(&format!("transfer ({:?})", cfg.carrier), &run.trajectory));
    }
    Ok(())
}

fn bell(cfg: &ExperimentConfig, detail: bool, rng: &mut ChaCha8Rng, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let net = cfg.network(Scenario::Bell)?;
    let res = bell_experiment(&net, 0.0)?;
    let v = cfg.visibility()?;
    out.metric("fidelity", res.fidelity, "overlap with (|eg> + e^{i phi}|ge>)/sqrt2, phi optimised");
    out.metric("concurrence", res.concurrence, "Wootters concurrence of rho(t_m)");
    out.metric("phase", res.phase, "optimal Bell phase phi, rad");
    out.metric("t_m_ns", res.t_m * 1e9, "analysis time");
    let raw = measured_state(&res.rho, &v)?;
    out.metric("fidelity_uncorrected", bell_fidelity(&raw, None)?, "Bell fidelity seen through the readout matrix");
    out.metric("concurrence_uncorrected", concurrence(&raw)?, "concurrence seen through the readout matrix");
    hygiene_metrics(&res.trajectory, out);
    let mut sampled = None;
    if cfg.shots > 0 {
        let rho = sampled_state(&res.rho, &v, cfg.shots, cfg.readout.correct, rng)?;
        out.metric("fidelity_sampled", bell_fidelity(&rho, None)?, "Bell fidelity from sampled tomography");
        out.metric("concurrence_sampled", concurrence(&rho)?, "concurrence from sampled tomography");
        sampled = Some(rho);
    }
    if detail {
        out.file("trajectory.csv", trajectory_csv(&res.trajectory));
        out.file("rho.json", pretty(&density_json(&res.rho)));
        if let Some(rho) = sampled {
            out.file("rho_sampled.json", pretty(&density_json(&rho)));
        }
        out.file("populations.svg", population_plot("Bell state generation", &res.trajectory));
    }
    Ok(())
}

fn chi_json(chi: &ChiMatrix) -> serde_json::Value {
    let mut v = matrix_json(4, |r, c| chi.get(r, c));
    v["basis"] = json!(["I", "X", "Y", "Z"]);
    v
}

fn process(cfg: &ExperimentConfig, detail: bool, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let net = cfg.network(Scenario::ProcessTomo)?;
    let res = process_tomography_experiment(&net)?;
    out.metric("process_fidelity", res.fidelity, "chi_II, overlap with the identity process");
    out.metric("virtual_z", res.virtual_z, "frame rotation applied to the Q2 outputs, rad");
    out.metric("chi_trace", res.chi.trace(), "trace of chi");
    out.metric("chi_min_eigenvalue", res.chi.min_eigenvalue(), "smallest eigenvalue of chi");
    if detail {
        out.file("chi.json", pretty(&chi_json(&res.chi)));
        let o = &res.outputs;
        let outputs = json!({
            "g": density_json(&o.g),
            "e": density_json(&o.e),
            "plus": density_json(&o.plus),
            "plus_i": density_json(&o.plus_i),
        });
        out.file("outputs.json", pretty(&outputs));
    }
    Ok(())
}

fn fringe_csv(header: &str, a: &Fringe, b: &Fringe) -> String {
    let mut s = format!("{header}\n");
    for k in 0..a.phases.len() {
        s.push_str(&format!("{},{},{}\n", a.phases[k], a.values[k], b.values[k]));
    }
    s
}

fn fringe_plot(title: &str, x: &str, y: &str, a: (&str, &Fringe), b: (&str, &Fringe)) -> String {
    let pts = |f: &Fringe| f.phases.iter().zip(&f.values).map(|(p, v)| (*p, *v)).collect();
    line_plot(title, x, y, &[Series { label: a.0, points: pts(a.1) }, Series { label: b.0, points: pts(b.1) }])
}

fn interferometer(cfg: &ExperimentConfig, detail: bool, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let net = cfg.network(Scenario::Interferometer)?;
    let probe = cfg.interferometer_probe()?;
    let res = interferometer_pair(&net, &probe, &phase_sweep(cfg.probe.phase_points))?;
    out.metric("g_mhz", probe.g * 1e-6, "qubit-phonon coupling from the Purcell relation");
    out.metric("chi_mhz", probe.chi()? * 1e-6, "dispersive shift g^2/Delta");
    out.metric("expected_phase_shift_pi", probe.phase()? / PI, "2 pi chi dt in units of pi");
    out.metric("visibility_ground", res.ground.fit.visibility, "fringe visibility with Q2 in g");
    out.metric("visibility_excited", res.excited.fit.visibility, "fringe visibility with Q2 in e");
    out.metric("phase_shift_pi", res.phase_shift / PI, "phi0(e) - phi0(g) in units of pi");
    out.metric("fit_residual_ground", res.ground.fit.residual_norm, "cosine fit residual norm, Q2 in g");
    out.metric("fit_residual_excited", res.excited.fit.residual_norm, "cosine fit residual norm, Q2 in e");
    if detail {
        out.file("fringe.csv", fringe_csv("phi_rad,Pe_Q1_ground,Pe_Q1_excited", &res.ground, &res.excited));
        out.file(
            "fringe.svg",
            fringe_plot("phonon interferometer", "phi (rad)", "Pe Q1", ("Q2 in g", &res.ground), ("Q2 in e", &res.excited)),
        );
    }
    Ok(())
}

fn ramsey(cfg: &ExperimentConfig, detail: bool, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let r = cfg.ramsey()?;
    let res = ramsey_pair(&r, &phase_sweep(cfg.probe.phase_points))?;
    let chi = dispersive_shift(r.probe.g, r.probe.delta)?;
    out.metric("chi_mhz", chi * 1e-6, "dispersive shift g^2/Delta");
    out.metric("expected_phase_shift_pi", dispersive_phase(chi, r.probe.dt_interaction)? / PI, "2 pi chi dt in units of pi");
    out.metric("phase_shift_pi", res.phase_shift / PI, "phi0(phonon) - phi0(no phonon) in units of pi");
    out.metric("p_phonon", r.p_phonon, "probability that the phonon reaches Q2");
    out.metric("leakage_mhz", r.leakage * 1e-6, "Q2 decay into the channel while coupled");
    out.metric("visibility_off", res.off.fit.visibility, "Ramsey fringe visibility without a phonon");
    out.metric("visibility_on", res.on.fit.visibility, "Ramsey fringe visibility with a phonon");
    if detail {
        out.file("ramsey.csv", fringe_csv("theta_rad,Pe_Q2_off,Pe_Q2_on", &res.off, &res.on));
        out.file(
            "ramsey.svg",
            fringe_plot("Ramsey probe", "theta (rad)", "Pe Q2", ("no phonon", &res.off), ("phonon", &res.on)),
        );
    }
    Ok(())
}

fn loss(cfg: &ExperimentConfig, detail: bool, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let net = cfg.network(Scenario::LossCharacterization)?;
    let res = loss_characterization(&net, &cfg.numerics.round_trips)?;
    let ch = cfg.channel()?;
    let mean_ratio = res.ratios.iter().sum::<f64>() / res.ratios.len() as f64;
    out.metric("t_saw_us", res.fit.decay_time * 1e6, "fitted decay time of the recaptured population");
    out.metric("t_saw_expected_us", ch.t_saw() * 1e6, "1/(alpha v)");
    out.metric("alpha_np_per_m", res.alpha(ch.velocity), "1/(v T_saw) from the fit");
    out.metric("ratio_mean", mean_ratio, "mean recapture ratio between successive round trips");
    out.metric("eta_squared", ch.transmission().powi(2), "round-trip energy transmission");
    channel_metrics(cfg, out)?;
    if detail {
        let mut s = String::from("round_trips,storage_ns,recaptured\n");
        for k in 0..res.times.len() {
            s.push_str(&format!("{},{},{}\n", res.round_trips[k], res.times[k] * 1e9, res.recaptured[k]));
        }
        out.file("recapture.csv", s);
        let data = res.times.iter().zip(&res.recaptured).map(|(t, p)| (t * 1e9, *p)).collect();
        let fit = res.times.iter().map(|t| (t * 1e9, res.fit.amplitude * (-t / res.fit.decay_time).exp())).collect();
        out.file(
            "recapture.svg",
            line_plot(
                "recapture after n round trips",
                "storage time (ns)",
                "Pe Q1",
                &[Series { label: "simulated", points: data }, Series { label: "exponential fit", points: fit }],
            ),
        );
    }
    Ok(())
}

/// Lowest and highest frequency whose first revival clears the threshold.
pub fn revival_band(points: &[FreqMapPoint], threshold: f64) -> Option<(f64, f64)> {
    let hits: Vec<f64> = points.iter().filter(|p| p.first_revival > threshold).map(|p| p.frequency).collect();
    Some((*hits.first()?, *hits.last()?))
}

fn freq_map(cfg: &ExperimentConfig, detail: bool, out: &mut ScenarioOutput) -> Result<(), CliError> {
    let sweep = cfg.sweep.clone().unwrap_or_else(SweepSpec::freq_map_default);
    let freqs: Vec<f64> = sweep.values().into_iter().map(|f| f * 1e9).collect();
    let rev = cfg.revival()?;
    let saw = cfg.saw_setup();
    let points = freqs
        .par_iter()
        .map(|&f| freq_map_point(&rev, &saw, f))
        .collect::<Result<Vec<_>, _>>()?;
    let threshold = revival_threshold(&rev.channel);
    let band = revival_band(&points, threshold);
    let n_hits = points.iter().filter(|p| p.first_revival > threshold).count();
    out.metric("revival_threshold", threshold, "first-revival level counted as visible, eta^2/10");
    out.metric("revival_points", n_hits as f64, "frequencies whose first revival exceeds the threshold");
    out.metric("revival_band_low_ghz", band.map_or(f64::NAN, |b| b.0 * 1e-9), "lowest frequency with a revival");
    out.metric("revival_band_high_ghz", band.map_or(f64::NAN, |b| b.1 * 1e-9), "highest frequency with a revival");
    let best = points.iter().map(|p| p.first_revival).fold(0.0, f64::max);
    out.metric("max_first_revival", best, "largest Pe_Q1 near the first round trip");
    if detail {
        let mut summary = String::from("f_GHz,directivity,reflection_abs,first_revival\n");
        let mut map = String::from("f_GHz,t_ns,Pe_Q1\n");
        let stride = ((10e-9 / rev.dt).round() as usize).max(1);
        for p in &points {
            summary.push_str(&format!("{},{},{},{}\n", p.frequency * 1e-9, p.directivity, p.reflection.norm(), p.first_revival));
            for k in (0..p.times.len()).step_by(stride) {
                map.push_str(&format!("{},{},{}\n", p.frequency * 1e-9, p.times[k] * 1e9, p.pe_q1[k]));
            }
        }
        out.file("freq_map.csv", map);
        out.file("freq_map_summary.csv", summary);
        let lo = freqs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = freqs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = frequency_grid(lo, hi, 401.max(freqs.len()));
        let resp = udt_response(&saw.idt, &saw.mirror, saw.d_eff, &grid)?;
        let mut csv = String::from("f_GHz,directivity_dB,kappa_udt_MHz,reflection_re,reflection_im\n");
        for p in &resp.points {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                p.frequency * 1e-9,
                p.directivity_db,
                p.kappa_udt / (2.0 * PI) * 1e-6,
                p.reflection.re,
                p.reflection.im
            ));
        }
        out.file("saw_response.csv", csv);
        let rev_pts = points.iter().map(|p| (p.frequency * 1e-9, p.first_revival)).collect();
        out.file(
            "first_revival.svg",
            line_plot("first revival vs frequency", "f (GHz)", "Pe Q1", &[Series { label: "first revival", points: rev_pts }]),
        );
        let d_pts = resp.points.iter().map(|p| (p.frequency * 1e-9, p.directivity_db)).collect();
        out.file(
            "directivity.svg",
            line_plot("transducer directivity", "f (GHz)", "dB", &[Series { label: "directivity", points: d_pts }]),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: &str) -> ExperimentConfig {
        ExperimentConfig { scenario: scenario.into(), ..Default::default() }
    }

    #[test]
    fn trajectory_csv_has_the_fixed_columns() {
        let tr = Trajectory {
            times: vec![0.0, 1e-9],
            pe_q1: vec![1.0, 0.5],
            pe_q2: vec![0.0, 0.25],
            field_energy: None,
            ..Default::default()
        };
        let csv = trajectory_csv(&tr);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t_ns,Pe_Q1,Pe_Q2,field_energy");
        assert_eq!(lines[2], "1,0.5,0.25,NaN");
    }

    #[test]
    fn ramsey_metrics_are_tagged() {
        let out = run_scenario(&quick("ramsey-probe"), true, 0).unwrap();
        assert!(out.metrics.iter().all(|m| !m.definition.is_empty()));
        let shift = out.get("phase_shift_pi").unwrap();
        assert!((shift - 0.99).abs() < 0.02, "{shift}");
        assert_eq!(out.artifacts.len(), 2);
    }

    #[test]
    fn sampled_bell_is_seed_deterministic() {
        let mut cfg = quick("bell");
        cfg.shots = 2000;
        let a = run_scenario(&cfg, false, 7).unwrap();
        let b = run_scenario(&cfg, false, 7).unwrap();
        let c = run_scenario(&cfg, false, 8).unwrap();
        assert_eq!(a.get("fidelity_sampled"), b.get("fidelity_sampled"));
        assert_ne!(a.get("fidelity_sampled"), c.get("fidelity_sampled"));
        let exact = a.get("fidelity").unwrap();
        assert!((a.get("fidelity_sampled").unwrap() - exact).abs() < 0.1);
        assert!(a.get("fidelity_uncorrected").unwrap() < exact);
    }

    #[test]
    fn band_detection() {
        let p = |f: f64, r: f64| FreqMapPoint {
            frequency: f,
            directivity: 1.0,
            reflection: Complex64::new(1.0, 0.0),
            times: vec![],
            pe_q1: vec![],
            first_revival: r,
        };
        let pts = [p(1.0, 0.0), p(2.0, 0.1), p(3.0, 0.2), p(4.0, 0.0)];
        assert_eq!(revival_band(&pts, 0.05), Some((2.0, 3.0)));
        assert_eq!(revival_band(&pts[..1], 0.05), None);
    }
}
