//! Measured device parameters used as defaults throughout the crate.
//! Times in seconds, frequencies in Hz, lengths in metres.

use crate::qmath::pure_dephasing_rate;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coherence {
    pub t1: f64,
    pub t2_ramsey: f64,
    pub t2_echo: f64,
}

/// Which T2 feeds the Markovian pure-dephasing channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DephasingSource {
    /// Echo T2: the Markovian part of the dephasing, which is what a
    /// Lindblad σz channel describes.
    #[default]
    Echo,
    /// Ramsey T2: includes quasi-static noise; much more pessimistic.
    Ramsey,
}

impl Coherence {
    pub fn dephasing_rate(&self, source: DephasingSource) -> f64 {
        match source {
            DephasingSource::Echo => pure_dephasing_rate(self.t1, self.t2_echo),
            DephasingSource::Ramsey => pure_dephasing_rate(self.t1, self.t2_ramsey),
        }
    }

    /// Perfect qubit: no decay, no dephasing.
    pub const IDEAL: Coherence = Coherence { t1: f64::INFINITY, t2_ramsey: f64::INFINITY, t2_echo: f64::INFINITY };
}

pub const Q1_UNI: Coherence = Coherence { t1: 51e-6, t2_ramsey: 0.79e-6, t2_echo: 2.48e-6 };
pub const Q2_UNI: Coherence = Coherence { t1: 33e-6, t2_ramsey: 0.55e-6, t2_echo: 2.26e-6 };
pub const Q1_BI: Coherence = Coherence { t1: 38e-6, t2_ramsey: 0.95e-6, t2_echo: 2.48e-6 };
pub const Q2_BI: Coherence = Coherence { t1: 31e-6, t2_ramsey: 0.62e-6, t2_echo: 1.68e-6 };
pub const Q1_IDLE: Coherence = Coherence { t1: 57e-6, t2_ramsey: 1.11e-6, t2_echo: 3.8e-6 };
pub const Q2_IDLE: Coherence = Coherence { t1: 38e-6, t2_ramsey: 0.88e-6, t2_echo: 3.3e-6 };

/// Operating point of the transfer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Carrier {
    /// Inside the mirror stopband, transducers are unidirectional.
    Uni,
    /// Above the stopband, transducers radiate both ways.
    Bi,
}

impl Carrier {
    pub fn frequency(self) -> f64 {
        match self {
            Carrier::Uni => 3.976e9,
            Carrier::Bi => 4.102e9,
        }
    }

    /// Coupler rate κ_c/2π of the sech wavepacket.
    pub fn kappa_c_hz(self) -> f64 {
        match self {
            Carrier::Uni => 10e6,
            Carrier::Bi => 6e6,
        }
    }

    /// Delay from the π pulse to the centre of the emitted mode.
    pub fn lead(self) -> f64 {
        match self {
            Carrier::Uni => 120e-9,
            Carrier::Bi => 200e-9,
        }
    }

    pub fn coherence(self, node: usize) -> Coherence {
        match (self, node) {
            (Carrier::Uni, 1) => Q1_UNI,
            (Carrier::Uni, _) => Q2_UNI,
            (Carrier::Bi, 1) => Q1_BI,
            (Carrier::Bi, _) => Q2_BI,
        }
    }
}

pub const CHANNEL_LENGTH: f64 = 2e-3;
pub const SAW_VELOCITY: f64 = 3863.0;
/// Energy attenuation, Np/m.
pub const LOSS_ALPHA: f64 = 173.0;

/// Constant coupling used for the revival map.
pub const KAPPA_REVIVAL_HZ: f64 = 2.4e6;
/// Coupler ceiling.
pub const KAPPA_MAX_HZ: f64 = 25e6;

pub const BELL_ANALYSIS_TIME: f64 = 750e-9;

// Dispersive probe (interferometer and Ramsey experiments)
pub const KAPPA_UDT_HZ: f64 = 147e6;
pub const KAPPA_Q_INTERF_HZ: f64 = 6e6;
pub const KAPPA_Q_RAMSEY_HZ: f64 = 7.65e6;
pub const G_RAMSEY_HZ: f64 = 23.72e6;
pub const Q2_PROBE_FREQUENCY: f64 = 4.190e9;
pub const DT_INTERF: f64 = 200e-9;
pub const DT_RAMSEY: f64 = 190e-9;

/// Readout visibility matrix as printed (rows are prepared states), with
/// "<0.001" read as 0.001.
pub const VISIBILITY_PRINTED: [[f64; 4]; 4] = [
    [0.959, 0.015, 0.025, 0.001],
    [0.031, 0.946, 0.001, 0.023],
    [0.033, 0.001, 0.949, 0.018],
    [0.001, 0.036, 0.031, 0.932],
];

/// Transducer geometry.
pub mod udt {
    pub const IDT_CELLS: usize = 24;
    pub const IDT_WAVELENGTH: f64 = 0.975e-6;
    pub const IDT_APERTURE: f64 = 150e-6;
    pub const IDT_METALLIZATION: f64 = 0.52;
    pub const IDT_REFLECTIVITY: f64 = 0.009;
    pub const IDT_DV_V: f64 = 0.0344;
    pub const MIRROR_ELECTRODES: usize = 488;
    pub const MIRROR_WAVELENGTH: f64 = 1.0e-6;
    pub const MIRROR_METALLIZATION: f64 = 0.79;
    /// Per-electrode magnitude; with [`MIRROR_VELOCITY`] the >20 dB
    /// stopband spans 3.87 to 4.01 GHz.
    pub const MIRROR_REFLECTIVITY: f64 = 0.055;
    pub const MIRROR_DV_V: f64 = 0.027;
    /// Effective wave velocity under the grating. The free velocity would
    /// centre a 1 μm grating at 3.863 GHz, below the unidirectional band.
    pub const MIRROR_VELOCITY: f64 = 3940.0;
    pub const D_EFF: f64 = 140e-9;
}
