//! Synthetic cohort generation with known ground truth: event schedules,
//! per-phase signal signatures, and demographic clusters.

pub mod ecg;
pub mod eeg;

pub use ecg::{synth_ecg, EcgSynthParams};
pub use eeg::{synth_eeg, ChannelBandWeights};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::domain::{
    is_canonical_label, Demographics, EventAnnotation, MultiChannelSeries, PatientRecord,
    SampleSeries, Sex, Side, EEG_CHANNELS,
};
use crate::error::{Error, Result};
use crate::rng::{
    derive_seed, seeded_rng, stream_id, NS_PATIENT, SUB_ABP, SUB_DEMOG, SUB_ECG, SUB_EEG,
    SUB_NIRS, SUB_SPO2,
};

pub const ECG_RATE_HZ: f64 = 128.0;
pub const EEG_RATE_HZ: f64 = 128.0;
pub const ABP_RATE_HZ: f64 = 10.0;
pub const NIRS_RATE_HZ: f64 = 1.0;
pub const SPO2_RATE_HZ: f64 = 1.0;

/// One scheduled procedure phase.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub label: String,
    pub duration_s: f64,
}

/// Template shared by every patient of one cluster.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub sex: Sex,
    pub clamp_side: Side,
    /// Inclusive age bounds; patient ages draw uniformly from this range.
    pub age_range: [u32; 2],
    /// Baseline EEG band powers (delta, theta, alpha, beta, gamma).
    pub eeg_band_power: [f64; 5],
    /// Mean ABP per schedule phase, mmHg; one entry per phase.
    pub abp_by_phase: Vec<f64>,
    pub nirs_baseline_pct: f64,
    /// Fractional ipsilateral rSO2 drop while the artery is clamped.
    pub nirs_clamp_drop: f64,
    pub spo2_pct: f64,
    pub ecg: EcgSynthParams,
}

/// Full declarative description of a synthetic cohort.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub phases: Vec<PhaseSpec>,
    pub clusters: Vec<ClusterSpec>,
    /// Filled from the command line; not expected inside spec files.
    #[serde(default)]
    pub master_seed: u64,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::param("n_patients", "must be >= 1".to_string()));
        }
        if self.clusters.is_empty() {
            return Err(Error::param("clusters", "need at least one cluster".to_string()));
        }
        if self.clusters.len() > self.n_patients {
            return Err(Error::param(
                "clusters",
                format!("{} clusters exceed {} patients", self.clusters.len(), self.n_patients),
            ));
        }
        if self.phases.is_empty() {
            return Err(Error::param("phases", "schedule must not be empty".to_string()));
        }
        for phase in &self.phases {
            if !is_canonical_label(&phase.label) {
                return Err(Error::Vocabulary(phase.label.clone()));
            }
            if phase.duration_s < 120.0 {
                return Err(Error::param(
                    "phases",
                    format!("phase {} lasts {} s, minimum is 120 s", phase.label, phase.duration_s),
                ));
            }
        }
        for (idx, cluster) in self.clusters.iter().enumerate() {
            if cluster.abp_by_phase.len() != self.phases.len() {
                return Err(Error::param(
                    "abp_by_phase",
                    format!(
                        "cluster {idx} lists {} ABP levels for {} phases",
                        cluster.abp_by_phase.len(),
                        self.phases.len()
                    ),
                ));
            }
            if cluster.age_range[0] > cluster.age_range[1] {
                return Err(Error::param("age_range", format!("cluster {idx} range is reversed")));
            }
            if !(0.0..=1.0).contains(&cluster.nirs_clamp_drop) {
                return Err(Error::param(
                    "nirs_clamp_drop",
                    format!("cluster {idx} drop must be in [0, 1]"),
                ));
            }
            cluster.ecg.validate()?;
        }
        Ok(())
    }

    /// Cluster index of patient `i`: contiguous blocks in id order.
    pub fn cluster_of(&self, patient_idx: usize) -> usize {
        patient_idx * self.clusters.len() / self.n_patients
    }

    pub fn total_duration_s(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_s).sum()
    }

    /// Built-in two-cluster cohort used by the examples and the test suite:
    /// a female/left-clamp cluster in its fifties and a male/right-clamp
    /// cluster in its seventies, with distinct pressure, rSO2, EEG mixture,
    /// heart rate, and ventilation signatures.
    pub fn two_cluster_example(n_patients: usize) -> CohortSpec {
        let phases = vec![
            PhaseSpec { label: "pre_induction".into(), duration_s: 600.0 },
            PhaseSpec { label: "pre_clamp_anaesthesia".into(), duration_s: 900.0 },
            PhaseSpec { label: "hrv_window_pre_clamp".into(), duration_s: 180.0 },
            PhaseSpec { label: "pre_clamp_surgery".into(), duration_s: 900.0 },
            PhaseSpec { label: "clamped_artery".into(), duration_s: 900.0 },
            PhaseSpec { label: "shunt".into(), duration_s: 600.0 },
            PhaseSpec { label: "hrv_window_post_clamp".into(), duration_s: 180.0 },
            PhaseSpec { label: "post_op_anaesthesia".into(), duration_s: 600.0 },
            PhaseSpec { label: "post_op_care".into(), duration_s: 600.0 },
        ];
        let cluster_a = ClusterSpec {
            sex: Sex::Female,
            clamp_side: Side::Left,
            age_range: [50, 60],
            eeg_band_power: [40.0, 18.0, 22.0, 10.0, 4.0],
            abp_by_phase: vec![95.0, 78.0, 76.0, 82.0, 105.0, 98.0, 80.0, 75.0, 90.0],
            nirs_baseline_pct: 72.0,
            nirs_clamp_drop: 0.18,
            spo2_pct: 98.0,
            ecg: EcgSynthParams {
                base_hr_bpm: 62.0,
                hrv_sdnn_ms: 45.0,
                resp_freq_hz: 0.10,
                resp_depth_ms: 35.0,
                noise_snr_db: 20.0,
                qrs_width_ms: 100.0,
            },
        };
        let cluster_b = ClusterSpec {
            sex: Sex::Male,
            clamp_side: Side::Right,
            age_range: [72, 82],
            eeg_band_power: [24.0, 14.0, 30.0, 14.0, 6.0],
            abp_by_phase: vec![102.0, 84.0, 81.0, 88.0, 114.0, 106.0, 86.0, 80.0, 97.0],
            nirs_baseline_pct: 68.0,
            nirs_clamp_drop: 0.22,
            spo2_pct: 96.5,
            ecg: EcgSynthParams {
                base_hr_bpm: 78.0,
                hrv_sdnn_ms: 30.0,
                resp_freq_hz: 0.25,
                resp_depth_ms: 25.0,
                noise_snr_db: 20.0,
                qrs_width_ms: 90.0,
            },
        };
        CohortSpec {
            n_patients,
            phases,
            clusters: vec![cluster_a, cluster_b],
            master_seed: 0,
        }
    }
}

/// Per-phase multipliers applied to the cluster's EEG band powers,
/// modeling anaesthesia depth (slow-wave dominance under anaesthesia,
/// faster activity awake). Clamping barely moves the EEG when collateral
/// circulation is adequate, and a shunt restores perfusion outright, so
/// both stay close to the anaesthesia profile; the clamp signature lives
/// in the NIRS and ABP channels instead.
fn phase_band_modifiers(label: &str) -> [f64; 5] {
    match label {
        "pre_induction" => [0.80, 0.90, 1.10, 1.30, 1.20],
        "pre_clamp_anaesthesia" => [1.60, 1.30, 0.90, 0.60, 0.50],
        "hrv_window_pre_clamp" => [1.55, 1.25, 0.90, 0.62, 0.50],
        "pre_clamp_surgery" => [1.40, 1.20, 0.90, 0.70, 0.60],
        "clamped_artery" => [1.68, 1.27, 0.87, 0.58, 0.48],
        "shunt" => [1.58, 1.29, 0.89, 0.61, 0.50],
        "hrv_window_post_clamp" => [1.45, 1.20, 0.88, 0.68, 0.58],
        "post_op_anaesthesia" => [1.20, 1.10, 1.00, 0.85, 0.80],
        "post_op_care" => [0.90, 0.95, 1.05, 1.20, 1.10],
        _ => [1.0; 5],
    }
}

/// Fraction of the clamp-time rSO2 drop that persists under a shunt.
const SHUNT_RESIDUAL_DROP: f64 = 0.3;

/// Numeric signature of one patient after per-patient jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSignature {
    pub ecg: EcgSynthParams,
    pub eeg_band_power: [f64; 5],
    pub abp_by_phase: Vec<f64>,
    pub nirs_baseline_pct: f64,
    pub nirs_clamp_drop: f64,
    pub spo2_pct: f64,
}

fn phase_boundaries(phases: &[PhaseSpec]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(phases.len() + 1);
    let mut t = 0.0;
    edges.push(0.0);
    for p in phases {
        t += p.duration_s;
        edges.push(t);
    }
    edges
}

fn phase_index_at(edges: &[f64], t: f64) -> usize {
    let k = edges.partition_point(|&e| e <= t);
    k.saturating_sub(1).min(edges.len().saturating_sub(2))
}

/// Generates one patient record from a resolved signature.
///
/// Signals are piecewise-parameterized per phase: ABP follows the phase
/// levels, the ipsilateral NIRS channel drops while the artery is clamped
/// (partially under a shunt), and the EEG band mixture shifts with
/// anaesthesia depth. The events list equals the schedule.
pub fn synth_patient(
    id: &str,
    demographics: &Demographics,
    phases: &[PhaseSpec],
    signature: &PatientSignature,
    seed: u64,
) -> Result<PatientRecord> {
    if phases.is_empty() {
        return Err(Error::param("phases", "schedule must not be empty".to_string()));
    }
    for p in phases {
        if !is_canonical_label(&p.label) {
            return Err(Error::Vocabulary(p.label.clone()));
        }
    }
    let edges = phase_boundaries(phases);
    let total_s = *edges.last().unwrap();

    let events: Vec<EventAnnotation> = phases
        .iter()
        .zip(edges.windows(2))
        .map(|(p, e)| EventAnnotation { start_s: e[0], end_s: e[1], label: p.label.clone() })
        .collect();

    let (ecg, _truth) =
        synth_ecg(&signature.ecg, total_s, ECG_RATE_HZ, derive_seed(seed, SUB_ECG))?;

    // EEG phase by phase, each with its own stream, concatenated.
    let mut eeg_channels: Vec<Vec<f64>> = vec![Vec::new(); EEG_CHANNELS.len()];
    for (phase_idx, phase) in phases.iter().enumerate() {
        let modifiers = phase_band_modifiers(&phase.label);
        let mut weights = [0.0f64; 5];
        for b in 0..5 {
            weights[b] = signature.eeg_band_power[b] * modifiers[b];
        }
        let segment = synth_eeg(
            &[weights; 6],
            phase.duration_s,
            EEG_RATE_HZ,
            derive_seed(seed, stream_id(SUB_EEG, phase_idx as u64)),
        )?;
        for (chan, seg) in eeg_channels.iter_mut().zip(segment.channels) {
            chan.extend(seg);
        }
    }
    let eeg = MultiChannelSeries {
        rate_hz: EEG_RATE_HZ,
        start_s: 0.0,
        channel_names: EEG_CHANNELS.iter().map(|s| s.to_string()).collect(),
        channels: eeg_channels,
    };

    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut abp_rng = seeded_rng(seed, SUB_ABP);
    let n_abp = (total_s * ABP_RATE_HZ).round() as usize;
    let abp_values: Vec<f64> = (0..n_abp)
        .map(|i| {
            let t = i as f64 / ABP_RATE_HZ;
            let level = signature.abp_by_phase[phase_index_at(&edges, t)];
            level
                + 1.2 * (2.0 * std::f64::consts::PI * 0.01 * t).sin()
                + 2.0 * normal.sample(&mut abp_rng)
        })
        .collect();
    let abp = SampleSeries::new(ABP_RATE_HZ, 0.0, abp_values);

    let mut nirs_rng = seeded_rng(seed, SUB_NIRS);
    let n_nirs = (total_s * NIRS_RATE_HZ).round() as usize;
    let mut nirs_left_values = Vec::with_capacity(n_nirs);
    let mut nirs_right_values = Vec::with_capacity(n_nirs);
    for i in 0..n_nirs {
        let t = i as f64 / NIRS_RATE_HZ;
        let label = &phases[phase_index_at(&edges, t)].label;
        let ipsi_factor = match label.as_str() {
            "clamped_artery" => 1.0 - signature.nirs_clamp_drop,
            "shunt" => 1.0 - SHUNT_RESIDUAL_DROP * signature.nirs_clamp_drop,
            _ => 1.0,
        };
        let base = signature.nirs_baseline_pct;
        let (left_level, right_level) = match demographics.operated_side {
            Side::Left => (base * ipsi_factor, base),
            Side::Right => (base, base * ipsi_factor),
        };
        nirs_left_values.push(left_level + 0.8 * normal.sample(&mut nirs_rng));
        nirs_right_values.push(right_level + 0.8 * normal.sample(&mut nirs_rng));
    }
    let nirs_left = SampleSeries::new(NIRS_RATE_HZ, 0.0, nirs_left_values);
    let nirs_right = SampleSeries::new(NIRS_RATE_HZ, 0.0, nirs_right_values);

    let mut spo2_rng = seeded_rng(seed, SUB_SPO2);
    let n_spo2 = (total_s * SPO2_RATE_HZ).round() as usize;
    let spo2_values: Vec<f64> = (0..n_spo2)
        .map(|_| (signature.spo2_pct + 0.3 * normal.sample(&mut spo2_rng)).clamp(50.0, 100.0))
        .collect();
    let spo2 = SampleSeries::new(SPO2_RATE_HZ, 0.0, spo2_values);

    Ok(PatientRecord {
        id: id.to_string(),
        demographics: demographics.clone(),
        ecg,
        eeg,
        abp,
        nirs_left,
        nirs_right,
        spo2,
        events,
    })
}

/// Resolves cluster template plus per-patient jitter into a signature and
/// demographics. Draw order is fixed; changing it changes every cohort.
fn jittered_patient(
    spec: &CohortSpec,
    patient_idx: usize,
) -> (Demographics, PatientSignature) {
    let cluster = &spec.clusters[spec.cluster_of(patient_idx)];
    let mut rng = seeded_rng(
        derive_seed(spec.master_seed, stream_id(NS_PATIENT, patient_idx as u64)),
        SUB_DEMOG,
    );
    let age_years = rng.gen_range(cluster.age_range[0]..=cluster.age_range[1]);
    let hr_offset = rng.gen_range(-6.0..6.0);
    let sdnn_scale = rng.gen_range(0.85..1.20);
    let abp_offset = rng.gen_range(-8.0..8.0);
    let mut eeg_band_power = cluster.eeg_band_power;
    for w in &mut eeg_band_power {
        *w *= rng.gen_range(0.75..1.35);
    }
    let nirs_offset = rng.gen_range(-4.0..4.0);
    let spo2_offset = rng.gen_range(-1.0..1.0);

    let demographics = Demographics {
        age_years,
        sex: cluster.sex,
        operated_side: cluster.clamp_side,
    };
    let signature = PatientSignature {
        ecg: EcgSynthParams {
            base_hr_bpm: cluster.ecg.base_hr_bpm + hr_offset,
            hrv_sdnn_ms: cluster.ecg.hrv_sdnn_ms * sdnn_scale,
            ..cluster.ecg
        },
        eeg_band_power,
        abp_by_phase: cluster.abp_by_phase.iter().map(|v| v + abp_offset).collect(),
        nirs_baseline_pct: cluster.nirs_baseline_pct + nirs_offset,
        nirs_clamp_drop: cluster.nirs_clamp_drop,
        spo2_pct: cluster.spo2_pct + spo2_offset,
    };
    (demographics, signature)
}

/// Patient id for index `i`: C001, C002, ...
pub fn patient_id(i: usize) -> String {
    format!("C{:03}", i + 1)
}

/// Generates the whole cohort. Per-patient RNG streams derive from the
/// master seed and the patient index, so results are independent of
/// generation order and thread count.
pub fn synth_cohort(spec: &CohortSpec) -> Result<Vec<PatientRecord>> {
    spec.validate()?;
    (0..spec.n_patients)
        .into_par_iter()
        .map(|i| {
            let (demographics, signature) = jittered_patient(spec, i);
            let seed = derive_seed(spec.master_seed, stream_id(NS_PATIENT, i as u64));
            synth_patient(&patient_id(i), &demographics, &spec.phases, &signature, seed)
        })
        .collect()
}

/// Parses and validates a cohort spec from TOML text.
pub fn cohort_spec_from_toml(text: &str) -> Result<CohortSpec> {
    let spec: CohortSpec =
        toml::from_str(text).map_err(|e| Error::Format(format!("cohort spec: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

/// Loads a cohort spec file.
pub fn load_cohort_spec(path: &std::path::Path) -> Result<CohortSpec> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    cohort_spec_from_toml(&std::fs::read_to_string(path)?)
}
