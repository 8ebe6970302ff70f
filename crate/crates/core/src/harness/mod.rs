//! Monte-Carlo experiment orchestration.
//!
//! One drop runs the whole uplink chain: geometry and channels, pre-alignment
//! estimation (or ground truth), beam alignment per method, post-alignment
//! estimation (or ground truth), LMMSE detection of `T_D` QPSK slots, and
//! metric extraction. Every stage draws from its own seeded sub-stream so all
//! methods within a drop see the same channel, payload and noise.

pub mod metrics;
pub mod oracle;
pub mod output;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::beam_alignment::{
    analog_ia, analog_iu, build_codebook, digital_iu, single_antenna_baseline, BaError,
    BeamAssignment, BeamCodebook, Method,
};
use crate::channel::{
    extract_surrogate, generate_paths, paths_to_tensor, ChannelError, ChannelTensor,
    SurrogateMatrix,
};
use crate::chest::{build_beam_pilots, post_ba_chest, pre_ba_chest, ChannelEstimate, ChestError};
use crate::detection::{lmmse_bank, sinr, transmit_detect, DetectionError, Payload};
use crate::linalg::{vec_norm2, CMat};
use crate::model::{apply_power_control, noise_power_per_subcarrier, ModelError, Scenario};

use metrics::{rmsse, spectral_efficiency, to_db, MethodMetrics, MetricsReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    BeamAlignment(#[from] BaError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Chest(#[from] ChestError),
    #[error("drop {drop}: {source}")]
    Drop {
        drop: usize,
        source: Box<HarnessError>,
    },
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("no methods selected; nothing to report")]
    EmptyReport,
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Model(_) => "config",
            HarnessError::Channel(_) => "channel",
            HarnessError::BeamAlignment(_) => "beam_alignment",
            HarnessError::Detection(_) => "detection",
            HarnessError::Chest(_) => "chest",
            HarnessError::Drop { source, .. } => source.kind(),
            HarnessError::InvalidSpec(_) => "invalid_spec",
            HarnessError::EmptyReport => "empty_report",
            HarnessError::Io { .. } => "io",
        }
    }
}

/// Where beam alignment and detection get their channel knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChestMode {
    /// Ground truth for both beam alignment and detection.
    Genie,
    /// Estimated channel for beam alignment, ground truth for detection.
    PreBaOnly,
    /// Estimates for both.
    Full,
}

impl ChestMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ChestMode::Genie => "genie",
            ChestMode::PreBaOnly => "pre_ba_only",
            ChestMode::Full => "full",
        }
    }
}

impl fmt::Display for ChestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChestMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "genie" => Ok(ChestMode::Genie),
            "pre_ba_only" => Ok(ChestMode::PreBaOnly),
            "full" => Ok(ChestMode::Full),
            other => Err(HarnessError::InvalidSpec(format!("unknown chest mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub chest_mode: ChestMode,
    pub drops: usize,
    /// Data slots per drop (`T_D`).
    pub slots: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Also write per-drop solver diagnostics and beam records.
    pub diagnostics: bool,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario) -> Self {
        let seed = scenario.system.seed;
        ExperimentSpec {
            scenario,
            methods: Method::COMPARED.to_vec(),
            chest_mode: ChestMode::Genie,
            drops: 1,
            slots: 16,
            seed,
            out_dir: None,
            diagnostics: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        if self.methods.is_empty() {
            return Err(HarnessError::EmptyReport);
        }
        if self.methods.contains(&Method::Exhaustive) {
            return Err(HarnessError::InvalidSpec(
                "exhaustive search is an oracle, not an experiment method".into(),
            ));
        }
        if self.drops == 0 || self.slots == 0 {
            return Err(HarnessError::InvalidSpec("drops and slots must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Independent sub-streams of one drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Geometry = 1,
    Paths = 2,
    Clustering = 3,
    PilotNoise = 4,
    PostPilotNoise = 5,
    Payload = 6,
    DataNoise = 7,
}

/// RNG for `stream` of drop `drop` under master `seed`.
pub fn stream_rng(seed: u64, drop: usize, stream: Stream) -> ChaCha8Rng {
    // splitmix64 finalizer over (seed, drop)
    let mut z = seed ^ (drop as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(stream as u64);
    rng
}

/// Unit-transmit-power channel tensor of a drop.
pub fn drop_channel(scenario: &Scenario, seed: u64, drop: usize) -> Result<ChannelTensor, HarnessError> {
    let cfg = &scenario.system;
    let geom = scenario
        .geometry
        .generate(cfg, &mut stream_rng(seed, drop, Stream::Geometry))?;
    let paths = generate_paths(
        &geom,
        cfg,
        &scenario.channel,
        &mut stream_rng(seed, drop, Stream::Paths),
    );
    Ok(paths_to_tensor(&paths, cfg)?)
}

/// Per-method outcome of one drop.
#[derive(Debug, Clone)]
pub struct MethodDrop {
    pub method: Method,
    pub assignment: BeamAssignment,
    pub metrics: MethodMetrics,
}

#[derive(Debug, Clone)]
pub struct DropOutcome {
    pub drop: usize,
    pub methods: Vec<MethodDrop>,
    pub pilot_snr_db: f64,
    pub estimate: Option<ChannelEstimate>,
    pub ia_trace: Option<crate::beam_alignment::IaOutcome>,
}

fn sampled_zero_based(scenario: &Scenario) -> Vec<usize> {
    scenario
        .system
        .sampled_subcarriers
        .iter()
        .map(|&v| v - 1)
        .collect()
}

/// Median over UEs of the strongest-beam pilot SNR `max_b ‖H̄_k p_b‖²·Es/(N_R·N0)`,
/// on the true channel's sampled-subcarrier surrogate.
fn pilot_snr_db(surrogate: &SurrogateMatrix, codebook: &BeamCodebook, n0: f64, es: f64) -> f64 {
    let n_r = surrogate.n_r() as f64;
    let per_ue: Vec<f64> = (0..surrogate.ues)
        .map(|k| {
            let hk = surrogate.ue_block(k);
            let best = codebook
                .beams
                .iter()
                .map(|p| vec_norm2(&(&hk * p)))
                .fold(0.0, f64::max);
            to_db(best * es / (n_r * n0))
        })
        .collect();
    metrics::quantile(&per_ue, 0.5)
}

/// Runs one drop on a given unit-power channel tensor.
pub fn run_drop_on(
    spec: &ExperimentSpec,
    drop: usize,
    raw: &ChannelTensor,
) -> Result<DropOutcome, HarnessError> {
    let scenario = &spec.scenario;
    let cfg = &scenario.system;
    let seed = spec.seed;
    let d = raw.dims();
    if d.aps != cfg.aps || d.ues != cfg.ues || d.ap_antennas != cfg.ap_antennas
        || d.ue_antennas != cfg.ue_antennas || d.subcarriers != cfg.subcarriers
    {
        return Err(HarnessError::InvalidSpec(format!(
            "channel dims {d:?} do not match the scenario"
        )));
    }
    let n0 = noise_power_per_subcarrier(cfg);
    let es = cfg.symbol_energy;
    let (tensor, _pc) = apply_power_control(raw, cfg)?;
    let codebook = build_codebook(cfg.ue_antennas, cfg.codebook_size);
    let sampled = sampled_zero_based(scenario);

    let pilot_snr = pilot_snr_db(&extract_surrogate(&tensor, &sampled)?, &codebook, n0, es);

    let needs_surrogate = spec.methods.iter().any(|&m| m != Method::SingleAntenna);
    let mut estimate = None;
    let surrogate = if !needs_surrogate {
        None
    } else if spec.chest_mode == ChestMode::Genie {
        let all: Vec<usize> = (0..cfg.subcarriers).collect();
        Some(extract_surrogate(&tensor, &all)?)
    } else {
        let pilots = build_beam_pilots(
            &codebook,
            cfg.ues,
            cfg.pilot_clusters,
            &mut stream_rng(seed, drop, Stream::Clustering),
        )?;
        let est = pre_ba_chest(
            &tensor,
            &pilots,
            &sampled,
            n0,
            &scenario.chest,
            &mut stream_rng(seed, drop, Stream::PilotNoise),
        )?;
        let s = extract_surrogate(&est, &sampled)?;
        estimate = Some(est);
        Some(s)
    };

    let payload = Payload::random(
        cfg.ues,
        cfg.subcarriers,
        spec.slots,
        es,
        &mut stream_rng(seed, drop, Stream::Payload),
    );

    let single_tensor = if spec.methods.contains(&Method::SingleAntenna) {
        Some(apply_power_control(&raw.first_antenna(), cfg)?.0)
    } else {
        None
    };

    let mut ia_trace = None;
    let mut methods = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let (chan, assignment): (&ChannelTensor, BeamAssignment) = match method {
            Method::SingleAntenna => (
                single_tensor.as_ref().expect("single-antenna tensor built"),
                single_antenna_baseline(cfg.ues),
            ),
            Method::DigitalIu => (&tensor, digital_iu(surrogate.as_ref().unwrap())?),
            Method::AnalogIu => (&tensor, analog_iu(surrogate.as_ref().unwrap(), &codebook)),
            Method::AnalogIa => {
                let out = analog_ia(surrogate.as_ref().unwrap(), &codebook, n0, es)?;
                let a = out.assignment.clone();
                ia_trace = Some(out);
                (&tensor, a)
            }
            Method::Exhaustive => unreachable!("rejected by validate"),
        };
        let beams = assignment.vectors();
        let truth = chan.effective_all(beams);
        let for_detection: Vec<CMat> = match spec.chest_mode {
            ChestMode::Full => post_ba_chest(
                chan,
                beams,
                n0,
                es,
                &mut stream_rng(seed, drop, Stream::PostPilotNoise),
            ),
            _ => truth.clone(),
        };
        let bank = lmmse_bank(&for_detection, n0, es)?;
        let detected = transmit_detect(
            &truth,
            &bank,
            &payload,
            n0,
            es,
            &mut stream_rng(seed, drop, Stream::DataNoise),
        )?;

        let mut mm = MethodMetrics::default();
        for k in 0..cfg.ues {
            let per_sc: Vec<f64> = truth
                .iter()
                .zip(&bank.filters)
                .map(|(g, w)| sinr(k, g, w, n0, es))
                .collect();
            mm.se.push(spectral_efficiency(&per_sc));
            mm.sinr_db.extend(per_sc.iter().map(|&s| to_db(s)));
            let errors: usize = detected
                .hard
                .iter()
                .zip(&payload.symbols)
                .map(|(h, s)| (0..s.ncols()).filter(|&t| h[(k, t)] != s[(k, t)]).count())
                .sum();
            mm.ser.push(errors as f64 / (cfg.subcarriers * spec.slots) as f64);
        }
        mm.rmsse = rmsse(&detected.soft, &payload.symbols);
        methods.push(MethodDrop {
            method,
            assignment,
            metrics: mm,
        });
    }
    Ok(DropOutcome {
        drop,
        methods,
        pilot_snr_db: pilot_snr,
        estimate,
        ia_trace,
    })
}

pub fn run_drop(spec: &ExperimentSpec, drop: usize) -> Result<DropOutcome, HarnessError> {
    let raw = drop_channel(&spec.scenario, spec.seed, drop)?;
    run_drop_on(spec, drop, &raw)
}

/// Merges drop outcomes in drop order.
pub fn collect_report(spec: &ExperimentSpec, outcomes: &[DropOutcome]) -> MetricsReport {
    let mut report = MetricsReport {
        drops: outcomes.len(),
        ..Default::default()
    };
    for m in &spec.methods {
        report.methods.entry(*m).or_default();
    }
    for o in outcomes {
        report.pilot_snr_db.push(o.pilot_snr_db);
        for md in &o.methods {
            report
                .methods
                .get_mut(&md.method)
                .unwrap()
                .extend(md.metrics.clone());
        }
    }
    report
}

fn write_diagnostics(spec: &ExperimentSpec, outcomes: &[DropOutcome]) -> Result<(), HarnessError> {
    let Some(out) = &spec.out_dir else {
        return Ok(());
    };
    let dir = out.join("diagnostics");
    let io = |path: &std::path::Path, source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    for o in outcomes {
        if let Some(est) = &o.estimate {
            let p = dir.join(format!("drop{:04}_chest.csv", o.drop));
            std::fs::write(&p, est.diagnostics_csv()).map_err(|e| io(&p, e))?;
            let p = dir.join(format!("drop{:04}_chest_trace.csv", o.drop));
            std::fs::write(&p, est.trace_csv()).map_err(|e| io(&p, e))?;
        }
        for md in &o.methods {
            let p = dir.join(format!("drop{:04}_{}.beams", o.drop, md.method));
            std::fs::write(&p, md.assignment.to_record()).map_err(|e| io(&p, e))?;
        }
    }
    Ok(())
}

/// Runs all drops (in parallel) and, when an output directory is set, writes
/// the CDF and summary CSVs.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricsReport, HarnessError> {
    spec.validate()?;
    let outcomes = (0..spec.drops)
        .into_par_iter()
        .map(|d| {
            run_drop(spec, d).map_err(|e| HarnessError::Drop {
                drop: d,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = collect_report(spec, &outcomes);
    if let Some(out) = &spec.out_dir {
        output::emit_cdfs(&report, out)?;
        if spec.diagnostics {
            write_diagnostics(spec, &outcomes)?;
        }
    }
    Ok(report)
}

/// Single-drop experiment on an externally supplied channel tensor.
pub fn run_on_tensor(spec: &ExperimentSpec, raw: &ChannelTensor) -> Result<MetricsReport, HarnessError> {
    spec.validate()?;
    let outcome = run_drop_on(spec, 0, raw).map_err(|e| HarnessError::Drop {
        drop: 0,
        source: Box::new(e),
    })?;
    let outcomes = [outcome];
    let report = collect_report(spec, &outcomes);
    if let Some(out) = &spec.out_dir {
        output::emit_cdfs(&report, out)?;
        if spec.diagnostics {
            write_diagnostics(spec, &outcomes)?;
        }
    }
    Ok(report)
}
