//! Command-line front end. Every run is driven by a [`RunConfig`], read from a
//! TOML file and then overridden by flags; outputs land in the configured
//! directory as JSON and CSV and embed the resolved config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_mcx, build_qft, circuit_to_dense, decompose_to_rotations, Circuit, CircuitError};
use crate::depth::{find_crossover, CircuitKind, CnotFormula, CrossoverReport, DepthError, DepthModel};
use crate::mpo::{mpo_to_dense, operator_fidelity, zip_up, Mpo, MpoError, DENSE_MAX_SITES};
use crate::noise::{
    circuit_channel, optimal_unitary_correction, CoherentMode, CoherentNoise, IncoherentNoise, NoiseError, NoiseModel,
    CHANNEL_MAX_QUBITS,
};
use crate::qem::{calibrate_method1, calibrate_method2, sample_trial_state, CalibrationReport, MitigationLayer, OptimizerConfig, QemError};
use crate::sim::haar_state;
use crate::verifier::{build_verifier_with, VerifierCircuit, VerifierError, VerifierKind};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Largest register `verifier-check` will simulate.
const VERIFY_MAX_QUBITS: usize = 26;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric guard: {0}")]
    Guard(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Guard(_) => EXIT_GUARD,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::TooWide { .. } => Self::Guard(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<MpoError> for CliError {
    fn from(e: MpoError) -> Self {
        match e {
            MpoError::ZeroChi | MpoError::BadCutoff(_) => Self::Config(e.to_string()),
            MpoError::TooWide { .. } => Self::Guard(e.to_string()),
            MpoError::Circuit(c) => c.into(),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<VerifierError> for CliError {
    fn from(e: VerifierError) -> Self {
        match e {
            VerifierError::Mpo(m) => m.into(),
            VerifierError::StateLength { .. } | VerifierError::NotNormalized(_) => Self::Guard(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        match e {
            NoiseError::Invalid(_) | NoiseError::NoCoherent => Self::Config(e.to_string()),
            NoiseError::TooWide { .. } | NoiseError::Singular { .. } => Self::Guard(e.to_string()),
            NoiseError::Circuit(c) => c.into(),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<QemError> for CliError {
    fn from(e: QemError) -> Self {
        match e {
            QemError::Circuit(c) => c.into(),
            QemError::Noise(n) => n.into(),
            QemError::Verifier(v) => v.into(),
            QemError::Config(_) | QemError::Incoherent => Self::Config(e.to_string()),
            QemError::Impossible(_) | QemError::Width { .. } => Self::Guard(e.to_string()),
            QemError::Io(_) => Self::Runtime(e.to_string()),
        }
    }
}

impl From<DepthError> for CliError {
    fn from(e: DepthError) -> Self {
        match e {
            DepthError::Io(_) => Self::Runtime(e.to_string()),
            DepthError::Circuit(c) => c.into(),
            _ => Self::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CircuitChoice {
    Qft,
    Mcx,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VerifierChoice {
    Staircase,
    Flagged,
}

impl From<VerifierChoice> for VerifierKind {
    fn from(v: VerifierChoice) -> Self {
        match v {
            VerifierChoice::Staircase => VerifierKind::Staircase,
            VerifierChoice::Flagged => VerifierKind::Flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitSpec {
    pub kind: CircuitChoice,
    /// Total qubits, controls plus target for MCX.
    pub n: usize,
    pub chi: usize,
    /// Relative singular-value cutoff during MPO construction.
    pub cutoff: f64,
}

impl Default for CircuitSpec {
    fn default() -> Self {
        Self {
            kind: CircuitChoice::Mcx,
            n: 3,
            chi: 2,
            cutoff: 1e-12,
        }
    }
}

impl CircuitSpec {
    pub fn build(&self) -> Result<Circuit> {
        if self.n == 0 {
            return Err(CliError::Config("circuit.n must be positive".into()));
        }
        Ok(match self.kind {
            CircuitChoice::Qft => build_qft(self.n, false),
            CircuitChoice::Identity => Circuit::new(self.n),
            CircuitChoice::Mcx if self.n < 2 => return Err(CliError::Config("mcx needs n >= 2".into())),
            CircuitChoice::Mcx => build_mcx(self.n - 1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierSettings {
    pub trials: usize,
    pub kind: VerifierChoice,
}

impl Default for VerifierSettings {
    fn default() -> Self {
        Self {
            trials: 100,
            kind: VerifierChoice::Staircase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationSettings {
    pub method: u8,
    pub layers: usize,
    pub cz_ring: bool,
}

impl Default for MitigationSettings {
    fn default() -> Self {
        Self {
            method: 2,
            layers: 1,
            cz_ring: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    pub kind: CircuitKind,
    pub chis: Vec<usize>,
    pub n_max: usize,
}

impl Default for ScanSettings {
    fn default() -> Self {
        Self {
            kind: CircuitKind::Qft,
            chis: vec![2, 4, 8],
            n_max: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    /// When set, replaces the noise, optimizer and trial seeds with streams
    /// derived from it.
    pub seed: Option<u64>,
    /// Seed of the trial states drawn by `verifier-check`.
    pub trial_seed: u64,
    pub output_dir: PathBuf,
    pub circuit: CircuitSpec,
    pub noise: NoiseModel,
    pub optimizer: OptimizerConfig,
    pub depth: DepthModel,
    pub verifier: VerifierSettings,
    pub mitigation: MitigationSettings,
    pub scan: ScanSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: "run".into(),
            seed: None,
            trial_seed: 0,
            output_dir: PathBuf::from("out"),
            circuit: CircuitSpec::default(),
            noise: NoiseModel::coherent(CoherentNoise::default()),
            optimizer: OptimizerConfig::default(),
            depth: DepthModel::default(),
            verifier: VerifierSettings::default(),
            mitigation: MitigationSettings::default(),
            scan: ScanSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pushes the master seed, if any, into every component seed.
    pub fn resolve_seeds(&mut self) {
        let Some(master) = self.seed else { return };
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(k);
            rng.random::<u64>()
        };
        if let Some(c) = &mut self.noise.coherent {
            c.seed = stream(1);
        }
        self.optimizer.seed = stream(2);
        self.trial_seed = stream(3);
    }

    fn out_path(&self, suffix: &str) -> PathBuf {
        self.output_dir.join(format!("{}.{suffix}", self.experiment))
    }
}

#[derive(Debug, Parser)]
#[command(name = "mpoverify", version = VERSION, about = "MPO verifier circuits, error mitigation and depth estimates")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub experiment: Option<String>,
    /// Master seed for every stochastic draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CircuitArgs {
    #[arg(long, value_enum)]
    pub kind: Option<CircuitChoice>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub chi: Option<usize>,
    #[arg(long)]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct NoiseArgs {
    /// Mean over-rotation, radians.
    #[arg(long)]
    pub mean: Option<f64>,
    #[arg(long)]
    pub std: Option<f64>,
    #[arg(long)]
    pub per_shot: bool,
    /// Drop the coherent part of the noise model.
    #[arg(long)]
    pub no_coherent: bool,
    #[arg(long)]
    pub depolarizing: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub dephasing: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an MPO from a circuit and report its bond profile.
    MpoBuild {
        #[command(flatten)]
        circuit: CircuitArgs,
    },
    /// Run matched and mismatched trial pairs through a verifier circuit.
    VerifierCheck {
        #[command(flatten)]
        circuit: CircuitArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        verifier: Option<VerifierChoice>,
        /// Load the MPO from `BASE.mpo.json` instead of building it.
        #[arg(long)]
        mpo: Option<PathBuf>,
    },
    /// Depth curves and crossover points.
    DepthScan {
        #[arg(long)]
        kind: Option<CircuitKind>,
        /// Bond dimensions to scan, comma separated.
        #[arg(long, value_delimiter = ',')]
        chi: Option<Vec<usize>>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        d1: Option<f64>,
        #[arg(long)]
        d2: Option<f64>,
        #[arg(long)]
        swap_cost: Option<u32>,
        /// Charge nothing for opaque verifier gates.
        #[arg(long)]
        zero_cost: bool,
    },
    /// Verifier-driven calibration of a noisy circuit.
    Calibrate {
        #[command(flatten)]
        circuit: CircuitArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        method: Option<u8>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        cz_ring: bool,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Best unitary correction of a noisy channel.
    IncoherentAnalysis {
        #[command(flatten)]
        circuit: CircuitArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
}

fn apply_circuit_args(cfg: &mut RunConfig, a: &CircuitArgs) {
    let c = &mut cfg.circuit;
    c.kind = a.kind.unwrap_or(c.kind);
    c.n = a.n.unwrap_or(c.n);
    c.chi = a.chi.unwrap_or(c.chi);
    c.cutoff = a.cutoff.unwrap_or(c.cutoff);
}

fn apply_noise_args(cfg: &mut RunConfig, a: &NoiseArgs) {
    let nm = &mut cfg.noise;
    if a.no_coherent {
        nm.coherent = None;
    } else if a.mean.is_some() || a.std.is_some() || a.per_shot {
        let c = nm.coherent.get_or_insert_with(CoherentNoise::default);
        c.mean = a.mean.unwrap_or(c.mean);
        c.std = a.std.unwrap_or(c.std);
        if a.per_shot {
            c.mode = CoherentMode::PerShot;
        }
    }
    if a.depolarizing.is_some() || a.damping.is_some() || a.dephasing.is_some() {
        let i = nm.incoherent.get_or_insert_with(IncoherentNoise::default);
        i.depolarizing_p = a.depolarizing.unwrap_or(i.depolarizing_p);
        i.amplitude_damping_gamma = a.damping.unwrap_or(i.amplitude_damping_gamma);
        i.dephasing_lambda = a.dephasing.unwrap_or(i.dephasing_lambda);
    }
}

/// Config file, then global flags, then command flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(e) = &cli.experiment {
        cfg.experiment = e.clone();
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    match &cli.command {
        Command::MpoBuild { circuit } => apply_circuit_args(&mut cfg, circuit),
        Command::VerifierCheck { circuit, trials, verifier, .. } => {
            apply_circuit_args(&mut cfg, circuit);
            cfg.verifier.trials = trials.unwrap_or(cfg.verifier.trials);
            cfg.verifier.kind = verifier.unwrap_or(cfg.verifier.kind);
        }
        Command::DepthScan {
            kind,
            chi,
            n_max,
            d1,
            d2,
            swap_cost,
            zero_cost,
        } => {
            cfg.scan.kind = kind.unwrap_or(cfg.scan.kind);
            if let Some(c) = chi {
                cfg.scan.chis = c.clone();
            }
            cfg.scan.n_max = n_max.unwrap_or(cfg.scan.n_max);
            cfg.depth.d1 = d1.unwrap_or(cfg.depth.d1);
            cfg.depth.d2 = d2.unwrap_or(cfg.depth.d2);
            cfg.depth.swap_cost = swap_cost.unwrap_or(cfg.depth.swap_cost);
            if *zero_cost {
                cfg.depth.cnot_formula = CnotFormula::Zero;
            }
        }
        Command::Calibrate {
            circuit,
            noise,
            method,
            layers,
            cz_ring,
            budget,
            batch,
        } => {
            apply_circuit_args(&mut cfg, circuit);
            apply_noise_args(&mut cfg, noise);
            cfg.mitigation.method = method.unwrap_or(cfg.mitigation.method);
            cfg.mitigation.layers = layers.unwrap_or(cfg.mitigation.layers);
            cfg.mitigation.cz_ring |= *cz_ring;
            cfg.optimizer.max_evaluations = budget.unwrap_or(cfg.optimizer.max_evaluations);
            cfg.optimizer.batch_size = batch.unwrap_or(cfg.optimizer.batch_size);
        }
        Command::IncoherentAnalysis { circuit, noise } => {
            apply_circuit_args(&mut cfg, circuit);
            apply_noise_args(&mut cfg, noise);
        }
    }
    cfg.resolve_seeds();
    cfg.noise.validate()?;
    cfg.depth.validate()?;
    Ok(cfg)
}

/// What a command produced; `converged` is false only for calibrations that
/// ran out of budget.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub converged: bool,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn write_json<T: Serialize>(cfg: &RunConfig, command: &'static str, suffix: &str, result: T) -> Result<PathBuf> {
    let path = cfg.out_path(suffix);
    let env = Envelope {
        version: VERSION,
        command,
        config: cfg,
        result,
    };
    let text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

#[derive(Serialize)]
struct MpoSummary {
    n: usize,
    chi: usize,
    bonds: Vec<usize>,
    max_bond: usize,
    discarded_weight: f64,
    estimated_fidelity: f64,
    operator_fidelity: Option<f64>,
}

pub fn cmd_mpo_build(cfg: &RunConfig) -> Result<Outcome> {
    let c = cfg.circuit.build()?;
    let m = zip_up(&c, cfg.circuit.chi, cfg.circuit.cutoff)?;
    let base = cfg.output_dir.join(&cfg.experiment);
    m.save(&base)?;
    let fidelity = if c.n_qubits() <= DENSE_MAX_SITES {
        Some(operator_fidelity(&mpo_to_dense(&m)?, &circuit_to_dense(&c)?)?)
    } else {
        None
    };
    let profile = m.bond_profile();
    let mut summary = format!(
        "bonds {:?} (max {})\ndiscarded_weight {:.3e}\n",
        profile.bonds,
        profile.max,
        m.discarded_weight()
    );
    if let Some(f) = fidelity {
        let _ = writeln!(summary, "fidelity {f:.6}");
    }
    let json = write_json(
        cfg,
        "mpo-build",
        "mpo-build.json",
        MpoSummary {
            n: c.n_qubits(),
            chi: cfg.circuit.chi,
            bonds: profile.bonds,
            max_bond: profile.max,
            discarded_weight: m.discarded_weight(),
            estimated_fidelity: m.estimated_fidelity(),
            operator_fidelity: fidelity,
        },
    )?;
    Ok(Outcome {
        files: vec![
            crate::io::with_suffix(&base, ".mpo.json"),
            crate::io::with_suffix(&base, ".mpo.bin"),
            json,
        ],
        summary,
        converged: true,
    })
}

#[derive(Serialize)]
struct VerifierSummary {
    n: usize,
    verifier_kind: VerifierKind,
    gate_widths: Vec<usize>,
    total_qubits: usize,
    source_fidelity: f64,
    trials: usize,
    matched_mean: f64,
    matched_min: f64,
    mismatched_mean: f64,
    postselect_mean: f64,
    impossible: usize,
}

pub fn cmd_verifier_check(cfg: &RunConfig, mpo: Option<&Path>) -> Result<Outcome> {
    let c = cfg.circuit.build()?;
    let n = c.n_qubits();
    let m = match mpo {
        Some(p) => Mpo::load(p)?,
        None => zip_up(&c, cfg.circuit.chi, cfg.circuit.cutoff)?,
    };
    if m.n_sites() != n {
        return Err(CliError::Config(format!("MPO has {} sites, circuit {n} qubits", m.n_sites())));
    }
    let vc: VerifierCircuit = build_verifier_with(&m, cfg.verifier.kind.into())?;
    if vc.total_qubits() > VERIFY_MAX_QUBITS {
        return Err(CliError::Guard(format!(
            "verifier needs {} qubits, limit {VERIFY_MAX_QUBITS}",
            vc.total_qubits()
        )));
    }
    if cfg.verifier.trials == 0 {
        return Err(CliError::Config("verifier.trials must be positive".into()));
    }
    let bound = if c.is_bound() { c.clone() } else { c.bind_nominal()? };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.trial_seed);
    let mut csv = String::from("trial,matched_fidelity,mismatched_fidelity,postselect_probability\n");
    let (mut sum_m, mut min_m, mut sum_x, mut sum_p, mut impossible) = (0.0, f64::INFINITY, 0.0, 0.0, 0);
    for t in 0..cfg.verifier.trials {
        let psi = sample_trial_state(n, &mut rng);
        let mut out = psi.clone();
        bound.apply_to_state(&mut out)?;
        let matched = vc.verify_pair(&psi, &out)?;
        let other = haar_state(n, &mut rng);
        let mismatched = vc.verify_pair(&psi, &other)?;
        impossible += usize::from(matched.impossible);
        sum_m += matched.output_fidelity;
        min_m = min_m.min(matched.output_fidelity);
        sum_x += mismatched.output_fidelity;
        sum_p += matched.postselect_probability;
        let _ = writeln!(
            csv,
            "{t},{:.8e},{:.8e},{:.8e}",
            matched.output_fidelity, mismatched.output_fidelity, matched.postselect_probability
        );
    }
    let k = cfg.verifier.trials as f64;
    let s = VerifierSummary {
        n,
        verifier_kind: vc.kind(),
        gate_widths: vc.gates().iter().map(|g| g.width()).collect(),
        total_qubits: vc.total_qubits(),
        source_fidelity: vc.source_fidelity(),
        trials: cfg.verifier.trials,
        matched_mean: sum_m / k,
        matched_min: min_m,
        mismatched_mean: sum_x / k,
        postselect_mean: sum_p / k,
        impossible,
    };
    let summary = format!(
        "widths {:?}\nmatched mean {:.6} (min {:.6})\nmismatched mean {:.6}\npostselect mean {:.6}\n",
        s.gate_widths, s.matched_mean, s.matched_min, s.mismatched_mean, s.postselect_mean
    );
    let csv_path = cfg.out_path("verifier-check.csv");
    std::fs::write(&csv_path, csv)?;
    let json = write_json(cfg, "verifier-check", "verifier-check.json", s)?;
    Ok(Outcome {
        files: vec![csv_path, json],
        summary,
        converged: true,
    })
}

pub fn cmd_depth_scan(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.scan.chis.is_empty() {
        return Err(CliError::Config("scan.chis is empty".into()));
    }
    let mut reports: Vec<CrossoverReport> = Vec::new();
    let mut files = Vec::new();
    let mut summary = String::new();
    for &chi in &cfg.scan.chis {
        let r = find_crossover(cfg.scan.kind, chi, &cfg.depth, cfg.scan.n_max)?;
        let path = cfg.out_path(&format!("depth.chi{chi}.csv"));
        std::fs::write(&path, r.to_csv())?;
        files.push(path);
        let star = r.n_star.map_or_else(|| format!("none up to {}", r.n_max), |n| n.to_string());
        let _ = writeln!(summary, "{} chi={chi} n_star {star}", cfg.scan.kind);
        reports.push(r);
    }
    files.push(write_json(cfg, "depth-scan", "depth-scan.json", &reports)?);
    Ok(Outcome {
        files,
        summary,
        converged: true,
    })
}

fn calibration_setup(cfg: &RunConfig) -> Result<(Circuit, VerifierCircuit)> {
    let c = decompose_to_rotations(&cfg.circuit.build()?)?;
    if c.n_qubits() > CHANNEL_MAX_QUBITS {
        return Err(CliError::Guard(format!(
            "calibration limited to {CHANNEL_MAX_QUBITS} qubits, circuit has {}",
            c.n_qubits()
        )));
    }
    // the reference is exact so only the candidate's errors show up
    let m = zip_up(&c.bind_nominal()?, usize::MAX, cfg.circuit.cutoff)?;
    Ok((c, build_verifier_with(&m, VerifierKind::Flagged)?))
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<Outcome> {
    let (c, vc) = calibration_setup(cfg)?;
    let report: CalibrationReport = match cfg.mitigation.method {
        1 => {
            let layer = MitigationLayer {
                cz_ring: cfg.mitigation.cz_ring,
                ..MitigationLayer::new(c.n_qubits(), cfg.mitigation.layers)
            };
            calibrate_method1(&c, &cfg.noise, &vc, &layer, &cfg.optimizer)?
        }
        2 => calibrate_method2(&c, &cfg.noise, &vc, &cfg.optimizer)?,
        m => return Err(CliError::Config(format!("mitigation.method must be 1 or 2, got {m}"))),
    };
    let csv_path = cfg.out_path(&format!("method{}.trace.csv", report.method));
    std::fs::write(&csv_path, report.trace_csv())?;
    let json = write_json(cfg, "calibrate", &format!("method{}.json", report.method), &report)?;
    let summary = format!(
        "| No QEM   | Method {} |\n| {:.6} | {:.6} |\nevaluations {} restarts {} converged {}\n",
        report.method, report.f_initial, report.f_final, report.evaluations, report.restarts, report.converged
    );
    Ok(Outcome {
        files: vec![json, csv_path],
        summary,
        converged: report.converged,
    })
}

#[derive(Serialize)]
struct IncoherentSummary {
    f_before: f64,
    f_after: f64,
    gain: f64,
    condition_number: f64,
}

pub fn cmd_incoherent_analysis(cfg: &RunConfig) -> Result<Outcome> {
    let c = decompose_to_rotations(&cfg.circuit.build()?)?.bind_nominal()?;
    if c.n_qubits() > CHANNEL_MAX_QUBITS {
        return Err(CliError::Guard(format!(
            "channel analysis limited to {CHANNEL_MAX_QUBITS} qubits, circuit has {}",
            c.n_qubits()
        )));
    }
    let ideal = circuit_to_dense(&c)?;
    let r = optimal_unitary_correction(&circuit_channel(&c, &cfg.noise)?, &ideal)?;
    let s = IncoherentSummary {
        f_before: r.f_before,
        f_after: r.f_after,
        gain: r.f_after - r.f_before,
        condition_number: r.condition_number,
    };
    let summary = format!(
        "f_before {:.6}\nf_after {:.6}\ngain {:.6}\ncondition {:.3e}\n",
        s.f_before, s.f_after, s.gain, s.condition_number
    );
    let json = write_json(cfg, "incoherent-analysis", "incoherent.json", s)?;
    Ok(Outcome {
        files: vec![json],
        summary,
        converged: true,
    })
}

/// Resolves the config and runs the command.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    match &cli.command {
        Command::MpoBuild { .. } => cmd_mpo_build(&cfg),
        Command::VerifierCheck { mpo, .. } => cmd_verifier_check(&cfg, mpo.as_deref()),
        Command::DepthScan { .. } => cmd_depth_scan(&cfg),
        Command::Calibrate { .. } => cmd_calibrate(&cfg),
        Command::IncoherentAnalysis { .. } => cmd_incoherent_analysis(&cfg),
    }
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(o) => {
            print!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.converged {
                0
            } else {
                eprintln!("optimizer did not converge within budget");
                EXIT_NOT_CONVERGED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
