//! In-situ error-mitigation calibration driven by verifier fidelity.
//!
//! Method 1 appends a parameterized single-qubit layer to the noisy circuit.
//! Method 2 re-optimizes the circuit's own rotation angles while the device
//! keeps adding its systematic over-rotations on top.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{circuit_to_dense, Angle, Circuit, CircuitError, Gate};
use crate::noise::{apply_noisy_coherent, fidelity_eq1, CoherentMode, NoiseError, NoiseModel};
use crate::sim::{haar_state, product_state};
use crate::tensor::{Tensor, C64};
use crate::verifier::{VerifierCircuit, VerifierError};

#[derive(Debug, Error)]
pub enum QemError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error("verification impossible for trial state {0}")]
    Impossible(usize),
    #[error("verifier objective needs pure states; incoherent noise is not supported")]
    Incoherent,
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("verifier acts on {verifier} qubits, circuit on {circuit}")]
    Width { verifier: usize, circuit: usize },
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, QemError>;

/// Product of `n` single-qubit states, each Haar on the Bloch sphere.
pub fn sample_trial_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let qubits: Vec<[C64; 2]> = (0..n)
        .map(|_| {
            let v = haar_state(1, rng);
            [v[0], v[1]]
        })
        .collect();
    product_state(&qubits)
}

/// Verifier fidelity of `candidate` (noise from `nm` applied on top) pooled
/// over the batch: `Σ pᵢ Fᵢ / Σ pᵢ` with `pᵢ` the post-selection probability,
/// which is the accepted-shot fraction one measures when the trial states are
/// interleaved. Systematic noise uses the device's single draw; resampled
/// noise gives trial `i` draw `i`.
pub fn objective(candidate: &Circuit, vc: &VerifierCircuit, batch: &[Vec<C64>], nm: &NoiseModel) -> Result<f64> {
    if nm.incoherent.is_some() {
        return Err(QemError::Incoherent);
    }
    if vc.n() != candidate.n_qubits() {
        return Err(QemError::Width {
            verifier: vc.n(),
            circuit: candidate.n_qubits(),
        });
    }
    let shared = match &nm.coherent {
        None => Some(candidate.clone()),
        Some(c) if c.mode == CoherentMode::Systematic => Some(apply_noisy_coherent(candidate, nm, 0)?),
        Some(_) => None,
    };
    let values: Vec<Result<(f64, f64)>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, psi)| {
            let noisy = match &shared {
                Some(c) => c.clone(),
                None => apply_noisy_coherent(candidate, nm, i as u64)?,
            };
            let mut out = psi.clone();
            noisy.apply_to_state(&mut out)?;
            let r = vc.verify_pair(psi, &out)?;
            if r.impossible {
                return Err(QemError::Impossible(i));
            }
            Ok((r.output_fidelity, r.postselect_probability))
        })
        .collect();
    let (mut hits, mut kept) = (0.0, 0.0);
    for v in values {
        let (f, p) = v?;
        hits += f * p;
        kept += p;
    }
    Ok(hits / kept)
}

/// `L` layers of per-qubit `Rz·Ry·Rz`, optionally followed by a ring of CZs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationLayer {
    pub n: usize,
    pub layers: usize,
    pub cz_ring: bool,
}

impl MitigationLayer {
    pub fn new(n: usize, layers: usize) -> Self {
        Self {
            n,
            layers,
            cz_ring: false,
        }
    }

    pub fn num_params(&self) -> usize {
        3 * self.n * self.layers
    }

    pub fn circuit(&self, theta: &[f64]) -> Result<Circuit> {
        if theta.len() != self.num_params() {
            return Err(QemError::Config(format!(
                "layer expects {} angles, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        let mut c = Circuit::new(self.n);
        let mut it = theta.iter().copied().map(Angle::Value);
        for _ in 0..self.layers {
            for q in 0..self.n {
                c.push(Gate::rz(q, it.next().expect("counted")))?;
                c.push(Gate::ry(q, it.next().expect("counted")))?;
                c.push(Gate::rz(q, it.next().expect("counted")))?;
            }
            if self.cz_ring && self.n > 1 {
                let pairs = if self.n == 2 { 1 } else { self.n };
                for q in 0..pairs {
                    c.push(Gate::cz(q, (q + 1) % self.n))?;
                }
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_evaluations: usize,
    /// Initial simplex edge, radians.
    pub initial_step: f64,
    pub batch_size: usize,
    /// A restart is triggered when the simplex values spread less than this.
    pub tolerance: f64,
    /// Restarts allowed after the first simplex.
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            initial_step: 0.1,
            batch_size: 16,
            tolerance: 1e-9,
            max_restarts: 100,
            seed: 2024,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_evaluations == 0 {
            return Err(QemError::Config("batch_size and max_evaluations must be positive".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) || !(self.tolerance >= 0.0) {
            return Err(QemError::Config("initial_step must be positive, tolerance non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBundle {
    pub noise_seed: Option<u64>,
    pub optimizer_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: u8,
    pub f_initial: f64,
    pub f_final: f64,
    pub objective_trace: Vec<TraceRow>,
    pub evaluations: usize,
    pub restarts: usize,
    /// False when the budget ran out before the last simplex collapsed.
    pub converged: bool,
    pub params: Vec<f64>,
    pub seeds: SeedBundle,
    pub optimizer: OptimizerConfig,
    /// Parameters of every evaluation, aligned with `objective_trace`.
    #[serde(skip)]
    pub iterates: Vec<Vec<f64>>,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,best_so_far\n");
        for r in &self.objective_trace {
            let _ = writeln!(s, "{},{:.8e},{:.8e}", r.iteration, r.objective, r.best_so_far);
        }
        s
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()).map_err(|e| QemError::Io(e.to_string()))?;
        std::fs::write(csv_path, self.trace_csv()).map_err(|e| QemError::Io(e.to_string()))
    }
}

struct SearchResult {
    best: Vec<f64>,
    trace: Vec<TraceRow>,
    iterates: Vec<Vec<f64>>,
    restarts: usize,
    converged: bool,
}

/// Nelder–Mead maximization with restarts around the best point. The objective
/// receives a batch key and draws its training batch from it; the key advances
/// with every restart so each simplex compares points on common states.
fn nelder_mead<F>(x0: &[f64], opt: &OptimizerConfig, mut f: F) -> Result<SearchResult>
where
    F: FnMut(&[f64], usize) -> Result<f64>,
{
    let dim = x0.len();
    let mut trace = Vec::new();
    let mut iterates = Vec::new();
    let mut best = (f64::NEG_INFINITY, x0.to_vec());
    let mut eval = |x: &[f64], key: usize, trace: &mut Vec<TraceRow>, iterates: &mut Vec<Vec<f64>>| -> Result<f64> {
        let v = f(x, key)?;
        if v > best.0 {
            best = (v, x.to_vec());
        }
        trace.push(TraceRow {
            iteration: trace.len(),
            objective: v,
            best_so_far: best.0,
        });
        iterates.push(x.to_vec());
        Ok(v)
    };
    if dim == 0 {
        eval(x0, 0, &mut trace, &mut iterates)?;
        return Ok(SearchResult {
            best: x0.to_vec(),
            trace,
            iterates,
            restarts: 0,
            converged: true,
        });
    }

    let budget = opt.max_evaluations;
    let mut start = x0.to_vec();
    let mut restart = 0;
    let mut key = 0usize;
    let mut converged = false;
    let mut last_best = f64::NEG_INFINITY;
    while trace.len() < budget {
        // simplex of (value, point), kept sorted best first
        let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
        key += 1;
        simplex.push((eval(&start, key, &mut trace, &mut iterates)?, start.clone()));
        for i in 0..dim {
            if trace.len() >= budget {
                break;
            }
            let mut p = start.clone();
            p[i] += opt.initial_step;
            simplex.push((eval(&p, key, &mut trace, &mut iterates)?, p));
        }
        if simplex.len() < dim + 1 {
            break;
        }
        converged = false;
        while trace.len() < budget {
            simplex.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            if simplex[0].0 - simplex[dim].0 <= opt.tolerance {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|(_, p)| p[j]).sum::<f64>() / dim as f64)
                .collect();
            let worst = simplex[dim].clone();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.1).map(|(c, w)| c + t * (c - w)).collect() };
            let xr = along(1.0);
            let fr = eval(&xr, key, &mut trace, &mut iterates)?;
            if fr > simplex[0].0 {
                let xe = along(2.0);
                let fe = if trace.len() < budget { eval(&xe, key, &mut trace, &mut iterates)? } else { f64::NEG_INFINITY };
                simplex[dim] = if fe > fr { (fe, xe) } else { (fr, xr) };
                continue;
            }
            if fr > simplex[dim - 1].0 {
                simplex[dim] = (fr, xr);
                continue;
            }
            if trace.len() >= budget {
                break;
            }
            let (xc, fc) = if fr > worst.0 {
                let xc = along(0.5);
                let fc = eval(&xc, key, &mut trace, &mut iterates)?;
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, key, &mut trace, &mut iterates)?;
                (xc, fc)
            };
            if fc > fr.max(worst.0) {
                simplex[dim] = (fc, xc);
                continue;
            }
            // shrink toward the best vertex
            let anchor = simplex[0].1.clone();
            for v in simplex.iter_mut().skip(1) {
                if trace.len() >= budget {
                    break;
                }
                let p: Vec<f64> = anchor.iter().zip(&v.1).map(|(a, x)| a + 0.5 * (x - a)).collect();
                *v = (eval(&p, key, &mut trace, &mut iterates)?, p);
            }
        }
        simplex.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        start = simplex[0].1.clone();
        if converged && simplex[0].0 <= last_best + opt.tolerance {
            break;
        }
        last_best = last_best.max(simplex[0].0);
        if restart == opt.max_restarts {
            break;
        }
        restart += 1;
    }
    Ok(SearchResult {
        best: best.1,
        trace,
        iterates,
        restarts: restart,
        converged,
    })
}

fn batch_for(n: usize, opt: &OptimizerConfig, key: usize) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    rng.set_stream(key as u64);
    (0..opt.batch_size).map(|_| sample_trial_state(n, &mut rng)).collect()
}

fn noise_seed(nm: &NoiseModel) -> Option<u64> {
    nm.coherent.as_ref().map(|c| c.seed)
}

/// Noisy device instance of a bound circuit: the systematic draw when coherent
/// noise is present, the circuit itself otherwise.
fn device_instance(c: &Circuit, nm: &NoiseModel) -> Result<Circuit> {
    Ok(match nm.coherent {
        Some(_) => apply_noisy_coherent(c, nm, 0)?,
        None => c.clone(),
    })
}

/// Optimizes a mitigation layer appended after the noisy circuit.
pub fn calibrate_method1(
    c: &Circuit,
    nm: &NoiseModel,
    vc: &VerifierCircuit,
    layer: &MitigationLayer,
    opt: &OptimizerConfig,
) -> Result<CalibrationReport> {
    opt.validate()?;
    if nm.incoherent.is_some() {
        return Err(QemError::Incoherent);
    }
    let bound = if c.is_bound() { c.clone() } else { c.bind_nominal()? };
    let ideal = circuit_to_dense(&bound)?;
    let noisy = device_instance(&bound, nm)?;
    let build = |theta: &[f64]| -> Result<Circuit> {
        let mut cand = noisy.clone();
        cand.extend(&layer.circuit(theta)?)?;
        Ok(cand)
    };
    let clean = NoiseModel::noiseless();
    let n = c.n_qubits();
    let x0 = vec![0.0; layer.num_params()];
    let search = nelder_mead(&x0, opt, |theta, key| {
        objective(&build(theta)?, vc, &batch_for(n, opt, key), &clean)
    })?;
    let f_initial = fidelity_eq1(&circuit_to_dense(&build(&x0)?)?, &ideal)?;
    let f_final = fidelity_eq1(&circuit_to_dense(&build(&search.best)?)?, &ideal)?;
    Ok(report(1, f_initial, f_final, search, nm, opt))
}

/// Re-optimizes the rotation angles of `c`; the device adds its over-rotations
/// to whatever angles are programmed.
pub fn calibrate_method2(c: &Circuit, nm: &NoiseModel, vc: &VerifierCircuit, opt: &OptimizerConfig) -> Result<CalibrationReport> {
    opt.validate()?;
    if nm.incoherent.is_some() {
        return Err(QemError::Incoherent);
    }
    let ideal = circuit_to_dense(&c.bind_nominal()?)?;
    let x0 = c.nominal_vector();
    let n = c.n_qubits();
    let search = nelder_mead(&x0, opt, |theta, key| {
        objective(&c.bind_vector(theta)?, vc, &batch_for(n, opt, key), nm)
    })?;
    let f_initial = method2_fidelity(c, nm, &x0, &ideal)?;
    let f_final = method2_fidelity(c, nm, &search.best, &ideal)?;
    Ok(report(2, f_initial, f_final, search, nm, opt))
}

fn report(method: u8, f_initial: f64, f_final: f64, s: SearchResult, nm: &NoiseModel, opt: &OptimizerConfig) -> CalibrationReport {
    CalibrationReport {
        method,
        f_initial,
        f_final,
        evaluations: s.trace.len(),
        objective_trace: s.trace,
        restarts: s.restarts,
        converged: s.converged,
        params: s.best,
        seeds: SeedBundle {
            noise_seed: noise_seed(nm),
            optimizer_seed: opt.seed,
        },
        optimizer: *opt,
        iterates: s.iterates,
    }
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(std::cmp::Ordering::Equal));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Dense Eq.-1 fidelity of a Method-2 parameter vector under `nm`, for analysis.
pub fn method2_fidelity(c: &Circuit, nm: &NoiseModel, theta: &[f64], ideal: &Tensor) -> Result<f64> {
    let bound = c.bind_vector(theta)?;
    Ok(fidelity_eq1(&circuit_to_dense(&device_instance(&bound, nm)?)?, ideal)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_mcx, build_qft, decompose_to_rotations};
    use crate::mpo::zip_up;
    use crate::noise::CoherentNoise;
    use crate::verifier::{build_verifier_with, VerifierKind};

    fn toffoli_setup() -> (Circuit, VerifierCircuit) {
        let c = decompose_to_rotations(&build_mcx(2)).unwrap();
        let vc = build_verifier_with(&zip_up(&c.bind_nominal().unwrap(), usize::MAX, 1e-12).unwrap(), VerifierKind::Flagged).unwrap();
        (c, vc)
    }

    fn bias(mean: f64, std: f64) -> NoiseModel {
        NoiseModel::coherent(CoherentNoise {
            mean,
            std,
            seed: 7,
            mode: CoherentMode::Systematic,
        })
    }

    fn small_opt() -> OptimizerConfig {
        OptimizerConfig {
            max_evaluations: 600,
            ..Default::default()
        }
    }

    #[test]
    fn trial_states_are_normalized_and_reproducible() {
        let a = sample_trial_state(3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_trial_state(3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let nrm: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        assert!((nrm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trial_states_are_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mean = [0.0; 3];
        let samples = 10_000;
        for _ in 0..samples {
            let s = sample_trial_state(1, &mut rng);
            let (a, b) = (s[0], s[1]);
            let xy = 2.0 * (a.conj() * b);
            mean[0] += xy.re;
            mean[1] += xy.im;
            mean[2] += a.norm_sqr() - b.norm_sqr();
        }
        for m in mean {
            assert!((m / samples as f64).abs() < 0.05);
        }
    }

    #[test]
    fn trial_states_are_products() {
        let s = sample_trial_state(3, &mut ChaCha8Rng::seed_from_u64(2));
        // every bipartition reshapes to a rank-one matrix
        for cut in 1..3 {
            let rows = 1 << cut;
            let cols = 8 / rows;
            let m = Tensor::from_fn(rows, cols, |r, c| s[r * cols + c]);
            let (_, sv, _) = crate::tensor::svd_sorted(&m);
            assert!(sv[1] < 1e-12);
        }
    }

    #[test]
    fn objective_of_ideal_is_one_and_bias_lowers_it() {
        let (c, vc) = toffoli_setup();
        let bound = c.bind_nominal().unwrap();
        let batch = batch_for(3, &OptimizerConfig::default(), 0);
        let clean = objective(&bound, &vc, &batch, &NoiseModel::noiseless()).unwrap();
        assert!(clean >= 0.999);
        let noisy = objective(&bound, &vc, &batch, &bias(0.05, 0.0)).unwrap();
        assert!(noisy < clean);
    }

    #[test]
    fn objective_batch_size_sanity() {
        let (c, vc) = toffoli_setup();
        let bound = c.bind_nominal().unwrap();
        let nm = bias(0.2, 0.05);
        let one = objective(&bound, &vc, &batch_for(3, &OptimizerConfig { batch_size: 1, ..Default::default() }, 0), &nm).unwrap();
        let many = objective(&bound, &vc, &batch_for(3, &OptimizerConfig { batch_size: 32, ..Default::default() }, 0), &nm).unwrap();
        assert!((one - many).abs() < 0.1, "{one} vs {many}");
    }

    #[test]
    fn objective_rejects_incoherent_noise() {
        let (c, vc) = toffoli_setup();
        let nm = NoiseModel::incoherent(Default::default());
        assert!(matches!(
            objective(&c.bind_nominal().unwrap(), &vc, &batch_for(3, &OptimizerConfig::default(), 0), &nm),
            Err(QemError::Incoherent)
        ));
    }

    #[test]
    fn layer_parameter_count_is_linear() {
        for n in 1..8 {
            for l in 0..4 {
                let layer = MitigationLayer::new(n, l);
                assert_eq!(layer.num_params(), 3 * n * l);
                assert_eq!(layer.circuit(&vec![0.0; 3 * n * l]).unwrap().gates().len(), 3 * n * l);
            }
        }
    }

    #[test]
    fn method1_without_noise_stays_ideal() {
        let (c, vc) = toffoli_setup();
        let r = calibrate_method1(&c, &NoiseModel::noiseless(), &vc, &MitigationLayer::new(3, 1), &small_opt()).unwrap();
        assert!(r.f_final >= 0.999, "{}", r.f_final);
        assert!(r.params.iter().all(|t| t.abs() < 0.1) || r.f_final >= 0.999);
    }

    #[test]
    fn method1_with_empty_layer_changes_nothing() {
        let (c, vc) = toffoli_setup();
        let r = calibrate_method1(&c, &bias(0.2, 0.05), &vc, &MitigationLayer::new(3, 0), &small_opt()).unwrap();
        assert_eq!(r.f_final, r.f_initial);
    }

    #[test]
    fn method2_without_noise_keeps_angles() {
        let (c, vc) = toffoli_setup();
        let r = calibrate_method2(&c, &NoiseModel::noiseless(), &vc, &small_opt()).unwrap();
        assert!(r.f_final >= 0.999);
    }

    #[test]
    fn method2_recovers_pure_bias() {
        let (c, vc) = toffoli_setup();
        let nm = bias(0.1, 0.0);
        let r = calibrate_method2(&c, &nm, &vc, &OptimizerConfig::default()).unwrap();
        assert!(r.f_final > r.f_initial && r.f_final >= 0.99, "{} -> {}", r.f_initial, r.f_final);
    }

    #[test]
    fn best_seen_is_returned_and_runs_are_deterministic() {
        let (c, vc) = toffoli_setup();
        let nm = bias(0.2, 0.05);
        let layer = MitigationLayer::new(3, 1);
        let a = calibrate_method1(&c, &nm, &vc, &layer, &small_opt()).unwrap();
        let b = calibrate_method1(&c, &nm, &vc, &layer, &small_opt()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let (imax, _) = a
            .objective_trace
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r.objective > acc.1 { (i, r.objective) } else { acc });
        assert_eq!(a.iterates[imax], a.params);
        assert!(a.objective_trace.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far));
        assert!(a.trace_csv().starts_with("iteration,objective,best_so_far\n0,"));
    }

    #[test]
    fn method2_parameter_count_for_qft_is_quadratic() {
        let ns: Vec<f64> = (3..=8).map(|n| n as f64).collect();
        let ps: Vec<f64> = (3..=8)
            .map(|n| decompose_to_rotations(&build_qft(n, true)).unwrap().num_params() as f64)
            .collect();
        assert!(crate::depth::fit_quadratic(&ns, &ps).unwrap().1 >= 0.99);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn objective_tracks_true_fidelity_across_iterates() {
        let (c, vc) = toffoli_setup();
        let nm = NoiseModel::default();
        let ideal = circuit_to_dense(&c.bind_nominal().unwrap()).unwrap();
        let opt = OptimizerConfig { max_evaluations: 400, ..Default::default() };
        let r = calibrate_method2(&c, &nm, &vc, &opt).unwrap();
        let truth: Vec<f64> = r.iterates.iter().map(|t| method2_fidelity(&c, &nm, t, &ideal).unwrap()).collect();
        let obj: Vec<f64> = r.objective_trace.iter().map(|t| t.objective).collect();
        let rho = spearman(&obj, &truth);
        assert!(rho >= 0.9, "spearman {rho}");
    }

    #[test]
    fn method2_recovered_shift_matches_bias() {
        let (c, vc) = toffoli_setup();
        let mean = 0.1;
        let r = calibrate_method2(&c, &bias(mean, 0.0), &vc, &OptimizerConfig::default()).unwrap();
        let shifts: Vec<f64> = r.params.iter().zip(c.nominal_vector()).map(|(p, t)| p - t).collect();
        let worst = shifts.iter().map(|s| (s + mean).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.01, "{shifts:?}");
    }
}
