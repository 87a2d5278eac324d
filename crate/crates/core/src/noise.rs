//! Coherent and incoherent noise, channel superoperators, and the
//! unitary-correction analysis.
//!
//! Density matrices are vectorized by row stacking, which is exactly the
//! row-major data of a `Tensor`. Under that convention the superoperator of
//! `ρ ↦ UρU†` is `U ⊗ conj(U)`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Angle, Circuit, CircuitError};
use crate::io::{with_suffix, write_blob};
use crate::mpo::operator_fidelity;
use crate::sim::apply_gate;
use crate::tensor::{hermitian_eigen, inverse_with_condition, polar_unitary, Tensor, TensorError, C64, ONE, ZERO};

/// Superoperators are `4ⁿ × 4ⁿ`; past this they stop fitting in memory.
pub const CHANNEL_MAX_QUBITS: usize = 6;
/// Draws averaged by `circuit_channel` for resampled coherent noise.
pub const COHERENT_DRAWS: u64 = 512;
/// Relative smallest singular value below which a superoperator is singular.
const SINGULAR_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid noise model: {0}")]
    Invalid(String),
    #[error("noise model has no coherent part")]
    NoCoherent,
    #[error("channel simulation limited to {max} qubits, circuit has {n}")]
    TooWide { n: usize, max: usize },
    #[error("superoperator is singular (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, NoiseError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoherentMode {
    /// One fixed draw per gate position: a miscalibrated device instance.
    #[serde(rename = "systematic-per-gate")]
    Systematic,
    /// A fresh draw for every shot.
    #[serde(rename = "resampled-per-shot")]
    PerShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherentNoise {
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
    pub mode: CoherentMode,
}

impl Default for CoherentNoise {
    fn default() -> Self {
        Self {
            mean: 0.05,
            std: 0.02,
            seed: 7,
            mode: CoherentMode::Systematic,
        }
    }
}

impl CoherentNoise {
    /// Over-rotation offsets for `count` rotation gates from draw `draw`.
    /// Every draw uses its own ChaCha stream, so draws are order-independent.
    pub fn offsets(&self, count: usize, draw: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(draw);
        let normal = Normal::new(self.mean, self.std).expect("validated std");
        (0..count).map(|_| normal.sample(&mut rng)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncoherentNoise {
    /// Depolarizing probability after each multi-qubit gate.
    pub depolarizing_p: f64,
    /// Amplitude damping after every gate, on each of its qubits.
    pub amplitude_damping_gamma: f64,
    /// Dephasing after every gate, on each of its qubits.
    pub dephasing_lambda: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub coherent: Option<CoherentNoise>,
    pub incoherent: Option<IncoherentNoise>,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn coherent(c: CoherentNoise) -> Self {
        Self {
            coherent: Some(c),
            incoherent: None,
        }
    }

    pub fn incoherent(i: IncoherentNoise) -> Self {
        Self {
            coherent: None,
            incoherent: Some(i),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.coherent {
            if !(c.std >= 0.0 && c.std.is_finite()) || !c.mean.is_finite() {
                return Err(NoiseError::Invalid(format!("coherent mean {} / std {}", c.mean, c.std)));
            }
        }
        if let Some(i) = &self.incoherent {
            for (name, v) in [
                ("depolarizing_p", i.depolarizing_p),
                ("amplitude_damping_gamma", i.amplitude_damping_gamma),
                ("dephasing_lambda", i.dephasing_lambda),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(NoiseError::Invalid(format!("{name} = {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Shifts every rotation angle of a bound circuit by the offsets of draw `draw`.
pub fn apply_noisy_coherent(c: &Circuit, nm: &NoiseModel, draw: u64) -> Result<Circuit> {
    nm.validate()?;
    let coh = nm.coherent.as_ref().ok_or(NoiseError::NoCoherent)?;
    let count = c.gates().iter().filter(|g| g.is_rotation()).count();
    let offsets = coh.offsets(count, draw);
    shift_rotations(c, &offsets)
}

/// Adds `offsets[i]` to the angle of the `i`-th rotation gate.
pub fn shift_rotations(c: &Circuit, offsets: &[f64]) -> Result<Circuit> {
    let mut out = Circuit::new(c.n_qubits());
    out.set_output_permutation(c.output_permutation().map(<[usize]>::to_vec));
    let mut k = 0;
    for g in c.gates() {
        let mut g = g.clone();
        if g.is_rotation() {
            let theta = g.param.as_ref().map_or(Ok(0.0), Angle::resolve)?;
            g.param = Some(Angle::Value(theta + offsets[k]));
            k += 1;
        }
        out.push(g)?;
    }
    Ok(out)
}

/// Eq.-1 fidelity `|Tr(A†B)| / Tr(B†B)`; one implementation shared with the MPO code.
pub fn fidelity_eq1(noisy: &Tensor, ideal: &Tensor) -> Result<f64> {
    operator_fidelity(noisy, ideal).map_err(|e| NoiseError::Invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    n: usize,
    superop: Tensor,
}

impl Channel {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            superop: Tensor::identity(1 << (2 * n)),
        }
    }

    pub fn from_unitary(u: &Tensor) -> Self {
        let d = u.shape()[0];
        Self {
            n: d.trailing_zeros() as usize,
            superop: u.kron(&u.conj()),
        }
    }

    pub fn from_kraus(ops: &[Tensor]) -> Self {
        let d = ops[0].shape()[0];
        let mut s = Tensor::zeros(vec![d * d, d * d]);
        for k in ops {
            let term = k.kron(&k.conj());
            s.data_mut().iter_mut().zip(term.data()).for_each(|(a, b)| *a += b);
        }
        Self {
            n: d.trailing_zeros() as usize,
            superop: s,
        }
    }

    pub fn from_superoperator(superop: Tensor) -> Result<Self> {
        let shape = superop.shape().to_vec();
        let d2 = shape[0];
        if shape.len() != 2 || shape[1] != d2 || !d2.is_power_of_two() || !d2.trailing_zeros().is_multiple_of(2) {
            return Err(NoiseError::Invalid(format!("superoperator shape {shape:?}")));
        }
        Ok(Self {
            n: d2.trailing_zeros() as usize / 2,
            superop,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn superoperator(&self) -> &Tensor {
        &self.superop
    }

    fn dim(&self) -> usize {
        1 << self.n
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Channel) -> Channel {
        Channel {
            n: self.n,
            superop: other.superop.matmul(&self.superop).expect("equal dims"),
        }
    }

    pub fn apply(&self, rho: &Tensor) -> Tensor {
        let d = self.dim();
        let out = self.superop.apply(rho.data());
        Tensor::new(vec![d, d], out).expect("d × d")
    }

    /// Choi matrix normalized to unit trace, indexed `[(in, out), (in', out')]`.
    pub fn choi(&self) -> Tensor {
        let d = self.dim();
        let s = &self.superop;
        let scale = 1.0 / d as f64;
        Tensor::from_fn(d * d, d * d, |r, c| {
            let (i, a) = (r / d, r % d);
            let (j, b) = (c / d, c % d);
            s.at(a * d + b, i * d + j) * scale
        })
    }

    /// Largest deviation of `Σ_a S[(a,a),(c,e)]` from `δ_ce`.
    pub fn trace_preservation_error(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for c in 0..d {
            for e in 0..d {
                let sum: C64 = (0..d).map(|a| self.superop.at(a * d + a, c * d + e)).sum();
                let target = if c == e { ONE } else { ZERO };
                worst = worst.max((sum - target).norm());
            }
        }
        worst
    }

    pub fn choi_eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.choi()).0
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.trace_preservation_error() <= tol
    }

    pub fn is_completely_positive(&self, tol: f64) -> bool {
        self.choi_eigenvalues().last().is_some_and(|&v| v >= -tol)
    }

    /// Kraus operator of the leading Choi eigenvector, `√(λ d) · unvec(v)`.
    pub fn dominant_kraus(&self) -> Tensor {
        let d = self.dim();
        let (vals, vecs) = hermitian_eigen(&self.choi());
        let scale = (vals[0].max(0.0) * d as f64).sqrt();
        Tensor::from_fn(d, d, |a, c| vecs.at(c * d + a, 0) * scale)
    }

    /// Entanglement fidelity with the unitary channel of `u`.
    pub fn process_fidelity(&self, u: &Tensor) -> f64 {
        let d = self.dim();
        let j = self.choi();
        let uv: Vec<C64> = (0..d * d).map(|r| u.at(r % d, r / d)).collect();
        let ju = j.apply(&uv);
        let v: C64 = uv.iter().zip(&ju).map(|(a, b)| a.conj() * b).sum();
        v.re / d as f64
    }

    /// Writes `base.channel.json` (shape header) and `base.channel.bin`.
    pub fn save(&self, base: &Path) -> Result<()> {
        let header = serde_json::json!({ "format": "channel-v1", "n": self.n, "vectorization": "row-stacking" });
        std::fs::write(with_suffix(base, ".channel.json"), header.to_string()).map_err(|e| NoiseError::Io(e.to_string()))?;
        write_blob(&with_suffix(base, ".channel.bin"), &[&self.superop]).map_err(|e| NoiseError::Io(e.to_string()))
    }
}

fn depolarizing_superop(k: usize, p: f64) -> Tensor {
    // ρ ↦ (1 − p) ρ + p Tr(ρ) I / 2^k on k qubits
    let d = 1usize << k;
    let mut s = Tensor::identity(d * d).scale(C64::new(1.0 - p, 0.0));
    for a in 0..d {
        for c in 0..d {
            let v = s.at(a * d + a, c * d + c) + p / d as f64;
            s.set(a * d + a, c * d + c, v);
        }
    }
    s
}

/// `k`-qubit depolarizing channel with probability `p`.
pub fn depolarizing_channel(k: usize, p: f64) -> Channel {
    Channel {
        n: k,
        superop: depolarizing_superop(k, p),
    }
}

pub fn amplitude_damping_kraus(gamma: f64) -> [Tensor; 2] {
    let k0 = Tensor::from_fn(2, 2, |r, c| match (r, c) {
        (0, 0) => ONE,
        (1, 1) => C64::new((1.0 - gamma).sqrt(), 0.0),
        _ => ZERO,
    });
    let k1 = Tensor::from_fn(2, 2, |r, c| if (r, c) == (0, 1) { C64::new(gamma.sqrt(), 0.0) } else { ZERO });
    [k0, k1]
}

pub fn dephasing_kraus(lambda: f64) -> [Tensor; 2] {
    let k0 = Tensor::identity(2).scale(C64::new((1.0 - lambda / 2.0).sqrt(), 0.0));
    let a = (lambda / 2.0).sqrt();
    let k1 = Tensor::from_fn(2, 2, |r, c| match (r, c) {
        (0, 0) => C64::new(a, 0.0),
        (1, 1) => C64::new(-a, 0.0),
        _ => ZERO,
    });
    [k0, k1]
}

/// A local superoperator and the qubits of the doubled register it acts on.
struct LocalOp {
    targets: Vec<usize>,
    superop: Tensor,
}

fn local(targets: &[usize], n: usize, superop: Tensor) -> LocalOp {
    let mut t = targets.to_vec();
    t.extend(targets.iter().map(|q| q + n));
    LocalOp { targets: t, superop }
}

fn circuit_ops(c: &Circuit, inc: Option<&IncoherentNoise>) -> Result<Vec<LocalOp>> {
    let n = c.n_qubits();
    let damping = inc.map(|i| Channel::from_kraus(&amplitude_damping_kraus(i.amplitude_damping_gamma)).superop);
    let dephasing = inc.map(|i| Channel::from_kraus(&dephasing_kraus(i.dephasing_lambda)).superop);
    let mut ops = Vec::new();
    for g in c.gates() {
        let u = g.matrix()?;
        ops.push(local(&g.targets, n, u.kron(&u.conj())));
        let Some(i) = inc else { continue };
        if g.targets.len() >= 2 && i.depolarizing_p > 0.0 {
            ops.push(local(&g.targets, n, depolarizing_superop(g.targets.len(), i.depolarizing_p)));
        }
        for &q in &g.targets {
            if i.amplitude_damping_gamma > 0.0 {
                ops.push(local(&[q], n, damping.clone().expect("incoherent present")));
            }
            if i.dephasing_lambda > 0.0 {
                ops.push(local(&[q], n, dephasing.clone().expect("incoherent present")));
            }
        }
    }
    Ok(ops)
}

fn ops_superoperator(n: usize, ops: &[LocalOp]) -> Tensor {
    let dd = 1usize << (2 * n);
    let cols: Vec<Vec<C64>> = (0..dd)
        .into_par_iter()
        .map(|col| {
            let mut v = vec![ZERO; dd];
            v[col] = ONE;
            for op in ops {
                apply_gate(&mut v, 2 * n, &op.targets, &op.superop);
            }
            v
        })
        .collect();
    Tensor::from_fn(dd, dd, |r, c| cols[c][r])
}

/// Average channel of `c` under `nm`. Systematic coherent noise uses the single
/// draw that defines the device instance; resampled noise averages
/// `COHERENT_DRAWS` independent draws.
pub fn circuit_channel(c: &Circuit, nm: &NoiseModel) -> Result<Channel> {
    nm.validate()?;
    let n = c.n_qubits();
    if n > CHANNEL_MAX_QUBITS {
        return Err(NoiseError::TooWide { n, max: CHANNEL_MAX_QUBITS });
    }
    let inc = nm.incoherent.as_ref();
    let draws: Vec<Circuit> = match &nm.coherent {
        None => vec![c.clone()],
        Some(coh) if coh.mode == CoherentMode::Systematic => vec![apply_noisy_coherent(c, nm, 0)?],
        Some(_) => (0..COHERENT_DRAWS)
            .map(|d| apply_noisy_coherent(c, nm, d))
            .collect::<Result<_>>()?,
    };
    let mut total: Option<Tensor> = None;
    let weight = C64::new(1.0 / draws.len() as f64, 0.0);
    for circ in &draws {
        let s = ops_superoperator(n, &circuit_ops(circ, inc)?).scale(weight);
        total = Some(match total {
            None => s,
            Some(mut t) => {
                t.data_mut().iter_mut().zip(s.data()).for_each(|(a, b)| *a += b);
                t
            }
        });
    }
    Ok(Channel {
        n,
        superop: total.expect("at least one draw"),
    })
}

#[derive(Debug, Clone)]
pub struct Correction {
    /// `S_ideal · S_noisy⁻¹`; need not be completely positive.
    pub e: Channel,
    pub u_e: Tensor,
    pub f_before: f64,
    pub f_after: f64,
    pub condition_number: f64,
}

/// Isolates the correcting process `E` with `E ∘ noisy = ideal` and reports how
/// much its closest unitary recovers.
pub fn optimal_unitary_correction(noisy: &Channel, ideal: &Tensor) -> Result<Correction> {
    let s_ideal = Channel::from_unitary(ideal);
    if s_ideal.n != noisy.n {
        return Err(NoiseError::Invalid(format!(
            "ideal acts on {} qubits, channel on {}",
            s_ideal.n, noisy.n
        )));
    }
    let (inv, condition) = inverse_with_condition(&noisy.superop).ok_or(NoiseError::Singular {
        condition: f64::INFINITY,
    })?;
    if !(condition.is_finite() && condition * SINGULAR_CUTOFF < 1.0) {
        return Err(NoiseError::Singular { condition });
    }
    let e = Channel {
        n: noisy.n,
        superop: s_ideal.superop.matmul(&inv)?,
    };
    let u_e = polar_unitary(&e.dominant_kraus())?;
    let k_noisy = noisy.dominant_kraus();
    let f_before = fidelity_eq1(&k_noisy, ideal)?;
    let f_after = fidelity_eq1(&u_e.matmul(&k_noisy)?, ideal)?;
    Ok(Correction {
        e,
        u_e,
        f_before,
        f_after,
        condition_number: condition,
    })
}
