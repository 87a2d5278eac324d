//! Verifier circuits synthesized from an MPO.
//!
//! Site `k` of the chain pairs `ψ_k` with `ψ′_k` through `conj(W_k)`, so the
//! contracted chain evaluates `ψᵀ U† ψ′`. The last site carries a second
//! channel that pairs the two legs antisymmetrically; for `ψ′ = U ψ` that
//! channel vanishes. A left-to-right SVD sweep turns every site into a
//! co-isometry `P_k` (completed to a unitary gate) and a residual that is pushed
//! into the next site. What remains after the last site is a 2 × 2 factor that
//! fixes the expected output `|v⟩` on a single qubit.
//!
//! Qubit labels: `ψ_k` is `k`, `ψ′_k` is `n + k`, and bond qubit `j` is `2n + j`.
//! Gate `k` acts on `[B_0 .. B_{b_k-1}, ψ_k, ψ′_k]` in that order, the bond
//! register being the most significant bits of the gate index.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{read_blob, with_suffix, write_blob};
use crate::mpo::{Mpo, MpoError};
use crate::tensor::{complete_rows, svd_sorted, Tensor, C64, ONE, ZERO};

/// Singular values below this fraction of the largest are dropped as zeros.
const RANK_CUTOFF: f64 = 1e-12;
/// Post-selection probabilities below this count as impossible.
const MIN_PROBABILITY: f64 = 1e-14;
const NORM_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error(transparent)]
    Mpo(#[from] MpoError),
    #[error("MPO has no sites")]
    Empty,
    #[error("input state has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("input state not normalized: norm² = {0}")]
    NotNormalized(f64),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, VerifierError>;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierGate {
    pub matrix: Tensor,
    pub targets: Vec<usize>,
    /// Bond qubits carrying the incoming bond (the leading `bond_in` of the register).
    pub bond_in: usize,
    /// Bond qubits carrying the outgoing bond, or the output qubit on the last gate.
    pub bond_out: usize,
    /// Outgoing register states that are kept; the rest are post-selected away.
    pub kept: usize,
}

impl VerifierGate {
    pub fn width(&self) -> usize {
        self.targets.len()
    }

    fn register(&self) -> usize {
        self.targets.len() - 2
    }

    fn row_of(&self, j: usize) -> usize {
        j << (self.register() - self.bond_out + 2)
    }

    fn col_of(&self, m: usize, x: usize, xp: usize) -> usize {
        ((m << (self.register() - self.bond_in)) << 2) | (x << 1) | xp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierCircuit {
    n: usize,
    gates: Vec<VerifierGate>,
    postselect_legs: Vec<(usize, Vec<usize>)>,
    expected_output: [C64; 2],
    ideal_amplitude: f64,
    source_fidelity: f64,
    kind: VerifierKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerificationResult {
    pub postselect_probability: f64,
    pub output_fidelity: f64,
    /// Set when the post-selected branch has (numerically) zero weight.
    pub impossible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepthProfile {
    pub gate_count: usize,
    pub gate_widths: Vec<usize>,
    pub staircase_depth: usize,
}

fn ceil_log2(x: usize) -> usize {
    x.next_power_of_two().trailing_zeros() as usize
}

/// Places the `kept` rows of `rows` (each of length `dim`) at `positions` and
/// fills the remaining rows with an orthonormal completion.
fn embed_unitary(rows: &Tensor, positions: &[usize], dim: usize) -> Tensor {
    let full = complete_rows(rows);
    let mut order = vec![usize::MAX; dim];
    for (j, &p) in positions.iter().enumerate() {
        order[p] = j;
    }
    let mut next = positions.len();
    for slot in order.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    Tensor::from_fn(dim, dim, |r, c| full.at(order[r], c))
}

/// Which comparison the chain performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifierKind {
    /// Gates of width `2 + ⌈log₂ χ⌉`. Only the last pair is compared
    /// antisymmetrically, so deviations confined to earlier qubits can pass.
    #[default]
    Staircase,
    /// The bond also carries a flag that any site can raise, so a mismatch on
    /// any qubit pair reaches the output. Costs one extra bond qubit.
    Flagged,
}

pub fn build_verifier(m: &Mpo) -> Result<VerifierCircuit> {
    build_verifier_with(m, VerifierKind::Staircase)
}

pub fn build_verifier_with(m: &Mpo, kind: VerifierKind) -> Result<VerifierCircuit> {
    let n = m.n_sites();
    if n == 0 {
        return Err(VerifierError::Empty);
    }
    let dims = m.bond_dims();
    if dims[0] != 1 || dims[n] != 1 {
        return Err(MpoError::Boundary.into());
    }
    let flags = if kind == VerifierKind::Flagged { 2 } else { 1 };
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    // residual: rows = chain bond (MPO bond × flag), cols = verifier bond
    let mut resid = Tensor::identity(1);
    let mut bond_in = 0usize;
    let mut gates = Vec::with_capacity(n);
    let mut legs = Vec::with_capacity(n);
    let mut expected = [ONE, ZERO];
    let mut ideal_amplitude = 1.0;

    for (k, w) in m.sites().iter().enumerate() {
        let last = k + 1 == n;
        let (l_dim, r_dim) = (w.shape()[0], w.shape()[3]);
        let f_in = if k == 0 { 1 } else { flags };
        let d_in = 1usize << bond_in;
        let rows = if last { 2 } else { r_dim * flags };
        // Φ+ pairing of ψ_k with the (U†ψ′) leg, and the singlet pairing
        let pair = |l: usize, x: usize, xp: usize, r: usize| w.get(&[l, xp, x, r]).conj() * s2;
        let singlet = |l: usize, x: usize, xp: usize, r: usize| if x == 0 { -pair(l, 1, xp, r) } else { pair(l, 0, xp, r) };
        let big = Tensor::from_fn(rows, d_in * 4, |row, col| {
            let (mi, x, xp) = (col >> 2, (col >> 1) & 1, col & 1);
            if mi >= resid.shape()[1] {
                return ZERO;
            }
            let (r, g) = if last { (0, row) } else { (row / flags, row % flags) };
            let mut acc = ZERO;
            for l in 0..l_dim {
                for f in 0..f_in {
                    let core = match (f, g) {
                        (0, 0) | (1, 1) => pair(l, x, xp, r),
                        (0, 1) => singlet(l, x, xp, r),
                        _ => continue,
                    };
                    acc += resid.at(l * f_in + f, mi) * core;
                }
            }
            acc
        });
        let (u, s, vt) = svd_sorted(&big);
        let s0 = s.first().copied().unwrap_or(0.0);
        let rank = s.iter().filter(|&&x| s0 > 0.0 && x > RANK_CUTOFF * s0).count().max(1);
        let bond_out = if last { 1 } else { ceil_log2(rank) };
        let reg = bond_in.max(bond_out);
        let targets: Vec<usize> = (0..reg).map(|j| 2 * n + j).chain([k, n + k]).collect();
        let mut gate = VerifierGate {
            matrix: Tensor::identity(1),
            targets,
            bond_in,
            bond_out,
            kept: rank,
        };
        let dim = 1usize << (reg + 2);
        let p = Tensor::from_fn(rank, dim, |j, c| {
            let mi = c >> (reg - bond_in + 2);
            let low = c & ((1 << (reg - bond_in + 2)) - 1);
            // extra register qubits must be |0⟩
            if low >> 2 != 0 {
                return ZERO;
            }
            vt.at(j, (mi << 2) | (low & 3))
        });
        let positions: Vec<usize> = (0..rank).map(|j| gate.row_of(j)).collect();
        gate.matrix = embed_unitary(&p, &positions, dim);
        let leg_qubits: Vec<usize> = (bond_out..reg).map(|j| 2 * n + j).chain([k, n + k]).collect();
        legs.push((k, leg_qubits));
        gates.push(gate);

        let new_resid = Tensor::from_fn(rows, 1 << bond_out, |r, j| if j < rank { u.at(r, j) * s[j] } else { ZERO });
        if last {
            // ideal output = R y; matched inputs give R y ∝ e0
            if rank == 2 {
                let a = [u.at(0, 0).conj() / s[0], u.at(0, 1).conj() / s[1]];
                let nrm = (a[0].norm_sqr() + a[1].norm_sqr()).sqrt();
                expected = [a[0] / nrm, a[1] / nrm];
                ideal_amplitude = 1.0 / nrm;
            } else {
                ideal_amplitude = s[0];
            }
        }
        resid = new_resid;
        bond_in = bond_out;
    }

    Ok(VerifierCircuit {
        n,
        gates,
        postselect_legs: legs,
        expected_output: expected,
        ideal_amplitude,
        source_fidelity: m.estimated_fidelity(),
        kind,
    })
}

impl VerifierCircuit {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[VerifierGate] {
        &self.gates
    }

    pub fn postselect_legs(&self) -> &[(usize, Vec<usize>)] {
        &self.postselect_legs
    }

    pub fn expected_output(&self) -> [C64; 2] {
        self.expected_output
    }

    /// Norm of the final residual factor applied to `e0`, before normalization.
    pub fn ideal_amplitude(&self) -> f64 {
        self.ideal_amplitude
    }

    pub fn kind(&self) -> VerifierKind {
        self.kind
    }

    pub fn source_fidelity(&self) -> f64 {
        self.source_fidelity
    }

    pub fn set_source_fidelity(&mut self, f: f64) {
        self.source_fidelity = f;
    }

    /// Qubits used in total: both input registers plus the largest bond register.
    pub fn total_qubits(&self) -> usize {
        2 * self.n + self.gates.iter().map(|g| g.register()).max().unwrap_or(0)
    }

    /// Output qubit label (the first bond qubit).
    pub fn output_qubit(&self) -> usize {
        2 * self.n
    }

    pub fn verify_pair(&self, psi: &[C64], psi_prime: &[C64]) -> Result<VerificationResult> {
        let dim = 1usize << self.n;
        for s in [psi, psi_prime] {
            if s.len() != dim {
                return Err(VerifierError::StateLength { got: s.len(), expected: dim });
            }
            let nrm: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            if (nrm - 1.0).abs() > NORM_TOL {
                return Err(VerifierError::NotNormalized(nrm));
            }
        }
        // state[m][a][a'] over bond register, remaining ψ and remaining ψ′ qubits
        let mut bond_dim = 1usize;
        let mut rest = dim;
        let mut state: Vec<C64> = psi.iter().flat_map(|a| psi_prime.iter().map(move |b| a * b)).collect();
        for g in &self.gates {
            let half = rest / 2;
            let mut next = vec![ZERO; g.kept * half * half];
            for j in 0..g.kept {
                let row = g.row_of(j);
                for m in 0..bond_dim {
                    for x in 0..2 {
                        for xp in 0..2 {
                            let coef = g.matrix.at(row, g.col_of(m, x, xp));
                            if coef == ZERO {
                                continue;
                            }
                            let src = m * rest * rest + (x * half) * rest + xp * half;
                            let dst = j * half * half;
                            for a in 0..half {
                                let s_row = src + a * rest;
                                let d_row = dst + a * half;
                                for b in 0..half {
                                    next[d_row + b] += coef * state[s_row + b];
                                }
                            }
                        }
                    }
                }
            }
            state = next;
            bond_dim = g.kept;
            rest = half;
        }
        let prob: f64 = state.iter().map(|z| z.norm_sqr()).sum();
        if !(prob >= MIN_PROBABILITY) {
            return Ok(VerificationResult {
                postselect_probability: prob.max(0.0),
                output_fidelity: 0.0,
                impossible: true,
            });
        }
        let overlap: C64 = state
            .iter()
            .zip(self.expected_output.iter())
            .map(|(o, v)| v.conj() * o)
            .sum();
        Ok(VerificationResult {
            postselect_probability: prob.min(1.0),
            output_fidelity: (overlap.norm_sqr() / prob).clamp(0.0, 1.0),
            impossible: false,
        })
    }

    pub fn depth_profile(&self) -> DepthProfile {
        verifier_depth_profile(self)
    }

    /// Writes `base.verifier.json` and `base.verifier.bin`.
    pub fn save(&self, base: &Path) -> Result<()> {
        let header = VerifierHeader {
            format: "verifier-v1".into(),
            n: self.n,
            kind: self.kind,
            gates: self
                .gates
                .iter()
                .map(|g| GateHeader {
                    targets: g.targets.clone(),
                    bond_in: g.bond_in,
                    bond_out: g.bond_out,
                    kept: g.kept,
                })
                .collect(),
            postselect_legs: self.postselect_legs.clone(),
            expected_output: self.expected_output.map(|z| [z.re, z.im]),
            ideal_amplitude: self.ideal_amplitude,
            source_fidelity: self.source_fidelity,
        };
        let json = serde_json::to_string_pretty(&header).expect("serializable");
        fs::write(with_suffix(base, ".verifier.json"), json).map_err(|e| VerifierError::Io(e.to_string()))?;
        let refs: Vec<&Tensor> = self.gates.iter().map(|g| &g.matrix).collect();
        write_blob(&with_suffix(base, ".verifier.bin"), &refs).map_err(|e| VerifierError::Io(e.to_string()))
    }

    pub fn load(base: &Path) -> Result<Self> {
        let io = |e: String| VerifierError::Io(e);
        let text = fs::read_to_string(with_suffix(base, ".verifier.json")).map_err(|e| io(e.to_string()))?;
        let h: VerifierHeader = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        if h.gates.len() != h.n || h.n == 0 {
            return Err(io("gate count must equal n".into()));
        }
        let mut shapes = Vec::with_capacity(h.gates.len());
        for g in &h.gates {
            let reg = g.targets.len().checked_sub(2).ok_or_else(|| io("gate narrower than 2".into()))?;
            if g.bond_in > reg || g.bond_out > reg || g.kept > 1 << g.bond_out || g.kept == 0 {
                return Err(io("inconsistent gate header".into()));
            }
            shapes.push(vec![1 << (reg + 2), 1 << (reg + 2)]);
        }
        let mats = read_blob(&with_suffix(base, ".verifier.bin"), &shapes).map_err(io)?;
        let gates = h
            .gates
            .into_iter()
            .zip(mats)
            .map(|(g, matrix)| VerifierGate {
                matrix,
                targets: g.targets,
                bond_in: g.bond_in,
                bond_out: g.bond_out,
                kept: g.kept,
            })
            .collect();
        Ok(Self {
            n: h.n,
            gates,
            postselect_legs: h.postselect_legs,
            expected_output: h.expected_output.map(|[re, im]| C64::new(re, im)),
            ideal_amplitude: h.ideal_amplitude,
            source_fidelity: h.source_fidelity,
            kind: h.kind,
        })
    }
}

pub fn verifier_depth_profile(vc: &VerifierCircuit) -> DepthProfile {
    DepthProfile {
        gate_count: vc.gates.len(),
        gate_widths: vc.gates.iter().map(VerifierGate::width).collect(),
        staircase_depth: vc.gates.len(),
    }
}

#[derive(Serialize, Deserialize)]
struct GateHeader {
    targets: Vec<usize>,
    bond_in: usize,
    bond_out: usize,
    kept: usize,
}

#[derive(Serialize, Deserialize)]
struct VerifierHeader {
    format: String,
    n: usize,
    #[serde(default)]
    kind: VerifierKind,
    gates: Vec<GateHeader>,
    postselect_legs: Vec<(usize, Vec<usize>)>,
    expected_output: [[f64; 2]; 2],
    ideal_amplitude: f64,
    source_fidelity: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_mcx, build_qft, circuit_to_dense, Circuit, Gate};
    use crate::mpo::zip_up;
    use crate::sim::{apply_gate, haar_state, product_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_product(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        let qs: Vec<[C64; 2]> = (0..n)
            .map(|_| {
                let v = haar_state(1, rng);
                [v[0], v[1]]
            })
            .collect();
        product_state(&qs)
    }

    /// Full statevector run over every qubit, projecting legs after each gate.
    fn dense_oracle(vc: &VerifierCircuit, psi: &[C64], psi_prime: &[C64]) -> (f64, f64) {
        let total = vc.total_qubits();
        let n = vc.n();
        let mut state = vec![ZERO; 1 << total];
        let pad = total - 2 * n;
        for (a, pa) in psi.iter().enumerate() {
            for (b, pb) in psi_prime.iter().enumerate() {
                state[((a << n) | b) << pad] = pa * pb;
            }
        }
        let bit = |idx: usize, q: usize| (idx >> (total - 1 - q)) & 1;
        for (k, g) in vc.gates().iter().enumerate() {
            apply_gate(&mut state, total, &g.targets, &g.matrix);
            let legs = &vc.postselect_legs()[k].1;
            for (idx, z) in state.iter_mut().enumerate() {
                let out_reg: usize = (0..g.bond_out).fold(0, |acc, j| (acc << 1) | bit(idx, 2 * n + j));
                if legs.iter().any(|&q| bit(idx, q) == 1) || out_reg >= g.kept {
                    *z = ZERO;
                }
            }
        }
        let q = vc.output_qubit();
        let mut out = [ZERO; 2];
        for (idx, z) in state.iter().enumerate() {
            out[bit(idx, q)] += *z;
        }
        let p = out[0].norm_sqr() + out[1].norm_sqr();
        let v = vc.expected_output();
        let ov = v[0].conj() * out[0] + v[1].conj() * out[1];
        (p, ov.norm_sqr() / p)
    }

    fn ideal_output(c: &Circuit, psi: &[C64]) -> Vec<C64> {
        circuit_to_dense(c).unwrap().apply(psi)
    }

    #[test]
    fn gates_are_unitary_and_count_is_n() {
        for n in 1..=6 {
            let c = build_qft(n, true);
            let vc = build_verifier(&zip_up(&c, 8, 1e-12).unwrap()).unwrap();
            assert_eq!(vc.gates().len(), n);
            for g in vc.gates() {
                let d = g.matrix.shape()[0];
                let dev = g.matrix.adjoint().matmul(&g.matrix).unwrap().max_abs_diff(&Tensor::identity(d));
                assert!(dev < 1e-10, "n={n} dev={dev}");
            }
            let v = vc.expected_output();
            assert!((v[0].norm_sqr() + v[1].norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_matched_gives_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            let vc = build_verifier(&Mpo::identity(n)).unwrap();
            assert_eq!(vc.gates().len(), n);
            let psi = random_product(n, &mut rng);
            let r = vc.verify_pair(&psi, &psi).unwrap();
            assert!((r.output_fidelity - 1.0).abs() < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn identity_gates_are_narrow_comparators() {
        let vc = build_verifier(&Mpo::identity(4)).unwrap();
        let w = verifier_depth_profile(&vc).gate_widths;
        assert_eq!(w, vec![2, 2, 2, 3]);
    }

    #[test]
    fn toffoli_matched_and_structure() {
        let c = build_mcx(2);
        let vc = build_verifier(&zip_up(&c, 2, 1e-12).unwrap()).unwrap();
        assert!(vc.gates().iter().all(|g| g.width() == 3));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let psi = random_product(3, &mut rng);
            let out = ideal_output(&c, &psi);
            let r = vc.verify_pair(&psi, &out).unwrap();
            assert!(r.output_fidelity >= 0.999, "{r:?}");
        }
    }

    #[test]
    fn sequential_simulation_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cases = [(build_mcx(3), 2), (build_qft(4, true), 4), (build_qft(4, false), 2)];
        for (c, chi) in cases {
            let n = c.n_qubits();
            let vc = build_verifier(&zip_up(&c, chi, 1e-12).unwrap()).unwrap();
            for trial in 0..6 {
                let psi = random_product(n, &mut rng);
                let psi_p = if trial % 2 == 0 { ideal_output(&c, &psi) } else { haar_state(n, &mut rng) };
                let r = vc.verify_pair(&psi, &psi_p).unwrap();
                let (p, f) = dense_oracle(&vc, &psi, &psi_p);
                assert!((r.postselect_probability - p).abs() < 1e-12, "{} vs {p}", r.postselect_probability);
                assert!((r.output_fidelity - f).abs() < 1e-9, "{} vs {f}", r.output_fidelity);
            }
        }
    }

    #[test]
    fn mcx_mismatch_gap() {
        let c = build_mcx(4);
        let vc = build_verifier(&zip_up(&c, 2, 1e-12).unwrap()).unwrap();
        let prof = verifier_depth_profile(&vc);
        assert_eq!(prof.gate_count, 5);
        assert!(prof.gate_widths.iter().all(|&w| w == 3));
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut matched, mut mism) = (0.0, 0.0);
        for _ in 0..200 {
            let psi = random_product(5, &mut rng);
            matched += vc.verify_pair(&psi, &ideal_output(&c, &psi)).unwrap().output_fidelity;
            mism += vc.verify_pair(&psi, &haar_state(5, &mut rng)).unwrap().output_fidelity;
        }
        let (matched, mism) = (matched / 200.0, mism / 200.0);
        assert!(mism < 0.9 && matched - mism >= 0.1, "matched {matched} mismatched {mism}");
    }

    #[test]
    fn qft_widths_follow_bond() {
        for (chi, w) in [(2, 3), (4, 4), (8, 5)] {
            let c = build_qft(8, true);
            let m = zip_up(&c, chi, 1e-12).unwrap();
            let vc = build_verifier(&m).unwrap();
            let widths = verifier_depth_profile(&vc).gate_widths;
            assert_eq!(widths.iter().copied().max(), Some(w), "chi={chi} {widths:?}");
            let bonds = m.bond_dims();
            for (k, g) in vc.gates().iter().enumerate() {
                let local = bonds[k].max(bonds[k + 1]);
                assert!(g.width() <= 2 + ceil_log2(local).max(1), "site {k}");
            }
        }
    }

    #[test]
    fn degradation_bound_on_truncated_qft() {
        let c = build_qft(6, true);
        let m = zip_up(&c, 4, 1e-12).unwrap();
        let vc = build_verifier(&m).unwrap();
        let f_src = vc.source_fidelity();
        assert!(f_src < 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let psi = random_product(6, &mut rng);
            let r = vc.verify_pair(&psi, &ideal_output(&c, &psi)).unwrap();
            assert!(r.output_fidelity >= f_src * f_src - 0.01, "{} < {}", r.output_fidelity, f_src * f_src);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let vc = build_verifier(&Mpo::identity(2)).unwrap();
        let psi = vec![ONE, ZERO, ZERO, ZERO];
        assert!(matches!(vc.verify_pair(&psi, &psi[..2]), Err(VerifierError::StateLength { .. })));
        let bad = vec![ONE, ONE, ZERO, ZERO];
        assert!(matches!(vc.verify_pair(&psi, &bad), Err(VerifierError::NotNormalized(_))));
    }

    #[test]
    fn orthogonal_inputs_are_impossible() {
        // identity verifier compares ψ and ψ′ qubit by qubit
        let vc = build_verifier(&Mpo::identity(2)).unwrap();
        let a = vec![ONE, ZERO, ZERO, ZERO];
        let b = vec![ZERO, ZERO, ZERO, ONE];
        let r = vc.verify_pair(&a, &b).unwrap();
        assert!(r.impossible);
        assert_eq!(r.output_fidelity, 0.0);
    }

    #[test]
    fn flagged_variant_matches_and_agrees_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (c, chi) in [(build_mcx(3), 2), (build_qft(4, true), 4)] {
            let n = c.n_qubits();
            let m = zip_up(&c, chi, 1e-12).unwrap();
            let plain = build_verifier(&m).unwrap();
            let vc = build_verifier_with(&m, VerifierKind::Flagged).unwrap();
            assert_eq!(vc.kind(), VerifierKind::Flagged);
            let wp = verifier_depth_profile(&plain).gate_widths;
            let wf = verifier_depth_profile(&vc).gate_widths;
            assert!(wf.iter().zip(&wp).all(|(f, p)| f <= &(p + 1)));
            for g in vc.gates() {
                let d = g.matrix.shape()[0];
                assert!(g.matrix.adjoint().matmul(&g.matrix).unwrap().max_abs_diff(&Tensor::identity(d)) < 1e-10);
            }
            for trial in 0..6 {
                let psi = random_product(n, &mut rng);
                let psi_p = if trial % 2 == 0 { ideal_output(&c, &psi) } else { haar_state(n, &mut rng) };
                let r = vc.verify_pair(&psi, &psi_p).unwrap();
                let (p, f) = dense_oracle(&vc, &psi, &psi_p);
                assert!((r.postselect_probability - p).abs() < 1e-12);
                assert!((r.output_fidelity - f).abs() < 1e-9);
                if trial % 2 == 0 && chi == 2 {
                    assert!(r.output_fidelity > 1.0 - 1e-9, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn only_flagged_variant_sees_errors_away_from_last_pair() {
        // ψ′ = Rz(0.4) on qubit 0 applied to ψ, checked against the identity
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = Circuit::new(3).with(Gate::rz(0, crate::circuit::Angle::Value(0.4))).unwrap();
        let m = Mpo::identity(3);
        let plain = build_verifier(&m).unwrap();
        let flagged = build_verifier_with(&m, VerifierKind::Flagged).unwrap();
        let (mut fp, mut ff) = (0.0, 0.0);
        for _ in 0..50 {
            let psi = random_product(3, &mut rng);
            let out = ideal_output(&err, &psi);
            fp += plain.verify_pair(&psi, &out).unwrap().output_fidelity / 50.0;
            ff += flagged.verify_pair(&psi, &out).unwrap().output_fidelity / 50.0;
        }
        assert!(fp > 1.0 - 1e-9, "{fp}");
        assert!(ff < 0.99, "{ff}");
    }

    #[test]
    fn save_load_roundtrip() {
        let c = Circuit::new(3).with(Gate::h(0)).unwrap().with(Gate::cnot(0, 2)).unwrap();
        let vc = build_verifier(&zip_up(&c, 4, 1e-12).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("v");
        vc.save(&base).unwrap();
        assert_eq!(VerifierCircuit::load(&base).unwrap(), vc);
    }
}
