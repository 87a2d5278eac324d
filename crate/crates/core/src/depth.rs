//! Depth estimates for circuits and verifier circuits on a 2D nearest-neighbour
//! array, and the qubit count at which the verifier becomes the shallower of
//! the two.
//!
//! Qubits are embedded along a snake path through the grid, so every pair of
//! neighbours on the line is also a pair of neighbours on the grid; routing
//! only uses line adjacency. Depth counts weighted layers: each single-qubit
//! layer costs `d1` and each entangling layer `d2`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{decompose_mcx, Circuit, CircuitError, GateKind};
use crate::tensor::{inverse_with_condition, Tensor};

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("unknown circuit kind {0:?}, expected qft or mcx")]
    UnknownKind(String),
    #[error("unsupported bond dimension {0}, expected 2, 4 or 8")]
    UnsupportedChi(usize),
    #[error("need at least 2 qubits, got {0}")]
    TooFewQubits(usize),
    #[error("invalid depth model: {0}")]
    Model(String),
    #[error("{0}-qubit gate must be decomposed before scheduling")]
    Wide(usize),
    #[error("layout is not a permutation of 0..{0}")]
    Layout(usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DepthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitKind {
    Qft,
    Mcx,
}

impl FromStr for CircuitKind {
    type Err = DepthError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qft" => Ok(Self::Qft),
            "mcx" => Ok(Self::Mcx),
            _ => Err(DepthError::UnknownKind(s.to_string())),
        }
    }
}

impl fmt::Display for CircuitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Qft => "qft",
            Self::Mcx => "mcx",
        })
    }
}

/// Entangling-gate count charged for an arbitrary k-qubit unitary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CnotFormula {
    /// `⌈(23/48)·4^k − (3/2)·2^k + 4/3⌉`, the quantum Shannon decomposition count.
    ShannonBound,
    /// Opaque gates are free; a forcing case for tests.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Embedding {
    /// Boustrophedon path: left to right on even rows, right to left on odd rows.
    Snake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    /// Grid width; 0 picks `⌈√n⌉`.
    pub columns: usize,
    pub embedding: Embedding,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            columns: 0,
            embedding: Embedding::Snake,
        }
    }
}

impl Grid {
    pub fn width(&self, n: usize) -> usize {
        if self.columns > 0 {
            self.columns
        } else {
            (1..).find(|w| w * w >= n).unwrap_or(1)
        }
    }

    /// Grid `(row, column)` of line position `p` for an `n`-qubit register.
    pub fn coordinates(&self, p: usize, n: usize) -> (usize, usize) {
        let w = self.width(n);
        let (r, c) = (p / w, p % w);
        match self.embedding {
            Embedding::Snake if r % 2 == 1 => (r, w - 1 - c),
            Embedding::Snake => (r, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthModel {
    /// Cost of a layer of arbitrary single-qubit unitaries.
    pub d1: f64,
    /// Cost of a layer of the native entangling gate.
    pub d2: f64,
    pub cnot_formula: CnotFormula,
    /// Entangling gates per SWAP.
    pub swap_cost: u32,
    pub grid: Grid,
}

impl Default for DepthModel {
    /// Entangling layers only.
    fn default() -> Self {
        Self {
            d1: 0.0,
            d2: 1.0,
            cnot_formula: CnotFormula::ShannonBound,
            swap_cost: 3,
            grid: Grid::default(),
        }
    }
}

impl DepthModel {
    /// Single-qubit layers counted with the same weight as entangling ones.
    pub fn weighted() -> Self {
        Self {
            d1: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d1.is_finite() && self.d1 >= 0.0) {
            return Err(DepthError::Model(format!("d1 = {} must be finite and non-negative", self.d1)));
        }
        if !(self.d2.is_finite() && self.d2 > 0.0) {
            return Err(DepthError::Model(format!("d2 = {} must be finite and positive", self.d2)));
        }
        if self.swap_cost == 0 {
            return Err(DepthError::Model("swap_cost must be at least 1".into()));
        }
        Ok(())
    }

    /// Entangling gates charged for an arbitrary `k`-qubit unitary.
    pub fn unitary_cnot_count(&self, k: usize) -> u64 {
        match self.cnot_formula {
            CnotFormula::Zero => 0,
            CnotFormula::ShannonBound => shannon_cnot_count(k),
        }
    }

    /// Depth of one opaque `k`-qubit gate on a line of `k` qubits: its
    /// entangling gates in sequence with single-qubit layers around each.
    pub fn opaque_gate_depth(&self, k: usize) -> f64 {
        let count = self.unitary_cnot_count(k) as f64;
        count * self.d2 + (count + 1.0) * self.d1
    }
}

/// `⌈(23/48)·4^k − (3/2)·2^k + 4/3⌉` in integer arithmetic; 0 for one qubit.
pub fn shannon_cnot_count(k: usize) -> u64 {
    if k <= 1 {
        return 0;
    }
    let p = 1u128 << k;
    let num = 23 * p * p + 64 - 72 * p;
    num.div_ceil(48) as u64
}

/// Width of a verifier gate at bond dimension `chi`.
pub fn verifier_gate_width(chi: usize) -> Result<usize> {
    match chi {
        2 | 4 | 8 => Ok(2 + chi.trailing_zeros() as usize),
        _ => Err(DepthError::UnsupportedChi(chi)),
    }
}

/// Depth of the `n`-site verifier staircase. Consecutive gates share bond
/// qubits, so the gates run one after another.
pub fn depth_verifier_2d(_kind: CircuitKind, n: usize, chi: usize, model: &DepthModel) -> Result<f64> {
    model.validate()?;
    let w = verifier_gate_width(chi)?;
    Ok(n as f64 * model.opaque_gate_depth(w))
}

/// Coefficients of `a·n² + b·n + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, n: f64) -> f64 {
        (self.a * n + self.b) * n + self.c
    }
}

/// Depth of the QFT swap network as a quadratic in `n`.
///
/// Row `i` starts with a Hadamard on the qubit at the head of the line, which
/// then walks down the line: a controlled phase with each neighbour, each
/// followed by a SWAP except the very last phase of the circuit. A controlled
/// phase lowers to two entangling gates and two single-qubit layers. Rows are
/// not overlapped.
pub fn qft_depth_coefficients(model: &DepthModel) -> Quadratic {
    let (d1, d2, s) = (model.d1, model.d2, model.swap_cost as f64);
    // per pair: phase (2 d1 + 2 d2) plus a SWAP (s d2); one SWAP is saved
    let k = 2.0 * d1 + (2.0 + s) * d2;
    Quadratic {
        a: k / 2.0,
        b: d1 - k / 2.0,
        c: -s * d2,
    }
}

/// Depth of `kind` on `n` qubits transpiled to the grid.
pub fn depth_circuit_2d(kind: CircuitKind, n: usize, model: &DepthModel) -> Result<f64> {
    model.validate()?;
    if n < 2 {
        return Err(DepthError::TooFewQubits(n));
    }
    match kind {
        CircuitKind::Qft => Ok(qft_depth_coefficients(model).eval(n as f64)),
        CircuitKind::Mcx => {
            let c = decompose_mcx(n - 1)?;
            transpile_line(&c, &mcx_layout(n), model)
        }
    }
}

/// MCX line layout with the target in the middle of the controls.
pub fn mcx_layout(n: usize) -> Vec<usize> {
    let mid = (n - 1) / 2;
    (0..n)
        .map(|q| match q {
            _ if q == n - 1 => mid,
            _ if q < mid => q,
            _ => q + 1,
        })
        .collect()
}

/// Routes `c` onto a line with qubit `q` starting at position `layout[q]` and
/// returns the ASAP-scheduled weighted depth.
///
/// A two-qubit gate between distant qubits first walks its first qubit along
/// the line with SWAPs; the permutation is kept afterwards. Runs of
/// single-qubit gates on one position merge into one layer.
pub fn transpile_line(c: &Circuit, layout: &[usize], model: &DepthModel) -> Result<f64> {
    model.validate()?;
    let n = c.n_qubits();
    let mut seen = vec![false; n];
    if layout.len() != n || layout.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(DepthError::Layout(n));
    }
    let mut s = Schedule {
        pos: layout.to_vec(),
        occupant: vec![0; n],
        ready: vec![0.0; n],
        single: vec![false; n],
        model: *model,
    };
    for (q, &p) in layout.iter().enumerate() {
        s.occupant[p] = q;
    }
    for g in c.gates() {
        let t = &g.targets;
        match (&g.kind, t.len()) {
            (_, 1) => s.one(t[0]),
            (GateKind::Cnot | GateKind::Cz, _) => {
                s.route(t[0], t[1]);
                s.entangle(t[0], t[1], 1);
            }
            (GateKind::Cp, _) => {
                s.route(t[0], t[1]);
                s.entangle(t[0], t[1], 1);
                s.one(t[1]);
                s.entangle(t[0], t[1], 1);
                s.one(t[0]);
                s.one(t[1]);
            }
            (GateKind::Swap, _) => {
                s.route(t[0], t[1]);
                s.entangle(t[0], t[1], model.swap_cost);
            }
            (GateKind::Unitary { .. }, 2) => {
                s.route(t[0], t[1]);
                s.one(t[0]);
                s.one(t[1]);
                for _ in 0..3 {
                    s.entangle(t[0], t[1], 1);
                    s.one(t[0]);
                    s.one(t[1]);
                }
            }
            (_, k) => return Err(DepthError::Wide(k)),
        }
    }
    Ok(s.ready.iter().copied().fold(0.0, f64::max))
}

struct Schedule {
    pos: Vec<usize>,
    occupant: Vec<usize>,
    /// Time at which each line position is free.
    ready: Vec<f64>,
    /// Whether the last op on a position was single-qubit.
    single: Vec<bool>,
    model: DepthModel,
}

impl Schedule {
    fn one(&mut self, q: usize) {
        let p = self.pos[q];
        if !self.single[p] {
            self.ready[p] += self.model.d1;
            self.single[p] = true;
        }
    }

    fn entangle_at(&mut self, p0: usize, p1: usize, count: u32) {
        let t = self.ready[p0].max(self.ready[p1]) + count as f64 * self.model.d2;
        for p in [p0, p1] {
            self.ready[p] = t;
            self.single[p] = false;
        }
    }

    fn entangle(&mut self, a: usize, b: usize, count: u32) {
        self.entangle_at(self.pos[a], self.pos[b], count);
    }

    fn route(&mut self, a: usize, b: usize) {
        while self.pos[a].abs_diff(self.pos[b]) > 1 {
            let p = self.pos[a];
            let next = if self.pos[b] > p { p + 1 } else { p - 1 };
            self.entangle_at(p, next, self.model.swap_cost);
            let other = self.occupant[next];
            self.occupant.swap(p, next);
            self.pos[a] = next;
            self.pos[other] = p;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPoint {
    pub n: usize,
    pub circuit_depth: f64,
    pub verifier_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub circuit_kind: CircuitKind,
    pub chi: usize,
    /// Smallest scanned n at which the verifier is strictly shallower.
    pub n_star: Option<usize>,
    pub n_max: usize,
    pub model: DepthModel,
    /// Closed-form circuit depth, when one exists.
    pub circuit_coefficients: Option<Quadratic>,
    pub curve: Vec<DepthPoint>,
}

impl CrossoverReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,circuit_depth,verifier_depth\n");
        for p in &self.curve {
            s.push_str(&format!("{},{:.8e},{:.8e}\n", p.n, p.circuit_depth, p.verifier_depth));
        }
        s
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json())?;
        std::fs::write(csv_path, self.to_csv())?;
        Ok(())
    }
}

/// Scans `n = 2..=n_max` for the first qubit count at which the verifier is
/// shallower than the circuit it checks.
pub fn find_crossover(kind: CircuitKind, chi: usize, model: &DepthModel, n_max: usize) -> Result<CrossoverReport> {
    model.validate()?;
    verifier_gate_width(chi)?;
    let curve = (2..=n_max)
        .into_par_iter()
        .map(|n| {
            Ok(DepthPoint {
                n,
                circuit_depth: depth_circuit_2d(kind, n, model)?,
                verifier_depth: depth_verifier_2d(kind, n, chi, model)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_star = curve.iter().find(|p| p.verifier_depth < p.circuit_depth).map(|p| p.n);
    Ok(CrossoverReport {
        circuit_kind: kind,
        chi,
        n_star,
        n_max,
        model: *model,
        circuit_coefficients: (kind == CircuitKind::Qft).then(|| qft_depth_coefficients(model)),
        curve,
    })
}

/// QFT crossover from the closed forms: the smallest `n ≥ 2` with
/// `a·n² + b·n + c > v·n`, `v` being the per-site verifier depth.
pub fn qft_crossover_closed_form(chi: usize, model: &DepthModel) -> Result<usize> {
    model.validate()?;
    let v = model.opaque_gate_depth(verifier_gate_width(chi)?);
    let q = qft_depth_coefficients(model);
    let wins = |n: usize| q.eval(n as f64) > v * n as f64;
    let (a, b) = (q.a, q.b - v);
    let root = (-b + (b * b - 4.0 * a * q.c).max(0.0).sqrt()) / (2.0 * a);
    // the float root can sit one off the integer boundary
    let mut n = (root.floor().max(2.0) as usize).saturating_sub(1).max(2);
    while !wins(n) {
        n += 1;
    }
    Ok(n)
}

/// Least-squares quadratic fit and its R².
pub fn fit_quadratic(x: &[f64], y: &[f64]) -> Option<(Quadratic, f64)> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let row = [1.0, xi, xi * xi];
        for i in 0..3 {
            aty[i] += row[i] * yi;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let m = Tensor::from_fn(3, 3, |r, c| C64::new(ata[r][c], 0.0));
    let (inv, _) = inverse_with_condition(&m)?;
    let coef: Vec<f64> = (0..3).map(|i| (0..3).map(|j| inv.at(i, j).re * aty[j]).sum()).collect();
    let q = Quadratic {
        a: coef[2],
        b: coef[1],
        c: coef[0],
    };
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - q.eval(xi)).powi(2)).sum();
    Some((q, 1.0 - ss_res / ss_tot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_qft, circuit_to_dense, decompose_to_rotations, permutation_matrix, Angle, Gate};
    use std::f64::consts::PI;

    /// The QFT swap network written out gate by gate on line positions, one
    /// circuit per row, and the final qubit at each position.
    fn qft_network_rows(n: usize) -> (Vec<Circuit>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut line: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let mut row = Circuit::new(n);
            let head = line.iter().position(|&q| q == i).unwrap();
            row.push(Gate::h(head)).unwrap();
            let m = n - 1 - i;
            for k in 0..m {
                let partner = line[k + 1];
                row.push(Gate::cp(k, k + 1, Angle::Value(PI / (1u64 << (partner - i)) as f64)))
                    .unwrap();
                if !(i == n - 2 && k + 1 == m) {
                    row.push(Gate::swap(k, k + 1)).unwrap();
                    line.swap(k, k + 1);
                }
            }
            rows.push(row);
        }
        (rows, line)
    }

    #[test]
    fn shannon_counts() {
        assert_eq!(shannon_cnot_count(1), 0);
        assert_eq!(shannon_cnot_count(2), 3);
        assert_eq!(shannon_cnot_count(3), 20);
        assert_eq!(shannon_cnot_count(4), 100);
        assert_eq!(shannon_cnot_count(5), 444);
        for k in 2..12 {
            let p = 2f64.powi(k as i32);
            assert_eq!(shannon_cnot_count(k), (23.0 / 48.0 * p * p - 1.5 * p + 4.0 / 3.0 - 1e-9).ceil() as u64);
        }
    }

    #[test]
    fn verifier_widths() {
        assert_eq!(verifier_gate_width(2).unwrap(), 3);
        assert_eq!(verifier_gate_width(4).unwrap(), 4);
        assert_eq!(verifier_gate_width(8).unwrap(), 5);
        assert!(matches!(verifier_gate_width(16), Err(DepthError::UnsupportedChi(16))));
        assert!(depth_verifier_2d(CircuitKind::Qft, 4, 3, &DepthModel::default()).is_err());
    }

    #[test]
    fn verifier_depth_is_exactly_linear() {
        for model in [DepthModel::default(), DepthModel::weighted()] {
            for chi in [2, 4, 8] {
                let d = |n| depth_verifier_2d(CircuitKind::Mcx, n, chi, &model).unwrap();
                for n in 2..60 {
                    assert_eq!(d(n + 2) - 2.0 * d(n + 1) + d(n), 0.0);
                    assert_eq!(d(2 * n), 2.0 * d(n));
                }
            }
        }
    }

    #[test]
    fn qft_network_is_a_qft() {
        for n in 2..=5 {
            let (rows, line) = qft_network_rows(n);
            let mut net = Circuit::new(n);
            for r in &rows {
                net.extend(r).unwrap();
            }
            // position p ends up holding qubit line[p]
            let perm = permutation_matrix(1 << n, |x| {
                (0..n).fold(0, |acc, p| acc | (((x >> (n - 1 - line[p])) & 1) << (n - 1 - p)))
            });
            let got = circuit_to_dense(&net).unwrap();
            let want = perm.matmul(&circuit_to_dense(&build_qft(n, false)).unwrap()).unwrap();
            assert!(crate::circuit::phase_aligned_distance(&got, &want) < 1e-9, "n={n}");
        }
    }

    #[test]
    fn qft_closed_form_matches_scheduled_network() {
        for model in [DepthModel::default(), DepthModel::weighted(), DepthModel { swap_cost: 2, d1: 0.5, ..Default::default() }] {
            for n in 2..=12 {
                let ident: Vec<usize> = (0..n).collect();
                let explicit: f64 = qft_network_rows(n)
                    .0
                    .iter()
                    .map(|r| transpile_line(r, &ident, &model).unwrap())
                    .sum();
                let closed = depth_circuit_2d(CircuitKind::Qft, n, &model).unwrap();
                assert!((explicit - closed).abs() < 1e-9, "n={n} {explicit} vs {closed}");
            }
        }
    }

    #[test]
    fn qft_two_qubits_by_hand() {
        // H; CP as CNOT, Rz, CNOT, Rz⊗Rz; H: two entangling and four
        // single-qubit layers
        assert_eq!(depth_circuit_2d(CircuitKind::Qft, 2, &DepthModel::default()).unwrap(), 2.0);
        assert_eq!(depth_circuit_2d(CircuitKind::Qft, 2, &DepthModel::weighted()).unwrap(), 6.0);
    }

    #[test]
    fn qft_depth_is_quadratic() {
        let m = DepthModel::default();
        for n in [16, 32, 64] {
            let r = depth_circuit_2d(CircuitKind::Qft, 2 * n, &m).unwrap() / depth_circuit_2d(CircuitKind::Qft, n, &m).unwrap();
            assert!((r - 4.0).abs() <= 0.6, "n={n} ratio {r}");
        }
        let ns: Vec<f64> = (8..=128).map(|n| n as f64).collect();
        let ds: Vec<f64> = (8..=128).map(|n| depth_circuit_2d(CircuitKind::Qft, n, &m).unwrap()).collect();
        let (q, r2) = fit_quadratic(&ns, &ds).unwrap();
        assert!(q.a > 0.0 && r2 >= 0.99, "{q:?} {r2}");
    }

    #[test]
    fn toffoli_depth_by_hand() {
        // target in the middle: four CNOTs onto the target, then the two
        // control-control CNOTs after one SWAP brings the controls together
        let d = depth_circuit_2d(CircuitKind::Mcx, 3, &DepthModel::default()).unwrap();
        assert_eq!(d, 4.0 + 3.0 + 2.0);
        // CNOT is a single entangling gate
        assert_eq!(depth_circuit_2d(CircuitKind::Mcx, 2, &DepthModel::default()).unwrap(), 1.0);
    }

    #[test]
    fn routing_walks_distant_qubits() {
        let mut c = Circuit::new(4);
        c.push(Gate::cnot(0, 3)).unwrap();
        c.push(Gate::cnot(0, 3)).unwrap();
        let m = DepthModel::default();
        // two SWAPs bring qubit 0 next to qubit 3; the second CNOT needs none
        assert_eq!(transpile_line(&c, &[0, 1, 2, 3], &m).unwrap(), 2.0 * 3.0 + 2.0);
        assert_eq!(transpile_line(&c, &[0, 2, 3, 1], &m).unwrap(), 2.0);
        assert!(matches!(transpile_line(&c, &[0, 0, 1, 2], &m), Err(DepthError::Layout(4))));
    }

    #[test]
    fn transpile_lowers_decomposed_and_gate_level_alike() {
        // CNOT lowering is native, so decomposing a CNOT-only circuit is a no-op
        let mut c = Circuit::new(3);
        c.push(Gate::cnot(0, 1)).unwrap();
        c.push(Gate::cnot(1, 2)).unwrap();
        let d = decompose_to_rotations(&c).unwrap();
        let m = DepthModel::weighted();
        let id = [0, 1, 2];
        assert_eq!(transpile_line(&c, &id, &m).unwrap(), transpile_line(&d, &id, &m).unwrap());
    }

    #[test]
    fn snake_neighbours_are_grid_neighbours() {
        let g = Grid::default();
        for n in [5, 9, 17, 30] {
            for p in 0..n - 1 {
                let (a, b) = (g.coordinates(p, n), g.coordinates(p + 1, n));
                assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn mcx_crossover_is_small() {
        let r = find_crossover(CircuitKind::Mcx, 2, &DepthModel::default(), 24).unwrap();
        let n = r.n_star.expect("crossover");
        assert!(n <= 12, "{n}");
    }

    #[test]
    fn qft_crossover_ordering() {
        let m = DepthModel::default();
        let stars: Vec<usize> = [2, 4, 8]
            .iter()
            .map(|&chi| find_crossover(CircuitKind::Qft, chi, &m, 400).unwrap().n_star.unwrap())
            .collect();
        assert!(stars[0] < stars[1] && stars[1] < stars[2], "{stars:?}");
        assert!(stars[2] >= 10 * stars[0], "{stars:?}");
        for (i, &chi) in [2, 4, 8].iter().enumerate() {
            assert_eq!(qft_crossover_closed_form(chi, &m).unwrap(), stars[i]);
        }
    }

    #[test]
    fn zero_cost_verifier_crosses_immediately() {
        let m = DepthModel {
            cnot_formula: CnotFormula::Zero,
            ..Default::default()
        };
        for kind in [CircuitKind::Qft, CircuitKind::Mcx] {
            let r = find_crossover(kind, 2, &m, 10).unwrap();
            let first = r.curve.iter().find(|p| p.circuit_depth > 0.0).unwrap().n;
            assert_eq!(r.n_star, Some(first));
        }
    }

    #[test]
    fn no_crossover_is_reported_absent() {
        let r = find_crossover(CircuitKind::Qft, 8, &DepthModel::default(), 20).unwrap();
        assert_eq!(r.n_star, None);
        assert_eq!(r.curve.len(), 19);
    }

    #[test]
    fn curves_are_non_decreasing() {
        for kind in [CircuitKind::Qft, CircuitKind::Mcx] {
            for model in [DepthModel::default(), DepthModel::weighted()] {
                let r = find_crossover(kind, 4, &model, 40).unwrap();
                for w in r.curve.windows(2) {
                    assert!(w[1].circuit_depth >= w[0].circuit_depth, "{kind} {:?}", w);
                    assert!(w[1].verifier_depth >= w[0].verifier_depth);
                }
            }
        }
    }

    #[test]
    fn model_validation_and_kinds() {
        assert!(DepthModel { d2: 0.0, ..Default::default() }.validate().is_err());
        assert!(DepthModel { d1: -1.0, ..Default::default() }.validate().is_err());
        assert!(DepthModel { swap_cost: 0, ..Default::default() }.validate().is_err());
        assert!(matches!(depth_circuit_2d(CircuitKind::Qft, 1, &DepthModel::default()), Err(DepthError::TooFewQubits(1))));
        assert_eq!("QFT".parse::<CircuitKind>().unwrap(), CircuitKind::Qft);
        assert!(matches!("grover".parse::<CircuitKind>(), Err(DepthError::UnknownKind(_))));
    }

    #[test]
    fn report_outputs() {
        let r = find_crossover(CircuitKind::Qft, 2, &DepthModel::default(), 12).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("n,circuit_depth,verifier_depth\n2,2.00000000e0,4.00000000e1\n"), "{csv}");
        assert_eq!(csv.lines().count(), 12);
        let back: CrossoverReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let cfg: DepthModel = toml::from_str("d1 = 1.0\n").unwrap();
        assert_eq!(cfg, DepthModel::weighted());
    }
}

