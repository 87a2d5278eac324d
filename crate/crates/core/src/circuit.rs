//! Gate-level circuits with symbolic rotation parameters.
//!
//! Qubit 0 is the most significant bit of every basis index. A gate's matrix
//! is indexed with `targets[0]` as its most significant bit.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::apply_gate;
use crate::tensor::{is_isometry, svd_sorted, Tensor, C64, ONE, ZERO};

/// Widest circuit the dense oracle will build.
pub const DENSE_MAX_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("gate targets {targets:?} are invalid for a {n}-qubit circuit")]
    BadTargets { targets: Vec<usize>, n: usize },
    #[error("gate {kind} expects {expected} targets, got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("gate {0} needs an angle")]
    MissingAngle(&'static str),
    #[error("opaque gate matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` is not bound")]
    Unbound(String),
    #[error("missing values for parameters: {0:?}")]
    MissingBindings(Vec<String>),
    #[error("no such parameters in circuit: {0:?}")]
    SuperfluousBindings(Vec<String>),
    #[error("dense simulation limited to {max} qubits, circuit has {n}")]
    TooWide { n: usize, max: usize },
    #[error("cannot decompose an opaque {0}-qubit gate into rotations")]
    OpaqueTooWide(usize),
    #[error("malformed circuit document: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CircuitError>;

/// Rotation angle, either bound or symbolic.
#[derive(Debug, Clone, PartialEq)]
pub enum Angle {
    Value(f64),
    /// π / `den`, with `den` a power of two.
    PiOver(u64),
    Param(String),
}

impl Angle {
    pub fn resolve(&self) -> Result<f64> {
        match self {
            Angle::Value(v) => Ok(*v),
            Angle::PiOver(d) => Ok(PI / *d as f64),
            Angle::Param(name) => Err(CircuitError::Unbound(name.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    H,
    X,
    Rz,
    Ry,
    Rx,
    /// Controlled phase, targets (control, target).
    Cp,
    /// Targets (control, target).
    Cnot,
    Cz,
    Swap,
    Unitary {
        matrix: Tensor,
        /// Multi-controlled single-target structure: controls are all but
        /// the last target, and `u` is the 2×2 row-major target unitary.
        controlled: Option<[C64; 4]>,
    },
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Rz => "rz",
            GateKind::Ry => "ry",
            GateKind::Rx => "rx",
            GateKind::Cp => "cp",
            GateKind::Cnot => "cnot",
            GateKind::Cz => "cz",
            GateKind::Swap => "swap",
            GateKind::Unitary { .. } => "unitary",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            GateKind::H | GateKind::X | GateKind::Rz | GateKind::Ry | GateKind::Rx => Some(1),
            GateKind::Cp | GateKind::Cnot | GateKind::Cz | GateKind::Swap => Some(2),
            GateKind::Unitary { matrix, .. } => Some(matrix.shape()[0].trailing_zeros() as usize),
        }
    }

    fn takes_angle(&self) -> bool {
        matches!(self, GateKind::Rz | GateKind::Ry | GateKind::Rx | GateKind::Cp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub param: Option<Angle>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>, param: Option<Angle>) -> Self {
        Self { kind, targets, param }
    }

    pub fn h(q: usize) -> Self {
        Self::new(GateKind::H, vec![q], None)
    }

    pub fn x(q: usize) -> Self {
        Self::new(GateKind::X, vec![q], None)
    }

    pub fn rz(q: usize, a: Angle) -> Self {
        Self::new(GateKind::Rz, vec![q], Some(a))
    }

    pub fn ry(q: usize, a: Angle) -> Self {
        Self::new(GateKind::Ry, vec![q], Some(a))
    }

    pub fn rx(q: usize, a: Angle) -> Self {
        Self::new(GateKind::Rx, vec![q], Some(a))
    }

    pub fn cp(control: usize, target: usize, a: Angle) -> Self {
        Self::new(GateKind::Cp, vec![control, target], Some(a))
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self::new(GateKind::Cnot, vec![control, target], None)
    }

    pub fn cz(a: usize, b: usize) -> Self {
        Self::new(GateKind::Cz, vec![a, b], None)
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Self::new(GateKind::Swap, vec![a, b], None)
    }

    pub fn unitary(targets: Vec<usize>, matrix: Tensor) -> Self {
        Self::new(
            GateKind::Unitary {
                matrix,
                controlled: None,
            },
            targets,
            None,
        )
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self.kind, GateKind::Rz | GateKind::Ry | GateKind::Rx | GateKind::Cp)
    }

    /// Matrix of the gate with its angle bound.
    pub fn matrix(&self) -> Result<Tensor> {
        let angle = match &self.param {
            Some(a) if self.kind.takes_angle() => a.resolve()?,
            _ => 0.0,
        };
        Ok(match &self.kind {
            GateKind::H => hadamard(),
            GateKind::X => pauli_x(),
            GateKind::Rz => rz_matrix(angle),
            GateKind::Ry => ry_matrix(angle),
            GateKind::Rx => rx_matrix(angle),
            GateKind::Cp => diag(&[ONE, ONE, ONE, C64::from_polar(1.0, angle)]),
            GateKind::Cnot => permutation_matrix(4, |x| if x >= 2 { x ^ 1 } else { x }),
            GateKind::Cz => diag(&[ONE, ONE, ONE, -ONE]),
            GateKind::Swap => permutation_matrix(4, |x| ((x & 1) << 1) | (x >> 1)),
            GateKind::Unitary { matrix, .. } => matrix.clone(),
        })
    }
}

pub fn hadamard() -> Tensor {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    Tensor::new(vec![2, 2], vec![s, s, s, -s]).expect("2x2")
}

pub fn pauli_x() -> Tensor {
    Tensor::new(vec![2, 2], vec![ZERO, ONE, ONE, ZERO]).expect("2x2")
}

pub fn rz_matrix(t: f64) -> Tensor {
    diag(&[C64::from_polar(1.0, -t / 2.0), C64::from_polar(1.0, t / 2.0)])
}

pub fn ry_matrix(t: f64) -> Tensor {
    let (s, c) = (t / 2.0).sin_cos();
    Tensor::new(
        vec![2, 2],
        vec![C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
    )
    .expect("2x2")
}

pub fn rx_matrix(t: f64) -> Tensor {
    let (s, c) = (t / 2.0).sin_cos();
    Tensor::new(
        vec![2, 2],
        vec![C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)],
    )
    .expect("2x2")
}

fn diag(d: &[C64]) -> Tensor {
    Tensor::from_fn(d.len(), d.len(), |r, c| if r == c { d[r] } else { ZERO })
}

/// Matrix with ones at `(f(x), x)`.
pub fn permutation_matrix(dim: usize, f: impl Fn(usize) -> usize) -> Tensor {
    let mut m = Tensor::zeros(vec![dim, dim]);
    for x in 0..dim {
        m.set(f(x), x, ONE);
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    /// Free parameters in registration order with their nominal values.
    params: Vec<(String, f64)>,
    /// Position of each name in `params`.
    param_index: HashMap<String, usize>,
    /// Classical relabeling of output qubits: logical output `k` sits on
    /// physical qubit `output_permutation[k]`.
    output_permutation: Option<Vec<usize>>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1, "a circuit needs at least one qubit");
        Self {
            n_qubits,
            gates: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
            output_permutation: None,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn output_permutation(&self) -> Option<&[usize]> {
        self.output_permutation.as_deref()
    }

    pub fn set_output_permutation(&mut self, perm: Option<Vec<usize>>) {
        self.output_permutation = perm;
    }

    /// Registers a free parameter with its nominal value. Re-registering a
    /// name updates the nominal value.
    pub fn add_param(&mut self, name: impl Into<String>, nominal: f64) {
        let name = name.into();
        match self.param_index.get(&name) {
            Some(&i) => self.params[i].1 = nominal,
            None => {
                self.param_index.insert(name.clone(), self.params.len());
                self.params.push((name, nominal));
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn nominal_values(&self) -> BTreeMap<String, f64> {
        self.params.iter().cloned().collect()
    }

    /// Nominal values in registration order.
    pub fn nominal_vector(&self) -> Vec<f64> {
        self.params.iter().map(|(_, v)| *v).collect()
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let n = self.n_qubits;
        let mut sorted = gate.targets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if gate.targets.is_empty() || sorted.len() != gate.targets.len() || sorted.iter().any(|&q| q >= n) {
            return Err(CircuitError::BadTargets {
                targets: gate.targets.clone(),
                n,
            });
        }
        if let Some(k) = gate.kind.arity() {
            if k != gate.targets.len() {
                return Err(CircuitError::Arity {
                    kind: gate.kind.name(),
                    expected: k,
                    got: gate.targets.len(),
                });
            }
        }
        if gate.kind.takes_angle() && gate.param.is_none() {
            return Err(CircuitError::MissingAngle(gate.kind.name()));
        }
        if let GateKind::Unitary { matrix, .. } = &gate.kind {
            let rep = is_isometry(matrix, &[1], 1e-10);
            if !rep.is_isometry {
                return Err(CircuitError::NotUnitary(rep.max_deviation));
            }
        }
        if let Some(Angle::Param(name)) = &gate.param {
            if !self.param_index.contains_key(name) {
                return Err(CircuitError::UnknownParameter(name.clone()));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn with(mut self, gate: Gate) -> Result<Self> {
        self.push(gate)?;
        Ok(self)
    }

    /// Substitutes every free parameter. The map must name exactly the
    /// registered parameters.
    pub fn bind_parameters(&self, values: &BTreeMap<String, f64>) -> Result<Circuit> {
        let missing: Vec<String> = self
            .params
            .iter()
            .filter(|(n, _)| !values.contains_key(n))
            .map(|(n, _)| n.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CircuitError::MissingBindings(missing));
        }
        let extra: Vec<String> = values
            .keys()
            .filter(|k| !self.param_index.contains_key(*k))
            .cloned()
            .collect();
        if !extra.is_empty() {
            return Err(CircuitError::SuperfluousBindings(extra));
        }
        let gates = self
            .gates
            .iter()
            .map(|g| {
                let mut g = g.clone();
                if let Some(Angle::Param(name)) = &g.param {
                    g.param = Some(Angle::Value(values[name]));
                }
                g
            })
            .collect();
        Ok(Circuit {
            n_qubits: self.n_qubits,
            gates,
            params: Vec::new(),
            param_index: HashMap::new(),
            output_permutation: self.output_permutation.clone(),
        })
    }

    /// Binds parameters positionally, in registration order.
    pub fn bind_vector(&self, values: &[f64]) -> Result<Circuit> {
        let map = self
            .params
            .iter()
            .zip(values)
            .map(|((n, _), v)| (n.clone(), *v))
            .collect();
        self.bind_parameters(&map)
    }

    pub fn bind_nominal(&self) -> Result<Circuit> {
        self.bind_parameters(&self.nominal_values())
    }

    pub fn is_bound(&self) -> bool {
        self.gates
            .iter()
            .all(|g| !matches!(g.param, Some(Angle::Param(_))))
    }

    /// Appends `other`'s gates (same width) after this circuit's gates.
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        for (n, v) in &other.params {
            self.add_param(n.clone(), *v);
        }
        for g in &other.gates {
            self.push(g.clone())?;
        }
        Ok(())
    }

    /// Applies the bound circuit to a statevector.
    pub fn apply_to_state(&self, state: &mut [C64]) -> Result<()> {
        for g in &self.gates {
            let m = g.matrix()?;
            apply_gate(state, self.n_qubits, &g.targets, &m);
        }
        Ok(())
    }
}

/// Dense `2^n × 2^n` matrix of a bound circuit.
pub fn circuit_to_dense(c: &Circuit) -> Result<Tensor> {
    let n = c.n_qubits;
    if n > DENSE_MAX_QUBITS {
        return Err(CircuitError::TooWide {
            n,
            max: DENSE_MAX_QUBITS,
        });
    }
    let mats: Vec<Tensor> = c.gates.iter().map(Gate::matrix).collect::<Result<_>>()?;
    let dim = 1usize << n;
    // Each row of `cols` is one column of the operator being built.
    let mut cols = vec![ZERO; dim * dim];
    for j in 0..dim {
        let col = &mut cols[j * dim..(j + 1) * dim];
        col[j] = ONE;
        for (g, m) in c.gates.iter().zip(&mats) {
            apply_gate(col, n, &g.targets, m);
        }
    }
    Ok(Tensor::from_fn(dim, dim, |r, col| cols[col * dim + r]))
}

/// Maximum entry deviation between `a` and `b` after removing the global
/// phase that maximizes `|Tr(a†b)|`.
pub fn phase_aligned_distance(a: &Tensor, b: &Tensor) -> f64 {
    let ov: C64 = a.data().iter().zip(b.data()).map(|(x, y)| x.conj() * y).sum();
    let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { ONE };
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (y * phase.conj() - x).norm())
        .fold(0.0, f64::max)
}

pub fn build_qft(n: usize, include_bit_reversal: bool) -> Circuit {
    let mut c = Circuit::new(n);
    for j in 0..n {
        c.push(Gate::h(j)).expect("valid");
        for k in j + 1..n {
            c.push(Gate::cp(k, j, Angle::PiOver(1u64 << (k - j)))).expect("valid");
        }
    }
    if include_bit_reversal {
        for j in 0..n / 2 {
            c.push(Gate::swap(j, n - 1 - j)).expect("valid");
        }
    } else {
        c.set_output_permutation(Some((0..n).rev().collect()));
    }
    c
}

pub fn build_mcx(n_controls: usize) -> Circuit {
    build_mcu(n_controls, &pauli_x()).expect("X is unitary")
}

/// Multi-controlled single-target unitary as one opaque gate; controls are
/// qubits `0..n_controls`, target is the last qubit.
pub fn build_mcu(n_controls: usize, u: &Tensor) -> Result<Circuit> {
    assert!(n_controls >= 1);
    if u.shape() != [2, 2] {
        return Err(CircuitError::NotUnitary(f64::INFINITY));
    }
    let rep = is_isometry(u, &[1], 1e-10);
    if !rep.is_isometry {
        return Err(CircuitError::NotUnitary(rep.max_deviation));
    }
    let n = n_controls + 1;
    let dim = 1usize << n;
    let m = Tensor::from_fn(dim, dim, |r, c| {
        if r >= dim - 2 && c >= dim - 2 {
            u.at(r - (dim - 2), c - (dim - 2))
        } else if r == c {
            ONE
        } else {
            ZERO
        }
    });
    let mut c = Circuit::new(n);
    c.push(Gate::new(
        GateKind::Unitary {
            matrix: m,
            controlled: Some([u.at(0, 0), u.at(0, 1), u.at(1, 0), u.at(1, 1)]),
        },
        (0..n).collect(),
        None,
    ))?;
    Ok(c)
}

/// ZYZ Euler angles `(alpha, beta, gamma, delta)` with
/// `U = e^{i alpha} Rz(beta) Ry(gamma) Rz(delta)`.
pub fn zyz_angles(u: &Tensor) -> (f64, f64, f64, f64) {
    let det = u.at(0, 0) * u.at(1, 1) - u.at(0, 1) * u.at(1, 0);
    let alpha = det.arg() / 2.0;
    let ph = C64::from_polar(1.0, -alpha);
    let v00 = u.at(0, 0) * ph;
    let v10 = u.at(1, 0) * ph;
    let v11 = u.at(1, 1) * ph;
    let gamma = 2.0 * v10.norm().atan2(v00.norm());
    let eps = 1e-12;
    let (sum, diff) = if v10.norm() < eps {
        (2.0 * v11.arg(), 0.0)
    } else if v00.norm() < eps {
        (0.0, 2.0 * v10.arg())
    } else {
        (2.0 * v11.arg(), 2.0 * v10.arg())
    };
    let beta = (sum + diff) / 2.0;
    let delta = (sum - diff) / 2.0;
    (alpha, beta, gamma, delta)
}

/// Principal square root of a 2×2 unitary.
fn sqrt_unitary(u: &Tensor) -> Tensor {
    let a = u.at(0, 0);
    let b = u.at(0, 1);
    let c = u.at(1, 0);
    let d = u.at(1, 1);
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - det * 4.0).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    if (l1 - l2).norm() < 1e-12 {
        return Tensor::identity(2).scale(l1.sqrt());
    }
    // Sylvester: sqrt(u) = (sqrt(l1) (u - l2 I) - sqrt(l2) (u - l1 I)) / (l1 - l2)
    let (r1, r2) = (l1.sqrt(), l2.sqrt());
    Tensor::from_fn(2, 2, |i, j| {
        let id = if i == j { ONE } else { ZERO };
        (r1 * (u.at(i, j) - l2 * id) - r2 * (u.at(i, j) - l1 * id)) / (l1 - l2)
    })
}

/// Primitive op of the rotation-level gate set.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Prim {
    Rz(usize, f64),
    Ry(usize, f64),
    Cnot(usize, usize),
}

struct Emitter {
    ops: Vec<Prim>,
}

impl Emitter {
    fn rz(&mut self, q: usize, t: f64) {
        self.ops.push(Prim::Rz(q, t));
    }

    fn ry(&mut self, q: usize, t: f64) {
        self.ops.push(Prim::Ry(q, t));
    }

    fn cnot(&mut self, c: usize, t: usize) {
        self.ops.push(Prim::Cnot(c, t));
    }

    fn one_qubit(&mut self, q: usize, u: &Tensor) {
        let (_, beta, gamma, delta) = zyz_angles(u);
        self.rz(q, delta);
        self.ry(q, gamma);
        self.rz(q, beta);
    }

    fn h(&mut self, q: usize) {
        self.rz(q, PI);
        self.ry(q, PI / 2.0);
    }

    fn controlled(&mut self, c: usize, t: usize, u: &Tensor) {
        let (alpha, beta, gamma, delta) = zyz_angles(u);
        self.rz(t, (delta - beta) / 2.0);
        self.cnot(c, t);
        self.rz(t, -(delta + beta) / 2.0);
        self.ry(t, -gamma / 2.0);
        self.cnot(c, t);
        self.ry(t, gamma / 2.0);
        self.rz(t, beta);
        self.rz(c, alpha);
    }

    /// Exact Toffoli in the 6-CNOT form.
    fn toffoli(&mut self, a: usize, b: usize, t: usize) {
        let q = PI / 4.0;
        self.h(t);
        self.cnot(b, t);
        self.rz(t, -q);
        self.cnot(a, t);
        self.rz(t, q);
        self.cnot(b, t);
        self.rz(t, -q);
        self.cnot(a, t);
        self.rz(b, q);
        self.rz(t, q);
        self.h(t);
        self.cnot(a, b);
        self.rz(a, q);
        self.rz(b, -q);
        self.cnot(a, b);
    }

    /// Multi-controlled X using the qubits in `dirty` as borrowed workspace.
    fn mcx(&mut self, controls: &[usize], target: usize, dirty: &[usize]) {
        let m = controls.len();
        match m {
            0 => self.one_qubit(target, &pauli_x()),
            1 => self.cnot(controls[0], target),
            2 => self.toffoli(controls[0], controls[1], target),
            _ if dirty.len() >= m - 2 => self.mcx_ladder(controls, target, &dirty[..m - 2]),
            _ => {
                let a = *dirty.first().expect("one borrowed qubit required");
                let m1 = m.div_ceil(2);
                let (c1, c2) = controls.split_at(m1);
                let mut c2a: Vec<usize> = c2.to_vec();
                c2a.push(a);
                let mut spare1: Vec<usize> = c2.to_vec();
                spare1.push(target);
                for _ in 0..2 {
                    self.mcx(c1, a, &spare1);
                    self.mcx(&c2a, target, c1);
                }
            }
        }
    }

    /// Toffoli ladder over `m - 2` borrowed qubits.
    fn mcx_ladder(&mut self, c: &[usize], t: usize, a: &[usize]) {
        let m = c.len();
        // (control, control, target) triples from the top of the ladder down
        let mut ladder = vec![(c[m - 1], a[m - 3], t)];
        for j in (2..m - 1).rev() {
            ladder.push((c[j], a[j - 2], a[j - 1]));
        }
        let middle = (c[0], c[1], a[0]);
        for half in [&ladder[..], &ladder[1..]] {
            for &(x, y, z) in half {
                self.toffoli(x, y, z);
            }
            self.toffoli(middle.0, middle.1, middle.2);
            for &(x, y, z) in half.iter().rev() {
                self.toffoli(x, y, z);
            }
        }
    }

    fn mcu(&mut self, controls: &[usize], target: usize, u: &Tensor) {
        let k = controls.len();
        let is_x = u.max_abs_diff(&pauli_x()) < 1e-12;
        match k {
            0 => self.one_qubit(target, u),
            1 if is_x => self.cnot(controls[0], target),
            1 => self.controlled(controls[0], target, u),
            2 if is_x => self.toffoli(controls[0], controls[1], target),
            _ => {
                let v = sqrt_unitary(u);
                let vd = v.adjoint();
                let last = controls[k - 1];
                let rest = &controls[..k - 1];
                self.controlled(last, target, &v);
                self.mcx(rest, last, &[target]);
                self.controlled(last, target, &vd);
                self.mcx(rest, last, &[target]);
                self.mcu(rest, target, &v);
            }
        }
    }

    /// Two-qubit unitary through a cosine–sine split on the first qubit.
    fn two_qubit(&mut self, q0: usize, q1: usize, u: &Tensor) {
        let blk = |r: usize, c: usize| Tensor::from_fn(2, 2, |i, j| u.at(2 * r + i, 2 * c + j));
        let (u00, u01, u10, u11) = (blk(0, 0), blk(0, 1), blk(1, 0), blk(1, 1));
        let (a1, cs, b1h) = svd_sorted(&u00);
        let b1 = b1h.adjoint();
        let cvals: Vec<f64> = cs.iter().map(|c| c.min(1.0)).collect();
        let svals: Vec<f64> = cvals.iter().map(|c| (1.0 - c * c).max(0.0).sqrt()).collect();
        // A2 = U10 B1 S^-1, completing columns where S vanishes
        let x = u10.matmul(&b1).expect("2x2");
        let mut cols: Vec<Option<[C64; 2]>> = (0..2)
            .map(|j| {
                (svals[j] > 1e-7).then(|| [x.at(0, j) / svals[j], x.at(1, j) / svals[j]])
            })
            .collect();
        let (known, missing): (Vec<usize>, Vec<usize>) = (0..2).partition(|&j| cols[j].is_some());
        for (idx, &j) in missing.iter().enumerate() {
            let v = if let Some(&k) = known.first() {
                let c = cols[k].expect("known");
                [-c[1].conj(), c[0].conj()]
            } else if idx == 0 {
                [ONE, ZERO]
            } else {
                [ZERO, ONE]
            };
            cols[j] = Some(v);
        }
        let a2 = Tensor::from_fn(2, 2, |i, j| cols[j].expect("filled")[i]);
        let p = a2.adjoint().matmul(&u11).expect("2x2");
        let q = a1.adjoint().matmul(&u01).expect("2x2");
        let b2h = Tensor::from_fn(2, 2, |i, j| {
            if cvals[i] >= svals[i] {
                p.at(i, j) / cvals[i]
            } else {
                -q.at(i, j) / svals[i]
            }
        });
        let theta: Vec<f64> = (0..2).map(|j| svals[j].atan2(cvals[j])).collect();

        self.controlled(q0, q1, &b1.matmul(&b2h).expect("2x2"));
        self.one_qubit(q1, &b1h);
        self.ry(q0, theta[0] + theta[1]);
        self.cnot(q1, q0);
        self.ry(q0, theta[0] - theta[1]);
        self.cnot(q1, q0);
        let a1d = a1.adjoint();
        self.controlled(q0, q1, &a1d.matmul(&a2).expect("2x2"));
        self.one_qubit(q1, &a1);
    }

    fn gate(&mut self, g: &Gate) -> Result<()> {
        let t = &g.targets;
        match &g.kind {
            GateKind::Rz => self.rz(t[0], g.param.as_ref().expect("checked").resolve()?),
            GateKind::Ry => self.ry(t[0], g.param.as_ref().expect("checked").resolve()?),
            GateKind::H => self.h(t[0]),
            GateKind::X | GateKind::Rx => self.one_qubit(t[0], &g.matrix()?),
            GateKind::Cnot => self.cnot(t[0], t[1]),
            GateKind::Cz => {
                self.h(t[1]);
                self.cnot(t[0], t[1]);
                self.one_qubit(t[1], &hadamard());
            }
            GateKind::Swap => {
                self.cnot(t[0], t[1]);
                self.cnot(t[1], t[0]);
                self.cnot(t[0], t[1]);
            }
            GateKind::Cp => {
                let th = g.param.as_ref().expect("checked").resolve()?;
                self.rz(t[0], th / 2.0);
                self.rz(t[1], th / 2.0);
                self.cnot(t[0], t[1]);
                self.rz(t[1], -th / 2.0);
                self.cnot(t[0], t[1]);
            }
            GateKind::Unitary { matrix, controlled } => match (t.len(), controlled) {
                (1, _) => self.one_qubit(t[0], matrix),
                (k, Some(u)) => {
                    let u = Tensor::new(vec![2, 2], u.to_vec()).expect("2x2");
                    self.mcu(&t[..k - 1], t[k - 1], &u);
                }
                (2, None) => self.two_qubit(t[0], t[1], matrix),
                (k, None) => return Err(CircuitError::OpaqueTooWide(k)),
            },
        }
        Ok(())
    }
}

/// Folds adjacent same-axis rotations on a qubit and drops zero angles.
fn simplify(ops: Vec<Prim>, n: usize) -> Vec<Prim> {
    let mut out: Vec<Prim> = Vec::with_capacity(ops.len());
    // index into `out` of the last op touching each qubit
    let mut last: Vec<Option<usize>> = vec![None; n];
    for op in ops {
        match op {
            Prim::Rz(q, t) | Prim::Ry(q, t) => {
                if let Some(i) = last[q] {
                    let merged = match (out[i], op) {
                        (Prim::Rz(_, a), Prim::Rz(_, _)) => Some(Prim::Rz(q, a + t)),
                        (Prim::Ry(_, a), Prim::Ry(_, _)) => Some(Prim::Ry(q, a + t)),
                        _ => None,
                    };
                    if let Some(m) = merged {
                        out[i] = m;
                        continue;
                    }
                }
                last[q] = Some(out.len());
                out.push(op);
            }
            Prim::Cnot(c, t) => {
                last[c] = Some(out.len());
                last[t] = Some(out.len());
                out.push(op);
            }
        }
    }
    out.into_iter()
        .filter(|op| match op {
            Prim::Rz(_, t) | Prim::Ry(_, t) => t.abs() > 1e-12,
            Prim::Cnot(..) => true,
        })
        .collect()
}

/// Rewrites a bound circuit into `{RZ, RY, CNOT}`, registering every rotation
/// angle as a free parameter `theta{i}` whose nominal value reproduces the
/// input circuit up to global phase.
pub fn decompose_to_rotations(c: &Circuit) -> Result<Circuit> {
    let mut em = Emitter { ops: Vec::new() };
    for g in &c.gates {
        em.gate(g)?;
    }
    let mut out = from_prims(simplify(em.ops, c.n_qubits), c.n_qubits)?;
    out.set_output_permutation(c.output_permutation.clone());
    Ok(out)
}

/// Rotation-level multi-controlled X without forming its dense matrix, for
/// sizes where `build_mcx` followed by `decompose_to_rotations` is infeasible.
/// Matches that composition gate for gate.
pub fn decompose_mcx(n_controls: usize) -> Result<Circuit> {
    assert!(n_controls >= 1);
    let n = n_controls + 1;
    let mut em = Emitter { ops: Vec::new() };
    let controls: Vec<usize> = (0..n_controls).collect();
    em.mcu(&controls, n_controls, &pauli_x());
    from_prims(simplify(em.ops, n), n)
}

fn from_prims(ops: Vec<Prim>, n: usize) -> Result<Circuit> {
    let mut out = Circuit::new(n);
    let mut k = 0usize;
    for op in ops {
        match op {
            Prim::Cnot(a, b) => out.push(Gate::cnot(a, b))?,
            Prim::Rz(q, t) | Prim::Ry(q, t) => {
                let name = format!("theta{k}");
                k += 1;
                out.add_param(name.clone(), t);
                let gate = if matches!(op, Prim::Rz(..)) {
                    Gate::rz(q, Angle::Param(name))
                } else {
                    Gate::ry(q, Angle::Param(name))
                };
                out.push(gate)?;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// JSON document format

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ParamDoc {
    Value(f64),
    PiOver { pi_over: u64 },
    Name { name: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct GateDoc {
    kind: String,
    targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param: Option<ParamDoc>,
    /// Row-major `[re, im]` pairs for opaque gates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    controlled: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CircuitDoc {
    n_qubits: usize,
    gates: Vec<GateDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_permutation: Option<Vec<usize>>,
}

fn pairs(data: &[C64]) -> Vec<[f64; 2]> {
    data.iter().map(|z| [z.re, z.im]).collect()
}

impl Circuit {
    pub fn to_json(&self) -> String {
        let gates = self
            .gates
            .iter()
            .map(|g| {
                let (matrix, controlled) = match &g.kind {
                    GateKind::Unitary { matrix, controlled } => {
                        (Some(pairs(matrix.data())), controlled.map(|u| pairs(&u)))
                    }
                    _ => (None, None),
                };
                GateDoc {
                    kind: g.kind.name().to_string(),
                    targets: g.targets.clone(),
                    param: g.param.as_ref().map(|a| match a {
                        Angle::Value(v) => ParamDoc::Value(*v),
                        Angle::PiOver(d) => ParamDoc::PiOver { pi_over: *d },
                        Angle::Param(n) => ParamDoc::Name { name: n.clone() },
                    }),
                    matrix,
                    controlled,
                }
            })
            .collect();
        let doc = CircuitDoc {
            n_qubits: self.n_qubits,
            gates,
            params: self.params.clone(),
            output_permutation: self.output_permutation.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Circuit> {
        let doc: CircuitDoc = serde_json::from_str(s).map_err(|e| CircuitError::Format(e.to_string()))?;
        if doc.n_qubits == 0 {
            return Err(CircuitError::Format("n_qubits must be positive".into()));
        }
        let mut c = Circuit::new(doc.n_qubits);
        for (n, v) in doc.params {
            c.add_param(n, v);
        }
        c.output_permutation = doc.output_permutation;
        for g in doc.gates {
            let to_c = |v: &[[f64; 2]]| v.iter().map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>();
            let kind = match g.kind.as_str() {
                "h" => GateKind::H,
                "x" => GateKind::X,
                "rz" => GateKind::Rz,
                "ry" => GateKind::Ry,
                "rx" => GateKind::Rx,
                "cp" => GateKind::Cp,
                "cnot" => GateKind::Cnot,
                "cz" => GateKind::Cz,
                "swap" => GateKind::Swap,
                "unitary" => {
                    let data = to_c(g.matrix.as_deref().ok_or_else(|| CircuitError::Format("unitary gate without matrix".into()))?);
                    let dim = 1usize << g.targets.len();
                    let matrix = Tensor::new(vec![dim, dim], data).map_err(|e| CircuitError::Format(e.to_string()))?;
                    let controlled = match g.controlled {
                        Some(u) => {
                            let u = to_c(&u);
                            if u.len() != 4 {
                                return Err(CircuitError::Format("controlled block must be 2x2".into()));
                            }
                            Some([u[0], u[1], u[2], u[3]])
                        }
                        None => None,
                    };
                    GateKind::Unitary { matrix, controlled }
                }
                other => return Err(CircuitError::Format(format!("unknown gate kind `{other}`"))),
            };
            let param = g.param.map(|p| match p {
                ParamDoc::Value(v) => Angle::Value(v),
                ParamDoc::PiOver { pi_over } => Angle::PiOver(pi_over),
                ParamDoc::Name { name } => Angle::Param(name),
            });
            c.push(Gate::new(kind, g.targets, param))?;
        }
        Ok(c)
    }
}
