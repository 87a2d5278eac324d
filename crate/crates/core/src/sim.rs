//! Statevector kernels shared by the dense oracles.

use crate::tensor::{Tensor, C64, ZERO};
use rand::Rng;
use rand_distr::StandardNormal;

/// Applies a `2^k × 2^k` gate to `targets` of an `n`-qubit state in place.
/// `targets[0]` is the most significant bit of the gate's index.
pub fn apply_gate(state: &mut [C64], n: usize, targets: &[usize], gate: &Tensor) {
    let k = targets.len();
    let dim = 1usize << k;
    debug_assert_eq!(gate.shape(), &[dim, dim]);
    let masks: Vec<usize> = targets.iter().map(|&q| 1usize << (n - 1 - q)).collect();
    let all: usize = masks.iter().sum();
    let offsets: Vec<usize> = (0..dim)
        .map(|j| {
            (0..k)
                .filter(|&b| (j >> (k - 1 - b)) & 1 == 1)
                .map(|b| masks[b])
                .sum()
        })
        .collect();
    let mut buf = vec![ZERO; dim];
    for base in 0..state.len() {
        if base & all != 0 {
            continue;
        }
        for (j, off) in offsets.iter().enumerate() {
            buf[j] = state[base + off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (c, b) in buf.iter().enumerate() {
                acc += gate.at(r, c) * b;
            }
            state[base + off] = acc;
        }
    }
}

/// Kronecker product of single-qubit states, qubit 0 most significant.
pub fn product_state(qubits: &[[C64; 2]]) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0)];
    for q in qubits {
        out = out.iter().flat_map(|a| [a * q[0], a * q[1]]).collect();
    }
    out
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Haar-random pure state on `n` qubits.
pub fn haar_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let mut v: Vec<C64> = (0..1usize << n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let nrm = norm_sqr(&v).sqrt();
    v.iter_mut().for_each(|z| *z /= nrm);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x_on_middle_qubit() {
        let x = Tensor::new(vec![2, 2], vec![ZERO, C64::new(1.0, 0.0), C64::new(1.0, 0.0), ZERO]).unwrap();
        let mut s = vec![ZERO; 8];
        s[0] = C64::new(1.0, 0.0);
        apply_gate(&mut s, 3, &[1], &x);
        assert_eq!(s[0b010], C64::new(1.0, 0.0));
    }

    #[test]
    fn two_qubit_gate_respects_target_order() {
        // CNOT with control on qubit 2 and target on qubit 0
        let mut cx = Tensor::zeros(vec![4, 4]);
        for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            cx.set(r, c, C64::new(1.0, 0.0));
        }
        let mut s = vec![ZERO; 8];
        s[0b001] = C64::new(1.0, 0.0);
        apply_gate(&mut s, 3, &[2, 0], &cx);
        assert_eq!(s[0b101], C64::new(1.0, 0.0));
    }
}
