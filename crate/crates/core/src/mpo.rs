//! Matrix product operators built from circuits by zip-up contraction.
//!
//! Site tensors have axes `(left, out, in, right)`; site 0 is qubit 0.
//! Orthonormalized sites are stored scaled by √2, so a site acting as the
//! identity on its qubit is exactly the 2×2 identity.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate};
use crate::io::{read_blob, with_suffix, write_blob};
use crate::tensor::{contract, svd_split, Tensor, TensorError, C64, ONE};

/// Dense conversion limit.
pub const DENSE_MAX_SITES: usize = 12;

/// Singular values below this fraction of the largest are treated as exact
/// zeros by the non-truncating sweeps.
const EXACT_CUTOFF: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MpoError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("bond cap must be at least 1")]
    ZeroChi,
    #[error("relative cutoff must be finite and non-negative, got {0}")]
    BadCutoff(f64),
    #[error("site {site} has shape {shape:?}, expected (left, 2, 2, right)")]
    SiteShape { site: usize, shape: Vec<usize> },
    #[error("bond between sites {site} and {} disagrees: {left} vs {right}", site + 1)]
    BondMismatch { site: usize, left: usize, right: usize },
    #[error("boundary bonds must be 1")]
    Boundary,
    #[error("dense conversion limited to {max} sites, MPO has {n}")]
    TooWide { n: usize, max: usize },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MpoError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Mpo {
    sites: Vec<Tensor>,
    discarded_weight: f64,
    estimated_fidelity: f64,
    output_permutation: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BondProfile {
    /// Internal bonds, `n - 1` entries.
    pub bonds: Vec<usize>,
    pub max: usize,
}

impl Mpo {
    pub fn identity(n: usize) -> Self {
        let mut id = Tensor::zeros(vec![1, 2, 2, 1]);
        id.data_mut()[0] = ONE;
        id.data_mut()[3] = ONE;
        Self {
            sites: vec![id; n],
            discarded_weight: 0.0,
            estimated_fidelity: 1.0,
            output_permutation: None,
        }
    }

    pub fn from_sites(sites: Vec<Tensor>) -> Result<Self> {
        validate_sites(&sites)?;
        Ok(Self {
            sites,
            discarded_weight: 0.0,
            estimated_fidelity: 1.0,
            output_permutation: None,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Tensor] {
        &self.sites
    }

    /// Sum of the relative weights dropped by every truncation.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// Product of `1 - w` over all truncations.
    pub fn estimated_fidelity(&self) -> f64 {
        self.estimated_fidelity
    }

    pub fn output_permutation(&self) -> Option<&[usize]> {
        self.output_permutation.as_deref()
    }

    /// Bond extents including the two boundary bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.sites.iter().map(|s| s.shape()[0]).collect();
        d.push(self.sites.last().map_or(1, |s| s.shape()[3]));
        d
    }

    pub fn bond_profile(&self) -> BondProfile {
        let d = self.bond_dims();
        let bonds = d[1..d.len() - 1].to_vec();
        let max = bonds.iter().copied().max().unwrap_or(1);
        BondProfile { bonds, max }
    }

    /// Writes `base.mpo.json` and `base.mpo.bin`.
    pub fn save(&self, base: &Path) -> Result<()> {
        let header = MpoHeader {
            format: "mpo-v1".into(),
            n_sites: self.n_sites(),
            bond_dims: self.bond_dims(),
            discarded_weight: self.discarded_weight,
            estimated_fidelity: self.estimated_fidelity,
            output_permutation: self.output_permutation.clone(),
        };
        let json = serde_json::to_string_pretty(&header).expect("serializable");
        fs::write(with_suffix(base, ".mpo.json"), json).map_err(|e| MpoError::Io(e.to_string()))?;
        let refs: Vec<&Tensor> = self.sites.iter().collect();
        write_blob(&with_suffix(base, ".mpo.bin"), &refs).map_err(|e| MpoError::Io(e.to_string()))
    }

    pub fn load(base: &Path) -> Result<Self> {
        let text = fs::read_to_string(with_suffix(base, ".mpo.json")).map_err(|e| MpoError::Io(e.to_string()))?;
        let h: MpoHeader = serde_json::from_str(&text).map_err(|e| MpoError::Io(e.to_string()))?;
        if h.bond_dims.len() != h.n_sites + 1 {
            return Err(MpoError::Io("bond_dims must have n_sites + 1 entries".into()));
        }
        let shapes: Vec<Vec<usize>> = (0..h.n_sites)
            .map(|k| vec![h.bond_dims[k], 2, 2, h.bond_dims[k + 1]])
            .collect();
        let sites = read_blob(&with_suffix(base, ".mpo.bin"), &shapes).map_err(MpoError::Io)?;
        let mut m = Mpo::from_sites(sites)?;
        m.discarded_weight = h.discarded_weight;
        m.estimated_fidelity = h.estimated_fidelity;
        m.output_permutation = h.output_permutation;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct MpoHeader {
    format: String,
    n_sites: usize,
    bond_dims: Vec<usize>,
    discarded_weight: f64,
    estimated_fidelity: f64,
    output_permutation: Option<Vec<usize>>,
}

fn validate_sites(sites: &[Tensor]) -> Result<()> {
    for (k, s) in sites.iter().enumerate() {
        let sh = s.shape();
        if sh.len() != 4 || sh[1] != 2 || sh[2] != 2 {
            return Err(MpoError::SiteShape {
                site: k,
                shape: sh.to_vec(),
            });
        }
    }
    for k in 1..sites.len() {
        let (l, r) = (sites[k - 1].shape()[3], sites[k].shape()[0]);
        if l != r {
            return Err(MpoError::BondMismatch {
                site: k - 1,
                left: l,
                right: r,
            });
        }
    }
    match (sites.first(), sites.last()) {
        (Some(f), Some(l)) if f.shape()[0] == 1 && l.shape()[3] == 1 => Ok(()),
        _ => Err(MpoError::Boundary),
    }
}

const SQRT2: C64 = C64::new(std::f64::consts::SQRT_2, 0.0);

/// Mixed-canonical MPO under construction.
struct Zipper {
    sites: Vec<Tensor>,
    center: usize,
    chi_max: usize,
    rel_cutoff: f64,
    discarded: f64,
    fidelity: f64,
}

impl Zipper {
    fn record(&mut self, w: f64) {
        self.discarded += w;
        self.fidelity *= 1.0 - w;
    }

    /// Makes site `k` left-orthonormal and pushes the remainder into `k + 1`.
    fn left_orth(&mut self, k: usize) -> Result<()> {
        let svd = svd_split(&self.sites[k], &[0, 1, 2], None, EXACT_CUTOFF)?;
        self.record(svd.discarded_weight);
        let r = svd.weighted_right().scale(ONE / SQRT2);
        self.sites[k] = svd.left_isometry.scale(SQRT2);
        self.sites[k + 1] = contract(&r, &self.sites[k + 1], &[(1, 0)])?;
        Ok(())
    }

    /// Makes site `k` right-orthonormal, optionally truncating the bond to
    /// its left, and pushes the remainder into `k - 1`.
    fn right_orth(&mut self, k: usize, truncate: bool) -> Result<()> {
        let (cap, cut) = if truncate {
            (Some(self.chi_max), self.rel_cutoff)
        } else {
            (None, EXACT_CUTOFF)
        };
        let svd = svd_split(&self.sites[k], &[0], cap, cut)?;
        self.record(svd.discarded_weight);
        let l = svd.weighted_left().scale(ONE / SQRT2);
        self.sites[k] = svd.right_factor.scale(SQRT2);
        self.sites[k - 1] = contract(&self.sites[k - 1], &l, &[(3, 0)])?;
        Ok(())
    }

    fn move_center_into(&mut self, lo: usize, hi: usize) -> Result<()> {
        while self.center < lo {
            self.left_orth(self.center)?;
            self.center += 1;
        }
        while self.center > hi {
            self.right_orth(self.center, false)?;
            self.center -= 1;
        }
        Ok(())
    }

    fn apply(&mut self, g: &Gate) -> Result<()> {
        let m = g.matrix()?;
        if g.targets.len() == 1 {
            let q = g.targets[0];
            let t = contract(&m, &self.sites[q], &[(1, 1)])?;
            self.sites[q] = t.permute(&[1, 0, 2, 3])?;
            return Ok(());
        }
        let (lo, cores) = gate_cores(&m, &g.targets)?;
        let hi = lo + cores.len() - 1;
        self.move_center_into(lo, hi)?;
        for (j, core) in cores.iter().enumerate() {
            let w = &self.sites[lo + j];
            let (l, r) = (w.shape()[0], w.shape()[3]);
            let (gl, gr) = (core.shape()[0], core.shape()[3]);
            // (gl, o, gr) x (l, i, r) -> (l, gl, o, i, r, gr)
            let t = contract(core, w, &[(2, 1)])?.permute(&[3, 0, 1, 4, 5, 2])?;
            self.sites[lo + j] = t.reshape(vec![l * gl, 2, 2, r * gr])?;
        }
        for k in lo..hi {
            self.left_orth(k)?;
        }
        for k in (lo + 1..=hi).rev() {
            self.right_orth(k, true)?;
        }
        self.center = lo;
        Ok(())
    }
}

/// Tensor-train cores of a gate over the contiguous span of its targets,
/// with identity pass-through cores at untouched sites in between.
fn gate_cores(m: &Tensor, targets: &[usize]) -> Result<(usize, Vec<Tensor>)> {
    let k = targets.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&j| targets[j]);
    let axes: Vec<usize> = order.iter().flat_map(|&j| [j, k + j]).collect();
    let mut rem = m
        .clone()
        .reshape(vec![2; 2 * k])?
        .permute(&axes)?
        .reshape(vec![1, 2, 2, 1 << (2 * (k - 1))])?;
    let mut cores = Vec::with_capacity(k);
    for j in 0..k - 1 {
        let svd = svd_split(&rem, &[0, 1, 2], None, EXACT_CUTOFF)?;
        let b = svd.kept();
        cores.push(svd.left_isometry.clone());
        let rest = 1usize << (2 * (k - 2 - j));
        rem = svd.weighted_right().reshape(vec![b, 2, 2, rest])?;
    }
    cores.push(rem);

    let lo = targets[order[0]];
    let hi = targets[order[k - 1]];
    let mut out = Vec::with_capacity(hi - lo + 1);
    let mut next = cores.into_iter();
    let mut sorted = order.iter().map(|&j| targets[j]).peekable();
    for site in lo..=hi {
        if sorted.peek() == Some(&site) {
            sorted.next();
            out.push(next.next().expect("one core per target"));
        } else {
            let b = out.last().map_or(1, |c: &Tensor| c.shape()[3]);
            let mut id = Tensor::zeros(vec![b, 2, 2, b]);
            for x in 0..b {
                for p in 0..2 {
                    id.data_mut()[((x * 2 + p) * 2 + p) * b + x] = ONE;
                }
            }
            out.push(id);
        }
    }
    Ok((lo, out))
}

/// Builds the MPO of a bound circuit. Every bond is capped at `chi_max`
/// (`usize::MAX` for no cap) and singular values below `rel_cutoff` times the
/// largest are dropped.
pub fn zip_up(c: &Circuit, chi_max: usize, rel_cutoff: f64) -> Result<Mpo> {
    if chi_max == 0 {
        return Err(MpoError::ZeroChi);
    }
    if !rel_cutoff.is_finite() || rel_cutoff < 0.0 {
        return Err(MpoError::BadCutoff(rel_cutoff));
    }
    let n = c.n_qubits();
    let mut z = Zipper {
        sites: Mpo::identity(n).sites,
        center: 0,
        chi_max,
        rel_cutoff,
        discarded: 0.0,
        fidelity: 1.0,
    };
    for g in c.gates() {
        z.apply(g)?;
    }
    for k in 0..n.saturating_sub(1) {
        z.left_orth(k)?;
    }
    Ok(Mpo {
        sites: z.sites,
        discarded_weight: z.discarded,
        estimated_fidelity: z.fidelity,
        output_permutation: c.output_permutation().map(<[usize]>::to_vec),
    })
}

/// Full `2^n × 2^n` operator, qubit 0 most significant.
pub fn mpo_to_dense(m: &Mpo) -> Result<Tensor> {
    let n = m.n_sites();
    if n > DENSE_MAX_SITES {
        return Err(MpoError::TooWide {
            n,
            max: DENSE_MAX_SITES,
        });
    }
    let first = &m.sites[0];
    let mut acc = first.clone().reshape(vec![2, 2, first.shape()[3]])?;
    let mut dim = 2;
    for w in &m.sites[1..] {
        let r = w.shape()[3];
        // (O, I, b) x (b, o, i, r) -> (O, o, I, i, r)
        acc = contract(&acc, w, &[(2, 0)])?
            .permute(&[0, 2, 1, 3, 4])?
            .reshape(vec![dim * 2, dim * 2, r])?;
        dim *= 2;
    }
    Ok(acc.reshape(vec![dim, dim])?)
}

/// `|Tr(a† b)| / Tr(b† b)`; for unitary `b` the denominator is `2^n`.
pub fn operator_fidelity(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || a.rank() != 2 || a.shape()[0] != a.shape()[1] {
        return Err(MpoError::ShapeMismatch(a.shape().to_vec(), b.shape().to_vec()));
    }
    let overlap: C64 = a.data().iter().zip(b.data()).map(|(x, y)| x.conj() * y).sum();
    let norm: f64 = b.data().iter().map(|z| z.norm_sqr()).sum();
    Ok(overlap.norm() / norm)
}
