//! Crystalline-orbital integrals, the second-quantized Hamiltonian built from
//! them and a dense exact-diagonalization oracle.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::{jordan_wigner, number_operator, FermionOperator, Ladder, SymmetrySet};
use crate::pauli::PauliSum;

const HERMITIAN_TOL: f64 = 1e-10;
/// Largest register the dense oracle accepts.
pub const DENSE_QUBIT_LIMIT: usize = 14;
const DEGENERACY_TOL: f64 = 1e-8;
const PARTICLE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub label: String,
    #[serde(rename = "frac")]
    pub fractional_coords: [f64; 3],
    pub path_distance: f64,
}

impl KPoint {
    pub fn is_gamma(&self) -> bool {
        matches!(self.label.as_str(), "Γ" | "G" | "GAMMA" | "Gamma")
            || self.fractional_coords.iter().all(|&c| c == 0.0)
    }
}

/// Active-space integrals at one k-point. `v[[p, q, r, s]]` multiplies
/// `c†_p c†_q c_r c_s` as written, with no hidden prefactor.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralSet {
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub kpoint: KPoint,
    pub constant: f64,
    pub t: DMatrix<Complex64>,
    pub v: BTreeMap<[usize; 4], Complex64>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoBodyEntry {
    pqrs: [usize; 4],
    value: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegralFile {
    version: u32,
    kpoint: KPoint,
    n_orbitals: usize,
    n_electrons: usize,
    constant: f64,
    t: Vec<Vec<[f64; 2]>>,
    v: Vec<TwoBodyEntry>,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

fn cpx(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

impl IntegralSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: IntegralFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if file.version != 1 {
            return Err(Error::Schema(format!("unsupported version {}", file.version)));
        }
        let n = file.n_orbitals;
        if n == 0 {
            return Err(Error::Schema("n_orbitals must be positive".into()));
        }
        if file.t.len() != n || file.t.iter().any(|row| row.len() != n) {
            return Err(Error::Schema(format!("t must be {n}x{n}")));
        }
        let t = DMatrix::from_fn(n, n, |p, q| cpx(file.t[p][q]));
        let mut v = BTreeMap::new();
        for e in &file.v {
            if e.pqrs.iter().any(|&i| i >= n) {
                return Err(Error::Schema(format!("index {:?} out of range", e.pqrs)));
            }
            if v.insert(e.pqrs, cpx(e.value)).is_some() {
                return Err(Error::Schema(format!("duplicate entry {:?}", e.pqrs)));
            }
        }
        let ints = IntegralSet {
            n_orbitals: n,
            n_electrons: file.n_electrons,
            kpoint: file.kpoint,
            constant: file.constant,
            t,
            v,
            metadata: file.metadata,
        };
        ints.validate()?;
        Ok(ints)
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.n_orbitals;
        let file = IntegralFile {
            version: 1,
            kpoint: self.kpoint.clone(),
            n_orbitals: n,
            n_electrons: self.n_electrons,
            constant: self.constant,
            t: (0..n)
                .map(|p| (0..n).map(|q| [self.t[(p, q)].re, self.t[(p, q)].im]).collect())
                .collect(),
            v: self
                .v
                .iter()
                .map(|(&pqrs, c)| TwoBodyEntry { pqrs, value: [c.re, c.im] })
                .collect(),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_orbitals;
        if self.n_electrons > 2 * n {
            return Err(Error::TooManyElectrons {
                electrons: self.n_electrons,
                orbitals: n,
            });
        }
        if self.t.shape() != (n, n) {
            return Err(Error::Schema(format!("t must be {n}x{n}")));
        }
        if self.kpoint.fractional_coords.iter().any(|c| !(-0.5..=0.5).contains(c)) {
            return Err(Error::Schema(format!(
                "k-point coordinates {:?} outside [-0.5, 0.5]",
                self.kpoint.fractional_coords
            )));
        }
        for p in 0..n {
            for q in 0..n {
                if (self.t[(p, q)] - self.t[(q, p)].conj()).norm() > HERMITIAN_TOL {
                    return Err(Error::NotHermitian(format!("t[{p}][{q}] != conj(t[{q}][{p}])")));
                }
            }
        }
        for (&[p, q, r, s], c) in &self.v {
            let partner = self.v.get(&[s, r, q, p]).copied().unwrap_or_default();
            if (c - partner.conj()).norm() > HERMITIAN_TOL {
                return Err(Error::NotHermitian(format!("v[{p}{q}{r}{s}] != conj(v[{s}{r}{q}{p}])")));
            }
        }
        Ok(())
    }

    pub fn n_spin_orbitals(&self) -> usize {
        2 * self.n_orbitals
    }
}

pub fn load_integrals(path: impl AsRef<Path>) -> Result<IntegralSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    IntegralSet::from_json(&text)
}

pub fn save_integrals(ints: &IntegralSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ints.to_json()?).map_err(|e| Error::io(path, e))
}

const BUNDLED_SI: [&str; 5] = [
    include_str!("../data/si_l.json"),
    include_str!("../data/si_lg.json"),
    include_str!("../data/si_gamma.json"),
    include_str!("../data/si_gx.json"),
    include_str!("../data/si_x.json"),
];

/// Synthetic two-orbital silicon stand-in along L–Γ–X, in path order.
pub fn bundled_si() -> Vec<IntegralSet> {
    BUNDLED_SI
        .iter()
        .map(|t| IntegralSet::from_json(t).expect("bundled integrals are valid"))
        .collect()
}

/// Spin orbital of spatial orbital `p` with spin `sigma` (0 = α, 1 = β).
pub fn spin_orbital(p: usize, sigma: usize, n_orbitals: usize) -> usize {
    p + sigma * n_orbitals
}

/// Spin-expanded Hamiltonian: spin-diagonal one-body part and the two-body
/// part summed over both spin labels.
pub fn build_hamiltonian(ints: &IntegralSet) -> FermionOperator {
    let n = ints.n_orbitals;
    let mut h = FermionOperator::constant(2 * n, Complex64::new(ints.constant, 0.0));
    let zero = Complex64::default();
    for sigma in 0..2 {
        for p in 0..n {
            for q in 0..n {
                let c = ints.t[(p, q)];
                if c != zero {
                    h.add_term(c, vec![
                        Ladder::create(spin_orbital(p, sigma, n)),
                        Ladder::annihilate(spin_orbital(q, sigma, n)),
                    ])
                    .expect("modes in range");
                }
            }
        }
    }
    for (&[p, q, r, s], &c) in &ints.v {
        if c == zero {
            continue;
        }
        for sigma in 0..2 {
            for tau in 0..2 {
                let (ps, qt) = (spin_orbital(p, sigma, n), spin_orbital(q, tau, n));
                let (rt, ss) = (spin_orbital(r, tau, n), spin_orbital(s, sigma, n));
                if ps == qt || rt == ss {
                    continue;
                }
                h.add_term(c, vec![
                    Ladder::create(ps),
                    Ladder::create(qt),
                    Ladder::annihilate(rt),
                    Ladder::annihilate(ss),
                ])
                .expect("modes in range");
            }
        }
    }
    h
}

/// Jordan–Wigner image of [`build_hamiltonian`], with round-off terms
/// below 1e-14 dropped.
pub fn qubit_hamiltonian(ints: &IntegralSet) -> Result<PauliSum> {
    Ok(jordan_wigner(&build_hamiltonian(ints), ints.n_spin_orbitals())?.truncate(1e-14))
}

/// Hartree–Fock occupation in the blocked layout: the lowest `ceil(N/2)` α
/// and `floor(N/2)` β orbitals are filled.
pub fn hf_occupation(n_orbitals: usize, n_electrons: usize) -> Result<Vec<bool>> {
    if n_electrons > 2 * n_orbitals {
        return Err(Error::TooManyElectrons {
            electrons: n_electrons,
            orbitals: n_orbitals,
        });
    }
    let n_alpha = n_electrons.div_ceil(2);
    let n_beta = n_electrons / 2;
    let mut occ = vec![false; 2 * n_orbitals];
    occ[..n_alpha].iter_mut().for_each(|o| *o = true);
    occ[n_orbitals..n_orbitals + n_beta].iter_mut().for_each(|o| *o = true);
    Ok(occ)
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    /// Ascending, Hartree.
    pub eigenvalues: Vec<f64>,
    pub particle_numbers: Vec<f64>,
    /// Column `i` belongs to `eigenvalues[i]`.
    pub eigenvectors: DMatrix<Complex64>,
}

impl SpectrumResult {
    pub fn ground_energy(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn ground_state(&self) -> Option<Vec<Complex64>> {
        (!self.eigenvalues.is_empty()).then(|| self.eigenvectors.column(0).iter().copied().collect())
    }
}

fn check_size(n_qubits: usize) -> Result<()> {
    if n_qubits > DENSE_QUBIT_LIMIT {
        return Err(Error::TooLarge {
            n_qubits,
            limit: DENSE_QUBIT_LIMIT,
        });
    }
    Ok(())
}

/// Dense spectrum of `h`, with particle numbers taken from the
/// Jordan–Wigner number operator on all qubits.
pub fn exact_spectrum(h: &PauliSum, filter_particles: Option<usize>) -> Result<SpectrumResult> {
    exact_spectrum_with(h, &number_operator(h.n_qubits()), filter_particles)
}

/// Dense spectrum of `h` with a caller-supplied number operator, as needed
/// for tapered registers. Degenerate eigenvectors are rotated to diagonalize
/// the number operator so every state carries a sharp particle number.
pub fn exact_spectrum_with(
    h: &PauliSum,
    number: &PauliSum,
    filter_particles: Option<usize>,
) -> Result<SpectrumResult> {
    check_size(h.n_qubits())?;
    if number.n_qubits() != h.n_qubits() {
        return Err(Error::SizeMismatch {
            expected: h.n_qubits(),
            found: number.n_qubits(),
        });
    }
    let eig = SymmetricEigen::new(h.to_dense());
    let dim = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);

    let n_dense = number.to_dense();
    let mut numbers = vec![0.0; dim];
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && values[end] - values[start] < DEGENERACY_TOL * values[start].abs().max(1.0) {
            end += 1;
        }
        let block = vectors.columns(start, end - start).into_owned();
        let projected = block.adjoint() * &n_dense * &block;
        let sub = SymmetricEigen::new(projected);
        let rotated = &block * &sub.eigenvectors;
        vectors.columns_mut(start, end - start).copy_from(&rotated);
        numbers[start..end].copy_from_slice(sub.eigenvalues.as_slice());
        start = end;
    }

    let keep: Vec<usize> = match filter_particles {
        None => (0..dim).collect(),
        Some(n) => (0..dim).filter(|&i| (numbers[i] - n as f64).abs() < PARTICLE_TOL).collect(),
    };
    Ok(SpectrumResult {
        eigenvalues: keep.iter().map(|&i| values[i]).collect(),
        particle_numbers: keep.iter().map(|&i| numbers[i]).collect(),
        eigenvectors: DMatrix::from_fn(dim, keep.len(), |r, c| vectors[(r, keep[c])]),
    })
}

/// Eigenvalues of `h` restricted to computational-basis states on which the
/// (Z-type) generators take the values in `s.sector()`.
pub fn sector_eigenvalues(h: &PauliSum, s: &SymmetrySet) -> Result<Vec<f64>> {
    check_size(h.n_qubits())?;
    let dense = h.to_dense();
    let idx: Vec<usize> = (0..1usize << h.n_qubits())
        .filter(|&b| {
            s.generators().iter().zip(s.sector()).all(|(g, &sv)| {
                let parity = (g.z_mask() & b as u64).count_ones() % 2;
                (if parity == 0 { 1 } else { -1 }) == sv
            })
        })
        .collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| dense[(idx[i], idx[j])]);
    let mut e: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}
