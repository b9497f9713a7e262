//! Toy integral sets and an exact-reference QSE runner shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bandqse::backend::{Estimator, ExactBackend};
use bandqse::fermion::TaperPolicy;
use bandqse::hamiltonian::{IntegralSet, KPoint};
use bandqse::pipeline::{prepare_kpoint, prepare_qse, ReferenceMode};
use bandqse::qse::{measure_subspace, solve_gev, SubspaceOperators, DEFAULT_S_THRESHOLD};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn toy_kpoint() -> KPoint {
    KPoint {
        label: "Γ".into(),
        fractional_coords: [0.0; 3],
        path_distance: 0.0,
    }
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let mut t = DMatrix::zeros(n, n);
    for p in 0..n {
        t[(p, p)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        for q in p + 1..n {
            let c = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            t[(p, q)] = c;
            t[(q, p)] = c.conj();
        }
    }
    t
}

/// Random `v` obeying `v_pqrs = conj(v_srqp)`, restricted to index tuples
/// accepted by `keep`.
fn random_two_body(
    n: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
    keep: impl Fn([usize; 4]) -> bool,
) -> BTreeMap<[usize; 4], Complex64> {
    let mut v = BTreeMap::new();
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    let idx = [p, q, r, s];
                    let partner = [s, r, q, p];
                    if !keep(idx) || v.contains_key(&idx) {
                        continue;
                    }
                    let c = if idx == partner {
                        Complex64::new(rng.random_range(-scale..scale), 0.0)
                    } else {
                        Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
                    };
                    v.insert(idx, c);
                    v.insert(partner, c.conj());
                }
            }
        }
    }
    v
}

pub fn integrals(n_orbitals: usize, n_electrons: usize, t: DMatrix<Complex64>, v: BTreeMap<[usize; 4], Complex64>) -> IntegralSet {
    let ints = IntegralSet {
        n_orbitals,
        n_electrons,
        kpoint: toy_kpoint(),
        constant: 0.0,
        t,
        v,
        metadata: BTreeMap::new(),
    };
    ints.validate().expect("toy integrals are Hermitian");
    ints
}

/// Three orbitals, complex hopping, no interaction.
pub fn non_interacting(n_electrons: usize, seed: u64) -> IntegralSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    integrals(3, n_electrons, random_hermitian(3, &mut rng), BTreeMap::new())
}

/// Two orbitals, two electrons, with orbital 1 entering every term an even
/// number of times.
pub fn parity_constrained(seed: u64) -> IntegralSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = random_hermitian(2, &mut rng);
    t[(0, 1)] = Complex64::default();
    t[(1, 0)] = Complex64::default();
    let v = random_two_body(2, 0.3, &mut rng, |idx| idx.iter().filter(|&&i| i == 1).count() % 2 == 0);
    integrals(2, 2, t, v)
}

/// Two orbitals with unrestricted interaction.
pub fn interacting(n_electrons: usize, seed: u64) -> IntegralSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = random_hermitian(2, &mut rng);
    let v = random_two_body(2, 0.3, &mut rng, |_| true);
    integrals(2, n_electrons, t, v)
}

pub struct QseVsOracle {
    pub valence: Vec<f64>,
    pub removal: Vec<f64>,
    pub conduction: Vec<f64>,
    pub addition: Vec<f64>,
}

fn eigenvalues(ops: &Option<SubspaceOperators>, reference: &bandqse::backend::Reference) -> Vec<f64> {
    let Some(ops) = ops else { return Vec::new() };
    let p = measure_subspace(ops, reference, &Estimator::new(&ExactBackend, 1), 0, 0).unwrap();
    solve_gev(&p, DEFAULT_S_THRESHOLD).unwrap().eigenvalues
}

/// QSE eigenvalues on the exact HF-sector ground state, next to the dense
/// N-1 and N+1 spectra.
pub fn qse_vs_oracle(ints: IntegralSet, policy: TaperPolicy) -> QseVsOracle {
    let p = prepare_kpoint(0, ints, policy).unwrap();
    let setup = prepare_qse(&p, ReferenceMode::Oracle, None).unwrap();
    QseVsOracle {
        valence: eigenvalues(&setup.valence, &setup.reference),
        conduction: eigenvalues(&setup.conduction, &setup.reference),
        removal: p.oracle.removal,
        addition: p.oracle.addition,
    }
}

/// Largest distance from a QSE eigenvalue to the nearest oracle level.
pub fn max_miss(qse: &[f64], oracle: &[f64]) -> f64 {
    qse.iter()
        .map(|e| oracle.iter().map(|o| (o - e).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}
