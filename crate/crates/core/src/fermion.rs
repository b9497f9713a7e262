//! Fermionic operators, the Jordan–Wigner encoding and Z2 qubit tapering.
//!
//! Spin orbitals use the blocked layout: spatial orbital `p` with spin α is
//! mode `p`, with spin β it is mode `p + n_orbitals`.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pauli::{multiply, Pauli, PauliString, PauliSum};

/// One creation (`dagger`) or annihilation operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ladder {
    pub mode: usize,
    pub dagger: bool,
}

impl Ladder {
    pub fn create(mode: usize) -> Self {
        Ladder { mode, dagger: true }
    }

    pub fn annihilate(mode: usize) -> Self {
        Ladder { mode, dagger: false }
    }
}

/// Sum of coefficient-weighted products of ladder operators, applied right
/// to left as written.
#[derive(Clone, Debug, PartialEq)]
pub struct FermionOperator {
    n_modes: usize,
    terms: Vec<(Complex64, Vec<Ladder>)>,
}

impl FermionOperator {
    pub fn new(n_modes: usize) -> Self {
        FermionOperator {
            n_modes,
            terms: Vec::new(),
        }
    }

    pub fn constant(n_modes: usize, c: Complex64) -> Self {
        let mut f = FermionOperator::new(n_modes);
        f.terms.push((c, Vec::new()));
        f
    }

    pub fn single(n_modes: usize, op: Ladder) -> Result<Self> {
        let mut f = FermionOperator::new(n_modes);
        f.add_term(Complex64::new(1.0, 0.0), vec![op])?;
        Ok(f)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn terms(&self) -> &[(Complex64, Vec<Ladder>)] {
        &self.terms
    }

    pub fn add_term(&mut self, coeff: Complex64, ops: Vec<Ladder>) -> Result<()> {
        if let Some(op) = ops.iter().find(|o| o.mode >= self.n_modes) {
            return Err(Error::ModeOverflow {
                index: op.mode,
                n_modes: self.n_modes,
            });
        }
        if coeff != Complex64::default() {
            self.terms.push((coeff, ops));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> FermionOperator {
        FermionOperator {
            n_modes: self.n_modes,
            terms: self
                .terms
                .iter()
                .map(|(c, ops)| {
                    let rev = ops
                        .iter()
                        .rev()
                        .map(|o| Ladder { mode: o.mode, dagger: !o.dagger })
                        .collect();
                    (c.conj(), rev)
                })
                .collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> FermionOperator {
        FermionOperator {
            n_modes: self.n_modes,
            terms: self.terms.iter().map(|(c, ops)| (c * factor, ops.clone())).collect(),
        }
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &FermionOperator) -> Result<FermionOperator> {
        if self.n_modes != other.n_modes {
            return Err(Error::SizeMismatch {
                expected: self.n_modes,
                found: other.n_modes,
            });
        }
        let mut out = FermionOperator::new(self.n_modes);
        for (ca, a) in &self.terms {
            for (cb, b) in &other.terms {
                let mut ops = a.clone();
                ops.extend_from_slice(b);
                out.terms.push((ca * cb, ops));
            }
        }
        Ok(out)
    }

    /// Merges identical products and drops zero coefficients. Idempotent.
    pub fn simplify(&self) -> FermionOperator {
        let mut order: Vec<Vec<Ladder>> = Vec::new();
        let mut acc: HashMap<Vec<Ladder>, Complex64> = HashMap::new();
        for (c, ops) in &self.terms {
            if !acc.contains_key(ops) {
                order.push(ops.clone());
            }
            *acc.entry(ops.clone()).or_default() += c;
        }
        FermionOperator {
            n_modes: self.n_modes,
            terms: order
                .into_iter()
                .filter_map(|ops| {
                    let c = acc[&ops];
                    (c != Complex64::default()).then_some((c, ops))
                })
                .collect(),
        }
    }
}

fn ladder_image(op: Ladder, n_qubits: usize) -> PauliSum {
    let tail = (1u64 << op.mode) - 1;
    let mut x = PauliString::z_string(n_qubits, tail);
    x.set(op.mode, Pauli::X);
    let mut y = PauliString::z_string(n_qubits, tail);
    y.set(op.mode, Pauli::Y);
    let y_coeff = if op.dagger { -0.5 } else { 0.5 };
    PauliSum::from_terms(
        n_qubits,
        [(x, Complex64::new(0.5, 0.0)), (y, Complex64::new(0.0, y_coeff))],
    )
    .expect("sizes agree")
}

/// Jordan–Wigner image: `c†_j -> Z_0 ... Z_{j-1} (X_j - i Y_j) / 2`.
pub fn jordan_wigner(f: &FermionOperator, n_modes: usize) -> Result<PauliSum> {
    if let Some(m) = f
        .terms
        .iter()
        .flat_map(|(_, ops)| ops.iter().map(|o| o.mode))
        .find(|&m| m >= n_modes)
    {
        return Err(Error::ModeOverflow { index: m, n_modes });
    }
    let mut cache: HashMap<Ladder, PauliSum> = HashMap::new();
    let mut out = PauliSum::new(n_modes);
    for (c, ops) in &f.terms {
        let mut acc = PauliSum::identity(n_modes, *c);
        for op in ops {
            let img = cache.entry(*op).or_insert_with(|| ladder_image(*op, n_modes));
            acc = acc.mul(img)?;
            if acc.is_empty() {
                break;
            }
        }
        out = out.add(&acc)?;
    }
    Ok(out)
}

/// `sum_j n_j` in Jordan–Wigner form.
pub fn number_operator(n_modes: usize) -> PauliSum {
    let mut n = PauliSum::identity(n_modes, Complex64::new(n_modes as f64 / 2.0, 0.0));
    for j in 0..n_modes {
        n.add_term(PauliString::single(n_modes, j, Pauli::Z), Complex64::new(-0.5, 0.0))
            .expect("sizes agree");
    }
    n
}

/// Z-type Pauli symmetries, each paired with a pivot qubit that no other
/// generator touches, and a sector of ±1 eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetrySet {
    n_qubits: usize,
    generators: Vec<PauliString>,
    single_qubit_x: Vec<usize>,
    sector: Vec<i8>,
}

impl SymmetrySet {
    /// Row-reduces the generators so that each owns a distinct pivot qubit,
    /// choosing pivots from the highest qubit downwards. The sector starts at
    /// all +1.
    pub fn from_generators(n_qubits: usize, generators: &[PauliString]) -> Result<Self> {
        let mut rows = Vec::with_capacity(generators.len());
        for g in generators {
            if g.n_qubits() != n_qubits {
                return Err(Error::SizeMismatch {
                    expected: n_qubits,
                    found: g.n_qubits(),
                });
            }
            if !g.is_z_type() || g.is_identity() {
                return Err(Error::InvalidSymmetry(format!("{g} is not a non-trivial Z string")));
            }
            rows.push(g.z_mask());
        }
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in (0..n_qubits).rev() {
            let bit = 1u64 << col;
            let Some(r) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) else {
                continue;
            };
            rows.swap(rank, r);
            for other in 0..rows.len() {
                if other != rank && rows[other] & bit != 0 {
                    rows[other] ^= rows[rank];
                }
            }
            pivots.push(col);
            rank += 1;
        }
        if rank < rows.len() {
            return Err(Error::InvalidSymmetry("generators are not independent over GF(2)".into()));
        }
        // order by pivot ascending so output is stable
        let mut pairs: Vec<(usize, u64)> = pivots.into_iter().zip(rows).collect();
        pairs.sort();
        Ok(SymmetrySet {
            n_qubits,
            generators: pairs.iter().map(|&(_, z)| PauliString::z_string(n_qubits, z)).collect(),
            single_qubit_x: pairs.iter().map(|&(q, _)| q).collect(),
            sector: vec![1; pairs.len()],
        })
    }

    pub fn empty(n_qubits: usize) -> Self {
        SymmetrySet {
            n_qubits,
            generators: Vec::new(),
            single_qubit_x: Vec::new(),
            sector: Vec::new(),
        }
    }

    pub fn with_sector(mut self, sector: Vec<i8>) -> Result<Self> {
        if sector.len() != self.generators.len() || sector.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidSymmetry(format!("bad sector {sector:?}")));
        }
        self.sector = sector;
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn single_qubit_x(&self) -> &[usize] {
        &self.single_qubit_x
    }

    pub fn sector(&self) -> &[i8] {
        &self.sector
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Qubits left after tapering, in ascending order.
    pub fn kept_qubits(&self) -> Vec<usize> {
        (0..self.n_qubits).filter(|q| !self.single_qubit_x.contains(q)).collect()
    }

    pub fn commutes_with_all(&self, h: &PauliSum) -> bool {
        h.iter().all(|(p, _)| self.generators.iter().all(|g| g.commutes_with(p)))
    }
}

/// Basis of all Z-type Pauli strings commuting with every term of `h`, i.e.
/// the GF(2) kernel of the X-part check matrix.
pub fn find_z2_symmetries(h: &PauliSum) -> SymmetrySet {
    let n = h.n_qubits();
    let mut rows: Vec<u64> = h.iter().map(|(p, _)| p.x_mask()).filter(|&x| x != 0).collect();
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        let bit = 1u64 << col;
        let Some(r) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank, r);
        for other in 0..rows.len() {
            if other != rank && rows[other] & bit != 0 {
                rows[other] ^= rows[rank];
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    let mut kernel = Vec::new();
    for free in (0..n).filter(|c| !pivot_cols.contains(c)) {
        let mut z = 1u64 << free;
        for (r, &pc) in pivot_cols.iter().enumerate() {
            if rows[r] >> free & 1 == 1 {
                z |= 1 << pc;
            }
        }
        kernel.push(PauliString::z_string(n, z));
    }
    SymmetrySet::from_generators(n, &kernel).expect("kernel basis is independent")
}

/// α-block and β-block parity strings for the blocked spin-orbital layout.
pub fn spin_parity_generators(n_orbitals: usize) -> Vec<PauliString> {
    let n = 2 * n_orbitals;
    let alpha = (1u64 << n_orbitals) - 1;
    vec![
        PauliString::z_string(n, alpha),
        PauliString::z_string(n, alpha << n_orbitals),
    ]
}

/// Which Z2 symmetries to taper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaperPolicy {
    /// α and β parities: two qubits for any spin-conserving Hamiltonian.
    #[default]
    SpinParity,
    /// Every independent Z-type symmetry of the Hamiltonian.
    Maximal,
}

pub fn select_symmetries(h: &PauliSum, policy: TaperPolicy, n_orbitals: usize) -> Result<SymmetrySet> {
    let set = match policy {
        TaperPolicy::Maximal => find_z2_symmetries(h),
        TaperPolicy::SpinParity => {
            if h.n_qubits() != 2 * n_orbitals {
                return Err(Error::SizeMismatch {
                    expected: 2 * n_orbitals,
                    found: h.n_qubits(),
                });
            }
            SymmetrySet::from_generators(h.n_qubits(), &spin_parity_generators(n_orbitals))?
        }
    };
    if let Some((p, g)) = h
        .iter()
        .find_map(|(p, _)| set.generators().iter().find(|g| !g.commutes_with(p)).map(|g| (p, g)))
    {
        return Err(Error::NonCommutingGenerator {
            term: p.to_string(),
            generator: g.to_string(),
        });
    }
    Ok(set)
}

/// Eigenvalue of each generator on the computational-basis state of the
/// occupation (mode `j` occupied when `occupation[j]`).
pub fn sector_from_occupation(s: &SymmetrySet, occupation: &[bool]) -> Result<Vec<i8>> {
    if occupation.len() != s.n_qubits {
        return Err(Error::SizeMismatch {
            expected: s.n_qubits,
            found: occupation.len(),
        });
    }
    let occ: u64 = occupation
        .iter()
        .enumerate()
        .filter(|(_, &o)| o)
        .fold(0, |acc, (j, _)| acc | 1 << j);
    Ok(s
        .generators
        .iter()
        .map(|g| if (g.z_mask() & occ).count_ones() % 2 == 0 { 1 } else { -1 })
        .collect())
}

/// Conjugates `h` by the Clifford that turns each generator into X on its
/// pivot qubit, fixes that X to the sector eigenvalue and drops the qubit.
pub fn taper(h: &PauliSum, s: &SymmetrySet) -> Result<PauliSum> {
    if h.n_qubits() != s.n_qubits {
        return Err(Error::SizeMismatch {
            expected: s.n_qubits,
            found: h.n_qubits(),
        });
    }
    for (p, _) in h.iter() {
        if let Some(g) = s.generators.iter().find(|g| !g.commutes_with(p)) {
            return Err(Error::NonCommutingGenerator {
                term: p.to_string(),
                generator: g.to_string(),
            });
        }
    }
    let removed = &s.single_qubit_x;
    let mut out = PauliSum::new(s.n_qubits - removed.len());
    for (p, c) in h.iter() {
        let mut term = *p;
        let mut coeff = *c;
        for (g, &q) in s.generators.iter().zip(removed) {
            if term.z_mask() >> q & 1 == 1 {
                // (X_q + g)/sqrt2 conjugation maps P to P g X_q when P anticommutes with X_q
                let (ph1, pg) = multiply(&term, g)?;
                let (ph2, pgx) = multiply(&pg, &PauliString::single(s.n_qubits, q, Pauli::X))?;
                term = pgx;
                coeff *= ph1 * ph2;
            }
        }
        for (&q, &sign) in removed.iter().zip(&s.sector) {
            match term.letter(q) {
                Pauli::I => {}
                Pauli::X => coeff *= f64::from(sign),
                other => unreachable!("letter {other:?} left on tapered qubit {q}"),
            }
        }
        out.add_term(term.remove_qubits(removed), coeff)?;
    }
    Ok(out)
}

/// Computational-basis index of an occupation restricted to the kept qubits.
pub fn tapered_basis_index(s: &SymmetrySet, occupation: &[bool]) -> usize {
    s.kept_qubits()
        .iter()
        .enumerate()
        .filter(|(_, &q)| occupation[q])
        .fold(0, |acc, (i, _)| acc | 1 << i)
}
