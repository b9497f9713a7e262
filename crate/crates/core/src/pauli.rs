//! Pauli strings, sums of Pauli strings and qubit-wise commuting grouping.
//!
//! Qubit `q` is the `q`-th letter of the textual form, so `"XZI"` is X on
//! qubit 0, Z on qubit 1 and identity on qubit 2. Computational-basis index
//! bit `q` corresponds to the same qubit.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Strings are stored as two bit masks, which caps the register size.
pub const MAX_QUBITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    /// Single-qubit product `self * other` as (power of i, result).
    fn mul(self, other: Pauli) -> (u8, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => (0, p),
            (X, X) | (Y, Y) | (Z, Z) => (0, I),
            (X, Y) => (1, Z),
            (Y, X) => (3, Z),
            (Y, Z) => (1, X),
            (Z, Y) => (3, X),
            (Z, X) => (1, Y),
            (X, Z) => (3, Y),
        }
    }
}

/// Tensor product of single-qubit Paulis on a fixed-size register.
#[derive(Clone, Copy, Debug)]
pub struct PauliString {
    n_qubits: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Self {
        assert!(n_qubits <= MAX_QUBITS, "at most {MAX_QUBITS} qubits");
        PauliString {
            n_qubits,
            x: 0,
            z: 0,
        }
    }

    pub fn from_letters(letters: &[Pauli]) -> Self {
        let mut s = PauliString::identity(letters.len());
        for (q, &p) in letters.iter().enumerate() {
            s.set(q, p);
        }
        s
    }

    /// Builds a string from x/z masks. Bits at or above `n_qubits` are ignored.
    pub fn from_masks(n_qubits: usize, x: u64, z: u64) -> Self {
        assert!(n_qubits <= MAX_QUBITS, "at most {MAX_QUBITS} qubits");
        let keep = mask_below(n_qubits);
        PauliString {
            n_qubits,
            x: x & keep,
            z: z & keep,
        }
    }

    /// Single non-identity letter on qubit `q`.
    pub fn single(n_qubits: usize, q: usize, p: Pauli) -> Self {
        let mut s = PauliString::identity(n_qubits);
        s.set(q, p);
        s
    }

    /// Z on every qubit set in `mask`.
    pub fn z_string(n_qubits: usize, mask: u64) -> Self {
        PauliString::from_masks(n_qubits, 0, mask)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Qubits acted on non-trivially.
    pub fn support(&self) -> u64 {
        self.x | self.z
    }

    pub fn weight(&self) -> u32 {
        self.support().count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// True when only I and Z letters appear.
    pub fn is_z_type(&self) -> bool {
        self.x == 0
    }

    pub fn letter(&self, q: usize) -> Pauli {
        assert!(q < self.n_qubits, "qubit {q} out of range");
        Pauli::from_bits(self.x >> q & 1 == 1, self.z >> q & 1 == 1)
    }

    pub fn set(&mut self, q: usize, p: Pauli) {
        assert!(q < self.n_qubits, "qubit {q} out of range");
        let (x, z) = p.bits();
        let bit = 1u64 << q;
        self.x = if x { self.x | bit } else { self.x & !bit };
        self.z = if z { self.z | bit } else { self.z & !bit };
    }

    pub fn letters(&self) -> impl Iterator<Item = Pauli> + '_ {
        (0..self.n_qubits).map(move |q| self.letter(q))
    }

    /// Number of Y letters; `i^{#Y}` shows up when acting on basis states.
    pub fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let anti = (self.x & other.z).count_ones() + (self.z & other.x).count_ones();
        anti % 2 == 0
    }

    /// Every qubit carries either an identity or the same letter.
    pub fn qubitwise_commutes(&self, other: &PauliString) -> bool {
        let both = self.support() & other.support();
        (self.x ^ other.x) & both == 0 && (self.z ^ other.z) & both == 0
    }

    /// Drops the listed qubits, shifting the survivors down.
    pub fn remove_qubits(&self, qubits: &[usize]) -> PauliString {
        let mut letters = Vec::with_capacity(self.n_qubits - qubits.len());
        for q in 0..self.n_qubits {
            if !qubits.contains(&q) {
                letters.push(self.letter(q));
            }
        }
        PauliString::from_letters(&letters)
    }

    pub fn parse(text: &str) -> Result<PauliString> {
        let letters = text
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::PauliParse(text.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() || letters.len() > MAX_QUBITS {
            return Err(Error::PauliParse(text.to_string()));
        }
        Ok(PauliString::from_letters(&letters))
    }
}

fn mask_below(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl PartialEq for PauliString {
    fn eq(&self, other: &Self) -> bool {
        self.n_qubits == other.n_qubits && self.x == other.x && self.z == other.z
    }
}

impl Eq for PauliString {}

impl Hash for PauliString {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.n_qubits.hash(state);
        self.x.hash(state);
        self.z.hash(state);
    }
}

impl Ord for PauliString {
    /// Lexicographic on letters (I < X < Y < Z), qubit 0 first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.n_qubits
            .cmp(&other.n_qubits)
            .then_with(|| self.letters().cmp(other.letters()))
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.letters() {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl serde::Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        PauliString::parse(&text).map_err(serde::de::Error::custom)
    }
}

const I_POWERS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

/// Operator product `a * b`, returned as `(phase, string)` with phase in {±1, ±i}.
pub fn multiply(a: &PauliString, b: &PauliString) -> Result<(Complex64, PauliString)> {
    if a.n_qubits != b.n_qubits {
        return Err(Error::SizeMismatch {
            expected: a.n_qubits,
            found: b.n_qubits,
        });
    }
    Ok(multiply_unchecked(a, b))
}

fn multiply_unchecked(a: &PauliString, b: &PauliString) -> (Complex64, PauliString) {
    let mut power = 0u8;
    let mut active = a.support() & b.support();
    while active != 0 {
        let q = active.trailing_zeros() as usize;
        active &= active - 1;
        let (k, _) = a.letter(q).mul(b.letter(q));
        power = (power + k) % 4;
    }
    let product = PauliString {
        n_qubits: a.n_qubits,
        x: a.x ^ b.x,
        z: a.z ^ b.z,
    };
    (I_POWERS[power as usize], product)
}

/// Sparse linear combination of Pauli strings with complex coefficients.
///
/// Terms are kept in lexicographic order and exact zeros are dropped on
/// insertion, so two sums describing the same operator compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl PauliSum {
    pub fn new(n_qubits: usize) -> Self {
        PauliSum {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PauliString, Complex64)>,
    {
        let mut sum = PauliSum::new(n_qubits);
        for (p, c) in terms {
            sum.add_term(p, c)?;
        }
        Ok(sum)
    }

    /// Convenience constructor from `(letters, real coefficient)` pairs.
    pub fn from_real(terms: &[(&str, f64)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::PauliParse("empty".into()))?;
        let n = first.0.len();
        let parsed = terms
            .iter()
            .map(|(s, c)| Ok((PauliString::parse(s)?, Complex64::new(*c, 0.0))))
            .collect::<Result<Vec<_>>>()?;
        PauliSum::from_terms(n, parsed)
    }

    pub fn identity(n_qubits: usize, coeff: Complex64) -> Self {
        let mut sum = PauliSum::new(n_qubits);
        sum.add_term(PauliString::identity(n_qubits), coeff)
            .expect("sizes agree");
        sum
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    pub fn identity_coefficient(&self) -> Complex64 {
        self.coefficient(&PauliString::identity(self.n_qubits))
    }

    pub fn add_term(&mut self, p: PauliString, c: Complex64) -> Result<()> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::SizeMismatch {
                expected: self.n_qubits,
                found: p.n_qubits(),
            });
        }
        self.add_unchecked(p, c);
        Ok(())
    }

    fn add_unchecked(&mut self, p: PauliString, c: Complex64) {
        if c == Complex64::default() {
            return;
        }
        let slot = self.terms.entry(p).or_default();
        *slot += c;
        if *slot == Complex64::default() {
            self.terms.remove(&p);
        }
    }

    pub fn add(&self, other: &PauliSum) -> Result<PauliSum> {
        check_size(self.n_qubits, other.n_qubits)?;
        let mut out = self.clone();
        for (p, c) in &other.terms {
            out.add_unchecked(*p, *c);
        }
        Ok(out)
    }

    pub fn scale(&self, factor: Complex64) -> PauliSum {
        let mut out = PauliSum::new(self.n_qubits);
        for (p, c) in &self.terms {
            out.add_unchecked(*p, c * factor);
        }
        out
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &PauliSum) -> Result<PauliSum> {
        check_size(self.n_qubits, other.n_qubits)?;
        let mut out = PauliSum::new(self.n_qubits);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let (phase, p) = multiply_unchecked(a, b);
                out.add_unchecked(p, phase * ca * cb);
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> PauliSum {
        let mut out = PauliSum::new(self.n_qubits);
        for (p, c) in &self.terms {
            out.add_unchecked(*p, c.conj());
        }
        out
    }

    /// All coefficients real within `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms.values().all(|c| c.im.abs() <= tol)
    }

    /// Keeps exactly the terms with `|c| >= eps`.
    pub fn truncate(&self, eps: f64) -> PauliSum {
        assert!(eps >= 0.0, "truncation threshold must be non-negative");
        PauliSum {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() >= eps)
                .map(|(p, c)| (*p, *c))
                .collect(),
        }
    }

    /// Largest coefficient magnitude, zero for an empty sum.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Applies the operator to a dense vector of `2^n` amplitudes.
    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = 1usize << self.n_qubits;
        if psi.len() != dim {
            return Err(Error::SizeMismatch {
                expected: dim,
                found: psi.len(),
            });
        }
        let mut out = vec![Complex64::default(); dim];
        for (p, c) in &self.terms {
            let phase = c * I_POWERS[(p.y_count() % 4) as usize];
            let (x, z) = (p.x_mask() as usize, p.z_mask() as usize);
            for (b, amp) in psi.iter().enumerate() {
                let sign = if (b & z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                out[b ^ x] += phase * sign * amp;
            }
        }
        Ok(out)
    }

    /// Dense `2^n x 2^n` matrix in the computational basis.
    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
        for (p, c) in &self.terms {
            let phase = c * I_POWERS[(p.y_count() % 4) as usize];
            let (x, z) = (p.x_mask() as usize, p.z_mask() as usize);
            for b in 0..dim {
                let sign = if (b & z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                m[(b ^ x, b)] += phase * sign;
            }
        }
        m
    }

    /// One term per line: `<re> <im> <letters>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (p, c) in &self.terms {
            out.push_str(&format!("{} {} {}\n", c.re, c.im, p));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PauliSum> {
        let mut terms = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::PauliParse(line.to_string()));
            }
            let re: f64 = fields[0].parse().map_err(|_| Error::PauliParse(line.to_string()))?;
            let im: f64 = fields[1].parse().map_err(|_| Error::PauliParse(line.to_string()))?;
            terms.push((PauliString::parse(fields[2])?, Complex64::new(re, im)));
        }
        let n = terms
            .first()
            .map(|(p, _)| p.n_qubits())
            .ok_or_else(|| Error::PauliParse("no terms".into()))?;
        PauliSum::from_terms(n, terms)
    }
}

fn check_size(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, found })
    }
}

/// Terms that can be read out from one shared single-qubit measurement basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGroup {
    pub members: Vec<(PauliString, Complex64)>,
    /// Per-qubit basis; `I` means the qubit is not needed by any member.
    pub basis: Vec<Pauli>,
}

impl MeasurementGroup {
    pub fn new(n_qubits: usize) -> Self {
        MeasurementGroup {
            members: Vec::new(),
            basis: vec![Pauli::I; n_qubits],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.basis.len()
    }

    pub fn accepts(&self, p: &PauliString) -> bool {
        p.letters()
            .zip(&self.basis)
            .all(|(l, &b)| l == Pauli::I || b == Pauli::I || l == b)
    }

    fn push(&mut self, p: PauliString, c: Complex64) {
        for (q, l) in p.letters().enumerate() {
            if l != Pauli::I {
                self.basis[q] = l;
            }
        }
        self.members.push((p, c));
    }

    /// Group whose basis is the all-Z computational basis.
    pub fn computational(n_qubits: usize) -> Self {
        MeasurementGroup {
            members: Vec::new(),
            basis: vec![Pauli::Z; n_qubits],
        }
    }
}

/// Greedy first-fit partition into qubit-wise commuting groups, visiting terms
/// in lexicographic order.
pub fn group_qubitwise(h: &PauliSum) -> Vec<MeasurementGroup> {
    let mut groups: Vec<MeasurementGroup> = Vec::new();
    for (p, c) in h.iter() {
        match groups.iter_mut().find(|g| g.accepts(p)) {
            Some(g) => g.push(*p, *c),
            None => {
                let mut g = MeasurementGroup::new(h.n_qubits());
                g.push(*p, *c);
                groups.push(g);
            }
        }
    }
    groups
}
