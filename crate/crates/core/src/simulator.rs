//! Dense statevector simulator with shot sampling through a noise model.
//!
//! Gate noise is stochastic Pauli insertion per trajectory; readout noise is
//! a per-qubit confusion map applied to the sampled bitstrings.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mitigation::Distribution;
use crate::pauli::{MeasurementGroup, Pauli, PauliSum};

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gate {
    X { qubit: usize },
    H { qubit: usize },
    S { qubit: usize },
    Sdg { qubit: usize },
    Ry { qubit: usize, theta: f64 },
    Rz { qubit: usize, theta: f64 },
    Cz { a: usize, b: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::X { qubit }
            | Gate::H { qubit }
            | Gate::S { qubit }
            | Gate::Sdg { qubit }
            | Gate::Ry { qubit, .. }
            | Gate::Rz { qubit, .. } => vec![qubit],
            Gate::Cz { a, b } => vec![a, b],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cz { .. } | Gate::Cnot { .. })
    }

    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::S { qubit } => Gate::Sdg { qubit },
            Gate::Sdg { qubit } => Gate::S { qubit },
            Gate::Ry { qubit, theta } => Gate::Ry { qubit, theta: -theta },
            Gate::Rz { qubit, theta } => Gate::Rz { qubit, theta: -theta },
            g => g,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if qs.iter().any(|&q| q >= n_qubits) {
            return Err(Error::InvalidGate(format!("{self:?} on {n_qubits} qubits")));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::InvalidGate(format!("{self:?} repeats a qubit")));
        }
        match self {
            Gate::Ry { theta, .. } | Gate::Rz { theta, .. } if !theta.is_finite() => {
                Err(Error::InvalidGate(format!("{self:?} has a non-finite angle")))
            }
            _ => Ok(()),
        }
    }

    fn matrix(&self) -> Option<[[Complex64; 2]; 2]> {
        let r = |x: f64| Complex64::new(x, 0.0);
        let (o, l) = (r(0.0), r(1.0));
        let i = Complex64::new(0.0, 1.0);
        Some(match *self {
            Gate::X { .. } => [[o, l], [l, o]],
            Gate::H { .. } => {
                let s = r(std::f64::consts::FRAC_1_SQRT_2);
                [[s, s], [s, -s]]
            }
            Gate::S { .. } => [[l, o], [o, i]],
            Gate::Sdg { .. } => [[l, o], [o, -i]],
            Gate::Ry { theta, .. } => {
                let (s, c) = (theta / 2.0).sin_cos();
                [[r(c), r(-s)], [r(s), r(c)]]
            }
            Gate::Rz { theta, .. } => {
                let half = theta / 2.0;
                [[Complex64::from_polar(1.0, -half), o], [o, Complex64::from_polar(1.0, half)]]
            }
            Gate::Cz { .. } | Gate::Cnot { .. } => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, g: Gate) -> Result<()> {
        g.validate(self.n_qubits)?;
        self.gates.push(g);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Prepares basis state `index` from `|0...0>` with X gates.
    pub fn basis_preparation(n_qubits: usize, index: usize) -> Self {
        let gates = (0..n_qubits)
            .filter(|q| index >> q & 1 == 1)
            .map(|qubit| Gate::X { qubit })
            .collect();
        Circuit { n_qubits, gates }
    }

    /// Copy with the rotations that map `basis` onto the computational basis.
    pub fn with_measurement_basis(&self, basis: &[Pauli]) -> Result<Circuit> {
        if basis.len() != self.n_qubits {
            return Err(Error::SizeMismatch {
                expected: self.n_qubits,
                found: basis.len(),
            });
        }
        let mut c = self.clone();
        for (qubit, &b) in basis.iter().enumerate() {
            match b {
                Pauli::X => c.push(Gate::H { qubit })?,
                Pauli::Y => {
                    c.push(Gate::Sdg { qubit })?;
                    c.push(Gate::H { qubit })?;
                }
                Pauli::Z | Pauli::I => {}
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    amps: Vec<Complex64>,
}

impl Statevector {
    pub fn zero(n_qubits: usize) -> Self {
        Statevector::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::default(); 1 << n_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Statevector { amps }
    }

    /// Accepts a vector whose norm is within 1e-10 of one and renormalizes it.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if !amps.len().is_power_of_two() || amps.is_empty() {
            return Err(Error::InvalidGate(format!("{} amplitudes", amps.len())));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidGate(format!("state norm {norm}")));
        }
        Ok(Statevector {
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn apply_gate(&mut self, g: &Gate) {
        match *g {
            Gate::Cz { a, b } => {
                let mask = (1 << a) | (1 << b);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp = -*amp;
                    }
                }
            }
            Gate::Cnot { control, target } => {
                for i in 0..self.amps.len() {
                    if i >> control & 1 == 1 && i >> target & 1 == 0 {
                        self.amps.swap(i, i | 1 << target);
                    }
                }
            }
            _ => {
                let m = g.matrix().expect("single-qubit gate");
                let q = g.qubits()[0];
                for i in 0..self.amps.len() {
                    if i >> q & 1 == 0 {
                        let j = i | 1 << q;
                        let (a0, a1) = (self.amps[i], self.amps[j]);
                        self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                        self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
                    }
                }
            }
        }
        debug_assert!((self.norm_sqr() - 1.0).abs() < NORM_TOL * self.amps.len() as f64);
    }

    fn apply_pauli(&mut self, q: usize, p: Pauli) {
        let bit = 1 << q;
        match p {
            Pauli::I => {}
            Pauli::X => {
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        self.amps.swap(i, i | bit);
                    }
                }
            }
            Pauli::Z => {
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *a = -*a;
                    }
                }
            }
            Pauli::Y => {
                let iu = Complex64::new(0.0, 1.0);
                for i in 0..self.amps.len() {
                    if i & bit == 0 {
                        let (a0, a1) = (self.amps[i], self.amps[i | bit]);
                        self.amps[i] = -iu * a1;
                        self.amps[i | bit] = iu * a0;
                    }
                }
            }
        }
    }
}

/// Applies every gate of `c` in order.
pub fn apply_circuit(state: &Statevector, c: &Circuit) -> Result<Statevector> {
    if state.n_qubits() != c.n_qubits() {
        return Err(Error::SizeMismatch {
            expected: c.n_qubits(),
            found: state.n_qubits(),
        });
    }
    let mut out = state.clone();
    for g in c.gates() {
        out.apply_gate(g);
    }
    Ok(out)
}

/// `<psi|h|psi>`.
pub fn expectation(state: &Statevector, h: &PauliSum) -> Result<Complex64> {
    let h_psi = h.apply(state.amplitudes())?;
    Ok(state
        .amplitudes()
        .iter()
        .zip(&h_psi)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Readout-fidelity drift, a zero-mean sinusoid in the measurement-cycle index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub amplitude: f64,
    pub period_cycles: f64,
}

impl Drift {
    pub fn offset(&self, cycle: u64) -> f64 {
        self.amplitude * (2.0 * PI * cycle as f64 / self.period_cycles).sin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per qubit `[P(0|0), P(1|1)]`; empty means perfect readout.
    #[serde(default)]
    pub readout: Vec<[f64; 2]>,
    #[serde(default)]
    pub depolarizing_1q: f64,
    #[serde(default)]
    pub depolarizing_2q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Drift>,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            readout: Vec::new(),
            depolarizing_1q: 0.0,
            depolarizing_2q: 0.0,
            drift: None,
        }
    }

    /// Symmetric readout fidelities, one per qubit.
    pub fn readout_only(fidelities: &[f64]) -> Self {
        NoiseModel {
            readout: fidelities.iter().map(|&f| [f, f]).collect(),
            ..NoiseModel::noiseless()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: NoiseModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        NoiseModel::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.depolarizing_1q) || !prob(self.depolarizing_2q) {
            return Err(Error::InvalidNoise("depolarizing rates must lie in [0, 1]".into()));
        }
        let swing = match self.drift {
            Some(d) => {
                if !(d.period_cycles > 0.0) || !(d.amplitude >= 0.0) {
                    return Err(Error::InvalidNoise(format!("bad drift {d:?}")));
                }
                d.amplitude
            }
            None => 0.0,
        };
        for (q, f) in self.readout.iter().enumerate() {
            for &fi in f {
                if !prob(fi - swing) || !prob(fi + swing) {
                    return Err(Error::InvalidNoise(format!(
                        "qubit {q} readout fidelity {fi} with drift {swing} leaves [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_gate_noiseless(&self) -> bool {
        self.depolarizing_1q == 0.0 && self.depolarizing_2q == 0.0
    }

    /// Per-qubit `[P(0|0), P(1|1)]` at the given cycle.
    pub fn readout_at(&self, n_qubits: usize, cycle: u64) -> Result<Vec<[f64; 2]>> {
        if self.readout.is_empty() {
            return Ok(vec![[1.0, 1.0]; n_qubits]);
        }
        if self.readout.len() < n_qubits {
            return Err(Error::InvalidNoise(format!(
                "readout given for {} qubits, circuit uses {n_qubits}",
                self.readout.len()
            )));
        }
        let off = self.drift.map_or(0.0, |d| d.offset(cycle));
        Ok(self.readout[..n_qubits]
            .iter()
            .map(|f| [f[0] + off, f[1] + off])
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotResult {
    pub n_qubits: usize,
    /// Bitstring (qubit 0 first) to count; zero counts are omitted.
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
}

impl ShotResult {
    pub fn from_dense(n_qubits: usize, dense: &[u64]) -> Self {
        let counts: BTreeMap<String, u64> = dense
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (bitstring(i, n_qubits), c))
            .collect();
        ShotResult {
            n_qubits,
            shots: dense.iter().sum(),
            counts,
        }
    }

    pub fn dense_counts(&self) -> Result<Vec<u64>> {
        let mut out = vec![0u64; 1 << self.n_qubits];
        for (s, &c) in &self.counts {
            out[parse_bitstring(s, self.n_qubits)?] += c;
        }
        Ok(out)
    }

    pub fn to_distribution(&self) -> Result<Distribution> {
        if self.shots == 0 {
            return Err(Error::EmptyResult);
        }
        let total = self.shots as f64;
        Distribution::new(self.dense_counts()?.iter().map(|&c| c as f64 / total).collect())
    }
}

/// Bitstring with qubit 0 as the first character.
pub fn bitstring(index: usize, n_qubits: usize) -> String {
    (0..n_qubits)
        .map(|q| if index >> q & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bitstring(s: &str, n_qubits: usize) -> Result<usize> {
    if s.len() != n_qubits {
        return Err(Error::SizeMismatch {
            expected: n_qubits,
            found: s.len(),
        });
    }
    s.chars().enumerate().try_fold(0usize, |acc, (q, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | 1 << q),
        other => Err(Error::InvalidBasis(other)),
    })
}

/// Samples `shots` bitstrings from `circuit` applied to `|0...0>` and measured
/// in the basis of `g`.
pub fn sample_group(
    c: &Circuit,
    g: &MeasurementGroup,
    shots: u64,
    noise: &NoiseModel,
    seed: u64,
    cycle: u64,
) -> Result<ShotResult> {
    sample_prepared(&Statevector::zero(c.n_qubits()), c, &g.basis, shots, noise, seed, cycle)
}

/// Sampling from an arbitrary initial state followed by `c`.
pub fn sample_prepared(
    initial: &Statevector,
    c: &Circuit,
    basis: &[Pauli],
    shots: u64,
    noise: &NoiseModel,
    seed: u64,
    cycle: u64,
) -> Result<ShotResult> {
    if shots == 0 {
        return Err(Error::EmptyResult);
    }
    if initial.n_qubits() != c.n_qubits() {
        return Err(Error::SizeMismatch {
            expected: c.n_qubits(),
            found: initial.n_qubits(),
        });
    }
    let full = c.with_measurement_basis(basis)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = sample_trajectories(initial, &full, shots, noise, &mut rng)?;
    apply_readout(&mut counts, &noise.readout_at(c.n_qubits(), cycle)?, &mut rng);
    Ok(ShotResult::from_dense(c.n_qubits(), &counts))
}

/// Error pattern of one trajectory: (gate index, Pauli code) in gate order.
type ErrorPattern = Vec<(usize, u8)>;

fn sample_trajectories(
    initial: &Statevector,
    c: &Circuit,
    shots: u64,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u64>> {
    let ideal = apply_circuit(initial, c)?.probabilities();
    if noise.is_gate_noiseless() {
        return Ok(multinomial(shots, &ideal, rng));
    }
    // Shots hit by at least one error, keyed by shot index.
    let mut hit: BTreeMap<usize, ErrorPattern> = BTreeMap::new();
    for (gi, g) in c.gates().iter().enumerate() {
        let (p, n_codes) = if g.is_two_qubit() {
            (noise.depolarizing_2q, 16u8)
        } else {
            (noise.depolarizing_1q, 4u8)
        };
        if p == 0.0 {
            continue;
        }
        let k = Binomial::new(shots, p)
            .map_err(|e| Error::InvalidNoise(e.to_string()))?
            .sample(rng);
        for shot in rand::seq::index::sample(rng, shots as usize, k as usize).into_iter() {
            let code = rng.random_range(1..n_codes);
            hit.entry(shot).or_default().push((gi, code));
        }
    }
    let mut counts = multinomial(shots - hit.len() as u64, &ideal, rng);
    let mut cache: BTreeMap<ErrorPattern, Vec<f64>> = BTreeMap::new();
    for pattern in hit.into_values() {
        let probs = cache
            .entry(pattern)
            .or_insert_with_key(|pat| run_with_errors(initial, c, pat).probabilities());
        counts[sample_index(probs, rng)] += 1;
    }
    Ok(counts)
}

fn run_with_errors(initial: &Statevector, c: &Circuit, pattern: &[(usize, u8)]) -> Statevector {
    const LETTERS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let mut state = initial.clone();
    let mut next = pattern.iter().peekable();
    for (gi, g) in c.gates().iter().enumerate() {
        state.apply_gate(g);
        while let Some(&&(at, code)) = next.peek() {
            if at != gi {
                break;
            }
            let qs = g.qubits();
            state.apply_pauli(qs[0], LETTERS[(code % 4) as usize]);
            if qs.len() == 2 {
                state.apply_pauli(qs[1], LETTERS[(code / 4) as usize]);
            }
            next.next();
        }
    }
    state
}

fn apply_readout(counts: &mut [u64], fidelity: &[[f64; 2]], rng: &mut ChaCha8Rng) {
    for (q, f) in fidelity.iter().enumerate() {
        if f[0] == 1.0 && f[1] == 1.0 {
            continue;
        }
        let bit = 1usize << q;
        let before = counts.to_vec();
        for (i, &n) in before.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let flip = 1.0 - f[(i >> q) & 1];
            let moved = binomial(n, flip, rng);
            counts[i] -= moved;
            counts[i ^ bit] += moved;
        }
    }
}

fn binomial(n: u64, p: f64, rng: &mut ChaCha8Rng) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Multinomial draw via sequential conditional binomials.
pub(crate) fn multinomial(n: u64, probs: &[f64], rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() || mass <= 0.0 {
            out[i] = remaining;
            break;
        }
        let k = binomial(remaining, p / mass, rng);
        out[i] = k;
        remaining -= k;
        mass -= p;
    }
    out
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Grouped estimator: value `sum_P c_P <P>` and its standard error under the
/// independent-term binomial approximation.
pub fn expectation_from_counts(g: &MeasurementGroup, r: &ShotResult) -> Result<(Complex64, f64)> {
    let dist = r.to_distribution()?;
    expectation_from_distribution(g, &dist, Some(r.shots))
}

/// Same estimator on a (possibly mitigated) distribution. `shots = None`
/// treats the distribution as exact and reports zero error.
pub fn expectation_from_distribution(
    g: &MeasurementGroup,
    dist: &Distribution,
    shots: Option<u64>,
) -> Result<(Complex64, f64)> {
    let p = dist.probabilities();
    if p.len() != 1 << g.n_qubits() {
        return Err(Error::SizeMismatch {
            expected: 1 << g.n_qubits(),
            found: p.len(),
        });
    }
    let mut value = Complex64::default();
    let mut var = 0.0;
    for (pauli, coeff) in &g.members {
        let support = pauli.support() as usize;
        let mean: f64 = p
            .iter()
            .enumerate()
            .map(|(b, &pb)| if (b & support).count_ones() % 2 == 0 { pb } else { -pb })
            .sum();
        value += coeff * mean;
        if let Some(n) = shots {
            var += coeff.norm_sqr() * (1.0 - mean * mean).max(0.0) / n as f64;
        }
    }
    Ok((value, var.sqrt()))
}
