//! Two-qubit hardware-efficient ansatz, grouped energy estimation and
//! sequential minimal optimization (SMO).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, PI};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::{Estimator, Reference};
use crate::error::{Error, Result};
use crate::mitigation::{fold_circuit, zne_extrapolate, FoldFactor, ZnePoint};
use crate::pauli::{MeasurementGroup, PauliSum};
use crate::seeds;
use crate::simulator::{apply_circuit, expectation, Circuit, Gate, Statevector};

pub const N_PARAMS: usize = 4;
pub const ANSATZ_QUBITS: usize = 2;
pub const DEFAULT_SHOTS_PER_GROUP: u64 = 5000;
pub const DEFAULT_SWEEPS: usize = 3;
const FLAT_TOL: f64 = 1e-12;

/// Starting point used unless the caller supplies one. The all-zero (HF)
/// point is stationary under single-parameter moves for Hamiltonians whose
/// tapered form only couples `|11>` to `|00>`.
pub const DEFAULT_INITIAL: [f64; N_PARAMS] = [FRAC_PI_8; N_PARAMS];

/// `X⊗X`, `Ry(θ1)⊗Ry(θ2)`, `CZ`, `Ry(θ3)⊗Ry(θ4)`. Qubit 0 carries the odd
/// parameters.
pub fn build_ansatz(params: &[f64]) -> Result<Circuit> {
    if params.len() != N_PARAMS {
        return Err(Error::Arity {
            expected: N_PARAMS,
            found: params.len(),
        });
    }
    if let Some(p) = params.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidGate(format!("non-finite rotation angle {p}")));
    }
    Circuit::from_gates(
        ANSATZ_QUBITS,
        vec![
            Gate::X { qubit: 0 },
            Gate::X { qubit: 1 },
            Gate::Ry { qubit: 0, theta: params[0] },
            Gate::Ry { qubit: 1, theta: params[1] },
            Gate::Cz { a: 0, b: 1 },
            Gate::Ry { qubit: 0, theta: params[2] },
            Gate::Ry { qubit: 1, theta: params[3] },
        ],
    )
}

/// Noise-free `<psi(params)|h|psi(params)>`.
pub fn exact_energy(h: &PauliSum, params: &[f64]) -> Result<f64> {
    let psi = apply_circuit(&Statevector::zero(ANSATZ_QUBITS), &build_ansatz(params)?)?;
    Ok(expectation(&psi, h)?.re)
}

/// Energy with its standard error and the shots spent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub energy: f64,
    pub stderr: f64,
    pub shots: u64,
}

impl EnergySample {
    pub fn exact(energy: f64) -> Self {
        EnergySample { energy, stderr: 0.0, shots: 0 }
    }
}

pub fn estimate_energy(
    groups: &[MeasurementGroup],
    params: &[f64],
    estimator: &Estimator<'_>,
    seed: u64,
    cycle: u64,
) -> Result<EnergySample> {
    estimate_circuit_energy(groups, &build_ansatz(params)?, estimator, seed, cycle)
}

pub fn estimate_circuit_energy(
    groups: &[MeasurementGroup],
    circuit: &Circuit,
    estimator: &Estimator<'_>,
    seed: u64,
    cycle: u64,
) -> Result<EnergySample> {
    if estimator.shots_per_group == 0 {
        return Err(Error::Config("shots_per_group must be positive".into()));
    }
    let reference = Reference::from_circuit(circuit.clone());
    let e = estimator.estimate_sum(&reference, groups, seed, cycle)?;
    Ok(EnergySample {
        energy: e.value.re,
        stderr: e.stderr,
        shots: e.shots,
    })
}

/// Zero-noise-extrapolated energy. Each fold factor gets its own seed
/// stream; the returned points are the raw per-factor estimates.
pub fn estimate_energy_zne(
    groups: &[MeasurementGroup],
    params: &[f64],
    estimator: &Estimator<'_>,
    factors: &[FoldFactor],
    seed: u64,
    cycle: u64,
) -> Result<(EnergySample, Vec<ZnePoint>)> {
    let base = build_ansatz(params)?;
    let mut points = Vec::with_capacity(factors.len());
    let mut shots = 0;
    for (i, &f) in factors.iter().enumerate() {
        let folded = fold_circuit(&base, f);
        let e = estimate_circuit_energy(groups, &folded, estimator, seeds::derive(seed, &[seeds::stage::ZNE, i as u64]), cycle)?;
        shots += e.shots;
        points.push(ZnePoint {
            lambda: f.value() as f64,
            value: e.energy,
            stderr: e.stderr,
        });
    }
    let (energy, stderr) = zne_extrapolate(&points)?;
    Ok((EnergySample { energy, stderr, shots }, points))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub params: Vec<f64>,
    pub energy: f64,
    pub stderr: f64,
    pub shots: u64,
}

/// `initial` is the starting evaluation; `iterations` holds one entry per
/// parameter update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub initial: TraceEntry,
    pub iterations: Vec<TraceEntry>,
}

impl OptimizationTrace {
    pub fn final_entry(&self) -> &TraceEntry {
        self.iterations.last().unwrap_or(&self.initial)
    }

    pub fn total_shots(&self) -> u64 {
        self.initial.shots + self.iterations.iter().map(|e| e.shots).sum::<u64>()
    }

    /// `iteration,theta1..thetaN,energy_hartree,stderr_hartree,shots`, with
    /// row 0 the starting point.
    pub fn to_csv(&self) -> String {
        let n = self.initial.params.len();
        let mut out = String::from("iteration");
        for i in 1..=n {
            write!(out, ",theta{i}").unwrap();
        }
        out.push_str(",energy_hartree,stderr_hartree,shots\n");
        for (i, e) in std::iter::once(&self.initial).chain(&self.iterations).enumerate() {
            write!(out, "{i}").unwrap();
            for p in &e.params {
                write!(out, ",{p}").unwrap();
            }
            writeln!(out, ",{},{},{}", e.energy, e.stderr, e.shots).unwrap();
        }
        out
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Fits `E(θ_d + δ) = A + B cos δ + C sin δ` from the samples at `δ = 0, ±π/2`
/// and returns the minimizing angle, or `None` for a flat landscape.
pub fn sinusoid_minimizer(theta: f64, e0: f64, e_plus: f64, e_minus: f64) -> Option<f64> {
    let a = 0.5 * (e_plus + e_minus);
    let c = 0.5 * (e_plus - e_minus);
    let b = e0 - a;
    if b.hypot(c) < FLAT_TOL {
        return None;
    }
    Some(wrap_angle(theta + c.atan2(b) + PI))
}

/// Round-robin SMO. `energy(params, evaluation_index)` is called with a
/// fresh index every time so sampled estimators can draw fresh shots.
pub fn smo_optimize<F>(initial: &[f64], sweeps: usize, mut energy: F) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: FnMut(&[f64], u64) -> Result<EnergySample>,
{
    if sweeps == 0 {
        return Err(Error::Config("sweeps must be at least 1".into()));
    }
    let mut counter = 0u64;
    let mut eval = |p: &[f64]| {
        let r = energy(p, counter);
        counter += 1;
        r
    };
    let mut params = initial.to_vec();
    let mut current = eval(&params)?;
    let initial = TraceEntry {
        params: params.clone(),
        energy: current.energy,
        stderr: current.stderr,
        shots: current.shots,
    };
    let mut iterations = Vec::with_capacity(sweeps * params.len());
    for _ in 0..sweeps {
        for d in 0..params.len() {
            let mut probe = params.clone();
            probe[d] = params[d] + FRAC_PI_2;
            let plus = eval(&probe)?;
            probe[d] = params[d] - FRAC_PI_2;
            let minus = eval(&probe)?;
            let mut shots = plus.shots + minus.shots;
            if let Some(theta) = sinusoid_minimizer(params[d], current.energy, plus.energy, minus.energy) {
                params[d] = theta;
                current = eval(&params)?;
                shots += current.shots;
            }
            iterations.push(TraceEntry {
                params: params.clone(),
                energy: current.energy,
                stderr: current.stderr,
                shots,
            });
        }
    }
    Ok((params, OptimizationTrace { initial, iterations }))
}
