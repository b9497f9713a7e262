//! Measurement backends behind a common trait, registered by name.
//!
//! `exact` returns infinite-shot distributions, `sampled` draws noiseless
//! shots and `noisy` draws shots through a [`NoiseModel`]. The CLI picks one
//! with `--backend NAME` through [`BackendRegistry`].

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mitigation::{apply_rem, CalibrationMatrix, Distribution};
use crate::pauli::{MeasurementGroup, Pauli};
use crate::seeds;
use crate::simulator::{
    apply_circuit, expectation_from_distribution, sample_prepared, Circuit, NoiseModel,
    ShotResult, Statevector,
};

/// State preparation: an initial statevector followed by a circuit.
///
/// Hardware-style references start from `|0...0>`; oracle references start
/// from an exact eigenvector with an empty circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub initial: Statevector,
    pub circuit: Circuit,
}

impl Reference {
    pub fn from_circuit(circuit: Circuit) -> Self {
        Reference {
            initial: Statevector::zero(circuit.n_qubits()),
            circuit,
        }
    }

    pub fn from_state(state: Statevector) -> Self {
        let n = state.n_qubits();
        Reference {
            initial: state,
            circuit: Circuit::new(n),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.circuit.n_qubits()
    }

    pub fn state(&self) -> Result<Statevector> {
        apply_circuit(&self.initial, &self.circuit)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Measurement {
    Exact(Distribution),
    Shots(ShotResult),
}

pub trait Backend: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Measures the prepared state in the per-qubit `basis`.
    fn measure(
        &self,
        reference: &Reference,
        basis: &[Pauli],
        shots: u64,
        seed: u64,
        cycle: u64,
    ) -> Result<Measurement>;

    /// True when results carry no statistical error.
    fn is_exact(&self) -> bool {
        false
    }

    fn noise(&self) -> Option<&NoiseModel> {
        None
    }
}

#[derive(Debug, Default)]
pub struct ExactBackend;

impl Backend for ExactBackend {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn measure(&self, reference: &Reference, basis: &[Pauli], _: u64, _: u64, _: u64) -> Result<Measurement> {
        let rotated = reference.circuit.with_measurement_basis(basis)?;
        let state = apply_circuit(&reference.initial, &rotated)?;
        Ok(Measurement::Exact(Distribution::new(state.probabilities())?))
    }

    fn is_exact(&self) -> bool {
        true
    }
}

#[derive(Debug, Default)]
pub struct SampledBackend;

impl Backend for SampledBackend {
    fn name(&self) -> &'static str {
        "sampled"
    }

    fn measure(&self, reference: &Reference, basis: &[Pauli], shots: u64, seed: u64, cycle: u64) -> Result<Measurement> {
        let r = sample_prepared(
            &reference.initial,
            &reference.circuit,
            basis,
            shots,
            &NoiseModel::noiseless(),
            seed,
            cycle,
        )?;
        Ok(Measurement::Shots(r))
    }
}

#[derive(Debug)]
pub struct NoisyBackend {
    noise: NoiseModel,
}

impl NoisyBackend {
    pub fn new(noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        Ok(NoisyBackend { noise })
    }
}

impl Backend for NoisyBackend {
    fn name(&self) -> &'static str {
        "noisy"
    }

    fn measure(&self, reference: &Reference, basis: &[Pauli], shots: u64, seed: u64, cycle: u64) -> Result<Measurement> {
        let r = sample_prepared(&reference.initial, &reference.circuit, basis, shots, &self.noise, seed, cycle)?;
        Ok(Measurement::Shots(r))
    }

    fn noise(&self) -> Option<&NoiseModel> {
        Some(&self.noise)
    }
}

#[derive(Clone, Debug, Default)]
pub struct BackendOptions {
    pub noise: Option<NoiseModel>,
}

pub type BackendFactory = fn(&BackendOptions) -> Result<Box<dyn Backend>>;

pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        BackendRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: BackendFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, opts: &BackendOptions) -> Result<Box<dyn Backend>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownBackend(name.to_string()))?;
        factory(opts)
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = BackendRegistry::empty();
        r.register("exact", |_| Ok(Box::new(ExactBackend)));
        r.register("sampled", |_| Ok(Box::new(SampledBackend)));
        r.register("noisy", |opts| {
            let noise = opts
                .noise
                .clone()
                .ok_or_else(|| Error::Config("noisy backend needs a noise model".into()))?;
            Ok(Box::new(NoisyBackend::new(noise)?))
        });
        r
    }
}

impl fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

/// Value, standard error and shots spent by one estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub stderr: f64,
    pub shots: u64,
}

/// Grouped expectation-value estimation on a backend, optionally with
/// readout-error mitigation.
#[derive(Clone, Copy, Debug)]
pub struct Estimator<'a> {
    pub backend: &'a dyn Backend,
    pub shots_per_group: u64,
    pub calibration: Option<&'a CalibrationMatrix>,
}

impl<'a> Estimator<'a> {
    pub fn new(backend: &'a dyn Backend, shots_per_group: u64) -> Self {
        Estimator {
            backend,
            shots_per_group,
            calibration: None,
        }
    }

    pub fn with_calibration(mut self, cal: Option<&'a CalibrationMatrix>) -> Self {
        self.calibration = cal;
        self
    }

    pub fn estimate_group(&self, reference: &Reference, g: &MeasurementGroup, seed: u64, cycle: u64) -> Result<Estimate> {
        if g.basis.iter().all(|&b| b == Pauli::I) {
            // identity-only group: known exactly, nothing to measure
            let value = g.members.iter().map(|(_, c)| c).sum();
            return Ok(Estimate { value, stderr: 0.0, shots: 0 });
        }
        match self.backend.measure(reference, &g.basis, self.shots_per_group, seed, cycle)? {
            Measurement::Exact(dist) => {
                let (value, stderr) = expectation_from_distribution(g, &dist, None)?;
                Ok(Estimate { value, stderr, shots: 0 })
            }
            Measurement::Shots(r) => {
                let mut dist = r.to_distribution()?;
                if let Some(cal) = self.calibration {
                    dist = apply_rem(&dist, cal)?;
                }
                let (value, stderr) = expectation_from_distribution(g, &dist, Some(r.shots))?;
                Ok(Estimate { value, stderr, shots: r.shots })
            }
        }
    }

    /// Sum over groups; group `i` uses `derive(seed, [i])` and the errors add
    /// in quadrature.
    pub fn estimate_sum(&self, reference: &Reference, groups: &[MeasurementGroup], seed: u64, cycle: u64) -> Result<Estimate> {
        let mut total = Estimate {
            value: Complex64::default(),
            stderr: 0.0,
            shots: 0,
        };
        let mut var = 0.0;
        for (i, g) in groups.iter().enumerate() {
            let e = self.estimate_group(reference, g, seeds::derive(seed, &[i as u64]), cycle)?;
            total.value += e.value;
            var += e.stderr * e.stderr;
            total.shots += e.shots;
        }
        total.stderr = var.sqrt();
        Ok(total)
    }
}
