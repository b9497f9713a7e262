//! Readout-error mitigation, zero-noise extrapolation and repeat averaging.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, Measurement, Reference};
use crate::error::{Error, Result};
use crate::parallel;
use crate::pauli::Pauli;
use crate::seeds;
use crate::simulator::{Circuit, ShotResult};

/// Normalized probability vector over `2^n` computational-basis outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    p: Vec<f64>,
}

impl Distribution {
    /// Rejects negative entries and sums off by more than 1e-9, then
    /// renormalizes exactly.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if !p.len().is_power_of_two() {
            return Err(Error::Schema(format!("distribution of length {}", p.len())));
        }
        if p.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Schema("distribution has negative or NaN entries".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Schema(format!("distribution sums to {total}")));
        }
        Ok(Distribution {
            p: p.into_iter().map(|x| x / total).collect(),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn n_qubits(&self) -> usize {
        self.p.len().trailing_zeros() as usize
    }

    pub fn total_variation(&self, other: &Distribution) -> f64 {
        0.5 * self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Column-stochastic readout response, `m[(x, y)] = P(read x | prepared y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationMatrix {
    pub m: DMatrix<f64>,
    pub shots_per_basis_state: u64,
    pub cycle: u64,
}

impl CalibrationMatrix {
    pub fn identity(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        CalibrationMatrix {
            m: DMatrix::identity(dim, dim),
            shots_per_basis_state: 0,
            cycle: 0,
        }
    }

    pub fn from_columns(columns: &[Vec<f64>], shots: u64, cycle: u64) -> Result<Self> {
        let dim = columns.len();
        if !dim.is_power_of_two() || columns.iter().any(|c| c.len() != dim) {
            return Err(Error::Schema("calibration matrix must be 2^n square".into()));
        }
        let m = DMatrix::from_fn(dim, dim, |r, c| columns[c][r]);
        for c in 0..dim {
            let s: f64 = m.column(c).sum();
            if (s - 1.0).abs() > 1e-12 || m.column(c).iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Schema(format!("calibration column {c} is not stochastic")));
            }
        }
        Ok(CalibrationMatrix {
            m,
            shots_per_basis_state: shots,
            cycle,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.m.nrows().trailing_zeros() as usize
    }

    /// Row-major copy for serialization.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.m.diagonal().iter().copied().collect()
    }
}

/// Prepares every computational basis state with X gates and records the
/// outcome histogram of each as one column.
pub fn measure_calibration(
    backend: &dyn Backend,
    n_qubits: usize,
    shots: u64,
    seed: u64,
    cycle: u64,
) -> Result<CalibrationMatrix> {
    let dim = 1usize << n_qubits;
    let basis = vec![Pauli::Z; n_qubits];
    let mut columns = Vec::with_capacity(dim);
    for y in 0..dim {
        let prep = Reference::from_circuit(Circuit::basis_preparation(n_qubits, y));
        let col = match backend.measure(&prep, &basis, shots, seeds::derive(seed, &[y as u64]), cycle)? {
            Measurement::Exact(d) => d.probabilities().to_vec(),
            Measurement::Shots(r) => counts_column(&r)?,
        };
        columns.push(col);
    }
    CalibrationMatrix::from_columns(&columns, shots, cycle)
}

fn counts_column(r: &ShotResult) -> Result<Vec<f64>> {
    let n = r.shots as f64;
    Ok(r.dense_counts()?.into_iter().map(|c| c as f64 / n).collect())
}

/// Solves `M p = p_noisy` by least squares, clips negatives and renormalizes.
pub fn apply_rem(noisy: &Distribution, cal: &CalibrationMatrix) -> Result<Distribution> {
    let dim = cal.m.nrows();
    if noisy.probabilities().len() != dim {
        return Err(Error::SizeMismatch {
            expected: dim,
            found: noisy.probabilities().len(),
        });
    }
    let svd = cal.m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::SingularCalibration {
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let b = DVector::from_column_slice(noisy.probabilities());
    let x = svd
        .solve(&b, 1e-14 * smax)
        .map_err(|e| Error::Schema(e.to_string()))?;
    let clipped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SingularCalibration { condition: smax / smin });
    }
    Distribution::new(clipped.into_iter().map(|v| v / total).collect())
}

/// Odd noise-amplification factor λ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FoldFactor(usize);

impl FoldFactor {
    pub fn new(lambda: usize) -> Result<Self> {
        if lambda % 2 == 1 {
            Ok(FoldFactor(lambda))
        } else {
            Err(Error::EvenFold(lambda))
        }
    }

    pub fn value(self) -> usize {
        self.0
    }
}

/// Replaces every gate `A` by `A (A† A)^((λ-1)/2)`.
pub fn fold_circuit(c: &Circuit, f: FoldFactor) -> Circuit {
    let pairs = (f.value() - 1) / 2;
    let mut gates = Vec::with_capacity(c.len() * f.value());
    for g in c.gates() {
        gates.push(*g);
        for _ in 0..pairs {
            gates.push(g.inverse());
            gates.push(*g);
        }
    }
    Circuit::from_gates(c.n_qubits(), gates).expect("folding keeps gates valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZnePoint {
    pub lambda: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Ordinary least-squares line in λ evaluated at λ = 0, with the error
/// propagated from the point errors.
pub fn zne_extrapolate(points: &[ZnePoint]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Extrapolation(format!("{} point(s)", points.len())));
    }
    for (i, a) in points.iter().enumerate() {
        if points[i + 1..].iter().any(|b| b.lambda == a.lambda) {
            return Err(Error::Extrapolation(format!("duplicate λ = {}", a.lambda)));
        }
    }
    let n = points.len() as f64;
    let mean_l = points.iter().map(|p| p.lambda).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.lambda - mean_l).powi(2)).sum();
    // intercept = sum_i w_i y_i
    let weights: Vec<f64> = points
        .iter()
        .map(|p| 1.0 / n - mean_l * (p.lambda - mean_l) / sxx)
        .collect();
    let value = weights.iter().zip(points).map(|(w, p)| w * p.value).sum();
    let var: f64 = weights.iter().zip(points).map(|(w, p)| (w * p.stderr).powi(2)).sum();
    Ok((value, var.sqrt()))
}

/// Seed and measurement cycle handed to one repeat.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepeatContext {
    pub index: usize,
    pub seed: u64,
    pub cycle: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepeatPlan {
    pub repeats: usize,
    pub root_seed: u64,
    pub first_cycle: u64,
    /// Cycles consumed by one repeat (calibration plus computation).
    pub cycles_per_repeat: u64,
    pub jobs: usize,
}

impl RepeatPlan {
    pub fn new(repeats: usize, root_seed: u64) -> Self {
        RepeatPlan {
            repeats,
            root_seed,
            first_cycle: 0,
            cycles_per_repeat: 1,
            jobs: 1,
        }
    }

    pub fn context(&self, index: usize) -> RepeatContext {
        RepeatContext {
            index,
            seed: seeds::derive(self.root_seed, &[seeds::stage::REPEAT, index as u64]),
            cycle: self.first_cycle + index as u64 * self.cycles_per_repeat,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatStats {
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl RepeatStats {
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Self {
        let n = samples.len();
        let width = samples.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; width];
        let mut sem = vec![0.0; width];
        for k in 0..width {
            let m = samples.iter().map(|s| s[k]).sum::<f64>() / n as f64;
            mean[k] = m;
            if n > 1 {
                let var = samples.iter().map(|s| (s[k] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                sem[k] = (var / n as f64).sqrt();
            }
        }
        RepeatStats { mean, sem, samples }
    }
}

/// Runs `task` once per repeat with a fresh seed and an advancing cycle, and
/// reports per-component mean and standard error of the mean.
///
/// On failure the samples of the repeats before the failing one are returned
/// inside [`Error::RepeatFailed`].
pub fn repeat_average<F>(plan: &RepeatPlan, task: F) -> Result<RepeatStats>
where
    F: Fn(RepeatContext) -> Result<Vec<f64>> + Sync,
{
    if plan.repeats < 2 {
        return Err(Error::Config(format!("need at least 2 repeats, got {}", plan.repeats)));
    }
    let results = parallel::map_indexed(plan.repeats, plan.jobs, |i| task(plan.context(i)))?;
    let mut samples = Vec::with_capacity(plan.repeats);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                if samples.first().is_some_and(|f: &Vec<f64>| f.len() != v.len()) {
                    return Err(Error::Config("repeats returned different widths".into()));
                }
                samples.push(v)
            }
            Err(e) => {
                return Err(Error::RepeatFailed {
                    index,
                    completed: samples,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(RepeatStats::from_samples(samples))
}
