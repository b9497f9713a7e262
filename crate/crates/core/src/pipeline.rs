//! End-to-end runs: integrals → tapered qubit Hamiltonian → VQE → QSE with
//! readout mitigation and repeats → band structure, plus the run record.
//!
//! Randomness is derived from the root seed as follows:
//! VQE evaluation `e` at k-point `k` uses `derive(seed, [1, k, e])`; repeat
//! `r` uses `derive(derive(seed, [2]), [5, r])`, inside which k-point `k`
//! measures band kind `b` with `derive(rs, [k, b])` and calibrates with
//! `derive(rs, [k, 3])`. ZNE trial `t` at k-point `k` uses
//! `derive(seed, [4, k, t])`.
//!
//! Within repeat `r`, k-point `k` calibrates at cycle `2 (r n_k + k)` and
//! measures at the following cycle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendOptions, BackendRegistry, Estimator, Reference};
use crate::error::{Error, Result};
use crate::fermion::{number_operator, sector_from_occupation, select_symmetries, taper, FermionOperator, SymmetrySet, TaperPolicy};
use crate::hamiltonian::{build_hamiltonian, exact_spectrum, exact_spectrum_with, hf_occupation, load_integrals, IntegralSet};
use crate::mitigation::{measure_calibration, CalibrationMatrix, FoldFactor, RepeatPlan, ZnePoint};
use crate::parallel;
use crate::pauli::{group_qubitwise, MeasurementGroup, PauliSum};
use crate::qse::{
    assemble_bands, build_excitations, measure_subspace, prepare_subspace, solve_blocks, BandKind, BandStructure,
    GevSolution, KPointSolution, ShiftPolicy, SubspaceOperators,
};
use crate::seeds::{self, stage};
use crate::simulator::{NoiseModel, Statevector};
use crate::units::hartree_to_ev;
use crate::vqe::{self, estimate_energy, estimate_energy_zne, exact_energy, smo_optimize, EnergySample, OptimizationTrace};

/// State used as the QSE reference, and matching source of the ground
/// energy in the band differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// Optimized ansatz circuit and its VQE energy.
    #[default]
    Vqe,
    /// Exact ground state and energy from dense diagonalization.
    Oracle,
}

fn default_backend() -> String {
    "exact".into()
}
fn default_vqe_shots() -> u64 {
    vqe::DEFAULT_SHOTS_PER_GROUP
}
fn default_qse_shots() -> u64 {
    crate::qse::DEFAULT_SHOTS_PER_GROUP
}
fn default_calibration_shots() -> u64 {
    10_000
}
fn default_repeats() -> usize {
    40
}
fn default_zne_factors() -> Vec<usize> {
    vec![1, 3]
}
fn default_s_threshold() -> f64 {
    crate::qse::DEFAULT_S_THRESHOLD
}
fn default_sweeps() -> usize {
    vqe::DEFAULT_SWEEPS
}
fn default_initial() -> Vec<f64> {
    vqe::DEFAULT_INITIAL.to_vec()
}
fn default_true() -> bool {
    true
}
fn default_jobs() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One integral file per k-point, in path order.
    pub integrals: Vec<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default)]
    pub noise: Option<PathBuf>,
    #[serde(default = "default_vqe_shots")]
    pub vqe_shots: u64,
    #[serde(default = "default_qse_shots")]
    pub qse_shots: u64,
    #[serde(default = "default_calibration_shots")]
    pub calibration_shots: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_zne_factors")]
    pub zne_factors: Vec<usize>,
    /// ZNE trials per k-point in the `bands` run; 0 skips the study.
    #[serde(default)]
    pub zne_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_s_threshold")]
    pub s_threshold: f64,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_initial")]
    pub initial_params: Vec<f64>,
    /// Optimize on the configured backend instead of the exact estimator.
    #[serde(default)]
    pub vqe_on_backend: bool,
    #[serde(default)]
    pub taper: TaperPolicy,
    #[serde(default)]
    pub reference: ReferenceMode,
    #[serde(default = "default_true")]
    pub rem: bool,
    #[serde(default)]
    pub shift: ShiftPolicy,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for everything except the integral files.
    pub fn new(integrals: Vec<PathBuf>) -> Self {
        let mut cfg: RunConfig = serde_json::from_value(serde_json::json!({ "integrals": [] })).expect("defaults parse");
        cfg.integrals = integrals;
        cfg
    }

    /// Parses a config and resolves relative paths against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.integrals.iter_mut().for_each(resolve);
        cfg.noise.iter_mut().for_each(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&text, base)
    }

    /// Checks values that do not depend on the integral files.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vqe_shots == 0 || self.qse_shots == 0 || self.calibration_shots == 0 {
            return fail("shot counts must be positive".into());
        }
        if self.initial_params.len() != vqe::N_PARAMS {
            return fail(format!("initial_params needs {} values", vqe::N_PARAMS));
        }
        if self.sweeps == 0 {
            return fail("sweeps must be at least 1".into());
        }
        if !(self.s_threshold > 0.0) {
            return fail("s_threshold must be positive".into());
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        if let Some(&f) = self.zne_factors.iter().find(|&&f| f % 2 == 0) {
            return fail(format!("zne factor {f} is not odd"));
        }
        if self.backend != "exact" && self.repeats < 2 {
            return fail(format!("{} backend needs at least 2 repeats", self.backend));
        }
        Ok(())
    }

    pub fn load_noise(&self) -> Result<Option<NoiseModel>> {
        match &self.noise {
            None => Ok(None),
            Some(p) if !p.exists() => Err(Error::Config(format!("noise model {} not found", p.display()))),
            Some(p) => NoiseModel::load(p).map(Some),
        }
    }

    pub fn load_integrals(&self) -> Result<Vec<IntegralSet>> {
        if self.integrals.is_empty() {
            return Err(Error::Config("no integral files listed".into()));
        }
        self.integrals
            .iter()
            .map(|p| {
                if !p.exists() {
                    return Err(Error::Config(format!("integrals {} not found", p.display())));
                }
                load_integrals(p)
            })
            .collect()
    }

    pub fn create_backend(&self, registry: &BackendRegistry) -> Result<Box<dyn Backend>> {
        registry.create(&self.backend, &BackendOptions { noise: self.load_noise()? })
    }

    fn fold_factors(&self) -> Result<Vec<FoldFactor>> {
        self.zne_factors.iter().map(|&f| FoldFactor::new(f)).collect()
    }
}

/// Exact reference data for one k-point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleLevels {
    pub ground_energy: f64,
    /// Spectrum with one electron removed, ascending.
    pub removal: Vec<f64>,
    /// Spectrum with one electron added, ascending.
    pub addition: Vec<f64>,
}

/// Everything derived from the integrals of one k-point before any
/// sampling.
#[derive(Clone, Debug)]
pub struct KPointProblem {
    pub index: usize,
    pub ints: IntegralSet,
    pub fermionic: FermionOperator,
    pub qubit: PauliSum,
    pub symmetries: SymmetrySet,
    pub tapered: PauliSum,
    pub tapered_number: PauliSum,
    pub groups: Vec<MeasurementGroup>,
    pub oracle: OracleLevels,
    pub oracle_state: Vec<Complex64>,
}

impl KPointProblem {
    pub fn label(&self) -> &str {
        &self.ints.kpoint.label
    }
}

pub fn prepare_kpoint(index: usize, ints: IntegralSet, policy: TaperPolicy) -> Result<KPointProblem> {
    let n = ints.n_orbitals;
    let n_el = ints.n_electrons;
    let fermionic = build_hamiltonian(&ints);
    let qubit = crate::hamiltonian::qubit_hamiltonian(&ints)?;
    let occ = hf_occupation(n, n_el)?;
    let sym = select_symmetries(&qubit, policy, n)?;
    let sector = sector_from_occupation(&sym, &occ)?;
    let symmetries = sym.with_sector(sector)?;
    let tapered = taper(&qubit, &symmetries)?;
    let tapered_number = taper(&number_operator(2 * n), &symmetries)?;
    let ground = exact_spectrum_with(&tapered, &tapered_number, Some(n_el))?;
    let oracle_state = ground
        .ground_state()
        .ok_or_else(|| Error::Config(format!("no {n_el}-electron state in the HF sector")))?;
    let sector_levels = |m: Option<usize>| -> Result<Vec<f64>> {
        match m {
            Some(m) if m <= 2 * n => Ok(exact_spectrum(&qubit, Some(m))?.eigenvalues),
            _ => Ok(Vec::new()),
        }
    };
    let oracle = OracleLevels {
        ground_energy: ground.eigenvalues[0],
        removal: sector_levels(n_el.checked_sub(1))?,
        addition: sector_levels(Some(n_el + 1))?,
    };
    Ok(KPointProblem {
        index,
        groups: group_qubitwise(&tapered),
        ints,
        fermionic,
        qubit,
        symmetries,
        tapered,
        tapered_number,
        oracle,
        oracle_state,
    })
}

pub fn prepare_all(ints: &[IntegralSet], policy: TaperPolicy, jobs: usize) -> Result<Vec<KPointProblem>> {
    parallel::map_indexed(ints.len(), jobs, |k| prepare_kpoint(k, ints[k].clone(), policy))?
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqeOutcome {
    pub k_label: String,
    pub params: Vec<f64>,
    /// Final estimate from the optimizer's estimator.
    pub energy: f64,
    pub stderr: f64,
    /// Noise-free energy at the final parameters.
    pub exact_energy: f64,
    pub oracle_energy: f64,
    /// `exact_energy - oracle_energy` in eV.
    pub error_ev: f64,
    pub trace: OptimizationTrace,
}

pub fn run_vqe(p: &KPointProblem, cfg: &RunConfig, backend: &dyn Backend) -> Result<VqeOutcome> {
    if p.tapered.n_qubits() != vqe::ANSATZ_QUBITS {
        return Err(Error::Config(format!(
            "ansatz acts on {} qubits but the tapered Hamiltonian has {}",
            vqe::ANSATZ_QUBITS,
            p.tapered.n_qubits()
        )));
    }
    let est = Estimator::new(backend, cfg.vqe_shots);
    let (params, trace) = smo_optimize(&cfg.initial_params, cfg.sweeps, |theta, eval| {
        if cfg.vqe_on_backend {
            let seed = seeds::derive(cfg.seed, &[stage::VQE, p.index as u64, eval]);
            estimate_energy(&p.groups, theta, &est, seed, 0)
        } else {
            Ok(EnergySample::exact(exact_energy(&p.tapered, theta)?))
        }
    })?;
    let last = trace.final_entry().clone();
    let exact = exact_energy(&p.tapered, &params)?;
    Ok(VqeOutcome {
        k_label: p.label().to_string(),
        params,
        energy: last.energy,
        stderr: last.stderr,
        exact_energy: exact,
        oracle_energy: p.oracle.ground_energy,
        error_ev: hartree_to_ev(exact - p.oracle.ground_energy),
        trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub k_label: String,
    pub repeat: usize,
    pub cycle: u64,
    pub shots_per_basis_state: u64,
    pub matrix: Vec<Vec<f64>>,
}

/// Prepared excitation operators of one k-point.
#[derive(Clone, Debug)]
pub struct QseSetup {
    pub valence: Option<SubspaceOperators>,
    pub conduction: Option<SubspaceOperators>,
    pub reference: Reference,
    pub ground_energy: f64,
}

fn optional_excitations(p: &KPointProblem, kind: BandKind) -> Result<Option<SubspaceOperators>> {
    match build_excitations(&p.ints, kind) {
        Ok(exc) => Ok(Some(prepare_subspace(&exc, &p.fermionic, &p.symmetries)?)),
        Err(Error::NoExcitations(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn prepare_qse(p: &KPointProblem, mode: ReferenceMode, vqe: Option<&VqeOutcome>) -> Result<QseSetup> {
    let (reference, ground_energy) = match mode {
        ReferenceMode::Oracle => (
            Reference::from_state(Statevector::from_amplitudes(p.oracle_state.clone())?),
            p.oracle.ground_energy,
        ),
        ReferenceMode::Vqe => {
            let v = vqe.ok_or_else(|| Error::Config("VQE reference requested without a VQE result".into()))?;
            (Reference::from_circuit(vqe::build_ansatz(&v.params)?), v.energy)
        }
    };
    Ok(QseSetup {
        valence: optional_excitations(p, BandKind::Valence)?,
        conduction: optional_excitations(p, BandKind::Conduction)?,
        reference,
        ground_energy,
    })
}

/// One QSE evaluation of every k-point, calibrating first when a
/// calibration is requested.
struct RepeatOutput {
    bands: BandStructure,
    solutions: Vec<KPointSolution>,
    calibrations: Vec<CalibrationRecord>,
    shots: u64,
}

fn qse_repeat(
    problems: &[KPointProblem],
    setups: &[QseSetup],
    cfg: &RunConfig,
    backend: &dyn Backend,
    calibrate: bool,
    repeat: usize,
    seed: u64,
    first_cycle: u64,
) -> Result<RepeatOutput> {
    let mut solutions = Vec::with_capacity(problems.len());
    let mut calibrations = Vec::new();
    let mut shots = 0;
    for (p, setup) in problems.iter().zip(setups) {
        let k = p.index as u64;
        let cal_cycle = first_cycle + 2 * k;
        let cal = if calibrate {
            let n = p.tapered.n_qubits();
            let c = measure_calibration(backend, n, cfg.calibration_shots, seeds::derive(seed, &[k, stage::CALIBRATION]), cal_cycle)?;
            shots += cfg.calibration_shots << n;
            calibrations.push(CalibrationRecord {
                k_label: p.label().to_string(),
                repeat,
                cycle: cal_cycle,
                shots_per_basis_state: c.shots_per_basis_state,
                matrix: c.rows(),
            });
            Some(c)
        } else {
            None
        };
        let est = Estimator::new(backend, cfg.qse_shots).with_calibration(cal.as_ref());
        let mut solve = |ops: &Option<SubspaceOperators>, b: u64| -> Result<Option<GevSolution>> {
            let Some(ops) = ops else { return Ok(None) };
            let sub = measure_subspace(ops, &setup.reference, &est, seeds::derive(seed, &[k, b]), cal_cycle + 1)?;
            shots += sub.shots;
            solve_blocks(ops, &sub, cfg.s_threshold).map(Some)
        };
        let valence = solve(&setup.valence, 0)?;
        let conduction = solve(&setup.conduction, 1)?;
        solutions.push(KPointSolution {
            kpoint: p.ints.kpoint.clone(),
            ground_energy: setup.ground_energy,
            valence,
            conduction,
        });
    }
    Ok(RepeatOutput {
        bands: assemble_bands(&solutions, cfg.shift)?,
        solutions,
        calibrations,
        shots,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QseOutcome {
    /// Repeat mean with standard error of the mean.
    pub bands: BandStructure,
    /// Per repeat, energies in [`BandStructure::levels`] order (eV).
    pub samples: Vec<Vec<f64>>,
    pub calibrations: Vec<CalibrationRecord>,
    pub repeats: usize,
    pub shots_per_repeat: u64,
    /// Ascending GEV eigenvalues (Hartree) of the first repeat.
    pub first_repeat: Vec<KPointGev>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPointGev {
    pub k_label: String,
    pub valence: Option<GevSolution>,
    pub conduction: Option<GevSolution>,
}

/// QSE over all k-points, repeated on sampling backends. The exact backend
/// runs once and reports zero uncertainty.
pub fn run_qse(problems: &[KPointProblem], setups: &[QseSetup], cfg: &RunConfig, backend: &dyn Backend) -> Result<QseOutcome> {
    let exact = backend.is_exact();
    let calibrate = cfg.rem && !exact;
    let n_k = problems.len() as u64;
    let plan = RepeatPlan {
        repeats: if exact { 1 } else { cfg.repeats },
        root_seed: seeds::derive(cfg.seed, &[stage::QSE]),
        first_cycle: 0,
        cycles_per_repeat: 2 * n_k,
        jobs: cfg.jobs,
    };
    if !exact && plan.repeats < 2 {
        return Err(Error::Config("sampling backends need at least 2 repeats".into()));
    }
    let results = parallel::map_indexed(plan.repeats, plan.jobs, |r| {
        let ctx = plan.context(r);
        qse_repeat(problems, setups, cfg, backend, calibrate, r, ctx.seed, ctx.cycle)
    })?;
    let mut outputs = Vec::with_capacity(plan.repeats);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) => {
                return Err(Error::RepeatFailed {
                    index,
                    completed: outputs.iter().map(|o: &RepeatOutput| o.bands.energies()).collect(),
                    source: Box::new(e),
                })
            }
        }
    }
    let runs: Vec<BandStructure> = outputs.iter().map(|o| o.bands.clone()).collect();
    let mut bands = BandStructure::average(&runs)?;
    let perm = bands.sort_levels();
    Ok(QseOutcome {
        bands,
        samples: runs
            .iter()
            .map(|r| {
                let e = r.energies();
                perm.iter().map(|&i| e[i]).collect()
            })
            .collect(),
        calibrations: outputs.iter().flat_map(|o| o.calibrations.clone()).collect(),
        repeats: plan.repeats,
        shots_per_repeat: outputs[0].shots,
        first_repeat: outputs[0]
            .solutions
            .iter()
            .map(|s| KPointGev {
                k_label: s.kpoint.label.clone(),
                valence: s.valence.clone(),
                conduction: s.conduction.clone(),
            })
            .collect(),
    })
}

/// Band structure from the lowest dense N−1 / N+1 levels, one per QSE
/// operator, referenced to the exact ground energy.
pub fn oracle_bands(problems: &[KPointProblem], setups: &[QseSetup], shift: ShiftPolicy) -> Result<BandStructure> {
    let per_k: Vec<KPointSolution> = problems
        .iter()
        .zip(setups)
        .map(|(p, s)| {
            let take = |levels: &[f64], ops: &Option<SubspaceOperators>| {
                ops.as_ref().map(|o| GevSolution {
                    eigenvalues: levels.iter().take(o.dim).copied().collect(),
                    kept_dimension: o.dim.min(levels.len()),
                    discarded: Vec::new(),
                    block_sizes: Vec::new(),
                })
            };
            KPointSolution {
                kpoint: p.ints.kpoint.clone(),
                ground_energy: p.oracle.ground_energy,
                valence: take(&p.oracle.removal, &s.valence),
                conduction: take(&p.oracle.addition, &s.conduction),
            }
        })
        .collect();
    assemble_bands(&per_k, shift)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZneTrial {
    pub k_label: String,
    pub trial: usize,
    pub points: Vec<ZnePoint>,
    pub extrapolated: f64,
    pub stderr: f64,
    pub exact: f64,
}

impl ZneTrial {
    pub fn improved(&self) -> bool {
        let raw = self.points.iter().find(|p| p.lambda == 1.0).map_or(f64::NAN, |p| p.value);
        (self.extrapolated - self.exact).abs() < (raw - self.exact).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZneStudy {
    pub factors: Vec<usize>,
    pub shots_per_group: u64,
    pub trials: Vec<ZneTrial>,
    pub improved: usize,
}

impl ZneStudy {
    /// `k_label,trial,lambda_<f>...,extrapolated,stderr,exact`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k_label,trial");
        for f in &self.factors {
            write!(out, ",lambda_{f}").unwrap();
        }
        out.push_str(",extrapolated,stderr,exact\n");
        for t in &self.trials {
            write!(out, "{},{}", t.k_label, t.trial).unwrap();
            for p in &t.points {
                write!(out, ",{}", p.value).unwrap();
            }
            writeln!(out, ",{},{},{}", t.extrapolated, t.stderr, t.exact).unwrap();
        }
        out
    }
}

/// Repeated ZNE estimates of the VQE energy at the optimized parameters;
/// `exact` is the noise-free energy of the same circuit.
pub fn run_zne_study(
    problems: &[KPointProblem],
    vqe: &[VqeOutcome],
    cfg: &RunConfig,
    backend: &dyn Backend,
    trials: usize,
) -> Result<ZneStudy> {
    let factors = cfg.fold_factors()?;
    let est = Estimator::new(backend, cfg.vqe_shots);
    let n = problems.len() * trials;
    let results = parallel::map_indexed(n, cfg.jobs, |i| {
        let (k, t) = (i / trials, i % trials);
        let p = &problems[k];
        let seed = seeds::derive(cfg.seed, &[stage::ZNE, k as u64, t as u64]);
        let (e, points) = estimate_energy_zne(&p.groups, &vqe[k].params, &est, &factors, seed, 0)?;
        Ok(ZneTrial {
            k_label: p.label().to_string(),
            trial: t,
            points,
            extrapolated: e.energy,
            stderr: e.stderr,
            exact: vqe[k].exact_energy,
        })
    })?;
    let trials: Vec<ZneTrial> = results.into_iter().collect::<Result<_>>()?;
    Ok(ZneStudy {
        factors: cfg.zne_factors.clone(),
        shots_per_group: cfg.vqe_shots,
        improved: trials.iter().filter(|t| t.improved()).count(),
        trials,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaperRecord {
    pub k_label: String,
    pub n_qubits: usize,
    pub n_tapered_qubits: usize,
    pub generators: Vec<String>,
    pub pivot_qubits: Vec<usize>,
    pub sector: Vec<i8>,
    pub n_terms: usize,
    pub n_groups: usize,
    pub tapered_hamiltonian: String,
}

impl TaperRecord {
    pub fn new(p: &KPointProblem) -> Self {
        TaperRecord {
            k_label: p.label().to_string(),
            n_qubits: p.qubit.n_qubits(),
            n_tapered_qubits: p.tapered.n_qubits(),
            generators: p.symmetries.generators().iter().map(ToString::to_string).collect(),
            pivot_qubits: p.symmetries.single_qubit_x().to_vec(),
            sector: p.symmetries.sector().to_vec(),
            n_terms: p.tapered.len(),
            n_groups: p.groups.len(),
            tapered_hamiltonian: p.tapered.to_text(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPointRecord {
    pub taper: TaperRecord,
    pub oracle: OracleLevels,
    pub vqe: VqeOutcome,
    pub qse_groups: QseGroupCounts,
}

/// Measurement groups per subspace matrix element, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QseGroupCounts {
    pub valence_h: Vec<usize>,
    pub valence_s: Vec<usize>,
    pub conduction_h: Vec<usize>,
    pub conduction_s: Vec<usize>,
}

impl QseGroupCounts {
    fn new(s: &QseSetup) -> Self {
        let counts = |o: &Option<SubspaceOperators>, h: bool| {
            o.as_ref().map_or_else(Vec::new, |o| {
                let elems = if h { &o.h } else { &o.s };
                elems.iter().map(|e| e.group_count()).collect()
            })
        };
        QseGroupCounts {
            valence_h: counts(&s.valence, true),
            valence_s: counts(&s.valence, false),
            conduction_h: counts(&s.conduction, true),
            conduction_s: counts(&s.conduction, false),
        }
    }
}

/// Complete provenance of one run. Contains no timestamps, so identical
/// inputs give identical records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub backend: String,
    pub noise: Option<NoiseModel>,
    pub seed_derivation: String,
    pub kpoints: Vec<KPointRecord>,
    pub qse: QseOutcome,
    pub oracle_bands: BandStructure,
    pub zne: Option<ZneStudy>,
}

const SEED_DOC: &str = "vqe: derive(seed,[1,k,eval]); repeat r: rs=derive(derive(seed,[2]),[5,r]); \
qse: derive(rs,[k,kind]); calibration: derive(rs,[k,3]); zne: derive(seed,[4,k,trial]); \
group g of an element: derive(element_seed,[g])";

/// Runs VQE for every k-point, in parallel up to `cfg.jobs`.
pub fn run_vqe_all(problems: &[KPointProblem], cfg: &RunConfig, backend: &dyn Backend) -> Result<Vec<VqeOutcome>> {
    parallel::map_indexed(problems.len(), cfg.jobs, |k| run_vqe(&problems[k], cfg, backend))?
        .into_iter()
        .collect()
}

/// Full pipeline on already loaded integrals. `vqe` replaces the
/// optimization with saved results when given.
pub fn run_with_integrals(
    cfg: &RunConfig,
    ints: Vec<IntegralSet>,
    backend: &dyn Backend,
    vqe: Option<Vec<VqeOutcome>>,
) -> Result<RunRecord> {
    cfg.validate()?;
    let problems = prepare_all(&ints, cfg.taper, cfg.jobs)?;
    let vqe = match vqe {
        Some(v) => {
            if v.len() != problems.len() {
                return Err(Error::Config(format!("{} saved VQE results for {} k-points", v.len(), problems.len())));
            }
            v
        }
        None => run_vqe_all(&problems, cfg, backend)?,
    };
    let setups: Vec<QseSetup> = problems
        .iter()
        .zip(&vqe)
        .map(|(p, v)| prepare_qse(p, cfg.reference, Some(v)))
        .collect::<Result<_>>()?;
    let qse = run_qse(&problems, &setups, cfg, backend)?;
    let oracle_bands = oracle_bands(&problems, &setups, cfg.shift)?;
    let zne = if cfg.zne_trials > 0 {
        Some(run_zne_study(&problems, &vqe, cfg, backend, cfg.zne_trials)?)
    } else {
        None
    };
    let kpoints = problems
        .iter()
        .zip(vqe)
        .zip(&setups)
        .map(|((p, v), s)| KPointRecord {
            taper: TaperRecord::new(p),
            oracle: p.oracle.clone(),
            vqe: v,
            qse_groups: QseGroupCounts::new(s),
        })
        .collect();
    Ok(RunRecord {
        config: cfg.clone(),
        backend: backend.name().to_string(),
        noise: backend.noise().cloned(),
        seed_derivation: SEED_DOC.to_string(),
        kpoints,
        qse,
        oracle_bands,
        zne,
    })
}

/// Loads the configured integrals and backend, runs everything and writes
/// the artifacts into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig, vqe: Option<Vec<VqeOutcome>>) -> Result<RunRecord> {
    cfg.validate()?;
    let backend = cfg.create_backend(&BackendRegistry::default())?;
    let ints = cfg.load_integrals()?;
    let record = run_with_integrals(cfg, ints, backend.as_ref(), vqe)?;
    write_artifacts(&record, &cfg.output_dir)?;
    Ok(record)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

/// Writes `bands.csv`, `oracle_bands.csv`, `vqe_trace_k<i>.csv`,
/// `histograms/k<i>_<kind>_<band>.csv`, optional `zne.csv` and
/// `run_record.json`.
pub fn write_artifacts(record: &RunRecord, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write(&dir.join("bands.csv"), &record.qse.bands.to_csv())?;
    write(&dir.join("oracle_bands.csv"), &record.oracle_bands.to_csv())?;
    for (k, kp) in record.kpoints.iter().enumerate() {
        write(&dir.join(format!("vqe_trace_k{k}.csv")), &kp.vqe.trace.to_csv())?;
    }
    let hist = dir.join("histograms");
    create_dir(&hist)?;
    for (col, (k, kind, band, _)) in record.qse.bands.levels().enumerate() {
        let mut csv = String::from("repeat_index,value_ev\n");
        for (r, s) in record.qse.samples.iter().enumerate() {
            writeln!(csv, "{r},{}", s[col]).unwrap();
        }
        write(&hist.join(format!("k{k}_{kind}_{band}.csv")), &csv)?;
    }
    if let Some(z) = &record.zne {
        write(&dir.join("zne.csv"), &z.to_csv())?;
    }
    write_json(&dir.join("run_record.json"), record)
}

/// Calibration matrices at consecutive cycles on the tapered register size
/// of the first k-point.
pub fn run_calibration(cfg: &RunConfig, backend: &dyn Backend, count: usize) -> Result<Vec<CalibrationRecord>> {
    let ints = cfg.load_integrals()?;
    let p = prepare_kpoint(0, ints.into_iter().next().expect("non-empty"), cfg.taper)?;
    let n = p.tapered.n_qubits();
    (0..count)
        .map(|i| {
            let cycle = 2 * i as u64;
            let seed = seeds::derive(cfg.seed, &[stage::CALIBRATION, i as u64]);
            let c: CalibrationMatrix = measure_calibration(backend, n, cfg.calibration_shots, seed, cycle)?;
            Ok(CalibrationRecord {
                k_label: p.label().to_string(),
                repeat: i,
                cycle,
                shots_per_basis_state: c.shots_per_basis_state,
                matrix: c.rows(),
            })
        })
        .collect()
}
