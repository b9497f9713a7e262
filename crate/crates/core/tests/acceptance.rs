//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::time::{Duration, Instant};

use bandqse::backend::{Backend, ExactBackend, Measurement, NoisyBackend, Reference, SampledBackend};
use bandqse::fermion::{taper, TaperPolicy};
use bandqse::hamiltonian::{bundled_si, exact_spectrum, sector_eigenvalues, IntegralSet};
use bandqse::mitigation::{apply_rem, measure_calibration};
use bandqse::pipeline::{
    prepare_kpoint, run_pipeline, run_vqe, run_with_integrals, run_zne_study, KPointProblem, RunConfig, VqeOutcome,
};
use bandqse::qse::ShiftPolicy;
use bandqse::simulator::{apply_circuit, Drift, NoiseModel, Statevector};
use bandqse::units::{hartree_to_ev, CHEMICAL_ACCURACY_EV};
use bandqse::vqe::{build_ansatz, DEFAULT_INITIAL};
use bandqse::{seeds, Pauli};
use common::{max_miss, non_interacting, parity_constrained, qse_vs_oracle};

struct Verdict {
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Verdict {
            pass,
            summary: summary.into(),
            notes: Vec::new(),
        }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

fn criterion(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = v.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" / {:.0} s", l.as_secs_f64()));
    println!(
        "{} {name}: {} [{:.2} s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        v.summary,
        elapsed.as_secs_f64()
    );
    if !in_time {
        println!("      runtime bound exceeded");
    }
    for n in &v.notes {
        println!("      {n}");
    }
    pass
}

fn problems() -> Vec<KPointProblem> {
    bundled_si()
        .into_iter()
        .enumerate()
        .map(|(k, ints)| prepare_kpoint(k, ints, TaperPolicy::SpinParity).unwrap())
        .collect()
}

fn gamma() -> IntegralSet {
    bundled_si().into_iter().find(|i| i.kpoint.is_gamma()).unwrap()
}

fn base_config() -> RunConfig {
    RunConfig::new(Vec::new())
}

fn tapering_fidelity() -> Verdict {
    let mut worst_sector: f64 = 0.0;
    let mut worst_union: f64 = 0.0;
    for p in problems() {
        let tapered = exact_spectrum(&p.tapered, None).unwrap().eigenvalues;
        let reference = sector_eigenvalues(&p.qubit, &p.symmetries).unwrap();
        assert_eq!(tapered.len(), reference.len());
        for (a, b) in tapered.iter().zip(&reference) {
            worst_sector = worst_sector.max((a - b).abs());
        }
        let mut union = Vec::new();
        for sector in [[1, 1], [1, -1], [-1, 1], [-1, -1]] {
            let s = p.symmetries.clone().with_sector(sector.to_vec()).unwrap();
            union.extend(exact_spectrum(&taper(&p.qubit, &s).unwrap(), None).unwrap().eigenvalues);
        }
        union.sort_by(f64::total_cmp);
        let full = exact_spectrum(&p.qubit, None).unwrap().eigenvalues;
        assert_eq!(union.len(), 16);
        for (a, b) in union.iter().zip(&full) {
            worst_union = worst_union.max((a - b).abs());
        }
    }
    Verdict::new(
        worst_sector <= 1e-10 && worst_union <= 1e-10,
        format!("HF sector max |Δ| = {worst_sector:.1e} Ha, 16-state union max |Δ| = {worst_union:.1e} Ha (tol 1e-10)"),
    )
}

/// Largest `|E - E_oracle|` in eV over the k-points, exact estimator.
fn exact_vqe_error(ps: &[KPointProblem], initial: &[f64]) -> f64 {
    let mut cfg = base_config();
    cfg.initial_params = initial.to_vec();
    ps.iter()
        .map(|p| run_vqe(p, &cfg, &ExactBackend).unwrap().error_ev.abs())
        .fold(0.0, f64::max)
}

/// Largest `|mean_seeds(E) - E_oracle|` in eV over the k-points, optimizing
/// on 5000-shot noiseless estimates.
fn sampled_vqe_error(ps: &[KPointProblem], initial: &[f64], seeds: u64) -> f64 {
    let mut cfg = base_config();
    cfg.initial_params = initial.to_vec();
    cfg.vqe_on_backend = true;
    cfg.vqe_shots = 5000;
    ps.iter()
        .map(|p| {
            let mean = (0..seeds)
                .map(|s| {
                    cfg.seed = s;
                    run_vqe(p, &cfg, &SampledBackend).unwrap().energy
                })
                .sum::<f64>()
                / seeds as f64;
            hartree_to_ev(mean - p.oracle.ground_energy).abs()
        })
        .fold(0.0, f64::max)
}

fn vqe_chemical_accuracy() -> Verdict {
    let ps = problems();
    let zero = [0.0; 4];
    let exact = exact_vqe_error(&ps, &zero);
    let sampled = sampled_vqe_error(&ps, &zero, 20);
    let tol = CHEMICAL_ACCURACY_EV;
    Verdict::new(
        exact <= tol && sampled <= tol,
        format!("from all-zero: exact max error {exact:.4} eV, 20-seed 5000-shot mean max error {sampled:.4} eV (tol {tol} eV)"),
    )
    .note("all-zero parameters prepare the HF state, where every single-parameter landscape is flat or at its minimum,")
    .note("so sequential minimal optimization cannot leave it; the residual is the HF-to-oracle gap")
    .note(format!(
        "companion from θ = π/8 each: exact max error {:.1e} eV, 20-seed sampled mean max error {:.4} eV",
        exact_vqe_error(&ps, &DEFAULT_INITIAL),
        sampled_vqe_error(&ps, &DEFAULT_INITIAL, 20)
    ))
}

fn qse_oracle_equivalence() -> Verdict {
    let mut cases: Vec<(String, IntegralSet)> = bundled_si()
        .into_iter()
        .map(|i| (format!("Si {}", i.kpoint.label), i))
        .collect();
    cases.push(("3-orbital free, N=2".into(), non_interacting(2, 1)));
    cases.push(("3-orbital free, N=4".into(), non_interacting(4, 2)));
    cases.push(("2-orbital parity-constrained, N=2".into(), parity_constrained(3)));
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    let mut empty = Vec::new();
    for (name, ints) in cases {
        let r = qse_vs_oracle(ints, TaperPolicy::SpinParity);
        if r.valence.is_empty() || r.conduction.is_empty() {
            empty.push(name.clone());
        }
        let miss = max_miss(&r.valence, &r.removal).max(max_miss(&r.conduction, &r.addition));
        if miss >= worst {
            worst = miss;
            worst_case = name;
        }
    }
    let v = Verdict::new(
        worst <= 1e-8 && empty.is_empty(),
        format!("max distance to dense N±1 spectrum {worst:.1e} Ha ({worst_case}) over Si and 3 toys (tol 1e-8)"),
    );
    if empty.is_empty() {
        v
    } else {
        v.note(format!("empty subspaces: {empty:?}"))
    }
}

fn optimized_gamma() -> (KPointProblem, VqeOutcome) {
    let p = prepare_kpoint(0, gamma(), TaperPolicy::SpinParity).unwrap();
    let v = run_vqe(&p, &base_config(), &ExactBackend).unwrap();
    (p, v)
}

fn rem_recovery() -> Verdict {
    let (_, v) = optimized_gamma();
    let circuit = build_ansatz(&v.params).unwrap();
    let ideal = bandqse::mitigation::Distribution::new(
        apply_circuit(&Statevector::zero(2), &circuit).unwrap().probabilities(),
    )
    .unwrap();
    let backend = NoisyBackend::new(NoiseModel::readout_only(&[0.981, 0.996])).unwrap();
    let reference = Reference::from_circuit(circuit);
    let shots = 10_000;
    let mut wins = 0;
    let (mut raw_sum, mut rem_sum) = (0.0, 0.0);
    for s in 0..50u64 {
        let cal = measure_calibration(&backend, 2, shots, seeds::derive(s, &[0]), 0).unwrap();
        let Measurement::Shots(r) = backend.measure(&reference, &[Pauli::Z; 2], shots, seeds::derive(s, &[1]), 0).unwrap()
        else {
            unreachable!("noisy backend samples")
        };
        let noisy = r.to_distribution().unwrap();
        let raw = noisy.total_variation(&ideal);
        let rem = apply_rem(&noisy, &cal).unwrap().total_variation(&ideal);
        raw_sum += raw;
        rem_sum += rem;
        if rem <= 0.5 * raw {
            wins += 1;
        }
    }
    Verdict::new(
        wins >= 45,
        format!(
            "{wins}/50 seeds with mitigated TVD <= half of raw (need 45); mean TVD raw {:.4}, mitigated {:.4}",
            raw_sum / 50.0,
            rem_sum / 50.0
        ),
    )
}

fn zne_bias_reduction() -> Verdict {
    let (p, v) = optimized_gamma();
    let mut cfg = base_config();
    cfg.vqe_shots = 100_000;
    cfg.zne_factors = vec![1, 3];
    cfg.jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut pass = true;
    let mut parts = Vec::new();
    for depol in [0.002, 0.01] {
        let noise = NoiseModel {
            depolarizing_1q: depol,
            depolarizing_2q: depol,
            ..NoiseModel::noiseless()
        };
        let backend = NoisyBackend::new(noise).unwrap();
        let study = run_zne_study(std::slice::from_ref(&p), std::slice::from_ref(&v), &cfg, &backend, 100).unwrap();
        pass &= study.improved >= 90;
        parts.push(format!("p = {depol}: {}/100", study.improved));
    }
    Verdict::new(pass, format!("extrapolation beats λ=1 in {} (need 90 each)", parts.join(", ")))
}

fn drift_cancellation() -> Verdict {
    let noise = NoiseModel {
        readout: vec![[0.97, 0.97], [0.975, 0.975]],
        drift: Some(Drift {
            amplitude: 0.02,
            period_cycles: 20.0,
        }),
        ..NoiseModel::noiseless()
    };
    let backend = NoisyBackend::new(noise).unwrap();
    let mut cfg = base_config();
    cfg.repeats = 40;
    cfg.shift = ShiftPolicy::None;
    cfg.seed = 2024;
    cfg.jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let noisy = run_with_integrals(&cfg, vec![gamma()], &backend, None).unwrap();
    let vqe = noisy.kpoints.iter().map(|k| k.vqe.clone()).collect();
    let exact = run_with_integrals(&cfg, vec![gamma()], &ExactBackend, Some(vqe)).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut lines = Vec::new();
    let samples = &noisy.qse.samples;
    for (i, ((_, kind, band, m), (.., e))) in noisy.qse.bands.levels().zip(exact.qse.bands.levels()).enumerate() {
        let z = (m.energy_ev - e.energy_ev).abs() / m.stderr_ev;
        worst_z = worst_z.max(z);
        let single: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        let spread = single.iter().map(|x| (x - e.energy_ev).abs()).fold(0.0, f64::max);
        lines.push(format!(
            "{kind} {band}: mean {:.4} ± {:.4} eV vs exact {:.4} eV ({z:.2} SE); worst single repeat off by {spread:.3} eV",
            m.energy_ev, m.stderr_ev, e.energy_ev
        ));
    }
    let mut v = Verdict::new(
        worst_z <= 3.0,
        format!("40-repeat Γ means within {worst_z:.2} combined SE of noise-free values (tol 3)"),
    );
    for l in lines {
        v = v.note(l);
    }
    v
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let noise_path = dir.path().join("noise.json");
    std::fs::write(
        &noise_path,
        r#"{"readout": [[0.97, 0.97], [0.975, 0.975]], "depolarizing_1q": 0.002, "depolarizing_2q": 0.01,
            "drift": {"amplitude": 0.02, "period_cycles": 20}}"#,
    )
    .unwrap();
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let integrals: Vec<_> = ["si_l.json", "si_lg.json", "si_gamma.json", "si_gx.json", "si_x.json"]
        .iter()
        .map(|n| data.join(n))
        .collect();
    let mut cfg = RunConfig::new(integrals);
    cfg.backend = "noisy".into();
    cfg.noise = Some(noise_path);
    cfg.repeats = 4;
    cfg.zne_trials = 3;
    cfg.vqe_on_backend = true;
    cfg.seed = 77;
    cfg.jobs = 4;
    cfg.output_dir = dir.path().join("out");
    let read = || std::fs::read(dir.path().join("out/run_record.json")).unwrap();
    run_pipeline(&cfg, None).unwrap();
    let first = read();
    run_pipeline(&cfg, None).unwrap();
    let second = read();
    Verdict::new(
        first == second,
        format!("two noisy runs with seed 77 give {} run records", if first == second { "bit-identical" } else { "different" }),
    )
    .note(format!("run_record.json is {} bytes", first.len()))
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion("tapering fidelity", Some(secs(1)), tapering_fidelity),
        criterion("VQE chemical accuracy", Some(secs(30)), vqe_chemical_accuracy),
        criterion("QSE oracle equivalence", Some(secs(10)), qse_oracle_equivalence),
        criterion("REM recovery", Some(secs(60)), rem_recovery),
        criterion("ZNE bias reduction", Some(secs(120)), zne_bias_reduction),
        criterion("repeat-average bias cancellation", Some(secs(180)), drift_cancellation),
        criterion("determinism", None, determinism),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
