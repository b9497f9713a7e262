//! `bandqse` command-line driver.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bandqse::backend::BackendRegistry;
use bandqse::hamiltonian::IntegralSet;
use bandqse::pipeline::{
    create_dir, prepare_all, run_calibration, run_pipeline, run_vqe_all, run_zne_study, write_json, RunConfig,
    TaperRecord, VqeOutcome,
};
use bandqse::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bandqse", version, about = "Quasiparticle band structures from VQE and quantum subspace expansion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Measurement backend: exact, sampled or noisy.
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Map and taper each k-point Hamiltonian; writes taper.json.
    Taper,
    /// Optimize the ansatz per k-point; writes vqe.json and traces.
    Vqe {
        /// Optimize on the configured backend rather than the exact estimator.
        #[arg(long)]
        on_backend: bool,
    },
    /// Subspace expansion on saved VQE results; writes bands and the run record.
    Qse {
        #[arg(long)]
        vqe: PathBuf,
    },
    /// Full pipeline from integrals to bands.
    Bands,
    /// Measure readout calibration matrices; writes calibration.json.
    Calibrate {
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Repeated zero-noise extrapolation of the VQE energy; writes zne.csv.
    ZneStudy {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Saved VQE results; optimized afresh when absent.
        #[arg(long)]
        vqe: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownBackend(_) | Error::InvalidNoise(_) => 2,
        Error::Io { .. } => 3,
        Error::Schema(_) | Error::NotHermitian(_) | Error::TooManyElectrons { .. } => 4,
        _ => 5,
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(b) = &g.backend {
        cfg.backend = b.clone();
    }
    if let Some(r) = g.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_vqe(path: &Path) -> Result<Vec<VqeOutcome>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = cfg.output_dir.clone();
    let registry = BackendRegistry::default();
    match cli.command {
        Command::Taper => {
            let ints: Vec<IntegralSet> = cfg.load_integrals()?;
            let problems = prepare_all(&ints, cfg.taper, cfg.jobs)?;
            let records: Vec<TaperRecord> = problems.iter().map(TaperRecord::new).collect();
            create_dir(&out)?;
            write_json(&out.join("taper.json"), &records)?;
            for (k, r) in records.iter().enumerate() {
                write_text(&out.join(format!("tapered_k{k}.txt")), &r.tapered_hamiltonian)?;
            }
            for r in &records {
                println!(
                    "{}: {} -> {} qubits, {} terms, {} groups, generators {:?}",
                    r.k_label, r.n_qubits, r.n_tapered_qubits, r.n_terms, r.n_groups, r.generators
                );
            }
        }
        Command::Vqe { on_backend } => {
            let mut cfg = cfg;
            cfg.vqe_on_backend |= on_backend;
            let backend = cfg.create_backend(&registry)?;
            let problems = prepare_all(&cfg.load_integrals()?, cfg.taper, cfg.jobs)?;
            let results = run_vqe_all(&problems, &cfg, backend.as_ref())?;
            create_dir(&out)?;
            write_json(&out.join("vqe.json"), &results)?;
            for (k, v) in results.iter().enumerate() {
                write_text(&out.join(format!("vqe_trace_k{k}.csv")), &v.trace.to_csv())?;
                println!("{}: E = {:.8} Ha, oracle {:.8} Ha, error {:+.5} eV", v.k_label, v.energy, v.oracle_energy, v.error_ev);
            }
        }
        Command::Qse { vqe } => {
            let saved = read_vqe(&vqe)?;
            print_bands(&run_pipeline(&cfg, Some(saved))?);
        }
        Command::Bands => print_bands(&run_pipeline(&cfg, None)?),
        Command::Calibrate { count } => {
            let backend = cfg.create_backend(&registry)?;
            let records = run_calibration(&cfg, backend.as_ref(), count)?;
            create_dir(&out)?;
            write_json(&out.join("calibration.json"), &records)?;
            for r in &records {
                println!("cycle {}: {:?}", r.cycle, r.matrix);
            }
        }
        Command::ZneStudy { trials, vqe } => {
            let backend = cfg.create_backend(&registry)?;
            let problems = prepare_all(&cfg.load_integrals()?, cfg.taper, cfg.jobs)?;
            let results = match vqe {
                Some(p) => read_vqe(&p)?,
                None => run_vqe_all(&problems, &cfg, &bandqse::backend::ExactBackend)?,
            };
            if results.len() != problems.len() {
                return Err(Error::Config("saved VQE results do not match the k-points".into()));
            }
            let study = run_zne_study(&problems, &results, &cfg, backend.as_ref(), trials)?;
            create_dir(&out)?;
            write_text(&out.join("zne.csv"), &study.to_csv())?;
            write_json(&out.join("zne.json"), &study)?;
            println!("extrapolation improved on λ=1 in {}/{} trials", study.improved, study.trials.len());
        }
    }
    Ok(())
}

fn print_bands(record: &bandqse::pipeline::RunRecord) {
    let mut out = std::io::stdout().lock();
    for p in &record.qse.bands.points {
        let fmt = |ls: &[bandqse::qse::BandLevel]| {
            ls.iter()
                .map(|l| format!("{:+.4}±{:.4}", l.energy_ev, l.stderr_ev))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let line = format!("{:>5}  valence [{}]  conduction [{}]", p.kpoint.label, fmt(&p.valence), fmt(&p.conduction));
        if writeln!(out, "{line}").is_err() {
            return;
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
