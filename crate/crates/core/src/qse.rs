//! Quantum subspace expansion for electron removal (valence) and addition
//! (conduction) energies, and assembly of the band structure.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::backend::{Estimator, Reference};
use crate::error::{Error, Result};
use crate::fermion::{jordan_wigner, taper, FermionOperator, Ladder, SymmetrySet};
use crate::hamiltonian::{hf_occupation, IntegralSet, KPoint};
use crate::pauli::{group_qubitwise, MeasurementGroup, PauliSum};
use crate::seeds;
use crate::units::hartree_to_ev;

pub const DEFAULT_SHOTS_PER_GROUP: u64 = 10_000;
pub const DEFAULT_S_THRESHOLD: f64 = 1e-6;
/// Pauli terms below this magnitude are not measured.
pub const TRUNCATION: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Valence,
    Conduction,
}

impl BandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BandKind::Valence => "valence",
            BandKind::Conduction => "conduction",
        }
    }

    /// Change in electron number caused by the excitation operators.
    pub fn particle_shift(self) -> isize {
        match self {
            BandKind::Valence => -1,
            BandKind::Conduction => 1,
        }
    }
}

impl fmt::Display for BandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationSet {
    pub kind: BandKind,
    pub operators: Vec<FermionOperator>,
    pub orbital_labels: Vec<String>,
}

impl ExcitationSet {
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }
}

/// Annihilators on the HF-occupied spin orbitals (valence) or creators on
/// the empty ones (conduction), in spin-orbital order.
pub fn build_excitations(ints: &IntegralSet, kind: BandKind) -> Result<ExcitationSet> {
    let n = ints.n_orbitals;
    let occ = hf_occupation(n, ints.n_electrons)?;
    let mut operators = Vec::new();
    let mut orbital_labels = Vec::new();
    for (mode, &o) in occ.iter().enumerate() {
        let op = match (kind, o) {
            (BandKind::Valence, true) => Ladder::annihilate(mode),
            (BandKind::Conduction, false) => Ladder::create(mode),
            _ => continue,
        };
        operators.push(FermionOperator::single(2 * n, op)?);
        let spin = if mode < n { 'α' } else { 'β' };
        orbital_labels.push(format!("{}{spin}", mode % n));
    }
    if operators.is_empty() {
        return Err(Error::NoExcitations(kind.as_str()));
    }
    Ok(ExcitationSet {
        kind,
        operators,
        orbital_labels,
    })
}

/// A tapered matrix-element operator ready for measurement.
#[derive(Clone, Debug, PartialEq)]
pub enum ElementOperator {
    /// Odd under a tapering symmetry, so the element vanishes identically.
    Forbidden,
    Measured { operator: PauliSum, groups: Vec<MeasurementGroup> },
}

impl ElementOperator {
    pub fn group_count(&self) -> usize {
        match self {
            ElementOperator::Forbidden => 0,
            ElementOperator::Measured { groups, .. } => groups.len(),
        }
    }
}

/// `O_i† H O_j` and `O_i† O_j` for all pairs, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceOperators {
    pub kind: BandKind,
    pub dim: usize,
    pub h: Vec<ElementOperator>,
    pub s: Vec<ElementOperator>,
}

impl SubspaceOperators {
    /// Operator indices grouped so that no measured H or S element links two
    /// groups, ordered by first operator.
    pub fn symmetry_blocks(&self) -> Vec<Vec<usize>> {
        let d = self.dim;
        let mut root: Vec<usize> = (0..d).collect();
        fn find(root: &mut [usize], i: usize) -> usize {
            let mut i = i;
            while root[i] != i {
                root[i] = root[root[i]];
                i = root[i];
            }
            i
        }
        for i in 0..d {
            for j in 0..d {
                let linked = [&self.h, &self.s]
                    .iter()
                    .any(|m| matches!(m[i * d + j], ElementOperator::Measured { .. }));
                if i != j && linked {
                    let (a, b) = (find(&mut root, i), find(&mut root, j));
                    root[a.max(b)] = a.min(b);
                }
            }
        }
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; d];
        for i in 0..d {
            let r = find(&mut root, i);
            if slot[r] == usize::MAX {
                slot[r] = blocks.len();
                blocks.push(Vec::new());
            }
            blocks[slot[r]].push(i);
        }
        blocks
    }
}

fn tapered_element(f: &FermionOperator, n_modes: usize, sym: &SymmetrySet) -> Result<ElementOperator> {
    let q = jordan_wigner(f, n_modes)?;
    for g in sym.generators() {
        let odd = q.iter().filter(|(p, _)| !g.commutes_with(p)).count();
        if odd == q.len() && odd > 0 {
            return Ok(ElementOperator::Forbidden);
        }
        if odd > 0 {
            return Err(Error::InconsistentExcitation(format!(
                "{odd} of {} terms anticommute with {g}",
                q.len()
            )));
        }
    }
    let operator = taper(&q, sym)?.truncate(TRUNCATION);
    if operator.is_empty() {
        return Ok(ElementOperator::Forbidden);
    }
    let groups = group_qubitwise(&operator);
    Ok(ElementOperator::Measured { operator, groups })
}

/// Forms, maps and tapers every subspace operator. Independent of the
/// reference state, so it is done once per k-point.
pub fn prepare_subspace(exc: &ExcitationSet, h: &FermionOperator, sym: &SymmetrySet) -> Result<SubspaceOperators> {
    let n_modes = h.n_modes();
    let dim = exc.len();
    let mut hs = Vec::with_capacity(dim * dim);
    let mut ss = Vec::with_capacity(dim * dim);
    for oi in &exc.operators {
        let oi_dag = oi.adjoint();
        for oj in &exc.operators {
            let s_op = oi_dag.mul(oj)?;
            let h_op = oi_dag.mul(h)?.mul(oj)?;
            hs.push(tapered_element(&h_op, n_modes, sym)?);
            ss.push(tapered_element(&s_op, n_modes, sym)?);
        }
    }
    Ok(SubspaceOperators {
        kind: exc.kind,
        dim,
        h: hs,
        s: ss,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceProblem {
    pub h_sub: DMatrix<Complex64>,
    pub s_sub: DMatrix<Complex64>,
    pub h_stderr: DMatrix<f64>,
    pub s_stderr: DMatrix<f64>,
    /// Largest `|M - M†|` entry over both matrices before symmetrization.
    pub raw_asymmetry: f64,
    pub shots: u64,
}

fn symmetrize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn asymmetry(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Estimates every element on the reference state and symmetrizes. Element
/// `(i, j)` of H uses seed `derive(seed, [0, i, j])`, of S `derive(seed, [1, i, j])`.
pub fn measure_subspace(
    ops: &SubspaceOperators,
    reference: &Reference,
    estimator: &Estimator<'_>,
    seed: u64,
    cycle: u64,
) -> Result<SubspaceProblem> {
    let d = ops.dim;
    let mut raw = [DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
    let mut err = [DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
    let mut shots = 0;
    for (which, elems) in [&ops.h, &ops.s].into_iter().enumerate() {
        for (idx, e) in elems.iter().enumerate() {
            let (i, j) = (idx / d, idx % d);
            if let ElementOperator::Measured { groups, .. } = e {
                let s = seeds::derive(seed, &[which as u64, i as u64, j as u64]);
                let est = estimator.estimate_sum(reference, groups, s, cycle)?;
                raw[which][(i, j)] = est.value;
                err[which][(i, j)] = est.stderr;
                shots += est.shots;
            }
        }
    }
    let [h_raw, s_raw] = raw;
    let [h_err, s_err] = err;
    Ok(SubspaceProblem {
        raw_asymmetry: asymmetry(&h_raw).max(asymmetry(&s_raw)),
        h_sub: symmetrize(&h_raw),
        s_sub: symmetrize(&s_raw),
        h_stderr: h_err,
        s_stderr: s_err,
        shots,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevSolution {
    /// Hartree; ascending, or ascending per block after [`solve_blocks`].
    pub eigenvalues: Vec<f64>,
    pub kept_dimension: usize,
    pub discarded: Vec<f64>,
    /// Kept levels per symmetry block when solved blockwise.
    #[serde(default)]
    pub block_sizes: Vec<usize>,
}

/// Canonical orthogonalization: drop overlap eigenvalues below
/// `s_threshold`, then diagonalize H in the remaining orthonormal basis.
pub fn solve_gev(p: &SubspaceProblem, s_threshold: f64) -> Result<GevSolution> {
    let d = p.s_sub.nrows();
    if p.h_sub.shape() != (d, d) || p.s_sub.ncols() != d {
        return Err(Error::SizeMismatch {
            expected: d,
            found: p.h_sub.nrows(),
        });
    }
    let s_eig = SymmetricEigen::new(p.s_sub.clone());
    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    for (k, &l) in s_eig.eigenvalues.iter().enumerate() {
        if l >= s_threshold {
            kept.push(k);
        } else {
            discarded.push(l);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateSubspace {
            threshold: s_threshold,
            largest: s_eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let x = DMatrix::from_fn(d, kept.len(), |r, c| {
        let k = kept[c];
        s_eig.eigenvectors[(r, k)] / s_eig.eigenvalues[k].sqrt()
    });
    let h_orth = x.adjoint() * &p.h_sub * &x;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(symmetrize(&h_orth)).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    discarded.sort_by(f64::total_cmp);
    Ok(GevSolution {
        eigenvalues,
        kept_dimension: kept.len(),
        discarded,
        block_sizes: vec![kept.len()],
    })
}

fn sub_problem(p: &SubspaceProblem, idx: &[usize]) -> SubspaceProblem {
    let n = idx.len();
    SubspaceProblem {
        h_sub: DMatrix::from_fn(n, n, |r, c| p.h_sub[(idx[r], idx[c])]),
        s_sub: DMatrix::from_fn(n, n, |r, c| p.s_sub[(idx[r], idx[c])]),
        h_stderr: DMatrix::from_fn(n, n, |r, c| p.h_stderr[(idx[r], idx[c])]),
        s_stderr: DMatrix::from_fn(n, n, |r, c| p.s_stderr[(idx[r], idx[c])]),
        raw_asymmetry: p.raw_asymmetry,
        shots: p.shots,
    }
}

/// [`solve_gev`] on each symmetry block of `ops` separately. Eigenvalues
/// are ascending within a block and blocks follow operator order, so a level
/// keeps its identity across noisy repeats even when blocks are degenerate.
/// A block whose overlap falls entirely below threshold contributes no level.
pub fn solve_blocks(ops: &SubspaceOperators, p: &SubspaceProblem, s_threshold: f64) -> Result<GevSolution> {
    if p.s_sub.nrows() != ops.dim {
        return Err(Error::SizeMismatch {
            expected: ops.dim,
            found: p.s_sub.nrows(),
        });
    }
    let mut out = GevSolution {
        eigenvalues: Vec::new(),
        kept_dimension: 0,
        discarded: Vec::new(),
        block_sizes: Vec::new(),
    };
    let mut largest = f64::NEG_INFINITY;
    for block in ops.symmetry_blocks() {
        match solve_gev(&sub_problem(p, &block), s_threshold) {
            Ok(g) => {
                out.eigenvalues.extend(&g.eigenvalues);
                out.kept_dimension += g.kept_dimension;
                out.discarded.extend(g.discarded);
                out.block_sizes.push(g.kept_dimension);
            }
            Err(Error::DegenerateSubspace { largest: l, .. }) => {
                largest = largest.max(l);
                let sub = sub_problem(p, &block).s_sub;
                out.discarded.extend(SymmetricEigen::new(sub).eigenvalues.iter());
                out.block_sizes.push(0);
            }
            Err(e) => return Err(e),
        }
    }
    if out.kept_dimension == 0 {
        return Err(Error::DegenerateSubspace {
            threshold: s_threshold,
            largest,
        });
    }
    out.discarded.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftPolicy {
    /// Shift so the highest valence energy at Γ is 0 eV.
    #[default]
    GammaValenceTop,
    None,
}

/// QSE results and ground energy at one k-point.
#[derive(Clone, Debug, PartialEq)]
pub struct KPointSolution {
    pub kpoint: KPoint,
    pub ground_energy: f64,
    pub valence: Option<GevSolution>,
    pub conduction: Option<GevSolution>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandLevel {
    pub energy_ev: f64,
    pub stderr_ev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub kpoint: KPoint,
    /// Highest first.
    pub valence: Vec<BandLevel>,
    /// Lowest first.
    pub conduction: Vec<BandLevel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub points: Vec<BandPoint>,
    pub shift_ev: f64,
}

/// `ε_v = -(E_{N-1} - E_gs)` and `ε_c = E_{N+1} - E_gs` in eV, shifted per
/// `policy`. Levels follow the eigenvalue order of each solution; see
/// [`BandStructure::sort_levels`].
pub fn assemble_bands(per_k: &[KPointSolution], policy: ShiftPolicy) -> Result<BandStructure> {
    if per_k.is_empty() {
        return Err(Error::Config("no k-points to assemble".into()));
    }
    let level = |e: f64| BandLevel { energy_ev: e, stderr_ev: 0.0 };
    let mut points: Vec<BandPoint> = per_k
        .iter()
        .map(|k| BandPoint {
            kpoint: k.kpoint.clone(),
            valence: k.valence.as_ref().map_or_else(Vec::new, |g| {
                g.eigenvalues.iter().map(|&e| level(hartree_to_ev(k.ground_energy - e))).collect()
            }),
            conduction: k.conduction.as_ref().map_or_else(Vec::new, |g| {
                g.eigenvalues.iter().map(|&e| level(hartree_to_ev(e - k.ground_energy))).collect()
            }),
        })
        .collect();
    let shift_ev = match policy {
        ShiftPolicy::None => 0.0,
        ShiftPolicy::GammaValenceTop => points
            .iter()
            .find(|p| p.kpoint.is_gamma() && !p.valence.is_empty())
            .ok_or(Error::MissingGamma)?
            .valence
            .iter()
            .map(|l| l.energy_ev)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    for p in &mut points {
        for l in p.valence.iter_mut().chain(p.conduction.iter_mut()) {
            l.energy_ev -= shift_ev;
        }
    }
    Ok(BandStructure { points, shift_ev })
}

impl BandStructure {
    /// Every level as `(k_index, kind, band_index, level)`.
    pub fn levels(&self) -> impl Iterator<Item = (usize, BandKind, usize, &BandLevel)> {
        self.points.iter().enumerate().flat_map(|(k, p)| {
            let v = p.valence.iter().enumerate().map(move |(i, l)| (k, BandKind::Valence, i, l));
            let c = p.conduction.iter().enumerate().map(move |(i, l)| (k, BandKind::Conduction, i, l));
            v.chain(c)
        })
    }

    /// Reorders each point to valence highest first and conduction lowest
    /// first. Returns the old flattened index of every new position.
    pub fn sort_levels(&mut self) -> Vec<usize> {
        let mut perm = Vec::new();
        let mut offset = 0;
        for p in &mut self.points {
            for (levels, descending) in [(&mut p.valence, true), (&mut p.conduction, false)] {
                let mut order: Vec<usize> = (0..levels.len()).collect();
                order.sort_by(|&a, &b| {
                    let o = levels[a].energy_ev.total_cmp(&levels[b].energy_ev);
                    if descending { o.reverse() } else { o }
                });
                let sorted: Vec<BandLevel> = order.iter().map(|&i| levels[i]).collect();
                perm.extend(order.iter().map(|&i| offset + i));
                offset += levels.len();
                *levels = sorted;
            }
        }
        perm
    }

    /// Flattened energies in [`levels`](Self::levels) order.
    pub fn energies(&self) -> Vec<f64> {
        self.levels().map(|(.., l)| l.energy_ev).collect()
    }

    /// Mean band structure over repeats with the standard error of the mean
    /// as uncertainty. All inputs must share the same layout.
    pub fn average(runs: &[BandStructure]) -> Result<BandStructure> {
        let first = runs.first().ok_or_else(|| Error::Config("no band structures to average".into()))?;
        let layout = |b: &BandStructure| b.points.iter().map(|p| (p.valence.len(), p.conduction.len())).collect::<Vec<_>>();
        if runs.iter().any(|r| layout(r) != layout(first)) {
            return Err(Error::Config("band structures differ in layout".into()));
        }
        let n = runs.len() as f64;
        let samples: Vec<Vec<f64>> = runs.iter().map(BandStructure::energies).collect();
        let mut out = first.clone();
        let mut idx = 0;
        for p in &mut out.points {
            for l in p.valence.iter_mut().chain(p.conduction.iter_mut()) {
                let mean = samples.iter().map(|s| s[idx]).sum::<f64>() / n;
                let sem = if runs.len() > 1 {
                    (samples.iter().map(|s| (s[idx] - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                };
                *l = BandLevel { energy_ev: mean, stderr_ev: sem };
                idx += 1;
            }
        }
        out.shift_ev = runs.iter().map(|r| r.shift_ev).sum::<f64>() / n;
        Ok(out)
    }

    /// `k_label,path_distance,band_type,band_index,energy_ev,stderr_ev`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k_label,path_distance,band_type,band_index,energy_ev,stderr_ev\n");
        for (k, kind, i, l) in self.levels() {
            let p = &self.points[k];
            writeln!(
                out,
                "{},{},{},{},{},{}",
                p.kpoint.label, p.kpoint.path_distance, kind, i, l.energy_ev, l.stderr_ev
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ExactBackend;
    use crate::fermion::{number_operator, sector_from_occupation, spin_parity_generators};
    use crate::hamiltonian::{build_hamiltonian, bundled_si, exact_spectrum, exact_spectrum_with, qubit_hamiltonian};
    use crate::simulator::Statevector;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn problem(h: DMatrix<Complex64>, s: DMatrix<Complex64>) -> SubspaceProblem {
        let d = h.nrows();
        SubspaceProblem {
            h_sub: h,
            s_sub: s,
            h_stderr: DMatrix::zeros(d, d),
            s_stderr: DMatrix::zeros(d, d),
            raw_asymmetry: 0.0,
            shots: 0,
        }
    }

    fn gamma() -> KPoint {
        KPoint {
            label: "Γ".into(),
            fractional_coords: [0.0; 3],
            path_distance: 1.0,
        }
    }

    #[test]
    fn si_excitation_counts() {
        let g = &bundled_si()[2];
        let v = build_excitations(g, BandKind::Valence).unwrap();
        assert_eq!(v.orbital_labels, ["0α", "0β"]);
        let c = build_excitations(g, BandKind::Conduction).unwrap();
        assert_eq!(c.orbital_labels, ["1α", "1β"]);
    }

    #[test]
    fn three_orbital_four_electron_valence_has_four_operators() {
        let mut ints = bundled_si().remove(0);
        ints.n_orbitals = 3;
        ints.n_electrons = 4;
        ints.t = DMatrix::identity(3, 3);
        assert_eq!(build_excitations(&ints, BandKind::Valence).unwrap().len(), 4);
        ints.n_electrons = 6;
        assert!(matches!(build_excitations(&ints, BandKind::Conduction), Err(Error::NoExcitations(_))));
    }

    #[test]
    fn identity_overlap_gives_plain_eigenvalues() {
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.5), c(0.5), c(-1.0)]);
        let sol = solve_gev(&problem(h, DMatrix::identity(2, 2)), DEFAULT_S_THRESHOLD).unwrap();
        let r = 1.25f64.sqrt();
        assert!((sol.eigenvalues[0] + r).abs() < 1e-12 && (sol.eigenvalues[1] - r).abs() < 1e-12);
        assert_eq!(sol.kept_dimension, 2);
    }

    #[test]
    fn tiny_overlap_direction_is_discarded() {
        let s = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(1e-9)]);
        let sol = solve_gev(&problem(DMatrix::identity(2, 2), s), DEFAULT_S_THRESHOLD).unwrap();
        assert_eq!(sol.kept_dimension, 1);
        assert_eq!(sol.discarded.len(), 1);
        let s = DMatrix::from_element(2, 2, c(0.0));
        assert!(matches!(
            solve_gev(&problem(DMatrix::identity(2, 2), s), DEFAULT_S_THRESHOLD),
            Err(Error::DegenerateSubspace { .. })
        ));
    }

    /// Exact ground state of the tapered Si Hamiltonian plus everything
    /// needed to run QSE on it.
    struct Setup {
        ints: IntegralSet,
        sym: SymmetrySet,
        reference: Reference,
        e_gs: f64,
    }

    fn setup(ints: IntegralSet) -> Setup {
        let h = qubit_hamiltonian(&ints).unwrap();
        let n = ints.n_orbitals;
        let occ = hf_occupation(n, ints.n_electrons).unwrap();
        let sym = SymmetrySet::from_generators(2 * n, &spin_parity_generators(n)).unwrap();
        let sector = sector_from_occupation(&sym, &occ).unwrap();
        let sym = sym.with_sector(sector).unwrap();
        let t = taper(&h, &sym).unwrap();
        let nt = taper(&number_operator(2 * n), &sym).unwrap();
        let spec = exact_spectrum_with(&t, &nt, Some(ints.n_electrons)).unwrap();
        let state = Statevector::from_amplitudes(spec.ground_state().unwrap()).unwrap();
        Setup {
            e_gs: spec.eigenvalues[0],
            ints,
            sym,
            reference: Reference::from_state(state),
        }
    }

    fn qse(s: &Setup, kind: BandKind) -> (SubspaceProblem, GevSolution) {
        let exc = build_excitations(&s.ints, kind).unwrap();
        let ops = prepare_subspace(&exc, &build_hamiltonian(&s.ints), &s.sym).unwrap();
        let p = measure_subspace(&ops, &s.reference, &Estimator::new(&ExactBackend, 1), 0, 0).unwrap();
        let g = solve_gev(&p, DEFAULT_S_THRESHOLD).unwrap();
        (p, g)
    }

    #[test]
    fn si_qse_matches_sector_spectra() {
        for ints in bundled_si() {
            let h = qubit_hamiltonian(&ints).unwrap();
            let s = setup(ints);
            let full = exact_spectrum(&h, Some(s.ints.n_electrons)).unwrap().eigenvalues;
            assert!((full[0] - s.e_gs).abs() < 1e-10);
            for kind in [BandKind::Valence, BandKind::Conduction] {
                let (p, g) = qse(&s, kind);
                assert!(p.raw_asymmetry < 1e-12);
                let n = (s.ints.n_electrons as isize + kind.particle_shift()) as usize;
                let oracle = exact_spectrum(&h, Some(n)).unwrap().eigenvalues;
                for e in &g.eigenvalues {
                    assert!(oracle.iter().any(|o| (o - e).abs() < 1e-8), "{kind} {e} not in {oracle:?}");
                }
            }
        }
    }

    #[test]
    fn hf_reference_overlap_is_occupation() {
        let ints = bundled_si().remove(2);
        let mut s = setup(ints);
        // tapered HF is |11>
        s.reference = Reference::from_state(Statevector::basis(2, 3));
        let (p, _) = qse(&s, BandKind::Valence);
        assert!((p.s_sub[(0, 0)] - c(1.0)).norm() < 1e-12);
        assert!((p.s_sub[(1, 1)] - c(1.0)).norm() < 1e-12);
        assert!(p.s_sub[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn matrix_elements_match_untapered_statevector_algebra() {
        let ints = bundled_si().remove(0);
        let h = qubit_hamiltonian(&ints).unwrap();
        let psi = exact_spectrum(&h, Some(2)).unwrap().ground_state().unwrap();
        let s = setup(ints.clone());
        let hf = build_hamiltonian(&ints);
        for kind in [BandKind::Valence, BandKind::Conduction] {
            let (p, _) = qse(&s, kind);
            let exc = build_excitations(&ints, kind).unwrap();
            for (i, oi) in exc.operators.iter().enumerate() {
                for (j, oj) in exc.operators.iter().enumerate() {
                    let hop = jordan_wigner(&oi.adjoint().mul(&hf).unwrap().mul(oj).unwrap(), 4).unwrap();
                    let sop = jordan_wigner(&oi.adjoint().mul(oj).unwrap(), 4).unwrap();
                    let ev = |op: &PauliSum| -> Complex64 {
                        let v = op.apply(&psi).unwrap();
                        psi.iter().zip(&v).map(|(a, b)| a.conj() * b).sum()
                    };
                    assert!((p.h_sub[(i, j)] - ev(&hop)).norm() < 1e-10);
                    assert!((p.s_sub[(i, j)] - ev(&sop)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn energies_invariant_under_operator_rescaling() {
        let s = setup(bundled_si().remove(3));
        let hf = build_hamiltonian(&s.ints);
        let exc = build_excitations(&s.ints, BandKind::Conduction).unwrap();
        let mut scaled = exc.clone();
        scaled.operators[0] = scaled.operators[0].scale(Complex64::new(0.0, -3.5));
        scaled.operators[1] = scaled.operators[1].scale(c(0.2));
        let est = Estimator::new(&ExactBackend, 1);
        let solve = |e: &ExcitationSet| {
            let ops = prepare_subspace(e, &hf, &s.sym).unwrap();
            solve_gev(&measure_subspace(&ops, &s.reference, &est, 0, 0).unwrap(), DEFAULT_S_THRESHOLD).unwrap()
        };
        let (a, b) = (solve(&exc), solve(&scaled));
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn bands_follow_sign_convention_and_shift() {
        let mut x = gamma();
        x.label = "X".into();
        x.fractional_coords = [0.5, 0.0, 0.5];
        let gev = |e: Vec<f64>| Some(GevSolution { kept_dimension: e.len(), eigenvalues: e, discarded: vec![], block_sizes: vec![] });
        let per_k = vec![
            KPointSolution { kpoint: gamma(), ground_energy: -1.0, valence: gev(vec![-0.7, -0.6]), conduction: gev(vec![-0.5]) },
            KPointSolution { kpoint: x, ground_energy: -1.1, valence: gev(vec![-0.75]), conduction: None },
        ];
        let raw = assemble_bands(&per_k, ShiftPolicy::None).unwrap();
        assert!((raw.points[0].valence[0].energy_ev - hartree_to_ev(-0.3)).abs() < 1e-12);
        assert!((raw.points[0].conduction[0].energy_ev - hartree_to_ev(0.5)).abs() < 1e-12);
        let b = assemble_bands(&per_k, ShiftPolicy::GammaValenceTop).unwrap();
        assert_eq!(b.points[0].valence[0].energy_ev, 0.0);
        assert!(b.points[1].conduction.is_empty());
        assert!(b.to_csv().lines().count() == 1 + 4);
        assert!(matches!(assemble_bands(&per_k[1..], ShiftPolicy::GammaValenceTop), Err(Error::MissingGamma)));
    }

    #[test]
    fn averaging_reports_sem() {
        let gev = |e: f64| Some(GevSolution { kept_dimension: 1, eigenvalues: vec![e], discarded: vec![], block_sizes: vec![] });
        let runs: Vec<BandStructure> = [-0.5, -0.7]
            .iter()
            .map(|&e| {
                let k = KPointSolution { kpoint: gamma(), ground_energy: -1.0, valence: gev(-0.6), conduction: gev(e) };
                assemble_bands(&[k], ShiftPolicy::None).unwrap()
            })
            .collect();
        let avg = BandStructure::average(&runs).unwrap();
        let c = avg.points[0].conduction[0];
        assert!((c.energy_ev - hartree_to_ev(0.4)).abs() < 1e-12);
        assert!((c.stderr_ev - hartree_to_ev(0.1)).abs() < 1e-12);
        assert_eq!(avg.points[0].valence[0].stderr_ev, 0.0);
    }

    #[test]
    fn spin_partners_form_separate_blocks() {
        let s = setup(bundled_si().remove(2));
        for kind in [BandKind::Valence, BandKind::Conduction] {
            let exc = build_excitations(&s.ints, kind).unwrap();
            let ops = prepare_subspace(&exc, &build_hamiltonian(&s.ints), &s.sym).unwrap();
            assert_eq!(ops.symmetry_blocks(), [vec![0], vec![1]]);
            let p = measure_subspace(&ops, &s.reference, &Estimator::new(&ExactBackend, 1), 0, 0).unwrap();
            let blocked = solve_blocks(&ops, &p, DEFAULT_S_THRESHOLD).unwrap();
            let mut sorted = blocked.eigenvalues.clone();
            sorted.sort_by(f64::total_cmp);
            let full = solve_gev(&p, DEFAULT_S_THRESHOLD).unwrap().eigenvalues;
            assert!(sorted.iter().zip(&full).all(|(a, b)| (a - b).abs() < 1e-12));
            assert_eq!(blocked.block_sizes, [1, 1]);
        }
    }

    #[test]
    fn blockwise_levels_keep_operator_order() {
        let ops = SubspaceOperators {
            kind: BandKind::Conduction,
            dim: 2,
            h: vec![
                ElementOperator::Measured { operator: PauliSum::new(1), groups: vec![] },
                ElementOperator::Forbidden,
                ElementOperator::Forbidden,
                ElementOperator::Measured { operator: PauliSum::new(1), groups: vec![] },
            ],
            s: vec![ElementOperator::Forbidden; 4],
        };
        let h = DMatrix::from_row_slice(2, 2, &[c(2.0), c(0.0), c(0.0), c(1.0)]);
        let sol = solve_blocks(&ops, &problem(h.clone(), DMatrix::identity(2, 2)), DEFAULT_S_THRESHOLD).unwrap();
        assert_eq!(sol.eigenvalues, [2.0, 1.0]);
        let s = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(1e-9)]);
        let sol = solve_blocks(&ops, &problem(h, s), DEFAULT_S_THRESHOLD).unwrap();
        assert_eq!(sol.eigenvalues, [2.0]);
        assert_eq!(sol.block_sizes, [1, 0]);
    }

    #[test]
    fn sorting_levels_reports_permutation() {
        let gev = |e: Vec<f64>| Some(GevSolution { kept_dimension: e.len(), eigenvalues: e, discarded: vec![], block_sizes: vec![] });
        let k = KPointSolution { kpoint: gamma(), ground_energy: -1.0, valence: gev(vec![-0.6, -0.7]), conduction: gev(vec![-0.2, -0.5]) };
        let mut b = assemble_bands(&[k], ShiftPolicy::None).unwrap();
        let before = b.energies();
        let perm = b.sort_levels();
        assert_eq!(perm, [1, 0, 3, 2]);
        let after = b.energies();
        assert!(perm.iter().enumerate().all(|(new, &old)| after[new] == before[old]));
        assert!(after[0] > after[1] && after[2] < after[3]);
    }
}
