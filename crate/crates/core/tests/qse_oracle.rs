mod common;

use bandqse::fermion::TaperPolicy;
use bandqse::hamiltonian::bundled_si;
use common::{interacting, max_miss, non_interacting, parity_constrained, qse_vs_oracle};
use proptest::prelude::*;

fn assert_in_spectrum(name: &str, r: &common::QseVsOracle) {
    assert!(!r.valence.is_empty() && !r.conduction.is_empty(), "{name}: empty subspace");
    let v = max_miss(&r.valence, &r.removal);
    let c = max_miss(&r.conduction, &r.addition);
    assert!(v < 1e-8, "{name} valence off by {v}: {:?} vs {:?}", r.valence, r.removal);
    assert!(c < 1e-8, "{name} conduction off by {c}: {:?} vs {:?}", r.conduction, r.addition);
}

#[test]
fn si_kpoints_match_dense_spectra_under_both_policies() {
    for ints in bundled_si() {
        for policy in [TaperPolicy::SpinParity, TaperPolicy::Maximal] {
            let label = format!("{} {policy:?}", ints.kpoint.label);
            assert_in_spectrum(&label, &qse_vs_oracle(ints.clone(), policy));
        }
    }
}

#[test]
fn non_interacting_toys_match_dense_spectra() {
    for seed in 0..5 {
        assert_in_spectrum("3 orbitals, 2 electrons", &qse_vs_oracle(non_interacting(2, seed), TaperPolicy::SpinParity));
        assert_in_spectrum("3 orbitals, 4 electrons", &qse_vs_oracle(non_interacting(4, seed), TaperPolicy::SpinParity));
    }
}

#[test]
fn parity_constrained_toy_matches_dense_spectra() {
    for seed in 0..5 {
        assert_in_spectrum("parity constrained", &qse_vs_oracle(parity_constrained(seed), TaperPolicy::SpinParity));
    }
}

fn bounded_below(qse: &[f64], oracle: &[f64]) -> Result<(), TestCaseError> {
    prop_assert!(qse.len() <= oracle.len());
    for (i, (e, o)) in qse.iter().zip(oracle).enumerate() {
        prop_assert!(e + 1e-9 >= *o, "level {i}: {e} below exact {o}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qse_levels_never_undershoot_the_exact_spectrum(seed in any::<u64>(), n_el in 1usize..4) {
        let r = qse_vs_oracle(interacting(n_el, seed), TaperPolicy::SpinParity);
        bounded_below(&r.valence, &r.removal)?;
        bounded_below(&r.conduction, &r.addition)?;
    }
}
