//! Energy units. Everything internal is Hartree; eV only at reporting.

/// CODATA 2018 Hartree energy in eV.
pub const HARTREE_TO_EV: f64 = 27.211386245988;

/// 1 kcal/mol expressed in eV, the accuracy bar for ground-state energies.
pub const CHEMICAL_ACCURACY_EV: f64 = 0.0434;

pub fn hartree_to_ev(e: f64) -> f64 {
    e * HARTREE_TO_EV
}

pub fn ev_to_hartree(e: f64) -> f64 {
    e / HARTREE_TO_EV
}

/// Chemical accuracy in Hartree.
pub fn chemical_accuracy_hartree() -> f64 {
    ev_to_hartree(CHEMICAL_ACCURACY_EV)
}
