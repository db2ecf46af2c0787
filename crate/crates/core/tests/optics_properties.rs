mod common;

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use swapsim::fock::{ModeLayout, Occupation, OpticalMode, Pol, PureState};
use swapsim::optics::{apply_unitary, ModeUnitary};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn elements_are_unitary(us in common::element()) {
        common::check_unitary(us)?;
    }

    #[test]
    fn elements_preserve_norm_and_invert(
        case in (common::state(), prop::collection::vec(common::element(), 1..4)),
    ) {
        common::check_norm_and_inverse(case)?;
    }

    #[test]
    fn click_probabilities_sum_to_one(case in common::povm_case()) {
        common::check_povm(case)?;
    }

    #[test]
    fn loss_preserves_trace(case in common::loss_case()) {
        common::check_loss_trace(case)?;
    }

    #[test]
    fn loss_composes(case in common::loss_case()) {
        common::check_loss_composes(case)?;
    }

    #[test]
    fn hom_coincidence_follows_visibility(v in 0.0..=1.0f64) {
        common::check_hom(v)?;
    }
}

#[test]
fn hom_dip_is_exact() {
    // indistinguishable photons never leave in different ports
    let l = Arc::new(ModeLayout::numbered(2, 1).unwrap());
    let mut occ = Occupation::zeros(l.optical_count());
    occ.counts_mut()[0] = 1;
    occ.counts_mut()[2] = 1;
    let s = PureState::from_terms(l.clone(), [(occ, Complex64::new(1.0, 0.0))]).unwrap();
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let bs = ModeUnitary::new(
        vec![OpticalMode::new(1, Pol::H), OpticalMode::new(2, Pol::H)],
        DMatrix::from_row_slice(2, 2, &[r, r, r, -r]),
    )
    .unwrap();
    let out = apply_unitary(&s, &bs).unwrap();
    let split: f64 = out
        .iter()
        .filter(|(o, _)| o.get(0) == 1 && o.get(2) == 1)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    assert!(split < 1e-12);
}
