use nnspin_core::hamiltonian::{build_vsd, Geometry, SpinCoefficients};
use nnspin_core::lindblad::{reference_spin_trajectory, NoiseScaling, OccupationRecord};
use nnspin_core::spectral::{
    distinct_gaps, find_peaks, gls_refine, power_spectrum, reconstruct_eigenvalues, FitOptions, SpectralResult,
};
use proptest::prelude::*;

fn noisy_reference() -> OccupationRecord {
    let h = build_vsd(&SpinCoefficients::calibrated(), &Geometry::reference());
    let noise = NoiseScaling {
        tau_pulse: 0.1,
        t1: 30.0,
        t_phi: 50.0,
    };
    reference_spin_trajectory(&h, 0.3, 256, Some(noise), 1).unwrap()
}

#[test]
fn refined_frequencies_invariant_under_rescaling() {
    let rec = noisy_reference();
    let spec = power_spectrum(&rec).unwrap();
    let peaks = find_peaks(&spec, 4).unwrap();
    let opts = FitOptions::default();
    let base = gls_refine(&rec, &peaks, &opts).unwrap();
    for c in [0.5, 0.1] {
        let scaled = OccupationRecord {
            dt: rec.dt,
            probabilities: rec.probabilities.iter().map(|p| p.map(|v| c * v)).collect(),
        };
        let r = gls_refine(&scaled, &peaks, &opts).unwrap();
        for (a, b) in r.omega.iter().zip(&base.omega) {
            assert!((a - b).abs() < 1e-6, "c = {c}: {:?} vs {:?}", r.omega, base.omega);
        }
    }
}

#[test]
fn reference_dynamics_yield_the_three_gaps() {
    let rec = noisy_reference();
    let peaks = find_peaks(&power_spectrum(&rec).unwrap(), 4).unwrap();
    assert_eq!(peaks.len(), 3);
    let r = gls_refine(&rec, &peaks, &FitOptions::default()).unwrap();
    for (w, exact) in r.omega.iter().zip([2.5254, 3.3951, 5.9205]) {
        assert!((w - exact).abs() < 0.06);
    }
}

fn exact_result(omega: Vec<f64>) -> SpectralResult {
    let n = omega.len();
    SpectralResult {
        omega,
        omega_err: vec![1e-3; n],
        sigma: 0.0,
        l: 1.0,
        gamma: 1.0,
        loglik: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reconstruction_recovers_generating_spectrum(
        lo in -3.0f64..3.0,
        g1 in 0.2f64..3.0,
        g2 in 0.2f64..3.0,
        slot in 0usize..3,
        shift in 0.0f64..2.0,
    ) {
        // three distinct levels with one of them doubled
        let levels = [lo, lo + g1, lo + g1 + g2];
        let mut l = vec![levels[0], levels[1], levels[2]];
        l.insert(slot, levels[slot]);
        let l: [f64; 4] = l.try_into().unwrap();
        let sh = l.map(|v| v + shift);
        let cubed = sh.map(|v| v.powi(3));
        let r1 = exact_result(distinct_gaps(&sh));
        let r3 = exact_result(distinct_gaps(&cubed));
        let rec = reconstruct_eigenvalues(&r1, &r3, shift, sh.iter().sum()).unwrap();
        let mut got = rec.lambda;
        got.sort_by(f64::total_cmp);
        for k in 0..4 {
            prop_assert!((got[k] - l[k]).abs() < 1e-9, "{:?} vs {:?} ({})", got, l, rec.case_id);
        }
    }
}
