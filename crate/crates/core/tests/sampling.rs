use fermap::bell_tomography::{estimate_all_k_rdms, estimate_rdm_element};
use fermap::pauli::Letter;
use fermap::qudit_hw::{estimate_hw_correlator, qubit_fiducial, qutrit_fiducial, HwTerm};
use fermap::state_sim::{bell_measure_all_pairs, prepare_xi, sample_bell_shots, BellSampler, DenseState};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

fn joint_index(outcomes: &[fermap::state_sim::PairOutcome], dim: usize) -> usize {
    outcomes.iter().fold(0, |acc, o| acc * dim * dim + o.h * dim + o.l)
}

#[test]
fn sampled_frequencies_follow_born_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let system = DenseState::random(2, 2, &mut rng).unwrap();
    let register = DenseState::with_ancillas(&system, &prepare_xi()).unwrap();
    let sampler = BellSampler::new(&register).unwrap();
    let probs = sampler.joint_probabilities();
    let stream = sampler.sample_stream(40_000, 4, 2).unwrap();
    let mut counts = vec![0u64; probs.len()];
    for shot in &stream.shots {
        counts[joint_index(&shot.outcomes, 2)] += 1;
    }
    // 15 degrees of freedom, 0.1% critical value 37.70
    let chi2 = chi_square(&counts, &probs);
    assert!(chi2 < 37.70, "chi2 = {chi2}");
}

#[test]
fn sequential_collapse_matches_joint_sampler() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let system = DenseState::random(2, 2, &mut rng).unwrap();
    let register = DenseState::with_ancillas(&system, &prepare_xi()).unwrap();
    let probs = BellSampler::new(&register).unwrap().joint_probabilities();
    let mut counts = vec![0u64; probs.len()];
    let mut shot_rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20_000 {
        let shot = bell_measure_all_pairs(&register, &mut shot_rng).unwrap();
        counts[joint_index(&shot.outcomes, 2)] += 1;
    }
    let chi2 = chi_square(&counts, &probs);
    assert!(chi2 < 37.70, "chi2 = {chi2}");
}

#[test]
fn qutrit_born_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let system = DenseState::random(3, 1, &mut rng).unwrap();
    let register = DenseState::with_ancillas(&system, &qutrit_fiducial().state()).unwrap();
    let sampler = BellSampler::new(&register).unwrap();
    let probs = sampler.joint_probabilities();
    let stream = sampler.sample_stream(30_000, 9, 3).unwrap();
    let mut counts = vec![0u64; 9];
    for shot in &stream.shots {
        counts[joint_index(&shot.outcomes, 3)] += 1;
    }
    // 8 degrees of freedom, 0.1% critical value 26.12
    let chi2 = chi_square(&counts, &probs);
    assert!(chi2 < 26.12, "chi2 = {chi2}");
}

#[test]
fn streams_do_not_depend_on_worker_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let system = DenseState::random(2, 3, &mut rng).unwrap();
    let reference = sample_bell_shots(&system, &prepare_xi(), 10_000, 77, 1).unwrap();
    for workers in [2, 3, 8] {
        assert_eq!(sample_bell_shots(&system, &prepare_xi(), 10_000, 77, workers).unwrap(), reference);
    }
    let a = estimate_all_k_rdms(&reference, 2, 3).unwrap();
    let b = estimate_all_k_rdms(&sample_bell_shots(&system, &prepare_xi(), 10_000, 77, 4).unwrap(), 2, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn qudit_path_reduces_to_qubit_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let system = DenseState::random(2, 2, &mut rng).unwrap();
    let stream = sample_bell_shots(&system, &prepare_xi(), 20_000, 5, 2).unwrap();
    let xi = qubit_fiducial();
    // X^f Z^g as a phase times a Pauli letter: XZ = -i Y
    let labels = [((1, 0), Letter::X, Complex64::new(1.0, 0.0)), ((0, 1), Letter::Z, Complex64::new(1.0, 0.0)), ((1, 1), Letter::Y, Complex64::new(0.0, -1.0))];
    for (fg, letter, phase) in labels {
        let qudit = estimate_hw_correlator(&stream, &[HwTerm::new(fg.0, fg.1, 1)], &xi).unwrap();
        let qubit = estimate_rdm_element(&stream, &[1], &[letter]).unwrap();
        assert!((qudit.value - phase * qubit.value).norm() < 1e-12, "{letter:?}");
        assert!((qudit.std_error - qubit.std_error).abs() < 1e-12);
    }
    for (fa, la, pa) in labels {
        for (fb, lb, pb) in labels {
            let qudit =
                estimate_hw_correlator(&stream, &[HwTerm::new(fa.0, fa.1, 0), HwTerm::new(fb.0, fb.1, 1)], &xi)
                    .unwrap();
            let qubit = estimate_rdm_element(&stream, &[0, 1], &[la, lb]).unwrap();
            assert!((qudit.value - pa * pb * qubit.value).norm() < 1e-12, "{la:?}{lb:?}");
        }
    }
}

fn std_dev(values: &[Complex64]) -> f64 {
    let n = values.len() as f64;
    let mean: Complex64 = values.iter().sum::<Complex64>() / n;
    (values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn qutrit_variance_grows_as_four_to_the_k() {
    let xi = qutrit_fiducial();
    let system = DenseState::zero_state(3, 2).unwrap();
    let register = DenseState::with_ancillas(&system, &xi.state()).unwrap();
    let sampler = BellSampler::new(&register).unwrap();
    let mut one = Vec::new();
    let mut two = Vec::new();
    for seed in 0..200 {
        let stream = sampler.sample_stream(1000, 1000 + seed, 1).unwrap();
        one.push(estimate_hw_correlator(&stream, &[HwTerm::new(1, 0, 0)], &xi).unwrap().value);
        two.push(estimate_hw_correlator(&stream, &[HwTerm::new(1, 0, 0), HwTerm::new(1, 0, 1)], &xi).unwrap().value);
    }
    let ratio = std_dev(&two) / std_dev(&one);
    assert!((1.6..=2.4).contains(&ratio), "ratio = {ratio}");
}
