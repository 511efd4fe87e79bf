use cardioquant::phase::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 20;

fn transitions(bits: &[u8]) -> usize {
    (0..bits.len()).filter(|&i| bits[i] != bits[(i + 1) % bits.len()]).count()
}

/// Every 20-bit sequence with at most two cyclic transitions, found by
/// brute force over all 2^20 bit patterns.
fn valid_by_brute_force() -> Vec<Vec<u8>> {
    (0u32..1 << N)
        .map(|m| (0..N).map(|i| ((m >> i) & 1) as u8).collect::<Vec<u8>>())
        .filter(|b| transitions(b) <= 2)
        .collect()
}

fn agreement(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

#[test]
fn brute_force_finds_382_candidates() {
    let valid = valid_by_brute_force();
    assert_eq!(valid.len(), 382);
    let mut listed: Vec<Vec<u8>> = candidates(N).collect();
    let mut brute = valid;
    listed.sort();
    brute.sort();
    assert_eq!(listed, brute);
}

#[test]
fn regularized_output_is_optimal_on_random_inputs() {
    let valid = valid_by_brute_force();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let raw: Vec<u8> = (0..N).map(|_| rng.random_bool(0.5) as u8).collect();
        let out = regularize_phase(&raw);
        assert!(transitions(out.bits()) <= 2);
        let best = valid.iter().map(|c| agreement(c, &raw)).max().unwrap();
        assert_eq!(agreement(out.bits(), &raw), best);
    }
}

#[test]
fn valid_input_is_a_fixed_point() {
    for c in valid_by_brute_force().iter().step_by(7) {
        assert_eq!(regularize_phase(c).bits(), c.as_slice());
    }
}

#[test]
fn infer_phase_recovers_a_smooth_cycle() {
    let areas: Vec<f64> = (0..N).map(|t| 300.0 + 100.0 * (2.0 * std::f64::consts::PI * t as f64 / N as f64).cos()).collect();
    let p = infer_phase(&areas);
    let ones: Vec<usize> = (0..N).filter(|&t| p.bits()[t] == SYSTOLE).collect();
    assert_eq!(ones, (6..15).collect::<Vec<_>>());
    assert_eq!(infer_phase(&[5.0f64; N]).bits(), &[DIASTOLE; N]);
}

proptest! {
    #[test]
    fn never_more_than_two_transitions(raw in prop::collection::vec(0u8..2, 3..40)) {
        let out = regularize_phase(&raw);
        prop_assert_eq!(out.len(), raw.len());
        prop_assert!(transitions(out.bits()) <= 2);
    }

    #[test]
    fn regularizing_never_lowers_agreement_with_a_valid_truth(truth_idx in 0usize..382, flips in prop::collection::vec(0usize..N, 0..4)) {
        let truth: Vec<u8> = candidates(N).nth(truth_idx).unwrap();
        let mut raw = truth.clone();
        for f in flips {
            raw[f] ^= 1;
        }
        let out = regularize_phase(&raw);
        // With at most three flips the nearest valid sequence cannot be
        // further from the truth than the noisy input is.
        prop_assert!(agreement(out.bits(), &truth) + 3 >= agreement(&raw, &truth));
    }
}
