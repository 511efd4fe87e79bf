//! Systolic/diastolic phase bits from a cycle of cavity areas.
//!
//! A valid phase sequence is cyclic with at most two transitions: either
//! constant, or a single contiguous (wrapping) systolic arc.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SYSTOLE: u8 = 1;
pub const DIASTOLE: u8 = 0;

/// Bits with at most two cyclic transitions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseSequence(Vec<u8>);

impl PhaseSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Validation("phase bits must be 0 or 1".into()));
        }
        let t = cyclic_transitions(&bits);
        if t > 2 {
            return Err(Error::Validation(format!(
                "phase sequence has {t} cyclic transitions; at most 2 allowed"
            )));
        }
        Ok(PhaseSequence(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Positions `t` where `bits[t] != bits[(t + 1) % n]`.
pub fn cyclic_transitions(bits: &[u8]) -> usize {
    let n = bits.len();
    (0..n).filter(|&t| bits[t] != bits[(t + 1) % n]).count()
}

/// Raw bits: 1 where the area is below the sequence's mid-range
/// `(min + max) / 2`.
pub fn threshold_phase<T: Float>(areas: &[T]) -> Result<Vec<u8>> {
    if areas.is_empty() || areas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Validation("areas must be a non-empty finite sequence".into()));
    }
    let min = areas.iter().copied().fold(T::infinity(), T::min);
    let max = areas.iter().copied().fold(T::neg_infinity(), T::max);
    if min == max {
        return Err(Error::Degenerate("all areas are equal; no systole to threshold".into()));
    }
    let two = T::one() + T::one();
    let tau = (min + max) / two;
    Ok(areas.iter().map(|&a| if a < tau { SYSTOLE } else { DIASTOLE }).collect())
}

/// Every sequence with at most two cyclic transitions, in tie-break order:
/// all-diastole, all-systole, then single arcs by (start, length).
pub fn candidates(n: usize) -> impl Iterator<Item = Vec<u8>> {
    let constants = [DIASTOLE, SYSTOLE].into_iter().map(move |b| vec![b; n]);
    let arcs = (0..n).flat_map(move |start| {
        (1..n).map(move |len| {
            let mut bits = vec![DIASTOLE; n];
            for k in 0..len {
                bits[(start + k) % n] = SYSTOLE;
            }
            bits
        })
    });
    constants.chain(arcs)
}

/// The valid sequence that agrees with `raw` on the most frames, found by
/// scanning all `n(n−1) + 2` candidates. Ties go to fewer transitions, then
/// to the earlier systole start, then to the shorter arc.
pub fn regularize_phase(raw: &[u8]) -> PhaseSequence {
    let mut best: Option<(usize, Vec<u8>)> = None;
    for cand in candidates(raw.len()) {
        let agree = cand.iter().zip(raw).filter(|(a, b)| a == b).count();
        if best.as_ref().is_none_or(|(b, _)| agree > *b) {
            best = Some((agree, cand));
        }
    }
    PhaseSequence(best.map(|(_, c)| c).unwrap_or_default())
}

/// Thresholds then regularizes, falling back to all-diastole when the
/// areas are constant.
pub fn infer_phase<T: Float>(areas: &[T]) -> PhaseSequence {
    match threshold_phase(areas) {
        Ok(raw) => regularize_phase(&raw),
        Err(_) => PhaseSequence(vec![DIASTOLE; areas.len()]),
    }
}

/// Fraction of frames whose bits agree, pooled over all subjects.
pub fn phase_accuracy(predicted: &[PhaseSequence], truth: &[PhaseSequence]) -> Result<f64> {
    let raw_pred: Vec<&[u8]> = predicted.iter().map(|p| p.bits()).collect();
    let raw_truth: Vec<&[u8]> = truth.iter().map(|p| p.bits()).collect();
    bit_accuracy(&raw_pred, &raw_truth)
}

/// Like [`phase_accuracy`] but for unregularized bit vectors.
pub fn bit_accuracy(predicted: &[&[u8]], truth: &[&[u8]]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predicted sequences vs {} truth sequences",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut agree, mut total) = (0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::Validation(format!(
                "sequence lengths differ: {} vs {}",
                p.len(),
                t.len()
            )));
        }
        agree += p.iter().zip(t.iter()).filter(|(a, b)| a == b).count();
        total += p.len();
    }
    if total == 0 {
        return Err(Error::Validation("no frames to score".into()));
    }
    Ok(agree as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        let mut a = vec![10.0f64; 20];
        a[3] = 2.0;
        a[4] = 2.0;
        a[5] = 2.0;
        let bits = threshold_phase(&a).unwrap();
        let ones: Vec<usize> = (0..20).filter(|&i| bits[i] == 1).collect();
        assert_eq!(ones, vec![3, 4, 5]);

        let ramp: Vec<f32> = (1..=20).map(|v| v as f32).collect();
        let bits = threshold_phase(&ramp).unwrap();
        assert_eq!(&bits[..10], &[1; 10]);
        assert_eq!(&bits[10..], &[0; 10]);

        assert!(matches!(threshold_phase(&[4.0f64; 20]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn candidate_count() {
        assert_eq!(candidates(20).count(), 382);
        assert!(candidates(20).all(|c| cyclic_transitions(&c) <= 2));
    }

    #[test]
    fn regularize_examples() {
        let mut clean = vec![0u8; 20];
        clean[17..].fill(1);
        clean[..2].fill(1);
        assert_eq!(regularize_phase(&clean).bits(), clean.as_slice());

        let mut raw = vec![0u8; 20];
        raw[0] = 1;
        raw[2..5].fill(1);
        let mut want = vec![0u8; 20];
        want[..5].fill(1);
        assert_eq!(regularize_phase(&raw).bits(), want.as_slice());
    }

    #[test]
    fn alternating_bits_pick_the_single_frame_arc() {
        // Constants agree on 10 frames, but a one-frame arc on a systolic bit
        // agrees on 11; the earliest such arc starts at frame 0.
        let raw: Vec<u8> = (0..20).map(|i| (i % 2 == 0) as u8).collect();
        let mut want = vec![0u8; 20];
        want[0] = 1;
        assert_eq!(regularize_phase(&raw).bits(), want.as_slice());
    }

    #[test]
    fn accuracy_examples() {
        let a = PhaseSequence::new([vec![1; 5], vec![0; 15]].concat()).unwrap();
        let b = PhaseSequence::new([vec![0; 5], vec![1; 15]].concat()).unwrap();
        assert_eq!(phase_accuracy(&[a.clone()], &[a.clone()]).unwrap(), 1.0);
        assert_eq!(phase_accuracy(&[a.clone()], &[b]).unwrap(), 0.0);
        let c = PhaseSequence::new([vec![1; 6], vec![0; 14]].concat()).unwrap();
        assert_eq!(phase_accuracy(&[c], &[a.clone()]).unwrap(), 0.95);
        assert!(phase_accuracy(&[a.clone(), a.clone()], &[a]).is_err());
    }

    #[test]
    fn sequence_rejects_three_transitions() {
        let bits = [vec![1, 0, 1], vec![0; 17]].concat();
        assert!(PhaseSequence::new(bits).is_err());
    }
}
