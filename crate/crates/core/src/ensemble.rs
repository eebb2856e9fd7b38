//! One-vs-one ensemble of three binary MLPs (UP/DOWN, UP/NO_MOVE,
//! DOWN/NO_MOVE) producing per-class confidence scores, plus the
//! confidence-threshold gate.
//!
//! Each class appears in exactly two pairwise models; its raw score is the
//! mean of its probability across those two, and the three raw scores are
//! normalized by their sum (3/2) so the final scores form a distribution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::NormState;
use crate::labeler::Label;
use crate::neural::{self, MlpWeights, NeuralError, TrainSample};

pub const ENSEMBLE_FILE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("ensemble file invalid: {0}")]
    BadFile(String),
}

/// Final prediction of the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Up,
    Down,
    NoMove,
    NoConfidence,
}

impl Decision {
    pub fn is_actionable(self) -> bool {
        matches!(self, Decision::Up | Decision::Down)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Up => "UP",
            Decision::Down => "DOWN",
            Decision::NoMove => "NO_MOVE",
            Decision::NoConfidence => "NO_CONFIDENCE",
        }
    }

    pub fn matches(self, truth: Label) -> bool {
        matches!(
            (self, truth),
            (Decision::Up, Label::Up) | (Decision::Down, Label::Down) | (Decision::NoMove, Label::NoMove)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceScores {
    pub up: f64,
    pub no_move: f64,
    pub down: f64,
}

impl ConfidenceScores {
    /// Winning class with deterministic tie-break UP > NO_MOVE > DOWN.
    pub fn winner(&self) -> (Decision, f64) {
        if self.up >= self.no_move && self.up >= self.down {
            (Decision::Up, self.up)
        } else if self.no_move >= self.down {
            (Decision::NoMove, self.no_move)
        } else {
            (Decision::Down, self.down)
        }
    }
}

/// The three pairwise models plus the feature-normalization state they
/// were trained with, versioned for atomic swap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub version: u64,
    pub file_version: u32,
    /// UP vs DOWN; output classes [UP, DOWN].
    pub m_ud: MlpWeights,
    /// UP vs NO_MOVE; output classes [UP, NO_MOVE].
    pub m_un: MlpWeights,
    /// DOWN vs NO_MOVE; output classes [DOWN, NO_MOVE].
    pub m_dn: MlpWeights,
    pub norm: NormState,
}

impl EnsembleWeights {
    /// Fresh ensemble for input dimension `input_dim` with the given
    /// hidden layer sizes. Sub-models get distinct derived seeds.
    pub fn init(input_dim: usize, hidden: &[usize], norm: NormState, seed: u64) -> Result<Self, EnsembleError> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(2);
        Ok(Self {
            version: 0,
            file_version: ENSEMBLE_FILE_VERSION,
            m_ud: neural::init_weights(&dims, seed)?,
            m_un: neural::init_weights(&dims, seed.wrapping_add(1))?,
            m_dn: neural::init_weights(&dims, seed.wrapping_add(2))?,
            norm,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.m_ud.input_dim()
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        self.m_ud.validate()?;
        self.m_un.validate()?;
        self.m_dn.validate()?;
        let d = self.m_ud.input_dim();
        if self.m_un.input_dim() != d || self.m_dn.input_dim() != d {
            return Err(EnsembleError::BadFile("input dims differ across models".into()));
        }
        if [&self.m_ud, &self.m_un, &self.m_dn].iter().any(|m| m.output_dim() != 2) {
            return Err(EnsembleError::BadFile("pairwise models must have 2 outputs".into()));
        }
        if self.norm.dim() != d {
            return Err(EnsembleError::BadFile("norm state dim mismatch".into()));
        }
        Ok(())
    }
}

/// Per-class confidence scores from the three pairwise models.
pub fn predict(e: &EnsembleWeights, x: &[f64]) -> Result<ConfidenceScores, EnsembleError> {
    let p_ud = neural::forward(&e.m_ud, x)?;
    let p_un = neural::forward(&e.m_un, x)?;
    let p_dn = neural::forward(&e.m_dn, x)?;
    let raw_up = (p_ud[0] + p_un[0]) / 2.0;
    let raw_no = (p_un[1] + p_dn[1]) / 2.0;
    let raw_dn = (p_ud[1] + p_dn[0]) / 2.0;
    let sum = raw_up + raw_no + raw_dn; // = 3/2 up to rounding
    Ok(ConfidenceScores { up: raw_up / sum, no_move: raw_no / sum, down: raw_dn / sum })
}

/// Threshold gate: winner, or NO_CONFIDENCE when the winning score is
/// below the threshold. Returns the winning score either way.
pub fn decide(s: &ConfidenceScores, threshold: f64) -> (Decision, f64) {
    let (winner, score) = s.winner();
    if score < threshold {
        (Decision::NoConfidence, score)
    } else {
        (winner, score)
    }
}

/// Routes each labeled sample to the two pairwise models involving its
/// label and applies one mean-gradient SGD step per model. Returns a new
/// ensemble with the version incremented.
pub fn train_ovo(
    e: &EnsembleWeights,
    batch: &[(Vec<f64>, Label)],
    lr: f64,
) -> Result<EnsembleWeights, EnsembleError> {
    let mut ud = Vec::new();
    let mut un = Vec::new();
    let mut dn = Vec::new();
    for (features, lbl) in batch {
        match lbl {
            Label::Up => {
                ud.push(TrainSample { features: features.clone(), class_index: 0 });
                un.push(TrainSample { features: features.clone(), class_index: 0 });
            }
            Label::Down => {
                ud.push(TrainSample { features: features.clone(), class_index: 1 });
                dn.push(TrainSample { features: features.clone(), class_index: 0 });
            }
            Label::NoMove => {
                un.push(TrainSample { features: features.clone(), class_index: 1 });
                dn.push(TrainSample { features: features.clone(), class_index: 1 });
            }
        }
    }
    let step = |m: &MlpWeights, sub: &[TrainSample]| -> Result<MlpWeights, EnsembleError> {
        if sub.is_empty() {
            return Ok(m.clone());
        }
        let g = neural::backward(m, sub)?;
        Ok(neural::sgd_step(m, &g, lr))
    };
    Ok(EnsembleWeights {
        version: e.version + 1,
        file_version: e.file_version,
        m_ud: step(&e.m_ud, &ud)?,
        m_un: step(&e.m_un, &un)?,
        m_dn: step(&e.m_dn, &dn)?,
        norm: e.norm.clone(),
    })
}

pub fn to_json(e: &EnsembleWeights) -> String {
    serde_json::to_string_pretty(e).expect("ensemble serialize")
}

pub fn from_json(s: &str) -> Result<EnsembleWeights, EnsembleError> {
    let e: EnsembleWeights =
        serde_json::from_str(s).map_err(|err| EnsembleError::BadFile(err.to_string()))?;
    e.validate()?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DEFAULT_NORM_ALPHA;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(input_dim: usize) -> EnsembleWeights {
        let mut e = EnsembleWeights::init(
            input_dim,
            &[4],
            NormState::new(input_dim, DEFAULT_NORM_ALPHA),
            0,
        )
        .unwrap();
        for m in [&mut e.m_ud, &mut e.m_un, &mut e.m_dn] {
            for l in m.layers.iter_mut() {
                l.w.iter_mut().for_each(|v| *v = 0.0);
                l.b.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        e
    }

    /// Ensemble whose sub-models emit fixed pairwise probabilities,
    /// realized through output-layer biases on a zeroed network.
    fn fixed_probs(ud: f64, un: f64, dn: f64) -> EnsembleWeights {
        let mut e = zeroed(2);
        let logit = |p: f64| (p / (1.0 - p)).ln();
        e.m_ud.layers.last_mut().unwrap().b[0] = logit(ud);
        e.m_un.layers.last_mut().unwrap().b[0] = logit(un);
        e.m_dn.layers.last_mut().unwrap().b[0] = logit(dn);
        e
    }

    #[test]
    fn pairwise_averaging_matches_hand_calc() {
        // m_ud -> (U:0.8, D:0.2), m_un -> (U:0.6, N:0.4), m_dn -> (D:0.3, N:0.7)
        let e = fixed_probs(0.8, 0.6, 0.3);
        let s = predict(&e, &[0.0, 0.0]).unwrap();
        assert!((s.up - 0.7 / 1.5).abs() < 1e-9, "up {}", s.up);
        assert!((s.no_move - 0.55 / 1.5).abs() < 1e-9);
        assert!((s.down - 0.25 / 1.5).abs() < 1e-9);
    }

    #[test]
    fn all_zero_models_uniform_scores() {
        let e = zeroed(3);
        let s = predict(&e, &[1.0, -1.0, 0.5]).unwrap();
        assert!((s.up - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.no_move - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.down - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn up_down_swap_symmetry() {
        let e = fixed_probs(0.8, 0.6, 0.3);
        // swap m_un <-> m_dn and flip m_ud's outputs
        let swapped = EnsembleWeights {
            m_ud: fixed_probs(0.2, 0.0, 0.0).m_ud,
            m_un: e.m_dn.clone(),
            m_dn: e.m_un.clone(),
            ..e.clone()
        };
        let s = predict(&e, &[0.0, 0.0]).unwrap();
        let t = predict(&swapped, &[0.0, 0.0]).unwrap();
        assert!((s.up - t.down).abs() < 1e-9);
        assert!((s.down - t.up).abs() < 1e-9);
        assert!((s.no_move - t.no_move).abs() < 1e-9);
    }

    #[test]
    fn decide_examples() {
        let s = ConfidenceScores { up: 0.70, no_move: 0.20, down: 0.10 };
        assert_eq!(decide(&s, 0.6), (Decision::Up, 0.70));

        let s = ConfidenceScores { up: 0.40, no_move: 0.35, down: 0.25 };
        assert_eq!(decide(&s, 0.6), (Decision::NoConfidence, 0.40));

        // valid but not actionable
        let s = ConfidenceScores { up: 0.05, no_move: 0.90, down: 0.05 };
        assert_eq!(decide(&s, 0.6), (Decision::NoMove, 0.90));
    }

    #[test]
    fn decide_tie_break_order() {
        let s = ConfidenceScores { up: 0.4, no_move: 0.4, down: 0.2 };
        assert_eq!(s.winner().0, Decision::Up);
        let s = ConfidenceScores { up: 0.2, no_move: 0.4, down: 0.4 };
        assert_eq!(s.winner().0, Decision::NoMove);
    }

    #[test]
    fn routing_rule() {
        let e = EnsembleWeights::init(2, &[4], NormState::new(2, DEFAULT_NORM_ALPHA), 3).unwrap();
        let batch: Vec<(Vec<f64>, Label)> =
            (0..5).map(|i| (vec![i as f64, -(i as f64)], Label::NoMove)).collect();
        let trained = train_ovo(&e, &batch, 0.1).unwrap();
        assert_eq!(trained.m_ud, e.m_ud, "m_ud must not see NO_MOVE-only batches");
        assert_ne!(trained.m_un, e.m_un);
        assert_ne!(trained.m_dn, e.m_dn);
        assert_eq!(trained.version, e.version + 1);
    }

    #[test]
    fn version_strictly_increases() {
        let e0 = EnsembleWeights::init(2, &[4], NormState::new(2, DEFAULT_NORM_ALPHA), 3).unwrap();
        let batch = vec![(vec![1.0, 0.0], Label::Up)];
        let e1 = train_ovo(&e0, &batch, 0.01).unwrap();
        let e2 = train_ovo(&e1, &batch, 0.01).unwrap();
        assert!(e0.version < e1.version && e1.version < e2.version);
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        // run-once oracle, pinned as a regression bound
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let blob = |class: usize, rng: &mut ChaCha8Rng| {
            let (cx, cy) = match class {
                0 => (2.0, 0.0),
                1 => (0.0, 2.0),
                _ => (-2.0, -2.0),
            };
            vec![cx + rng.gen_range(-0.6..0.6), cy + rng.gen_range(-0.6..0.6)]
        };
        let labels = [Label::Up, Label::NoMove, Label::Down];
        let mut e = EnsembleWeights::init(2, &[8], NormState::new(2, DEFAULT_NORM_ALPHA), 5).unwrap();
        for _ in 0..50 {
            let batch: Vec<(Vec<f64>, Label)> = (0..30)
                .map(|i| (blob(i % 3, &mut rng), labels[i % 3]))
                .collect();
            e = train_ovo(&e, &batch, 0.5).unwrap();
        }
        let correct = (0..300)
            .filter(|i| {
                let class = i % 3;
                let x = blob(class, &mut rng);
                let (d, _) = decide(&predict(&e, &x).unwrap(), 0.0);
                d.matches(labels[class])
            })
            .count();
        assert!(correct > 270, "held-out accuracy {}/300", correct);
    }

    #[test]
    fn ensemble_file_round_trip() {
        let e = EnsembleWeights::init(4, &[3], NormState::new(4, DEFAULT_NORM_ALPHA), 11).unwrap();
        let json = to_json(&e);
        assert_eq!(from_json(&json).unwrap(), e);
        // mismatched norm dim rejected
        let mut bad = e.clone();
        bad.norm = NormState::new(3, DEFAULT_NORM_ALPHA);
        assert!(from_json(&to_json(&bad)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn scores_normalized(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 3)) {
            let e = EnsembleWeights::init(3, &[5], NormState::new(3, DEFAULT_NORM_ALPHA), seed).unwrap();
            let s = predict(&e, &x).unwrap();
            prop_assert!((s.up + s.no_move + s.down - 1.0).abs() < 1e-9);
            prop_assert!(s.up >= 0.0 && s.no_move >= 0.0 && s.down >= 0.0);
        }

        #[test]
        fn threshold_monotone(
            up in 0.0f64..1.0, no in 0.0f64..1.0, dn in 0.0f64..1.0,
            t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
        ) {
            let sum = (up + no + dn).max(1e-9);
            let s = ConfidenceScores { up: up / sum, no_move: no / sum, down: dn / sum };
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (d_lo, _) = decide(&s, lo);
            let (d_hi, _) = decide(&s, hi);
            // raising the threshold can only move decisions toward NO_CONFIDENCE
            if d_lo == Decision::NoConfidence {
                prop_assert_eq!(d_hi, Decision::NoConfidence);
            }
            // argmax unaffected by normalization scale
            let scaled = ConfidenceScores { up: up, no_move: no, down: dn };
            prop_assert_eq!(s.winner().0, scaled.winner().0);
        }
    }
}
