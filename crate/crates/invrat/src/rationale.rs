//! Differentiable binary rationale masks and the sparsity/continuity
//! regularizer.
//!
//! Masks are sampled per token with a two-way Gumbel-softmax and a
//! straight-through discretization: the forward value is the hard
//! {0,1} decision, gradients flow through the relaxed keep-probability.
//! PAD positions are always forced to 0. At inference no sampling happens:
//! the mask is the temperature-free argmax of the generator's token logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::{Document, MASKED_ID, PAD_ID};
use crate::error::{Error, Result};

/// Keep/drop decisions for one document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationaleMask {
    /// Binary view in {0,1}; the forward-pass value.
    pub hard: Vec<f64>,
    /// Relaxed keep-probabilities in [0,1]; the gradient path.
    pub soft: Vec<f64>,
    pub temperature: f64,
    pub seed: u64,
}

impl RationaleMask {
    pub fn len(&self) -> usize {
        self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty()
    }

    pub fn density(&self) -> f64 {
        if self.hard.is_empty() {
            0.0
        } else {
            self.hard.iter().sum::<f64>() / self.hard.len() as f64
        }
    }
}

fn gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
    -(-u.ln()).ln()
}

/// Difference of two Gumbel draws per non-PAD position (keep minus drop).
/// PAD positions consume no randomness.
pub fn sample_gumbel_diffs(is_pad: &[bool], rng: &mut impl Rng) -> Vec<Option<f64>> {
    is_pad
        .iter()
        .map(|&pad| {
            if pad {
                None
            } else {
                let g_drop = gumbel(rng);
                let g_keep = gumbel(rng);
                Some(g_keep - g_drop)
            }
        })
        .collect()
}

pub(crate) fn soft_keep_probability(logits: &[f64; 2], gumbel_diff: f64, temperature: f64) -> f64 {
    let x = ((logits[1] - logits[0]) + gumbel_diff) * (1.0 / temperature);
    1.0 / (1.0 + (-x).exp())
}

/// Samples a straight-through Gumbel-softmax mask from per-token keep/drop
/// logits (`logits[t][1]` is the keep logit). Deterministic under
/// (logits, temperature, seed).
pub fn sample_mask(
    token_logits: &[[f64; 2]],
    is_pad: &[bool],
    temperature: f64,
    seed: u64,
) -> Result<RationaleMask> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mask = sample_mask_with_rng(token_logits, is_pad, temperature, &mut rng)?;
    Ok(RationaleMask { seed, ..mask })
}

/// As [`sample_mask`] but drawing noise from a caller-provided stream.
pub fn sample_mask_with_rng(
    token_logits: &[[f64; 2]],
    is_pad: &[bool],
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<RationaleMask> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::BadTemperature(temperature));
    }
    assert_eq!(token_logits.len(), is_pad.len());
    let diffs = sample_gumbel_diffs(is_pad, rng);
    let mut hard = Vec::with_capacity(token_logits.len());
    let mut soft = Vec::with_capacity(token_logits.len());
    for (logits, diff) in token_logits.iter().zip(&diffs) {
        match diff {
            None => {
                hard.push(0.0);
                soft.push(0.0);
            }
            Some(g) => {
                let s = soft_keep_probability(logits, *g, temperature);
                soft.push(s);
                hard.push(if s >= 0.5 { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(RationaleMask {
        hard,
        soft,
        temperature,
        seed: 0,
    })
}

/// Deterministic inference mask: keep a token iff its keep logit is at least
/// its drop logit; PAD positions are never kept.
pub fn inference_mask(token_logits: &[[f64; 2]], is_pad: &[bool]) -> Vec<bool> {
    token_logits
        .iter()
        .zip(is_pad)
        .map(|(l, &pad)| !pad && l[1] >= l[0])
        .collect()
}

/// Replaces dropped positions with the MASKED token id. PAD stays PAD; kept
/// positions are unchanged. Labels and tags never change (the caller keeps
/// the document; only the token view is produced here).
pub fn apply_mask(doc: &Document, mask: &RationaleMask) -> Result<Vec<u32>> {
    apply_hard_mask(&doc.tokens, &mask.hard)
}

pub fn apply_hard_mask(tokens: &[u32], hard: &[f64]) -> Result<Vec<u32>> {
    if tokens.len() != hard.len() {
        return Err(Error::MaskLengthMismatch {
            mask: hard.len(),
            doc: tokens.len(),
        });
    }
    Ok(tokens
        .iter()
        .zip(hard)
        .map(|(&t, &m)| {
            if t == PAD_ID {
                PAD_ID
            } else if m >= 0.5 {
                t
            } else {
                MASKED_ID
            }
        })
        .collect())
}

/// Sparsity/continuity regularizer over a batch of mask value sequences
/// (soft values during training):
///
/// ```text
/// lambda1 * | E_b[ ||m||_1 / N ] - alpha |
///   + lambda2 * E_b[ sum_{n=2..N} |m_n - m_{n-1}| ]
/// ```
///
/// With `per_example` the sparsity expectation moves inside the absolute
/// value: `lambda1 * E_b[ | ||m||_1/N - alpha | ]`.
pub fn reg_loss(
    masks: &[Vec<f64>],
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
    per_example: bool,
) -> f64 {
    assert!(!masks.is_empty(), "reg_loss: empty batch");
    let b = masks.len() as f64;
    let sparsity = if per_example {
        masks
            .iter()
            .map(|m| (density(m) - alpha).abs())
            .sum::<f64>()
            / b
    } else {
        (masks.iter().map(|m| density(m)).sum::<f64>() / b - alpha).abs()
    };
    let continuity = masks
        .iter()
        .map(|m| {
            m.windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .sum::<f64>()
        })
        .sum::<f64>()
        / b;
    lambda1 * sparsity + lambda2 * continuity
}

fn density(m: &[f64]) -> f64 {
    assert!(!m.is_empty(), "reg_loss: empty mask");
    m.iter().sum::<f64>() / m.len() as f64
}

/// Mask nodes for one document on a training tape.
pub struct MaskVars {
    /// Relaxed keep-probabilities (the regularizer input).
    pub soft: Vec<Var>,
    /// Forward-hard values used to combine embeddings.
    pub forward: Vec<Var>,
}

/// How the forward mask value is produced on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Hard forward, soft gradient (training).
    StraightThrough,
    /// Fully relaxed; forward equals soft (used by gradient checks).
    SoftOnly,
}

/// Builds mask nodes from per-token logit nodes and pre-drawn Gumbel
/// differences. PAD positions become constant zeros.
pub fn build_mask_vars(
    tape: &mut Tape,
    token_logit_vars: &[Var],
    gumbel_diffs: &[Option<f64>],
    temperature: f64,
    mode: MaskMode,
) -> Result<MaskVars> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::BadTemperature(temperature));
    }
    assert_eq!(token_logit_vars.len(), gumbel_diffs.len());
    let keep_minus_drop = tape.leaf(vec![-1.0, 1.0]);
    let mut soft = Vec::with_capacity(gumbel_diffs.len());
    let mut forward = Vec::with_capacity(gumbel_diffs.len());
    for (logits, diff) in token_logit_vars.iter().zip(gumbel_diffs) {
        match diff {
            None => {
                let z = tape.zeros(1);
                soft.push(z);
                forward.push(z);
            }
            Some(g) => {
                let d = tape.matvec(keep_minus_drop, *logits, 1, 2);
                let noised = tape.add_const(d, *g);
                let scaled = tape.scale(noised, 1.0 / temperature);
                let s = tape.sigmoid(scaled);
                soft.push(s);
                forward.push(match mode {
                    MaskMode::StraightThrough => tape.straight_through(s),
                    MaskMode::SoftOnly => s,
                });
            }
        }
    }
    Ok(MaskVars { soft, forward })
}

/// Tape version of [`reg_loss`] over per-document soft mask nodes.
pub fn reg_loss_var(
    tape: &mut Tape,
    soft_masks: &[Vec<Var>],
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
    per_example: bool,
) -> Var {
    assert!(!soft_masks.is_empty(), "reg_loss_var: empty batch");
    let b = soft_masks.len();

    let densities: Vec<Var> = soft_masks
        .iter()
        .map(|m| {
            let all = tape.sum_many(m);
            let total = tape.sum_all(all);
            tape.scale(total, 1.0 / m.len() as f64)
        })
        .collect();
    let sparsity = if per_example {
        let devs: Vec<Var> = densities
            .iter()
            .map(|d| {
                let c = tape.add_const(*d, -alpha);
                tape.abs(c)
            })
            .collect();
        tape.mean_many(&devs)
    } else {
        let mean_density = tape.mean_many(&densities);
        let centered = tape.add_const(mean_density, -alpha);
        tape.abs(centered)
    };

    let mut transitions: Vec<Var> = Vec::new();
    for m in soft_masks {
        if m.len() < 2 {
            continue;
        }
        for w in m.windows(2) {
            let d = tape.sub(w[1], w[0]);
            transitions.push(tape.abs(d));
        }
    }
    let continuity = if transitions.is_empty() {
        tape.zeros(1)
    } else {
        let total = tape.sum_many(&transitions);
        tape.scale(total, 1.0 / b as f64)
    };

    let s_term = tape.scale(sparsity, lambda1);
    let c_term = tape.scale(continuity, lambda2);
    tape.add(s_term, c_term)
}
