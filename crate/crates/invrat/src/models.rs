//! Small trainable text networks standing in for a pretrained backbone.
//!
//! Every player (rationale generator, invariant predictor, environment-aware
//! predictor) owns an [`EncoderParams`]: a token-embedding table, one
//! window-3 convolutional layer with tanh, and a 2-logit linear head. The
//! head is applied to the mean-pooled hidden state for classification and
//! per position for the generator's keep/drop logits. The environment-aware
//! predictor additionally owns an [`EnvEmbedding`] whose row is summed into
//! every input position.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::PAD_ID;
use crate::error::{Error, Result};

/// Number of parameter groups in [`EncoderParams`], in optimizer order.
pub const ENCODER_GROUPS: usize = 7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderParams {
    pub vocab: usize,
    pub n_embed: usize,
    pub hidden: usize,
    /// vocab x n_embed, row-major.
    pub embedding: Vec<f64>,
    /// hidden x n_embed: applied to the previous position's vector.
    pub w_prev: Vec<f64>,
    /// hidden x n_embed: applied to the current position's vector.
    pub w_cur: Vec<f64>,
    /// hidden x n_embed: applied to the next position's vector.
    pub w_next: Vec<f64>,
    pub b_hidden: Vec<f64>,
    /// 2 x hidden.
    pub w_head: Vec<f64>,
    pub b_head: Vec<f64>,
}

fn uniform_init(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-0.1..0.1)).collect()
}

impl EncoderParams {
    pub fn init(vocab: usize, n_embed: usize, hidden: usize, rng: &mut impl Rng) -> EncoderParams {
        EncoderParams {
            vocab,
            n_embed,
            hidden,
            embedding: uniform_init(rng, vocab * n_embed),
            w_prev: uniform_init(rng, hidden * n_embed),
            w_cur: uniform_init(rng, hidden * n_embed),
            w_next: uniform_init(rng, hidden * n_embed),
            b_hidden: uniform_init(rng, hidden),
            w_head: uniform_init(rng, 2 * hidden),
            b_head: uniform_init(rng, 2),
        }
    }

    pub fn group_names() -> [&'static str; ENCODER_GROUPS] {
        ["embedding", "w_prev", "w_cur", "w_next", "b_hidden", "w_head", "b_head"]
    }

    pub fn groups(&self) -> [&Vec<f64>; ENCODER_GROUPS] {
        [
            &self.embedding,
            &self.w_prev,
            &self.w_cur,
            &self.w_next,
            &self.b_hidden,
            &self.w_head,
            &self.b_head,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<f64>; ENCODER_GROUPS] {
        [
            &mut self.embedding,
            &mut self.w_prev,
            &mut self.w_cur,
            &mut self.w_next,
            &mut self.b_hidden,
            &mut self.w_head,
            &mut self.b_head,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }
}

/// One embedding row per environment index, summed into the input
/// representation of the environment-aware predictor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvEmbedding {
    pub n_embed: usize,
    /// 4 x n_embed, row-major.
    pub table: Vec<f64>,
}

impl EnvEmbedding {
    pub fn init(n_embed: usize, rng: &mut impl Rng) -> EnvEmbedding {
        EnvEmbedding {
            n_embed,
            table: uniform_init(rng, crate::attributes::NUM_ENVIRONMENTS * n_embed),
        }
    }

    pub fn row(&self, env: u8) -> Result<&[f64]> {
        if env as usize >= crate::attributes::NUM_ENVIRONMENTS {
            return Err(Error::EnvOutOfRange(env));
        }
        let base = env as usize * self.n_embed;
        Ok(&self.table[base..base + self.n_embed])
    }
}

/// Token-embedding lookup: one row per token id.
pub fn embed(params: &EncoderParams, tokens: &[u32]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(tokens.len());
    for &t in tokens {
        if t as usize >= params.vocab {
            return Err(Error::TokenOutOfRange {
                id: t,
                vocab: params.vocab,
            });
        }
        let base = t as usize * params.n_embed;
        out.push(params.embedding[base..base + params.n_embed].to_vec());
    }
    Ok(out)
}

/// Token embedding plus the environment row at every position.
pub fn embed_with_env(
    params: &EncoderParams,
    tokens: &[u32],
    env: u8,
    env_table: &EnvEmbedding,
) -> Result<Vec<Vec<f64>>> {
    let row = env_table.row(env)?.to_vec();
    let mut vectors = embed(params, tokens)?;
    for v in &mut vectors {
        for (x, e) in v.iter_mut().zip(&row) {
            *x += e;
        }
    }
    Ok(vectors)
}

pub fn pad_flags(tokens: &[u32]) -> Vec<bool> {
    tokens.iter().map(|&t| t == PAD_ID).collect()
}

/// Tape handles for one player's parameters. Group order matches
/// [`EncoderParams::groups`]; the embedding handle is present only when the
/// pass needs gradient flow into the table.
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub embedding: Option<Var>,
    pub w_prev: Var,
    pub w_cur: Var,
    pub w_next: Var,
    pub b_hidden: Var,
    pub w_head: Var,
    pub b_head: Var,
}

impl EncoderVars {
    pub fn inject(tape: &mut Tape, p: &EncoderParams, with_embedding: bool) -> EncoderVars {
        EncoderVars {
            embedding: with_embedding.then(|| tape.leaf_slice(&p.embedding)),
            w_prev: tape.leaf_slice(&p.w_prev),
            w_cur: tape.leaf_slice(&p.w_cur),
            w_next: tape.leaf_slice(&p.w_next),
            b_hidden: tape.leaf_slice(&p.b_hidden),
            w_head: tape.leaf_slice(&p.w_head),
            b_head: tape.leaf_slice(&p.b_head),
        }
    }

    /// Gradients per parameter group, in [`EncoderParams::groups`] order.
    pub fn collect_grads(&self, tape: &Tape, p: &EncoderParams) -> Vec<Vec<f64>> {
        let emb = match self.embedding {
            Some(v) => tape.grad(v).to_vec(),
            None => vec![0.0; p.embedding.len()],
        };
        vec![
            emb,
            tape.grad(self.w_prev).to_vec(),
            tape.grad(self.w_cur).to_vec(),
            tape.grad(self.w_next).to_vec(),
            tape.grad(self.b_hidden).to_vec(),
            tape.grad(self.w_head).to_vec(),
            tape.grad(self.b_head).to_vec(),
        ]
    }

    /// Embedding row lookup on the tape; requires embedding injection.
    pub fn gather_embedding(&self, tape: &mut Tape, p: &EncoderParams, token: u32) -> Result<Var> {
        if token as usize >= p.vocab {
            return Err(Error::TokenOutOfRange {
                id: token,
                vocab: p.vocab,
            });
        }
        let table = self.embedding.expect("embedding not injected on this tape");
        Ok(tape.gather_row(table, token as usize, p.n_embed))
    }
}

/// Window-3 convolution with tanh over position vectors. PAD positions are
/// zeroed before the convolution so that padding length never changes the
/// hidden states of real tokens.
pub fn conv_hidden(
    tape: &mut Tape,
    vars: &EncoderVars,
    p: &EncoderParams,
    positions: &[Var],
    is_pad: &[bool],
) -> Vec<Var> {
    assert_eq!(positions.len(), is_pad.len());
    let zero = tape.zeros(p.n_embed);
    let eff: Vec<Var> = positions
        .iter()
        .zip(is_pad)
        .map(|(v, &pad)| if pad { zero } else { *v })
        .collect();
    let n = p.n_embed;
    let h = p.hidden;
    let len = eff.len();
    let mut hidden = Vec::with_capacity(len);
    for t in 0..len {
        let mut pre = tape.matvec(vars.w_cur, eff[t], h, n);
        if t > 0 {
            let prev = tape.matvec(vars.w_prev, eff[t - 1], h, n);
            pre = tape.add(pre, prev);
        }
        if t + 1 < len {
            let next = tape.matvec(vars.w_next, eff[t + 1], h, n);
            pre = tape.add(pre, next);
        }
        pre = tape.add(pre, vars.b_hidden);
        hidden.push(tape.tanh(pre));
    }
    hidden
}

/// Classification head: mean-pool the hidden states of non-PAD positions,
/// then the linear head. Errors when every position is PAD.
pub fn pooled_head(
    tape: &mut Tape,
    vars: &EncoderVars,
    p: &EncoderParams,
    positions: &[Var],
    is_pad: &[bool],
) -> Result<Var> {
    let hidden = conv_hidden(tape, vars, p, positions, is_pad);
    let live: Vec<Var> = hidden
        .iter()
        .zip(is_pad)
        .filter(|(_, &pad)| !pad)
        .map(|(v, _)| *v)
        .collect();
    if live.is_empty() {
        return Err(Error::AllPad);
    }
    let pool = tape.mean_many(&live);
    let logits = tape.matvec(vars.w_head, pool, 2, p.hidden);
    Ok(tape.add(logits, vars.b_head))
}

/// Per-position head over the same convolutional pass (generator logits).
pub fn token_head(
    tape: &mut Tape,
    vars: &EncoderVars,
    p: &EncoderParams,
    positions: &[Var],
    is_pad: &[bool],
) -> Vec<Var> {
    let hidden = conv_hidden(tape, vars, p, positions, is_pad);
    hidden
        .into_iter()
        .map(|ht| {
            let logits = tape.matvec(vars.w_head, ht, 2, p.hidden);
            tape.add(logits, vars.b_head)
        })
        .collect()
}

/// Encoder pass over precomputed position vectors, mean-pool over non-PAD
/// positions, linear head. Deterministic given parameters.
pub fn classify(
    params: &EncoderParams,
    vectors: &[Vec<f64>],
    is_pad: &[bool],
) -> Result<[f64; 2]> {
    assert_eq!(vectors.len(), is_pad.len());
    if vectors.is_empty() || is_pad.iter().all(|&p| p) {
        return Err(Error::AllPad);
    }
    let mut tape = Tape::new();
    let vars = EncoderVars::inject(&mut tape, params, false);
    let positions: Vec<Var> = vectors.iter().map(|v| tape.leaf_slice(v)).collect();
    let logits = pooled_head(&mut tape, &vars, params, &positions, is_pad)?;
    let v = tape.value(logits);
    Ok([v[0], v[1]])
}

/// Per-token 2-logit sequence from the generator head.
pub fn token_logits(
    params: &EncoderParams,
    vectors: &[Vec<f64>],
    is_pad: &[bool],
) -> Result<Vec<[f64; 2]>> {
    assert_eq!(vectors.len(), is_pad.len());
    if vectors.is_empty() || is_pad.iter().all(|&p| p) {
        return Err(Error::AllPad);
    }
    let mut tape = Tape::new();
    let vars = EncoderVars::inject(&mut tape, params, false);
    let positions: Vec<Var> = vectors.iter().map(|v| tape.leaf_slice(v)).collect();
    let out = token_head(&mut tape, &vars, params, &positions, is_pad);
    Ok(out
        .into_iter()
        .map(|v| {
            let val = tape.value(v);
            [val[0], val[1]]
        })
        .collect())
}
