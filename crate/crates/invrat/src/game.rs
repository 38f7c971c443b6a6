//! The three-player training loop: predictor objectives, the generator's
//! compound objective, alternating optimizer steps, and the vanilla baseline
//! mode.
//!
//! Each step runs one alternation: (1) sample rationale masks and form the
//! masked view Z, (2) update the invariant predictor f_i and the
//! environment-aware predictor f_e on their cross-entropies with the masks
//! held fixed, (3) resample masks and update the generator on
//! `L_i + L_reg + lambda_diff * ReLU(L_i - L_e)` with both predictors
//! frozen. The returned loss breakdown is re-evaluated on the same batch
//! after all updates.
//!
//! Documents whose tokens are all PAD (the lexicon-removal baseline can
//! produce these) are fed to the encoder as a single zero vector, so they
//! contribute a learned constant prior instead of failing the forward pass.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::EnvironmentKind;
use crate::autodiff::{Tape, Var};
use crate::checkpoint::{Checkpoint, RngStateSnapshot, CHECKPOINT_VERSION};
use crate::corpus::{DatasetSplit, Document, Label, Vocabulary, MASKED_ID};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport};
use crate::models::{
    classify, embed, pad_flags, pooled_head, token_head, token_logits, EncoderParams,
    EncoderVars, EnvEmbedding,
};
use crate::rationale::{
    apply_hard_mask, build_mask_vars, inference_mask, reg_loss, reg_loss_var,
    sample_gumbel_diffs, sample_mask_with_rng, MaskMode,
};

/// Training mode. `LexicalRemoval` trains exactly like `Vanilla`; the
/// lexicon filtering happens when the corpus is loaded and again at
/// evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Vanilla,
    Invrat,
    LexicalRemoval,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Vanilla => "vanilla",
            TrainMode::Invrat => "invrat",
            TrainMode::LexicalRemoval => "lexical-removal",
        }
    }

    pub fn has_generator(self) -> bool {
        matches!(self, TrainMode::Invrat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    AdamW,
}

/// Every hyperparameter of the game. Config files may specify any subset of
/// fields; the rest take the defaults below.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub environment_kind: EnvironmentKind,
    pub seed: u64,
    /// Target rationale sparsity (fraction of tokens kept).
    pub alpha: f64,
    /// Sparsity penalty weight.
    pub lambda1: f64,
    /// Continuity penalty weight.
    pub lambda2: f64,
    /// Weight of the ReLU loss-gap term in the generator objective.
    pub lambda_diff: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// Gumbel-softmax temperature at the first epoch.
    pub temperature_initial: f64,
    /// Temperature at the last epoch (linear anneal; equal means constant).
    pub temperature_final: f64,
    /// Penalize each mask's density separately instead of the batch mean.
    pub sparsity_per_example: bool,
    /// Debug/ablation switch: force every mask to all-keep.
    pub force_keep_masks: bool,
    /// Offset added to the generator's keep-logit bias at init, so training
    /// starts from nearly-full rationales instead of collapsing to empty
    /// ones before the predictors know anything.
    pub keep_bias_init: f64,
    /// Steps at the start of training during which only the predictors
    /// update (the generator stays at its keep-biased init).
    pub generator_warmup_steps: usize,
    /// Vocabulary frequency threshold applied when building from a train file.
    pub min_count: usize,
    /// Train/dev/test fractions used when a corpus arrives unsplit.
    pub split_fractions: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Invrat,
            environment_kind: EnvironmentKind::Lexical,
            seed: 42,
            alpha: 0.2,
            lambda1: 1.0,
            lambda2: 5.0,
            lambda_diff: 10.0,
            optimizer: OptimizerKind::AdamW,
            // The published preset's 1e-5 targets fine-tuning of a large
            // pretrained model and stalls these small from-scratch nets.
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            weight_decay: 0.0,
            max_grad_norm: 1.0,
            epochs: 10,
            batch_size: 8,
            embedding_dim: 64,
            hidden_dim: 64,
            temperature_initial: 1.0,
            temperature_final: 1.0,
            sparsity_per_example: false,
            force_keep_masks: false,
            keep_bias_init: 2.0,
            generator_warmup_steps: 200,
            min_count: 1,
            split_fractions: [0.8, 0.1, 0.1],
        }
    }
}

impl TrainConfig {
    /// The published hyperparameter preset.
    pub fn apply_paper_hparams(mut self) -> TrainConfig {
        self.alpha = 0.2;
        self.lambda1 = 1.0;
        self.lambda2 = 5.0;
        self.lambda_diff = 10.0;
        self.optimizer = OptimizerKind::AdamW;
        self.learning_rate = 1e-5;
        self.adam_epsilon = 1e-8;
        self.weight_decay = 0.0;
        self.max_grad_norm = 1.0;
        self.epochs = 10;
        self.batch_size = 8;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::BadConfig(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return err(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda_diff < 0.0 {
            return err("lambda weights must be >= 0".into());
        }
        if self.learning_rate <= 0.0 {
            return err(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size < 1 {
            return err("batch_size must be >= 1".into());
        }
        if self.epochs < 1 {
            return err("epochs must be >= 1".into());
        }
        if self.embedding_dim < 1 || self.hidden_dim < 1 {
            return err("model dimensions must be >= 1".into());
        }
        if self.temperature_initial <= 0.0 || self.temperature_final <= 0.0 {
            return err("temperatures must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return err("adam betas must lie in [0, 1)".into());
        }
        if self.min_count < 1 {
            return err("min_count must be >= 1".into());
        }
        Ok(())
    }

    /// Linear temperature anneal across epochs (constant when the endpoints
    /// are equal).
    pub fn temperature_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.temperature_initial;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.temperature_initial + (self.temperature_final - self.temperature_initial) * frac
    }
}

/// Derives a per-purpose seed from the master seed so that independent RNG
/// streams (init per player, shuffling, mask noise) never interact.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn stream(master: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag))
}

/// AdamW moment estimates for a list of parameter groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(group_sizes: &[usize]) -> AdamState {
        AdamState {
            step: 0,
            m: group_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: group_sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// Scales all gradient groups so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grads(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// One AdamW step with decoupled weight decay over parallel group lists.
pub fn adamw_step(
    groups: &mut [&mut Vec<f64>],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    assert_eq!(groups.len(), grads.len());
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t as i32);
    for (gi, params) in groups.iter_mut().enumerate() {
        let g = &grads[gi];
        let m = &mut state.m[gi];
        let v = &mut state.v[gi];
        for j in 0..params.len() {
            m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
            v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            params[j] -= cfg.learning_rate
                * (m_hat / (v_hat.sqrt() + cfg.adam_epsilon) + cfg.weight_decay * params[j]);
        }
    }
}

/// The three players and their optimizer states. Parameter ownership is
/// disjoint; only the environment-embedding table belongs exclusively to the
/// environment-aware predictor.
#[derive(Debug, Clone)]
pub struct PlayerSet {
    pub generator: EncoderParams,
    pub f_i: EncoderParams,
    pub f_e: EncoderParams,
    pub env_table: EnvEmbedding,
    pub opt_generator: AdamState,
    pub opt_f_i: AdamState,
    pub opt_f_e: AdamState,
}

impl PlayerSet {
    pub fn init(vocab: usize, cfg: &TrainConfig) -> PlayerSet {
        let n = cfg.embedding_dim;
        let h = cfg.hidden_dim;
        let mut generator =
            EncoderParams::init(vocab, n, h, &mut stream(cfg.seed, "init/generator"));
        generator.b_head[1] += cfg.keep_bias_init;
        let f_i = EncoderParams::init(vocab, n, h, &mut stream(cfg.seed, "init/f_i"));
        let f_e = EncoderParams::init(vocab, n, h, &mut stream(cfg.seed, "init/f_e"));
        let env_table = EnvEmbedding::init(n, &mut stream(cfg.seed, "init/env"));

        let enc_sizes: Vec<usize> = generator.groups().iter().map(|g| g.len()).collect();
        let mut fe_sizes = enc_sizes.clone();
        fe_sizes.push(env_table.table.len());
        PlayerSet {
            opt_generator: AdamState::new(&enc_sizes),
            opt_f_i: AdamState::new(&enc_sizes),
            opt_f_e: AdamState::new(&fe_sizes),
            generator,
            f_i,
            f_e,
            env_table,
        }
    }
}

/// Loss components of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Invariant-predictor cross-entropy.
    pub l_i: f64,
    /// Environment-aware predictor cross-entropy (equal to `l_i` in modes
    /// without an environment predictor).
    pub l_e: f64,
    pub l_reg: f64,
    /// `ReLU(l_i - l_e)`: the invariance diagnostic.
    pub gap: f64,
    /// Generator objective: `l_i + l_reg + lambda_diff * gap`.
    pub total: f64,
}

impl LossBreakdown {
    fn build(l_i: f64, l_e: f64, l_reg: f64, lambda_diff: f64) -> Result<LossBreakdown> {
        let gap = (l_i - l_e).max(0.0);
        let total = generator_loss(l_i, l_e, l_reg, lambda_diff);
        let bd = LossBreakdown {
            l_i,
            l_e,
            l_reg,
            gap,
            total,
        };
        if [bd.l_i, bd.l_e, bd.l_reg, bd.gap, bd.total]
            .iter()
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFiniteLoss {
                context: format!("{bd:?}"),
            });
        }
        Ok(bd)
    }
}

/// Numerically stable two-class softmax cross-entropy for one prediction.
pub fn cross_entropy_scalar(logits: [f64; 2], label: Label) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label.index()]
}

/// Batch-averaged softmax cross-entropy.
pub fn predictor_loss(logits: &[[f64; 2]], labels: &[Label]) -> Result<f64> {
    assert_eq!(logits.len(), labels.len());
    assert!(!logits.is_empty(), "predictor_loss: empty batch");
    if logits.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss {
            context: "non-finite logits in predictor_loss".into(),
        });
    }
    Ok(logits
        .iter()
        .zip(labels)
        .map(|(l, y)| cross_entropy_scalar(*l, *y))
        .sum::<f64>()
        / logits.len() as f64)
}

/// Generator objective: the ReLU keeps the gap term from rewarding the
/// generator once the invariant predictor is already ahead.
pub fn generator_loss(l_i: f64, l_e: f64, l_reg: f64, lambda_diff: f64) -> f64 {
    l_i + l_reg + lambda_diff * (l_i - l_e).max(0.0)
}

/// Forward logits for one document with the all-PAD fallback.
pub fn doc_logits(params: &EncoderParams, tokens: &[u32]) -> Result<[f64; 2]> {
    let flags = pad_flags(tokens);
    if flags.iter().all(|&p| p) {
        return classify(params, &[vec![0.0; params.n_embed]], &[false]);
    }
    let vectors = embed(params, tokens)?;
    classify(params, &vectors, &flags)
}

/// As [`doc_logits`] with the environment row summed into every position.
pub fn doc_logits_env(
    params: &EncoderParams,
    tokens: &[u32],
    env: u8,
    env_table: &EnvEmbedding,
) -> Result<[f64; 2]> {
    let row = env_table.row(env)?;
    let flags = pad_flags(tokens);
    if flags.iter().all(|&p| p) {
        return classify(params, &[row.to_vec()], &[false]);
    }
    let vectors = crate::models::embed_with_env(params, tokens, env, env_table)?;
    classify(params, &vectors, &flags)
}

/// Generator token logits for one document (all-PAD documents yield `None`;
/// their mask is all-drop by construction).
pub fn doc_token_logits(params: &EncoderParams, tokens: &[u32]) -> Result<Option<Vec<[f64; 2]>>> {
    let flags = pad_flags(tokens);
    if flags.iter().all(|&p| p) {
        return Ok(None);
    }
    let vectors = embed(params, tokens)?;
    Ok(Some(token_logits(params, &vectors, &flags)?))
}

/// Deployment prediction: the invariant predictor over the deterministic
/// inference mask (or over the raw tokens when no generator exists).
pub fn predict_label(
    f_i: &EncoderParams,
    generator: Option<&EncoderParams>,
    tokens: &[u32],
) -> Result<(Label, [f64; 2])> {
    let view = match generator {
        None => tokens.to_vec(),
        Some(gen) => match doc_token_logits(gen, tokens)? {
            None => tokens.to_vec(),
            Some(logits) => {
                let keep = inference_mask(&logits, &pad_flags(tokens));
                let hard: Vec<f64> = keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
                apply_hard_mask(tokens, &hard)?
            }
        },
    };
    let logits = doc_logits(f_i, &view)?;
    let label = if logits[1] > logits[0] {
        Label::Toxic
    } else {
        Label::NonToxic
    };
    Ok((label, logits))
}

/// Position vars for one document on a tape, with the all-PAD fallback.
/// Returns (position nodes, pad flags).
fn doc_positions(
    tape: &mut Tape,
    vars: &EncoderVars,
    params: &EncoderParams,
    tokens: &[u32],
    env: Option<(u8, Var, usize)>,
) -> Result<(Vec<Var>, Vec<bool>)> {
    let flags = pad_flags(tokens);
    if flags.iter().all(|&p| p) {
        let zero = tape.zeros(params.n_embed);
        let pos = match env {
            Some((e, table, n)) => {
                let row = tape.gather_row(table, e as usize, n);
                tape.add(zero, row)
            }
            None => zero,
        };
        return Ok((vec![pos], vec![false]));
    }
    let mut positions = Vec::with_capacity(tokens.len());
    for &t in tokens {
        let mut pos = vars.gather_embedding(tape, params, t)?;
        if let Some((e, table, n)) = env {
            let row = tape.gather_row(table, e as usize, n);
            pos = tape.add(pos, row);
        }
        positions.push(pos);
    }
    Ok((positions, flags))
}

fn require_env(doc: &Document) -> Result<u8> {
    doc.environment.ok_or_else(|| Error::MissingEnvironment {
        id: doc.id.clone(),
    })
}

/// Batch-mean cross-entropy of one predictor over fixed token views, with
/// reverse-mode gradients per parameter group (the environment table joins
/// as a final group when present).
pub fn predictor_gradients(
    params: &EncoderParams,
    env: Option<(&EnvEmbedding, &[u8])>,
    views: &[Vec<u32>],
    labels: &[Label],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let vars = EncoderVars::inject(&mut tape, params, true);
    let table_var = env
        .as_ref()
        .map(|(t, _)| (tape.leaf_slice(&t.table), t.n_embed));

    let mut ces = Vec::with_capacity(views.len());
    for (i, tokens) in views.iter().enumerate() {
        let doc_env = match (&env, table_var) {
            (Some((_, es)), Some((tv, n))) => Some((es[i], tv, n)),
            _ => None,
        };
        let (positions, flags) = doc_positions(&mut tape, &vars, params, tokens, doc_env)?;
        let logits = pooled_head(&mut tape, &vars, params, &positions, &flags)?;
        ces.push(tape.cross_entropy(logits, labels[i].index()));
    }
    let loss = tape.mean_many(&ces);
    let loss_value = tape.scalar(loss);
    tape.backward(loss)?;

    let mut grads = vars.collect_grads(&tape, params);
    if let Some((tv, _)) = table_var {
        grads.push(tape.grad(tv).to_vec());
    }
    Ok((loss_value, grads))
}

/// One predictor's batch update: gradients, clip, AdamW. `views` holds the
/// token view each document should see.
fn update_predictor(
    params: &mut EncoderParams,
    opt: &mut AdamState,
    env_table: Option<&mut EnvEmbedding>,
    envs: Option<&[u8]>,
    views: &[Vec<u32>],
    labels: &[Label],
    cfg: &TrainConfig,
) -> Result<f64> {
    let (loss_value, mut grads) = {
        let env = env_table.as_deref().map(|t| (t, envs.unwrap()));
        predictor_gradients(params, env, views, labels)?
    };
    clip_grads(&mut grads, cfg.max_grad_norm);

    let mut groups: Vec<&mut Vec<f64>> = params.groups_mut().into_iter().collect();
    if let Some(table) = env_table {
        groups.push(&mut table.table);
    }
    adamw_step(&mut groups, &grads, opt, cfg);
    Ok(loss_value)
}

/// Samples one straight-through mask per document (plain values). All-keep
/// when `force_keep_masks` is set; all-PAD documents get all-drop masks.
fn sample_batch_masks(
    batch: &[&Document],
    generator: &EncoderParams,
    temperature: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut out = Vec::with_capacity(batch.len());
    for doc in batch {
        if cfg.force_keep_masks {
            out.push((vec![1.0; doc.tokens.len()], vec![1.0; doc.tokens.len()]));
            continue;
        }
        match doc_token_logits(generator, &doc.tokens)? {
            None => out.push((vec![0.0; doc.tokens.len()], vec![0.0; doc.tokens.len()])),
            Some(logits) => {
                let mask = sample_mask_with_rng(
                    &logits,
                    &pad_flags(&doc.tokens),
                    temperature,
                    rng,
                )?;
                out.push((mask.hard, mask.soft));
            }
        }
    }
    Ok(out)
}

/// Generator objective over one batch with reverse-mode gradients for the
/// generator's parameter groups. Masks are sampled on the tape (straight-
/// through for training, fully relaxed for gradient checks); both predictors
/// enter as constants.
#[allow(clippy::too_many_arguments)]
pub fn generator_gradients(
    generator: &EncoderParams,
    f_i: &EncoderParams,
    f_e: &EncoderParams,
    env_table: &EnvEmbedding,
    batch: &[&Document],
    envs: &[u8],
    cfg: &TrainConfig,
    temperature: f64,
    mode: MaskMode,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let gen_vars = EncoderVars::inject(&mut tape, generator, true);
    let fi_vars = EncoderVars::inject(&mut tape, f_i, true);
    let fe_vars = EncoderVars::inject(&mut tape, f_e, true);
    let env_table_var = tape.leaf_slice(&env_table.table);
    let n = generator.n_embed;

    let mut ces_i = Vec::with_capacity(batch.len());
    let mut ces_e = Vec::with_capacity(batch.len());
    let mut soft_masks: Vec<Vec<Var>> = Vec::with_capacity(batch.len());

    for (bi, doc) in batch.iter().enumerate() {
        let flags = pad_flags(&doc.tokens);
        let all_pad = flags.iter().all(|&p| p);

        // Mask nodes from the generator's token logits.
        let (forward_masks, softs): (Vec<Var>, Vec<Var>) = if all_pad {
            let z = tape.zeros(1);
            (vec![z; doc.tokens.len()], vec![z; doc.tokens.len()])
        } else {
            let (gen_pos, gen_flags) =
                doc_positions(&mut tape, &gen_vars, generator, &doc.tokens, None)?;
            let logit_vars = token_head(&mut tape, &gen_vars, generator, &gen_pos, &gen_flags);
            let diffs = sample_gumbel_diffs(&flags, rng);
            let mv = build_mask_vars(&mut tape, &logit_vars, &diffs, temperature, mode)?;
            (mv.forward, mv.soft)
        };
        soft_masks.push(softs);

        // Masked input view for each predictor: m * emb(x) + (1-m) * emb(MASKED).
        let build_view = |tape: &mut Tape,
                              vars: &EncoderVars,
                              params: &EncoderParams,
                              env: Option<(u8, Var, usize)>|
         -> Result<(Vec<Var>, Vec<bool>)> {
            if all_pad {
                return doc_positions(tape, vars, params, &doc.tokens, env);
            }
            let masked_row = vars.gather_embedding(tape, params, MASKED_ID)?;
            let mut positions = Vec::with_capacity(doc.tokens.len());
            for (t, &tok) in doc.tokens.iter().enumerate() {
                let emb = vars.gather_embedding(tape, params, tok)?;
                let kept = tape.mul_scalar(emb, forward_masks[t]);
                let neg = tape.scale(forward_masks[t], -1.0);
                let inv = tape.add_const(neg, 1.0);
                let dropped = tape.mul_scalar(masked_row, inv);
                let mut pos = tape.add(kept, dropped);
                if let Some((e, table, width)) = env {
                    let row = tape.gather_row(table, e as usize, width);
                    pos = tape.add(pos, row);
                }
                positions.push(pos);
            }
            Ok((positions, flags.clone()))
        };

        let (pos_i, flags_i) = build_view(&mut tape, &fi_vars, f_i, None)?;
        let logits_i = pooled_head(&mut tape, &fi_vars, f_i, &pos_i, &flags_i)?;
        ces_i.push(tape.cross_entropy(logits_i, doc.label.index()));

        let (pos_e, flags_e) = build_view(
            &mut tape,
            &fe_vars,
            f_e,
            Some((envs[bi], env_table_var, n)),
        )?;
        let logits_e = pooled_head(&mut tape, &fe_vars, f_e, &pos_e, &flags_e)?;
        ces_e.push(tape.cross_entropy(logits_e, doc.label.index()));
    }

    let l_i = tape.mean_many(&ces_i);
    let l_e = tape.mean_many(&ces_e);
    let l_reg = reg_loss_var(
        &mut tape,
        &soft_masks,
        cfg.alpha,
        cfg.lambda1,
        cfg.lambda2,
        cfg.sparsity_per_example,
    );
    let diff = tape.sub(l_i, l_e);
    let gap = tape.relu(diff);
    let gap_term = tape.scale(gap, cfg.lambda_diff);
    let partial = tape.add(l_i, l_reg);
    let total = tape.add(partial, gap_term);
    let total_value = tape.scalar(total);
    tape.backward(total)?;

    let grads = gen_vars.collect_grads(&tape, generator);
    Ok((total_value, grads))
}

/// Generator update: straight-through gradients, clip, AdamW.
fn update_generator(
    players: &mut PlayerSet,
    batch: &[&Document],
    envs: &[u8],
    temperature: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (_, mut grads) = generator_gradients(
        &players.generator,
        &players.f_i,
        &players.f_e,
        &players.env_table,
        batch,
        envs,
        cfg,
        temperature,
        MaskMode::StraightThrough,
        rng,
    )?;
    clip_grads(&mut grads, cfg.max_grad_norm);
    let mut groups: Vec<&mut Vec<f64>> = players.generator.groups_mut().into_iter().collect();
    adamw_step(&mut groups, &grads, &mut players.opt_generator, cfg);
    Ok(())
}

/// Post-update diagnostic pass (no gradients): fresh masks, all components.
fn diagnostic(
    players: &PlayerSet,
    batch: &[&Document],
    envs: &[u8],
    temperature: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(LossBreakdown, f64)> {
    let masks = sample_batch_masks(batch, &players.generator, temperature, cfg, rng)?;
    let mut logits_i = Vec::with_capacity(batch.len());
    let mut logits_e = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let mut softs = Vec::with_capacity(batch.len());
    let mut density_sum = 0.0;
    for (bi, doc) in batch.iter().enumerate() {
        let (hard, soft) = &masks[bi];
        let view = apply_hard_mask(&doc.tokens, hard)?;
        logits_i.push(doc_logits(&players.f_i, &view)?);
        logits_e.push(doc_logits_env(
            &players.f_e,
            &view,
            envs[bi],
            &players.env_table,
        )?);
        labels.push(doc.label);
        softs.push(soft.clone());
        density_sum += hard.iter().sum::<f64>() / hard.len().max(1) as f64;
    }
    let l_i = predictor_loss(&logits_i, &labels)?;
    let l_e = predictor_loss(&logits_e, &labels)?;
    let l_reg = reg_loss(
        &softs,
        cfg.alpha,
        cfg.lambda1,
        cfg.lambda2,
        cfg.sparsity_per_example,
    );
    let bd = LossBreakdown::build(l_i, l_e, l_reg, cfg.lambda_diff)?;
    Ok((bd, density_sum / batch.len() as f64))
}

/// One alternating update over a batch. Returns the post-update loss
/// breakdown and mean hard-mask density on the same batch.
pub fn train_step(
    batch: &[&Document],
    players: &mut PlayerSet,
    cfg: &TrainConfig,
    temperature: f64,
    generator_enabled: bool,
    mask_rng: &mut ChaCha8Rng,
) -> Result<(LossBreakdown, f64)> {
    assert!(!batch.is_empty(), "train_step: empty batch");
    let labels: Vec<Label> = batch.iter().map(|d| d.label).collect();

    let step_result = (|| -> Result<(LossBreakdown, f64)> {
        if cfg.mode.has_generator() {
            let envs: Vec<u8> = batch
                .iter()
                .map(|d| require_env(d))
                .collect::<Result<_>>()?;

            // (1) masks for the predictor phase, treated as fixed.
            let masks = sample_batch_masks(batch, &players.generator, temperature, cfg, mask_rng)?;
            let views: Vec<Vec<u32>> = batch
                .iter()
                .zip(&masks)
                .map(|(d, (hard, _))| apply_hard_mask(&d.tokens, hard))
                .collect::<Result<_>>()?;

            // (2) predictor updates.
            update_predictor(
                &mut players.f_i,
                &mut players.opt_f_i,
                None,
                None,
                &views,
                &labels,
                cfg,
            )?;
            update_predictor(
                &mut players.f_e,
                &mut players.opt_f_e,
                Some(&mut players.env_table),
                Some(&envs),
                &views,
                &labels,
                cfg,
            )?;

            // (3) generator update on resampled masks, predictors frozen.
            if generator_enabled && !cfg.force_keep_masks {
                update_generator(players, batch, &envs, temperature, cfg, mask_rng)?;
            }

            diagnostic(players, batch, &envs, temperature, cfg, mask_rng)
        } else {
            // Vanilla: only the invariant predictor trains, on raw tokens.
            let views: Vec<Vec<u32>> = batch.iter().map(|d| d.tokens.clone()).collect();
            update_predictor(
                &mut players.f_i,
                &mut players.opt_f_i,
                None,
                None,
                &views,
                &labels,
                cfg,
            )?;
            let logits: Vec<[f64; 2]> = views
                .iter()
                .map(|v| doc_logits(&players.f_i, v))
                .collect::<Result<_>>()?;
            let l_i = predictor_loss(&logits, &labels)?;
            let bd = LossBreakdown::build(l_i, l_i, 0.0, cfg.lambda_diff)?;
            Ok((bd, 1.0))
        }
    })();

    step_result.map_err(|e| match e {
        Error::NonFiniteLoss { context } => {
            let ids: Vec<&str> = batch.iter().map(|d| d.id.as_str()).collect();
            Error::NonFiniteLoss {
                context: format!("{context}; batch ids: {ids:?}"),
            }
        }
        other => other,
    })
}

/// One logged line per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub l_i: f64,
    pub l_e: f64,
    pub l_reg: f64,
    pub gap: f64,
    pub total: f64,
    pub mask_density: f64,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub checkpoint: Checkpoint,
    pub dev_report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepLog>,
}

/// Full training run: seeded shuffling, per-epoch dev evaluation and
/// checkpoint snapshot.
pub fn train(split: &DatasetSplit, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    if cfg.mode.has_generator() {
        for d in &split.train {
            require_env(d)?;
        }
    }

    let mut players = PlayerSet::init(vocab.len(), cfg);
    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut mask_rng = stream(cfg.seed, "mask");

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut global_step = 0usize;
    for epoch in 0..cfg.epochs {
        let temperature = cfg.temperature_at(epoch);
        let mut order: Vec<usize> = (0..split.train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Document> = chunk.iter().map(|&i| &split.train[i]).collect();
            let generator_enabled = global_step >= cfg.generator_warmup_steps;
            global_step += 1;
            let (bd, mask_density) =
                train_step(&batch, &mut players, cfg, temperature, generator_enabled, &mut mask_rng)?;
            steps.push(StepLog {
                epoch,
                step,
                l_i: bd.l_i,
                l_e: bd.l_e,
                l_reg: bd.l_reg,
                gap: bd.gap,
                total: bd.total,
                mask_density,
            });
        }

        let generator = cfg.mode.has_generator().then_some(&players.generator);
        let mut preds = Vec::with_capacity(split.dev.len());
        let mut golds = Vec::with_capacity(split.dev.len());
        for d in &split.dev {
            let (label, _) = predict_label(&players.f_i, generator, &d.tokens)?;
            preds.push(label);
            golds.push(d.label);
        }
        let dev_report = eval::metrics_report(&preds, &golds, &split.dev, cfg.seed, epoch)?;

        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            epoch,
            config: cfg.clone(),
            f_i: players.f_i.clone(),
            generator: cfg.mode.has_generator().then(|| players.generator.clone()),
            f_e: cfg.mode.has_generator().then(|| players.f_e.clone()),
            env_table: cfg.mode.has_generator().then(|| players.env_table.clone()),
            rng: vec![
                RngStateSnapshot::of("shuffle", &shuffle_rng),
                RngStateSnapshot::of("mask", &mask_rng),
            ],
        };
        epochs.push(EpochRecord {
            epoch,
            checkpoint,
            dev_report,
        });
    }
    Ok(TrainOutput { epochs, steps })
}
