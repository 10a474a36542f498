use super::config::{Mode, ModelConfig};
use super::params::Parameters;
use super::tape::Tape;
use crate::corpus::PAD;
use crate::error::{Error, Result};

type NodeId = usize;

fn check_ids(config: &ModelConfig, ids: &[u32], what: &str) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(Error::invalid(format!(
            "{what} token id {bad} is outside the vocabulary of {}",
            config.vocab_size
        )));
    }
    if ids.len() > config.max_len {
        return Err(Error::invalid(format!(
            "{what} length {} exceeds max_len {}",
            ids.len(),
            config.max_len
        )));
    }
    Ok(())
}

fn layer_norm(tape: &mut Tape, x: NodeId, prefix: &str) -> NodeId {
    let g = tape.param(&format!("{prefix}.g"));
    let b = tape.param(&format!("{prefix}.b"));
    tape.layer_norm(x, g, b)
}

fn linear(tape: &mut Tape, x: NodeId, w: &str, b: &str) -> NodeId {
    let w = tape.param(w);
    let b = tape.param(b);
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

fn attention(
    tape: &mut Tape,
    config: &ModelConfig,
    prefix: &str,
    query: NodeId,
    memory: NodeId,
    causal: bool,
) -> NodeId {
    let q = linear(
        tape,
        query,
        &format!("{prefix}.wq"),
        &format!("{prefix}.bq"),
    );
    let k = linear(
        tape,
        memory,
        &format!("{prefix}.wk"),
        &format!("{prefix}.bk"),
    );
    let v = linear(
        tape,
        memory,
        &format!("{prefix}.wv"),
        &format!("{prefix}.bv"),
    );
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let heads: Vec<NodeId> = (0..config.n_heads)
        .map(|h| {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let scores = tape.matmul_bt(qh, kh);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax(scores, causal);
            tape.matmul(weights, vh)
        })
        .collect();
    let joined = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)
    };
    linear(
        tape,
        joined,
        &format!("{prefix}.wo"),
        &format!("{prefix}.bo"),
    )
}

fn feed_forward(tape: &mut Tape, prefix: &str, x: NodeId) -> NodeId {
    let h = linear(tape, x, &format!("{prefix}.w1"), &format!("{prefix}.b1"));
    let h = tape.gelu(h);
    linear(tape, h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
}

fn embed(tape: &mut Tape, ids: &[u32], positions: &str) -> NodeId {
    let tok = tape.param("tok_emb");
    let tok = tape.gather(tok, ids);
    let pos_table = tape.param(positions);
    let pos_ids: Vec<u32> = (0..ids.len() as u32).collect();
    let pos = tape.gather(pos_table, &pos_ids);
    tape.add(tok, pos)
}

/// Bidirectional encoder stack; returns the final normalised states.
pub(crate) fn encoder(tape: &mut Tape, config: &ModelConfig, condition: &[u32]) -> NodeId {
    let mut x = embed(tape, condition, "enc.pos_emb");
    for l in 0..config.n_layers {
        let h = layer_norm(tape, x, &format!("enc.{l}.ln_attn"));
        let a = attention(tape, config, &format!("enc.{l}.attn"), h, h, false);
        x = tape.add(x, a);
        let h = layer_norm(tape, x, &format!("enc.{l}.ln_ffn"));
        let f = feed_forward(tape, &format!("enc.{l}.ffn"), h);
        x = tape.add(x, f);
    }
    layer_norm(tape, x, "enc.ln_f")
}

/// Causal decoder stack (with cross-attention when `memory` is given);
/// returns `[len, vocab]` logits.
pub(crate) fn decoder(
    tape: &mut Tape,
    config: &ModelConfig,
    input: &[u32],
    memory: Option<NodeId>,
) -> NodeId {
    let mut y = embed(tape, input, "dec.pos_emb");
    for l in 0..config.n_layers {
        let h = layer_norm(tape, y, &format!("dec.{l}.ln_attn"));
        let a = attention(tape, config, &format!("dec.{l}.attn"), h, h, true);
        y = tape.add(y, a);
        if let Some(m) = memory {
            let h = layer_norm(tape, y, &format!("dec.{l}.ln_cross"));
            let c = attention(tape, config, &format!("dec.{l}.cross"), h, m, false);
            y = tape.add(y, c);
        }
        let h = layer_norm(tape, y, &format!("dec.{l}.ln_ffn"));
        let f = feed_forward(tape, &format!("dec.{l}.ffn"), h);
        y = tape.add(y, f);
    }
    let y = layer_norm(tape, y, "dec.ln_f");
    linear(tape, y, "lm_head.w", "lm_head.b")
}

/// Builds the loss graph for one (condition, target) pair. The decoder
/// reads `target[..n-1]` and predicts `target[1..]`.
fn loss_graph(
    tape: &mut Tape,
    params: &Parameters,
    condition: &[u32],
    target: &[u32],
) -> Result<(NodeId, NodeId)> {
    let config = params.config();
    if target.len() < 2 {
        return Err(Error::invalid(
            "target needs at least two tokens (BOS and one more)",
        ));
    }
    check_ids(config, target, "target")?;
    let memory = match config.mode {
        Mode::EncoderDecoder => {
            if condition.is_empty() {
                return Err(Error::invalid(
                    "encoder-decoder model needs a non-empty condition",
                ));
            }
            check_ids(config, condition, "condition")?;
            Some(encoder(tape, config, condition))
        }
        Mode::DecoderOnly => None,
    };
    let logits = decoder(tape, config, &target[..target.len() - 1], memory);
    let loss = tape.cross_entropy(logits, &target[1..], PAD);
    Ok((loss, logits))
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Mean cross-entropy over non-PAD target positions.
    pub loss: f64,
    /// Row-major `[target.len() - 1, vocab]` logits; row `i` predicts `target[i + 1]`.
    pub logits: Vec<f64>,
    pub vocab_size: usize,
}

impl ForwardOutput {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.vocab_size..(i + 1) * self.vocab_size]
    }

    pub fn rows(&self) -> usize {
        self.logits.len() / self.vocab_size
    }
}

pub fn forward_loss(
    params: &Parameters,
    condition: &[u32],
    target: &[u32],
) -> Result<ForwardOutput> {
    let mut tape = Tape::new(params);
    let (loss, logits) = loss_graph(&mut tape, params, condition, target)?;
    let loss = tape.value(loss)[0];
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite loss in forward pass"));
    }
    Ok(ForwardOutput {
        loss,
        logits: tape.value(logits).to_vec(),
        vocab_size: params.config().vocab_size,
    })
}

/// Exact gradient of one example's loss, flattened in parameter layout
/// order (lexicographic tensor name, then row-major).
pub fn per_example_grad(
    params: &Parameters,
    condition: &[u32],
    target: &[u32],
) -> Result<Vec<f64>> {
    Ok(loss_and_grad(params, condition, target)?.1)
}

pub fn loss_and_grad(
    params: &Parameters,
    condition: &[u32],
    target: &[u32],
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new(params);
    let (loss, _) = loss_graph(&mut tape, params, condition, target)?;
    let value = tape.value(loss)[0];
    if !value.is_finite() {
        return Err(Error::numeric("non-finite loss in forward pass"));
    }
    let grad = tape.backward(loss);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    Ok((value, grad))
}

/// Final encoder states for `condition`, row-major `[len, d_model]`.
pub(crate) fn encode_condition(params: &Parameters, condition: &[u32]) -> Result<Vec<f64>> {
    let config = params.config();
    if condition.is_empty() {
        return Err(Error::invalid(
            "encoder-decoder model needs a non-empty condition",
        ));
    }
    check_ids(config, condition, "condition")?;
    let mut tape = Tape::new(params);
    let out = encoder(&mut tape, config, condition);
    Ok(tape.value(out).to_vec())
}

/// Logits for the next token after `prefix`, given precomputed encoder states.
pub(crate) fn next_logits(
    params: &Parameters,
    memory: Option<&[f64]>,
    prefix: &[u32],
) -> Result<Vec<f64>> {
    let config = params.config();
    check_ids(config, prefix, "decoder prefix")?;
    let mut tape = Tape::new(params);
    let memory =
        memory.map(|m| tape.constant(m.len() / config.d_model, config.d_model, m.to_vec()));
    let logits = decoder(&mut tape, config, prefix, memory);
    let v = config.vocab_size;
    let all = tape.value(logits);
    Ok(all[all.len() - v..].to_vec())
}
