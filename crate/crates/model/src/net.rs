//! The generation network: one embedding + bidirectional GRU per input
//! stream, bilinear attention over the concatenated MR states (plus an
//! independent attention over the previous utterance when enabled), and a
//! GRU decoder per task. Encoders are shared across tasks; decoders are not.
//!
//! Batches are processed one instance at a time at exact sequence lengths
//! inside a single graph, so padded positions never influence any state; the
//! batch loss is the token-mean cross-entropy over all instances.

use std::collections::{BTreeMap, BTreeSet};

use nlgen_core::data::{
    slot_type_tokens, slot_value_tokens, split_tokens, tokenize, Instance, Vocabulary, PAD,
};
use nlgen_core::nn::{
    cross_entropy, BiGruEncoder, BiGruEncoderBound, Embedding, EmbeddingBound, GruCell,
    GruCellBound, Linear, LinearBound, LuongAttention, LuongAttentionBound, ParamList,
    ParamListMut,
};
use nlgen_core::rng::seeded;
use nlgen_core::tensor::{grad_check, Graph, TensorId};
use nlgen_core::{Error, Result};

use crate::batch::{target_rows, Batch, StreamBatch};
use crate::config::{ModelConfig, Stream, UtteranceMode};

#[derive(Debug, Clone)]
struct StreamEncoder {
    embedding: Embedding,
    rnn: BiGruEncoder,
}

#[derive(Debug, Clone)]
struct TaskDecoder {
    embedding: Embedding,
    cell: GruCell,
    projection: Linear,
}

#[derive(Debug, Clone)]
pub struct NlgModel {
    pub(crate) config: ModelConfig,
    pub(crate) stream_vocabs: BTreeMap<Stream, Vocabulary>,
    pub(crate) target_vocabs: BTreeMap<String, Vocabulary>,
    encoders: BTreeMap<Stream, StreamEncoder>,
    mr_attention: LuongAttention,
    utt_attention: Option<LuongAttention>,
    decoder_init: Linear,
    decoders: BTreeMap<String, TaskDecoder>,
}

impl NlgModel {
    pub fn new(
        config: ModelConfig,
        stream_vocabs: BTreeMap<Stream, Vocabulary>,
        target_vocabs: BTreeMap<String, Vocabulary>,
    ) -> Result<NlgModel> {
        config.validate()?;
        let have: BTreeSet<Stream> = stream_vocabs.keys().copied().collect();
        if have != config.enabled_encoders {
            return Err(Error::contract(format!(
                "stream vocabularies {:?} do not match enabled encoders {:?}",
                have.iter().map(Stream::name).collect::<Vec<_>>(),
                config.enabled_encoders.iter().map(Stream::name).collect::<Vec<_>>()
            )));
        }
        let have_tasks: BTreeSet<&String> = target_vocabs.keys().collect();
        let want_tasks: BTreeSet<&String> = config.tasks.iter().collect();
        if have_tasks != want_tasks {
            return Err(Error::contract(format!(
                "target vocabularies {have_tasks:?} do not match configured tasks {want_tasks:?}"
            )));
        }

        let mut rng = seeded(config.seed);
        let e = config.embedding_dim;
        let h = config.hidden_dim;
        let encoders: BTreeMap<Stream, StreamEncoder> = config
            .enabled_encoders
            .iter()
            .map(|s| {
                (
                    *s,
                    StreamEncoder {
                        embedding: Embedding::new(stream_vocabs[s].len(), e, &mut rng),
                        rnn: BiGruEncoder::new(e, h, &mut rng),
                    },
                )
            })
            .collect();
        let mr_attention = LuongAttention::new(h, 2 * h, &mut rng);
        let utt_attention = if config.utterance_enabled() {
            Some(LuongAttention::new(h, 2 * h, &mut rng))
        } else {
            None
        };
        let decoder_init = Linear::new(2 * h, h, &mut rng);

        let contexts_dim = 2 * h + if config.utterance_enabled() { 2 * h } else { 0 };
        let proj_in = h + if config.context_in_projection { contexts_dim } else { 0 };
        let mut decoders = BTreeMap::new();
        for task in &config.tasks {
            let v = target_vocabs[task].len();
            decoders.insert(
                task.clone(),
                TaskDecoder {
                    embedding: Embedding::new(v, e, &mut rng),
                    cell: GruCell::new(e + contexts_dim, h, &mut rng),
                    projection: Linear::new(proj_in, v, &mut rng),
                },
            );
        }

        Ok(NlgModel {
            config,
            stream_vocabs,
            target_vocabs,
            encoders,
            mr_attention,
            utt_attention,
            decoder_init,
            decoders,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stream_vocab(&self, stream: Stream) -> Option<&Vocabulary> {
        self.stream_vocabs.get(&stream)
    }

    pub fn target_vocab(&self, task: &str) -> Result<&Vocabulary> {
        self.target_vocabs
            .get(task)
            .ok_or_else(|| Error::contract(format!("unknown task {task:?}")))
    }

    // ── Parameter traversal ──────────────────────────────────────────────────

    /// Parameters shared by every task: encoders, attentions, decoder init.
    fn shared_params(&self) -> ParamList<'_> {
        let mut out = Vec::new();
        for (stream, enc) in &self.encoders {
            enc.embedding.params(&format!("encoder.{}.embed", stream.name()), &mut out);
            enc.rnn.params(&format!("encoder.{}.rnn", stream.name()), &mut out);
        }
        self.mr_attention.params("attention.mr", &mut out);
        if let Some(a) = &self.utt_attention {
            a.params("attention.utterance", &mut out);
        }
        self.decoder_init.params("decoder_init", &mut out);
        out
    }

    fn decoder_params<'a>(&'a self, task: &str, dec: &'a TaskDecoder) -> ParamList<'a> {
        let mut out = Vec::new();
        dec.embedding.params(&format!("task.{task}.embed"), &mut out);
        dec.cell.params(&format!("task.{task}.cell"), &mut out);
        dec.projection.params(&format!("task.{task}.proj"), &mut out);
        out
    }

    /// All parameters, shared first, then per-task decoders by task name.
    pub fn params(&self) -> ParamList<'_> {
        let mut out = self.shared_params();
        for (task, dec) in &self.decoders {
            out.extend(self.decoder_params(task, dec));
        }
        out
    }

    pub fn params_mut(&mut self) -> ParamListMut<'_> {
        let mut out = Vec::new();
        for (stream, enc) in &mut self.encoders {
            enc.embedding.params_mut(&format!("encoder.{}.embed", stream.name()), &mut out);
            enc.rnn.params_mut(&format!("encoder.{}.rnn", stream.name()), &mut out);
        }
        self.mr_attention.params_mut("attention.mr", &mut out);
        if let Some(a) = &mut self.utt_attention {
            a.params_mut("attention.utterance", &mut out);
        }
        self.decoder_init.params_mut("decoder_init", &mut out);
        for (task, dec) in &mut self.decoders {
            dec.embedding.params_mut(&format!("task.{task}.embed"), &mut out);
            dec.cell.params_mut(&format!("task.{task}.cell"), &mut out);
            dec.projection.params_mut(&format!("task.{task}.proj"), &mut out);
        }
        out
    }

    /// The parameters a single task's forward pass touches: shared ones, then
    /// that task's decoder. This is the order `TaskBound::leaves` mirrors.
    pub fn task_params(&self, task: &str) -> Result<ParamList<'_>> {
        let dec = self
            .decoders
            .get(task)
            .ok_or_else(|| Error::contract(format!("unknown task {task:?}")))?;
        let mut out = self.shared_params();
        out.extend(self.decoder_params(task, dec));
        Ok(out)
    }

    // ── Binding into a graph ─────────────────────────────────────────────────

    pub fn bind_task(&self, g: &mut Graph, task: &str) -> Result<TaskBound> {
        let dec = self
            .decoders
            .get(task)
            .ok_or_else(|| Error::contract(format!("unknown task {task:?}")))?;
        let streams: BTreeMap<Stream, (EmbeddingBound, BiGruEncoderBound)> = self
            .encoders
            .iter()
            .map(|(s, enc)| (*s, (enc.embedding.bind(g), enc.rnn.bind(g))))
            .collect();
        Ok(TaskBound {
            task: task.to_string(),
            enabled: self.config.enabled_encoders.clone(),
            mr_streams: self.config.mr_streams(),
            streams,
            mr_attn: self.mr_attention.bind(g),
            utt_attn: self.utt_attention.as_ref().map(|a| a.bind(g)),
            dec_init: self.decoder_init.bind(g),
            dec_embed: dec.embedding.bind(g),
            dec_cell: dec.cell.bind(g),
            dec_proj: dec.projection.bind(g),
            context_in_projection: self.config.context_in_projection,
        })
    }

    /// Rebuild a task binding from pre-made leaf ids ordered exactly like
    /// `task_params(task)`. This is what lets the whole forward pass run
    /// under the finite-difference checker, which owns the leaves.
    fn bind_task_from_ids(&self, task: &str, ids: &[TensorId]) -> Result<TaskBound> {
        let expected = self.task_params(task)?.len();
        if ids.len() != expected {
            return Err(Error::contract(format!(
                "expected {expected} leaves for task {task:?}, got {}",
                ids.len()
            )));
        }
        struct Cursor<'a> {
            ids: &'a [TensorId],
            at: usize,
        }
        impl Cursor<'_> {
            fn take(&mut self) -> TensorId {
                let id = self.ids[self.at];
                self.at += 1;
                id
            }
            fn gru(&mut self, hidden_dim: usize) -> GruCellBound {
                GruCellBound {
                    w_z: self.take(),
                    u_z: self.take(),
                    b_z: self.take(),
                    w_r: self.take(),
                    u_r: self.take(),
                    b_r: self.take(),
                    w_h: self.take(),
                    u_h: self.take(),
                    b_h: self.take(),
                    hidden_dim,
                }
            }
        }
        let mut cur = Cursor { ids, at: 0 };
        let h = self.config.hidden_dim;
        let streams: BTreeMap<Stream, (EmbeddingBound, BiGruEncoderBound)> = self
            .encoders
            .keys()
            .map(|s| {
                let emb = EmbeddingBound { table: cur.take() };
                let rnn = BiGruEncoderBound {
                    fwd: cur.gru(h),
                    bwd: cur.gru(h),
                };
                (*s, (emb, rnn))
            })
            .collect();
        let mr_attn = LuongAttentionBound { w_a: cur.take() };
        let utt_attn = self
            .utt_attention
            .as_ref()
            .map(|_| LuongAttentionBound { w_a: cur.take() });
        let dec_init = LinearBound { w: cur.take(), b: cur.take() };
        let dec_embed = EmbeddingBound { table: cur.take() };
        let dec_cell = cur.gru(h);
        let dec_proj = LinearBound { w: cur.take(), b: cur.take() };
        Ok(TaskBound {
            task: task.to_string(),
            enabled: self.config.enabled_encoders.clone(),
            mr_streams: self.config.mr_streams(),
            streams,
            mr_attn,
            utt_attn,
            dec_init,
            dec_embed,
            dec_cell,
            dec_proj,
            context_in_projection: self.config.context_in_projection,
        })
    }

    // ── Instance rendering ───────────────────────────────────────────────────

    /// Encode an instance's enabled input streams into id sequences. Streams
    /// with nothing to say come back empty; batch construction turns empty
    /// rows into a single PAD token.
    pub fn render_streams(&self, inst: &Instance) -> Result<BTreeMap<Stream, Vec<u32>>> {
        let mut out = BTreeMap::new();
        for stream in &self.config.enabled_encoders {
            let vocab = &self.stream_vocabs[stream];
            let tokens: Vec<String> = match stream {
                Stream::SlotTypes => slot_type_tokens(&inst.mr),
                Stream::SlotValues => slot_value_tokens(&inst.mr),
                Stream::DialogAct => vec![inst.mr.dialog_act.clone()],
                Stream::Utterance => match (&self.config.utterance_mode, &inst.context) {
                    (UtteranceMode::None, _) | (_, None) => Vec::new(),
                    (UtteranceMode::Lex, Some(c)) => tokenize(c),
                    (UtteranceMode::Delex, Some(_)) => {
                        let delex = inst.delex_context.as_ref().ok_or_else(|| {
                            Error::contract(format!(
                                "instance {} has a context but no delexicalized context",
                                inst.id
                            ))
                        })?;
                        split_tokens(delex).iter().map(|t| t.to_string()).collect()
                    }
                },
            };
            out.insert(*stream, vocab.encode(&tokens));
        }
        Ok(out)
    }

    /// Build a padded batch from (instance, delexicalized target) pairs.
    pub fn make_batch(&self, task: &str, pairs: &[(&Instance, &str)]) -> Result<Batch> {
        let vocab = self.target_vocab(task)?;
        if pairs.is_empty() {
            return Err(Error::contract("cannot build an empty batch".to_string()));
        }
        let mut stream_rows: BTreeMap<Stream, Vec<Vec<u32>>> = self
            .config
            .enabled_encoders
            .iter()
            .map(|s| (*s, Vec::with_capacity(pairs.len())))
            .collect();
        let mut target_ids = Vec::with_capacity(pairs.len());
        for (inst, target) in pairs {
            for (stream, ids) in self.render_streams(inst)? {
                stream_rows.get_mut(&stream).unwrap().push(ids);
            }
            let tokens: Vec<String> = split_tokens(target).iter().map(|t| t.to_string()).collect();
            target_ids.push(vocab.encode(&tokens));
        }
        let batch = Batch {
            task: task.to_string(),
            streams: stream_rows
                .into_iter()
                .map(|(s, rows)| (s, StreamBatch::from_rows(rows)))
                .collect(),
            targets: target_rows(target_ids),
        };
        batch.validate()?;
        Ok(batch)
    }

    // ── Convenience evaluation entry points ──────────────────────────────────

    /// Token-mean loss of one batch in a throwaway graph.
    pub fn loss_value(&self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.bind_task(&mut g, &batch.task)?;
        let loss = bound.forward_loss(&mut g, batch)?;
        Ok(g.value(loss).data[0])
    }

    /// Fraction of unpadded target positions whose argmax logit (ties to the
    /// lowest id) equals the gold token, under teacher forcing.
    pub fn token_accuracy(&self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let bound = self.bind_task(&mut g, &batch.task)?;
        let (logits, golds) = bound.forward_logits(&mut g, batch)?;
        let values = g.value(logits);
        let v = values.shape[1];
        let mut hits = 0usize;
        for (row, &gold) in golds.iter().enumerate() {
            let data = &values.data[row * v..(row + 1) * v];
            let mut best = 0usize;
            for (i, &x) in data.iter().enumerate() {
                if x > data[best] {
                    best = i;
                }
            }
            if best == gold as usize {
                hits += 1;
            }
        }
        Ok(hits as f64 / golds.len() as f64)
    }

    /// Central finite-difference check of d(loss)/d(parameter) over every
    /// parameter the batch's task uses. Returns the worst relative error.
    pub fn finite_difference_check(&self, batch: &Batch, epsilon: f64) -> Result<f64> {
        let named = self.task_params(&batch.task)?;
        let params: Vec<(&str, nlgen_core::tensor::Tensor)> =
            named.iter().map(|(n, t)| (n.as_str(), (*t).clone())).collect();
        grad_check(
            &params,
            |g, ids| {
                let bound = self.bind_task_from_ids(&batch.task, ids)?;
                bound.forward_loss(g, batch)
            },
            epsilon,
        )
    }
}

// ── Bound task network ───────────────────────────────────────────────────────

/// Everything one task's forward pass needs, bound into a graph: shared
/// encoder leaves plus this task's decoder leaves.
#[derive(Debug)]
pub struct TaskBound {
    pub task: String,
    enabled: BTreeSet<Stream>,
    mr_streams: Vec<Stream>,
    streams: BTreeMap<Stream, (EmbeddingBound, BiGruEncoderBound)>,
    mr_attn: LuongAttentionBound,
    utt_attn: Option<LuongAttentionBound>,
    dec_init: LinearBound,
    dec_embed: EmbeddingBound,
    dec_cell: GruCellBound,
    dec_proj: LinearBound,
    context_in_projection: bool,
}

/// Per-instance encoder output: states per stream, the concatenated MR
/// attention keys, optional utterance keys, and the decoder start state.
#[derive(Debug)]
pub struct InstanceEncoding {
    pub stream_states: BTreeMap<Stream, TensorId>,
    pub stream_finals: BTreeMap<Stream, TensorId>,
    pub mr_keys: TensorId,
    pub mr_valid: Vec<bool>,
    pub utt_keys: Option<TensorId>,
    pub utt_valid: Vec<bool>,
    pub h0: TensorId,
}

/// One decoder step's outputs, with the attention internals exposed.
#[derive(Debug)]
pub struct StepOutput {
    pub logits: TensorId,
    pub h_next: TensorId,
    pub c_mr: TensorId,
    pub mr_weights: TensorId,
    pub c_utt: Option<TensorId>,
    pub utt_weights: Option<TensorId>,
}

impl TaskBound {
    /// Leaf ids in `task_params` order, for reading gradients after backward.
    pub fn leaves(&self) -> Vec<(String, TensorId)> {
        let mut out = Vec::new();
        for (stream, (emb, rnn)) in &self.streams {
            emb.leaves(&format!("encoder.{}.embed", stream.name()), &mut out);
            rnn.leaves(&format!("encoder.{}.rnn", stream.name()), &mut out);
        }
        self.mr_attn.leaves("attention.mr", &mut out);
        if let Some(a) = &self.utt_attn {
            a.leaves("attention.utterance", &mut out);
        }
        self.dec_init.leaves("decoder_init", &mut out);
        self.dec_embed.leaves(&format!("task.{}.embed", self.task), &mut out);
        self.dec_cell.leaves(&format!("task.{}.cell", self.task), &mut out);
        self.dec_proj.leaves(&format!("task.{}.proj", self.task), &mut out);
        out
    }

    /// Encode one instance's id sequences (all enabled streams required;
    /// empty sequences are treated as a single PAD token).
    pub fn encode_example(
        &self,
        g: &mut Graph,
        inputs: &BTreeMap<Stream, Vec<u32>>,
    ) -> Result<InstanceEncoding> {
        let have: BTreeSet<Stream> = inputs.keys().copied().collect();
        if have != self.enabled {
            return Err(Error::contract(format!(
                "input streams {:?} do not match enabled encoders {:?}",
                have.iter().map(Stream::name).collect::<Vec<_>>(),
                self.enabled.iter().map(Stream::name).collect::<Vec<_>>()
            )));
        }
        let mut stream_states = BTreeMap::new();
        let mut stream_finals = BTreeMap::new();
        for (stream, ids) in inputs {
            let (emb, rnn) = &self.streams[stream];
            let padded_single = vec![PAD];
            let ids = if ids.is_empty() { &padded_single } else { ids };
            let embedded = emb.lookup(g, ids)?;
            let (states, final_state) = rnn.encode(g, embedded)?;
            stream_states.insert(*stream, states);
            stream_finals.insert(*stream, final_state);
        }

        let mr_parts: Vec<TensorId> = self.mr_streams.iter().map(|s| stream_states[s]).collect();
        let mr_keys = g.concat(&mr_parts, 0)?;
        let mr_valid = vec![true; g.value(mr_keys).shape[0]];

        let finals: Vec<TensorId> = self.mr_streams.iter().map(|s| stream_finals[s]).collect();
        let mut acc = finals[0];
        for f in &finals[1..] {
            acc = g.add(acc, *f)?;
        }
        let mean = g.scale(acc, 1.0 / finals.len() as f64);
        let h0 = self.dec_init.forward(g, mean)?;

        let (utt_keys, utt_valid) = if self.enabled.contains(&Stream::Utterance) {
            let keys = stream_states[&Stream::Utterance];
            let len = g.value(keys).shape[0];
            (Some(keys), vec![true; len])
        } else {
            (None, Vec::new())
        };

        Ok(InstanceEncoding {
            stream_states,
            stream_finals,
            mr_keys,
            mr_valid,
            utt_keys,
            utt_valid,
            h0,
        })
    }

    /// Encode every row of a batch at its exact lengths.
    pub fn encode_inputs(&self, g: &mut Graph, batch: &Batch) -> Result<Vec<InstanceEncoding>> {
        if batch.task != self.task {
            return Err(Error::contract(format!(
                "batch for task {:?} fed to a binding of task {:?}",
                batch.task, self.task
            )));
        }
        batch.validate()?;
        (0..batch.size())
            .map(|r| {
                let inputs: BTreeMap<Stream, Vec<u32>> = batch
                    .streams
                    .iter()
                    .map(|(s, sb)| (*s, sb.row(r).to_vec()))
                    .collect();
                self.encode_example(g, &inputs)
            })
            .collect()
    }

    /// One decoder step with the attention internals exposed.
    pub fn step_full(
        &self,
        g: &mut Graph,
        y_prev: u32,
        h_prev: TensorId,
        enc: &InstanceEncoding,
    ) -> Result<StepOutput> {
        let emb = self.dec_embed.lookup(g, &[y_prev])?;
        let (c_mr, mr_weights) = self
            .mr_attn
            .attend_masked(g, h_prev, enc.mr_keys, &enc.mr_valid)?;
        let (c_utt, utt_weights) = match (&self.utt_attn, enc.utt_keys) {
            (Some(attn), Some(keys)) => {
                let (c, w) = attn.attend_masked(g, h_prev, keys, &enc.utt_valid)?;
                (Some(c), Some(w))
            }
            (None, _) => (None, None),
            (Some(_), None) => {
                return Err(Error::contract(
                    "utterance attention enabled but the encoding has no utterance states"
                        .to_string(),
                ))
            }
        };

        let mut input_parts = vec![emb, c_mr];
        if let Some(c) = c_utt {
            input_parts.push(c);
        }
        let x = g.concat(&input_parts, 1)?;
        let h_next = self.dec_cell.step(g, x, h_prev)?;

        let proj_in = if self.context_in_projection {
            let mut parts = vec![h_next, c_mr];
            if let Some(c) = c_utt {
                parts.push(c);
            }
            g.concat(&parts, 1)?
        } else {
            h_next
        };
        let logits = self.dec_proj.forward(g, proj_in)?;
        Ok(StepOutput {
            logits,
            h_next,
            c_mr,
            mr_weights,
            c_utt,
            utt_weights,
        })
    }

    /// One decoder step: logits over the task vocabulary and the next state.
    pub fn decoder_step(
        &self,
        g: &mut Graph,
        y_prev: u32,
        h_prev: TensorId,
        enc: &InstanceEncoding,
    ) -> Result<(TensorId, TensorId)> {
        let step = self.step_full(g, y_prev, h_prev, enc)?;
        Ok((step.logits, step.h_next))
    }

    /// Teacher-forced logits for every unpadded target position, concatenated
    /// across the batch, with the matching gold ids.
    pub fn forward_logits(&self, g: &mut Graph, batch: &Batch) -> Result<(TensorId, Vec<u32>)> {
        let encodings = self.encode_inputs(g, batch)?;
        let mut logit_rows = Vec::new();
        let mut golds = Vec::new();
        for (r, enc) in encodings.iter().enumerate() {
            let mut h = enc.h0;
            for t in 0..batch.targets.lengths[r] {
                let (logits, h_next) =
                    self.decoder_step(g, batch.targets.input[r][t], h, enc)?;
                logit_rows.push(logits);
                golds.push(batch.targets.gold[r][t]);
                h = h_next;
            }
        }
        let logits = g.concat(&logit_rows, 0)?;
        Ok((logits, golds))
    }

    /// Token-mean cross-entropy over the batch (teacher forcing).
    pub fn forward_loss(&self, g: &mut Graph, batch: &Batch) -> Result<TensorId> {
        let (logits, golds) = self.forward_logits(g, batch)?;
        let mask = vec![true; golds.len()];
        cross_entropy(g, logits, &golds, &mask)
    }
}
