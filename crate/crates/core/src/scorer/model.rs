use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::{featurize, Features, NODE_INPUT_DIM};
use super::tape::{Tape, Tensor, Var};
use super::{FeatureSpec, ScoreVector, ScorerError};
use crate::structio::{AminoAcid, MaskedGraph};

#[derive(Debug, Clone, Copy)]
enum Init {
    /// uniform in ±1/sqrt(fan_in)
    FanIn(usize),
    Zeros,
    Ones,
}

struct Slot {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

struct MessageGvp {
    ws_src: usize,
    ws_dst: usize,
    ws_edge: usize,
    ws_norm: usize,
    bs: usize,
    wh_src: usize,
    wh_dst: usize,
    wh_edge: usize,
    wu: usize,
    wg: usize,
    bg: usize,
}

struct NodeGvp {
    ws: usize,
    ws_norm: usize,
    bs: usize,
    wh: usize,
    wu: usize,
    wg: usize,
    bg: usize,
}

struct LayerIdx {
    msg: MessageGvp,
    ln1_gain: usize,
    ln1_bias: usize,
    update: NodeGvp,
    ln2_gain: usize,
    ln2_bias: usize,
}

struct Layout {
    slots: Vec<Slot>,
    embed_w: usize,
    embed_b: usize,
    layers: Vec<LayerIdx>,
    out_wh: usize,
    out_ws: usize,
    out_ws_norm: usize,
    out_bs: usize,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
}

struct LayoutBuilder {
    slots: Vec<Slot>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.slots.push(Slot { name, rows, cols, init });
        self.slots.len() - 1
    }
}

impl Layout {
    fn new(spec: &FeatureSpec) -> Layout {
        let (n, nu, m, eta, o) = (
            spec.node_scalar_dim,
            spec.node_vector_dim,
            spec.edge_scalar_dim,
            spec.edge_vector_dim,
            spec.hidden_out_dim,
        );
        let mut b = LayoutBuilder { slots: Vec::new() };
        let embed_w = b.add("embed.w".into(), NODE_INPUT_DIM, n, Init::FanIn(NODE_INPUT_DIM));
        let embed_b = b.add("embed.b".into(), 1, n, Init::Zeros);

        let h = 2 * nu + eta;
        let msg_fan = 2 * n + m + h;
        let mut layers = Vec::with_capacity(spec.num_layers);
        for l in 0..spec.num_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let msg = MessageGvp {
                ws_src: b.add(p("msg.ws_src"), n, n, Init::FanIn(msg_fan)),
                ws_dst: b.add(p("msg.ws_dst"), n, n, Init::FanIn(msg_fan)),
                ws_edge: b.add(p("msg.ws_edge"), m, n, Init::FanIn(msg_fan)),
                ws_norm: b.add(p("msg.ws_norm"), h, n, Init::FanIn(msg_fan)),
                bs: b.add(p("msg.bs"), 1, n, Init::Zeros),
                wh_src: b.add(p("msg.wh_src"), nu, h, Init::FanIn(h)),
                wh_dst: b.add(p("msg.wh_dst"), nu, h, Init::FanIn(h)),
                wh_edge: b.add(p("msg.wh_edge"), eta, h, Init::FanIn(h)),
                wu: b.add(p("msg.wu"), h, nu, Init::FanIn(h)),
                wg: b.add(p("msg.wg"), n, nu, Init::FanIn(n)),
                bg: b.add(p("msg.bg"), 1, nu, Init::Zeros),
            };
            let ln1_gain = b.add(p("ln1.gain"), 1, n, Init::Ones);
            let ln1_bias = b.add(p("ln1.bias"), 1, n, Init::Zeros);
            let update = NodeGvp {
                ws: b.add(p("update.ws"), n, n, Init::FanIn(n + nu)),
                ws_norm: b.add(p("update.ws_norm"), nu, n, Init::FanIn(n + nu)),
                bs: b.add(p("update.bs"), 1, n, Init::Zeros),
                wh: b.add(p("update.wh"), nu, nu, Init::FanIn(nu)),
                wu: b.add(p("update.wu"), nu, nu, Init::FanIn(nu)),
                wg: b.add(p("update.wg"), n, nu, Init::FanIn(n)),
                bg: b.add(p("update.bg"), 1, nu, Init::Zeros),
            };
            let ln2_gain = b.add(p("ln2.gain"), 1, n, Init::Ones);
            let ln2_bias = b.add(p("ln2.bias"), 1, n, Init::Zeros);
            layers.push(LayerIdx {
                msg,
                ln1_gain,
                ln1_bias,
                update,
                ln2_gain,
                ln2_bias,
            });
        }
        let out_wh = b.add("out.wh".into(), nu, nu, Init::FanIn(nu));
        let out_ws = b.add("out.ws".into(), n, o, Init::FanIn(n + nu));
        let out_ws_norm = b.add("out.ws_norm".into(), nu, o, Init::FanIn(n + nu));
        let out_bs = b.add("out.bs".into(), 1, o, Init::Zeros);
        let head_w1 = b.add("head.w1".into(), o, o, Init::FanIn(o));
        let head_b1 = b.add("head.b1".into(), 1, o, Init::Zeros);
        let head_w2 = b.add("head.w2".into(), o, AminoAcid::COUNT, Init::FanIn(o));
        let head_b2 = b.add("head.b2".into(), 1, AminoAcid::COUNT, Init::Zeros);
        Layout {
            slots: b.slots,
            embed_w,
            embed_b,
            layers,
            out_wh,
            out_ws,
            out_ws_norm,
            out_bs,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
        }
    }
}

/// All learnable tensors of the scorer, in a fixed order determined by the
/// [`FeatureSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub spec: FeatureSpec,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ScorerParams {
    pub fn init(spec: FeatureSpec, seed: u64) -> Result<Self, ScorerError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(layout.slots.len());
        let mut tensors = Vec::with_capacity(layout.slots.len());
        for slot in &layout.slots {
            let len = slot.rows * slot.cols;
            let data = match slot.init {
                Init::FanIn(fan) => {
                    let bound = 1.0 / (fan as f64).sqrt();
                    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
                }
                Init::Zeros => vec![0.0; len],
                Init::Ones => vec![1.0; len],
            };
            names.push(slot.name.clone());
            tensors.push(Tensor::from_vec(slot.rows, slot.cols, data));
        }
        Ok(ScorerParams { spec, names, tensors })
    }

    /// Checks tensor names and shapes against the layout implied by `spec`.
    pub fn validate(&self) -> Result<(), ScorerError> {
        self.spec.validate()?;
        let layout = Layout::new(&self.spec);
        if layout.slots.len() != self.tensors.len() || self.names.len() != self.tensors.len() {
            return Err(ScorerError::Config(format!(
                "expected {} parameter tensors, found {}",
                layout.slots.len(),
                self.tensors.len()
            )));
        }
        for ((slot, t), name) in layout.slots.iter().zip(&self.tensors).zip(&self.names) {
            if slot.name != *name || slot.rows != t.rows || slot.cols != t.cols || t.data.len() != t.rows * t.cols {
                return Err(ScorerError::Config(format!(
                    "parameter {name} has shape {}x{}, expected {} {}x{}",
                    t.rows, t.cols, slot.name, slot.rows, slot.cols
                )));
            }
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect()
    }
}

/// Node features after one message-passing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub scalars: Tensor,
    pub vectors: Tensor,
}

fn node_gvp(tape: &mut Tape, p: &NodeGvp, s: Var, v: Var, rows: usize, nu: usize) -> (Var, Var) {
    let v3 = tape.reshape(v, 3 * rows, nu);
    let w = tape.param(p.wh);
    let vh3 = tape.matmul(v3, w);
    let vh = tape.reshape(vh3, rows, 3 * nu);
    let norms = tape.vec_norm(vh);
    let ws = tape.param(p.ws);
    let a = tape.matmul(s, ws);
    let wn = tape.param(p.ws_norm);
    let b = tape.matmul(norms, wn);
    let pre = tape.add(a, b);
    let bs = tape.param(p.bs);
    let pre = tape.add_bias(pre, bs);
    let s_out = tape.silu(pre);
    let wu = tape.param(p.wu);
    let vu3 = tape.matmul(vh3, wu);
    let vu = tape.reshape(vu3, rows, 3 * nu);
    let wg = tape.param(p.wg);
    let gl = tape.matmul(s_out, wg);
    let bg = tape.param(p.bg);
    let gl = tape.add_bias(gl, bg);
    let gate = tape.sigmoid(gl);
    let v_out = tape.gate_vec(vu, gate);
    (s_out, v_out)
}

fn build_logits(
    tape: &mut Tape,
    layout: &Layout,
    spec: &FeatureSpec,
    f: &Features,
    dropout_mask: Option<Vec<f64>>,
    mut trace: Option<&mut Vec<LayerTrace>>,
) -> Var {
    let nodes = f.num_nodes();
    let edges = f.num_edges();
    let nu = spec.node_vector_dim;
    let eta = spec.edge_vector_dim;
    let h = 2 * nu + eta;

    let x = tape.input(f.node_scalars.clone());
    let we = tape.param(layout.embed_w);
    let s0 = tape.matmul(x, we);
    let be = tape.param(layout.embed_b);
    let mut s = tape.add_bias(s0, be);
    let mut v = tape.input(f.node_vectors.clone());
    let es = tape.input(f.edge_scalars.clone());
    let ev = tape.input(f.edge_vectors.clone());
    let ev3 = tape.reshape(ev, 3 * edges, eta);

    for layer in &layout.layers {
        let p = &layer.msg;
        // scalar path: per-node products gathered onto edges
        let w = tape.param(p.ws_src);
        let a_src = tape.matmul(s, w);
        let w = tape.param(p.ws_dst);
        let a_dst = tape.matmul(s, w);
        let g_src = tape.gather(a_src, &f.src);
        let g_dst = tape.gather(a_dst, &f.dst);
        let mut pre = tape.add(g_src, g_dst);
        let w = tape.param(p.ws_edge);
        let a_edge = tape.matmul(es, w);
        pre = tape.add(pre, a_edge);

        // vector path
        let v3 = tape.reshape(v, 3 * nodes, nu);
        let w = tape.param(p.wh_src);
        let vs = tape.matmul(v3, w);
        let vs = tape.reshape(vs, nodes, 3 * h);
        let w = tape.param(p.wh_dst);
        let vd = tape.matmul(v3, w);
        let vd = tape.reshape(vd, nodes, 3 * h);
        let w = tape.param(p.wh_edge);
        let ve = tape.matmul(ev3, w);
        let ve = tape.reshape(ve, edges, 3 * h);
        let gs = tape.gather(vs, &f.src);
        let gd = tape.gather(vd, &f.dst);
        let vh = tape.add(gs, gd);
        let vh = tape.add(vh, ve);
        let norms = tape.vec_norm(vh);
        let w = tape.param(p.ws_norm);
        let a_norm = tape.matmul(norms, w);
        pre = tape.add(pre, a_norm);
        let bs = tape.param(p.bs);
        pre = tape.add_bias(pre, bs);
        let ms = tape.silu(pre);

        let vh3 = tape.reshape(vh, 3 * edges, h);
        let w = tape.param(p.wu);
        let vu = tape.matmul(vh3, w);
        let vu = tape.reshape(vu, edges, 3 * nu);
        let w = tape.param(p.wg);
        let gl = tape.matmul(ms, w);
        let bg = tape.param(p.bg);
        let gl = tape.add_bias(gl, bg);
        let gate = tape.sigmoid(gl);
        let mv = tape.gate_vec(vu, gate);

        let agg_s = tape.scatter(ms, &f.dst, None, nodes);
        let agg_v = tape.scatter(mv, &f.dst, None, nodes);
        let sum_s = tape.add(s, agg_s);
        let (g1, b1) = (tape.param(layer.ln1_gain), tape.param(layer.ln1_bias));
        s = tape.layer_norm(sum_s, g1, b1);
        let sum_v = tape.add(v, agg_v);
        v = tape.vec_normalize(sum_v);

        let (us, uv) = node_gvp(tape, &layer.update, s, v, nodes, nu);
        let sum_s = tape.add(s, us);
        let (g2, b2) = (tape.param(layer.ln2_gain), tape.param(layer.ln2_bias));
        s = tape.layer_norm(sum_s, g2, b2);
        let sum_v = tape.add(v, uv);
        v = tape.vec_normalize(sum_v);

        if let Some(tr) = trace.as_deref_mut() {
            tr.push(LayerTrace {
                scalars: tape.value(s).clone(),
                vectors: tape.value(v).clone(),
            });
        }
    }

    // readout of the target Cα
    let ts = tape.gather(s, &[f.target]);
    let tv = tape.gather(v, &[f.target]);
    let tv3 = tape.reshape(tv, 3, nu);
    let w = tape.param(layout.out_wh);
    let ovh = tape.matmul(tv3, w);
    let ovh = tape.reshape(ovh, 1, 3 * nu);
    let on = tape.vec_norm(ovh);
    let w = tape.param(layout.out_ws);
    let a = tape.matmul(ts, w);
    let w = tape.param(layout.out_ws_norm);
    let b = tape.matmul(on, w);
    let pre = tape.add(a, b);
    let bo = tape.param(layout.out_bs);
    let pre = tape.add_bias(pre, bo);
    let hidden_out = tape.silu(pre);

    let w1 = tape.param(layout.head_w1);
    let z = tape.matmul(hidden_out, w1);
    let b1 = tape.param(layout.head_b1);
    let z = tape.add_bias(z, b1);
    let mut z = tape.silu(z);
    if let Some(mask) = dropout_mask {
        z = tape.mask(z, mask);
    }
    let w2 = tape.param(layout.head_w2);
    let logits = tape.matmul(z, w2);
    let b2 = tape.param(layout.head_b2);
    tape.add_bias(logits, b2)
}

fn to_score_vector(t: &Tensor) -> ScoreVector {
    let mut scores = [0.0; 20];
    scores.copy_from_slice(&t.data[..20]);
    ScoreVector { scores }
}

pub(crate) fn forward_features(params: &ScorerParams, features: &Features) -> ScoreVector {
    let layout = Layout::new(&params.spec);
    let mut tape = Tape::new(&params.tensors);
    let logits = build_logits(&mut tape, &layout, &params.spec, features, None, None);
    to_score_vector(tape.value(logits))
}

/// Scores a masked graph (dropout disabled).
pub fn forward(params: &ScorerParams, masked: &MaskedGraph) -> Result<ScoreVector, ScorerError> {
    params.validate()?;
    let features = featurize(masked, &params.spec)?;
    Ok(forward_features(params, &features))
}

/// Like [`forward`], also returning node features after every layer.
pub fn forward_trace(
    params: &ScorerParams,
    masked: &MaskedGraph,
) -> Result<(ScoreVector, Vec<LayerTrace>), ScorerError> {
    params.validate()?;
    let features = featurize(masked, &params.spec)?;
    let layout = Layout::new(&params.spec);
    let mut tape = Tape::new(&params.tensors);
    let mut trace = Vec::with_capacity(params.spec.num_layers);
    let logits = build_logits(&mut tape, &layout, &params.spec, &features, None, Some(&mut trace));
    Ok((to_score_vector(tape.value(logits)), trace))
}

/// One training example: features, label and an optional dropout seed.
pub(crate) struct Example<'a> {
    pub features: &'a Features,
    pub label: AminoAcid,
    pub dropout: Option<(f64, u64)>,
}

fn example_loss_grad(params: &ScorerParams, layout: &Layout, ex: &Example, scale: f64, grads: &mut [Tensor]) -> (f64, bool) {
    let mut tape = Tape::new(&params.tensors);
    let mask = ex.dropout.filter(|(p, _)| *p > 0.0).map(|(p, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - p;
        (0..params.spec.hidden_out_dim)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    });
    let logits = build_logits(&mut tape, layout, &params.spec, ex.features, mask, None);
    let sv = to_score_vector(tape.value(logits));
    let loss = sv.cross_entropy(ex.label);
    let correct = sv.argmax() == ex.label;
    let mut seed = sv.softmax().to_vec();
    seed[ex.label.index()] -= 1.0;
    seed.iter_mut().for_each(|g| *g *= scale);
    tape.backward(logits, Tensor::from_vec(1, 20, seed), grads);
    (loss, correct)
}

const GRAD_CHUNKS: usize = 8;

/// Mean loss, gradient and number of correct argmax predictions over a batch.
///
/// Examples are split into a fixed number of contiguous chunks whose
/// partial gradients are summed in chunk order, so the result does not
/// depend on thread scheduling.
pub(crate) fn batch_loss_grad(params: &ScorerParams, batch: &[Example]) -> (f64, Vec<Tensor>, usize) {
    let layout = Layout::new(&params.spec);
    let scale = 1.0 / batch.len() as f64;
    let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let partials: Vec<(f64, Vec<Tensor>, usize)> = batch
        .par_chunks(chunk)
        .map(|items| {
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            let mut correct = 0;
            for ex in items {
                let (l, c) = example_loss_grad(params, &layout, ex, scale, &mut grads);
                loss += l;
                correct += c as usize;
            }
            (loss, grads, correct)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut loss, mut grads, mut correct) = iter.next().unwrap_or_else(|| (0.0, params.zeros_like(), 0));
    for (l, g, c) in iter {
        loss += l;
        correct += c;
        for (a, b) in grads.iter_mut().zip(&g) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }
    (loss * scale, grads, correct)
}

/// Mean categorical cross-entropy over `batch` and its gradient with respect
/// to every parameter tensor (dropout disabled).
pub fn loss_and_grad(params: &ScorerParams, batch: &[MaskedGraph]) -> Result<(f64, Vec<Tensor>), ScorerError> {
    if batch.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    params.validate()?;
    let features: Vec<Features> = batch
        .iter()
        .map(|m| featurize(m, &params.spec))
        .collect::<Result<_, _>>()?;
    let examples: Vec<Example> = features
        .iter()
        .zip(batch)
        .map(|(f, m)| Example {
            features: f,
            label: m.true_label,
            dropout: None,
        })
        .collect();
    let (loss, grads, _) = batch_loss_grad(params, &examples);
    Ok((loss, grads))
}
