//! Forward and reverse passes through a materialized model.
//!
//! Activations are dense `[batch][channel][y][x]` buffers (vector mode is the
//! `1x1` spatial case). The forward pass caches exactly what the backward
//! pass needs: the pre-relu aggregated input of every unit, the normalized
//! activations, and the per-channel batch statistics. Training-mode
//! normalization uses batch statistics; evaluation uses the running averages
//! stored on the model.

use crate::diffengine::{kd_loss, kd_loss_grad, Batch, KdLossConfig};
use crate::error::{Error, Result};
use crate::graphgen::NodeKind;
use crate::netbuilder::{Model, NORM_EPS};

#[inline]
fn at(c_total: usize, h: usize, w: usize, b: usize, c: usize, y: usize, x: usize) -> usize {
    ((b * c_total + c) * h + y) * w + x
}

/// Everything the backward pass needs from one training-mode forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    pub logits: Vec<f64>,
    /// Activation per node id (empty for nodes that were never computed).
    act: Vec<Vec<f64>>,
    /// Pre-relu aggregated input per unit id.
    agg: Vec<Vec<f64>>,
    /// Normalized (pre scale/shift) output per unit id.
    xhat: Vec<Vec<f64>>,
    /// Per-channel `1/sqrt(var + eps)` per unit id.
    inv_std: Vec<Vec<f64>>,
    batch_mean: Vec<Vec<f64>>,
    batch_var: Vec<Vec<f64>>,
    sink_agg: Vec<f64>,
    pooled: Vec<f64>,
}

impl ForwardCache {
    /// Sign pattern of every relu input, concatenated over units in id
    /// order. Used by gradient checks to spot kink crossings.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.agg
            .iter()
            .flat_map(|v| v.iter().map(|&x| x > 0.0))
            .collect()
    }

    /// Smallest |relu input| over the whole batch; `f64::INFINITY` when the
    /// model has no units.
    pub fn min_relu_margin(&self) -> f64 {
        self.agg
            .iter()
            .flat_map(|v| v.iter().map(|&x| x.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy)]
enum NormMode {
    BatchStats,
    RunningStats,
}

/// 1x1 or 3x3 transform with implicit zero padding of `k/2`.
fn transform_forward(
    r: &[f64],
    n: usize,
    in_w: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_w: usize,
    k: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; n * out_w * h * w];
    if k == 1 && h * w == 1 {
        // Dense layer: contiguous dot products.
        for b in 0..n {
            let rrow = &r[b * in_w..(b + 1) * in_w];
            let orow = &mut out[b * out_w..(b + 1) * out_w];
            for o in 0..out_w {
                let wrow = &weight[o * in_w..(o + 1) * in_w];
                let mut acc = bias[o];
                for i in 0..in_w {
                    acc += wrow[i] * rrow[i];
                }
                orow[o] = acc;
            }
        }
    } else if k == 1 {
        let sp = h * w;
        for b in 0..n {
            for o in 0..out_w {
                let base = (b * out_w + o) * sp;
                for s in 0..sp {
                    out[base + s] = bias[o];
                }
                for i in 0..in_w {
                    let wv = weight[o * in_w + i];
                    let rbase = (b * in_w + i) * sp;
                    for s in 0..sp {
                        out[base + s] += wv * r[rbase + s];
                    }
                }
            }
        }
    } else {
        let pad = k / 2;
        for b in 0..n {
            for o in 0..out_w {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = bias[o];
                        for i in 0..in_w {
                            for ky in 0..k {
                                let yy = y + ky;
                                if yy < pad || yy - pad >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let xx = x + kx;
                                    if xx < pad || xx - pad >= w {
                                        continue;
                                    }
                                    acc += weight[((o * in_w + i) * k + ky) * k + kx]
                                        * r[at(in_w, h, w, b, i, yy - pad, xx - pad)];
                                }
                            }
                        }
                        out[at(out_w, h, w, b, o, y, x)] = acc;
                    }
                }
            }
        }
    }
    out
}

/// Accumulates transform gradients: `dw`, `db`, and the input gradient `dr`.
#[allow(clippy::too_many_arguments)]
fn transform_backward(
    r: &[f64],
    dz: &[f64],
    n: usize,
    in_w: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    out_w: usize,
    k: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dr: &mut [f64],
) {
    if k == 1 {
        let sp = h * w;
        for b in 0..n {
            for o in 0..out_w {
                let zbase = (b * out_w + o) * sp;
                let mut dsum = 0.0;
                for s in 0..sp {
                    dsum += dz[zbase + s];
                }
                db[o] += dsum;
                for i in 0..in_w {
                    let rbase = (b * in_w + i) * sp;
                    let wv = weight[o * in_w + i];
                    let mut acc = 0.0;
                    for s in 0..sp {
                        let d = dz[zbase + s];
                        acc += d * r[rbase + s];
                        dr[rbase + s] += wv * d;
                    }
                    dw[o * in_w + i] += acc;
                }
            }
        }
    } else {
        let pad = k / 2;
        for b in 0..n {
            for o in 0..out_w {
                for y in 0..h {
                    for x in 0..w {
                        let d = dz[at(out_w, h, w, b, o, y, x)];
                        if d == 0.0 {
                            continue;
                        }
                        db[o] += d;
                        for i in 0..in_w {
                            for ky in 0..k {
                                let yy = y + ky;
                                if yy < pad || yy - pad >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let xx = x + kx;
                                    if xx < pad || xx - pad >= w {
                                        continue;
                                    }
                                    let ridx = at(in_w, h, w, b, i, yy - pad, xx - pad);
                                    dw[((o * in_w + i) * k + ky) * k + kx] += d * r[ridx];
                                    dr[ridx] += weight[((o * in_w + i) * k + ky) * k + kx] * d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Strided 1x1 projection on a stage-crossing edge.
fn edge_forward(
    inp: &[f64],
    n: usize,
    in_w: usize,
    in_h: usize,
    in_wd: usize,
    weight: &[f64],
    out_w: usize,
    stride: usize,
) -> Vec<f64> {
    let oh = (in_h - 1) / stride + 1;
    let ow = (in_wd - 1) / stride + 1;
    let mut out = vec![0.0; n * out_w * oh * ow];
    for b in 0..n {
        for oc in 0..out_w {
            for yo in 0..oh {
                for xo in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..in_w {
                        acc += weight[oc * in_w + ic]
                            * inp[at(in_w, in_h, in_wd, b, ic, yo * stride, xo * stride)];
                    }
                    out[at(out_w, oh, ow, b, oc, yo, xo)] = acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn edge_backward(
    inp: &[f64],
    dout: &[f64],
    n: usize,
    in_w: usize,
    in_h: usize,
    in_wd: usize,
    weight: &[f64],
    out_w: usize,
    stride: usize,
    dw: &mut [f64],
    dinp: &mut [f64],
) {
    let oh = (in_h - 1) / stride + 1;
    let ow = (in_wd - 1) / stride + 1;
    for b in 0..n {
        for oc in 0..out_w {
            for yo in 0..oh {
                for xo in 0..ow {
                    let d = dout[at(out_w, oh, ow, b, oc, yo, xo)];
                    if d == 0.0 {
                        continue;
                    }
                    for ic in 0..in_w {
                        let iidx = at(in_w, in_h, in_wd, b, ic, yo * stride, xo * stride);
                        dw[oc * in_w + ic] += d * inp[iidx];
                        dinp[iidx] += weight[oc * in_w + ic] * d;
                    }
                }
            }
        }
    }
}

/// Mean-aggregates a node's (possibly edge-transformed) inputs.
fn aggregate_inputs(
    model: &Model,
    act: &[Vec<f64>],
    node: usize,
    n: usize,
) -> Result<Vec<f64>> {
    let preds = model.graph.predecessors(node);
    if preds.is_empty() {
        return Err(Error::Internal(format!("node {node} has no inputs")));
    }
    let mut agg: Option<Vec<f64>> = None;
    for &p in &preds {
        let contrib: Vec<f64>;
        let branch: &[f64] = if let Some(t) = model.edge_transforms.get(&(p, node)) {
            let (ph, pw) = model.plan.node_hw[p];
            contrib = edge_forward(
                &act[p],
                n,
                t.in_width,
                ph,
                pw,
                &t.weight,
                t.out_width,
                t.stride,
            );
            &contrib
        } else {
            &act[p]
        };
        match &mut agg {
            None => agg = Some(branch.to_vec()),
            Some(a) => {
                if a.len() != branch.len() {
                    return Err(Error::Internal(format!(
                        "aggregation shape mismatch at node {node}"
                    )));
                }
                for (x, y) in a.iter_mut().zip(branch) {
                    *x += y;
                }
            }
        }
    }
    let mut agg = agg.expect("at least one input");
    let scale = 1.0 / preds.len() as f64;
    for x in &mut agg {
        *x *= scale;
    }
    Ok(agg)
}

fn forward_pass(model: &Model, inputs: &[f64], n: usize, norm: NormMode) -> Result<ForwardCache> {
    if inputs.len() != n * model.input_len() {
        return Err(Error::Parameter(format!(
            "inputs have length {}, expected {} x {}",
            inputs.len(),
            n,
            model.input_len()
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("batch must contain at least one sample".into()));
    }
    let node_count = model.graph.node_count();
    let mut cache = ForwardCache {
        logits: Vec::new(),
        act: vec![Vec::new(); node_count],
        agg: vec![Vec::new(); node_count],
        xhat: vec![Vec::new(); node_count],
        inv_std: vec![Vec::new(); node_count],
        batch_mean: vec![Vec::new(); node_count],
        batch_var: vec![Vec::new(); node_count],
        sink_agg: Vec::new(),
        pooled: Vec::new(),
    };
    let k = match model.mode {
        crate::netbuilder::InputMode::Vector { .. } => 1,
        crate::netbuilder::InputMode::Image { .. } => 3,
    };

    for &id in &model.topo {
        match model.graph.nodes[id] {
            NodeKind::Source => {
                cache.act[id] = inputs.to_vec();
            }
            NodeKind::Unit { .. } => {
                let unit = &model.units[id - 1];
                let (h, w) = model.plan.node_hw[id];
                let agg = aggregate_inputs(model, &cache.act, id, n)?;
                let r: Vec<f64> = agg.iter().map(|&x| x.max(0.0)).collect();
                let z = transform_forward(
                    &r,
                    n,
                    unit.in_width,
                    h,
                    w,
                    &unit.weight,
                    &unit.bias,
                    unit.out_width,
                    k,
                );
                let c = unit.out_width;
                let sp = h * w;
                let mut y = vec![0.0; z.len()];
                match norm {
                    NormMode::BatchStats => {
                        let count = (n * sp) as f64;
                        let mut mean = vec![0.0; c];
                        let mut var = vec![0.0; c];
                        for b in 0..n {
                            for ch in 0..c {
                                let base = (b * c + ch) * sp;
                                for s in 0..sp {
                                    mean[ch] += z[base + s];
                                }
                            }
                        }
                        for m in &mut mean {
                            *m /= count;
                        }
                        for b in 0..n {
                            for ch in 0..c {
                                let base = (b * c + ch) * sp;
                                for s in 0..sp {
                                    let d = z[base + s] - mean[ch];
                                    var[ch] += d * d;
                                }
                            }
                        }
                        for v in &mut var {
                            *v /= count;
                        }
                        let inv_std: Vec<f64> =
                            var.iter().map(|&v| 1.0 / (v + NORM_EPS).sqrt()).collect();
                        let mut xhat = vec![0.0; z.len()];
                        for b in 0..n {
                            for ch in 0..c {
                                let base = (b * c + ch) * sp;
                                for s in 0..sp {
                                    let xh = (z[base + s] - mean[ch]) * inv_std[ch];
                                    xhat[base + s] = xh;
                                    y[base + s] = unit.gamma[ch] * xh + unit.beta[ch];
                                }
                            }
                        }
                        cache.xhat[id] = xhat;
                        cache.inv_std[id] = inv_std;
                        cache.batch_mean[id] = mean;
                        cache.batch_var[id] = var;
                    }
                    NormMode::RunningStats => {
                        let inv_std: Vec<f64> = unit
                            .run_var
                            .iter()
                            .map(|&v| 1.0 / (v + NORM_EPS).sqrt())
                            .collect();
                        for b in 0..n {
                            for ch in 0..c {
                                let base = (b * c + ch) * sp;
                                for s in 0..sp {
                                    let xh = (z[base + s] - unit.run_mean[ch]) * inv_std[ch];
                                    y[base + s] = unit.gamma[ch] * xh + unit.beta[ch];
                                }
                            }
                        }
                    }
                }
                cache.agg[id] = agg;
                cache.act[id] = y;
            }
            NodeKind::Sink => {
                let agg = aggregate_inputs(model, &cache.act, id, n)?;
                let (h, w) = model.plan.node_hw[id];
                let c = model.plan.head_in;
                let sp = h * w;
                let mut pooled = vec![0.0; n * c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * sp;
                        let mut acc = 0.0;
                        for s in 0..sp {
                            acc += agg[base + s];
                        }
                        pooled[b * c + ch] = acc / sp as f64;
                    }
                }
                let classes = model.num_classes;
                let mut logits = vec![0.0; n * classes];
                for b in 0..n {
                    for cl in 0..classes {
                        let mut acc = model.head_bias[cl];
                        for ch in 0..c {
                            acc += model.head_weight[cl * c + ch] * pooled[b * c + ch];
                        }
                        logits[b * classes + cl] = acc;
                    }
                }
                cache.sink_agg = agg;
                cache.pooled = pooled;
                cache.logits = logits;
            }
        }
    }
    Ok(cache)
}

/// Training-mode forward pass (batch-statistic normalization) with full
/// caches for the backward pass.
pub fn forward_train(model: &Model, inputs: &[f64], n: usize) -> Result<ForwardCache> {
    forward_pass(model, inputs, n, NormMode::BatchStats)
}

/// Evaluation-mode logits: normalization uses the running averages.
pub fn predict(model: &Model, inputs: &[f64], n: usize) -> Result<Vec<f64>> {
    Ok(forward_pass(model, inputs, n, NormMode::RunningStats)?.logits)
}

/// Mean loss over a training-mode forward pass. The gradient-check oracle
/// differentiates exactly this function.
pub fn batch_loss(model: &Model, batch: &Batch, cfg: &KdLossConfig) -> Result<(f64, ForwardCache)> {
    batch.validate(model.input_len(), model.num_classes)?;
    let cache = forward_train(model, batch.inputs, batch.n)?;
    let classes = model.num_classes;
    let mut total = 0.0;
    for b in 0..batch.n {
        let student = &cache.logits[b * classes..(b + 1) * classes];
        let teacher = batch
            .teacher_logits
            .map(|t| &t[b * classes..(b + 1) * classes]);
        total += kd_loss(student, teacher, batch.labels[b], cfg)?;
    }
    Ok((total / batch.n as f64, cache))
}

/// Output of [`backward`].
#[derive(Debug)]
pub struct BackwardResult {
    /// Per-sample mean loss over the batch.
    pub loss: f64,
    /// Training-mode logits (handy for batch accuracy).
    pub logits: Vec<f64>,
    /// Flat gradient vector, aligned with [`Model::flat_params`].
    pub grads: Vec<f64>,
    /// `(unit id, batch mean, batch var)` per unit, for running-stat updates.
    pub norm_stats: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

struct UnitGrads {
    weight: Vec<f64>,
    bias: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

/// Reverse-mode gradients of the mean distillation loss with respect to every
/// trainable parameter. Runs its own training-mode forward pass. The relu
/// subgradient at exactly zero is zero.
pub fn backward(model: &Model, batch: &Batch, cfg: &KdLossConfig) -> Result<BackwardResult> {
    batch.validate(model.input_len(), model.num_classes)?;
    cfg.validate()?;
    if cfg.weight > 0.0 && batch.teacher_logits.is_none() {
        return Err(Error::Config(
            "kd weight is positive but the batch carries no teacher logits".into(),
        ));
    }
    let n = batch.n;
    let classes = model.num_classes;
    let cache = forward_pass(model, batch.inputs, n, NormMode::BatchStats)?;

    // Loss and its gradient on the logits, averaged over the batch.
    let mut total_loss = 0.0;
    let mut dlogits = vec![0.0; n * classes];
    for b in 0..n {
        let student = &cache.logits[b * classes..(b + 1) * classes];
        let teacher = batch
            .teacher_logits
            .map(|t| &t[b * classes..(b + 1) * classes]);
        let (l, g) = kd_loss_grad(student, teacher, batch.labels[b], cfg)?;
        total_loss += l;
        for (j, gv) in g.iter().enumerate() {
            dlogits[b * classes + j] = gv / n as f64;
        }
    }
    let loss = total_loss / n as f64;

    let node_count = model.graph.node_count();
    let mut unit_grads: Vec<UnitGrads> = model
        .units
        .iter()
        .map(|u| UnitGrads {
            weight: vec![0.0; u.weight.len()],
            bias: vec![0.0; u.bias.len()],
            gamma: vec![0.0; u.gamma.len()],
            beta: vec![0.0; u.beta.len()],
        })
        .collect();
    let mut edge_grads: std::collections::BTreeMap<(usize, usize), Vec<f64>> = model
        .edge_transforms
        .iter()
        .map(|(&e, t)| (e, vec![0.0; t.weight.len()]))
        .collect();
    let mut head_w_grad = vec![0.0; model.head_weight.len()];
    let mut head_b_grad = vec![0.0; model.head_bias.len()];

    // Upstream gradient per node activation.
    let mut d_act: Vec<Vec<f64>> = (0..node_count)
        .map(|id| vec![0.0; cache.act[id].len()])
        .collect();

    // Head: logits -> pooled -> sink aggregate.
    let c = model.plan.head_in;
    let mut d_pooled = vec![0.0; n * c];
    for b in 0..n {
        for cl in 0..classes {
            let d = dlogits[b * classes + cl];
            if d == 0.0 {
                continue;
            }
            head_b_grad[cl] += d;
            for ch in 0..c {
                head_w_grad[cl * c + ch] += d * cache.pooled[b * c + ch];
                d_pooled[b * c + ch] += model.head_weight[cl * c + ch] * d;
            }
        }
    }
    let sink = model.graph.sink;
    let (sh, sw) = model.plan.node_hw[sink];
    let sp = sh * sw;
    let mut d_sink_agg = vec![0.0; cache.sink_agg.len()];
    for b in 0..n {
        for ch in 0..c {
            let d = d_pooled[b * c + ch] / sp as f64;
            let base = (b * c + ch) * sp;
            for s in 0..sp {
                d_sink_agg[base + s] = d;
            }
        }
    }
    backprop_aggregate(model, &cache, sink, &d_sink_agg, &mut d_act, &mut edge_grads, n)?;

    // Units in reverse topological order.
    let kk = match model.mode {
        crate::netbuilder::InputMode::Vector { .. } => 1,
        crate::netbuilder::InputMode::Image { .. } => 3,
    };
    let mut norm_stats = Vec::new();
    for &id in model.topo.iter().rev() {
        if !matches!(model.graph.nodes[id], NodeKind::Unit { .. }) {
            continue;
        }
        let unit = &model.units[id - 1];
        let (h, w) = model.plan.node_hw[id];
        let spu = h * w;
        let cw = unit.out_width;
        let dy = &d_act[id];
        let xhat = &cache.xhat[id];
        let inv_std = &cache.inv_std[id];
        let count = (n * spu) as f64;

        // Normalization backward (batch statistics).
        let g = &mut unit_grads[id - 1];
        let mut sum_g = vec![0.0; cw];
        let mut sum_gx = vec![0.0; cw];
        for b in 0..n {
            for ch in 0..cw {
                let base = (b * cw + ch) * spu;
                for s in 0..spu {
                    let d = dy[base + s];
                    let xh = xhat[base + s];
                    g.beta[ch] += d;
                    g.gamma[ch] += d * xh;
                    let gx = d * unit.gamma[ch];
                    sum_g[ch] += gx;
                    sum_gx[ch] += gx * xh;
                }
            }
        }
        let mut dz = vec![0.0; dy.len()];
        for b in 0..n {
            for ch in 0..cw {
                let base = (b * cw + ch) * spu;
                for s in 0..spu {
                    let gx = dy[base + s] * unit.gamma[ch];
                    dz[base + s] = inv_std[ch]
                        * (gx - sum_g[ch] / count - xhat[base + s] * sum_gx[ch] / count);
                }
            }
        }

        // Transform backward on the relu-ed input.
        let agg = &cache.agg[id];
        let r: Vec<f64> = agg.iter().map(|&x| x.max(0.0)).collect();
        let mut dr = vec![0.0; r.len()];
        transform_backward(
            &r,
            &dz,
            n,
            unit.in_width,
            h,
            w,
            &unit.weight,
            unit.out_width,
            kk,
            &mut g.weight,
            &mut g.bias,
            &mut dr,
        );

        // Relu backward: subgradient 0 at the kink.
        let mut d_agg = dr;
        for (d, &a) in d_agg.iter_mut().zip(agg.iter()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        backprop_aggregate(model, &cache, id, &d_agg, &mut d_act, &mut edge_grads, n)?;

        norm_stats.push((
            id,
            cache.batch_mean[id].clone(),
            cache.batch_var[id].clone(),
        ));
    }
    norm_stats.reverse();

    // Flatten in the canonical block order.
    let mut grads = Vec::with_capacity(model.param_count() as usize);
    for g in &unit_grads {
        grads.extend_from_slice(&g.weight);
        grads.extend_from_slice(&g.bias);
        grads.extend_from_slice(&g.gamma);
        grads.extend_from_slice(&g.beta);
    }
    for dg in edge_grads.values() {
        grads.extend_from_slice(dg);
    }
    grads.extend_from_slice(&head_w_grad);
    grads.extend_from_slice(&head_b_grad);

    Ok(BackwardResult {
        loss,
        logits: cache.logits,
        grads,
        norm_stats,
    })
}

/// Pushes a node's aggregated-input gradient back to its predecessors,
/// through edge transforms where present.
fn backprop_aggregate(
    model: &Model,
    cache: &ForwardCache,
    node: usize,
    d_agg: &[f64],
    d_act: &mut [Vec<f64>],
    edge_grads: &mut std::collections::BTreeMap<(usize, usize), Vec<f64>>,
    n: usize,
) -> Result<()> {
    let preds = model.graph.predecessors(node);
    let scale = 1.0 / preds.len() as f64;
    let branch: Vec<f64> = d_agg.iter().map(|&d| d * scale).collect();
    for &p in &preds {
        if let Some(t) = model.edge_transforms.get(&(p, node)) {
            let (ph, pw) = model.plan.node_hw[p];
            let dw = edge_grads.get_mut(&(p, node)).expect("grad buffer exists");
            // Split borrow: the input gradient buffer belongs to pred p.
            let inp = &cache.act[p];
            let dinp = &mut d_act[p];
            edge_backward(
                inp,
                &branch,
                n,
                t.in_width,
                ph,
                pw,
                &t.weight,
                t.out_width,
                t.stride,
                dw,
                dinp,
            );
        } else {
            let dst = &mut d_act[p];
            if dst.len() != branch.len() {
                return Err(Error::Internal(format!(
                    "gradient shape mismatch on edge {p}->{node}"
                )));
            }
            for (x, y) in dst.iter_mut().zip(&branch) {
                *x += y;
            }
        }
    }
    Ok(())
}

/// Top-1 accuracy and mean loss on a labeled set, using evaluation-mode
/// normalization.
pub fn evaluate(
    model: &Model,
    inputs: &[f64],
    labels: &[usize],
    teacher_logits: Option<&[f64]>,
    cfg: &KdLossConfig,
) -> Result<(f64, f64)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Parameter("evaluation set is empty".into()));
    }
    let logits = predict(model, inputs, n)?;
    let classes = model.num_classes;
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for b in 0..n {
        let row = &logits[b * classes..(b + 1) * classes];
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if pred == labels[b] {
            correct += 1;
        }
        let teacher = teacher_logits.map(|t| &t[b * classes..(b + 1) * classes]);
        total_loss += kd_loss(row, teacher, labels[b], cfg)?;
    }
    Ok((correct as f64 / n as f64, total_loss / n as f64))
}
