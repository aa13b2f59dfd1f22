//! Turns an operation graph into a trainable model.
//!
//! Every operation unit is the triplet `relu -> transform -> normalization`,
//! where the transform is a dense layer in vector mode and a padded 3x3
//! convolution in image mode. Units that receive several inputs aggregate
//! them by elementwise mean. The head is a global average pool (a no-op in
//! vector mode, where every node has 1x1 spatial extent) followed by a linear
//! classifier.
//!
//! In image mode the top-level groups of the hierarchy are partitioned into
//! three stages by topological depth; spatial resolution halves and channel
//! width doubles at each stage boundary, carried by a strided 1x1 transform
//! on every stage-crossing edge.
//!
//! Channel width is the one free scale knob: [`scale_to_budget`] bisects the
//! base width so the exact parameter count lands under a target budget.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::{ArchGraph, NodeKind};

/// Variance epsilon for the normalization layers.
pub const NORM_EPS: f64 = 1e-5;
/// Blend factor for the running statistics kept by each normalization layer.
pub const RUNNING_STAT_MOMENTUM: f64 = 0.9;
/// Number of resolution stages used in image mode.
const STAGES: usize = 3;
/// Checkpoint magic.
const CHECKPOINT_MAGIC: &[u8; 4] = b"AKDM";
const CHECKPOINT_VERSION: u32 = 1;

/// Input layout the model is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum InputMode {
    Vector { dims: usize },
    Image { channels: usize, height: usize, width: usize },
}

impl InputMode {
    /// Flattened length of one sample.
    pub fn input_len(&self) -> usize {
        match *self {
            InputMode::Vector { dims } => dims,
            InputMode::Image { channels, height, width } => channels * height * width,
        }
    }

    fn input_width(&self) -> usize {
        match *self {
            InputMode::Vector { dims } => dims,
            InputMode::Image { channels, .. } => channels,
        }
    }

    fn input_spatial(&self) -> (usize, usize) {
        match *self {
            InputMode::Vector { .. } => (1, 1),
            InputMode::Image { height, width, .. } => (height, width),
        }
    }

    fn kernel(&self) -> usize {
        match self {
            InputMode::Vector { .. } => 1,
            InputMode::Image { .. } => 3,
        }
    }
}

/// Parameter budget for [`scale_to_budget`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConstraint {
    pub target_params: u64,
    /// Acceptable shortfall below the target, as a fraction.
    pub tolerance: f64,
}

impl BudgetConstraint {
    pub fn new(target_params: u64) -> Self {
        BudgetConstraint { target_params, tolerance: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_params == 0 {
            return Err(Error::Parameter("target_params must be positive".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Parameter(format!(
                "tolerance must lie in (0,1), got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Tensors of one operation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitParams {
    /// Transform weights, `out x in x k x k` row-major (`k = 1` in vector mode).
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Normalization scale.
    pub gamma: Vec<f64>,
    /// Normalization shift.
    pub beta: Vec<f64>,
    /// Running mean, used at evaluation time. Not a trainable parameter.
    pub run_mean: Vec<f64>,
    /// Running variance, used at evaluation time. Not a trainable parameter.
    pub run_var: Vec<f64>,
    pub in_width: usize,
    pub out_width: usize,
}

impl UnitParams {
    pub fn trainable_len(&self) -> usize {
        self.weight.len() + self.bias.len() + self.gamma.len() + self.beta.len()
    }
}

/// A strided 1x1 projection on a stage-crossing edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTransform {
    /// Weights, `out x in` row-major.
    pub weight: Vec<f64>,
    pub in_width: usize,
    pub out_width: usize,
    /// Spatial subsampling factor (a power of two).
    pub stride: usize,
}

/// Shape bookkeeping shared by counting and materialization: stages, widths
/// and spatial extents per node, which edges need transforms, and the head
/// input width.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPlan {
    pub node_stage: Vec<usize>,
    pub node_width: Vec<usize>,
    pub node_hw: Vec<(usize, usize)>,
    /// Edges that carry a strided 1x1 projection.
    pub transform_edges: Vec<(usize, usize)>,
    pub head_in: usize,
}

fn spatial_at_stage(base: (usize, usize), stage: usize) -> (usize, usize) {
    let f = 1usize << stage;
    ((base.0 - 1) / f + 1, (base.1 - 1) / f + 1)
}

/// Assigns every node a stage. Vector mode puts everything in stage 0; image
/// mode buckets top-level groups into [`STAGES`] stages by their topological
/// depth in the derived top-level precedence graph.
fn compute_stages(graph: &ArchGraph, mode: InputMode) -> Result<Vec<usize>> {
    let n = graph.node_count();
    if matches!(mode, InputMode::Vector { .. }) {
        return Ok(vec![0; n]);
    }
    let top_of = |id: usize| match graph.nodes[id] {
        NodeKind::Unit { top, .. } => Some(top),
        _ => None,
    };
    let top_count = graph
        .nodes
        .iter()
        .filter_map(|k| match *k {
            NodeKind::Unit { top, .. } => Some(top + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut stage = vec![0usize; n];
    if top_count == 0 {
        return Ok(stage);
    }
    // Precedence between top-level groups, recovered from inter-group edges.
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); top_count];
    let mut in_deg = vec![0usize; top_count];
    for &(a, b) in &graph.edges {
        if let (Some(ta), Some(tb)) = (top_of(a), top_of(b)) {
            if ta != tb && !succ[ta].contains(&tb) {
                succ[ta].push(tb);
                in_deg[tb] += 1;
            }
        }
    }
    let mut depth = vec![0usize; top_count];
    let mut ready: Vec<usize> = (0..top_count).filter(|&t| in_deg[t] == 0).collect();
    let mut seen = 0;
    while let Some(t) = ready.pop() {
        seen += 1;
        for &s in &succ[t] {
            depth[s] = depth[s].max(depth[t] + 1);
            in_deg[s] -= 1;
            if in_deg[s] == 0 {
                ready.push(s);
            }
        }
    }
    if seen != top_count {
        return Err(Error::Internal("top-level group precedence has a cycle".into()));
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let levels = max_depth + 1;
    for id in 0..n {
        if let Some(t) = top_of(id) {
            stage[id] = depth[t] * STAGES / levels;
        }
    }
    // The sink joins the deepest stage present; the source stays at 0.
    let sink_stage = (0..n)
        .filter(|&id| top_of(id).is_some())
        .map(|id| stage[id])
        .max()
        .unwrap_or(0);
    stage[graph.sink] = sink_stage;
    Ok(stage)
}

/// Computes the shape plan for one `(graph, mode, base_width)` choice.
pub fn plan_model(
    graph: &ArchGraph,
    mode: InputMode,
    base_width: usize,
    num_classes: usize,
) -> Result<ModelPlan> {
    if base_width == 0 {
        return Err(Error::Parameter("base_width must be >= 1".into()));
    }
    if num_classes < 2 {
        return Err(Error::Parameter("num_classes must be >= 2".into()));
    }
    if mode.input_len() == 0 {
        return Err(Error::Parameter("input must have at least one feature".into()));
    }
    graph.validate().map_err(|e| match e {
        Error::Internal(m) => Error::Parameter(format!("invalid operation graph: {m}")),
        other => other,
    })?;

    let n = graph.node_count();
    let node_stage = compute_stages(graph, mode)?;
    let base_hw = mode.input_spatial();
    let mut node_width = vec![0usize; n];
    let mut node_hw = vec![(0usize, 0usize); n];
    for id in 0..n {
        match graph.nodes[id] {
            NodeKind::Source => {
                node_width[id] = mode.input_width();
                node_hw[id] = base_hw;
            }
            NodeKind::Unit { .. } | NodeKind::Sink => {
                node_width[id] = base_width << node_stage[id];
                node_hw[id] = spatial_at_stage(base_hw, node_stage[id]);
            }
        }
    }
    // A sink fed only by the source passes the raw input through.
    let sink_preds = graph.predecessors(graph.sink);
    if sink_preds.iter().all(|&p| p == graph.source) {
        node_width[graph.sink] = node_width[graph.source];
        node_hw[graph.sink] = node_hw[graph.source];
    }

    let mut transform_edges = Vec::new();
    for &(a, b) in &graph.edges {
        if node_stage[a] == node_stage[b] {
            continue;
        }
        if node_stage[a] > node_stage[b] {
            return Err(Error::Internal(format!(
                "edge {a}->{b} runs against the stage order"
            )));
        }
        transform_edges.push((a, b));
    }

    // Every consumer's inputs must agree on one shape after transforms.
    for id in 0..n {
        if matches!(graph.nodes[id], NodeKind::Source) {
            continue;
        }
        let mut shapes: Vec<(usize, (usize, usize))> = Vec::new();
        for p in graph.predecessors(id) {
            let shape = if transform_edges.contains(&(p, id)) {
                (node_width[id], node_hw[id])
            } else {
                (node_width[p], node_hw[p])
            };
            shapes.push(shape);
        }
        if let Some(&first) = shapes.first() {
            if shapes.iter().any(|&s| s != first) {
                return Err(Error::Internal(format!(
                    "aggregation inputs of node {id} disagree on shape: {shapes:?}"
                )));
            }
        }
    }

    let head_in = node_width[graph.sink];
    Ok(ModelPlan {
        node_stage,
        node_width,
        node_hw,
        transform_edges,
        head_in,
    })
}

/// Input width a node's transform consumes: the common shape of its
/// (transformed) predecessors.
fn agg_width(graph: &ArchGraph, plan: &ModelPlan, id: usize) -> usize {
    let p = graph.predecessors(id)[0];
    if plan.transform_edges.contains(&(p, id)) {
        plan.node_width[id]
    } else {
        plan.node_width[p]
    }
}

/// Exact trainable-parameter count at a given base width, without allocating
/// any tensors. Used by the budget bisection.
pub fn param_count_for_width(
    graph: &ArchGraph,
    mode: InputMode,
    base_width: usize,
    num_classes: usize,
) -> Result<u64> {
    let plan = plan_model(graph, mode, base_width, num_classes)?;
    let k = mode.kernel();
    let mut total: u64 = 0;
    for id in 0..graph.node_count() {
        if !matches!(graph.nodes[id], NodeKind::Unit { .. }) {
            continue;
        }
        let in_w = agg_width(graph, &plan, id) as u64;
        let out_w = plan.node_width[id] as u64;
        total += out_w * in_w * (k * k) as u64; // transform weight
        total += out_w * 3; // bias + norm scale/shift
    }
    for &(a, b) in &plan.transform_edges {
        let in_w = plan.node_width[a] as u64;
        let out_w = plan.node_width[b] as u64;
        total += out_w * in_w;
    }
    total += (num_classes as u64) * (plan.head_in as u64) + num_classes as u64;
    Ok(total)
}

/// A materialized, trainable model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub graph: ArchGraph,
    pub mode: InputMode,
    pub num_classes: usize,
    pub base_width: usize,
    /// Unit tensors, indexed by `node_id - 1` (units occupy ids `1..=U`).
    pub units: Vec<UnitParams>,
    pub edge_transforms: BTreeMap<(usize, usize), EdgeTransform>,
    /// Head weights, `num_classes x head_in` row-major.
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
    pub plan: ModelPlan,
    /// Cached topological order of the graph.
    pub topo: Vec<usize>,
}

/// Builds the model for `graph` with freshly initialized tensors. Weights are
/// drawn from zero-mean Gaussians with fan-in-scaled variance; biases and
/// normalization shifts start at zero, scales at one.
pub fn materialize<R: Rng>(
    graph: &ArchGraph,
    mode: InputMode,
    base_width: usize,
    num_classes: usize,
    rng: &mut R,
) -> Result<Model> {
    let plan = plan_model(graph, mode, base_width, num_classes)?;
    let topo = graph.topo_order()?;
    let k = mode.kernel();

    fn draw<R: Rng>(rng: &mut R, std: f64, len: usize) -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("finite std");
        (0..len).map(|_| dist.sample(rng)).collect()
    }

    let unit_ids: Vec<usize> = (0..graph.node_count())
        .filter(|&id| matches!(graph.nodes[id], NodeKind::Unit { .. }))
        .collect();
    let mut units = Vec::with_capacity(unit_ids.len());
    for (slot, &id) in unit_ids.iter().enumerate() {
        if id != slot + 1 {
            return Err(Error::Internal("unit ids are not contiguous from 1".into()));
        }
        let in_w = agg_width(graph, &plan, id);
        let out_w = plan.node_width[id];
        let fan_in = in_w * k * k;
        units.push(UnitParams {
            weight: draw(rng, (2.0 / fan_in as f64).sqrt(), out_w * fan_in),
            bias: vec![0.0; out_w],
            gamma: vec![1.0; out_w],
            beta: vec![0.0; out_w],
            run_mean: vec![0.0; out_w],
            run_var: vec![1.0; out_w],
            in_width: in_w,
            out_width: out_w,
        });
    }

    let mut edge_transforms = BTreeMap::new();
    for &(a, b) in &plan.transform_edges {
        let in_w = plan.node_width[a];
        let out_w = plan.node_width[b];
        let stride = 1usize << (plan.node_stage[b] - plan.node_stage[a]);
        edge_transforms.insert(
            (a, b),
            EdgeTransform {
                weight: draw(rng, (1.0 / in_w as f64).sqrt(), out_w * in_w),
                in_width: in_w,
                out_width: out_w,
                stride,
            },
        );
    }

    let head_weight = draw(rng, (1.0 / plan.head_in as f64).sqrt(), num_classes * plan.head_in);
    let head_bias = vec![0.0; num_classes];

    Ok(Model {
        graph: graph.clone(),
        mode,
        num_classes,
        base_width,
        units,
        edge_transforms,
        head_weight,
        head_bias,
        plan,
        topo,
    })
}

impl Model {
    /// Exact number of trainable parameters.
    pub fn param_count(&self) -> u64 {
        let mut total: u64 = 0;
        for u in &self.units {
            total += u.trainable_len() as u64;
        }
        for t in self.edge_transforms.values() {
            total += t.weight.len() as u64;
        }
        total + (self.head_weight.len() + self.head_bias.len()) as u64
    }

    pub fn input_len(&self) -> usize {
        self.mode.input_len()
    }

    /// Trainable parameter blocks in canonical order: unit tensors by node
    /// id, edge transforms by edge, then the head.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut blocks = Vec::new();
        for u in &self.units {
            blocks.push(u.weight.as_slice());
            blocks.push(u.bias.as_slice());
            blocks.push(u.gamma.as_slice());
            blocks.push(u.beta.as_slice());
        }
        for t in self.edge_transforms.values() {
            blocks.push(t.weight.as_slice());
        }
        blocks.push(self.head_weight.as_slice());
        blocks.push(self.head_bias.as_slice());
        blocks
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks: Vec<&mut [f64]> = Vec::new();
        for u in &mut self.units {
            let UnitParams { weight, bias, gamma, beta, .. } = u;
            blocks.push(weight.as_mut_slice());
            blocks.push(bias.as_mut_slice());
            blocks.push(gamma.as_mut_slice());
            blocks.push(beta.as_mut_slice());
        }
        for t in self.edge_transforms.values_mut() {
            blocks.push(t.weight.as_mut_slice());
        }
        blocks.push(self.head_weight.as_mut_slice());
        blocks.push(self.head_bias.as_mut_slice());
        blocks
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count() as usize);
        for b in self.param_blocks() {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() as u64 != self.param_count() {
            return Err(Error::Parameter(format!(
                "flat parameter vector has length {}, model has {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for b in self.param_blocks_mut() {
            b.copy_from_slice(&flat[offset..offset + b.len()]);
            offset += b.len();
        }
        Ok(())
    }

    /// Writes the checkpoint: magic, version, mode and widths, the graph, and
    /// all tensors as little-endian f32, units in topological order.
    pub fn save<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        match self.mode {
            InputMode::Vector { dims } => {
                w.write_all(&[0u8])?;
                w.write_all(&(dims as u32).to_le_bytes())?;
            }
            InputMode::Image { channels, height, width } => {
                w.write_all(&[1u8])?;
                w.write_all(&(channels as u32).to_le_bytes())?;
                w.write_all(&(height as u32).to_le_bytes())?;
                w.write_all(&(width as u32).to_le_bytes())?;
            }
        }
        w.write_all(&(self.num_classes as u32).to_le_bytes())?;
        w.write_all(&(self.base_width as u32).to_le_bytes())?;

        w.write_all(&(self.graph.node_count() as u32).to_le_bytes())?;
        for kind in &self.graph.nodes {
            match *kind {
                NodeKind::Source => w.write_all(&[0u8])?,
                NodeKind::Sink => w.write_all(&[1u8])?,
                NodeKind::Unit { top, mid, bottom } => {
                    w.write_all(&[2u8])?;
                    w.write_all(&(top as u32).to_le_bytes())?;
                    w.write_all(&(mid as u32).to_le_bytes())?;
                    w.write_all(&(bottom as u32).to_le_bytes())?;
                }
            }
        }
        w.write_all(&(self.graph.edge_count() as u32).to_le_bytes())?;
        for &(a, b) in &self.graph.edges {
            w.write_all(&(a as u32).to_le_bytes())?;
            w.write_all(&(b as u32).to_le_bytes())?;
        }

        fn write_f32s<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
            for &x in v {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
            Ok(())
        }

        w.write_all(&(self.units.len() as u32).to_le_bytes())?;
        for &id in &self.topo {
            if !matches!(self.graph.nodes[id], NodeKind::Unit { .. }) {
                continue;
            }
            let u = &self.units[id - 1];
            w.write_all(&(id as u32).to_le_bytes())?;
            w.write_all(&(u.in_width as u32).to_le_bytes())?;
            w.write_all(&(u.out_width as u32).to_le_bytes())?;
            write_f32s(w, &u.weight)?;
            write_f32s(w, &u.bias)?;
            write_f32s(w, &u.gamma)?;
            write_f32s(w, &u.beta)?;
            write_f32s(w, &u.run_mean)?;
            write_f32s(w, &u.run_var)?;
        }
        w.write_all(&(self.edge_transforms.len() as u32).to_le_bytes())?;
        for (&(a, b), t) in &self.edge_transforms {
            w.write_all(&(a as u32).to_le_bytes())?;
            w.write_all(&(b as u32).to_le_bytes())?;
            w.write_all(&(t.in_width as u32).to_le_bytes())?;
            w.write_all(&(t.out_width as u32).to_le_bytes())?;
            w.write_all(&(t.stride as u32).to_le_bytes())?;
            write_f32s(w, &t.weight)?;
        }
        w.write_all(&(self.plan.head_in as u32).to_le_bytes())?;
        write_f32s(w, &self.head_weight)?;
        write_f32s(w, &self.head_bias)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Model::save`].
    pub fn load<R: Read>(r: &mut R, path: &str) -> Result<Model> {
        let bad = |m: &str| Error::Format { path: path.to_string(), message: m.to_string() };
        let mut u8buf = [0u8; 1];
        let mut u32buf = [0u8; 4];
        macro_rules! read_u8 {
            () => {{
                r.read_exact(&mut u8buf).map_err(|e| Error::io(path, e))?;
                u8buf[0]
            }};
        }
        macro_rules! read_u32 {
            () => {{
                r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
                u32::from_le_bytes(u32buf) as usize
            }};
        }
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic, expected AKDM"));
        }
        if read_u32!() != CHECKPOINT_VERSION as usize {
            return Err(bad("unsupported checkpoint version"));
        }
        let mode = match read_u8!() {
            0 => InputMode::Vector { dims: read_u32!() },
            1 => InputMode::Image {
                channels: read_u32!(),
                height: read_u32!(),
                width: read_u32!(),
            },
            _ => return Err(bad("unknown mode byte")),
        };
        let num_classes = read_u32!();
        let base_width = read_u32!();

        let node_count = read_u32!();
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            nodes.push(match read_u8!() {
                0 => NodeKind::Source,
                1 => NodeKind::Sink,
                2 => NodeKind::Unit {
                    top: read_u32!(),
                    mid: read_u32!(),
                    bottom: read_u32!(),
                },
                _ => return Err(bad("unknown node kind byte")),
            });
        }
        let edge_count = read_u32!();
        let mut edges = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            edges.push((read_u32!(), read_u32!()));
        }
        let source = nodes
            .iter()
            .position(|k| matches!(k, NodeKind::Source))
            .ok_or_else(|| bad("no source node"))?;
        let sink = nodes
            .iter()
            .position(|k| matches!(k, NodeKind::Sink))
            .ok_or_else(|| bad("no sink node"))?;
        let graph = ArchGraph { nodes, edges, source, sink };

        let mut model = materialize(
            &graph,
            mode,
            base_width,
            num_classes,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
        )?;

        fn read_f32s<R: Read>(r: &mut R, path: &str, v: &mut [f64]) -> Result<()> {
            let mut b = [0u8; 4];
            for x in v.iter_mut() {
                r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
                *x = f32::from_le_bytes(b) as f64;
            }
            Ok(())
        }

        let unit_count = read_u32!();
        if unit_count != model.units.len() {
            return Err(bad("unit count does not match graph"));
        }
        for _ in 0..unit_count {
            let id = read_u32!();
            if id == 0 || id > model.units.len() {
                return Err(bad("unit node id out of range"));
            }
            let in_w = read_u32!();
            let out_w = read_u32!();
            let u = &mut model.units[id - 1];
            if in_w != u.in_width || out_w != u.out_width {
                return Err(bad("unit widths do not match the graph plan"));
            }
            read_f32s(r, path, &mut u.weight)?;
            read_f32s(r, path, &mut u.bias)?;
            read_f32s(r, path, &mut u.gamma)?;
            read_f32s(r, path, &mut u.beta)?;
            read_f32s(r, path, &mut u.run_mean)?;
            read_f32s(r, path, &mut u.run_var)?;
        }
        let et_count = read_u32!();
        if et_count != model.edge_transforms.len() {
            return Err(bad("edge transform count does not match plan"));
        }
        for _ in 0..et_count {
            let a = read_u32!();
            let b = read_u32!();
            let in_w = read_u32!();
            let out_w = read_u32!();
            let stride = read_u32!();
            let t = model
                .edge_transforms
                .get_mut(&(a, b))
                .ok_or_else(|| bad("unexpected edge transform"))?;
            if in_w != t.in_width || out_w != t.out_width || stride != t.stride {
                return Err(bad("edge transform shape mismatch"));
            }
            read_f32s(r, path, &mut t.weight)?;
        }
        let head_in = read_u32!();
        if head_in != model.plan.head_in {
            return Err(bad("head width mismatch"));
        }
        read_f32s(r, path, &mut model.head_weight)?;
        read_f32s(r, path, &mut model.head_bias)?;
        Ok(model)
    }
}

/// Finds the largest base width in `[1, 4096]` whose exact parameter count
/// stays at or under the target, then materializes at that width.
pub fn scale_to_budget<R: Rng>(
    graph: &ArchGraph,
    mode: InputMode,
    constraint: BudgetConstraint,
    num_classes: usize,
    rng: &mut R,
) -> Result<Model> {
    constraint.validate()?;
    let target = constraint.target_params;
    let count = |w: usize| param_count_for_width(graph, mode, w, num_classes);
    let min_count = count(1)?;
    if min_count > target {
        return Err(Error::BudgetInfeasible { min_count, target });
    }
    let (mut lo, mut hi) = (1usize, 4096usize);
    if count(hi)? <= target {
        lo = hi;
    } else {
        // Invariant: count(lo) <= target < count(hi).
        while hi - lo > 1 {
            let midpoint = lo + (hi - lo) / 2;
            if count(midpoint)? <= target {
                lo = midpoint;
            } else {
                hi = midpoint;
            }
        }
    }
    materialize(graph, mode, lo, num_classes, rng)
}

/// Test fixture: a plain `source -> u1 -> ... -> uU -> sink` chain.
#[cfg(test)]
pub(crate) fn chain_graph(units: usize) -> ArchGraph {
    let mut nodes = vec![NodeKind::Source];
    for i in 0..units {
        nodes.push(NodeKind::Unit { top: 0, mid: 0, bottom: i });
    }
    nodes.push(NodeKind::Sink);
    let edges = (0..=units).map(|i| (i, i + 1)).collect();
    ArchGraph { nodes, edges, source: 0, sink: units + 1 }
}
