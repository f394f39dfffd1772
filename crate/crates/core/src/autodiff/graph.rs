use std::collections::BTreeMap;
use std::sync::Arc;

use super::kernels as k;
use super::tensor::Tensor;
use super::{AutodiffError, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Param(String),
    Constant,
    MatMul { ta: bool, tb: bool },
    Affine,
    Add,
    Sub,
    Mul,
    Div,
    AddRow,
    MulRow,
    MulCol,
    SumRows,
    SumCols,
    BroadcastRows(usize),
    BroadcastCols(usize),
    SumAll,
    BroadcastScalar(Vec<usize>),
    Scale(f64),
    AddScalar(f64),
    Relu,
    Step,
    Sigmoid,
    Sqrt,
    Square,
    Abs,
    Sign,
    Reshape(Vec<usize>),
    SliceCols { start: usize, len: usize },
    PadCols { start: usize, total: usize },
    ConcatCols,
    SliceRows { start: usize, len: usize },
    PadRows { start: usize, total: usize },
    ConcatRows,
    GatherRows(Arc<[usize]>),
    ScatterAddRows { idx: Arc<[usize]>, rows: usize },
    SegmentMax(usize),
    SegmentMaxGrad(usize),
    RowNorm,
    DivSafe,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant => "constant",
            Op::MatMul { .. } => "matmul",
            Op::Affine => "affine",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::AddRow => "add_row",
            Op::MulRow => "mul_row",
            Op::MulCol => "mul_col",
            Op::SumRows => "sum_rows",
            Op::SumCols => "sum_cols",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::BroadcastCols(_) => "broadcast_cols",
            Op::SumAll => "sum_all",
            Op::BroadcastScalar(_) => "broadcast_scalar",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Relu => "relu",
            Op::Step => "step",
            Op::Sigmoid => "sigmoid",
            Op::Sqrt => "sqrt",
            Op::Square => "square",
            Op::Abs => "abs",
            Op::Sign => "sign",
            Op::Reshape(_) => "reshape",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::ConcatCols => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::PadRows { .. } => "pad_rows",
            Op::ConcatRows => "concat_rows",
            Op::GatherRows(_) => "gather_rows",
            Op::ScatterAddRows { .. } => "scatter_add_rows",
            Op::SegmentMax(_) => "segment_max",
            Op::SegmentMaxGrad(_) => "segment_max_grad",
            Op::RowNorm => "row_norm",
            Op::DivSafe => "div_safe",
        }
    }

    /// Whether the op has a reverse rule built from differentiable ops, i.e.
    /// whether it may appear inside a gradient that is differentiated again.
    fn has_vjp(&self) -> bool {
        !matches!(self, Op::SegmentMaxGrad(_) | Op::DivSafe)
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
    value: Option<Tensor>,
}

/// Parameter gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

/// Reverse-mode autodiff graph.
///
/// Nodes are appended in topological order. A node is evaluated as soon as
/// all of its inputs carry values, so graphs built from parameters and
/// constants run eagerly; graphs with unbound [`Graph::input`] placeholders
/// stay pending until [`Graph::forward`] binds them.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    outputs: BTreeMap<String, NodeId>,
}

fn mismatch(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

fn matrix_dims(op: &'static str, s: &[usize]) -> Result<(usize, usize)> {
    match s {
        [r, c] => Ok((*r, *c)),
        _ => Err(mismatch(op, format!("expected a matrix, got shape {:?}", s))),
    }
}

fn vector_len(op: &'static str, s: &[usize]) -> Result<usize> {
    match s {
        [n] => Ok(*n),
        _ => Err(mismatch(op, format!("expected a vector, got shape {:?}", s))),
    }
}

fn infer_shape(op: &Op, ins: &[&[usize]]) -> Result<Vec<usize>> {
    let name = op.name();
    let same = |a: &[usize], b: &[usize]| -> Result<()> {
        if a == b {
            Ok(())
        } else {
            Err(mismatch(name, format!("{:?} vs {:?}", a, b)))
        }
    };
    Ok(match op {
        Op::Input(_) | Op::Param(_) | Op::Constant => unreachable!("leaves carry their own shape"),
        Op::MatMul { ta, tb } => {
            let (ar, ac) = matrix_dims(name, ins[0])?;
            let (br, bc) = matrix_dims(name, ins[1])?;
            let (m, ka) = if *ta { (ac, ar) } else { (ar, ac) };
            let (kb, n) = if *tb { (bc, br) } else { (br, bc) };
            if ka != kb {
                return Err(mismatch(name, format!("inner dims {} vs {}", ka, kb)));
            }
            vec![m, n]
        }
        Op::Affine => {
            let (m, kx) = matrix_dims(name, ins[0])?;
            let (kw, n) = matrix_dims(name, ins[1])?;
            let nb = vector_len(name, ins[2])?;
            if kx != kw || nb != n {
                return Err(mismatch(name, format!("x {:?}, w {:?}, b {:?}", ins[0], ins[1], ins[2])));
            }
            vec![m, n]
        }
        Op::Add | Op::Sub | Op::Mul | Op::Div | Op::DivSafe => {
            same(ins[0], ins[1])?;
            ins[0].to_vec()
        }
        Op::AddRow | Op::MulRow => {
            let (_, c) = matrix_dims(name, ins[0])?;
            if vector_len(name, ins[1])? != c {
                return Err(mismatch(name, format!("{:?} with row vector {:?}", ins[0], ins[1])));
            }
            ins[0].to_vec()
        }
        Op::MulCol => {
            let (r, _) = matrix_dims(name, ins[0])?;
            if vector_len(name, ins[1])? != r {
                return Err(mismatch(name, format!("{:?} with column vector {:?}", ins[0], ins[1])));
            }
            ins[0].to_vec()
        }
        Op::SumRows => vec![matrix_dims(name, ins[0])?.1],
        Op::SumCols | Op::RowNorm => vec![matrix_dims(name, ins[0])?.0],
        Op::BroadcastRows(rows) => vec![*rows, vector_len(name, ins[0])?],
        Op::BroadcastCols(cols) => vec![vector_len(name, ins[0])?, *cols],
        Op::SumAll => Vec::new(),
        Op::BroadcastScalar(shape) => {
            if ins[0].iter().product::<usize>() != 1 {
                return Err(mismatch(name, format!("source {:?} is not a scalar", ins[0])));
            }
            shape.clone()
        }
        Op::Scale(_)
        | Op::AddScalar(_)
        | Op::Relu
        | Op::Step
        | Op::Sigmoid
        | Op::Sqrt
        | Op::Square
        | Op::Abs
        | Op::Sign => ins[0].to_vec(),
        Op::Reshape(shape) => {
            if shape.iter().product::<usize>() != ins[0].iter().product::<usize>() {
                return Err(mismatch(name, format!("{:?} -> {:?}", ins[0], shape)));
            }
            shape.clone()
        }
        Op::SliceCols { start, len } => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if start + len > c {
                return Err(mismatch(name, format!("cols {}..{} of {}", start, start + len, c)));
            }
            vec![r, *len]
        }
        Op::PadCols { start, total } => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if start + c > *total {
                return Err(mismatch(name, format!("{} cols at {} exceed {}", c, start, total)));
            }
            vec![r, *total]
        }
        Op::ConcatCols => {
            let (ra, ca) = matrix_dims(name, ins[0])?;
            let (rb, cb) = matrix_dims(name, ins[1])?;
            if ra != rb {
                return Err(mismatch(name, format!("rows {} vs {}", ra, rb)));
            }
            vec![ra, ca + cb]
        }
        Op::SliceRows { start, len } => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if start + len > r {
                return Err(mismatch(name, format!("rows {}..{} of {}", start, start + len, r)));
            }
            vec![*len, c]
        }
        Op::PadRows { start, total } => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if start + r > *total {
                return Err(mismatch(name, format!("{} rows at {} exceed {}", r, start, total)));
            }
            vec![*total, c]
        }
        Op::ConcatRows => {
            let (ra, ca) = matrix_dims(name, ins[0])?;
            let (rb, cb) = matrix_dims(name, ins[1])?;
            if ca != cb {
                return Err(mismatch(name, format!("cols {} vs {}", ca, cb)));
            }
            vec![ra + rb, ca]
        }
        Op::GatherRows(idx) => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if let Some(bad) = idx.iter().find(|&&i| i >= r) {
                return Err(mismatch(name, format!("row index {} out of {}", bad, r)));
            }
            vec![idx.len(), c]
        }
        Op::ScatterAddRows { idx, rows } => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if r != idx.len() || idx.iter().any(|&i| i >= *rows) {
                return Err(mismatch(name, format!("{} rows scattered into {}", r, rows)));
            }
            vec![*rows, c]
        }
        Op::SegmentMax(group) => {
            let (r, c) = matrix_dims(name, ins[0])?;
            if *group == 0 || r % group != 0 {
                return Err(mismatch(name, format!("{} rows not divisible by group {}", r, group)));
            }
            vec![r / group, c]
        }
        Op::SegmentMaxGrad(group) => {
            let (gr, gc) = matrix_dims(name, ins[0])?;
            let (r, c) = matrix_dims(name, ins[1])?;
            if gr * group != r || gc != c {
                return Err(mismatch(name, format!("{:?} vs {:?}", ins[0], ins[1])));
            }
            vec![r, c]
        }
    })
}

fn evaluate(op: &Op, ins: &[&Tensor]) -> Tensor {
    match op {
        Op::Input(_) | Op::Param(_) | Op::Constant => unreachable!("leaves are bound, not evaluated"),
        Op::MatMul { ta, tb } => k::matmul(ins[0], ins[1], *ta, *tb),
        Op::Affine => k::affine(ins[0], ins[1], ins[2]),
        Op::Add => k::zip(ins[0], ins[1], |a, b| a + b),
        Op::Sub => k::zip(ins[0], ins[1], |a, b| a - b),
        Op::Mul => k::zip(ins[0], ins[1], |a, b| a * b),
        Op::Div => k::zip(ins[0], ins[1], |a, b| a / b),
        Op::DivSafe => k::zip(ins[0], ins[1], |a, b| if b == 0.0 { 0.0 } else { a / b }),
        Op::AddRow => k::per_col(ins[0], ins[1], |a, v| a + v),
        Op::MulRow => k::per_col(ins[0], ins[1], |a, v| a * v),
        Op::MulCol => k::per_row(ins[0], ins[1], |a, v| a * v),
        Op::SumRows => k::sum_rows(ins[0]),
        Op::SumCols => k::sum_cols(ins[0]),
        Op::BroadcastRows(rows) => k::broadcast_rows(ins[0], *rows),
        Op::BroadcastCols(cols) => k::broadcast_cols(ins[0], *cols),
        Op::SumAll => Tensor::scalar(ins[0].sum()),
        Op::BroadcastScalar(shape) => Tensor::filled(shape, ins[0].data()[0]),
        Op::Scale(c) => k::map(ins[0], |a| a * c),
        Op::AddScalar(c) => k::map(ins[0], |a| a + c),
        Op::Relu => k::map(ins[0], |a| if a > 0.0 { a } else { 0.0 }),
        Op::Step => k::map(ins[0], |a| if a > 0.0 { 1.0 } else { 0.0 }),
        Op::Sigmoid => k::map(ins[0], k::sigmoid),
        Op::Sqrt => k::map(ins[0], f64::sqrt),
        Op::Square => k::map(ins[0], |a| a * a),
        Op::Abs => k::map(ins[0], f64::abs),
        Op::Sign => k::map(ins[0], |a| {
            if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
        Op::Reshape(shape) => ins[0].clone().reshaped(shape.clone()).expect("shape checked at build"),
        Op::SliceCols { start, len } => k::slice_cols(ins[0], *start, *len),
        Op::PadCols { start, total } => k::pad_cols(ins[0], *start, *total),
        Op::ConcatCols => k::concat_cols(ins[0], ins[1]),
        Op::SliceRows { start, len } => k::slice_rows(ins[0], *start, *len),
        Op::PadRows { start, total } => k::pad_rows(ins[0], *start, *total),
        Op::ConcatRows => k::concat_rows(ins[0], ins[1]),
        Op::GatherRows(idx) => k::gather_rows(ins[0], idx),
        Op::ScatterAddRows { idx, rows } => k::scatter_add_rows(ins[0], idx, *rows),
        Op::SegmentMax(group) => k::segment_max(ins[0], *group),
        Op::SegmentMaxGrad(group) => k::segment_max_grad(ins[0], ins[1], *group),
        Op::RowNorm => k::row_norm(ins[0]),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].value.as_ref()
    }

    /// Value of a node, or [`AutodiffError::NotEvaluated`] if it is pending.
    pub fn get(&self, id: NodeId) -> Result<&Tensor> {
        self.value(id).ok_or(AutodiffError::NotEvaluated)
    }

    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        self.get(id)?.item().ok_or(AutodiffError::NotScalar)
    }

    /// All nodes in creation order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn inputs_of(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn mark_output(&mut self, name: &str, id: NodeId) {
        self.outputs.insert(name.to_string(), id);
    }

    fn leaf(&mut self, op: Op, shape: Vec<usize>, value: Option<Tensor>) -> NodeId {
        self.nodes.push(Node { op, inputs: Vec::new(), shape, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Placeholder bound by name on every [`Graph::forward`] call.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.leaf(Op::Input(name.to_string()), shape.to_vec(), None)
    }

    /// Trainable leaf; [`Graph::backward`] reports its gradient under `name`.
    pub fn param(&mut self, name: &str, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.leaf(Op::Param(name.to_string()), shape, Some(value))
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.leaf(Op::Constant, shape, Some(value))
    }

    fn push(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let shapes: Vec<&[usize]> = inputs.iter().map(|i| self.nodes[i.0].shape.as_slice()).collect();
        let shape = infer_shape(&op, &shapes)?;
        let id = NodeId(self.nodes.len());
        let value = self.compute(&op, inputs, id)?;
        self.nodes.push(Node { op, inputs: inputs.to_vec(), shape, value });
        Ok(id)
    }

    fn compute(&self, op: &Op, inputs: &[NodeId], id: NodeId) -> Result<Option<Tensor>> {
        let values: Option<Vec<&Tensor>> = inputs.iter().map(|i| self.nodes[i.0].value.as_ref()).collect();
        let Some(values) = values else { return Ok(None) };
        let out = evaluate(op, &values);
        if !out.is_finite() {
            return Err(AutodiffError::NonFinite { node: id.0, op: op.name() });
        }
        Ok(Some(out))
    }

    /// Binds every [`Graph::input`] by name and recomputes all derived nodes
    /// in topological order. Returns the values of nodes registered with
    /// [`Graph::mark_output`].
    pub fn forward(&mut self, inputs: &BTreeMap<String, Tensor>) -> Result<BTreeMap<String, Tensor>> {
        for i in 0..self.nodes.len() {
            match &self.nodes[i].op {
                Op::Input(name) => {
                    let t = inputs.get(name).ok_or_else(|| AutodiffError::UnboundInput(name.clone()))?;
                    if t.shape() != self.nodes[i].shape.as_slice() {
                        return Err(mismatch(
                            "input",
                            format!("{} expects {:?}, got {:?}", name, self.nodes[i].shape, t.shape()),
                        ));
                    }
                    if !t.is_finite() {
                        return Err(AutodiffError::NonFinite { node: i, op: "input" });
                    }
                    self.nodes[i].value = Some(t.clone());
                }
                Op::Param(_) | Op::Constant => {}
                op => {
                    let op = op.clone();
                    let inputs = self.nodes[i].inputs.clone();
                    self.nodes[i].value = None;
                    let v = self.compute(&op, &inputs, NodeId(i))?;
                    self.nodes[i].value = v;
                }
            }
        }
        self.outputs
            .iter()
            .map(|(name, id)| Ok((name.clone(), self.get(*id)?.clone())))
            .collect()
    }

    fn check_scalar_output(&self, output: NodeId) -> Result<()> {
        let v = self.get(output)?;
        if v.len() != 1 {
            return Err(AutodiffError::NotScalar);
        }
        Ok(())
    }

    /// Marks nodes that (transitively) depend on a node satisfying `seed`.
    fn dependents(&self, seed: impl Fn(usize, &Node) -> bool) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            mask[i] = seed(i, node) || node.inputs.iter().any(|p| mask[p.0]);
        }
        mask
    }

    /// Builds gradient nodes of `output` for every node in `requires`.
    fn build_gradients(&mut self, output: NodeId, requires: &[bool]) -> Result<Vec<Option<NodeId>>> {
        let mut grads: Vec<Option<NodeId>> = vec![None; requires.len()];
        let seed = Tensor::filled(&self.nodes[output.0].shape.clone(), 1.0);
        grads[output.0] = Some(self.constant(seed));
        for i in (0..=output.0).rev() {
            if !requires[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            for (input, contribution) in self.vjp(i, g, requires)? {
                grads[input.0] = Some(match grads[input.0] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution)?,
                });
            }
        }
        Ok(grads)
    }

    /// Gradient of the scalar `output` with respect to every parameter node.
    /// Gradient nodes are discarded afterwards; parameters the output does
    /// not depend on get zero gradients.
    pub fn backward(&mut self, output: NodeId) -> Result<Gradients> {
        self.check_scalar_output(output)?;
        let mark = self.nodes.len();
        let requires = self.dependents(|_, n| matches!(n.op, Op::Param(_)));
        let result = self.build_gradients(output, &requires).and_then(|grads| {
            let mut out = Gradients::new();
            for i in 0..mark {
                let Op::Param(name) = &self.nodes[i].op else { continue };
                let t = match grads[i] {
                    Some(g) => self.get(g)?.clone(),
                    None => Tensor::zeros(&self.nodes[i].shape),
                };
                match out.get_mut(name) {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                            *a += b;
                        }
                    }
                    None => {
                        out.insert(name.clone(), t);
                    }
                }
            }
            Ok(out)
        });
        self.nodes.truncate(mark);
        result
    }

    /// Gradient of the scalar `output` with respect to the node `input`,
    /// returned as a graph node so it can be used in further expressions and
    /// differentiated again.
    pub fn input_gradient(&mut self, output: NodeId, input: NodeId) -> Result<NodeId> {
        self.check_scalar_output(output)?;
        let mark = self.nodes.len();
        let requires = self.dependents(|i, _| i == input.0);
        let grads = match self.build_gradients(output, &requires) {
            Ok(g) => g,
            Err(e) => {
                self.nodes.truncate(mark);
                return Err(e);
            }
        };
        if let Some(bad) = self.nodes[mark..].iter().find(|n| !n.op.has_vjp()) {
            let name = bad.op.name();
            self.nodes.truncate(mark);
            return Err(AutodiffError::NoSecondOrderRule(name));
        }
        match grads[input.0] {
            Some(g) => Ok(g),
            None => {
                let zeros = Tensor::zeros(&self.nodes[input.0].shape.clone());
                Ok(self.constant(zeros))
            }
        }
    }

    /// Emits the vector-Jacobian products of node `i` for upstream gradient `g`.
    fn vjp(&mut self, i: usize, g: NodeId, requires: &[bool]) -> Result<Vec<(NodeId, NodeId)>> {
        let node = &self.nodes[i];
        let op = node.op.clone();
        let ins = node.inputs.clone();
        let y = NodeId(i);
        let need = |n: usize| requires[ins[n].0];
        let mut out = Vec::with_capacity(ins.len());
        match op {
            Op::Input(_) | Op::Param(_) | Op::Constant | Op::Step | Op::Sign => {}
            Op::MatMul { ta, tb } => {
                let (a, b) = (ins[0], ins[1]);
                if need(0) {
                    let da = match (ta, tb) {
                        (false, false) => self.matmul_t(g, b, false, true)?,
                        (true, false) => self.matmul_t(b, g, false, true)?,
                        (false, true) => self.matmul_t(g, b, false, false)?,
                        (true, true) => self.matmul_t(b, g, true, true)?,
                    };
                    out.push((a, da));
                }
                if need(1) {
                    let db = match (ta, tb) {
                        (false, false) => self.matmul_t(a, g, true, false)?,
                        (true, false) => self.matmul_t(a, g, false, false)?,
                        (false, true) => self.matmul_t(g, a, true, false)?,
                        (true, true) => self.matmul_t(g, a, true, true)?,
                    };
                    out.push((b, db));
                }
            }
            Op::Affine => {
                if need(0) {
                    out.push((ins[0], self.matmul_t(g, ins[1], false, true)?));
                }
                if need(1) {
                    out.push((ins[1], self.matmul_t(ins[0], g, true, false)?));
                }
                if need(2) {
                    out.push((ins[2], self.sum_rows(g)?));
                }
            }
            Op::Add => {
                for n in 0..2 {
                    if need(n) {
                        out.push((ins[n], g));
                    }
                }
            }
            Op::Sub => {
                if need(0) {
                    out.push((ins[0], g));
                }
                if need(1) {
                    out.push((ins[1], self.scale(g, -1.0)?));
                }
            }
            Op::Mul => {
                if need(0) {
                    out.push((ins[0], self.mul(g, ins[1])?));
                }
                if need(1) {
                    out.push((ins[1], self.mul(g, ins[0])?));
                }
            }
            Op::Div => {
                if need(0) {
                    out.push((ins[0], self.div(g, ins[1])?));
                }
                if need(1) {
                    let gy = self.mul(g, y)?;
                    let q = self.div(gy, ins[1])?;
                    out.push((ins[1], self.scale(q, -1.0)?));
                }
            }
            Op::AddRow => {
                if need(0) {
                    out.push((ins[0], g));
                }
                if need(1) {
                    out.push((ins[1], self.sum_rows(g)?));
                }
            }
            Op::MulRow => {
                if need(0) {
                    out.push((ins[0], self.mul_row(g, ins[1])?));
                }
                if need(1) {
                    let gx = self.mul(g, ins[0])?;
                    out.push((ins[1], self.sum_rows(gx)?));
                }
            }
            Op::MulCol => {
                if need(0) {
                    out.push((ins[0], self.mul_col(g, ins[1])?));
                }
                if need(1) {
                    let gx = self.mul(g, ins[0])?;
                    out.push((ins[1], self.sum_cols(gx)?));
                }
            }
            Op::SumRows => {
                let rows = self.nodes[ins[0].0].shape[0];
                out.push((ins[0], self.broadcast_rows(g, rows)?));
            }
            Op::SumCols => {
                let cols = self.nodes[ins[0].0].shape[1];
                out.push((ins[0], self.broadcast_cols(g, cols)?));
            }
            Op::BroadcastRows(_) => out.push((ins[0], self.sum_rows(g)?)),
            Op::BroadcastCols(_) => out.push((ins[0], self.sum_cols(g)?)),
            Op::SumAll => {
                let shape = self.nodes[ins[0].0].shape.clone();
                out.push((ins[0], self.broadcast_scalar(g, &shape)?));
            }
            Op::BroadcastScalar(_) => {
                let s = self.sum_all(g)?;
                let shape = self.nodes[ins[0].0].shape.clone();
                out.push((ins[0], self.reshape(s, &shape)?));
            }
            Op::Scale(c) => out.push((ins[0], self.scale(g, c)?)),
            Op::AddScalar(_) => out.push((ins[0], g)),
            Op::Relu => {
                let mask = self.step(ins[0])?;
                out.push((ins[0], self.mul(g, mask)?));
            }
            Op::Sigmoid => {
                let y2 = self.square(y)?;
                let dy = self.sub(y, y2)?;
                out.push((ins[0], self.mul(g, dy)?));
            }
            Op::Sqrt => {
                let half = self.scale(g, 0.5)?;
                out.push((ins[0], self.div(half, y)?));
            }
            Op::Square => {
                let gx = self.mul(g, ins[0])?;
                out.push((ins[0], self.scale(gx, 2.0)?));
            }
            Op::Abs => {
                let s = self.sign(ins[0])?;
                out.push((ins[0], self.mul(g, s)?));
            }
            Op::Reshape(_) => {
                let shape = self.nodes[ins[0].0].shape.clone();
                out.push((ins[0], self.reshape(g, &shape)?));
            }
            Op::SliceCols { start, .. } => {
                let total = self.nodes[ins[0].0].shape[1];
                out.push((ins[0], self.pad_cols(g, start, total)?));
            }
            Op::PadCols { start, .. } => {
                let len = self.nodes[ins[0].0].shape[1];
                out.push((ins[0], self.slice_cols(g, start, len)?));
            }
            Op::ConcatCols => {
                let wa = self.nodes[ins[0].0].shape[1];
                let wb = self.nodes[ins[1].0].shape[1];
                if need(0) {
                    out.push((ins[0], self.slice_cols(g, 0, wa)?));
                }
                if need(1) {
                    out.push((ins[1], self.slice_cols(g, wa, wb)?));
                }
            }
            Op::SliceRows { start, .. } => {
                let total = self.nodes[ins[0].0].shape[0];
                out.push((ins[0], self.pad_rows(g, start, total)?));
            }
            Op::PadRows { start, .. } => {
                let len = self.nodes[ins[0].0].shape[0];
                out.push((ins[0], self.slice_rows(g, start, len)?));
            }
            Op::ConcatRows => {
                let ra = self.nodes[ins[0].0].shape[0];
                let rb = self.nodes[ins[1].0].shape[0];
                if need(0) {
                    out.push((ins[0], self.slice_rows(g, 0, ra)?));
                }
                if need(1) {
                    out.push((ins[1], self.slice_rows(g, ra, rb)?));
                }
            }
            Op::GatherRows(idx) => {
                let rows = self.nodes[ins[0].0].shape[0];
                out.push((ins[0], self.push(Op::ScatterAddRows { idx, rows }, &[g])?));
            }
            Op::ScatterAddRows { idx, .. } => {
                out.push((ins[0], self.push(Op::GatherRows(idx), &[g])?));
            }
            Op::SegmentMax(group) => {
                out.push((ins[0], self.push(Op::SegmentMaxGrad(group), &[g, ins[0]])?));
            }
            Op::RowNorm => {
                let w = self.push(Op::DivSafe, &[g, y])?;
                out.push((ins[0], self.mul_col(ins[0], w)?));
            }
            Op::SegmentMaxGrad(_) | Op::DivSafe => {
                return Err(AutodiffError::NoSecondOrderRule(op.name()));
            }
        }
        Ok(out)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul { ta: false, tb: false }, &[a, b])
    }

    /// Matrix product with optional transposition of either operand.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> Result<NodeId> {
        self.push(Op::MatMul { ta, tb }, &[a, b])
    }

    /// `x * w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Affine, &[x, w, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Div, &[a, b])
    }

    pub fn add_row(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow, &[x, v])
    }

    pub fn mul_row(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        self.push(Op::MulRow, &[x, v])
    }

    pub fn mul_col(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        self.push(Op::MulCol, &[x, v])
    }

    pub fn sum_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::SumRows, &[x])
    }

    pub fn sum_cols(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::SumCols, &[x])
    }

    pub fn broadcast_rows(&mut self, v: NodeId, rows: usize) -> Result<NodeId> {
        self.push(Op::BroadcastRows(rows), &[v])
    }

    pub fn broadcast_cols(&mut self, v: NodeId, cols: usize) -> Result<NodeId> {
        self.push(Op::BroadcastCols(cols), &[v])
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::SumAll, &[x])
    }

    /// Mean over all elements.
    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.nodes[x.0].shape.iter().product::<usize>().max(1);
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn broadcast_scalar(&mut self, s: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::BroadcastScalar(shape.to_vec()), &[s])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(c), &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(c), &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Relu, &[x])
    }

    /// Heaviside step (1 where `x > 0`); has zero derivative.
    pub fn step(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Step, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid, &[x])
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Square, &[x])
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Abs, &[x])
    }

    pub fn sign(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::Sign, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape(shape.to_vec()), &[x])
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceCols { start, len }, &[x])
    }

    /// Zero-pads `x` so its columns occupy `start..start + cols` of `total`.
    pub fn pad_cols(&mut self, x: NodeId, start: usize, total: usize) -> Result<NodeId> {
        self.push(Op::PadCols { start, total }, &[x])
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::ConcatCols, &[a, b])
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceRows { start, len }, &[x])
    }

    pub fn pad_rows(&mut self, x: NodeId, start: usize, total: usize) -> Result<NodeId> {
        self.push(Op::PadRows { start, total }, &[x])
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::ConcatRows, &[a, b])
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Arc<[usize]>) -> Result<NodeId> {
        self.push(Op::GatherRows(idx), &[x])
    }

    /// Max over consecutive blocks of `group` rows.
    pub fn segment_max(&mut self, x: NodeId, group: usize) -> Result<NodeId> {
        self.push(Op::SegmentMax(group), &[x])
    }

    /// Euclidean norm of each row.
    pub fn row_norm(&mut self, x: NodeId) -> Result<NodeId> {
        self.push(Op::RowNorm, &[x])
    }
}
