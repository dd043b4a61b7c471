//! Minimal reverse-mode tape over the handful of matrix primitives the
//! encoder needs.

use super::params::EncoderParams;
use crate::error::{Error, Result};
use crate::types::{gemm, Matrix};

pub(crate) type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; receives no gradient.
    Input,
    /// `x·W + b` with parameters of layer `layer`.
    Linear { x: NodeId, layer: usize },
    Relu { x: NodeId },
    /// Column-wise max over rows; `argmax[c]` is the winning row (lowest on
    /// ties).
    MaxPool { x: NodeId, argmax: Vec<usize> },
    /// `[local, 1·global]·W + b`: the global row is broadcast to every row
    /// and concatenated after the local features.
    ConcatLinear {
        local: NodeId,
        global: NodeId,
        layer: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Records a forward pass so that [`Tape::backward`] can replay it.
#[derive(Debug, Clone)]
pub struct Tape<'p> {
    params: Option<&'p EncoderParams>,
    nodes: Vec<Node>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            params: None,
            nodes: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn reset(&mut self, params: &'p EncoderParams) {
        self.params = Some(params);
        self.nodes.clear();
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub(crate) fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    fn params(&self) -> &'p EncoderParams {
        self.params.expect("tape used before reset")
    }

    pub(crate) fn input(&mut self, x: Matrix) -> NodeId {
        self.push(Op::Input, x)
    }

    pub(crate) fn linear(&mut self, x: NodeId, layer: usize) -> NodeId {
        let dense = &self.params().layers[layer];
        let xv = &self.nodes[x].value;
        let (n, fan_in, fan_out) = (xv.rows(), dense.fan_in(), dense.fan_out());
        debug_assert_eq!(xv.cols(), fan_in);
        let mut out = Matrix::zeros(n, fan_out);
        for i in 0..n {
            out.row_mut(i).copy_from_slice(&dense.bias);
        }
        gemm(
            n,
            fan_in,
            fan_out,
            (xv.data(), fan_in as isize, 1),
            (dense.weight.data(), fan_out as isize, 1),
            out.data_mut(),
            1.0,
        );
        self.push(Op::Linear { x, layer }, out)
    }

    pub(crate) fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(Op::Relu { x }, out)
    }

    pub(crate) fn max_pool(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let c = xv.cols();
        let mut best = xv.row(0).to_vec();
        let mut argmax = vec![0usize; c];
        for i in 1..xv.rows() {
            for (j, v) in xv.row(i).iter().enumerate() {
                if *v > best[j] {
                    best[j] = *v;
                    argmax[j] = i;
                }
            }
        }
        let out = Matrix::from_vec(1, c, best).expect("shape");
        self.push(Op::MaxPool { x, argmax }, out)
    }

    pub(crate) fn concat_linear(&mut self, local: NodeId, global: NodeId, layer: usize) -> NodeId {
        let dense = &self.params().layers[layer];
        let lv = &self.nodes[local].value;
        let gv = &self.nodes[global].value;
        let (n, cl, cg, fan_out) = (lv.rows(), lv.cols(), gv.cols(), dense.fan_out());
        debug_assert_eq!(cl + cg, dense.fan_in());
        let w = dense.weight.data();
        let (w_local, w_global) = w.split_at(cl * fan_out);
        // shared row: b + global·W_global
        let mut shared = dense.bias.clone();
        gemm(
            1,
            cg,
            fan_out,
            (gv.data(), cg as isize, 1),
            (w_global, fan_out as isize, 1),
            &mut shared,
            1.0,
        );
        let mut out = Matrix::zeros(n, fan_out);
        for i in 0..n {
            out.row_mut(i).copy_from_slice(&shared);
        }
        gemm(
            n,
            cl,
            fan_out,
            (lv.data(), cl as isize, 1),
            (w_local, fan_out as isize, 1),
            out.data_mut(),
            1.0,
        );
        self.push(
            Op::ConcatLinear {
                local,
                global,
                layer,
            },
            out,
        )
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given the loss
    /// gradient w.r.t. the last recorded node (the logits).
    pub fn backward(&self, output_grad: &Matrix) -> Result<EncoderParams> {
        let params = match self.params {
            Some(p) if !self.nodes.is_empty() => p,
            _ => return Err(Error::Usage("backward called before forward".into())),
        };
        let last = self.nodes.len() - 1;
        if self.nodes[last].value.shape() != output_grad.shape() {
            return Err(Error::validation(format!(
                "output gradient is {:?}, logits are {:?}",
                output_grad.shape(),
                self.nodes[last].value.shape()
            )));
        }
        let mut grads = params.zeros_like();
        let mut node_grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        node_grads[last] = Some(output_grad.clone());

        fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
            match slot {
                Some(acc) => acc.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for id in (0..self.nodes.len()).rev() {
            let Some(g) = node_grads[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Relu { x } => {
                    let mut dx = g;
                    let y = &self.nodes[id].value;
                    for (d, v) in dx.data_mut().iter_mut().zip(y.data()) {
                        if *v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut node_grads[*x], dx);
                }
                Op::MaxPool { x, argmax } => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for (c, &row) in argmax.iter().enumerate() {
                        dx[(row, c)] += g[(0, c)];
                    }
                    accumulate(&mut node_grads[*x], dx);
                }
                Op::Linear { x, layer } => {
                    let xv = &self.nodes[*x].value;
                    let dense = &params.layers[*layer];
                    let slot = &mut grads.layers[*layer];
                    xv.t_matmul_into(&g, &mut slot.weight);
                    add_column_sums(&g, &mut slot.bias);
                    if !matches!(self.nodes[*x].op, Op::Input) {
                        accumulate(&mut node_grads[*x], g.matmul_t(&dense.weight));
                    }
                }
                Op::ConcatLinear {
                    local,
                    global,
                    layer,
                } => {
                    let lv = &self.nodes[*local].value;
                    let gv = &self.nodes[*global].value;
                    let dense = &params.layers[*layer];
                    let (n, cl, cg, fan_out) = (lv.rows(), lv.cols(), gv.cols(), dense.fan_out());
                    let mut col_sums = vec![0.0; fan_out];
                    add_column_sums(&g, &mut col_sums);

                    let slot = &mut grads.layers[*layer];
                    let (dw_local, dw_global) = slot.weight.data_mut().split_at_mut(cl * fan_out);
                    // dW_local += localᵀ·g
                    gemm(
                        cl,
                        n,
                        fan_out,
                        (lv.data(), 1, cl as isize),
                        (g.data(), fan_out as isize, 1),
                        dw_local,
                        1.0,
                    );
                    // dW_global += globalᵀ·colsum(g)
                    for (a, gval) in gv.data().iter().enumerate() {
                        for (d, s) in dw_global[a * fan_out..(a + 1) * fan_out]
                            .iter_mut()
                            .zip(&col_sums)
                        {
                            *d += gval * s;
                        }
                    }
                    for (b, s) in slot.bias.iter_mut().zip(&col_sums) {
                        *b += s;
                    }

                    let w = dense.weight.data();
                    let (w_local, w_global) = w.split_at(cl * fan_out);
                    let mut dlocal = Matrix::zeros(n, cl);
                    gemm(
                        n,
                        fan_out,
                        cl,
                        (g.data(), fan_out as isize, 1),
                        (w_local, 1, fan_out as isize),
                        dlocal.data_mut(),
                        0.0,
                    );
                    let mut dglobal = Matrix::zeros(1, cg);
                    gemm(
                        1,
                        fan_out,
                        cg,
                        (&col_sums, fan_out as isize, 1),
                        (w_global, 1, fan_out as isize),
                        dglobal.data_mut(),
                        0.0,
                    );
                    accumulate(&mut node_grads[*local], dlocal);
                    accumulate(&mut node_grads[*global], dglobal);
                }
            }
        }
        Ok(grads)
    }
}

fn add_column_sums(g: &Matrix, out: &mut [f64]) {
    for row in g.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
