//! Define-by-run reverse-mode differentiation over 2-D matrices.
//!
//! Every operation appends a node to the graph, so node order is a
//! topological order and `backward` is a single reverse sweep. Vectors are
//! `1×n` matrices and scalars are `1×1`.

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    MatMulNt { a: Var, b: Var },
    BlockMatMul { a: Var, b: Var, blocks: usize },
    BlockMatMulNt { a: Var, b: Var, blocks: usize },
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Square(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout { x: Var, mask: Vec<f64> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    GatherRows { x: Var, rows: Vec<usize> },
    Reshape(Var),
    BlockMeanRows { x: Var, block: usize },
    Sum(Var),
    Mean(Var),
    Bce { p: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    tracked: bool,
}

/// Lower and upper probability clamp used by the BCE node.
pub const BCE_CLAMP: f64 = 1e-7;

/// Record of operations for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    visited: usize,
}

/// Strided read-only matrix view for gemm calls.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rs: isize,
    cs: isize,
}

impl<'a> View<'a> {
    fn rows(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            rs: cols as isize,
            cs: 1,
        }
    }

    fn transposed(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            rs: 1,
            cs: cols as isize,
        }
    }
}

/// `c = beta * c + a·b` where `a` is m×k, `b` is k×n and `c` is row-major m×n.
fn gemm(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: views and strides describe in-bounds row-major or transposed
    // storage of the stated extents; `c` holds m*n elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Accumulation buffer for an input, allocated lazily; None if untracked.
fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    if !nodes[v.0].tracked {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, tracked: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Adds a tensor of rank 1 or 2 as a leaf; gradients flow to it when the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        let (r, c) = t.as_matrix_dims()?;
        Ok(self.push(r, c, t.data().to_vec(), Op::Leaf, t.requires_grad))
    }

    /// Adds a matrix leaf directly from data.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::dim("input", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        self.input(rows, cols, data, false)
    }

    fn unary(&mut self, x: Var, value: Vec<f64>, op: Op) -> Var {
        let (r, c) = self.shape(x);
        let t = self.tracked(x);
        self.push(r, c, value, op, t)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, &[sa.0, sa.1], &[sb.0, sb.1]));
        }
        Ok(sa)
    }

    /// Matrix product `a·b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::dim("matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            View::rows(self.value(a), k),
            View::rows(self.value(b), n),
            0.0,
            &mut out,
        );
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(m, n, out, Op::MatMul { a, b }, t))
    }

    /// Product with the second operand transposed, `a·bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (n, k2)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::dim("matmul_nt", &[m, k], &[n, k2]));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            View::rows(self.value(a), k),
            View::transposed(self.value(b), k),
            0.0,
            &mut out,
        );
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(m, n, out, Op::MatMulNt { a, b }, t))
    }

    fn block_dims(&self, op: &'static str, a: Var, b: Var, blocks: usize) -> Result<(usize, usize, usize, usize)> {
        let ((ra, ca), (rb, cb)) = (self.shape(a), self.shape(b));
        if blocks == 0 || ra % blocks != 0 || rb % blocks != 0 {
            return Err(Error::dim(op, &[ra, ca], &[rb, cb]));
        }
        Ok((ra / blocks, ca, rb / blocks, cb))
    }

    /// Block-diagonal product: rows of `a` and `b` are split into `blocks`
    /// equal groups and group `i` of `a` is multiplied by group `i` of `b`.
    pub fn block_matmul(&mut self, a: Var, b: Var, blocks: usize) -> Result<Var> {
        let (m, k, k2, n) = self.block_dims("block_matmul", a, b, blocks)?;
        if k != k2 {
            return Err(Error::dim("block_matmul", &[m, k], &[k2, n]));
        }
        let mut out = vec![0.0; blocks * m * n];
        let (av, bv) = (self.value(a), self.value(b));
        for i in 0..blocks {
            gemm(
                m,
                k,
                n,
                View::rows(&av[i * m * k..], k),
                View::rows(&bv[i * k * n..], n),
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(blocks * m, n, out, Op::BlockMatMul { a, b, blocks }, t))
    }

    /// Block-diagonal `a_i·b_iᵀ`.
    pub fn block_matmul_nt(&mut self, a: Var, b: Var, blocks: usize) -> Result<Var> {
        let (m, k, n, k2) = self.block_dims("block_matmul_nt", a, b, blocks)?;
        if k != k2 {
            return Err(Error::dim("block_matmul_nt", &[m, k], &[n, k2]));
        }
        let mut out = vec![0.0; blocks * m * n];
        let (av, bv) = (self.value(a), self.value(b));
        for i in 0..blocks {
            gemm(
                m,
                k,
                n,
                View::rows(&av[i * m * k..], k),
                View::transposed(&bv[i * n * k..], k),
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(blocks * m, n, out, Op::BlockMatMulNt { a, b, blocks }, t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("add", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(r, c, v, Op::Add(a, b), t))
    }

    /// Adds a `1×c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ((r, c), (rr, rc)) = (self.shape(a), self.shape(row));
        if rr != 1 || rc != c {
            return Err(Error::dim("add_row", &[r, c], &[rr, rc]));
        }
        let bias = self.value(row);
        let v = self
            .value(a)
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(bias).map(|(x, b)| x + b))
            .collect();
        let t = self.tracked(a) || self.tracked(row);
        Ok(self.push(r, c, v, Op::AddRow(a, row), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(r, c, v, Op::Sub(a, b), t))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(r, c, v, Op::Mul(a, b), t))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).iter().map(|a| a * s).collect();
        self.unary(x, v, Op::Scale(x, s))
    }

    /// `max(0, x)`; the subgradient at exactly zero is zero.
    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect();
        self.unary(x, v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|&a| sigmoid(a)).collect();
        self.unary(x, v, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|a| a.tanh()).collect();
        self.unary(x, v, Op::Tanh(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).iter().map(|a| a * a).collect();
        self.unary(x, v, Op::Square(x))
    }

    /// Row-wise softmax, stabilised by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (_, c) = self.shape(x);
        let mut v = self.value(x).to_vec();
        for row in v.chunks_mut(c) {
            softmax_in_place(row);
        }
        self.unary(x, v, Op::SoftmaxRows(x))
    }

    /// Row-wise layer normalisation with population variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let ((r, c), sg, sb) = (self.shape(x), self.shape(gamma), self.shape(beta));
        if sg != (1, c) || sb != (1, c) {
            return Err(Error::dim("layer_norm", &[r, c], &[sg.0, sg.1, sb.0, sb.1]));
        }
        if c < 2 {
            return Err(Error::dim("layer_norm", &[r, c], &[2]));
        }
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gv[j] + bv[j];
            }
        }
        let t = self.tracked(x) || self.tracked(gamma) || self.tracked(beta);
        Ok(self.push(
            r,
            c,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            t,
        ))
    }

    /// Inverted dropout. Identity when not training or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let v = self.value(x).iter().zip(&mask).map(|(a, m)| a * m).collect();
        Ok(self.unary(x, v, Op::Dropout { x, mask }))
    }

    /// Columns `[start, start + len)`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if len == 0 || start + len > c {
            return Err(Error::dim("slice_cols", &[r, c], &[start, len]));
        }
        let v = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let t = self.tracked(x);
        Ok(self.push(r, len, v, Op::SliceCols { x, start }, t))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Contract("concat_cols of nothing".into()));
        };
        let r = self.shape(first).0;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.shape(p);
            if pr != r {
                return Err(Error::dim("concat_cols", &[r], &[pr, pc]));
            }
            total += pc;
        }
        let mut v = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p).1;
                v.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(r, total, v, Op::ConcatCols(parts.to_vec()), t))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if rows.is_empty() || rows.iter().any(|&i| i >= r) {
            return Err(Error::dim("gather_rows", &[r, c], &[rows.len()]));
        }
        let xv = self.value(x);
        let v = rows.iter().flat_map(|&i| xv[i * c..(i + 1) * c].iter().copied()).collect();
        let t = self.tracked(x);
        Ok(self.push(
            rows.len(),
            c,
            v,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            t,
        ))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r * c != rows * cols {
            return Err(Error::dim("reshape", &[r, c], &[rows, cols]));
        }
        let v = self.value(x).to_vec();
        let t = self.tracked(x);
        Ok(self.push(rows, cols, v, Op::Reshape(x), t))
    }

    /// Mean over each consecutive group of `block` rows.
    pub fn block_mean_rows(&mut self, x: Var, block: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if block == 0 || r % block != 0 {
            return Err(Error::dim("block_mean_rows", &[r, c], &[block]));
        }
        let groups = r / block;
        let xv = self.value(x);
        let mut v = vec![0.0; groups * c];
        for g in 0..groups {
            for i in 0..block {
                add_into(&mut v[g * c..(g + 1) * c], &xv[(g * block + i) * c..(g * block + i + 1) * c]);
            }
        }
        v.iter_mut().for_each(|a| *a /= block as f64);
        let t = self.tracked(x);
        Ok(self.push(groups, c, v, Op::BlockMeanRows { x, block }, t))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let t = self.tracked(x);
        self.push(1, 1, vec![s], Op::Sum(x), t)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let t = self.tracked(x);
        self.push(1, 1, vec![s], Op::Mean(x), t)
    }

    /// Mean binary cross-entropy of probabilities `p` (any shape) against
    /// 0/1 targets, with `p` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        let (r, c) = self.shape(p);
        if targets.len() != r * c {
            return Err(Error::dim("bce", &[r, c], &[targets.len()]));
        }
        if let Some(&q) = targets.iter().find(|&&q| q != 0.0 && q != 1.0) {
            return Err(Error::Label(q));
        }
        let loss = bce_value(self.value(p), targets);
        let t = self.tracked(p);
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            t,
        ))
    }

    /// Gradient of the last `backward` loss with respect to `v`; zeros when
    /// `v` did not participate.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; self.node(v).value.len()],
        }
    }

    /// Number of nodes whose backward rule ran in the last sweep.
    pub fn visited(&self) -> usize {
        self.visited
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::Contract(format!("backward needs a scalar loss, got {r}x{c}")));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        self.visited = 0;
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.visited += 1;
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let (rows, cols) = (node.rows, node.cols);
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.shape(*a);
                let n = cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    gemm(m, n, k, View::rows(g, n), View::transposed(bv, n), 1.0, ga);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gemm(k, m, n, View::transposed(av, k), View::rows(g, n), 1.0, gb);
                }
            }
            Op::MatMulNt { a, b } => {
                let (m, k) = self.shape(*a);
                let n = cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    gemm(m, n, k, View::rows(g, n), View::rows(bv, k), 1.0, ga);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gemm(n, m, k, View::transposed(g, n), View::rows(av, k), 1.0, gb);
                }
            }
            Op::BlockMatMul { a, b, blocks } => {
                let blocks = *blocks;
                let (ra, k) = self.shape(*a);
                let m = ra / blocks;
                let n = cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    for s in 0..blocks {
                        gemm(
                            m,
                            n,
                            k,
                            View::rows(&g[s * m * n..], n),
                            View::transposed(&bv[s * k * n..], n),
                            1.0,
                            &mut ga[s * m * k..(s + 1) * m * k],
                        );
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for s in 0..blocks {
                        gemm(
                            k,
                            m,
                            n,
                            View::transposed(&av[s * m * k..], k),
                            View::rows(&g[s * m * n..], n),
                            1.0,
                            &mut gb[s * k * n..(s + 1) * k * n],
                        );
                    }
                }
            }
            Op::BlockMatMulNt { a, b, blocks } => {
                let blocks = *blocks;
                let (ra, k) = self.shape(*a);
                let m = ra / blocks;
                let n = cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    for s in 0..blocks {
                        gemm(
                            m,
                            n,
                            k,
                            View::rows(&g[s * m * n..], n),
                            View::rows(&bv[s * n * k..], k),
                            1.0,
                            &mut ga[s * m * k..(s + 1) * m * k],
                        );
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for s in 0..blocks {
                        gemm(
                            n,
                            m,
                            k,
                            View::transposed(&g[s * m * n..], n),
                            View::rows(&av[s * m * k..], k),
                            1.0,
                            &mut gb[s * n * k..(s + 1) * n * k],
                        );
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gr) = slot(nodes, grads, *row) {
                    for chunk in g.chunks(cols) {
                        add_into(gr, chunk);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot(nodes, grads, *a) {
                    for j in 0..g.len() {
                        ga[j] += g[j] * bv[j];
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for j in 0..g.len() {
                        gb[j] += g[j] * av[j];
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(d, u)| *d += u * s);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        if xv[j] > 0.0 {
                            gx[j] += g[j];
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * (1.0 - y[j] * y[j]);
                    }
                }
            }
            Op::Square(x) => {
                let xv = self.value(*x);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += 2.0 * g[j] * xv[j];
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                if let Some(gx) = slot(nodes, grads, *x) {
                    for i in 0..rows {
                        let (yr, gr) = (&y[i * cols..(i + 1) * cols], &g[i * cols..(i + 1) * cols]);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            gx[i * cols + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gamma);
                if let Some(gx) = slot(nodes, grads, *x) {
                    let c = cols as f64;
                    for i in 0..rows {
                        let base = i * cols;
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..cols {
                            let d = g[base + j] * gv[j];
                            mean_d += d;
                            mean_dx += d * xhat[base + j];
                        }
                        mean_d /= c;
                        mean_dx /= c;
                        for j in 0..cols {
                            let d = g[base + j] * gv[j];
                            gx[base + j] += inv_std[i] * (d - mean_d - xhat[base + j] * mean_dx);
                        }
                    }
                }
                if let Some(gg) = slot(nodes, grads, *gamma) {
                    for i in 0..rows {
                        for j in 0..cols {
                            gg[j] += g[i * cols + j] * xhat[i * cols + j];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *beta) {
                    for chunk in g.chunks(cols) {
                        add_into(gb, chunk);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * mask[j];
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let xc = self.shape(*x).1;
                if let Some(gx) = slot(nodes, grads, *x) {
                    for i in 0..rows {
                        add_into(&mut gx[i * xc + start..i * xc + start + cols], &g[i * cols..(i + 1) * cols]);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    if let Some(gp) = slot(nodes, grads, p) {
                        for i in 0..rows {
                            add_into(
                                &mut gp[i * pc..(i + 1) * pc],
                                &g[i * cols + offset..i * cols + offset + pc],
                            );
                        }
                    }
                    offset += pc;
                }
            }
            Op::GatherRows { x, rows: idx } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (k, &src) in idx.iter().enumerate() {
                        add_into(&mut gx[src * cols..(src + 1) * cols], &g[k * cols..(k + 1) * cols]);
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::BlockMeanRows { x, block } => {
                let inv = 1.0 / *block as f64;
                if let Some(gx) = slot(nodes, grads, *x) {
                    for grp in 0..rows {
                        for k in 0..*block {
                            let dst = &mut gx[(grp * block + k) * cols..(grp * block + k + 1) * cols];
                            for j in 0..cols {
                                dst[j] += g[grp * cols + j] * inv;
                            }
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                let len = self.value(*x).len() as f64;
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().for_each(|d| *d += g[0] / len);
                }
            }
            Op::Bce { p, targets } => {
                let pv = self.value(*p);
                let nrm = targets.len() as f64;
                if let Some(gp) = slot(nodes, grads, *p) {
                    for j in 0..pv.len() {
                        let pj = pv[j];
                        if pj <= BCE_CLAMP || pj >= 1.0 - BCE_CLAMP {
                            continue;
                        }
                        gp[j] += g[0] * (pj - targets[j]) / (pj * (1.0 - pj)) / nrm;
                    }
                }
            }
        }
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for a in row.iter_mut() {
        *a = (*a - max).exp();
        total += *a;
    }
    row.iter_mut().for_each(|a| *a /= total);
}

fn bce_value(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len() as f64;
    -p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let pc = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            qi * pc.ln() + (1.0 - qi) * (1.0 - pc).ln()
        })
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(g: &mut Graph, r: usize, c: usize, v: &[f64]) -> Var {
        g.constant(r, c, v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let i2 = mat(&mut g, 2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let m = mat(&mut g, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(p), &[1.0, 2.0, 3.0, 4.0]);

        let a = mat(&mut g, 1, 2, &[1.0, 2.0]);
        let b = mat(&mut g, 2, 1, &[3.0, 4.0]);
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[11.0]);

        let err = g.matmul(a, a).unwrap_err();
        assert_eq!(err.to_string(), "dimension mismatch in matmul: [1, 2] vs [1, 2]");
    }

    #[test]
    fn matmul_nt_matches_explicit_transpose() {
        let mut g = Graph::new();
        let a = mat(&mut g, 2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = mat(&mut g, 2, 3, &[1.0, 0.0, -1.0, 2.0, 1.0, 0.5]);
        let bt = mat(&mut g, 3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let x = g.matmul_nt(a, b).unwrap();
        let y = g.matmul(a, bt).unwrap();
        assert_eq!(g.value(x), g.value(y));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = mat(&mut g, 3, 3, &[2.0, 2.0, 2.0, 5.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        let x = g.slice_cols(x, 0, 3).unwrap();
        let s = g.softmax_rows(x);
        for v in &g.value(s)[0..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let single = mat(&mut g, 1, 1, &[42.0]);
        let s1 = g.softmax_rows(single);
        assert_eq!(g.value(s1), &[1.0]);

        let pair = mat(&mut g, 1, 2, &[1.0, 2.0]);
        let s2 = g.softmax_rows(pair);
        let e = 1f64.exp();
        assert!((g.value(s2)[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((g.value(s2)[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((g.value(s2)[0] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn activation_examples() {
        let mut g = Graph::new();
        let x = mat(&mut g, 1, 3, &[-1.0, 2.0, 0.0]);
        let r = g.relu(x);
        assert_eq!(g.value(r), &[0.0, 2.0, 0.0]);
        let s = mat(&mut g, 1, 2, &[0.0, 3f64.ln()]);
        let y = g.sigmoid(s);
        assert_eq!(g.value(y)[0], 0.5);
        assert!((g.value(y)[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.input(1, 2, vec![0.0, 1.0], true).unwrap();
        let r = g.relu(x);
        let s = g.sum(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x), vec![0.0, 1.0]);
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let ones = mat(&mut g, 1, 3, &[1.0; 3]);
        let zeros = mat(&mut g, 1, 3, &[0.0; 3]);
        let c = mat(&mut g, 1, 3, &[7.0; 3]);
        let y = g.layer_norm(c, ones, zeros, 1e-5).unwrap();
        assert!(g.value(y).iter().all(|v| v.abs() < 1e-12));

        let x = mat(&mut g, 1, 3, &[1.0, 2.0, 3.0]);
        let y = g.layer_norm(x, ones, zeros, 1e-5).unwrap();
        // population variance 2/3
        let s = (2.0f64 / 3.0 + 1e-5).sqrt();
        let want = [-1.0 / s, 0.0, 1.0 / s];
        for (a, b) in g.value(y).iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.value(y)[0] + 1.2247).abs() < 1e-4);

        let ones2 = mat(&mut g, 1, 2, &[1.0; 2]);
        let zeros2 = mat(&mut g, 1, 2, &[0.0; 2]);
        let x2 = mat(&mut g, 1, 2, &[-1.0, 1.0]);
        let y2 = g.layer_norm(x2, ones2, zeros2, 0.0).unwrap();
        assert_eq!(g.value(y2), &[-1.0, 1.0]);

        assert!(matches!(g.layer_norm(x, ones2, zeros2, 1e-5), Err(Error::Dimension { .. })));
    }

    #[test]
    fn dropout_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let x = mat(&mut g, 1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let off = g.dropout(x, 0.5, &mut rng, false).unwrap();
        assert_eq!(g.value(off), g.value(x));
        let zero = g.dropout(x, 0.0, &mut rng, true).unwrap();
        assert_eq!(g.value(zero), g.value(x));
        assert!(g.dropout(x, 1.0, &mut rng, true).is_err());
        assert!(g.dropout(x, -0.1, &mut rng, true).is_err());

        let n = 100_000;
        let big = g.constant(1, n, vec![1.0; n]).unwrap();
        let d = g.dropout(big, 0.1, &mut rng, true).unwrap();
        let mean = g.value(d).iter().sum::<f64>() / n as f64;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = g.input(1, 3, vec![0.3, -1.0, 2.0], true).unwrap();
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x), vec![1.0; 3]);

        let mut g = Graph::new();
        let x = g.input(1, 3, vec![0.3, -1.0, 2.0], true).unwrap();
        let c = g.constant(1, 1, vec![5.0]).unwrap();
        let loss = g.sum(c);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), vec![0.0; 3]);

        let v = g.constant(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(g.backward(v), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_visits_each_tracked_node_once() {
        let mut g = Graph::new();
        let x = g.input(2, 2, vec![1.0, 2.0, 3.0, 4.0], true).unwrap();
        let y = g.matmul(x, x).unwrap();
        let z = g.add(y, x).unwrap();
        let w = g.mul(z, z).unwrap();
        let s = g.sum(w);
        g.backward(s).unwrap();
        assert_eq!(g.visited(), 5);
    }

    #[test]
    fn bce_node_value_and_label_check() {
        let mut g = Graph::new();
        let p = g.constant(1, 2, vec![0.9, 0.2]).unwrap();
        let l = g.bce(p, &[1.0, 0.0]).unwrap();
        let want = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((g.scalar(l) - want).abs() < 1e-15);
        assert!(matches!(g.bce(p, &[1.0, 0.5]), Err(Error::Label(_))));
    }
}
