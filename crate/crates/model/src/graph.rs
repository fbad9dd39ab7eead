//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Graph`] records operations as they are evaluated. Parameters enter
//! the graph by reference through [`Graph::param`]; everything else is a
//! constant leaf or a derived node. [`Graph::backward`] returns gradients
//! for every parameter, with exact zeros for parameters the output does not
//! depend on.

use crate::tensor::{gelu, gelu_grad, gemm, layer_norm, log_softmax_row, Mat};
use crate::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// One attention block: query rows `q_off..q_off+q_len` attend to key rows
/// `k_off..k_off+k_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnSeg {
    pub q_off: usize,
    pub q_len: usize,
    pub k_off: usize,
    pub k_len: usize,
}

enum Op<T> {
    Leaf,
    Param(usize),
    MatMul {
        a: Var,
        ta: bool,
        b: Var,
        tb: bool,
    },
    Add(Var, Var),
    AddRow {
        a: Var,
        row: Var,
    },
    Gather {
        table: Var,
        ids: Vec<u32>,
    },
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        segs: Vec<AttnSeg>,
        heads: usize,
        causal: bool,
        probs: Vec<T>,
    },
    Mask {
        x: Var,
        mask: Vec<T>,
    },
    LogProbAt {
        logits: Var,
        targets: Vec<u32>,
        probs: Mat<T>,
    },
    Sum(Var),
    Scale(Var, T),
}

struct Node<T> {
    value: Mat<T>,
    op: Op<T>,
}

pub struct Graph<'p, T> {
    params: &'p [Mat<T>],
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Float> Graph<'p, T> {
    pub fn new(params: &'p [Mat<T>]) -> Self {
        Self {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        match self.nodes[v.0].op {
            Op::Param(id) => &self.params[id],
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v).data[0]
    }

    pub fn constant(&mut self, m: Mat<T>) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, id: usize) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        let v = self.push(Mat::zeros(0, 0), Op::Param(id));
        self.param_vars[id] = Some(v);
        v
    }

    /// `op(a) * op(b)`, with `ta`/`tb` selecting transposition.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let m = if ta { av.cols } else { av.rows };
        let n = if tb { bv.rows } else { bv.cols };
        let mut out = Mat::zeros(m, n);
        gemm(T::one(), av, ta, bv, tb, T::zero(), &mut out);
        self.push(out, Op::MatMul { a, ta, b, tb })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1);
        let r = r.data.clone();
        let mut out = self.value(a).clone();
        assert_eq!(out.cols, r.len());
        for chunk in out.data.chunks_mut(r.len()) {
            for (o, &b) in chunk.iter_mut().zip(&r) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow { a, row })
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: Vec<u32>) -> Var {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id as usize));
        }
        self.push(out, Op::Gather { table, ids })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in &mut out.data {
            *v = gelu(*v);
        }
        self.push(out, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (y, xhat, rstd) = layer_norm(
            self.value(x),
            &self.value(gain).data,
            &self.value(bias).data,
        );
        self.push(
            y,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        )
    }

    /// Scaled dot-product attention with `heads` heads over each segment.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        segs: Vec<AttnSeg>,
        heads: usize,
        causal: bool,
    ) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.cols;
        assert!(d % heads == 0);
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut out = Mat::zeros(qm.rows, d);
        let mut probs = Vec::new();
        let mut scores = Vec::new();
        for s in &segs {
            assert!(
                !causal || s.q_len == s.k_len,
                "causal attention needs square segments"
            );
            for h in 0..heads {
                let c0 = h * dh;
                for i in 0..s.q_len {
                    let qi = &qm.row(s.q_off + i)[c0..c0 + dh];
                    let visible = if causal { i + 1 } else { s.k_len };
                    scores.clear();
                    for j in 0..visible {
                        let kj = &km.row(s.k_off + j)[c0..c0 + dh];
                        scores.push(dot(qi, kj) * scale);
                    }
                    softmax_in_place(&mut scores);
                    let orow = &mut out.data[(s.q_off + i) * d + c0..(s.q_off + i) * d + c0 + dh];
                    for (j, &p) in scores.iter().enumerate() {
                        let vj = &vm.row(s.k_off + j)[c0..c0 + dh];
                        for (o, &x) in orow.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                    probs.extend_from_slice(&scores);
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                segs,
                heads,
                causal,
                probs,
            },
        )
    }

    /// Elementwise product with a fixed mask (used for inverted dropout).
    pub fn mask(&mut self, x: Var, mask: Vec<T>) -> Var {
        let mut out = self.value(x).clone();
        assert_eq!(out.data.len(), mask.len());
        for (o, &m) in out.data.iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Mask { x, mask })
    }

    /// Per-row log-softmax evaluated at `targets[i]`; output is `rows x 1`.
    pub fn log_prob_at(&mut self, logits: Var, targets: Vec<u32>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows, targets.len());
        let mut probs = l.clone();
        let mut out = Mat::zeros(l.rows, 1);
        for (i, &t) in targets.iter().enumerate() {
            let row = probs.row_mut(i);
            log_softmax_row(row);
            out.data[i] = row[t as usize];
            for p in row.iter_mut() {
                *p = p.exp();
            }
        }
        self.push(
            out,
            Op::LogProbAt {
                logits,
                targets,
                probs,
            },
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().copied().sum::<T>();
        self.push(Mat::filled(1, 1, s), Op::Sum(a))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let mut out = self.value(a).clone();
        out.scale(s);
        self.push(out, Op::Scale(a, s))
    }

    /// Gradients of scalar `output` with respect to every parameter slot.
    pub fn backward(&self, output: Var) -> Vec<Mat<T>> {
        assert_eq!(
            self.value(output).shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grads: Vec<Option<Mat<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Mat<T>> = self
            .params
            .iter()
            .map(|p| Mat::zeros(0, p.cols.min(0)))
            .collect();
        grads[output.0] = Some(Mat::filled(1, 1, T::one()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(id) => param_grads[*id] = g,
                Op::MatMul { a, ta, b, tb } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    {
                        let ga = self.grad_slot(&mut grads, *a);
                        if *ta {
                            gemm(T::one(), bv, *tb, &g, true, T::one(), ga);
                        } else {
                            gemm(T::one(), &g, false, bv, !*tb, T::one(), ga);
                        }
                    }
                    let gb = self.grad_slot(&mut grads, *b);
                    if *tb {
                        gemm(T::one(), &g, true, av, *ta, T::one(), gb);
                    } else {
                        gemm(T::one(), av, !*ta, &g, false, T::one(), gb);
                    }
                }
                Op::Add(a, b) => {
                    self.grad_slot(&mut grads, *a).add_assign(&g);
                    self.grad_slot(&mut grads, *b).add_assign(&g);
                }
                Op::AddRow { a, row } => {
                    self.grad_slot(&mut grads, *a).add_assign(&g);
                    let gr = self.grad_slot(&mut grads, *row);
                    for chunk in g.data.chunks(g.cols) {
                        for (o, &x) in gr.data.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    let gt = self.grad_slot(&mut grads, *table);
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, &x) in gt.row_mut(id as usize).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
                Op::Gelu(a) => {
                    let x = self.value(*a).data.clone();
                    let ga = self.grad_slot(&mut grads, *a);
                    for ((o, &gi), &xi) in ga.data.iter_mut().zip(&g.data).zip(&x) {
                        *o += gi * gelu_grad(xi);
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gain_v = self.value(*gain).data.clone();
                    let d = xhat.cols;
                    let inv_d = T::of(1.0 / d as f64);
                    {
                        let gg = self.grad_slot(&mut grads, *gain);
                        for i in 0..g.rows {
                            for ((o, &gi), &h) in gg.data.iter_mut().zip(g.row(i)).zip(xhat.row(i))
                            {
                                *o += gi * h;
                            }
                        }
                    }
                    {
                        let gbias = self.grad_slot(&mut grads, *bias);
                        for i in 0..g.rows {
                            for (o, &gi) in gbias.data.iter_mut().zip(g.row(i)) {
                                *o += gi;
                            }
                        }
                    }
                    let gx = self.grad_slot(&mut grads, *x);
                    let mut dxhat = vec![T::zero(); d];
                    for i in 0..g.rows {
                        let (gr, hr) = (g.row(i), xhat.row(i));
                        let mut mean_d = T::zero();
                        let mut mean_dh = T::zero();
                        for j in 0..d {
                            dxhat[j] = gr[j] * gain_v[j];
                            mean_d += dxhat[j];
                            mean_dh += dxhat[j] * hr[j];
                        }
                        mean_d *= inv_d;
                        mean_dh *= inv_d;
                        let out = gx.row_mut(i);
                        for j in 0..d {
                            out[j] += rstd[i] * (dxhat[j] - mean_d - hr[j] * mean_dh);
                        }
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    segs,
                    heads,
                    causal,
                    probs,
                } => {
                    self.attention_backward(
                        &mut grads,
                        &g,
                        (*q, *k, *v),
                        segs,
                        *heads,
                        *causal,
                        probs,
                    );
                }
                Op::Mask { x, mask } => {
                    let gx = self.grad_slot(&mut grads, *x);
                    for ((o, &gi), &m) in gx.data.iter_mut().zip(&g.data).zip(mask) {
                        *o += gi * m;
                    }
                }
                Op::LogProbAt {
                    logits,
                    targets,
                    probs,
                } => {
                    let gl = self.grad_slot(&mut grads, *logits);
                    for (i, &t) in targets.iter().enumerate() {
                        let gi = g.data[i];
                        let row = gl.row_mut(i);
                        for (o, &p) in row.iter_mut().zip(probs.row(i)) {
                            *o -= gi * p;
                        }
                        row[t as usize] += gi;
                    }
                }
                Op::Sum(a) => {
                    let s = g.data[0];
                    for o in &mut self.grad_slot(&mut grads, *a).data {
                        *o += s;
                    }
                }
                Op::Scale(a, s) => {
                    let ga = self.grad_slot(&mut grads, *a);
                    for (o, &gi) in ga.data.iter_mut().zip(&g.data) {
                        *o += gi * *s;
                    }
                }
            }
        }
        for (pg, p) in param_grads.iter_mut().zip(self.params) {
            if pg.is_empty() {
                *pg = Mat::zeros(p.rows, p.cols);
            }
        }
        param_grads
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Mat<T>>], v: Var) -> &'g mut Mat<T> {
        let (r, c) = self.value(v).shape();
        grads[v.0].get_or_insert_with(|| Mat::zeros(r, c))
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        grads: &mut [Option<Mat<T>>],
        g: &Mat<T>,
        (q, k, v): (Var, Var, Var),
        segs: &[AttnSeg],
        heads: usize,
        causal: bool,
        probs: &[T],
    ) {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.cols;
        let dh = d / heads;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut gq = Mat::zeros(qm.rows, d);
        let mut gk = Mat::zeros(km.rows, d);
        let mut gv = Mat::zeros(vm.rows, d);
        let mut dp = Vec::new();
        let mut cursor = 0;
        for s in segs {
            for h in 0..heads {
                let c0 = h * dh;
                for i in 0..s.q_len {
                    let visible = if causal { i + 1 } else { s.k_len };
                    let p = &probs[cursor..cursor + visible];
                    cursor += visible;
                    let go = &g.row(s.q_off + i)[c0..c0 + dh];
                    dp.clear();
                    for (j, &pj) in p.iter().enumerate() {
                        let row = s.k_off + j;
                        dp.push(dot(go, &vm.row(row)[c0..c0 + dh]));
                        for (o, &x) in gv.row_mut(row)[c0..c0 + dh].iter_mut().zip(go) {
                            *o += pj * x;
                        }
                    }
                    let inner: T = p.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                    let qi = &qm.row(s.q_off + i)[c0..c0 + dh];
                    for (j, &pj) in p.iter().enumerate() {
                        let ds = pj * (dp[j] - inner) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        let row = s.k_off + j;
                        let kj = &km.row(row)[c0..c0 + dh];
                        for (o, &x) in gq.row_mut(s.q_off + i)[c0..c0 + dh].iter_mut().zip(kj) {
                            *o += ds * x;
                        }
                        for (o, &x) in gk.row_mut(row)[c0..c0 + dh].iter_mut().zip(qi) {
                            *o += ds * x;
                        }
                    }
                }
            }
        }
        self.grad_slot(grads, q).add_assign(&gq);
        self.grad_slot(grads, k).add_assign(&gk);
        self.grad_slot(grads, v).add_assign(&gv);
    }
}

pub(crate) fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub(crate) fn softmax_in_place<T: Float>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Central differences of `f` at every parameter coordinate.
    fn check(params: Vec<Mat<f64>>, f: impl Fn(&mut Graph<f64>) -> Var) {
        let analytic = {
            let mut g = Graph::new(&params);
            let out = f(&mut g);
            g.backward(out)
        };
        let eval = |ps: &[Mat<f64>]| {
            let mut g = Graph::new(ps);
            let out = f(&mut g);
            g.scalar(out)
        };
        let h = 1e-6;
        for p in 0..params.len() {
            for i in 0..params[p].len() {
                let mut plus = params.clone();
                plus[p].data[i] += h;
                let mut minus = params.clone();
                minus[p].data[i] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = analytic[p].data[i];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "param {p}[{i}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn matmul_variants_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![
            random(&mut rng, 3, 4),
            random(&mut rng, 4, 2),
            random(&mut rng, 1, 2),
            random(&mut rng, 3, 2),
        ];
        check(params, |g| {
            let (a, b, r, c) = (g.param(0), g.param(1), g.param(2), g.param(3));
            let ab = g.matmul(a, b);
            let abr = g.add_row(ab, r);
            let t = g.matmul_t(c, true, abr, false); // 2x2
            let u = g.matmul_t(t, false, b, true); // 2x4
            let w = g.matmul_t(a, false, u, true); // 3x2
            let x = g.add(w, c);
            let y = g.gelu(x);
            let s = g.sum(y);
            g.scale(s, 0.5)
        });
    }

    #[test]
    fn layer_norm_and_gather() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = vec![
            random(&mut rng, 5, 6),
            random(&mut rng, 1, 6),
            random(&mut rng, 1, 6),
            random(&mut rng, 6, 1),
        ];
        check(params, |g| {
            let t = g.param(0);
            let x = g.gather(t, vec![3, 0, 3, 4]);
            let (gain, bias) = (g.param(1), g.param(2));
            let y = g.layer_norm(x, gain, bias);
            let w = g.param(3);
            let z = g.matmul(y, w);
            let z = g.gelu(z);
            g.sum(z)
        });
    }

    #[test]
    fn attention_and_log_probs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = vec![
            random(&mut rng, 5, 8),
            random(&mut rng, 3, 8),
            random(&mut rng, 8, 8),
            random(&mut rng, 8, 7),
        ];
        for causal in [false, true] {
            check(params.clone(), |g| {
                let (x, y, w, o) = (g.param(0), g.param(1), g.param(2), g.param(3));
                let k = g.matmul(y, w);
                let segs = if causal {
                    vec![AttnSeg {
                        q_off: 0,
                        q_len: 3,
                        k_off: 0,
                        k_len: 3,
                    }]
                } else {
                    vec![
                        AttnSeg {
                            q_off: 0,
                            q_len: 2,
                            k_off: 0,
                            k_len: 1,
                        },
                        AttnSeg {
                            q_off: 2,
                            q_len: 3,
                            k_off: 1,
                            k_len: 2,
                        },
                    ]
                };
                let q = if causal {
                    g.gather(x, vec![0, 1, 2])
                } else {
                    x
                };
                let a = g.attention(q, k, y, segs, 2, causal);
                let logits = g.matmul(a, o);
                let rows = g.value(logits).rows;
                let lp = g.log_prob_at(logits, (0..rows as u32).map(|i| i % 7).collect());
                g.sum(lp)
            });
        }
    }

    #[test]
    fn mask_scales_gradient() {
        let params = vec![Mat::from_vec(1, 3, vec![1.0, 2.0, 3.0])];
        let mut g = Graph::new(&params);
        let p = g.param(0);
        let m = g.mask(p, vec![0.0, 2.0, 1.0]);
        let s = g.sum(m);
        assert_eq!(g.scalar(s), 7.0);
        assert_eq!(g.backward(s)[0].data, vec![0.0, 2.0, 1.0]);
    }

    #[test]
    fn untouched_params_get_zero_gradient() {
        let params = vec![Mat::filled(2, 2, 1.0), Mat::filled(3, 1, 5.0)];
        let mut g = Graph::new(&params);
        let p = g.param(0);
        let s = g.sum(p);
        let grads = g.backward(s);
        assert_eq!(grads[1], Mat::zeros(3, 1));
        assert_eq!(grads[0], Mat::filled(2, 2, 1.0));
    }
}
