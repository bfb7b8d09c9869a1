use super::matrix::{gemm, DenseMatrix};
use super::{dim_mismatch, TensorError, TreeBatch};
use serde::{Deserialize, Serialize};

/// Tree convolution with separate filters for a node, its left child and its
/// right child:
///
/// ```text
/// out(v) = W·x(v) + W_l·x(left(v)) + W_r·x(right(v)) + b
/// ```
///
/// Missing children contribute zero. No activation is applied here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConvLayer {
    pub w_self: DenseMatrix,
    pub w_left: DenseMatrix,
    pub w_right: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConvGrads {
    pub w_self: DenseMatrix,
    pub w_left: DenseMatrix,
    pub w_right: DenseMatrix,
    pub bias: Vec<f64>,
}

impl TreeConvLayer {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        TreeConvLayer {
            w_self: DenseMatrix::zeros(d_out, d_in),
            w_left: DenseMatrix::zeros(d_out, d_in),
            w_right: DenseMatrix::zeros(d_out, d_in),
            bias: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_self.cols
    }

    pub fn d_out(&self) -> usize {
        self.w_self.rows
    }

    pub fn param_count(&self) -> usize {
        3 * self.d_in() * self.d_out() + self.d_out()
    }

    pub fn check_shape(&self) -> Result<(), TensorError> {
        let (r, c) = (self.w_self.rows, self.w_self.cols);
        for m in [&self.w_left, &self.w_right] {
            if (m.rows, m.cols) != (r, c) {
                return Err(dim_mismatch("tree_conv", format!("{r}x{c} filters"), format!("{}x{}", m.rows, m.cols)));
            }
        }
        if self.bias.len() != r {
            return Err(dim_mismatch("tree_conv bias", r, self.bias.len()));
        }
        Ok(())
    }

    fn check_input(&self, topo: &TreeBatch, x: &DenseMatrix) -> Result<(), TensorError> {
        self.check_shape()?;
        if x.cols != self.d_in() {
            return Err(dim_mismatch("tree_conv input width", self.d_in(), x.cols));
        }
        if x.rows != topo.node_count() {
            return Err(dim_mismatch("tree_conv node count", topo.node_count(), x.rows));
        }
        Ok(())
    }

    pub fn forward(&self, topo: &TreeBatch, x: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.check_input(topo, x)?;
        let (n, d_in, d_out) = (x.rows, self.d_in(), self.d_out());
        let mut out = DenseMatrix::zeros(n, d_out);
        for r in 0..n {
            out.row_mut(r).copy_from_slice(&self.bias);
        }
        let xl = x.gather_rows(&topo.left);
        let xr = x.gather_rows(&topo.right);
        for (inp, w) in [(x, &self.w_self), (&xl, &self.w_left), (&xr, &self.w_right)] {
            gemm(n, d_in, d_out, &inp.data, false, &w.data, true, 1.0, &mut out.data);
        }
        Ok(out)
    }

    /// Gradients of the forward map given the upstream gradient `grad_out`.
    /// The input gradient of a node sums its contributions as itself, as a
    /// left child and as a right child.
    pub fn backward(
        &self,
        topo: &TreeBatch,
        x: &DenseMatrix,
        grad_out: &DenseMatrix,
    ) -> Result<(TreeConvGrads, DenseMatrix), TensorError> {
        self.check_input(topo, x)?;
        if (grad_out.rows, grad_out.cols) != (x.rows, self.d_out()) {
            return Err(dim_mismatch(
                "tree_conv upstream gradient",
                format!("{}x{}", x.rows, self.d_out()),
                format!("{}x{}", grad_out.rows, grad_out.cols),
            ));
        }
        let (n, d_in, d_out) = (x.rows, self.d_in(), self.d_out());
        let xl = x.gather_rows(&topo.left);
        let xr = x.gather_rows(&topo.right);
        let mut grads = TreeConvGrads {
            w_self: DenseMatrix::zeros(d_out, d_in),
            w_left: DenseMatrix::zeros(d_out, d_in),
            w_right: DenseMatrix::zeros(d_out, d_in),
            bias: grad_out.col_sums(),
        };
        for (inp, gw) in [(x, &mut grads.w_self), (&xl, &mut grads.w_left), (&xr, &mut grads.w_right)] {
            gemm(d_out, n, d_in, &grad_out.data, true, &inp.data, false, 0.0, &mut gw.data);
        }
        let mut dx = DenseMatrix::zeros(n, d_in);
        gemm(n, d_out, d_in, &grad_out.data, false, &self.w_self.data, false, 0.0, &mut dx.data);
        let mut tmp = DenseMatrix::zeros(n, d_in);
        gemm(n, d_out, d_in, &grad_out.data, false, &self.w_left.data, false, 0.0, &mut tmp.data);
        dx.scatter_add_rows(&topo.left, &tmp);
        gemm(n, d_out, d_in, &grad_out.data, false, &self.w_right.data, false, 0.0, &mut tmp.data);
        dx.scatter_add_rows(&topo.right, &tmp);
        Ok((grads, dx))
    }
}

#[cfg(test)]
mod tests {
    use super::super::gradcheck::finite_diff_check;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // root(0) with left 1 and right 2; node 1 has a left child 3.
    fn topo4() -> TreeBatch {
        TreeBatch {
            left: vec![Some(1), Some(3), None, None],
            right: vec![Some(2), None, None, None],
            segments: vec![0..4],
        }
    }

    fn random_layer(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> TreeConvLayer {
        let mut m = || DenseMatrix::from_fn(d_out, d_in, |_, _| rng.gen_range(-1.0..1.0));
        let (a, b, c) = (m(), m(), m());
        TreeConvLayer { w_self: a, w_left: b, w_right: c, bias: (0..d_out).map(|_| rng.gen_range(-1.0..1.0)).collect() }
    }

    /// Per-node evaluation with explicit loops, independent of gemm.
    fn oracle(layer: &TreeConvLayer, topo: &TreeBatch, x: &DenseMatrix) -> DenseMatrix {
        let child = |c: Option<usize>, j: usize| c.map_or(0.0, |c| x.get(c, j));
        DenseMatrix::from_fn(x.rows, layer.d_out(), |v, o| {
            let mut s = layer.bias[o];
            for j in 0..layer.d_in() {
                s += layer.w_self.get(o, j) * x.get(v, j)
                    + layer.w_left.get(o, j) * child(topo.left[v], j)
                    + layer.w_right.get(o, j) * child(topo.right[v], j);
            }
            s
        })
    }

    #[test]
    fn zero_layer_gives_zero_tree() {
        let topo = topo4();
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i + j) as f64);
        let out = TreeConvLayer::zeros(3, 5).forward(&topo, &x).unwrap();
        assert_eq!((out.rows, out.cols), (4, 5));
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_filter_on_single_node() {
        let topo = TreeBatch { left: vec![None], right: vec![None], segments: vec![0..1] };
        let x = DenseMatrix::from_vec(1, 3, vec![0.5, -2.0, 7.0]);
        // pad: d_out 4 > d_in 3
        let mut layer = TreeConvLayer::zeros(3, 4);
        for i in 0..3 {
            layer.w_self.set(i, i, 1.0);
        }
        assert_eq!(layer.forward(&topo, &x).unwrap().data, vec![0.5, -2.0, 7.0, 0.0]);
        // truncate: d_out 2 < d_in 3
        let mut layer = TreeConvLayer::zeros(3, 2);
        for i in 0..2 {
            layer.w_self.set(i, i, 1.0);
        }
        assert_eq!(layer.forward(&topo, &x).unwrap().data, vec![0.5, -2.0]);
    }

    #[test]
    fn matches_per_node_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let topo =
            TreeBatch { left: vec![Some(1), None, None], right: vec![Some(2), None, None], segments: vec![0..3] };
        let layer = random_layer(2, 2, &mut rng);
        let x = DenseMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let got = layer.forward(&topo, &x).unwrap();
        let want = oracle(&layer, &topo, &x);
        for (g, w) in got.data.iter().zip(&want.data) {
            assert!((g - w).abs() < 1e-14);
        }
        // structure preserved
        assert_eq!(got.rows, x.rows);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let topo = topo4();
        let layer = TreeConvLayer::zeros(3, 2);
        let x = DenseMatrix::zeros(4, 2);
        assert!(matches!(layer.forward(&topo, &x), Err(TensorError::DimensionMismatch { .. })));
        let x = DenseMatrix::zeros(3, 3);
        assert!(layer.forward(&topo, &x).is_err());
        let g = DenseMatrix::zeros(4, 3);
        assert!(layer.backward(&topo, &DenseMatrix::zeros(4, 3), &g).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = random_layer(3, 2, &mut rng);
        let topo = topo4();
        let x = DenseMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
        let (g, dx) = layer.backward(&topo, &x, &DenseMatrix::zeros(4, 2)).unwrap();
        for m in [&g.w_self, &g.w_left, &g.w_right] {
            assert!(m.data.iter().all(|&v| v == 0.0));
        }
        assert!(g.bias.iter().all(|&v| v == 0.0));
        assert!(dx.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = random_layer(3, 2, &mut rng);
        let topo = TreeBatch { left: vec![None], right: vec![None], segments: vec![0..1] };
        let x = DenseMatrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let g = DenseMatrix::from_vec(1, 2, vec![0.3, -4.0]);
        let (grads, _) = layer.backward(&topo, &x, &g).unwrap();
        let outer = DenseMatrix::from_fn(2, 3, |o, j| g.get(0, o) * x.get(0, j));
        assert_eq!(grads.w_self, outer);
        assert_eq!(grads.bias, g.data);
        assert!(grads.w_left.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d_in, d_out) = (3, 4);
        let layer = random_layer(d_in, d_out, &mut rng);
        let topo = topo4();
        let x = DenseMatrix::from_fn(4, d_in, |_, _| rng.gen_range(-1.0..1.0));
        let probe = DenseMatrix::from_fn(4, d_out, |_, _| rng.gen_range(-1.0..1.0));

        // Flatten [w_self, w_left, w_right, bias, x] into one parameter vector.
        let wlen = d_in * d_out;
        let mut flat = Vec::new();
        flat.extend(&layer.w_self.data);
        flat.extend(&layer.w_left.data);
        flat.extend(&layer.w_right.data);
        flat.extend(&layer.bias);
        flat.extend(&x.data);
        let unpack = |p: &[f64]| {
            let l = TreeConvLayer {
                w_self: DenseMatrix::from_vec(d_out, d_in, p[..wlen].to_vec()),
                w_left: DenseMatrix::from_vec(d_out, d_in, p[wlen..2 * wlen].to_vec()),
                w_right: DenseMatrix::from_vec(d_out, d_in, p[2 * wlen..3 * wlen].to_vec()),
                bias: p[3 * wlen..3 * wlen + d_out].to_vec(),
            };
            let x = DenseMatrix::from_vec(4, d_in, p[3 * wlen + d_out..].to_vec());
            (l, x)
        };
        let err = finite_diff_check(
            |p| {
                let (l, x) = unpack(p);
                let out = l.forward(&topo, &x).unwrap();
                let loss = out.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum();
                let (g, dx) = l.backward(&topo, &x, &probe).unwrap();
                let mut grad = Vec::new();
                grad.extend(g.w_self.data);
                grad.extend(g.w_left.data);
                grad.extend(g.w_right.data);
                grad.extend(g.bias);
                grad.extend(dx.data);
                (loss, grad)
            },
            &flat,
            1e-5,
        );
        assert!(err < 1e-6, "max relative error {err}");
    }
}
