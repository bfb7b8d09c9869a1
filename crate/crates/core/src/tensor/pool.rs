use super::matrix::DenseMatrix;
use super::{dim_mismatch, TensorError, TreeBatch};

/// Per-tree, per-channel maximum over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolResult {
    /// `tree_count × channels`.
    pub pooled: DenseMatrix,
    /// Winning node row for each (tree, channel), row-major like `pooled`.
    pub argmax: Vec<usize>,
}

/// Ties go to the earliest node in preorder.
pub fn dynamic_max_pool(topo: &TreeBatch, x: &DenseMatrix) -> Result<PoolResult, TensorError> {
    if x.rows != topo.node_count() {
        return Err(dim_mismatch("pool node count", topo.node_count(), x.rows));
    }
    let d = x.cols;
    let mut pooled = DenseMatrix::zeros(topo.tree_count(), d);
    let mut argmax = vec![0usize; topo.tree_count() * d];
    for (t, seg) in topo.segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(TensorError::EmptyTree);
        }
        let best = &mut argmax[t * d..(t + 1) * d];
        best.iter_mut().for_each(|b| *b = seg.start);
        let out = pooled.row_mut(t);
        out.copy_from_slice(x.row(seg.start));
        for r in seg.clone().skip(1) {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v > out[c] {
                    out[c] = v;
                    best[c] = r;
                }
            }
        }
    }
    Ok(PoolResult { pooled, argmax })
}

/// Routes each channel's gradient to the node that won it.
pub fn dynamic_max_pool_backward(
    node_count: usize,
    pool: &PoolResult,
    grad: &DenseMatrix,
) -> Result<DenseMatrix, TensorError> {
    if (grad.rows, grad.cols) != (pool.pooled.rows, pool.pooled.cols) {
        return Err(dim_mismatch(
            "pool upstream gradient",
            format!("{}x{}", pool.pooled.rows, pool.pooled.cols),
            format!("{}x{}", grad.rows, grad.cols),
        ));
    }
    let d = grad.cols;
    let mut dx = DenseMatrix::zeros(node_count, d);
    for (i, &node) in pool.argmax.iter().enumerate() {
        let c = i % d;
        dx.data[node * d + c] += grad.data[i];
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> TreeBatch {
        TreeBatch {
            left: (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect(),
            right: vec![None; n],
            segments: vec![0..n],
        }
    }

    #[test]
    fn single_node_and_pair() {
        let x = DenseMatrix::from_vec(1, 2, vec![4.0, -1.0]);
        assert_eq!(dynamic_max_pool(&chain(1), &x).unwrap().pooled.data, x.data);
        let x = DenseMatrix::from_vec(2, 2, vec![1.0, 5.0, 3.0, 2.0]);
        let p = dynamic_max_pool(&chain(2), &x).unwrap();
        assert_eq!(p.pooled.data, vec![3.0, 5.0]);
        assert_eq!(p.argmax, vec![1, 0]);
    }

    #[test]
    fn ties_go_to_first_in_preorder() {
        let x = DenseMatrix::from_vec(3, 1, vec![2.0, 2.0, 2.0]);
        let p = dynamic_max_pool(&chain(3), &x).unwrap();
        assert_eq!(p.argmax, vec![0]);
        let g = DenseMatrix::from_vec(1, 1, vec![1.5]);
        assert_eq!(dynamic_max_pool_backward(3, &p, &g).unwrap().data, vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn empty_tree_is_rejected() {
        let topo = TreeBatch { left: vec![], right: vec![], segments: vec![0..0] };
        assert_eq!(dynamic_max_pool(&topo, &DenseMatrix::zeros(0, 3)), Err(TensorError::EmptyTree));
    }

    #[test]
    fn matches_flatten_and_max_over_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let topo = TreeBatch {
            left: vec![Some(1), None, None, Some(4), None],
            right: vec![Some(2), None, None, None, None],
            segments: vec![0..3, 3..5],
        };
        let x = DenseMatrix::from_fn(5, 6, |_, _| rng.gen_range(-5.0..5.0));
        let p = dynamic_max_pool(&topo, &x).unwrap();
        for (t, seg) in topo.segments.iter().enumerate() {
            for c in 0..6 {
                let want = seg.clone().map(|r| x.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(p.pooled.get(t, c), want);
                assert_eq!(x.get(p.argmax[t * 6 + c], c), want);
            }
        }
        let g = DenseMatrix::from_fn(2, 6, |_, _| 1.0);
        let dx = dynamic_max_pool_backward(5, &p, &g).unwrap();
        assert_eq!(dx.data.iter().sum::<f64>(), 12.0);
    }
}
