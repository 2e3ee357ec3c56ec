//! Dense vector kernels shared by the association and projection paths.
//!
//! Every reduction here has a fixed evaluation order, so results are
//! bit-identical across runs and thread counts.

const PAIRWISE_BLOCK: usize = 8;

/// Dot product with four independent accumulators.
///
/// The accumulator split lets the compiler vectorize the loop; the final
/// combination order is fixed.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (x, y) in chunks_a.zip(chunks_b) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sum of the rows of a row-major matrix by pairwise (cascade) summation.
pub fn pairwise_row_sum(data: &[f64], dim: usize) -> Vec<f64> {
    let rows = data.len().checked_div(dim).unwrap_or(0);
    let mut out = vec![0.0; dim];
    if rows > 0 {
        accumulate_rows(data, dim, 0, rows, &mut out);
    }
    out
}

fn accumulate_rows(data: &[f64], dim: usize, start: usize, end: usize, out: &mut [f64]) {
    let count = end - start;
    if count <= PAIRWISE_BLOCK {
        for row in data[start * dim..end * dim].chunks_exact(dim) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        return;
    }
    let mid = start + count / 2;
    let mut right = vec![0.0; dim];
    accumulate_rows(data, dim, start, mid, out);
    accumulate_rows(data, dim, mid, end, &mut right);
    for (o, r) in out.iter_mut().zip(&right) {
        *o += r;
    }
}

/// Pairwise sum of a scalar slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let (left, right) = values.split_at(values.len() / 2);
    pairwise_sum(left) + pairwise_sum(right)
}
