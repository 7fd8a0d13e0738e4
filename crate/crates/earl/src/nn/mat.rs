//! Row-major `f64` matrices and the few BLAS-1/2 kernels the crate needs.
//!
//! These run inside the training inner loop, so the dot product is unrolled
//! into independent accumulators and the row-oriented kernels stay
//! contiguous for the auto-vectorizer.

/// Dot product with four-way accumulator splitting.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot of mismatched lengths");
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    let (ah, at) = a.split_at(chunks);
    let (bh, bt) = b.split_at(chunks);
    for (ca, cb) in ah.chunks_exact(4).zip(bh.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in at.iter().zip(bt) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`.
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    assert_eq!(y.len(), x.len(), "axpy of mismatched lengths");
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds from a row-major closure; used by weight init and tests.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `out = W x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(out.len(), self.rows, "matvec output length");
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += Wᵀ g`, accumulated row by row so access stays contiguous.
    pub fn matvec_t_acc(&self, g: &[f64], out: &mut [f64]) {
        assert_eq!(g.len(), self.rows, "transposed matvec input length");
        assert_eq!(out.len(), self.cols, "transposed matvec output length");
        for (r, gr) in g.iter().enumerate() {
            if *gr != 0.0 {
                axpy(out, *gr, self.row(r));
            }
        }
    }

    /// `W += scale * g xᵀ` (outer-product accumulate).
    pub fn add_outer(&mut self, g: &[f64], x: &[f64], scale: f64) {
        assert_eq!(g.len(), self.rows, "outer row length");
        assert_eq!(x.len(), self.cols, "outer col length");
        for (r, gr) in g.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            axpy(row, scale * gr, x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_matches_hand_computation() {
        let w = Mat::from_fn(2, 3, |r, c| (r * 3 + c) as f64); // [[0,1,2],[3,4,5]]
        assert_eq!(w.matvec(&[1.0, 2.0, 3.0]), vec![8.0, 26.0]);
    }

    #[test]
    fn transposed_matvec_accumulates() {
        let w = Mat::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let mut out = vec![1.0, 0.0, 0.0];
        w.matvec_t_acc(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![4.0, 5.0, 7.0]);
    }

    #[test]
    fn outer_product_accumulates_scaled() {
        let mut w = Mat::zeros(2, 2);
        w.add_outer(&[1.0, 2.0], &[3.0, 4.0], 0.5);
        assert_eq!(w.row(0), &[1.5, 2.0]);
        assert_eq!(w.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn dot_handles_tails_past_the_unroll() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..7).map(|i| (i + 1) as f64).collect();
        // sum i*(i+1) for i in 0..7
        assert_eq!(dot(&a, &b), 112.0);
    }
}
