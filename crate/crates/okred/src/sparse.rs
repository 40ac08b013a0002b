//! Minimal symmetric sparse matrix storage shared by the geometry and
//! operator assembly stages.

/// Compressed sparse row matrix (square, explicitly stored entries only).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from unordered triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(u32, u32, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { n, row_ptr, cols, vals }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.cols[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c as usize];
            }
            y[r] = acc;
        }
    }

    pub fn mul_vec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                acc += x[r] * v * y[c as usize];
            }
        }
        acc
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            self.row(r).map(move |(c, v)| (r as u32, c, v))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_assembly_sums_duplicates() {
        let mut t = vec![
            (0u32, 1u32, 2.0),
            (1, 0, 2.0),
            (0, 1, 0.5),
            (1, 1, 1.0),
            (2, 2, 3.0),
        ];
        let m = CsrMatrix::from_triplets(3, &mut t);
        assert_eq!(m.nnz(), 4);
        let y = m.mul_vec_alloc(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![2.5, 3.0, 3.0]);
        assert_eq!(m.bilinear(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 2.5);
    }

    #[test]
    fn empty_rows_are_handled() {
        let mut t = vec![(2u32, 2u32, 5.0)];
        let m = CsrMatrix::from_triplets(4, &mut t);
        let y = m.mul_vec_alloc(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(y, vec![0.0, 0.0, 5.0, 0.0]);
    }
}
