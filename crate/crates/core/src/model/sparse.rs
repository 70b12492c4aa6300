/// Real symmetric matrix in compressed-row form, both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                cols.push(c);
                values.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|r| self.get(r, r)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    /// Dense column-major copy (`dim * dim` entries).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim * self.dim];
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                dense[r + c * self.dim] = v;
            }
        }
        dense
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_duplicates_and_mirrors() {
        let m = SparseSymmetric::from_rows(vec![
            vec![(0, 1.0), (1, 2.0), (1, 0.5)],
            vec![(0, 2.5), (1, -1.0)],
        ]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 1), 2.5);
        assert!(m.is_symmetric());
        assert_eq!(m.to_dense(), vec![1.0, 2.5, 2.5, -1.0]);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.5, 1.5]);
        assert_eq!(m.trace(), 0.0);
        assert_eq!(m.frobenius_sq(), 1.0 + 2.0 * 6.25 + 1.0);
    }
}
