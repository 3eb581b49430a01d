//! Product-form basis inverse: `B^-1 = E_k^-1 ... E_1^-1`, each eta stored
//! sparsely as the transformed entering column and its pivot row.

pub(crate) const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub(crate) struct EtaFile {
    m: usize,
    rows: Vec<usize>,
    pivots: Vec<f64>,
    starts: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl EtaFile {
    pub fn new(m: usize) -> Self {
        Self { m, starts: vec![0], ..Default::default() }
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.pivots.clear();
        self.starts.clear();
        self.starts.push(0);
        self.idx.clear();
        self.val.clear();
    }

    /// Appends the eta for a pivot on `row` with transformed column `alpha` (dense).
    pub fn push(&mut self, row: usize, alpha: &[f64]) {
        debug_assert_eq!(alpha.len(), self.m);
        self.rows.push(row);
        self.pivots.push(alpha[row]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != row && a != 0.0 {
                self.idx.push(i);
                self.val.push(a);
            }
        }
        self.starts.push(self.idx.len());
    }

    /// Appends an eta with no off-pivot entries.
    pub fn push_unit(&mut self, row: usize, pivot: f64) {
        self.rows.push(row);
        self.pivots.push(pivot);
        self.starts.push(self.idx.len());
    }

    /// `v <- B^-1 v`.
    pub fn ftran(&self, v: &mut [f64]) {
        for k in 0..self.rows.len() {
            let r = self.rows[k];
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            let vr = vr / self.pivots[k];
            v[r] = vr;
            for p in self.starts[k]..self.starts[k + 1] {
                v[self.idx[p]] -= self.val[p] * vr;
            }
        }
    }

    /// `w^T <- w^T B^-1`.
    pub fn btran(&self, w: &mut [f64]) {
        for k in (0..self.rows.len()).rev() {
            let r = self.rows[k];
            let mut acc = w[r];
            for p in self.starts[k]..self.starts[k + 1] {
                acc -= self.val[p] * w[self.idx[p]];
            }
            w[r] = acc / self.pivots[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense reference: solve B x = b by Gaussian elimination.
    fn solve_dense(b: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut a: Vec<Vec<f64>> = b.to_vec();
        let mut x = rhs.to_vec();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            x.swap(c, p);
            for i in (c + 1)..n {
                let f = a[i][c] / a[c][c];
                for k in c..n {
                    a[i][k] -= f * a[c][k];
                }
                x[i] -= f * x[c];
            }
        }
        for c in (0..n).rev() {
            for k in (c + 1)..n {
                x[c] -= a[c][k] * x[k];
            }
            x[c] /= a[c][c];
        }
        x
    }

    #[test]
    fn ftran_btran_match_dense_solve() {
        // B columns: pivot in col0 at row 1, col1 at row 0, col2 at row 2.
        let cols = [vec![1.0, 2.0, 0.0], vec![3.0, 1.0, 1.0], vec![0.0, 1.0, 4.0]];
        let rows_for = [1usize, 0, 2];
        let mut eta = EtaFile::new(3);
        for (c, &r) in cols.iter().zip(&rows_for) {
            let mut a = c.clone();
            eta.ftran(&mut a);
            eta.push(r, &a);
        }
        // Basis position r holds column with pivot row r.
        let mut bmat = vec![vec![0.0; 3]; 3];
        for (c, &r) in cols.iter().zip(&rows_for) {
            for i in 0..3 {
                bmat[i][r] = c[i];
            }
        }
        let rhs = [1.0, -2.0, 0.5];
        let mut v = rhs.to_vec();
        eta.ftran(&mut v);
        let want = solve_dense(&bmat, &rhs);
        for i in 0..3 {
            assert!((v[i] - want[i]).abs() < 1e-12);
        }
        // btran: w^T B^-1 = c^T  <=>  B^T w' = c
        let bt: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| bmat[j][i]).collect()).collect();
        let mut w = rhs.to_vec();
        eta.btran(&mut w);
        let want = solve_dense(&bt, &rhs);
        for i in 0..3 {
            assert!((w[i] - want[i]).abs() < 1e-12);
        }
    }
}
