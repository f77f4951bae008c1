//! LU factorization of simplex bases with product-form updates.
//!
//! The factorization runs on a dense work array with partial pivoting and
//! skips zero multipliers. Factors are then stored sparsely, so solves cost
//! time proportional to their nonzeros.

/// Basis position whose column has no usable pivot, and the rows still
/// without a pivot at that point.
#[derive(Debug, Clone, PartialEq)]
pub struct Singular {
    pub position: usize,
    pub rows: Vec<usize>,
}

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    /// Entries of the entering column other than `pos`.
    col: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct Factor {
    m: usize,
    /// `row_of[k]` is the original row pivoted at step `k`.
    row_of: Vec<usize>,
    /// Below-diagonal multipliers by column, in step coordinates.
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Above-diagonal entries by column, in step coordinates.
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
}

impl Factor {
    /// Factors the `m x m` matrix whose column `k` is written into the
    /// buffer by `column(k, buf)` as `(row, value)` pairs.
    pub fn new<F>(m: usize, mut column: F) -> Result<Factor, Singular>
    where
        F: FnMut(usize, &mut Vec<(usize, f64)>),
    {
        let mut w = vec![0.0; m * m];
        let mut buf = Vec::new();
        for k in 0..m {
            buf.clear();
            column(k, &mut buf);
            for &(i, v) in &buf {
                w[i * m + k] += v;
            }
        }
        let mut rows: Vec<usize> = (0..m).collect();
        let mut nz: Vec<usize> = Vec::with_capacity(m);
        for k in 0..m {
            let (mut p, mut best) = (k, 0.0);
            for i in k..m {
                let v = w[i * m + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < PIVOT_TOL {
                return Err(Singular { position: k, rows: rows[k..].to_vec() });
            }
            if p != k {
                for j in 0..m {
                    w.swap(k * m + j, p * m + j);
                }
                rows.swap(k, p);
            }
            let piv = w[k * m + k];
            nz.clear();
            nz.extend((k + 1..m).filter(|&j| w[k * m + j] != 0.0));
            for i in k + 1..m {
                let lik = w[i * m + k];
                if lik == 0.0 {
                    continue;
                }
                let l = lik / piv;
                w[i * m + k] = l;
                let (head, tail) = w.split_at_mut(i * m);
                let prow = &head[k * m..k * m + m];
                let irow = &mut tail[..m];
                for &j in &nz {
                    irow[j] -= l * prow[j];
                }
            }
        }
        let mut l_cols = vec![Vec::new(); m];
        let mut u_cols = vec![Vec::new(); m];
        let mut u_diag = vec![0.0; m];
        for i in 0..m {
            let row = &w[i * m..i * m + m];
            for (j, &v) in row.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                match i.cmp(&j) {
                    std::cmp::Ordering::Greater => l_cols[j].push((i, v)),
                    std::cmp::Ordering::Less => u_cols[j].push((i, v)),
                    std::cmp::Ordering::Equal => u_diag[j] = v,
                }
            }
        }
        Ok(Factor { m, row_of: rows, l_cols, u_cols, u_diag, etas: Vec::new() })
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = a` in place; `a` is indexed by row, the result by basis position.
    pub fn ftran(&self, a: &mut [f64]) {
        let m = self.m;
        let mut y: Vec<f64> = (0..m).map(|k| a[self.row_of[k]]).collect();
        for k in 0..m {
            let yk = y[k];
            if yk != 0.0 {
                for &(i, l) in &self.l_cols[k] {
                    y[i] -= l * yk;
                }
            }
        }
        for k in (0..m).rev() {
            let xk = y[k] / self.u_diag[k];
            y[k] = xk;
            if xk != 0.0 {
                for &(i, u) in &self.u_cols[k] {
                    y[i] -= u * xk;
                }
            }
        }
        for e in &self.etas {
            let xp = y[e.pos] / e.pivot;
            y[e.pos] = xp;
            if xp != 0.0 {
                for &(i, v) in &e.col {
                    y[i] -= v * xp;
                }
            }
        }
        a.copy_from_slice(&y);
    }

    /// Solves `yᵀ B = cᵀ` in place; `c` is indexed by basis position, the result by row.
    pub fn btran(&self, c: &mut [f64]) {
        let m = self.m;
        for e in self.etas.iter().rev() {
            let s: f64 = e.col.iter().map(|&(i, v)| c[i] * v).sum();
            c[e.pos] = (c[e.pos] - s) / e.pivot;
        }
        let mut w = vec![0.0; m];
        for k in 0..m {
            let s: f64 = self.u_cols[k].iter().map(|&(i, u)| u * w[i]).sum();
            w[k] = (c[k] - s) / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let s: f64 = self.l_cols[k].iter().map(|&(i, l)| l * w[i]).sum();
            w[k] -= s;
        }
        for k in 0..m {
            c[self.row_of[k]] = w[k];
        }
    }

    /// Records that basis position `pos` was replaced by a column whose
    /// FTRAN'd image is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let col = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != pos && v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta { pos, pivot: alpha[pos], col });
    }
}
