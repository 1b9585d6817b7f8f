//! Symmetric banded matrices and their LDLᵀ factorization.

/// Symmetric matrix storing the lower band `0 <= i - j <= bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bw = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        for i in 0..n {
            m.data[i] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        (d <= self.bw).then(|| i * (self.bw + 1) + d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Add `v` to entries (i, j) and (j, i).
    ///
    /// # Panics
    /// If the entry lies outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j).expect("entry outside band");
        self.data[k] += v;
    }

    /// Same matrix with a wider band.
    pub fn widened(&self, bandwidth: usize) -> SymBand {
        if bandwidth <= self.bw {
            return self.clone();
        }
        let mut out = SymBand::zeros(self.n, bandwidth);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                out.add(i, j, self.get(i, j));
            }
        }
        out
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let w = self.bw + 1;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &self.data[i * w..(i + 1) * w];
            out[i] += row[0] * x[i];
            for d in 1..=self.bw.min(i) {
                let a = row[d];
                let j = i - d;
                out[i] += a * x[j];
                out[j] += a * x[i];
            }
        }
    }

    /// ½xᵀMx.
    pub fn half_quad(&self, x: &[f64]) -> f64 {
        let mut tmp = vec![0.0; self.n];
        self.matvec(x, &mut tmp);
        0.5 * x.iter().zip(&tmp).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Factorize as LDLᵀ without pivoting. Returns `None` if a pivot is not
    /// strictly positive (the matrix is not positive definite).
    pub fn ldl(&self) -> Option<BandLdl> {
        let f = self.ldl_raw(0.0);
        f.d.iter().all(|&d| d > 0.0).then_some(f)
    }

    /// Smallest pivot of a semidefinite-tolerant LDLᵀ.
    ///
    /// Pivots with magnitude below `zero_tol` are treated as exact zeros and
    /// their column is dropped; this is how PSD matrices with a null space
    /// are factored. A PSD matrix yields a result ≥ −`zero_tol`.
    pub fn min_pivot(&self, zero_tol: f64) -> f64 {
        let f = self.ldl_raw(zero_tol);
        f.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn ldl_raw(&self, zero_tol: f64) -> BandLdl {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = self.get(j, j);
            for k in j.saturating_sub(bw)..j {
                let ljk = l[j * w + (j - k)];
                dj -= ljk * ljk * d[k];
            }
            d[j] = dj;
            let drop = dj.abs() <= zero_tol && zero_tol > 0.0;
            for i in (j + 1)..n.min(j + bw + 1) {
                if drop || dj == 0.0 {
                    l[i * w + (i - j)] = 0.0;
                    continue;
                }
                let mut v = self.get(i, j);
                for k in i.saturating_sub(bw)..j {
                    v -= l[i * w + (i - k)] * l[j * w + (j - k)] * d[k];
                }
                l[i * w + (i - j)] = v / dj;
            }
            if drop {
                d[j] = 0.0;
            }
        }
        BandLdl { n, bw, l, d }
    }
}

#[derive(Debug, Clone)]
pub struct BandLdl {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdl {
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Solve in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let w = self.bw + 1;
        for i in 0..n {
            let mut v = b[i];
            for k in i.saturating_sub(self.bw)..i {
                v -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = v;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n.min(i + self.bw + 1) {
                v -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = v;
        }
    }
}

/// Dense LDLᵀ for symmetric quasi-definite systems (no pivoting).
pub struct DenseLdl {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl DenseLdl {
    /// `a` is row-major n×n; only the lower triangle is read.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = a[j * n + j];
            for k in 0..j {
                let ljk = l[j * n + k];
                dj -= ljk * ljk * d[k];
            }
            if dj == 0.0 || !dj.is_finite() {
                return None;
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut v = a[i * n + j];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k] * d[k];
                }
                l[i * n + j] = v / dj;
            }
        }
        Some(Self { n, l, d })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[i * n + k] * b[k];
            }
            b[i] = v;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self.l[k * n + i] * b[k];
            }
            b[i] = v;
        }
    }
}
