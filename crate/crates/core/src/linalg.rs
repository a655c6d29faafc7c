//! Dense complex matrices and the decompositions the rest of the crate needs.
//!
//! `CMat` is a plain row-major `Vec<Complex<f64>>` wrapper sized for
//! system-scale objects (N x N operators, N^2 x N^2 superoperators). Heavy
//! factorizations are delegated to `faer`; everything else is written
//! directly so the vectorization conventions stay in one place.

use faer::{Mat, Side};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![ZERO; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from nested real/imag arrays (the CLI wire format).
    pub fn from_re_im(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let n = re.len();
        if im.len() != n || re.iter().chain(im.iter()).any(|r| r.len() != n) {
            return Err(Error::Config(
                "matrix real/imag arrays must be square and equal-sized".into(),
            ));
        }
        Ok(Self::from_fn(n, n, |i, j| C64::new(re[i][j], im[i][j])))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)].conj())
    }

    pub fn hermitize(&self) -> Self {
        assert_eq!(self.nrows, self.ncols);
        Self::from_fn(self.nrows, self.ncols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let (n, k, m) = (self.nrows, self.ncols, other.ncols);
        let mut out = Self::zeros(n, m);
        for i in 0..n {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == ZERO {
                    continue;
                }
                let row_b = &other.data[p * m..(p + 1) * m];
                let row_o = &mut out.data[i * m..(i + 1) * m];
                for j in 0..m {
                    row_o[j] += a * row_b[j];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.ncols, v.len());
        let mut out = vec![ZERO; self.nrows];
        for i in 0..self.nrows {
            let row = &self.data[i * self.ncols..(i + 1) * self.ncols];
            let mut acc = ZERO;
            for (a, x) in row.iter().zip(v) {
                acc += a * x;
            }
            out[i] = acc;
        }
        out
    }

    pub fn trace(&self) -> C64 {
        assert_eq!(self.nrows, self.ncols);
        (0..self.nrows).map(|i| self[(i, i)]).sum()
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max elementwise deviation from hermiticity.
    pub fn herm_dev(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut dev: f64 = 0.0;
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev / 2.0
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[C64]) {
        assert_eq!(v.len(), self.nrows);
        for i in 0..self.nrows {
            self[(i, j)] = v[i];
        }
    }

    // ---- faer-backed decompositions ----

    pub fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.nrows, self.ncols, |i, j| self[(i, j)])
    }

    pub fn from_faer(m: &Mat<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Eigendecomposition assuming `self` is hermitian. Eigenvalues ascending,
    /// eigenvectors as orthonormal columns.
    pub fn eigh(&self) -> (Vec<f64>, CMat) {
        let evd = self
            .to_faer()
            .self_adjoint_eigen(Side::Lower)
            .expect("hermitian eigendecomposition cannot fail on finite input");
        let n = self.nrows;
        let evals: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
        let evecs = CMat::from_fn(n, n, |i, j| evd.U()[(i, j)]);
        (evals, evecs)
    }

    /// General (non-hermitian) eigendecomposition: eigenvalues and right
    /// eigenvectors as columns.
    pub fn eig(&self) -> Result<(Vec<C64>, CMat)> {
        let e = self
            .to_faer()
            .eigen()
            .map_err(|e| Error::Numeric(format!("general eigendecomposition failed: {e:?}")))?;
        let n = self.nrows;
        let evals: Vec<C64> = (0..n).map(|i| e.S()[i]).collect();
        let evecs = CMat::from_fn(n, n, |i, j| e.U()[(i, j)]);
        Ok((evals, evecs))
    }

    /// Solve `self * X = rhs` by partial-pivot LU.
    pub fn solve(&self, rhs: &CMat) -> CMat {
        use faer::linalg::solvers::Solve;
        let lu = self.to_faer().partial_piv_lu();
        let x = lu.solve(rhs.to_faer());
        CMat::from_faer(&x)
    }

    pub fn inverse(&self) -> CMat {
        self.solve(&CMat::identity(self.nrows))
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.to_faer()
            .singular_values()
            .expect("svd cannot fail on finite input")
    }

    /// Trace norm: sum of singular values.
    pub fn trace_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    /// 2-norm condition number.
    pub fn cond2(&self) -> f64 {
        let sv = self.singular_values();
        let max = sv.first().copied().unwrap_or(0.0);
        let min = sv.last().copied().unwrap_or(0.0);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Row-major vectorization: vec(|i><j|) sits at index i*N + j.
pub fn vectorize(m: &CMat) -> Vec<C64> {
    assert_eq!(m.nrows(), m.ncols());
    m.data().to_vec()
}

pub fn unvectorize(v: &[C64]) -> CMat {
    let n = (v.len() as f64).sqrt().round() as usize;
    assert_eq!(n * n, v.len(), "unvectorize needs a square length");
    CMat {
        nrows: n,
        ncols: n,
        data: v.to_vec(),
    }
}

/// Matrix exponential by Pade-13 scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    const THETA_13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    assert_eq!(a.nrows(), a.ncols());
    let n = a.nrows();
    // 1-norm (max column sum)
    let mut norm1: f64 = 0.0;
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += a[(i, j)].norm();
        }
        norm1 = norm1.max(s);
    }
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let a = a.scale(C64::new(0.5_f64.powi(s as i32), 0.0));

    let id = CMat::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a2.matmul(&a4);

    let u_inner = a6
        .matmul(&a6.scale(B[13].into()).add(&a4.scale(B[11].into())).add(&a2.scale(B[9].into())))
        .add(&a6.scale(B[7].into()))
        .add(&a4.scale(B[5].into()))
        .add(&a2.scale(B[3].into()))
        .add(&id.scale(B[1].into()));
    let u = a.matmul(&u_inner);
    let v = a6
        .matmul(&a6.scale(B[12].into()).add(&a4.scale(B[10].into())).add(&a2.scale(B[8].into())))
        .add(&a6.scale(B[6].into()))
        .add(&a4.scale(B[4].into()))
        .add(&a2.scale(B[2].into()))
        .add(&id.scale(B[0].into()));

    let mut r = v.sub(&u).solve(&v.add(&u));
    for _ in 0..s {
        r = r.matmul(&r);
    }
    r
}
