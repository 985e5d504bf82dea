//! Small dense complex linear algebra.
//!
//! A column-major matrix type over `Complex64` with the handful of
//! factorizations the analysis routines need, bound directly to the system
//! LAPACK (zgeev, zheev, zgesvd, zgetrf/zgetrs). Also provides a
//! scaling-and-squaring matrix exponential. These paths are meant for
//! moderate sizes (a few thousand rows); the production solvers never touch
//! them except inside the Newton mode solves and the certification tools.

use crate::{Complex64, Error, Result};

/// Dense column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMat {
    n_rows: usize,
    n_cols: usize,
    /// Column-major storage: entry (i, j) lives at `data[j * n_rows + i]`.
    data: Vec<Complex64>,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

impl ZMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![ZERO; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for j in 0..n_cols {
            for i in 0..n_rows {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Build from row slices; panics on ragged input. Intended for tests and
    /// small fixed matrices where row-major literals read naturally.
    pub fn from_rows(rows: &[&[Complex64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = if n_rows == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self::from_fn(n_rows, n_cols, |i, j| rows[i][j])
    }

    pub fn diag(entries: &[Complex64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in entries.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn set_column(&mut self, j: usize, col: &[Complex64]) {
        assert_eq!(col.len(), self.n_rows);
        self.column_mut(j).copy_from_slice(col);
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n_cols);
        let mut out = vec![ZERO; self.n_rows];
        for j in 0..self.n_cols {
            let vj = v[j];
            if vj == ZERO {
                continue;
            }
            let col = self.column(j);
            for i in 0..self.n_rows {
                out[i] += col[i] * vj;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        for j in 0..other.n_cols {
            for k in 0..self.n_cols {
                let b = other[(k, j)];
                if b == ZERO {
                    continue;
                }
                let col = self.column(k);
                let out_col = out.column_mut(j);
                for i in 0..col.len() {
                    out_col[i] += col[i] * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)].conj())
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = (other.n_rows, other.n_cols);
        let mut out = Self::zeros(self.n_rows * p, self.n_cols * q);
        for j in 0..self.n_cols {
            for i in 0..self.n_rows {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for jj in 0..q {
                    for ii in 0..p {
                        out[(i * p + ii, j * q + jj)] = a * other[(ii, jj)];
                    }
                }
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.n_cols)
            .map(|j| self.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut sums = vec![0.0_f64; self.n_rows];
        for j in 0..self.n_cols {
            for (i, z) in self.column(j).iter().enumerate() {
                sums[i] += z.norm();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of a general square matrix (zgeev, no vectors).
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        self.require_square("eigenvalues")?;
        let n = self.n_rows;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut a = self.data.clone();
        let mut w = vec![ZERO; n];
        let mut vl = [ZERO];
        let mut vr = [ZERO];
        let mut rwork = vec![0.0_f64; 2 * n];
        let mut info = 0_i32;
        let lwork = query_lwork(|work, lwork| unsafe {
            lapack::zgeev(
                b'N', b'N', n as i32, &mut a, n as i32, &mut w, &mut vl, 1, &mut vr, 1, work,
                lwork, &mut rwork, &mut info,
            )
        })?;
        let mut work = vec![ZERO; lwork];
        unsafe {
            lapack::zgeev(
                b'N', b'N', n as i32, &mut a, n as i32, &mut w, &mut vl, 1, &mut vr, 1, &mut work,
                lwork as i32, &mut rwork, &mut info,
            );
        }
        check_info("zgeev", info)?;
        Ok(w)
    }

    /// Eigenvalues and right eigenvectors of a general square matrix.
    /// Returns `(w, V)` with columns of `V` the (unit 2-norm) eigenvectors.
    pub fn eig(&self) -> Result<(Vec<Complex64>, ZMat)> {
        self.require_square("eig")?;
        let n = self.n_rows;
        let mut a = self.data.clone();
        let mut w = vec![ZERO; n];
        let mut vl = [ZERO];
        let mut vr = vec![ZERO; n * n];
        let mut rwork = vec![0.0_f64; 2 * n];
        let mut info = 0_i32;
        let lwork = query_lwork(|work, lwork| unsafe {
            lapack::zgeev(
                b'N', b'V', n as i32, &mut a, n as i32, &mut w, &mut vl, 1, &mut vr, n as i32,
                work, lwork, &mut rwork, &mut info,
            )
        })?;
        let mut work = vec![ZERO; lwork];
        unsafe {
            lapack::zgeev(
                b'N', b'V', n as i32, &mut a, n as i32, &mut w, &mut vl, 1, &mut vr, n as i32,
                &mut work, lwork as i32, &mut rwork, &mut info,
            );
        }
        check_info("zgeev", info)?;
        Ok((
            w,
            ZMat {
                n_rows: n,
                n_cols: n,
                data: vr,
            },
        ))
    }

    /// Eigenvalues of a Hermitian matrix (zheev, ascending order).
    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        self.require_square("eigvalsh")?;
        let n = self.n_rows;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut a = self.data.clone();
        let mut w = vec![0.0_f64; n];
        let mut rwork = vec![0.0_f64; 3 * n.max(1) - 2];
        let mut info = 0_i32;
        let lwork = query_lwork(|work, lwork| unsafe {
            lapack::zheev(
                b'N', b'U', n as i32, &mut a, n as i32, &mut w, work, lwork, &mut rwork,
                &mut info,
            )
        })?;
        let mut work = vec![ZERO; lwork];
        unsafe {
            lapack::zheev(
                b'N', b'U', n as i32, &mut a, n as i32, &mut w, &mut work, lwork as i32,
                &mut rwork, &mut info,
            );
        }
        check_info("zheev", info)?;
        Ok(w)
    }

    /// Singular values in descending order (zgesvd, no vectors).
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let (m, n) = (self.n_rows, self.n_cols);
        if m == 0 || n == 0 {
            return Ok(Vec::new());
        }
        let mn = m.min(n);
        let mut a = self.data.clone();
        let mut s = vec![0.0_f64; mn];
        let mut u = [ZERO];
        let mut vt = [ZERO];
        let mut rwork = vec![0.0_f64; 5 * mn];
        let mut info = 0_i32;
        let lwork = query_lwork(|work, lwork| unsafe {
            lapack::zgesvd(
                b'N', b'N', m as i32, n as i32, &mut a, m as i32, &mut s, &mut u, 1, &mut vt, 1,
                work, lwork, &mut rwork, &mut info,
            )
        })?;
        let mut work = vec![ZERO; lwork];
        unsafe {
            lapack::zgesvd(
                b'N', b'N', m as i32, n as i32, &mut a, m as i32, &mut s, &mut u, 1, &mut vt, 1,
                &mut work, lwork as i32, &mut rwork, &mut info,
            );
        }
        check_info("zgesvd", info)?;
        Ok(s)
    }

    /// LU-factorize once so several right-hand sides can be solved cheaply.
    pub fn lu(&self) -> Result<LuFactors> {
        self.require_square("lu")?;
        let n = self.n_rows;
        let mut lu = self.data.clone();
        let mut ipiv = vec![0_i32; n];
        let mut info = 0_i32;
        unsafe {
            lapack::zgetrf(n as i32, n as i32, &mut lu, n as i32, &mut ipiv, &mut info);
        }
        check_info("zgetrf", info)?;
        Ok(LuFactors { n, lu, ipiv })
    }

    /// Solve `self * x = b` for a single right-hand side.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(self.lu()?.solve(b))
    }

    /// Solve `self * X = B` column by column.
    pub fn solve_mat(&self, b: &ZMat) -> Result<ZMat> {
        if self.n_cols != b.n_rows {
            return Err(Error::Dimension("solve_mat shape mismatch".into()));
        }
        let fac = self.lu()?;
        let mut out = b.clone();
        for j in 0..out.n_cols {
            let x = fac.solve(b.column(j));
            out.set_column(j, &x);
        }
        Ok(out)
    }

    /// Matrix exponential by scaling and squaring with a degree-13 Pade
    /// approximant. Accurate to roundoff for moderate norms; used as the
    /// reference against which the spectral propagators are validated.
    pub fn expm(&self) -> Result<ZMat> {
        self.require_square("expm")?;
        let n = self.n_rows;
        if n == 0 {
            return Ok(self.clone());
        }
        // Pade-13 numerator coefficients for exp.
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
        const THETA_13: f64 = 5.371920351148152;

        let norm = self.norm_1();
        if !norm.is_finite() {
            return Err(Error::NonFinite("expm input".into()));
        }
        let s = if norm > THETA_13 {
            (norm / THETA_13).log2().ceil().max(0.0) as u32
        } else {
            0
        };
        let a = self.scale(Complex64::new(0.5_f64.powi(s as i32), 0.0));

        let id = ZMat::identity(n);
        let a2 = a.matmul(&a);
        let a4 = a2.matmul(&a2);
        let a6 = a2.matmul(&a4);

        let re = |x: f64| Complex64::new(x, 0.0);
        // U = A * (A6*(b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
        let w1 = a6
            .scale(re(B[13]))
            .add(&a4.scale(re(B[11])))
            .add(&a2.scale(re(B[9])));
        let w2 = a6
            .scale(re(B[7]))
            .add(&a4.scale(re(B[5])))
            .add(&a2.scale(re(B[3])))
            .add(&id.scale(re(B[1])));
        let u = a.matmul(&a6.matmul(&w1).add(&w2));
        // V = A6*(b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
        let z1 = a6
            .scale(re(B[12]))
            .add(&a4.scale(re(B[10])))
            .add(&a2.scale(re(B[8])));
        let z2 = a6
            .scale(re(B[6]))
            .add(&a4.scale(re(B[4])))
            .add(&a2.scale(re(B[2])))
            .add(&id.scale(re(B[0])));
        let v = a6.matmul(&z1).add(&z2);

        let mut r = v.sub(&u).solve_mat(&v.add(&u))?;
        for _ in 0..s {
            r = r.matmul(&r);
        }
        Ok(r)
    }

    fn require_square(&self, what: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what} needs a square matrix, got {}x{}",
                self.n_rows, self.n_cols
            )))
        }
    }
}

impl std::ops::Index<(usize, usize)> for ZMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[j * self.n_rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ZMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[j * self.n_rows + i]
    }
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
pub struct LuFactors {
    n: usize,
    lu: Vec<Complex64>,
    ipiv: Vec<i32>,
}

impl LuFactors {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        assert_eq!(b.len(), self.n);
        let mut info = 0_i32;
        unsafe {
            lapack::zgetrs(
                b'N',
                self.n as i32,
                1,
                &self.lu,
                self.n as i32,
                &self.ipiv,
                b,
                self.n as i32,
                &mut info,
            );
        }
        // zgetrs only errors on invalid arguments, which the wrapper rules out.
        debug_assert_eq!(info, 0);
    }
}

/// Run a LAPACK routine once with `lwork = -1` to obtain the optimal
/// workspace size.
fn query_lwork(mut call: impl FnMut(&mut [Complex64], i32)) -> Result<usize> {
    let mut probe = [ZERO];
    call(&mut probe, -1);
    let l = probe[0].re;
    if !(l.is_finite() && l >= 1.0) {
        return Err(Error::Breakdown("LAPACK workspace query failed".into()));
    }
    Ok(l as usize)
}

fn check_info(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}
