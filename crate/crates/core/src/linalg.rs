//! Dense helpers over [`Scalar`] for the small matrices used here (N ≤ ~10),
//! so the same code runs in f64, double-double and complex arithmetic.

use crate::scalar::Scalar;

pub type Mat<T> = Vec<Vec<T>>;

/// LU factorisation with partial pivoting (by modulus), in place.
/// Returns the permutation sign, or `None` if a pivot is exactly zero.
fn lu_in_place<T: Scalar>(a: &mut Mat<T>, perm: &mut [usize]) -> Option<T> {
    let n = a.len();
    let mut sign = T::one();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].modulus().total_cmp(&a[j][k].modulus()))
            .unwrap();
        if a[p][k].modulus() == 0.0 {
            return None;
        }
        if p != k {
            a.swap(p, k);
            perm.swap(p, k);
            sign = -sign;
        }
        let pivot = a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / pivot;
            a[i][k] = f;
            for j in k + 1..n {
                let t = a[k][j];
                a[i][j] = a[i][j] - f * t;
            }
        }
    }
    Some(sign)
}

pub fn det<T: Scalar>(mut a: Mat<T>) -> T {
    let n = a.len();
    if n == 0 {
        return T::one();
    }
    let mut perm: Vec<usize> = (0..n).collect();
    match lu_in_place(&mut a, &mut perm) {
        None => T::zero(),
        Some(sign) => (0..n).fold(sign, |acc, i| acc * a[i][i]),
    }
}

/// Solves `a x = b`; `None` if `a` is singular.
pub fn solve<T: Scalar>(mut a: Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    lu_in_place(&mut a, &mut perm)?;
    let mut x: Vec<T> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        for j in 0..i {
            let t = a[i][j] * x[j];
            x[i] = x[i] - t;
        }
    }
    for i in (0..n).rev() {
        for j in i + 1..n {
            let t = a[i][j] * x[j];
            x[i] = x[i] - t;
        }
        x[i] = x[i] / a[i][i];
    }
    Some(x)
}

/// `tr((λI - a)^{-1})` and `det(λI - a)`; the trace is `None` when `λ` is an
/// exact eigenvalue.
pub fn resolvent_trace<T: Scalar>(a: &Mat<T>, lambda: T) -> (Option<T>, T) {
    let n = a.len();
    let shifted: Mat<T> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { lambda - a[i][j] } else { -a[i][j] })
                .collect()
        })
        .collect();
    let mut lu = shifted;
    let mut perm: Vec<usize> = (0..n).collect();
    let Some(sign) = lu_in_place(&mut lu, &mut perm) else {
        return (None, T::zero());
    };
    let d = (0..n).fold(sign, |acc, i| acc * lu[i][i]);
    let mut tr = T::zero();
    for col in 0..n {
        // column `col` of the inverse, only its diagonal entry is needed
        let mut x: Vec<T> = perm.iter().map(|&p| if p == col { T::one() } else { T::zero() }).collect();
        for i in 0..n {
            for j in 0..i {
                let t = lu[i][j] * x[j];
                x[i] = x[i] - t;
            }
        }
        for i in (col..n).rev() {
            for j in i + 1..n {
                let t = lu[i][j] * x[j];
                x[i] = x[i] - t;
            }
            x[i] = x[i] / lu[i][i];
        }
        tr = tr + x[col];
    }
    (Some(tr), d)
}

/// Coefficients `c[0..=n]` of `det(λI - a) = Σ c[i] λ^i` (Faddeev–LeVerrier).
pub fn charpoly<T: Scalar>(a: &Mat<T>) -> Vec<T> {
    let n = a.len();
    let mut c = vec![T::zero(); n + 1];
    c[n] = T::one();
    let mut m = vec![vec![T::zero(); n]; n];
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] = row[i] + c[n - k + 1];
        }
        let am = matmul(a, &next);
        let tr = (0..n).fold(T::zero(), |acc, i| acc + am[i][i]);
        c[n - k] = -tr / T::from_f64(k as f64);
        m = next;
    }
    c
}

pub fn matmul<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let n = a.len();
    let p = b[0].len();
    (0..n)
        .map(|i| {
            (0..p)
                .map(|j| (0..b.len()).fold(T::zero(), |acc, l| acc + a[i][l] * b[l][j]))
                .collect()
        })
        .collect()
}

pub fn matvec<T: Scalar>(a: &Mat<T>, x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(T::zero(), |acc, (&r, &v)| acc + r * v))
        .collect()
}

/// Deletes row `r` and column `c`.
pub fn minor<T: Scalar>(a: &Mat<T>, r: usize, c: usize) -> Mat<T> {
    a.iter()
        .enumerate()
        .filter(|&(i, _)| i != r)
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

pub fn to_dmatrix(a: &Mat<f64>) -> nalgebra::DMatrix<f64> {
    let n = a.len();
    nalgebra::DMatrix::from_fn(n, a.first().map_or(0, |r| r.len()), |i, j| a[i][j])
}

pub fn from_dmatrix<T: Scalar>(m: &nalgebra::DMatrix<f64>) -> Mat<T> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| T::from_f64(m[(i, j)])).collect())
        .collect()
}
