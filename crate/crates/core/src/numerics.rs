//! Small numerical kernels shared across modules: compensated summation,
//! least-squares lines, and a complex Hessenberg QR eigensolver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type C64 = Complex64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn ksum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = KahanSum::default();
    it.into_iter().for_each(|x| s.add(x));
    s.value()
}

pub fn ksum_c<I: IntoIterator<Item = C64>>(it: I) -> C64 {
    let (mut re, mut im) = (KahanSum::default(), KahanSum::default());
    for z in it {
        re.add(z.re);
        im.add(z.im);
    }
    C64::new(re.value(), im.value())
}

/// log(Σ exp(a_i)) without overflow; `-inf` for an empty input.
pub fn log_sum_exp(a: &[f64]) -> f64 {
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + ksum(a.iter().map(|x| (x - m).exp())).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = ksum(xs.iter().cloned()) / n;
    let my = ksum(ys.iter().cloned()) / n;
    let sxx = ksum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = ksum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss = ksum(xs.iter().zip(ys).map(|(x, y)| {
        let r = y - (intercept + slope * x);
        r * r
    }));
    LineFit { slope, intercept, residual: (ss / n).sqrt() }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigError {
    #[error("QR iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Reduces `a` in place to upper Hessenberg form by Householder reflections.
pub fn hessenberg(a: &mut DMatrix<C64>) {
    let n = a.nrows();
    for k in 0..n.saturating_sub(2) {
        let alpha_norm = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let mut v: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] += phase * alpha_norm;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= vnorm);
        // A <- (I - 2vv*) A (I - 2vv*)
        for j in 0..n {
            let s: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * a[(k + 1 + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                a[(k + 1 + i, j)] -= *vi * s * 2.0;
            }
        }
        for i in 0..n {
            let s: C64 = v.iter().enumerate().map(|(j, vj)| a[(i, k + 1 + j)] * vj).sum();
            for (j, vj) in v.iter().enumerate() {
                a[(i, k + 1 + j)] -= s * vj.conj() * 2.0;
            }
        }
        for i in k + 2..n {
            a[(i, k)] = C64::new(0.0, 0.0);
        }
    }
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    // eigenvalue of [[a,b],[c,d]] closer to d
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr / 4.0 - det).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Eigenvalues of a general complex matrix via Hessenberg reduction and
/// single-shift QR with Wilkinson shifts.
pub fn eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>, EigError> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(EigError::NonFinite);
    }
    let mut h = m.clone();
    hessenberg(&mut h);
    hessenberg_eigenvalues(h)
}

/// Eigenvalues of a matrix already in upper Hessenberg form.
pub fn hessenberg_eigenvalues(mut h: DMatrix<C64>) -> Result<Vec<C64>, EigError> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(EigError::NonFinite);
    }
    let n = h.nrows();
    let mut eigs = vec![C64::new(0.0, 0.0); n];
    let mut hi = n;
    let mut iter = 0usize;
    let max_iter = 100 * n.max(1);
    let mut total = 0usize;
    while hi > 0 {
        if hi == 1 {
            eigs[0] = h[(0, 0)];
            break;
        }
        // find the active block [lo, hi)
        let mut lo = hi - 1;
        while lo > 0 {
            let s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let s = if s == 0.0 { 1.0 } else { s };
            if h[(lo, lo - 1)].norm() <= f64::EPSILON * s {
                h[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi - 1 {
            eigs[hi - 1] = h[(hi - 1, hi - 1)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_iter {
            return Err(EigError::NoConvergence(total));
        }
        let mu = if iter % 11 == 10 {
            // exceptional shift
            h[(hi - 1, hi - 1)] + C64::new(0.75 * h[(hi - 1, hi - 2)].norm(), 0.0)
        } else {
            wilkinson_shift(
                h[(hi - 2, hi - 2)],
                h[(hi - 2, hi - 1)],
                h[(hi - 1, hi - 2)],
                h[(hi - 1, hi - 1)],
            )
        };
        // QR step on the block via Givens rotations, applied to the full rows/cols
        for i in lo..hi {
            h[(i, i)] -= mu;
        }
        let mut rots: Vec<(C64, C64)> = Vec::with_capacity(hi - lo);
        for k in lo..hi - 1 {
            let x = h[(k, k)];
            let y = h[(k + 1, k)];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
            } else {
                (x / r, y / r)
            };
            // G = [[c*, s*], [-s, c]] applied from the left
            for j in k..n {
                let a = h[(k, j)];
                let b = h[(k + 1, j)];
                h[(k, j)] = c.conj() * a + s.conj() * b;
                h[(k + 1, j)] = -s * a + c * b;
            }
            rots.push((c, s));
        }
        for (idx, k) in (lo..hi - 1).enumerate() {
            let (c, s) = rots[idx];
            // right-multiply by G*
            for i in 0..(k + 2).min(n) {
                let a = h[(i, k)];
                let b = h[(i, k + 1)];
                h[(i, k)] = a * c + b * s;
                h[(i, k + 1)] = -a * s.conj() + b * c.conj();
            }
        }
        for i in lo..hi {
            h[(i, i)] += mu;
        }
    }
    Ok(eigs)
}

/// Approximate unit eigenvector for eigenvalue estimate `mu` by inverse iteration.
pub fn eigenvector(m: &DMatrix<C64>, mu: C64) -> DVec {
    let n = m.nrows();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let shift = mu + C64::new(scale * 1e-13, scale * 1e-13);
    let a = m - DMatrix::from_diagonal_element(n, n, shift);
    let lu = a.lu();
    let mut v = nalgebra::DVector::from_element(n, C64::new(1.0, 0.0) / (n as f64).sqrt());
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(w) => {
                let nw = w.norm();
                if nw == 0.0 || !nw.is_finite() {
                    break;
                }
                v = w / C64::new(nw, 0.0);
            }
            None => break,
        }
    }
    v
}

/// Solves (H − σI)x = b for upper Hessenberg H in O(n²), pivoting between
/// adjacent rows.
fn hessenberg_solve(h: &DMatrix<C64>, sigma: C64, b: &[C64]) -> Vec<C64> {
    let n = h.nrows();
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] -= sigma;
    }
    let mut x = b.to_vec();
    let tiny = 1e-300;
    for k in 0..n.saturating_sub(1) {
        if a[(k + 1, k)].norm() > a[(k, k)].norm() {
            a.swap_rows(k, k + 1);
            x.swap(k, k + 1);
        }
        let piv = if a[(k, k)].norm() < tiny { C64::new(tiny, 0.0) } else { a[(k, k)] };
        let f = a[(k + 1, k)] / piv;
        if f != C64::new(0.0, 0.0) {
            for j in k..n {
                let t = a[(k, j)];
                a[(k + 1, j)] -= f * t;
            }
            let t = x[k];
            x[k + 1] -= f * t;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= a[(k, j)] * x[j];
        }
        let piv = if a[(k, k)].norm() < tiny { C64::new(tiny, 0.0) } else { a[(k, k)] };
        x[k] = s / piv;
    }
    x
}

/// Unit eigenvector of Hessenberg H for the eigenvalue estimate `mu`, by two
/// steps of inverse iteration with a slightly perturbed shift.
pub fn hessenberg_eigenvector(h: &DMatrix<C64>, mu: C64) -> Vec<C64> {
    let n = h.nrows();
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let shift = mu + C64::new(scale * 1e-13, scale * 1e-13);
    let mut v = vec![C64::new(1.0, 0.0) / (n as f64).sqrt(); n];
    for _ in 0..2 {
        let w = hessenberg_solve(h, shift, &v);
        let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nw == 0.0 || !nw.is_finite() {
            break;
        }
        v = w.into_iter().map(|z| z / nw).collect();
    }
    v
}

/// ‖Hv − μv‖ for unit v.
pub fn hessenberg_residual(h: &DMatrix<C64>, mu: C64, v: &[C64]) -> f64 {
    let n = h.nrows();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let s: C64 = (lo..n).map(|j| h[(i, j)] * v[j]).sum();
            (s - mu * v[i]).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Eigenvalues with residuals ‖Av − μv‖ of unit approximate eigenvectors.
pub fn eigen_with_residuals(m: &DMatrix<C64>) -> Result<Vec<(C64, f64)>, EigError> {
    let mut h = m.clone();
    hessenberg(&mut h);
    let eigs = hessenberg_eigenvalues(h.clone())?;
    Ok(eigs
        .into_iter()
        .map(|mu| {
            let v = hessenberg_eigenvector(&h, mu);
            (mu, hessenberg_residual(&h, mu, &v))
        })
        .collect())
}

pub type DVec = nalgebra::DVector<C64>;

/// ‖A‖₁·‖A⁻¹‖₁, or infinity when A is numerically singular.
pub fn condition_1(a: &DMatrix<C64>) -> f64 {
    let norm1 = |m: &DMatrix<C64>| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match a.clone().try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(ksum(v), 2.0);
    }

    #[test]
    fn fit_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-14 && f.residual < 1e-14);
    }

    #[test]
    fn eigenvalues_of_diagonal_and_companion() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(3.0, 0.0),
            C64::new(-1.0, 2.0),
            C64::new(0.5, 0.0),
        ]));
        let mut e = eigenvalues(&d).unwrap();
        e.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        assert!((e[0] - C64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((e[2] - C64::new(3.0, 0.0)).norm() < 1e-14);
        // rotation by 90 degrees: eigenvalues ±i
        let r = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let e = eigenvalues(&r).unwrap();
        assert!(e.iter().any(|z| (z - C64::new(0.0, 1.0)).norm() < 1e-12));
        assert!(e.iter().any(|z| (z - C64::new(0.0, -1.0)).norm() < 1e-12));
    }

    #[test]
    fn eigenvalues_random_matrix_trace_and_det() {
        use rand::Rng;
        let mut r = rng(7);
        let n = 30;
        let m = DMatrix::from_fn(n, n, |_, _| C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5));
        let e = eigenvalues(&m).unwrap();
        let tr: C64 = (0..n).map(|i| m[(i, i)]).sum();
        let se: C64 = e.iter().sum();
        assert!((tr - se).norm() < 1e-10);
        let det = m.clone().lu().determinant();
        let pe: C64 = e.iter().product();
        assert!((det - pe).norm() < 1e-9 * det.norm().max(1.0));
        for mu in e.iter().take(5) {
            let v = eigenvector(&m, *mu);
            let res = (&m * &v - &v * *mu).norm();
            assert!(res < 1e-8, "residual {res}");
        }
    }

    #[test]
    fn residuals_small_for_random_matrix() {
        use rand::Rng;
        let mut r = rng(9);
        let n = 60;
        let m = DMatrix::from_fn(n, n, |_, _| C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5));
        let er = eigen_with_residuals(&m).unwrap();
        assert_eq!(er.len(), n);
        assert!(er.iter().all(|(_, res)| *res < 1e-9), "{er:?}");
    }
}
