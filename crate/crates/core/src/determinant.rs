//! Dynamical traces, the truncated dynamical Fredholm determinant, its zeros,
//! and the Ruelle zeta function computed directly and as a product of
//! exterior-power determinants.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::map_model::{MapSystem, Mat2};
use crate::numerics::{eigenvalues, ksum, EigError, C64};
use crate::periodic_orbits::{periodic_points_cached, NewtonOptions, OrbitError, PeriodicPointSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetError {
    #[error("singular linearization: |det(I − DT^m)| = {0:.3e}")]
    SingularLinearization(f64),
    #[error("unstable orientation reverses at {0:?} (period {1})")]
    OrientationNotTrivial([f64; 2], usize),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Eig(#[from] EigError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSeries {
    /// tr_m for m = 1..N.
    pub traces: Vec<f64>,
    pub provenance: String,
}

impl TraceSeries {
    pub fn order(&self) -> usize {
        self.traces.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Zero {
    pub z: C64,
    pub multiplicity: usize,
    pub backward_error: f64,
    pub ill_conditioned: bool,
    pub near_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeterminantPoly {
    /// c_0..c_N with c_0 = 1.
    pub coeffs: Vec<f64>,
    pub validity_radius: Option<f64>,
    pub zeros: Vec<Zero>,
}

/// Backward-error threshold above which a root is flagged ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e-6;

/// Σ_x g^(m)(x)/|det(I − DT^m(x))|.
pub fn dynamical_trace(set: &PeriodicPointSet) -> Result<f64, DetError> {
    let mut terms = Vec::with_capacity(set.points.len());
    for p in &set.points {
        let d = (Mat2::identity() - p.dtm()).determinant().abs();
        if d < 1e-12 {
            return Err(DetError::SingularLinearization(d));
        }
        terms.push(p.gm / d);
    }
    Ok(ksum(terms))
}

/// Periodic point sets for m = 1..=n.
pub fn orbit_data(
    sys: &MapSystem,
    n: usize,
    opts: &NewtonOptions,
    cache: Option<&std::path::Path>,
) -> Result<Vec<PeriodicPointSet>, DetError> {
    (1..=n).map(|m| periodic_points_cached(sys, m, opts, cache).map_err(DetError::from)).collect()
}

pub fn trace_series_from_sets(sys: &MapSystem, sets: &[PeriodicPointSet]) -> Result<TraceSeries, DetError> {
    Ok(TraceSeries {
        traces: sets.iter().map(dynamical_trace).collect::<Result<_, _>>()?,
        provenance: format!("{}|{}", sys.id, sys.weight.id()),
    })
}

pub fn trace_series(sys: &MapSystem, n: usize) -> Result<TraceSeries, DetError> {
    let sets = orbit_data(sys, n, &NewtonOptions::default(), None)?;
    trace_series_from_sets(sys, &sets)
}

/// exp(sign·Σ z^m/m a_m) coefficients via the Newton-identity recursion.
fn exp_series(a: &[f64], sign: f64) -> Vec<f64> {
    let n = a.len();
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    for k in 1..=n {
        let s = ksum((1..=k).map(|j| a[j - 1] * c[k - j]));
        c[k] = sign * s / k as f64;
    }
    c
}

pub fn det_coeffs_from_traces(ts: &TraceSeries) -> DeterminantPoly {
    DeterminantPoly { coeffs: exp_series(&ts.traces, -1.0), validity_radius: None, zeros: vec![] }
}

/// Inverse of `det_coeffs_from_traces`.
pub fn traces_from_coeffs(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len() - 1;
    let mut tr = vec![0.0; n];
    for k in 1..=n {
        // k c_k = −Σ_{j=1}^{k} tr_j c_{k−j}
        let s = ksum((1..k).map(|j| tr[j - 1] * coeffs[k - j]));
        tr[k - 1] = -(k as f64 * coeffs[k]) - s;
    }
    tr
}

fn poly_eval(c: &[f64], z: C64) -> (C64, f64) {
    let mut v = C64::new(0.0, 0.0);
    let mut a = 0.0;
    for ck in c.iter().rev() {
        v = v * z + ck;
        a = a * z.norm() + ck.abs();
    }
    (v, a)
}

fn poly_deriv_eval(c: &[f64], z: C64) -> C64 {
    let mut v = C64::new(0.0, 0.0);
    for (k, ck) in c.iter().enumerate().skip(1).rev() {
        v = v * z + ck * k as f64;
    }
    v
}

/// Roots of Σ c_k z^k inside |z| < radius, clustered into multiplicity groups.
pub fn det_zeros(dp: &DeterminantPoly, radius: f64) -> Result<Vec<Zero>, DetError> {
    let c = &dp.coeffs;
    let n = c.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    // companion of the reversed (monic, since c_0 = 1) polynomial: roots w = 1/z
    let mut comp = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for k in 0..n {
        comp[(0, k)] = C64::new(-c[k + 1] / c[0], 0.0);
    }
    for i in 1..n {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    let ws = eigenvalues(&comp)?;
    let mut roots: Vec<C64> = Vec::new();
    for w in ws {
        if w.norm() < 1e-300 {
            continue;
        }
        let mut z = C64::new(1.0, 0.0) / w;
        // Newton polish, kept only when it lowers |p|
        for _ in 0..5 {
            let (pz, _) = poly_eval(c, z);
            let d = poly_deriv_eval(c, z);
            if d.norm() == 0.0 {
                break;
            }
            let z2 = z - pz / d;
            if poly_eval(c, z2).0.norm() < pz.norm() {
                z = z2;
            } else {
                break;
            }
        }
        if z.norm() < radius {
            roots.push(z);
        }
    }
    roots.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap().then(a.arg().partial_cmp(&b.arg()).unwrap()));
    let mut used = vec![false; roots.len()];
    let mut out = Vec::new();
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let mut group = vec![roots[i]];
        used[i] = true;
        for j in i + 1..roots.len() {
            if !used[j] && (roots[j] - roots[i]).norm() <= 1e-6 * roots[i].norm() {
                used[j] = true;
                group.push(roots[j]);
            }
        }
        let z = group.iter().sum::<C64>() / group.len() as f64;
        let (pz, a) = poly_eval(c, z);
        let be = pz.norm() / a;
        out.push(Zero {
            z,
            multiplicity: group.len(),
            backward_error: be,
            ill_conditioned: be > ILL_CONDITIONED,
            near_boundary: dp.validity_radius.is_some_and(|r| z.norm() >= 0.9 * r),
        });
    }
    Ok(out)
}

fn series_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    (0..n).map(|k| ksum((0..=k).map(|j| a[j] * b[k - j]))).collect()
}

fn series_div(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().min(b.len());
    let mut q = vec![0.0; n];
    for k in 0..n {
        let s = ksum((0..k).map(|j| q[j] * b[k - j]));
        q[k] = (a[k] - s) / b[0];
    }
    q
}

/// ζ coefficients from exp(+Σ z^m/m Σ_{Fix T^m} g^(m)).
pub fn zeta_direct(sets: &[PeriodicPointSet]) -> Vec<f64> {
    let sums: Vec<f64> = sets.iter().map(|s| ksum(s.points.iter().map(|p| p.gm))).collect();
    exp_series(&sums, 1.0)
}

/// Sign of the expanding eigenvalue of a hyperbolic 2×2 matrix.
fn unstable_sign(m: &Mat2) -> f64 {
    let tr = m.trace();
    let det = m.determinant();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if l1.abs() >= l2.abs() {
        l1.signum()
    } else {
        l2.signum()
    }
}

/// ζ as Π_k d_{Λ^k}(z)^{(−1)^{k+d_u+1}} for d = 2, d_u = 1.
pub fn zeta_product(sets: &[PeriodicPointSet]) -> Result<Vec<f64>, DetError> {
    let du = 1usize;
    let mut traces: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(sets.len()));
    for s in sets {
        let mut terms: [Vec<f64>; 3] = Default::default();
        for p in &s.points {
            let m = p.dtm();
            if unstable_sign(&m) < 0.0 {
                return Err(DetError::OrientationNotTrivial(p.x, s.period));
            }
            let d = (Mat2::identity() - m).determinant().abs();
            if d < 1e-12 {
                return Err(DetError::SingularLinearization(d));
            }
            let mt = m.transpose();
            let ext = [1.0, mt.trace(), mt.determinant()];
            for k in 0..3 {
                terms[k].push(p.gm * ext[k] / d);
            }
        }
        for k in 0..3 {
            traces[k].push(ksum(terms[k].iter().cloned()));
        }
    }
    let n = sets.len();
    let mut num = vec![0.0; n + 1];
    num[0] = 1.0;
    let mut den = num.clone();
    for (k, tr) in traces.iter().enumerate() {
        let dk = exp_series(tr, -1.0);
        if (k + du + 1).is_multiple_of(2) {
            num = series_mul(&num, &dk);
        } else {
            den = series_mul(&den, &dk);
        }
    }
    Ok(series_div(&num, &den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::{builtin_cat_map, builtin_perturbed_cat, Weight};
    use proptest::prelude::*;

    const LAMBDA: f64 = 2.618_033_988_749_895;

    fn ts(v: Vec<f64>) -> TraceSeries {
        TraceSeries { traces: v, provenance: "synthetic".into() }
    }

    #[test]
    fn cat_traces() {
        let s = trace_series(&builtin_cat_map(), 6).unwrap();
        for t in &s.traces {
            assert!((t - 1.0).abs() < 1e-12);
        }
        let c = builtin_cat_map().with_weight(Weight::Constant(1.0 / LAMBDA));
        let s = trace_series(&c, 3).unwrap();
        for (m, t) in s.traces.iter().enumerate() {
            assert!((t - LAMBDA.powi(-(m as i32 + 1))).abs() < 1e-12);
        }
        let z = trace_series(&builtin_cat_map().with_weight(Weight::Constant(0.0)), 4).unwrap();
        assert!(z.traces.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn coefficient_recursion() {
        let d = det_coeffs_from_traces(&ts(vec![1.0; 6]));
        assert_eq!(d.coeffs[0], 1.0);
        assert!((d.coeffs[1] + 1.0).abs() < 1e-15);
        assert!(d.coeffs[2..].iter().all(|c| c.abs() < 1e-15));
        let d = det_coeffs_from_traces(&ts((1..=6).map(|m| LAMBDA.powi(-m)).collect()));
        assert!((d.coeffs[1] + 1.0 / LAMBDA).abs() < 1e-15);
        assert!(d.coeffs[2..].iter().all(|c| c.abs() < 1e-15));
        let d = det_coeffs_from_traces(&ts(vec![0.0; 5]));
        assert_eq!(d.coeffs, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zeros_of_known_polynomials() {
        let d = DeterminantPoly { coeffs: vec![1.0, -1.0], validity_radius: None, zeros: vec![] };
        let z = det_zeros(&d, 2.0).unwrap();
        assert_eq!(z.len(), 1);
        assert!((z[0].z - C64::new(1.0, 0.0)).norm() < 1e-14 && z[0].multiplicity == 1);
        let d = det_coeffs_from_traces(&ts((1..=10).map(|m| 1.0 + 0.5f64.powi(m)).collect()));
        let z = det_zeros(&d, 3.0).unwrap();
        let good: Vec<_> = z.iter().filter(|r| !r.ill_conditioned).collect();
        assert_eq!(good.len(), 2);
        assert!((good[0].z - C64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((good[1].z - C64::new(2.0, 0.0)).norm() < 1e-10);
        // a double root clusters into one entry of multiplicity 2
        let d = det_coeffs_from_traces(&ts(vec![2.0; 8]));
        let z = det_zeros(&d, 2.0).unwrap();
        assert_eq!(z.len(), 1);
        assert_eq!(z[0].multiplicity, 2);
    }

    #[test]
    fn cat_determinant_exact() {
        let s = trace_series(&builtin_cat_map(), 12).unwrap();
        let d = det_coeffs_from_traces(&s);
        let z = det_zeros(&d, 2.5).unwrap();
        let good: Vec<_> = z.iter().filter(|r| !r.ill_conditioned).collect();
        assert_eq!(good.len(), 1);
        assert!((good[0].z - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zeta_examples() {
        let sys = builtin_cat_map();
        let sets = orbit_data(&sys, 2, &NewtonOptions::default(), None).unwrap();
        let z = zeta_direct(&sets);
        assert!((z[1] - 1.0).abs() < 1e-15);
        assert!((z[2] - 3.0).abs() < 1e-14);
        let zero = builtin_cat_map().with_weight(Weight::Constant(0.0));
        let sets0 = orbit_data(&zero, 4, &NewtonOptions::default(), None).unwrap();
        assert_eq!(zeta_direct(&sets0), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(zeta_product(&sets0).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zeta_product_matches_direct() {
        for sys in [builtin_cat_map(), builtin_perturbed_cat(0.01, 0).unwrap()] {
            let sets = orbit_data(&sys, 6, &NewtonOptions::default(), None).unwrap();
            let a = zeta_direct(&sets);
            let b = zeta_product(&sets).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    proptest! {
        #[test]
        fn exp_log_roundtrip(tr in proptest::collection::vec(-1.0f64..1.0, 20)) {
            let d = det_coeffs_from_traces(&ts(tr.clone()));
            let back = traces_from_coeffs(&d.coeffs);
            for (a, b) in tr.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
