//! Hyperbolic map models: toral automorphisms, their trigonometric
//! perturbations, and a single-chart cone-hyperbolic model of R².

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::rng;

pub type Point = [f64; 2];
pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Largest perturbation amplitude accepted by the builtin models.
pub const EPS_MAX: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("perturbation {eps} exceeds the admissible bound {max}")]
    PerturbationTooLarge { eps: f64, max: f64 },
    #[error("orbit of {point:?} left the chart domain at step {step}")]
    OrbitLeftDomain { point: Point, step: usize },
    #[error("iterated directions at {point:?} collapsed below the angle floor ({angle:.3e} rad)")]
    DegenerateDirection { point: Point, angle: f64 },
    #[error("cone condition violated at {witness:?} (margin {margin:.4} rad)")]
    ConeViolation { witness: Vec<Point>, margin: f64 },
    #[error("inverse map did not converge at {0:?}")]
    InverseFailed(Point),
    #[error("map is not a torus map")]
    NotTorus,
    #[error("map is not a chart model")]
    NotChart,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Torus,
    /// Chart in R² with isolating box V = [-half_width, half_width]².
    Chart { half_width: f64 },
}

/// One trigonometric term `amp·sin(2π freq·x + phase)` added to a coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub component: usize,
    pub amp: f64,
    pub freq: [i64; 2],
    pub phase: f64,
}

/// Smooth compactly supported bump `height·exp(1 − 1/(1 − s²))`, s = |x − c|/radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub height: f64,
}

impl Bump {
    pub fn eval(&self, x: Point) -> f64 {
        let s2 = ((x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2)) / self.radius.powi(2);
        if s2 >= 1.0 {
            0.0
        } else {
            self.height * (1.0 - 1.0 / (1.0 - s2)).exp()
        }
    }

    pub fn grad(&self, x: Point) -> Vec2 {
        let d = Vec2::new(x[0] - self.center[0], x[1] - self.center[1]);
        let r2 = self.radius * self.radius;
        let s2 = d.norm_squared() / r2;
        if s2 >= 1.0 {
            return Vec2::zeros();
        }
        // d/dx exp(1 - 1/(1-s²)) = exp(..)·(-1/(1-s²)²)·(2 d / r²)
        let v = (1.0 - 1.0 / (1.0 - s2)).exp();
        d * (self.height * v * (-2.0 / ((1.0 - s2).powi(2) * r2)))
    }
}

/// Weight functions g.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    One,
    Constant(f64),
    Bump(Bump),
    /// c0 + c1·cos(2πx₁) + c2·cos(2πx₂).
    CosSum([f64; 3]),
    /// sqrt(g² + 1/n²).
    Floor(Box<Weight>, u32),
}

impl Weight {
    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::Constant(c) => *c,
            Weight::Bump(b) => b.eval(x),
            Weight::CosSum(c) => c[0] + c[1] * (TAU * x[0]).cos() + c[2] * (TAU * x[1]).cos(),
            Weight::Floor(g, n) => {
                let v = g.eval(x);
                (v * v + 1.0 / (*n as f64).powi(2)).sqrt()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Weight::Constant(c) if *c == 0.0)
            || matches!(self, Weight::Bump(b) if b.height == 0.0)
    }

    /// Constant value when the weight is constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Weight::One => Some(1.0),
            Weight::Constant(c) => Some(*c),
            Weight::CosSum([c0, 0.0, 0.0]) => Some(*c0),
            Weight::Floor(g, n) => g.as_constant().map(|v| (v * v + 1.0 / (*n as f64).powi(2)).sqrt()),
            _ => None,
        }
    }

    pub fn id(&self) -> String {
        match self {
            Weight::One => "one".into(),
            Weight::Constant(c) => format!("const({c})"),
            Weight::Bump(b) => format!("bump({},{};{};{})", b.center[0], b.center[1], b.radius, b.height),
            Weight::CosSum(c) => format!("cos({},{},{})", c[0], c[1], c[2]),
            Weight::Floor(g, n) => format!("floor({},{n})", g.id()),
        }
    }
}

/// `g_n = sqrt(g² + 1/n²)`.
pub fn weight_floor(g: &Weight, n: u32) -> Weight {
    assert!(n >= 1, "floor level must be positive");
    Weight::Floor(Box::new(g.clone()), n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MapKind {
    /// x ↦ Ax + Σ eps·terms mod 1 (no terms: pure automorphism).
    Toral { a: [[i64; 2]; 2], eps: f64, terms: Vec<TrigTerm> },
    /// m-th iterate of (x, y) ↦ (x/2 + eps·p, 2y + eps·q) on R².
    Chart { eps: f64, iterate: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapSystem {
    pub id: String,
    pub kind: MapKind,
    pub domain: Domain,
    pub weight: Weight,
    pub smoothness: f64,
    pub stable_dim: usize,
    pub unstable_dim: usize,
}

pub const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

/// Bumps defining the chart perturbation (p, q).
pub const CHART_P: Bump = Bump { center: [0.3, -0.2], radius: 1.6, height: 1.0 };
pub const CHART_Q: Bump = Bump { center: [-0.25, 0.35], radius: 1.6, height: 1.0 };
/// Default chart weight G.
pub const CHART_G: Bump = Bump { center: [0.0, 0.0], radius: 1.0, height: 1.0 };
pub const CHART_HALF_WIDTH: f64 = 2.0;

pub fn builtin_cat_map() -> MapSystem {
    MapSystem {
        id: "cat".into(),
        kind: MapKind::Toral { a: CAT, eps: 0.0, terms: vec![] },
        domain: Domain::Torus,
        weight: Weight::One,
        smoothness: f64::INFINITY,
        stable_dim: 1,
        unstable_dim: 1,
    }
}

/// Perturbed cat map. `seed = 0` gives the canonical perturbation
/// (sin 2πx₂, sin 2π(x₁+x₂)); other seeds draw random phases and amplitudes.
pub fn builtin_perturbed_cat(eps: f64, seed: u64) -> Result<MapSystem, MapError> {
    if eps.abs() > EPS_MAX {
        return Err(MapError::PerturbationTooLarge { eps, max: EPS_MAX });
    }
    let mut terms = vec![
        TrigTerm { component: 0, amp: 1.0, freq: [0, 1], phase: 0.0 },
        TrigTerm { component: 1, amp: 1.0, freq: [1, 1], phase: 0.0 },
    ];
    if seed != 0 {
        let mut r = rng(seed);
        for t in terms.iter_mut() {
            t.amp = r.gen_range(0.5..1.0);
            t.phase = r.gen_range(0.0..TAU);
        }
    }
    Ok(MapSystem {
        id: if seed == 0 { "perturbed-cat".into() } else { format!("perturbed-cat-s{seed}") },
        kind: MapKind::Toral { a: CAT, eps, terms },
        ..builtin_cat_map()
    })
}

/// Chart model with its input and output polarizations (identical sectors).
pub fn builtin_chart_model(eps: f64) -> Result<(MapSystem, Polarization, Polarization), MapError> {
    if eps.abs() > EPS_MAX {
        return Err(MapError::PerturbationTooLarge { eps, max: EPS_MAX });
    }
    let sys = MapSystem {
        id: "chart".into(),
        kind: MapKind::Chart { eps, iterate: 1 },
        domain: Domain::Chart { half_width: CHART_HALF_WIDTH },
        weight: Weight::Bump(CHART_G),
        smoothness: f64::INFINITY,
        stable_dim: 1,
        unstable_dim: 1,
    };
    let theta = Polarization::standard()?;
    Ok((sys, theta.clone(), theta))
}

fn mat(a: [[i64; 2]; 2]) -> Mat2 {
    Mat2::new(a[0][0] as f64, a[0][1] as f64, a[1][0] as f64, a[1][1] as f64)
}

fn wrap01(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Torus distance (sup over coordinates of the wrapped difference).
pub fn torus_dist(x: Point, y: Point) -> f64 {
    let d = |a: f64, b: f64| {
        let t = (a - b).rem_euclid(1.0);
        t.min(1.0 - t)
    };
    d(x[0], y[0]).max(d(x[1], y[1]))
}

/// Wrapped difference x − y in (−1/2, 1/2]².
pub fn torus_diff(x: Point, y: Point) -> Vec2 {
    let w = |v: f64| v - v.round();
    Vec2::new(w(x[0] - y[0]), w(x[1] - y[1]))
}

impl MapSystem {
    pub fn with_weight(mut self, w: Weight) -> Self {
        self.weight = w;
        self
    }

    pub fn is_torus(&self) -> bool {
        self.domain == Domain::Torus
    }

    /// Integer linear part of a torus map.
    pub fn linear_part(&self) -> Option<[[i64; 2]; 2]> {
        match &self.kind {
            MapKind::Toral { a, .. } => Some(*a),
            _ => None,
        }
    }

    pub fn eps(&self) -> f64 {
        match &self.kind {
            MapKind::Toral { eps, .. } | MapKind::Chart { eps, .. } => *eps,
        }
    }

    /// Same map family at another perturbation size (used by continuation).
    pub fn at_eps(&self, e: f64) -> MapSystem {
        let mut s = self.clone();
        match &mut s.kind {
            MapKind::Toral { eps, .. } | MapKind::Chart { eps, .. } => *eps = e,
        }
        s
    }

    /// m-th iterate of a chart model, with weight the product of G along orbits.
    pub fn chart_iterate(&self, m: usize) -> Result<MapSystem, MapError> {
        match &self.kind {
            MapKind::Chart { eps, iterate } => {
                let mut s = self.clone();
                s.kind = MapKind::Chart { eps: *eps, iterate: iterate * m };
                s.id = format!("{}^{}", self.id.split('^').next().unwrap_or("chart"), iterate * m);
                Ok(s)
            }
            _ => Err(MapError::NotChart),
        }
    }

    /// Periodic perturbation P(x) of a torus map (T̃(x) = Ax + P(x)).
    pub fn perturbation(&self, x: Point) -> Vec2 {
        match &self.kind {
            MapKind::Toral { eps, terms, .. } => {
                let mut p = Vec2::zeros();
                for t in terms {
                    let arg = TAU * (t.freq[0] as f64 * x[0] + t.freq[1] as f64 * x[1]) + t.phase;
                    p[t.component] += eps * t.amp * arg.sin();
                }
                p
            }
            _ => Vec2::zeros(),
        }
    }

    /// Forward map without reduction mod 1 (torus) or a single chart step.
    fn step_lift(&self, x: Point) -> Point {
        match &self.kind {
            MapKind::Toral { a, .. } => {
                let y = mat(*a) * Vec2::new(x[0], x[1]) + self.perturbation(x);
                [y[0], y[1]]
            }
            MapKind::Chart { eps, .. } => [
                0.5 * x[0] + eps * CHART_P.eval(x),
                2.0 * x[1] + eps * CHART_Q.eval(x),
            ],
        }
    }

    fn step_jacobian(&self, x: Point) -> Mat2 {
        match &self.kind {
            MapKind::Toral { a, eps, terms } => {
                let mut j = mat(*a);
                for t in terms {
                    let arg = TAU * (t.freq[0] as f64 * x[0] + t.freq[1] as f64 * x[1]) + t.phase;
                    let c = eps * t.amp * TAU * arg.cos();
                    j[(t.component, 0)] += c * t.freq[0] as f64;
                    j[(t.component, 1)] += c * t.freq[1] as f64;
                }
                j
            }
            MapKind::Chart { eps, .. } => {
                let gp = CHART_P.grad(x);
                let gq = CHART_Q.grad(x);
                Mat2::new(0.5 + eps * gp[0], eps * gp[1], eps * gq[0], 2.0 + eps * gq[1])
            }
        }
    }

    fn iterations(&self) -> usize {
        match &self.kind {
            MapKind::Chart { iterate, .. } => *iterate,
            _ => 1,
        }
    }

    /// Lifted forward map (no mod 1) for torus maps.
    pub fn forward_lift(&self, x: Point) -> Point {
        let mut y = x;
        for _ in 0..self.iterations() {
            y = self.step_lift(y);
        }
        y
    }

    pub fn forward(&self, x: Point) -> Point {
        match self.domain {
            Domain::Torus => {
                let y = self.step_lift(x);
                [wrap01(y[0]), wrap01(y[1])]
            }
            Domain::Chart { .. } => self.forward_lift(x),
        }
    }

    pub fn iterate(&self, x: Point, m: usize) -> Point {
        (0..m).fold(x, |y, _| self.forward(y))
    }

    pub fn jacobian(&self, x: Point) -> Mat2 {
        match self.domain {
            Domain::Torus => self.step_jacobian(x),
            Domain::Chart { .. } => {
                let mut j = Mat2::identity();
                let mut y = x;
                for _ in 0..self.iterations() {
                    j = self.step_jacobian(y) * j;
                    y = self.step_lift(y);
                }
                j
            }
        }
    }

    /// Weight g; for chart iterates the product of G along the orbit.
    pub fn weight_at(&self, x: Point) -> f64 {
        match self.domain {
            Domain::Torus => self.weight.eval(x),
            Domain::Chart { half_width } => {
                let mut y = x;
                let mut w = 1.0;
                for _ in 0..self.iterations() {
                    if y[0].abs() > half_width || y[1].abs() > half_width {
                        return 0.0;
                    }
                    w *= self.weight.eval(y);
                    if w == 0.0 {
                        return 0.0;
                    }
                    y = self.step_lift(y);
                }
                w
            }
        }
    }

    /// Inverse map by Newton iteration from the linear-part inverse.
    pub fn inverse(&self, x: Point) -> Result<Point, MapError> {
        let (mut y, lin) = match &self.kind {
            MapKind::Toral { a, .. } => {
                let ainv = mat(*a).try_inverse().ok_or(MapError::InverseFailed(x))?;
                let y = ainv * Vec2::new(x[0], x[1]);
                (y, ainv)
            }
            MapKind::Chart { .. } => {
                let k = self.iterations() as i32;
                let ainv = Mat2::new(2f64.powi(k), 0.0, 0.0, 0.5f64.powi(k));
                (ainv * Vec2::new(x[0], x[1]), ainv)
            }
        };
        let _ = lin;
        for _ in 0..60 {
            let fy = self.forward_lift([y[0], y[1]]);
            let r = match self.domain {
                Domain::Torus => torus_diff(fy, x),
                Domain::Chart { .. } => Vec2::new(fy[0] - x[0], fy[1] - x[1]),
            };
            let j = self.jacobian([y[0], y[1]]);
            let dy = j.try_inverse().ok_or(MapError::InverseFailed(x))? * r;
            y -= dy;
            if dy.norm() <= 1e-15 * (1.0 + y.norm()) {
                let p = [y[0], y[1]];
                return Ok(match self.domain {
                    Domain::Torus => [wrap01(p[0]), wrap01(p[1])],
                    Domain::Chart { .. } => p,
                });
            }
        }
        Err(MapError::InverseFailed(x))
    }

    pub fn inverse_iterate(&self, x: Point, m: usize) -> Result<Point, MapError> {
        (0..m).try_fold(x, |y, _| self.inverse(y))
    }

    /// DT^m(x) by the chain rule; m = 0 gives the identity.
    pub fn jacobian_cocycle(&self, x: Point, m: usize) -> Result<Mat2, MapError> {
        let mut j = Mat2::identity();
        let mut y = x;
        for step in 0..m {
            if let Domain::Chart { .. } = self.domain {
                if !(y[0].is_finite() && y[1].is_finite()) || y[0].abs().max(y[1].abs()) > 1e6 {
                    return Err(MapError::OrbitLeftDomain { point: x, step });
                }
            }
            j = self.jacobian(y) * j;
            y = self.forward(y);
        }
        Ok(j)
    }

    /// g^(m)(x) = Π_{k<m} g(T^k x).
    pub fn weight_product(&self, x: Point, m: usize) -> f64 {
        let mut y = x;
        let mut w = 1.0;
        for _ in 0..m {
            w *= self.weight_at(y);
            y = self.forward(y);
        }
        w
    }
}

// ---------------------------------------------------------------------------
// Splitting and hyperbolicity exponents

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingField {
    pub ref_iterations: usize,
    /// Minimum admissible angle between stable and unstable directions.
    pub angle_floor: f64,
}

impl Default for SplittingField {
    fn default() -> Self {
        SplittingField { ref_iterations: 30, angle_floor: 1e-3 }
    }
}

pub fn splitting_power_iteration(n_ref: usize) -> SplittingField {
    assert!(n_ref >= 8, "reference iterations must be at least 8");
    SplittingField { ref_iterations: n_ref, ..Default::default() }
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    let c = (a.dot(&b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos()
}

impl SplittingField {
    /// Unit vector spanning approximate E^u(x): push (1,0) forward from T^{-N}x.
    pub fn unstable(&self, sys: &MapSystem, x: Point) -> Result<Vec2, MapError> {
        let mut orbit = Vec::with_capacity(self.ref_iterations);
        let mut y = x;
        for _ in 0..self.ref_iterations {
            y = sys.inverse(y)?;
            orbit.push(y);
        }
        let mut v = Vec2::new(1.0, 0.0);
        for p in orbit.iter().rev() {
            v = sys.jacobian(*p) * v;
            v /= v.norm();
        }
        Ok(v)
    }

    /// Unit vector spanning approximate E^s(x): pull (1,0) back from T^N x.
    pub fn stable(&self, sys: &MapSystem, x: Point) -> Result<Vec2, MapError> {
        let mut orbit = Vec::with_capacity(self.ref_iterations);
        let mut y = x;
        for _ in 0..self.ref_iterations {
            orbit.push(y);
            y = sys.forward(y);
        }
        let mut v = Vec2::new(1.0, 0.0);
        for p in orbit.iter().rev() {
            // D(T^{-1}) at T(p) is DT(p)^{-1}
            let j = sys.jacobian(*p);
            v = j.try_inverse().ok_or(MapError::DegenerateDirection { point: x, angle: 0.0 })? * v;
            v /= v.norm();
        }
        Ok(v)
    }

    pub fn directions(&self, sys: &MapSystem, x: Point) -> Result<(Vec2, Vec2), MapError> {
        let s = self.stable(sys, x)?;
        let u = self.unstable(sys, x)?;
        let ang = angle_between(s, u);
        if !(ang >= self.angle_floor) {
            return Err(MapError::DegenerateDirection { point: x, angle: ang });
        }
        Ok((s, u))
    }
}

/// (λ_x(T^m), ν_x(T^m)) for d_s = d_u = 1.
pub fn hyperbolicity_exponents(
    sys: &MapSystem,
    split: &SplittingField,
    x: Point,
    m: usize,
) -> Result<(f64, f64), MapError> {
    assert!(m >= 1);
    let dm = sys.jacobian_cocycle(x, m)?;
    let y = sys.iterate(x, m);
    let s_end = split.stable(sys, y)?;
    let u = split.unstable(sys, x)?;
    let ang = angle_between(s_end, sys.jacobian_cocycle(x, m)? * u);
    if !(ang >= split.angle_floor) {
        return Err(MapError::DegenerateDirection { point: x, angle: ang });
    }
    let pull = dm.try_inverse().ok_or(MapError::DegenerateDirection { point: x, angle: 0.0 })? * s_end;
    Ok((1.0 / pull.norm(), (dm * u).norm()))
}

/// max{λ^p, ν^q} from precomputed exponents.
pub fn lambda_pq(lam: f64, nu: f64, p: f64, q: f64) -> f64 {
    lam.powf(p).max(nu.powf(q))
}

pub fn lambda_pqm(
    sys: &MapSystem,
    split: &SplittingField,
    x: Point,
    p: f64,
    q: f64,
    m: usize,
) -> Result<f64, MapError> {
    let (l, n) = hyperbolicity_exponents(sys, split, x, m)?;
    Ok(lambda_pq(l, n, p, q))
}

/// |det(DT^m|E^u)|(x) = ‖DT^m(x)·u(x)‖ for d_u = 1.
pub fn unstable_jacobian(sys: &MapSystem, split: &SplittingField, x: Point, m: usize) -> Result<f64, MapError> {
    let u = split.unstable(sys, x)?;
    Ok((sys.jacobian_cocycle(x, m)? * u).norm())
}

/// Orientation sign of DT^m on E^u: +1 if the pushed unstable vector keeps
/// its orientation relative to the unstable direction at T^m x.
pub fn unstable_orientation(sys: &MapSystem, split: &SplittingField, x: Point, m: usize) -> Result<f64, MapError> {
    let u = split.unstable(sys, x)?;
    let y = sys.iterate(x, m);
    let uy = split.unstable(sys, y)?;
    let v = sys.jacobian_cocycle(x, m)? * u;
    Ok(v.dot(&uy).signum())
}

// ---------------------------------------------------------------------------
// Polarizations and cone checks

/// Symmetric angular sector {ξ : angle(±ξ, center) ≤ half_angle}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub center: f64,
    pub half_angle: f64,
}

impl Sector {
    /// Angular distance from θ to the sector axis, in [0, π/2].
    pub fn axis_distance(&self, theta: f64) -> f64 {
        let d = (theta - self.center).rem_euclid(PI);
        d.min(PI - d)
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.axis_distance(theta) <= self.half_angle
    }

    /// Angle outside the sector (0 inside).
    pub fn excess(&self, theta: f64) -> f64 {
        (self.axis_distance(theta) - self.half_angle).max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

/// Θ = (C₊, C₋, φ₊, φ₋), plus the shrink used for the refined cones C̃±.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polarization {
    pub cone_plus: Sector,
    pub cone_minus: Sector,
    pub tilde_shrink: f64,
}

/// C^∞ step: 0 for s ≤ 0, 1 for s ≥ 1.
pub fn smooth_step(s: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let a = f(s);
    let b = f(1.0 - s);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

impl Polarization {
    pub fn new(cone_plus: Sector, cone_minus: Sector, tilde_shrink: f64) -> Result<Self, MapError> {
        let gap = Sector { center: cone_plus.center, half_angle: 0.0 }.axis_distance(cone_minus.center)
            - cone_plus.half_angle
            - cone_minus.half_angle;
        if gap <= 0.0 || tilde_shrink <= 0.0 || tilde_shrink >= cone_plus.half_angle.min(cone_minus.half_angle) {
            return Err(MapError::ConeViolation {
                witness: vec![[cone_plus.center.cos(), cone_plus.center.sin()]],
                margin: gap,
            });
        }
        Ok(Polarization { cone_plus, cone_minus, tilde_shrink })
    }

    /// C₊ about the ξ₁ axis and C₋ about the ξ₂ axis, 40° half-angles.
    pub fn standard() -> Result<Self, MapError> {
        Self::rotated(0.0)
    }

    pub fn rotated(angle: f64) -> Result<Self, MapError> {
        let h = 40f64.to_radians();
        Self::new(
            Sector { center: angle, half_angle: h },
            Sector { center: angle + FRAC_PI_2, half_angle: h },
            10f64.to_radians(),
        )
    }

    pub fn cone(&self, s: Sign) -> Sector {
        match s {
            Sign::Plus => self.cone_plus,
            Sign::Minus => self.cone_minus,
        }
    }

    pub fn tilde_cone(&self, s: Sign) -> Sector {
        let c = self.cone(s);
        Sector { center: c.center, half_angle: c.half_angle - self.tilde_shrink }
    }

    /// φ_σ(θ); φ₊ + φ₋ = 1.
    pub fn phi(&self, s: Sign, theta: f64) -> f64 {
        let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
        let ap = f(self.cone_plus.excess(theta));
        let am = f(self.cone_minus.excess(theta));
        let plus = am / (am + ap);
        match s {
            Sign::Plus => plus,
            Sign::Minus => 1.0 - plus,
        }
    }

    /// φ̃_σ: φ̃₊ = 1 off C₋ and 0 on C̃₋ (symmetrically for φ̃₋).
    pub fn phi_tilde(&self, s: Sign, theta: f64) -> f64 {
        let other = match s {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        };
        let c = self.cone(other);
        let t = self.tilde_cone(other);
        let d = c.axis_distance(theta);
        smooth_step((d - t.half_angle) / (c.half_angle - t.half_angle))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConeReport {
    /// Smallest angular slack of DT^tr images inside C′₋ over sampled points.
    pub pointwise_margin: f64,
    /// Same for the secant matrices L_xy.
    pub secant_margin: f64,
    pub n_points: usize,
    pub n_pairs: usize,
}

/// Smallest slack (radians) of M(complement of C₊) inside C′₋; negative on violation.
pub fn cone_margin(m: &Mat2, theta: &Polarization, theta_out: &Polarization) -> f64 {
    let cp = theta.cone_plus;
    let cm = theta_out.cone_minus;
    let n = 720;
    let mut worst = f64::INFINITY;
    let mut eval = |ang: f64| {
        if cp.axis_distance(ang) < cp.half_angle - 1e-15 {
            return;
        }
        let v = m * Vec2::new(ang.cos(), ang.sin());
        let img = v[1].atan2(v[0]);
        worst = worst.min(cm.half_angle - cm.axis_distance(img));
    };
    for k in 0..n {
        eval(PI * k as f64 / n as f64);
    }
    eval(cp.center + cp.half_angle);
    eval(cp.center - cp.half_angle);
    worst
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((1.0 - x) / 2.0, w / 2.0));
    }
    out.reverse();
    out
}

/// Mean-value secant matrix L_xy = ∫₀¹ DT(y + t(x − y)) dt.
pub fn secant_matrix(sys: &MapSystem, x: Point, y: Point) -> Mat2 {
    let gl = gauss_legendre01(16);
    let mut acc = Mat2::zeros();
    for (t, w) in gl {
        let z = [y[0] + t * (x[0] - y[0]), y[1] + t * (x[1] - y[1])];
        acc += sys.jacobian(z) * w;
    }
    acc
}

pub fn check_cone_hyperbolic(
    sys: &MapSystem,
    theta: &Polarization,
    theta_out: &Polarization,
    n_samples: usize,
    seed: u64,
) -> Result<ConeReport, MapError> {
    let hw = match sys.domain {
        Domain::Chart { half_width } => half_width,
        Domain::Torus => return Err(MapError::NotChart),
    };
    let mut r = rng(seed);
    let mut pt = || [r.gen_range(-hw..hw), r.gen_range(-hw..hw)];
    let pts: Vec<Point> = (0..n_samples).map(|_| pt()).collect();
    let pairs: Vec<(Point, Point)> = (0..n_samples).map(|_| (pt(), pt())).collect();
    let pm = crate::par::map_slice(&pts, |x| (cone_margin(&sys.jacobian(*x).transpose(), theta, theta_out), *x));
    let sm = crate::par::map_slice(&pairs, |(x, y)| {
        (cone_margin(&secant_matrix(sys, *x, *y).transpose(), theta, theta_out), *x, *y)
    });
    let (pmin, pw) = pm.iter().fold((f64::INFINITY, [0.0; 2]), |a, b| if b.0 < a.0 { *b } else { a });
    let (smin, sx, sy) =
        sm.iter().fold((f64::INFINITY, [0.0; 2], [0.0; 2]), |a, b| if b.0 < a.0 { *b } else { a });
    if pmin <= 0.0 {
        return Err(MapError::ConeViolation { witness: vec![pw], margin: pmin });
    }
    if smin <= 0.0 {
        return Err(MapError::ConeViolation { witness: vec![sx, sy], margin: smin });
    }
    Ok(ConeReport { pointwise_margin: pmin, secant_margin: smin, n_points: n_samples, n_pairs: n_samples })
}
