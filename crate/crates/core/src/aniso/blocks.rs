//! Blocks S^{ℓ,τ}_{n,σ} = ψ_{Θ′,n,σ}(D) ∘ L ∘ ψ̃_{Θ,ℓ,τ}(D) with Lu = G·(u∘T),
//! on a box grid and as dense matrices on a sampled frequency lattice.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::Serialize;

use super::grid::{BoxGrid, GridFn, Spectral};
use super::trace::{TraceData, TRACE_GRID};
use super::hook::{chart_support_points, h_exponents, HExponents, LinkMask};
use super::{dyadic_partition_eval, dyadic_partition_tilde, AnisoError, DyadicIndex};
use crate::map_model::{Domain, MapError, MapSystem, Point, Polarization};
use crate::numerics::{rng, C64};
use crate::par;

/// Largest supported band index.
pub const N_MAX_CAP: u32 = 9;

/// G and T sampled on the grid points where G ≠ 0.
#[derive(Debug)]
struct GridChart {
    support: Vec<usize>,
    weight: Vec<f64>,
    images: Vec<Point>,
}

#[derive(Debug)]
pub struct BlockOperator {
    pub sys: MapSystem,
    pub theta: Polarization,
    pub theta_out: Polarization,
    pub n_max: u32,
    pub grid: BoxGrid,
    pub h: HExponents,
    spectral: Spectral,
    chart: OnceLock<Result<GridChart, AnisoError>>,
    trace: OnceLock<Result<TraceData, AnisoError>>,
}

pub fn assemble_blocks(
    sys: &MapSystem,
    theta: &Polarization,
    theta_out: &Polarization,
    n_max: u32,
    grid: BoxGrid,
) -> Result<BlockOperator, AnisoError> {
    if !matches!(sys.domain, Domain::Chart { .. }) {
        return Err(MapError::NotChart.into());
    }
    if n_max > N_MAX_CAP {
        return Err(AnisoError::InvalidParameter(format!("n_max = {n_max} exceeds {N_MAX_CAP}")));
    }
    // ψ̃_{n_max} reaches |ξ| < 2^{n_max+2}
    let needed = 2f64.powi(n_max as i32 + 2);
    if grid.nyquist() < needed {
        return Err(AnisoError::GridTooCoarse { nyquist: grid.nyquist(), needed });
    }
    let h = h_exponents(sys, theta, theta_out, 720)?;
    Ok(BlockOperator {
        sys: sys.clone(),
        theta: theta.clone(),
        theta_out: theta_out.clone(),
        n_max,
        grid,
        h,
        spectral: Spectral::new(grid.n),
        chart: OnceLock::new(),
        trace: OnceLock::new(),
    })
}

impl BlockOperator {
    pub fn labels(&self) -> Vec<DyadicIndex> {
        DyadicIndex::all(self.n_max)
    }

    fn chart(&self) -> Result<&GridChart, AnisoError> {
        self.chart
            .get_or_init(|| {
                let g = self.grid;
                let w: Vec<f64> = par::map_range(g.len(), |i| self.sys.weight_at(g.point(i)));
                let support: Vec<usize> = (0..g.len()).filter(|&i| w[i] != 0.0).collect();
                let images: Vec<Point> = par::map_slice(&support, |&i| self.sys.forward(g.point(i)));
                let lim = 0.75 * g.half_width;
                if images.iter().any(|p| p[0].abs() > lim || p[1].abs() > lim) {
                    return Err(AnisoError::SupportMarginViolated { fraction: 1.0 });
                }
                let weight = support.iter().map(|&i| w[i]).collect();
                Ok(GridChart { support, weight, images })
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Lu = G·(u∘T), u∘T by cubic interpolation.
    pub fn apply_l(&self, u: &GridFn) -> Result<GridFn, AnisoError> {
        let c = self.chart()?;
        let vals: Vec<C64> = par::map_range(c.support.len(), |k| u.interp(c.images[k]) * c.weight[k]);
        let mut out = GridFn::zeros(self.grid);
        for (k, &i) in c.support.iter().enumerate() {
            out.data[i] = vals[k];
        }
        Ok(out)
    }

    pub fn input_filter(&self, input: DyadicIndex, u: &GridFn) -> GridFn {
        u.multiply(&self.spectral, &|xi| dyadic_partition_tilde(&self.theta, input, xi))
    }

    pub fn output_filter(&self, output: DyadicIndex, v: &GridFn) -> GridFn {
        v.multiply(&self.spectral, &|xi| dyadic_partition_eval(&self.theta_out, output, xi))
    }

    pub fn apply(&self, input: DyadicIndex, output: DyadicIndex, u: &GridFn) -> Result<GridFn, AnisoError> {
        let v = self.apply_l(&self.input_filter(input, u))?;
        Ok(self.output_filter(output, &v))
    }

    /// All outputs of one input band, sharing the composition step.
    pub fn apply_column(&self, input: DyadicIndex, u: &GridFn) -> Result<Vec<(DyadicIndex, GridFn)>, AnisoError> {
        let v = self.apply_l(&self.input_filter(input, u))?;
        Ok(self.labels().into_iter().map(|o| (o, self.output_filter(o, &v))).collect())
    }

    /// χ_{n_max}(D)·L(ψ̃_{ℓ,τ}(D)u), the expected sum of a column.
    pub fn column_total(&self, input: DyadicIndex, u: &GridFn) -> Result<GridFn, AnisoError> {
        let v = self.apply_l(&self.input_filter(input, u))?;
        let n = self.n_max;
        Ok(v.multiply(&self.spectral, &|xi| super::chi_n(n, xi[0].hypot(xi[1]))))
    }

    /// Max |interp(e_ξ)(T x) − e^{iξ·T(x)}| over the support of G.
    pub fn interpolation_error(&self, xi: [f64; 2]) -> Result<f64, AnisoError> {
        let c = self.chart()?;
        let wave = GridFn::sample(self.grid, |x| C64::from_polar(1.0, xi[0] * x[0] + xi[1] * x[1]));
        let errs =
            par::map_slice(&c.images, |p| (wave.interp(*p) - C64::from_polar(1.0, xi[0] * p[0] + xi[1] * p[1])).norm());
        Ok(errs.into_iter().fold(0.0, f64::max))
    }

    /// Coefficients for the flat traces, on the fixed trace grid.
    pub fn trace_data(&self) -> Result<&TraceData, AnisoError> {
        self.trace.get_or_init(|| TraceData::new(&self.sys, TRACE_GRID)).as_ref().map_err(|e| e.clone())
    }

    pub fn link_mask(&self) -> LinkMask {
        LinkMask::linked(self.n_max, &self.h)
    }

    /// Dense M on a lattice sample: entry ψ_{out}(η)·L̂(η,ξ)·ψ̃_{in}(ξ).
    pub fn lattice_matrix(&self, lattice: &Lattice) -> Result<DMatrix<C64>, AnisoError> {
        lattice_matrix(&self.sys, &self.theta, &self.theta_out, lattice)
    }

    /// One block of the lattice matrix (rows labelled `output`, columns `input`).
    pub fn dense_block(
        &self,
        input: DyadicIndex,
        output: DyadicIndex,
        lattice: &Lattice,
    ) -> Result<DMatrix<C64>, AnisoError> {
        let m = self.lattice_matrix(lattice)?;
        let rows: Vec<usize> = lattice.indices_of(output);
        let cols: Vec<usize> = lattice.indices_of(input);
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]))
    }
}

/// Complementary block patterns (M_b linked, M_c unlinked).
pub fn split_bc(b: &BlockOperator) -> (LinkMask, LinkMask) {
    let mb = b.link_mask();
    let mc = mb.complement();
    (mb, mc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LatticeSite {
    pub label: DyadicIndex,
    pub xi: [f64; 2],
}

/// Retained frequencies, each tagged with the band it represents. The same
/// list indexes rows (as η with output label) and columns (as ξ with input label).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lattice {
    pub half_width: f64,
    pub sites: Vec<LatticeSite>,
}

impl Lattice {
    /// `per_band` distinct lattice points (π/B)·Z² per label n ≤ n_max, drawn
    /// among points where ψ_label ≥ 1/4.
    pub fn sample(theta: &Polarization, n_max: u32, per_band: usize, half_width: f64, seed: u64) -> Lattice {
        let step = PI / half_width;
        let mut r = rng(seed);
        let mut taken: Vec<[i64; 2]> = Vec::new();
        let mut sites = Vec::new();
        for label in DyadicIndex::all(n_max) {
            let kmax = (2f64.powi(label.n as i32 + 1) / step).ceil() as i64;
            let mut cands: Vec<[i64; 2]> = Vec::new();
            for a in -kmax..=kmax {
                for b in -kmax..=kmax {
                    let xi = [a as f64 * step, b as f64 * step];
                    if dyadic_partition_eval(theta, label, xi) >= 0.25 && !taken.contains(&[a, b]) {
                        cands.push([a, b]);
                    }
                }
            }
            cands.shuffle(&mut r);
            let mut pick: Vec<[i64; 2]> = cands.into_iter().take(per_band).collect();
            pick.sort();
            for k in pick {
                taken.push(k);
                sites.push(LatticeSite { label, xi: [k[0] as f64 * step, k[1] as f64 * step] });
            }
        }
        Lattice { half_width, sites }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn indices_of(&self, label: DyadicIndex) -> Vec<usize> {
        (0..self.sites.len()).filter(|&i| self.sites[i].label == label).collect()
    }

    pub fn max_freq(&self) -> f64 {
        self.sites.iter().map(|s| s.xi[0].hypot(s.xi[1])).fold(0.0, f64::max)
    }
}

/// Trapezoid rule over a box containing supp G, fine enough that
/// ∫ G(z)·e^{i(ξ·T(z) − η·z)} dz is resolved for phases up to `max_freq`.
#[derive(Clone, Debug)]
pub struct Quadrature {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// (row, col, G, T) for nodes with G ≠ 0.
    nodes: Vec<(u32, u32, f64, Point)>,
    cell: f64,
}

impl Quadrature {
    pub fn new(sys: &MapSystem, max_freq: f64) -> Result<Quadrature, AnisoError> {
        let pts = chart_support_points(sys, 201)?;
        let hw = match sys.domain {
            Domain::Chart { half_width } => half_width,
            Domain::Torus => return Err(MapError::NotChart.into()),
        };
        // oscillation of the smooth bump's transform leaves a margin of ~600
        // before aliasing reaches 1e−15 relative
        let h = TAU / (max_freq + 600.0);
        if pts.is_empty() {
            return Ok(Quadrature { xs: vec![], ys: vec![], nodes: vec![], cell: h * h });
        }
        let pad = 4.0 * hw / 200.0;
        let lo = |c: usize| pts.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min) - pad;
        let hi = |c: usize| pts.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max) + pad;
        let axis = |c: usize| -> Vec<f64> {
            let (a, b) = (lo(c).max(-hw), hi(c).min(hw));
            let k = ((b - a) / h).ceil() as usize;
            (0..=k).map(|i| a + i as f64 * h).collect()
        };
        let (xs, ys) = (axis(0), axis(1));
        let rows: Vec<Vec<(u32, u32, f64, Point)>> = par::map_range(xs.len(), |i| {
            let mut out = Vec::new();
            for (j, &y) in ys.iter().enumerate() {
                let x = [xs[i], y];
                let g = sys.weight_at(x);
                if g != 0.0 {
                    out.push((i as u32, j as u32, g, sys.forward(x)));
                }
            }
            out
        });
        Ok(Quadrature { xs, ys, nodes: rows.into_iter().flatten().collect(), cell: h * h })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Area weight h² of one node.
    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// W_ξ(z) = G(z)·e^{iξ·T(z)} at the nonzero nodes.
    pub fn column(&self, xi: [f64; 2]) -> Vec<C64> {
        self.nodes.iter().map(|(_, _, g, t)| C64::from_polar(*g, xi[0] * t[0] + xi[1] * t[1])).collect()
    }

    /// Σ h²·W(z)·e^{−iη·z}, with the separable phase tabulated per axis.
    pub fn project(&self, w: &[C64], eta: [f64; 2]) -> C64 {
        let a: Vec<C64> = self.xs.iter().map(|x| C64::from_polar(1.0, -eta[0] * x)).collect();
        let b: Vec<C64> = self.ys.iter().map(|y| C64::from_polar(1.0, -eta[1] * y)).collect();
        let mut acc = C64::new(0.0, 0.0);
        let mut row = C64::new(0.0, 0.0);
        let mut cur = u32::MAX;
        for (k, (i, j, _, _)) in self.nodes.iter().enumerate() {
            if *i != cur {
                if cur != u32::MAX {
                    acc += row * a[cur as usize];
                }
                row = C64::new(0.0, 0.0);
                cur = *i;
            }
            row += w[k] * b[*j as usize];
        }
        if cur != u32::MAX {
            acc += row * a[cur as usize];
        }
        acc * self.cell
    }

    /// L̂(η, ξ) = ∫ G(z)·e^{i(ξ·T(z) − η·z)} dz.
    pub fn symbol(&self, eta: [f64; 2], xi: [f64; 2]) -> C64 {
        self.project(&self.column(xi), eta)
    }
}

/// Largest ‖DT^tr‖ over the support samples.
pub(super) fn max_stretch(sys: &MapSystem) -> Result<f64, AnisoError> {
    let pts = chart_support_points(sys, 41)?;
    let s = pts
        .iter()
        .map(|x| {
            let j = sys.jacobian(*x);
            j.transpose().svd(false, false).singular_values.max()
        })
        .fold(0.0, f64::max);
    Ok(if s > 0.0 { s } else { sys.jacobian([0.0, 0.0]).norm() })
}

/// Dense matrix of M on the lattice, entries normalised by the box area 4B².
pub fn lattice_matrix(
    sys: &MapSystem,
    theta: &Polarization,
    theta_out: &Polarization,
    lattice: &Lattice,
) -> Result<DMatrix<C64>, AnisoError> {
    let f = lattice.max_freq();
    let quad = Quadrature::new(sys, f * (max_stretch(sys)? + 1.0))?;
    let k = lattice.len();
    let area = 4.0 * lattice.half_width * lattice.half_width;
    let cols: Vec<Vec<C64>> = par::map_range(k, |c| {
        let s = lattice.sites[c];
        let wt = dyadic_partition_tilde(theta, s.label, s.xi);
        if wt == 0.0 || quad.is_empty() {
            return vec![C64::new(0.0, 0.0); k];
        }
        let w = quad.column(s.xi);
        lattice
            .sites
            .iter()
            .map(|r| {
                let wo = dyadic_partition_eval(theta_out, r.label, r.xi);
                if wo == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    quad.project(&w, r.xi) * (wo * wt / area)
                }
            })
            .collect()
    });
    Ok(DMatrix::from_fn(k, k, |r, c| cols[c][r]))
}

/// Entrywise split of a lattice matrix by a block pattern.
#[derive(Clone, Debug)]
pub struct LinkSplit {
    pub mb: DMatrix<C64>,
    pub mc: DMatrix<C64>,
}

impl LinkSplit {
    pub fn new(m: &DMatrix<C64>, lattice: &Lattice, mask: &LinkMask) -> LinkSplit {
        let k = lattice.len();
        let linked = |r: usize, c: usize| mask.get(lattice.sites[c].label, lattice.sites[r].label);
        let zero = C64::new(0.0, 0.0);
        LinkSplit {
            mb: DMatrix::from_fn(k, k, |r, c| if linked(r, c) { m[(r, c)] } else { zero }),
            mc: DMatrix::from_fn(k, k, |r, c| if linked(r, c) { zero } else { m[(r, c)] }),
        }
    }

    /// max |M − M_b − M_c|.
    pub fn defect(&self, m: &DMatrix<C64>) -> f64 {
        (m - &self.mb - &self.mc).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
