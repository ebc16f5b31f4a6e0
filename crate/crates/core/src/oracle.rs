//! Exact evaluation of partition functions and pinned densities on tiny
//! boxes, used as ground truth for the samplers.
//!
//! Two independent routes:
//!
//! * [`exact_z_chain`] integrates a one-dimensional box site by site with a
//!   transfer operator discretised by composite Gauss-Legendre rules. Panels
//!   containing the kink of `exp(-|x - y|)` are split at the kink.
//! * [`SubsetExpansion`] expands the delta-pinned measure over the set `A` of
//!   pinned sites. With `A` clamped to 0 each term is a free-field integral:
//!   exact for SOS (sum over height orderings), closed-form orthant
//!   probabilities for small Gaussian components, and grid transfer for
//!   longer Gaussian paths and cycles.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{param_err, Error, Result};
use crate::lattice::Lattice;
use crate::model::{InteractionPotential, PinningSpec};
use crate::special::gauss_legendre;

const PANEL_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Height cutoff `T`; `None` picks a default from the interaction and size.
    pub cutoff: Option<f64>,
    pub nodes_per_unit: usize,
    pub target_relative_error: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            cutoff: None,
            nodes_per_unit: 16,
            target_relative_error: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.cutoff {
            if !(t >= 10.0 && t.is_finite()) {
                return Err(param_err!("height cutoff must be at least 10 (got {t})"));
            }
        }
        if self.nodes_per_unit < 2 {
            return Err(param_err!("need at least 2 nodes per unit interval"));
        }
        if !(self.target_relative_error > 0.0) {
            return Err(param_err!("target error must be positive"));
        }
        Ok(())
    }

    /// Cutoff used for a box with `sites` sites along its longest path.
    pub fn cutoff_for(&self, psi: &InteractionPotential, sites: usize) -> f64 {
        let root = (sites as f64).sqrt();
        self.cutoff.unwrap_or(match psi {
            InteractionPotential::Gaussian => (5.0 * root).max(12.0),
            _ => (8.0 * root).max(40.0),
        })
    }

    fn panel_width(&self) -> f64 {
        PANEL_ORDER as f64 / self.nodes_per_unit as f64
    }

    fn refined(&self) -> Self {
        Self {
            nodes_per_unit: self.nodes_per_unit * 2,
            ..*self
        }
    }

    /// Rough upper bound on the relative mass lost above the cutoff.
    fn truncation_bound(psi: &InteractionPotential, cutoff: f64, sites: usize) -> f64 {
        let per_site = match psi {
            InteractionPotential::Gaussian => (-cutoff * cutoff / 2.0).exp(),
            _ => (-cutoff).exp(),
        };
        per_site * sites as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    pub z: f64,
    pub log_z: f64,
    pub rho: f64,
    /// Probability that each site is pinned.
    pub site_pin_probabilities: Vec<f64>,
    pub error_estimate: f64,
}

impl ExactResult {
    pub fn sum_of_marginals(&self) -> f64 {
        self.site_pin_probabilities.iter().sum()
    }
}

struct Panel {
    lo: f64,
    hi: f64,
    first: usize,
}

struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: Vec<Panel>,
    base: (Vec<f64>, Vec<f64>),
}

impl Grid {
    fn new(cutoff: f64, breaks: &[f64], width: f64) -> Self {
        let base = gauss_legendre(PANEL_ORDER);
        let mut cuts: Vec<f64> = [0.0, cutoff]
            .into_iter()
            .chain(breaks.iter().copied().filter(|&b| b > 0.0 && b < cutoff))
            .collect();
        cuts.sort_unstable_by(f64::total_cmp);
        cuts.dedup();
        let mut grid = Grid {
            nodes: Vec::new(),
            weights: Vec::new(),
            panels: Vec::new(),
            base,
        };
        for w in cuts.windows(2) {
            let count = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / count as f64;
            for p in 0..count {
                let lo = w[0] + p as f64 * h;
                let hi = if p + 1 == count { w[1] } else { lo + h };
                grid.panels.push(Panel {
                    lo,
                    hi,
                    first: grid.nodes.len(),
                });
                for (x, wt) in grid.base.0.iter().zip(&grid.base.1) {
                    grid.nodes.push(lo + 0.5 * (hi - lo) * (x + 1.0));
                    grid.weights.push(0.5 * (hi - lo) * wt);
                }
            }
        }
        grid
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn map_base(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.base
            .0
            .iter()
            .zip(&self.base.1)
            .map(move |(x, w)| (lo + 0.5 * (hi - lo) * (x + 1.0), 0.5 * (hi - lo) * w))
    }
}

/// Barycentric Lagrange basis values at `z` for the nodes `xs`.
fn lagrange_basis(xs: &[f64], z: f64, out: &mut [f64]) {
    if let Some(k) = xs.iter().position(|&x| x == z) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[k] = 1.0;
        return;
    }
    let mut total = 0.0;
    for (k, &xk) in xs.iter().enumerate() {
        let lambda: f64 = xs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &xj)| 1.0 / (xk - xj))
            .product();
        out[k] = lambda / (z - xk);
        total += out[k];
    }
    out.iter_mut().for_each(|v| *v /= total);
}

/// Discretised `g -> int g(x) K(x, y) dx` on grid nodes plus the point 0.
///
/// Row/column `n` (one past the nodes) is the point `y = 0` / the atom at 0;
/// the atom column is stored without the factor `epsilon`.
struct Transfer {
    n: usize,
    matrix: Vec<f64>,
}

impl Transfer {
    fn new(grid: &Grid, psi: &InteractionPotential) -> Self {
        let n = grid.len();
        let kernel = |x: f64, y: f64| (-psi.eval(x - y)).exp();
        let mut matrix = vec![0.0; (n + 1) * (n + 1)];
        let mut basis = vec![0.0; PANEL_ORDER];
        for r in 0..=n {
            let y = if r < n { grid.nodes[r] } else { 0.0 };
            let row = &mut matrix[r * (n + 1)..(r + 1) * (n + 1)];
            for panel in &grid.panels {
                let cols = panel.first..panel.first + PANEL_ORDER;
                if panel.lo < y && y < panel.hi {
                    let xs = &grid.nodes[cols.clone()];
                    for (lo, hi) in [(panel.lo, y), (y, panel.hi)] {
                        for (z, w) in grid.map_base(lo, hi) {
                            lagrange_basis(xs, z, &mut basis);
                            let kz = w * kernel(z, y);
                            for (c, b) in cols.clone().zip(&basis) {
                                row[c] += kz * b;
                            }
                        }
                    }
                } else {
                    for c in cols {
                        row[c] = grid.weights[c] * kernel(grid.nodes[c], y);
                    }
                }
            }
            row[n] = kernel(0.0, y);
        }
        Self { n, matrix }
    }

    fn apply(&self, v: &[f64], epsilon: f64) -> Vec<f64> {
        let n = self.n;
        (0..=n)
            .map(|r| {
                let row = &self.matrix[r * (n + 1)..(r + 1) * (n + 1)];
                row[..n].iter().zip(&v[..n]).map(|(m, x)| m * x).sum::<f64>() + epsilon * row[n] * v[n]
            })
            .collect()
    }
}

fn normalise(v: &mut [f64]) -> f64 {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
        m.ln()
    } else {
        f64::NEG_INFINITY
    }
}

struct ChainOutcome {
    log_z: f64,
    pins: Vec<f64>,
}

fn chain_once(sites: usize, psi: &InteractionPotential, pin: &PinningSpec, quad: &QuadratureSpec) -> ChainOutcome {
    let cutoff = quad.cutoff_for(psi, sites);
    let (epsilon, well) = match *pin {
        PinningSpec::Delta { epsilon } => (epsilon, None),
        PinningSpec::SquareWell { a, b } => (0.0, Some((a, b))),
        PinningSpec::None => (0.0, None),
    };
    let breaks: Vec<f64> = well.iter().map(|w| w.0).collect();
    let grid = Grid::new(cutoff, &breaks, quad.panel_width());
    let transfer = Transfer::new(&grid, psi);
    let n = grid.len();
    let point = |k: usize| if k < n { grid.nodes[k] } else { 0.0 };
    let site_factor = |i: usize, k: usize| {
        let x = point(k);
        let outside = if sites == 1 {
            2.0
        } else if i == 0 || i + 1 == sites {
            1.0
        } else {
            0.0
        };
        let reward = match well {
            Some((a, b)) if x <= a => b,
            _ => 0.0,
        };
        (reward - outside * psi.eval(x)).exp()
    };
    let site_vec = |i: usize| -> Vec<f64> { (0..=n).map(|k| site_factor(i, k)).collect() };
    let mass = |u: &[f64]| -> f64 { (0..n).map(|k| grid.weights[k] * u[k]).sum::<f64>() + epsilon * u[n] };

    let mut forward = Vec::with_capacity(sites);
    let mut log_scale = 0.0;
    let mut alpha = site_vec(0);
    log_scale += normalise(&mut alpha);
    forward.push(alpha);
    for i in 1..sites {
        let prev = forward.last().unwrap();
        let mut next = transfer.apply(prev, epsilon);
        for (k, v) in next.iter_mut().enumerate() {
            *v *= site_factor(i, k);
        }
        log_scale += normalise(&mut next);
        forward.push(next);
    }
    let log_z = log_scale + mass(&forward[sites - 1]).ln();

    let mut backward = vec![vec![1.0; n + 1]; sites];
    for i in (0..sites - 1).rev() {
        let weighted: Vec<f64> = backward[i + 1]
            .iter()
            .zip(site_vec(i + 1))
            .map(|(b, s)| b * s)
            .collect();
        let mut beta = transfer.apply(&weighted, epsilon);
        normalise(&mut beta);
        backward[i] = beta;
    }

    let pins = (0..sites)
        .map(|i| {
            let (a, b) = (&forward[i], &backward[i]);
            let total: f64 = (0..n).map(|k| grid.weights[k] * a[k] * b[k]).sum::<f64>() + epsilon * a[n] * b[n];
            let pinned = match well {
                Some((width, _)) => (0..n)
                    .filter(|&k| grid.nodes[k] <= width)
                    .map(|k| grid.weights[k] * a[k] * b[k])
                    .sum::<f64>(),
                None => epsilon * a[n] * b[n],
            };
            pinned / total
        })
        .collect();
    ChainOutcome { log_z, pins }
}

fn finish(log_z: f64, pins: Vec<f64>, error: f64) -> ExactResult {
    let rho = pins.iter().sum::<f64>() / pins.len() as f64;
    ExactResult {
        z: log_z.exp(),
        log_z,
        rho,
        site_pin_probabilities: pins,
        error_estimate: error,
    }
}

/// Exact `Z` and pinned density of a one-dimensional box of `sites` sites.
pub fn exact_z_chain(
    sites: usize,
    psi: &InteractionPotential,
    pin: &PinningSpec,
    quad: &QuadratureSpec,
) -> Result<ExactResult> {
    quad.validate()?;
    pin.validate()?;
    if !(1..=64).contains(&sites) {
        return Err(param_err!("chain oracle supports 1..=64 sites (got {sites})"));
    }
    if let InteractionPotential::Custom(_) = psi {
        return Err(Error::Usage(
            "chain oracle supports the SOS and Gaussian interactions".into(),
        ));
    }
    let coarse = chain_once(sites, psi, pin, quad);
    let fine = chain_once(sites, psi, pin, &quad.refined());
    let drift = coarse
        .pins
        .iter()
        .zip(&fine.pins)
        .map(|(a, b)| (a - b).abs())
        .fold((coarse.log_z - fine.log_z).abs(), f64::max);
    let error = drift + QuadratureSpec::truncation_bound(psi, quad.cutoff_for(psi, sites), sites);
    if !(error <= quad.target_relative_error) || !fine.log_z.is_finite() {
        return Err(Error::Numerical(format!(
            "chain quadrature error {error:.3e} exceeds target {:.1e}; use a denser grid or larger cutoff",
            quad.target_relative_error
        )));
    }
    Ok(finish(fine.log_z, fine.pins, error))
}

/// `(epsilon / |Λ|) d log Z / d epsilon` by Richardson-extrapolated central
/// differences of [`exact_z_chain`]; a cross-check of the direct pinned mass.
pub fn rho_by_derivative(sites: usize, psi: &InteractionPotential, epsilon: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Ok(0.0);
    }
    let log_z = |e: f64| exact_z_chain(sites, psi, &PinningSpec::Delta { epsilon: e }, quad).map(|r| r.log_z);
    let h = 0.05 * epsilon;
    let d1 = (log_z(epsilon + h)? - log_z(epsilon - h)?) / (2.0 * h);
    let d2 = (log_z(epsilon + 0.5 * h)? - log_z(epsilon - 0.5 * h)?) / h;
    let deriv = (4.0 * d2 - d1) / 3.0;
    Ok(epsilon * deriv / sites as f64)
}

/// Free sites of one connected component together with their zero-height
/// neighbour counts.
struct Component {
    sites: Vec<usize>,
    /// Number of bonds to the exterior or to clamped sites.
    field: Vec<usize>,
    /// Bonds as local index pairs.
    bonds: Vec<(usize, usize)>,
}

fn components(lat: &Lattice, clamped: u32) -> Vec<Component> {
    let n = lat.n_sites();
    let is_free = |x: usize| clamped & (1 << x) == 0;
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] || !is_free(start) {
            continue;
        }
        let mut sites = vec![start];
        seen[start] = true;
        let mut k = 0;
        while k < sites.len() {
            for &y in lat.neighbors(sites[k]) {
                if is_free(y) && !seen[y] {
                    seen[y] = true;
                    sites.push(y);
                }
            }
            k += 1;
        }
        sites.sort_unstable();
        let local = |x: usize| sites.binary_search(&x).unwrap();
        let field = sites
            .iter()
            .map(|&x| lat.outside_bonds(x) + lat.neighbors(x).iter().filter(|&&y| !is_free(y)).count())
            .collect();
        let bonds = sites
            .iter()
            .flat_map(|&x| {
                lat.neighbors(x)
                    .iter()
                    .filter(move |&&y| y > x && is_free(y))
                    .map(move |&y| (x, y))
            })
            .map(|(x, y)| (local(x), local(y)))
            .collect();
        out.push(Component { sites, field, bonds });
    }
    out
}

/// `int_{R+^n} exp(-sum_bonds |x_i - x_j| - sum_i field_i x_i) dx`, exactly.
///
/// Sorting the heights turns the energy into a positive combination of the
/// gaps; summing over orderings is a recursion over the set `S` of the
/// highest sites: `G(S) = (1 / c(S)) sum_{x in S} G(S \ x)`, where `c(S)` is
/// the field on `S` plus the number of bonds leaving `S`.
fn sos_component_integral(c: &Component) -> f64 {
    let n = c.sites.len();
    let full = (1usize << n) - 1;
    let mut g = vec![0.0; 1 << n];
    g[0] = 1.0;
    for s in 1..=full {
        let mut rate = 0.0;
        for i in (0..n).filter(|i| s & (1 << i) != 0) {
            rate += c.field[i] as f64;
        }
        for &(i, j) in &c.bonds {
            if ((s >> i) & 1) != ((s >> j) & 1) {
                rate += 1.0;
            }
        }
        let sum: f64 = (0..n).filter(|i| s & (1 << i) != 0).map(|i| g[s & !(1 << i)]).sum();
        g[s] = sum / rate;
    }
    g[full]
}

fn precision_matrix(c: &Component) -> DMatrix<f64> {
    let n = c.sites.len();
    let mut q = DMatrix::zeros(n, n);
    for (i, &f) in c.field.iter().enumerate() {
        q[(i, i)] += f as f64;
    }
    for &(i, j) in &c.bonds {
        q[(i, i)] += 1.0;
        q[(j, j)] += 1.0;
        q[(i, j)] -= 1.0;
        q[(j, i)] -= 1.0;
    }
    q
}

/// `int_{R+^n} exp(-x^T Q x / 2) dx` for `n <= 3` through the orthant
/// probability of `N(0, Q^{-1})`.
fn gaussian_orthant_integral(c: &Component) -> Result<f64> {
    use std::f64::consts::PI;
    let q = precision_matrix(c);
    let n = q.nrows();
    let det = q.determinant();
    let cov = q
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular precision matrix".into()))?;
    let corr = |i: usize, j: usize| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
    let orthant = match n {
        1 => 0.5,
        2 => 0.25 + corr(0, 1).asin() / (2.0 * PI),
        3 => 0.125 + (corr(0, 1).asin() + corr(0, 2).asin() + corr(1, 2).asin()) / (4.0 * PI),
        _ => return Err(Error::TooLarge(format!("orthant formula for {n} variables"))),
    };
    Ok((2.0 * PI).powf(n as f64 / 2.0) / det.sqrt() * orthant)
}

/// Site order along a path or cycle component, and whether it closes.
fn path_or_cycle(c: &Component) -> Option<(Vec<usize>, bool)> {
    let n = c.sites.len();
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in &c.bonds {
        adj[i].push(j);
        adj[j].push(i);
    }
    if adj.iter().any(|a| a.len() > 2) {
        return None;
    }
    let is_cycle = c.bonds.len() == n && n >= 3;
    if !is_cycle && c.bonds.len() + 1 != n {
        return None;
    }
    let start = if is_cycle {
        0
    } else {
        (0..n).find(|&i| adj[i].len() <= 1)?
    };
    let mut order = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    while order.len() < n {
        let next = *adj[cur].iter().find(|&&y| y != prev && !order.contains(&y))?;
        order.push(next);
        prev = cur;
        cur = next;
    }
    Some((order, is_cycle))
}

/// Gaussian component integral on a quadrature grid by transfer along a path
/// (or around a cycle). The integrand is smooth, so no kink splitting.
fn gaussian_grid_integral(c: &Component, quad: &QuadratureSpec) -> Result<f64> {
    let (order, cycle) =
        path_or_cycle(c).ok_or_else(|| Error::TooLarge("Gaussian component is neither a path nor a cycle".into()))?;
    let psi = InteractionPotential::Gaussian;
    let grid = Grid::new(quad.cutoff_for(&psi, c.sites.len()), &[], quad.panel_width());
    let n = grid.len();
    let weight: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            (0..n)
                .map(|k| grid.weights[k] * (-(c.field[i] as f64) * psi.eval(grid.nodes[k])).exp())
                .collect()
        })
        .collect();
    let kernel = DMatrix::from_fn(n, n, |i, j| (-psi.eval(grid.nodes[i] - grid.nodes[j])).exp());
    let len = order.len();
    let propagate = |mut v: nalgebra::DVector<f64>| {
        for w in weight.iter().skip(1) {
            v = &kernel * v;
            for (x, wk) in v.iter_mut().zip(w) {
                *x *= wk;
            }
        }
        v
    };
    let total = if cycle {
        // fix the first site, propagate around and close the loop
        let mut z = 0.0;
        for k in 0..n {
            let mut v = nalgebra::DVector::zeros(n);
            v[k] = weight[0][k];
            let end = propagate(v);
            z += (0..n).map(|j| end[j] * kernel[(j, k)]).sum::<f64>();
        }
        z
    } else {
        let v = nalgebra::DVector::from_vec(weight[0].clone());
        let end = if len > 1 { propagate(v) } else { v };
        end.sum()
    };
    Ok(total)
}

fn component_integral(c: &Component, psi: &InteractionPotential, quad: &QuadratureSpec) -> Result<f64> {
    match psi {
        InteractionPotential::Sos => Ok(sos_component_integral(c)),
        InteractionPotential::Gaussian if c.sites.len() <= 3 => gaussian_orthant_integral(c),
        InteractionPotential::Gaussian => gaussian_grid_integral(c, quad),
        InteractionPotential::Custom(_) => Err(Error::Usage("subset expansion supports SOS and Gaussian".into())),
    }
}

pub const MAX_SUBSET_SITES: usize = 9;

/// `Z_{Λ \ A}` for every subset `A` of pinned sites.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetExpansion {
    n_sites: usize,
    free_z: Vec<f64>,
}

impl SubsetExpansion {
    pub fn new(lat: &Lattice, psi: &InteractionPotential, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let n = lat.n_sites();
        if n > MAX_SUBSET_SITES || lat.dim() > 2 {
            return Err(Error::TooLarge(format!(
                "subset expansion needs d <= 2 and at most {MAX_SUBSET_SITES} sites (got d = {}, {n} sites)",
                lat.dim()
            )));
        }
        let free_z = (0u32..1 << n)
            .map(|clamped| {
                components(lat, clamped)
                    .iter()
                    .map(|c| component_integral(c, psi, quad))
                    .product::<Result<f64>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_sites: n, free_z })
    }

    /// `Z_{Λ \ A}` with `A` given as a bit mask.
    pub fn free_partition_function(&self, clamped: u32) -> f64 {
        self.free_z[clamped as usize]
    }

    fn term(&self, a: usize, epsilon: f64) -> f64 {
        let k = a.count_ones() as i32;
        if k == 0 {
            self.free_z[a]
        } else {
            epsilon.powi(k) * self.free_z[a]
        }
    }

    pub fn z(&self, epsilon: f64) -> f64 {
        (0..self.free_z.len()).map(|a| self.term(a, epsilon)).sum()
    }

    pub fn rho(&self, epsilon: f64) -> f64 {
        let weighted: f64 = (0..self.free_z.len())
            .map(|a| a.count_ones() as f64 * self.term(a, epsilon))
            .sum();
        weighted / (self.n_sites as f64 * self.z(epsilon))
    }

    pub fn evaluate(&self, epsilon: f64) -> ExactResult {
        let z = self.z(epsilon);
        let pins = (0..self.n_sites)
            .map(|x| {
                (0..self.free_z.len())
                    .filter(|a| a & (1 << x) != 0)
                    .map(|a| self.term(a, epsilon))
                    .sum::<f64>()
                    / z
            })
            .collect();
        finish(z.ln(), pins, 0.0)
    }
}

pub fn exact_z_subset_expansion(
    lat: &Lattice,
    psi: &InteractionPotential,
    epsilon: f64,
    quad: &QuadratureSpec,
) -> Result<ExactResult> {
    PinningSpec::delta(epsilon)?;
    Ok(SubsetExpansion::new(lat, psi, quad)?.evaluate(epsilon))
}

/// Exact result by the most direct applicable route: the chain integrator in
/// one dimension, the subset expansion otherwise.
pub fn exact(
    lat: &Lattice,
    psi: &InteractionPotential,
    pin: &PinningSpec,
    quad: &QuadratureSpec,
) -> Result<ExactResult> {
    if lat.dim() == 1 {
        return exact_z_chain(lat.n_sites(), psi, pin, quad);
    }
    match *pin {
        PinningSpec::Delta { epsilon } => exact_z_subset_expansion(lat, psi, epsilon, quad),
        PinningSpec::None => exact_z_subset_expansion(lat, psi, 0.0, quad),
        PinningSpec::SquareWell { .. } => Err(Error::Usage(
            "square-well pinning has an exact oracle only in one dimension".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRow {
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub max_residual: f64,
}

/// Compares `|Λ|^{-1} log(Z(eps) / Z(0))` with `int_0^eps rho(e) / e de` on
/// `grid` equally spaced points of `(0, eps_max]` plus `eps = 0`.
///
/// The left side uses [`exact`]; the integrand uses the subset expansion, so
/// in one dimension the two sides come from independent routes.
pub fn check_integral_identity(
    lat: &Lattice,
    psi: &InteractionPotential,
    eps_max: f64,
    grid: usize,
    quad: &QuadratureSpec,
) -> Result<IdentityReport> {
    if !(eps_max >= 0.0) {
        return Err(param_err!("eps_max must be non-negative"));
    }
    let expansion = SubsetExpansion::new(lat, psi, quad)?;
    let n = lat.n_sites() as f64;
    let log_z0 = exact(lat, psi, &PinningSpec::None, quad)?.log_z;
    let (gl_x, gl_w) = gauss_legendre(32);
    let mut rows = vec![IdentityRow {
        epsilon: 0.0,
        lhs: 0.0,
        rhs: 0.0,
    }];
    for k in 1..=grid {
        let eps = eps_max * k as f64 / grid as f64;
        let lhs = (exact(lat, psi, &PinningSpec::Delta { epsilon: eps }, quad)?.log_z - log_z0) / n;
        // rho(e)/e is analytic on [0, eps]; two panels of 32-point GL
        let mut rhs = 0.0;
        for (lo, hi) in [(0.0, 0.5 * eps), (0.5 * eps, eps)] {
            for (x, w) in gl_x.iter().zip(&gl_w) {
                let e = lo + 0.5 * (hi - lo) * (x + 1.0);
                rhs += 0.5 * (hi - lo) * w * expansion.rho(e) / e;
            }
        }
        rows.push(IdentityRow { epsilon: eps, lhs, rhs });
    }
    let max_residual = rows.iter().map(|r| (r.lhs - r.rhs).abs()).fold(0.0, f64::max);
    Ok(IdentityReport { rows, max_residual })
}

/// `log Z(eps) - |Λ| log eps`, non-negative because the all-pinned term alone
/// contributes `eps^|Λ|`.
pub fn check_lower_bound_z(
    lat: &Lattice,
    psi: &InteractionPotential,
    epsilon: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let log_z = exact(lat, psi, &PinningSpec::delta(epsilon)?, quad)?.log_z;
    Ok(log_z - lat.n_sites() as f64 * epsilon.ln())
}

/// Exact `rho_N` on a grid of `epsilon` and whether it is non-decreasing.
pub fn check_rho_monotone(
    lat: &Lattice,
    psi: &InteractionPotential,
    eps_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<(bool, Vec<(f64, f64)>)> {
    let table = eps_grid
        .iter()
        .map(|&e| exact(lat, psi, &PinningSpec::delta(e)?, quad).map(|r| (e, r.rho)))
        .collect::<Result<Vec<_>>>()?;
    let monotone = table.windows(2).all(|w| w[1].0 < w[0].0 || w[1].1 >= w[0].1 - 1e-12);
    Ok((monotone, table))
}

/// `|Λ|^{-1} log Z` without pinning.
pub fn free_energy_density(lat: &Lattice, psi: &InteractionPotential, quad: &QuadratureSpec) -> Result<f64> {
    Ok(exact(lat, psi, &PinningSpec::None, quad)?.log_z / lat.n_sites() as f64)
}

/// One point of the snake-path probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnakeProbeRow {
    pub dim: usize,
    pub side: usize,
    pub log_z_density: f64,
}

/// Cap for `|Λ|^{-1} log Z^{0,+,0}`: following the snake path and dropping
/// every other bond bounds `Z` by `(int_R e^{-Psi})^{|Λ|}`. `None` for a
/// custom potential.
pub fn snake_cap(psi: &InteractionPotential) -> Option<f64> {
    match psi {
        InteractionPotential::Sos => Some(std::f64::consts::LN_2),
        InteractionPotential::Gaussian => Some(0.5 * (2.0 * std::f64::consts::PI).ln()),
        InteractionPotential::Custom(_) => None,
    }
}

/// `|Λ|^{-1} log Z^{0,+,0}` for every listed box.
pub fn snake_probe(
    psi: &InteractionPotential,
    boxes: &[(usize, usize)],
    quad: &QuadratureSpec,
) -> Result<Vec<SnakeProbeRow>> {
    boxes
        .iter()
        .map(|&(dim, side)| {
            let lat = Lattice::new(dim, side)?;
            Ok(SnakeProbeRow {
                dim,
                side,
                log_z_density: free_energy_density(&lat, psi, quad)?,
            })
        })
        .collect()
}
