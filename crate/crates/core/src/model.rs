//! Bond potentials, pinning, field configurations and the Hamiltonian with
//! zero boundary condition, plus exact single-site conditional laws.

use smallvec::SmallVec;
use std::fmt;

use crate::error::{param_err, Error, Result};
use crate::lattice::Lattice;
use crate::special::{normal_interval_mass, SQRT_PI};

/// Curvature class declared for a user-supplied potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexityClass {
    Concave,
    /// `c <= Psi'' <= 1/c`.
    UniformlyConvex {
        c: f64,
    },
}

/// An even bond potential supplied as a plain function.
///
/// Conditional laws for these are built by tabulating the local energy on a
/// fine grid, so sampling is approximate (grid spacing [`CUSTOM_GRID_STEP`]).
#[derive(Clone, Copy)]
pub struct CustomPotential {
    pub psi: fn(f64) -> f64,
    pub class: ConvexityClass,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential").field("class", &self.class).finish()
    }
}

pub const CUSTOM_GRID_STEP: f64 = 1e-2;

#[derive(Debug, Clone, Copy)]
pub enum InteractionPotential {
    /// `Psi(x) = |x|`
    Sos,
    /// `Psi(x) = x^2 / 2`
    Gaussian,
    Custom(CustomPotential),
}

impl InteractionPotential {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Sos => x.abs(),
            Self::Gaussian => 0.5 * x * x,
            Self::Custom(c) => (c.psi)(x),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sos => "sos",
            Self::Gaussian => "gaussian",
            Self::Custom(_) => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sos" | "abs" => Ok(Self::Sos),
            "gaussian" | "gauss" => Ok(Self::Gaussian),
            other => Err(param_err!("unknown interaction '{other}' (expected sos or gaussian)")),
        }
    }

    pub fn is_sos(&self) -> bool {
        matches!(self, Self::Sos)
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Self::Gaussian)
    }
}

impl PartialEq for InteractionPotential {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Sos, Self::Sos) | (Self::Gaussian, Self::Gaussian) => true,
            (Self::Custom(a), Self::Custom(b)) => std::ptr::fn_addr_eq(a.psi, b.psi) && a.class == b.class,
            _ => false,
        }
    }
}

/// Returns `a * e^b`, the effective pinning strength of a square well.
pub fn epsilon_of(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(param_err!("square-well width a must be positive (got {a})"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(param_err!("square-well depth b must be positive (got {b})"));
    }
    Ok(a * b.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PinningSpec {
    None,
    /// Reward `b` for every site with height `<= a`.
    SquareWell {
        a: f64,
        b: f64,
    },
    /// Point mass of weight `epsilon` at height 0 added to each site's measure.
    Delta {
        epsilon: f64,
    },
}

impl PinningSpec {
    pub fn square_well(a: f64, b: f64) -> Result<Self> {
        epsilon_of(a, b)?;
        Ok(Self::SquareWell { a, b })
    }

    pub fn delta(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(param_err!("delta-pinning epsilon must be non-negative (got {epsilon})"));
        }
        Ok(Self::Delta { epsilon })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::SquareWell { a, b } => epsilon_of(a, b).map(|_| ()),
            Self::Delta { epsilon } => Self::delta(epsilon).map(|_| ()),
        }
    }

    /// `a e^b` for a square well, `epsilon` for delta pinning, 0 otherwise.
    pub fn epsilon_eff(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::SquareWell { a, b } => a * b.exp(),
            Self::Delta { epsilon } => epsilon,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SquareWell { .. } => "square_well",
            Self::Delta { .. } => "delta",
        }
    }

    #[inline]
    pub(crate) fn well(&self) -> Option<(f64, f64)> {
        match *self {
            Self::SquareWell { a, b } => Some((a, b)),
            _ => None,
        }
    }
}

/// Heights above the wall plus the mask of sites sitting on the delta atom.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    pub heights: Vec<f64>,
    pub pinned: Vec<bool>,
}

impl FieldConfig {
    pub fn zeros(n: usize) -> Self {
        Self {
            heights: vec![0.0; n],
            pinned: vec![false; n],
        }
    }

    pub fn flat(n: usize, h: f64) -> Result<Self> {
        Self::from_heights(vec![h; n])
    }

    pub fn from_heights(heights: Vec<f64>) -> Result<Self> {
        let n = heights.len();
        let cfg = Self {
            heights,
            pinned: vec![false; n],
        };
        cfg.check_heights()?;
        Ok(cfg)
    }

    pub fn with_pinned(heights: Vec<f64>, pinned: Vec<bool>) -> Result<Self> {
        if heights.len() != pinned.len() {
            return Err(param_err!("heights and pinned mask differ in length"));
        }
        let cfg = Self { heights, pinned };
        cfg.check_heights()?;
        cfg.check_mask()?;
        Ok(cfg)
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    fn check_heights(&self) -> Result<()> {
        match self.heights.iter().position(|h| !(*h >= 0.0 && h.is_finite())) {
            Some(x) => Err(Error::Invariant(format!(
                "height at site {x} is {} (must be finite and >= 0)",
                self.heights[x]
            ))),
            None => Ok(()),
        }
    }

    fn check_mask(&self) -> Result<()> {
        match (0..self.len()).find(|&x| self.pinned[x] && self.heights[x] != 0.0) {
            Some(x) => Err(Error::Invariant(format!(
                "site {x} is pinned but has height {}",
                self.heights[x]
            ))),
            None => Ok(()),
        }
    }

    /// Full invariant check against a pinning specification.
    pub fn validate(&self, pin: &PinningSpec) -> Result<()> {
        self.check_heights()?;
        self.check_mask()?;
        if !matches!(pin, PinningSpec::Delta { .. }) && self.pinned.iter().any(|&p| p) {
            return Err(Error::Invariant("pinned mask set without delta pinning".into()));
        }
        Ok(())
    }
}

/// Energy of the bonds touching `site` if it had height `t`.
#[inline]
pub(crate) fn local_energy(lat: &Lattice, heights: &[f64], site: usize, t: f64, psi: &InteractionPotential) -> f64 {
    let inside: f64 = lat.neighbors(site).iter().map(|&y| psi.eval(t - heights[y])).sum();
    inside + lat.outside_bonds(site) as f64 * psi.eval(t)
}

/// `H(phi) = sum_<x,y> Psi(phi_x - phi_y) + sum_{x, y outside} Psi(phi_x)`.
pub fn energy_total(lat: &Lattice, cfg: &FieldConfig, psi: &InteractionPotential) -> Result<f64> {
    check_len(lat, cfg)?;
    cfg.check_heights()?;
    Ok(energy_unchecked(lat, &cfg.heights, psi))
}

pub(crate) fn energy_unchecked(lat: &Lattice, h: &[f64], psi: &InteractionPotential) -> f64 {
    let bulk: f64 = lat.bonds().map(|(x, y)| psi.eval(h[x] - h[y])).sum();
    let edge: f64 = (0..lat.n_sites())
        .map(|x| lat.outside_bonds(x) as f64 * psi.eval(h[x]))
        .sum();
    bulk + edge
}

pub fn energy_delta(
    lat: &Lattice,
    cfg: &FieldConfig,
    site: usize,
    new_height: f64,
    psi: &InteractionPotential,
) -> Result<f64> {
    check_len(lat, cfg)?;
    if !(new_height >= 0.0 && new_height.is_finite()) {
        return Err(param_err!("new height must be finite and >= 0 (got {new_height})"));
    }
    if site >= lat.n_sites() {
        return Err(param_err!("site {site} out of range"));
    }
    let old = cfg.heights[site];
    Ok(local_energy(lat, &cfg.heights, site, new_height, psi) - local_energy(lat, &cfg.heights, site, old, psi))
}

/// `-V(phi) = b * #{x : phi_x <= a}`.
pub fn well_log_weight(cfg: &FieldConfig, pin: &PinningSpec) -> Result<f64> {
    match pin.well() {
        Some((a, b)) => Ok(b * cfg.heights.iter().filter(|&&h| h <= a).count() as f64),
        None => Err(Error::Usage("well_log_weight requires square-well pinning".into())),
    }
}

fn check_len(lat: &Lattice, cfg: &FieldConfig) -> Result<()> {
    if cfg.len() != lat.n_sites() {
        return Err(param_err!(
            "configuration has {} sites, lattice has {}",
            cfg.len(),
            lat.n_sites()
        ));
    }
    Ok(())
}

/// Segment of a density `exp(log_lo - slope * (t - lo))` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpSegment {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub log_lo: f64,
    pub mass: f64,
}

impl ExpSegment {
    fn new(lo: f64, hi: f64, slope: f64, log_lo: f64) -> Self {
        let width = hi - lo;
        let mass = if width <= 0.0 {
            0.0
        } else if slope == 0.0 {
            log_lo.exp() * width
        } else if slope > 0.0 {
            log_lo.exp() * -(-slope * width).exp_m1() / slope
        } else {
            // anchor at the larger (right) end to avoid overflow
            let log_hi = log_lo - slope * width;
            log_hi.exp() * -(slope * width).exp_m1() / -slope
        };
        Self {
            lo,
            hi,
            slope,
            log_lo,
            mass,
        }
    }

    #[inline]
    pub fn density(&self, t: f64) -> f64 {
        (self.log_lo - self.slope * (t - self.lo)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussSegment {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Continuous {
    PiecewiseExp(SmallVec<[ExpSegment; 8]>),
    /// `weight * exp(-(t - mean)^2 / (2 variance))` per segment.
    TruncatedGaussian {
        mean: f64,
        variance: f64,
        segments: SmallVec<[GaussSegment; 2]>,
    },
}

/// Unnormalised single-site conditional law on `[0, inf)` plus the atom at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub continuous: Continuous,
    pub atom: f64,
}

impl ConditionalLaw {
    pub fn continuous_mass(&self) -> f64 {
        match &self.continuous {
            Continuous::PiecewiseExp(segs) => segs.iter().map(|s| s.mass).sum(),
            Continuous::TruncatedGaussian { segments, .. } => segments.iter().map(|s| s.mass).sum(),
        }
    }

    pub fn atom_probability(&self) -> f64 {
        self.atom / (self.atom + self.continuous_mass())
    }

    /// Unnormalised continuous density at `t >= 0`, on the same scale as the masses.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.continuous {
            Continuous::PiecewiseExp(segs) => segs.iter().find(|s| t <= s.hi).map_or(0.0, |s| s.density(t)),
            Continuous::TruncatedGaussian {
                mean,
                variance,
                segments,
            } => {
                let w = segments.iter().find(|s| t <= s.hi).map_or(0.0, |s| s.weight);
                w * (-(t - mean) * (t - mean) / (2.0 * variance)).exp()
            }
        }
    }

    /// Segment boundaries, including 0 and the (possibly infinite) right end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        match &self.continuous {
            Continuous::PiecewiseExp(segs) => out.extend(segs.iter().map(|s| s.hi)),
            Continuous::TruncatedGaussian { segments, .. } => out.extend(segments.iter().map(|s| s.hi)),
        }
        out
    }
}

/// Exact conditional law of `phi_site` given every other height.
pub fn site_conditional(
    lat: &Lattice,
    cfg: &FieldConfig,
    site: usize,
    psi: &InteractionPotential,
    pin: &PinningSpec,
) -> Result<ConditionalLaw> {
    check_len(lat, cfg)?;
    if site >= lat.n_sites() {
        return Err(param_err!("site {site} out of range"));
    }
    let law = conditional_from_heights(lat, &cfg.heights, site, psi, pin);
    if !(law.continuous_mass() > 0.0) {
        return Err(Error::Numerical(format!("zero continuous mass at site {site}")));
    }
    Ok(law)
}

pub(crate) fn conditional_from_heights(
    lat: &Lattice,
    heights: &[f64],
    site: usize,
    psi: &InteractionPotential,
    pin: &PinningSpec,
) -> ConditionalLaw {
    let mut nbrs: SmallVec<[f64; 6]> = lat.neighbors(site).iter().map(|&y| heights[y]).collect();
    nbrs.extend(std::iter::repeat_n(0.0, lat.outside_bonds(site)));
    // sorted so the law is bit-identical under neighbour relabelling
    nbrs.sort_unstable_by(f64::total_cmp);
    match psi {
        InteractionPotential::Sos => sos_law(&nbrs, pin),
        InteractionPotential::Gaussian => gaussian_law(&nbrs, pin),
        InteractionPotential::Custom(c) => custom_law(&nbrs, c, pin),
    }
}

fn atom_weight(pin: &PinningSpec, f0: f64) -> f64 {
    match *pin {
        PinningSpec::Delta { epsilon } => epsilon * f0,
        _ => 0.0,
    }
}

fn sos_law(nbrs: &[f64], pin: &PinningSpec) -> ConditionalLaw {
    let well = pin.well();
    let mut cuts: SmallVec<[f64; 8]> = SmallVec::new();
    cuts.push(0.0);
    for &v in nbrs.iter().chain(well.as_ref().map(|(a, _)| a)) {
        if v > 0.0 {
            cuts.push(v);
        }
    }
    cuts.sort_unstable_by(f64::total_cmp);
    cuts.dedup();

    let energy_at = |t: f64| -> f64 { nbrs.iter().map(|&n| (t - n).abs()).sum() };
    let reward = |hi: f64| -> f64 {
        match well {
            Some((a, b)) if hi <= a => b,
            _ => 0.0,
        }
    };

    // (lo, hi, slope, energy at lo)
    let mut raw: SmallVec<[(f64, f64, f64, f64); 8]> = SmallVec::new();
    let mut e_ref = f64::INFINITY;
    for (k, &lo) in cuts.iter().enumerate() {
        let hi = cuts.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let below = nbrs.iter().filter(|&&n| n <= lo).count() as f64;
        let slope = 2.0 * below - nbrs.len() as f64;
        let e_lo = energy_at(lo) - reward(hi);
        e_ref = e_ref.min(e_lo);
        if hi.is_finite() {
            e_ref = e_ref.min(e_lo + slope * (hi - lo));
        }
        raw.push((lo, hi, slope, e_lo));
    }
    let segs = raw
        .into_iter()
        .map(|(lo, hi, slope, e_lo)| ExpSegment::new(lo, hi, slope, e_ref - e_lo))
        .collect();
    let f0 = (e_ref - (energy_at(0.0) - reward(cuts.get(1).copied().unwrap_or(f64::INFINITY)))).exp();
    ConditionalLaw {
        continuous: Continuous::PiecewiseExp(segs),
        atom: atom_weight(pin, f0),
    }
}

fn gaussian_law(nbrs: &[f64], pin: &PinningSpec) -> ConditionalLaw {
    let k = nbrs.len() as f64;
    let mean = nbrs.iter().sum::<f64>() / k;
    let variance = 1.0 / k;
    let sd = variance.sqrt();
    // sqrt(2 pi v)
    let norm = SQRT_PI * (2.0 * variance).sqrt();
    let seg = |lo: f64, hi: f64, weight: f64| GaussSegment {
        lo,
        hi,
        weight,
        mass: weight * norm * normal_interval_mass((lo - mean) / sd, (hi - mean) / sd),
    };
    let mut segments = SmallVec::new();
    let mut f0 = (-mean * mean / (2.0 * variance)).exp();
    match pin.well() {
        Some((a, b)) => {
            let w = b.exp();
            segments.push(seg(0.0, a, w));
            segments.push(seg(a, f64::INFINITY, 1.0));
            f0 *= w;
        }
        None => segments.push(seg(0.0, f64::INFINITY, 1.0)),
    }
    ConditionalLaw {
        continuous: Continuous::TruncatedGaussian {
            mean,
            variance,
            segments,
        },
        atom: atom_weight(pin, f0),
    }
}

fn custom_law(nbrs: &[f64], pot: &CustomPotential, pin: &PinningSpec) -> ConditionalLaw {
    let bond_sum = |t: f64| -> f64 { nbrs.iter().map(|&n| (pot.psi)(t - n)).sum() };
    let reward = |hi: f64| -> f64 {
        match pin.well() {
            Some((a, b)) if hi <= a => b,
            _ => 0.0,
        }
    };
    let top = nbrs.iter().copied().fold(0.0, f64::max) + 30.0;
    let mut grid: Vec<f64> = (0..)
        .map(|i| i as f64 * CUSTOM_GRID_STEP)
        .take_while(|&t| t < top)
        .collect();
    if let Some((a, _)) = pin.well() {
        grid.push(a);
        grid.sort_unstable_by(f64::total_cmp);
        grid.dedup();
    }
    // piecewise-linear interpolation of the local energy between grid points
    let pieces: Vec<(f64, f64, f64, f64)> = grid
        .windows(2)
        .map(|w| {
            let r = reward(w[1]);
            (w[0], w[1], bond_sum(w[0]) - r, bond_sum(w[1]) - r)
        })
        .collect();
    let last = *grid.last().unwrap();
    let e_last = bond_sum(last) - reward(f64::INFINITY);
    let e_ref = pieces
        .iter()
        .flat_map(|p| [p.2, p.3])
        .chain(std::iter::once(e_last))
        .fold(f64::INFINITY, f64::min);
    let mut segs: SmallVec<[ExpSegment; 8]> = pieces
        .iter()
        .map(|&(lo, hi, e_lo, e_hi)| ExpSegment::new(lo, hi, (e_hi - e_lo) / (hi - lo), e_ref - e_lo))
        .collect();
    let tail_slope = (bond_sum(last + 1.0) - bond_sum(last)).max(1.0);
    segs.push(ExpSegment::new(last, f64::INFINITY, tail_slope, e_ref - e_last));
    let e0 = pieces.first().map_or(e_last, |p| p.2);
    ConditionalLaw {
        continuous: Continuous::PiecewiseExp(segs),
        atom: atom_weight(pin, (e_ref - e0).exp()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SOS: InteractionPotential = InteractionPotential::Sos;
    const GAUSS: InteractionPotential = InteractionPotential::Gaussian;

    fn lat(d: usize, n: usize) -> Lattice {
        Lattice::new(d, n).unwrap()
    }

    #[test]
    fn epsilon_of_examples() {
        assert!((epsilon_of(0.1, 1e-9).unwrap() - 0.1).abs() < 1e-9);
        assert!((epsilon_of(0.1, 2f64.ln()).unwrap() - 0.2).abs() < 1e-15);
        let e = epsilon_of(0.12, 0.5).unwrap();
        assert!((e - 0.197846).abs() < 1e-6 && e < 0.25);
        assert!(epsilon_of(0.0, 1.0).is_err());
        assert!(epsilon_of(0.1, -1.0).is_err());
        assert!(PinningSpec::delta(-1.0).is_err());
        assert_eq!(
            PinningSpec::square_well(0.1, 1.0).unwrap().epsilon_eff(),
            0.1 * 1f64.exp()
        );
    }

    #[test]
    fn energy_total_examples() {
        let e = energy_total(&lat(1, 2), &FieldConfig::zeros(2), &SOS).unwrap();
        assert_eq!(e, 0.0);
        let e = energy_total(&lat(1, 1), &FieldConfig::from_heights(vec![1.5]).unwrap(), &SOS).unwrap();
        assert_eq!(e, 3.0);
        let e = energy_total(&lat(1, 2), &FieldConfig::from_heights(vec![1.0, 2.0]).unwrap(), &GAUSS).unwrap();
        assert_eq!(e, 3.0);
        let bad = FieldConfig {
            heights: vec![-1.0, 0.0],
            pinned: vec![false; 2],
        };
        assert!(matches!(energy_total(&lat(1, 2), &bad, &SOS), Err(Error::Invariant(_))));
    }

    #[test]
    fn energy_delta_examples() {
        let l = lat(1, 2);
        let cfg = FieldConfig::from_heights(vec![1.0, 2.0]).unwrap();
        assert_eq!(energy_delta(&l, &cfg, 1, 2.0, &GAUSS).unwrap(), 0.0);
        assert_eq!(energy_delta(&l, &cfg, 1, 1.0, &GAUSS).unwrap(), -2.0);
        assert!(energy_delta(&l, &cfg, 1, -0.5, &GAUSS).is_err());
    }

    #[test]
    fn energy_delta_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10_000 {
            let l = lat(1 + trial % 3, 1 + trial % 4);
            let psi = if trial % 2 == 0 { SOS } else { GAUSS };
            let n = l.n_sites();
            let cfg = FieldConfig::from_heights((0..n).map(|_| 3.0 * rng.random::<f64>()).collect()).unwrap();
            let site = rng.random_range(0..n);
            let t = 3.0 * rng.random::<f64>();
            let mut after = cfg.clone();
            after.heights[site] = t;
            let want = energy_total(&l, &after, &psi).unwrap() - energy_total(&l, &cfg, &psi).unwrap();
            assert!((energy_delta(&l, &cfg, site, t, &psi).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn well_log_weight_examples() {
        let pin = PinningSpec::square_well(0.1, 1.0).unwrap();
        let cfg = FieldConfig::from_heights(vec![0.0, 0.05, 2.0]).unwrap();
        assert_eq!(well_log_weight(&cfg, &pin).unwrap(), 2.0);
        let high = FieldConfig::from_heights(vec![1.0, 2.0]).unwrap();
        assert_eq!(well_log_weight(&high, &pin).unwrap(), 0.0);
        let pin = PinningSpec::square_well(0.1, 0.3).unwrap();
        let w = well_log_weight(&FieldConfig::zeros(16), &pin).unwrap();
        assert!((w - 4.8).abs() < 1e-12);
        // ties at exactly a are inside the well
        let edge = FieldConfig::from_heights(vec![0.1]).unwrap();
        assert_eq!(well_log_weight(&edge, &pin).unwrap(), 0.3);
        assert!(matches!(
            well_log_weight(&cfg, &PinningSpec::delta(0.1).unwrap()),
            Err(Error::Usage(_))
        ));
    }

    fn law_mean(law: &ConditionalLaw, cutoff: f64) -> f64 {
        let bp = law.breakpoints();
        integrate(|t| t * law.density(t), 0.0, cutoff, &bp, 0.5, 20) / law.continuous_mass()
    }

    #[test]
    fn sos_single_site_law() {
        let l = lat(1, 1);
        let cfg = FieldConfig::zeros(1);
        let law = site_conditional(&l, &cfg, 0, &SOS, &PinningSpec::None).unwrap();
        assert!(matches!(&law.continuous, Continuous::PiecewiseExp(s) if s.len() == 1));
        assert!((law.continuous_mass() - 0.5).abs() < 1e-15);
        assert!((law_mean(&law, 40.0) - 0.5).abs() < 1e-12);
        assert_eq!(law.atom, 0.0);
        let law = site_conditional(&l, &cfg, 0, &SOS, &PinningSpec::delta(0.5).unwrap()).unwrap();
        assert!((law.atom_probability() - 0.5).abs() < 1e-15);
        let law = site_conditional(&l, &cfg, 0, &SOS, &PinningSpec::delta(0.2).unwrap()).unwrap();
        assert!((law.atom_probability() - 0.4 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn gaussian_single_site_law() {
        let law = site_conditional(&lat(1, 1), &FieldConfig::zeros(1), 0, &GAUSS, &PinningSpec::None).unwrap();
        let Continuous::TruncatedGaussian { mean, variance, .. } = law.continuous else {
            panic!("expected Gaussian law");
        };
        assert_eq!((mean, variance), (0.0, 0.5));
        let want = (0.5f64).sqrt() * (2.0 / std::f64::consts::PI).sqrt();
        assert!((law_mean(&law, 12.0) - want).abs() < 1e-12);
        assert!((want - 0.5642).abs() < 1e-4);
    }

    fn random_neighbours(rng: &mut ChaCha8Rng, d: usize) -> (Lattice, FieldConfig, usize) {
        // centre of a 3^d box has 2d inside neighbours
        let l = lat(d, 3);
        let mut h: Vec<f64> = (0..l.n_sites()).map(|_| 0.0).collect();
        let c = l.center();
        for &y in l.neighbors(c) {
            h[y] = match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random::<f64>() * 0.2,
                _ => rng.random::<f64>() * 6.0,
            };
        }
        (l, FieldConfig::from_heights(h).unwrap(), c)
    }

    #[test]
    fn closed_form_masses_match_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pins = [
            PinningSpec::None,
            PinningSpec::square_well(0.1, 1.0).unwrap(),
            PinningSpec::square_well(0.7, 0.3).unwrap(),
            PinningSpec::delta(0.3).unwrap(),
        ];
        for trial in 0..1000 {
            let (l, cfg, c) = random_neighbours(&mut rng, 1 + trial % 3);
            let psi = if trial % 2 == 0 { SOS } else { GAUSS };
            let pin = &pins[trial % 4];
            let law = site_conditional(&l, &cfg, c, &psi, pin).unwrap();
            let top = cfg.heights.iter().copied().fold(0.0, f64::max) + 45.0;
            let mass = integrate(|t| law.density(t), 0.0, top, &law.breakpoints(), 0.25, 20);
            let rel = (mass / law.continuous_mass() - 1.0).abs();
            assert!(rel < 1e-9, "trial {trial}: {rel:e}");
            if let PinningSpec::Delta { epsilon } = pin {
                assert!((law.atom - epsilon * law.density(0.0)).abs() <= 1e-14 * law.atom.max(1e-300));
            }
        }
    }

    #[test]
    fn law_is_invariant_under_neighbour_relabelling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pin = PinningSpec::square_well(0.2, 0.7).unwrap();
        for _ in 0..200 {
            let (l, cfg, c) = random_neighbours(&mut rng, 2);
            let nb = l.neighbors(c).to_vec();
            let mut swapped = cfg.clone();
            swapped.heights[nb[0]] = cfg.heights[nb[3]];
            swapped.heights[nb[3]] = cfg.heights[nb[0]];
            swapped.heights[nb[1]] = cfg.heights[nb[2]];
            swapped.heights[nb[2]] = cfg.heights[nb[1]];
            for psi in [SOS, GAUSS] {
                let a = site_conditional(&l, &cfg, c, &psi, &pin).unwrap();
                let b = site_conditional(&l, &swapped, c, &psi, &pin).unwrap();
                assert!((a.continuous_mass() / b.continuous_mass() - 1.0).abs() < 1e-14);
                for t in [0.0, 0.1, 0.5, 2.0, 5.0] {
                    assert!((a.density(t) - b.density(t)).abs() <= 1e-14 * a.density(t).max(1e-300));
                }
            }
        }
    }

    #[test]
    fn energy_dominates_snake_path_bonds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..10_000 {
            let l = lat(1 + trial % 2, 1 + trial % 5);
            let psi = if trial % 3 == 0 { GAUSS } else { SOS };
            let h: Vec<f64> = (0..l.n_sites()).map(|_| 4.0 * rng.random::<f64>()).collect();
            let path = l.snake_path();
            let along: f64 = path.windows(2).map(|w| psi.eval(h[w[0]] - h[w[1]])).sum();
            let cfg = FieldConfig::from_heights(h).unwrap();
            assert!(energy_total(&l, &cfg, &psi).unwrap() >= along);
        }
    }

    #[test]
    fn mask_invariants() {
        assert!(FieldConfig::with_pinned(vec![0.5], vec![true]).is_err());
        let cfg = FieldConfig::with_pinned(vec![0.0], vec![true]).unwrap();
        assert!(cfg.validate(&PinningSpec::delta(0.1).unwrap()).is_ok());
        assert!(cfg.validate(&PinningSpec::None).is_err());
    }
}
