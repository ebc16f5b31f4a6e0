//! Single-site kernels for the hard-wall measure and the chain driver.
//!
//! The heat-bath kernel draws exactly from the site conditional, including the
//! delta atom at 0. Metropolis uses a wall-reflected uniform proposal and is
//! only defined without an atom.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chalker::boundary_moment_of;
use crate::error::{param_err, Error, Result};
use crate::lattice::Lattice;
use crate::model::{
    conditional_from_heights, local_energy, ConditionalLaw, Continuous, ExpSegment, FieldConfig, InteractionPotential,
    PinningSpec,
};
use crate::observables::{snapshot, ObservableSnapshot};
use crate::special::{normal_isf, normal_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    HeatBath,
    Metropolis,
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::HeatBath => "heat_bath",
            Kernel::Metropolis => "metropolis",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heat_bath" | "heatbath" | "hb" => Ok(Kernel::HeatBath),
            "metropolis" | "mh" => Ok(Kernel::Metropolis),
            other => Err(param_err!("unknown kernel '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    Sequential,
    /// Two-colour order; same-colour sites are updated concurrently.
    Checkerboard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// i.i.d. Exponential(1) heights.
    Exponential,
    Flat(f64),
}

pub const DEFAULT_STEP_WIDTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub dim: usize,
    pub side: usize,
    pub psi: InteractionPotential,
    pub pin: PinningSpec,
    pub kernel: Kernel,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Selects an independent RNG stream for replicas sharing a seed.
    pub stream: u64,
    pub step_width: f64,
    pub order: SweepOrder,
    pub init: Init,
    /// Sites held at height 0 and never updated.
    pub clamped: Vec<usize>,
    pub record_boundary_moment: bool,
}

impl ChainParams {
    pub fn new(dim: usize, side: usize, psi: InteractionPotential, pin: PinningSpec) -> Self {
        Self {
            dim,
            side,
            psi,
            pin,
            kernel: Kernel::HeatBath,
            sweeps: 10_000,
            burn_in: 1_000,
            thinning: 1,
            seed: 0,
            stream: 0,
            step_width: DEFAULT_STEP_WIDTH,
            order: SweepOrder::Sequential,
            init: Init::Exponential,
            clamped: Vec::new(),
            record_boundary_moment: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pin.validate()?;
        if self.sweeps < self.burn_in {
            return Err(param_err!(
                "sweeps ({}) must not be below burn-in ({})",
                self.sweeps,
                self.burn_in
            ));
        }
        if self.thinning < 1 {
            return Err(param_err!("thinning must be at least 1"));
        }
        if self.kernel == Kernel::Metropolis {
            if matches!(self.pin, PinningSpec::Delta { .. }) {
                return Err(Error::Usage(
                    "Metropolis cannot propose into or out of the delta atom; use heat_bath".into(),
                ));
            }
            if !(self.step_width > 0.0 && self.step_width.is_finite()) {
                return Err(param_err!("Metropolis step width must be positive"));
            }
        }
        if let Init::Flat(h) = self.init {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(param_err!("flat initial height must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub snapshots: Vec<ObservableSnapshot>,
    pub proposed: u64,
    pub accepted: u64,
    pub final_config: FieldConfig,
}

impl Trace {
    /// Metropolis acceptance rate; `None` for heat-bath runs.
    pub fn accept_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[inline]
fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

#[inline]
fn sample_in_exp_segment(seg: &ExpSegment, u: f64) -> f64 {
    let width = seg.hi - seg.lo;
    let t = if seg.slope == 0.0 {
        seg.lo + u * width
    } else if seg.slope > 0.0 {
        seg.lo - (u * (-seg.slope * width).exp_m1()).ln_1p() / seg.slope
    } else {
        let s = -seg.slope;
        seg.hi + (u * (-s * width).exp_m1()).ln_1p() / s
    };
    t.clamp(seg.lo, seg.hi)
}

/// Draws from the continuous part of a piecewise-exponential law.
pub fn sample_piecewise_exponential<R: Rng + ?Sized>(law: &ConditionalLaw, rng: &mut R) -> Result<f64> {
    let Continuous::PiecewiseExp(segs) = &law.continuous else {
        return Err(Error::Usage("law is not piecewise exponential".into()));
    };
    let total: f64 = segs.iter().map(|s| s.mass).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("piecewise-exponential law has zero mass".into()));
    }
    let mut target = uniform(rng) * total;
    let mut chosen = None;
    for seg in segs.iter().filter(|s| s.mass > 0.0) {
        chosen = Some(seg);
        if target < seg.mass {
            break;
        }
        target -= seg.mass;
    }
    Ok(sample_in_exp_segment(chosen.unwrap(), uniform(rng)))
}

// Standard normal restricted to (l, u).
fn standard_truncated<R: Rng + ?Sized>(l: f64, u: f64, rng: &mut R) -> f64 {
    if u <= 0.0 {
        return -standard_truncated(-u, -l, rng);
    }
    if l >= 30.0 {
        // survival function underflows; exponential-proposal rejection
        loop {
            let e = -(1.0 - uniform(rng)).ln() / l;
            let x = l + e;
            if x < u && uniform(rng) < (-0.5 * e * e).exp() {
                return x;
            }
        }
    }
    let p = uniform(rng);
    let x = if l >= 0.0 {
        let (ql, qu) = (normal_sf(l), normal_sf(u));
        normal_isf(ql - p * (ql - qu))
    } else {
        // straddles zero: invert the lower CDF
        let (cl, cu) = (normal_sf(-l), normal_sf(-u));
        -normal_isf(cl - p * (cl - cu))
    };
    x.clamp(l, u)
}

/// Draws from `sum_k weight_k * N(mean, variance)` restricted to the segments
/// `(lo_k, hi_k, weight_k)`, which must lie in `[0, inf)`.
pub fn sample_truncated_gaussian<R: Rng + ?Sized>(
    mean: f64,
    variance: f64,
    segments: &[(f64, f64, f64)],
    rng: &mut R,
) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(param_err!("variance must be positive (got {variance})"));
    }
    let sd = variance.sqrt();
    let masses: smallvec::SmallVec<[f64; 4]> = segments
        .iter()
        .map(|&(lo, hi, w)| w * crate::special::normal_interval_mass((lo - mean) / sd, (hi - mean) / sd))
        .collect();
    pick_gaussian(mean, sd, segments.iter().map(|&(lo, hi, _)| (lo, hi)), &masses, rng)
}

fn pick_gaussian<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    bounds: impl Iterator<Item = (f64, f64)> + Clone,
    masses: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let total: f64 = masses.iter().sum();
    let (lo, hi) = if total > 0.0 {
        let mut target = uniform(rng) * total;
        let mut pick = None;
        for (b, &m) in bounds.clone().zip(masses).filter(|(_, &m)| m > 0.0) {
            pick = Some(b);
            if target < m {
                break;
            }
            target -= m;
        }
        pick.unwrap()
    } else {
        // every segment underflowed: the mass sits at the segment nearest the mean
        bounds
            .min_by(|a, b| {
                let da = (a.0 - mean).max(mean - a.1).max(0.0);
                let db = (b.0 - mean).max(mean - b.1).max(0.0);
                da.total_cmp(&db)
            })
            .ok_or_else(|| Error::Numerical("no segments".into()))?
    };
    let x = mean + sd * standard_truncated((lo - mean) / sd, (hi - mean) / sd, rng);
    Ok(x.clamp(lo, hi).max(0.0))
}

fn sample_continuous<R: Rng + ?Sized>(law: &ConditionalLaw, rng: &mut R) -> Result<f64> {
    match &law.continuous {
        Continuous::PiecewiseExp(_) => sample_piecewise_exponential(law, rng),
        Continuous::TruncatedGaussian {
            mean,
            variance,
            segments,
        } => {
            let masses: smallvec::SmallVec<[f64; 4]> = segments.iter().map(|s| s.mass).collect();
            pick_gaussian(
                *mean,
                variance.sqrt(),
                segments.iter().map(|s| (s.lo, s.hi)),
                &masses,
                rng,
            )
        }
    }
}

/// Draws `(height, pinned)` for `site` from its exact conditional.
fn heat_bath_draw<R: Rng + ?Sized>(
    lat: &Lattice,
    heights: &[f64],
    site: usize,
    psi: &InteractionPotential,
    pin: &PinningSpec,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let law = conditional_from_heights(lat, heights, site, psi, pin);
    if law.atom > 0.0 {
        let total = law.atom + law.continuous_mass();
        if uniform(rng) * total < law.atom {
            return Ok((0.0, true));
        }
    }
    Ok((sample_continuous(&law, rng)?, false))
}

pub fn heat_bath_site<R: Rng + ?Sized>(
    lat: &Lattice,
    cfg: &mut FieldConfig,
    site: usize,
    psi: &InteractionPotential,
    pin: &PinningSpec,
    rng: &mut R,
) -> Result<()> {
    if site >= lat.n_sites() || cfg.len() != lat.n_sites() {
        return Err(param_err!("site {site} or configuration does not match the lattice"));
    }
    let (h, p) = heat_bath_draw(lat, &cfg.heights, site, psi, pin, rng)?;
    cfg.heights[site] = h;
    cfg.pinned[site] = p;
    Ok(())
}

fn metropolis_decide(
    lat: &Lattice,
    heights: &[f64],
    site: usize,
    proposal: f64,
    psi: &InteractionPotential,
    pin: &PinningSpec,
    u: f64,
) -> bool {
    let current = heights[site];
    let mut log_ratio =
        local_energy(lat, heights, site, current, psi) - local_energy(lat, heights, site, proposal, psi);
    if let Some((a, b)) = pin.well() {
        log_ratio += b * ((proposal <= a) as i32 - (current <= a) as i32) as f64;
    }
    log_ratio >= 0.0 || u < log_ratio.exp()
}

/// One Metropolis step at `site`; returns whether the proposal was accepted.
pub fn metropolis_site<R: Rng + ?Sized>(
    lat: &Lattice,
    cfg: &mut FieldConfig,
    site: usize,
    psi: &InteractionPotential,
    pin: &PinningSpec,
    step_width: f64,
    rng: &mut R,
) -> Result<bool> {
    if matches!(pin, PinningSpec::Delta { .. }) {
        return Err(Error::Usage("Metropolis is not defined under delta pinning".into()));
    }
    if site >= lat.n_sites() || cfg.len() != lat.n_sites() {
        return Err(param_err!("site {site} or configuration does not match the lattice"));
    }
    let proposal = (cfg.heights[site] + step_width * (2.0 * uniform(rng) - 1.0)).abs();
    let accept = metropolis_decide(lat, &cfg.heights, site, proposal, psi, pin, uniform(rng));
    if accept {
        cfg.heights[site] = proposal;
    }
    Ok(accept)
}

// ChaCha words reserved per (sweep, site) slot in checkerboard mode.
const WORDS_PER_UPDATE: u128 = 256;

/// A running chain: owns its configuration and RNG stream.
pub struct Chain {
    lat: Lattice,
    params: ChainParams,
    cfg: FieldConfig,
    rng: ChaCha8Rng,
    is_clamped: Vec<bool>,
    colors: [Vec<usize>; 2],
    sweeps_done: u64,
    proposed: u64,
    accepted: u64,
}

impl Chain {
    pub fn new(params: ChainParams) -> Result<Self> {
        params.validate()?;
        let lat = Lattice::new(params.dim, params.side)?;
        let n = lat.n_sites();
        let mut is_clamped = vec![false; n];
        for &x in &params.clamped {
            if x >= n {
                return Err(param_err!("clamped site {x} out of range"));
            }
            is_clamped[x] = true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(params.stream);
        let mut heights: Vec<f64> = match params.init {
            Init::Exponential => (0..n).map(|_| -(1.0 - uniform(&mut rng)).ln()).collect(),
            Init::Flat(h) => vec![h; n],
        };
        for (h, _) in heights.iter_mut().zip(&is_clamped).filter(|(_, &c)| c) {
            *h = 0.0;
        }
        let cfg = FieldConfig {
            heights,
            pinned: vec![false; n],
        };
        let mut colors = [Vec::new(), Vec::new()];
        for x in (0..n).filter(|&x| !is_clamped[x]) {
            colors[lat.parity(x)].push(x);
        }
        Ok(Self {
            lat,
            params,
            cfg,
            rng,
            is_clamped,
            colors,
            sweeps_done: 0,
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn sweep(&mut self) -> Result<()> {
        match self.params.order {
            SweepOrder::Sequential => self.sweep_sequential()?,
            SweepOrder::Checkerboard => {
                self.sweep_color(0)?;
                self.sweep_color(1)?;
            }
        }
        self.sweeps_done += 1;
        self.check_invariants()
    }

    fn sweep_sequential(&mut self) -> Result<()> {
        let Self {
            lat,
            params,
            cfg,
            rng,
            is_clamped,
            proposed,
            accepted,
            ..
        } = self;
        for x in 0..lat.n_sites() {
            if is_clamped[x] {
                continue;
            }
            match params.kernel {
                Kernel::HeatBath => heat_bath_site(lat, cfg, x, &params.psi, &params.pin, rng)?,
                Kernel::Metropolis => {
                    *proposed += 1;
                    if metropolis_site(lat, cfg, x, &params.psi, &params.pin, params.step_width, rng)? {
                        *accepted += 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn sweep_color(&mut self, color: usize) -> Result<()> {
        let n = self.lat.n_sites() as u128;
        let base = self.rng.clone();
        let sweep = self.sweeps_done as u128;
        let (lat, params, heights) = (&self.lat, &self.params, &self.cfg.heights);
        let updates: Vec<(usize, f64, bool, bool)> = self.colors[color]
            .par_iter()
            .map(|&x| {
                let mut rng = base.clone();
                rng.set_word_pos((sweep * n + x as u128) * WORDS_PER_UPDATE);
                match params.kernel {
                    Kernel::HeatBath => heat_bath_draw(lat, heights, x, &params.psi, &params.pin, &mut rng)
                        .map(|(h, p)| (x, h, p, true)),
                    Kernel::Metropolis => {
                        let step = params.step_width * (2.0 * uniform(&mut rng) - 1.0);
                        let proposal = (heights[x] + step).abs();
                        let ok =
                            metropolis_decide(lat, heights, x, proposal, &params.psi, &params.pin, uniform(&mut rng));
                        Ok((x, if ok { proposal } else { heights[x] }, false, ok))
                    }
                }
            })
            .collect::<Result<_>>()?;
        for (x, h, p, ok) in updates {
            self.cfg.heights[x] = h;
            self.cfg.pinned[x] = p;
            if self.params.kernel == Kernel::Metropolis {
                self.proposed += 1;
                self.accepted += ok as u64;
            }
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<()> {
        for (x, (&h, &p)) in self.cfg.heights.iter().zip(&self.cfg.pinned).enumerate() {
            if !(h >= 0.0 && h.is_finite()) || (p && h != 0.0) || (self.is_clamped[x] && h != 0.0) {
                return Err(Error::Invariant(format!(
                    "after sweep {}: site {x} {:?} has height {h}, pinned = {p}; params = {:?}",
                    self.sweeps_done,
                    self.lat.coords(x),
                    self.params
                )));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ObservableSnapshot {
        let mut snap = snapshot(&self.lat, &self.cfg, &self.params.pin);
        if self.params.record_boundary_moment {
            let mut a_set = self.is_clamped.clone();
            for (a, &p) in a_set.iter_mut().zip(&self.cfg.pinned) {
                *a |= p;
            }
            snap.boundary_moment = Some(boundary_moment_of(&self.lat, &self.cfg.heights, &a_set));
        }
        snap
    }

    /// Runs burn-in and measurement sweeps, consuming the chain.
    pub fn run(mut self) -> Result<Trace> {
        let (sweeps, burn_in, thinning) = (self.params.sweeps, self.params.burn_in, self.params.thinning);
        let mut snapshots = Vec::with_capacity((sweeps - burn_in) / thinning);
        for s in 0..sweeps {
            self.sweep()?;
            if s >= burn_in && (s + 1 - burn_in) % thinning == 0 {
                snapshots.push(self.snapshot());
            }
        }
        Ok(Trace {
            snapshots,
            proposed: self.proposed,
            accepted: self.accepted,
            final_config: self.cfg,
        })
    }
}

pub fn run_chain(params: ChainParams) -> Result<Trace> {
    Chain::new(params)?.run()
}

/// Derives a well-mixed 64-bit seed for sub-streams (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        ^ salt
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
