//! Height maps comparing nearly-pinned configurations with pinned ones, and
//! the pointwise energy inequalities they satisfy.
//!
//! * `T` lowers every height above `a` by `a` (square well).
//! * `S` lowers every height above 1 by 1 and sends the rest to 0 (delta pinning).
//!
//! Each `check_*` returns `rhs - lhs` of its inequality, which must be
//! non-negative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param_err, Error, Result};
use crate::lattice::Lattice;
use crate::model::{energy_unchecked, FieldConfig, InteractionPotential, PinningSpec};
use crate::observables::{batch_means, Estimate};
use crate::sampler::{derive_seed, Chain, ChainParams};
use crate::special::ExactSum;

/// A configuration with its stratification `B ⊆ A ⊆ Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedConfig {
    pub config: FieldConfig,
    pub b: Vec<bool>,
    pub a: Vec<bool>,
}

impl StratifiedConfig {
    /// `B = {phi <= a}`, `A \ B = {a < phi <= 2a}`.
    pub fn square_well(cfg: &FieldConfig, a: f64) -> Self {
        Self {
            config: cfg.clone(),
            b: cfg.heights.iter().map(|&h| h <= a).collect(),
            a: cfg.heights.iter().map(|&h| h <= 2.0 * a).collect(),
        }
    }

    /// `B` = pinned sites, `A = {phi <= 1}`.
    pub fn delta(cfg: &FieldConfig) -> Self {
        Self {
            config: cfg.clone(),
            b: cfg.pinned.clone(),
            a: cfg.heights.iter().map(|&h| h <= 1.0).collect(),
        }
    }

    pub fn size_a(&self) -> usize {
        self.a.iter().filter(|&&x| x).count()
    }

    pub fn size_b(&self) -> usize {
        self.b.iter().filter(|&&x| x).count()
    }

    pub fn is_consistent(&self) -> bool {
        self.b.iter().zip(&self.a).all(|(&b, &a)| !b || a)
    }
}

/// `nu_N(phi) >= M`.
pub fn in_b_m(cfg: &FieldConfig, pin: &PinningSpec, m: usize) -> bool {
    crate::observables::pinned_count(cfg, pin) >= m
}

/// `#{phi <= 2a} >= M`.
pub fn in_c_m(cfg: &FieldConfig, a: f64, m: usize) -> bool {
    cfg.heights.iter().filter(|&&h| h <= 2.0 * a).count() >= m
}

/// `#{phi <= 1} >= M`.
pub fn in_d_m(cfg: &FieldConfig, m: usize) -> bool {
    cfg.heights.iter().filter(|&&h| h <= 1.0).count() >= m
}

pub fn map_t(cfg: &FieldConfig, a: f64) -> FieldConfig {
    FieldConfig {
        heights: cfg.heights.iter().map(|&h| if h <= a { h } else { h - a }).collect(),
        pinned: cfg.pinned.clone(),
    }
}

/// Sites sent to 0 are marked as sitting on the atom.
pub fn map_s(cfg: &FieldConfig) -> FieldConfig {
    FieldConfig {
        heights: cfg
            .heights
            .iter()
            .map(|&h| if h > 1.0 { h - 1.0 } else { 0.0 })
            .collect(),
        pinned: cfg.heights.iter().map(|&h| h <= 1.0).collect(),
    }
}

/// `sum_{x in dLambda} max(d, outside bonds of x)`, which is `d |dLambda|`
/// once `N >= 2`. A single-site box has `2d` outside bonds at its one site.
pub fn boundary_bond_bound(lat: &Lattice) -> usize {
    let d = lat.dim();
    lat.boundary_sites()
        .sites()
        .iter()
        .map(|&x| d.max(lat.outside_bonds(x)))
        .sum()
}

fn rounding_tolerance(lhs: f64, rhs: f64, n: usize) -> f64 {
    8.0 * (n as f64 + 4.0) * f64::EPSILON * (lhs.abs() + rhs.abs() + 1.0)
}

/// Result of one inequality evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slack {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Floating-point rounding allowance for `slack`.
    pub tolerance: f64,
}

impl Slack {
    fn new(lhs: f64, rhs: f64, n: usize) -> Self {
        Self {
            lhs,
            rhs,
            slack: rhs - lhs,
            tolerance: rounding_tolerance(lhs, rhs, n),
        }
    }

    fn exact(lhs: &ExactSum, rhs: &ExactSum, slack: &ExactSum) -> Self {
        Self {
            lhs: lhs.value(),
            rhs: rhs.value(),
            slack: slack.value(),
            tolerance: 0.0,
        }
    }

    pub fn is_violation(&self) -> bool {
        self.slack < -self.tolerance
    }
}

fn check_config(lat: &Lattice, cfg: &FieldConfig) -> Result<()> {
    if cfg.len() != lat.n_sites() {
        return Err(param_err!("configuration does not match the lattice"));
    }
    if cfg.heights.iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
        return Err(Error::Invariant("negative or non-finite height".into()));
    }
    Ok(())
}

/// `H(phi) <= H(T phi) + d a |dLambda| + 2 d a |B|` for the SOS interaction.
pub fn check_t_inequality(lat: &Lattice, cfg: &FieldConfig, psi: &InteractionPotential, a: f64) -> Result<Slack> {
    if !psi.is_sos() {
        return Err(Error::Usage(
            "the T inequality is stated for the SOS interaction".into(),
        ));
    }
    if !(a > 0.0) {
        return Err(param_err!("well width a must be positive"));
    }
    check_config(lat, cfg)?;
    let d = lat.dim() as f64;
    let b = cfg.heights.iter().filter(|&&h| h <= a).count() as f64;
    let shift = |h: f64| if h <= a { 0.0 } else { a };
    let extra = |acc: &mut ExactSum| {
        acc.add_product(a, boundary_bond_bound(lat) as f64);
        acc.add_product(2.0 * d * a, b);
    };
    Ok(exact_sos_slack(lat, &cfg.heights, shift, extra))
}

/// `H(phi) <= H(S phi) + d |dLambda| + 2 d |A|` for the SOS interaction.
pub fn check_s_inequality_sos(lat: &Lattice, cfg: &FieldConfig, psi: &InteractionPotential) -> Result<Slack> {
    if !psi.is_sos() {
        return Err(Error::Usage(
            "this S inequality is stated for the SOS interaction".into(),
        ));
    }
    check_config(lat, cfg)?;
    let d = lat.dim() as f64;
    let a = cfg.heights.iter().filter(|&&h| h <= 1.0).count() as f64;
    let shift = |h: f64| if h > 1.0 { 1.0 } else { h };
    let extra = |acc: &mut ExactSum| {
        acc.add(boundary_bond_bound(lat) as f64);
        acc.add(2.0 * d * a);
    };
    Ok(exact_sos_slack(lat, &cfg.heights, shift, extra))
}

/// Pushes `sign * |sum(parts)|` into `acc` without rounding.
fn push_abs(acc: &mut ExactSum, parts: &[f64], sign: f64) {
    let s = parts.iter().copied().collect::<ExactSum>().value();
    let s = if s < 0.0 { -sign } else { sign };
    parts.iter().for_each(|&p| acc.add(s * p));
}

/// Exact SOS energy of `h - shift(h)`, with the mapped heights never rounded.
fn exact_sos_energy(lat: &Lattice, h: &[f64], shift: &dyn Fn(f64) -> f64, sign: f64, acc: &mut ExactSum) {
    for (x, y) in lat.bonds() {
        push_abs(acc, &[h[x], -shift(h[x]), -h[y], shift(h[y])], sign);
    }
    for x in 0..lat.n_sites() {
        for _ in 0..lat.outside_bonds(x) {
            push_abs(acc, &[h[x], -shift(h[x])], sign);
        }
    }
}

/// `H(phi)` against `H(h - shift) + extra`, summed exactly so that the sign
/// of the slack is never a rounding artefact.
fn exact_sos_slack(lat: &Lattice, h: &[f64], shift: impl Fn(f64) -> f64, extra: impl Fn(&mut ExactSum)) -> Slack {
    let id = |_: f64| 0.0;
    let mut lhs = ExactSum::new();
    exact_sos_energy(lat, h, &id, 1.0, &mut lhs);
    let mut rhs = ExactSum::new();
    exact_sos_energy(lat, h, &shift, 1.0, &mut rhs);
    extra(&mut rhs);
    let mut slack = ExactSum::new();
    exact_sos_energy(lat, h, &shift, 1.0, &mut slack);
    extra(&mut slack);
    exact_sos_energy(lat, h, &id, -1.0, &mut slack);
    Slack::exact(&lhs, &rhs, &slack)
}

/// `X(phi) = 2 sum_{x in dW} sum_{y not in W, y ~ x} phi_y` with
/// `W = A ∪ Λ^c`. Every bond from `W` into `Λ \ A` contributes `2 phi_y`.
pub fn boundary_sum_x(lat: &Lattice, heights: &[f64], a_set: &[bool]) -> f64 {
    2.0 * (0..lat.n_sites())
        .filter(|&y| !a_set[y])
        .map(|y| {
            let into_w = lat.outside_bonds(y) + lat.neighbors(y).iter().filter(|&&x| a_set[x]).count();
            heights[y] * into_w as f64
        })
        .sum::<f64>()
}

/// `|dW|`: sites of `A` with a free neighbour, plus exterior sites next to a
/// free site (each outside bond reaches a distinct exterior site).
pub fn boundary_w_size(lat: &Lattice, a_set: &[bool]) -> usize {
    (0..lat.n_sites())
        .map(|x| {
            if a_set[x] {
                lat.neighbors(x).iter().any(|&y| !a_set[y]) as usize
            } else {
                lat.outside_bonds(x)
            }
        })
        .sum()
}

/// `X / |dW|`, defined as 0 when `dW` is empty.
pub fn boundary_moment_of(lat: &Lattice, heights: &[f64], a_set: &[bool]) -> f64 {
    let size = boundary_w_size(lat, a_set);
    if size == 0 {
        0.0
    } else {
        boundary_sum_x(lat, heights, a_set) / size as f64
    }
}

/// `H(phi) <= H(S phi) + 2 |dLambda| + 8 |A| + X(S phi)` for the Gaussian
/// interaction in two dimensions, with `A = {phi <= 1}`.
pub fn check_s_inequality_gauss(lat: &Lattice, cfg: &FieldConfig, psi: &InteractionPotential) -> Result<Slack> {
    if lat.dim() != 2 || !psi.is_gaussian() {
        return Err(Error::Usage(
            "the Gaussian S inequality applies to the Gaussian interaction in d = 2".into(),
        ));
    }
    check_config(lat, cfg)?;
    let a_set: Vec<bool> = cfg.heights.iter().map(|&h| h <= 1.0).collect();
    let a = a_set.iter().filter(|&&x| x).count() as f64;
    let lhs = energy_unchecked(lat, &cfg.heights, psi);
    let mapped = map_s(cfg);
    let x = boundary_sum_x(lat, &mapped.heights, &a_set);
    let rhs = energy_unchecked(lat, &mapped.heights, psi) + 2.0 * lat.boundary_sites().len() as f64 + 8.0 * a + x;
    Ok(Slack::new(lhs, rhs, lat.n_sites()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBudget {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// MCMC estimate of the mean of `X / |dW|` under the Gaussian field on
/// `Λ \ A` with the sites of `A` clamped to 0 and no pinning.
pub fn check_boundary_moment(lat: &Lattice, a_set: &[bool], budget: MomentBudget) -> Result<Estimate> {
    if lat.dim() != 2 {
        return Err(Error::Usage("boundary moment check is defined for d = 2".into()));
    }
    if a_set.len() != lat.n_sites() {
        return Err(param_err!("clamp mask does not match the lattice"));
    }
    if a_set.iter().all(|&a| a) {
        return Ok(Estimate::exact(0.0));
    }
    let mut params = ChainParams::new(2, lat.side(), InteractionPotential::Gaussian, PinningSpec::None);
    params.sweeps = budget.sweeps;
    params.burn_in = budget.burn_in;
    params.seed = budget.seed;
    params.clamped = (0..lat.n_sites()).filter(|&x| a_set[x]).collect();
    params.record_boundary_moment = true;
    let trace = Chain::new(params)?.run()?;
    let series: Vec<f64> = trace
        .snapshots
        .iter()
        .map(|s| s.boundary_moment.unwrap_or(0.0))
        .collect();
    batch_means(&series, crate::observables::DEFAULT_BATCHES)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    TInequality,
    SInequalitySos,
    SInequalityGauss,
    TCountProperty,
    SZeroCountProperty,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::TInequality,
        CheckKind::SInequalitySos,
        CheckKind::SInequalityGauss,
        CheckKind::TCountProperty,
        CheckKind::SZeroCountProperty,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::TInequality => "T_inequality_sos",
            Self::SInequalitySos => "S_inequality_sos",
            Self::SInequalityGauss => "S_inequality_gauss_2d",
            Self::TCountProperty => "T_maps_C_into_B",
            Self::SZeroCountProperty => "S_maps_D_onto_B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub kind: CheckKind,
    pub configs: usize,
    pub adversarial: usize,
    /// Smallest slack seen (for the count properties: the smallest surplus).
    pub min_slack: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub random_configs: usize,
    pub adversarial_configs: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            random_configs: 100_000,
            adversarial_configs: 1_000,
            seed: 0,
        }
    }
}

const WELL_WIDTHS: [f64; 3] = [0.05, 0.1, 0.3];

/// Geometry and well width for the `i`-th case of a check.
fn case_for(kind: CheckKind, i: usize) -> (usize, usize, f64) {
    let a = WELL_WIDTHS[(i / 7) % WELL_WIDTHS.len()];
    match kind {
        CheckKind::TInequality | CheckKind::TCountProperty => (1 + i % 2, 2 + (i / 2) % 5, a),
        CheckKind::SInequalitySos | CheckKind::SZeroCountProperty => (1 + i % 3, 1 + (i / 3) % 5, a),
        CheckKind::SInequalityGauss => (2, 2 + i % 5, a),
    }
}

fn random_heights(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    let scale = [0.5 * a, 2.0 * a, 0.7, 1.5, 6.0][rng.random_range(0..5)];
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.1 {
                0.0
            } else {
                -scale * (1.0 - rng.random::<f64>()).ln()
            }
        })
        .collect()
}

/// Heights sitting on or within `1e-12` of the thresholds `a`, `2a` and 1.
fn adversarial_heights(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    let anchors = [0.0, a, 2.0 * a, 1.0, 3.0 * a, 2.0];
    (0..n)
        .map(|_| {
            let base = anchors[rng.random_range(0..anchors.len())];
            let jitter = [0.0, 1e-12, -1e-12][rng.random_range(0..3)];
            (base + jitter).max(0.0)
        })
        .collect()
}

fn evaluate(kind: CheckKind, lat: &Lattice, cfg: &FieldConfig, a: f64) -> Result<(f64, bool)> {
    match kind {
        CheckKind::TInequality => {
            let s = check_t_inequality(lat, cfg, &InteractionPotential::Sos, a)?;
            Ok((s.slack, s.is_violation()))
        }
        CheckKind::SInequalitySos => {
            let s = check_s_inequality_sos(lat, cfg, &InteractionPotential::Sos)?;
            Ok((s.slack, s.is_violation()))
        }
        CheckKind::SInequalityGauss => {
            let s = check_s_inequality_gauss(lat, cfg, &InteractionPotential::Gaussian)?;
            Ok((s.slack, s.is_violation()))
        }
        CheckKind::TCountProperty => {
            let mapped = map_t(cfg, a);
            let after = mapped.heights.iter().filter(|&&h| h <= a).count() as f64;
            let before = cfg.heights.iter().filter(|&&h| h <= 2.0 * a).count() as f64;
            let negative = mapped.heights.iter().any(|&h| h < 0.0);
            Ok((after - before, after < before || negative))
        }
        CheckKind::SZeroCountProperty => {
            let mapped = map_s(cfg);
            let zeros = mapped.heights.iter().filter(|&&h| h == 0.0).count() as f64;
            let below = cfg.heights.iter().filter(|&&h| h <= 1.0).count() as f64;
            let negative = mapped.heights.iter().any(|&h| h < 0.0);
            Ok((zeros - below, zeros != below || negative))
        }
    }
}

/// Runs one check over randomized and threshold-adversarial configurations.
pub fn run_check(kind: CheckKind, opts: &VerifyOptions) -> Result<CheckReport> {
    let total = opts.random_configs + opts.adversarial_configs;
    let salt = kind as u64 + 1;
    let (min_slack, violations) = (0..total)
        .into_par_iter()
        .map(|i| {
            let (d, n, a) = case_for(kind, i);
            let lat = Lattice::new(d, n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, salt));
            rng.set_stream(i as u64);
            let heights = if i < opts.random_configs {
                random_heights(&mut rng, lat.n_sites(), a)
            } else {
                adversarial_heights(&mut rng, lat.n_sites(), a)
            };
            let cfg = FieldConfig::from_heights(heights)?;
            evaluate(kind, &lat, &cfg, a)
        })
        .try_fold(
            || (f64::INFINITY, 0usize),
            |(m, v), r| r.map(|(s, bad)| (m.min(s), v + bad as usize)),
        )
        .try_reduce(|| (f64::INFINITY, 0), |x, y| Ok((x.0.min(y.0), x.1 + y.1)))?;
    Ok(CheckReport {
        kind,
        configs: total,
        adversarial: opts.adversarial_configs,
        min_slack,
        violations,
    })
}

pub fn verify_all(opts: &VerifyOptions) -> Result<Vec<CheckReport>> {
    CheckKind::ALL.iter().map(|&k| run_check(k, opts)).collect()
}
