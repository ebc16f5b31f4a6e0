//! C ABI for the `wetting` library.
//!
//! Every fallible function returns a [`WettingStatus`]; on failure a message
//! is available from [`wetting_last_error`] on the same thread. Lattices and
//! chains are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wetting::chalker::{verify_all, VerifyOptions};
use wetting::model::{InteractionPotential, PinningSpec};
use wetting::observables::{estimate_rho, estimate_with};
use wetting::oracle::{exact, QuadratureSpec};
use wetting::sampler::{Chain, ChainParams, Kernel};
use wetting::{Error, Lattice};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WettingStatus {
    Ok = 0,
    InvalidArgument = 1,
    Invariant = 2,
    Usage = 3,
    Numerical = 4,
    Fit = 5,
    TooLarge = 6,
    NullPointer = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WettingInteraction {
    Sos = 0,
    Gaussian = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WettingPinning {
    None = 0,
    SquareWell = 1,
    Delta = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WettingKernel {
    HeatBath = 0,
    Metropolis = 1,
}

/// Model and chain parameters. Fill with [`wetting_params_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WettingParams {
    pub dim: u32,
    pub side: u32,
    pub interaction: WettingInteraction,
    pub pinning: WettingPinning,
    /// Square-well width and depth; ignored unless `pinning` is a square well.
    pub a: f64,
    pub b: f64,
    /// Delta-pinning weight; ignored unless `pinning` is delta.
    pub epsilon: f64,
    pub kernel: WettingKernel,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub step_width: f64,
}

/// Estimates from one chain. Standard errors are NaN when the run is too
/// short for batch means; `accept_rate` is NaN for heat bath.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WettingSummary {
    pub rho: f64,
    pub rho_se: f64,
    pub nu_mean: f64,
    pub mean_height: f64,
    pub mean_height_se: f64,
    pub center_height: f64,
    pub max_height: f64,
    pub accept_rate: f64,
    pub snapshots: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WettingExact {
    pub z: f64,
    pub log_z: f64,
    pub rho: f64,
    pub error_estimate: f64,
}

pub struct WettingLattice(Lattice);

pub struct WettingChain(Chain);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WettingStatus {
    match e {
        Error::Parameter(_) => WettingStatus::InvalidArgument,
        Error::Invariant(_) => WettingStatus::Invariant,
        Error::Usage(_) => WettingStatus::Usage,
        Error::Numerical(_) => WettingStatus::Numerical,
        Error::Fit(_) => WettingStatus::Fit,
        Error::TooLarge(_) => WettingStatus::TooLarge,
    }
}

fn guard<F: FnOnce() -> Result<(), WettingStatus>>(f: F) -> WettingStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WettingStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside the wetting library".into());
            WettingStatus::Panic
        }
    }
}

fn lift<T>(r: wetting::Result<T>) -> Result<T, WettingStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null_error(name: &str) -> WettingStatus {
    set_error(format!("{name} is null"));
    WettingStatus::NullPointer
}

fn pinning_of(p: &WettingParams) -> wetting::Result<PinningSpec> {
    match p.pinning {
        WettingPinning::None => Ok(PinningSpec::None),
        WettingPinning::SquareWell => PinningSpec::square_well(p.a, p.b),
        WettingPinning::Delta => PinningSpec::delta(p.epsilon),
    }
}

fn interaction_of(i: WettingInteraction) -> InteractionPotential {
    match i {
        WettingInteraction::Sos => InteractionPotential::Sos,
        WettingInteraction::Gaussian => InteractionPotential::Gaussian,
    }
}

fn chain_params(p: &WettingParams) -> wetting::Result<ChainParams> {
    let mut c = ChainParams::new(
        p.dim as usize,
        p.side as usize,
        interaction_of(p.interaction),
        pinning_of(p)?,
    );
    c.kernel = match p.kernel {
        WettingKernel::HeatBath => Kernel::HeatBath,
        WettingKernel::Metropolis => Kernel::Metropolis,
    };
    c.sweeps = p.sweeps as usize;
    c.burn_in = p.burn_in as usize;
    c.thinning = p.thinning as usize;
    c.seed = p.seed;
    c.step_width = p.step_width;
    c.validate()?;
    Ok(c)
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wetting_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wetting_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults: d = 1, N = 1, SOS, no pinning, heat bath, 10000 sweeps with
/// 1000 burn-in, thinning 1, seed 0, step width 1.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `WettingParams`.
#[no_mangle]
pub unsafe extern "C" fn wetting_params_default(out: *mut WettingParams) -> WettingStatus {
    if out.is_null() {
        return null_error("out");
    }
    let d = ChainParams::new(1, 1, InteractionPotential::Sos, PinningSpec::None);
    out.write(WettingParams {
        dim: 1,
        side: 1,
        interaction: WettingInteraction::Sos,
        pinning: WettingPinning::None,
        a: 0.1,
        b: 1.0,
        epsilon: 0.0,
        kernel: WettingKernel::HeatBath,
        sweeps: d.sweeps as u64,
        burn_in: d.burn_in as u64,
        thinning: 1,
        seed: 0,
        step_width: d.step_width,
    });
    WettingStatus::Ok
}

/// # Safety
/// `out` must be NULL or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn wetting_lattice_new(dim: u32, side: u32, out: *mut *mut WettingLattice) -> WettingStatus {
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let lat = lift(Lattice::new(dim as usize, side as usize))?;
        out.write(Box::into_raw(Box::new(WettingLattice(lat))));
        Ok(())
    })
}

/// # Safety
/// `lat` must be NULL or a handle from [`wetting_lattice_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wetting_lattice_free(lat: *mut WettingLattice) {
    if !lat.is_null() {
        drop(Box::from_raw(lat));
    }
}

/// Number of sites, or 0 for a NULL handle.
///
/// # Safety
/// `lat` must be NULL or a live lattice handle.
#[no_mangle]
pub unsafe extern "C" fn wetting_lattice_sites(lat: *const WettingLattice) -> u64 {
    lat.as_ref().map_or(0, |l| l.0.n_sites() as u64)
}

/// Number of sites with at least one bond leaving the box, or 0 for NULL.
///
/// # Safety
/// `lat` must be NULL or a live lattice handle.
#[no_mangle]
pub unsafe extern "C" fn wetting_lattice_boundary_len(lat: *const WettingLattice) -> u64 {
    lat.as_ref().map_or(0, |l| l.0.boundary_sites().len() as u64)
}

/// Writes the snake path (a Hamiltonian path through the box starting on the
/// boundary) into `buf`, which must hold `wetting_lattice_sites` entries.
///
/// # Safety
/// `lat` must be a live handle and `buf` must point to `len` writable `u64`s.
#[no_mangle]
pub unsafe extern "C" fn wetting_lattice_snake_path(
    lat: *const WettingLattice,
    buf: *mut u64,
    len: u64,
) -> WettingStatus {
    let Some(lat) = lat.as_ref() else {
        return null_error("lat");
    };
    if buf.is_null() {
        return null_error("buf");
    }
    let path = lat.0.snake_path();
    if (len as usize) < path.len() {
        set_error(format!("buffer holds {len} entries, need {}", path.len()));
        return WettingStatus::InvalidArgument;
    }
    for (i, x) in path.into_iter().enumerate() {
        buf.add(i).write(x as u64);
    }
    WettingStatus::Ok
}

/// # Safety
/// `params` must point to a valid `WettingParams`; `out` to storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn wetting_chain_new(params: *const WettingParams, out: *mut *mut WettingChain) -> WettingStatus {
    let Some(p) = params.as_ref() else {
        return null_error("params");
    };
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let chain = lift(chain_params(p).and_then(Chain::new))?;
        out.write(Box::into_raw(Box::new(WettingChain(chain))));
        Ok(())
    })
}

/// # Safety
/// `chain` must be NULL or a handle from [`wetting_chain_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wetting_chain_free(chain: *mut WettingChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Performs `sweeps` full sweeps.
///
/// # Safety
/// `chain` must be a live chain handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn wetting_chain_sweep(chain: *mut WettingChain, sweeps: u64) -> WettingStatus {
    let Some(c) = chain.as_mut() else {
        return null_error("chain");
    };
    guard(|| {
        for _ in 0..sweeps {
            lift(c.0.sweep())?;
        }
        Ok(())
    })
}

/// Copies the current heights into `buf` (row-major site order).
///
/// # Safety
/// `chain` must be a live handle and `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn wetting_chain_heights(chain: *const WettingChain, buf: *mut f64, len: u64) -> WettingStatus {
    let Some(c) = chain.as_ref() else {
        return null_error("chain");
    };
    if buf.is_null() {
        return null_error("buf");
    }
    let h = &c.0.config().heights;
    if (len as usize) < h.len() {
        set_error(format!("buffer holds {len} entries, need {}", h.len()));
        return WettingStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(h.as_ptr(), buf, h.len());
    WettingStatus::Ok
}

/// Current number of pinned sites, or 0 for NULL.
///
/// # Safety
/// `chain` must be NULL or a live chain handle.
#[no_mangle]
pub unsafe extern "C" fn wetting_chain_pinned_count(chain: *const WettingChain) -> u64 {
    chain.as_ref().map_or(0, |c| c.0.snapshot().nu as u64)
}

/// Runs a full chain (burn-in plus measurement) and summarises it.
///
/// # Safety
/// `params` must point to a valid `WettingParams`; `out` to a writable `WettingSummary`.
#[no_mangle]
pub unsafe extern "C" fn wetting_run(params: *const WettingParams, out: *mut WettingSummary) -> WettingStatus {
    let Some(p) = params.as_ref() else {
        return null_error("params");
    };
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let cp = lift(chain_params(p))?;
        let lat = lift(Lattice::new(cp.dim, cp.side))?;
        let trace = lift(wetting::run_chain(cp))?;
        let rho = lift(estimate_rho(&trace, &lat))?;
        let nu = lift(estimate_with(&trace, |s| s.nu as f64))?;
        let h = lift(estimate_with(&trace, |s| s.mean_height))?;
        let c = lift(estimate_with(&trace, |s| s.center_height))?;
        let m = lift(estimate_with(&trace, |s| s.max_height))?;
        out.write(WettingSummary {
            rho: rho.value,
            rho_se: rho.se.unwrap_or(f64::NAN),
            nu_mean: nu.value,
            mean_height: h.value,
            mean_height_se: h.se.unwrap_or(f64::NAN),
            center_height: c.value,
            max_height: m.value,
            accept_rate: trace.accept_rate().unwrap_or(f64::NAN),
            snapshots: trace.snapshots.len() as u64,
        });
        Ok(())
    })
}

/// Exact partition function and pinned density on a tiny box. Uses the
/// `dim`, `side`, `interaction` and pinning fields of `params`.
///
/// # Safety
/// `params` must point to a valid `WettingParams`; `out` to a writable `WettingExact`.
#[no_mangle]
pub unsafe extern "C" fn wetting_exact(params: *const WettingParams, out: *mut WettingExact) -> WettingStatus {
    let Some(p) = params.as_ref() else {
        return null_error("params");
    };
    if out.is_null() {
        return null_error("out");
    }
    guard(|| {
        let lat = lift(Lattice::new(p.dim as usize, p.side as usize))?;
        let pin = lift(pinning_of(p))?;
        let r = lift(exact(
            &lat,
            &interaction_of(p.interaction),
            &pin,
            &QuadratureSpec::default(),
        ))?;
        out.write(WettingExact {
            z: r.z,
            log_z: r.log_z,
            rho: r.rho,
            error_estimate: r.error_estimate,
        });
        Ok(())
    })
}

/// Runs every map-inequality check; writes the total violation count and the
/// smallest slack seen.
///
/// # Safety
/// `violations` and `min_slack` must be NULL or point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn wetting_verify(
    random_configs: u64,
    adversarial_configs: u64,
    seed: u64,
    violations: *mut u64,
    min_slack: *mut f64,
) -> WettingStatus {
    guard(|| {
        let reports = lift(verify_all(&VerifyOptions {
            random_configs: random_configs as usize,
            adversarial_configs: adversarial_configs as usize,
            seed,
        }))?;
        if !violations.is_null() {
            violations.write(reports.iter().map(|r| r.violations as u64).sum());
        }
        if !min_slack.is_null() {
            min_slack.write(reports.iter().map(|r| r.min_slack).fold(f64::INFINITY, f64::min));
        }
        Ok(())
    })
}
