//! Finite cubes of `Z^d` with zero boundary outside.
//!
//! Sites are indexed row-major with axis 0 varying fastest. Exterior sites are
//! never stored; each site carries the number of its bonds that leave the box.

use crate::error::{param_err, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    dim: usize,
    side: usize,
    /// Flattened inside-neighbor lists, `2 * dim` slots per site.
    neighbors: Vec<usize>,
    inside_count: Vec<u8>,
    outside_count: Vec<u8>,
}

/// Sites of the box with at least one bond leaving it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    sites: Vec<usize>,
}

impl BoundarySet {
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }
}

impl Lattice {
    /// Builds the cube of side `side` in dimension `dim`.
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(param_err!("dimension must be 1, 2 or 3 (got {dim})"));
        }
        if side < 1 {
            return Err(param_err!("side length must be at least 1 (got {side})"));
        }
        let n_sites = side
            .checked_pow(dim as u32)
            .filter(|n| *n <= 1 << 26)
            .ok_or_else(|| param_err!("lattice {side}^{dim} is too large"))?;
        let slots = 2 * dim;
        let mut neighbors = vec![usize::MAX; n_sites * slots];
        let mut inside_count = vec![0u8; n_sites];
        let mut outside_count = vec![0u8; n_sites];
        let mut coords = [0usize; MAX_DIM];
        for site in 0..n_sites {
            let mut stride = 1;
            let mut k = 0;
            for &c in coords.iter().take(dim) {
                if c > 0 {
                    neighbors[site * slots + k] = site - stride;
                    k += 1;
                } else {
                    outside_count[site] += 1;
                }
                if c + 1 < side {
                    neighbors[site * slots + k] = site + stride;
                    k += 1;
                } else {
                    outside_count[site] += 1;
                }
                stride *= side;
            }
            inside_count[site] = k as u8;
            // advance row-major counter
            for c in coords.iter_mut().take(dim) {
                *c += 1;
                if *c < side {
                    break;
                }
                *c = 0;
            }
        }
        Ok(Self {
            dim,
            side,
            neighbors,
            inside_count,
            outside_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.inside_count.len()
    }

    /// Number of bonds per site, `2d`.
    pub fn coordination(&self) -> usize {
        2 * self.dim
    }

    #[inline]
    pub fn neighbors(&self, site: usize) -> &[usize] {
        let slots = 2 * self.dim;
        let start = site * slots;
        &self.neighbors[start..start + self.inside_count[site] as usize]
    }

    #[inline]
    pub fn outside_bonds(&self, site: usize) -> usize {
        self.outside_count[site] as usize
    }

    pub fn coords(&self, site: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = site;
        for c in out.iter_mut().take(self.dim) {
            *c = rest % self.side;
            rest /= self.side;
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .take(self.dim)
            .rev()
            .fold(0, |acc, &c| acc * self.side + c)
    }

    /// The site at coordinates `(N/2, ..., N/2)`.
    pub fn center(&self) -> usize {
        self.index(&[self.side / 2; MAX_DIM])
    }

    /// Checkerboard colour: parity of the coordinate sum.
    pub fn parity(&self, site: usize) -> usize {
        self.coords(site).iter().take(self.dim).sum::<usize>() % 2
    }

    pub fn are_adjacent(&self, x: usize, y: usize) -> bool {
        self.neighbors(x).contains(&y)
    }

    /// Every internal bond `(x, y)` with `x < y`, each listed once.
    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_sites()).flat_map(move |x| self.neighbors(x).iter().filter(move |&&y| y > x).map(move |&y| (x, y)))
    }

    pub fn total_outside_bonds(&self) -> usize {
        self.outside_count.iter().map(|&c| c as usize).sum()
    }

    pub fn boundary_sites(&self) -> BoundarySet {
        BoundarySet {
            sites: (0..self.n_sites()).filter(|&x| self.outside_count[x] > 0).collect(),
        }
    }

    /// Boustrophedon ordering of all sites starting at the origin corner.
    ///
    /// Consecutive entries are nearest neighbours.
    pub fn snake_path(&self) -> Vec<usize> {
        self.snake_coords(self.dim).iter().map(|c| self.index(c)).collect()
    }

    // Layer `k` of the top axis traverses the lower-dimensional snake,
    // reversed on odd layers, so layer ends meet.
    fn snake_coords(&self, dim: usize) -> Vec<[usize; MAX_DIM]> {
        if dim == 0 {
            return vec![[0; MAX_DIM]];
        }
        let lower = self.snake_coords(dim - 1);
        let mut out = Vec::with_capacity(lower.len() * self.side);
        for k in 0..self.side {
            let layer: Box<dyn Iterator<Item = &[usize; MAX_DIM]>> = if k % 2 == 0 {
                Box::new(lower.iter())
            } else {
                Box::new(lower.iter().rev())
            };
            out.extend(layer.map(|c| {
                let mut c = *c;
                c[dim - 1] = k;
                c
            }));
        }
        out
    }
}
