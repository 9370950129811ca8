//! Lattice regions, boundaries and boundary conditions.
//!
//! A [`Region`] is a finite set of `d`-dimensional integer sites stored in
//! lexicographic order, which fixes a dense index `0..N` used by every other
//! module. Boundaries follow the usual nearest-neighbour conventions on
//! `Z^d`: the outer boundary of `G` is every site outside `G` adjacent to it,
//! the inner boundary is every site of `G` adjacent to its complement.
//!
//! Builders cover the shapes the dynamics runs on: hypercubes `{1..L}^d`,
//! three-dimensional discrete balls of real radius, the polylog cylinder
//! (3-ball cross-section times a box of heights) and its nested shrunk sets,
//! plus the boundary conditions attached to each.

use std::sync::Arc;

use crate::error::{Error, Result};

mod slab;
pub use slab::{eta_slab, first_layer, shell3, shell3_radii, SlabSlice, SlabSystem};

/// Signed lattice coordinate.
pub type Coord = i32;

/// Base of the logarithm entering every polylog radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LogBase {
    /// Natural logarithm (default).
    Natural,
    /// Logarithm base 2.
    Base2,
    /// Logarithm base 10.
    Base10,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Base2 => x.log2(),
            LogBase::Base10 => x.log10(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogBase::Natural => "natural",
            LogBase::Base2 => "base2",
            LogBase::Base10 => "base10",
        }
    }
}

/// Parameters of the polylog cylinder geometries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryParams {
    /// Side length of the height box.
    pub l: u32,
    /// Ambient dimension (at least 4 for cylinder shapes).
    pub d: usize,
    /// Polylog exponent of all radii; 3/2 unless overridden.
    pub c2: f64,
    /// Base of the logarithm in the radii.
    pub log_base: LogBase,
}

impl GeometryParams {
    pub fn new(l: u32, d: usize) -> Self {
        GeometryParams {
            l,
            d,
            c2: 1.5,
            log_base: LogBase::Natural,
        }
    }

    /// `log L` in the configured base.
    pub fn log_l(&self) -> f64 {
        self.log_base.log(self.l as f64)
    }

    /// `(log L)^{c2}`, the unit all radii are measured in.
    pub fn polylog(&self) -> f64 {
        self.log_l().powf(self.c2)
    }

    /// Cross-section radius of the cylinder: `2 d L (log L)^{c2}`.
    pub fn base_radius(&self) -> f64 {
        2.0 * self.d as f64 * self.l as f64 * self.polylog()
    }

    /// Radius of the shrunk ball with index `k`: `(2dL - k) (log L)^{c2}`.
    ///
    /// May be negative for out-of-range `k`, in which case the ball is empty.
    pub fn shrunk_radius(&self, k: i64) -> f64 {
        (2.0 * self.d as f64 * self.l as f64 - k as f64) * self.polylog()
    }

    /// Largest shrink index for the nested sets: `2 (d-2) L`.
    pub fn max_shrink_index(&self) -> u32 {
        2 * (self.d as u32 - 2) * self.l
    }

    /// Validity check for polylog geometries: requires `d >= 4` and
    /// `log L > 1` so the radius gap between consecutive shrink indices
    /// exceeds one lattice unit.
    fn check_polylog(&self) -> Result<()> {
        if self.d < 4 {
            return Err(Error::InvalidParameter(format!(
                "cylinder geometries need d >= 4, got d = {}",
                self.d
            )));
        }
        if self.log_l() <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "polylog radii need log L > 1 (got L = {}, {} log); increase L",
                self.l,
                self.log_base.name()
            )));
        }
        if self.c2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "c2 must be positive, got {}",
                self.c2
            )));
        }
        Ok(())
    }
}

/// A finite set of lattice sites of one dimension, ordered lexicographically.
///
/// The position of a site in the ordering is its dense index, used to address
/// spin arrays, masks and event streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    dim: usize,
    coords: Vec<Coord>,
}

impl Region {
    /// Builds a region from raw sites; sorts them and rejects duplicates.
    pub fn from_sites(dim: usize, mut flat: Vec<Coord>) -> Result<Region> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !flat.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "coordinate buffer length {} is not a multiple of dim {}",
                flat.len(),
                dim
            )));
        }
        sort_sites(dim, &mut flat);
        for w in 0..flat.len() / dim {
            if w > 0 && flat[(w - 1) * dim..w * dim] == flat[w * dim..(w + 1) * dim] {
                return Err(Error::InvalidInput(format!(
                    "duplicate site {:?}",
                    &flat[w * dim..(w + 1) * dim]
                )));
            }
        }
        Ok(Region { dim, coords: flat })
    }

    /// Wraps a buffer already in sorted, duplicate-free lexicographic order.
    pub(crate) fn from_sorted(dim: usize, coords: Vec<Coord>) -> Region {
        debug_assert!(coords.len().is_multiple_of(dim));
        debug_assert!(
            coords
                .chunks_exact(dim)
                .zip(coords.chunks_exact(dim).skip(1))
                .all(|(a, b)| a < b),
            "sites not strictly sorted"
        );
        Region { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Coordinates of the site with dense index `idx`.
    pub fn site(&self, idx: u32) -> &[Coord] {
        let i = idx as usize * self.dim;
        &self.coords[i..i + self.dim]
    }

    /// Iterates sites in index order.
    pub fn sites(&self) -> impl Iterator<Item = &[Coord]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Dense index of `site`, if present.
    pub fn index_of(&self, site: &[Coord]) -> Option<u32> {
        if site.len() != self.dim {
            return None;
        }
        let n = self.len();
        let mut lo = 0usize;
        let mut hi = n;
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.site(mid as u32).cmp(site) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid as u32),
            }
        }
        None
    }

    pub fn contains(&self, site: &[Coord]) -> bool {
        self.index_of(site).is_some()
    }

    /// Outer boundary in `Z^d`: sites outside the region adjacent to it.
    pub fn boundary(&self) -> Region {
        let d = self.dim;
        let mut out: Vec<Coord> = Vec::new();
        let mut nbr = vec![0; d];
        for site in self.sites() {
            for axis in 0..d {
                for delta in [-1, 1] {
                    nbr.copy_from_slice(site);
                    nbr[axis] += delta;
                    if !self.contains(&nbr) {
                        out.extend_from_slice(&nbr);
                    }
                }
            }
        }
        sort_sites(d, &mut out);
        dedup_sites(d, &mut out);
        Region::from_sorted(d, out)
    }

    /// Inner boundary: sites of the region adjacent to its complement.
    pub fn inner_boundary(&self) -> Region {
        let d = self.dim;
        let mut out: Vec<Coord> = Vec::new();
        let mut nbr = vec![0; d];
        for site in self.sites() {
            let exposed = (0..d).any(|axis| {
                [-1, 1].iter().any(|&delta| {
                    nbr.copy_from_slice(site);
                    nbr[axis] += delta;
                    !self.contains(&nbr)
                })
            });
            if exposed {
                out.extend_from_slice(site);
            }
        }
        Region::from_sorted(d, out)
    }

    /// Set difference, preserving order.
    pub fn difference(&self, other: &Region) -> Region {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Vec::new();
        for site in self.sites() {
            if !other.contains(site) {
                out.extend_from_slice(site);
            }
        }
        Region::from_sorted(self.dim, out)
    }

    /// True when every site of `self` lies in `other`.
    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.dim == other.dim && self.sites().all(|s| other.contains(s))
    }

    /// True when the two sorted site lists share no element.
    pub fn is_disjoint_from(&self, other: &Region) -> bool {
        if self.dim != other.dim {
            return true;
        }
        let (mut i, mut j) = (0u32, 0u32);
        let (n, m) = (self.len() as u32, other.len() as u32);
        while i < n && j < m {
            match self.site(i).cmp(other.site(j)) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    /// Merges two sorted regions into one (duplicates collapsed).
    pub fn union(&self, other: &Region) -> Region {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Vec::with_capacity(self.coords.len() + other.coords.len());
        let (mut i, mut j) = (0u32, 0u32);
        let (n, m) = (self.len() as u32, other.len() as u32);
        while i < n || j < m {
            if j >= m {
                out.extend_from_slice(self.site(i));
                i += 1;
            } else if i >= n {
                out.extend_from_slice(other.site(j));
                j += 1;
            } else {
                match self.site(i).cmp(other.site(j)) {
                    std::cmp::Ordering::Less => {
                        out.extend_from_slice(self.site(i));
                        i += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        out.extend_from_slice(other.site(j));
                        j += 1;
                    }
                    std::cmp::Ordering::Equal => {
                        out.extend_from_slice(self.site(i));
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        Region::from_sorted(self.dim, out)
    }

    /// Copy of the region translated by `delta` along `axis`.
    pub fn shifted(&self, axis: usize, delta: Coord) -> Region {
        assert!(axis < self.dim);
        let mut coords = self.coords.clone();
        for w in 0..self.len() {
            coords[w * self.dim + axis] += delta;
        }
        // A constant shift along one axis preserves lexicographic order.
        Region::from_sorted(self.dim, coords)
    }

    /// Projects the sites whose trailing coordinates equal `tail` onto their
    /// first three coordinates.
    pub fn slice3(&self, tail: &[Coord]) -> Region {
        assert_eq!(self.dim, 3 + tail.len(), "tail length must be dim - 3");
        let mut out = Vec::new();
        for site in self.sites() {
            if &site[3..] == tail {
                out.extend_from_slice(&site[..3]);
            }
        }
        sort_sites(3, &mut out);
        Region::from_sorted(3, out)
    }

    /// Embeds a 3-dimensional region at fixed trailing coordinates `tail`.
    pub fn cross3(&self, tail: &[Coord]) -> Region {
        assert_eq!(self.dim, 3, "cross3 needs a 3-dimensional region");
        let d = 3 + tail.len();
        let mut out = Vec::with_capacity(self.len() * d);
        for site in self.sites() {
            out.extend_from_slice(site);
            out.extend_from_slice(tail);
        }
        // p-major order with a constant tail stays lexicographic.
        Region::from_sorted(d, out)
    }
}

fn sort_sites(dim: usize, flat: &mut Vec<Coord>) {
    let n = flat.len() / dim;
    if n <= 1 {
        return;
    }
    if dim <= 4 {
        // lexicographic coordinate order equals numeric order of the
        // sign-flipped u32 digits concatenated into one key
        let pack = |site: &[Coord]| -> u128 {
            let mut key = 0u128;
            for &c in site {
                key = (key << 32) | ((c as u32) ^ 0x8000_0000) as u128;
            }
            key
        };
        let mut keyed: Vec<(u128, u32)> = (0..n)
            .map(|w| (pack(&flat[w * dim..(w + 1) * dim]), w as u32))
            .collect();
        keyed.sort_unstable_by_key(|&(key, _)| key);
        let mut sorted = Vec::with_capacity(flat.len());
        for (_, w) in keyed {
            sorted.extend_from_slice(&flat[w as usize * dim..(w as usize + 1) * dim]);
        }
        *flat = sorted;
        return;
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let sa = &flat[a as usize * dim..(a as usize + 1) * dim];
        let sb = &flat[b as usize * dim..(b as usize + 1) * dim];
        sa.cmp(sb)
    });
    let mut sorted = Vec::with_capacity(flat.len());
    for w in order {
        sorted.extend_from_slice(&flat[w as usize * dim..(w as usize + 1) * dim]);
    }
    *flat = sorted;
}

fn dedup_sites(dim: usize, flat: &mut Vec<Coord>) {
    let n = flat.len() / dim;
    if n == 0 {
        return;
    }
    let mut write = 1usize;
    for read in 1..n {
        if flat[(write - 1) * dim..write * dim] != flat[read * dim..(read + 1) * dim] {
            flat.copy_within(read * dim..(read + 1) * dim, write * dim);
            write += 1;
        }
    }
    flat.truncate(write * dim);
}

/// The hypercube `{1,..,L}^d`.
pub fn hypercube(l: u32, d: usize) -> Result<Region> {
    if l == 0 {
        return Err(Error::InvalidParameter(
            "hypercube side length must be >= 1".into(),
        ));
    }
    if d == 0 {
        return Err(Error::InvalidParameter(
            "hypercube dimension must be >= 1".into(),
        ));
    }
    let n = (l as usize).checked_pow(d as u32).ok_or_else(|| {
        Error::InvalidParameter(format!("hypercube {l}^{d} overflows addressable size"))
    })?;
    let mut coords = Vec::with_capacity(n * d);
    let mut site = vec![1 as Coord; d];
    loop {
        coords.extend_from_slice(&site);
        // odometer increment, least-significant axis last => lexicographic
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(Region::from_sorted(d, coords));
            }
            axis -= 1;
            if site[axis] < l as Coord {
                site[axis] += 1;
                for a in axis + 1..d {
                    site[a] = 1;
                }
                break;
            }
        }
    }
}

/// The three-dimensional discrete ball of (real) radius `r`, centred at the
/// origin: all integer `z` with `z1^2 + z2^2 + z3^2 <= r^2`.
pub fn discrete_ball3(r: f64) -> Result<Region> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ball radius must be >= 0, got {r}"
        )));
    }
    Ok(ball3_or_empty(r))
}

/// Like [`discrete_ball3`] but yields the empty region for negative radius.
pub(crate) fn ball3_or_empty(r: f64) -> Region {
    annulus3(r, -1.0)
}

/// Sites with `inner < |p| <= outer`, by direct enumeration; a negative
/// `inner` yields the full ball.
pub(crate) fn annulus3(outer: f64, inner: f64) -> Region {
    if outer < 0.0 {
        return Region::from_sorted(3, Vec::new());
    }
    let o2 = outer * outer;
    let i2 = inner * inner;
    let rmax = outer.floor() as Coord;
    let mut coords = Vec::new();
    for z1 in -rmax..=rmax {
        let s1 = (z1 as f64) * (z1 as f64);
        for z2 in -rmax..=rmax {
            let s12 = s1 + (z2 as f64) * (z2 as f64);
            if s12 > o2 {
                continue;
            }
            let zb = (o2 - s12).sqrt().floor() as Coord + 1;
            for z3 in -zb..=zb {
                let n2 = s12 + (z3 as f64) * (z3 as f64);
                if n2 <= o2 && (inner < 0.0 || n2 > i2) {
                    coords.extend_from_slice(&[z1, z2, z3]);
                }
            }
        }
    }
    Region::from_sorted(3, coords)
}

/// Outer boundary of `region` with membership decided by `inside` instead of
/// binary search; `inside` must agree with `region` exactly. Used by shapes
/// whose membership is a closed-form test (balls, shells, slabs), where it
/// beats the generic path by an order of magnitude.
pub(crate) fn boundary_by_predicate(region: &Region, inside: impl Fn(&[Coord]) -> bool) -> Region {
    let d = region.dim();
    let mut out: Vec<Coord> = Vec::new();
    let mut nbr = vec![0; d];
    for site in region.sites() {
        for axis in 0..d {
            for delta in [-1, 1] {
                nbr.copy_from_slice(site);
                nbr[axis] += delta;
                if !inside(&nbr) {
                    out.extend_from_slice(&nbr);
                }
            }
        }
    }
    sort_sites(d, &mut out);
    dedup_sites(d, &mut out);
    Region::from_sorted(d, out)
}

fn norm2(p: &[Coord]) -> f64 {
    p.iter().map(|&c| (c as f64) * (c as f64)).sum()
}

/// Boundary of the 3-ball of radius `r` by direct enumeration of the
/// spherical layer `r < |p| <= r + 1` with a constant-time neighbour test.
pub(crate) fn ball_boundary(r: f64) -> Region {
    if r < 0.0 {
        return Region::from_sorted(3, Vec::new());
    }
    let r2 = r * r;
    let r1sq = (r + 1.0) * (r + 1.0);
    let bound = (r + 1.0).floor() as Coord;
    let mut coords = Vec::new();
    for z1 in -bound..=bound {
        for z2 in -bound..=bound {
            for z3 in -bound..=bound {
                let p = [z1, z2, z3];
                let n2 = norm2(&p);
                if n2 <= r2 || n2 > r1sq {
                    continue;
                }
                let touches = (0..3).any(|axis| {
                    [-1, 1].iter().any(|&delta| {
                        let mut q = p;
                        q[axis] += delta;
                        norm2(&q) <= r2
                    })
                });
                if touches {
                    coords.extend_from_slice(&p);
                }
            }
        }
    }
    Region::from_sorted(3, coords)
}

/// Inner boundary of the 3-ball of radius `r`: sites of the outermost layer
/// with a neighbour outside.
pub(crate) fn ball_inner_boundary(r: f64) -> Region {
    if r < 0.0 {
        return Region::from_sorted(3, Vec::new());
    }
    let r2 = r * r;
    let lo2 = if r >= 1.0 {
        (r - 1.0) * (r - 1.0)
    } else {
        -1.0
    };
    let bound = r.floor() as Coord;
    let mut coords = Vec::new();
    for z1 in -bound..=bound {
        for z2 in -bound..=bound {
            for z3 in -bound..=bound {
                let p = [z1, z2, z3];
                let n2 = norm2(&p);
                if n2 > r2 || n2 <= lo2 {
                    continue;
                }
                let exposed = (0..3).any(|axis| {
                    [-1, 1].iter().any(|&delta| {
                        let mut q = p;
                        q[axis] += delta;
                        norm2(&q) > r2
                    })
                });
                if exposed {
                    coords.extend_from_slice(&p);
                }
            }
        }
    }
    Region::from_sorted(3, coords)
}

/// Enumerates the tails `{1..L}^{d-3}` in lexicographic order.
pub(crate) fn height_tails(l: u32, d: usize) -> Vec<Vec<Coord>> {
    let k = d - 3;
    let mut tails = Vec::with_capacity((l as usize).pow(k as u32));
    let mut tail = vec![1 as Coord; k];
    loop {
        tails.push(tail.clone());
        let mut axis = k;
        loop {
            if axis == 0 {
                return tails;
            }
            axis -= 1;
            if tail[axis] < l as Coord {
                tail[axis] += 1;
                for a in axis + 1..k {
                    tail[a] = 1;
                }
                break;
            }
        }
    }
}

/// The cylinder: 3-ball of radius `2 d L (log L)^{c2}` in the first three
/// coordinates times the box `{1..L}^{d-3}` in the remaining ones.
pub fn cylinder(gp: &GeometryParams) -> Result<Region> {
    gp.check_polylog()?;
    let ball = ball3_or_empty(gp.base_radius());
    Ok(product_with_tails(&ball, gp))
}

fn product_with_tails(ball: &Region, gp: &GeometryParams) -> Region {
    let tails = height_tails(gp.l, gp.d);
    let mut coords = Vec::with_capacity(ball.len() * tails.len() * gp.d);
    for p in ball.sites() {
        for tail in &tails {
            coords.extend_from_slice(p);
            coords.extend_from_slice(tail);
        }
    }
    Region::from_sorted(gp.d, coords)
}

/// Shrink index of the slice at `tail` for the nested set with parameter `i`:
/// `(i - 2 (|tail|_1 - (d-3)))_+`, so the bottom corner slice carries the full
/// shrink `i` and each unit step up in l1-height relaxes it by 2.
pub(crate) fn shrink_index(i: u32, tail: &[Coord], d: usize) -> i64 {
    let h: i64 = tail.iter().map(|&c| c as i64).sum();
    let m = i as i64 - 2 * (h - (d as i64 - 3));
    m.max(0)
}

/// The nested set with parameter `i`: per height slice, the 3-ball shrunk by
/// the slice's shrink index. `i = 0` reproduces the cylinder exactly.
pub fn shrunk_set(gp: &GeometryParams, i: u32) -> Result<Region> {
    gp.check_polylog()?;
    if i > gp.max_shrink_index() {
        return Err(Error::InvalidParameter(format!(
            "shrink parameter i = {i} out of range 0..={}",
            gp.max_shrink_index()
        )));
    }
    let tails = height_tails(gp.l, gp.d);
    let radii_sq: Vec<f64> = tails
        .iter()
        .map(|t| {
            let r = gp.shrunk_radius(shrink_index(i, t, gp.d));
            if r < 0.0 {
                -1.0
            } else {
                r * r
            }
        })
        .collect();
    let ball = ball3_or_empty(gp.base_radius());
    let mut coords = Vec::new();
    for p in ball.sites() {
        let n2 = (p[0] as f64) * (p[0] as f64)
            + (p[1] as f64) * (p[1] as f64)
            + (p[2] as f64) * (p[2] as f64);
        for (tail, r2) in tails.iter().zip(&radii_sq) {
            if n2 <= *r2 {
                coords.extend_from_slice(p);
                coords.extend_from_slice(tail);
            }
        }
    }
    Ok(Region::from_sorted(gp.d, coords))
}

/// A total assignment of spins to the outer boundary of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    domain: Region,
    spins: Vec<i8>,
}

impl BoundaryCondition {
    pub fn new(domain: Region, spins: Vec<i8>) -> Result<BoundaryCondition> {
        if spins.len() != domain.len() {
            return Err(Error::InvalidInput(format!(
                "boundary condition has {} spins for {} sites",
                spins.len(),
                domain.len()
            )));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput(
                "boundary spins must be +1 or -1".into(),
            ));
        }
        Ok(BoundaryCondition { domain, spins })
    }

    /// Uniform boundary condition (`spin` everywhere on the boundary of
    /// `region`).
    pub fn uniform(region: &Region, spin: i8) -> Result<BoundaryCondition> {
        let domain = region.boundary();
        let n = domain.len();
        BoundaryCondition::new(domain, vec![spin; n])
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin_at(&self, site: &[Coord]) -> Option<i8> {
        self.domain.index_of(site).map(|i| self.spins[i as usize])
    }

    /// Checks that the condition assigns a spin to exactly the boundary of
    /// `region` -- no missing sites, no extras.
    pub fn verify_total(&self, region: &Region) -> Result<()> {
        if self.domain != region.boundary() {
            return Err(Error::Geometry(
                "boundary condition domain differs from the region boundary".into(),
            ));
        }
        Ok(())
    }

    /// Pointwise comparison; both conditions must share the same domain.
    pub fn le(&self, other: &BoundaryCondition) -> Result<bool> {
        if self.domain != other.domain {
            return Err(Error::InvalidInput(
                "boundary conditions with different domains are not comparable".into(),
            ));
        }
        Ok(self.spins.iter().zip(&other.spins).all(|(a, b)| a <= b))
    }
}

/// The cylinder together with its standard boundary condition: minus on the
/// top faces (some trailing coordinate equal to `L+1`), plus everywhere else.
pub fn eta0(gp: &GeometryParams) -> Result<(Arc<Region>, BoundaryCondition)> {
    let region = cylinder(gp)?;
    let r2 = gp.base_radius() * gp.base_radius();
    let l = gp.l as Coord;
    let bdry = boundary_by_predicate(&region, |site| {
        site[3..].iter().all(|&c| c >= 1 && c <= l)
            && site[..3]
                .iter()
                .map(|&c| (c as f64) * (c as f64))
                .sum::<f64>()
                <= r2
    });
    let top = gp.l as Coord + 1;
    let spins: Vec<i8> = bdry
        .sites()
        .map(|s| {
            if s[3..].contains(&top) {
                -1
            } else {
                1
            }
        })
        .collect();
    let bc = BoundaryCondition::new(bdry, spins)?;
    Ok((Arc::new(region), bc))
}
