//! Shell regions and slab systems.
//!
//! A slab is the difference of two consecutive nested sets,
//! `shrunk_set(i) \ shrunk_set(i+2)`. Its defining property is that every
//! height slice is a three-dimensional shell and the two neighbours of any
//! slab site along a height axis fall outside the slab, where the attached
//! boundary condition gives them opposite spins. That makes the slices
//! evolve exactly like independent three-dimensional shell dynamics; the
//! [`SlabSystem`] carries the per-slice shell regions, their boundary
//! conditions and the site bijections needed to replay one against the other.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::{
    ball3_or_empty, ball_boundary, ball_inner_boundary, boundary_by_predicate, height_tails,
    BoundaryCondition, Coord, GeometryParams, Region,
};

/// Shell `ball(r) \ ball(r - l)` with plus spins on the outer boundary and
/// minus spins on the inner-ball sites adjacent to the shell.
pub fn shell3(r: f64, l: f64) -> Result<(Region, BoundaryCondition)> {
    if !(l > 0.0 && l < r) {
        return Err(Error::InvalidParameter(format!(
            "shell needs 0 < l < r, got r = {r}, l = {l}"
        )));
    }
    shell3_radii(r, r - l)
}

/// Shell between two explicit radii. A negative `inner` yields the full ball
/// with plus boundary condition.
pub fn shell3_radii(outer: f64, inner: f64) -> Result<(Region, BoundaryCondition)> {
    if !(outer >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "outer radius must be >= 0, got {outer}"
        )));
    }
    let shell = super::annulus3(outer, inner);
    if shell.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "shell between radii {inner} and {outer} contains no lattice site"
        )));
    }
    let bc = shell_boundary_condition(&shell, outer, inner);
    Ok((shell, bc))
}

/// Every boundary site of a shell is either outside the outer ball (plus) or
/// inside the inner ball (minus); classification by squared norm is total.
fn shell_boundary_condition(shell: &Region, outer: f64, inner: f64) -> BoundaryCondition {
    let o2 = outer * outer;
    let i2 = inner * inner;
    let bdry = boundary_by_predicate(shell, |p| {
        let n2 = p.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>();
        n2 <= o2 && (inner < 0.0 || n2 > i2)
    });
    let spins = bdry
        .sites()
        .map(|s| {
            let n2 = s.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>();
            if n2 > o2 {
                1
            } else {
                -1
            }
        })
        .collect();
    BoundaryCondition::new(bdry, spins).expect("shell boundary spins are well-formed")
}

/// One height slice of a slab together with the shell dynamics it mirrors.
#[derive(Debug, Clone)]
pub struct SlabSlice {
    /// Trailing (height) coordinates of the slice.
    pub tail: Vec<Coord>,
    /// The matching three-dimensional shell region.
    pub shell: Arc<Region>,
    /// Plus-outside / minus-inside condition on the shell boundary.
    pub shell_bc: BoundaryCondition,
    pub outer_radius: f64,
    pub inner_radius: f64,
}

/// A slab region, its boundary condition and the slice-to-shell bijections.
#[derive(Debug, Clone)]
pub struct SlabSystem {
    pub gp: GeometryParams,
    /// Shrink parameter `i`; `None` for the first-layer system.
    pub shrink: Option<u32>,
    pub region: Arc<Region>,
    pub bc: BoundaryCondition,
    pub slices: Vec<SlabSlice>,
    /// Slice id of every slab site.
    pub slice_of: Vec<u32>,
    /// Dense index of every slab site inside its slice's shell region.
    pub to_shell: Vec<u32>,
}

struct SliceSpec {
    tail: Vec<Coord>,
    outer: f64,
    inner: f64,
}

/// The slab `shrunk_set(i) \ shrunk_set(i+2)` with its boundary condition:
/// minus on the up-shifted copies of the slab and on the inner boundary of
/// the bottom-corner ball, plus on the down-shifted copies and the remaining
/// outer skin.
///
/// For `d = 4` the four boundary parts are computed explicitly and verified
/// to partition the slab boundary; a failed partition is reported as an
/// internal geometry error.
pub fn eta_slab(gp: &GeometryParams, i: u32) -> Result<SlabSystem> {
    gp.check_polylog()?;
    let max_i = gp.max_shrink_index().saturating_sub(2);
    if i > max_i {
        return Err(Error::InvalidParameter(format!(
            "slab parameter i = {i} out of range 0..={max_i}"
        )));
    }

    let d = gp.d;
    let mut specs = Vec::new();
    for tail in height_tails(gp.l, d) {
        // shrink index before the positive part; the slice is non-empty as
        // soon as the inner index exceeds the outer one.
        let h: i64 = tail.iter().map(|&c| c as i64).sum();
        let m = i as i64 - 2 * (h - (d as i64 - 3));
        if m < -1 {
            continue;
        }
        let outer = gp.shrunk_radius(m.max(0));
        let inner = gp.shrunk_radius((m + 2).max(0));
        specs.push(SliceSpec { tail, outer, inner });
    }

    let (region, slice_of, to_shell, slices) = assemble(gp, &specs)?;

    // Boundary decomposition: shifted copies along each height axis, the
    // inner boundary of the bottom-corner ball, and (for d = 4) the explicit
    // remaining outer skin.
    let bdry = slab_boundary(gp, &specs, &region);
    let corner = ball_inner_boundary(gp.shrunk_radius(i as i64 + 2)).cross3(&vec![1; d - 3]);

    let up_parts: Vec<Region> = (3..d).map(|axis| region.shifted(axis, 1)).collect();
    let down_parts: Vec<Region> = (3..d).map(|axis| region.shifted(axis, -1)).collect();

    let bc = if d == 4 {
        let l = gp.l;
        let skin = if i <= 2 * l - 2 {
            let height = (i as Coord + 1) / 2 + 1;
            ball_boundary(gp.shrunk_radius(0)).cross3(&[height])
        } else {
            let k = i as i64 - 2 * (l as i64 - 1);
            ball_boundary(gp.shrunk_radius(k)).cross3(&[l as Coord])
        };
        let parts = [&up_parts[0], &down_parts[0], &corner, &skin];
        verify_partition(&bdry, &parts, i)?;
        let minus = up_parts[0].union(&corner);
        boundary_condition_from_minus(&bdry, &minus)
    } else {
        let mut minus = corner.clone();
        for p in &up_parts {
            minus = minus.union(p);
        }
        let mut down = down_parts[0].clone();
        for p in &down_parts[1..] {
            down = down.union(p);
        }
        if !minus.is_subset_of(&bdry) || !down.is_subset_of(&bdry) {
            return Err(Error::Geometry(format!(
                "slab i = {i}: shifted copies escape the slab boundary"
            )));
        }
        if !minus.is_disjoint_from(&down) {
            return Err(Error::Geometry(format!(
                "slab i = {i}: plus and minus boundary parts overlap"
            )));
        }
        boundary_condition_from_minus(&bdry, &minus)
    };

    Ok(SlabSystem {
        gp: *gp,
        shrink: Some(i),
        region,
        bc,
        slices,
        slice_of,
        to_shell,
    })
}

/// The bottom layer of the cylinder as a one-slice system: ball cross the
/// all-ones tail, minus spins above, plus spins below and around. Mirrors
/// the full-ball dynamics with plus boundary condition.
pub fn first_layer(gp: &GeometryParams) -> Result<SlabSystem> {
    gp.check_polylog()?;
    let specs = vec![SliceSpec {
        tail: vec![1; gp.d - 3],
        outer: gp.base_radius(),
        inner: -1.0,
    }];
    let (region, slice_of, to_shell, slices) = assemble(gp, &specs)?;
    let bdry = slab_boundary(gp, &specs, &region);
    let spins = bdry
        .sites()
        .map(|s| {
            if s[3..].contains(&2) {
                -1
            } else {
                1
            }
        })
        .collect();
    let bc = BoundaryCondition::new(bdry, spins)?;
    Ok(SlabSystem {
        gp: *gp,
        shrink: None,
        region,
        bc,
        slices,
        slice_of,
        to_shell,
    })
}

/// Builds the slab region in lexicographic order together with the per-site
/// slice ids and shell indices. Sites are emitted 3-prefix-major, so within
/// each slice they appear in the same order as in its shell region; the
/// shell index is therefore a running counter per slice.
fn assemble(
    gp: &GeometryParams,
    specs: &[SliceSpec],
) -> Result<(Arc<Region>, Vec<u32>, Vec<u32>, Vec<SlabSlice>)> {
    let d = gp.d;
    let mut slices = Vec::with_capacity(specs.len());
    for spec in specs {
        let (shell, shell_bc) = shell3_radii(spec.outer, spec.inner)?;
        slices.push(SlabSlice {
            tail: spec.tail.clone(),
            shell: Arc::new(shell),
            shell_bc,
            outer_radius: spec.outer,
            inner_radius: spec.inner,
        });
    }

    let max_outer = specs.iter().map(|s| s.outer).fold(0.0f64, f64::max);
    let base = ball3_or_empty(max_outer);
    let mut coords = Vec::new();
    let mut slice_of = Vec::new();
    let mut to_shell = Vec::new();
    let mut counters = vec![0u32; specs.len()];
    for p in base.sites() {
        let n2 = p.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>();
        for (k, spec) in specs.iter().enumerate() {
            let inside = n2 <= spec.outer * spec.outer;
            let above_inner = spec.inner < 0.0 || n2 > spec.inner * spec.inner;
            if inside && above_inner {
                coords.extend_from_slice(p);
                coords.extend_from_slice(&spec.tail);
                slice_of.push(k as u32);
                to_shell.push(counters[k]);
                counters[k] += 1;
            }
        }
    }
    for (k, slice) in slices.iter().enumerate() {
        if counters[k] as usize != slice.shell.len() {
            return Err(Error::Geometry(format!(
                "slice {k} has {} slab sites but shell has {}",
                counters[k],
                slice.shell.len()
            )));
        }
    }
    // 3-prefix-major emission with lexicographic tails is globally sorted.
    let region = Arc::new(Region::from_sorted(d, coords));
    Ok((region, slice_of, to_shell, slices))
}

fn tail_code(tail: &[Coord], l: u32) -> usize {
    tail.iter()
        .fold(0usize, |acc, &c| acc * l as usize + (c as usize - 1))
}

/// Slab boundary via the closed-form membership test (per-tail radius
/// window); equivalent to `region.boundary()` and checked against it by
/// `BoundaryCondition::verify_total` in the tests.
fn slab_boundary(gp: &GeometryParams, specs: &[SliceSpec], region: &Region) -> Region {
    let l = gp.l as i64;
    let k = gp.d - 3;
    let mut table: Vec<Option<(f64, f64)>> = vec![None; (gp.l as usize).pow(k as u32)];
    for spec in specs {
        table[tail_code(&spec.tail, gp.l)] = Some((spec.inner, spec.outer));
    }
    boundary_by_predicate(region, |site| {
        let tail = &site[3..];
        if tail.iter().any(|&c| (c as i64) < 1 || (c as i64) > l) {
            return false;
        }
        match table[tail_code(tail, gp.l)] {
            None => false,
            Some((inner, outer)) => {
                let n2 = site[..3]
                    .iter()
                    .map(|&c| (c as f64) * (c as f64))
                    .sum::<f64>();
                n2 <= outer * outer && (inner < 0.0 || n2 > inner * inner)
            }
        }
    })
}

/// Checks that the four sorted parts are pairwise disjoint and exactly cover
/// `whole`, in one allocation-free 4-way merge: at every step the smallest
/// remaining site must be unique among the parts and equal to the next site
/// of `whole`.
fn verify_partition(whole: &Region, parts: &[&Region; 4], i: u32) -> Result<()> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    if total != whole.len() {
        return Err(Error::Geometry(format!(
            "slab i = {i}: boundary parts cover {total} sites, boundary has {}",
            whole.len()
        )));
    }
    let mut cursors = [0u32; 4];
    for w in 0..whole.len() as u32 {
        let want = whole.site(w);
        let mut owner = None;
        for (k, part) in parts.iter().enumerate() {
            if (cursors[k] as usize) < part.len() && part.site(cursors[k]) == want {
                if owner.is_some() {
                    return Err(Error::Geometry(format!(
                        "slab i = {i}: boundary site {want:?} claimed by two parts"
                    )));
                }
                owner = Some(k);
            }
        }
        match owner {
            Some(k) => cursors[k] += 1,
            None => {
                return Err(Error::Geometry(format!(
                    "slab i = {i}: boundary site {want:?} not covered by any part"
                )))
            }
        }
    }
    Ok(())
}

/// Assigns minus to the sites of `minus` (a subset of `bdry`) and plus to
/// the rest, walking both sorted site lists once.
fn boundary_condition_from_minus(bdry: &Region, minus: &Region) -> BoundaryCondition {
    let mut spins = vec![1i8; bdry.len()];
    let mut cursor = 0u32;
    let n = bdry.len() as u32;
    for site in minus.sites() {
        while cursor < n && bdry.site(cursor) < site {
            cursor += 1;
        }
        if cursor < n && bdry.site(cursor) == site {
            spins[cursor as usize] = -1;
            cursor += 1;
        }
    }
    BoundaryCondition::new(bdry.clone(), spins).expect("slab boundary spins are well-formed")
}

impl SlabSystem {
    /// Every slab site must have both height-axis neighbours outside the
    /// slab, carrying minus above and plus below, so their contributions to
    /// the majority rule cancel.
    pub fn verify_vertical_cancellation(&self) -> Result<()> {
        let d = self.gp.d;
        let mut nbr = vec![0; d];
        for site in self.region.sites() {
            for axis in 3..d {
                for delta in [1 as Coord, -1] {
                    nbr.copy_from_slice(site);
                    nbr[axis] += delta;
                    if self.region.contains(&nbr) {
                        return Err(Error::Geometry(format!(
                            "site {site:?} has in-slab neighbour {nbr:?} along height axis {axis}"
                        )));
                    }
                    let spin = self.bc.spin_at(&nbr).ok_or_else(|| {
                        Error::Geometry(format!("height neighbour {nbr:?} missing from bc"))
                    })?;
                    if spin != -(delta as i8) {
                        return Err(Error::Geometry(format!(
                            "height neighbour {nbr:?} of {site:?} has spin {spin}, expected {}",
                            -(delta as i8)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The in-slice boundary spins seen by a slab site must agree with the
    /// spins its image sees in the shell dynamics.
    pub fn verify_slice_bc_correspondence(&self) -> Result<()> {
        let d = self.gp.d;
        let mut nbr4 = vec![0; d];
        let mut nbr3 = [0 as Coord; 3];
        for (idx, site) in self.region.sites().enumerate() {
            let slice = &self.slices[self.slice_of[idx] as usize];
            for axis in 0..3 {
                for delta in [1 as Coord, -1] {
                    nbr4.copy_from_slice(site);
                    nbr4[axis] += delta;
                    nbr3.copy_from_slice(&site[..3]);
                    nbr3[axis] += delta;
                    let in_slab = self.region.contains(&nbr4);
                    let in_shell = slice.shell.contains(&nbr3);
                    if in_slab != in_shell {
                        return Err(Error::Geometry(format!(
                            "membership mismatch at {site:?} -> {nbr4:?}: slab {in_slab}, shell {in_shell}"
                        )));
                    }
                    if in_slab {
                        continue;
                    }
                    let eta = self
                        .bc
                        .spin_at(&nbr4)
                        .ok_or_else(|| Error::Geometry(format!("slab bc missing site {nbr4:?}")))?;
                    let shell_spin = slice.shell_bc.spin_at(&nbr3).ok_or_else(|| {
                        Error::Geometry(format!("shell bc missing site {nbr3:?}"))
                    })?;
                    if eta != shell_spin {
                        return Err(Error::Geometry(format!(
                            "boundary spin mismatch at {nbr4:?}: slab {eta}, shell {shell_spin}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
