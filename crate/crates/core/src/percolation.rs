//! Site percolation of empty vertices in two dimensions: cluster labels,
//! hard crossings of the dyadic rectangle ladder, a finite-volume stand-in
//! for the infinite-cluster constraint, and the supercritical series.
//!
//! `p` is the occupation probability throughout, so a vertex is empty with
//! probability `1 - p`.

use std::sync::Arc;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::blocks::ConditionTerm;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Cuboid, Geometry};
use crate::rng::{threshold_configuration, vertex_uniforms};
use crate::stats::ScanEstimate;

/// Marks an occupied vertex in a label vector.
pub const NO_CLUSTER: u32 = u32::MAX;

/// Labels empty vertices by nearest-neighbour connected component, numbered
/// in order of first appearance. Occupied vertices get [`NO_CLUSTER`].
pub fn find_clusters(cfg: &Configuration) -> Vec<u32> {
    let g = cfg.geometry();
    let n = g.volume();
    let mut uf = UnionFind::<u32>::new(n);
    for v in 0..n {
        if cfg.is_empty(v) {
            for w in g.neighbor_indices(v) {
                if w > v && cfg.is_empty(w) {
                    uf.union(v as u32, w as u32);
                }
            }
        }
    }
    let mut ids = vec![NO_CLUSTER; n];
    let mut labels = vec![NO_CLUSTER; n];
    let mut next = 0;
    for v in 0..n {
        if cfg.is_empty(v) {
            let r = uf.find_mut(v as u32) as usize;
            if ids[r] == NO_CLUSTER {
                ids[r] = next;
                next += 1;
            }
            labels[v] = ids[r];
        }
    }
    labels
}

/// Whether an all-empty nearest-neighbour path inside `rect` joins its two
/// faces orthogonal to `axis`. For a long crossing pass the long axis.
pub fn has_hard_crossing(cfg: &Configuration, rect: &Cuboid, axis: usize) -> Result<bool> {
    let g = cfg.geometry();
    if !rect.fits(g) {
        return Err(Error::OutOfBounds(rect.corner.clone()));
    }
    if axis >= g.dim() {
        return Err(Error::Parameter(format!("axis {axis} out of range")));
    }
    let d = g.dim();
    let vol = rect.volume();
    // Local row-major copy of the rectangle's empty sites.
    let mut open = vec![false; vol];
    let mut x = vec![0usize; d];
    for (l, o) in open.iter_mut().enumerate() {
        let mut r = l;
        for a in (0..d).rev() {
            x[a] = rect.corner[a] + r % rect.dims[a];
            r /= rect.dims[a];
        }
        *o = cfg.is_empty(g.index_unchecked(&x));
    }
    let mut stride = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        stride[a] = stride[a + 1] * rect.dims[a + 1];
    }
    let coord = |l: usize, a: usize| (l / stride[a]) % rect.dims[a];
    let mut queue: Vec<usize> = (0..vol).filter(|&l| open[l] && coord(l, axis) == 0).collect();
    for &l in &queue {
        open[l] = false;
    }
    let far = rect.dims[axis] - 1;
    while let Some(l) = queue.pop() {
        if coord(l, axis) == far {
            return Ok(true);
        }
        for a in 0..d {
            let c = coord(l, a);
            if c > 0 && open[l - stride[a]] {
                open[l - stride[a]] = false;
                queue.push(l - stride[a]);
            }
            if c + 1 < rect.dims[a] && open[l + stride[a]] {
                open[l + stride[a]] = false;
                queue.push(l + stride[a]);
            }
        }
    }
    Ok(false)
}

/// `ℓ_n = 2^n`.
pub fn ell(n: u32) -> usize {
    1usize << n
}

/// The rectangle `R_n` attached to `x`: its lowest-leftmost vertex is
/// `x + e_2`; it is `ℓ_n` wide and `ℓ_{n-1}` tall for even `n`, and the
/// transpose for odd `n`. Returns the cuboid and its long axis.
pub fn ladder_rectangle(x: &[usize], n: u32) -> Result<(Cuboid, usize)> {
    if n == 0 || x.len() != 2 {
        return Err(Error::Parameter("ladder rectangles need n >= 1 in two dimensions".into()));
    }
    let (long, short) = (ell(n), ell(n - 1));
    let corner = vec![x[0], x[1] + 1];
    Ok(if n % 2 == 0 {
        (Cuboid::new(corner, vec![long, short]), 0)
    } else {
        (Cuboid::new(corner, vec![short, long]), 1)
    })
}

/// Whether the hard-crossing constraint `c^{(n)}` holds at `x`.
pub fn ladder_crossing(cfg: &Configuration, x: &[usize], n: u32) -> Result<bool> {
    let (rect, axis) = ladder_rectangle(x, n)?;
    has_hard_crossing(cfg, &rect, axis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Only `x + e_1` and `x + e_2` count.
    #[default]
    Oriented,
    /// All `2d` neighbours count.
    Unoriented,
}

/// Finite stand-in for "at least two neighbours of `x` lie in an infinite
/// cluster of zeros": at least two of the considered neighbours are empty
/// and connected, avoiding `x`, to the boundary of the radius-`radius` box
/// around `x`. The value is nonincreasing in `radius`.
pub fn c_infty_surrogate(cfg: &Configuration, x: &[usize], radius: usize, orientation: Orientation) -> Result<bool> {
    let g = cfg.geometry();
    let d = g.dim();
    if x.len() != d || (0..d).any(|a| x[a] < radius || x[a] + radius >= g.dims()[a]) {
        return Err(Error::OutOfBounds(x.to_vec()));
    }
    if radius == 0 {
        return Err(Error::Parameter("radius must be positive".into()));
    }
    let side = 2 * radius + 1;
    let bg = Arc::new(Geometry::free(&vec![side; d])?);
    let mut sub = Configuration::occupied(bg.clone());
    let mut y = vec![0usize; d];
    for v in 0..bg.volume() {
        bg.coords_into(v, &mut y);
        for a in 0..d {
            y[a] += x[a] - radius;
        }
        if cfg.is_empty(g.index_unchecked(&y)) {
            sub.set_empty(v);
        }
    }
    let centre = bg.index_unchecked(&vec![radius; d]);
    sub.set_occupied(centre);
    let labels = find_clusters(&sub);
    let mut touching = vec![false; bg.volume()];
    for v in 0..bg.volume() {
        if labels[v] != NO_CLUSTER {
            bg.coords_into(v, &mut y);
            if y.iter().any(|&c| c == 0 || c == side - 1) {
                touching[labels[v] as usize] = true;
            }
        }
    }
    let mut offsets: Vec<Vec<i64>> = Vec::new();
    let axes = match orientation {
        Orientation::Oriented => d.min(2),
        Orientation::Unoriented => d,
    };
    for a in 0..axes {
        let mut o = vec![0i64; d];
        o[a] = 1;
        offsets.push(o.clone());
        if orientation == Orientation::Unoriented {
            o[a] = -1;
            offsets.push(o);
        }
    }
    let good = offsets
        .iter()
        .filter(|o| {
            let w = bg.shift(centre, o).expect("radius >= 1 keeps neighbours inside");
            labels[w] != NO_CLUSTER && touching[labels[w] as usize]
        })
        .count();
    Ok(good >= 2)
}

#[derive(Clone, Debug)]
pub struct CrossingEstimate {
    pub p: f64,
    /// `(n, ℓ_n, failure probability of c^{(n)})`.
    pub rows: Vec<(u32, usize, ScanEstimate)>,
    /// Slope of a weighted least-squares fit of `-ln(failure)` against
    /// `ℓ_n`, over the levels with at least one failure; `None` when fewer
    /// than two such levels exist or the slope is not positive.
    pub m_hat: Option<f64>,
}

/// Monte Carlo failure probabilities of the hard-crossing constraints
/// `c^{(n)}` for `n = 1..=n_max` at the origin. All rectangles of one
/// replica share a single coupled configuration.
pub fn estimate_crossing_failure(n_max: u32, p: f64, replicas: u64, seed: u64) -> Result<CrossingEstimate> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("p must lie in [0, 1], got {p}")));
    }
    if n_max == 0 || n_max > 20 || replicas == 0 {
        return Err(Error::Parameter("need 1 <= n_max <= 20 and replicas >= 1".into()));
    }
    let origin = [0usize, 0];
    let rects: Vec<(Cuboid, usize)> = (1..=n_max).map(|n| ladder_rectangle(&origin, n)).collect::<Result<_>>()?;
    let w = rects.iter().map(|(r, _)| r.corner[0] + r.dims[0]).max().unwrap();
    let h = rects.iter().map(|(r, _)| r.corner[1] + r.dims[1]).max().unwrap();
    let geom = Arc::new(Geometry::free(&[w, h])?);
    let counts = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let cfg = threshold_configuration(geom.clone(), &vertex_uniforms(&geom, seed, r), 1.0 - p);
            rects
                .iter()
                .map(|(rect, axis)| u64::from(!has_hard_crossing(&cfg, rect, *axis).unwrap()))
                .collect::<Vec<u64>>()
        })
        .reduce(
            || vec![0; n_max as usize],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let rows: Vec<(u32, usize, ScanEstimate)> = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| (i as u32 + 1, ell(i as u32 + 1), ScanEstimate::binomial(k, replicas, seed)))
        .collect();
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .zip(&counts)
        .filter(|(_, &k)| k > 0 && k < replicas)
        .map(|((_, l, e), &k)| (*l as f64, -e.value.ln(), k as f64))
        .collect();
    let m_hat = weighted_slope(&pts).filter(|m| *m > 0.0);
    Ok(CrossingEstimate { p, rows, m_hat })
}

/// Weighted least-squares slope of `(x, y, weight)` points.
pub fn weighted_slope(pts: &[(f64, f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|t| t.2).sum();
    let mx = pts.iter().map(|t| t.2 * t.0).sum::<f64>() / sw;
    let my = pts.iter().map(|t| t.2 * t.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|t| t.2 * (t.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|t| t.2 * (t.0 - mx) * (t.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    /// Truncated sum plus the certified tail bound.
    pub value: f64,
    pub truncated: f64,
    pub tail_bound: f64,
    pub n_truncate: u32,
}

fn series_term(m: f64, n: u32) -> f64 {
    3.0 * (8f64.ln() * n as f64 - m * ell(n) as f64 / 2.0).exp()
}

/// `3 Σ_{n>=1} 2^n 4^n e^{-m ℓ_n / 2} + 4√p`, summed to `n_truncate` with a
/// geometric bound on the rest. The ratio of consecutive terms is
/// `8 e^{-m ℓ_n / 2}`; the tail is certified once that ratio is at most 1/2
/// at `n_truncate + 1`.
pub fn supercritical_condition_check(p: f64, m_hat: f64, n_truncate: u32) -> Result<SeriesValue> {
    if !(m_hat > 0.0) {
        return Err(Error::Parameter(format!("m_hat must be positive, got {m_hat}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("p must lie in [0, 1], got {p}")));
    }
    if n_truncate > 60 {
        return Err(Error::Parameter("n_truncate above 60".into()));
    }
    let ratio = 8.0 * (-m_hat * ell(n_truncate + 1) as f64 / 2.0).exp();
    if ratio > 0.5 {
        return Err(Error::Numerical(format!(
            "series not yet geometrically dominated at n = {n_truncate} (ratio {ratio:.3})"
        )));
    }
    let truncated = (1..=n_truncate).map(|n| series_term(m_hat, n)).sum::<f64>() + 4.0 * p.sqrt();
    let tail_bound = series_term(m_hat, n_truncate + 1) / (1.0 - ratio);
    Ok(SeriesValue { value: truncated + tail_bound, truncated, tail_bound, n_truncate })
}

/// Smallest truncation whose certified tail is below `tol`.
pub fn supercritical_condition_auto(p: f64, m_hat: f64, tol: f64) -> Result<SeriesValue> {
    for n in 1..=60 {
        match supercritical_condition_check(p, m_hat, n) {
            Ok(s) if s.tail_bound < tol => return Ok(s),
            Ok(_) | Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical(format!("tail not below {tol} by n = 60")))
}

/// Terms of the summability condition for the crossing constraints: every
/// `I ⊂ {0, …, n}` containing `n` has weight `e^{-m ℓ_n/2}`, failure
/// `e^{-m ℓ_n}` and `3 ℓ_n^2` overlapping sites; `I = {0}` has weight
/// `√p`, failure `2p` and two overlapping sites.
pub fn ladder_condition_terms(p: f64, m: f64, n_max: u32) -> Vec<ConditionTerm> {
    let mut terms = vec![ConditionTerm { lambda: p.sqrt(), epsilon: 2.0 * p, overlap: 2.0 }];
    for n in 1..=n_max {
        let l = ell(n) as f64;
        let t = ConditionTerm { lambda: (-m * l / 2.0).exp(), epsilon: (-m * l).exp(), overlap: 3.0 * l * l };
        terms.extend(std::iter::repeat_n(t, 1 << n));
    }
    terms
}
