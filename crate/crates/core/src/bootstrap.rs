//! U-bootstrap closure, internal spanning, infection times and Monte Carlo
//! estimates of the spanning probability, `q_c(n)` and `L_c(q)`.
//!
//! The production closure keeps, for every vertex and rule, the number of
//! rule sites that are still occupied; emptying a vertex decrements the
//! counters of the vertices that depend on it, so the total work is linear
//! in `volume * |rules|`. [`closure_naive`] is the full-rescan reference.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{CompiledFamily, Outside, UpdateFamily, NONE};
use crate::lattice::{Boundary, Configuration, Geometry, Region};
use crate::rng::{threshold_configuration, vertex_uniforms};
use crate::stats::{wilson, ScanEstimate, Z95};

const BLOCKED: u16 = 0x8000;

/// Incremental closure state. Vertices can be emptied one at a time and the
/// consequences are propagated immediately.
pub struct Closure<'a> {
    comp: &'a CompiledFamily,
    cfg: Configuration,
    counts: Vec<u16>,
    flippable: Option<&'a [bool]>,
    stack: Vec<usize>,
    n_empty: usize,
}

impl<'a> Closure<'a> {
    /// Builds the counters for `cfg` and runs the closure to completion.
    /// Only vertices marked in `flippable` may change; `None` allows all.
    pub fn new(cfg: Configuration, comp: &'a CompiledFamily, flippable: Option<&'a [bool]>) -> Self {
        assert_eq!(cfg.volume(), comp.volume(), "compiled family built for another geometry");
        let n = cfg.volume();
        let m = comp.rules().len();
        let mut counts = vec![0u16; n * m];
        let mut seeds = Vec::new();
        for w in 0..n {
            let mut any_zero = false;
            for (r, rule) in comp.rules().iter().enumerate() {
                let mut c = 0u16;
                for &o in rule {
                    let y = comp.target(w, o as usize);
                    if y == NONE {
                        if comp.outside() == Outside::Occupied {
                            c |= BLOCKED;
                        }
                    } else if cfg.is_occupied(y as usize) {
                        c += 1;
                    }
                }
                counts[w * m + r] = c;
                any_zero |= c == 0;
            }
            if any_zero && cfg.is_occupied(w) && flippable.is_none_or(|f| f[w]) {
                seeds.push(w);
            }
        }
        let n_empty = cfg.count_empty();
        let mut cl = Closure { comp, cfg, counts, flippable, stack: Vec::new(), n_empty };
        for w in seeds {
            cl.empty(w);
        }
        cl
    }

    /// Empties `v` (if occupied) and propagates.
    pub fn empty(&mut self, v: usize) {
        if self.cfg.is_empty(v) {
            return;
        }
        self.cfg.set_empty(v);
        self.n_empty += 1;
        self.stack.push(v);
        let m = self.comp.rules().len();
        while let Some(y) = self.stack.pop() {
            for o in 0..self.comp.n_offsets() {
                let w = self.comp.source(y, o);
                if w == NONE {
                    continue;
                }
                let w = w as usize;
                for &r in self.comp.rules_of(o) {
                    let c = &mut self.counts[w * m + r as usize];
                    *c -= 1;
                    if *c == 0 && self.cfg.is_occupied(w) && self.flippable.is_none_or(|f| f[w]) {
                        self.cfg.set_empty(w);
                        self.n_empty += 1;
                        self.stack.push(w);
                    }
                }
            }
        }
    }

    pub fn n_empty(&self) -> usize {
        self.n_empty
    }

    pub fn all_empty(&self) -> bool {
        self.n_empty == self.cfg.volume()
    }

    pub fn config(&self) -> &Configuration {
        &self.cfg
    }

    pub fn into_config(self) -> Configuration {
        self.cfg
    }
}

/// Least fixed point `[A]_U` on the configuration's own geometry; rules
/// leaving a free box are unsatisfied.
pub fn closure(cfg: &Configuration, fam: &UpdateFamily) -> Configuration {
    let comp = CompiledFamily::new(cfg.geometry(), fam, Outside::Occupied).expect("family/geometry mismatch");
    closure_compiled(cfg, &comp, None)
}

pub fn closure_compiled(cfg: &Configuration, comp: &CompiledFamily, flippable: Option<&[bool]>) -> Configuration {
    Closure::new(cfg.clone(), comp, flippable).into_config()
}

/// Reference closure by repeated full rescans.
pub fn closure_naive(cfg: &Configuration, fam: &UpdateFamily, outside: Outside) -> Configuration {
    let mut cur = cfg.clone();
    loop {
        let next: Vec<usize> = (0..cur.volume())
            .filter(|&x| cur.is_occupied(x) && crate::family::constraint_satisfied(&cur, fam, x, outside))
            .collect();
        if next.is_empty() {
            return cur;
        }
        for x in next {
            cur.set_empty(x);
        }
    }
}

pub const NEVER: u32 = u32::MAX;

/// Synchronous bootstrap rounds: entry `v` is the round in which `v` becomes
/// empty (0 if initially empty), or [`NEVER`].
pub fn closure_rounds(cfg: &Configuration, comp: &CompiledFamily, flippable: Option<&[bool]>) -> Vec<u32> {
    let n = cfg.volume();
    let mut cur = cfg.clone();
    let mut time = vec![NEVER; n];
    let mut stamp = vec![0u32; n];
    for (v, t) in time.iter_mut().enumerate() {
        if cur.is_empty(v) {
            *t = 0;
        }
    }
    let can = |w: usize| flippable.is_none_or(|f| f[w]);
    let mut candidates: Vec<usize> = (0..n).filter(|&w| cur.is_occupied(w) && can(w)).collect();
    let mut round = 1u32;
    loop {
        let newly: Vec<usize> = candidates.iter().copied().filter(|&w| comp.satisfied(&cur, w)).collect();
        if newly.is_empty() {
            return time;
        }
        for &w in &newly {
            cur.set_empty(w);
            time[w] = round;
        }
        round += 1;
        candidates.clear();
        for &y in &newly {
            for w in comp.dependents(y) {
                if stamp[w] != round && cur.is_occupied(w) && can(w) {
                    stamp[w] = round;
                    candidates.push(w);
                }
            }
        }
        candidates.sort_unstable();
    }
}

/// Number of synchronous rounds until `x` is empty, or `None` if never.
pub fn infection_time(cfg: &Configuration, fam: &UpdateFamily, x: usize) -> Option<u32> {
    let comp = CompiledFamily::new(cfg.geometry(), fam, Outside::Occupied).expect("family/geometry mismatch");
    let t = closure_rounds(cfg, &comp, None)[x];
    (t != NEVER).then_some(t)
}

/// Closure computed inside `r` only: vertices outside `r` count as occupied
/// and never change.
pub fn internal_closure(cfg: &Configuration, fam: &UpdateFamily, r: &Region) -> Configuration {
    let g = cfg.geometry();
    let mask = r.mask(g.volume());
    let mut inside = Configuration::occupied(cfg.geometry_arc().clone());
    for v in r.iter() {
        inside.set(v, cfg.is_occupied(v));
    }
    let comp = CompiledFamily::new(g, fam, Outside::Occupied).expect("family/geometry mismatch");
    closure_compiled(&inside, &comp, Some(&mask))
}

pub fn is_internally_spanned(cfg: &Configuration, fam: &UpdateFamily, r: &Region) -> bool {
    let c = internal_closure(cfg, fam, r);
    c.region_is_empty(r)
}

/// Smallest `q*` such that the coupled configuration `{u < q}` spans for
/// every `q > q*`. Returns 0 if the closure of the empty set already spans.
pub fn span_threshold(comp: &CompiledFamily, g: &Arc<Geometry>, u: &[f64]) -> f64 {
    let mut cl = Closure::new(Configuration::occupied(g.clone()), comp, None);
    if cl.all_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[a].total_cmp(&u[b]).then(a.cmp(&b)));
    for v in order {
        cl.empty(v);
        if cl.all_empty() {
            return u[v];
        }
    }
    1.0
}

fn torus(fam: &UpdateFamily, n: usize) -> Result<Arc<Geometry>> {
    if n == 0 {
        return Err(Error::Parameter("side must be positive".into()));
    }
    Ok(Arc::new(Geometry::new(vec![n; fam.dim()], Boundary::Torus)?))
}

fn check_prob(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("probability {q} outside [0, 1]")));
    }
    Ok(())
}

/// Fraction of q-random configurations on the torus `[n]^d` whose closure is
/// all empty, with a Wilson 95% interval.
pub fn estimate_span_probability(n: usize, fam: &UpdateFamily, q: f64, replicas: u64, seed: u64) -> Result<ScanEstimate> {
    check_prob(q)?;
    if replicas == 0 {
        return Err(Error::Parameter("replicas must be at least 1".into()));
    }
    let g = torus(fam, n)?;
    let comp = CompiledFamily::new(&g, fam, Outside::Occupied)?;
    let hits: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let u = vertex_uniforms(&g, seed, r);
            let cfg = threshold_configuration(g.clone(), &u, q);
            Closure::new(cfg, &comp, None).all_empty() as u64
        })
        .sum();
    Ok(ScanEstimate::binomial(hits, replicas, seed))
}

/// Result of a `q_c(n)` search.
#[derive(Clone, Debug)]
pub struct QcEstimate {
    /// Midpoint of the final bracket; the interval combines the bracket
    /// with a distribution-free 95% interval for the median threshold.
    pub estimate: ScanEstimate,
    pub bracket: (f64, f64),
    /// `(q, P̂(q))` at every bisection step.
    pub curve: Vec<(f64, f64)>,
    /// Raised if the coupled span indicator failed to be monotone in q.
    pub non_monotone: bool,
}

/// Bisection for `q_c(n; U)` on the torus with coupled uniforms.
///
/// Each replica keeps its uniforms for all q, so its span indicator is a
/// step function of q with a single threshold `q*_r`. The thresholds are
/// computed exactly by adding vertices in increasing `u` order, and the
/// bisection runs on `P̂(q) = #{r : q*_r < q} / R`.
pub fn estimate_qc(n: usize, fam: &UpdateFamily, tol: f64, replicas: u64, seed: u64) -> Result<QcEstimate> {
    if tol <= 0.0 {
        return Err(Error::Parameter("tol must be positive".into()));
    }
    if replicas == 0 {
        return Err(Error::Parameter("replicas must be at least 1".into()));
    }
    let g = torus(fam, n)?;
    let comp = CompiledFamily::new(&g, fam, Outside::Occupied)?;
    let mut thresholds: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| span_threshold(&comp, &g, &vertex_uniforms(&g, seed, r)))
        .collect();
    let p_at = |q: f64, t: &[f64]| t.iter().filter(|&&x| x < q).count() as f64 / t.len() as f64;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut curve = Vec::new();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let p = p_at(mid, &thresholds);
        curve.push((mid, p));
        if p >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let checks = replicas.min(16);
    let mut non_monotone = false;
    for r in 0..checks {
        let u = vertex_uniforms(&g, seed, r);
        let t = thresholds[r as usize];
        for q in [lo, hi] {
            let spans = Closure::new(threshold_configuration(g.clone(), &u, q), &comp, None).all_empty();
            if spans != (t < q) {
                non_monotone = true;
            }
        }
    }
    let mut sorted_curve = curve.clone();
    sorted_curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    non_monotone |= sorted_curve.windows(2).any(|w| w[1].1 < w[0].1);

    thresholds.sort_by(|a, b| a.total_cmp(b));
    let rn = replicas as f64;
    let spread = Z95 * rn.sqrt() / 2.0;
    let k_lo = ((rn / 2.0 - spread).floor().max(1.0) as usize).min(thresholds.len()) - 1;
    let k_hi = ((rn / 2.0 + spread).ceil() as usize).clamp(1, thresholds.len()) - 1;
    let value = 0.5 * (lo + hi);
    let estimate = ScanEstimate {
        value,
        lo: thresholds[k_lo].min(lo),
        hi: thresholds[k_hi].max(hi),
        replicas,
        seed,
    };
    Ok(QcEstimate { estimate, bracket: (lo, hi), curve, non_monotone })
}

/// Result of an `L_c(q)` search.
#[derive(Clone, Debug)]
pub struct LcEstimate {
    pub n: usize,
    /// Span probability estimate at the returned side.
    pub at_n: ScanEstimate,
    /// True if no side up to `n_max` reached 1/2; `n` is then `n_max`.
    pub censored: bool,
    pub evaluations: Vec<(usize, ScanEstimate)>,
}

/// Doubling then bisection for the smallest torus side whose estimated span
/// probability is at least 1/2. Ties at exactly 1/2 count as spanning.
pub fn estimate_lc(q: f64, fam: &UpdateFamily, n_max: usize, replicas: u64, seed: u64) -> Result<LcEstimate> {
    if q <= 0.0 || q > 1.0 {
        return Err(Error::Parameter(format!("q must lie in (0, 1], got {q}")));
    }
    if n_max == 0 {
        return Err(Error::Parameter("n_max must be positive".into()));
    }
    let mut evaluations: Vec<(usize, ScanEstimate)> = Vec::new();
    let mut eval = |n: usize| -> Result<ScanEstimate> {
        if let Some((_, e)) = evaluations.iter().find(|(m, _)| *m == n) {
            return Ok(*e);
        }
        let e = estimate_span_probability(n, fam, q, replicas, seed)?;
        evaluations.push((n, e));
        Ok(e)
    };
    let mut lo = 0usize;
    let mut hi = 1usize;
    loop {
        let e = eval(hi)?;
        if e.value >= 0.5 {
            break;
        }
        if hi >= n_max {
            let mut evals = evaluations.clone();
            evals.sort_by_key(|(m, _)| *m);
            return Ok(LcEstimate { n: n_max, at_n: e, censored: true, evaluations: evals });
        }
        lo = hi;
        hi = (hi * 2).min(n_max);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid)?.value >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let at_n = eval(hi)?;
    evaluations.sort_by_key(|(m, _)| *m);
    Ok(LcEstimate { n: hi, at_n, censored: false, evaluations })
}

/// `P̂` that the free box `[L]^d` is internally spanned, for each `L`, with
/// coordinate-coupled configurations across `L`.
pub fn spanning_probability_curve(
    ls: &[usize],
    fam: &UpdateFamily,
    q: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<(usize, ScanEstimate)>> {
    check_prob(q)?;
    if replicas == 0 {
        return Err(Error::Parameter("replicas must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(ls.len());
    for &l in ls {
        let g = Arc::new(Geometry::new(vec![l; fam.dim()], Boundary::Free)?);
        let comp = CompiledFamily::new(&g, fam, Outside::Occupied)?;
        let hits: u64 = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let cfg = threshold_configuration(g.clone(), &vertex_uniforms(&g, seed, r), q);
                Closure::new(cfg, &comp, None).all_empty() as u64
            })
            .sum();
        out.push((l, ScanEstimate::binomial(hits, replicas, seed)));
    }
    Ok(out)
}

/// Wilson interval helper re-exported for callers that aggregate counts.
pub fn binomial_interval(successes: u64, n: u64) -> (f64, f64) {
    wilson(successes, n, Z95)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Cuboid, RegionKind};
    use crate::rng::random_configuration_replica;

    fn g2(n: usize, b: Boundary) -> Arc<Geometry> {
        Arc::new(Geometry::new(vec![n, n], b).unwrap())
    }

    #[test]
    fn trivial_closures() {
        let fa2 = UpdateFamily::fa_kf(2, 2).unwrap();
        let g = g2(6, Boundary::Torus);
        let e = Configuration::empty(g.clone());
        assert_eq!(closure(&e, &fa2), e);
        let one = Configuration::with_empty(g.clone(), [7]);
        assert_eq!(closure(&one, &fa2), one);
        let u = UpdateFamily::unconstrained(2).unwrap();
        assert!(closure(&Configuration::occupied(g), &u).all_empty());
    }

    #[test]
    fn queue_matches_naive() {
        let g = g2(8, Boundary::Torus);
        for fam in [UpdateFamily::fa_kf(2, 2).unwrap(), UpdateFamily::gg(), UpdateFamily::north_east()] {
            for r in 0..60 {
                let c = random_configuration_replica(g.clone(), 0.3, 99, r);
                assert_eq!(closure(&c, &fam), closure_naive(&c, &fam, Outside::Occupied));
            }
        }
        let gf = g2(7, Boundary::Free);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let comp = CompiledFamily::new(&gf, &fam, Outside::Empty).unwrap();
        for r in 0..40 {
            let c = random_configuration_replica(gf.clone(), 0.2, 3, r);
            assert_eq!(closure_compiled(&c, &comp, None), closure_naive(&c, &fam, Outside::Empty));
        }
    }

    #[test]
    fn rounds_agree_with_closure() {
        let g = g2(10, Boundary::Torus);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let comp = CompiledFamily::new(&g, &fam, Outside::Occupied).unwrap();
        for r in 0..30 {
            let c = random_configuration_replica(g.clone(), 0.25, 5, r);
            let t = closure_rounds(&c, &comp, None);
            let cl = closure(&c, &fam);
            for v in 0..g.volume() {
                assert_eq!(t[v] != NEVER, cl.is_empty(v));
                assert_eq!(t[v] == 0, c.is_empty(v));
            }
        }
    }

    #[test]
    fn infection_front_speed() {
        let g = Arc::new(Geometry::torus(&[10]).unwrap());
        let fam = UpdateFamily::fa_kf(1, 1).unwrap();
        let c = Configuration::with_empty(g.clone(), [3]);
        assert_eq!(infection_time(&c, &fam, 6), Some(3));
        assert_eq!(infection_time(&c, &fam, 3), Some(0));
        let g = g2(5, Boundary::Torus);
        let c = Configuration::with_empty(g, [0]);
        assert_eq!(infection_time(&c, &UpdateFamily::fa_kf(2, 2).unwrap(), 12), None);
    }

    #[test]
    fn internal_spanning_examples() {
        let g = g2(6, Boundary::Torus);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let b = g.region(&RegionKind::Box { corner: vec![1, 1], dims: vec![2, 2] }).unwrap();
        let all = Configuration::empty(g.clone());
        assert!(is_internally_spanned(&all, &fam, &b));
        let mut c = Configuration::empty(g.clone());
        for v in b.iter().skip(1) {
            c.set_occupied(v);
        }
        assert!(!is_internally_spanned(&c, &fam, &b));
        let diag = Configuration::with_empty(g.clone(), [g.index(&[1, 1]).unwrap(), g.index(&[2, 2]).unwrap()]);
        assert!(is_internally_spanned(&diag, &fam, &b));
    }

    #[test]
    fn internal_spanning_matches_restriction() {
        let g = g2(9, Boundary::Torus);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let cub = Cuboid::new(vec![2, 3], vec![5, 5]);
        let r = cub.vertices(&g);
        for rep in 0..100 {
            let c = random_configuration_replica(g.clone(), 0.35, 8, rep);
            let sub = c.restrict(&cub, Boundary::Free).unwrap();
            assert_eq!(is_internally_spanned(&c, &fam, &r), closure(&sub, &fam).all_empty());
        }
    }

    #[test]
    fn threshold_is_the_coupled_switch_point() {
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let g = g2(8, Boundary::Torus);
        let comp = CompiledFamily::new(&g, &fam, Outside::Occupied).unwrap();
        for r in 0..20 {
            let u = vertex_uniforms(&g, 4, r);
            let t = span_threshold(&comp, &g, &u);
            let at = |q: f64| closure(&threshold_configuration(g.clone(), &u, q), &fam).all_empty();
            assert!(at(t + 1e-12));
            assert!(!at(t));
        }
    }

    #[test]
    fn fa1f_span_probability() {
        let fam = UpdateFamily::fa_kf(1, 1).unwrap();
        assert_eq!(estimate_span_probability(5, &fam, 1.0, 50, 1).unwrap().value, 1.0);
        assert_eq!(estimate_span_probability(5, &UpdateFamily::fa_kf(2, 2).unwrap(), 0.0, 50, 1).unwrap().value, 0.0);
        let q: f64 = 0.1;
        let n = 6usize;
        let e = estimate_span_probability(n, &fam, q, 4000, 2).unwrap();
        let exact = 1.0 - (1.0 - q).powi(n as i32);
        assert!(e.contains(exact), "{e:?} vs {exact}");
    }

    #[test]
    fn lc_tie_at_single_site() {
        let fam = UpdateFamily::fa_kf(1, 1).unwrap();
        let l = estimate_lc(0.5, &fam, 64, 2000, 3).unwrap();
        assert!(l.n == 1 || l.n == 2, "{}", l.n);
        let l = estimate_lc(0.001, &fam, 8, 200, 3).unwrap();
        assert!(l.censored && l.n == 8);
    }
}
