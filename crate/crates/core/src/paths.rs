//! Legal canonical paths: flip sequences in which every flipped vertex has
//! its constraint satisfied at flip time and no configuration repeats.
//!
//! Builders work in a free box with occupied exterior. Constraints are
//! monotone in the empty set, so a path legal there stays legal under any
//! exterior.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::blocks::{zero_set, BlockClassifier, BlockModel, BlockSpec, Classification};
use crate::bootstrap::{closure_rounds, Closure, NEVER};
use crate::error::{Error, Result};
use crate::family::{CompiledFamily, Outside, UpdateFamily, NONE};
use crate::lattice::{Configuration, Cuboid, Geometry, Region, RegionKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Flip {
    pub vertex: usize,
    /// Value after the flip: 0 empty, 1 occupied.
    pub new_value: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegalPath {
    pub start: Configuration,
    pub flips: Vec<Flip>,
}

impl LegalPath {
    pub fn new(start: Configuration) -> Self {
        LegalPath { start, flips: Vec::new() }
    }

    /// Path toggling `vertices` in order.
    pub fn from_vertices(start: Configuration, vertices: &[usize]) -> Self {
        let mut p = LegalPath::new(start);
        let mut cur = p.start.clone();
        for &v in vertices {
            cur.flip(v);
            p.flips.push(Flip { vertex: v, new_value: cur.value(v) });
        }
        p
    }

    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    pub fn vertices(&self) -> Vec<usize> {
        self.flips.iter().map(|f| f.vertex).collect()
    }

    pub fn end(&self) -> Configuration {
        let mut c = self.start.clone();
        for f in &self.flips {
            c.set(f.vertex, f.new_value == 1);
        }
        c
    }

    /// Every configuration visited, start and end included.
    pub fn states(&self) -> Vec<Configuration> {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut c = self.start.clone();
        out.push(c.clone());
        for f in &self.flips {
            c.set(f.vertex, f.new_value == 1);
            out.push(c.clone());
        }
        out
    }

    pub fn is_decreasing(&self) -> bool {
        self.flips.iter().all(|f| f.new_value == 0)
    }

    pub fn is_increasing(&self) -> bool {
        self.flips.iter().all(|f| f.new_value == 1)
    }

    pub fn reversed(&self) -> LegalPath {
        let flips = self.flips.iter().rev().map(|f| Flip { vertex: f.vertex, new_value: 1 - f.new_value }).collect();
        LegalPath { start: self.end(), flips }
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn extend(&mut self, other: &LegalPath) -> Result<()> {
        if other.start != self.end() {
            return Err(Error::Precondition("paths do not join".into()));
        }
        self.flips.extend_from_slice(&other.flips);
        Ok(())
    }

    /// The path with every loop cut out, keeping the first visit of each
    /// configuration. Legality is preserved since the flips after a loop
    /// act on the same configuration.
    pub fn loop_erased(&self) -> LegalPath {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut flips: Vec<Flip> = Vec::new();
        let mut cur = self.start.clone();
        index.insert(cur.words().to_vec(), 0);
        for f in &self.flips {
            cur.set(f.vertex, f.new_value == 1);
            let key = cur.words().to_vec();
            if let Some(&k) = index.get(&key) {
                flips.truncate(k);
                index.retain(|_, &mut i| i <= k);
            } else {
                flips.push(*f);
                index.insert(key, flips.len());
            }
        }
        LegalPath { start: self.start.clone(), flips }
    }

    /// Start grid followed by one `(index, vertex, new_value)` line per flip.
    pub fn to_text(&self) -> String {
        let mut s = self.start.to_grid_string();
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("flips\n");
        for (i, f) in self.flips.iter().enumerate() {
            let _ = writeln!(s, "({i}, {}, {})", f.vertex, f.new_value);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<LegalPath> {
        let (grid, flips) = text
            .split_once("flips\n")
            .ok_or(Error::Parse { line: 0, msg: "missing flips section".into() })?;
        let start = Configuration::from_grid_str(grid)?;
        let offset = grid.lines().count() + 1;
        let mut path = LegalPath::new(start);
        for (ln, line) in flips.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse { line: offset + ln + 1, msg: m.into() };
            let inner = line.strip_prefix('(').and_then(|l| l.strip_suffix(')')).ok_or_else(|| bad("expected (i, v, b)"))?;
            let parts: Vec<usize> =
                inner.split(',').map(|t| t.trim().parse::<usize>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(&e.to_string()))?;
            if parts.len() != 3 || parts[0] != path.len() || parts[2] > 1 || parts[1] >= path.start.volume() {
                return Err(bad("malformed flip"));
            }
            path.flips.push(Flip { vertex: parts[1], new_value: parts[2] as u8 });
        }
        Ok(path)
    }
}

/// Replays `path`, checking every flip's constraint and that no
/// configuration repeats.
pub fn verify_legal(path: &LegalPath, fam: &UpdateFamily, outside: Outside) -> Result<()> {
    let comp = CompiledFamily::new(path.start.geometry(), fam, outside)?;
    verify_legal_compiled(path, &comp)
}

pub fn verify_legal_compiled(path: &LegalPath, comp: &CompiledFamily) -> Result<()> {
    let mut cur = path.start.clone();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    seen.insert(cur.words().to_vec());
    for (i, f) in path.flips.iter().enumerate() {
        if f.vertex >= cur.volume() || cur.value(f.vertex) == f.new_value || !comp.satisfied(&cur, f.vertex) {
            return Err(Error::IllegalFlip { index: i, vertex: f.vertex });
        }
        cur.set(f.vertex, f.new_value == 1);
        if !seen.insert(cur.words().to_vec()) {
            return Err(Error::RepeatedConfiguration(i));
        }
    }
    Ok(())
}

fn mask_of(volume: usize, r: &Region) -> Vec<bool> {
    r.mask(volume)
}

/// Occupied vertices of `targets` together with everything they need,
/// as a decreasing flip order (bootstrap round, then index). Flips only
/// use `allowed` vertices.
fn emptying_flips(cfg: &Configuration, comp: &CompiledFamily, allowed: &[bool], targets: &[usize]) -> Option<Vec<usize>> {
    let time = closure_rounds(cfg, comp, Some(allowed));
    let mut heap = BinaryHeap::new();
    let mut marked = vec![false; cfg.volume()];
    for &t in targets {
        if time[t] == NEVER {
            return None;
        }
        if time[t] > 0 && !marked[t] {
            marked[t] = true;
            heap.push((time[t], t));
        }
    }
    let mut out = Vec::new();
    while let Some((tv, v)) = heap.pop() {
        out.push(v);
        let rule = comp
            .rules()
            .iter()
            .find(|r| {
                r.iter().all(|&o| {
                    let y = comp.target(v, o as usize);
                    if y == NONE {
                        comp.outside() == Outside::Empty
                    } else {
                        time[y as usize] < tv
                    }
                })
            })
            .expect("round structure guarantees a satisfied rule");
        for &o in rule {
            let y = comp.target(v, o as usize);
            if y != NONE && time[y as usize] > 0 && !marked[y as usize] {
                marked[y as usize] = true;
                heap.push((time[y as usize], y as usize));
            }
        }
    }
    out.sort_by_key(|&v| (time[v], v));
    Some(out)
}

/// Decreasing path emptying `r` with flips inside `r`, in bootstrap-round
/// then index order.
pub fn empty_region_schedule(cfg: &Configuration, fam: &UpdateFamily, r: &Region) -> Result<LegalPath> {
    let comp = CompiledFamily::new(cfg.geometry(), fam, Outside::Occupied)?;
    empty_within(cfg, &comp, r, r)
}

/// Decreasing path emptying `target` using flips in `allowed` only.
pub fn empty_within(cfg: &Configuration, comp: &CompiledFamily, allowed: &Region, target: &Region) -> Result<LegalPath> {
    let mask = mask_of(cfg.volume(), allowed);
    let flips = emptying_flips(cfg, comp, &mask, target.vertices())
        .ok_or_else(|| Error::Precondition("target cannot be emptied from inside the allowed region".into()))?;
    Ok(LegalPath::from_vertices(cfg.clone(), &flips))
}

/// Chain of regions: starting from `cfg` with `regions[0]` empty, empties
/// each region in turn using the previous one, restoring the region two
/// steps back by reversing a fresh emptying of it. Ends at `cfg` with the
/// last region emptied. Errors name the 1-based chain index that fails.
pub fn chain_schedule(cfg: &Configuration, fam: &UpdateFamily, regions: &[Region]) -> Result<LegalPath> {
    let comp = CompiledFamily::new(cfg.geometry(), fam, Outside::Occupied)?;
    chain_schedule_compiled(cfg, &comp, regions)
}

pub fn chain_schedule_compiled(cfg: &Configuration, comp: &CompiledFamily, regions: &[Region]) -> Result<LegalPath> {
    if regions.is_empty() {
        return Err(Error::Parameter("chain needs at least one region".into()));
    }
    if !cfg.region_is_empty(&regions[0]) {
        return Err(Error::ChainHypothesis(1));
    }
    let mut path = LegalPath::new(cfg.clone());
    let mut cur = cfg.clone();
    let restore = |cur: &Configuration, r: &Region| -> Option<LegalPath> {
        let mut sigma = cur.clone();
        for v in r.iter() {
            sigma.set(v, cfg.is_occupied(v));
        }
        let mask = mask_of(cur.volume(), r);
        let flips = emptying_flips(&sigma, comp, &mask, r.vertices())?;
        Some(LegalPath::from_vertices(sigma, &flips).reversed())
    };
    for j in 0..regions.len() - 1 {
        let next = &regions[j + 1];
        let mask = mask_of(cur.volume(), next);
        let fwd = emptying_flips(&cur, comp, &mask, next.vertices()).ok_or(Error::ChainHypothesis(j + 2))?;
        let seg = LegalPath::from_vertices(cur.clone(), &fwd);
        cur = seg.end();
        path.extend(&seg)?;
        if j >= 1 {
            let r = regions[j - 1].difference(&regions[j]).difference(next);
            let back = restore(&cur, &r).ok_or(Error::ChainHypothesis(j))?;
            cur = back.end();
            path.extend(&back)?;
        }
    }
    if regions.len() >= 2 {
        let n = regions.len();
        let r = regions[n - 2].difference(&regions[n - 1]);
        let back = restore(&cur, &r).ok_or(Error::ChainHypothesis(n - 1))?;
        path.extend(&back)?;
    }
    Ok(path.loop_erased())
}

/// Vertices of `slice` in order, projected to the slice geometry.
fn project_slice(cfg: &Configuration, slice: &Region, sg: &Arc<Geometry>) -> Configuration {
    let mut sub = Configuration::occupied(sg.clone());
    for (t, v) in slice.iter().enumerate() {
        if cfg.is_empty(v) {
            sub.set_empty(t);
        }
    }
    sub
}

/// FA-kf slice move: with slice `j` along `axis` empty and the adjacent
/// slice (`j + 1` if `forward`, else `j - 1`) (k-1)-internally spanned in
/// its own right, empties the adjacent slice with flips inside it.
pub fn slice_schedule(cfg: &Configuration, k: usize, axis: usize, j: usize, forward: bool) -> Result<LegalPath> {
    let g = cfg.geometry();
    let d = g.dim();
    if axis >= d || j >= g.dims()[axis] {
        return Err(Error::Parameter("slice out of range".into()));
    }
    let t = if forward { j + 1 } else { j.checked_sub(1).ok_or(Error::Parameter("no slice below 0".into()))? };
    if t >= g.dims()[axis] {
        return Err(Error::Parameter("no slice beyond the box".into()));
    }
    let fam = UpdateFamily::fa_kf(d, k)?;
    let src = g.region(&RegionKind::Slice { axis, index: j })?;
    let dst = g.region(&RegionKind::Slice { axis, index: t })?;
    if !cfg.region_is_empty(&src) {
        return Err(Error::Precondition(format!("slice {j} along axis {axis} is not empty")));
    }
    if k >= 2 && d >= 2 {
        let sdims: Vec<usize> = (0..d).filter(|&a| a != axis).map(|a| g.dims()[a]).collect();
        let sg = Arc::new(Geometry::free(&sdims)?);
        let sf = CompiledFamily::new(&sg, &UpdateFamily::fa_kf(d - 1, k - 1)?, Outside::Occupied)?;
        if !Closure::new(project_slice(cfg, &dst, &sg), &sf, None).all_empty() {
            return Err(Error::Precondition(format!("slice {t} is not internally spanned")));
        }
    }
    let comp = CompiledFamily::new(g, &fam, Outside::Occupied)?;
    empty_within(cfg, &comp, &dst, &dst)
}

/// FA-2f cross move: with the cross at `x` empty and `y` a neighbour of
/// `x`, empties the cross at `y` with flips inside it.
pub fn cross_schedule(cfg: &Configuration, x: &[usize], y: &[usize]) -> Result<LegalPath> {
    let g = cfg.geometry();
    if !g.in_bounds(x) || !g.in_bounds(y) {
        return Err(Error::OutOfBounds(if g.in_bounds(x) { y.to_vec() } else { x.to_vec() }));
    }
    let dist: usize = x.iter().zip(y).map(|(a, b)| a.abs_diff(*b)).sum();
    if dist != 1 {
        return Err(Error::Precondition("cross moves need adjacent centres".into()));
    }
    let cx = g.region(&RegionKind::Cross { center: x.to_vec() })?;
    let cy = g.region(&RegionKind::Cross { center: y.to_vec() })?;
    if !cfg.region_is_empty(&cx) {
        return Err(Error::Precondition("the starting cross is not empty".into()));
    }
    let comp = CompiledFamily::new(g, &UpdateFamily::fa_kf(g.dim(), 2)?, Outside::Occupied)?;
    empty_within(cfg, &comp, &cy, &cy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnMove {
    /// Two empty columns and a column with an empty site next to them.
    Obs1,
    /// Two empty columns and the two sites above the next two columns.
    Obs2,
}

/// GG column moves on the bottom `height` rows. Columns `pair` and
/// `pair + 1` must be empty; the move empties the next column (`Obs1`) or
/// next two columns (`Obs2`) on the side given by `rightward`.
pub fn gg_column_moves(cfg: &Configuration, mv: ColumnMove, pair: usize, height: usize, rightward: bool) -> Result<LegalPath> {
    let g = cfg.geometry();
    if g.dim() != 2 || height == 0 || height > g.dims()[1] {
        return Err(Error::Parameter("column moves need a 2d box and 1 <= height <= rows".into()));
    }
    let width = match mv {
        ColumnMove::Obs1 => 1,
        ColumnMove::Obs2 => 2,
    };
    let targets: Vec<usize> = if rightward {
        (pair + 2..pair + 2 + width).collect()
    } else {
        (0..width).map(|t| pair.checked_sub(width - t)).collect::<Option<_>>().ok_or(Error::Parameter("columns below 0".into()))?
    };
    if pair + 1 >= g.dims()[0] || targets.iter().any(|&c| c >= g.dims()[0]) {
        return Err(Error::Parameter("columns beyond the box".into()));
    }
    let column = |c: usize| -> Region { Region::from_indices((0..height).map(|r| g.index_unchecked(&[c, r])).collect()) };
    if !cfg.region_is_empty(&column(pair).union(&column(pair + 1))) {
        return Err(Error::Precondition("the column pair is not empty".into()));
    }
    let target = targets.iter().fold(Region::default(), |acc, &c| acc.union(&column(c)));
    match mv {
        ColumnMove::Obs1 => {
            if !target.iter().any(|v| cfg.is_empty(v)) {
                return Err(Error::Precondition("the target column has no empty site".into()));
            }
        }
        ColumnMove::Obs2 => {
            if height >= g.dims()[1] || !targets.iter().all(|&c| cfg.is_empty(g.index_unchecked(&[c, height]))) {
                return Err(Error::Precondition("the sites above the target columns are not empty".into()));
            }
        }
    }
    let comp = CompiledFamily::new(g, &UpdateFamily::gg(), Outside::Occupied)?;
    empty_within(cfg, &comp, &target, &target)
}

fn block_at(spec: &BlockSpec, g: &Geometry, corner: Vec<usize>) -> Result<Region> {
    let c = Cuboid::new(corner, spec.dims.clone());
    if !c.fits(g) {
        return Err(Error::OutOfBounds(c.corner));
    }
    Ok(c.vertices(g))
}

fn classify_sub(cfg: &Configuration, cl: &BlockClassifier, corner: &[usize], spec: &BlockSpec) -> Result<Classification> {
    let sub = cfg.restrict(&Cuboid::new(corner.to_vec(), spec.dims.clone()), crate::lattice::Boundary::Free)?;
    Ok(cl.classify(&sub))
}

/// Empties random sites of the block at `corner` until it is good: one
/// site per slice in every direction (fa2), or an empty site in every
/// column and an adjacent empty pair on every row (gg).
pub fn plant_good<R: Rng + ?Sized>(cfg: &mut Configuration, spec: &BlockSpec, corner: &[usize], rng: &mut R) -> Result<()> {
    let g = cfg.geometry().clone();
    let block = Cuboid::new(corner.to_vec(), spec.dims.clone());
    if !block.fits(&g) {
        return Err(Error::OutOfBounds(block.corner));
    }
    let dims = &spec.dims;
    let at = |x: &[usize]| {
        let c: Vec<usize> = x.iter().zip(corner).map(|(a, b)| a + b).collect();
        g.index_unchecked(&c)
    };
    match spec.model {
        BlockModel::Fa2 { .. } => {
            for axis in 0..dims.len() {
                for t in 0..dims[axis] {
                    let mut x: Vec<usize> = dims.iter().map(|&n| rng.random_range(0..n)).collect();
                    x[axis] = t;
                    cfg.set_empty(at(&x));
                }
            }
        }
        BlockModel::Gg => {
            let (n1, n2) = (dims[0], dims[1]);
            for r in 0..n2 {
                let a = rng.random_range(0..n1 - 1);
                cfg.set_empty(at(&[a, r]));
                cfg.set_empty(at(&[a + 1, r]));
            }
            for c in 0..n1 {
                cfg.set_empty(at(&[c, rng.random_range(0..n2)]));
            }
        }
        BlockModel::Fakf { .. } => return Err(Error::Parameter("planting is not available for fakf blocks".into())),
    }
    Ok(())
}

/// [`plant_good`] followed by emptying the block's zero set.
pub fn plant_supergood<R: Rng + ?Sized>(
    cfg: &mut Configuration,
    spec: &BlockSpec,
    corner: &[usize],
    rng: &mut R,
) -> Result<()> {
    plant_good(cfg, spec, corner, rng)?;
    let bg = Geometry::free(&spec.dims)?;
    let g = cfg.geometry().clone();
    for v in zero_set(&spec.model, &bg)?.iter() {
        let c: Vec<usize> = bg.coords(v).iter().zip(corner).map(|(a, b)| a + b).collect();
        cfg.set_empty(g.index_unchecked(&c));
    }
    Ok(())
}

/// Path from `ω` to `ω^z` for `z` in the block at the origin of a box twice
/// the block size in every direction, given that the neighbouring blocks
/// at `+e_i` are super-good. Flips stay in the block and those neighbours.
///
/// With `z` occupied, empties (in bootstrap order, pruned to what is needed)
/// until `z`'s constraint holds, flips `z`, then undoes the emptying. If
/// `z` starts empty the same path is taken in reverse.
pub fn path_a(cfg: &Configuration, spec: &BlockSpec, z: usize) -> Result<LegalPath> {
    let g = cfg.geometry();
    let d = spec.dims.len();
    let expect: Vec<usize> = spec.dims.iter().map(|n| 2 * n).collect();
    if g.dims() != expect.as_slice() {
        return Err(Error::Parameter(format!("path A needs a box of sides {expect:?}")));
    }
    let cl = BlockClassifier::new(&spec.model, &spec.dims)?;
    let mut allowed = block_at(spec, g, vec![0; d])?;
    if !allowed.contains(z) {
        return Err(Error::Precondition("z must lie in the base block".into()));
    }
    for i in 0..d {
        let mut corner = vec![0; d];
        corner[i] = spec.dims[i];
        if classify_sub(cfg, &cl, &corner, spec)? != Classification::Supergood {
            return Err(Error::Precondition(format!("neighbour block along axis {i} is not super-good")));
        }
        allowed = allowed.union(&block_at(spec, g, corner)?);
    }
    let comp = CompiledFamily::new(g, &spec.model.family()?, Outside::Occupied)?;
    let mut sigma = cfg.clone();
    sigma.set_occupied(z);
    let mut mask = allowed.mask(g.volume());
    mask[z] = false;
    let time = closure_rounds(&sigma, &comp, Some(&mask));
    let best = comp
        .rules()
        .iter()
        .filter_map(|r| {
            let mut worst = 0u32;
            let mut sites = Vec::with_capacity(r.len());
            for &o in r {
                let y = comp.target(z, o as usize);
                if y == NONE || time[y as usize] == NEVER {
                    return None;
                }
                worst = worst.max(time[y as usize]);
                sites.push(y as usize);
            }
            Some((worst, sites))
        })
        .min_by_key(|(w, _)| *w)
        .ok_or_else(|| Error::Precondition("z's constraint cannot be satisfied inside the allowed blocks".into()))?;
    let flips = emptying_flips(&sigma, &comp, &mask, &best.1).expect("sites have finite rounds");
    let mut vs = flips.clone();
    vs.push(z);
    vs.extend(flips.iter().rev());
    let path = LegalPath::from_vertices(sigma, &vs);
    Ok(if cfg.is_occupied(z) { path } else { path.reversed() })
}

/// Path from `ω` to `Φ(ω)` on the block `x`, using the adjacent block `y`.
/// The box is two blocks long along `axis`; `y` is the second block when
/// `y_after`, else the first. `x` must be good and `y` super-good.
///
/// Empties the zero set of `x` through the dependencies it needs, then
/// restores every other flipped vertex in reverse order.
pub fn path_b(cfg: &Configuration, spec: &BlockSpec, axis: usize, y_after: bool) -> Result<LegalPath> {
    let g = cfg.geometry();
    let d = spec.dims.len();
    if axis >= d {
        return Err(Error::Parameter("axis out of range".into()));
    }
    let mut expect = spec.dims.clone();
    expect[axis] *= 2;
    if g.dims() != expect.as_slice() {
        return Err(Error::Parameter(format!("path B needs a box of sides {expect:?}")));
    }
    let mut far = vec![0; d];
    far[axis] = spec.dims[axis];
    let (cx, cy) = if y_after { (vec![0; d], far) } else { (far, vec![0; d]) };
    let cl = BlockClassifier::new(&spec.model, &spec.dims)?;
    if classify_sub(cfg, &cl, &cx, spec)? == Classification::Neither {
        return Err(Error::Precondition("block x is not good".into()));
    }
    if classify_sub(cfg, &cl, &cy, spec)? != Classification::Supergood {
        return Err(Error::Precondition("block y is not super-good".into()));
    }
    let bx = block_at(spec, g, cx.clone())?;
    let allowed = bx.union(&block_at(spec, g, cy)?);
    let zero: Vec<usize> = cl
        .zero_set()
        .iter()
        .map(|v| {
            let mut c = cl.geometry().coords(v);
            c.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            g.index_unchecked(&c)
        })
        .collect();
    let comp = CompiledFamily::new(g, &spec.model.family()?, Outside::Occupied)?;
    let flips = emptying_flips(cfg, &comp, &allowed.mask(g.volume()), &zero)
        .ok_or_else(|| Error::Precondition("the zero set cannot be emptied".into()))?;
    let zero_set: HashSet<usize> = zero.into_iter().collect();
    let mut vs = flips.clone();
    vs.extend(flips.iter().rev().filter(|v| !zero_set.contains(v)));
    Ok(LegalPath::from_vertices(cfg.clone(), &vs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CongestionMode {
    Exact,
    Bounded,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CongestionReport {
    pub rho: f64,
    pub n_max: usize,
    pub mode: CongestionMode,
}

/// Exact congestion of a family of paths: the largest, over visited
/// configurations `ω'`, of `Σ μ(ω)/μ(ω')` over the paths through `ω'`,
/// where `ω` is each path's start.
pub fn congestion_constant<'a>(paths: impl IntoIterator<Item = &'a LegalPath>, q: f64) -> CongestionReport {
    let lr = ((1.0 - q) / q).ln();
    let mut sums: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut n_max = 0;
    for p in paths {
        n_max = n_max.max(p.len());
        let occ0 = p.start.count_occupied() as f64;
        let mut seen = HashSet::new();
        for s in p.states() {
            let key = s.words().to_vec();
            if seen.insert(key.clone()) {
                *sums.entry(key).or_insert(0.0) += ((occ0 - s.count_occupied() as f64) * lr).exp();
            }
        }
    }
    let rho = sums.values().copied().fold(0.0, f64::max);
    CongestionReport { rho, n_max, mode: CongestionMode::Exact }
}

/// `(2/q)^{max_i (|Λ_{i-2}| + |Λ_{i-1}| + |Λ_i|)}` for a chain of regions.
pub fn congestion_bound(q: f64, region_sizes: &[usize]) -> CongestionReport {
    let m = (0..region_sizes.len())
        .map(|i| region_sizes[i.saturating_sub(2)..=i].iter().sum::<usize>())
        .max()
        .unwrap_or(0);
    CongestionReport { rho: (2.0 / q).powi(m as i32), n_max: 2 * region_sizes.iter().sum::<usize>(), mode: CongestionMode::Bounded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::BlockModel;
    use crate::rng::random_configuration;

    fn geom(dims: &[usize]) -> Arc<Geometry> {
        Arc::new(Geometry::free(dims).unwrap())
    }

    #[test]
    fn trivial_paths() {
        let g = geom(&[3, 3]);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let c = Configuration::occupied(g.clone());
        assert!(verify_legal(&LegalPath::new(c.clone()), &fam, Outside::Occupied).is_ok());
        let bad = LegalPath::from_vertices(c.clone(), &[4]);
        assert!(matches!(verify_legal(&bad, &fam, Outside::Occupied), Err(Error::IllegalFlip { index: 0, vertex: 4 })));
        let e = Configuration::empty(g.clone());
        let back = LegalPath::from_vertices(e, &[0, 0]);
        assert!(matches!(verify_legal(&back, &fam, Outside::Occupied), Err(Error::RepeatedConfiguration(1))));
    }

    #[test]
    fn region_schedule() {
        let g = geom(&[3, 3]);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let r = g.full_box().vertices(&g);
        let c = Configuration::with_empty(g.clone(), [0, 4, 8]);
        let p = empty_region_schedule(&c, &fam, &r).unwrap();
        assert!(p.len() <= 9 && p.is_decreasing());
        assert!(p.end().all_empty());
        verify_legal(&p, &fam, Outside::Occupied).unwrap();
        assert!(verify_legal(&p.reversed(), &fam, Outside::Occupied).is_ok());
        assert!(empty_region_schedule(&Configuration::with_empty(g.clone(), [0]), &fam, &r).is_err());
        assert!(empty_region_schedule(&Configuration::empty(g), &fam, &r).unwrap().is_empty());
    }

    #[test]
    fn chain_on_slices() {
        let g = geom(&[5, 3]);
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let slices: Vec<Region> = (0..5).map(|j| g.region(&RegionKind::Slice { axis: 0, index: j }).unwrap()).collect();
        let mut ok = 0;
        for seed in 0..200 {
            let mut c = random_configuration(g.clone(), 0.4, seed);
            for v in slices[0].iter() {
                c.set_empty(v);
            }
            let Ok(p) = chain_schedule(&c, &fam, &slices) else { continue };
            ok += 1;
            verify_legal(&p, &fam, Outside::Occupied).unwrap();
            assert!(p.len() <= 2 * 15);
            let mut expect = c.clone();
            for v in slices[4].iter() {
                expect.set_empty(v);
            }
            assert_eq!(p.end(), expect);
        }
        assert!(ok > 20);
        assert!(matches!(chain_schedule(&Configuration::occupied(g), &fam, &slices), Err(Error::ChainHypothesis(1))));
    }

    #[test]
    fn cross_and_slice_moves() {
        let g = geom(&[4, 4]);
        let cx = g.region(&RegionKind::Cross { center: vec![1, 1] }).unwrap();
        let c = Configuration::with_empty(g.clone(), cx.iter());
        let p = cross_schedule(&c, &[1, 1], &[2, 1]).unwrap();
        assert!(p.len() <= 16);
        verify_legal(&p, &UpdateFamily::fa_kf(2, 2).unwrap(), Outside::Occupied).unwrap();
        assert!(p.end().region_is_empty(&g.region(&RegionKind::Cross { center: vec![2, 1] }).unwrap()));
        assert!(cross_schedule(&c, &[1, 1], &[2, 2]).is_err());

        let line = Configuration::with_empty(g.clone(), [0, 1, 2, 3, 6]);
        let s = slice_schedule(&line, 2, 0, 0, true).unwrap();
        verify_legal(&s, &UpdateFamily::fa_kf(2, 2).unwrap(), Outside::Occupied).unwrap();
        assert_eq!(s.len(), 3);
        assert!(slice_schedule(&Configuration::with_empty(g.clone(), [0, 1, 2, 3]), 2, 0, 0, true).is_err());
    }

    #[test]
    fn gg_columns() {
        let g = geom(&[4, 5]);
        let mut c = Configuration::occupied(g.clone());
        for r in 0..4 {
            c.set_empty(g.index(&[0, r]).unwrap());
            c.set_empty(g.index(&[1, r]).unwrap());
        }
        c.set_empty(g.index(&[2, 2]).unwrap());
        let p = gg_column_moves(&c, ColumnMove::Obs1, 0, 4, true).unwrap();
        verify_legal(&p, &UpdateFamily::gg(), Outside::Occupied).unwrap();
        assert_eq!(p.len(), 3);
        assert!(gg_column_moves(&c, ColumnMove::Obs2, 0, 4, true).is_err());
        c.set_empty(g.index(&[2, 4]).unwrap());
        c.set_empty(g.index(&[3, 4]).unwrap());
        let p2 = gg_column_moves(&c, ColumnMove::Obs2, 0, 4, true).unwrap();
        verify_legal(&p2, &UpdateFamily::gg(), Outside::Occupied).unwrap();
        assert_eq!(p2.len(), 7);
    }

    #[test]
    fn block_paths_fa2() {
        let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![4, 4], 0.4).unwrap();
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let gb = geom(&[8, 4]);
        let mut built = 0;
        for seed in 0..300 {
            let c = random_configuration(gb.clone(), 0.5, seed);
            let Ok(p) = path_b(&c, &spec, 0, seed % 2 == 0) else { continue };
            built += 1;
            verify_legal(&p, &fam, Outside::Occupied).unwrap();
            assert!(p.len() <= 8 * 16);
        }
        assert!(built > 0);
        let ga = geom(&[8, 8]);
        let mut c = random_configuration(ga.clone(), 0.3, 7);
        for v in 0..64 {
            let x = ga.coords(v);
            if (x[0] >= 4) != (x[1] >= 4) && (x[0] % 4 == 0 || x[1] % 4 == 0) {
                c.set_empty(v);
            }
        }
        for z in [0, 9, 27] {
            let p = path_a(&c, &spec, z).unwrap();
            verify_legal(&p, &fam, Outside::Occupied).unwrap();
            let mut expect = c.clone();
            expect.flip(z);
            assert_eq!(p.end(), expect);
        }
    }

    #[test]
    fn congestion_basics() {
        let g = geom(&[2, 2]);
        let c = Configuration::occupied(g.clone());
        assert_eq!(congestion_constant([&LegalPath::new(c.clone())], 0.3).rho, 1.0);
        let e = Configuration::with_empty(g, [0]);
        let p = LegalPath::from_vertices(e, &[1, 2]);
        let r = congestion_constant([&p], 0.25);
        assert!((r.rho - 9.0).abs() < 1e-9);
        assert_eq!(congestion_bound(0.5, &[2, 2, 2]).rho, 4f64.powi(6));
    }

    #[test]
    fn text_round_trip() {
        let g = geom(&[3, 2]);
        let p = LegalPath::from_vertices(Configuration::with_empty(g, [0]), &[1, 2, 1]);
        assert_eq!(LegalPath::from_text(&p.to_text()).unwrap(), p);
    }
}
