//! Lattice geometry, bit-packed occupancy configurations and regions.
//!
//! Vertices are addressed by a flat row-major index (last coordinate
//! fastest). Coordinates are 0-based. A configuration stores one bit per
//! vertex: 1 is occupied, 0 is empty.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Torus,
    Free,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Torus => write!(f, "torus"),
            Boundary::Free => write!(f, "free"),
        }
    }
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(Boundary::Torus),
            "free" => Ok(Boundary::Free),
            other => Err(Error::Geometry(format!("unknown boundary '{other}'"))),
        }
    }
}

/// A finite box or torus `[n_1] x ... x [n_d]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Geometry {
    dims: Vec<usize>,
    boundary: Boundary,
    strides: Vec<usize>,
    volume: usize,
}

impl Geometry {
    pub fn new(dims: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Geometry("dimension must be at least 1".into()));
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::Geometry(format!("side lengths must be positive: {dims:?}")));
        }
        let mut volume: usize = 1;
        for &n in &dims {
            volume = volume
                .checked_mul(n)
                .filter(|&v| v <= u32::MAX as usize)
                .ok_or_else(|| Error::Geometry(format!("too many vertices: {dims:?}")))?;
        }
        let mut strides = vec![1; dims.len()];
        for i in (0..dims.len() - 1).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        Ok(Geometry { dims, boundary, strides, volume })
    }

    pub fn torus(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), Boundary::Torus)
    }

    pub fn free(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), Boundary::Free)
    }

    /// The cube `[n]^d`.
    pub fn cube(d: usize, n: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![n; d], boundary)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn in_bounds(&self, x: &[usize]) -> bool {
        x.len() == self.dims.len() && x.iter().zip(&self.dims).all(|(&a, &n)| a < n)
    }

    pub fn index(&self, x: &[usize]) -> Result<usize> {
        if !self.in_bounds(x) {
            return Err(Error::OutOfBounds(x.to_vec()));
        }
        Ok(self.index_unchecked(x))
    }

    #[inline]
    pub fn index_unchecked(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn coords(&self, v: usize) -> Vec<usize> {
        let mut x = vec![0; self.dims.len()];
        self.coords_into(v, &mut x);
        x
    }

    #[inline]
    pub fn coords_into(&self, mut v: usize, out: &mut [usize]) {
        for (i, s) in self.strides.iter().enumerate() {
            out[i] = v / s;
            v %= s;
        }
    }

    /// Vertex reached from `v` by a lattice displacement, wrapping on the
    /// torus. `None` if the displacement leaves a free box.
    pub fn shift(&self, v: usize, off: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        let mut rem = v;
        for i in 0..self.dims.len() {
            let s = self.strides[i];
            let xi = (rem / s) as i64;
            rem %= s;
            let n = self.dims[i] as i64;
            let mut y = xi + off[i];
            match self.boundary {
                Boundary::Torus => y = y.rem_euclid(n),
                Boundary::Free => {
                    if y < 0 || y >= n {
                        return None;
                    }
                }
            }
            idx += y as usize * s;
        }
        Some(idx)
    }

    /// Nearest neighbours of `x`, sorted and deduplicated.
    pub fn neighbors(&self, x: &[usize]) -> Result<Vec<usize>> {
        let v = self.index(x)?;
        Ok(self.neighbor_indices(v))
    }

    pub fn neighbor_indices(&self, v: usize) -> Vec<usize> {
        let d = self.dims.len();
        let mut off = vec![0i64; d];
        let mut out = Vec::with_capacity(2 * d);
        for i in 0..d {
            for s in [1i64, -1] {
                off[i] = s;
                if let Some(w) = self.shift(v, &off) {
                    if w != v {
                        out.push(w);
                    }
                }
            }
            off[i] = 0;
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The whole geometry as a sub-box.
    pub fn full_box(&self) -> Cuboid {
        Cuboid { corner: vec![0; self.dim()], dims: self.dims.clone() }
    }

    pub fn region(&self, kind: &RegionKind) -> Result<Region> {
        self.full_box().region(self, kind)
    }

    pub fn describe(&self) -> String {
        self.dims.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
    }
}

/// An axis-aligned sub-box of a geometry (no wrapping).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cuboid {
    pub corner: Vec<usize>,
    pub dims: Vec<usize>,
}

/// Region constructors. Indices are relative to the enclosing cuboid;
/// `Cross` takes absolute coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionKind {
    Slice { axis: usize, index: usize },
    Frame { axis: usize, index: usize },
    Edge { axis: usize },
    Cross { center: Vec<usize> },
    Box { corner: Vec<usize>, dims: Vec<usize> },
}

impl Cuboid {
    pub fn new(corner: Vec<usize>, dims: Vec<usize>) -> Self {
        Cuboid { corner, dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn fits(&self, g: &Geometry) -> bool {
        self.corner.len() == g.dim()
            && self.dims.len() == g.dim()
            && (0..g.dim()).all(|i| self.dims[i] >= 1 && self.corner[i] + self.dims[i] <= g.dims()[i])
    }

    pub fn contains(&self, x: &[usize]) -> bool {
        (0..self.dims.len()).all(|i| x[i] >= self.corner[i] && x[i] < self.corner[i] + self.dims[i])
    }

    /// The cuboid translated by `delta` along `axis`, if it stays non-negative.
    pub fn shifted(&self, axis: usize, delta: i64) -> Option<Cuboid> {
        let c = self.corner[axis] as i64 + delta;
        if c < 0 {
            return None;
        }
        let mut corner = self.corner.clone();
        corner[axis] = c as usize;
        Some(Cuboid { corner, dims: self.dims.clone() })
    }

    /// All vertices of the cuboid selected by `keep`, as flat indices.
    fn collect(&self, g: &Geometry, keep: impl Fn(&[usize]) -> bool) -> Region {
        let d = self.dim();
        let mut out = Vec::new();
        let mut rel = vec![0usize; d];
        let mut abs = vec![0usize; d];
        'outer: loop {
            for i in 0..d {
                abs[i] = self.corner[i] + rel[i];
            }
            if keep(&rel) {
                out.push(g.index_unchecked(&abs));
            }
            let mut i = d;
            loop {
                if i == 0 {
                    break 'outer;
                }
                i -= 1;
                rel[i] += 1;
                if rel[i] < self.dims[i] {
                    break;
                }
                rel[i] = 0;
            }
        }
        out.sort_unstable();
        Region { vertices: out }
    }

    pub fn vertices(&self, g: &Geometry) -> Region {
        self.collect(g, |_| true)
    }

    pub fn region(&self, g: &Geometry, kind: &RegionKind) -> Result<Region> {
        if !self.fits(g) {
            return Err(Error::IndexOutOfRange(format!("cuboid {self:?} does not fit {:?}", g.dims())));
        }
        let d = self.dim();
        let axis_ok = |a: usize| {
            if a < d {
                Ok(())
            } else {
                Err(Error::IndexOutOfRange(format!("axis {a} in dimension {d}")))
            }
        };
        match kind {
            RegionKind::Slice { axis, index } | RegionKind::Frame { axis, index } => {
                axis_ok(*axis)?;
                if *index >= self.dims[*axis] {
                    return Err(Error::IndexOutOfRange(format!(
                        "slice {index} along axis {axis} of side {}",
                        self.dims[*axis]
                    )));
                }
                let frame = matches!(kind, RegionKind::Frame { .. });
                let (a, j) = (*axis, *index);
                Ok(self.collect(g, |x| x[a] == j && (!frame || (0..d).any(|k| k != a && x[k] == 0))))
            }
            RegionKind::Edge { axis } => {
                axis_ok(*axis)?;
                let a = *axis;
                Ok(self.collect(g, |x| (0..d).all(|k| k == a || x[k] == 0)))
            }
            RegionKind::Cross { center } => {
                if center.len() != d || !self.contains(center) {
                    return Err(Error::OutOfBounds(center.clone()));
                }
                let c: Vec<usize> = (0..d).map(|i| center[i] - self.corner[i]).collect();
                Ok(self.collect(g, |x| (0..d).filter(|&k| x[k] != c[k]).count() <= 1))
            }
            RegionKind::Box { corner, dims } => {
                if corner.len() != d || dims.len() != d {
                    return Err(Error::IndexOutOfRange("box rank mismatch".into()));
                }
                if (0..d).any(|i| dims[i] == 0 || corner[i] + dims[i] > self.dims[i]) {
                    return Err(Error::IndexOutOfRange(format!("box {corner:?}+{dims:?} exceeds {:?}", self.dims)));
                }
                let sub = Cuboid {
                    corner: (0..d).map(|i| self.corner[i] + corner[i]).collect(),
                    dims: dims.clone(),
                };
                Ok(sub.vertices(g))
            }
        }
    }
}

/// A set of vertices, stored as sorted unique flat indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Region {
    vertices: Vec<usize>,
}

impl Region {
    pub fn new(g: &Geometry, mut vertices: Vec<usize>) -> Result<Self> {
        vertices.sort_unstable();
        let before = vertices.len();
        vertices.dedup();
        if vertices.len() != before {
            return Err(Error::Parameter("region contains duplicate vertices".into()));
        }
        if let Some(&v) = vertices.last() {
            if v >= g.volume() {
                return Err(Error::OutOfBounds(vec![v]));
            }
        }
        Ok(Region { vertices })
    }

    pub fn from_coords(g: &Geometry, coords: &[Vec<usize>]) -> Result<Self> {
        let v = coords.iter().map(|x| g.index(x)).collect::<Result<Vec<_>>>()?;
        Self::new(g, v)
    }

    /// Builds a region from arbitrary indices, silently merging duplicates.
    pub fn from_indices(mut vertices: Vec<usize>) -> Self {
        vertices.sort_unstable();
        vertices.dedup();
        Region { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.vertices.iter().copied()
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut v = self.vertices.clone();
        v.extend_from_slice(&other.vertices);
        Region::from_indices(v)
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region { vertices: self.vertices.iter().copied().filter(|&v| !other.contains(v)).collect() }
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.vertices.iter().all(|&v| other.contains(v))
    }

    pub fn mask(&self, volume: usize) -> Vec<bool> {
        let mut m = vec![false; volume];
        for &v in &self.vertices {
            m[v] = true;
        }
        m
    }
}

/// Occupancy field on a geometry. Bit 1 = occupied, 0 = empty.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    geom: Arc<Geometry>,
    words: Vec<u64>,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({}, {} empty)", self.geom.describe(), self.count_empty())
    }
}

impl Configuration {
    pub fn occupied(geom: Arc<Geometry>) -> Self {
        let n = geom.volume();
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if n % 64 != 0 {
            *words.last_mut().unwrap() = (1u64 << (n % 64)) - 1;
        }
        Configuration { geom, words }
    }

    pub fn empty(geom: Arc<Geometry>) -> Self {
        let n = geom.volume();
        Configuration { geom, words: vec![0; n.div_ceil(64)] }
    }

    /// All occupied except the listed vertices.
    pub fn with_empty(geom: Arc<Geometry>, empty: impl IntoIterator<Item = usize>) -> Self {
        let mut c = Self::occupied(geom);
        for v in empty {
            c.set_empty(v);
        }
        c
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn geometry_arc(&self) -> &Arc<Geometry> {
        &self.geom
    }

    pub fn volume(&self) -> usize {
        self.geom.volume()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn is_occupied(&self, v: usize) -> bool {
        (self.words[v >> 6] >> (v & 63)) & 1 == 1
    }

    #[inline]
    pub fn is_empty(&self, v: usize) -> bool {
        !self.is_occupied(v)
    }

    /// Value in {0, 1}.
    #[inline]
    pub fn value(&self, v: usize) -> u8 {
        self.is_occupied(v) as u8
    }

    #[inline]
    pub fn set(&mut self, v: usize, occupied: bool) {
        if occupied {
            self.words[v >> 6] |= 1 << (v & 63);
        } else {
            self.words[v >> 6] &= !(1 << (v & 63));
        }
    }

    #[inline]
    pub fn set_empty(&mut self, v: usize) {
        self.set(v, false);
    }

    #[inline]
    pub fn set_occupied(&mut self, v: usize) {
        self.set(v, true);
    }

    #[inline]
    pub fn flip(&mut self, v: usize) {
        self.words[v >> 6] ^= 1 << (v & 63);
    }

    pub fn count_occupied(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_empty(&self) -> usize {
        self.volume() - self.count_occupied()
    }

    pub fn all_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn empty_vertices(&self) -> Vec<usize> {
        (0..self.volume()).filter(|&v| self.is_empty(v)).collect()
    }

    pub fn region_is_empty(&self, r: &Region) -> bool {
        r.iter().all(|v| self.is_empty(v))
    }

    /// Vertices where `self` and `other` differ.
    pub fn diff(&self, other: &Configuration) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, (a, b)) in self.words.iter().zip(&other.words).enumerate() {
            let mut x = a ^ b;
            while x != 0 {
                let t = x.trailing_zeros() as usize;
                out.push(i * 64 + t);
                x &= x - 1;
            }
        }
        out
    }

    /// Copy of the sub-box `c` as a configuration on a fresh geometry with
    /// the given boundary.
    pub fn restrict(&self, c: &Cuboid, boundary: Boundary) -> Result<Configuration> {
        if !c.fits(&self.geom) {
            return Err(Error::IndexOutOfRange(format!("cuboid {c:?} does not fit")));
        }
        let sub = Arc::new(Geometry::new(c.dims.clone(), boundary)?);
        let mut out = Configuration::occupied(sub.clone());
        let mut x = vec![0; sub.dim()];
        let mut y = vec![0; sub.dim()];
        for v in 0..sub.volume() {
            sub.coords_into(v, &mut x);
            for i in 0..x.len() {
                y[i] = x[i] + c.corner[i];
            }
            out.set(v, self.is_occupied(self.geom.index_unchecked(&y)));
        }
        Ok(out)
    }

    /// Serialise in the grid text format: a header line
    /// `d n_1 .. n_d boundary`, then one line of 0/1 characters per run of
    /// the last coordinate.
    pub fn to_grid_string(&self) -> String {
        let g = &self.geom;
        let mut s = String::new();
        s.push_str(&g.dim().to_string());
        for n in g.dims() {
            s.push(' ');
            s.push_str(&n.to_string());
        }
        s.push(' ');
        s.push_str(&g.boundary().to_string());
        s.push('\n');
        let row = *g.dims().last().unwrap();
        for start in (0..g.volume()).step_by(row) {
            for v in start..start + row {
                s.push(if self.is_occupied(v) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_grid_str(text: &str) -> Result<Configuration> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let perr = |msg: &str| Error::Parse { line: 1, msg: msg.into() };
        let d: usize = toks.first().and_then(|t| t.parse().ok()).ok_or_else(|| perr("bad dimension"))?;
        if toks.len() != d + 2 {
            return Err(perr("header must be 'd n_1 .. n_d boundary'"));
        }
        let dims = toks[1..=d]
            .iter()
            .map(|t| t.parse::<usize>().map_err(|_| perr("bad side length")))
            .collect::<Result<Vec<_>>>()?;
        let boundary: Boundary = toks[d + 1].parse()?;
        let g = Arc::new(Geometry::new(dims, boundary)?);
        let row = *g.dims().last().unwrap();
        let mut cfg = Configuration::occupied(g.clone());
        let mut v = 0;
        for (ln, line) in lines {
            let line = line.trim();
            if line.len() != row {
                return Err(Error::Parse { line: ln + 1, msg: format!("expected {row} cells") });
            }
            if v + row > g.volume() {
                return Err(Error::Parse { line: ln + 1, msg: "too many rows".into() });
            }
            for ch in line.chars() {
                match ch {
                    '0' => cfg.set_empty(v),
                    '1' => {}
                    _ => return Err(Error::Parse { line: ln + 1, msg: format!("bad cell '{ch}'") }),
                }
                v += 1;
            }
        }
        if v != g.volume() {
            return Err(Error::Parse { line: 0, msg: "too few rows".into() });
        }
        Ok(cfg)
    }
}
