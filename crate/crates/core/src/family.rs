//! Update families and constraint evaluation.
//!
//! A family is a list of rules, each a finite set of nonzero offsets. The
//! constraint at `x` holds when some rule translated by `x` lands entirely on
//! empty vertices. [`CompiledFamily`] resolves every offset of every vertex
//! once so repeated evaluation is a table lookup.

use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, Geometry};

pub type Offset = Vec<i64>;
pub type Rule = Vec<Offset>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FamilySpec {
    FaKf { d: usize, k: usize },
    Gg,
    East { d: usize },
    NorthEast,
    Unconstrained { d: usize },
    Custom { d: usize, rules: Vec<Rule> },
}

/// How a rule is evaluated when one of its offsets leaves a free box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Outside {
    /// The rule is not satisfied.
    #[default]
    Occupied,
    /// Out-of-box vertices count as empty.
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateFamily {
    name: String,
    dim: usize,
    rules: Vec<Rule>,
}

fn unit(d: usize, i: usize, s: i64) -> Offset {
    let mut v = vec![0; d];
    v[i] = s;
    v
}

fn subsets<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in subsets(&items[i + 1..], k - 1) {
            rest.insert(0, items[i].clone());
            out.push(rest);
        }
    }
    out
}

impl UpdateFamily {
    pub fn make(spec: &FamilySpec) -> Result<Self> {
        match spec {
            FamilySpec::FaKf { d, k } => Self::fa_kf(*d, *k),
            FamilySpec::Gg => Ok(Self::gg()),
            FamilySpec::East { d } => Self::east(*d),
            FamilySpec::NorthEast => Ok(Self::north_east()),
            FamilySpec::Unconstrained { d } => Self::unconstrained(*d),
            FamilySpec::Custom { d, rules } => Self::custom(*d, rules.clone()),
        }
    }

    /// Fredrickson-Andersen k-facilitated: all k-subsets of the 2d nearest
    /// neighbours.
    pub fn fa_kf(d: usize, k: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Family("dimension must be at least 1".into()));
        }
        if k == 0 || k > 2 * d {
            return Err(Error::Family(format!("fa_kf needs 1 <= k <= 2d, got d={d}, k={k}")));
        }
        let nn: Vec<Offset> = (0..d).flat_map(|i| [unit(d, i, 1), unit(d, i, -1)]).collect();
        Ok(UpdateFamily { name: format!("fa_kf({d},{k})"), dim: d, rules: subsets(&nn, k) })
    }

    /// Gravner-Griffeath: 3-subsets of {±e1, ±e2, ±2e1}.
    pub fn gg() -> Self {
        let base = vec![vec![1, 0], vec![-1, 0], vec![0, 1], vec![0, -1], vec![2, 0], vec![-2, 0]];
        UpdateFamily { name: "gg".into(), dim: 2, rules: subsets(&base, 3) }
    }

    /// East model: singleton rules {-e_i}.
    pub fn east(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Family("dimension must be at least 1".into()));
        }
        Ok(UpdateFamily { name: format!("east({d})"), dim: d, rules: (0..d).map(|i| vec![unit(d, i, -1)]).collect() })
    }

    pub fn north_east() -> Self {
        UpdateFamily { name: "north_east".into(), dim: 2, rules: vec![vec![vec![0, 1], vec![1, 0]]] }
    }

    /// One empty rule: the constraint always holds.
    pub fn unconstrained(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Family("dimension must be at least 1".into()));
        }
        Ok(UpdateFamily { name: format!("unconstrained({d})"), dim: d, rules: vec![vec![]] })
    }

    pub fn custom(d: usize, rules: Vec<Rule>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Family("dimension must be at least 1".into()));
        }
        if rules.is_empty() {
            return Err(Error::Family("a family needs at least one rule".into()));
        }
        let unconstrained = rules.len() == 1 && rules[0].is_empty();
        for r in &rules {
            if r.is_empty() && !unconstrained {
                return Err(Error::Family("empty rules are only allowed as the single unconstrained rule".into()));
            }
            for o in r {
                if o.len() != d {
                    return Err(Error::Family(format!("offset {o:?} does not have dimension {d}")));
                }
                if o.iter().all(|&c| c == 0) {
                    return Err(Error::Family("rules may not contain the zero offset".into()));
                }
            }
            let mut s = r.clone();
            s.sort();
            s.dedup();
            if s.len() != r.len() {
                return Err(Error::Family(format!("rule {r:?} repeats an offset")));
            }
        }
        Ok(UpdateFamily { name: "custom".into(), dim: d, rules })
    }

    /// Parses one rule per line, offsets as `(a,b);(c,d)`; `{}` is the empty
    /// rule and `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut dim = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: ln + 1, msg };
            if line == "{}" {
                rules.push(Vec::new());
                continue;
            }
            let mut rule = Vec::new();
            for tok in line.split(';') {
                let t = tok.trim();
                let inner = t
                    .strip_prefix('(')
                    .and_then(|s| s.strip_suffix(')'))
                    .ok_or_else(|| perr(format!("expected '(..)', got '{t}'")))?;
                let off = inner
                    .split(',')
                    .map(|c| c.trim().parse::<i64>().map_err(|_| perr(format!("bad integer in '{t}'"))))
                    .collect::<Result<Vec<_>>>()?;
                match dim {
                    None => dim = Some(off.len()),
                    Some(d) if d != off.len() => return Err(perr(format!("offset '{t}' has wrong dimension"))),
                    _ => {}
                }
                rule.push(off);
            }
            rules.push(rule);
        }
        let d = dim.unwrap_or(1);
        Self::custom(d, rules)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rules {
            if r.is_empty() {
                s.push_str("{}");
            } else {
                let parts: Vec<String> = r
                    .iter()
                    .map(|o| format!("({})", o.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")))
                    .collect();
                s.push_str(&parts.join(";"));
            }
            s.push('\n');
        }
        s
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_unconstrained(&self) -> bool {
        self.rules.iter().any(|r| r.is_empty())
    }

    /// Distinct offsets used by any rule (the constraint support minus x).
    pub fn support(&self) -> Vec<Offset> {
        let mut s: Vec<Offset> = self.rules.iter().flatten().cloned().collect();
        s.sort();
        s.dedup();
        s
    }
}

impl fmt::Display for UpdateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn check_dim(cfg: &Configuration, fam: &UpdateFamily) {
    assert_eq!(cfg.geometry().dim(), fam.dim(), "family dimension does not match geometry");
}

/// c_x(ω): some translated rule lies entirely on empty vertices.
pub fn constraint_satisfied(cfg: &Configuration, fam: &UpdateFamily, x: usize, outside: Outside) -> bool {
    check_dim(cfg, fam);
    let g = cfg.geometry();
    fam.rules.iter().any(|r| {
        r.iter().all(|o| match g.shift(x, o) {
            Some(y) => cfg.is_empty(y),
            None => outside == Outside::Empty,
        })
    })
}

/// True iff every offset of every rule has positive inner product with `z`.
pub fn check_exterior_condition(fam: &UpdateFamily, z: &[i64]) -> bool {
    fam.rules.iter().flatten().all(|o| o.iter().zip(z).map(|(a, b)| a * b).sum::<i64>() > 0)
}

pub const NONE: u32 = u32::MAX;

/// Per-vertex offset tables for a family on a fixed geometry.
#[derive(Clone, Debug)]
pub struct CompiledFamily {
    volume: usize,
    n_off: usize,
    /// `fwd[x * n_off + o]` is `x + offset_o`, or `NONE` outside the box.
    fwd: Vec<u32>,
    /// `rev[y * n_off + o]` is `y - offset_o`, or `NONE`.
    rev: Vec<u32>,
    rules: Vec<Vec<u8>>,
    /// For each offset, the rules containing it.
    rules_of: Vec<Vec<u16>>,
    outside: Outside,
}

impl CompiledFamily {
    pub fn new(g: &Geometry, fam: &UpdateFamily, outside: Outside) -> Result<Self> {
        if g.dim() != fam.dim() {
            return Err(Error::Family(format!("family {} has dimension {}, geometry {}", fam, fam.dim(), g.dim())));
        }
        let offs = fam.support();
        if offs.len() > u8::MAX as usize || fam.rules.len() > u16::MAX as usize {
            return Err(Error::Family("family too large to compile".into()));
        }
        let n_off = offs.len();
        let rules: Vec<Vec<u8>> = fam
            .rules
            .iter()
            .map(|r| r.iter().map(|o| offs.binary_search(o).unwrap() as u8).collect())
            .collect();
        let mut rules_of = vec![Vec::new(); n_off];
        for (ri, r) in rules.iter().enumerate() {
            for &o in r {
                rules_of[o as usize].push(ri as u16);
            }
        }
        let n = g.volume();
        let mut fwd = vec![NONE; n * n_off];
        let mut rev = vec![NONE; n * n_off];
        let negs: Vec<Offset> = offs.iter().map(|o| o.iter().map(|c| -c).collect()).collect();
        for x in 0..n {
            for o in 0..n_off {
                if let Some(y) = g.shift(x, &offs[o]) {
                    fwd[x * n_off + o] = y as u32;
                }
                if let Some(w) = g.shift(x, &negs[o]) {
                    rev[x * n_off + o] = w as u32;
                }
            }
        }
        Ok(CompiledFamily { volume: n, n_off, fwd, rev, rules, rules_of, outside })
    }

    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn outside(&self) -> Outside {
        self.outside
    }

    pub fn n_offsets(&self) -> usize {
        self.n_off
    }

    pub fn rules(&self) -> &[Vec<u8>] {
        &self.rules
    }

    pub fn rules_of(&self, o: usize) -> &[u16] {
        &self.rules_of[o]
    }

    #[inline]
    pub fn target(&self, x: usize, o: usize) -> u32 {
        self.fwd[x * self.n_off + o]
    }

    #[inline]
    pub fn source(&self, y: usize, o: usize) -> u32 {
        self.rev[y * self.n_off + o]
    }

    #[inline]
    pub fn rule_satisfied(&self, cfg: &Configuration, x: usize, r: usize) -> bool {
        self.rules[r].iter().all(|&o| {
            let y = self.fwd[x * self.n_off + o as usize];
            if y == NONE {
                self.outside == Outside::Empty
            } else {
                cfg.is_empty(y as usize)
            }
        })
    }

    #[inline]
    pub fn satisfied(&self, cfg: &Configuration, x: usize) -> bool {
        (0..self.rules.len()).any(|r| self.rule_satisfied(cfg, x, r))
    }

    /// Vertices whose constraint may change when `y` changes.
    pub fn dependents(&self, y: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_off).filter_map(move |o| {
            let w = self.rev[y * self.n_off + o];
            (w != NONE).then_some(w as usize)
        })
    }

    /// True if some offset of `x` resolves to `x` itself (tiny tori).
    pub fn self_referential(&self) -> bool {
        (0..self.volume).any(|x| (0..self.n_off).any(|o| self.fwd[x * self.n_off + o] == x as u32))
    }
}
