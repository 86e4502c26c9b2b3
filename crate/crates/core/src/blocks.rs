//! Block events for the coarse-grained analysis: block sides, the good and
//! super-good events, the map Φ, λ_Φ, block probabilities and the key
//! summability condition.
//!
//! Axis `i` here is direction `e_{i+1}`. For the GG model axis 0 is the long
//! horizontal direction: a column is `{x : x_0 = c}` and a row is
//! `{x : x_1 = r}`.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bootstrap::Closure;
use crate::error::{Error, Result};
use crate::family::{CompiledFamily, Outside, UpdateFamily};
use crate::lattice::{Configuration, Geometry, Region, RegionKind};
use crate::rng::{threshold_configuration, vertex_uniforms};
use crate::stats::ScanEstimate;

#[derive(Clone, Debug, PartialEq)]
pub enum BlockModel {
    /// FA-2f in `d` dimensions.
    Fa2 { d: usize },
    /// FA-kf with `k >= 3`; `ell` is the critical length of FA-(k-1)f in
    /// `d - 1` dimensions, supplied by the caller.
    Fakf { d: usize, k: usize, ell: f64 },
    Gg,
}

impl BlockModel {
    pub fn dim(&self) -> usize {
        match self {
            BlockModel::Fa2 { d } | BlockModel::Fakf { d, .. } => *d,
            BlockModel::Gg => 2,
        }
    }

    pub fn family(&self) -> Result<UpdateFamily> {
        match self {
            BlockModel::Fa2 { d } => UpdateFamily::fa_kf(*d, 2),
            BlockModel::Fakf { d, k, .. } => UpdateFamily::fa_kf(*d, *k),
            BlockModel::Gg => Ok(UpdateFamily::gg()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BlockModel::Fa2 { d } => format!("fa2({d})"),
            BlockModel::Fakf { d, k, .. } => format!("fakf({d},{k})"),
            BlockModel::Gg => "gg".into(),
        }
    }

    /// Smallest admissible tuning constant (exclusive).
    pub fn min_a(&self) -> f64 {
        match self {
            BlockModel::Fa2 { d } => 3.0 / (*d as f64 - 1.0),
            BlockModel::Fakf { d, .. } => 2.0 * *d as f64 - 1.0,
            BlockModel::Gg => 6.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BlockModel::Fa2 { d } if *d < 2 => Err(Error::Parameter("fa2 blocks need d >= 2".into())),
            BlockModel::Fakf { d, k, ell } => {
                if *d < 2 || *k < 2 || k - 1 > 2 * (d - 1) {
                    Err(Error::Parameter(format!("fakf blocks need d >= 2 and 2 <= k <= 2d - 1, got d={d}, k={k}")))
                } else if !(*ell > 1.0) {
                    Err(Error::Parameter(format!("critical length must exceed 1, got {ell}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Block sides from the model's formula, with floors applied.
pub fn block_dims(model: &BlockModel, q: f64, a: f64) -> Result<Vec<usize>> {
    model.validate()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Parameter(format!("q must lie in (0, 1), got {q}")));
    }
    if !(a > model.min_a()) {
        return Err(Error::Parameter(format!("A = {a} must exceed {} for {}", model.min_a(), model.name())));
    }
    let lq = (1.0 / q).ln();
    let dims = match model {
        BlockModel::Fa2 { d } => {
            let n = ((a / q) * lq).powf(1.0 / (*d as f64 - 1.0)).floor() as usize;
            vec![n; *d]
        }
        BlockModel::Fakf { d, ell, .. } => vec![(a * ell * ell.ln()).floor() as usize; *d],
        BlockModel::Gg => vec![(a * lq / (q * q)).floor() as usize, (a * lq / q).floor() as usize],
    };
    if dims.iter().any(|&n| n < 2) {
        return Err(Error::Parameter(format!("block sides {dims:?} below 2: q = {q} is outside the small-q regime")));
    }
    Ok(dims)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub model: BlockModel,
    pub dims: Vec<usize>,
    pub q: f64,
    pub a: f64,
}

impl BlockSpec {
    /// Sides from the model formula.
    pub fn from_formula(model: BlockModel, q: f64, a: f64) -> Result<Self> {
        let dims = block_dims(&model, q, a)?;
        Ok(BlockSpec { model, dims, q, a })
    }

    /// Explicit sides, for small test blocks; `A` is not checked.
    pub fn with_dims(model: BlockModel, dims: Vec<usize>, q: f64) -> Result<Self> {
        model.validate()?;
        if dims.len() != model.dim() || dims.iter().any(|&n| n < 2) {
            return Err(Error::Parameter(format!("block sides {dims:?} invalid for {}", model.name())));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Parameter(format!("q must lie in [0, 1], got {q}")));
        }
        Ok(BlockSpec { model, dims, q, a: f64::NAN })
    }

    pub fn geometry(&self) -> Result<Arc<Geometry>> {
        Ok(Arc::new(Geometry::free(&self.dims)?))
    }

    pub fn volume(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Classification {
    Neither,
    Good,
    Supergood,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Neither => "neither",
            Classification::Good => "good",
            Classification::Supergood => "supergood",
        })
    }
}

/// Sites emptied by Φ: the edges through the corner (fa2), the first slice
/// in every direction (fakf), or the first two columns (gg).
pub fn zero_set(model: &BlockModel, g: &Geometry) -> Result<Region> {
    let mut r = Region::default();
    match model {
        BlockModel::Fa2 { d } => {
            for i in 0..*d {
                r = r.union(&g.region(&RegionKind::Edge { axis: i })?);
            }
        }
        BlockModel::Fakf { d, .. } => {
            for i in 0..*d {
                r = r.union(&g.region(&RegionKind::Slice { axis: i, index: 0 })?);
            }
        }
        BlockModel::Gg => {
            for c in 0..2 {
                r = r.union(&g.region(&RegionKind::Slice { axis: 0, index: c })?);
            }
        }
    }
    Ok(r)
}

/// Classifier with the per-model tables precomputed for one block shape.
pub struct BlockClassifier {
    model: BlockModel,
    geom: Arc<Geometry>,
    zero: Region,
    /// Per axis: slices as vertex lists, plus (fakf) the slice geometry and
    /// compiled lower-dimensional family.
    slices: Vec<Vec<Vec<usize>>>,
    slice_families: Vec<Option<(Arc<Geometry>, CompiledFamily)>>,
}

impl BlockClassifier {
    pub fn new(model: &BlockModel, dims: &[usize]) -> Result<Self> {
        model.validate()?;
        if dims.len() != model.dim() {
            return Err(Error::Parameter("block rank does not match the model".into()));
        }
        let geom = Arc::new(Geometry::free(dims)?);
        let d = dims.len();
        let mut slices = Vec::with_capacity(d);
        let mut slice_families = Vec::with_capacity(d);
        for axis in 0..d {
            let mut per = Vec::with_capacity(dims[axis]);
            for j in 0..dims[axis] {
                per.push(geom.region(&RegionKind::Slice { axis, index: j })?.vertices().to_vec());
            }
            slices.push(per);
            if let BlockModel::Fakf { d, k, .. } = model {
                let sdims: Vec<usize> = (0..*d).filter(|&a| a != axis).map(|a| dims[a]).collect();
                let sg = Arc::new(Geometry::free(&sdims)?);
                let fam = UpdateFamily::fa_kf(d - 1, k - 1)?;
                let comp = CompiledFamily::new(&sg, &fam, Outside::Occupied)?;
                slice_families.push(Some((sg, comp)));
            } else {
                slice_families.push(None);
            }
        }
        let zero = zero_set(model, &geom)?;
        Ok(BlockClassifier { model: model.clone(), geom, zero, slices, slice_families })
    }

    pub fn geometry(&self) -> &Arc<Geometry> {
        &self.geom
    }

    pub fn zero_set(&self) -> &Region {
        &self.zero
    }

    fn slice_spanned(&self, cfg: &Configuration, axis: usize, j: usize) -> bool {
        let (sg, comp) = self.slice_families[axis].as_ref().unwrap();
        // Slice vertices are listed in row-major order of the block, which is
        // also row-major order of the projected slice.
        let verts = &self.slices[axis][j];
        let mut sub = Configuration::occupied(sg.clone());
        for (t, &v) in verts.iter().enumerate() {
            if cfg.is_empty(v) {
                sub.set_empty(t);
            }
        }
        Closure::new(sub, comp, None).all_empty()
    }

    pub fn is_good(&self, cfg: &Configuration) -> bool {
        let has_empty = |vs: &[usize]| vs.iter().any(|&v| cfg.is_empty(v));
        match &self.model {
            BlockModel::Fa2 { .. } => self.slices.iter().all(|per| per.iter().all(|s| has_empty(s))),
            BlockModel::Fakf { .. } => {
                (0..self.slices.len()).all(|axis| (0..self.slices[axis].len()).all(|j| self.slice_spanned(cfg, axis, j)))
            }
            BlockModel::Gg => {
                let (n1, n2) = (self.geom.dims()[0], self.geom.dims()[1]);
                let columns_ok = self.slices[0].iter().all(|c| has_empty(c));
                columns_ok
                    && (0..n2).all(|r| {
                        (0..n1 - 1).any(|c| {
                            cfg.is_empty(self.geom.index_unchecked(&[c, r]))
                                && cfg.is_empty(self.geom.index_unchecked(&[c + 1, r]))
                        })
                    })
            }
        }
    }

    pub fn classify(&self, cfg: &Configuration) -> Classification {
        if !self.is_good(cfg) {
            Classification::Neither
        } else if cfg.region_is_empty(&self.zero) {
            Classification::Supergood
        } else {
            Classification::Good
        }
    }

    pub fn phi(&self, cfg: &Configuration) -> Result<Configuration> {
        if !self.is_good(cfg) {
            return Err(Error::Precondition("Φ is only defined on good blocks".into()));
        }
        let mut out = cfg.clone();
        for v in self.zero.iter() {
            out.set_empty(v);
        }
        Ok(out)
    }
}

fn check_shape(cfg: &Configuration, spec: &BlockSpec) -> Result<()> {
    if cfg.geometry().dims() != spec.dims.as_slice() {
        return Err(Error::Parameter(format!(
            "block configuration has sides {:?}, spec expects {:?}",
            cfg.geometry().dims(),
            spec.dims
        )));
    }
    Ok(())
}

pub fn classify_block(cfg: &Configuration, spec: &BlockSpec) -> Result<Classification> {
    check_shape(cfg, spec)?;
    Ok(BlockClassifier::new(&spec.model, &spec.dims)?.classify(cfg))
}

pub fn phi_map(cfg: &Configuration, spec: &BlockSpec) -> Result<Configuration> {
    check_shape(cfg, spec)?;
    BlockClassifier::new(&spec.model, &spec.dims)?.phi(cfg)
}

/// Exact λ_Φ for an arbitrary triple on `n_sites <= 20` sites. States are
/// bit masks with bit set meaning occupied; `μ̂` is Bernoulli with
/// `P(empty) = q`.
pub fn lambda_phi_generic(
    n_sites: usize,
    q: f64,
    g1: impl Fn(u32) -> bool + Sync,
    g2: impl Fn(u32) -> bool + Sync,
    phi: impl Fn(u32) -> u32 + Sync,
) -> Result<f64> {
    if n_sites > 20 {
        return Err(Error::Capacity(format!("{n_sites} sites exceeds the enumeration cap")));
    }
    let p = 1.0 - q;
    let lr = (p / q).ln();
    let mut sums: HashMap<u32, f64> = HashMap::new();
    for s in 0..(1u32 << n_sites) {
        if !g1(s) {
            continue;
        }
        let t = phi(s);
        let delta = s.count_ones() as f64 - t.count_ones() as f64;
        *sums.entry(t).or_insert(0.0) += (delta * lr).exp();
    }
    let mut best = 0.0f64;
    for (t, v) in sums {
        if !g2(t) {
            return Err(Error::Precondition("Φ maps a good configuration outside G2".into()));
        }
        best = best.max(v);
    }
    Ok(best)
}

fn mask_config(geom: &Arc<Geometry>, s: u32) -> Configuration {
    let mut c = Configuration::occupied(geom.clone());
    for v in 0..geom.volume() {
        if s >> v & 1 == 0 {
            c.set_empty(v);
        }
    }
    c
}


#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaPhi {
    Exact(f64),
    /// The model's analytic bound, as a natural logarithm (the value itself
    /// overflows for realistic blocks).
    LnBound(f64),
}

impl LambdaPhi {
    pub fn value(&self) -> f64 {
        match self {
            LambdaPhi::Exact(v) => *v,
            LambdaPhi::LnBound(l) => l.exp(),
        }
    }

    pub fn ln_value(&self) -> f64 {
        match self {
            LambdaPhi::Exact(v) => v.ln(),
            LambdaPhi::LnBound(l) => *l,
        }
    }
}

/// Number of sites in the exponent of the model's λ_Φ bound `(2/q)^m`:
/// `Σ n_i` for fa2, `Σ_i Π_{j≠i} n_j` for fakf, `2 n_2` for gg.
pub fn lambda_bound_exponent(model: &BlockModel, dims: &[usize]) -> f64 {
    match model {
        BlockModel::Fa2 { .. } => dims.iter().sum::<usize>() as f64,
        BlockModel::Fakf { .. } => {
            let vol: usize = dims.iter().product();
            dims.iter().map(|n| vol / n).sum::<usize>() as f64
        }
        BlockModel::Gg => 2.0 * dims[1] as f64,
    }
}

pub fn lambda_phi_ln_bound(spec: &BlockSpec) -> f64 {
    lambda_bound_exponent(&spec.model, &spec.dims) * (2.0 / spec.q).ln()
}

pub const LAMBDA_EXACT_CAP: usize = 16;

/// Exact λ_Φ on blocks of at most 16 sites, otherwise the analytic bound.
pub fn lambda_phi(spec: &BlockSpec) -> Result<LambdaPhi> {
    if spec.volume() > LAMBDA_EXACT_CAP {
        return Ok(LambdaPhi::LnBound(lambda_phi_ln_bound(spec)));
    }
    lambda_phi_exact(spec).map(LambdaPhi::Exact)
}

pub fn lambda_phi_exact(spec: &BlockSpec) -> Result<f64> {
    if spec.volume() > LAMBDA_EXACT_CAP {
        return Err(Error::Capacity(format!("exact λ_Φ needs at most {LAMBDA_EXACT_CAP} sites")));
    }
    let cl = BlockClassifier::new(&spec.model, &spec.dims)?;
    let geom = cl.geometry().clone();
    let zero_mask: u32 = cl.zero_set().iter().fold(0, |m, v| m | 1 << v);
    lambda_phi_generic(
        spec.volume(),
        spec.q,
        |s| cl.is_good(&mask_config(&geom, s)),
        |s| cl.classify(&mask_config(&geom, s)) == Classification::Supergood,
        |s| s & !zero_mask,
    )
}

/// Exact `(p1, p2)` by enumerating all `2^|V|` configurations.
pub fn exact_block_probs(spec: &BlockSpec) -> Result<(f64, f64)> {
    let n = spec.volume();
    if n > 20 {
        return Err(Error::Capacity(format!("{n} sites exceeds the enumeration cap of 20")));
    }
    let cl = BlockClassifier::new(&spec.model, &spec.dims)?;
    let geom = cl.geometry().clone();
    let (q, p) = (spec.q, 1.0 - spec.q);
    let (p1, p2) = (0..(1u32 << n))
        .into_par_iter()
        .map(|s| {
            let occ = s.count_ones() as i32;
            let w = p.powi(occ) * q.powi(n as i32 - occ);
            match cl.classify(&mask_config(&geom, s)) {
                Classification::Neither => (0.0, 0.0),
                Classification::Good => (w, 0.0),
                Classification::Supergood => (w, w),
            }
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((p1, p2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum P2Mode {
    Exact,
    LowerBound,
}

impl std::fmt::Display for P2Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            P2Mode::Exact => "exact",
            P2Mode::LowerBound => "lower_bound",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BlockProbs {
    pub p1: ScanEstimate,
    /// Monte Carlo estimate of p2 from the same samples.
    pub p2_mc: ScanEstimate,
    /// p2 used in the condition: exact on small blocks, else the analytic
    /// lower bound.
    pub p2: f64,
    pub p2_mode: P2Mode,
    /// `(1 - p̂1) ln(1/p2)^2`.
    pub condition_value: f64,
    /// Set when no sample was good.
    pub p1_zero: bool,
}

pub const EXACT_P2_CAP: usize = 20;

/// Analytic lower bound on p2: `q^{Σ n_i}` (fa2), and by Harris'
/// inequality `p1 q^{Σ_i Π_{j≠i} n_j}` (fakf) or `p1 q^{2 n_2}` (gg).
pub fn p2_lower_bound(spec: &BlockSpec, p1: f64) -> f64 {
    let m = lambda_bound_exponent(&spec.model, &spec.dims);
    match spec.model {
        BlockModel::Fa2 { .. } => spec.q.powf(m),
        _ => p1 * spec.q.powf(m),
    }
}

/// Monte Carlo p̂1 (and p̂2), with p2 taken exactly on blocks of at most 20
/// sites and from [`p2_lower_bound`] otherwise.
pub fn estimate_block_probs(spec: &BlockSpec, replicas: u64, seed: u64) -> Result<BlockProbs> {
    if replicas == 0 {
        return Err(Error::Parameter("replicas must be at least 1".into()));
    }
    let cl = BlockClassifier::new(&spec.model, &spec.dims)?;
    let geom = cl.geometry().clone();
    let (g, sg) = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let cfg = threshold_configuration(geom.clone(), &vertex_uniforms(&geom, seed, r), spec.q);
            match cl.classify(&cfg) {
                Classification::Neither => (0u64, 0u64),
                Classification::Good => (1, 0),
                Classification::Supergood => (1, 1),
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let p1 = ScanEstimate::binomial(g, replicas, seed);
    let p2_mc = ScanEstimate::binomial(sg, replicas, seed);
    let (p2, p2_mode) = if spec.volume() <= EXACT_P2_CAP {
        (exact_block_probs(spec)?.1, P2Mode::Exact)
    } else {
        (p2_lower_bound(spec, p1.value), P2Mode::LowerBound)
    };
    let l = if p2 > 0.0 { (1.0 / p2).ln() } else { f64::INFINITY };
    let condition_value = if p1.value == 1.0 { 0.0 } else { (1.0 - p1.value) * l * l };
    Ok(BlockProbs { p1, p2_mc, p2, p2_mode, condition_value, p1_zero: g == 0 })
}

/// `d n (1-q)^{n^{d-1}}` for a cubic fa2 block: the union bound on `1 - p1`.
pub fn fa2_failure_bound(d: usize, n: usize, q: f64) -> f64 {
    (d * n) as f64 * (1.0 - q).powf((n as f64).powi(d as i32 - 1))
}

/// One index set `I` in the summability condition: its weight `λ_I`, the
/// failure probability `ε^{(I)}` and the number of `x` with
/// `z ∈ {x} ∪ Δ_x^{(I)}` (translation invariance makes this `|{0} ∪ Δ_0|`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionTerm {
    pub lambda: f64,
    pub epsilon: f64,
    pub overlap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyCondition {
    /// `Σ_I λ_I`.
    pub weight_sum: f64,
    /// `sup_z Σ_I Σ_{x: z ∈ x ∪ Δ_x} ε_x^{(I)} / λ_I`.
    pub sup_sum: f64,
    /// `weight_sum * sup_sum`; the variance bound holds when this is at
    /// most 1/4.
    pub value: f64,
    /// `2 * weight_sum * sup_sum`, the stricter form with the leading 2.
    pub strict_value: f64,
}

pub fn key_condition_value(terms: &[ConditionTerm]) -> Result<KeyCondition> {
    if terms.iter().any(|t| !(t.lambda > 0.0)) {
        return Err(Error::Parameter("weights must be positive".into()));
    }
    let weight_sum: f64 = terms.iter().map(|t| t.lambda).sum();
    let sup_sum: f64 = terms.iter().map(|t| t.epsilon * t.overlap / t.lambda).sum();
    let value = weight_sum * sup_sum;
    Ok(KeyCondition { weight_sum, sup_sum, value, strict_value: 2.0 * value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_from_rows(dims: &[usize], empties: &[(usize, usize)]) -> Configuration {
        let g = Arc::new(Geometry::free(dims).unwrap());
        Configuration::with_empty(g.clone(), empties.iter().map(|&(a, b)| g.index(&[a, b]).unwrap()))
    }

    #[test]
    fn formula_dims() {
        assert_eq!(block_dims(&BlockModel::Fa2 { d: 2 }, 0.1, 3.5).unwrap(), vec![80, 80]);
        let l4 = 4f64.ln();
        assert_eq!(
            block_dims(&BlockModel::Gg, 0.25, 7.0).unwrap(),
            vec![(7.0 * l4 / 0.0625).floor() as usize, (7.0 * l4 / 0.25).floor() as usize]
        );
        assert!(block_dims(&BlockModel::Fa2 { d: 2 }, 0.99, 3.5).is_err());
        assert!(block_dims(&BlockModel::Fa2 { d: 2 }, 0.1, 2.0).is_err());
        assert!(block_dims(&BlockModel::Gg, 0.1, 6.0).is_err());
        assert_eq!(block_dims(&BlockModel::Fakf { d: 3, k: 3, ell: 10.0 }, 0.1, 5.5).unwrap(), vec![126; 3]);
    }

    #[test]
    fn extremes_classify() {
        for (model, dims) in [
            (BlockModel::Fa2 { d: 2 }, vec![4, 4]),
            (BlockModel::Fa2 { d: 3 }, vec![3, 3, 3]),
            (BlockModel::Fakf { d: 3, k: 3, ell: 2.0 }, vec![3, 3, 3]),
            (BlockModel::Gg, vec![6, 4]),
        ] {
            let spec = BlockSpec::with_dims(model, dims, 0.3).unwrap();
            let g = spec.geometry().unwrap();
            assert_eq!(classify_block(&Configuration::empty(g.clone()), &spec).unwrap(), Classification::Supergood);
            assert_eq!(classify_block(&Configuration::occupied(g), &spec).unwrap(), Classification::Neither);
        }
    }

    #[test]
    fn gg_good_not_supergood() {
        let spec = BlockSpec::with_dims(BlockModel::Gg, vec![5, 3], 0.3).unwrap();
        let mut e = Vec::new();
        for r in 0..3 {
            e.push((2, r));
            e.push((3, r));
        }
        e.push((0, 1));
        e.push((1, 2));
        e.push((4, 0));
        let c = cfg_from_rows(&[5, 3], &e);
        assert_eq!(classify_block(&c, &spec).unwrap(), Classification::Good);
        let phi = phi_map(&c, &spec).unwrap();
        assert_eq!(classify_block(&phi, &spec).unwrap(), Classification::Supergood);
        assert_eq!(phi_map(&phi, &spec).unwrap(), phi);
        let diff = c.diff(&phi);
        assert_eq!(diff.len(), 4);
    }

    #[test]
    fn phi_rejects_bad_blocks() {
        let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![3, 3], 0.3).unwrap();
        let g = spec.geometry().unwrap();
        assert!(phi_map(&Configuration::occupied(g), &spec).is_err());
    }

    #[test]
    fn lambda_exact_small_fa2() {
        let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![2, 2], 0.5).unwrap();
        let exact = lambda_phi_exact(&spec).unwrap();
        assert!(exact >= 1.0);
        assert!(exact.ln() <= lambda_phi_ln_bound(&spec));
        let id = lambda_phi_generic(3, 0.3, |_| true, |_| true, |s| s).unwrap();
        assert!((id - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fa2_probabilities_enumerated() {
        let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![3, 3], 0.4).unwrap();
        let (p1, p2) = exact_block_probs(&spec).unwrap();
        assert!((p2 - 0.4f64.powi(5)).abs() < 1e-12);
        let est = estimate_block_probs(&spec, 20000, 3).unwrap();
        assert!(est.p1.contains(p1), "{:?} {p1}", est.p1);
        assert!(est.p2_mc.contains(p2));
        assert_eq!(est.p2_mode, P2Mode::Exact);
        assert!(est.p2_mc.value <= est.p1.value);
    }

    #[test]
    fn certain_blocks() {
        let spec = BlockSpec::with_dims(BlockModel::Gg, vec![6, 4], 1.0).unwrap();
        let e = estimate_block_probs(&spec, 50, 1).unwrap();
        assert_eq!(e.p1.value, 1.0);
        assert_eq!(e.p2, 1.0);
        assert_eq!(e.condition_value, 0.0);
    }

    #[test]
    fn key_condition_single_constraint() {
        let k = key_condition_value(&[ConditionTerm { lambda: 1.0, epsilon: 0.01, overlap: 5.0 }]).unwrap();
        assert!((k.value - 0.05).abs() < 1e-15);
        assert_eq!(k.strict_value, 2.0 * k.value);
        let z = key_condition_value(&[ConditionTerm { lambda: 0.3, epsilon: 0.0, overlap: 3.0 }]).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(key_condition_value(&[ConditionTerm { lambda: 0.0, epsilon: 0.0, overlap: 1.0 }]).is_err());
    }
}
