//! Exact generator of the finite-volume dynamics on the irreducible class of
//! the all-empty configuration, relaxation time, Dirichlet form and
//! Poincaré ratios.
//!
//! Finite constrained systems are reducible (the all-occupied state is
//! frozen for any nontrivial family), so every quantity here refers to the
//! class reachable from the all-empty configuration by legal flips, with the
//! product measure conditioned on that class.
//!
//! States are bit masks over at most 24 sites; bit `x` set means site `x` is
//! occupied. The generator is reversible, so `S = D^{1/2} (-L) D^{-1/2}`
//! with `D = diag(μ)` is symmetric: its off-diagonal entries are all
//! `-sqrt(pq)` on legal flips. The gap is found by Lanczos with full
//! reorthogonalisation on the complement of `sqrt(μ)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{CompiledFamily, Outside, UpdateFamily, NONE};
use crate::lattice::Geometry;

pub const MAX_SITES: usize = 24;
/// Largest class handled by the dense oracle.
pub const MAX_DENSE_STATES: usize = 1 << 12;

#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    n_sites: usize,
    q: f64,
    /// For each site, the masks of sites that must be empty, one per rule.
    site_rules: Vec<Vec<u32>>,
    states: Vec<u32>,
    /// `lookup[s]` is the class index of state `s`, or `u32::MAX`.
    lookup: Vec<u32>,
    mu: Vec<f64>,
}

fn compile_masks(g: &Geometry, fam: &UpdateFamily, outside: Outside) -> Result<Vec<Vec<u32>>> {
    let comp = CompiledFamily::new(g, fam, outside)?;
    let n = g.volume();
    let mut out = Vec::with_capacity(n);
    for x in 0..n {
        let mut masks = Vec::new();
        'rules: for rule in comp.rules() {
            let mut m = 0u32;
            for &o in rule {
                let y = comp.target(x, o as usize);
                if y == NONE {
                    match outside {
                        Outside::Occupied => continue 'rules,
                        Outside::Empty => continue,
                    }
                }
                if y as usize == x {
                    return Err(Error::Family(format!(
                        "constraint at site {x} depends on the site itself; the geometry is too small for {fam}"
                    )));
                }
                m |= 1 << y;
            }
            masks.push(m);
        }
        masks.sort_unstable();
        masks.dedup();
        out.push(masks);
    }
    Ok(out)
}

impl GeneratorMatrix {
    /// Enumerates the class of the all-empty configuration by breadth-first
    /// search over legal flips.
    pub fn build(g: &Geometry, fam: &UpdateFamily, q: f64, outside: Outside) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Parameter(format!("q must lie in (0, 1), got {q}")));
        }
        let n = g.volume();
        if n > MAX_SITES {
            return Err(Error::Capacity(format!("{n} sites exceeds the cap of {MAX_SITES}")));
        }
        let site_rules = compile_masks(g, fam, outside)?;
        let total = 1usize << n;
        let mut lookup = vec![u32::MAX; total];
        let mut queue = vec![0u32];
        lookup[0] = 0;
        let mut head = 0;
        while head < queue.len() {
            let s = queue[head];
            head += 1;
            for (x, rules) in site_rules.iter().enumerate() {
                if rules.iter().any(|&m| m & s == 0) {
                    let t = s ^ (1 << x);
                    if lookup[t as usize] == u32::MAX {
                        lookup[t as usize] = 0;
                        queue.push(t);
                    }
                }
            }
        }
        let mut states = queue;
        states.sort_unstable();
        for (i, &s) in states.iter().enumerate() {
            lookup[s as usize] = i as u32;
        }
        let (lq, lp) = (q.ln(), (1.0 - q).ln());
        let logw: Vec<f64> = states
            .iter()
            .map(|&s| {
                let occ = s.count_ones() as f64;
                occ * lp + (n as f64 - occ) * lq
            })
            .collect();
        let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logw.iter().map(|l| (l - mx).exp()).sum();
        let mu = logw.iter().map(|l| (l - mx).exp() / z).collect();
        Ok(GeneratorMatrix { n_sites: n, q, site_rules, states, lookup, mu })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        1.0 - self.q
    }

    pub fn class_size(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn measure(&self) -> &[f64] {
        &self.mu
    }

    pub fn index_of(&self, state: u32) -> Option<usize> {
        let i = *self.lookup.get(state as usize)?;
        (i != u32::MAX).then_some(i as usize)
    }

    /// c_x evaluated on a state mask.
    #[inline]
    pub fn constraint(&self, state: u32, x: usize) -> bool {
        self.site_rules[x].iter().any(|&m| m & state == 0)
    }

    /// Off-diagonal entries of row `i`: `(j, site, rate)`.
    pub fn transitions(&self, i: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let s = self.states[i];
        (0..self.n_sites).filter(move |&x| self.constraint(s, x)).map(move |x| {
            let t = s ^ (1 << x);
            let rate = if s >> x & 1 == 1 { self.q } else { 1.0 - self.q };
            (self.lookup[t as usize] as usize, x, rate)
        })
    }

    /// `(-L f)(i) = Σ_j rate(i -> j) (f_i - f_j)`.
    pub fn apply_neg_generator(&self, f: &[f64]) -> Vec<f64> {
        (0..self.class_size())
            .into_par_iter()
            .map(|i| self.transitions(i).map(|(j, _, r)| r * (f[i] - f[j])).sum())
            .collect()
    }

    /// Largest `|μ_i r_ij - μ_j r_ji|` over all transitions.
    pub fn reversibility_error(&self) -> f64 {
        (0..self.class_size())
            .into_par_iter()
            .map(|i| {
                let s = self.states[i];
                self.transitions(i)
                    .map(|(j, x, r)| {
                        let back = if self.states[j] >> x & 1 == 1 { self.q } else { 1.0 - self.q };
                        debug_assert_eq!(self.states[j] ^ (1 << x), s);
                        (self.mu[i] * r - self.mu[j] * back).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Dense `-L` (row `i`, column `j`), for small classes.
    pub fn dense_neg_generator(&self) -> Result<DMatrix<f64>> {
        let n = self.class_size();
        if n > MAX_DENSE_STATES {
            return Err(Error::Capacity(format!("{n} states exceeds the dense cap of {MAX_DENSE_STATES}")));
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, _, r) in self.transitions(i) {
                m[(i, j)] -= r;
                m[(i, i)] += r;
            }
        }
        Ok(m)
    }

    fn sym_apply(&self, v: &[f64], out: &mut [f64]) {
        let off = (self.q * (1.0 - self.q)).sqrt();
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = 0.0;
            for (j, _, r) in self.transitions(i) {
                acc += r * v[i] - off * v[j];
            }
            *o = acc;
        });
    }

    /// Eigenvalues of `-L` in increasing order, by dense diagonalisation of
    /// the symmetrised matrix. Independent of the Lanczos path.
    pub fn dense_spectrum(&self) -> Result<Vec<f64>> {
        let n = self.class_size();
        if n > MAX_DENSE_STATES {
            return Err(Error::Capacity(format!("{n} states exceeds the dense cap of {MAX_DENSE_STATES}")));
        }
        let l = self.dense_neg_generator()?;
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = (self.mu[i] / self.mu[j]).sqrt() * l[(i, j)];
            }
        }
        let s = 0.5 * (&s + s.transpose());
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ev)
    }

    /// Smallest nonzero eigenvalue of `-L` and an eigenvector (as a function
    /// on the class).
    pub fn gap(&self) -> Result<GapResult> {
        let n = self.class_size();
        if n < 2 {
            return Err(Error::Numerical("class has a single state; the gap is undefined".into()));
        }
        let phi0: Vec<f64> = self.mu.iter().map(|m| m.sqrt()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut result = None;
        for _ in 0..20 {
            let (theta, vec, converged) = lanczos_smallest(self, &phi0, &start)?;
            result = Some((theta, vec.clone()));
            if converged {
                break;
            }
            start = vec;
        }
        let (theta, v) = result.unwrap();
        if theta < 1e-12 {
            return Err(Error::Numerical(format!("degenerate gap {theta:e}")));
        }
        let f: Vec<f64> = v.iter().zip(&phi0).map(|(a, b)| a / b).collect();
        Ok(GapResult { gap: theta, t_rel: 1.0 / theta, eigenfunction: f })
    }

    /// `T_rel = 1 / gap`.
    pub fn relaxation_time(&self) -> Result<f64> {
        Ok(self.gap()?.t_rel)
    }

    /// `(D(f), Var(f))` with `D(f) = Σ_x μ(c_x Var_x f)` evaluated site by
    /// site, where `Var_x f = pq (f(ω^{x→1}) - f(ω^{x→0}))²`.
    pub fn dirichlet_and_variance(&self, f: &[f64]) -> Result<(f64, f64)> {
        if f.len() != self.class_size() {
            return Err(Error::Parameter(format!("vector of length {} on a class of {}", f.len(), self.class_size())));
        }
        let pq = self.q * (1.0 - self.q);
        let d: f64 = (0..self.class_size())
            .into_par_iter()
            .map(|i| {
                let s = self.states[i];
                let mut acc = 0.0;
                for x in 0..self.n_sites {
                    if self.constraint(s, x) {
                        let j = self.lookup[(s ^ (1 << x)) as usize] as usize;
                        let diff = f[i] - f[j];
                        acc += pq * diff * diff;
                    }
                }
                self.mu[i] * acc
            })
            .sum();
        let mean: f64 = self.mu.iter().zip(f).map(|(m, x)| m * x).sum();
        let var: f64 = self.mu.iter().zip(f).map(|(m, x)| m * (x - mean) * (x - mean)).sum();
        Ok((d, var))
    }

    /// `<f, -L f>_μ`.
    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        let lf = self.apply_neg_generator(f);
        self.mu.iter().zip(f).zip(&lf).map(|((m, a), b)| m * a * b).sum()
    }

    /// Largest `Var(f) / D(f)` over the supplied functions.
    pub fn poincare_ratio(&self, fs: &[Vec<f64>]) -> Result<f64> {
        let mut best = 0.0f64;
        for f in fs {
            let (d, var) = self.dirichlet_and_variance(f)?;
            let scale = f.iter().map(|x| x * x).fold(0.0, f64::max).max(1e-300);
            if var <= 1e-14 * scale {
                return Err(Error::Parameter("function is constant on the class".into()));
            }
            if d <= 1e-14 * var {
                return Err(Error::Numerical("zero Dirichlet form for a non-constant function: class is reducible".into()));
            }
            best = best.max(var / d);
        }
        Ok(best)
    }
}

#[derive(Clone, Debug)]
pub struct GapResult {
    pub gap: f64,
    pub t_rel: f64,
    /// Eigenfunction of `-L` for the gap, orthogonal to constants in L²(μ).
    pub eigenfunction: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            axpy(-c, b, v);
        }
    }
}

/// One Lanczos run restricted to the complement of `phi0`. Returns the
/// smallest Ritz value, its Ritz vector and whether it converged.
fn lanczos_smallest(gm: &GeneratorMatrix, phi0: &[f64], start: &[f64]) -> Result<(f64, Vec<f64>, bool)> {
    let n = phi0.len();
    let budget_vectors = (1usize << 28) / n.max(1);
    let m_max = (n - 1).min(400).min(budget_vectors.max(8));
    let mut v = start.to_vec();
    let fixed = vec![phi0.to_vec()];
    project_out(&mut v, &fixed);
    let nv = dot(&v, &v).sqrt();
    if nv == 0.0 {
        return Err(Error::Numerical("start vector lies in the constant direction".into()));
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let norm_bound = 2.0 * gm.n_sites as f64;
    loop {
        let j = basis.len() - 1;
        gm.sym_apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alphas.push(a);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        project_out(&mut w, &fixed);
        project_out(&mut w, &basis);
        let b = dot(&w, &w).sqrt();
        let k = alphas.len();
        let done_dim = k >= m_max || b < 1e-13 * norm_bound;
        if done_dim || k % 8 == 0 {
            let (theta, y) = smallest_tridiagonal(&alphas, &betas);
            let resid = b * y[k - 1].abs();
            let converged = resid < 1e-12 * norm_bound || b < 1e-13 * norm_bound || k == n - 1;
            if converged || done_dim {
                let mut ritz = vec![0.0; n];
                for (c, q) in y.iter().zip(&basis) {
                    axpy(*c, q, &mut ritz);
                }
                let nr = dot(&ritz, &ritz).sqrt();
                ritz.iter_mut().for_each(|x| *x /= nr);
                return Ok((theta, ritz, converged));
            }
        }
        betas.push(b);
        let next: Vec<f64> = w.iter().map(|x| x / b).collect();
        basis.push(next);
    }
}

fn smallest_tridiagonal(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    (theta, eig.eigenvectors.column(idx).iter().copied().collect())
}

/// Generator for `fam` on `g` with `Outside::Occupied`.
pub fn build_generator(g: &Geometry, fam: &UpdateFamily, q: f64) -> Result<GeneratorMatrix> {
    GeneratorMatrix::build(g, fam, q, Outside::Occupied)
}
