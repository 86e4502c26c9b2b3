use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::Rng;

use kcm_core::blocks::{estimate_block_probs, lambda_phi, BlockModel, BlockSpec, LambdaPhi};
use kcm_core::bootstrap::{closure, estimate_lc, estimate_qc, estimate_span_probability};
use kcm_core::kcm::{sample_persistence_time, simulate_kcm, write_event_log, Control, KcmParams, Observable, Start};
use kcm_core::paths::{congestion_constant, path_a, path_b, plant_good, plant_supergood, verify_legal, LegalPath};
use kcm_core::percolation::{estimate_crossing_failure, supercritical_condition_auto};
use kcm_core::rng::{purpose, random_configuration_replica, stream};
use kcm_core::spectral::GeneratorMatrix;
use kcm_core::{Boundary, Configuration, Geometry, Outside, UpdateFamily};

use crate::output::{dims, emit, num, write_atomic, Table};
use crate::{
    BlockName, BlocksArgs, BoundaryArg, BootstrapArgs, Cli, Command, GapArgs, LcArgs, ModelArgs, ModelName,
    ObservableArg, PathMode, PathsArgs, PercArgs, QcArgs, SimArgs, StartArg,
};

/// Boxes up to this many sites get an exact congestion constant.
const EXACT_CONGESTION_SITES: usize = 20;

pub fn run(cli: &Cli) -> Result<()> {
    let resolved = format!("{:?};seed={}", cli.command, cli.seed);
    let table = match &cli.command {
        Command::Bootstrap(a) => bootstrap(a, cli.seed, &resolved)?,
        Command::Qc(a) => qc(a, cli.seed, &resolved)?,
        Command::Lc(a) => lc(a, cli.seed, &resolved)?,
        Command::Sim(a) => sim(a, cli.seed, &resolved)?,
        Command::Gap(a) => gap(a, cli.seed, &resolved)?,
        Command::Blocks(a) => blocks(a, cli.seed, &resolved)?,
        Command::Paths(a) => paths(a, cli.seed, &resolved)?,
        Command::Perc(a) => perc(a, cli.seed, &resolved)?,
    };
    emit(&table, cli.out.as_deref())
}

pub fn family(m: &ModelArgs, default_d: usize) -> Result<UpdateFamily> {
    let d = m.d.unwrap_or(default_d);
    let fam = match m.model {
        ModelName::Fa2 => UpdateFamily::fa_kf(d, 2)?,
        ModelName::Fakf => UpdateFamily::fa_kf(d, m.k.context("--k is required for fakf")?)?,
        ModelName::Fa1f => UpdateFamily::fa_kf(d, 1)?,
        ModelName::Gg => UpdateFamily::gg(),
        ModelName::East => UpdateFamily::east(d)?,
        ModelName::NorthEast => UpdateFamily::north_east(),
        ModelName::Unconstrained => UpdateFamily::unconstrained(d)?,
        ModelName::Custom => {
            let p = m.rules.as_ref().context("--rules is required for custom")?;
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            UpdateFamily::parse(&text)?
        }
    };
    if let Some(d) = m.d {
        if fam.dim() != d {
            bail!("model {} lives in dimension {}, not {d}", fam.name(), fam.dim());
        }
    }
    Ok(fam)
}

fn boundary(b: BoundaryArg) -> Boundary {
    match b {
        BoundaryArg::Torus => Boundary::Torus,
        BoundaryArg::Free => Boundary::Free,
    }
}

fn check_q(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        bail!("q must lie in [0, 1], got {q}");
    }
    Ok(())
}

fn bootstrap(a: &BootstrapArgs, seed: u64, resolved: &str) -> Result<Table> {
    if let Some(path) = &a.grid {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = Configuration::from_grid_str(&text)?;
        let fam = family(&a.model, cfg.geometry().dim())?;
        let closed = closure(&cfg, &fam);
        let mut t = Table::new(
            "bootstrap",
            seed,
            resolved,
            vec!["model", "dims", "boundary", "empty_before", "empty_after", "spans"],
        );
        t.push(vec![
            fam.name().into(),
            dims(cfg.geometry().dims()),
            cfg.geometry().boundary().to_string(),
            cfg.count_empty().to_string(),
            closed.count_empty().to_string(),
            closed.all_empty().to_string(),
        ]);
        if let Some(out) = &a.grid_out {
            write_atomic(out, closed.to_grid_string().as_bytes())?;
        }
        return Ok(t);
    }
    if a.grid_out.is_some() {
        bail!("--grid-out needs --grid");
    }
    let n = a.n.context("--n is required without --grid")?;
    let q = a.q.context("--q is required without --grid")?;
    check_q(q)?;
    let fam = family(&a.model, 2)?;
    let est = estimate_span_probability(n, &fam, q, a.replicas, seed)?;
    let mut t = Table::new(
        "bootstrap",
        seed,
        resolved,
        vec!["model", "d", "n", "q", "replicas", "seed", "p_span", "ci_lo", "ci_hi"],
    );
    t.push(vec![
        fam.name().into(),
        fam.dim().to_string(),
        n.to_string(),
        num(q),
        a.replicas.to_string(),
        seed.to_string(),
        num(est.value),
        num(est.lo),
        num(est.hi),
    ]);
    Ok(t)
}

fn qc(a: &QcArgs, seed: u64, resolved: &str) -> Result<Table> {
    let fam = family(&a.model, 2)?;
    let e = estimate_qc(a.n, &fam, a.tol, a.replicas, seed)?;
    let mut t = Table::new(
        "qc",
        seed,
        resolved,
        vec![
            "model", "d", "n", "tol", "replicas", "seed", "qc", "ci_lo", "ci_hi", "bracket_lo", "bracket_hi",
            "non_monotone",
        ],
    );
    t.push(vec![
        fam.name().into(),
        fam.dim().to_string(),
        a.n.to_string(),
        num(a.tol),
        a.replicas.to_string(),
        seed.to_string(),
        num(e.estimate.value),
        num(e.estimate.lo),
        num(e.estimate.hi),
        num(e.bracket.0),
        num(e.bracket.1),
        e.non_monotone.to_string(),
    ]);
    Ok(t)
}

fn lc(a: &LcArgs, seed: u64, resolved: &str) -> Result<Table> {
    let fam = family(&a.model, 2)?;
    let qs: Vec<f64> = match (&a.q, &a.q_grid) {
        (Some(q), None) => vec![*q],
        (None, Some(g)) if !g.is_empty() => g.clone(),
        _ => bail!("give exactly one of --q or --q-grid"),
    };
    let mut t = Table::new(
        "lc",
        seed,
        resolved,
        vec!["model", "d", "q", "n_max", "replicas", "seed", "lc", "p_span", "ci_lo", "ci_hi", "censored"],
    );
    for (i, &q) in qs.iter().enumerate() {
        let s = seed.wrapping_add(i as u64);
        let e = estimate_lc(q, &fam, a.n_max, a.replicas, s)?;
        t.push(vec![
            fam.name().into(),
            fam.dim().to_string(),
            num(q),
            a.n_max.to_string(),
            a.replicas.to_string(),
            s.to_string(),
            e.n.to_string(),
            num(e.at_n.value),
            num(e.at_n.lo),
            num(e.at_n.hi),
            e.censored.to_string(),
        ]);
    }
    Ok(t)
}

fn sim(a: &SimArgs, seed: u64, resolved: &str) -> Result<Table> {
    let sides = match (&a.dims, a.n) {
        (Some(d), _) => d.clone(),
        (None, Some(n)) => vec![n; a.model.d.unwrap_or(2)],
        (None, None) => bail!("give --dims or --n"),
    };
    let fam = family(&a.model, sides.len())?;
    let g = Arc::new(Geometry::new(sides.clone(), boundary(a.boundary))?);
    let params = KcmParams::new(fam, a.q, g.clone(), a.t_max, seed)?;
    let start = match a.start {
        StartArg::Stationary => Start::Stationary,
        StartArg::Empty => Start::AllEmpty,
    };
    let observable = match a.observable {
        ObservableArg::ReachEmpty => Observable::ReachEmpty,
        ObservableArg::FirstUpdate => Observable::FirstLegalUpdate,
    };
    let s = sample_persistence_time(&params, a.replicas, start, observable)?;
    let mut t = Table::new(
        "sim",
        seed,
        resolved,
        vec![
            "model", "dims", "boundary", "q", "t_max", "start", "observable", "seed", "replica", "tau0", "censored",
            "flips",
        ],
    );
    t.note("mean_uncensored", num(s.mean_uncensored));
    t.note("mean_lower_bound", num(s.mean_lower_bound));
    t.note("median", num(s.median));
    t.note("censored_fraction", num(s.censored_fraction));
    let start_name = format!("{:?}", a.start).to_lowercase();
    let obs_name = match a.observable {
        ObservableArg::ReachEmpty => "reach-empty",
        ObservableArg::FirstUpdate => "first-update",
    };
    for smp in &s.samples {
        t.push(vec![
            params.fam.name().into(),
            dims(&sides),
            g.boundary().to_string(),
            num(a.q),
            num(a.t_max),
            start_name.clone(),
            obs_name.into(),
            seed.to_string(),
            smp.replica.to_string(),
            num(smp.tau0),
            smp.censored.to_string(),
            smp.flips_executed.to_string(),
        ]);
    }
    if let Some(path) = &a.event_log {
        let init = match start {
            Start::Stationary => random_configuration_replica(g.clone(), a.q, seed, 0),
            Start::AllEmpty => Configuration::empty(g.clone()),
        };
        let run = simulate_kcm(&params, &init, 0, true, |_, _| Control::Continue)?;
        let mut buf = Vec::new();
        write_event_log(&mut buf, &run.events)?;
        write_atomic(path, &buf)?;
    }
    Ok(t)
}

fn gap(a: &GapArgs, seed: u64, resolved: &str) -> Result<Table> {
    check_q(a.q)?;
    let fam = family(&a.model, a.dims.len())?;
    let g = Geometry::new(a.dims.clone(), boundary(a.boundary))?;
    let gen = GeneratorMatrix::build(&g, &fam, a.q, Outside::Occupied)?;
    let r = gen.gap()?;
    let mut header = vec!["model", "dims", "boundary", "q", "class_size", "gap", "t_rel"];
    if a.dense {
        header.push("dense_gap");
    }
    let mut t = Table::new("gap", seed, resolved, header);
    let mut row = vec![
        fam.name().into(),
        dims(&a.dims),
        g.boundary().to_string(),
        num(a.q),
        gen.class_size().to_string(),
        num(r.gap),
        num(r.t_rel),
    ];
    if a.dense {
        let spec = gen.dense_spectrum()?;
        row.push(num(spec[1]));
    }
    t.push(row);
    Ok(t)
}

fn block_model(name: BlockName, d: usize, k: usize, ell: Option<f64>) -> Result<BlockModel> {
    Ok(match name {
        BlockName::Fa2 => BlockModel::Fa2 { d },
        BlockName::Fakf => BlockModel::Fakf { d, k, ell: ell.context("--ell is required for fakf blocks")? },
        BlockName::Gg => BlockModel::Gg,
    })
}

fn blocks(a: &BlocksArgs, seed: u64, resolved: &str) -> Result<Table> {
    let model = block_model(a.block, a.d, a.k, a.ell)?;
    let spec = match (&a.dims, a.a) {
        (Some(d), None) => BlockSpec::with_dims(model, d.clone(), a.q)?,
        (None, Some(c)) => BlockSpec::from_formula(model, a.q, c)?,
        _ => bail!("give exactly one of --dims or --a"),
    };
    let probs = estimate_block_probs(&spec, a.replicas, seed)?;
    let lam = lambda_phi(&spec)?;
    let mut t = Table::new(
        "blocks",
        seed,
        resolved,
        vec![
            "model", "dims", "q", "a", "replicas", "seed", "p1", "p1_lo", "p1_hi", "p2_mc", "p2", "p2_mode",
            "lambda_phi_mode", "ln_lambda_phi", "condition_value",
        ],
    );
    t.push(vec![
        spec.model.name(),
        dims(&spec.dims),
        num(spec.q),
        num(spec.a),
        a.replicas.to_string(),
        seed.to_string(),
        num(probs.p1.value),
        num(probs.p1.lo),
        num(probs.p1.hi),
        num(probs.p2_mc.value),
        num(probs.p2),
        probs.p2_mode.to_string(),
        match lam {
            LambdaPhi::Exact(_) => "exact".into(),
            LambdaPhi::LnBound(_) => "bound".into(),
        },
        num(lam.ln_value()),
        num(probs.condition_value),
    ]);
    Ok(t)
}

/// A random configuration on the box of `mode` with the hypotheses of the
/// path planted, and the path built on it.
fn eligible_path(spec: &BlockSpec, mode: PathMode, seed: u64, sample: u64) -> Result<LegalPath> {
    let d = spec.dims.len();
    let mut rng = stream(seed, sample, purpose::AUX);
    match mode {
        PathMode::A => {
            let box_dims: Vec<usize> = spec.dims.iter().map(|n| 2 * n).collect();
            let g = Arc::new(Geometry::free(&box_dims)?);
            let mut c = random_configuration_replica(g.clone(), spec.q, seed, sample);
            for i in 0..d {
                let mut corner = vec![0; d];
                corner[i] = spec.dims[i];
                plant_supergood(&mut c, spec, &corner, &mut rng)?;
            }
            let z: Vec<usize> = spec.dims.iter().map(|&n| rng.random_range(0..n)).collect();
            Ok(path_a(&c, spec, g.index(&z)?)?)
        }
        PathMode::B => {
            let axis = rng.random_range(0..d);
            let y_after = rng.random::<bool>();
            let mut box_dims = spec.dims.clone();
            box_dims[axis] *= 2;
            let g = Arc::new(Geometry::free(&box_dims)?);
            let mut c = random_configuration_replica(g, spec.q, seed, sample);
            let mut far = vec![0; d];
            far[axis] = spec.dims[axis];
            let (cx, cy) = if y_after { (vec![0; d], far) } else { (far, vec![0; d]) };
            plant_good(&mut c, spec, &cx, &mut rng)?;
            plant_supergood(&mut c, spec, &cy, &mut rng)?;
            Ok(path_b(&c, spec, axis, y_after)?)
        }
    }
}

fn paths(a: &PathsArgs, seed: u64, resolved: &str) -> Result<Table> {
    if !(a.q > 0.0 && a.q < 1.0) {
        bail!("q must lie in (0, 1), got {}", a.q);
    }
    if a.samples == 0 {
        bail!("--samples must be positive");
    }
    let d = a.dims.len();
    let model = block_model(a.model, d, 0, None)?;
    let fam = model.family()?;
    let spec = BlockSpec::with_dims(model, a.dims.clone(), a.q)?;
    let built: Vec<LegalPath> = {
        use rayon::prelude::*;
        (0..a.samples).into_par_iter().map(|s| eligible_path(&spec, a.mode, seed, s)).collect::<Result<_>>()?
    };
    for (s, p) in built.iter().enumerate() {
        verify_legal(p, &fam, Outside::Occupied).with_context(|| format!("sample {s} produced an illegal path"))?;
    }
    let max_len = built.iter().map(|p| p.len()).max().unwrap_or(0);
    let block_sites = spec.volume();
    let box_sites = built[0].start.volume();
    let allowed_sites = match a.mode {
        PathMode::A => (d + 1) * block_sites,
        PathMode::B => 2 * block_sites,
    };
    let (rho_mode, rho) = if box_sites <= EXACT_CONGESTION_SITES {
        ("exact", congestion_constant(built.iter(), a.q).rho)
    } else {
        ("bound", (1.0 / a.q.min(1.0 - a.q)).powi(allowed_sites as i32))
    };
    let mode = match a.mode {
        PathMode::A => "A",
        PathMode::B => "B",
    };
    let mut t = Table::new(
        "paths",
        seed,
        resolved,
        vec!["model", "mode", "dims", "q", "samples", "seed", "max_len", "fitted_c", "rho_mode", "rho"],
    );
    t.push(vec![
        spec.model.name(),
        mode.into(),
        dims(&a.dims),
        num(a.q),
        a.samples.to_string(),
        seed.to_string(),
        max_len.to_string(),
        num(max_len as f64 / block_sites as f64),
        rho_mode.into(),
        num(rho),
    ]);
    Ok(t)
}

fn perc(a: &PercArgs, seed: u64, resolved: &str) -> Result<Table> {
    let e = estimate_crossing_failure(a.nmax, a.p, a.replicas, seed)?;
    let mut t = Table::new(
        "perc",
        seed,
        resolved,
        vec!["p", "replicas", "seed", "n", "ell_n", "failure", "ci_lo", "ci_hi", "m_hat"],
    );
    let m = e.m_hat.map(num).unwrap_or_default();
    if let Some(m_hat) = e.m_hat {
        match supercritical_condition_auto(a.p, m_hat, 1e-12) {
            Ok(s) => t.note("series", num(s.value)),
            Err(err) => t.note("series", err),
        }
    }
    for (n, l, est) in &e.rows {
        t.push(vec![
            num(a.p),
            a.replicas.to_string(),
            seed.to_string(),
            n.to_string(),
            l.to_string(),
            num(est.value),
            num(est.lo),
            num(est.hi),
            m.clone(),
        ]);
    }
    Ok(t)
}
