//! Continuous-time kinetically constrained dynamics.
//!
//! Every vertex carries a rate-1 Poisson clock held in a next-reaction
//! queue. When a clock rings and the constraint holds in the current
//! configuration, the vertex is resampled: occupied with probability
//! `p = 1 - q`, empty otherwise. Rings at constrained vertices are discarded.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{CompiledFamily, Outside, UpdateFamily};
use crate::lattice::{Configuration, Geometry};
use crate::rng::{purpose, stream, threshold_configuration, vertex_uniforms};
use crate::stats::median;

#[derive(Clone, Debug)]
pub struct KcmParams {
    pub fam: UpdateFamily,
    /// Probability of the empty state.
    pub q: f64,
    pub geometry: Arc<Geometry>,
    pub t_max: f64,
    pub seed: u64,
    pub outside: Outside,
}

impl KcmParams {
    pub fn new(fam: UpdateFamily, q: f64, geometry: Arc<Geometry>, t_max: f64, seed: u64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Parameter(format!("q must lie in (0, 1), got {q}")));
        }
        if !(t_max > 0.0) {
            return Err(Error::Parameter(format!("t_max must be positive, got {t_max}")));
        }
        if fam.dim() != geometry.dim() {
            return Err(Error::Family("family and geometry dimensions differ".into()));
        }
        Ok(KcmParams { fam, q, geometry, t_max, seed, outside: Outside::Occupied })
    }

    pub fn with_outside(mut self, outside: Outside) -> Self {
        self.outside = outside;
        self
    }

    pub fn p(&self) -> f64 {
        1.0 - self.q
    }
}

/// A legal resample: the vertex was updated at `time` and now holds
/// `new_value` (1 occupied, 0 empty).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub vertex: u32,
    pub new_value: u8,
}

#[derive(Clone, Debug)]
pub struct KcmRun {
    pub final_config: Configuration,
    pub events: Vec<Event>,
    /// Time of the last processed ring, or `t_max` if the cap was reached.
    pub time: f64,
    pub rings: u64,
    pub legal_updates: u64,
    pub flips: u64,
    /// True if an observer stopped the run before `t_max`.
    pub stopped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[inline]
fn key(t: f64) -> u64 {
    t.to_bits()
}

/// Rate of the transition `ω -> ω^x`.
pub fn transition_rate(cfg: &Configuration, comp: &CompiledFamily, x: usize, q: f64) -> f64 {
    if !comp.satisfied(cfg, x) {
        0.0
    } else if cfg.is_occupied(x) {
        q
    } else {
        1.0 - q
    }
}

/// Runs the dynamics from `initial` until `t_max` or until `observe` returns
/// [`Control::Stop`]. The trajectory is a pure function of
/// `(params, initial, replica)`.
pub fn simulate_kcm(
    params: &KcmParams,
    initial: &Configuration,
    replica: u64,
    record: bool,
    mut observe: impl FnMut(&Event, &Configuration) -> Control,
) -> Result<KcmRun> {
    if initial.geometry() != params.geometry.as_ref() {
        return Err(Error::Parameter("initial configuration does not match the geometry".into()));
    }
    let comp = CompiledFamily::new(&params.geometry, &params.fam, params.outside)?;
    let mut rng = stream(params.seed, replica, purpose::DYNAMICS);
    let n = params.geometry.volume();
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::with_capacity(n);
    for v in 0..n {
        let t: f64 = rng.sample(Exp1);
        heap.push(Reverse((key(t), v as u32)));
    }
    let p = params.p();
    let mut cfg = initial.clone();
    let mut run = KcmRun {
        final_config: initial.clone(),
        events: Vec::new(),
        time: params.t_max,
        rings: 0,
        legal_updates: 0,
        flips: 0,
        stopped: false,
    };
    while let Some(Reverse((tk, v))) = heap.pop() {
        let t = f64::from_bits(tk);
        if t > params.t_max {
            break;
        }
        run.rings += 1;
        let x = v as usize;
        let next = t + rng.sample::<f64, _>(Exp1);
        heap.push(Reverse((key(next), v)));
        if !comp.satisfied(&cfg, x) {
            continue;
        }
        let occupied = rng.random::<f64>() < p;
        run.legal_updates += 1;
        if occupied != cfg.is_occupied(x) {
            cfg.set(x, occupied);
            run.flips += 1;
        }
        let ev = Event { time: t, vertex: v, new_value: occupied as u8 };
        if record {
            run.events.push(ev);
        }
        if observe(&ev, &cfg) == Control::Stop {
            run.time = t;
            run.stopped = true;
            break;
        }
    }
    run.final_config = cfg;
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Start {
    /// Product Bernoulli start (the reversible measure).
    #[default]
    Stationary,
    AllEmpty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Observable {
    /// First time the origin is empty.
    #[default]
    ReachEmpty,
    /// First legal resample at the origin.
    FirstLegalUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersistenceSample {
    /// Observed time, or `t_max` if censored.
    pub tau0: f64,
    pub censored: bool,
    pub flips_executed: u64,
    pub replica: u64,
}

#[derive(Clone, Debug)]
pub struct PersistenceSummary {
    pub samples: Vec<PersistenceSample>,
    /// Mean over uncensored samples.
    pub mean_uncensored: f64,
    /// Mean with censored samples counted as `t_max`: a lower bound on the
    /// true mean.
    pub mean_lower_bound: f64,
    /// Median with censored samples counted as `t_max`; exact whenever fewer
    /// than half the samples are censored.
    pub median: f64,
    pub censored_fraction: f64,
    /// Set when every replica was censored.
    pub unusable: bool,
}

/// Persistence time of the origin (vertex 0) over independent replicas.
/// Stationary starts use coordinate-keyed uniforms, so runs at different q
/// with the same seed start from nested configurations.
pub fn sample_persistence_time(
    params: &KcmParams,
    replicas: u64,
    start: Start,
    observable: Observable,
) -> Result<PersistenceSummary> {
    if replicas == 0 {
        return Err(Error::Parameter("replicas must be at least 1".into()));
    }
    let g = params.geometry.clone();
    let samples: Vec<PersistenceSample> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<PersistenceSample> {
            let init = match start {
                Start::Stationary => threshold_configuration(g.clone(), &vertex_uniforms(&g, params.seed, r), params.q),
                Start::AllEmpty => Configuration::empty(g.clone()),
            };
            if observable == Observable::ReachEmpty && init.is_empty(0) {
                return Ok(PersistenceSample { tau0: 0.0, censored: false, flips_executed: 0, replica: r });
            }
            let run = simulate_kcm(params, &init, r, false, |ev, _| match observable {
                Observable::ReachEmpty if ev.vertex == 0 && ev.new_value == 0 => Control::Stop,
                Observable::FirstLegalUpdate if ev.vertex == 0 => Control::Stop,
                _ => Control::Continue,
            })?;
            Ok(PersistenceSample {
                tau0: if run.stopped { run.time } else { params.t_max },
                censored: !run.stopped,
                flips_executed: run.flips,
                replica: r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(samples, params.t_max))
}

fn summarize(samples: Vec<PersistenceSample>, t_max: f64) -> PersistenceSummary {
    let n = samples.len() as f64;
    let unc: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.tau0).collect();
    let all: Vec<f64> = samples.iter().map(|s| if s.censored { t_max } else { s.tau0 }).collect();
    let censored = samples.len() - unc.len();
    PersistenceSummary {
        mean_uncensored: if unc.is_empty() { f64::NAN } else { unc.iter().sum::<f64>() / unc.len() as f64 },
        mean_lower_bound: all.iter().sum::<f64>() / n,
        median: median(&all),
        censored_fraction: censored as f64 / n,
        unusable: unc.is_empty(),
        samples,
    }
}

/// Binary event log: little-endian `(f64 time, u32 vertex, u8 new_value)`.
pub fn write_event_log<W: Write>(mut w: W, events: &[Event]) -> io::Result<()> {
    for e in events {
        w.write_all(&e.time.to_le_bytes())?;
        w.write_all(&e.vertex.to_le_bytes())?;
        w.write_all(&[e.new_value])?;
    }
    Ok(())
}

pub fn read_event_log<R: Read>(mut r: R) -> io::Result<Vec<Event>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() % 13 != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated event log"));
    }
    Ok(buf
        .chunks_exact(13)
        .map(|c| Event {
            time: f64::from_le_bytes(c[0..8].try_into().unwrap()),
            vertex: u32::from_le_bytes(c[8..12].try_into().unwrap()),
            new_value: c[12],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::random_configuration_replica;
    use crate::stats::mean_se;

    fn ring(n: usize) -> Arc<Geometry> {
        Arc::new(Geometry::torus(&[n]).unwrap())
    }

    #[test]
    fn frozen_when_fully_occupied() {
        let g = Arc::new(Geometry::torus(&[6, 6]).unwrap());
        let p = KcmParams::new(UpdateFamily::fa_kf(2, 1).unwrap(), 0.3, g.clone(), 50.0, 1).unwrap();
        let init = Configuration::occupied(g);
        let run = simulate_kcm(&p, &init, 0, true, |_, _| Control::Continue).unwrap();
        assert_eq!(run.final_config, init);
        assert!(run.events.is_empty());
        assert!(run.rings > 0);
    }

    #[test]
    fn deterministic_logs_and_round_trip() {
        let g = Arc::new(Geometry::torus(&[8, 8]).unwrap());
        let p = KcmParams::new(UpdateFamily::fa_kf(2, 2).unwrap(), 0.3, g.clone(), 20.0, 7).unwrap();
        let init = random_configuration_replica(g, 0.3, 7, 0);
        let a = simulate_kcm(&p, &init, 4, true, |_, _| Control::Continue).unwrap();
        let b = simulate_kcm(&p, &init, 4, true, |_, _| Control::Continue).unwrap();
        assert_eq!(a.events, b.events);
        assert!(!a.events.is_empty());
        let mut buf = Vec::new();
        write_event_log(&mut buf, &a.events).unwrap();
        assert_eq!(read_event_log(&buf[..]).unwrap(), a.events);
        let mut replay = init.clone();
        for e in &a.events {
            replay.set(e.vertex as usize, e.new_value == 1);
        }
        assert_eq!(replay, a.final_config);
    }

    #[test]
    fn rates_satisfy_detailed_balance() {
        let g = Arc::new(Geometry::torus(&[5, 5]).unwrap());
        let q = 0.35;
        let comp = CompiledFamily::new(&g, &UpdateFamily::fa_kf(2, 2).unwrap(), Outside::Occupied).unwrap();
        for r in 0..20 {
            let c = random_configuration_replica(g.clone(), 0.5, 2, r);
            for x in 0..g.volume() {
                let mut c2 = c.clone();
                c2.flip(x);
                let ratio = if c.is_occupied(x) { q / (1.0 - q) } else { (1.0 - q) / q };
                let lhs = transition_rate(&c, &comp, x, q);
                let rhs = ratio * transition_rate(&c2, &comp, x, q);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unconstrained_persistence_matches_thinning() {
        let g = ring(1);
        let q = 0.5;
        let p = KcmParams::new(UpdateFamily::unconstrained(1).unwrap(), q, g.clone(), 1e6, 3).unwrap();
        let s = sample_persistence_time(&p, 4000, Start::AllEmpty, Observable::ReachEmpty).unwrap();
        assert!(s.samples.iter().all(|x| x.tau0 == 0.0));
        let s = sample_persistence_time(&p, 20000, Start::Stationary, Observable::ReachEmpty).unwrap();
        let (m, se) = mean_se(&s.samples.iter().map(|x| x.tau0).collect::<Vec<_>>());
        assert!((m - (1.0 - q) / q).abs() < 3.0 * se, "{m} {se}");
    }

    #[test]
    fn censoring_monotone_in_tmax() {
        let g = Arc::new(Geometry::torus(&[6, 6]).unwrap());
        let fam = UpdateFamily::fa_kf(2, 2).unwrap();
        let mut last = 1.0;
        for t in [0.5, 2.0, 8.0] {
            let p = KcmParams::new(fam.clone(), 0.2, g.clone(), t, 9).unwrap();
            let s = sample_persistence_time(&p, 200, Start::Stationary, Observable::ReachEmpty).unwrap();
            assert!(s.censored_fraction <= last);
            last = s.censored_fraction;
        }
    }

    #[test]
    fn invalid_params() {
        let g = ring(4);
        let f = UpdateFamily::fa_kf(1, 1).unwrap();
        assert!(KcmParams::new(f.clone(), 0.0, g.clone(), 1.0, 0).is_err());
        assert!(KcmParams::new(f.clone(), 0.5, g.clone(), 0.0, 0).is_err());
        assert!(KcmParams::new(UpdateFamily::gg(), 0.5, g, 1.0, 0).is_err());
    }
}
