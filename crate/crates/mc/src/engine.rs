use drawdown_core::model::DiffusionModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Dynamics, SimConfig};
use crate::error::{invalid, McError, Result};
use crate::functional::Functional;
use crate::path::{splitmix64, stream, Step, Stream, Walker};

/// Paths per unit of work; fixed so that results do not depend on scheduling.
const CHUNK: u64 = 256;
/// Chunks evaluated in parallel before their results are handed to the sink.
const WAVE: u64 = 64;
/// Largest censored fraction tolerated by [`estimate`].
pub const MAX_CENSORED: f64 = 1e-3;
const RICHARDSON_SALT: u64 = 0x5249_4348_4152_4453;

/// Outcome of one functional on one path: `None` when the horizon was reached first.
pub type PathValue = Option<f64>;

struct Runner<'a> {
    dynamics: Dynamics<'a>,
    functionals: &'a [Functional],
    x0: f64,
    dt: f64,
    horizon: f64,
    bridge: bool,
    paired: bool,
    seed: u64,
}

impl Runner<'_> {
    fn path(&self, idx: u64, out: &mut Vec<PathValue>) -> Result<()> {
        let mut walker = Walker::new(self.dynamics, self.x0, self.dt, self.bridge, self.paired, self.seed, idx);
        let mut clocks = stream(self.seed, idx, Stream::Clock);
        let mut trackers: Vec<_> = self.functionals.iter().map(|f| f.start(self.x0, &mut clocks)).collect();
        let base = out.len();
        out.resize(base + self.functionals.len(), None);
        let mut open: Vec<usize> = (0..self.functionals.len()).collect();
        let mut k = 0u64;
        while !open.is_empty() {
            let t0 = k as f64 * self.dt;
            if t0 >= self.horizon {
                break;
            }
            let step = walker.advance(t0)?;
            open.retain(|&i| {
                match self.functionals[i].step(&mut trackers[i], &step, self.bridge, &mut walker.uniforms) {
                    Some(v) => {
                        out[base + i] = Some(v);
                        false
                    }
                    None => true,
                }
            });
            k += 1;
        }
        Ok(())
    }

    fn chunk(&self, first: u64, end: u64) -> Result<Vec<PathValue>> {
        let mut out = Vec::with_capacity(((end - first) as usize) * self.functionals.len());
        for idx in first..end {
            self.path(idx, &mut out)?;
        }
        Ok(out)
    }

    /// Runs paths `0..n` and feeds each row to `sink` in path order.
    fn run(&self, n: u64, sink: &mut (dyn FnMut(u64, &[PathValue]) + Send)) -> Result<()> {
        let width = self.functionals.len();
        let chunks = n.div_ceil(CHUNK);
        let mut c = 0;
        while c < chunks {
            let last = (c + WAVE).min(chunks);
            let rows: Vec<Result<Vec<PathValue>>> = (c..last)
                .into_par_iter()
                .map(|j| self.chunk(j * CHUNK, ((j + 1) * CHUNK).min(n)))
                .collect();
            for (j, rows) in (c..last).zip(rows) {
                for (r, row) in rows?.chunks(width).enumerate() {
                    sink(j * CHUNK + r as u64, row);
                }
            }
            c = last;
        }
        Ok(())
    }
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => job(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| McError::ThreadPool(e.to_string()))?
            .install(job),
    }
}

fn prepare<'a>(
    model: &'a dyn DiffusionModel,
    x0: f64,
    functionals: &'a [Functional],
    config: &SimConfig,
) -> Result<Dynamics<'a>> {
    config.validate()?;
    if functionals.is_empty() {
        return Err(invalid("no functionals requested"));
    }
    for f in functionals {
        f.validate(model, x0)?;
    }
    Dynamics::new(model, config.scheme)
}

/// Simulates `config.n` paths from `x0` and streams, in path order, the value of every
/// functional on each path. All functionals share the same paths.
pub fn simulate_paths(
    model: &dyn DiffusionModel,
    x0: f64,
    functionals: &[Functional],
    config: &SimConfig,
    mut sink: impl FnMut(u64, &[PathValue]) + Send,
) -> Result<()> {
    let dynamics = prepare(model, x0, functionals, config)?;
    let runner = Runner {
        dynamics,
        functionals,
        x0,
        dt: config.dt,
        horizon: config.horizon,
        bridge: config.bridge_correction,
        paired: false,
        seed: config.seed,
    };
    with_pool(config.threads, || runner.run(config.n, &mut sink))
}

/// Coupled estimates at `dt` and `dt/2` on a common subsample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Richardson {
    pub paths: u64,
    pub coarse: f64,
    pub fine: f64,
    /// `fine - coarse`.
    pub shift: f64,
    /// Standard error of the shift from paired differences.
    pub shift_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub functional: Functional,
    pub estimate: f64,
    /// Sample standard deviation over `√n_effective`.
    pub se: f64,
    pub n: u64,
    /// Paths with a finite value.
    pub n_effective: u64,
    pub censored: u64,
    pub dt: f64,
    pub seed: u64,
    pub richardson: Option<Richardson>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sq: f64,
    censored: u64,
}

impl Moments {
    fn push(&mut self, v: PathValue) {
        match v {
            None => self.censored += 1,
            Some(v) if v.is_finite() => {
                self.n += 1;
                self.sum += v;
                self.sq += v * v;
            }
            Some(_) => {}
        }
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    fn se(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let m = self.sum / n;
        let var = ((self.sq - n * m * m) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Monte Carlo estimates of several functionals on shared paths.
pub fn estimate_many(
    model: &dyn DiffusionModel,
    x0: f64,
    functionals: &[Functional],
    config: &SimConfig,
) -> Result<Vec<SimEstimate>> {
    let dynamics = prepare(model, x0, functionals, config)?;
    let width = functionals.len();
    with_pool(config.threads, || {
        let main = Runner {
            dynamics,
            functionals,
            x0,
            dt: config.dt,
            horizon: config.horizon,
            bridge: config.bridge_correction,
            paired: false,
            seed: config.seed,
        };
        let mut acc = vec![Moments::default(); width];
        main.run(config.n, &mut |_, row| {
            for (m, v) in acc.iter_mut().zip(row) {
                m.push(*v);
            }
        })?;
        for (f, m) in functionals.iter().zip(&acc) {
            if m.censored as f64 > MAX_CENSORED * config.n as f64 {
                return Err(McError::HorizonTooShort {
                    functional: f.name(),
                    censored: m.censored,
                    paths: config.n,
                    horizon: config.horizon,
                });
            }
        }

        let rich = config.richardson_size();
        let shifts = if rich > 0 {
            let seed = splitmix64(config.seed ^ RICHARDSON_SALT);
            let coarse = Runner { paired: true, seed, ..main };
            let fine = Runner { dt: 0.5 * config.dt, paired: false, seed, ..main };
            let mut a = Vec::with_capacity(rich as usize * width);
            coarse.run(rich, &mut |_, row| a.extend_from_slice(row))?;
            let mut b = Vec::with_capacity(rich as usize * width);
            fine.run(rich, &mut |_, row| b.extend_from_slice(row))?;
            (0..width)
                .map(|i| {
                    let mut mc = Moments::default();
                    let mut mf = Moments::default();
                    let mut md = Moments::default();
                    for p in 0..rich as usize {
                        let (u, v) = (a[p * width + i], b[p * width + i]);
                        if let (Some(u), Some(v)) = (u, v) {
                            if u.is_finite() && v.is_finite() {
                                mc.push(Some(u));
                                mf.push(Some(v));
                                md.push(Some(v - u));
                            }
                        }
                    }
                    Some(Richardson {
                        paths: md.n,
                        coarse: mc.mean(),
                        fine: mf.mean(),
                        shift: md.mean(),
                        shift_se: md.se(),
                    })
                })
                .collect()
        } else {
            vec![None; width]
        };

        Ok(functionals
            .iter()
            .zip(acc)
            .zip(shifts)
            .map(|((f, m), richardson)| SimEstimate {
                functional: *f,
                estimate: m.mean(),
                se: m.se(),
                n: config.n,
                n_effective: m.n,
                censored: m.censored,
                dt: config.dt,
                seed: config.seed,
                richardson,
            })
            .collect())
    })
}

/// Monte Carlo estimate of one functional.
pub fn estimate(model: &dyn DiffusionModel, x0: f64, functional: Functional, config: &SimConfig) -> Result<SimEstimate> {
    Ok(estimate_many(model, x0, &[functional], config)?.remove(0))
}

/// The first `steps` steps of path number `path`, as seen by the functionals.
pub fn trace(model: &dyn DiffusionModel, x0: f64, config: &SimConfig, path: u64, steps: usize) -> Result<Vec<Step>> {
    config.validate()?;
    if !model.contains(x0) {
        return Err(invalid(format!("start {x0} lies outside the state interval")));
    }
    let dynamics = Dynamics::new(model, config.scheme)?;
    let mut walker = Walker::new(dynamics, x0, config.dt, config.bridge_correction, false, config.seed, path);
    (0..steps).map(|k| walker.advance(k as f64 * config.dt)).collect()
}

/// Raw per-path values of one functional, in path order, skipping censored paths and paths
/// off the conditioning event.
pub fn sample(model: &dyn DiffusionModel, x0: f64, functional: Functional, config: &SimConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(config.n as usize);
    let mut censored = 0u64;
    simulate_paths(model, x0, &[functional], config, |_, row| match row[0] {
        Some(v) if v.is_finite() => out.push(v),
        Some(_) => {}
        None => censored += 1,
    })?;
    if censored as f64 > MAX_CENSORED * config.n as f64 {
        return Err(McError::HorizonTooShort {
            functional: functional.name(),
            censored,
            paths: config.n,
            horizon: config.horizon,
        });
    }
    Ok(out)
}
