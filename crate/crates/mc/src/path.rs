use std::f64::consts::FRAC_1_SQRT_2;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::config::Dynamics;
use crate::error::{McError, Result};

/// Largest bridge exponent for which a crossing is still considered possible.
const CROSS_CUTOFF: f64 = 50.0;
/// Below this exponent the bridge extreme is resampled.
const EXTREME_CUTOFF: f64 = 40.0;

pub(crate) fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy)]
pub(crate) enum Stream {
    Noise = 1,
    Bridge = 2,
    Clock = 3,
}

/// Generator for one stream of one path, independent of how paths are scheduled.
pub(crate) fn stream(seed: u64, path: u64, which: Stream) -> SmallRng {
    let key = splitmix64(splitmix64(seed) ^ path);
    SmallRng::seed_from_u64(splitmix64(key ^ (which as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

/// Uniform on `(0, 1]`, safe to take the log of.
pub(crate) fn open_uniform(rng: &mut SmallRng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Probability that a Brownian bridge with endpoint distances `d0, d1 > 0` below a level
/// touches it, for bridge variance `var`.
pub fn crossing_probability(d0: f64, d1: f64, var: f64) -> f64 {
    if d0 <= 0.0 || d1 <= 0.0 {
        return 1.0;
    }
    let e = 2.0 * d0 * d1 / var;
    if e < CROSS_CUTOFF {
        (-e).exp()
    } else {
        0.0
    }
}

/// Fraction of a linear segment from `z0` to `z1` lying below `level`.
pub fn fraction_below(z0: f64, z1: f64, level: f64) -> f64 {
    match (z0 < level, z1 < level) {
        (true, true) => 1.0,
        (false, false) => 0.0,
        (true, false) => (level - z0) / (z1 - z0),
        (false, true) => (z0 - level) / (z0 - z1),
    }
}

/// One step of a simulated path, with running extremes before and after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    pub x0: f64,
    pub x1: f64,
    pub max0: f64,
    pub max1: f64,
    pub min0: f64,
    pub min1: f64,
    /// Conditional variance of the increment, `σ²(x0)·h`.
    pub var: f64,
}

impl Step {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn drawdown0(&self) -> f64 {
        self.max0 - self.x0
    }

    pub fn drawdown1(&self) -> f64 {
        self.max1 - self.x1
    }

    pub fn drawup0(&self) -> f64 {
        self.x0 - self.min0
    }

    pub fn drawup1(&self) -> f64 {
        self.x1 - self.min1
    }

    /// Whether a process going from `z0` to `z1` over this step reaches `level` from below.
    pub(crate) fn reaches(&self, z0: f64, z1: f64, level: f64, bridge: bool, rng: &mut SmallRng) -> bool {
        if z1 >= level {
            return true;
        }
        if !bridge {
            return false;
        }
        let p = crossing_probability(level - z0, level - z1, self.var);
        p > 0.0 && rng.random::<f64>() < p
    }
}

/// State of one path and the generators that drive it.
pub(crate) struct Walker<'a> {
    dynamics: Dynamics<'a>,
    dt: f64,
    sqrt_dt: f64,
    bridge: bool,
    paired: bool,
    path: u64,
    pub(crate) noise: SmallRng,
    pub(crate) uniforms: SmallRng,
    x: f64,
    v: [f64; 3],
    max: f64,
    min: f64,
}

impl<'a> Walker<'a> {
    /// `paired` draws two standard normal vectors per step and uses their scaled sum, so that
    /// a path at `dt` is coupled to the path at `dt/2` built from the same noise stream.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        dynamics: Dynamics<'a>,
        x0: f64,
        dt: f64,
        bridge: bool,
        paired: bool,
        seed: u64,
        path: u64,
    ) -> Self {
        Self {
            dynamics,
            dt,
            sqrt_dt: dt.sqrt(),
            bridge,
            paired,
            path,
            noise: stream(seed, path, Stream::Noise),
            uniforms: stream(seed, path, Stream::Bridge),
            x: x0,
            v: [x0, 0.0, 0.0],
            max: x0,
            min: x0,
        }
    }

    fn normals<const K: usize>(&mut self) -> [f64; K] {
        let mut z = [0.0; K];
        for zi in z.iter_mut() {
            *zi = self.noise.sample(StandardNormal);
        }
        if self.paired {
            for zi in z.iter_mut() {
                let w: f64 = self.noise.sample(StandardNormal);
                *zi = (*zi + w) * FRAC_1_SQRT_2;
            }
        }
        z
    }

    #[inline]
    pub(crate) fn advance(&mut self, t0: f64) -> Result<Step> {
        let x0 = self.x;
        let (x1, var) = match self.dynamics {
            Dynamics::Gaussian { mu, sigma } => {
                let [z] = self.normals::<1>();
                (x0 + mu * self.dt + sigma * self.sqrt_dt * z, sigma * sigma * self.dt)
            }
            Dynamics::Norm3d => {
                let z = self.normals::<3>();
                for (vi, zi) in self.v.iter_mut().zip(z) {
                    *vi += self.sqrt_dt * zi;
                }
                let r = (self.v[0] * self.v[0] + self.v[1] * self.v[1] + self.v[2] * self.v[2]).sqrt();
                (r, self.dt)
            }
            Dynamics::Euler { model, left } => {
                let [z] = self.normals::<1>();
                let s = model.volatility(x0);
                let x1 = x0 + model.drift(x0) * self.dt + s * self.sqrt_dt * z;
                if x1 <= left {
                    return Err(McError::NonFiniteState { path: self.path, t: t0 + self.dt, x: x1 });
                }
                (x1, s * s * self.dt)
            }
        };
        if !x1.is_finite() || !var.is_finite() {
            return Err(McError::NonFiniteState { path: self.path, t: t0 + self.dt, x: x1 });
        }
        let (max1, min1) = if self.bridge {
            (self.bridge_max(x0, x1, var), self.bridge_min(x0, x1, var))
        } else {
            (self.max.max(x1), self.min.min(x1))
        };
        let step = Step { t0, h: self.dt, x0, x1, max0: self.max, max1, min0: self.min, min1, var };
        self.x = x1;
        self.max = max1;
        self.min = min1;
        Ok(step)
    }

    fn bridge_max(&mut self, x0: f64, x1: f64, var: f64) -> f64 {
        let m = self.max;
        if x1 > m || 2.0 * (m - x0) * (m - x1) / var < EXTREME_CUTOFF {
            let u = open_uniform(&mut self.uniforms);
            let top = 0.5 * (x0 + x1 + ((x1 - x0) * (x1 - x0) - 2.0 * var * u.ln()).sqrt());
            m.max(top)
        } else {
            m
        }
    }

    fn bridge_min(&mut self, x0: f64, x1: f64, var: f64) -> f64 {
        let m = self.min;
        if x1 < m || 2.0 * (x0 - m) * (x1 - m) / var < EXTREME_CUTOFF {
            let u = open_uniform(&mut self.uniforms);
            let bottom = 0.5 * (x0 + x1 - ((x1 - x0) * (x1 - x0) - 2.0 * var * u.ln()).sqrt());
            m.min(bottom)
        } else {
            m
        }
    }
}
