use drawdown_core::model::DiffusionModel;
use rand::rngs::SmallRng;
use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::path::{fraction_below, open_uniform, Step};

/// A path functional. Levels are absolute; the start point is passed separately.
///
/// Variants up to `QuantilePayoff` produce values whose mean is a law of the analytic library.
/// The remaining variants return raw per-path samples for distributional checks. A sample of
/// `NaN` means the path did not land on the conditioning event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "functional", rename_all = "kebab-case")]
pub enum Functional {
    /// `E e^{-qτ_y}; τ_y < τ_z`.
    ExitTransform { q: f64, y: f64, z: f64 },
    /// `P(τ_n^- < σ̂_b ∧ e_q)`.
    DownBeforeDrawup { q: f64, n: f64, b: f64 },
    /// `P(τ_m^+ < σ_a ∧ e_q)`.
    UpBeforeDrawdown { q: f64, m: f64, a: f64 },
    /// `P(X̄_{σ_a} ≥ m)`.
    MaxAtDrawdown { m: f64, a: f64 },
    /// `E e^{-qσ_a}`.
    DrawdownTransform { q: f64, a: f64 },
    /// `E e^{-qσ̂_b}`.
    DrawupTransform { q: f64, b: f64 },
    /// `P(σ_a < σ̂_b ∧ e_q)`.
    DrawdownFirst { q: f64, a: f64, b: f64 },
    /// `P(σ̂_b < σ_a ∧ e_q)`.
    DrawupFirst { q: f64, a: f64, b: f64 },
    /// `P(e_q < σ_a ∧ σ̂_b)`.
    ClockFirst { q: f64, a: f64, b: f64 },
    /// `E e^{-q A - p τ_b^+}; τ_b^+ < τ_a^-` with `A` the time below `y`.
    OccExitUp { q: f64, p: f64, y: f64, a: f64, b: f64 },
    /// `E e^{-q A}; τ_a^- < τ_b^+` with `A` the time below `y`.
    OccExitDown { q: f64, y: f64, a: f64, b: f64 },
    /// `E exp(-q ∫_0^{τ_b^+} 1{X<y} dt - p τ_b^+)`, with `e_p` as a killing clock.
    OccBelowUntilUp { q: f64, p: f64, y: f64, b: f64 },
    /// `E e^{-q B}` with `B` the time below the start before `σ_a`.
    OccBelowStartUntilDd { q: f64, a: f64 },
    /// `E e^{-q C}` with `C` the time the drawdown spends above `y` before `σ_a`.
    OccDdAboveUntilDd { q: f64, y: f64, a: f64 },
    /// `E e^{-q D}` with `D` the time the drawup spends below `y` before `σ_a`.
    OccDuBelowUntilDd { q: f64, y: f64, a: f64 },
    /// `E e^{-p E}` with `E` the time the drawdown spends above `y` before `e_q`.
    OccDdAboveAtExp { q: f64, p: f64, y: f64 },
    /// `P(σ_a ≤ t)`.
    DrawdownCdf { a: f64, t: f64 },
    /// `P(∫_0^t 1{Y_s > y} ds > k)`.
    ParisianExceed { y: f64, k: f64, t: f64 },
    /// `E min(Q, cap)` with `Q` the `alpha`-quantile of the drawdown over `[0, t]`.
    QuantilePayoff { alpha: f64, t: f64, cap: Option<f64> },
    /// Sample of `σ_a`.
    DrawdownTime { a: f64 },
    /// Sample of the time the drawdown spends above `y` before `σ_a`.
    DrawdownOccupation { y: f64, a: f64 },
    /// Sample of `X_t`.
    Terminal { t: f64 },
    /// Sample of `X_{σ_b}` on `{σ_a < σ̂_b ∧ e_q}`.
    DrawdownLevelFirst { q: f64, a: f64, b: f64 },
}

/// Per-path working state of a functional.
#[derive(Debug, Clone, Default)]
pub(crate) struct Tracker {
    occ: f64,
    clock: f64,
    level: f64,
    top: f64,
    mark: Option<f64>,
    ys: Vec<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be nonnegative")))
    }
}

fn clock(rate: f64, rng: &mut SmallRng) -> f64 {
    if rate > 0.0 {
        rng.sample(Exp::new(rate).expect("positive rate"))
    } else {
        f64::INFINITY
    }
}

impl Functional {
    pub fn name(&self) -> &'static str {
        match self {
            Functional::ExitTransform { .. } => "exit-transform",
            Functional::DownBeforeDrawup { .. } => "down-before-drawup",
            Functional::UpBeforeDrawdown { .. } => "up-before-drawdown",
            Functional::MaxAtDrawdown { .. } => "max-at-drawdown",
            Functional::DrawdownTransform { .. } => "drawdown-transform",
            Functional::DrawupTransform { .. } => "drawup-transform",
            Functional::DrawdownFirst { .. } => "drawdown-first",
            Functional::DrawupFirst { .. } => "drawup-first",
            Functional::ClockFirst { .. } => "clock-first",
            Functional::OccExitUp { .. } => "occ-exit-up",
            Functional::OccExitDown { .. } => "occ-exit-down",
            Functional::OccBelowUntilUp { .. } => "occ-below-until-up",
            Functional::OccBelowStartUntilDd { .. } => "occ-below-start-until-dd",
            Functional::OccDdAboveUntilDd { .. } => "occ-dd-above-until-dd",
            Functional::OccDuBelowUntilDd { .. } => "occ-du-below-until-dd",
            Functional::OccDdAboveAtExp { .. } => "occ-dd-above-at-exp",
            Functional::DrawdownCdf { .. } => "drawdown-cdf",
            Functional::ParisianExceed { .. } => "parisian-exceed",
            Functional::QuantilePayoff { .. } => "quantile-payoff",
            Functional::DrawdownTime { .. } => "drawdown-time",
            Functional::DrawdownOccupation { .. } => "drawdown-occupation",
            Functional::Terminal { .. } => "terminal",
            Functional::DrawdownLevelFirst { .. } => "drawdown-level-first",
        }
    }

    /// Range every per-path value falls in, when known.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Functional::QuantilePayoff { cap, .. } => Some((0.0, cap.unwrap_or(f64::INFINITY))),
            Functional::DrawdownTime { .. }
            | Functional::DrawdownOccupation { .. }
            | Functional::Terminal { .. }
            | Functional::DrawdownLevelFirst { .. } => None,
            _ => Some((0.0, 1.0)),
        }
    }

    pub fn validate(&self, model: &dyn DiffusionModel, x0: f64) -> Result<()> {
        if !model.contains(x0) {
            return Err(invalid(format!("start {x0} lies outside the state interval")));
        }
        match *self {
            Functional::ExitTransform { q, y, z } => {
                nonnegative("q", q)?;
                if !((y - x0) * (z - x0) < 0.0) {
                    return Err(invalid("start must lie strictly between y and z"));
                }
            }
            Functional::DownBeforeDrawup { q, n, b } => {
                nonnegative("q", q)?;
                positive("b", b)?;
                if !(n < x0) {
                    return Err(invalid("n must lie below the start"));
                }
            }
            Functional::UpBeforeDrawdown { q, m, a } => {
                nonnegative("q", q)?;
                positive("a", a)?;
                if !(m > x0) {
                    return Err(invalid("m must lie above the start"));
                }
            }
            Functional::MaxAtDrawdown { m, a } => {
                positive("a", a)?;
                if !m.is_finite() {
                    return Err(invalid("m must be finite"));
                }
            }
            Functional::DrawdownTransform { q, a } => {
                nonnegative("q", q)?;
                positive("a", a)?;
            }
            Functional::DrawupTransform { q, b } => {
                nonnegative("q", q)?;
                positive("b", b)?;
            }
            Functional::DrawdownFirst { q, a, b }
            | Functional::DrawupFirst { q, a, b }
            | Functional::DrawdownLevelFirst { q, a, b } => {
                nonnegative("q", q)?;
                positive("a", a)?;
                positive("b", b)?;
            }
            Functional::ClockFirst { q, a, b } => {
                positive("q", q)?;
                positive("a", a)?;
                positive("b", b)?;
            }
            Functional::OccExitUp { q, p, y, a, b } => {
                nonnegative("q", q)?;
                nonnegative("p", p)?;
                if !(a < x0 && x0 < b) || !y.is_finite() {
                    return Err(invalid("need a < x < b and a finite y"));
                }
            }
            Functional::OccExitDown { q, y, a, b } => {
                nonnegative("q", q)?;
                if !(a < x0 && x0 < b) || !y.is_finite() {
                    return Err(invalid("need a < x < b and a finite y"));
                }
            }
            Functional::OccBelowUntilUp { q, p, y, b } => {
                nonnegative("q", q)?;
                nonnegative("p", p)?;
                if !(x0 < b) || !y.is_finite() {
                    return Err(invalid("need x < b and a finite y"));
                }
            }
            Functional::OccBelowStartUntilDd { q, a } => {
                nonnegative("q", q)?;
                positive("a", a)?;
            }
            Functional::OccDdAboveUntilDd { q, y, a } | Functional::OccDuBelowUntilDd { q, y, a } => {
                nonnegative("q", q)?;
                positive("a", a)?;
                positive("y", y)?;
            }
            Functional::OccDdAboveAtExp { q, p, y } => {
                positive("q", q)?;
                nonnegative("p", p)?;
                positive("y", y)?;
            }
            Functional::DrawdownCdf { a, t } => {
                positive("a", a)?;
                positive("t", t)?;
            }
            Functional::ParisianExceed { y, k, t } => {
                positive("y", y)?;
                nonnegative("k", k)?;
                positive("t", t)?;
                if !(k < t) {
                    return Err(invalid("k must be below t"));
                }
            }
            Functional::QuantilePayoff { alpha, t, cap } => {
                positive("t", t)?;
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(invalid("alpha must lie in (0, 1]"));
                }
                if let Some(c) = cap {
                    positive("cap", c)?;
                }
            }
            Functional::DrawdownTime { a } => positive("a", a)?,
            Functional::DrawdownOccupation { y, a } => {
                positive("y", y)?;
                positive("a", a)?;
            }
            Functional::Terminal { t } => positive("t", t)?,
        }
        Ok(())
    }

    pub(crate) fn start(&self, x0: f64, clocks: &mut SmallRng) -> Tracker {
        let clock = match *self {
            Functional::DownBeforeDrawup { q, .. }
            | Functional::UpBeforeDrawdown { q, .. }
            | Functional::DrawdownFirst { q, .. }
            | Functional::DrawupFirst { q, .. }
            | Functional::ClockFirst { q, .. }
            | Functional::OccDdAboveAtExp { q, .. }
            | Functional::DrawdownLevelFirst { q, .. } => clock(q, clocks),
            Functional::OccBelowUntilUp { p, .. } => clock(p, clocks),
            Functional::DrawdownCdf { t, .. }
            | Functional::ParisianExceed { t, .. }
            | Functional::QuantilePayoff { t, .. }
            | Functional::Terminal { t } => t,
            _ => f64::INFINITY,
        };
        Tracker { occ: 0.0, clock, level: x0, top: 0.0, mark: None, ys: Vec::new() }
    }

    /// Feeds one step; returns the path value once it is determined.
    pub(crate) fn step(&self, tr: &mut Tracker, s: &Step, bridge: bool, rng: &mut SmallRng) -> Option<f64> {
        let rang = tr.clock <= s.t1();
        let (h, t1) = if rang { ((tr.clock - s.t0).max(0.0), tr.clock) } else { (s.h, s.t1()) };
        let dd = |a: f64, rng: &mut SmallRng| s.reaches(s.drawdown0(), s.drawdown1(), a, bridge, rng);
        let du = |b: f64, rng: &mut SmallRng| s.reaches(s.drawup0(), s.drawup1(), b, bridge, rng);
        let up = |m: f64, rng: &mut SmallRng| s.reaches(s.x0, s.x1, m, bridge, rng);
        let down = |n: f64, rng: &mut SmallRng| s.reaches(-s.x0, -s.x1, -n, bridge, rng);
        match *self {
            Functional::ExitTransform { q, y, z } => {
                let (hit_y, hit_z) = if y < z { (down(y, rng), up(z, rng)) } else { (up(y, rng), down(z, rng)) };
                if hit_y {
                    Some((-q * t1).exp())
                } else if hit_z {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::DownBeforeDrawup { n, b, .. } => {
                if rang {
                    Some(0.0)
                } else if down(n, rng) {
                    Some(1.0)
                } else if du(b, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::UpBeforeDrawdown { m, a, .. } => {
                if rang {
                    Some(0.0)
                } else if up(m, rng) {
                    Some(1.0)
                } else if dd(a, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::MaxAtDrawdown { m, a } => {
                if s.max1 >= m {
                    Some(1.0)
                } else if dd(a, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::DrawdownTransform { q, a } => dd(a, rng).then(|| (-q * t1).exp()),
            Functional::DrawupTransform { q, b } => du(b, rng).then(|| (-q * t1).exp()),
            Functional::DrawdownFirst { a, b, .. } => {
                if rang {
                    Some(0.0)
                } else if dd(a, rng) {
                    Some(1.0)
                } else if du(b, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::DrawupFirst { a, b, .. } => {
                if rang {
                    Some(0.0)
                } else if dd(a, rng) {
                    Some(0.0)
                } else if du(b, rng) {
                    Some(1.0)
                } else {
                    None
                }
            }
            Functional::ClockFirst { a, b, .. } => {
                if rang {
                    Some(1.0)
                } else if dd(a, rng) || du(b, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::OccExitUp { q, p, y, a, b } => {
                tr.occ += h * fraction_below(s.x0, s.x1, y);
                if up(b, rng) {
                    Some((-q * tr.occ - p * t1).exp())
                } else if down(a, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::OccExitDown { q, y, a, b } => {
                tr.occ += h * fraction_below(s.x0, s.x1, y);
                if down(a, rng) {
                    Some((-q * tr.occ).exp())
                } else if up(b, rng) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::OccBelowUntilUp { q, y, b, .. } => {
                tr.occ += h * fraction_below(s.x0, s.x1, y);
                if rang {
                    Some(0.0)
                } else if up(b, rng) {
                    Some((-q * tr.occ).exp())
                } else {
                    None
                }
            }
            Functional::OccBelowStartUntilDd { q, a } => {
                tr.occ += h * fraction_below(s.x0, s.x1, tr.level);
                dd(a, rng).then(|| (-q * tr.occ).exp())
            }
            Functional::OccDdAboveUntilDd { q, y, a } => {
                tr.occ += h * (1.0 - fraction_below(s.drawdown0(), s.drawdown1(), y));
                dd(a, rng).then(|| (-q * tr.occ).exp())
            }
            Functional::OccDuBelowUntilDd { q, y, a } => {
                tr.occ += h * fraction_below(s.drawup0(), s.drawup1(), y);
                dd(a, rng).then(|| (-q * tr.occ).exp())
            }
            Functional::OccDdAboveAtExp { p, y, .. } => {
                tr.occ += h * (1.0 - fraction_below(s.drawdown0(), s.drawdown1(), y));
                rang.then(|| (-p * tr.occ).exp())
            }
            Functional::DrawdownCdf { a, .. } => {
                if dd(a, rng) {
                    Some(1.0)
                } else if rang {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::ParisianExceed { y, k, .. } => {
                tr.occ += h * (1.0 - fraction_below(s.drawdown0(), s.drawdown1(), y));
                if tr.occ > k {
                    Some(1.0)
                } else if rang {
                    Some(0.0)
                } else {
                    None
                }
            }
            Functional::QuantilePayoff { alpha, cap, .. } => {
                if alpha >= 1.0 {
                    let mut top = s.drawdown1();
                    if bridge {
                        // deepest point of the step measured from the maximum before it
                        let u = open_uniform(rng);
                        let dx = s.x1 - s.x0;
                        let low = 0.5 * (s.x0 + s.x1 - (dx * dx - 2.0 * s.var * u.ln()).sqrt());
                        top = top.max(s.max0 - low);
                    }
                    tr.top = tr.top.max(top);
                } else if h > 0.0 {
                    tr.ys.push(s.drawdown1());
                }
                if !rang {
                    return None;
                }
                let q = if alpha >= 1.0 { tr.top } else { upper_quantile(&mut tr.ys, alpha) };
                Some(cap.map_or(q, |c| q.min(c)))
            }
            Functional::DrawdownTime { a } => dd(a, rng).then(|| s.t1()),
            Functional::DrawdownOccupation { y, a } => {
                tr.occ += h * (1.0 - fraction_below(s.drawdown0(), s.drawdown1(), y));
                dd(a, rng).then_some(tr.occ)
            }
            Functional::Terminal { t } => {
                if !rang {
                    return None;
                }
                let f = (t - s.t0) / s.h;
                if f >= 1.0 - 1e-9 {
                    return Some(s.x1);
                }
                let z: f64 = rng.sample(StandardNormal);
                Some(s.x0 + f * (s.x1 - s.x0) + (s.var * f * (1.0 - f)).sqrt() * z)
            }
            Functional::DrawdownLevelFirst { a, b, .. } => {
                if rang {
                    return Some(f64::NAN);
                }
                if tr.mark.is_none() && dd(b, rng) {
                    tr.mark = Some(s.max1 - b);
                }
                if dd(a, rng) {
                    Some(tr.mark.unwrap_or(f64::NAN))
                } else if du(b, rng) {
                    Some(f64::NAN)
                } else {
                    None
                }
            }
        }
    }
}

/// Level exceeded for a fraction `1 - alpha` of equally weighted samples.
fn upper_quantile(ys: &mut [f64], alpha: f64) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    let n = ys.len();
    let above = ((1.0 - alpha) * n as f64).floor() as usize;
    let idx = n - 1 - above.min(n - 1);
    let (_, v, _) = ys.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    *v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_quantile_picks_order_statistic() {
        let mut ys: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(upper_quantile(&mut ys.clone(), 1.0), 9.0);
        assert_eq!(upper_quantile(&mut ys, 0.5), 4.0);
    }

    #[test]
    fn rejects_bad_geometry() {
        let bm = drawdown_core::closedform::BrownianMotion::new(0.0, 1.0).unwrap();
        let f = Functional::ExitTransform { q: 1.0, y: 1.0, z: 2.0 };
        assert!(f.validate(&bm, 0.0).is_err());
        let g = Functional::ParisianExceed { y: 0.3, k: 1.0, t: 1.0 };
        assert!(g.validate(&bm, 0.0).is_err());
        let h = Functional::DrawdownFirst { q: 0.5, a: -1.0, b: 1.0 };
        assert!(h.validate(&bm, 0.0).unwrap_err().to_string().contains("a must be positive"));
    }
}
