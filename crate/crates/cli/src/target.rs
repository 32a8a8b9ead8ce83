//! Laws and products addressable from the command line.

use clap::ValueEnum;
use drawdown_core::inversion::{clamp_probability, invert, TransformFn, DEFAULT_ORDER};
use drawdown_core::law::{LawResult, Method, Solver};
use drawdown_core::model::DiffusionModel;
use drawdown_core::pricing::{HazardSpec, Payoff, Price, PricingSpec};
use drawdown_mc::Functional;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Target {
    /// E e^{-q T} on exit from (y, z) through z.
    ExitTransform,
    /// E e^{-q T} on reaching `level` below the start before a drawup of b.
    DownBeforeDrawup,
    /// E e^{-q T} on reaching `level` above the start before a drawdown of a.
    UpBeforeDrawdown,
    /// P(running max at the drawdown time of a exceeds `level`).
    MaxAtDrawdown,
    /// E e^{-q T} at the drawdown time of a.
    DrawdownTransform,
    /// E e^{-q T} at the drawup time of b.
    DrawupTransform,
    /// P(drawdown of a before drawup of b and an exponential clock of rate q).
    DdBeforeDu,
    /// P(drawup of b before drawdown of a and the clock).
    DuBeforeDd,
    /// P(the clock rings before both).
    ClockFirst,
    /// P(drawdown time of a <= t).
    DrawdownCdf,
    OccExitUp,
    OccExitDown,
    OccBelowUntilUp,
    OccBelowStartUntilDd,
    OccDdAboveUntilDd,
    OccDuBelowUntilDd,
    OccDdAboveAtExp,
    /// Digital paying at t when the drawdown spent more than k above y.
    Parisian,
    /// Option on the alpha-quantile of the drawdown, linear or capped at `cap`.
    Quantile,
    /// Default at constant rate q before a drawdown of a.
    DefaultConstant,
    /// Default at rate q while the drawdown exceeds y.
    DefaultCorridor,
    /// Default at rate q while below the start.
    DefaultBelowStart,
    /// Default at rate q while the drawup is below y.
    DefaultDrawupDeficit,
}

/// One grid parameter of a target.
#[derive(Debug, Clone, Copy)]
pub struct Param {
    pub name: &'static str,
    pub default: Option<f64>,
    /// Left out of the row when not given.
    pub optional: bool,
}

const fn req(name: &'static str) -> Param {
    Param { name, default: None, optional: false }
}

const X: Param = Param { name: "x", default: None, optional: false };
const RATE: Param = Param { name: "r", default: Some(0.0), optional: false };
const CAP: Param = Param { name: "cap", default: None, optional: true };

/// How a Monte Carlo mean maps onto the target value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McMap {
    Identity,
    Complement,
    Discount(f64),
}

impl McMap {
    pub fn apply(self, est: f64, se: f64) -> (f64, f64) {
        match self {
            McMap::Identity => (est, se),
            McMap::Complement => (1.0 - est, se),
            McMap::Discount(d) => (d * est, d * se),
        }
    }
}

/// Named parameter values of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs(pub Vec<(&'static str, f64)>);

impl Inputs {
    pub fn get(&self, name: &str) -> f64 {
        self.opt(name).unwrap_or_else(|| panic!("parameter {name} missing from the grid"))
    }

    pub fn opt(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// An analytic value with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    pub value: f64,
    pub error: f64,
    pub method: Method,
    pub branch: Option<String>,
}

impl From<LawResult> for Value {
    fn from(r: LawResult) -> Self {
        Value { value: r.value, error: r.error, method: r.method, branch: r.diagnostics.branch }
    }
}

impl From<Price> for Value {
    fn from(p: Price) -> Self {
        Value { value: p.value, error: p.error, method: p.method, branch: p.diagnostics.branch }
    }
}

impl Target {
    pub fn name(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }

    pub fn is_product(self) -> bool {
        matches!(
            self,
            Target::Parisian
                | Target::Quantile
                | Target::DefaultConstant
                | Target::DefaultCorridor
                | Target::DefaultBelowStart
                | Target::DefaultDrawupDeficit
        )
    }

    /// Grid parameters in output order; the start `x` is always first.
    pub fn params(self) -> Vec<Param> {
        let rest: &[Param] = match self {
            Target::ExitTransform => &[req("q"), req("y"), req("z")],
            Target::DownBeforeDrawup => &[req("q"), req("level"), req("b")],
            Target::UpBeforeDrawdown => &[req("q"), req("level"), req("a")],
            Target::MaxAtDrawdown => &[req("level"), req("a")],
            Target::DrawdownTransform => &[req("q"), req("a")],
            Target::DrawupTransform => &[req("q"), req("b")],
            Target::DdBeforeDu | Target::DuBeforeDd | Target::ClockFirst => &[req("q"), req("a"), req("b")],
            Target::DrawdownCdf => &[req("a"), req("t")],
            Target::OccExitUp => &[req("q"), req("p"), req("y"), req("a"), req("b")],
            Target::OccExitDown => &[req("q"), req("y"), req("a"), req("b")],
            Target::OccBelowUntilUp => &[req("q"), req("p"), req("y"), req("b")],
            Target::OccBelowStartUntilDd => &[req("q"), req("a")],
            Target::OccDdAboveUntilDd | Target::OccDuBelowUntilDd => &[req("q"), req("y"), req("a")],
            Target::OccDdAboveAtExp => &[req("q"), req("p"), req("y")],
            Target::Parisian => &[req("y"), req("k"), req("t"), RATE],
            Target::Quantile => &[req("alpha"), req("t"), RATE, CAP],
            Target::DefaultConstant | Target::DefaultBelowStart => &[req("q"), req("a")],
            Target::DefaultCorridor | Target::DefaultDrawupDeficit => &[req("q"), req("y"), req("a")],
        };
        std::iter::once(X).chain(rest.iter().copied()).collect()
    }

    /// The simulated functional and how its mean maps onto this target.
    pub fn functional(self, i: &Inputs) -> (Functional, McMap) {
        let g = |n| i.get(n);
        use McMap::*;
        match self {
            Target::ExitTransform => (Functional::ExitTransform { q: g("q"), y: g("y"), z: g("z") }, Identity),
            Target::DownBeforeDrawup => {
                (Functional::DownBeforeDrawup { q: g("q"), n: g("level"), b: g("b") }, Identity)
            }
            Target::UpBeforeDrawdown => {
                (Functional::UpBeforeDrawdown { q: g("q"), m: g("level"), a: g("a") }, Identity)
            }
            Target::MaxAtDrawdown => (Functional::MaxAtDrawdown { m: g("level"), a: g("a") }, Identity),
            Target::DrawdownTransform => (Functional::DrawdownTransform { q: g("q"), a: g("a") }, Identity),
            Target::DrawupTransform => (Functional::DrawupTransform { q: g("q"), b: g("b") }, Identity),
            Target::DdBeforeDu => (Functional::DrawdownFirst { q: g("q"), a: g("a"), b: g("b") }, Identity),
            Target::DuBeforeDd => (Functional::DrawupFirst { q: g("q"), a: g("a"), b: g("b") }, Identity),
            Target::ClockFirst => (Functional::ClockFirst { q: g("q"), a: g("a"), b: g("b") }, Identity),
            Target::DrawdownCdf => (Functional::DrawdownCdf { a: g("a"), t: g("t") }, Identity),
            Target::OccExitUp => (
                Functional::OccExitUp { q: g("q"), p: g("p"), y: g("y"), a: g("a"), b: g("b") },
                Identity,
            ),
            Target::OccExitDown => {
                (Functional::OccExitDown { q: g("q"), y: g("y"), a: g("a"), b: g("b") }, Identity)
            }
            Target::OccBelowUntilUp => {
                (Functional::OccBelowUntilUp { q: g("q"), p: g("p"), y: g("y"), b: g("b") }, Identity)
            }
            Target::OccBelowStartUntilDd => (Functional::OccBelowStartUntilDd { q: g("q"), a: g("a") }, Identity),
            Target::OccDdAboveUntilDd => {
                (Functional::OccDdAboveUntilDd { q: g("q"), y: g("y"), a: g("a") }, Identity)
            }
            Target::OccDuBelowUntilDd => {
                (Functional::OccDuBelowUntilDd { q: g("q"), y: g("y"), a: g("a") }, Identity)
            }
            Target::OccDdAboveAtExp => (Functional::OccDdAboveAtExp { q: g("q"), p: g("p"), y: g("y") }, Identity),
            Target::Parisian => (
                Functional::ParisianExceed { y: g("y"), k: g("k"), t: g("t") },
                Discount((-g("r") * g("t")).exp()),
            ),
            Target::Quantile => (
                Functional::QuantilePayoff { alpha: g("alpha"), t: g("t"), cap: i.opt("cap") },
                Discount((-g("r") * g("t")).exp()),
            ),
            Target::DefaultConstant => (Functional::DrawdownTransform { q: g("q"), a: g("a") }, Complement),
            Target::DefaultCorridor => (Functional::OccDdAboveUntilDd { q: g("q"), y: g("y"), a: g("a") }, Complement),
            Target::DefaultBelowStart => (Functional::OccBelowStartUntilDd { q: g("q"), a: g("a") }, Complement),
            Target::DefaultDrawupDeficit => {
                (Functional::OccDuBelowUntilDd { q: g("q"), y: g("y"), a: g("a") }, Complement)
            }
        }
    }

    /// Preconditions checked for every grid point before anything is evaluated.
    pub fn validate(self, model: &dyn DiffusionModel, i: &Inputs) -> Result<()> {
        let (f, _) = self.functional(i);
        f.validate(model, i.get("x")).map_err(|e| match e {
            drawdown_mc::McError::InvalidConfig(msg) => invalid(msg),
            other => invalid(other.to_string()),
        })?;
        if let Some(r) = i.opt("r") {
            if !(r >= 0.0) {
                return Err(invalid("r must be nonnegative"));
            }
        }
        match self {
            Target::DefaultConstant
            | Target::DefaultCorridor
            | Target::DefaultBelowStart
            | Target::DefaultDrawupDeficit
                if !(i.get("q") > 0.0) =>
            {
                Err(invalid("q must be positive"))
            }
            Target::DefaultCorridor | Target::OccDdAboveUntilDd if !(i.get("y") < i.get("a")) => {
                Err(invalid("y must be below a"))
            }
            Target::Parisian if !(i.get("k") > 0.0) => Err(invalid("k must be positive")),
            _ => Ok(()),
        }
    }

    pub fn analytic(self, s: &Solver<'_>, i: &Inputs) -> drawdown_core::Result<Value> {
        let g = |n| i.get(n);
        let x = g("x");
        let v: Value = match self {
            Target::ExitTransform => s.exit_transform(g("q"), x, g("y"), g("z"))?.into(),
            Target::DownBeforeDrawup => s.down_before_drawup(g("q"), x, g("level"), g("b"))?.into(),
            Target::UpBeforeDrawdown => s.up_before_drawdown(g("q"), x, g("level"), g("a"))?.into(),
            Target::MaxAtDrawdown => s.max_at_drawdown_survival(x, g("level"), g("a"))?.into(),
            Target::DrawdownTransform => s.drawdown_transform(g("q"), x, g("a"))?.into(),
            Target::DrawupTransform => s.drawup_transform(g("q"), x, g("b"))?.into(),
            Target::DdBeforeDu => s.dd_before_du(g("q"), x, g("a"), g("b"))?.into(),
            Target::DuBeforeDd => s.du_before_dd(g("q"), x, g("a"), g("b"))?.into(),
            Target::ClockFirst => {
                let dd = s.dd_before_du(g("q"), x, g("a"), g("b"))?;
                let du = s.du_before_dd(g("q"), x, g("a"), g("b"))?;
                let method = if dd.method == Method::ClosedForm && du.method == Method::ClosedForm {
                    Method::ClosedForm
                } else {
                    Method::Quadrature
                };
                Value { value: 1.0 - dd.value - du.value, error: dd.error + du.error, method, branch: None }
            }
            Target::DrawdownCdf => {
                let a = g("a");
                let f = TransformFn::new(move |q| Ok(s.drawdown_transform(q, x, a)?.value / q)).probability();
                let r = invert(&f, g("t"), DEFAULT_ORDER)?;
                let value = clamp_probability(r.value, r.diagnostic)?;
                Value { value, error: r.diagnostic.abs(), method: Method::Inversion, branch: None }
            }
            Target::OccExitUp => s.occ_exit_up(g("q"), g("p"), x, g("y"), g("a"), g("b"))?.into(),
            Target::OccExitDown => s.occ_exit_down(g("q"), x, g("y"), g("a"), g("b"))?.into(),
            Target::OccBelowUntilUp => s.occ_below_until_up(g("q"), g("p"), x, g("y"), g("b"))?.into(),
            Target::OccBelowStartUntilDd => s.occ_below_start_until_dd(g("q"), x, g("a"))?.into(),
            Target::OccDdAboveUntilDd => s.occ_dd_above_until_dd(g("q"), x, g("y"), g("a"))?.into(),
            Target::OccDuBelowUntilDd => s.occ_du_below_until_dd(g("q"), x, g("y"), g("a"))?.into(),
            Target::OccDdAboveAtExp => s.occ_dd_above_at_exp(g("q"), g("p"), x, g("y"))?.into(),
            Target::Parisian => {
                let spec = PricingSpec { barrier: g("y"), strike: g("k"), maturity: g("t"), rate: g("r"), alpha: 1.0 };
                s.parisian_digital_price(x, &spec)?.into()
            }
            Target::Quantile => {
                let spec = PricingSpec { barrier: 0.0, strike: 0.0, maturity: g("t"), rate: g("r"), alpha: g("alpha") };
                let payoff = match i.opt("cap") {
                    Some(c) => Payoff::capped_linear(c),
                    None => Payoff::linear(),
                };
                s.alpha_quantile_price(x, &spec, &payoff)?.into()
            }
            Target::DefaultConstant => s.default_before_drawdown(x, HazardSpec::ConstantRate { q: g("q") }, g("a"))?.into(),
            Target::DefaultCorridor => {
                s.default_before_drawdown(x, HazardSpec::DrawdownCorridor { q: g("q"), y: g("y") }, g("a"))?.into()
            }
            Target::DefaultBelowStart => s.default_before_drawdown(x, HazardSpec::BelowStart { q: g("q") }, g("a"))?.into(),
            Target::DefaultDrawupDeficit => {
                s.default_before_drawdown(x, HazardSpec::DrawupDeficit { q: g("q"), y: g("y") }, g("a"))?.into()
            }
        };
        Ok(v)
    }
}
