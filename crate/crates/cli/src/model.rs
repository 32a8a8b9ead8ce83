use std::sync::Arc;

use drawdown_core::closedform::{Bessel3, BrownianMotion};
use drawdown_core::model::DiffusionModel;
use drawdown_core::numeigen::{NumericDiffusion, OdeEigenConfig};

use crate::args::{ModelArgs, ModelKind};
use crate::error::{invalid, Result};
use crate::expr::Expr;

pub struct BuiltModel {
    pub model: Box<dyn DiffusionModel>,
    /// Used when `--x` is not given.
    pub default_x: f64,
    pub label: String,
}

pub fn build(args: &ModelArgs) -> Result<BuiltModel> {
    if let Some(tol) = args.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(invalid("tol must lie in (0, 1)"));
        }
    }
    if args.model != ModelKind::Custom
        && (args.drift.is_some() || args.vol.is_some() || args.window.is_some() || args.left.is_some())
    {
        return Err(invalid("--drift, --vol, --left and --window need --model custom"));
    }
    match args.model {
        ModelKind::Bm => {
            if !(args.sigma > 0.0 && args.sigma.is_finite()) {
                return Err(invalid("sigma must be positive"));
            }
            if !args.mu.is_finite() {
                return Err(invalid("mu must be finite"));
            }
            Ok(BuiltModel {
                model: Box::new(BrownianMotion::new(args.mu, args.sigma)?),
                default_x: 0.0,
                label: format!("bm(mu={}, sigma={})", args.mu, args.sigma),
            })
        }
        ModelKind::Bes3 => Ok(BuiltModel { model: Box::new(Bessel3), default_x: 1.0, label: "bes3".into() }),
        ModelKind::Custom => custom(args),
    }
}

fn custom(args: &ModelArgs) -> Result<BuiltModel> {
    let (Some(drift_src), Some(vol_src)) = (&args.drift, &args.vol) else {
        return Err(invalid("--model custom needs --drift and --vol"));
    };
    let parse = |flag: &str, src: &str| Expr::parse(src).map_err(|e| invalid(format!("--{flag}: {e}")));
    let drift = Arc::new(parse("drift", drift_src)?);
    let vol = Arc::new(parse("vol", vol_src)?);
    let Some(window) = &args.window else {
        return Err(invalid("--model custom needs --window lo:hi"));
    };
    let (lo, hi) = window
        .split_once(':')
        .and_then(|(lo, hi)| Some((lo.trim().parse::<f64>().ok()?, hi.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| invalid(format!("--window: expected lo:hi, got '{window}'")))?;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(invalid("window must satisfy lo < hi"));
    }
    let left = args.left.unwrap_or(f64::NEG_INFINITY);
    let reference = args.reference.unwrap_or(0.5 * (lo + hi));
    let label = format!("custom(drift={drift}, vol={vol}, left={left}, window={lo}:{hi})");
    let d = Arc::clone(&drift);
    let v = Arc::clone(&vol);
    let model = NumericDiffusion::new(
        Arc::new(move |x| d.eval(x)),
        Arc::new(move |x| v.eval(x)),
        left,
        reference,
        OdeEigenConfig::new(lo, hi),
        label.clone(),
    )?;
    Ok(BuiltModel { model: Box::new(model), default_x: reference, label })
}
