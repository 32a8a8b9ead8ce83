//! Parameter grids: comma lists of numbers and inclusive `start:stop:step` ranges.

use crate::error::{invalid, Result};

/// Values of one parameter.
pub fn parse_values(name: &str, src: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in src.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(invalid(format!("--{name}: empty grid entry")));
        }
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(number(name, v)?),
            [start, stop, step] => {
                let (start, stop, step) = (number(name, start)?, number(name, stop)?, number(name, step)?);
                if !(step > 0.0) {
                    return Err(invalid(format!("--{name}: range step must be positive")));
                }
                if stop < start {
                    return Err(invalid(format!("--{name}: range end lies below its start")));
                }
                let count = ((stop - start) / step + 1e-9).floor();
                if count > 1e7 {
                    return Err(invalid(format!("--{name}: range has too many points")));
                }
                for i in 0..=count as u64 {
                    out.push(start + i as f64 * step);
                }
            }
            _ => return Err(invalid(format!("--{name}: expected a number or start:stop:step, got '{item}'"))),
        }
    }
    Ok(out)
}

fn number(name: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| invalid(format!("--{name}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(invalid(format!("{name} must be finite")));
    }
    Ok(v)
}

/// Cartesian product in the order given, the last axis varying fastest.
pub fn product(axes: &[(&'static str, Vec<f64>)], cap: usize) -> Result<Vec<Vec<(&'static str, f64)>>> {
    let mut total: usize = 1;
    for (_, values) in axes {
        total = total.saturating_mul(values.len());
    }
    if total > cap {
        return Err(invalid(format!("grid has {total} points, more than the cap of {cap}")));
    }
    let mut rows = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..total {
        rows.push(axes.iter().zip(&idx).map(|((n, v), &i)| (*n, v[i])).collect());
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].1.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(rows)
}
