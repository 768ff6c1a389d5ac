//! Observation time grids.

use crate::error::{Error, Result};

/// `n_steps + 1` equally spaced points from `t0` to `t1`, both included.
pub fn uniform_grid(t0: f64, t1: f64, n_steps: usize) -> Vec<f64> {
    if n_steps == 0 {
        return vec![t0];
    }
    let dt = (t1 - t0) / n_steps as f64;
    let mut grid: Vec<f64> = (0..n_steps).map(|i| t0 + i as f64 * dt).collect();
    grid.push(t1);
    grid
}

/// Parses `"t0:t1:dt"` into an inclusive grid.
///
/// The step is rounded so that `t1` is hit exactly: the number of intervals is
/// `round((t1 − t0) / dt)`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let bad = |msg: &str| Error::InvalidParameter(format!("grid `{spec}`: {msg}"));
    if parts.len() != 3 {
        return Err(bad("expected t0:t1:dt"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>().map_err(|e| bad(&e.to_string())))
        .collect::<Result<_>>()?;
    let (t0, t1, dt) = (nums[0], nums[1], nums[2]);
    if !(t0 >= 0.0 && t1 >= t0 && t1.is_finite()) {
        return Err(bad("need 0 <= t0 <= t1"));
    }
    if t1 == t0 {
        return Ok(vec![t0]);
    }
    if !(dt > 0.0) {
        return Err(bad("dt must be positive"));
    }
    let n = ((t1 - t0) / dt).round().max(1.0) as usize;
    Ok(uniform_grid(t0, t1, n))
}

/// Checks that `grid` is nondecreasing and lies in `[t_start, t_end]`.
pub fn validate_grid(grid: &[f64], t_start: f64, t_end: f64) -> Result<()> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("observation grid must be sorted".into()));
    }
    if let (Some(&first), Some(&last)) = (grid.first(), grid.last()) {
        if first < t_start || last > t_end {
            return Err(Error::InvalidParameter(format!(
                "observation grid [{first}, {last}] is outside [{t_start}, {t_end}]"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_hits_endpoints() {
        let g = parse_grid("0:1:0.25").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(parse_grid("2:2:0.5").unwrap(), vec![2.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn validation() {
        assert!(validate_grid(&[0.0, 0.5, 1.0], 0.0, 1.0).is_ok());
        assert!(validate_grid(&[0.5, 0.0], 0.0, 1.0).is_err());
        assert!(validate_grid(&[0.0, 2.0], 0.0, 1.0).is_err());
    }
}
