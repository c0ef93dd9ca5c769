//! CSV and report writing. Decimal numbers, 12 significant digits, `inf` for infinity.

use std::fmt::Write as _;
use std::path::Path;

use lastzero::sim::MCEstimate;
use lastzero::{Extended, Solution, ValueSurface};

use crate::CliError;

/// Decimal rendering with 12 significant digits. NaN is refused.
pub fn num(v: f64) -> Result<String, CliError> {
    if v.is_nan() {
        return Err(CliError::Output("NaN in output".into()));
    }
    if v.is_infinite() {
        return Ok(if v > 0.0 { "inf".into() } else { "-inf".into() });
    }
    if v == 0.0 {
        return Ok("0".into());
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // drop trailing zeros after the point
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    Ok(if s == "-0" { "0".into() } else { s })
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn boundary_csv(sol: &Solution) -> Result<String, CliError> {
    let c = &sol.curve;
    let mut s = String::from("u,b,h\n");
    for ((u, b), h) in c.u_grid.iter().zip(&c.b_values).zip(&c.h_values) {
        writeln!(s, "{},{},{}", num(*u)?, num(*b)?, num(*h)?).unwrap();
    }
    Ok(s)
}

/// V on the solver's u grid times an x grid reaching a fifth past b(u_min).
pub fn value_csv(surface: &ValueSurface, n_x: usize) -> Result<String, CliError> {
    let c = surface.curve();
    let x_top = 1.2 * c.b_values[0].max(1.0);
    let mut s = String::from("u,x,V\n");
    for &u in &c.u_grid {
        for j in 0..=n_x {
            let x = -1.0 + (x_top + 1.0) * j as f64 / n_x as f64;
            let v = surface.value(u, x).map_err(CliError::from)?;
            writeln!(s, "{},{},{}", num(u)?, num(x)?, num(v)?).unwrap();
        }
    }
    Ok(s)
}

pub fn sim_csv(rows: &[(String, MCEstimate)]) -> Result<String, CliError> {
    let mut s = String::from("rule,n_paths,mean,stderr,censored_fraction,seed\n");
    for (label, e) in rows {
        writeln!(
            s,
            "{label},{},{},{},{},{}",
            e.n_paths,
            num(e.mean)?,
            num(e.stderr)?,
            num(e.censored_fraction)?,
            e.master_seed
        )
        .unwrap();
    }
    Ok(s)
}

fn ext(v: Extended) -> Result<String, CliError> {
    match v {
        Extended::Finite(x) => num(x),
        Extended::Infinite => Ok("inf".into()),
    }
}

/// Plain `key = value  [provenance]` lines.
pub fn report(sol: &Solution) -> Result<String, CliError> {
    let d = &sol.diagnostics;
    let c = &sol.curve;
    let mut s = String::new();
    writeln!(s, "family = {}", sol.surface.spec().model().name()).unwrap();
    writeln!(s, "v00 = {}  [quadrature, closed by root finding]", num(c.v00)?).unwrap();
    writeln!(s, "u_b = {}  [root finding]", ext(c.u_b)?).unwrap();
    writeln!(s, "closure_residual = {}  [finite difference]", num(d.closure_residual)?).unwrap();
    writeln!(s, "max_smooth_fit = {}  [finite difference]", num(d.max_smooth_fit)?).unwrap();
    if let Some(r) = d.reflected_term_max {
        writeln!(s, "reflected_term_max = {}  [quadrature]", num(r)?).unwrap();
    }
    writeln!(s, "outer_iterations = {}", d.outer_iterations).unwrap();
    writeln!(s, "inner_iterations = {}", d.inner_iterations).unwrap();
    writeln!(s, "kernel_paths = {}", d.kernel_paths).unwrap();
    Ok(s)
}

pub fn save(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    write(&dir.join(name), body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(1.0).unwrap(), "1");
        assert_eq!(num(-16.50395412345678).unwrap(), "-16.5039541235");
        assert_eq!(num(0.0123456789012345).unwrap(), "0.0123456789012");
        assert_eq!(num(123456789012345.0).unwrap(), "123456789012345");
        assert_eq!(num(f64::INFINITY).unwrap(), "inf");
        assert_eq!(num(-0.0).unwrap(), "0");
        assert!(num(f64::NAN).is_err());
    }
}
