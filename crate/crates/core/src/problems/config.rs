//! Problem configuration files (TOML, flat keys).
//!
//! Every key is optional and overrides the built-in default of the problem.
//! Vectors are bracketed arrays, matrices are arrays of rows:
//!
//! ```toml
//! # rotational / unstable / obstacle LQR
//! ac = [[0.0, 2.0], [-2.0, 0.0]]
//! c = [0.3, -0.2]
//! u_bar = 0.4           # `inf` drops the bounds
//! dt = 0.05
//! horizon = 60
//! scheme = "zoh"        # or "euler"
//! x0 = [1.0, 0.5]
//! q = [[0.01, 0.0], [0.0, 0.01]]
//! r = [[0.05, 0.0], [0.0, 0.05]]
//! qn = [[100.0, 0.0], [0.0, 100.0]]
//! obstacle_lo = [-0.45, 0.0]   # obstacle LQR only: axis-aligned box
//! obstacle_hi = [-0.3, 0.2]
//! ```
//!
//! ```toml
//! # car parking
//! d_axle = 2.0
//! dt = 0.03
//! t_final = 15.0
//! a_max = 10.0
//! w_max = 0.5
//! x0 = [1.0, 1.0, 4.71238898038469, 0.0]
//! state_weight = [1e-3, 1e-3, 1e-3, 1e-4]
//! control_weight = [0.1, 1e-3]
//! terminal_weight = [100.0, 100.0, 100.0, 30.0]
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use super::car::CarParkConfig;
use super::lqr::{Discretization, PolyhedralObstacle, RotationalSetup};
use crate::error::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqrKeys {
    ac: Option<Vec<Vec<f64>>>,
    c: Option<Vec<f64>>,
    u_bar: Option<f64>,
    dt: Option<f64>,
    horizon: Option<usize>,
    scheme: Option<String>,
    x0: Option<Vec<f64>>,
    q: Option<Vec<Vec<f64>>>,
    r: Option<Vec<Vec<f64>>>,
    qn: Option<Vec<Vec<f64>>>,
    obstacle_lo: Option<Vec<f64>>,
    obstacle_hi: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CarKeys {
    d_axle: Option<f64>,
    dt: Option<f64>,
    t_final: Option<f64>,
    a_max: Option<f64>,
    w_max: Option<f64>,
    x0: Option<Vec<f64>>,
    state_weight: Option<Vec<f64>>,
    control_weight: Option<Vec<f64>>,
    terminal_weight: Option<Vec<f64>>,
}

fn parse<'de, T: Deserialize<'de>>(text: &'de str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn matrix(name: &str, rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} must be a non-empty array of equal-length rows")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

/// Reads a configuration file into a string.
pub fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Applies LQR keys to `base`. Returns the setup and, when both obstacle
/// keys are present, the box obstacle they describe.
pub fn apply_lqr_config(
    text: &str,
    mut base: RotationalSetup,
) -> Result<(RotationalSetup, Option<PolyhedralObstacle>)> {
    let k: LqrKeys = parse(text)?;
    if let Some(v) = k.ac {
        base.ac = matrix("ac", v)?;
    }
    if let Some(v) = k.c {
        base.c = DVector::from_vec(v);
    }
    if let Some(v) = k.u_bar {
        base.u_bar = v;
    }
    if let Some(v) = k.dt {
        base.dt = v;
    }
    if let Some(v) = k.horizon {
        base.horizon = v;
    }
    if let Some(s) = k.scheme {
        base.scheme = match s.as_str() {
            "zoh" => Discretization::ZeroOrderHold,
            "euler" => Discretization::Euler,
            other => return Err(Error::Config(format!("unknown scheme {other:?} (expected \"zoh\" or \"euler\")"))),
        };
    }
    if let Some(v) = k.x0 {
        base.x0 = DVector::from_vec(v);
    }
    if let Some(v) = k.q {
        base.q = matrix("q", v)?;
    }
    if let Some(v) = k.r {
        base.r = matrix("r", v)?;
    }
    if let Some(v) = k.qn {
        base.qn = matrix("qn", v)?;
    }
    let obstacle = match (k.obstacle_lo, k.obstacle_hi) {
        (Some(lo), Some(hi)) => Some(PolyhedralObstacle::axis_box(&lo, &hi)?),
        (None, None) => None,
        _ => return Err(Error::Config("obstacle_lo and obstacle_hi must be given together".into())),
    };
    // Surface dimension and PSD errors now rather than at solve time.
    base.to_config()?.validate()?;
    Ok((base, obstacle))
}

/// Applies car keys to `base`.
pub fn apply_car_config(text: &str, mut base: CarParkConfig) -> Result<CarParkConfig> {
    let k: CarKeys = parse(text)?;
    let scalars = [
        (&mut base.d_axle, k.d_axle),
        (&mut base.dt, k.dt),
        (&mut base.t_final, k.t_final),
        (&mut base.a_max, k.a_max),
        (&mut base.w_max, k.w_max),
    ];
    for (slot, v) in scalars {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let vectors = [
        (&mut base.x0, k.x0),
        (&mut base.state_weight, k.state_weight),
        (&mut base.control_weight, k.control_weight),
        (&mut base.terminal_weight, k.terminal_weight),
    ];
    for (slot, v) in vectors {
        if let Some(v) = v {
            *slot = DVector::from_vec(v);
        }
    }
    base.validate()?;
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_keeps_defaults() {
        let (setup, obs) = apply_lqr_config("", RotationalSetup::rotational()).unwrap();
        assert_eq!(setup, RotationalSetup::rotational());
        assert!(obs.is_none());
        assert_eq!(apply_car_config("", CarParkConfig::default()).unwrap(), CarParkConfig::default());
    }

    #[test]
    fn lqr_overrides() {
        let text = "ac = [[0.0, 1.0], [-1.0, 0.0]]\nu_bar = inf\nhorizon = 10\nscheme = \"euler\"\n\
                    obstacle_lo = [0.0, 0.0]\nobstacle_hi = [1.0, 1.0]\n";
        let (setup, obs) = apply_lqr_config(text, RotationalSetup::rotational()).unwrap();
        assert_eq!(setup.ac, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(setup.u_bar.is_infinite());
        assert_eq!(setup.horizon, 10);
        assert_eq!(setup.scheme, Discretization::Euler);
        assert_eq!(obs.unwrap().eval(&DVector::from_vec(vec![0.5, 0.5])).0, 0.5);
    }

    #[test]
    fn car_overrides() {
        let cfg = apply_car_config("t_final = 3.0\ncontrol_weight = [1.0, 2.0]", CarParkConfig::default()).unwrap();
        assert_eq!(cfg.t_final, 3.0);
        assert_eq!(cfg.control_weight.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn bad_files_are_rejected() {
        let base = RotationalSetup::rotational;
        assert!(matches!(apply_lqr_config("nosuch = 1.0", base()), Err(Error::Config(_))));
        assert!(matches!(apply_lqr_config("ac = [[1.0], [1.0, 2.0]]", base()), Err(Error::Config(_))));
        assert!(matches!(apply_lqr_config("scheme = \"rk4\"", base()), Err(Error::Config(_))));
        assert!(matches!(apply_lqr_config("obstacle_lo = [0.0, 0.0]", base()), Err(Error::Config(_))));
        assert!(apply_lqr_config("x0 = [1.0]", base()).is_err());
        assert!(apply_car_config("dt = 0.07", CarParkConfig::default()).is_err());
        assert!(matches!(apply_car_config("dt = ", CarParkConfig::default()), Err(Error::Config(_))));
    }
}
