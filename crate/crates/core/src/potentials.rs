//! Free-energy potentials with their first two derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A potential `F` together with `F′` and `F″`.
#[derive(Clone)]
pub struct Potential {
    name: String,
    f: ScalarFn,
    df: ScalarFn,
    d2f: ScalarFn,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("name", &self.name).finish()
    }
}

impl Potential {
    /// User-defined potential from the three callbacks.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        (self.d2f)(u)
    }

    /// `F′` applied componentwise.
    pub fn derivative_nodal(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|&x| (self.df)(x)).collect()
    }

    /// Looks up a named potential: `double_well_1_4` or `double_well_1_8`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "double_well_1_4" => Ok(double_well(0.25)),
            "double_well_1_8" => Ok(double_well(0.125)),
            other => Err(Error::InvalidParameter(format!("unknown potential `{other}`"))),
        }
    }
}

/// `F(u) = scale·(u²−1)²`.
pub fn double_well(scale: f64) -> Potential {
    let name = if scale == 0.25 {
        "double_well_1_4".to_string()
    } else if scale == 0.125 {
        "double_well_1_8".to_string()
    } else {
        format!("double_well_{scale}")
    };
    Potential::new(
        name,
        move |u| scale * (u * u - 1.0).powi(2),
        move |u| 4.0 * scale * u * (u * u - 1.0),
        move |u| 4.0 * scale * (3.0 * u * u - 1.0),
    )
}
