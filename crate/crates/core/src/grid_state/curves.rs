use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    SeaLevel,
    SedimentSupply,
}

/// Piecewise-linear sea-level (m) and sediment-supply (m³/yr) curves sharing
/// one set of knot times (years).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCurves {
    knots: Vec<f64>,
    sea_level: Vec<f64>,
    sediment_supply: Vec<f64>,
}

impl ParameterCurves {
    pub fn new(knots: Vec<f64>, sea_level: Vec<f64>, sediment_supply: Vec<f64>) -> Result<Self> {
        let c = ParameterCurves { knots, sea_level, sediment_supply };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::invalid("parameter curves need at least one knot"));
        }
        if self.sea_level.len() != self.knots.len() || self.sediment_supply.len() != self.knots.len() {
            return Err(Error::invalid(format!(
                "curve lengths ({}, {}) must match knot count {}",
                self.sea_level.len(),
                self.sediment_supply.len(),
                self.knots.len()
            )));
        }
        if let Some(w) = self.knots.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!("knots must be strictly increasing (at index {})", w + 1)));
        }
        let all = self.knots.iter().chain(&self.sea_level).chain(&self.sediment_supply);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameter curves must be finite"));
        }
        if let Some(i) = self.sediment_supply.iter().position(|v| *v < 0.0) {
            return Err(Error::invalid(format!("sediment supply must be non-negative (knot {i})")));
        }
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self, which: CurveKind) -> &[f64] {
        match which {
            CurveKind::SeaLevel => &self.sea_level,
            CurveKind::SedimentSupply => &self.sediment_supply,
        }
    }

    pub(crate) fn values_mut(&mut self, which: CurveKind) -> &mut [f64] {
        match which {
            CurveKind::SeaLevel => &mut self.sea_level,
            CurveKind::SedimentSupply => &mut self.sediment_supply,
        }
    }

    pub(crate) fn from_raw(knots: Vec<f64>, sea_level: Vec<f64>, sediment_supply: Vec<f64>) -> Self {
        ParameterCurves { knots, sea_level, sediment_supply }
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::OutOfRange { t, start: self.start(), end: self.end() });
        }
        Ok(())
    }

    /// Index of the knot interval `[knots[i], knots[i+1]]` containing `t`.
    fn segment(&self, t: f64) -> usize {
        let n = self.knots.len();
        if n == 1 {
            return 0;
        }
        // partition_point gives the first knot > t
        let upper = self.knots.partition_point(|k| *k <= t);
        upper.clamp(1, n - 1) - 1
    }

    /// Linear interpolation between bracketing knots. No extrapolation.
    pub fn eval(&self, which: CurveKind, t: f64) -> Result<f64> {
        self.check_range(t)?;
        let v = self.values(which);
        if self.knots.len() == 1 {
            return Ok(v[0]);
        }
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        if t == t0 {
            return Ok(v[i]);
        }
        if t == t1 {
            return Ok(v[i + 1]);
        }
        let w = (t - t0) / (t1 - t0);
        Ok(v[i] + w * (v[i + 1] - v[i]))
    }

    /// Exact integral of the piecewise-linear curve over `[a, b]`.
    pub fn integrate(&self, which: CurveKind, a: f64, b: f64) -> Result<f64> {
        self.check_range(a)?;
        self.check_range(b)?;
        if b < a {
            return Err(Error::invalid(format!("integration bounds reversed: [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        let mut total = 0.0;
        let mut lo = a;
        let mut i = self.segment(a);
        while lo < b {
            let seg_end = self.knots[i + 1].min(b);
            let f_lo = self.eval(which, lo)?;
            let f_hi = self.eval(which, seg_end)?;
            total += 0.5 * (f_lo + f_hi) * (seg_end - lo);
            lo = seg_end;
            i += 1;
        }
        Ok(total)
    }
}
