use super::StructuredGrid;
use crate::error::{check_finite, check_len, Error, Result};

/// Discharge time series (m³/s), linearly interpolated between samples and
/// held constant beyond the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Hydrograph {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Hydrograph {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_len("hydrograph values", times.len(), values.len())?;
        if times.is_empty() {
            return Err(Error::Domain("empty hydrograph".into()));
        }
        check_finite("hydrograph times", &times)?;
        check_finite("hydrograph values", &values)?;
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("hydrograph times must increase strictly".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("hydrograph discharge must be non-negative".into()));
        }
        Ok(Self { times, values })
    }

    pub fn constant(q: f64, t0: f64, t1: f64) -> Result<Self> {
        Self::new(vec![t0, t1], vec![q, q])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] + w * (self.values[k] - self.values[k - 1])
    }

    /// First sample time strictly after `t`, if any.
    pub fn next_knot_after(&self, t: f64) -> Option<f64> {
        let k = self.times.partition_point(|&x| x <= t);
        self.times.get(k).copied()
    }

    /// Exact integral of the interpolant over `[t0, t1]` (m³).
    pub fn volume(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut pts = vec![t0];
        pts.extend(self.times.iter().copied().filter(|&t| t > t0 && t < t1));
        pts.push(t1);
        pts.windows(2)
            .map(|w| 0.5 * (self.value_at(w[0]) + self.value_at(w[1])) * (w[1] - w[0]))
            .sum()
    }

    /// Same time axis, every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Downstream stage condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutletCondition {
    /// `stage = a * Q^b + z0`, with `a > 0`, `b > 0`.
    RatingCurve {
        a: f64,
        b: f64,
        z0: f64,
    },
    FixedStage(f64),
}

impl OutletCondition {
    pub fn stage(&self, discharge: f64) -> f64 {
        match *self {
            OutletCondition::RatingCurve { a, b, z0 } => a * discharge.max(0.0).powf(b) + z0,
            OutletCondition::FixedStage(s) => s,
        }
    }
}

/// Upstream discharge on west-edge inlet cells and a stage condition on
/// east-edge outlet cells; every other edge face is a wall.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    pub inflow: Hydrograph,
    /// Multiplier applied to `inflow` (the forcing correction factor).
    pub inflow_scale: f64,
    /// Rows `j` of the west-edge cells receiving the inflow.
    pub inlet_rows: Vec<usize>,
    pub outlet: OutletCondition,
    /// Rows `j` of the east-edge cells using the outlet condition.
    pub outlet_rows: Vec<usize>,
}

impl BoundaryConditions {
    pub fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        if let Some(&j) = self
            .inlet_rows
            .iter()
            .chain(&self.outlet_rows)
            .find(|&&j| j >= grid.ny())
        {
            return Err(Error::OutsideGrid(format!("boundary row {j}")));
        }
        if !(self.inflow_scale >= 0.0 && self.inflow_scale.is_finite()) {
            return Err(Error::Domain(format!(
                "inflow scale must be finite and >= 0, got {}",
                self.inflow_scale
            )));
        }
        if let OutletCondition::RatingCurve { a, b, z0 } = self.outlet {
            if !(a > 0.0 && b > 0.0 && z0.is_finite()) {
                return Err(Error::Domain(
                    "rating curve must be monotone increasing (a > 0, b > 0)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Scaled boundary discharge (m³/s) at time `t`.
    pub fn inflow_at(&self, t: f64) -> f64 {
        self.inflow_scale * self.inflow.value_at(t)
    }
}

/// Strickler coefficient (m^{1/3}/s) per friction zone.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionField {
    pub zones: Vec<u32>,
    pub strickler: Vec<f64>,
    pub k_min: f64,
    pub k_max: f64,
}

impl FrictionField {
    pub fn new(zones: Vec<u32>, strickler: Vec<f64>, k_min: f64, k_max: f64) -> Result<Self> {
        let f = Self {
            zones,
            strickler,
            k_min,
            k_max,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn uniform(k: f64) -> Self {
        Self {
            zones: vec![0],
            strickler: vec![k],
            k_min: k.min(1.0),
            k_max: k.max(1.0e3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_len("strickler coefficients", self.zones.len(), self.strickler.len())?;
        if !(self.k_min > 0.0 && self.k_min < self.k_max) {
            return Err(Error::Domain(format!(
                "friction bounds must satisfy 0 < K_min < K_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        for (z, &k) in self.zones.iter().zip(&self.strickler) {
            if !(k >= self.k_min && k <= self.k_max) {
                return Err(Error::Domain(format!(
                    "zone {z}: Strickler {k} outside [{}, {}]",
                    self.k_min, self.k_max
                )));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, zone: u32) -> Option<f64> {
        self.zones.iter().position(|&z| z == zone).map(|k| self.strickler[k])
    }

    /// Strickler coefficient of every grid cell.
    pub fn per_cell(&self, grid: &StructuredGrid) -> Result<Vec<f64>> {
        grid.friction_zones()
            .iter()
            .map(|&z| {
                self.coefficient(z)
                    .ok_or_else(|| Error::Domain(format!("friction zone {z} has no coefficient")))
            })
            .collect()
    }
}
