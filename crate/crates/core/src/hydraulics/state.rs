use super::StructuredGrid;
use crate::error::{check_len, Error, Result};

/// Depth and unit discharge per cell at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    pub h: Vec<f64>,
    pub qx: Vec<f64>,
    pub qy: Vec<f64>,
    pub t: f64,
}

impl HydraulicState {
    pub fn dry(grid: &StructuredGrid, t: f64) -> Self {
        let n = grid.len();
        Self {
            h: vec![0.0; n],
            qx: vec![0.0; n],
            qy: vec![0.0; n],
            t,
        }
    }

    /// Still water at free-surface elevation `eta`; cells with bed above
    /// `eta` are dry.
    pub fn lake_at_rest(grid: &StructuredGrid, eta: f64, t: f64) -> Self {
        let mut s = Self::dry(grid, t);
        for (h, &z) in s.h.iter_mut().zip(grid.z()) {
            *h = (eta - z).max(0.0);
        }
        s
    }

    pub fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        check_len("depth", grid.len(), self.h.len())?;
        check_len("x discharge", grid.len(), self.qx.len())?;
        check_len("y discharge", grid.len(), self.qy.len())?;
        if let Some(c) = self.h.iter().position(|&h| !(h >= 0.0 && h.is_finite())) {
            let (i, j) = grid.coords(c);
            return Err(Error::Domain(format!("invalid depth {} at ({i},{j})", self.h[c])));
        }
        Ok(())
    }

    /// Water surface elevation `z + h` of one cell.
    pub fn wse(&self, grid: &StructuredGrid, cell: usize) -> f64 {
        grid.z()[cell] + self.h[cell]
    }

    /// Total stored water volume (m³).
    pub fn volume(&self, grid: &StructuredGrid) -> f64 {
        self.h.iter().sum::<f64>() * grid.cell_area()
    }
}
