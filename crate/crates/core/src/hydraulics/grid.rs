use std::collections::BTreeMap;

use crate::error::{check_finite, check_len, Error, Result};

/// Cell-centred rectangular grid. Cell `(i, j)` has flat index `j * nx + i`;
/// `i` runs along x (west to east), `j` along y (south to north).
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    z: Vec<f64>,
    friction_zone: Vec<u32>,
    subdomain: Vec<Option<u32>>,
    subdomain_cells: BTreeMap<u32, Vec<usize>>,
}

impl StructuredGrid {
    pub fn new(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        z: Vec<f64>,
        friction_zone: Vec<u32>,
        subdomain: Vec<Option<u32>>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Domain("grid needs at least one cell".into()));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::Domain(format!("cell sizes must be > 0, got {dx} x {dy}")));
        }
        let n = nx * ny;
        check_len("bed elevation", n, z.len())?;
        check_len("friction zones", n, friction_zone.len())?;
        check_len("subdomain labels", n, subdomain.len())?;
        check_finite("bed elevation", &z)?;
        let mut subdomain_cells: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (c, s) in subdomain.iter().enumerate() {
            if let Some(id) = s {
                subdomain_cells.entry(*id).or_default().push(c);
            }
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            z,
            friction_zone,
            subdomain,
            subdomain_cells,
        })
    }

    /// Flat bed, single friction zone, no subdomains.
    pub fn flat(nx: usize, ny: usize, dx: f64, dy: f64, z: f64) -> Result<Self> {
        let n = nx * ny;
        Self::new(nx, ny, dx, dy, vec![z; n], vec![0; n], vec![None; n])
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }
    pub fn z(&self) -> &[f64] {
        &self.z
    }
    pub fn friction_zones(&self) -> &[u32] {
        &self.friction_zone
    }
    pub fn subdomain_labels(&self) -> &[Option<u32>] {
        &self.subdomain
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny
    }

    /// Subdomain ids in ascending order.
    pub fn subdomain_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.subdomain_cells.keys().copied()
    }

    pub fn subdomain_cells(&self, id: u32) -> Option<&[usize]> {
        self.subdomain_cells.get(&id).map(Vec::as_slice)
    }

    /// Cells carrying any subdomain label.
    pub fn floodplain_mask(&self) -> Vec<bool> {
        self.subdomain.iter().map(Option::is_some).collect()
    }
}
