//! Grid, state-snapshot and hydrograph files.
//!
//! * grid: header line `nx,ny,dx,dy`, then one `i,j,z,friction_zone,subdomain_id`
//!   row per cell (`-` when the cell has no subdomain);
//! * snapshot: `time,<t>` manifest line, header `i,j,h,qx,qy`, one row per cell;
//! * hydrograph: header `time,discharge`, then `epoch_seconds,m3_per_s` rows.

use std::path::Path;

use super::{HydraulicState, Hydrograph, StructuredGrid};
use crate::error::{Error, Result};
use crate::textio::{self, parse_f64, parse_usize, split_fields};

pub fn write_grid(path: &Path, grid: &StructuredGrid) -> Result<()> {
    let mut out = format!("{},{},{},{}\n", grid.nx(), grid.ny(), grid.dx(), grid.dy());
    for c in 0..grid.len() {
        let (i, j) = grid.coords(c);
        let sub = grid.subdomain_labels()[c].map_or_else(|| "-".to_string(), |s| s.to_string());
        out.push_str(&format!("{i},{j},{},{},{sub}\n", grid.z()[c], grid.friction_zones()[c]));
    }
    textio::write(path, &out)
}

pub fn read_grid(path: &Path) -> Result<StructuredGrid> {
    let lines = textio::data_lines(path)?;
    let (hl, header) = lines
        .first()
        .ok_or_else(|| Error::parse(path, 1, "missing `nx,ny,dx,dy` header"))?;
    let h = split_fields(header);
    if h.len() != 4 {
        return Err(Error::parse(path, *hl, "expected `nx,ny,dx,dy`"));
    }
    let nx = parse_usize(path, *hl, h[0])?;
    let ny = parse_usize(path, *hl, h[1])?;
    let dx = parse_f64(path, *hl, h[2])?;
    let dy = parse_f64(path, *hl, h[3])?;
    let n = nx * ny;
    let mut z = vec![f64::NAN; n];
    let mut zone = vec![0u32; n];
    let mut sub = vec![None; n];
    let mut seen = vec![false; n];
    for (line, text) in &lines[1..] {
        let f = split_fields(text);
        if f.len() != 5 {
            return Err(Error::parse(path, *line, "expected `i,j,z,friction_zone,subdomain_id`"));
        }
        let i = parse_usize(path, *line, f[0])?;
        let j = parse_usize(path, *line, f[1])?;
        if i >= nx || j >= ny {
            return Err(Error::parse(path, *line, format!("cell ({i},{j}) outside grid")));
        }
        let c = j * nx + i;
        if seen[c] {
            return Err(Error::parse(path, *line, format!("cell ({i},{j}) listed twice")));
        }
        seen[c] = true;
        z[c] = parse_f64(path, *line, f[2])?;
        zone[c] = f[3]
            .parse()
            .map_err(|_| Error::parse(path, *line, "bad friction zone"))?;
        sub[c] = if f[4] == "-" {
            None
        } else {
            Some(
                f[4].parse()
                    .map_err(|_| Error::parse(path, *line, "bad subdomain id"))?,
            )
        };
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::parse(path, lines.len(), format!("cell {c} missing")));
    }
    StructuredGrid::new(nx, ny, dx, dy, z, zone, sub)
}

pub fn write_state(path: &Path, grid: &StructuredGrid, state: &HydraulicState) -> Result<()> {
    let mut out = format!("time,{}\ni,j,h,qx,qy\n", state.t);
    for c in 0..grid.len() {
        let (i, j) = grid.coords(c);
        out.push_str(&format!("{i},{j},{},{},{}\n", state.h[c], state.qx[c], state.qy[c]));
    }
    textio::write(path, &out)
}

pub fn read_state(path: &Path, grid: &StructuredGrid) -> Result<HydraulicState> {
    let lines = textio::data_lines(path)?;
    if lines.len() < 2 {
        return Err(Error::parse(path, 1, "missing manifest or header"));
    }
    let m = split_fields(&lines[0].1);
    if m.len() != 2 || m[0] != "time" {
        return Err(Error::parse(path, lines[0].0, "expected `time,<seconds>`"));
    }
    let mut state = HydraulicState::dry(grid, parse_f64(path, lines[0].0, m[1])?);
    for (line, text) in &lines[2..] {
        let f = split_fields(text);
        if f.len() != 5 {
            return Err(Error::parse(path, *line, "expected `i,j,h,qx,qy`"));
        }
        let i = parse_usize(path, *line, f[0])?;
        let j = parse_usize(path, *line, f[1])?;
        if !grid.contains(i, j) {
            return Err(Error::parse(path, *line, "cell outside grid"));
        }
        let c = grid.index(i, j);
        state.h[c] = parse_f64(path, *line, f[2])?;
        state.qx[c] = parse_f64(path, *line, f[3])?;
        state.qy[c] = parse_f64(path, *line, f[4])?;
    }
    Ok(state)
}

pub fn write_hydrograph(path: &Path, hydrograph: &Hydrograph) -> Result<()> {
    let mut out = String::from("time,discharge\n");
    for (t, q) in hydrograph.times().iter().zip(hydrograph.values()) {
        out.push_str(&format!("{t},{q}\n"));
    }
    textio::write(path, &out)
}

pub fn read_hydrograph(path: &Path) -> Result<Hydrograph> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, text) in textio::data_lines(path)? {
        let f = split_fields(&text);
        if f.len() != 2 {
            return Err(Error::parse(path, line, "expected `time,discharge`"));
        }
        if f[0] == "time" {
            continue;
        }
        times.push(parse_f64(path, line, f[0])?);
        values.push(parse_f64(path, line, f[1])?);
    }
    Hydrograph::new(times, values)
}
