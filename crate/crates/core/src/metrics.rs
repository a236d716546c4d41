//! Station RMSE, wet/dry contingency maps, the Critical Success Index and
//! the experiment summary table.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::observing::WetDryMap;
use crate::textio;

/// Root-mean-square difference of two aligned series.
pub fn rmse(sim: &[f64], reference: &[f64]) -> Result<f64> {
    if sim.len() != reference.len() {
        return Err(Error::Metric(format!(
            "series lengths differ: {} vs {}",
            sim.len(),
            reference.len()
        )));
    }
    if sim.is_empty() {
        return Err(Error::Metric("empty series".into()));
    }
    let ss: f64 = sim.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / sim.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contingency {
    Hit,
    Miss,
    FalseAlarm,
    CorrectNegative,
}

impl Contingency {
    pub fn label(self) -> char {
        match self {
            Contingency::Hit => 'H',
            Contingency::Miss => 'M',
            Contingency::FalseAlarm => 'F',
            Contingency::CorrectNegative => 'N',
        }
    }

    fn classify(sim_wet: bool, ref_wet: bool) -> Self {
        match (sim_wet, ref_wet) {
            (true, true) => Contingency::Hit,
            (false, true) => Contingency::Miss,
            (true, false) => Contingency::FalseAlarm,
            (false, false) => Contingency::CorrectNegative,
        }
    }
}

/// Per-cell contingency labels; cells outside the evaluation mask carry
/// `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyMap {
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<Option<Contingency>>,
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
    pub correct_negatives: usize,
}

impl ContingencyMap {
    fn from_cells(nx: usize, ny: usize, cells: Vec<Option<Contingency>>) -> Self {
        let count = |c| cells.iter().filter(|&&x| x == Some(c)).count();
        Self {
            nx,
            ny,
            hits: count(Contingency::Hit),
            misses: count(Contingency::Miss),
            false_alarms: count(Contingency::FalseAlarm),
            correct_negatives: count(Contingency::CorrectNegative),
            cells,
        }
    }

    pub fn evaluated(&self) -> usize {
        self.hits + self.misses + self.false_alarms + self.correct_negatives
    }
}

/// Cell-by-cell comparison of a simulated and a reference wet/dry map,
/// restricted to `mask` when given.
pub fn contingency(sim: &WetDryMap, reference: &WetDryMap, mask: Option<&[bool]>) -> Result<ContingencyMap> {
    if sim.nx != reference.nx || sim.ny != reference.ny || sim.wet.len() != reference.wet.len() {
        return Err(Error::Metric(format!(
            "map dimensions differ: {}x{} vs {}x{}",
            sim.nx, sim.ny, reference.nx, reference.ny
        )));
    }
    if let Some(m) = mask {
        crate::error::check_len("evaluation mask", sim.wet.len(), m.len())?;
    }
    let cells = (0..sim.wet.len())
        .map(|c| {
            mask.is_none_or(|m| m[c])
                .then(|| Contingency::classify(sim.wet[c], reference.wet[c]))
        })
        .collect();
    Ok(ContingencyMap::from_cells(sim.nx, sim.ny, cells))
}

/// `100 * H / (H + M + F)`, or `None` when neither map floods any
/// evaluated cell.
pub fn csi(map: &ContingencyMap) -> Option<f64> {
    let denom = map.hits + map.misses + map.false_alarms;
    (denom > 0).then(|| 100.0 * map.hits as f64 / denom as f64)
}

/// Grid of `H`/`M`/`F`/`N` labels, `-` for cells outside the mask; rows
/// from south (`j = 0`) to north.
pub fn write_contingency_map(path: &Path, map: &ContingencyMap) -> Result<()> {
    let mut out = String::new();
    for j in 0..map.ny {
        let row: Vec<String> = (0..map.nx)
            .map(|i| map.cells[j * map.nx + i].map_or('-', Contingency::label).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    textio::write(path, &out)
}

pub fn read_contingency_map(path: &Path) -> Result<ContingencyMap> {
    let mut cells = Vec::new();
    let mut nx = None;
    let mut ny = 0;
    for (line, text) in textio::data_lines(path)? {
        let row = text
            .split(',')
            .map(|f| match f.trim() {
                "H" => Ok(Some(Contingency::Hit)),
                "M" => Ok(Some(Contingency::Miss)),
                "F" => Ok(Some(Contingency::FalseAlarm)),
                "N" => Ok(Some(Contingency::CorrectNegative)),
                "-" => Ok(None),
                other => Err(Error::parse(path, line, format!("unknown label `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        match nx {
            None => nx = Some(row.len()),
            Some(n) if n != row.len() => return Err(Error::parse(path, line, "ragged row")),
            _ => {}
        }
        cells.extend(row);
        ny += 1;
    }
    Ok(ContingencyMap::from_cells(nx.unwrap_or(0), ny, cells))
}

/// Skill of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub experiment: String,
    /// RMSE per station, in the table's station order (m).
    pub station_rmse: Vec<f64>,
    /// CSI per map date, in the table's date order (%).
    pub date_csi: Vec<Option<f64>>,
}

/// Experiments × (station RMSE, date CSI).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub stations: Vec<String>,
    pub dates: Vec<f64>,
    pub rows: Vec<MetricsReport>,
}

/// Assembles reports into a table, rejecting rows evaluated on different
/// station or date sets.
pub fn summarize(stations: &[String], dates: &[f64], reports: Vec<MetricsReport>) -> Result<SummaryTable> {
    for r in &reports {
        if r.station_rmse.len() != stations.len() || r.date_csi.len() != dates.len() {
            return Err(Error::Metric(format!(
                "experiment `{}` was evaluated on a different observation set",
                r.experiment
            )));
        }
        if r.station_rmse.iter().any(|v| !(*v >= 0.0))
            || r.date_csi.iter().flatten().any(|v| !(0.0..=100.0).contains(v))
        {
            return Err(Error::Metric(format!(
                "experiment `{}` has out-of-range metrics",
                r.experiment
            )));
        }
    }
    Ok(SummaryTable {
        stations: stations.to_vec(),
        dates: dates.to_vec(),
        rows: reports,
    })
}

fn csi_field(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl SummaryTable {
    fn header(&self) -> Vec<String> {
        std::iter::once("experiment".to_string())
            .chain(self.stations.iter().map(|s| format!("rmse_{s}")))
            .chain(self.dates.iter().map(|d| format!("csi_{d}")))
            .collect()
    }

    /// Full-precision CSV.
    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",") + "\n";
        for r in &self.rows {
            let fields: Vec<String> = std::iter::once(r.experiment.clone())
                .chain(r.station_rmse.iter().map(f64::to_string))
                .chain(r.date_csi.iter().map(|&c| csi_field(c)))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Column-aligned text with RMSE to 3 decimals and CSI to 2.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                std::iter::once(r.experiment.clone())
                    .chain(r.station_rmse.iter().map(|v| format!("{v:.3}")))
                    .chain(r.date_csi.iter().map(|c| c.map_or("NA".into(), |x| format!("{x:.2}"))))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|k| {
                rows.iter()
                    .map(|r| r[k].len())
                    .chain([header[k].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        format!("{c:<w$}", w = widths[k])
                    } else {
                        format!("{c:>w$}", w = widths[k])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    pub fn write(&self, csv_path: &Path, text_path: &Path) -> Result<()> {
        textio::write(csv_path, &self.to_csv())?;
        textio::write(text_path, &self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(nx: usize, ny: usize, wet: &[u8]) -> WetDryMap {
        WetDryMap {
            nx,
            ny,
            wet: wet.iter().map(|&w| w == 1).collect(),
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert!((rmse(&[1.0, 2.0, 3.0], &[2.0, 4.0, 3.0]).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn contingency_two_by_two() {
        // sim [[W,D],[W,D]], ref [[W,W],[D,D]] with rows j = 0, 1
        let sim = map(2, 2, &[1, 0, 1, 0]);
        let reference = map(2, 2, &[1, 1, 0, 0]);
        let c = contingency(&sim, &reference, None).unwrap();
        assert_eq!((c.hits, c.misses, c.false_alarms, c.correct_negatives), (1, 1, 1, 1));
        assert!(contingency(&sim, &map(4, 1, &[1, 0, 0, 0]), None).is_err());
    }

    #[test]
    fn csi_examples() {
        let all_wet = map(2, 2, &[1, 1, 1, 1]);
        let all_dry = map(2, 2, &[0, 0, 0, 0]);
        assert_eq!(csi(&contingency(&all_wet, &all_wet, None).unwrap()), Some(100.0));
        assert_eq!(csi(&contingency(&all_wet, &all_dry, None).unwrap()), Some(0.0));
        assert_eq!(csi(&contingency(&all_dry, &all_dry, None).unwrap()), None);
        let c = ContingencyMap::from_cells(
            5,
            1,
            vec![
                Some(Contingency::Hit),
                Some(Contingency::Hit),
                Some(Contingency::Hit),
                Some(Contingency::Miss),
                Some(Contingency::FalseAlarm),
            ],
        );
        assert_eq!(csi(&c), Some(60.0));
    }

    #[test]
    fn mask_excludes_cells() {
        let sim = map(2, 1, &[1, 1]);
        let reference = map(2, 1, &[1, 0]);
        let c = contingency(&sim, &reference, Some(&[true, false])).unwrap();
        assert_eq!(c.cells, vec![Some(Contingency::Hit), None]);
        assert_eq!(c.evaluated(), 1);
    }

    #[test]
    fn summary_shapes() {
        let t = summarize(
            &["a".into()],
            &[3600.0],
            vec![MetricsReport {
                experiment: "OL".into(),
                station_rmse: vec![0.5],
                date_csi: vec![None],
            }],
        )
        .unwrap();
        assert_eq!(t.to_csv(), "experiment,rmse_a,csi_3600\nOL,0.5,NA\n");
        assert_eq!(t.to_text().lines().count(), 2);
        let bad = summarize(
            &["a".into()],
            &[],
            vec![MetricsReport {
                experiment: "OL".into(),
                station_rmse: vec![],
                date_csi: vec![],
            }],
        );
        assert!(bad.is_err());
    }
}
