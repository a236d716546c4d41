//! Matrix-form Muskingum routing over a river network.
//!
//! Each reach `i` obeys the classical Muskingum relation between its inflow
//! `I` (upstream outflows plus lateral inflow) and its outflow `Q`:
//!
//! ```text
//! Q_i(t+dt) = C1 I_i(t+dt) + C2 I_i(t) + C3 Q_i(t)
//! ```
//!
//! Stacking all reaches with the connectivity matrix `N` (`N[i][j] = 1` iff
//! reach `j` drains into reach `i`) gives the network-wide linear system
//!
//! ```text
//! (I - C1 N) Q(t+dt) = C1 Qe(t+dt) + C2 (N Q(t) + Qe(t)) + C3 Q(t)
//! ```
//!
//! Under a topological ordering `N` is strictly lower-triangular, so one
//! forward substitution per step solves it exactly.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use crate::error::{check_finite, check_len, Error, Result};
use crate::textio;

/// One river reach and the reach it drains into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reach {
    pub id: String,
    pub downstream: Option<String>,
}

/// A forest of directed reach trees draining toward outlets.
#[derive(Debug, Clone)]
pub struct RiverNetwork {
    reaches: Vec<Reach>,
    downstream: Vec<Option<usize>>,
    upstream: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl RiverNetwork {
    /// Builds the network, resolving downstream ids and computing a
    /// topological order (headwaters first). Fails on unknown ids,
    /// duplicate ids, self-loops and cycles.
    pub fn new(reaches: Vec<Reach>) -> Result<Self> {
        let mut index = HashMap::with_capacity(reaches.len());
        for (i, r) in reaches.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::Network(format!("duplicate reach id `{}`", r.id)));
            }
        }
        let mut downstream = Vec::with_capacity(reaches.len());
        for r in &reaches {
            let d = match &r.downstream {
                None => None,
                Some(id) => {
                    let j = *index
                        .get(id)
                        .ok_or_else(|| Error::Network(format!("reach `{}` drains into unknown `{id}`", r.id)))?;
                    if j == index[&r.id] {
                        return Err(Error::Network(format!("reach `{}` drains into itself", r.id)));
                    }
                    Some(j)
                }
            };
            downstream.push(d);
        }
        let n = reaches.len();
        let mut upstream = vec![Vec::new(); n];
        for (j, d) in downstream.iter().enumerate() {
            if let Some(i) = d {
                upstream[*i].push(j);
            }
        }

        // Kahn's algorithm; the queue is kept in index order so the
        // resulting permutation is deterministic.
        let mut pending: Vec<usize> = upstream.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            topo.push(i);
            if let Some(d) = downstream[i] {
                pending[d] -= 1;
                if pending[d] == 0 {
                    ready.insert(d);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::Network("reach graph contains a cycle".into()));
        }
        Ok(Self {
            reaches,
            downstream,
            upstream,
            topo,
        })
    }

    pub fn len(&self) -> usize {
        self.reaches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reaches.is_empty()
    }

    pub fn reaches(&self) -> &[Reach] {
        &self.reaches
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.reaches.iter().position(|r| r.id == id)
    }

    /// Reach index that `j` drains into, if any.
    pub fn downstream_of(&self, j: usize) -> Option<usize> {
        self.downstream[j]
    }

    /// Reaches draining directly into `i`, in ascending index order.
    pub fn upstream_of(&self, i: usize) -> &[usize] {
        &self.upstream[i]
    }

    /// Topological order: every reach appears after all reaches upstream of it.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn outlets(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.downstream[i].is_none()).collect()
    }

    /// Nonzero entries `(row, col)` of the connectivity matrix `N`.
    pub fn connectivity(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.downstream
            .iter()
            .enumerate()
            .filter_map(|(j, d)| d.map(|i| (i, j)))
    }

    /// `N x` for a vector indexed by reach.
    pub fn apply_connectivity(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, j) in self.connectivity() {
            out[i] += x[j];
        }
        out
    }
}

/// Storage constant `k` (s) and weighting `x` per reach.
#[derive(Debug, Clone, PartialEq)]
pub struct MuskingumParams {
    pub k: Vec<f64>,
    pub x: Vec<f64>,
}

impl MuskingumParams {
    pub fn uniform(n: usize, k: f64, x: f64) -> Self {
        Self {
            k: vec![k; n],
            x: vec![x; n],
        }
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Per-reach coefficients for routing step `dt`.
    pub fn coefficients(&self, dt: f64) -> Result<Vec<MuskingumCoefficients>> {
        check_len("muskingum x", self.k.len(), self.x.len())?;
        self.k
            .iter()
            .zip(&self.x)
            .map(|(&k, &x)| muskingum_coefficients(k, x, dt))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuskingumCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Classical Muskingum coefficients with `D = k(1-x) + dt/2`:
/// `C1 = (dt/2 - kx)/D`, `C2 = (dt/2 + kx)/D`, `C3 = (k(1-x) - dt/2)/D`.
pub fn muskingum_coefficients(k: f64, x: f64, dt: f64) -> Result<MuskingumCoefficients> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("storage constant k must be > 0, got {k}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("routing step must be > 0, got {dt}")));
    }
    if !(0.0..=0.5).contains(&x) {
        return Err(Error::Domain(format!("weighting x must lie in [0, 0.5], got {x}")));
    }
    let half = 0.5 * dt;
    let d = k * (1.0 - x) + half;
    Ok(MuskingumCoefficients {
        c1: (half - k * x) / d,
        c2: (half + k * x) / d,
        c3: (k * (1.0 - x) - half) / d,
    })
}

/// A reach whose routing step falls outside the non-negative coefficient
/// range `2kx <= dt <= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingWarning {
    pub reach: String,
    pub dt: f64,
    pub lower: f64,
    pub upper: f64,
}

impl std::fmt::Display for RoutingWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "reach `{}`: dt={}s outside [{}, {}]; C1 or C3 is negative",
            self.reach, self.dt, self.lower, self.upper
        )
    }
}

/// Reports every reach whose coefficients go negative at step `dt`.
/// Such configurations still conserve mass and are accepted.
pub fn validate_config(network: &RiverNetwork, params: &MuskingumParams, dt: f64) -> Result<Vec<RoutingWarning>> {
    check_len("muskingum params", network.len(), params.len())?;
    params.coefficients(dt)?;
    let mut out = Vec::new();
    for (i, r) in network.reaches().iter().enumerate() {
        let (k, x) = (params.k[i], params.x[i]);
        let lower = 2.0 * k * x;
        if dt < lower || dt > k {
            let w = RoutingWarning {
                reach: r.id.clone(),
                dt,
                lower,
                upper: k,
            };
            warn!("{w}");
            out.push(w);
        }
    }
    Ok(out)
}

/// Coefficients resolved once for a fixed network and step.
#[derive(Debug, Clone)]
pub struct Router<'a> {
    network: &'a RiverNetwork,
    coeffs: Vec<MuskingumCoefficients>,
    dt: f64,
}

impl<'a> Router<'a> {
    pub fn new(network: &'a RiverNetwork, params: &MuskingumParams, dt: f64) -> Result<Self> {
        check_len("muskingum params", network.len(), params.len())?;
        let coeffs = params.coefficients(dt)?;
        if coeffs.iter().any(|c| c.c1 < 0.0 || c.c3 < 0.0) {
            validate_config(network, params, dt)?;
        }
        Ok(Self { network, coeffs, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn coefficients(&self) -> &[MuskingumCoefficients] {
        &self.coeffs
    }

    /// Advances discharge by one step by forward substitution in
    /// topological order.
    pub fn step(&self, q_t: &[f64], qe_t: &[f64], qe_next: &[f64]) -> Result<Vec<f64>> {
        let n = self.network.len();
        check_len("discharge", n, q_t.len())?;
        check_len("lateral inflow", n, qe_t.len())?;
        check_len("lateral inflow", n, qe_next.len())?;
        check_finite("discharge", q_t)?;
        check_finite("lateral inflow", qe_t)?;
        check_finite("lateral inflow", qe_next)?;

        let mut q_next = vec![0.0; n];
        for &i in self.network.topological_order() {
            let ups = self.network.upstream_of(i);
            let inflow_next = ups.iter().map(|&j| q_next[j]).sum::<f64>() + qe_next[i];
            let inflow_now = ups.iter().map(|&j| q_t[j]).sum::<f64>() + qe_t[i];
            let c = self.coeffs[i];
            q_next[i] = c.c1 * inflow_next + c.c2 * inflow_now + c.c3 * q_t[i];
        }
        Ok(q_next)
    }

    /// Relative residual `|A q_next - b| / |b|` of the matrix system, where
    /// `A = I - C1 N` and `b` is the right-hand side.
    pub fn residual(&self, q_t: &[f64], qe_t: &[f64], qe_next: &[f64], q_next: &[f64]) -> f64 {
        let nq_next = self.network.apply_connectivity(q_next);
        let nq_t = self.network.apply_connectivity(q_t);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..self.network.len() {
            let c = self.coeffs[i];
            let lhs = q_next[i] - c.c1 * nq_next[i];
            let rhs = c.c1 * qe_next[i] + c.c2 * (nq_t[i] + qe_t[i]) + c.c3 * q_t[i];
            num += (lhs - rhs).powi(2);
            den += rhs.powi(2);
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// One routing step; see [`Router::step`].
pub fn route_step(
    network: &RiverNetwork,
    params: &MuskingumParams,
    q_t: &[f64],
    qe_t: &[f64],
    qe_next: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    Router::new(network, params, dt)?.step(q_t, qe_t, qe_next)
}

/// Uniformly spaced per-reach time series (lateral inflow or discharge).
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSeries {
    pub times: Vec<f64>,
    /// `values[t][reach]`
    pub values: Vec<Vec<f64>>,
}

/// External inflow per reach; non-negative and uniformly spaced.
pub type LateralInflowSeries = ReachSeries;

impl ReachSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spacing of the time axis; errors when it is not uniform.
    pub fn step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::Domain("series needs at least two times".into()));
        }
        let dt = self.times[1] - self.times[0];
        if !(dt > 0.0) {
            return Err(Error::Domain("series times must increase".into()));
        }
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Domain("series times are not uniformly spaced".into()));
            }
        }
        Ok(dt)
    }

    /// Series for one reach.
    pub fn column(&self, reach: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[reach]).collect()
    }

    fn validate_inflow(&self, n: usize) -> Result<()> {
        check_len("inflow time rows", self.times.len(), self.values.len())?;
        for row in &self.values {
            check_len("inflow reaches", n, row.len())?;
            check_finite("lateral inflow", row)?;
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::Domain("lateral inflow must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Routes a full lateral-inflow series from initial discharge `q0`. The
/// routing step is the series spacing; the output has one row per input time
/// and starts with `q0`.
pub fn route_hydrograph(
    network: &RiverNetwork,
    params: &MuskingumParams,
    inflow: &LateralInflowSeries,
    q0: &[f64],
) -> Result<ReachSeries> {
    if inflow.is_empty() {
        return Err(Error::Domain("empty lateral inflow series".into()));
    }
    inflow.validate_inflow(network.len())?;
    check_len("initial discharge", network.len(), q0.len())?;
    check_finite("initial discharge", q0)?;
    let mut values = Vec::with_capacity(inflow.len());
    values.push(q0.to_vec());
    if inflow.len() > 1 {
        let router = Router::new(network, params, inflow.step()?)?;
        for t in 1..inflow.len() {
            let next = router.step(&values[t - 1], &inflow.values[t - 1], &inflow.values[t])?;
            values.push(next);
        }
    }
    Ok(ReachSeries {
        times: inflow.times.clone(),
        values,
    })
}

/// Reads a network file: one `reach_id,downstream_id,k_seconds,x` line per
/// reach, `-` marking outlets.
pub fn read_network(path: &Path) -> Result<(RiverNetwork, MuskingumParams)> {
    let mut reaches = Vec::new();
    let mut params = MuskingumParams {
        k: Vec::new(),
        x: Vec::new(),
    };
    for (line, text) in textio::data_lines(path)? {
        let f = textio::split_fields(&text);
        if f.len() != 4 {
            return Err(Error::parse(
                path,
                line,
                "expected `reach_id,downstream_id,k_seconds,x`",
            ));
        }
        reaches.push(Reach {
            id: f[0].to_string(),
            downstream: (f[1] != "-").then(|| f[1].to_string()),
        });
        params.k.push(textio::parse_f64(path, line, f[2])?);
        params.x.push(textio::parse_f64(path, line, f[3])?);
    }
    let network = RiverNetwork::new(reaches)?;
    Ok((network, params))
}

pub fn write_network(path: &Path, network: &RiverNetwork, params: &MuskingumParams) -> Result<()> {
    let mut out = String::from("# reach_id,downstream_id,k_seconds,x\n");
    for (i, r) in network.reaches().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.id,
            r.downstream.as_deref().unwrap_or("-"),
            params.k[i],
            params.x[i]
        ));
    }
    textio::write(path, &out)
}

/// Reads a per-reach CSV: header `time,<reach ids...>`, then one row per
/// time with epoch seconds first. Columns are matched to reaches by id.
pub fn read_reach_series(path: &Path, network: &RiverNetwork) -> Result<ReachSeries> {
    let lines = textio::data_lines(path)?;
    let (hline, header) = lines.first().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let cols = textio::split_fields(header);
    if cols.len() != network.len() + 1 {
        return Err(Error::parse(path, *hline, "header must list every reach once"));
    }
    let mut order = Vec::with_capacity(network.len());
    for c in &cols[1..] {
        order.push(
            network
                .index_of(c)
                .ok_or_else(|| Error::parse(path, *hline, format!("unknown reach `{c}`")))?,
        );
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, text) in &lines[1..] {
        let f = textio::split_fields(text);
        if f.len() != cols.len() {
            return Err(Error::parse(path, *line, "wrong number of columns"));
        }
        times.push(textio::parse_f64(path, *line, f[0])?);
        let mut row = vec![0.0; network.len()];
        for (k, &reach) in order.iter().enumerate() {
            row[reach] = textio::parse_f64(path, *line, f[k + 1])?;
        }
        values.push(row);
    }
    Ok(ReachSeries { times, values })
}

pub fn write_reach_series(path: &Path, network: &RiverNetwork, series: &ReachSeries) -> Result<()> {
    let mut out = String::from("time");
    for r in network.reaches() {
        out.push(',');
        out.push_str(&r.id);
    }
    out.push('\n');
    for (t, row) in series.times.iter().zip(&series.values) {
        out.push_str(&t.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    textio::write(path, &out)
}
