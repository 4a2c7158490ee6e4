//! Field files.
//!
//! The flow format is a header line `d N M T c` followed by `M + 1` rows, one
//! per time slice, each holding `N^d · c` values in node order with the
//! components of a node adjacent. A single field is written with `M = 0` and
//! one row. Density files add a final line `mass m_0 … m_M`, checked on read.
//!
//! The CSV form has the columns `t_index,node,component,value`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use torus_mfg::measures::DensityFlow;
use torus_mfg::{Field, FieldFlow, TorusGrid};

const MASS_TOL: f64 = 1e-12;

/// Raw content of a field file.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowData {
    pub dim: usize,
    pub n: usize,
    /// `0` for a single field.
    pub steps: usize,
    pub horizon: f64,
    pub comps: usize,
    /// `(steps + 1) · N^d · comps` values, slice-major.
    pub values: Vec<f64>,
}

impl FlowData {
    pub fn from_flow(flow: &FieldFlow) -> Self {
        let g = flow.grid();
        Self {
            dim: g.dim(),
            n: g.n(),
            steps: g.steps(),
            horizon: g.horizon(),
            comps: flow.comps(),
            values: flow.values().to_vec(),
        }
    }

    pub fn from_field(field: &Field) -> Self {
        let g = field.grid();
        Self {
            dim: g.dim(),
            n: g.n(),
            steps: 0,
            horizon: g.horizon(),
            comps: field.comps(),
            values: field.values().to_vec(),
        }
    }

    fn row_len(&self) -> usize {
        self.n.pow(self.dim as u32) * self.comps
    }

    pub fn rows(&self) -> usize {
        self.steps + 1
    }

    pub fn into_flow(self, grid: &TorusGrid) -> Result<FieldFlow> {
        ensure!(self.steps > 0, "file holds a single field, not a flow");
        self.check_grid(grid, grid.steps())?;
        Ok(FieldFlow::from_values(*grid, self.comps, self.values)?)
    }

    pub fn into_field(self, grid: &TorusGrid) -> Result<Field> {
        ensure!(self.steps == 0, "file holds a flow, not a single field");
        self.check_grid(grid, 0)?;
        Ok(Field::from_values(*grid, self.comps, self.values)?)
    }

    /// Grid of the file itself (flows only).
    pub fn grid(&self) -> Result<TorusGrid> {
        Ok(TorusGrid::new(self.dim, self.n, self.horizon, self.steps)?)
    }

    fn check_grid(&self, grid: &TorusGrid, steps: usize) -> Result<()> {
        ensure!(
            self.dim == grid.dim() && self.n == grid.n() && self.steps == steps && self.horizon == grid.horizon(),
            "file grid (d = {}, N = {}, M = {}, T = {}) does not match the run grid (d = {}, N = {}, M = {}, T = {})",
            self.dim,
            self.n,
            self.steps,
            self.horizon,
            grid.dim(),
            grid.n(),
            steps,
            grid.horizon()
        );
        Ok(())
    }
}

fn masses(data: &FlowData) -> Vec<f64> {
    let vol = (data.n as f64).powi(-(data.dim as i32));
    data.values
        .chunks(data.row_len())
        .map(|row| row.iter().sum::<f64>() * vol)
        .collect()
}

/// Text of the flow format; `with_mass` appends the density checksum line.
pub fn to_text(data: &FlowData, with_mass: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {:?} {}",
        data.dim, data.n, data.steps, data.horizon, data.comps
    );
    for row in data.values.chunks(data.row_len()) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:e}");
        }
        out.push('\n');
    }
    if with_mass {
        out.push_str("mass");
        for m in masses(data) {
            let _ = write!(out, " {m:e}");
        }
        out.push('\n');
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    let tok = tok.with_context(|| format!("header is missing {what}"))?;
    tok.parse()
        .map_err(|_| anyhow::anyhow!("header field {what} = `{tok}` is not valid"))
}

pub fn parse_text(text: &str) -> Result<FlowData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().context("empty file")?;
    let mut h = header.split_whitespace();
    let dim: usize = parse_num(h.next(), "d")?;
    let n: usize = parse_num(h.next(), "N")?;
    let steps: usize = parse_num(h.next(), "M")?;
    let horizon: f64 = parse_num(h.next(), "T")?;
    let comps: usize = parse_num(h.next(), "c")?;
    ensure!(h.next().is_none(), "header has more than five fields");
    ensure!((1..=3).contains(&dim) && n > 0 && comps > 0, "invalid header `{header}`");
    let mut data = FlowData {
        dim,
        n,
        steps,
        horizon,
        comps,
        values: Vec::with_capacity((steps + 1) * n.pow(dim as u32) * comps),
    };
    let row_len = data.row_len();
    let mut mass_line = None;
    let mut rows = 0;
    for (idx, line) in lines {
        if let Some(rest) = line.trim_start().strip_prefix("mass") {
            mass_line = Some((idx, rest.to_string()));
            continue;
        }
        ensure!(mass_line.is_none(), "line {}: data after the mass line", idx + 1);
        let before = data.values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| anyhow::anyhow!("line {}: `{tok}` is not a number", idx + 1))?;
            data.values.push(v);
        }
        ensure!(
            data.values.len() - before == row_len,
            "line {}: expected {row_len} values, found {}",
            idx + 1,
            data.values.len() - before
        );
        rows += 1;
    }
    ensure!(rows == steps + 1, "expected {} rows, found {rows}", steps + 1);
    if let Some((idx, rest)) = mass_line {
        let expect = masses(&data);
        let got: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| anyhow::anyhow!("line {}: malformed mass line", idx + 1))?;
        ensure!(got.len() == expect.len(), "line {}: mass line has {} entries", idx + 1, got.len());
        for (k, (a, b)) in got.iter().zip(&expect).enumerate() {
            if (a - b).abs() > MASS_TOL {
                bail!("mass checksum of slice {k} is {a:e} but the data sums to {b:e}");
            }
        }
    }
    Ok(data)
}

pub fn to_csv(data: &FlowData) -> String {
    let mut out = String::from("t_index,node,component,value\n");
    let nodes = data.n.pow(data.dim as u32);
    for (i, v) in data.values.iter().enumerate() {
        let k = i / (nodes * data.comps);
        let node = (i / data.comps) % nodes;
        let c = i % data.comps;
        let _ = writeln!(out, "{k},{node},{c},{v:e}");
    }
    out
}

/// Reads CSV rows back onto a known shape; every entry must appear once.
pub fn parse_csv(text: &str, dim: usize, n: usize, steps: usize, horizon: f64, comps: usize) -> Result<FlowData> {
    let nodes = n.pow(dim as u32);
    let total = (steps + 1) * nodes * comps;
    let mut values = vec![f64::NAN; total];
    let mut seen = vec![false; total];
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 4, "line {}: expected 4 columns", idx + 1);
        let k: usize = f[0].trim().parse().context("bad t_index")?;
        let node: usize = f[1].trim().parse().context("bad node")?;
        let c: usize = f[2].trim().parse().context("bad component")?;
        let v: f64 = f[3].trim().parse().context("bad value")?;
        ensure!(k <= steps && node < nodes && c < comps, "line {}: index out of range", idx + 1);
        let i = (k * nodes + node) * comps + c;
        ensure!(!seen[i], "line {}: duplicate entry", idx + 1);
        seen[i] = true;
        values[i] = v;
    }
    ensure!(seen.iter().all(|&s| s), "CSV does not cover every entry");
    Ok(FlowData {
        dim,
        n,
        steps,
        horizon,
        comps,
        values,
    })
}

pub fn write_flow(path: &Path, flow: &FieldFlow) -> Result<()> {
    fs::write(path, to_text(&FlowData::from_flow(flow), false))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_density_flow(path: &Path, rho: &DensityFlow) -> Result<()> {
    fs::write(path, to_text(&FlowData::from_flow(rho.flow()), true))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    fs::write(path, to_text(&FlowData::from_field(field), false))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn read_data(path: &Path) -> Result<FlowData> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_text(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_flow(path: &Path, grid: &TorusGrid) -> Result<FieldFlow> {
    read_data(path)?
        .into_flow(grid)
        .with_context(|| format!("loading {}", path.display()))
}

pub fn read_density_flow(path: &Path, grid: &TorusGrid) -> Result<DensityFlow> {
    let flow = read_flow(path, grid)?;
    DensityFlow::new(flow).with_context(|| format!("{} is not a density flow", path.display()))
}

pub fn read_field(path: &Path, grid: &TorusGrid) -> Result<Field> {
    read_data(path)?
        .into_field(grid)
        .with_context(|| format!("loading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_flow() -> FieldFlow {
        let g = TorusGrid::new(2, 8, 0.75, 3).unwrap();
        FieldFlow::from_fn(g, 2, |t, x, o| {
            o[0] = (x[0] * 7.0).sin() * t + 1e-300;
            o[1] = -x[1] / 3.0;
        })
    }

    #[test]
    fn flow_text_round_trips_exactly() {
        let f = sample_flow();
        let data = FlowData::from_flow(&f);
        let text = to_text(&data, false);
        assert!(text.starts_with("2 8 3 0.75 2\n"));
        let back = parse_text(&text).unwrap().into_flow(f.grid()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_round_trips_exactly() {
        let f = sample_flow();
        let data = FlowData::from_flow(&f);
        let back = parse_csv(&to_csv(&data), 2, 8, 3, 0.75, 2).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn corrupted_mass_line_is_detected() {
        let g = TorusGrid::new(1, 8, 1.0, 2).unwrap();
        let rho = DensityFlow::constant(g, &torus_mfg::Density::uniform(g)).unwrap();
        let text = to_text(&FlowData::from_flow(rho.flow()), true);
        assert!(parse_text(&text).is_ok());
        let bad = text.replacen("1e0", "2e0", 1);
        assert!(parse_text(&bad).unwrap_err().to_string().contains("mass"));
    }

    #[test]
    fn short_rows_are_reported_with_line_numbers() {
        let err = parse_text("1 8 0 1.0 1\n1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
