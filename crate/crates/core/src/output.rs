//! CSV and JSON emission of a [`ResultBundle`].
//!
//! Every file is a table: `# key: value` header lines, one line of column
//! names, then rows. Numbers are written with 17 significant digits so the
//! files round-trip exactly. The JSON form carries the same header, columns
//! and rows. Files are written to a temporary name and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::arrival::ArrivalDistribution;
use crate::config::OutputFormat;
use crate::pipeline::{ResultBundle, RunError};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "pass" } else { "fail" }.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<(String, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

pub fn format_number(v: f64) -> String {
    format!("{v:.17e}")
}

impl Table {
    fn new(name: impl Into<String>, columns: Vec<&'static str>) -> Self {
        Self { name: name.into(), header: Vec::new(), columns, rows: Vec::new() }
    }

    fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_number(*v),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let header: Map<String, Value> = self.header.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                Value::Array(
                    r.iter()
                        .map(|c| match c {
                            Cell::Num(v) => json!(v),
                            Cell::Text(t) => json!(t),
                        })
                        .collect(),
                )
            })
            .collect();
        let doc = json!({ "header": header, "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// `tau,density` table; its header carries what is needed to re-integrate it.
pub fn distribution_table(name: &str, dist: &ArrivalDistribution) -> Table {
    let g = &dist.time_grid;
    let mut t = Table::new(name, vec!["tau", "density"])
        .meta("detector", format_number(dist.detector))
        .meta("direction", dist.direction)
        .meta("physical_time", format!("{}tau", if dist.direction.sign() > 0.0 { "" } else { "-" }))
        .meta("quadrature", "trapezoid")
        .meta("samples", g.len())
        .meta("total", format_number(dist.total))
        .meta("expected_total", format_number(dist.expected_total))
        .meta("truncation_bound", format_number(dist.truncation_bound()));
    if let Some(h) = g.spacing() {
        t = t.meta("dtau", format_number(h));
    }
    t.rows = g.samples().iter().zip(&dist.values).map(|(&tau, &v)| vec![tau.into(), v.into()]).collect();
    t
}

/// All tables of a bundle, in emission order.
pub fn tables(bundle: &ResultBundle) -> Vec<Table> {
    let mut out = Vec::new();
    for (i, d) in bundle.detectors.iter().enumerate() {
        out.push(distribution_table(&format!("distribution_{i}"), &d.distribution));
    }
    if !bundle.detectors.is_empty() {
        let mut m = Table::new(
            "moments",
            vec!["detector", "mean", "spread", "truncation_bound", "energy_mean", "energy_spread", "product", "total"],
        );
        for d in &bundle.detectors {
            let r = &d.moments;
            m.rows.push(vec![
                d.detector.into(),
                r.mean.into(),
                r.spread.into(),
                d.truncation_bound.into(),
                r.energy_mean.into(),
                r.energy_spread.into(),
                r.product.into(),
                d.distribution.total.into(),
            ]);
        }
        out.push(m);
    }
    if let Some(c) = &bundle.coefficients {
        let mut t = Table::new("coefficients", vec!["p", "T_re", "T_im", "R_re", "R_im"]);
        if let Some(tr) = &bundle.transmittance {
            t = t
                .meta("transmittance", format_number(tr.quadrature))
                .meta("unitarity_defect", format_number(tr.unitarity_defect));
        }
        t.rows = c
            .grid
            .samples()
            .iter()
            .zip(c.transmission.iter().zip(&c.reflection))
            .map(|(&p, (tc, rc))| vec![p.into(), tc.re.into(), tc.im.into(), rc.re.into(), rc.im.into()])
            .collect();
        out.push(t);
    }
    if let Some(tr) = &bundle.transmittance {
        let mut t = Table::new("transmittance", vec!["detector", "integrated", "quadrature", "difference"]);
        t.rows = tr
            .integrated
            .iter()
            .map(|&(x, v)| vec![x.into(), v.into(), tr.quadrature.into(), (v - tr.quadrature).into()])
            .collect();
        out.push(t);
    }
    if !bundle.comparisons.is_empty() {
        let mut t = Table::new(
            "comparison",
            vec![
                "detector",
                "analytic_mean",
                "flux_mean",
                "relative_gap",
                "tolerance",
                "verdict",
                "throughput",
                "expected_throughput",
                "truncation_bound",
            ],
        );
        if let Some(o) = &bundle.provenance.oracle {
            t = t
                .meta("oracle_points", o.points)
                .meta("oracle_dx", format_number(o.dx))
                .meta("oracle_dt", format_number(o.dt))
                .meta("oracle_steps", o.steps)
                .meta("oracle_t_start", format_number(o.t_start))
                .meta("oracle_max_norm_drift", format_number(o.max_norm_drift));
        }
        t.rows = bundle
            .comparisons
            .iter()
            .map(|c| {
                vec![
                    c.detector.into(),
                    c.analytic_mean.into(),
                    c.flux_mean.into(),
                    c.relative_gap.into(),
                    c.tolerance.into(),
                    c.pass.into(),
                    c.throughput.into(),
                    c.expected_throughput.into(),
                    c.truncation_bound.into(),
                ]
            })
            .collect();
        out.push(t);
    }
    if let Some(b) = &bundle.backflow {
        let mut t = Table::new("backflow_current", vec!["t", "current"])
            .meta("detector", format_number(b.detector))
            .meta("min_current", format_number(b.min_current))
            .meta("min_current_time", format_number(b.min_current_time))
            .meta("min_density", format_number(b.min_density));
        t.rows = b.flux.times.iter().zip(&b.flux.current).map(|(&x, &j)| vec![x.into(), j.into()]).collect();
        out.push(t);
        out.push(distribution_table("backflow_distribution", &b.distribution));
    }
    if let Some(u) = &bundle.uncertainty {
        let mut t = Table::new("uncertainty", vec!["p0", "sigma_p", "x0", "energy_spread", "time_spread", "product"])
            .meta("detector", format_number(u.detector))
            .meta("transmitted", u.transmitted)
            .meta("members", u.rows.len())
            .meta("minimum_product", format_number(u.minimum));
        t.rows = u
            .rows
            .iter()
            .map(|r| vec![r.p0.into(), r.sigma_p.into(), r.x0.into(), r.energy_spread.into(), r.time_spread.into(), r.product.into()])
            .collect();
        out.push(t);
    }
    let mut v = Table::new("verdicts", vec!["name", "value", "criterion", "verdict"])
        .meta("overall", if bundle.passed() { "pass" } else { "fail" });
    v.rows = bundle
        .verdicts
        .iter()
        .map(|x| vec![x.name.as_str().into(), x.value.into(), x.criterion.as_str().into(), x.pass.into()])
        .collect();
    out.push(v);
    let p = &bundle.provenance;
    let mut t = Table::new("provenance", vec!["key", "value"]);
    let mut row = |k: &str, v: String| t.rows.push(vec![k.into(), Cell::Text(v)]);
    row("command", p.command.clone());
    row("version", p.version.clone());
    row("momentum_points", p.momentum_points.to_string());
    row("time_points", p.time_points.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "));
    if let Some(seed) = p.seed {
        row("seed", seed.to_string());
    }
    let tol = &p.tolerances;
    row("tolerance.normalization", format_number(tol.normalization));
    row("tolerance.transmittance", format_number(tol.transmittance));
    row("tolerance.flux_throughput", format_number(tol.flux_throughput));
    row("tolerance.flux_gap", format_number(tol.flux_gap));
    row("tolerance.uncertainty", format_number(tol.uncertainty));
    row("config_echo", "config_echo.toml".to_string());
    out.push(t);
    out
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    let io = |source| RunError::Io { path: path.display().to_string(), source };
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Writes every table plus the config echo under `dir`; returns the paths written.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.display().to_string(), source })?;
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let mut written = Vec::new();
    for table in tables(bundle) {
        let path = dir.join(format!("{}.{ext}", table.name));
        write_atomic(&path, &table.render(format))?;
        written.push(path);
    }
    let echo = dir.join("config_echo.toml");
    write_atomic(&echo, &bundle.provenance.config_echo)?;
    written.push(echo);
    Ok(written)
}

/// A CSV table read back: `# key: value` header pairs, column names, numeric rows.
pub type ParsedCsv = (Vec<(String, String)>, Vec<String>, Vec<Vec<f64>>);

/// Reads a CSV table back; text cells become NaN.
pub fn parse_csv(text: &str) -> ParsedCsv {
    let mut header = Vec::new();
    let mut columns = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once(": ") {
                header.push((k.to_string(), v.to_string()));
            }
        } else if columns.is_empty() {
            columns = line.split(',').map(str::to_string).collect();
        } else if !line.is_empty() {
            rows.push(line.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect());
        }
    }
    (header, columns, rows)
}
