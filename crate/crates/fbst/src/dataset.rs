//! CSV ingestion.
//!
//! The header names the columns. An optional column called `v_mean` holds
//! mean fall velocities; of the remaining columns the last is the response
//! and the others are covariates. The droplet layout is `t,radius[,v_mean]`.

use std::path::Path;

use fbst_core::Points;

use crate::error::{CliError, Result};

/// The droplet data shipped with the crate.
pub const BUNDLED_DROPLET: &str = include_str!("../data/droplet.csv");

/// Droplets are expected to be this size (micrometers); others only warn.
pub const TYPICAL_RADIUS: (f64, f64) = (3.0, 9.0);
/// Radii outside this band (micrometers) are rejected.
pub const PLAUSIBLE_RADIUS: (f64, f64) = (0.5, 20.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariate_names: Vec<String>,
    pub response_name: String,
    pub x: Points,
    pub y: Vec<f64>,
    pub v_mean: Option<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn is_droplet(&self) -> bool {
        self.covariate_names == ["t"] && self.response_name == "radius"
    }

    /// Rows sorted by covariates then response, so results do not depend
    /// on the input order.
    pub fn canonical(&self) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.x
                .row(a)
                .iter()
                .zip(self.x.row(b))
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(self.y[a].total_cmp(&self.y[b]))
        });
        Dataset {
            covariate_names: self.covariate_names.clone(),
            response_name: self.response_name.clone(),
            x: self.x.select(&idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            v_mean: self.v_mean.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ds = parse_dataset(&text)?;
    log::info!("loaded {} records from {}", ds.len(), path.display());
    Ok(ds)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_error(1, e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::EmptyDataset);
    }
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let v_col = names.iter().position(|n| n == "v_mean");
    let value_cols: Vec<usize> = (0..names.len()).filter(|&i| Some(i) != v_col).collect();
    if value_cols.len() < 2 {
        return Err(parse_error(1, "need at least one covariate and one response column".into()));
    }
    let (resp_col, cov_cols) = value_cols.split_last().unwrap();

    let dim = cov_cols.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(parse_error(
                line,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let field = |i: usize| -> Result<f64> {
            let s = &rec[i];
            let v: f64 = s
                .parse()
                .map_err(|_| parse_error(line, format!("column '{}': '{s}' is not a number", names[i])))?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("column '{}' is not finite", names[i])));
            }
            Ok(v)
        };
        for &c in cov_cols {
            xs.push(field(c)?);
        }
        ys.push(field(*resp_col)?);
        if let Some(c) = v_col {
            vs.push(field(c)?);
        }
    }
    if ys.is_empty() {
        return Err(CliError::EmptyDataset);
    }
    let ds = Dataset {
        covariate_names: cov_cols.iter().map(|&c| names[c].clone()).collect(),
        response_name: names[*resp_col].clone(),
        x: Points::new(dim, xs)?,
        y: ys,
        v_mean: v_col.map(|_| vs),
    };
    if ds.is_droplet() {
        check_droplet(&ds)?;
    }
    Ok(ds)
}

fn check_droplet(ds: &Dataset) -> Result<()> {
    for (i, (t, r)) in ds.x.iter().zip(&ds.y).enumerate() {
        if t[0] < 0.0 {
            return Err(CliError::Data(format!("record {}: negative time {}", i + 1, t[0])));
        }
        if *r < PLAUSIBLE_RADIUS.0 || *r > PLAUSIBLE_RADIUS.1 {
            return Err(CliError::Data(format!(
                "record {}: radius {r} outside {:?} micrometers",
                i + 1,
                PLAUSIBLE_RADIUS
            )));
        }
        if *r < TYPICAL_RADIUS.0 || *r > TYPICAL_RADIUS.1 {
            log::warn!("record {}: radius {r} outside the usual 3-9 micrometers", i + 1);
        }
    }
    Ok(())
}

fn parse_error(line: u64, message: String) -> CliError {
    CliError::Parse { line, message }
}
