//! Spatial time-series panels: CSV ingestion, serialization and per-site
//! anomaly normalization.
//!
//! File layout: header `site_id,col,row,t1,..,tT` for lattice data or
//! `site_id,lon,lat,t1,..,tT` for real coordinates, one site per row.
//! Values are written with 17 significant digits.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::SiteCoords;
use crate::scalar::Real;
use crate::stats;

/// Per-site location and scale removed by [`normalize_anomalies`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesScale<F> {
    pub mean: F,
    pub sd: F,
}

/// First month of a monthly panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    pub start_year: i32,
    pub start_month: u32,
}

/// `N x T` observation matrix with site metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel<F> {
    y: Vec<F>,
    n_sites: usize,
    n_times: usize,
    site_ids: Vec<String>,
    coords: SiteCoords,
    pub calendar: Option<Calendar>,
    scales: Option<Vec<SeriesScale<F>>>,
}

impl<F: Real> TimeSeriesPanel<F> {
    /// `y` is row-major, one row per site.
    pub fn new(y: Vec<F>, n_times: usize, site_ids: Vec<String>, coords: SiteCoords) -> Result<Self> {
        let n_sites = site_ids.len();
        if n_times == 0 || y.len() != n_sites * n_times {
            return Err(Error::Shape(format!(
                "{} values for {n_sites} sites x {n_times} times",
                y.len()
            )));
        }
        if coords.len() != n_sites {
            return Err(Error::Shape(format!(
                "{} coordinates for {n_sites} sites",
                coords.len()
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value at site {}, time {}",
                pos / n_times + 1,
                pos % n_times + 1
            )));
        }
        let mut seen = HashSet::new();
        for id in &site_ids {
            if !seen.insert(id) {
                return Err(Error::invalid(format!("duplicate site id `{id}`")));
            }
        }
        Ok(Self {
            y,
            n_sites,
            n_times,
            site_ids,
            coords,
            calendar: None,
            scales: None,
        })
    }

    /// Panel on a full `rows x cols` lattice, sites row-major, ids `1..=N`.
    pub fn on_grid(y: Vec<F>, n_times: usize, rows: usize, cols: usize) -> Result<Self> {
        let cells = (0..rows as i64)
            .flat_map(|r| (0..cols as i64).map(move |c| (r, c)))
            .collect();
        let ids = (1..=rows * cols).map(|i| i.to_string()).collect();
        Self::new(y, n_times, ids, SiteCoords::Grid(cells))
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn n_times(&self) -> usize {
        self.n_times
    }

    #[inline]
    pub fn series(&self, i: usize) -> &[F] {
        &self.y[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn values(&self) -> &[F] {
        &self.y
    }

    pub fn site_ids(&self) -> &[String] {
        &self.site_ids
    }

    pub fn coords(&self) -> &SiteCoords {
        &self.coords
    }

    pub fn is_normalized(&self) -> bool {
        self.scales.is_some()
    }

    /// Location/scale of each raw series, present after normalization.
    pub fn scales(&self) -> Option<&[SeriesScale<F>]> {
        self.scales.as_deref()
    }

    /// Restores the raw scale of a normalized panel; identity otherwise.
    pub fn denormalize(&self) -> Self {
        let mut out = self.clone();
        if let Some(scales) = out.scales.take() {
            for (i, s) in scales.iter().enumerate() {
                for v in &mut out.y[i * self.n_times..(i + 1) * self.n_times] {
                    *v = *v * s.sd + s.mean;
                }
            }
        }
        out
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let (a, b) = match self.coords {
            SiteCoords::Grid(_) => ("col", "row"),
            SiteCoords::Planar(_) => ("lon", "lat"),
        };
        write!(out, "site_id,{a},{b}").unwrap();
        for t in 1..=self.n_times {
            write!(out, ",t{t}").unwrap();
        }
        out.push('\n');
        for i in 0..self.n_sites {
            out.push_str(&self.site_ids[i]);
            match &self.coords {
                SiteCoords::Grid(v) => write!(out, ",{},{}", v[i].1, v[i].0).unwrap(),
                SiteCoords::Planar(v) => write!(out, ",{:.16e},{:.16e}", v[i].0, v[i].1).unwrap(),
            }
            for v in self.series(i) {
                write!(out, ",{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub fn write_panel_csv<F: Real>(panel: &TimeSeriesPanel<F>, path: &Path) -> Result<()> {
    std::fs::write(path, panel.to_csv_string()).map_err(|e| Error::io(path, e))
}

pub fn read_panel_csv<F: Real>(path: &Path) -> Result<TimeSeriesPanel<F>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_panel_csv(&text, &path.display().to_string())
}

/// Parses panel CSV text; `origin` labels diagnostics.
pub fn parse_panel_csv<F: Real>(text: &str, origin: &str) -> Result<TimeSeriesPanel<F>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 4 || header.get(0) != Some("site_id") {
        return Err(parse_err(
            1,
            "header must be `site_id,<col|lon>,<row|lat>,t1,..`".into(),
        ));
    }
    let grid = match (header.get(1), header.get(2)) {
        (Some("col"), Some("row")) => true,
        (Some("lon"), Some("lat")) => false,
        (a, b) => {
            return Err(parse_err(
                1,
                format!("unknown coordinate columns {a:?}, {b:?}; expected col,row or lon,lat"),
            ))
        }
    };
    let n_times = header.len() - 3;
    let mut y = Vec::new();
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    let mut points = Vec::new();
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse_err(
                line,
                format!("ragged row: {} fields, header has {}", rec.len(), header.len()),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty site_id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_err(line, format!("duplicate site_id `{id}`")));
        }
        let cell = |col: usize| -> Result<&str> {
            let v = &rec[col];
            if v.is_empty() {
                Err(parse_err(
                    line,
                    format!("missing value in column {} (`{}`)", col + 1, &header[col]),
                ))
            } else {
                Ok(v)
            }
        };
        if grid {
            let c: i64 = cell(1)?
                .parse()
                .map_err(|_| parse_err(line, format!("column 2: `{}` is not an integer", &rec[1])))?;
            let r: i64 = cell(2)?
                .parse()
                .map_err(|_| parse_err(line, format!("column 3: `{}` is not an integer", &rec[2])))?;
            cells.push((r, c));
        } else {
            let mut xy = [0.0f64; 2];
            for (k, slot) in xy.iter_mut().enumerate() {
                *slot = cell(k + 1)?.parse().map_err(|_| {
                    parse_err(line, format!("column {}: `{}` is not a number", k + 2, &rec[k + 1]))
                })?;
            }
            points.push((xy[0], xy[1]));
        }
        for col in 3..rec.len() {
            let raw = cell(col)?;
            let v: F = raw.parse().map_err(|_| {
                parse_err(line, format!("column {} (`{}`): `{raw}` is not a number", col + 1, &header[col]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value", col + 1)));
            }
            y.push(v);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(parse_err(2, "no sites".into()));
    }
    let coords = if grid {
        SiteCoords::Grid(cells)
    } else {
        SiteCoords::Planar(points)
    };
    TimeSeriesPanel::new(y, n_times, ids, coords)
}

/// Writes `site_id,label` rows; `labels` are 0-based and written 1-based.
pub fn labels_to_csv_string(site_ids: &[String], labels: &[usize]) -> String {
    let mut out = String::from("site_id,label\n");
    for (id, l) in site_ids.iter().zip(labels) {
        writeln!(out, "{id},{}", l + 1).unwrap();
    }
    out
}

pub fn write_labels_csv(path: &Path, site_ids: &[String], labels: &[usize]) -> Result<()> {
    if site_ids.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} sites",
            labels.len(),
            site_ids.len()
        )));
    }
    std::fs::write(path, labels_to_csv_string(site_ids, labels)).map_err(|e| Error::io(path, e))
}

/// Reads a `site_id,label` file (labels 1-based) into `(ids, 0-based labels)`.
pub fn read_labels_csv(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.len() != 2 || &header[0] != "site_id" || &header[1] != "label" {
        return Err(parse_err(1, "header must be `site_id,label`".into()));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let label: usize = rec[1]
            .parse()
            .ok()
            .filter(|&l| l >= 1)
            .ok_or_else(|| parse_err(line, format!("label `{}` is not a positive integer", &rec[1])))?;
        ids.push(rec[0].to_string());
        labels.push(label - 1);
    }
    Ok((ids, labels))
}

/// Standardizes every series by its own mean and sd (denominator `T - 1`).
/// On an already normalized panel the original scales are kept, so
/// [`TimeSeriesPanel::denormalize`] still returns the raw data.
pub fn normalize_anomalies<F: Real>(panel: &TimeSeriesPanel<F>) -> Result<TimeSeriesPanel<F>> {
    if panel.n_times < 2 {
        return Err(Error::invalid("normalization needs at least two time points"));
    }
    let mut out = panel.clone();
    let mut scales = Vec::with_capacity(panel.n_sites);
    for i in 0..panel.n_sites {
        let s = panel.series(i);
        let mean = stats::mean(s);
        let sd = stats::std_dev(s);
        if !(sd > F::zero()) {
            return Err(Error::invalid(format!(
                "site `{}` has zero variance",
                panel.site_ids[i]
            )));
        }
        for v in &mut out.y[i * panel.n_times..(i + 1) * panel.n_times] {
            *v = (*v - mean) / sd;
        }
        scales.push(SeriesScale { mean, sd });
    }
    out.scales = Some(match &panel.scales {
        // compose with the scales already removed
        Some(prev) => prev
            .iter()
            .zip(&scales)
            .map(|(p, s)| SeriesScale {
                mean: p.mean + p.sd * s.mean,
                sd: p.sd * s.sd,
            })
            .collect(),
        None => scales,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TimeSeriesPanel<f64> {
        TimeSeriesPanel::new(
            vec![0.1, 1.0 / 3.0, -2.5e-7, 4.0, 5.5, 6.25],
            3,
            vec!["a".into(), "b".into()],
            SiteCoords::Grid(vec![(0, 0), (0, 1)]),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = small();
        let back: TimeSeriesPanel<f64> = parse_panel_csv(&p.to_csv_string(), "mem").unwrap();
        assert_eq!(back, p);

        let planar = TimeSeriesPanel::new(
            vec![1.0, 2.0],
            1,
            vec!["x".into(), "y".into()],
            SiteCoords::Planar(vec![(12.25, 40.1), (-3.0, 0.7)]),
        )
        .unwrap();
        let back: TimeSeriesPanel<f64> = parse_panel_csv(&planar.to_csv_string(), "mem").unwrap();
        assert_eq!(back, planar);
    }

    #[test]
    fn empty_cell_names_row_and_column() {
        let text = "site_id,col,row,t1,t2\n1,0,0,1.0,2.0\n2,1,0,,3.0\n";
        let err = parse_panel_csv::<f64>(text, "f.csv").unwrap_err().to_string();
        assert!(err.contains("f.csv:3"), "{err}");
        assert!(err.contains("column 4"), "{err}");
    }

    #[test]
    fn malformed_inputs() {
        let ragged = "site_id,col,row,t1,t2\n1,0,0,1.0\n";
        assert!(parse_panel_csv::<f64>(ragged, "f").unwrap_err().to_string().contains("ragged"));
        let text = "site_id,col,row,t1\n1,0,0,abc\n";
        assert!(parse_panel_csv::<f64>(text, "f").unwrap_err().to_string().contains("abc"));
        let dup = "site_id,col,row,t1\n1,0,0,1\n1,1,0,2\n";
        assert!(parse_panel_csv::<f64>(dup, "f").unwrap_err().to_string().contains("duplicate"));
        let bad_header = "id,x,y,t1\n1,0,0,1\n";
        assert!(parse_panel_csv::<f64>(bad_header, "f").is_err());
    }

    #[test]
    fn normalization_and_inverse() {
        let p = small();
        let z = normalize_anomalies(&p).unwrap();
        for i in 0..2 {
            let s = z.series(i);
            assert!(stats::mean(s).abs() < 1e-12);
            assert!((stats::std_dev(s) - 1.0).abs() < 1e-12);
        }
        let back = z.denormalize();
        for (a, b) in back.values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let twice = normalize_anomalies(&z).unwrap();
        for (a, b) in twice.values().iter().zip(z.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in twice.denormalize().values().iter().zip(p.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_rejected() {
        let p = TimeSeriesPanel::on_grid(vec![1.0f64, 1.0, 1.0, 0.0, 1.0, 2.0], 3, 1, 2).unwrap();
        let err = normalize_anomalies(&p).unwrap_err().to_string();
        assert!(err.contains("`1`"), "{err}");
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        write_labels_csv(&path, &ids, &[0, 2, 1]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "site_id,label\na,1\nb,3\nc,2\n");
        assert_eq!(read_labels_csv(&path).unwrap(), (ids, vec![0, 2, 1]));
        std::fs::write(&path, "site_id,label\na,0\n").unwrap();
        assert!(read_labels_csv(&path).is_err());
    }
}
