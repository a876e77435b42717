//! Static SVG cluster maps.

use std::fmt::Write as _;

use quantclust::graph::SiteCoords;
use quantclust::{Error, Result};

/// Fill colors indexed by 0-based label; wraps after twelve clusters.
pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

const CELL: f64 = 12.0;
const MARGIN: f64 = 10.0;
const LEGEND_WIDTH: f64 = 110.0;

/// Per-site labels with their coordinates.
#[derive(Debug, Clone)]
pub struct ClusterMap<'a> {
    pub coords: &'a SiteCoords,
    /// 0-based labels.
    pub labels: &'a [usize],
    pub k: usize,
}

impl<'a> ClusterMap<'a> {
    pub fn new(coords: &'a SiteCoords, labels: &'a [usize], k: usize) -> Result<Self> {
        if coords.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} coordinates",
                labels.len(),
                coords.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label {} outside 1..={k}", l + 1)));
        }
        Ok(Self { coords, labels, k })
    }

    pub fn color(label: usize) -> &'static str {
        PALETTE[label % PALETTE.len()]
    }

    /// One `<rect>` (lattice) or `<circle>` (lon/lat) per site plus a text
    /// legend with one entry per cluster.
    pub fn to_svg(&self) -> String {
        let (shapes, width, height) = match self.coords {
            SiteCoords::Grid(cells) => self.grid_shapes(cells),
            SiteCoords::Planar(points) => self.planar_shapes(points),
        };
        let legend_h = 20.0 * self.k as f64 + 2.0 * MARGIN;
        let total_w = width + LEGEND_WIDTH;
        let total_h = height.max(legend_h);
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.2}" height="{total_h:.2}" viewBox="0 0 {total_w:.2} {total_h:.2}">"#
        )
        .unwrap();
        svg.push_str(&shapes);
        writeln!(svg, r#"<g class="legend" font-family="sans-serif" font-size="13">"#).unwrap();
        for k in 0..self.k {
            writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" fill="{}">&#9632; cluster {}</text>"#,
                width + MARGIN,
                MARGIN + 15.0 + 20.0 * k as f64,
                Self::color(k),
                k + 1
            )
            .unwrap();
        }
        svg.push_str("</g>\n</svg>\n");
        svg
    }

    fn grid_shapes(&self, cells: &[(i64, i64)]) -> (String, f64, f64) {
        let min_r = cells.iter().map(|c| c.0).min().unwrap_or(0);
        let max_r = cells.iter().map(|c| c.0).max().unwrap_or(0);
        let min_c = cells.iter().map(|c| c.1).min().unwrap_or(0);
        let max_c = cells.iter().map(|c| c.1).max().unwrap_or(0);
        let mut out = String::from("<g class=\"sites\" stroke=\"none\">\n");
        for (&(r, c), &l) in cells.iter().zip(self.labels) {
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{CELL:.2}" height="{CELL:.2}" fill="{}"/>"#,
                MARGIN + (c - min_c) as f64 * CELL,
                MARGIN + (r - min_r) as f64 * CELL,
                Self::color(l)
            )
            .unwrap();
        }
        out.push_str("</g>\n");
        let width = 2.0 * MARGIN + (max_c - min_c + 1) as f64 * CELL;
        let height = 2.0 * MARGIN + (max_r - min_r + 1) as f64 * CELL;
        (out, width, height)
    }

    fn planar_shapes(&self, points: &[(f64, f64)]) -> (String, f64, f64) {
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
            points.iter().map(pick).fold(init, f)
        };
        let (min_x, max_x) = (fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
        let (min_y, max_y) = (fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, f64::NEG_INFINITY, |p| p.1));
        let mut spacing = f64::INFINITY;
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                let d = (a.0 - b.0).hypot(a.1 - b.1);
                if d > 0.0 {
                    spacing = spacing.min(d);
                }
            }
        }
        if !spacing.is_finite() {
            spacing = 1.0;
        }
        let scale = CELL / spacing;
        let radius = 0.45 * CELL;
        let mut out = String::from("<g class=\"sites\" stroke=\"none\">\n");
        for (&(x, y), &l) in points.iter().zip(self.labels) {
            writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{radius:.2}" fill="{}"/>"#,
                MARGIN + CELL / 2.0 + (x - min_x) * scale,
                MARGIN + CELL / 2.0 + (max_y - y) * scale,
                Self::color(l)
            )
            .unwrap();
        }
        out.push_str("</g>\n");
        let width = 2.0 * MARGIN + CELL + (max_x - min_x) * scale;
        let height = 2.0 * MARGIN + CELL + (max_y - min_y) * scale;
        (out, width, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(svg: &str, tag: &str) -> usize {
        svg.matches(&format!("<{tag} ")).count()
    }

    #[test]
    fn one_shape_per_site() {
        let coords = SiteCoords::Grid((0..3).flat_map(|r| (0..4).map(move |c| (r, c))).collect());
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let svg = ClusterMap::new(&coords, &labels, 3).unwrap().to_svg();
        assert_eq!(count(&svg, "rect"), 12);
        assert_eq!(count(&svg, "circle"), 0);
        assert_eq!(svg.matches("cluster ").count(), 3);

        let coords = SiteCoords::Planar(vec![(10.0, 40.0), (10.25, 40.0), (10.0, 40.25)]);
        let svg = ClusterMap::new(&coords, &[0, 1, 1], 2).unwrap().to_svg();
        assert_eq!(count(&svg, "circle"), 3);
    }

    #[test]
    fn rejects_mismatch() {
        let coords = SiteCoords::Grid(vec![(0, 0), (0, 1)]);
        assert!(ClusterMap::new(&coords, &[0], 1).is_err());
        assert!(ClusterMap::new(&coords, &[0, 2], 2).is_err());
    }
}
