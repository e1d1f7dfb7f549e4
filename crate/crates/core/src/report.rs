//! Output files of a batch run: CSV tables (the ground truth) and SVG plots
//! drawn from them.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{ComparisonTable, SbsKey};
use crate::sim::LambdaPoint;

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn lambda_sweep_csv(points: &[LambdaPoint]) -> Result<Vec<u8>> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["lambda", "cache_frac", "avg_hit"])
        .and_then(|_| {
            points.iter().try_for_each(|p| {
                wr.write_record([p.lambda.to_string(), p.cache_frac.to_string(), p.avg_hit.to_string()])
            })
        })
        .map_err(|e| Error::validation(format!("writing CSV: {e}")))?;
    wr.into_inner()
        .map_err(|e| Error::validation(format!("writing CSV: {e}")))
}

pub fn comparison_csv(table: &ComparisonTable) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(buf)
}

/// One named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::validation(format!("plotting: {e}"))
}

fn padded_range(values: impl Iterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.05 };
    (lo - pad)..(hi + pad)
}

/// Renders a line chart to an SVG document.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let xs = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let ys = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(15)
            .x_label_area_size(45)
            .y_label_area_size(80)
            .build_cartesian_2d(xs, ys)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(plot_err)?;
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(s.name.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Average hit against cache fraction, one series per policy.
pub fn hit_series(table: &ComparisonTable, sbs: SbsKey) -> Vec<Series> {
    table
        .policies()
        .into_iter()
        .map(|p| Series {
            points: table
                .cache_fracs()
                .into_iter()
                .filter_map(|c| table.get(&p, c, sbs).map(|r| (c, r.avg_hit)))
                .collect(),
            name: p,
        })
        .collect()
}

/// `ln(hit_proposed / hit_policy)` on the summed hit, skipping the reference.
pub fn log_ratio_series(table: &ComparisonTable) -> Vec<Series> {
    table
        .policies()
        .into_iter()
        .filter(|p| p != "proposed")
        .map(|p| Series {
            points: table
                .cache_fracs()
                .into_iter()
                .filter_map(|c| table.get(&p, c, SbsKey::Sum).and_then(|r| r.log_ratio).map(|v| (c, v)))
                .collect(),
            name: p,
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

/// Average hit against λ, one series per cache fraction.
pub fn lambda_series(points: &[LambdaPoint]) -> Vec<Series> {
    let mut fracs: Vec<f64> = Vec::new();
    for p in points {
        if !fracs.contains(&p.cache_frac) {
            fracs.push(p.cache_frac);
        }
    }
    fracs
        .into_iter()
        .map(|c| {
            let mut pts: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.cache_frac == c)
                .map(|p| (p.lambda, p.avg_hit))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                name: format!("cache {c}"),
                points: pts,
            }
        })
        .collect()
}

/// Writes every plot under `dir`; returns the written paths.
pub fn write_plots(dir: &Path, table: &ComparisonTable, sweep: &[LambdaPoint]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, svg.as_bytes())?;
        written.push(path);
        Ok(())
    };
    let n_sbs = table
        .rows
        .iter()
        .filter_map(|r| match r.sbs {
            SbsKey::Sbs(b) => Some(b + 1),
            SbsKey::Sum => None,
        })
        .max()
        .unwrap_or(0);
    for b in 0..n_sbs {
        let svg = line_chart_svg(
            &format!("Average hit at sBS {b}"),
            "cache fraction",
            "average hit per slot",
            &hit_series(table, SbsKey::Sbs(b)),
        )?;
        emit(format!("hit_sbs{b}.svg"), svg)?;
    }
    if !table.rows.is_empty() {
        let svg = line_chart_svg(
            "Summed hit over all sBSs",
            "cache fraction",
            "average hit per slot",
            &hit_series(table, SbsKey::Sum),
        )?;
        emit("hit_sum.svg".into(), svg)?;
        let ratios = log_ratio_series(table);
        if !ratios.is_empty() {
            let svg = line_chart_svg("ln(proposed / policy)", "cache fraction", "log ratio", &ratios)?;
            emit("log_ratio.svg".into(), svg)?;
        }
    }
    if !sweep.is_empty() {
        let svg = line_chart_svg(
            "Federated caching versus lambda",
            "lambda",
            "average hit per slot",
            &lambda_series(sweep),
        )?;
        emit("lambda_sweep.svg".into(), svg)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn lambda_series_groups_by_cache() {
        let pts = vec![
            LambdaPoint { lambda: 2.0, cache_frac: 0.1, avg_hit: 1.0 },
            LambdaPoint { lambda: 0.5, cache_frac: 0.1, avg_hit: 2.0 },
            LambdaPoint { lambda: 0.5, cache_frac: 0.3, avg_hit: 3.0 },
        ];
        let s = lambda_series(&pts);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].points, vec![(0.5, 2.0), (2.0, 1.0)]);
        let svg = line_chart_svg("t", "x", "y", &s).unwrap();
        assert!(svg.starts_with("<svg"));
    }
}
