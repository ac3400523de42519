use std::path::Path;

use plotters::prelude::*;

use bytesgan::eval::LossPoint;
use bytesgan::{Error, Result};

fn draw_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Discriminator and generator loss against step, as an SVG file.
pub fn loss_curve(path: &Path, title: &str, points: &[LossPoint]) -> Result<()> {
    let disc: Vec<(f64, f64)> = points.iter().map(|p| (p.step as f64, p.loss)).collect();
    let generator: Vec<(f64, f64)> = points.iter().filter_map(|p| p.generator.map(|g| (p.step as f64, g))).collect();
    let x_max = disc.last().map_or(1.0, |p| p.0.max(1.0));
    let ys = disc.iter().chain(&generator).map(|p| p.1).filter(|v| v.is_finite());
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi.max(lo + 1e-6)) } else { (0.0, 1.0) };

    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..x_max, lo..hi * 1.05)
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc("loss")
        .draw()
        .map_err(|e| draw_err(path, e))?;
    chart
        .draw_series(LineSeries::new(disc, &BLUE))
        .map_err(|e| draw_err(path, e))?
        .label("discriminator")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLUE));
    if !generator.is_empty() {
        chart
            .draw_series(LineSeries::new(generator, &RED))
            .map_err(|e| draw_err(path, e))?
            .label("generator (feature matching)")
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], RED));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE)
        .draw()
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))
}
