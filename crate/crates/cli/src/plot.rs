//! SVG line plots of learning curves.

use plotters::prelude::*;
use varscore::fitness::{CurveMetric, LearningCurve, ModelVariant};

/// Mean ± std of `metric` against training-set size, one line per model.
pub fn curve_svg(curve: &LearningCurve, metric: CurveMetric, title: &str) -> Result<String, String> {
    let series: Vec<(ModelVariant, Vec<(f64, f64, f64)>)> = [ModelVariant::Baseline, ModelVariant::Augmented]
        .into_iter()
        .map(|m| {
            let pts = curve
                .aggregates
                .iter()
                .filter(|a| a.model == m && a.metric == metric)
                .map(|a| (a.size as f64, a.mean, a.std))
                .collect();
            (m, pts)
        })
        .collect();
    let all: Vec<&(f64, f64, f64)> = series.iter().flat_map(|(_, p)| p).collect();
    if all.is_empty() {
        return Err(format!("no defined values for {}", metric.name()));
    }
    let x_max = all.iter().map(|p| p.0).fold(1.0, f64::max) * 1.05;
    let y_min = all.iter().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min).min(0.0);
    let y_max = all.iter().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max).max(y_min + 1e-6);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (640, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| e.to_string())?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..x_max, y_min..y_max)
            .map_err(|e| e.to_string())?;
        chart
            .configure_mesh()
            .x_desc("training set size")
            .y_desc(metric.name())
            .draw()
            .map_err(|e| e.to_string())?;
        for ((model, pts), color) in series.iter().zip([BLUE, RED]) {
            chart
                .draw_series(LineSeries::new(pts.iter().map(|p| (p.0, p.1)), color.stroke_width(2)))
                .map_err(|e| e.to_string())?
                .label(model.name())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            for &(x, m, s) in pts {
                chart
                    .draw_series(std::iter::once(PathElement::new(vec![(x, m - s), (x, m + s)], color)))
                    .map_err(|e| e.to_string())?;
            }
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| e.to_string())?;
        root.present().map_err(|e| e.to_string())?;
    }
    Ok(svg)
}
