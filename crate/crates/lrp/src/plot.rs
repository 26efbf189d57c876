//! Standalone SVG rendering of scaling series: log-log scatter with error
//! bars and a weighted least-squares line annotated with the fitted slope.

use thiserror::Error;

use crate::estimation::weighted_loglog_fit;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("plot refused: the series is empty")]
    EmptySeries,
    #[error("plot refused: {0}")]
    Invalid(String),
}

/// One series of `(n, mean, ci_lo, ci_hi)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, f64, f64)>,
}

/// Parses `n,mean,ci_lo,ci_hi` rows, with an optional second triplet of
/// columns for a companion series. A non-numeric first line is a header and
/// provides the series labels.
pub fn parse_series_csv(text: &str) -> Result<Vec<Series>, PlotError> {
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 && fields.len() != 7 {
            return Err(PlotError::Parse {
                line: line_no,
                message: format!("expected 4 or 7 columns, found {}", fields.len()),
            });
        }
        let numeric: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match numeric {
            Ok(values) => rows.push((line_no, values)),
            Err(e) => {
                if idx == 0 {
                    labels = Some(fields.iter().map(|s| s.to_string()).collect());
                } else {
                    return Err(PlotError::Parse { line: line_no, message: e.to_string() });
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(PlotError::EmptySeries);
    }
    let width = rows[0].1.len();
    for (line, values) in &rows {
        if values.len() != width {
            return Err(PlotError::Parse {
                line: *line,
                message: "inconsistent column count".into(),
            });
        }
        if values[0] <= 0.0 || values[1] <= 0.0 {
            return Err(PlotError::Parse {
                line: *line,
                message: "log-log plot needs positive n and mean".into(),
            });
        }
    }
    let label_for = |col: usize, fallback: &str| -> String {
        labels
            .as_ref()
            .and_then(|l| l.get(col))
            .cloned()
            .unwrap_or_else(|| fallback.to_string())
    };
    let mut series = vec![Series {
        label: label_for(1, "mean"),
        points: rows.iter().map(|(_, v)| (v[0], v[1], v[2], v[3])).collect(),
    }];
    if width == 7 {
        series.push(Series {
            label: label_for(4, "mean2"),
            points: rows.iter().map(|(_, v)| (v[0], v[4], v[5], v[6])).collect(),
        });
    }
    Ok(series)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 460.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const COLORS: [&str; 2] = ["#1f6fb2", "#c2452d"];

/// Renders the series as a self-contained log-log SVG document. Each series
/// gets scatter markers, confidence whiskers, and one fitted line annotated
/// with its slope to four decimals.
pub fn render_loglog_svg(series: &[Series]) -> Result<String, PlotError> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(PlotError::EmptySeries);
    }
    for s in series {
        if s.points.len() < 2 {
            return Err(PlotError::Invalid(format!(
                "series {} has {} point(s), need at least 2",
                s.label,
                s.points.len()
            )));
        }
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(n, mean, ci_lo, ci_hi) in &s.points {
            xs.push(n.log10());
            ys.push(mean.log10());
            if ci_lo > 0.0 {
                ys.push(ci_lo.log10());
            }
            if ci_hi > 0.0 {
                ys.push(ci_hi.log10());
            }
        }
    }
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let sy = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#333\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"#333\"/>\n",
        HEIGHT - MARGIN_B
    ));
    for k in 0..=4 {
        let xv = x_min + (x_max - x_min) * k as f64 / 4.0;
        let yv = y_min + (y_max - y_min) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">{}</text>\n",
            sx(xv),
            HEIGHT - MARGIN_B + 18.0,
            tick_label(10f64.powf(xv))
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\" fill=\"#333\">{}</text>\n",
            MARGIN_L - 8.0,
            sy(yv) + 4.0,
            tick_label(10f64.powf(yv))
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111\">n</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#111\" transform=\"rotate(-90 16 {:.1})\">resistance</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    ));

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let fit_points: Vec<(f64, f64, f64)> = s
            .points
            .iter()
            .map(|&(n, mean, ci_lo, ci_hi)| (n, mean, ((ci_hi - ci_lo) / (2.0 * 1.96)).max(0.0)))
            .collect();
        let fit = weighted_loglog_fit(&fit_points)
            .map_err(|e| PlotError::Invalid(e.to_string()))?;

        // fitted line across the data range
        let n_lo = s.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let n_hi = s.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y_at = |n: f64| (fit.intercept + fit.delta_hat * n.ln()) / std::f64::consts::LN_10;
        svg.push_str(&format!(
            "<line class=\"fit\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-dasharray=\"6 3\" stroke-width=\"1.5\"/>\n",
            sx(n_lo.log10()),
            sy(y_at(n_lo)),
            sx(n_hi.log10()),
            sy(y_at(n_hi)),
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}: slope = {:.4}</text>\n",
            MARGIN_L + 10.0,
            MARGIN_T - 20.0 + 16.0 * si as f64,
            xml_escape(&s.label),
            fit.delta_hat
        ));

        for &(n, mean, ci_lo, ci_hi) in &s.points {
            let x = sx(n.log10());
            if ci_hi > ci_lo && ci_lo > 0.0 {
                svg.push_str(&format!(
                    "<line class=\"whisker\" x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
                    sy(ci_lo.log10()),
                    sy(ci_hi.log10()),
                ));
            }
            svg.push_str(&format!(
                "<circle class=\"pt\" cx=\"{x:.2}\" cy=\"{:.2}\" r=\"3.2\" fill=\"{color}\"/>\n",
                sy(mean.log10()),
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// CSV text straight to SVG text.
pub fn plot_csv_to_svg(csv_text: &str) -> Result<String, PlotError> {
    render_loglog_svg(&parse_series_csv(csv_text)?)
}

fn tick_label(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else if v >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.08).max(0.05);
    (lo - pad, hi + pad)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
