//! Static SVG emission for the error-history plots.
//!
//! No plotting dependency: the figure is a log-scale line chart with three
//! curves (best-knowledge only, estimation from true observations,
//! estimation from predicted observations), written directly as SVG
//! markup.

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 56.0;

pub struct Curve<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Render relative-error curves over time on a log10 y-axis.
///
/// Non-positive values cannot appear on a log axis; they are clamped to a
/// tenth of the smallest positive value in the data set.
pub fn error_history_svg(times: &[f64], curves: &[Curve<'_>], title: &str) -> Result<String> {
    if times.is_empty() || curves.is_empty() {
        return Err(Error::Format("nothing to plot".into()));
    }
    for c in curves {
        if c.values.len() != times.len() {
            return Err(Error::Format(format!(
                "curve {} has {} points, expected {}",
                c.label,
                c.values.len(),
                times.len()
            )));
        }
    }
    let min_positive = curves
        .iter()
        .flat_map(|c| c.values.iter())
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_positive.is_finite() {
        return Err(Error::Format(
            "no positive values to plot on a log axis".into(),
        ));
    }
    let clamp = min_positive * 0.1;
    let log_min = curves
        .iter()
        .flat_map(|c| c.values.iter())
        .map(|&v| v.max(clamp).log10())
        .fold(f64::INFINITY, f64::min)
        .floor();
    let log_max = curves
        .iter()
        .flat_map(|c| c.values.iter())
        .map(|&v| v.max(clamp).log10())
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    let log_span = (log_max - log_min).max(1.0);
    let (t_min, t_max) = (times[0], *times.last().unwrap());
    let t_span = (t_max - t_min).max(f64::MIN_POSITIVE);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |t: f64| MARGIN_LEFT + (t - t_min) / t_span * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (log_max - v.max(clamp).log10()) / log_span * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));

    // axes box
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n"
    ));

    // y ticks at decades
    let mut dec = log_min as i64;
    while dec <= log_max as i64 {
        let y = y_of(10f64.powi(dec as i32));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{dec}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0
        ));
        dec += 1;
    }

    // x ticks: 6 evenly spaced
    for i in 0..=5 {
        let t = t_min + t_span * i as f64 / 5.0;
        let x = x_of(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>\n",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{t:.2}</text>\n",
            MARGIN_TOP + plot_h + 20.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">t [s]</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">relative L2 error</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // curves
    for c in curves {
        let mut points = String::new();
        for (i, &v) in c.values.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", x_of(times[i]), y_of(v)));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            points.trim_end(),
            c.color
        ));
    }

    // legend
    for (i, c) in curves.iter().enumerate() {
        let y = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let x = MARGIN_LEFT + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            x + 24.0,
            c.color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            x + 30.0,
            y + 4.0,
            xml_escape(c.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal well-formedness check: tags balance and nest properly.
    pub(crate) fn xml_well_formed(text: &str) -> bool {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find('<') {
            let Some(end_rel) = rest[start..].find('>') else {
                return false;
            };
            let tag = &rest[start + 1..start + end_rel];
            rest = &rest[start + end_rel + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                match stack.pop() {
                    Some(open) if open == name => {}
                    _ => return false,
                }
            } else if !tag.ends_with('/') {
                let name: String = tag.split_whitespace().next().unwrap_or("").to_string();
                stack.push(name);
            }
        }
        stack.is_empty()
    }

    #[test]
    fn produces_well_formed_svg_with_three_polylines() {
        let times: Vec<f64> = (0..50).map(|k| 0.625 + 0.0125 * k as f64).collect();
        let a: Vec<f64> = (0..50).map(|k| 1e-2 * (1.0 + k as f64 / 10.0)).collect();
        let b: Vec<f64> = (0..50).map(|k| 3e-3 / (1.0 + k as f64 / 25.0)).collect();
        let c: Vec<f64> = (0..50)
            .map(|k| 5e-3 * (1.0 + (k as f64 / 7.0).sin().abs()))
            .collect();
        let svg = error_history_svg(
            &times,
            &[
                Curve {
                    label: "bk only",
                    color: "green",
                    values: &a,
                },
                Curve {
                    label: "true observations",
                    color: "orange",
                    values: &b,
                },
                Curve {
                    label: "predicted observations",
                    color: "blue",
                    values: &c,
                },
            ],
            "relative errors",
        )
        .unwrap();
        assert!(xml_well_formed(&svg), "svg must parse");
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("1e-2"));
    }

    #[test]
    fn y_range_covers_data_extremes() {
        let times = vec![0.0, 1.0, 2.0];
        let vals = vec![1e-6, 1e-3, 1e-1];
        let svg = error_history_svg(
            &times,
            &[Curve {
                label: "x",
                color: "black",
                values: &vals,
            }],
            "t",
        )
        .unwrap();
        // decade labels from the floor to the ceiling of the data range
        assert!(svg.contains(">1e-6<"));
        assert!(svg.contains(">1e-1<"));
    }

    #[test]
    fn rejects_empty_and_mismatched_input() {
        assert!(error_history_svg(&[], &[], "t").is_err());
        let times = vec![0.0, 1.0];
        let vals = vec![1.0];
        assert!(error_history_svg(
            &times,
            &[Curve {
                label: "x",
                color: "red",
                values: &vals
            }],
            "t"
        )
        .is_err());
    }
}
