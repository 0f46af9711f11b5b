//! Hand-built SVG line plot for the sweep summary: one polyline per mode
//! with a min-max band over seeds. Pure string assembly, so the same data
//! always yields the same bytes.

pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// `(x, mean, lo, hi)` rows, ascending in x.
    pub points: Vec<(f64, f64, f64, f64)>,
}

pub const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 66.0;
const RIGHT: f64 = 18.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 52.0;

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Shortest tick label: integers render bare, otherwise two decimals.
fn tick_label(x: f64) -> String {
    if x == x.round() && x.abs() < 1e9 {
        format!("{}", x as i64)
    } else {
        format!("{x:.2}")
    }
}

/// Smallest of 1/2/5 x 10^k that covers `span / max_ticks`.
fn nice_step(span: f64, max_ticks: usize) -> f64 {
    let raw = span / max_ticks as f64;
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 2.0, 5.0, 10.0] {
        if mag * mult >= raw {
            return mag * mult;
        }
    }
    mag * 10.0
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let his: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.3))
        .collect();
    let (mut x_min, mut x_max) = (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    if !x_min.is_finite() || x_min == x_max {
        x_min -= 1.0;
        x_max += 1.0;
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
        }
    }
    let y_top = his.iter().copied().fold(0.0, f64::max);
    let y_step = nice_step(if y_top > 0.0 { y_top } else { 1.0 }, 5);
    let y_max = y_step * (if y_top > 0.0 { y_top } else { 1.0 } / y_step).ceil().max(1.0);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| TOP + (1.0 - y / y_max) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        fmt(LEFT + plot_w / 2.0)
    ));

    // gridlines and y ticks
    let mut y = 0.0;
    while y <= y_max + y_step * 0.5 {
        let yy = fmt(py(y));
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{yy}\" x2=\"{}\" y2=\"{yy}\" stroke=\"#dddddd\"/>\n",
            fmt(LEFT),
            fmt(LEFT + plot_w)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(LEFT - 8.0),
            fmt(py(y) + 4.0),
            tick_label(y)
        ));
        y += y_step;
    }

    // x ticks at every distinct sample position
    let mut x_ticks: Vec<f64> = xs.clone();
    x_ticks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    x_ticks.dedup();
    for &x in &x_ticks {
        let xx = fmt(px(x));
        svg.push_str(&format!(
            "  <line x1=\"{xx}\" y1=\"{}\" x2=\"{xx}\" y2=\"{}\" stroke=\"#999999\"/>\n",
            fmt(TOP + plot_h),
            fmt(TOP + plot_h + 5.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{xx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(TOP + plot_h + 20.0),
            tick_label(x)
        ));
    }

    // axes
    svg.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n  \
         <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = fmt(LEFT),
        t = fmt(TOP),
        b = fmt(TOP + plot_h),
        r = fmt(LEFT + plot_w)
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        fmt(LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        fmt(TOP + plot_h / 2.0),
        fmt(TOP + plot_h / 2.0)
    ));

    // bands first so every mean line stays visible
    for s in series {
        if s.points.len() < 2 {
            continue;
        }
        let mut pts = String::new();
        for p in &s.points {
            pts.push_str(&format!("{},{} ", fmt(px(p.0)), fmt(py(p.3))));
        }
        for p in s.points.iter().rev() {
            pts.push_str(&format!("{},{} ", fmt(px(p.0)), fmt(py(p.2))));
        }
        svg.push_str(&format!(
            "  <polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
            pts.trim_end(),
            s.color
        ));
    }
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{},{}", fmt(px(p.0)), fmt(py(p.1))))
            .collect();
        if pts.len() > 1 {
            svg.push_str(&format!(
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
                pts.join(" "),
                s.color
            ));
        }
        for p in &s.points {
            svg.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"2.6\" fill=\"{}\"/>\n",
                fmt(px(p.0)),
                fmt(py(p.1)),
                s.color
            ));
        }
    }

    // legend, top right corner of the plot area
    for (i, s) in series.iter().enumerate() {
        let ly = TOP + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.8\"/>\n",
            fmt(LEFT + plot_w - 150.0),
            fmt(ly),
            fmt(LEFT + plot_w - 124.0),
            fmt(ly),
            s.color
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(LEFT + plot_w - 118.0),
            fmt(ly + 4.0),
            s.label
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Vec<Series> {
        vec![
            Series {
                label: "standard".into(),
                color: PALETTE[0],
                points: vec![
                    (50.0, 1.3, 1.1, 1.5),
                    (100.0, 0.9, 0.8, 1.0),
                    (200.0, 0.5, 0.45, 0.6),
                ],
            },
            Series {
                label: "dm-fixed".into(),
                color: PALETTE[1],
                points: vec![
                    (50.0, 0.7, 0.6, 0.8),
                    (100.0, 0.45, 0.4, 0.5),
                    (200.0, 0.42, 0.4, 0.45),
                ],
            },
        ]
    }

    #[test]
    fn same_data_same_bytes() {
        let a = line_plot("t", "x", "y", &demo());
        let b = line_plot("t", "x", "y", &demo());
        assert_eq!(a, b);
    }

    #[test]
    fn contains_the_expected_elements() {
        let svg = line_plot("position RMSE vs samples", "samples K", "RMSE", &demo());
        assert!(svg.starts_with("<svg "));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(svg.contains("standard"));
        assert!(svg.contains("dm-fixed"));
        assert!(svg.contains("position RMSE vs samples"));
    }

    #[test]
    fn single_point_series_renders_without_lines() {
        let svg = line_plot(
            "t",
            "x",
            "y",
            &[Series {
                label: "one".into(),
                color: PALETTE[0],
                points: vec![(100.0, 0.5, 0.5, 0.5)],
            }],
        );
        assert!(!svg.contains("<polyline"));
        assert!(svg.contains("<circle"));
    }

    #[test]
    fn nice_steps_cover_the_span() {
        assert_eq!(nice_step(1.0, 5), 0.2);
        assert_eq!(nice_step(10.0, 5), 2.0);
        assert_eq!(nice_step(0.7, 5), 0.2);
        assert_eq!(nice_step(23.0, 5), 5.0);
    }
}
