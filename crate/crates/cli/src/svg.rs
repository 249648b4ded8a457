//! Minimal standalone SVG line plots: axes, ticks, polylines, point markers
//! with error bars, and a legend. No plotting dependency.

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// error-bar half-heights; empty for plain lines
    pub err: Vec<f64>,
    pub color: &'static str,
    pub points_only: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 62.0;
const MR: f64 = 18.0;
const MT: f64 = 34.0;
const MB: f64 = 46.0;

pub const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

impl Plot {
    pub fn render(&self) -> String {
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in &self.series {
            for (i, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
                let e = s.err.get(i).copied().unwrap_or(0.0);
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y - e);
                ymax = ymax.max(y + e);
            }
        }
        if !xmin.is_finite() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        if (xmax - xmin).abs() < 1e-300 {
            xmax = xmin + 1.0;
        }
        if (ymax - ymin).abs() < 1e-300 {
            ymax = ymin + 1.0;
        }
        let pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;

        let sx = |x: f64| ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
        let sy = |y: f64| H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
             viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            W / 2.0,
            xml_escape(&self.title)
        ));
        // axes
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
            H - MB,
            W - MR,
            H - MB,
            H - MB
        ));
        // ticks
        for i in 0..=5 {
            let fx = xmin + (xmax - xmin) * i as f64 / 5.0;
            let px = sx(fx);
            out.push_str(&format!(
                "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n\
                 <text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                H - MB,
                H - MB + 5.0,
                H - MB + 18.0,
                fmt_tick(fx)
            ));
            let fy = ymin + (ymax - ymin) * i as f64 / 5.0;
            let py = sy(fy);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{py}\" x2=\"{ML}\" y2=\"{py}\" stroke=\"black\"/>\n\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                ML - 5.0,
                ML - 8.0,
                py + 4.0,
                fmt_tick(fy)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            (ML + W - MR) / 2.0,
            H - 8.0,
            xml_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
            (MT + H - MB) / 2.0,
            (MT + H - MB) / 2.0,
            xml_escape(&self.y_label)
        ));

        for (si, s) in self.series.iter().enumerate() {
            if !s.points_only && s.x.len() > 1 {
                let pts: Vec<String> = s
                    .x
                    .iter()
                    .zip(&s.y)
                    .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                out.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                    pts.join(" "),
                    s.color
                ));
            }
            for (i, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
                let (px, py) = (sx(x), sy(y));
                if let Some(&e) = s.err.get(i) {
                    if e > 0.0 {
                        let (y1, y2) = (sy(y - e), sy(y + e));
                        out.push_str(&format!(
                            "<line x1=\"{px}\" y1=\"{y1}\" x2=\"{px}\" y2=\"{y2}\" stroke=\"{}\"/>\n\
                             <line x1=\"{}\" y1=\"{y1}\" x2=\"{}\" y2=\"{y1}\" stroke=\"{}\"/>\n\
                             <line x1=\"{}\" y1=\"{y2}\" x2=\"{}\" y2=\"{y2}\" stroke=\"{}\"/>\n",
                            s.color,
                            px - 3.0,
                            px + 3.0,
                            s.color,
                            px - 3.0,
                            px + 3.0,
                            s.color
                        ));
                    }
                }
                if s.points_only || !s.err.is_empty() {
                    out.push_str(&format!(
                        "<circle cx=\"{px}\" cy=\"{py}\" r=\"2.6\" fill=\"{}\"/>\n",
                        s.color
                    ));
                }
            }
            // legend
            let ly = MT + 14.0 * si as f64 + 4.0;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"/>\n\
                 <text x=\"{}\" y=\"{}\">{}</text>\n",
                W - MR - 150.0,
                W - MR - 126.0,
                s.color,
                W - MR - 120.0,
                ly + 4.0,
                xml_escape(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let plot = Plot {
            title: "demo".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "curve".into(),
                x: vec![0.0, 0.5, 1.0],
                y: vec![0.0, 1.0, 0.5],
                err: vec![0.1, 0.1, 0.1],
                color: PALETTE[0],
                points_only: false,
            }],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("circle"));
    }
}
