//! Minimal SVG scatter plots: hand-emitted paths and text, no plotting
//! dependency.

pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// (x, y) points; x is plotted on a log10 axis.
    pub points: Vec<(f64, f64)>,
}

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const W: f64 = 840.0;
const H: f64 = 520.0;
const ML: f64 = 70.0;
const MR: f64 = 30.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

/// Scatter of ratio-style data against a log-x driving constant.
pub fn scatter_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| *x > 0.0 && x.is_finite() && y.is_finite())
        .collect();
    let (x0, x1, y0, y1) = if pts.is_empty() {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        let lx: Vec<f64> = pts.iter().map(|(x, _)| x.log10()).collect();
        let ys: Vec<f64> = pts.iter().map(|(_, y)| *y).collect();
        let (mut a, mut b) = (
            lx.iter().cloned().fold(f64::MAX, f64::min),
            lx.iter().cloned().fold(f64::MIN, f64::max),
        );
        let (mut c, mut d) = (
            ys.iter().cloned().fold(f64::MAX, f64::min),
            ys.iter().cloned().fold(f64::MIN, f64::max),
        );
        if (b - a).abs() < 1e-12 {
            a -= 0.5;
            b += 0.5;
        }
        if (d - c).abs() < 1e-12 {
            c -= 0.5;
            d += 0.5;
        }
        let padx = (b - a) * 0.05;
        let pady = (d - c) * 0.08;
        (a - padx, b + padx, c - pady, d + pady)
    };
    let sx = |x: f64| ML + (x.log10() - x0) / (x1 - x0) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        xml(title)
    ));
    // axes
    out.push_str(&format!(
        "<path d=\"M {ML} {MT} L {ML} {} L {} {}\" stroke=\"black\" fill=\"none\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    // ticks: min/mid/max on both axes
    for t in [x0, (x0 + x1) / 2.0, x1] {
        let px = ML + (t - x0) / (x1 - x0) * (W - ML - MR);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            H - MB,
            H - MB + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">1e{:.1}</text>\n",
            H - MB + 20.0,
            t
        ));
    }
    for t in [y0, (y0 + y1) / 2.0, y1] {
        let py = sy(t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{ML}\" y2=\"{py}\" stroke=\"black\"/>\n",
            ML - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"end\">{:.3}</text>\n",
            ML - 8.0,
            py + 4.0,
            t
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        (ML + W - MR) / 2.0,
        H - 12.0,
        xml(xlabel)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"monospace\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        xml(ylabel)
    ));
    // points and legend
    for (si, s) in series.iter().enumerate() {
        for &(x, y) in &s.points {
            if x <= 0.0 || !x.is_finite() || !y.is_finite() {
                continue;
            }
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
                sx(x),
                sy(y),
                s.color
            ));
        }
        let ly = MT + 16.0 * si as f64;
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n",
            W - MR - 150.0,
            ly,
            s.color
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
            W - MR - 140.0,
            ly + 4.0,
            xml(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_well_formed_svg() {
        let s = scatter_svg(
            "ratios",
            "[W]_{A_1}",
            "lhs/rhs",
            &[Series {
                label: "M".into(),
                color: PALETTE[0],
                points: vec![(1.0, 0.5), (10.0, 0.6), (100.0, 0.55)],
            }],
        );
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 4); // 3 points + legend
    }

    #[test]
    fn empty_series_is_fine() {
        let s = scatter_svg("t", "x", "y", &[]);
        assert!(s.contains("</svg>"));
    }
}
