//! Self-contained SVG bar chart: one group per experiment with a CRR and a
//! WRR bar. Deterministic output bytes for identical inputs.

use std::fmt::Write;

pub struct ChartEntry {
    pub label: String,
    pub crr: f64,
    pub wrr: f64,
}

const BAR_W: f64 = 34.0;
const GROUP_GAP: f64 = 36.0;
const PLOT_H: f64 = 260.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 64.0;

pub fn render(entries: &[ChartEntry]) -> String {
    let group_w = 2.0 * BAR_W + GROUP_GAP;
    let width = MARGIN_L + entries.len() as f64 * group_w + 24.0;
    let height = MARGIN_T + PLOT_H + MARGIN_B;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>");

    // Y axis with gridlines every 0.25.
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = MARGIN_T + PLOT_H * (1.0 - frac);
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>",
            width - 12.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{frac:.2}</text>",
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN_L:.1}\" y1=\"{MARGIN_T:.1}\" x2=\"{MARGIN_L:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
        MARGIN_T + PLOT_H
    );

    for (i, e) in entries.iter().enumerate() {
        let x0 = MARGIN_L + i as f64 * group_w + GROUP_GAP / 2.0;
        for (j, (value, fill)) in [(e.crr, "#4472c4"), (e.wrr, "#ed7d31")].iter().enumerate() {
            let v = value.clamp(0.0, 1.0);
            let h = PLOT_H * v;
            let x = x0 + j as f64 * BAR_W;
            let y = MARGIN_T + PLOT_H - h;
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{fill}\"/>",
                BAR_W - 4.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>",
                x + (BAR_W - 4.0) / 2.0,
                y - 4.0,
                value
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            x0 + BAR_W,
            MARGIN_T + PLOT_H + 16.0,
            xml_escape(&e.label)
        );
    }

    // Legend.
    let lx = MARGIN_L;
    let ly = MARGIN_T + PLOT_H + 36.0;
    let _ = writeln!(svg, "<rect x=\"{lx:.1}\" y=\"{ly:.1}\" width=\"12\" height=\"12\" fill=\"#4472c4\"/>");
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\">CRR</text>", lx + 16.0, ly + 10.0);
    let _ = writeln!(svg, "<rect x=\"{:.1}\" y=\"{ly:.1}\" width=\"12\" height=\"12\" fill=\"#ed7d31\"/>", lx + 64.0);
    let _ = writeln!(svg, "<text x=\"{:.1}\" y=\"{:.1}\">WRR</text>", lx + 80.0, ly + 10.0);
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
