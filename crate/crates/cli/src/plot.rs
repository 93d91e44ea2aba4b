//! Minimal SVG charts for the evaluation report.

use std::fmt::Write;

use logodet_core::metrics::F1Point;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD_L: f64 = 56.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 36.0;
const PAD_B: f64 = 48.0;

type Series = (&'static str, &'static str, fn(&F1Point) -> f64);

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

/// Unit-interval y axis with gridlines at tenths.
fn y_axis(out: &mut String, label: &str) {
    let plot_h = H - PAD_T - PAD_B;
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let y = PAD_T + plot_h * (1.0 - v);
        let _ = writeln!(
            out,
            r##"<line x1="{PAD_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e4e4e4"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            W - PAD_R,
            PAD_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        PAD_T + plot_h / 2.0,
        escape(label)
    );
}

/// Detection and recognition F1 against the threshold.
pub fn f1_chart(points: &[F1Point]) -> String {
    let mut out = String::new();
    header(&mut out, "F1 vs. no-logo threshold");
    y_axis(&mut out, "F1");
    let plot_w = W - PAD_L - PAD_R;
    let plot_h = H - PAD_T - PAD_B;
    let sx = |t: f64| PAD_L + plot_w * t;
    let sy = |v: f64| PAD_T + plot_h * (1.0 - v);
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#,
            sx(t),
            H - PAD_B + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">threshold</text>"#,
        PAD_L + plot_w / 2.0,
        H - 8.0
    );
    let series: [Series; 2] = [
        ("detection", "#1f77b4", |p| p.detection.f1),
        ("recognition", "#d62728", |p| p.recognition.f1),
    ];
    for (k, (name, color, get)) in series.iter().enumerate() {
        let path: Vec<String> = points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.threshold), sy(get(p))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let ly = PAD_T + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            W - PAD_R - 120.0,
            W - PAD_R - 100.0,
            W - PAD_R - 94.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One bar per class; `None` marks classes without ground truth.
pub fn ap_chart(names: &[String], ap: &[Option<f64>], map: f64) -> String {
    let mut out = String::new();
    header(&mut out, &format!("Per-class AP (mAP {map:.3})"));
    y_axis(&mut out, "AP");
    let plot_w = W - PAD_L - PAD_R;
    let plot_h = H - PAD_T - PAD_B;
    let n = ap.len().max(1) as f64;
    let slot = plot_w / n;
    for (i, v) in ap.iter().enumerate() {
        let x = PAD_L + slot * i as f64;
        let name = names.get(i).map_or_else(|| i.to_string(), |s| escape(s));
        if let Some(v) = v {
            let h = plot_h * v;
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="#4c78a8"><title>{name}: {v:.3}</title></rect>"##,
                x + slot * 0.15,
                PAD_T + plot_h - h,
                slot * 0.7
            );
        }
        let cx = x + slot / 2.0;
        let ly = H - PAD_B + 12.0;
        let _ = writeln!(
            out,
            r#"<text transform="translate({cx:.1} {ly:.1}) rotate(45)" font-size="9">{name}</text>"#
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use logodet_core::metrics::{default_thresholds, f1_curve, ImageTop};
    use logodet_core::Label;

    #[test]
    fn charts_are_closed_svg() {
        let tops = vec![ImageTop {
            image_id: "a".into(),
            top: Some((0, 0.6)),
        }];
        let truth = vec![("a".to_string(), Label::Logo(0))];
        let curve = f1_curve(&tops, &truth, &default_thresholds()).unwrap();
        let svg = f1_chart(&curve);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);

        let names = vec!["a<b".to_string(), "c".to_string()];
        let svg = ap_chart(&names, &[Some(0.5), None], 0.5);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }
}
