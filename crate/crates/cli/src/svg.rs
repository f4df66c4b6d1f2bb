//! Standalone SVG line plots with the plotted data embedded as CSV.

use std::fmt::Write;

use objmem::pipeline::SweepPoint;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

type Field = fn(&SweepPoint) -> f64;

fn axes() -> [(&'static str, Field); 4] {
    [
        ("noise_scale", |p| p.noise_scale),
        ("lambda", |p| p.lambda),
        ("tau_s", |p| p.tau_s),
        ("episode_count", |p| p.episode_count as f64),
    ]
}

fn distinct(points: &[SweepPoint], f: Field) -> usize {
    let mut v: Vec<u64> = points.iter().map(|p| f(p).to_bits()).collect();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn plot(points: &[SweepPoint], metric_name: &str, metric: Field, data_csv: &str) -> String {
    let (x_name, x_of): (&str, Field) = axes()
        .into_iter()
        .find(|(_, f)| distinct(points, *f) > 1)
        .unwrap_or(("noise_scale", |p| p.noise_scale));

    // one series per combination of everything except the x axis
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for p in points {
        let mut label = format!("{} {}", p.variant.name(), p.policy.name());
        for (name, f) in axes() {
            if name != x_name && distinct(points, f) > 1 {
                let _ = write!(label, " {name}={}", f(p));
            }
        }
        let xy = (x_of(p), metric(p));
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(xy),
            None => series.push((label, vec![xy])),
        }
    }
    for (_, v) in &mut series {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let xs = series.iter().flat_map(|s| s.1.iter().map(|p| p.0));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let ys = series.iter().flat_map(|s| s.1.iter().map(|p| p.1));
    let (y0, y1) = ys.fold((0.0f64, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let y1 = if y1 > y0 { y1 } else { y0 + 1.0 };
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let sx = |x: f64| MARGIN + (x - x0) / span_x * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>{metric_name} vs {x_name}</title>");
    let _ = writeln!(s, "<metadata id=\"data\" type=\"text/csv\"><![CDATA[\n{data_csv}]]></metadata>");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l} {t}V{b}H{r}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let fx = x0 + span_x * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{fy:.3}</text>"#, l - 6.0, sy(fy) + 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{fx:.3}</text>"#, sx(fx), b + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_name}</text>"#, W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{metric_name}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let c = COLOURS[i % COLOURS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
        }
        let ly = t + 16.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, r - 170.0, ly - 9.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, r - 155.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}
