//! Minimal static SVG rendering of figure rows: one polyline per series
//! with optional interval whiskers. Decorative only.

use std::fmt::Write;

use riskaudit::figures::FigureRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1b6ca8", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#666666"];

fn title(figure: u8) -> &'static str {
    match figure {
        1 => "Recidivism rate by decile score",
        2 => "False positive rate by prior count",
        _ => "Decile score distribution",
    }
}

pub fn render(figure: u8, rows: &[FigureRow]) -> String {
    let mut xs: Vec<&str> = Vec::new();
    let mut series: Vec<&str> = Vec::new();
    for r in rows {
        if !xs.contains(&r.x.as_str()) {
            xs.push(&r.x);
        }
        if !series.contains(&r.series.as_str()) {
            series.push(&r.series);
        }
    }
    let y_max = rows
        .iter()
        .filter_map(|r| r.ci_high.or(r.y))
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let y_top = if figure == 3 { y_max * 1.1 } else { 1.0 };
    let step = (WIDTH - 2.0 * MARGIN) / xs.len().max(1) as f64;
    let px = |x: &str| MARGIN + step * (xs.iter().position(|v| *v == x).unwrap_or(0) as f64 + 0.5);
    let py = |y: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * y / y_top;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, title(figure));
    let _ = writeln!(
        s,
        r##"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="#000"/>"##,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for k in 0..=4 {
        let v = y_top * f64::from(k) / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, MARGIN - 6.0, py(v) + 4.0);
    }
    for x in &xs {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, px(x), HEIGHT - MARGIN + 16.0);
    }
    for (i, name) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = rows
            .iter()
            .filter(|r| r.series == *name)
            .filter_map(|r| r.y.map(|y| format!("{:.1},{:.1}", px(&r.x), py(y))))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, points.join(" "));
        for r in rows.iter().filter(|r| r.series == *name) {
            if let (Some(lo), Some(hi)) = (r.ci_low, r.ci_high) {
                let x = px(&r.x);
                let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/>"#, py(lo), py(hi));
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            MARGIN + 16.0 * i as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
