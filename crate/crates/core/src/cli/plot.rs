//! Static SVG line plots of CSV tables.
//!
//! The first column is the abscissa, every other numeric column becomes a
//! series. The ordinate is logarithmic whenever all plotted values are
//! positive, which covers every error table the commands emit.

use std::fmt::Write;

use super::csv::Table;
use crate::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;").replace('\'', "&apos;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64> + Clone, allow_log: bool) -> Option<Self> {
        let finite = values.filter(|v| v.is_finite());
        let log = allow_log && finite.clone().all(|v| v > 0.0);
        let mapped = finite.map(|v| if log { v.log10() } else { v });
        let (mut lo, mut hi) = mapped.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return None;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Some(Axis { lo, hi, log })
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0);
            let mut out = Vec::new();
            let mut e = self.lo;
            while e <= self.hi + 1e-9 {
                out.push((10f64.powf(e), format!("1e{}", e as i64)));
                e += step;
            }
            out
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

/// Renders `table` as an SVG document.
pub fn render_svg(table: &Table, title: &str) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("CSV has no data rows".into()));
    }
    if table.header.len() < 2 {
        return Err(Error::InvalidArgument("CSV needs an abscissa and at least one series".into()));
    }
    let xs = table.column(0);
    let series: Vec<(usize, Vec<f64>)> = (1..table.header.len())
        .map(|j| (j, table.column(j)))
        .filter(|(_, c)| c.iter().any(|v| v.is_finite()))
        .collect();
    if series.is_empty() {
        return Err(Error::InvalidArgument("CSV has no numeric series".into()));
    }
    let x_axis = Axis::fit(xs.iter().copied(), false).ok_or_else(|| Error::InvalidArgument("abscissa has no finite values".into()))?;
    let y_axis = Axis::fit(series.iter().flat_map(|(_, c)| c.iter().copied()), true).expect("series have finite values");

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x_axis.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - y_axis.frac(y)) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    for (v, label) in y_axis.ticks() {
        let y = py(v);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
    for (v, label) in x_axis.ticks() {
        let x = px(v);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 20.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(&table.header[0])
    );

    for (k, (j, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!y_axis.log || **y > 0.0))
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
        for p in &points {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&table.header[*j]));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Table {
        Table::parse(text).unwrap()
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(render_svg(&table("m,err\n"), "t").is_err());
        assert!(render_svg(&table("m\n1\n"), "t").is_err());
    }

    #[test]
    fn log_axis_for_positive_errors() {
        let svg = render_svg(&table("m,a,b\n1,1e-1,1e-3\n2,1e-5,1e-9\n"), "conv").unwrap();
        assert!(svg.contains(">1e-9<") && svg.contains(">1e-1<"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn deterministic_and_escaped() {
        let t = table("x,a<b\n1,2\n2,-3\n");
        let a = render_svg(&t, "p & q").unwrap();
        assert_eq!(a, render_svg(&t, "p & q").unwrap());
        assert!(a.contains("a&lt;b") && a.contains("p &amp; q"));
    }
}
