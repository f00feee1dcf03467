//! Coverage tables, comparison tables and self-contained SVG plots. Output
//! depends only on the inputs, byte for byte.

use std::fmt::Write;

use mdsplit_core::conformal::PredictionRegion;
use mdsplit_core::eval::{binomial_band, ComparisonRow, CoverageReport};

use crate::io::num;

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 input")
}

/// `stratum,level,count,achieved,deviation,band`; empty strata leave
/// `achieved` and `deviation` blank.
pub fn coverage_csv(report: &CoverageReport) -> String {
    let mut rows = Vec::new();
    for s in &report.strata {
        for (j, &level) in report.levels.iter().enumerate() {
            let (achieved, deviation) = match s.achieved(j) {
                Some(a) => (num(a), num(a - level)),
                None => (String::new(), String::new()),
            };
            let band = if s.count == 0 { String::new() } else { num(binomial_band(level, s.count)) };
            rows.push(vec![s.stratum.label(), num(level), s.count.to_string(), achieved, deviation, band]);
        }
    }
    csv_text(&["stratum", "level", "count", "achieved", "deviation", "band"], rows)
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    csv_text(
        &["method", "level", "mean_deviation", "max_deviation"],
        rows.iter()
            .map(|r| vec![r.method.clone(), num(r.level), num(r.mean_deviation), num(r.max_deviation)]),
    )
}

/// One row per point: `id` then one column per alpha value.
pub fn profiles_csv(alpha: &[f64], profiles: &[(usize, Vec<f64>)]) -> String {
    // Grid values carry float noise (0.7000000000000001); headers do not need it.
    let names: Vec<String> = alpha.iter().map(|a| format!("r_{}", num((a * 1e9).round() / 1e9))).collect();
    let mut header = vec!["id"];
    header.extend(names.iter().map(String::as_str));
    csv_text(
        &header,
        profiles.iter().map(|(id, p)| std::iter::once(id.to_string()).chain(p.iter().map(|&v| num(v))).collect()),
    )
}

/// `id,level,intervals` with intervals written `lo:hi` and joined by `;`.
pub fn regions_csv(regions: &[(usize, Vec<PredictionRegion>)]) -> String {
    let mut rows = Vec::new();
    for (id, rs) in regions {
        for r in rs {
            let iv: Vec<String> = r.intervals.iter().map(|(lo, hi)| format!("{}:{}", num(*lo), num(*hi))).collect();
            rows.push(vec![id.to_string(), num(r.level), iv.join(";")]);
        }
    }
    csv_text(&["id", "level", "intervals"], rows)
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn svg_open(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Distinct, fixed colour per stratum index.
fn palette(i: usize) -> String {
    let hue = (i as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},65%,42%)")
}

/// Achieved against nominal coverage, one polyline per stratum, with the
/// diagonal for reference.
pub fn coverage_svg(report: &CoverageReport, title: &str) -> String {
    let mut out = String::new();
    svg_open(&mut out, SIZE, SIZE, title);
    let span = SIZE - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + v * span;
    let py = |v: f64| SIZE - MARGIN - v * span;
    let _ = writeln!(
        out,
        r##"<rect x="{m:.1}" y="{m:.1}" width="{s:.1}" height="{s:.1}" fill="none" stroke="#444"/>"##,
        m = MARGIN,
        s = span
    );
    let _ = writeln!(
        out,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, px(t), SIZE - MARGIN + 16.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t}</text>"#, MARGIN - 6.0, py(t) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">nominal</text>"#, SIZE / 2.0, SIZE - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">achieved</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    for (i, s) in report.strata.iter().enumerate() {
        let pts: Vec<String> = report
            .levels
            .iter()
            .enumerate()
            .filter_map(|(j, &l)| s.achieved(j).map(|a| format!("{:.2},{:.2}", px(l), py(a))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"><title>{}</title></polyline>"#,
            pts.join(" "),
            palette(i),
            escape(&s.stratum.label())
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Signed deviation `achieved - nominal` per stratum (columns) and level
/// (rows), blue below nominal and red above, saturating at 0.2.
pub fn deviation_heatmap_svg(report: &CoverageReport, title: &str) -> String {
    let cols = report.strata.len().max(1) as f64;
    let rows = report.levels.len().max(1) as f64;
    let cell = (SIZE - 2.0 * MARGIN) / cols;
    let height = 2.0 * MARGIN + rows * 24.0;
    let mut out = String::new();
    svg_open(&mut out, SIZE, height, title);
    for (j, &level) in report.levels.iter().enumerate() {
        let y = MARGIN + j as f64 * 24.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN - 6.0, y + 16.0, num(level));
        for (i, s) in report.strata.iter().enumerate() {
            let fill = match s.achieved(j) {
                None => "#dddddd".to_string(),
                Some(a) => {
                    let t = ((a - level) / 0.2).clamp(-1.0, 1.0);
                    let fade = |c: f64| (255.0 * (1.0 - t.abs()) + c * t.abs()).round() as u8;
                    if t < 0.0 {
                        format!("#{:02x}{:02x}{:02x}", fade(33.0), fade(102.0), fade(172.0))
                    } else {
                        format!("#{:02x}{:02x}{:02x}", fade(178.0), fade(24.0), fade(43.0))
                    }
                }
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.1}" width="{cell:.2}" height="24" fill="{fill}"><title>{} level {}</title></rect>"#,
                MARGIN + i as f64 * cell,
                escape(&s.stratum.label()),
                num(level)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdsplit_core::eval::{Stratum, StratumCoverage};

    fn report() -> CoverageReport {
        CoverageReport {
            levels: vec![0.5, 0.8, 0.9],
            strata: vec![
                StratumCoverage { stratum: Stratum::Bin { lo: -4.0, hi: 0.0 }, count: 10, covered: vec![5, 8, 10] },
                StratumCoverage { stratum: Stratum::Cluster(1), count: 0, covered: vec![0, 0, 0] },
            ],
        }
    }

    #[test]
    fn table_shape() {
        let t = coverage_csv(&report());
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "stratum,level,count,achieved,deviation,band");
        assert_eq!(lines[1], "\"bin[-4,0)\",0.5,10,0.5,0.0,0.4743416490252569");
        assert_eq!(lines[6], "cluster1,0.9,0,,,");
    }

    #[test]
    fn empty_report() {
        let r = CoverageReport { levels: vec![], strata: vec![] };
        assert_eq!(coverage_csv(&r), "stratum,level,count,achieved,deviation,band\n");
        let svg = coverage_svg(&r, "empty");
        assert!(svg.starts_with("<svg") && !svg.contains("<polyline"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let r = report();
        assert_eq!(coverage_svg(&r, "t"), coverage_svg(&r.clone(), "t"));
        assert_eq!(deviation_heatmap_svg(&r, "t"), deviation_heatmap_svg(&r.clone(), "t"));
        assert_eq!(coverage_svg(&r, "t").matches("<polyline").count(), 1);
        assert_eq!(deviation_heatmap_svg(&r, "t").matches("<rect x=").count(), 6);
    }

    #[test]
    fn regions_and_profiles() {
        let r = PredictionRegion { intervals: vec![(-1.0, 0.5), (2.0, 3.25)], level: 0.8, group: 0, touches_boundary: false };
        assert_eq!(regions_csv(&[(4, vec![r])]), "id,level,intervals\n4,0.8,-1.0:0.5;2.0:3.25\n");
        assert_eq!(profiles_csv(&[0.0, 1.0], &[(0, vec![0.0, 1.0])]), "id,r_0.0,r_1.0\n0,0.0,1.0\n");
    }
}
