//! Report files: comma-separated distribution tables, a plain-text summary
//! with every test statistic and pass/fail line, and a standalone SVG figure
//! overlaying the exact law on the empirical bars.
//!
//! Table bytes are a pure function of the report values (shortest-roundtrip
//! float formatting), so identical runs produce identical tables. Timings
//! appear only in the summary.

use crate::error::{Error, Result};
use crate::scenario::Report;
use crate::stats::{EmpiricalDistribution, Support};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn common_support<'a>(report: &'a Report) -> Result<&'a Support> {
    let dists: Vec<&EmpiricalDistribution> = [
        report.exact_exit.as_ref(),
        report.empirical_exit.as_ref(),
        report.reweighted.as_ref(),
    ]
    .into_iter()
    .flatten()
    .collect();
    let first = dists
        .first()
        .ok_or_else(|| Error::Config("report carries no distributions to write".into()))?;
    for d in &dists[1..] {
        if d.support() != first.support() {
            return Err(Error::MismatchedSupport(
                "report distributions disagree on support".into(),
            ));
        }
    }
    if first.support().is_empty() {
        return Err(Error::MismatchedSupport("empty support".into()));
    }
    Ok(first.support())
}

/// Render the distribution table.
pub fn distributions_csv(report: &Report) -> Result<String> {
    let support = common_support(report)?;
    let mut out = String::from("label_or_bin_left,bin_right,exact,empirical_exit,reweighted_resurrected\n");
    let cell = |d: &Option<EmpiricalDistribution>, i: usize| -> String {
        d.as_ref().map_or(String::new(), |d| fmt_f64(d.mass()[i]))
    };
    for i in 0..support.len() {
        let (left, right) = match support {
            Support::States(labels) => (labels[i].to_string(), labels[i].to_string()),
            Support::Bins(edges) => (fmt_f64(edges[i]), fmt_f64(edges[i + 1])),
        };
        writeln!(
            out,
            "{left},{right},{},{},{}",
            cell(&report.exact_exit, i),
            cell(&report.empirical_exit, i),
            cell(&report.reweighted, i),
        )
        .expect("string write");
    }
    Ok(out)
}

/// Render the human-readable summary.
pub fn summary_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", report.scenario);
    let _ = writeln!(out, "seed: {}", report.seed);
    if let Some(qsd) = &report.qsd {
        let _ = writeln!(out, "quasi-stationary killing rate theta: {:.12}", qsd.theta);
    }
    if let Some(t) = report.mean_exit_exact {
        let _ = writeln!(out, "mean exit time (exact): {t:.9}");
    }
    if let Some(t) = report.mean_exit_empirical {
        let _ = writeln!(out, "mean exit time (empirical): {t:.9}");
    }
    for (name, tv) in [
        ("TV exact vs empirical exit", report.tv_exact_empirical),
        ("TV exact vs reweighted", report.tv_exact_reweighted),
        ("TV empirical vs reweighted", report.tv_empirical_reweighted),
    ] {
        if let Some(tv) = tv {
            let _ = writeln!(out, "{name}: {tv:.6}");
        }
    }
    if let Some(s) = &report.stability {
        let _ = writeln!(
            out,
            "cycle-length stability: max share {:.5}, half-sample ratio {:.4}{}",
            s.max_share,
            s.half_ratio,
            if s.warn { " [DIVERGING MEAN]" } else { "" }
        );
    }
    if !report.tests.is_empty() {
        let _ = writeln!(out, "\ntests:");
        for t in &report.tests {
            let _ = writeln!(
                out,
                "  {}: statistic {:.6}, p = {:.6}",
                t.name, t.statistic, t.p_value
            );
        }
    }
    if !report.warnings.is_empty() {
        let _ = writeln!(out, "\nwarnings:");
        for w in &report.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    let _ = writeln!(out, "\nchecks:");
    for c in &report.checks {
        let _ = writeln!(
            out,
            "  [{}] {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let _ = writeln!(
        out,
        "\noverall: {}",
        if report.all_pass() { "PASS" } else { "FAIL" }
    );
    if !report.timings.is_empty() {
        let _ = writeln!(out, "\ntimings:");
        for (name, secs) in &report.timings {
            let _ = writeln!(out, "  {name}: {secs:.3} s");
        }
    }
    out
}

const FIG_W: f64 = 860.0;
const FIG_H: f64 = 500.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 52.0;

/// Render the exit-law figure: empirical bars with exact and reweighted
/// curves overlaid. The unbounded overflow bin, when present, is left out of
/// the picture.
pub fn figure_svg(report: &Report) -> Result<String> {
    let support = common_support(report)?;
    // cell centers and plotted extent
    let (centers, x_lo, x_hi): (Vec<f64>, f64, f64) = match support {
        Support::States(labels) => {
            let centers: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
            let lo = centers.first().copied().unwrap() - 0.5;
            let hi = centers.last().copied().unwrap() + 0.5;
            (centers, lo, hi)
        }
        Support::Bins(edges) => {
            let mut centers = Vec::new();
            for w in edges.windows(2) {
                if w[1].is_finite() {
                    centers.push(0.5 * (w[0] + w[1]));
                }
            }
            let hi = edges[centers.len()];
            (centers, edges[0], hi)
        }
    };
    let n_cells = centers.len();
    if n_cells == 0 {
        return Err(Error::MismatchedSupport("nothing finite to plot".into()));
    }
    let series: Vec<(&str, &EmpiricalDistribution, &str)> = [
        ("empirical exit", report.empirical_exit.as_ref(), "#4c78a8"),
        ("exact", report.exact_exit.as_ref(), "#d62728"),
        ("reweighted resurrected", report.reweighted.as_ref(), "#2ca02c"),
    ]
    .into_iter()
    .filter_map(|(name, d, color)| d.map(|d| (name, d, color)))
    .collect();
    let y_max = series
        .iter()
        .flat_map(|(_, d, _)| d.mass()[..n_cells].iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.08;

    let plot_w = FIG_W - MARGIN_L - MARGIN_R;
    let plot_h = FIG_H - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = move |y: f64| MARGIN_T + (1.0 - y / y_max) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{FIG_W}" height="{FIG_H}" viewBox="0 0 {FIG_W} {FIG_H}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{FIG_W}" height="{FIG_H}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{} exit law</text>"#,
        FIG_W / 2.0,
        report.scenario
    );

    // empirical bars
    if let Some(empirical) = report.empirical_exit.as_ref() {
        let bar_w = plot_w / n_cells as f64 * 0.92;
        for (i, &c) in centers.iter().enumerate() {
            let m = empirical.mass()[i];
            if m <= 0.0 {
                continue;
            }
            let _ = writeln!(
                svg,
                r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#9ecae1"/>"##,
                sx(c) - bar_w / 2.0,
                sy(m),
                bar_w,
                sy(0.0) - sy(m),
            );
        }
    }
    // curves
    for (name, dist, color) in &series {
        if *name == "empirical exit" {
            continue;
        }
        let points: Vec<String> = centers
            .iter()
            .enumerate()
            .map(|(i, &c)| format!("{:.3},{:.3}", sx(c), sy(dist.mass()[i])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
            points.join(" ")
        );
    }
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="black"/>"#,
        sy(0.0),
        FIG_W - MARGIN_R,
        sy(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{:.3}" stroke="black"/>"#,
        sy(0.0)
    );
    for k in 0..=5 {
        let x = x_lo + (x_hi - x_lo) * k as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.3}" y1="{1:.3}" x2="{0:.3}" y2="{2:.3}" stroke="black"/><text x="{0:.3}" y="{3:.3}" font-family="sans-serif" font-size="11" text-anchor="middle">{4:.3}</text>"#,
            sx(x),
            sy(0.0),
            sy(0.0) + 5.0,
            sy(0.0) + 18.0,
            x
        );
        let y = y_max * k as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.3}" y1="{1:.3}" x2="{2:.3}" y2="{1:.3}" stroke="black"/><text x="{3:.3}" y="{4:.3}" font-family="sans-serif" font-size="11" text-anchor="end">{5:.4}</text>"#,
            MARGIN_L - 5.0,
            sy(y),
            MARGIN_L,
            MARGIN_L - 8.0,
            sy(y) + 4.0,
            y
        );
    }
    // legend
    let mut ly = MARGIN_T + 8.0;
    for (name, _, color) in &series {
        let swatch = if *name == "empirical exit" {
            format!(
                r##"<rect x="{:.3}" y="{:.3}" width="18" height="10" fill="#9ecae1"/>"##,
                FIG_W - MARGIN_R - 230.0,
                ly - 9.0
            )
        } else {
            format!(
                r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{color}" stroke-width="1.6"/>"#,
                FIG_W - MARGIN_R - 230.0,
                ly - 4.0,
                FIG_W - MARGIN_R - 212.0,
                ly - 4.0
            )
        };
        let _ = writeln!(
            svg,
            r#"{swatch}<text x="{:.3}" y="{ly:.3}" font-family="sans-serif" font-size="12">{name}</text>"#,
            FIG_W - MARGIN_R - 206.0
        );
        ly += 16.0;
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Write the table, summary, and figure for a report; returns the paths.
pub fn emit_outputs(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let base = report.scenario.replace(['/', ' '], "_");
    let csv_path = dir.join(format!("{base}_distributions.csv"));
    std::fs::write(&csv_path, distributions_csv(report)?)?;
    let summary_path = dir.join(format!("{base}_summary.txt"));
    std::fs::write(&summary_path, summary_text(report))?;
    let figure_path = dir.join(format!("{base}_exit_law.svg"));
    std::fs::write(&figure_path, figure_svg(report)?)?;
    Ok(vec![csv_path, summary_path, figure_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Report;
    use crate::stats::{EmpiricalDistribution, Support};

    fn small_report() -> Report {
        let support = Support::States(vec![0, 1]);
        Report {
            scenario: "unit".into(),
            seed: 1,
            exact_exit: Some(
                EmpiricalDistribution::from_masses(support.clone(), vec![0.75, 0.25], 0).unwrap(),
            ),
            empirical_exit: Some(
                EmpiricalDistribution::from_masses(support, vec![0.7, 0.3], 10).unwrap(),
            ),
            ..Report::default()
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = distributions_csv(&small_report()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label_or_bin_left,bin_right,exact,empirical_exit,reweighted_resurrected"
        );
        assert_eq!(lines.next().unwrap(), "0,0,0.75,0.7,");
        assert_eq!(lines.next().unwrap(), "1,1,0.25,0.3,");
        assert!(lines.next().is_none());
    }

    #[test]
    fn empty_report_refused() {
        let report = Report::default();
        assert!(distributions_csv(&report).is_err());
        assert!(figure_svg(&report).is_err());
    }

    #[test]
    fn emit_writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_outputs(&small_report(), dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            assert!(p.exists(), "missing {p:?}");
            assert!(std::fs::metadata(p).unwrap().len() > 0);
        }
    }

    #[test]
    fn rerun_is_byte_identical() {
        let report = small_report();
        let a = distributions_csv(&report).unwrap();
        let b = distributions_csv(&report).unwrap();
        assert_eq!(a.into_bytes(), b.into_bytes());
        let fa = figure_svg(&report).unwrap();
        let fb = figure_svg(&report).unwrap();
        assert_eq!(fa, fb);
    }

    #[test]
    fn infinite_bin_edge_formats_as_inf() {
        let support = Support::Bins(vec![0.0, 0.5, f64::INFINITY]);
        let report = Report {
            scenario: "bins".into(),
            exact_exit: Some(
                EmpiricalDistribution::from_masses(support, vec![0.9, 0.1], 0).unwrap(),
            ),
            ..Report::default()
        };
        let csv = distributions_csv(&report).unwrap();
        assert!(csv.contains("0.5,inf,0.1"), "csv was:\n{csv}");
    }
}
