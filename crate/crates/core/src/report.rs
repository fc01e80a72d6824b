//! Static report artifacts: bin CSV, a two-panel SVG and a fit summary.

use std::fmt::Write as _;

use crate::analytics::{BinSeries, FitError, FitResult};

pub const CSV_HEADER: &str = "bin_key,trials,p,mean_progress,mean_precision,mean_recall,mean_tokens";

pub fn bins_csv(bins: &[BinSeries]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for b in bins {
        let tokens = b.mean_tokens.map(|t| format!("{t:.3}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{}",
            b.lower, b.trials, b.p, b.mean_progress, b.mean_precision, b.mean_recall, tokens
        )
        .expect("string write");
    }
    out
}

pub fn fit_summary(fit: &Result<FitResult, FitError>) -> String {
    match fit {
        Ok(f) => format!(
            "L0 (OLS): {:.4}\nL0 (WLS): {:.4}\nslope (OLS): {:.6}\nslope (WLS): {:.6}\nR^2: {:.6}\nbins used: {}\nbins dropped (p = 0): {}\n",
            f.l0_ols, f.l0_wls, f.slope_ols, f.slope, f.r_squared, f.bins_used, f.bins_dropped_zero
        ),
        Err(e) => format!("fit error: {e}\n"),
    }
}

const WIDTH: f64 = 640.0;
const PANEL: f64 = 320.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;

struct Panel {
    top: f64,
    x_max: f64,
    /// (value -> fraction of plot height from the bottom)
    log: Option<f64>,
}

impl Panel {
    fn plot_w(&self) -> f64 {
        WIDTH - MARGIN_L - MARGIN_R
    }

    fn plot_h(&self) -> f64 {
        PANEL - MARGIN_T - MARGIN_B
    }

    fn x(&self, depth: f64) -> f64 {
        MARGIN_L + depth / self.x_max * self.plot_w()
    }

    fn y(&self, p: f64) -> Option<f64> {
        let frac = match self.log {
            None => p,
            Some(floor) => {
                if p <= 0.0 {
                    return None;
                }
                1.0 - p.ln().max(floor.ln()) / floor.ln()
            }
        };
        Some(self.top + MARGIN_T + (1.0 - frac) * self.plot_h())
    }
}

/// Success rate against depth; linear y on top, log y below. Deterministic
/// output, no timestamps.
pub fn decay_svg(bins: &[BinSeries], fit: Option<&FitResult>) -> String {
    let x_max = bins
        .iter()
        .map(|b| b.lower as f64 + b.width as f64)
        .fold(10.0, f64::max);
    let x_max = (x_max / 10.0).ceil() * 10.0;
    let min_p = bins.iter().map(|b| b.p).filter(|p| *p > 0.0).fold(1.0, f64::min);
    let decades = (-min_p.log10()).ceil().max(1.0);
    let floor = 10f64.powf(-decades);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{}" viewBox="0 0 {WIDTH} {}" font-family="sans-serif" font-size="11">"#,
        2.0 * PANEL,
        2.0 * PANEL
    )
    .unwrap();
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for (i, log) in [None, Some(floor)].into_iter().enumerate() {
        let panel = Panel {
            top: i as f64 * PANEL,
            x_max,
            log,
        };
        let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (y0, y1) = (panel.top + MARGIN_T, panel.top + PANEL - MARGIN_B);
        writeln!(svg, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0).unwrap();
        let title = if log.is_none() { "Pass@1 (linear)" } else { "Pass@1 (log)" };
        writeln!(svg, r#"<text x="{x0}" y="{}">{title}</text>"#, y0 - 8.0).unwrap();
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">logical depth L</text>"#, (x0 + x1) / 2.0, y1 + 32.0).unwrap();

        for k in 0..=5 {
            let depth = x_max * k as f64 / 5.0;
            let x = panel.x(depth);
            writeln!(svg, r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 4.0).unwrap();
            writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{depth:.0}</text>"#, y1 + 16.0).unwrap();
        }
        let ticks: Vec<(f64, String)> = match log {
            None => (0..=5).map(|k| (k as f64 / 5.0, format!("{:.1}", k as f64 / 5.0))).collect(),
            Some(_) => (0..=decades as i32).map(|d| (10f64.powi(-d), format!("1e-{d}"))).collect(),
        };
        for (v, label) in ticks {
            let y = panel.y(v).expect("positive tick");
            writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0).unwrap();
            writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, x0 - 6.0, y + 4.0).unwrap();
        }

        if let Some(f) = fit {
            let pts: Vec<String> = (0..=100)
                .filter_map(|s| {
                    let depth = x_max * s as f64 / 100.0;
                    let p = (-depth / f.l0_wls).exp();
                    panel.y(p).map(|y| format!("{:.2},{:.2}", panel.x(depth), y))
                })
                .collect();
            writeln!(svg, r#"<polyline points="{}" fill="none" stroke="firebrick" stroke-width="1.5"/>"#, pts.join(" ")).unwrap();
        }
        for b in bins {
            if let Some(y) = panel.y(b.p) {
                writeln!(svg, r#"<circle cx="{:.2}" cy="{y:.2}" r="2.5" fill="steelblue"/>"#, panel.x(b.mean_depth)).unwrap();
            }
        }
        if let (Some(f), None) = (fit, log) {
            writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">L0 = {:.2}</text>"#, x1 - 6.0, y0 + 16.0, f.l0_wls).unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}
