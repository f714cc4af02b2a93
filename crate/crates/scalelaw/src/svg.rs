//! Self-contained SVG charts with a log-scaled compute axis.
//!
//! Coordinates are printed with two decimals, so identical inputs give
//! byte-identical files.

use std::fmt::Write;

use scalelaw_core::data::{ExperimentRecord, HoldoutRule};
use scalelaw_core::eval::{validate_model, ThresholdSweep};
use scalelaw_core::fit::{predict, Law, Query, ScalingModel};
use scalelaw_core::optim::LogisticFit;

use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const CURVE_POINTS: usize = 200;
/// Token-to-parameter ratio used to draw the parameter/token law along compute.
const CURVE_TPR: f64 = 20.0;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn f(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Plot area with a log10 x-axis and a linear y-axis.
struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    body: String,
}

impl Frame {
    /// Whole decades covering `[lo, hi]`.
    fn new(lo: f64, hi: f64, y_lo: f64, y_hi: f64) -> Self {
        let mut x_lo = lo.log10().floor();
        let mut x_hi = hi.log10().ceil();
        if x_hi <= x_lo {
            x_lo -= 1.0;
            x_hi += 1.0;
        }
        Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x.log10() - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let t = (y.clamp(self.y_lo, self.y_hi) - self.y_lo) / (self.y_hi - self.y_lo);
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&mut self, title: &str, y_label: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let b = &mut self.body;
        let _ = writeln!(
            b,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            f(WIDTH / 2.0),
            escape(title)
        );
        let _ = writeln!(
            b,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            f(x0),
            f(y1),
            f(x1 - x0),
            f(y0 - y1)
        );
        let decades = (self.x_hi - self.x_lo) as i32;
        for i in 0..=decades {
            let e = self.x_lo as i32 + i;
            let x = self.px(10f64.powi(e));
            let _ = writeln!(
                self.body,
                r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" text-anchor="middle" font-size="11">1e{4}</text>"##,
                f(x),
                f(y1),
                f(y0),
                f(y0 + 16.0),
                e
            );
        }
        for i in 0..=5 {
            let v = self.y_lo + (self.y_hi - self.y_lo) * f64::from(i) / 5.0;
            let y = self.py(v);
            let _ = writeln!(
                self.body,
                r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end" font-size="11">{5}</text>"##,
                f(x0),
                f(y),
                f(x1),
                f(x0 - 6.0),
                f(y + 4.0),
                f(v)
            );
        }
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">training compute (FLOPs)</text>"#,
            f((x0 + x1) / 2.0),
            f(HEIGHT - 12.0)
        );
        let _ = writeln!(
            self.body,
            r#"<text x="16" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {0})">{1}</text>"#,
            f((y0 + y1) / 2.0),
            escape(y_label)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{},{}", f(self.px(x)), f(self.py(y))))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" {style} points="{}"/>"#,
            coords.join(" ")
        );
    }

    fn circle(&mut self, x: f64, y: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{}" cy="{}" r="3" {style}/>"#,
            f(self.px(x)),
            f(self.py(y))
        );
    }

    fn vline(&mut self, x: f64, style: &str) {
        let px = f(self.px(x));
        let _ = writeln!(
            self.body,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" {style}/>"#,
            f(TOP),
            f(HEIGHT - BOTTOM)
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = WIDTH,
            h = HEIGHT
        )
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

/// Success (1) or failure (0) per threshold, the fitted success probability
/// and a dashed line at the 50% crossing.
pub fn sweep_plot(sweep: &ThresholdSweep, title: &str) -> String {
    let ts = sweep.thresholds();
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(0.0, f64::max);
    let mut fr = Frame::new(lo, hi, 0.0, 1.0);
    fr.axes(title, "validation success");
    if let Some(fit) = &sweep.logistic {
        let curve: Vec<(f64, f64)> = log_grid(lo, hi, CURVE_POINTS)
            .map(|t| {
                let x = t.ln();
                let p = match *fit {
                    LogisticFit::Finite { w, b } => 1.0 / (1.0 + (-(w * x + b)).exp()),
                    LogisticFit::Separated { lo, hi, increasing } => {
                        let mid = 0.5 * (lo + hi);
                        let above = if x == mid {
                            0.5
                        } else {
                            f64::from(u8::from(x > mid))
                        };
                        if increasing {
                            above
                        } else {
                            1.0 - above
                        }
                    }
                };
                (t, p)
            })
            .collect();
        fr.polyline(&curve, r##"stroke="#1f77b4" stroke-width="2""##);
    }
    for p in &sweep.points {
        if p.evaluable {
            let y = if p.success { 1.0 } else { 0.0 };
            let fill = if p.success { "#2ca02c" } else { "#d62728" };
            fr.circle(p.threshold, y, &format!(r#"fill="{fill}""#));
        } else {
            fr.circle(p.threshold, 0.5, r##"fill="none" stroke="#999""##);
        }
    }
    if let Some(c) = sweep.crossing {
        fr.vline(c, r##"stroke="#555" stroke-dasharray="6 4""##);
        let _ = writeln!(
            fr.body,
            r#"<text x="{}" y="{}" font-size="11">50% at {:.3e}</text>"#,
            f(fr.px(c) + 4.0),
            f(TOP + 14.0),
            c
        );
    }
    fr.finish()
}

/// Compute query along the curve, or `None` for forms not indexed by compute.
fn curve_query(law: &Law, c: f64) -> Option<Query> {
    match law {
        Law::NdLaw(_) => {
            let n = (c / (6.0 * CURVE_TPR)).sqrt();
            Some(Query::ParamsTokens {
                n,
                d: CURVE_TPR * n,
            })
        }
        Law::PasskLaw(_) => Some(Query::FlopsK { c, k: 1.0 }),
        Law::ProxyLink(_) => None,
        _ => Some(Query::Flops { c }),
    }
}

/// Observed accuracy (train filled, validation hollow), the fitted curve
/// and shading over the held-out compute range.
pub fn accuracy_plot(
    model: &ScalingModel,
    records: &[ExperimentRecord],
    holdout: &HoldoutRule,
) -> Result<String> {
    let v = validate_model(model, records, holdout)?;
    let all: Vec<_> = v.train.residuals.iter().chain(&v.valid.residuals).collect();
    let lo = all.iter().map(|r| r.flops).fold(f64::INFINITY, f64::min);
    let hi = all.iter().map(|r| r.flops).fold(0.0, f64::max);
    let (lo, hi) = if lo.is_finite() {
        (lo, hi)
    } else {
        (1e18, 1e23)
    };
    let mut fr = Frame::new(lo, hi, 0.0, 1.0);
    let title = format!("{} ({})", model.benchmark, model.form());
    fr.axes(&title, "accuracy");

    let shade_from = fr.px(holdout.flops_threshold.max(10f64.powf(fr.x_lo)));
    let shade_to = WIDTH - RIGHT;
    if shade_from < shade_to {
        let _ = writeln!(
            fr.body,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#f4c542" fill-opacity="0.18"/>"##,
            f(shade_from),
            f(TOP),
            f(shade_to - shade_from),
            f(HEIGHT - TOP - BOTTOM)
        );
    }

    let curve: Vec<(f64, f64)> = log_grid(lo, hi, CURVE_POINTS)
        .filter_map(|c| {
            curve_query(&model.law, c)
                .and_then(|q| predict(model, &q).ok())
                .map(|p| (c, p.raw))
        })
        .collect();
    if curve.is_empty() {
        for r in &all {
            fr.circle(r.flops, r.predicted, r##"fill="none" stroke="#1f77b4""##);
        }
    } else {
        fr.polyline(&curve, r##"stroke="#1f77b4" stroke-width="2""##);
    }
    for r in &v.train.residuals {
        fr.circle(r.flops, r.actual, r##"fill="#333""##);
    }
    for r in &v.valid.residuals {
        fr.circle(r.flops, r.actual, r##"fill="white" stroke="#d62728""##);
    }
    Ok(fr.finish())
}
