//! CSV and SVG output for loss curves and sample fans.

use std::fmt::Write as _;

use crate::data::SeriesInstance;
use crate::metrics::quantile_linear;
use crate::train::RunRecord;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn loss_curve_csv(rec: &RunRecord) -> String {
    let mut s = String::from("epoch,train_njnll,val_njnll,seconds\n");
    for e in &rec.epochs {
        let train = e.train_njnll.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", e.epoch, train, e.val_njnll, e.seconds);
    }
    s
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (x0, x1) = bounds(xs);
        let (y0, y1) = bounds(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        H - PAD - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
            W / 2.0,
            H - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{ylabel}</text>"#,
            H / 2.0,
            H / 2.0
        );
        for (v, anchor, x, y) in [
            (self.x0, "start", self.x(self.x0), H - PAD + 16.0),
            (self.x1, "end", self.x(self.x1), H - PAD + 16.0),
        ] {
            let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
        }
        for v in [self.y0, self.y1] {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#,
                PAD - 4.0,
                self.y(v) + 4.0
            );
        }
    }
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let m = 0.05 * (hi - lo);
    (lo - m, hi + m)
}

fn header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn polyline(s: &mut String, pts: &[(f64, f64)], color: &str) {
    let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, p.join(" "));
}

/// Train and validation njNLL per epoch.
pub fn loss_curve_svg(rec: &RunRecord) -> String {
    let ep = || rec.epochs.iter().map(|e| e.epoch as f64);
    let vals = || {
        rec.epochs
            .iter()
            .flat_map(|e| e.train_njnll.into_iter().chain(std::iter::once(e.val_njnll)))
    };
    let f = Frame::new(ep(), vals());
    let mut s = header();
    f.axes(&mut s, "epoch", "njNLL");
    let train: Vec<(f64, f64)> = rec
        .epochs
        .iter()
        .filter_map(|e| e.train_njnll.map(|v| (f.x(e.epoch as f64), f.y(v))))
        .collect();
    let val: Vec<(f64, f64)> = rec.epochs.iter().map(|e| (f.x(e.epoch as f64), f.y(e.val_njnll))).collect();
    polyline(&mut s, &train, COLORS[0]);
    polyline(&mut s, &val, COLORS[1]);
    let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{}">train</text>"#, W - PAD - 80.0, PAD + 16.0, COLORS[0]);
    let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{}">validation</text>"#, W - PAD - 80.0, PAD + 32.0, COLORS[1]);
    s.push_str("</svg>\n");
    s
}

/// Observations as dots and, per query, the 5-95% sample band with the
/// median, coloured by channel.
pub fn fan_svg(inst: &SeriesInstance, samples: &[Vec<f64>]) -> String {
    let k = inst.num_queries();
    let mut bands = Vec::with_capacity(k);
    for j in 0..k {
        let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        col.sort_by(f64::total_cmp);
        bands.push((
            quantile_linear(&col, 0.05),
            quantile_linear(&col, 0.5),
            quantile_linear(&col, 0.95),
        ));
    }
    let ts = inst.observations.iter().map(|o| o.t).chain(inst.queries.iter().map(|q| q.t));
    let ys = inst
        .observations
        .iter()
        .map(|o| o.value)
        .chain(bands.iter().flat_map(|b| [b.0, b.2]))
        .chain(inst.answers.iter().flatten().copied());
    let ts: Vec<f64> = ts.collect();
    let ys: Vec<f64> = ys.collect();
    let f = Frame::new(ts.iter().copied(), ys.iter().copied());
    let mut s = header();
    f.axes(&mut s, "time", "value");
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{}</text>"#, PAD - 10.0, inst.id);
    for o in &inst.observations {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"#,
            f.x(o.t),
            f.y(o.value),
            COLORS[o.channel % COLORS.len()]
        );
    }
    for (j, q) in inst.queries.iter().enumerate() {
        let c = COLORS[q.channel % COLORS.len()];
        let (lo, med, hi) = bands[j];
        let x = f.x(q.t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{c}" stroke-width="6" stroke-opacity="0.35"/>"#,
            f.y(lo),
            f.y(hi)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{c}" stroke-width="2"/>"#,
            x - 5.0,
            f.y(med),
            x + 5.0,
            f.y(med)
        );
        if let Some(y) = inst.answers.as_ref().map(|a| a[j]) {
            let _ = writeln!(
                s,
                r#"<circle cx="{x:.1}" cy="{:.1}" r="3" fill="none" stroke="black"/>"#,
                f.y(y)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
