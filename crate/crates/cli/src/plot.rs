//! Self-contained SVG of a sample path: state components on top, `E_θ*`
//! below, jump instants as dashed verticals in both panels.

use std::fmt::Write;

use shds_lab::foster::MonitorTrace;
use shds_lab::Arc64;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
/// Points kept per polyline.
const MAX_POINTS: usize = 2000;
/// Floor for the log axis of `E_θ*`.
const LOG_FLOOR: f64 = 1e-12;

struct Panel {
    top: f64,
    t_max: f64,
    lo: f64,
    hi: f64,
}

impl Panel {
    fn px(&self, t: f64) -> f64 {
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * t / self.t_max
    }

    fn py(&self, v: f64) -> f64 {
        self.top + PANEL_H * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }

    fn frame(&self, svg: &mut String, label: &str, fmt: impl Fn(f64) -> String) {
        let (x0, x1) = (self.px(0.0), self.px(self.t_max));
        let _ = writeln!(svg, r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{PANEL_H}" fill="none" stroke="black"/>"#, self.top, x1 - x0);
        for k in 0..=4 {
            let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
            let y = self.py(v);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, fmt(v));
            let t = self.t_max * k as f64 / 4.0;
            let x = self.px(t);
            let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#, self.top + PANEL_H + 16.0, short(t));
        }
        let _ = writeln!(svg, r#"<text x="{x0:.2}" y="{:.2}" font-size="13">{label}</text>"#, self.top - 8.0);
    }

    fn jumps(&self, svg: &mut String, times: &[f64]) {
        for &t in times {
            let x = self.px(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="3,3"/>"##,
                self.top,
                self.top + PANEL_H
            );
        }
    }
}

fn short(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(svg: &mut String, pts: &[(f64, f64)], color: &str) {
    if pts.is_empty() {
        return;
    }
    let stride = pts.len().div_ceil(MAX_POINTS);
    let last = pts.len() - 1;
    let mut d = String::new();
    for (x, y) in pts.iter().enumerate().filter(|(k, _)| k % stride == 0 || *k == last).map(|(_, p)| p) {
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.3"/>"#, d.trim_end());
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders `arc` and the `E_θ*` trace; `log_e` puts `E_θ*` on a log10 axis.
pub fn render(title: &str, arc: &Arc64, trace: &MonitorTrace, log_e: bool) -> String {
    let (nx, nz) = {
        let y = &arc.segments[0].samples[0].1;
        (y.x.len(), y.z.len())
    };
    let t_max = arc.final_point().0.t.max(1e-9);
    let jump_times: Vec<f64> = arc.jumps.iter().map(|j| j.time.t).collect();
    let (lo, hi) = range(arc.points().flat_map(|(_, y)| y.x.iter().chain(&y.z).copied().collect::<Vec<_>>()));
    let states = Panel { top: MARGIN_T, t_max, lo, hi };

    let e_of = |e: f64| if log_e { e.max(LOG_FLOOR).log10() } else { e };
    let (elo, ehi) = range(trace.samples.iter().map(|s| e_of(s.2)));
    let energy = Panel { top: MARGIN_T + PANEL_H + GAP, t_max, lo: elo, hi: ehi };

    let height = MARGIN_T + 2.0 * PANEL_H + GAP + 40.0;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);

    states.frame(&mut svg, "states vs t", short);
    states.jumps(&mut svg, &jump_times);
    for c in 0..nx + nz {
        let color = COLORS[c % COLORS.len()];
        for seg in &arc.segments {
            let pts: Vec<(f64, f64)> = seg
                .samples
                .iter()
                .map(|(t, y)| (states.px(*t), states.py(if c < nx { y.x[c] } else { y.z[c - nx] })))
                .collect();
            polyline(&mut svg, &pts, color);
        }
        let label = if c < nx { format!("x{c}") } else { format!("z{}", c - nx) };
        let ly = MARGIN_T + 14.0 + 16.0 * c as f64;
        let lx = WIDTH - MARGIN_R + 14.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11">{label}</text>"#, lx + 26.0, ly + 4.0);
    }

    let e_label = if log_e { "log10 E_theta* vs t" } else { "E_theta* vs t" };
    energy.frame(&mut svg, e_label, short);
    energy.jumps(&mut svg, &jump_times);
    let mut j = usize::MAX;
    let mut pts = vec![];
    for &(t, sj, e) in &trace.samples {
        if sj != j {
            polyline(&mut svg, &pts, "black");
            pts.clear();
            j = sj;
        }
        pts.push((energy.px(t), energy.py(e_of(e))));
    }
    polyline(&mut svg, &pts, "black");
    svg.push_str("</svg>\n");
    svg
}
