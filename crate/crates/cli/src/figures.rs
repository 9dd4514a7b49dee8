//! Figure data (delimited text) and optional SVG line/bar drawings.

use std::fmt::Write as _;

/// Counts of `values` in bins of `width` over `[0, max]`; values equal to
/// `max` land in the last bin.
pub fn histogram(values: &[f64], width: f64, max: f64) -> Vec<(f64, f64, usize)> {
    let bins = (max / width).ceil() as usize;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = ((v / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (i as f64 * width, ((i + 1) as f64 * width).min(max), c)).collect()
}

pub fn histogram_tsv(hist: &[(f64, f64, usize)]) -> String {
    let mut s = String::from("bin_lo_db\tbin_hi_db\tcount\n");
    for (lo, hi, c) in hist {
        let _ = writeln!(s, "{lo:.3}\t{hi:.3}\t{c}");
    }
    s
}

/// One row per step; columns are the given series, blank where a series has ended.
pub fn overlay_tsv(names: &[&str], series: &[Vec<(u64, f64)>]) -> String {
    let mut s = format!("step\t{}\n", names.join("\t"));
    let mut steps: Vec<u64> = series.iter().flat_map(|c| c.iter().map(|p| p.0)).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut cursors = vec![0usize; series.len()];
    for step in steps {
        let mut row = step.to_string();
        for (c, cur) in series.iter().zip(cursors.iter_mut()) {
            row.push('\t');
            if c.get(*cur).is_some_and(|p| p.0 == step) {
                row.push_str(&c[*cur].1.to_string());
                *cur += 1;
            }
        }
        s.push_str(&row);
        s.push('\n');
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLOURS: [&str; 2] = ["#1f3a93", "#111111"];

fn frame(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>", W / 2.0, H - 12.0);
    let _ = writeln!(s, "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{y_label}</text>", H / 2.0, H / 2.0);
    for (v, anchor, px, py) in [
        (x.0, "start", PAD, H - PAD + 16.0),
        (x.1, "end", W - PAD, H - PAD + 16.0),
        (y.0, "end", PAD - 4.0, H - PAD),
        (y.1, "end", PAD - 4.0, PAD + 4.0),
    ] {
        let _ = writeln!(s, "<text x=\"{px}\" y=\"{py}\" text-anchor=\"{anchor}\">{v:.3}</text>");
    }
    s
}

fn project(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

pub fn histogram_svg(hist: &[(f64, f64, usize)], title: &str) -> String {
    let max_count = hist.iter().map(|h| h.2).max().unwrap_or(0).max(1) as f64;
    let x_hi = hist.last().map_or(1.0, |h| h.1);
    let mut s = frame(title, "|dSNR| (dB)", "count", (0.0, x_hi), (0.0, max_count));
    for (lo, hi, c) in hist {
        let x0 = project(*lo, 0.0, x_hi, PAD, W - PAD);
        let x1 = project(*hi, 0.0, x_hi, PAD, W - PAD);
        let y = project(*c as f64, 0.0, max_count, H - PAD, PAD);
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" stroke=\"white\"/>",
            (x1 - x0).max(0.0),
            H - PAD - y,
            COLOURS[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn curves_svg(names: &[&str], series: &[Vec<(u64, f64)>], title: &str) -> String {
    let pts = series.iter().flatten();
    let (x_lo, x_hi) = pts.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0 as f64), b.max(p.0 as f64)));
    let (y_lo, y_hi) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !x_lo.is_finite() {
        return frame(title, "step", "loss", (0.0, 1.0), (0.0, 1.0)) + "</svg>\n";
    }
    let mut s = frame(title, "step", "loss", (x_lo, x_hi), (y_lo, y_hi));
    for (k, (name, c)) in names.iter().zip(series).enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let points: Vec<String> = c
            .iter()
            .map(|p| format!("{:.2},{:.2}", project(p.0 as f64, x_lo, x_hi, PAD, W - PAD), project(p.1, y_lo, y_hi, H - PAD, PAD)))
            .collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>", points.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{colour}\" text-anchor=\"end\">{name}</text>", W - PAD, PAD + 14.0 * k as f64);
    }
    s.push_str("</svg>\n");
    s
}
