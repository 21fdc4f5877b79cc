use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::experiment::RunRecord;
use crate::harness::metrics::MetricSeries;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "run.json";

/// Writes `metrics.csv` (columns `scheme,agent,eval_set,round,mse`), the
/// config snapshot and a JSON summary into `dir`. Wall time is left out so
/// reruns produce identical bytes. Returns the files written.
pub fn emit_csv(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let metrics = dir.join(METRICS_FILE);
    write_metrics_csv(&record.series, &metrics)?;

    let config = dir.join(CONFIG_FILE);
    fs::write(&config, &record.snapshot).map_err(|e| Error::io(config.display().to_string(), e))?;

    let summary = dir.join(SUMMARY_FILE);
    let body = json!({
        "label": record.label,
        "overrides": record.overrides,
        "effective_config": record.config,
        "verification": record.verification.iter().map(|r| json!({
            "scheme": r.scheme.name(),
            "subject": r.subject,
            "method": r.method,
            "steps": r.rounds.len(),
            "max_deviation": r.max_deviation,
            "tolerance": r.tolerance,
            "passed": r.passed,
        })).collect::<Vec<_>>(),
        "notes": record.notes,
        "tails": record.series.iter().map(|s| json!({
            "scheme": s.scheme,
            "agent": s.agent,
            "eval_set": s.eval_set,
            "tail": s.tail,
        })).collect::<Vec<_>>(),
    });
    fs::write(&summary, serde_json::to_string_pretty(&body)? + "\n")
        .map_err(|e| Error::io(summary.display().to_string(), e))?;
    Ok(vec![metrics, config, summary])
}

pub fn write_metrics_csv(series: &[MetricSeries], path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["scheme", "agent", "eval_set", "round", "mse"]).map_err(csv_err)?;
    for s in series {
        for (r, v) in s.values.iter().enumerate() {
            w.write_record([&s.scheme, &s.agent, &s.eval_set, &r.to_string(), &format!("{v:e}")])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a metrics CSV back into series, in order of first appearance.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricSeries>> {
    let csv_err = |reason: String| Error::Csv {
        path: path.display().to_string(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = r.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["scheme", "agent", "eval_set", "round", "mse"] {
        return Err(csv_err(format!("unexpected header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out: Vec<(String, String, String, Vec<f64>)> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let bad = |what: &str| csv_err(format!("row {}: bad {what}", line + 2));
        let round: usize = rec[3].trim().parse().map_err(|_| bad("round"))?;
        let mse: f64 = rec[4].trim().parse().map_err(|_| bad("mse"))?;
        let pos = out
            .iter()
            .position(|(s, a, e, _)| *s == rec[0] && *a == rec[1] && *e == rec[2]);
        let values = match pos {
            Some(i) => &mut out[i].3,
            None => {
                out.push((rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), Vec::new()));
                &mut out.last_mut().expect("just pushed").3
            }
        };
        if round != values.len() {
            return Err(bad("round order"));
        }
        values.push(mse);
    }
    Ok(out
        .into_iter()
        .map(|(s, a, e, v)| MetricSeries::new(s, a, e, v))
        .collect())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// Line plot of `series` against round. The output depends only on the
/// inputs. With `log_y`, nonpositive values are clamped to the smallest
/// positive value present.
pub fn emit_svg(series: &[MetricSeries], title: &str, log_y: bool) -> String {
    let floor = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite() && *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let tf = |v: f64| {
        if log_y {
            if floor.is_finite() {
                v.max(floor).log10()
            } else {
                0.0
            }
        } else {
            v
        }
    };
    let finite = || series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite().map(tf).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let xmax = series.iter().map(|s| s.values.len()).max().unwrap_or(1).saturating_sub(1).max(1) as f64;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * x / xmax;
    let py = |y: f64| TOP + ph * (1.0 - (y - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT:.1},{TOP:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for k in 0..=4 {
        let y = lo + (hi - lo) * k as f64 / 4.0;
        let label = if log_y { format!("{:.2e}", 10f64.powf(y)) } else { format!("{y:.3e}") };
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.2}" x2="{LEFT:.1}" y2="{:.2}" stroke="black"/><text x="{:.1}" y="{:.2}" text-anchor="end">{label}</text>"##,
            LEFT - 5.0,
            py(y),
            py(y),
            LEFT - 8.0,
            py(y) + 4.0
        );
        let x = (xmax * k as f64 / 4.0).round();
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.1}" x2="{:.2}" y2="{:.1}" stroke="black"/><text x="{:.2}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            px(x),
            TOP + ph,
            px(x),
            TOP + ph + 5.0,
            px(x),
            TOP + ph + 20.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        if log_y { "mse (log scale)" } else { "mse" }
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(r, v)| format!("{:.2},{:.2}", px(r as f64), py(tf(*v))))
            .collect();
        let dash = if ser.values.windows(2).all(|w| w[0] == w[1]) { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.key())
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes one `plot_<eval_set>.svg` per eval set found in `series`.
pub fn emit_plots(series: &[MetricSeries], dir: &Path, log_y: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut sets: Vec<&str> = Vec::new();
    for s in series {
        if !sets.contains(&s.eval_set.as_str()) {
            sets.push(&s.eval_set);
        }
    }
    let mut out = Vec::new();
    for set in sets {
        let group: Vec<MetricSeries> = series.iter().filter(|s| s.eval_set == set).cloned().collect();
        let path = dir.join(format!("plot_{set}.svg"));
        fs::write(&path, emit_svg(&group, &format!("MSE on {set}"), log_y))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Vec<MetricSeries> {
        vec![
            MetricSeries::new("akd", "from-agent1", "test", vec![1.0, 0.5, 0.75, 0.9]),
            MetricSeries::constant("zero", "all", "test", 1.0, 4),
        ]
    }

    #[test]
    fn svg_is_deterministic_and_complete() {
        let a = emit_svg(&demo(), "t", false);
        assert_eq!(a, emit_svg(&demo(), "t", false));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains("akd/from-agent1") && a.contains("zero/all"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        let log = emit_svg(&demo(), "t", true);
        assert!(log.contains("log scale"));
        assert_ne!(a, log);
    }

    #[test]
    fn svg_handles_degenerate_input() {
        let s = emit_svg(&[], "<empty>", true);
        assert!(s.contains("&lt;empty&gt;"));
        let flat = vec![MetricSeries::new("x", "y", "z", vec![0.0, 0.0])];
        assert!(emit_svg(&flat, "f", true).contains("<polyline"));
    }

    #[test]
    fn metrics_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&demo(), &path).unwrap();
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back, demo());
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_metrics_csv(&path).is_err());
    }
}
