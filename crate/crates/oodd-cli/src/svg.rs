//! Self-contained SVG line charts (no plotting dependencies): iteration
//! counts vs defect probability with std bars, RMSE decay per iteration on
//! a log axis, and operator deviation vs probability.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use oodd::error::{Error, Result};

use crate::experiment::ExperimentResult;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error-bar half-heights, aligned with `points`.
    pub bars: Option<Vec<f64>>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    log_y: bool,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::MIN_POSITIVE);
        MARGIN_L + (v - self.x_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let v = if self.log_y { v.max(self.y_min).log10() } else { v };
        let (lo, hi) = if self.log_y {
            (self.y_min.log10(), self.y_max.log10())
        } else {
            (self.y_min, self.y_max)
        };
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        HEIGHT - MARGIN_B - (v - lo) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders one chart. With `log_y`, positive values are drawn on a decade
/// axis; nonpositive values are clamped to the smallest positive datum.
pub fn render_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
) -> Result<String> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            xs.push(x);
            if !log_y || y > 0.0 {
                ys.push(y);
            }
            if let Some(bars) = &s.bars {
                let lo = y - bars[i];
                let hi = y + bars[i];
                if !log_y || lo > 0.0 {
                    ys.push(lo);
                }
                if !log_y || hi > 0.0 {
                    ys.push(hi);
                }
            }
        }
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput("chart without data points"));
    }
    let (x_min, x_max) = bounds(&xs, false);
    let (y_min, y_max) = bounds(&ys, log_y);
    let frame = Frame {
        x_min,
        x_max,
        y_min,
        y_max,
        log_y,
    };

    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();
    writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0
    )
    .unwrap();

    // Axes box.
    writeln!(
        out,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    )
    .unwrap();

    // Ticks.
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = x_min + t * (x_max - x_min);
        let xp = frame.x(xv);
        writeln!(
            out,
            "<line x1=\"{xp:.2}\" y1=\"{}\" x2=\"{xp:.2}\" y2=\"{}\" stroke=\"black\"/>",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{xp:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            HEIGHT - MARGIN_B + 18.0,
            fmt_tick(xv)
        )
        .unwrap();

        let yv = if log_y {
            10f64.powf(y_min.log10() + t * (y_max.log10() - y_min.log10()))
        } else {
            y_min + t * (y_max - y_min)
        };
        let yp = frame.y(yv);
        writeln!(
            out,
            "<line x1=\"{}\" y1=\"{yp:.2}\" x2=\"{MARGIN_L}\" y2=\"{yp:.2}\" stroke=\"black\"/>",
            MARGIN_L - 5.0
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 8.0,
            yp + 4.0,
            fmt_tick(yv)
        )
        .unwrap();
    }
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    )
    .unwrap();

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y)))
            .collect();
        if coords.len() > 1 {
            writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                coords.join(" ")
            )
            .unwrap();
        }
        for (i, &(x, y)) in s.points.iter().enumerate() {
            writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                frame.x(x),
                frame.y(y)
            )
            .unwrap();
            if let Some(bars) = &s.bars {
                let (lo, hi) = (y - bars[i], y + bars[i]);
                let lo = if log_y { lo.max(frame.y_min) } else { lo };
                writeln!(
                    out,
                    "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"{color}\"/>",
                    frame.x(x),
                    frame.y(lo),
                    frame.y(hi)
                )
                .unwrap();
            }
        }
        // Legend.
        let ly = MARGIN_T + 16.0 + 18.0 * si as f64;
        writeln!(
            out,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            s.label
        )
        .unwrap();
    }
    writeln!(out, "</svg>").unwrap();
    Ok(out)
}

fn bounds(values: &[f64], log: bool) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if log && v <= 0.0 {
            continue;
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        // Degenerate span: pad so the marker sits mid-plot.
        if log {
            return (lo / 10.0, hi * 10.0);
        }
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn save(dir: &Path, name: &str, svg: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, svg).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    written.push(path);
    Ok(())
}

/// Decimal form of p safe for file names (0.06 -> "0p06").
fn p_tag(p: f64) -> String {
    format!("{p}").replace('.', "p").replace('-', "m")
}

/// Writes one SVG per figure family present in the result; errors when the
/// result carries no plottable data at all.
pub fn emit_plots(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if result.summaries.is_empty() && result.deviations.is_empty() {
        return Err(Error::EmptyInput("no plottable experiment data"));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();

    if !result.summaries.is_empty() {
        let mut variants: Vec<&'static str> =
            result.summaries.iter().map(|s| s.variant).collect();
        variants.dedup();
        variants.sort_unstable();
        variants.dedup();
        let series: Vec<Series> = variants
            .iter()
            .map(|&v| {
                let rows: Vec<_> = result
                    .summaries
                    .iter()
                    .filter(|s| s.variant == v && s.mean_iters.is_finite())
                    .collect();
                Series {
                    label: v.to_string(),
                    points: rows.iter().map(|s| (s.p, s.mean_iters)).collect(),
                    bars: Some(rows.iter().map(|s| s.std_iters).collect()),
                }
            })
            .filter(|s| !s.points.is_empty())
            .collect();
        if !series.is_empty() {
            let svg = render_chart(
                "mean PCG iterations vs defect probability",
                "p",
                "iterations",
                &series,
                false,
            )?;
            save(dir, "iterations_vs_p.svg", &svg, &mut written)?;
        }

        let mut p_values: Vec<f64> = result.rmse.iter().map(|r| r.p).collect();
        p_values.sort_by(f64::total_cmp);
        p_values.dedup();
        for &p in &p_values {
            let series: Vec<Series> = variants
                .iter()
                .map(|&v| Series {
                    label: v.to_string(),
                    points: result
                        .rmse
                        .iter()
                        .filter(|r| r.variant == v && r.p == p)
                        .map(|r| (r.iteration as f64, r.rmse))
                        .collect(),
                    bars: None,
                })
                .filter(|s| !s.points.is_empty())
                .collect();
            if series.is_empty() {
                continue;
            }
            let svg = render_chart(
                &format!("energy-norm RMSE vs iteration (p = {p})"),
                "iteration",
                "RMSE",
                &series,
                true,
            )?;
            save(dir, &format!("rmse_p{}.svg", p_tag(p)), &svg, &mut written)?;
        }
    }

    if !result.deviations.is_empty() {
        let mut variants: Vec<&'static str> =
            result.deviations.iter().map(|d| d.variant).collect();
        variants.sort_unstable();
        variants.dedup();
        let series: Vec<Series> = variants
            .iter()
            .map(|&v| Series {
                label: v.to_string(),
                points: result
                    .deviations
                    .iter()
                    .filter(|d| d.variant == v)
                    .map(|d| (d.p, d.rel_deviation_rmse))
                    .collect(),
                bars: None,
            })
            .collect();
        let svg = render_chart(
            "relative operator deviation vs defect probability",
            "p",
            "relative deviation RMSE",
            &series,
            true,
        )?;
        save(dir, "deviation_vs_p.svg", &svg, &mut written)?;
    }

    Ok(written)
}
