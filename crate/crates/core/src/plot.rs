//! SVG rendering of a scene with its forecast.

use std::fmt::Write as _;

use crate::data::{ForecastFile, SceneFile};
use crate::error::{Error, Result};
use crate::scene::Point;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;

struct Frame {
    min: Point,
    scale: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a Point>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !lo[0].is_finite() {
            return Self { min: [0.0, 0.0], scale: 1.0 };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
        Self {
            min: lo,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            SIZE - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }

    fn polyline(&self, pts: &[Point]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// One `<g class="agent">` per real agent (agent 0 is the ego agent), solid
/// history and ground-truth lines, dotted marker series per predicted head
/// with its probability, and lanes underneath.
pub fn render_svg(scene: &SceneFile, forecast: Option<&ForecastFile>) -> Result<String> {
    let s = &scene.scene;
    if let Some(f) = forecast {
        if f.forecast.agents() != s.agent_mask.len() {
            return Err(Error::Incompatible(format!(
                "forecast has {} agents, scene has {}",
                f.forecast.agents(),
                s.agent_mask.len()
            )));
        }
    }
    let real: Vec<usize> = (0..s.agent_mask.len()).filter(|&i| s.agent_mask[i]).collect();
    let mut pts: Vec<&Point> = Vec::new();
    for &i in &real {
        pts.extend(&s.histories[i]);
        if let Some(gt) = &scene.truth {
            pts.extend(&gt.futures[i]);
        }
        if let Some(f) = forecast {
            pts.extend(f.forecast.trajectories[i].iter().flatten());
        }
    }
    if pts.is_empty() {
        for (l, &m) in s.lanes.iter().zip(&s.lane_mask) {
            if m {
                pts.extend(l);
            }
        }
    }
    let frame = Frame::fit(pts.into_iter());

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(out, r#"<g class="lanes">"#);
    for (l, &m) in s.lanes.iter().zip(&s.lane_mask) {
        if m {
            let _ = writeln!(
                out,
                r##"<polyline points="{}" fill="none" stroke="#c8c8c8" stroke-width="6" stroke-linecap="round"/>"##,
                frame.polyline(l)
            );
        }
    }
    let _ = writeln!(out, "</g>");

    for &i in &real {
        let ego = i == 0;
        let (color, width) = if ego { ("#d62728", 3.0) } else { ("#1f77b4", 1.5) };
        let class = if ego { "agent ego" } else { "agent" };
        let _ = writeln!(out, r#"<g class="{class}" id="agent-{i}">"#);
        let _ = writeln!(
            out,
            r#"<polyline class="history" points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
            frame.polyline(&s.histories[i])
        );
        if let Some(gt) = &scene.truth {
            let mut line = vec![*s.histories[i].last().unwrap_or(&gt.futures[i][0])];
            line.extend(&gt.futures[i]);
            let _ = writeln!(
                out,
                r##"<polyline class="truth" points="{}" fill="none" stroke="#2ca02c" stroke-width="{width}"/>"##,
                frame.polyline(&line)
            );
        }
        if let Some(f) = forecast {
            let probs = &f.forecast.probabilities[i];
            for (k, traj) in f.forecast.trajectories[i].iter().enumerate() {
                let selected = f.selected.get(i) == Some(&Some(k));
                let _ = writeln!(
                    out,
                    r#"<g class="prediction{}" data-head="{k}">"#,
                    if selected { " selected" } else { "" }
                );
                for &p in traj {
                    let (x, y) = frame.map(p);
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.8" fill="{color}"/>"#);
                }
                if let (Some(&end), Some(p)) = (traj.last(), probs.get(k)) {
                    let (x, y) = frame.map(end);
                    let _ = writeln!(
                        out,
                        r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">{p:.2}</text>"#,
                        x + 4.0,
                        y - 4.0
                    );
                }
                let _ = writeln!(out, "</g>");
            }
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}
