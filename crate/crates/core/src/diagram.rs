//! Space/time diagrams as SVG 1.1.
//!
//! Time runs left to right and the chosen node path top to bottom, one row
//! per node. Each train gets a polyline through its arrival and departure
//! at every node of the path it visits; the reference schedule is drawn
//! dashed and grey, the second (reconstructed) one solid and coloured.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Instance, NodeId, Time, TrainId};
use crate::schedule::Schedule;

/// Consecutive (time, row) points of one train on the path.
type Run = Vec<(Time, usize)>;
type TrainRuns = (TrainId, Vec<Run>);

#[derive(Clone, Debug, PartialEq)]
pub struct DiagramOptions {
    /// Node chain for the distance axis; defaults to the longest itinerary.
    pub path: Option<Vec<NodeId>>,
    /// Trains to draw; defaults to all.
    pub trains: Option<Vec<TrainId>>,
    pub width: f64,
    pub height: f64,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        DiagramOptions {
            path: None,
            trains: None,
            width: 1000.0,
            height: 600.0,
        }
    }
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn check_path(inst: &Instance, path: &[NodeId]) -> Result<()> {
    if path.is_empty() {
        return Err(Error::Path("the node path is empty".into()));
    }
    for &i in path {
        if i.index() >= inst.nodes.len() {
            return Err(Error::Path(format!("node {i} does not exist")));
        }
    }
    for w in path.windows(2) {
        if inst.edge_between(w[0], w[1]).is_none() {
            return Err(Error::Path(format!(
                "nodes {} and {} are not adjacent",
                w[0], w[1]
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    if !path.iter().all(|i| seen.insert(*i)) {
        return Err(Error::Path("the node path repeats a node".into()));
    }
    Ok(())
}

/// Runs of (time, row) points for train `c` in `sched`; a run breaks where the
/// train leaves the path or jumps between non-neighbouring rows.
fn runs(inst: &Instance, sched: &Schedule, c: TrainId, path: &[NodeId]) -> Vec<Run> {
    let Some(ev) = sched.get(c) else {
        return Vec::new();
    };
    let t = inst.train(c);
    let mut out: Vec<Run> = Vec::new();
    let mut prev_row: Option<usize> = None;
    for (pos, e) in ev.iter().enumerate() {
        let row = path.iter().position(|&i| i == t.itinerary[pos]);
        if let Some(r) = row {
            let contiguous = prev_row.is_some_and(|p| p.abs_diff(r) == 1);
            if !contiguous {
                out.push(Vec::new());
            }
            let run = out.last_mut().expect("pushed above");
            run.push((e.arrival, r));
            run.push((e.departure, r));
        }
        prev_row = row;
    }
    out.retain(|r| !r.is_empty());
    out
}

/// Renders `reference` (and `reconstructed`, if given) along a node path.
pub fn emit_spacetime_svg(
    inst: &Instance,
    reference: &Schedule,
    reconstructed: Option<&Schedule>,
    opts: &DiagramOptions,
) -> Result<String> {
    let path = match &opts.path {
        Some(p) => p.clone(),
        None => inst
            .trains
            .iter()
            .max_by_key(|t| (t.len(), std::cmp::Reverse(t.id)))
            .map(|t| t.itinerary.clone())
            .unwrap_or_else(|| vec![NodeId(0)]),
    };
    if !inst.nodes.is_empty() {
        check_path(inst, &path)?;
    }
    let trains: Vec<TrainId> = match &opts.trains {
        Some(v) => {
            if let Some(bad) = v.iter().find(|c| c.index() >= inst.num_trains()) {
                return Err(Error::Reference(format!("train {bad} does not exist")));
            }
            v.clone()
        }
        None => inst.train_ids().collect(),
    };

    let mut layers: Vec<(&str, Vec<TrainRuns>)> = vec![(
        "reference",
        trains
            .iter()
            .map(|&c| (c, runs(inst, reference, c, &path)))
            .collect(),
    )];
    if let Some(s) = reconstructed {
        layers.push((
            "reconstructed",
            trains
                .iter()
                .map(|&c| (c, runs(inst, s, c, &path)))
                .collect(),
        ));
    }
    let times = layers
        .iter()
        .flat_map(|(_, l)| l.iter())
        .flat_map(|(_, r)| r.iter().flatten())
        .map(|&(t, _)| t);
    let (mut t0, mut t1) = times.fold((Time::MAX, Time::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if t0 > t1 {
        (t0, t1) = (0, 3600);
    }
    if t1 == t0 {
        t1 = t0 + 60;
    }

    let plot_w = opts.width - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = opts.height - MARGIN_TOP - MARGIN_BOTTOM;
    let x = |t: Time| MARGIN_LEFT + (t - t0) as f64 / (t1 - t0) as f64 * plot_w;
    let rows = path.len().max(2) - 1;
    let y = |r: usize| MARGIN_TOP + r as f64 / rows as f64 * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = opts.width,
        h = opts.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" font-family="sans-serif" font-size="11">"#
    );
    for (r, node) in path.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w,
            yy = y(r)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">node {node}</text>"#,
            MARGIN_LEFT - 6.0,
            y(r) + 4.0
        );
    }
    let step = tick_step(t1 - t0);
    let mut tick = t0.div_euclid(step) * step;
    if tick < t0 {
        tick += step;
    }
    while tick <= t1 {
        let _ = writeln!(
            s,
            r##"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="#bbbbbb"/>"##,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0,
            xx = x(tick)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x(tick),
            MARGIN_TOP + plot_h + 18.0,
            clock(tick)
        );
        tick += step;
    }
    let _ = writeln!(s, "</g>");

    for (layer, trains) in &layers {
        let _ = writeln!(s, r#"<g class="{layer}" fill="none">"#);
        for (c, runs) in trains {
            let (stroke, dash, width) = if *layer == "reference" {
                ("#999999", r#" stroke-dasharray="6 4""#, 1.0)
            } else {
                (PALETTE[c.index() % PALETTE.len()], "", 1.8)
            };
            for run in runs {
                let pts: Vec<String> = run
                    .iter()
                    .map(|&(t, r)| format!("{:.2},{:.2}", x(t), y(r)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline data-train="{c}" points="{}" stroke="{stroke}" stroke-width="{width}"{dash}/>"#,
                    pts.join(" ")
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

fn tick_step(span: Time) -> Time {
    const STEPS: [Time; 10] = [60, 300, 600, 900, 1800, 3600, 7200, 14400, 21600, 43200];
    STEPS
        .iter()
        .copied()
        .find(|&s| span / s <= 10)
        .unwrap_or(86400)
}

fn clock(t: Time) -> String {
    let sign = if t < 0 { "-" } else { "" };
    let t = t.abs();
    format!("{sign}{:02}:{:02}", t / 3600, t % 3600 / 60)
}
