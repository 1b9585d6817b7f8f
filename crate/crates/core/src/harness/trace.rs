use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::bench::Percentiles;
use super::sim::{Event, SimTrace};
use crate::decision::FrenetBox;
use crate::geometry::Vec2;
use crate::guardian::GuardianLevel;
use crate::planner::Provenance;
use crate::prediction::advance_obstacle;
use crate::scenario::Scenario;

pub const CSV_HEADER: &str = "cycle,t,x,y,heading,speed,accel,provenance,guardian_level,cycle_ms,event";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceFormat {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "json" => Ok(TraceFormat::Json),
            "svg" => Ok(TraceFormat::Svg),
            other => Err(format!("unknown format `{other}` (expected csv, json or svg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmitOptions {
    pub formats: Vec<TraceFormat>,
    /// Write measured timings; off keeps the files reproducible.
    pub wall_clock: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        Self {
            formats: vec![TraceFormat::Csv, TraceFormat::Json],
            wall_clock: false,
        }
    }
}

/// One CSV row per cycle.
pub fn trace_csv(trace: &SimTrace, wall_clock: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        let cycle_ms = if wall_clock {
            format!("{:.3}", r.timings.total * 1e3)
        } else {
            String::new()
        };
        let events: Vec<String> = r.events.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            r.cycle,
            r.t,
            r.ego.position.x,
            r.ego.position.y,
            r.ego.heading,
            r.ego.speed,
            r.ego.accel,
            r.applied.as_str(),
            r.guardian_level.as_str(),
            cycle_ms,
            events.join(";")
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryCounts {
    pub cycles: usize,
    pub fallbacks: usize,
    pub guardian_slowdowns: usize,
    pub guardian_emergency_stops: usize,
    pub collisions: usize,
    pub model_gaps: usize,
    pub yield_cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTimings {
    pub path_qp: Percentiles,
    pub speed_qp: Percentiles,
    pub cycle: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub outcome: String,
    pub final_x: f64,
    pub final_y: f64,
    pub final_speed: f64,
    pub counts: SummaryCounts,
    pub timings: Option<SummaryTimings>,
}

pub fn summary(trace: &SimTrace, wall_clock: bool) -> Summary {
    let level = |l: GuardianLevel| trace.records.iter().filter(|r| r.guardian_level == l).count();
    let timings = wall_clock.then(|| {
        let pick = |f: &dyn Fn(&super::sim::CycleRecord) -> f64| trace.records.iter().map(f).collect::<Vec<_>>();
        SummaryTimings {
            path_qp: Percentiles::of(&pick(&|r| r.timings.path_qp)),
            speed_qp: Percentiles::of(&pick(&|r| r.timings.speed_qp)),
            cycle: Percentiles::of(&pick(&|r| r.timings.total)),
        }
    });
    Summary {
        scenario: trace.scenario.clone(),
        seed: trace.seed,
        outcome: trace.outcome.as_str().to_string(),
        final_x: trace.final_ego.position.x,
        final_y: trace.final_ego.position.y,
        final_speed: trace.final_ego.speed,
        counts: SummaryCounts {
            cycles: trace.records.len(),
            fallbacks: trace.fallbacks(),
            guardian_slowdowns: level(GuardianLevel::Slowdown),
            guardian_emergency_stops: level(GuardianLevel::EmergencyStop),
            collisions: trace.count(|e| matches!(e, Event::Collision { .. })),
            model_gaps: trace.model_gaps(),
            yield_cycles: trace.records.iter().filter(|r| r.yield_decisions > 0).count(),
        },
        timings,
    }
}

pub fn summary_json(trace: &SimTrace, wall_clock: bool) -> String {
    let mut s = serde_json::to_string_pretty(&summary(trace, wall_clock)).expect("summary serializes");
    s.push('\n');
    s
}

/// Top-down view and s-t diagram of a finished run.
pub fn trace_svg(trace: &SimTrace, scenario: &Scenario) -> String {
    const W: f64 = 800.0;
    const H: f64 = 360.0;
    const PAD: f64 = 20.0;
    let line = &scenario.reference_line;
    let period = trace.replan_period;

    // obstacle snapshots at each recorded cycle, from ground truth
    let mut snapshots: Vec<Vec<crate::geometry::Polygon>> = Vec::new();
    let mut obs = scenario.obstacles.clone();
    for _ in &trace.records {
        snapshots.push(obs.iter().map(|o| o.polygon()).collect());
        obs = obs
            .iter()
            .map(|o| advance_obstacle(o, line, period, &scenario.config.prediction))
            .collect();
    }

    let mut pts: Vec<Vec2> = line.points().to_vec();
    pts.extend(trace.records.iter().map(|r| r.ego.position));
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in &pts {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let margin = scenario.road_half_width + 2.0;
    lo = lo - Vec2::new(margin, margin);
    hi = hi + Vec2::new(margin, margin);
    let half_w = W / 2.0 - 2.0 * PAD;
    let scale = (half_w / (hi.x - lo.x)).min((H - 2.0 * PAD) / (hi.y - lo.y));
    let map = |p: Vec2| (PAD + (p.x - lo.x) * scale, H - PAD - (p.y - lo.y) * scale);
    let path_d = |ps: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut d = String::new();
        for (i, (x, y)) in ps.enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x, y);
        }
        d
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#bbb" stroke-dasharray="4 3"/>"##,
        path_d(&mut line.points().iter().map(|p| map(*p)))
    );
    for (i, snap) in snapshots.iter().enumerate().step_by(10) {
        let opacity = 0.15 + 0.6 * i as f64 / snapshots.len().max(1) as f64;
        for poly in snap {
            let d = path_d(&mut poly.vertices.iter().map(|p| map(*p)));
            let _ = writeln!(svg, r##"<path d="{d}Z" fill="#d33" fill-opacity="{opacity:.2}" stroke="none"/>"##);
        }
    }
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#15c" stroke-width="2"/>"##,
        path_d(&mut trace.records.iter().map(|r| map(r.ego.position)))
    );

    // s-t diagram on the right half
    let x0 = W / 2.0 + PAD;
    let t_max = (trace.records.len() as f64 * period).max(period);
    let s_max = scenario.goal_s.max(line.length()).max(1.0);
    let st = |t: f64, s: f64| (x0 + t / t_max * half_w, H - PAD - s / s_max * (H - 2.0 * PAD));
    let _ = writeln!(
        svg,
        r##"<rect x="{x0}" y="{PAD}" width="{half_w}" height="{}" fill="none" stroke="#444"/>"##,
        H - 2.0 * PAD
    );
    for (i, snap) in snapshots.iter().enumerate() {
        let t = i as f64 * period;
        for poly in snap {
            if let Some(b) = FrenetBox::of_polygon(line, poly) {
                if b.l_max < -scenario.road_half_width || b.l_min > scenario.road_half_width {
                    continue;
                }
                let (xa, ya) = st(t, b.s_max.min(s_max));
                let (_, yb) = st(t, b.s_min.max(0.0));
                if yb > ya {
                    let _ = writeln!(
                        svg,
                        r##"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="#d33" fill-opacity="0.4"/>"##,
                        half_w / trace.records.len().max(1) as f64,
                        yb - ya
                    );
                }
            }
        }
    }
    let ego_st = trace.records.iter().filter_map(|r| line.to_frenet(r.ego.position).ok().map(|f| st(r.t, f.s)));
    let _ = writeln!(
        svg,
        r##"<path d="{}" fill="none" stroke="#15c" stroke-width="2"/>"##,
        path_d(&mut ego_st.collect::<Vec<_>>().into_iter())
    );
    let _ = writeln!(svg, r#"<text x="{PAD}" y="14" font-size="12" font-family="sans-serif">{} ({})</text>"#, trace.scenario, trace.outcome);
    let _ = writeln!(svg, r#"<text x="{x0}" y="14" font-size="12" font-family="sans-serif">s-t</text>"#);
    svg.push_str("</svg>\n");
    svg
}

/// Write the requested files under `out_dir` and return their paths.
pub fn emit_trace(trace: &SimTrace, scenario: &Scenario, out_dir: &Path, opts: &EmitOptions) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut formats = opts.formats.clone();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match f {
            TraceFormat::Csv => ("trace.csv", trace_csv(trace, opts.wall_clock)),
            TraceFormat::Json => ("summary.json", summary_json(trace, opts.wall_clock)),
            TraceFormat::Svg => ("plot.svg", trace_svg(trace, scenario)),
        };
        let path = out_dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// `true` when every applied trajectory in an emergency cycle is the override.
pub fn guardian_supremacy(trace: &SimTrace) -> bool {
    trace
        .records
        .iter()
        .filter(|r| r.guardian_level == GuardianLevel::EmergencyStop)
        .all(|r| r.applied == Provenance::GuardianStop)
}
