//! Run artifacts: `report.json`, `report.txt`, `frames.csv`, `timeline.csv`.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use crate::pose::FrameRecord;

use super::sim::{MetricsReport, SimOutput};

pub fn report_json(report: &MetricsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn opt(v: Option<f64>, scale: f64, unit: &str) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.3} {unit}", x * scale))
}

pub fn report_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode {}  seed {}  horizon {} s", r.mode, r.seed, r.horizon);
    for (name, m) in [("reconstructed", &r.m2m.reconstructed), ("actual", &r.m2m.actual)] {
        let _ = writeln!(
            s,
            "m2m {name:<13} mean {}  p50 {}  p99 {}  ({} samples, {} censored)",
            opt(m.mean, 1e3, "ms"),
            opt(m.p50, 1e3, "ms"),
            opt(m.p99, 1e3, "ms"),
            m.count,
            m.censored
        );
    }
    let e = &r.teleop_error;
    let _ = writeln!(
        s,
        "teleop error   mean {} / {}  p99 {} / {}",
        opt(e.mean_position, 1e3, "mm"),
        opt(e.mean_angle, 1.0, "rad"),
        opt(e.p99_position, 1e3, "mm"),
        opt(e.p99_angle, 1.0, "rad")
    );
    let _ = writeln!(
        s,
        "completion     {}",
        if r.completion.censored { "censored".to_string() } else { opt(r.completion.time, 1.0, "s") }
    );
    for (class, d) in &r.drops {
        let pct = d.pct.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}%"));
        let _ = writeln!(s, "drops {class:<12} {pct} ({} of {})", d.sent - d.received.min(d.sent), d.sent);
    }
    let f = &r.frames;
    let _ = writeln!(
        s,
        "frames         {} ({} reconstructed), {:.1} fps, pose updates {:.1}/s",
        f.count, f.reconstructed, f.rate, f.pose_update_rate
    );
    let rb = &r.robot;
    let _ = writeln!(
        s,
        "robot          {} received, {} consumed, {} stale, {} duplicate, {} unreachable, {} pending holds, {} interior stops",
        rb.received, rb.consumed, rb.stale_discards, rb.duplicate_discards, rb.unreachable, rb.hold_intervals_pending,
        rb.interior_stops
    );
    let _ = writeln!(
        s,
        "xr estimator   {} accepted, {} stale, {} pauses",
        r.xr.feedback_accepted, r.xr.feedback_stale, r.xr.pauses
    );
    let p = &r.pipeline;
    let _ = writeln!(
        s,
        "pipeline       bound {:.3} ms, {} deadline misses, {} inversions, {:.3} ms blocked",
        p.bound * 1e3,
        p.deadline_misses,
        p.inversions,
        p.blocked_ns as f64 * 1e-6
    );
    if let Some(c) = &r.cloud {
        let _ = writeln!(
            s,
            "cloud          {} -> {} points (N_max {}, r {:.3})",
            c.raw_points, c.sent_points, c.n_max, c.r
        );
    }
    s
}

pub const FRAME_HEADER: [&str; 21] = [
    "display_ns",
    "user_x",
    "user_y",
    "user_z",
    "user_qw",
    "user_qx",
    "user_qy",
    "user_qz",
    "robot_x",
    "robot_y",
    "robot_z",
    "robot_qw",
    "robot_qx",
    "robot_qy",
    "robot_qz",
    "gripper",
    "reconstructed",
    "source_t_ns",
    "feedback_t_ns",
    "error_m",
    "error_rad",
];

pub fn write_frames(frames: &[FrameRecord], errors: &[(f64, f64)], w: impl Write) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FRAME_HEADER)?;
    let stamp = |t: Option<crate::pose::Timestamp>| t.map_or(String::new(), |t| t.nanos().to_string());
    for (f, e) in frames.iter().zip(errors) {
        let mut row = vec![f.display_time.nanos().to_string()];
        for pose in [&f.user_pose, &f.robot_pose_shown] {
            row.extend(pose.position.iter().map(|v| v.to_string()));
            row.extend(pose.wxyz().iter().map(|v| v.to_string()));
        }
        row.push(f.gripper_shown.to_string());
        row.push(u8::from(f.reconstructed).to_string());
        row.push(stamp(f.source_t_start));
        row.push(stamp(f.feedback_t_start));
        row.push(e.0.to_string());
        row.push(e.1.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn frames_csv(out: &SimOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_frames(&out.frames, &out.errors, &mut buf).expect("in-memory write");
    buf
}

pub fn timeline_csv(out: &SimOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    out.timeline.write_csv(&mut buf).expect("in-memory write");
    buf
}

/// Writes the four artifacts into `dir`, creating it if needed.
pub fn write_all(out: &SimOutput, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report_json(&out.report))?;
    std::fs::write(dir.join("report.txt"), report_text(&out.report))?;
    std::fs::write(dir.join("frames.csv"), frames_csv(out))?;
    std::fs::write(dir.join("timeline.csv"), timeline_csv(out))?;
    Ok(())
}
