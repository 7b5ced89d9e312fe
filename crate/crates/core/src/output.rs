//! Run artifacts: trajectory table, event stream, metrics, plot data and the
//! reproduction manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::scenario::Manifest;
use crate::simulation::{Event, RunRecord, Summary, TrajRow};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const POSITIONS_FILE: &str = "positions.csv";
pub const MIN_DISTANCE_FILE: &str = "min_distance.csv";
pub const TOTAL_V_FILE: &str = "total_v.csv";

/// Trajectory columns, in order. Units: s, m, m/s.
pub const TRAJECTORY_HEADER: [&str; 12] = [
    "t", "id", "px", "py", "vx", "vy", "xix", "xiy", "vcx", "vcy", "region", "arrived",
];

/// Seconds between snapshots in the positions plot data.
pub const SNAPSHOT_INTERVAL: f64 = 20.0;

pub fn write_trajectory<W: Write>(out: W, rows: &[TrajRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.id.to_string(),
            r.p.x.to_string(),
            r.p.y.to_string(),
            r.v.x.to_string(),
            r.v.y.to_string(),
            r.xi.x.to_string(),
            r.xi.y.to_string(),
            r.vc.x.to_string(),
            r.vc.y.to_string(),
            r.region.as_str().to_owned(),
            u8::from(r.arrived).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(mut out: W, events: &[Event]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Snapshots of every recorded UAV every [`SNAPSHOT_INTERVAL`] seconds,
/// plus each UAV's arrival row.
pub fn write_positions<W: Write>(out: W, rows: &[TrajRow], dt: f64) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["t", "id", "px", "py", "region", "arrived"])?;
    let every = (SNAPSHOT_INTERVAL / dt).round().max(1.0) as u64;
    for r in rows {
        let k = (r.t / dt).round() as u64;
        if k.is_multiple_of(every) || r.arrived {
            w.write_record([
                r.t.to_string(),
                r.id.to_string(),
                r.p.x.to_string(),
                r.p.y.to_string(),
                r.region.as_str().to_owned(),
                u8::from(r.arrived).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format minimum-distance traces with the `2 r_s` and `r_s` reference
/// levels as columns.
pub fn write_min_distance<W: Write>(out: W, record: &RunRecord, r_s: f64) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["t", "series", "value", "ref_2rs", "ref_rs"])?;
    let (two, one) = ((2.0 * r_s).to_string(), r_s.to_string());
    for s in &record.trace {
        for (name, v) in [
            ("p_distance", s.min_p_distance),
            ("xi_distance", s.min_xi_distance),
            ("tube_margin", s.min_tube_margin),
            ("tube_margin_xi", s.min_tube_margin_xi),
        ] {
            if v.is_finite() {
                w.write_record([&s.t.to_string(), name, &v.to_string(), &two, &one])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_total_v<W: Write>(out: W, record: &RunRecord) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["t", "total_v", "live"])?;
    for s in &record.trace {
        w.write_record([s.t.to_string(), s.total_v.to_string(), s.live.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Write the full output bundle into `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, record: &RunRecord, summary: &Summary, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trajectory(create(dir, TRAJECTORY_FILE)?, &record.rows)?;
    write_events(create(dir, EVENTS_FILE)?, &record.events)?;
    write_json(dir, METRICS_FILE, summary)?;
    write_json(dir, MANIFEST_FILE, manifest)?;
    write_positions(create(dir, POSITIONS_FILE)?, &record.rows, record.dt)?;
    write_min_distance(create(dir, MIN_DISTANCE_FILE)?, record, manifest.scenario.params.r_s)?;
    write_total_v(create(dir, TOTAL_V_FILE)?, record)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;
    use crate::math::Vec2;
    use crate::simulation::EventKind;

    fn row(t: f64, id: u32) -> TrajRow {
        TrajRow {
            t,
            id,
            p: Vec2::new(1.5, -2.0),
            v: Vec2::new(0.25, 0.0),
            xi: Vec2::new(1.55, -2.0),
            vc: Vec2::new(5.0, 0.0),
            region: Region::TubeInterior,
            arrived: false,
        }
    }

    #[test]
    fn trajectory_layout() {
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[row(0.1, 3)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,id,px,py,vx,vy,xix,xiy,vcx,vcy,region,arrived");
        assert_eq!(lines.next().unwrap(), "0.1,3,1.5,-2,0.25,0,1.55,-2,5,0,tube,0");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn region_names_agree_across_outputs() {
        use Region::*;
        for r in [
            TubeInterior,
            TubeExtension,
            LeftStandby,
            RightStandby,
            LeftReady,
            RightReady,
            PastFinish,
        ] {
            assert_eq!(serde_json::to_value(r).unwrap(), r.as_str());
        }
    }

    #[test]
    fn events_are_json_lines() {
        let mut buf = Vec::new();
        let e = [Event::new(0.5, EventKind::Arrival, vec![4])];
        write_events(&mut buf, &e).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back: Event = serde_json::from_str(text.trim_end()).unwrap();
        assert_eq!(back, e[0]);
    }
}
