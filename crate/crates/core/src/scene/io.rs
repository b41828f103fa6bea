//! File formats: trajectory logs (CSV or line-delimited JSON with fields
//! `t,agent_id,x,y,theta,v,a,omega`), map JSON, split JSON, and instance
//! JSONL.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Polygon;
use crate::scene::{AgentState, DatasetSplit, Footprint, Instance, SceneMap, Trajectory};

#[derive(Debug, Serialize, Deserialize)]
struct LogRow {
    t: f64,
    agent_id: String,
    x: f64,
    y: f64,
    theta: f64,
    v: f64,
    a: f64,
    omega: f64,
}

impl LogRow {
    fn state(&self) -> AgentState {
        AgentState {
            t: self.t,
            x: self.x,
            y: self.y,
            theta: self.theta,
            v: self.v,
            a: self.a,
            omega: self.omega,
        }
    }
}

fn group_rows(rows: Vec<LogRow>, footprint: Footprint) -> Result<Vec<Trajectory>> {
    // Group by agent while preserving first-seen agent order.
    let mut order: Vec<String> = Vec::new();
    let mut by_agent: std::collections::HashMap<String, Vec<AgentState>> =
        std::collections::HashMap::new();
    for row in rows {
        let entry = by_agent.entry(row.agent_id.clone()).or_insert_with(|| {
            order.push(row.agent_id.clone());
            Vec::new()
        });
        entry.push(row.state());
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut states = by_agent.remove(&id).unwrap();
        states.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        let traj = Trajectory::new(id, states, footprint);
        traj.validate()?;
        out.push(traj);
    }
    Ok(out)
}

/// Read a trajectory log. `.csv` files are parsed with the standard header;
/// anything else is treated as line-delimited JSON with the same fields.
pub fn read_trajectories(path: &Path, footprint: Footprint) -> Result<Vec<Trajectory>> {
    let is_csv = path.extension().map(|e| e == "csv").unwrap_or(false);
    if is_csv {
        read_trajectories_csv(path, footprint)
    } else {
        read_trajectories_jsonl(path, footprint)
    }
}

pub fn read_trajectories_csv(path: &Path, footprint: Footprint) -> Result<Vec<Trajectory>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<LogRow>().enumerate() {
        let row = rec.map_err(|e| Error::MalformedRecord { line: i + 2, msg: e.to_string() })?;
        rows.push(row);
    }
    group_rows(rows, footprint)
}

pub fn read_trajectories_jsonl(path: &Path, footprint: Footprint) -> Result<Vec<Trajectory>> {
    let file = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: LogRow = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedRecord { line: i + 1, msg: e.to_string() })?;
        rows.push(row);
    }
    group_rows(rows, footprint)
}

/// Write trajectories as the standard CSV log.
pub fn write_trajectories_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for traj in trajectories {
        for s in &traj.states {
            writer.serialize(LogRow {
                t: s.t,
                agent_id: traj.agent_id.clone(),
                x: s.x,
                y: s.y,
                theta: s.theta,
                v: s.v,
                a: s.a,
                omega: s.omega,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MapOrigin {
    note: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MapDoc {
    origin: MapOrigin,
    drivable: Vec<Polygon>,
    non_drivable: Vec<Polygon>,
}

pub fn read_map(path: &Path) -> Result<SceneMap> {
    let doc: MapDoc = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let map = SceneMap {
        origin_note: doc.origin.note,
        drivable: doc.drivable,
        non_drivable: doc.non_drivable,
    };
    map.validate()?;
    Ok(map)
}

pub fn write_map(path: &Path, map: &SceneMap) -> Result<()> {
    let doc = MapDoc {
        origin: MapOrigin { note: map.origin_note.clone() },
        drivable: map.drivable.clone(),
        non_drivable: map.non_drivable.clone(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<DatasetSplit> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_split(path: &Path, split: &DatasetSplit) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, split)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Instances are stored one JSON object per line.
pub fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedRecord { line: i + 1, msg: e.to_string() })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::synth::{synth_scenario, ScenarioKind};

    #[test]
    fn csv_round_trip() {
        let (_, trajs) = synth_scenario(ScenarioKind::Straight, 3, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_trajectories_csv(&path, &trajs).unwrap();
        let back = read_trajectories(&path, trajs[0].footprint).unwrap();
        assert_eq!(back.len(), trajs.len());
        for (a, b) in back.iter().zip(&trajs) {
            assert_eq!(a.agent_id, b.agent_id);
            assert_eq!(a.states, b.states);
        }
    }

    #[test]
    fn malformed_csv_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,agent_id,x,y,theta,v,a,omega\n0.0,a,1,2,0,1,0,0\nnot-a-number,a,x,2,0,1,0,0\n").unwrap();
        match read_trajectories(&path, Footprint::default()) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed record, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_matches_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("log.csv");
        let jsonl_path = dir.path().join("log.jsonl");
        std::fs::write(&csv_path, "t,agent_id,x,y,theta,v,a,omega\n0.0,a,1,2,0.5,3,0.1,0.01\n0.1,a,2,3,0.5,3,0.1,0.01\n").unwrap();
        std::fs::write(
            &jsonl_path,
            "{\"t\":0.0,\"agent_id\":\"a\",\"x\":1,\"y\":2,\"theta\":0.5,\"v\":3,\"a\":0.1,\"omega\":0.01}\n{\"t\":0.1,\"agent_id\":\"a\",\"x\":2,\"y\":3,\"theta\":0.5,\"v\":3,\"a\":0.1,\"omega\":0.01}\n",
        )
        .unwrap();
        let a = read_trajectories(&csv_path, Footprint::default()).unwrap();
        let b = read_trajectories(&jsonl_path, Footprint::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn map_round_trip() {
        let (map, _) = synth_scenario(ScenarioKind::Crossroads, 1, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        write_map(&path, &map).unwrap();
        let back = read_map(&path).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn split_round_trip() {
        let split = crate::scene::split_dataset(100, [7.0, 1.5, 1.5], 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        write_split(&path, &split).unwrap();
        assert_eq!(read_split(&path).unwrap(), split);
    }
}
