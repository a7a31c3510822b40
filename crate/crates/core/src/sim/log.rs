use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::Status;
use crate::error::{Error, Result};
use crate::geometry::{CartesianState, FrenetState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub id: u32,
    pub s: f64,
    pub d: f64,
    pub s_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub from: usize,
    pub to: usize,
    /// Speed gain over the maneuver as a fraction of `v_max`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub ego: FrenetState,
    pub ego_cartesian: CartesianState,
    pub accel: f64,
    pub jerk: f64,
    pub yaw_rate: f64,
    pub actors: Vec<ActorRecord>,
    pub ttc: Option<f64>,
    pub lane_change: Option<LaneChangeEvent>,
    /// Set on the last simulation step of each decision period.
    pub reward: Option<f64>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub agent: String,
    pub status: Status,
    pub steps: u64,
    pub sim_time: f64,
    pub distance: f64,
    pub total_reward: f64,
    pub lane_changes: usize,
}

/// One line of the JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogLine {
    Step(StepRecord),
    Summary(EpisodeSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, &LogLine::Step(r.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &LogLine::Summary(self.summary.clone()))?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        let mut summary = None;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                LogLine::Step(s) => records.push(s),
                LogLine::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or(Error::EmptyLog)?;
        Ok(Self { records, summary })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
