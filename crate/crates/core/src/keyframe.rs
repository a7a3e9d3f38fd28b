//! Hand keyframe filter.
//!
//! A frame `j >= 1` is slow when the hand moved at most `sigma` pixels since
//! frame `j - 1`. Slow frames are grouped by the transitive closure of
//! `|j - k| <= theta`, and the lower median of each group is its keyframe.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default thresholds: sigma = 6 px, theta = 2 frames.
pub const DEFAULT_SIGMA: f64 = 6.0;
pub const DEFAULT_THETA: usize = 2;

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error("trajectory must have at least one frame")]
    Empty,
    #[error("frame {frame}: coordinates must be finite")]
    NonFinite { frame: usize },
    #[error("row {row}: expected frame index {expected}, found {found}")]
    FrameOrder {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-frame hand-centre coordinates in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<Point>,
    /// Frames per second; informational only.
    pub frame_rate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    frame: usize,
    x: f64,
    y: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point>) -> Result<Self, KeyframeError> {
        if points.is_empty() {
            return Err(KeyframeError::Empty);
        }
        if let Some(frame) = points
            .iter()
            .position(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(KeyframeError::NonFinite { frame });
        }
        Ok(Self {
            points,
            frame_rate: 30.0,
        })
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self, KeyframeError> {
        Self::new(xy.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
            frame_rate: self.frame_rate,
        }
    }

    /// Reads the `frame,x,y` CSV format. Frame indices must be `0..T` in order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, KeyframeError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        for (row, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let rec = rec?;
            if rec.frame != row {
                return Err(KeyframeError::FrameOrder {
                    row: row + 1,
                    expected: row,
                    found: rec.frame,
                });
            }
            points.push(Point::new(rec.x, rec.y));
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), KeyframeError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (frame, p) in self.points.iter().enumerate() {
            wtr.serialize(CsvRow {
                frame,
                x: p.x,
                y: p.y,
            })?;
        }
        wtr.flush().map_err(|source| KeyframeError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KeyframeError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| KeyframeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KeyframeError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| KeyframeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Slow-motion threshold in pixels.
    pub sigma: f64,
    /// Index-distance threshold in frames.
    pub theta: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            theta: DEFAULT_THETA,
        }
    }
}

impl FilterConfig {
    pub fn new(sigma: f64, theta: usize) -> Result<Self, KeyframeError> {
        let cfg = Self { sigma, theta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), KeyframeError> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(KeyframeError::Config(format!(
                "sigma must be a finite value >= 0, got {}",
                self.sigma
            )));
        }
        if self.theta < 1 {
            return Err(KeyframeError::Config("theta must be >= 1".into()));
        }
        Ok(())
    }
}

/// `values[j - 1]` is the distance moved between frames `j - 1` and `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub values: Vec<f64>,
}

impl DistanceSeries {
    /// Distance moved into frame `j` (`j >= 1`).
    pub fn at_frame(&self, j: usize) -> f64 {
        self.values[j - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowMotionGroup {
    pub members: Vec<usize>,
    pub keyframe: usize,
}

impl SlowMotionGroup {
    pub fn first(&self) -> usize {
        self.members[0]
    }

    pub fn last(&self) -> usize {
        *self.members.last().expect("groups are non-empty")
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.members.binary_search(&frame).is_ok()
    }
}

/// Keyframes and the slow-motion groups they were drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyframeResult {
    pub groups: Vec<SlowMotionGroup>,
}

#[derive(Serialize, Deserialize)]
struct KeyframeJson {
    keyframes: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl KeyframeResult {
    pub fn keyframes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.keyframe).collect()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Index of the group containing `frame`, if any.
    pub fn group_of(&self, frame: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(frame))
    }

    /// `{"keyframes":[..],"groups":[[..],..]}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(&KeyframeJson {
            keyframes: self.keyframes(),
            groups: self.groups.iter().map(|g| g.members.clone()).collect(),
        })
        .expect("plain integers serialize")
    }

    /// Parses and checks the JSON form: groups sorted, disjoint and each keyframe a member.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: KeyframeJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if raw.keyframes.len() != raw.groups.len() {
            return Err(format!(
                "{} keyframes for {} groups",
                raw.keyframes.len(),
                raw.groups.len()
            ));
        }
        let mut prev_last: Option<usize> = None;
        let mut groups = Vec::with_capacity(raw.groups.len());
        for (members, keyframe) in raw.groups.into_iter().zip(raw.keyframes) {
            if members.is_empty() {
                return Err("empty group".into());
            }
            if members.windows(2).any(|w| w[0] >= w[1]) {
                return Err("group members must be strictly increasing".into());
            }
            if prev_last.is_some_and(|p| members[0] <= p) {
                return Err("groups must be ordered and disjoint".into());
            }
            if !members.contains(&keyframe) {
                return Err(format!("keyframe {keyframe} is not in its group"));
            }
            prev_last = members.last().copied();
            groups.push(SlowMotionGroup { members, keyframe });
        }
        Ok(Self { groups })
    }
}

pub fn movement_distances(traj: &Trajectory) -> DistanceSeries {
    DistanceSeries {
        values: traj
            .points
            .windows(2)
            .map(|w| w[0].distance(w[1]))
            .collect(),
    }
}

/// Frames `j in 1..T` with `D_j <= sigma`, ascending.
pub fn slow_frames(distances: &DistanceSeries, cfg: &FilterConfig) -> Vec<usize> {
    distances
        .values
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= cfg.sigma)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Splits sorted slow frames into maximal chains with consecutive gaps `<= theta`.
///
/// On a sorted set, consecutive-gap chaining is exactly the transitive closure
/// of the pairwise relation. Keyframes are left at the first member until
/// [`select_keyframes`] runs.
pub fn group_slow_frames(slow: &[usize], cfg: &FilterConfig) -> Vec<SlowMotionGroup> {
    let mut groups = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for &j in slow {
        match current.last() {
            Some(&m) if j - m > cfg.theta => {
                groups.push(finish_group(std::mem::take(&mut current)));
                current.push(j);
            }
            _ => current.push(j),
        }
    }
    if !current.is_empty() {
        groups.push(finish_group(current));
    }
    groups
}

fn finish_group(members: Vec<usize>) -> SlowMotionGroup {
    SlowMotionGroup {
        keyframe: members[0],
        members,
    }
}

/// Lower median `members[(n - 1) / 2]` as each group's keyframe.
pub fn select_keyframes(groups: Vec<SlowMotionGroup>) -> KeyframeResult {
    KeyframeResult {
        groups: groups
            .into_iter()
            .map(|g| SlowMotionGroup {
                keyframe: g.members[(g.members.len() - 1) / 2],
                members: g.members,
            })
            .collect(),
    }
}

pub fn filter_keyframes(traj: &Trajectory, cfg: &FilterConfig) -> KeyframeResult {
    let distances = movement_distances(traj);
    let slow = slow_frames(&distances, cfg);
    select_keyframes(group_slow_frames(&slow, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FilterConfig {
        FilterConfig::default()
    }

    fn members(r: &KeyframeResult) -> Vec<Vec<usize>> {
        r.groups.iter().map(|g| g.members.clone()).collect()
    }

    #[test]
    fn distances() {
        let t = Trajectory::from_xy(&[(0.0, 0.0); 3]).unwrap();
        assert_eq!(movement_distances(&t).values, vec![0.0, 0.0]);
        let t = Trajectory::from_xy(&[(0.0, 0.0), (3.0, 4.0)]).unwrap();
        assert_eq!(movement_distances(&t).values, vec![5.0]);
        let t = Trajectory::from_xy(&[(1.0, 1.0)]).unwrap();
        assert!(movement_distances(&t).values.is_empty());
    }

    #[test]
    fn slow_frame_selection() {
        let d = DistanceSeries {
            values: vec![0.0; 4],
        };
        assert_eq!(slow_frames(&d, &cfg()), vec![1, 2, 3, 4]);
        let d = DistanceSeries {
            values: vec![7.0, 5.0, 7.0],
        };
        assert_eq!(slow_frames(&d, &cfg()), vec![2]);
        let d = DistanceSeries {
            values: vec![0.5, 1.0],
        };
        let zero = FilterConfig::new(0.0, 2).unwrap();
        assert!(slow_frames(&d, &zero).is_empty());
    }

    #[test]
    fn grouping() {
        let g = group_slow_frames(&[1, 2, 3, 4, 7, 8, 9], &cfg());
        assert_eq!(
            g.iter().map(|g| g.members.clone()).collect::<Vec<_>>(),
            vec![vec![1, 2, 3, 4], vec![7, 8, 9]]
        );
        let g = group_slow_frames(&[1, 3, 5], &cfg());
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, vec![1, 3, 5]);
        assert!(group_slow_frames(&[], &cfg()).is_empty());
    }

    #[test]
    fn lower_median() {
        let mk = |m: Vec<usize>| SlowMotionGroup {
            keyframe: m[0],
            members: m,
        };
        let r = select_keyframes(vec![mk(vec![7, 8, 9]), mk(vec![1, 2, 3, 4]), mk(vec![5])]);
        assert_eq!(r.keyframes(), vec![8, 2, 5]);
    }

    #[test]
    fn two_dwell_trajectory() {
        let mut xy = vec![(100.0, 100.0); 5];
        xy.push((170.0, 170.0));
        xy.push((240.0, 240.0));
        xy.extend([(300.0, 300.0); 3]);
        let t = Trajectory::from_xy(&xy).unwrap();
        let r = filter_keyframes(&t, &cfg());
        assert_eq!(r.keyframes(), vec![2, 8]);
        assert_eq!(members(&r), vec![vec![1, 2, 3, 4], vec![8, 9]]);
    }

    #[test]
    fn stationary_and_single_frame() {
        let t = Trajectory::from_xy(&[(5.0, 5.0); 5]).unwrap();
        let r = filter_keyframes(&t, &cfg());
        assert_eq!(r.keyframes(), vec![2]);
        assert_eq!(members(&r), vec![vec![1, 2, 3, 4]]);
        let t = Trajectory::from_xy(&[(5.0, 5.0)]).unwrap();
        assert!(filter_keyframes(&t, &cfg()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::new(-1.0, 2).is_err());
        assert!(FilterConfig::new(f64::NAN, 2).is_err());
        assert!(FilterConfig::new(6.0, 0).is_err());
        assert!(FilterConfig::new(0.0, 1).is_ok());
    }

    #[test]
    fn trajectory_rejects_bad_input() {
        assert!(matches!(Trajectory::new(vec![]), Err(KeyframeError::Empty)));
        assert!(matches!(
            Trajectory::from_xy(&[(0.0, f64::INFINITY)]),
            Err(KeyframeError::NonFinite { frame: 0 })
        ));
        let csv = "frame,x,y\n0,1,2\n2,3,4\n";
        assert!(matches!(
            Trajectory::read_csv(csv.as_bytes()),
            Err(KeyframeError::FrameOrder { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = Trajectory::from_xy(&[(1.5, 2.25), (640.0, 360.125), (0.1, 1e-3)]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"frame,x,y\n"));
        assert_eq!(Trajectory::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn json_form() {
        let t = Trajectory::from_xy(&[(5.0, 5.0); 5]).unwrap();
        let r = filter_keyframes(&t, &cfg());
        let json = r.to_json();
        assert_eq!(json, r#"{"keyframes":[2],"groups":[[1,2,3,4]]}"#);
        assert_eq!(KeyframeResult::from_json(&json).unwrap(), r);
        assert!(KeyframeResult::from_json(r#"{"keyframes":[9],"groups":[[1,2]]}"#).is_err());
    }
}
