use std::fmt::Write as _;

use super::pose::{horizon_frames, l1_per_frame, mpjpe};
use super::rotation::{mat3_from_slice, orthonormalize, rotmat_to_euler};
use crate::data::{PoseSequence, Representation};
use crate::error::{PotrError, Result};

/// Horizons reported by default, in milliseconds.
pub const DEFAULT_HORIZONS_MS: [f64; 4] = [80.0, 160.0, 320.0, 400.0];

/// One metric for one predictor, evaluated at every horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub predictor: String,
    pub metric: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointRow {
    pub predictor: String,
    pub metric: String,
    pub joint: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub horizons_ms: Vec<f64>,
    /// 1-based frame index of each horizon.
    pub horizon_frames: Vec<usize>,
    pub rows: Vec<MetricRow>,
    pub per_joint: Vec<JointRow>,
    pub summary: Vec<(String, f64)>,
}

impl EvalReport {
    /// Keeps the horizons that fit in `target_len` frames, ascending.
    pub fn new(horizons_ms: &[f64], frame_rate: f64, target_len: usize) -> Result<Self> {
        let mut hs: Vec<f64> = horizons_ms.to_vec();
        hs.sort_by(f64::total_cmp);
        hs.dedup();
        let mut report = EvalReport::default();
        for h in hs {
            let f = horizon_frames(h, frame_rate);
            if f <= target_len && report.horizon_frames.last().is_none_or(|&p| p < f) {
                report.horizons_ms.push(h);
                report.horizon_frames.push(f);
            }
        }
        if report.horizons_ms.is_empty() {
            return Err(PotrError::config("no horizon fits within the predicted length"));
        }
        Ok(report)
    }

    pub fn row(&self, predictor: &str, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.predictor == predictor && r.metric == metric)
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Adds metric rows for one predictor, averaged over sequence pairs.
    pub fn add_predictor(&mut self, name: &str, preds: &[PoseSequence], gts: &[PoseSequence], map_threshold: f64) -> Result<()> {
        if preds.len() != gts.len() || preds.is_empty() {
            return Err(PotrError::contract(format!("{} predictions for {} targets", preds.len(), gts.len())));
        }
        if !(map_threshold > 0.0) {
            return Err(PotrError::config("mAP threshold must be positive"));
        }
        let repr = gts[0].representation;
        let joints = gts[0].skeleton.nodes;
        let hcount = self.horizon_frames.len();
        let mut l1 = vec![0.0; hcount];
        let mut primary = vec![0.0; hcount];
        let mut joint_err = vec![vec![0.0; hcount]; joints];
        let mut joint_map = vec![vec![0.0; hcount]; joints];
        for (p, g) in preds.iter().zip(gts) {
            if p.representation != repr || g.representation != repr {
                return Err(PotrError::contract("mixed representations in evaluation"));
            }
            let frame_l1 = l1_per_frame(p, g)?;
            match repr {
                Representation::Positions3d => {
                    let m = mpjpe(p, g)?;
                    for (i, &f) in self.horizon_frames.iter().enumerate() {
                        let t = f - 1;
                        l1[i] += frame_l1[t];
                        primary[i] += m.per_frame[t];
                        for k in 0..joints {
                            let d = dist(p.node(t, k), g.node(t, k));
                            joint_err[k][i] += d;
                            if d < map_threshold {
                                joint_map[k][i] += 1.0;
                            }
                        }
                    }
                }
                Representation::RotationMatrices => {
                    for (i, &f) in self.horizon_frames.iter().enumerate() {
                        let t = f - 1;
                        l1[i] += frame_l1[t];
                        let mut total = 0.0;
                        for k in 0..joints {
                            let (ep, eg) = (projected_euler(p.node(t, k))?, projected_euler(g.node(t, k))?);
                            let sq: f64 = ep.iter().zip(&eg).map(|(a, b)| (a - b) * (a - b)).sum();
                            total += sq;
                            joint_err[k][i] += sq.sqrt();
                        }
                        primary[i] += total.sqrt();
                    }
                }
            }
        }
        let n = preds.len() as f64;
        let avg = |v: Vec<f64>| v.into_iter().map(|x| x / n).collect::<Vec<_>>();
        let push = |rows: &mut Vec<MetricRow>, metric: String, values: Vec<f64>| {
            rows.push(MetricRow { predictor: name.to_string(), metric, values })
        };
        match repr {
            Representation::Positions3d => {
                push(&mut self.rows, "mpjpe".into(), avg(primary));
                let hits: Vec<f64> = (0..hcount).map(|i| joint_map.iter().map(|j| j[i]).sum::<f64>()).collect();
                let map = hits.into_iter().map(|h| h / (n * joints as f64)).collect();
                push(&mut self.rows, format!("map@{map_threshold}"), map);
                for (k, (e, m)) in joint_err.into_iter().zip(joint_map).enumerate() {
                    self.per_joint.push(JointRow { predictor: name.into(), metric: "position_error".into(), joint: k, values: avg(e) });
                    self.per_joint.push(JointRow { predictor: name.into(), metric: format!("map@{map_threshold}"), joint: k, values: avg(m) });
                }
            }
            Representation::RotationMatrices => {
                push(&mut self.rows, "euler".into(), avg(primary));
                for (k, e) in joint_err.into_iter().enumerate() {
                    self.per_joint.push(JointRow { predictor: name.into(), metric: "euler".into(), joint: k, values: avg(e) });
                }
            }
        }
        push(&mut self.rows, "l1".into(), avg(l1));
        Ok(())
    }

    fn header(&self, lead: &str) -> String {
        let mut s = lead.to_string();
        for h in &self.horizons_ms {
            let _ = write!(s, ",{h}ms");
        }
        s.push('\n');
        s
    }

    /// Table layout: one row per (predictor, metric), one column per horizon.
    pub fn to_csv(&self) -> String {
        let mut s = self.header("predictor,metric");
        for r in &self.rows {
            let _ = write!(s, "{},{}", r.predictor, r.metric);
            for v in &r.values {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn per_joint_csv(&self) -> String {
        let mut s = self.header("predictor,metric,joint");
        for r in &self.per_joint {
            let _ = write!(s, "{},{},{}", r.predictor, r.metric, r.joint);
            for v in &r.values {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k},{v:?}");
        }
        s
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn projected_euler(node: &[f64]) -> Result<[f64; 3]> {
    let (a, b, c) = rotmat_to_euler(&orthonormalize(&mat3_from_slice(node)))?;
    Ok([a, b, c])
}
