//! Differentiable parameter-space curves t -> theta(t) on [0, 1]:
//! straight segments, coordinate lines theta + t e_p, composites, and
//! axis-aligned rectangle loops for holonomy probes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QigError, Result};
use crate::expfam::Theta;

pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathKind {
    Segment,
    CoordinateLine(usize),
    Composite,
    RectangleLeg,
}

type PointFn = Arc<dyn Fn(f64) -> Theta + Send + Sync>;

#[derive(Clone)]
pub struct CurvePath {
    pub kind: PathKind,
    point_fn: PointFn,
    velocity_fn: PointFn,
    /// Discretization count for continuation chains along the curve.
    pub samples: usize,
}

impl std::fmt::Debug for CurvePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CurvePath")
            .field("kind", &self.kind)
            .field("samples", &self.samples)
            .finish()
    }
}

impl CurvePath {
    pub fn point(&self, t: f64) -> Theta {
        (self.point_fn)(t)
    }

    pub fn velocity(&self, t: f64) -> Theta {
        (self.velocity_fn)(t)
    }

    /// Straight segment from `from` at t = 0 to `to` at t = 1.
    pub fn segment(from: &Theta, to: &Theta) -> CurvePath {
        let f = from.clone();
        let d = to - from;
        let v = d.clone();
        CurvePath {
            kind: PathKind::Segment,
            point_fn: Arc::new(move |t| &f + &d * t),
            velocity_fn: Arc::new(move |_| v.clone()),
            samples: DEFAULT_SAMPLES,
        }
    }

    /// Coordinate line t -> theta + t e_p with unit velocity e_p.
    pub fn coordinate_line(theta: &Theta, p: usize) -> CurvePath {
        let base = theta.clone();
        let n = theta.len();
        let mut e = Theta::zeros(n);
        e[p] = 1.0;
        let ev = e.clone();
        CurvePath {
            kind: PathKind::CoordinateLine(p),
            point_fn: Arc::new(move |t| &base + &e * t),
            velocity_fn: Arc::new(move |_| ev.clone()),
            samples: DEFAULT_SAMPLES,
        }
    }

    /// Arbitrary smooth curve given by closures; velocity must be the
    /// derivative of the point map.
    pub fn from_fns(
        point: impl Fn(f64) -> Theta + Send + Sync + 'static,
        velocity: impl Fn(f64) -> Theta + Send + Sync + 'static,
    ) -> CurvePath {
        CurvePath {
            kind: PathKind::Segment,
            point_fn: Arc::new(point),
            velocity_fn: Arc::new(velocity),
            samples: DEFAULT_SAMPLES,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> CurvePath {
        self.samples = samples.max(1);
        self
    }

    /// Concatenates legs with equal parameter shares; leg k covers
    /// [k/m, (k+1)/m] with velocity scaled by m. Legs must chain
    /// continuously.
    pub fn composite(legs: Vec<CurvePath>) -> Result<CurvePath> {
        let m = legs.len();
        if m == 0 {
            return Err(QigError::Config("composite path needs legs".into()));
        }
        for w in legs.windows(2) {
            let gap = (w[0].point(1.0) - w[1].point(0.0)).norm();
            if gap > 1e-12 {
                return Err(QigError::Config(format!(
                    "composite legs discontinuous: junction gap {gap:.3e}"
                )));
            }
        }
        let samples = legs.iter().map(|l| l.samples).max().unwrap_or(DEFAULT_SAMPLES) * m;
        let legs = Arc::new(legs);
        let legs2 = legs.clone();
        let mf = m as f64;
        let locate = move |t: f64| -> (usize, f64) {
            let scaled = (t * mf).clamp(0.0, mf);
            let mut k = scaled.floor() as usize;
            if k >= m {
                k = m - 1;
            }
            (k, scaled - k as f64)
        };
        let locate2 = locate.clone();
        Ok(CurvePath {
            kind: PathKind::Composite,
            point_fn: Arc::new(move |t| {
                let (k, u) = locate(t);
                legs[k].point(u)
            }),
            velocity_fn: Arc::new(move |t| {
                let (k, u) = locate2(t);
                legs2[k].velocity(u) * mf
            }),
            samples,
        })
    }

    /// Closed axis-aligned rectangle loop between opposite corners
    /// `from` and `to`, which must differ in exactly two coordinates.
    pub fn rectangle(from: &Theta, to: &Theta) -> Result<CurvePath> {
        let diff: Vec<usize> = (0..from.len())
            .filter(|&k| (from[k] - to[k]).abs() > 1e-14)
            .collect();
        if diff.len() != 2 {
            return Err(QigError::Config(
                "rectangle corners must differ in exactly two coordinates".into(),
            ));
        }
        let (p, q) = (diff[0], diff[1]);
        let mut c1 = from.clone();
        c1[p] = to[p];
        let mut c3 = from.clone();
        c3[q] = to[q];
        let legs = vec![
            CurvePath::segment(from, &c1),
            CurvePath::segment(&c1, to),
            CurvePath::segment(to, &c3),
            CurvePath::segment(&c3, from),
        ];
        let mut path = CurvePath::composite(legs)?;
        path.kind = PathKind::RectangleLeg;
        Ok(path)
    }

    pub fn from_json(text: &str) -> Result<CurvePath> {
        let spec: PathSpec = serde_json::from_str(text)?;
        spec.build()
    }
}

/// JSON wire format for paths.
#[derive(Debug, Serialize, Deserialize)]
pub struct PathSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl PathSpec {
    pub fn build(&self) -> Result<CurvePath> {
        let from = self
            .from
            .as_ref()
            .map(|v| Theta::from_vec(v.clone()))
            .ok_or_else(|| QigError::Config("path needs a 'from' point".into()))?;
        let mut path = match self.kind.as_str() {
            "segment" => {
                let to = self
                    .to
                    .as_ref()
                    .map(|v| Theta::from_vec(v.clone()))
                    .ok_or_else(|| QigError::Config("segment needs 'to'".into()))?;
                CurvePath::segment(&from, &to)
            }
            "coordinate_line" => {
                let p = self
                    .p
                    .ok_or_else(|| QigError::Config("coordinate_line needs 'p'".into()))?;
                if p >= from.len() {
                    return Err(QigError::Config(format!(
                        "coordinate index {p} out of range for n = {}",
                        from.len()
                    )));
                }
                CurvePath::coordinate_line(&from, p)
            }
            "rectangle" => {
                let to = self
                    .to
                    .as_ref()
                    .map(|v| Theta::from_vec(v.clone()))
                    .ok_or_else(|| QigError::Config("rectangle needs 'to'".into()))?;
                CurvePath::rectangle(&from, &to)?
            }
            other => {
                return Err(QigError::Config(format!("unknown path kind '{other}'")));
            }
        };
        if let Some(s) = self.samples {
            path = path.with_samples(s);
        }
        Ok(path)
    }
}
