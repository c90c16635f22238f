//! Scenario description, angle and grid conventions, and steering vectors.
//!
//! Angles are measured from the array axis: 0° is endfire and 90° is
//! broadside. Degrees are used at the boundary, radians internally. Element
//! `k` of the steering vector is `exp(j·2π·(d/λ)·k·cos θ)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A direction in degrees, restricted to `[0, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub fn from_degrees(deg: f64) -> Result<Self> {
        if !deg.is_finite() || !(0.0..=180.0).contains(&deg) {
            return Err(Error::validation("angle", format!("{deg} is outside [0, 180] degrees")));
        }
        Ok(Angle(deg))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// The mirror direction `180° − θ`.
    pub fn mirrored(self) -> Self {
        Angle(180.0 - self.0)
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;
    fn try_from(deg: f64) -> Result<Self> {
        Angle::from_degrees(deg)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

/// `n` equally spaced candidate positions with spacing `d/λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGrid {
    n: usize,
    spacing_ratio: f64,
}

impl ArrayGrid {
    pub const DEFAULT_SPACING: f64 = 0.5;

    pub fn new(n: usize, spacing_ratio: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("grid.n", format!("need at least 2 positions, got {n}")));
        }
        if !spacing_ratio.is_finite() || spacing_ratio <= 0.0 {
            return Err(Error::validation(
                "grid.spacing_ratio",
                format!("must be positive, got {spacing_ratio}"),
            ));
        }
        Ok(ArrayGrid { n, spacing_ratio })
    }

    pub fn half_wavelength(n: usize) -> Result<Self> {
        Self::new(n, Self::DEFAULT_SPACING)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }
}

/// Steering vector of the full grid toward `theta`.
pub fn steering_vector(theta: Angle, grid: &ArrayGrid) -> Vec<Complex64> {
    let phase = 2.0 * std::f64::consts::PI * grid.spacing_ratio * theta.radians().cos();
    (0..grid.n)
        .map(|k| Complex64::from_polar(1.0, phase * k as f64))
        .collect()
}

/// Which grid positions carry an active transmitter.
///
/// Serialized as a string of `0`/`1` characters, position 0 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SelectionMask {
    active: Vec<bool>,
}

impl SelectionMask {
    pub fn new(active: Vec<bool>) -> Result<Self> {
        if !active.iter().any(|&b| b) {
            return Err(Error::validation("mask", "at least one position must be active"));
        }
        Ok(SelectionMask { active })
    }

    pub fn full(n: usize) -> Self {
        SelectionMask { active: vec![true; n] }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut active = vec![false; n];
        for &k in indices {
            if k >= n {
                return Err(Error::validation("mask", format!("position {k} outside grid of {n}")));
            }
            active[k] = true;
        }
        Self::new(active)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&b| b).count()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.active
    }

    pub fn indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
            .collect()
    }

    pub fn bits(&self) -> String {
        self.active.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for SelectionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bits())
    }
}

impl FromStr for SelectionMask {
    type Err = Error;

    /// Accepts either a bit string (`"1100"`) or a comma separated index
    /// list prefixed with the grid size (`"4:0,1"`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, list)) = s.split_once(':') {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::validation("mask", format!("bad grid size in `{s}`")))?;
            let idx = list
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::validation("mask", format!("bad index list in `{s}`")))?;
            return Self::from_indices(n, &idx);
        }
        let active = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::validation("mask", format!("unexpected character `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(active)
    }
}

impl TryFrom<String> for SelectionMask {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SelectionMask> for String {
    fn from(m: SelectionMask) -> String {
        m.bits()
    }
}

/// Subvector of `v` on the active positions of `mask`, order preserved.
pub fn restrict<T: Copy>(v: &[T], mask: &SelectionMask) -> Result<Vec<T>> {
    if v.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "vector of length {} vs mask of length {}",
            v.len(),
            mask.len()
        )));
    }
    Ok(v.iter()
        .zip(mask.as_slice())
        .filter_map(|(&x, &keep)| keep.then_some(x))
        .collect())
}

/// A direction paired with its nonnegative weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub angle: Angle,
    pub weight: f64,
}

impl Direction {
    pub fn new(deg: f64, weight: f64) -> Result<Self> {
        Ok(Direction {
            angle: Angle::from_degrees(deg)?,
            weight,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: ArrayGrid,
    pub targets: Vec<Direction>,
    pub undesired: Vec<Direction>,
    /// Per-target trace regularization weight.
    pub trace_reg: Vec<f64>,
    pub budget_p: usize,
    pub total_power: f64,
}

impl Scenario {
    /// Builds a scenario and checks every invariant.
    pub fn new(
        grid: ArrayGrid,
        targets: Vec<Direction>,
        undesired: Vec<Direction>,
        trace_reg: Vec<f64>,
        budget_p: usize,
        total_power: f64,
    ) -> Result<Self> {
        let s = Scenario {
            grid,
            targets,
            undesired,
            trace_reg,
            budget_p,
            total_power,
        };
        s.validate()?;
        Ok(s)
    }

    /// The chapter example: 18 positions at half-wavelength spacing, 10
    /// active, targets at 40°/50°/65°, undesired at 25°/60°/110°/120°, all
    /// weights one.
    pub fn reference() -> Self {
        let d = |deg| Direction::new(deg, 1.0).expect("valid angle");
        Scenario::new(
            ArrayGrid::half_wavelength(18).expect("valid grid"),
            vec![d(40.0), d(50.0), d(65.0)],
            vec![d(25.0), d(60.0), d(110.0), d(120.0)],
            vec![1.0; 3],
            10,
            1.0,
        )
        .expect("reference scenario is valid")
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::validation("targets", "at least one target is required"));
        }
        if self.budget_p < 1 || self.budget_p > self.grid.n() {
            return Err(Error::validation(
                "budget_p",
                format!("must lie in [1, {}], got {}", self.grid.n(), self.budget_p),
            ));
        }
        if self.trace_reg.len() != self.targets.len() {
            return Err(Error::validation(
                "trace_reg",
                format!(
                    "expected {} entries (one per target), got {}",
                    self.targets.len(),
                    self.trace_reg.len()
                ),
            ));
        }
        if !(self.total_power.is_finite() && self.total_power > 0.0) {
            return Err(Error::validation("total_power", "must be positive and finite"));
        }
        let check_weight = |field: &str, i: usize, w: f64| {
            if w.is_finite() && w >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{field}[{i}]"), format!("must be finite and >= 0, got {w}")))
            }
        };
        for (i, t) in self.targets.iter().enumerate() {
            check_weight("targets.weight", i, t.weight)?;
        }
        for (i, q) in self.undesired.iter().enumerate() {
            check_weight("undesired.weight", i, q.weight)?;
        }
        for (i, &r) in self.trace_reg.iter().enumerate() {
            check_weight("trace_reg", i, r)?;
        }
        for (i, a) in self.targets.iter().enumerate() {
            for b in &self.targets[i + 1..] {
                if a.angle == b.angle {
                    return Err(Error::validation("targets", format!("duplicate target angle {}", a.angle)));
                }
            }
            if self.undesired.iter().any(|q| q.angle == a.angle) {
                return Err(Error::validation(
                    "undesired",
                    format!("angle {} is also a target", a.angle),
                ));
            }
        }
        Ok(())
    }
}
