//! Beampatterns, target-gain droop and normalized cross-correlation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{min_eigenvalue, HermitianMatrix};
use crate::model::{steering_vector, Angle, ArrayGrid, Scenario};
use crate::sdr::DesignResult;

/// Default sweep step in degrees.
pub const DEFAULT_SWEEP_STEP: f64 = 0.25;

/// Significant digits of every number written to CSV.
pub const CSV_DIGITS: usize = 9;

/// Relative tolerance on negative eigenvalues before a pattern carries a
/// warning.
const PSD_TOL: f64 = 1e-8;

/// Relative tolerance of the constituent superposition check.
const SUPERPOSITION_TOL: f64 = 1e-8;

/// Formats `x` in plain decimal with [`CSV_DIGITS`] significant digits,
/// falling back to exponent notation for very large or small magnitudes.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = CSV_DIGITS as i32 - 1 - exp;
    if (0..=20).contains(&decimals) {
        format!("{:.*}", decimals as usize, x)
    } else if decimals < 0 && exp < 15 {
        format!("{:.0}", x)
    } else {
        format!("{:.*e}", CSV_DIGITS - 1, x)
    }
}

/// `0°, step, 2·step, …, 180°`.
pub fn sweep_angles(step_deg: f64) -> Result<Vec<Angle>> {
    if !(step_deg > 0.0 && step_deg <= 180.0) {
        return Err(Error::validation("sweep_deg", "must lie in (0, 180]"));
    }
    let count = (180.0 / step_deg).floor() as usize;
    let mut out: Vec<Angle> = (0..=count)
        .map(|i| Angle::from_degrees((i as f64 * step_deg).min(180.0)))
        .collect::<Result<_>>()?;
    if out.last().is_some_and(|a| a.degrees() < 180.0) {
        out.push(Angle::from_degrees(180.0)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeampatternSample {
    pub theta: Angle,
    /// `a(θ)ᴴ R a(θ)`.
    pub power: f64,
    /// `10·log10(power / max power over the sweep)`.
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beampattern {
    pub samples: Vec<BeampatternSample>,
    pub warnings: Vec<String>,
}

impl Beampattern {
    pub fn max_power(&self) -> f64 {
        self.samples.iter().map(|s| s.power).fold(0.0, f64::max)
    }

    /// Sample with the largest power; the first one on ties.
    pub fn argmax(&self) -> Angle {
        let mut best = &self.samples[0];
        for s in &self.samples[1..] {
            if s.power > best.power {
                best = s;
            }
        }
        best.theta
    }

    /// CSV with columns `theta_deg,power,gain_db`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta_deg,power,gain_db")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{}",
                format_sig(s.theta.degrees()),
                format_sig(s.power),
                format_sig(s.gain_db)
            )?;
        }
        Ok(())
    }
}

fn directed_power(r: &HermitianMatrix, grid: &ArrayGrid, theta: Angle) -> f64 {
    r.quad_form(&steering_vector(theta, grid))
}

fn check_dim(r: &HermitianMatrix, grid: &ArrayGrid) -> Result<()> {
    if r.dim() != grid.n() {
        return Err(Error::Dimension(format!(
            "matrix is {0}x{0}, grid has {1} positions",
            r.dim(),
            grid.n()
        )));
    }
    Ok(())
}

/// Transmit power pattern of `r` over `angles`, normalized to its maximum.
pub fn beampattern(r: &HermitianMatrix, grid: &ArrayGrid, angles: &[Angle]) -> Result<Beampattern> {
    check_dim(r, grid)?;
    if angles.is_empty() {
        return Err(Error::validation("angles", "sweep is empty"));
    }
    let mut warnings = Vec::new();
    let lambda_min = min_eigenvalue(r)?;
    let scale = r.trace().abs().max(f64::MIN_POSITIVE);
    if lambda_min < -PSD_TOL * scale {
        warnings.push(format!("matrix is not PSD: smallest eigenvalue {lambda_min:.3e}"));
    }
    let mut powers: Vec<f64> = angles.iter().map(|&t| directed_power(r, grid, t)).collect();
    if powers.iter().any(|&p| p < 0.0) {
        warnings.push("negative powers clipped to zero".into());
        for p in &mut powers {
            *p = p.max(0.0);
        }
    }
    let top = powers.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::Degenerate("beampattern is zero at every angle; gain is undefined".into()));
    }
    let samples = angles
        .iter()
        .zip(powers)
        .map(|(&theta, power)| BeampatternSample {
            theta,
            power,
            gain_db: 10.0 * (power / top).log10(),
        })
        .collect();
    Ok(Beampattern { samples, warnings })
}

/// Pattern of each constituent. Fails if the constituents do not add up to
/// the composite pattern.
pub fn constituent_beampatterns(result: &DesignResult, grid: &ArrayGrid, angles: &[Angle]) -> Result<Vec<Beampattern>> {
    let parts: Vec<Beampattern> = result
        .constituents
        .iter()
        .map(|r| beampattern(r, grid, angles))
        .collect::<Result<_>>()?;
    let composite = beampattern(&result.composite, grid, angles)?;
    let top = composite.max_power();
    for (i, s) in composite.samples.iter().enumerate() {
        let sum: f64 = parts.iter().map(|p| p.samples[i].power).sum();
        if (sum - s.power).abs() > SUPERPOSITION_TOL * top {
            return Err(Error::Numeric(format!(
                "constituent powers do not add up at {}: {sum} vs {}",
                s.theta, s.power
            )));
        }
    }
    Ok(parts)
}

/// `|a_aᴴ R a_b| / √(a_aᴴ R a_a · a_bᴴ R a_b)`.
pub fn cross_corr(r: &HermitianMatrix, grid: &ArrayGrid, theta_a: Angle, theta_b: Angle) -> Result<f64> {
    check_dim(r, grid)?;
    let a = steering_vector(theta_a, grid);
    let b = steering_vector(theta_b, grid);
    let pa = r.quad_form(&a);
    let pb = r.quad_form(&b);
    if !(pa > 0.0 && pb > 0.0) {
        return Err(Error::Degenerate(format!(
            "zero directed power at {theta_a} or {theta_b}"
        )));
    }
    Ok(r.bilinear(&a, &b).norm() / pa.sqrt() / pb.sqrt())
}

/// Sweep maximum in dB minus the mean target power in dB.
pub fn target_gain_droop(r: &HermitianMatrix, grid: &ArrayGrid, targets: &[Angle], sweep_step: f64) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::validation("targets", "at least one target is required"));
    }
    let pattern = beampattern(r, grid, &sweep_angles(sweep_step)?)?;
    let top = pattern.max_power();
    let mut mean_db = 0.0;
    for &t in targets {
        let p = directed_power(r, grid, t);
        if !(p > 0.0) {
            return Err(Error::Degenerate(format!("zero power at target {t}")));
        }
        mean_db += 10.0 * p.log10();
    }
    mean_db /= targets.len() as f64;
    Ok(10.0 * top.log10() - mean_db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrPair {
    /// Zero-based target indices.
    pub l: usize,
    pub lp: usize,
    pub theta_l: Angle,
    pub theta_lp: Angle,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrReport {
    pub tag: String,
    pub pairs: Vec<CrossCorrPair>,
}

impl CrossCorrReport {
    /// All target pairs `l < l'`.
    pub fn new(tag: &str, r: &HermitianMatrix, grid: &ArrayGrid, targets: &[Angle]) -> Result<Self> {
        let mut pairs = Vec::new();
        for l in 0..targets.len() {
            for lp in l + 1..targets.len() {
                pairs.push(CrossCorrPair {
                    l,
                    lp,
                    theta_l: targets[l],
                    theta_lp: targets[lp],
                    value: cross_corr(r, grid, targets[l], targets[lp])?,
                });
            }
        }
        Ok(CrossCorrReport {
            tag: tag.to_string(),
            pairs,
        })
    }

    pub fn value(&self, l: usize, lp: usize) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| (p.l, p.lp) == (l.min(lp), l.max(lp)))
            .map(|p| p.value)
    }
}

/// The reported metrics of one design, computed on `α·R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub composite: Beampattern,
    pub constituents: Vec<Beampattern>,
    pub crosscorr: CrossCorrReport,
    pub droop_db: f64,
}

/// Beampatterns, cross-correlations and droop of `result` for `scenario`.
pub fn evaluate(tag: &str, result: &DesignResult, scenario: &Scenario, sweep_step: f64) -> Result<Evaluation> {
    let grid = &scenario.grid;
    let angles = sweep_angles(sweep_step)?;
    let targets: Vec<Angle> = scenario.targets.iter().map(|t| t.angle).collect();
    let mut scaled = result.clone();
    scaled.composite = result.composite.scaled(result.alpha);
    scaled.constituents = result.constituents.iter().map(|r| r.scaled(result.alpha)).collect();
    let constituents = constituent_beampatterns(&scaled, grid, &angles)?;
    Ok(Evaluation {
        composite: beampattern(&scaled.composite, grid, &angles)?,
        constituents,
        crosscorr: CrossCorrReport::new(tag, &scaled.composite, grid, &targets)?,
        droop_db: target_gain_droop(&scaled.composite, grid, &targets, sweep_step)?,
    })
}
