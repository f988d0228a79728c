use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use wideband_outage::exponent::{exponent_curve, linear_grid, log_grid};
use wideband_outage::export;
use wideband_outage::feedback::{conjecture_scan, default_scan_grids, general_exponent, onoff_envelope};
use wideband_outage::mimo::{shape_covariance, CorrelationDescriptor, ShapingOptions};
use wideband_outage::models::ModelDescriptor;
use wideband_outage::montecarlo::{estimate_outage, summarize, SimConfigDescriptor};
use wideband_outage::{Error, ProtocolParams};

use crate::output::{write_atomic, write_json};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaGrid {
    pub eta_min: f64,
    pub eta_max: f64,
    pub points: usize,
    /// Linear instead of logarithmic spacing.
    #[serde(default)]
    pub linear: bool,
}

impl EtaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.eta_min > 0.0 && self.eta_max > self.eta_min && self.eta_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need eta_max > eta_min > 0, got [{}, {}]",
                self.eta_min, self.eta_max
            ))
            .into());
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("points must be >= 2".into()).into());
        }
        Ok(if self.linear {
            linear_grid(self.eta_min, self.eta_max, self.points)
        } else {
            log_grid(self.eta_min, self.eta_max, self.points)
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentRun {
    pub model: ModelDescriptor,
    pub grid: EtaGrid,
    #[serde(default)]
    pub per_bit: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackRun {
    pub tau: Vec<f64>,
    pub g0: Vec<f64>,
    pub grid: EtaGrid,
    /// Energies per nat at which to run the conjecture scan; empty skips it.
    #[serde(default)]
    pub conjecture_eta: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulateRun {
    pub config: SimConfigDescriptor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShapeRun {
    pub correlation: CorrelationDescriptor,
    pub eta: f64,
    pub starts: usize,
    pub seed: u64,
    #[serde(default)]
    pub verbose: bool,
}

/// Fully resolved command; a manifest stores one of these for replay.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Run {
    Exponent(ExponentRun),
    Feedback(FeedbackRun),
    Simulate(SimulateRun),
    Shape(ShapeRun),
}

pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    /// Failure raised after some outputs were already written.
    pub deferred: Option<anyhow::Error>,
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Exponent(_) => "exponent",
            Run::Feedback(_) => "feedback",
            Run::Simulate(_) => "simulate",
            Run::Shape(_) => "shape",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Run::Simulate(s) => Some(s.config.seed),
            Run::Shape(s) => Some(s.seed),
            _ => None,
        }
    }

    /// Whether `--out` names a directory.
    pub fn writes_directory(&self) -> bool {
        matches!(self, Run::Feedback(_) | Run::Simulate(_))
    }

    pub fn execute(&self, out: &Path) -> Result<Outcome> {
        match self {
            Run::Exponent(r) => run_exponent(r, out),
            Run::Feedback(r) => run_feedback(r, out),
            Run::Simulate(r) => run_simulate(r, out),
            Run::Shape(r) => run_shape(r, out),
        }
    }
}

fn done(outputs: Vec<PathBuf>) -> Result<Outcome> {
    Ok(Outcome {
        outputs,
        deferred: None,
    })
}

fn run_exponent(r: &ExponentRun, out: &Path) -> Result<Outcome> {
    let model = r.model.build()?;
    let curve = exponent_curve(&model, &r.grid.values()?)?;
    if !curve.dropped.is_empty() {
        eprintln!(
            "skipped {} grid point(s) below eta_bar = {:.6}",
            curve.dropped.len(),
            curve.eta_bar
        );
    }
    write_atomic(out, |w| {
        export::write_exponent_curve(w, &model, &curve, r.per_bit)?;
        Ok(())
    })?;
    println!(
        "{}: {} points, eta_bar = {:.6}",
        model.name(),
        curve.points.len(),
        curve.eta_bar
    );
    done(vec![out.to_path_buf()])
}

fn run_feedback(r: &FeedbackRun, out: &Path) -> Result<Outcome> {
    if r.tau.is_empty() || r.g0.is_empty() {
        return Err(Error::InvalidParameter("--tau and --g0 lists must be non-empty".into()).into());
    }
    let grid = r.grid.values()?;
    let mut rows = Vec::new();
    for &tau in &r.tau {
        for &g0 in &r.g0 {
            let p = ProtocolParams::new(tau, g0)?;
            let mut kept = 0;
            let mut eta_bar = None;
            for &eta in &grid {
                match general_exponent(&p, eta) {
                    Ok(pt) => {
                        rows.push((p, pt));
                        kept += 1;
                    }
                    Err(Error::BelowMinimumEnergy { eta_bar: b, .. }) => eta_bar = Some(b),
                    Err(e) => return Err(e.into()),
                }
            }
            if kept == 0 {
                return Err(Error::BelowMinimumEnergy {
                    eta: r.grid.eta_max,
                    eta_bar: eta_bar.unwrap_or(f64::NAN),
                }
                .into());
            }
        }
    }
    let envelope = grid
        .iter()
        .map(|&eta| onoff_envelope(eta).map(|(t, e)| (eta, t, e)))
        .collect::<wideband_outage::Result<Vec<_>>>()?;

    let curves_path = out.join("curves.csv");
    let envelope_path = out.join("envelope.csv");
    write_atomic(&curves_path, |w| Ok(export::write_feedback_curve(w, &rows)?))?;
    write_atomic(&envelope_path, |w| Ok(export::write_envelope(w, &envelope)?))?;
    let mut outputs = vec![curves_path, envelope_path];

    if !r.conjecture_eta.is_empty() {
        let reports = r
            .conjecture_eta
            .iter()
            .map(|&eta| {
                let (taus, g0s) = default_scan_grids(eta);
                conjecture_scan(eta, &taus, &g0s)
            })
            .collect::<wideband_outage::Result<Vec<_>>>()?;
        for rep in &reports {
            println!(
                "eta = {}: best tau = {:.4}, g0 = {:.1}, exponent = {:.6}, supports conjecture: {}",
                rep.eta,
                rep.best.tau(),
                rep.best.g0(),
                rep.best_exponent,
                rep.supports_conjecture
            );
        }
        let path = out.join("conjecture.json");
        write_json(&path, &reports)?;
        outputs.push(path);
    }
    println!("{} curve(s), {} rows", r.tau.len() * r.g0.len(), rows.len());
    done(outputs)
}

fn run_simulate(r: &SimulateRun, out: &Path) -> Result<Outcome> {
    let config = r.config.build()?;
    let estimates = estimate_outage(&config)?;
    let csv_path = out.join("outage.csv");
    write_atomic(&csv_path, |w| Ok(export::write_outage(w, &estimates)?))?;
    let mut outputs = vec![csv_path];
    match summarize(&config, &estimates) {
        Ok(summary) => {
            let path = out.join("summary.json");
            write_json(&path, &summary)?;
            outputs.push(path);
            println!(
                "slope = {:.6}, analytical = {:.6}, ratio = {:.4}, r^2 = {:.4}",
                summary.slope, summary.analytical_exponent, summary.ratio, summary.r_squared
            );
            if let Some(o) = summary.oracle_slope {
                println!("exact finite-K slope on the same grid = {o:.6}");
            }
            done(outputs)
        }
        Err(e @ Error::InsufficientData { .. }) => Ok(Outcome {
            outputs,
            deferred: Some(e.into()),
        }),
        Err(e) => Err(e.into()),
    }
}

fn run_shape(r: &ShapeRun, out: &Path) -> Result<Outcome> {
    let corr = r.correlation.build()?;
    let opts = ShapingOptions {
        starts: r.starts,
        seed: r.seed,
        ..ShapingOptions::default()
    };
    let result = shape_covariance(&corr, r.eta, &opts)?;
    let mut value = serde_json::to_value(&result)?;
    let obj = value.as_object_mut().expect("struct serializes to an object");
    if !r.verbose {
        let finals: Vec<f64> = result.trace.iter().map(|t| t.final_objective).collect();
        obj.remove("trace");
        obj.insert("start_values".into(), serde_json::to_value(finals)?);
    }
    write_json(out, &value)?;
    println!(
        "exponent = {:.6} (white input {:.6}), eta_bar = {:.6}, best start {}",
        result.exponent, result.white_exponent, result.eta_bar, result.best_start
    );
    done(vec![out.to_path_buf()])
}
