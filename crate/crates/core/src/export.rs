//! CSV writers for curves and simulation results.

use std::io::Write;

use crate::error::Result;
use crate::exponent::{eta_to_db, exponent_closed_form, has_closed_form, ExponentCurve};
use crate::feedback::{FeedbackExponentPoint, ProtocolParams};
use crate::models::FadingModel;
use crate::montecarlo::OutageEstimate;

/// `ln 2` in dB: converts energy per nat to energy per bit.
pub fn nat_to_bit_db() -> f64 {
    eta_to_db(std::f64::consts::LN_2)
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Columns `eta,eta_db,exponent,lambda_star`, then `closed_form,closed_minus_numeric`
/// when the model has one, then `eta_bit_db` with `per_bit`.
pub fn write_exponent_curve<W: Write>(
    out: W,
    model: &FadingModel,
    curve: &ExponentCurve,
    per_bit: bool,
) -> Result<()> {
    let closed = has_closed_form(model);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["eta", "eta_db", "exponent", "lambda_star"];
    if closed {
        header.extend(["closed_form", "closed_minus_numeric"]);
    }
    if per_bit {
        header.push("eta_bit_db");
    }
    w.write_record(&header)?;
    for p in &curve.points {
        let mut row = vec![fmt(p.eta), fmt(eta_to_db(p.eta)), fmt(p.exponent), fmt(p.lambda_star)];
        if closed {
            let c = exponent_closed_form(model, p.eta)?.exponent;
            row.push(fmt(c));
            row.push(fmt(c - p.exponent));
        }
        if per_bit {
            row.push(fmt(eta_to_db(p.eta) + nat_to_bit_db()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `eta,eta_db,exponent,regime,x_star,tau,g0`.
pub fn write_feedback_curve<W: Write>(
    out: W,
    rows: &[(ProtocolParams, FeedbackExponentPoint)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eta", "eta_db", "exponent", "regime", "x_star", "tau", "g0"])?;
    for (p, pt) in rows {
        w.write_record([
            fmt(pt.eta),
            fmt(eta_to_db(pt.eta)),
            fmt(pt.exponent),
            pt.regime.as_str().to_string(),
            fmt_opt(pt.x_star),
            fmt(p.tau()),
            fmt(p.g0()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `eta,eta_db,tau_opt,exponent` for the on-off envelope.
pub fn write_envelope<W: Write>(out: W, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eta", "eta_db", "tau_opt", "exponent"])?;
    for &(eta, tau, e) in rows {
        w.write_record([fmt(eta), fmt(eta_to_db(eta)), fmt(tau), fmt(e)])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `K,outage,std_err,log_outage,flagged`.
pub fn write_outage<W: Write>(out: W, estimates: &[OutageEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["K", "outage", "std_err", "log_outage", "flagged"])?;
    for e in estimates {
        w.write_record([
            e.k.to_string(),
            fmt(e.outage_prob),
            fmt(e.std_err),
            fmt(e.log_prob),
            e.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponent::{exponent_curve, log_grid};

    #[test]
    fn curve_csv_round_trips() {
        let m = FadingModel::rayleigh();
        let c = exponent_curve(&m, &log_grid(1.0, 10.0, 5)).unwrap();
        let mut buf = Vec::new();
        write_exponent_curve(&mut buf, &m, &c, true).unwrap();
        let mut r = csv::Reader::from_reader(buf.as_slice());
        let h: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(
            h,
            ["eta", "eta_db", "exponent", "lambda_star", "closed_form", "closed_minus_numeric", "eta_bit_db"]
        );
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 5);
        for (row, p) in rows.iter().zip(&c.points) {
            let e: f64 = row[2].parse().unwrap();
            assert_eq!(e, p.exponent);
            let d: f64 = row[5].parse().unwrap();
            assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn correlated_curve_has_no_closed_form_columns() {
        let corr = crate::mimo::SpatialCorrelation::new(1, 2, crate::linalg::identity(2)).unwrap();
        let m = FadingModel::mimo_correlated(crate::mimo::CovarianceSpec::white(corr).unwrap());
        let c = exponent_curve(&m, &[1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_exponent_curve(&mut buf, &m, &c, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eta,eta_db,exponent,lambda_star\n"));
    }
}
