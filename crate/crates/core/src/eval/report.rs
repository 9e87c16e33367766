//! Report rows and their CSV form.

use std::fmt::Write as _;

use crate::geom::Point2;

pub const REPORT_HEADER: &str = "variant,accuracy,precision,recall,bce,mse,rmse,bias_px,phybias_cm";

/// One evaluated variant. Metrics a variant does not produce are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub variant: String,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub bce: Option<f64>,
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub bias_px: Option<f64>,
    pub phybias_cm: Option<f64>,
    /// `(predicted, true)` landing points of the evaluated samples.
    pub residuals: Vec<(Point2, Point2)>,
}

impl EvalReport {
    pub fn new(variant: &str) -> Self {
        EvalReport {
            variant: variant.to_string(),
            ..EvalReport::default()
        }
    }

    /// Classification fields from `other`, keeping this row's regression
    /// fields.
    pub fn with_classification(mut self, other: &EvalReport) -> Self {
        self.accuracy = other.accuracy;
        self.precision = other.precision;
        self.recall = other.recall;
        self.bce = other.bce;
        self
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn reports_to_csv(rows: &[EvalReport]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.variant,
            cell(r.accuracy),
            cell(r.precision),
            cell(r.recall),
            cell(r.bce),
            cell(r.mse),
            cell(r.rmse),
            cell(r.bias_px),
            cell(r.phybias_cm)
        );
    }
    s
}

/// Per-sample residual table: `variant,sample,pred_x,pred_y,true_x,true_y`.
pub fn residuals_to_csv(rows: &[EvalReport]) -> String {
    let mut s = String::from("variant,sample,pred_x,pred_y,true_x,true_y\n");
    for r in rows {
        for (i, (p, t)) in r.residuals.iter().enumerate() {
            let _ = writeln!(s, "{},{i},{},{},{},{}", r.variant, p.x, p.y, t.x, t.y);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_leaves_absent_metrics_empty() {
        let mut r = EvalReport::new("CMN");
        r.accuracy = Some(52.5);
        r.bce = Some(0.25);
        let csv = reports_to_csv(&[r]);
        assert_eq!(csv, format!("{REPORT_HEADER}\nCMN,52.5,,,0.25,,,,\n"));
    }

    #[test]
    fn residual_rows_follow_samples() {
        let mut r = EvalReport::new("PMC");
        r.residuals = vec![(Point2::new(1.0, 2.0), Point2::new(3.0, 4.5))];
        assert!(residuals_to_csv(&[r]).ends_with("PMC,0,1,2,3,4.5\n"));
    }
}
