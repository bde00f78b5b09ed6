// Copyright 2026 The Fasco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Q-error and workload-level summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `max(est/actual, actual/est)`; both inputs must be strictly positive.
pub fn q_error(est: f64, actual: f64) -> Result<f64> {
    if !(est > 0.0 && actual > 0.0) || !est.is_finite() || !actual.is_finite() {
        return Err(Error::InvalidInput(format!(
            "q-error needs positive finite inputs, got est={est}, actual={actual}"
        )));
    }
    Ok((est / actual).max(actual / est))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(k/100 · n)`.
pub fn nearest_rank(sorted: &[f64], k: f64) -> f64 {
    let n = sorted.len();
    let rank = ((k / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn summarize(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::InvalidInput(
            "cannot summarize an empty error list".into(),
        ));
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite() || **e < 1.0) {
        return Err(Error::InvalidInput(format!(
            "q-errors must be finite and >= 1, got {bad}"
        )));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(ErrorSummary {
        n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        p50: nearest_rank(&sorted, 50.0),
        p90: nearest_rank(&sorted, 90.0),
        p95: nearest_rank(&sorted, 95.0),
        p99: nearest_rank(&sorted, 99.0),
        max: sorted[n - 1],
    })
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub plan_id: usize,
    pub estimated_ms: f64,
    pub actual_ms: f64,
    pub q_error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_error_examples() {
        assert_eq!(q_error(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(q_error(2.0, 8.0).unwrap(), 4.0);
        assert_eq!(q_error(2.0, 8.0).unwrap(), q_error(8.0, 2.0).unwrap());
        assert!(q_error(0.0, 1.0).is_err());
        assert!(q_error(1.0, -3.0).is_err());
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.max, 4.0);
        assert_eq!(s.n, 4);

        let one = summarize(&[3.5]).unwrap();
        assert_eq!([one.p50, one.p90, one.p95, one.p99, one.max], [3.5; 5]);

        let hundred: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let s = summarize(&hundred).unwrap();
        assert_eq!(s.p95, 95.0);
        assert_eq!(s.p50, 50.0);
        assert_eq!(s.p99, 99.0);
    }

    #[test]
    fn summary_rejects_bad_input() {
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[0.5]).is_err());
        assert!(summarize(&[f64::NAN]).is_err());
    }
}
