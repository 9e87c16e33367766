//! Bookkeeping for the acceptance suite: one verdict per criterion, each
//! printed as a single pass/fail line.

use std::fmt;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} [{:.1}s]",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.seconds
        )
    }
}

/// Runs `check`, timing it. A `budget` in seconds, when given, is part of
/// the verdict.
pub fn judge<F>(id: u32, title: &'static str, budget: Option<f64>, check: F) -> Verdict
where
    F: FnOnce() -> (bool, String),
{
    let start = Instant::now();
    let (mut pass, mut detail) = check();
    let seconds = start.elapsed().as_secs_f64();
    if let Some(limit) = budget {
        if seconds > limit {
            pass = false;
            detail.push_str(&format!("; over the {limit:.0}s budget"));
        }
    }
    Verdict {
        id,
        title,
        pass,
        detail,
        seconds,
    }
}

/// `count` of `total` trials satisfied, against a `need` threshold.
pub fn tally(count: usize, total: usize, need: usize) -> (bool, String) {
    (count >= need, format!("{count}/{total} (need {need})"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_line_format() {
        let v = judge(3, "formulas", None, || (true, "ok".into()));
        let line = v.to_string();
        assert!(line.starts_with("criterion  3 PASS formulas: ok ["));
        assert!(v.pass);
    }

    #[test]
    fn budget_overrun_fails() {
        let v = judge(1, "slow", Some(0.0), || {
            std::thread::sleep(std::time::Duration::from_millis(5));
            (true, "done".into())
        });
        assert!(!v.pass);
        assert!(v.detail.contains("budget"));
    }

    #[test]
    fn tally_threshold() {
        assert_eq!(tally(3, 4, 3), (true, "3/4 (need 3)".to_string()));
        assert!(!tally(2, 4, 3).0);
    }
}
