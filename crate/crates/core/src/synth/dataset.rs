//! Plain-text dataset files.
//!
//! ```text
//! PIDTC-DATA v1 count=N
//!
//! RECORD 0
//! SEED 1234
//! LAUNCH x y z vx vy vz drag fps
//! TRAJ
//! 0 x y
//! ...            (25 lines)
//! LAND x y
//! PRIOR x1 y1 x2 y2
//! LABEL 1
//! ```
//!
//! `LAUNCH`, `PRIOR` and `LABEL` are optional. Reals use the shortest
//! representation that parses back to the same value.

use std::fmt::Write as _;
use std::path::Path;

use super::LaunchParams;
use crate::error::{Error, Result};
use crate::geom::{Point2, PriorPoints};
use crate::model::{TrajectorySample, TRAJ_LEN};

pub const DATA_MAGIC: &str = "PIDTC-DATA v1";

/// A sample plus how it was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub sample: TrajectorySample,
    pub seed: u64,
    pub launch: Option<LaunchParams>,
}

pub fn dataset_to_text(records: &[DatasetRecord]) -> String {
    let mut s = format!("{DATA_MAGIC} count={}\n", records.len());
    for (i, r) in records.iter().enumerate() {
        let smp = &r.sample;
        let _ = write!(s, "\nRECORD {i}\nSEED {}\n", r.seed);
        if let Some(l) = &r.launch {
            let [x, y, z] = l.position;
            let [vx, vy, vz] = l.velocity;
            let _ = writeln!(
                s,
                "LAUNCH {x:?} {y:?} {z:?} {vx:?} {vy:?} {vz:?} {:?} {:?}",
                l.drag, l.frame_rate
            );
        }
        s.push_str("TRAJ\n");
        for (k, p) in smp.points.iter().enumerate() {
            let _ = writeln!(s, "{k} {:?} {:?}", p.x, p.y);
        }
        let _ = writeln!(s, "LAND {:?} {:?}", smp.landing.x, smp.landing.y);
        if let Some(pp) = &smp.prior {
            let _ = writeln!(s, "PRIOR {:?} {:?} {:?} {:?}", pp.p1.x, pp.p1.y, pp.p2.x, pp.p2.y);
        }
        if let Some(l) = smp.label {
            let _ = writeln!(s, "LABEL {l}");
        }
    }
    s
}

struct Lines<'a> {
    it: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    /// Next non-blank line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.it.by_ref() {
            if !l.trim().is_empty() {
                return Some((i + 1, l.trim()));
            }
        }
        None
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        while let Some((_, l)) = self.it.peek() {
            if l.trim().is_empty() {
                self.it.next();
            } else {
                return l.split_whitespace().next();
            }
        }
        None
    }

    fn expect(&mut self, keyword: &str, last_line: usize) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self
            .next()
            .ok_or_else(|| Error::parse(last_line + 1, format!("expected {keyword}, found end of file")))?;
        let mut parts = l.split_whitespace();
        let head = parts.next().unwrap_or("");
        if head != keyword {
            return Err(Error::parse(n, format!("expected {keyword}, found {head:?}")));
        }
        Ok((n, parts.collect()))
    }
}

fn reals<const N: usize>(line: usize, fields: &[&str]) -> Result<[f64; N]> {
    if fields.len() != N {
        return Err(Error::parse(line, format!("expected {N} values, found {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(line, format!("bad number {f:?}")))?;
    }
    Ok(out)
}

pub fn dataset_from_text(text: &str) -> Result<Vec<DatasetRecord>> {
    let mut lines = Lines {
        it: text.lines().enumerate().peekable(),
    };
    let (n, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let count = header
        .strip_prefix(DATA_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("count="))
        .and_then(|c| c.parse::<usize>().ok())
        .ok_or_else(|| Error::parse(n, format!("expected '{DATA_MAGIC} count=N' header")))?;
    let mut records = Vec::with_capacity(count);
    let mut at = n;
    for i in 0..count {
        let (n, f) = lines.expect("RECORD", at)?;
        if f != [i.to_string().as_str()] {
            return Err(Error::parse(n, format!("expected record index {i}")));
        }
        let (n, f) = lines.expect("SEED", n)?;
        let seed = match f.as_slice() {
            [s] => s.parse::<u64>().map_err(|_| Error::parse(n, format!("bad seed {s:?}")))?,
            _ => return Err(Error::parse(n, "SEED takes one value")),
        };
        at = n;
        let mut launch = None;
        if lines.peek_keyword() == Some("LAUNCH") {
            let (n, f) = lines.expect("LAUNCH", at)?;
            let v = reals::<8>(n, &f)?;
            launch = Some(LaunchParams {
                position: [v[0], v[1], v[2]],
                velocity: [v[3], v[4], v[5]],
                drag: v[6],
                frame_rate: v[7],
            });
            at = n;
        }
        let (n, f) = lines.expect("TRAJ", at)?;
        if !f.is_empty() {
            return Err(Error::parse(n, "TRAJ takes no values"));
        }
        at = n;
        let mut points = Vec::with_capacity(TRAJ_LEN);
        for k in 0..TRAJ_LEN {
            let (n, l) = lines
                .next()
                .ok_or_else(|| Error::parse(at + 1, "trajectory truncated"))?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.first() != Some(&k.to_string().as_str()) {
                return Err(Error::parse(n, format!("expected trajectory frame {k}")));
            }
            let [x, y] = reals::<2>(n, &f[1..])?;
            points.push(Point2::new(x, y));
            at = n;
        }
        let (n, f) = lines.expect("LAND", at)?;
        let [lx, ly] = reals::<2>(n, &f)?;
        at = n;
        let mut sample = TrajectorySample::new(points, Point2::new(lx, ly))?;
        if lines.peek_keyword() == Some("PRIOR") {
            let (n, f) = lines.expect("PRIOR", at)?;
            let [a, b, c, d] = reals::<4>(n, &f)?;
            sample.prior = Some(PriorPoints::new(Point2::new(a, b), Point2::new(c, d)));
            at = n;
        }
        if lines.peek_keyword() == Some("LABEL") {
            let (n, f) = lines.expect("LABEL", at)?;
            sample.label = match f.as_slice() {
                ["0"] => Some(0),
                ["1"] => Some(1),
                _ => return Err(Error::parse(n, format!("label must be 0 or 1, found {f:?}"))),
            };
            at = n;
        }
        records.push(DatasetRecord { sample, seed, launch });
    }
    if let Some((n, l)) = lines.next() {
        return Err(Error::parse(n, format!("unexpected content after {count} records: {l:?}")));
    }
    Ok(records)
}

pub fn write_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_text(records))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    dataset_from_text(&std::fs::read_to_string(path)?)
}
