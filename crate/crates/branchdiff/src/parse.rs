//! Text formats for grids, vectors, matrices, counts and run configs.
//!
//! Grids are `start:stop:step`; vectors are comma separated; matrix rows
//! are separated by `;`. A config file holds `[section]` headers followed
//! by `key = value` lines, with `#` starting a comment.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn perr<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

fn number(s: &str) -> Result<f64> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => perr(format!("non-finite number '{t}'")),
        Err(_) => perr(format!("invalid number '{t}'")),
    }
}

/// Evenly spaced points `start, start + step, …` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    start: f64,
    stop: f64,
    step: f64,
    len: usize,
}

/// Grids longer than this are rejected.
pub const MAX_GRID_POINTS: usize = 10_000_000;

impl Grid {
    /// Validated grid; `stop` is included when it lies on the lattice up to
    /// rounding.
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return perr("grid bounds must be finite");
        }
        if !(step > 0.0) {
            return perr(format!("grid step must be positive, got {step}"));
        }
        if !(stop > start) {
            return perr(format!("grid must be increasing, got {start}:{stop}"));
        }
        let span = (stop - start) / step;
        if !(span < MAX_GRID_POINTS as f64) {
            return perr(format!("grid has more than {MAX_GRID_POINTS} points"));
        }
        let len = (span + 1e-9).floor() as usize + 1;
        Ok(Self {
            start,
            stop,
            step,
            len,
        })
    }

    /// First point.
    #[must_use]
    pub fn start(&self) -> f64 {
        self.start
    }

    /// Upper bound.
    #[must_use]
    pub fn stop(&self) -> f64 {
        self.stop
    }

    /// Spacing.
    #[must_use]
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of points.
    #[must_use]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; a valid grid has at least two points.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The points.
    #[must_use]
    pub fn points(&self) -> Vec<f64> {
        (0..self.len)
            .map(|k| self.start + k as f64 * self.step)
            .collect()
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl std::str::FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_grid(s)
    }
}

/// Parses `start:stop:step`.
pub fn parse_grid(s: &str) -> Result<Grid> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return perr(format!("grid '{s}' is not start:stop:step"));
    }
    Grid::new(number(parts[0])?, number(parts[1])?, number(parts[2])?)
}

/// Parses a comma-separated list of finite numbers.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return perr("empty vector");
    }
    s.split(',').map(number).collect()
}

/// Parses rows separated by `;`, entries by `,`.
pub fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_vector).collect::<Result<_>>()?;
    let ncols = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != ncols) {
        return perr(format!(
            "ragged matrix: row of length {} vs {ncols}",
            r.len()
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Parses comma-separated nonnegative integer counts.
pub fn parse_counts(s: &str) -> Result<Vec<u32>> {
    if s.trim().is_empty() {
        return perr("empty counts");
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<u32>()
                .or_else(|_| perr(format!("invalid count '{t}'")))
        })
        .collect()
}

/// Sectioned `key = value` configuration. Keys before the first header
/// belong to the unnamed section, which every lookup falls back to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    /// Parses config text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        sections.insert(current.clone(), BTreeMap::new());
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = lineno + 1;
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return perr(format!("line {n}: unterminated section header"));
                };
                let name = name.trim();
                if name.is_empty()
                    || !name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
                {
                    return perr(format!("line {n}: bad section name '{name}'"));
                }
                if sections.contains_key(name) {
                    return perr(format!("line {n}: duplicate section [{name}]"));
                }
                current = name.to_string();
                sections.insert(current.clone(), BTreeMap::new());
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return perr(format!("line {n}: expected key = value"));
            };
            let k = k.trim();
            if k.is_empty()
                || !k
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
            {
                return perr(format!("line {n}: bad key '{k}'"));
            }
            let sec = sections.get_mut(&current).expect("current section exists");
            if sec.insert(k.to_string(), v.trim().to_string()).is_some() {
                return perr(format!("line {n}: duplicate key '{k}'"));
            }
        }
        Ok(Self { sections })
    }

    /// Raw value of `key` in `section`, falling back to the unnamed section.
    #[must_use]
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .or_else(|| self.sections.get("").and_then(|s| s.get(key)))
            .map(String::as_str)
    }

    /// Value parsed as a finite float.
    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key).map(number).transpose()
    }

    /// Value parsed as an unsigned integer.
    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<u64>()
                    .or_else(|_| perr(format!("{section}.{key}: invalid integer '{v}'")))
            })
            .transpose()
    }

    /// Value parsed as a grid.
    pub fn get_grid(&self, section: &str, key: &str) -> Result<Option<Grid>> {
        self.get(section, key).map(parse_grid).transpose()
    }

    /// Value parsed as a vector.
    pub fn get_vector(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(section, key).map(parse_vector).transpose()
    }

    /// Value parsed as a matrix.
    pub fn get_matrix(&self, section: &str, key: &str) -> Result<Option<DMatrix<f64>>> {
        self.get(section, key).map(parse_matrix).transpose()
    }

    /// Names of the non-empty sections.
    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.sections
            .keys()
            .filter(|k| !k.is_empty())
            .map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_examples() {
        let g = parse_grid("0:8:0.01").unwrap();
        assert_eq!(g.len(), 801);
        let p = g.points();
        assert!((p[800] - 8.0).abs() < 1e-12);
        assert_eq!(parse_grid("0.5:6:0.5").unwrap().len(), 12);
        assert_eq!(parse_grid("0:1:0.3").unwrap().len(), 4);
        for bad in [
            "0:8",
            "1:0:0.1",
            "0:1:0",
            "0:1:-0.1",
            "a:1:0.1",
            "0:inf:1",
            "0:1:1e-12",
        ] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn vectors_and_matrices() {
        assert_eq!(parse_vector("0.75, 0.25").unwrap(), vec![0.75, 0.25]);
        assert!(parse_vector("").is_err());
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("nan").is_err());
        let m = parse_matrix("-0.1,0.1;0.2,-0.2").unwrap();
        assert_eq!(m[(1, 0)], 0.2);
        assert!(parse_matrix("1,2;3").is_err());
        assert_eq!(parse_counts("2, 0").unwrap(), vec![2, 0]);
        assert!(parse_counts("-1").is_err());
    }

    #[test]
    fn config_sections() {
        let text = "seed = 3\n# comment\n[feller]\nalpha = -0.5  # trailing\nx = 0:8:0.01\n\n[mc]\nreps=10\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.get_f64("feller", "alpha").unwrap(), Some(-0.5));
        assert_eq!(c.get_u64("mc", "seed").unwrap(), Some(3));
        assert_eq!(c.get_u64("mc", "reps").unwrap(), Some(10));
        assert_eq!(c.get_grid("feller", "x").unwrap().unwrap().len(), 801);
        assert_eq!(c.get("mc", "alpha"), None);
        assert_eq!(c.sections().collect::<Vec<_>>(), vec!["feller", "mc"]);
        assert!(c.get_f64("mc", "reps").is_ok());
        assert!(c.get_u64("feller", "alpha").is_err());
    }

    #[test]
    fn config_errors() {
        for bad in [
            "[feller\n",
            "[]\n",
            "alpha\n",
            "a = 1\na = 2\n",
            "[x]\n[x]\n",
            " = 3\n",
        ] {
            assert!(Config::parse(bad).is_err(), "{bad:?}");
        }
    }

    proptest! {
        #[test]
        fn grid_points_are_increasing(start in -100.0f64..100.0, span in 0.01f64..50.0, n in 1usize..500) {
            let step = span / n as f64;
            let g = Grid::new(start, start + span, step).unwrap();
            prop_assert!(g.len() == n + 1 || g.len() == n);
            let p = g.points();
            prop_assert!(p.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(*p.last().unwrap() <= start + span + 1e-9 * step.max(1.0));
        }

        #[test]
        fn vector_roundtrip(v in proptest::collection::vec(-1e6f64..1e6, 1..10)) {
            let s = v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
            prop_assert_eq!(parse_vector(&s).unwrap(), v);
        }

        #[test]
        fn config_never_panics(s in "\\PC*") {
            let _ = Config::parse(&s);
        }
    }
}
