//! Log-spaced radius ladders, written `log:<rmin>:<rmax>:<points_per_decade>`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POINTS_PER_DECADE: u32 = 24;

/// Geometric radius sequence from `r_min` to `r_max`, both included.
/// The number of intervals is `ceil(points_per_decade · log10(r_max/r_min))`,
/// so the density is never below the requested one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub r_min: f64,
    pub r_max: f64,
    pub points_per_decade: u32,
}

impl Ladder {
    pub fn new(r_min: f64, r_max: f64, points_per_decade: u32) -> Result<Self> {
        let l = Self {
            r_min,
            r_max,
            points_per_decade,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min.is_finite() && self.r_min > 0.0) {
            return Err(Error::Config(format!("ladder r_min = {} must be positive", self.r_min)));
        }
        if !(self.r_max.is_finite() && self.r_max >= self.r_min) {
            return Err(Error::Config(format!(
                "ladder r_max = {} must be at least r_min = {}",
                self.r_max, self.r_min
            )));
        }
        if self.points_per_decade == 0 {
            return Err(Error::Config("ladder needs at least one point per decade".into()));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        let decades = (self.r_max / self.r_min).log10();
        let intervals = (self.points_per_decade as f64 * decades - 1e-9).ceil().max(0.0) as usize;
        if intervals == 0 {
            return vec![self.r_min];
        }
        let (a, b) = (self.r_min.ln(), self.r_max.ln());
        let mut out: Vec<f64> = (0..=intervals)
            .map(|i| (a + (b - a) * i as f64 / intervals as f64).exp())
            .collect();
        out[0] = self.r_min;
        out[intervals] = self.r_max;
        out
    }

    /// Same ladder with its lower end raised to `floor`.
    pub fn clipped(&self, floor: f64) -> Result<Self> {
        Self::new(self.r_min.max(floor), self.r_max, self.points_per_decade)
    }
}

impl FromStr for Ladder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::Config(format!("ladder `{s}` does not match log:<rmin>:<rmax>:<ppd>"));
        if parts.len() != 4 || parts[0] != "log" {
            return Err(bad());
        }
        let r_min: f64 = parts[1].parse().map_err(|_| bad())?;
        let r_max: f64 = parts[2].parse().map_err(|_| bad())?;
        let ppd: u32 = parts[3].parse().map_err(|_| bad())?;
        Self::new(r_min, r_max, ppd)
    }
}

impl fmt::Display for Ladder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "log:{}:{}:{}", self.r_min, self.r_max, self.points_per_decade)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_endpoints() {
        let l: Ladder = "log:0.02:0.5:24".parse().unwrap();
        let r = l.radii();
        assert_eq!(r[0], 0.02);
        assert_eq!(*r.last().unwrap(), 0.5);
        // 24·log10(25) = 33.55 → 34 intervals
        assert_eq!(r.len(), 35);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        let ratio = r[1] / r[0];
        assert!(r.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
        assert_eq!(l.to_string().parse::<Ladder>().unwrap(), l);
    }

    #[test]
    fn exact_decades() {
        let r = Ladder::new(0.01, 1.0, 24).unwrap().radii();
        assert_eq!(r.len(), 49);
        assert!((r[24] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn malformed() {
        for s in ["lin:0.1:1:10", "log:0.1:1", "log:a:1:2", "log:1:0.5:10", "log:0.1:1:0"] {
            assert!(s.parse::<Ladder>().is_err(), "{s}");
        }
    }

    #[test]
    fn degenerate_single_point() {
        assert_eq!(Ladder::new(0.3, 0.3, 24).unwrap().radii(), vec![0.3]);
    }
}
