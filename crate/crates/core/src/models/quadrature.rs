use crate::error::{AbcError, Result};

/// Composite Simpson rule on `[a, b]` with `intervals` (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = (intervals.max(2) + 1) & !1;
    let step = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * step);
    }
    sum * step / 3.0
}

/// An evenly spaced parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo < hi) || nodes < 3 {
            return Err(AbcError::InvalidInput(format!("bad grid [{lo}, {hi}] with {nodes} nodes")));
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.nodes).map(|i| self.lo + i as f64 * step).collect()
    }

    pub fn halved(&self) -> Self {
        Self { nodes: 2 * self.nodes - 1, ..*self }
    }
}

/// A normalised density tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    pub grid: GridSpec,
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GriddedDensity {
    /// Normalise unnormalised values by the trapezoid rule.
    pub fn from_unnormalised(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let step = grid.step();
        let mut cumulative = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * step;
            cumulative.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(AbcError::OracleResolution("density has no mass on the grid".into()));
        }
        let density = values.iter().map(|v| v / acc).collect();
        let cumulative = cumulative.iter().map(|c| c / acc).collect();
        Ok(Self { theta: grid.points(), grid, density, cumulative })
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let step = self.grid.step();
        let vals: Vec<f64> = self.theta.iter().zip(&self.density).map(|(t, d)| f(*t) * d).collect();
        vals.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|t| t)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.integrate(|t| (t - m) * (t - m)).sqrt()
    }

    /// Distribution function, linear between grid nodes.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.grid.lo {
            return 0.0;
        }
        if x >= self.grid.hi {
            return 1.0;
        }
        let pos = (x - self.grid.lo) / self.grid.step();
        let i = (pos.floor() as usize).min(self.theta.len() - 2);
        let frac = pos - i as f64;
        self.cumulative[i] + frac * (self.cumulative[i + 1] - self.cumulative[i])
    }

    /// Density at `x`, linear between nodes, zero off the grid.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.grid.lo || x > self.grid.hi {
            return 0.0;
        }
        let pos = (x - self.grid.lo) / self.grid.step();
        let i = (pos.floor() as usize).min(self.theta.len() - 2);
        let frac = pos - i as f64;
        self.density[i] + frac * (self.density[i + 1] - self.density[i])
    }

    pub fn max_abs_difference(&self, other: impl Fn(f64) -> f64) -> f64 {
        self.theta.iter().zip(&self.density).map(|(t, d)| (d - other(*t)).abs()).fold(0.0, f64::max)
    }

    /// Fail unless the grid resolves the density: at least `per_sd` steps per
    /// standard deviation and negligible mass at both ends.
    pub fn check_resolution(&self, per_sd: f64) -> Result<()> {
        let sd = self.sd();
        if self.grid.step() * per_sd > sd {
            return Err(AbcError::OracleResolution(format!(
                "grid step {} is coarse for posterior sd {sd}",
                self.grid.step()
            )));
        }
        let peak = self.density.iter().cloned().fold(0.0, f64::max);
        let edge = self.density[0].max(*self.density.last().expect("nonempty"));
        if edge > 1e-9 * peak {
            return Err(AbcError::OracleResolution("grid truncates the density".into()));
        }
        Ok(())
    }

    /// Range where the density exceeds `rel` times its peak.
    pub(crate) fn support(&self, rel: f64) -> (f64, f64) {
        let peak = self.density.iter().cloned().fold(0.0, f64::max);
        let idx: Vec<usize> = (0..self.density.len()).filter(|&i| self.density[i] > rel * peak).collect();
        let lo = idx.first().map_or(0, |&i| i.saturating_sub(1));
        let hi = idx.last().map_or(self.density.len() - 1, |&i| (i + 1).min(self.density.len() - 1));
        (self.theta[lo], self.theta[hi])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 2);
        assert!((v - (4.0 - 0.25 - 3.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn gridded_normal_moments() {
        let grid = GridSpec::new(-10.0, 10.0, 2001).unwrap();
        let values = grid.points().iter().map(|x| (-0.5 * x * x).exp()).collect();
        let g = GriddedDensity::from_unnormalised(grid, values).unwrap();
        assert!(g.mean().abs() < 1e-12);
        assert!((g.sd() - 1.0).abs() < 1e-4);
        assert!((g.cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((g.cdf(1.96) - 0.975).abs() < 1e-4);
        g.check_resolution(20.0).unwrap();
        let coarse = GridSpec::new(-3.0, 3.0, 5).unwrap();
        let values = coarse.points().iter().map(|x| (-0.5 * x * x).exp()).collect();
        assert!(GriddedDensity::from_unnormalised(coarse, values).unwrap().check_resolution(20.0).is_err());
    }
}
