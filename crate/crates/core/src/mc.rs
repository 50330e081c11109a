//! Replication driver and running moments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Replications handled by one work item; fixes the reduction tree.
const CHUNK: u64 = 2048;

/// Running mean and second central moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        if delta != 0.0 {
            self.mean += delta * other.count as f64 / n;
        }
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            mean: self.mean,
            half_width: Z95 * self.std_error(),
            replications: self.count,
        }
    }
}

/// Sample mean with a 95% normal-approximation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    pub replications: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            half_width: 0.0,
            replications: 1,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.half_width == 0.0
    }

    pub fn std_error(&self) -> f64 {
        self.half_width / Z95
    }
}

/// Runs `reps` replications, each writing `width` values, and returns the
/// per-column moments. The result is independent of the rayon pool size.
pub fn replicate<F>(reps: u64, width: usize, f: F) -> Vec<Moments>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let partials: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); width];
            let mut row = vec![0.0; width];
            let end = ((c + 1) * CHUNK).min(reps);
            for rep in c * CHUNK..end {
                row.iter_mut().for_each(|v| *v = 0.0);
                f(rep, &mut row);
                for (m, &x) in acc.iter_mut().zip(&row) {
                    m.push(x);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); width];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..5000).map(|i| ((i * 37) % 101) as f64 * 0.01).collect();
        let mut seq = Moments::default();
        xs.iter().for_each(|&x| seq.push(x));
        let m = replicate(xs.len() as u64, 1, |rep, row| row[0] = xs[rep as usize]);
        assert!((m[0].mean - seq.mean).abs() < 1e-12);
        assert!((m[0].variance() - seq.variance()).abs() < 1e-12);
        assert_eq!(m[0].count, 5000);
    }

    #[test]
    fn constant_columns_are_exact() {
        let m = replicate(10_000, 2, |_, row| {
            row[0] = 2.0;
            row[1] = 0.1;
        });
        assert_eq!(m[0].mean, 2.0);
        assert!(m[0].estimate().is_exact());
        assert_eq!(m[1].mean, 0.1);
        assert_eq!(m[1].variance(), 0.0);
    }
}
