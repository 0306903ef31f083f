use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, GridSpec};
use crate::model::{self, ModelParams};

/// Default radius of the first (large) circle in the two-circle benchmark.
pub const DEFAULT_R1: f64 = 1.5;
/// Default seed of the random mixture.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// `sin(x)cos(y)cos(t)` at `t = 0`.
    Manufactured,
    /// `sin(x)cos(y)`.
    Trig,
    /// Two tanh-profile discs, centres `(π−0.7, π−0.6)` and `(π+1.65, π+1.6)`,
    /// second radius 0.8, interface width `1.2ε`.
    TwoCircles { r1: f64 },
    /// `0.25 + 0.4·U(−1, 1)` per node.
    Random { seed: u64 },
    Constant(f64),
}

impl InitialCondition {
    pub fn build(&self, grid: GridSpec, params: &ModelParams) -> Field {
        match *self {
            InitialCondition::Manufactured => model::manufactured_state(0.0, grid),
            InitialCondition::Trig => Field::from_fn(grid, |x, y| x.sin() * y.cos()),
            InitialCondition::TwoCircles { r1 } => {
                let pi = std::f64::consts::PI;
                let discs = [(pi - 0.7, pi - 0.6, r1), (pi + 1.65, pi + 1.6, 0.8)];
                let width = 1.2 * params.epsilon;
                Field::from_fn(grid, |x, y| {
                    1.0 - discs
                        .iter()
                        .map(|&(cx, cy, r)| (((x - cx).hypot(y - cy) - r) / width).tanh())
                        .sum::<f64>()
                })
            }
            InitialCondition::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = (0..grid.len())
                    .map(|_| 0.25 + 0.4 * rng.gen_range(-1.0..=1.0))
                    .collect();
                Field::from_values(grid, values).expect("finite")
            }
            InitialCondition::Constant(v) => Field::constant(grid, v),
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Manufactured => f.write_str("manufactured"),
            InitialCondition::Trig => f.write_str("trig"),
            InitialCondition::TwoCircles { r1 } => write!(f, "two-circles:r1={r1}"),
            InitialCondition::Random { seed } => write!(f, "random:seed={seed}"),
            InitialCondition::Constant(v) => write!(f, "constant:{v}"),
        }
    }
}

impl FromStr for InitialCondition {
    type Err = String;

    /// `manufactured | trig | two-circles[:r1=<x>] | random[:seed=<n>] | constant:<x>`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let (head, arg) = match t.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (t.as_str(), None),
        };
        let value = |key: &str| -> Result<Option<&str>, String> {
            match arg {
                None => Ok(None),
                Some(a) => a
                    .strip_prefix(key)
                    .and_then(|r| r.strip_prefix('='))
                    .map(Some)
                    .ok_or_else(|| format!("initial condition {s:?}: expected {key}=<value>")),
            }
        };
        let bad = |e: &dyn fmt::Display| format!("initial condition {s:?}: {e}");
        match head {
            "manufactured" => Ok(InitialCondition::Manufactured),
            "trig" => Ok(InitialCondition::Trig),
            "two-circles" | "two_circles" => {
                let r1 = match value("r1")? {
                    Some(v) => v.parse().map_err(|e| bad(&e))?,
                    None => DEFAULT_R1,
                };
                Ok(InitialCondition::TwoCircles { r1 })
            }
            "random" => {
                let seed = match value("seed")? {
                    Some(v) => v.parse().map_err(|e| bad(&e))?,
                    None => DEFAULT_SEED,
                };
                Ok(InitialCondition::Random { seed })
            }
            "constant" => arg
                .ok_or_else(|| format!("initial condition {s:?}: constant needs a value"))?
                .parse()
                .map(InitialCondition::Constant)
                .map_err(|e| bad(&e)),
            _ => Err(format!(
                "unknown initial condition {s:?} (expected manufactured, trig, two-circles, random or constant:<x>)"
            )),
        }
    }
}

/// Number of 4-connected components of `{φ > threshold}` on the torus.
pub fn count_components(phi: &Field, threshold: f64) -> usize {
    let grid = phi.grid();
    let n = grid.len();
    let inside: Vec<bool> = phi.values().iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..n {
        if !inside[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            for nb in grid.neighbours(k) {
                if inside[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}
