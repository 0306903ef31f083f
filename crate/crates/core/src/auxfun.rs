//! Auxiliary-function families. A convex family `c` defines `r` through
//! `c(r) = F(φ) + A₁`; a monomial family `g(r) = r^{2k+1}` defines it through
//! `r·g(r) = F(φ) + A₁`. Both supply `P = dr/dφ` for the linearised schemes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::Field;
use crate::model::{dpotential, potential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuxError {
    #[error("{family}: level {level} at node {node} is outside the range of the auxiliary function")]
    Domain {
        family: &'static str,
        node: usize,
        level: f64,
    },
    #[error("{family}: derivative vanishes at node {node} (level {level})")]
    Singularity {
        family: &'static str,
        node: usize,
        level: f64,
    },
    #[error("{family}: scalar level {level} is outside the range of the auxiliary function")]
    ScalarDomain { family: &'static str, level: f64 },
    #[error("{family}: derivative vanishes at scalar level {level}")]
    ScalarSingularity { family: &'static str, level: f64 },
    #[error("unknown auxiliary function {0:?} (expected quadratic, softplus, logsquare, exponential or monomial:k=<int>)")]
    UnknownName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvexFamily {
    /// `c = r²`, the classical quadratization.
    Quadratic,
    /// `c = ln(1 + eʳ)`.
    Softplus,
    /// `c = (ln r)²` on the branch `r ≥ 1`.
    Logsquare,
    /// `c = eʳ`.
    Exponential,
}

impl ConvexFamily {
    pub const ALL: [ConvexFamily; 4] = [
        ConvexFamily::Quadratic,
        ConvexFamily::Softplus,
        ConvexFamily::Logsquare,
        ConvexFamily::Exponential,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConvexFamily::Quadratic => "quadratic",
            ConvexFamily::Softplus => "softplus",
            ConvexFamily::Logsquare => "logsquare",
            ConvexFamily::Exponential => "exponential",
        }
    }

    /// Global Lipschitz constant of `c′` on the branch, when one exists.
    pub fn intrinsic_lipschitz(&self) -> Option<f64> {
        match self {
            ConvexFamily::Quadratic => Some(2.0),
            ConvexFamily::Softplus => Some(0.25),
            // sup |c″| = 2 is attained at r = 1; c″ < 0 past r = e, where the
            // bound still holds but convexity does not.
            ConvexFamily::Logsquare => Some(2.0),
            ConvexFamily::Exponential => None,
        }
    }
}

/// A convex auxiliary function together with the `L` used by the scheme.
/// `lipschitz` need not equal the family's intrinsic constant; for locally
/// smooth families it is whatever the caller is willing to assume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexAux {
    pub family: ConvexFamily,
    pub lipschitz: f64,
}

/// Looks up a convex family by name and pairs it with `L = 2`.
pub fn builtin_convex(name: &str) -> Result<ConvexAux, AuxError> {
    let family = match name.trim().to_ascii_lowercase().as_str() {
        "quadratic" => ConvexFamily::Quadratic,
        "softplus" => ConvexFamily::Softplus,
        "logsquare" => ConvexFamily::Logsquare,
        "exponential" => ConvexFamily::Exponential,
        _ => return Err(AuxError::UnknownName(name.to_string())),
    };
    Ok(ConvexAux::new(family))
}

impl ConvexAux {
    pub fn new(family: ConvexFamily) -> Self {
        Self {
            family,
            lipschitz: 2.0,
        }
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    pub fn name(&self) -> &'static str {
        self.family.name()
    }

    /// Left end of the increasing branch.
    pub fn domain_lo(&self) -> f64 {
        match self.family {
            ConvexFamily::Quadratic => 0.0,
            ConvexFamily::Logsquare => 1.0,
            ConvexFamily::Softplus | ConvexFamily::Exponential => f64::NEG_INFINITY,
        }
    }

    pub fn c(&self, r: f64) -> f64 {
        match self.family {
            ConvexFamily::Quadratic => r * r,
            ConvexFamily::Softplus => r.max(0.0) + (-r.abs()).exp().ln_1p(),
            ConvexFamily::Logsquare => {
                let l = r.ln();
                l * l
            }
            ConvexFamily::Exponential => r.exp(),
        }
    }

    pub fn cprime(&self, r: f64) -> f64 {
        match self.family {
            ConvexFamily::Quadratic => 2.0 * r,
            ConvexFamily::Softplus => 1.0 / (1.0 + (-r).exp()),
            ConvexFamily::Logsquare => 2.0 * r.ln() / r,
            ConvexFamily::Exponential => r.exp(),
        }
    }

    pub fn csecond(&self, r: f64) -> f64 {
        match self.family {
            ConvexFamily::Quadratic => 2.0,
            ConvexFamily::Softplus => {
                let s = 1.0 / (1.0 + (-r).exp());
                s * (1.0 - s)
            }
            ConvexFamily::Logsquare => 2.0 * (1.0 - r.ln()) / (r * r),
            ConvexFamily::Exponential => r.exp(),
        }
    }

    /// Inverse of `c` on the increasing branch; `None` outside its range.
    pub fn cinv(&self, y: f64) -> Option<f64> {
        if !y.is_finite() {
            return None;
        }
        match self.family {
            ConvexFamily::Quadratic | ConvexFamily::Logsquare if y < 0.0 => None,
            ConvexFamily::Quadratic => Some(y.sqrt()),
            ConvexFamily::Logsquare => Some(y.sqrt().exp()),
            ConvexFamily::Softplus | ConvexFamily::Exponential if y <= 0.0 => None,
            // ln(eʸ − 1) = y + ln(1 − e⁻ʸ)
            ConvexFamily::Softplus => Some(y + (-(-y).exp_m1()).ln()),
            ConvexFamily::Exponential => Some(y.ln()),
        }
    }

    /// `c′(c⁻¹(y))`, evaluated without the round trip where a closed form is
    /// better conditioned.
    pub fn cprime_at_level(&self, y: f64) -> Option<f64> {
        match self.family {
            ConvexFamily::Softplus if y > 0.0 => Some(-(-y).exp_m1()),
            ConvexFamily::Logsquare if y >= 0.0 => {
                let s = y.sqrt();
                Some(2.0 * s * (-s).exp())
            }
            ConvexFamily::Exponential if y > 0.0 => Some(y),
            _ => self.cinv(y).map(|r| self.cprime(r)),
        }
    }
}

impl fmt::Display for ConvexAux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `g(r) = r^p` with odd `p = 2k + 1`, so `g′ = p·r^{p−1} ≥ 0` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MonoAux {
    pub k: u32,
}

impl MonoAux {
    pub fn new(k: u32) -> Self {
        Self { k }
    }

    pub fn exponent(&self) -> i32 {
        2 * self.k as i32 + 1
    }

    pub fn g(&self, r: f64) -> f64 {
        r.powi(self.exponent())
    }

    pub fn gprime(&self, r: f64) -> f64 {
        let p = self.exponent();
        p as f64 * r.powi(p - 1)
    }

    /// Solves `r·g(r) = y` for `r > 0`.
    pub fn r_of_level(&self, y: f64) -> Option<f64> {
        (y > 0.0 && y.is_finite()).then(|| y.powf(1.0 / (self.exponent() + 1) as f64))
    }

    pub fn name(&self) -> String {
        format!("monomial:k={}", self.k)
    }
}

impl fmt::Display for MonoAux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "monomial:k={}", self.k)
    }
}

/// Auxiliary function as named in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuxSpec {
    Convex(ConvexFamily),
    Monomial(MonoAux),
}

impl FromStr for AuxSpec {
    type Err = AuxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(rest) = t.strip_prefix("monomial:") {
            let k = rest
                .strip_prefix("k=")
                .and_then(|v| v.trim().parse::<u32>().ok())
                .ok_or_else(|| AuxError::UnknownName(s.to_string()))?;
            return Ok(AuxSpec::Monomial(MonoAux::new(k)));
        }
        builtin_convex(&t)
            .map(|a| AuxSpec::Convex(a.family))
            .map_err(|_| AuxError::UnknownName(s.to_string()))
    }
}

impl fmt::Display for AuxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxSpec::Convex(family) => f.write_str(family.name()),
            AuxSpec::Monomial(m) => m.fmt(f),
        }
    }
}

fn map_nodes(
    phi: &Field,
    mut op: impl FnMut(usize, f64) -> Result<f64, AuxError>,
) -> Result<Field, AuxError> {
    let values = phi
        .values()
        .iter()
        .enumerate()
        .map(|(k, &p)| op(k, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Field::from_values(*phi.grid(), values).expect("finite by construction"))
}

/// `r = c⁻¹(F(φ) + A₁)` nodewise.
pub fn r_of_phi(phi: &Field, aux: &ConvexAux, a1: f64) -> Result<Field, AuxError> {
    map_nodes(phi, |node, p| {
        let level = potential(p) + a1;
        aux.cinv(level)
            .filter(|r| r.is_finite())
            .ok_or(AuxError::Domain {
                family: aux.name(),
                node,
                level,
            })
    })
}

/// `P = f(φ) / c′(r(φ))` nodewise.
pub fn p_of_phi(phi: &Field, aux: &ConvexAux, a1: f64) -> Result<Field, AuxError> {
    map_nodes(phi, |node, p| {
        let level = potential(p) + a1;
        let d = aux.cprime_at_level(level).ok_or(AuxError::Domain {
            family: aux.name(),
            node,
            level,
        })?;
        if d == 0.0 || !d.is_finite() {
            return Err(AuxError::Singularity {
                family: aux.name(),
                node,
                level,
            });
        }
        Ok(dpotential(p) / d)
    })
}

/// `r = (F(φ) + A₁)^{1/(p+1)}` nodewise.
pub fn r_of_phi_mono(phi: &Field, mono: &MonoAux, a1: f64) -> Result<Field, AuxError> {
    map_nodes(phi, |node, p| {
        let level = potential(p) + a1;
        mono.r_of_level(level).ok_or(AuxError::Domain {
            family: "monomial",
            node,
            level,
        })
    })
}

/// `P = f(φ) / ((p+1)(F(φ) + A₁)^{p/(p+1)})` nodewise.
pub fn p_of_phi_mono(phi: &Field, mono: &MonoAux, a1: f64) -> Result<Field, AuxError> {
    let p = mono.exponent() as f64;
    map_nodes(phi, |node, x| {
        let level = potential(x) + a1;
        if !(level > 0.0) {
            return Err(AuxError::Domain {
                family: "monomial",
                node,
                level,
            });
        }
        Ok(dpotential(x) / ((p + 1.0) * level.powf(p / (p + 1.0))))
    })
}
