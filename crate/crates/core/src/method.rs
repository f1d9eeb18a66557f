//! Method tags (`ab2-det`, `am0-prob`, ...) and a single dispatch point for
//! forward solves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explicit::{solve_explicit_randomized, ExplicitNoiseSpec};
use crate::implicit::{solve_implicit_probabilistic, ImplicitMode, PcnOptions};
use crate::multistep::{cached, solve_deterministic, AdamsCoefficients, Family, SolverOptions};
use crate::noise::Perturbations;
use crate::problems::Ivp;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodTag {
    pub family: Family,
    pub steps: usize,
    pub randomized: bool,
}

impl MethodTag {
    pub fn coefficients(&self) -> Result<&'static AdamsCoefficients> {
        cached(self.family, self.steps)
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.family {
            Family::Bashforth => "ab",
            Family::Moulton => "am",
        };
        let suffix = if self.randomized { "prob" } else { "det" };
        write!(f, "{prefix}{}-{suffix}", self.steps)
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "unknown method `{s}` (expected e.g. ab1-det, am0-prob)"
            ))
        };
        let (head, suffix) = s.split_once('-').ok_or_else(bad)?;
        let randomized = match suffix {
            "det" => false,
            "prob" => true,
            _ => return Err(bad()),
        };
        let family = match head.get(..2) {
            Some("ab") => Family::Bashforth,
            Some("am") => Family::Moulton,
            _ => return Err(bad()),
        };
        let digits = &head[2..];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let steps: usize = digits.parse().map_err(|_| bad())?;
        cached(family, steps).map_err(|e| Error::Config(format!("method `{s}`: {e}")))?;
        Ok(MethodTag {
            family,
            steps,
            randomized,
        })
    }
}

impl Serialize for MethodTag {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodTag {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sampler used by implicit probabilistic methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    #[default]
    Semi,
    Exact,
}

impl FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" => Ok(SamplerMode::Semi),
            "exact" => Ok(SamplerMode::Exact),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected semi or exact)"
            ))),
        }
    }
}

/// A fully specified forward solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub tag: MethodTag,
    pub mode: SamplerMode,
    /// Noise scale; required for randomised methods.
    pub alpha: Option<f64>,
    pub pcn: PcnOptions,
    pub solver: SolverOptions,
}

impl Method {
    pub fn new(tag: MethodTag, mode: SamplerMode, alpha: Option<f64>) -> Self {
        Method {
            tag,
            mode,
            alpha,
            pcn: PcnOptions::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn deterministic(family: Family, steps: usize) -> Self {
        Self::new(
            MethodTag {
                family,
                steps,
                randomized: false,
            },
            SamplerMode::Semi,
            None,
        )
    }

    pub fn randomized(family: Family, steps: usize, alpha: f64) -> Self {
        Self::new(
            MethodTag {
                family,
                steps,
                randomized: true,
            },
            SamplerMode::Semi,
            Some(alpha),
        )
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    /// Whether the solve is a deterministic function of `(theta, xi)`.
    pub fn supports_fixed_perturbations(&self) -> bool {
        !(self.tag.randomized
            && self.tag.family == Family::Moulton
            && self.mode == SamplerMode::Exact)
    }

    /// Whether the solve consumes a perturbation sequence.
    pub fn uses_perturbations(&self) -> bool {
        self.tag.randomized && self.supports_fixed_perturbations()
    }

    fn alpha_required(&self) -> Result<f64> {
        self.alpha
            .ok_or_else(|| Error::Config(format!("method {} needs alpha", self.tag)))
    }

    /// Solves `ivp`. Randomised methods in fixed-perturbation form need `xi`;
    /// exact pCN solves draw from `(pcn.seed, stream)`.
    pub fn solve(&self, ivp: &Ivp, xi: Option<&Perturbations>, stream: u64) -> Result<Trajectory> {
        let coeffs = self.tag.coefficients()?;
        if !self.tag.randomized {
            return solve_deterministic(ivp, coeffs, &self.solver);
        }
        let alpha = self.alpha_required()?;
        let need_xi =
            || Error::Contract(format!("method {} needs a perturbation sequence", self.tag));
        match self.tag.family {
            Family::Bashforth => {
                let spec = ExplicitNoiseSpec::new(alpha, self.tag.steps)?;
                solve_explicit_randomized(ivp, coeffs, &spec, xi.ok_or_else(need_xi)?)
            }
            Family::Moulton => match self.mode {
                SamplerMode::Semi => solve_implicit_probabilistic(
                    ivp,
                    coeffs,
                    alpha,
                    ImplicitMode::SemiImplicit(xi.ok_or_else(need_xi)?),
                ),
                SamplerMode::Exact => solve_implicit_probabilistic(
                    ivp,
                    coeffs,
                    alpha,
                    ImplicitMode::ExactPcn {
                        opts: self.pcn,
                        stream,
                    },
                ),
            },
        }
    }

    /// Solve for ensemble member `member` under `seed`, with its own
    /// counter-derived randomness.
    pub fn solve_member(&self, ivp: &Ivp, seed: u64, member: u64) -> Result<Trajectory> {
        if self.uses_perturbations() {
            let xi = Perturbations::for_member(ivp.n_steps, ivp.system.dim(), seed, member);
            self.solve(ivp, Some(&xi), member)
        } else {
            let mut m = *self;
            m.pcn.seed = seed;
            m.solve(ivp, None, member)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for name in ["ab1-det", "ab3-prob", "am0-det", "am2-prob", "am4-det"] {
            let tag: MethodTag = name.parse().unwrap();
            assert_eq!(tag.to_string(), name);
        }
        for bad in [
            "",
            "ab0-det",
            "am5-prob",
            "ab1",
            "ab1-foo",
            "xy1-det",
            "ab-det",
            "ab+1-det",
            "am01x-det",
        ] {
            assert!(bad.parse::<MethodTag>().is_err(), "{bad}");
        }
    }

    #[test]
    fn fixed_perturbation_support() {
        let exact = Method::new("am0-prob".parse().unwrap(), SamplerMode::Exact, Some(0.2));
        assert!(!exact.supports_fixed_perturbations());
        let semi = Method::new("am0-prob".parse().unwrap(), SamplerMode::Semi, Some(0.2));
        assert!(semi.uses_perturbations());
        let det = Method::deterministic(Family::Moulton, 0);
        assert!(det.supports_fixed_perturbations() && !det.uses_perturbations());
    }
}
