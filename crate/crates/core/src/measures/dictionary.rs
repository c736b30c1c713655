//! Lower bounds on the bounded-Lipschitz distance from a finite family of
//! feasible test functions.

use super::{euclid, DiscreteMeasure, MeasureFunctionalView};
use crate::error::{Error, Result};
use crate::rng::{Domain, Draws, KeyedRng};

/// A test function with `|f| <= 1` and `Lip(f) <= 1` by construction.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// Clipped to `[-1, 1]` on evaluation.
    Constant(f64),
    /// `sign * clamp(<u, z> - offset, -1, 1)` with `|u| = 1`.
    ClippedAffine {
        direction: Vec<f64>,
        offset: f64,
        sign: f64,
    },
    /// `sign * clamp(|z - anchor| - offset, -1, 1)`.
    ClippedDistance {
        anchor: Vec<f64>,
        offset: f64,
        sign: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            TestFunction::Constant(c) => c.clamp(-1.0, 1.0),
            TestFunction::ClippedAffine {
                direction,
                offset,
                sign,
            } => {
                let proj: f64 = direction.iter().zip(z).map(|(u, x)| u * x).sum();
                sign * (proj - offset).clamp(-1.0, 1.0)
            }
            TestFunction::ClippedDistance { anchor, offset, sign } => {
                sign * (euclid(anchor, z) - offset).clamp(-1.0, 1.0)
            }
        }
    }

    fn negated(&self) -> Self {
        match self {
            TestFunction::Constant(c) => TestFunction::Constant(-c),
            TestFunction::ClippedAffine {
                direction,
                offset,
                sign,
            } => TestFunction::ClippedAffine {
                direction: direction.clone(),
                offset: *offset,
                sign: -sign,
            },
            TestFunction::ClippedDistance { anchor, offset, sign } => TestFunction::ClippedDistance {
                anchor: anchor.clone(),
                offset: *offset,
                sign: -sign,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    members: Vec<TestFunction>,
}

impl Dictionary {
    pub fn new(members: Vec<TestFunction>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("dictionary must be nonempty".into()));
        }
        for f in &members {
            match f {
                TestFunction::ClippedAffine { direction, sign, .. } => {
                    let norm: f64 = direction.iter().map(|u| u * u).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-12 || sign.abs() > 1.0 {
                        return Err(Error::InvalidParameter("affine member is not 1-Lipschitz".into()));
                    }
                }
                TestFunction::ClippedDistance { sign, .. } if sign.abs() > 1.0 => {
                    return Err(Error::InvalidParameter("distance member is not 1-Lipschitz".into()));
                }
                _ => {}
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[TestFunction] {
        &self.members
    }

    /// `+-1`, clipped affine maps along `directions` random unit vectors and
    /// clipped distances to `anchors` atoms of the pooled support, each with
    /// both signs. Deterministic in `seed`.
    pub fn standard(mu: &DiscreteMeasure, nu: &DiscreteMeasure, directions: usize, anchors: usize, seed: u64) -> Self {
        let dim = mu.dim();
        let keyed = KeyedRng::new(seed, Domain::Probe);
        let mut draws = Draws::new(&keyed, 0);
        let mut members = vec![TestFunction::Constant(1.0), TestFunction::Constant(-1.0)];
        let pooled: Vec<&[f64]> = mu.iter().chain(nu.iter()).map(|(z, _)| z).collect();
        let centre: Vec<f64> = if pooled.is_empty() {
            vec![0.0; dim]
        } else {
            (0..dim)
                .map(|d| pooled.iter().map(|z| z[d]).sum::<f64>() / pooled.len() as f64)
                .collect()
        };
        for _ in 0..directions {
            let mut u: Vec<f64> = (0..dim).map(|_| draws.normal()).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            u.iter_mut().for_each(|x| *x /= norm);
            let offset: f64 = u.iter().zip(&centre).map(|(a, b)| a * b).sum();
            let f = TestFunction::ClippedAffine {
                direction: u,
                offset,
                sign: 1.0,
            };
            members.push(f.negated());
            members.push(f);
        }
        if !pooled.is_empty() {
            for _ in 0..anchors {
                let k = ((draws.uniform() * pooled.len() as f64) as usize).min(pooled.len() - 1);
                let f = TestFunction::ClippedDistance {
                    anchor: pooled[k].to_vec(),
                    offset: 1.0,
                    sign: 1.0,
                };
                members.push(f.negated());
                members.push(f);
            }
        }
        Self { members }
    }
}

/// `max(0, max_f int f dmu - int f dnu)` over the dictionary; never exceeds
/// the exact distance since every member is feasible.
pub fn dbl_estimate(mu: &DiscreteMeasure, nu: &DiscreteMeasure, dictionary: &Dictionary) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    Ok(dictionary
        .members()
        .iter()
        .map(|f| mu.integrate(f) - nu.integrate(f))
        .fold(0.0, f64::max))
}
