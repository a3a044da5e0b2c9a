use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::{AnalysisContext, PreparedClass};
use super::{check_alpha, lower_quantile};
use crate::error::{Error, Result};
use crate::perturbation::{ClassFamily, GpClass, PerturbationClass};
use crate::rng::{tag, SeedRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScale {
    #[default]
    Log,
    Linear,
}

/// One axis of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    #[serde(default)]
    pub scale: GridScale,
}

impl GridAxis {
    /// 50 log-spaced values over `[min, max]`.
    pub fn log(min: f64, max: f64) -> Self {
        GridAxis {
            min,
            max,
            steps: 50,
            scale: GridScale::Log,
        }
    }

    pub fn linear(min: f64, max: f64, steps: usize) -> Self {
        GridAxis {
            min,
            max,
            steps,
            scale: GridScale::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidParameter(format!(
                "grid axis needs finite min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.steps == 0 || (self.steps == 1 && self.min != self.max) {
            return Err(Error::InvalidParameter(
                "grid axis needs at least two steps".into(),
            ));
        }
        if self.min < 0.0 {
            return Err(Error::InvalidParameter(
                "grid parameters must be non-negative".into(),
            ));
        }
        if self.scale == GridScale::Log && self.min <= 0.0 {
            return Err(Error::InvalidParameter(
                "a log-spaced axis needs min > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let t = i as f64 / last;
                let v = match self.scale {
                    GridScale::Linear => self.min + t * (self.max - self.min),
                    GridScale::Log => (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp(),
                };
                // pin the end points against rounding
                if i == 0 {
                    self.min
                } else if i == self.steps - 1 {
                    self.max
                } else {
                    v
                }
            })
            .collect()
    }
}

/// Grid over two class parameters.
///
/// For the GP class `x` is the length scale and `y` the variance. For the
/// basis classes `x` is the variance of the first half of the coefficients
/// and `y` the variance of the rest, so d = 4 gives `diag(x, x, y, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: GridAxis,
    pub y: GridAxis,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        self.y.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SetMode {
    #[default]
    ClosedForm,
    /// Empirical bound from `draws` Monte Carlo draws; every grid point uses
    /// the same random numbers.
    MonteCarlo { draws: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub q: f64,
    pub member: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceSet {
    pub family: ClassFamily,
    pub x_name: String,
    pub y_name: String,
    pub alpha: f64,
    pub mode: SetMode,
    /// Row-major over x, then y.
    pub grid_points: Vec<GridPoint>,
    /// Where the bound crosses zero along each x line, ordered by x.
    pub boundary: Vec<BoundaryPoint>,
    /// True when no grid point is a member.
    pub empty: bool,
}

const BISECTION_REL_TOL: f64 = 1e-4;
const BISECTION_MAX_ITER: usize = 200;

pub fn axis_names(family: ClassFamily) -> (&'static str, &'static str) {
    match family {
        ClassFamily::GaussianProcess => ("theta", "sigma2"),
        ClassFamily::Polynomial | ClassFamily::Fourier => ("sigma11_sq", "sigma22_sq"),
    }
}

/// The template class with its grid parameters replaced by `(x, y)`.
pub fn class_at(template: &PerturbationClass, x: f64, y: f64) -> Result<PerturbationClass> {
    let split = |n: usize| -> Vec<f64> {
        let first = n.div_ceil(2);
        (0..n).map(|i| if i < first { x } else { y }).collect()
    };
    let class = match template {
        PerturbationClass::GaussianProcess(_) => {
            PerturbationClass::GaussianProcess(GpClass::shared(y, x)?)
        }
        PerturbationClass::Polynomial(p) => {
            let mut p = p.clone();
            p.variances = split(p.variances.len());
            PerturbationClass::Polynomial(p)
        }
        PerturbationClass::Fourier(f) => {
            let mut f = f.clone();
            f.variances = split(f.variances.len());
            PerturbationClass::Fourier(f)
        }
    };
    class.validate()?;
    Ok(class)
}

/// Evaluates the bound along one x line.
enum LineEvaluator {
    /// `sigma_B^2` is affine in `y` for every class (the GP variance scales
    /// the kernel, basis variances enter linearly), so two evaluations fix
    /// it exactly.
    Closed {
        mu_b: f64,
        v0: f64,
        slope: f64,
        z: f64,
    },
    Monte {
        template: PerturbationClass,
        x: f64,
        draws: usize,
        alpha: f64,
        seed: SeedRecord,
    },
}

impl LineEvaluator {
    fn q(&self, ctx: &AnalysisContext, y: f64) -> Result<f64> {
        match self {
            LineEvaluator::Closed { mu_b, v0, slope, z } => {
                let var = (v0 + slope * y).max(0.0);
                Ok(mu_b + var.sqrt() * z)
            }
            LineEvaluator::Monte {
                template,
                x,
                draws,
                alpha,
                seed,
            } => {
                let class = class_at(template, *x, y)?;
                let prepared: PreparedClass = ctx.prepare(&class)?;
                let deltas = ctx.draw_deltas(&prepared, None, *draws, seed)?;
                Ok(lower_quantile(&deltas, *alpha))
            }
        }
    }
}

fn bisect(
    ctx: &AnalysisContext,
    line: &LineEvaluator,
    mut lo: f64,
    mut hi: f64,
    lo_member: bool,
) -> Result<f64> {
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_REL_TOL * mid.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if (line.q(ctx, mid)? >= 0.0) == lo_member {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grid search for the parameters whose resilience bound is non-negative,
/// refined by bisection along each x line where membership flips.
pub fn resilience_set(
    ctx: &AnalysisContext,
    template: &PerturbationClass,
    grid: &GridSpec,
    alpha: f64,
    mode: SetMode,
    seed: &SeedRecord,
) -> Result<ResilienceSet> {
    check_alpha(alpha)?;
    grid.validate()?;
    template.validate()?;
    if let SetMode::MonteCarlo { draws: 0 } = mode {
        return Err(Error::InvalidParameter(
            "Monte Carlo set estimation needs draws >= 1".into(),
        ));
    }
    let xs = grid.x.values();
    let ys = grid.y.values();
    let z = crate::normal::quantile(alpha);
    let draw_seed = seed.child(tag::GRID);

    let lines: Vec<(Vec<GridPoint>, Vec<BoundaryPoint>)> = xs
        .par_iter()
        .map(|&x| -> Result<_> {
            let line = match mode {
                SetMode::ClosedForm => {
                    let at0 = ctx.closed_form(&class_at(template, x, 0.0)?)?;
                    let at1 = ctx.closed_form(&class_at(template, x, 1.0)?)?;
                    LineEvaluator::Closed {
                        mu_b: at0.mu_b,
                        v0: at0.sigma_b2,
                        slope: at1.sigma_b2 - at0.sigma_b2,
                        z,
                    }
                }
                SetMode::MonteCarlo { draws } => LineEvaluator::Monte {
                    template: template.clone(),
                    x,
                    draws,
                    alpha,
                    seed: draw_seed.clone(),
                },
            };
            let mut points = Vec::with_capacity(ys.len());
            for &y in &ys {
                let q = line.q(ctx, y)?;
                points.push(GridPoint {
                    x,
                    y,
                    q,
                    member: q >= 0.0,
                });
            }
            let mut boundary = Vec::new();
            for pair in points.windows(2) {
                if pair[0].member != pair[1].member {
                    let y = bisect(ctx, &line, pair[0].y, pair[1].y, pair[0].member)?;
                    boundary.push(BoundaryPoint { x, y });
                }
            }
            Ok((points, boundary))
        })
        .collect::<Result<_>>()?;

    let mut grid_points = Vec::with_capacity(xs.len() * ys.len());
    let mut boundary = Vec::new();
    for (p, b) in lines {
        grid_points.extend(p);
        boundary.extend(b);
    }
    let empty = !grid_points.iter().any(|p| p.member);
    let family = template.family();
    let (x_name, y_name) = axis_names(family);
    Ok(ResilienceSet {
        family,
        x_name: x_name.into(),
        y_name: y_name.into(),
        alpha,
        mode,
        grid_points,
        boundary,
        empty,
    })
}
