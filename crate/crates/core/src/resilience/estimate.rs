use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_alpha, fraction_below, lower_quantile, DeltaDistribution};
use crate::data::{Arm, StudyAData, StudyBData};
use crate::error::{Error, Result};
use crate::perturbation::{
    basis_matrix, closed_form_moments, BasisMatrix, ClosedFormMoments, GpFactor, GroupPerturbation,
    PerturbationClass, ResolvedClass,
};
use crate::rng::{tag, SeedRecord, Stream};
use crate::smoother::{SmoothedMean, SmootherConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    /// Number of Monte Carlo draws J.
    pub draws: usize,
    pub alpha: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            draws: 500,
            alpha: 0.1,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidParameter(
                "the number of draws J must be at least 1".into(),
            ));
        }
        check_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub p_hat: f64,
    pub q_alpha_hat: f64,
    pub alpha: f64,
    pub closed_form: ClosedFormMoments,
    pub p_closed: f64,
    pub q_closed: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub distribution: DeltaDistribution,
    pub report: ResilienceReport,
}

/// Study A fits evaluated at the Study B surrogates.
///
/// Everything the estimators need about the two studies: the fitted means,
/// the Study B points and the Study A surrogates that anchor the basis classes.
#[derive(Debug, Clone)]
pub struct AnalysisContext {
    fits: [SmoothedMean; 2],
    study_b: StudyBData,
    fitted: [Vec<f64>; 2],
    extrapolated: [Vec<bool>; 2],
}

impl AnalysisContext {
    pub fn new(
        study_a: &StudyAData,
        study_b: StudyBData,
        smoother: &SmootherConfig,
    ) -> Result<Self> {
        let control = SmoothedMean::fit_with(study_a.arm(Arm::Control), smoother)?;
        let treated = SmoothedMean::fit_with(study_a.arm(Arm::Treated), smoother)?;
        Ok(Self::from_fits(control, treated, study_b))
    }

    pub fn from_fits(control: SmoothedMean, treated: SmoothedMean, study_b: StudyBData) -> Self {
        let fits = [control, treated];
        let evals =
            Arm::BOTH.map(|arm| fits[arm.index()].evaluate_many_flagged(study_b.surrogates(arm)));
        let fitted = evals.clone().map(|e| e.iter().map(|v| v.value).collect());
        let extrapolated = evals.map(|e| e.iter().map(|v| v.extrapolated).collect());
        AnalysisContext {
            fits,
            study_b,
            fitted,
            extrapolated,
        }
    }

    pub fn fit(&self, arm: Arm) -> &SmoothedMean {
        &self.fits[arm.index()]
    }

    pub fn study_b(&self) -> &StudyBData {
        &self.study_b
    }

    pub fn points(&self, arm: Arm) -> &[f64] {
        self.study_b.surrogates(arm)
    }

    /// Study A fit evaluated at each Study B surrogate of the arm.
    pub fn fitted(&self, arm: Arm) -> &[f64] {
        &self.fitted[arm.index()]
    }

    pub fn extrapolated(&self, arm: Arm) -> &[bool] {
        &self.extrapolated[arm.index()]
    }

    pub fn extrapolated_fraction(&self, arm: Arm) -> f64 {
        let flags = self.extrapolated(arm);
        flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
    }

    /// Plug-in effect of the unperturbed fits.
    pub fn delta_hat(&self) -> f64 {
        super::delta_hat(self.fitted(Arm::Treated), self.fitted(Arm::Control))
            .expect("study B arms are never empty")
    }

    /// Anchor a class on the Study A surrogates behind the fits.
    pub fn resolve(&self, class: &PerturbationClass) -> Result<ResolvedClass> {
        class.resolve([self.fits[0].train_s(), self.fits[1].train_s()])
    }

    pub fn closed_form(&self, class: &PerturbationClass) -> Result<ClosedFormMoments> {
        let resolved = self.resolve(class)?;
        self.closed_form_resolved(&resolved)
    }

    pub(crate) fn closed_form_resolved(
        &self,
        resolved: &ResolvedClass,
    ) -> Result<ClosedFormMoments> {
        closed_form_moments(
            [self.fitted(Arm::Control), self.fitted(Arm::Treated)],
            [self.points(Arm::Control), self.points(Arm::Treated)],
            resolved,
        )
    }

    /// Factor the class at the Study B points once so many draws can reuse it.
    pub fn prepare(&self, class: &PerturbationClass) -> Result<PreparedClass> {
        let resolved = self.resolve(class)?;
        let models = [
            GroupModel::build(self.points(Arm::Control), resolved.group(Arm::Control))?,
            GroupModel::build(self.points(Arm::Treated), resolved.group(Arm::Treated))?,
        ];
        Ok(PreparedClass {
            class: class.clone(),
            resolved,
            models,
        })
    }

    /// Effect draws; `resampled` holds bootstrap indices into the Study B
    /// points of each arm (`None` uses every point once).
    pub(crate) fn draw_deltas(
        &self,
        prepared: &PreparedClass,
        resampled: Option<[&[usize]; 2]>,
        draws: usize,
        seed: &SeedRecord,
    ) -> Result<Vec<f64>> {
        let functionals = Arm::BOTH.map(|arm| {
            let g = arm.index();
            ArmFunctional::new(
                self.fitted(arm),
                resampled.map(|r| r[g]),
                &prepared.models[g],
            )
        });
        let deltas: Vec<f64> = (0..draws as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = seed.child2(tag::DRAWS, j).stream();
                let d0 = functionals[0].draw(&mut rng);
                let d1 = functionals[1].draw(&mut rng);
                d1 - d0
            })
            .collect();
        if deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("treatment effect draws"));
        }
        Ok(deltas)
    }

    /// Draw perturbed mean curves on a grid for display, sharing the random
    /// numbers of the first `count` effect draws.
    ///
    /// GP curves are the conditional mean of the process on the grid given its
    /// drawn values at the Study B points; basis curves are exact.
    pub fn sample_curves(
        &self,
        class: &PerturbationClass,
        grid: [&[f64]; 2],
        count: usize,
        seed: &SeedRecord,
    ) -> Result<Vec<CurveDraw>> {
        let prepared = self.prepare(class)?;
        let maps = Arm::BOTH.map(|arm| {
            let g = arm.index();
            CurveMap::new(
                &self.fits[g],
                self.points(arm),
                grid[g],
                prepared.resolved.group(arm),
                &prepared.models[g],
            )
        });
        let curves: Vec<CurveDraw> = (0..count as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = seed.child2(tag::DRAWS, j).stream();
                let control = maps[0].draw(&mut rng);
                let treated = maps[1].draw(&mut rng);
                CurveDraw { control, treated }
            })
            .collect();
        Ok(curves)
    }
}

/// One pair of perturbed mean curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDraw {
    pub control: Vec<f64>,
    pub treated: Vec<f64>,
}

/// A class resolved and factored at the Study B points.
#[derive(Debug, Clone)]
pub struct PreparedClass {
    pub(crate) class: PerturbationClass,
    pub(crate) resolved: ResolvedClass,
    pub(crate) models: [GroupModel; 2],
}

impl PreparedClass {
    pub fn class(&self) -> &PerturbationClass {
        &self.class
    }

    pub fn resolved(&self) -> &ResolvedClass {
        &self.resolved
    }

    pub fn model(&self, arm: Arm) -> &GroupModel {
        &self.models[arm.index()]
    }
}

/// How one arm's perturbation acts on its Study B points.
#[derive(Debug, Clone)]
pub enum GroupModel {
    /// Zero variance: the fit itself.
    Fixed,
    Gp(GpFactor),
    Basis {
        matrix: BasisMatrix,
        sd: Vec<f64>,
    },
}

impl GroupModel {
    pub fn build(points: &[f64], law: &GroupPerturbation) -> Result<Self> {
        match law {
            GroupPerturbation::Rbf(k) => Ok(match GpFactor::new(points, k)? {
                Some(f) => GroupModel::Gp(f),
                None => GroupModel::Fixed,
            }),
            GroupPerturbation::Basis { basis, variances } => {
                if variances.iter().all(|v| *v == 0.0) {
                    return Ok(GroupModel::Fixed);
                }
                let matrix = basis_matrix(points, basis);
                if matrix.ncols() != variances.len() {
                    return Err(Error::DimensionMismatch {
                        expected: matrix.ncols(),
                        found: variances.len(),
                    });
                }
                Ok(GroupModel::Basis {
                    matrix,
                    sd: variances.iter().map(|v| v.sqrt()).collect(),
                })
            }
        }
    }

    /// Coefficients of the weighted mean deviation on the standard normals
    /// the full-vector sampler would consume.
    fn loading(&self, weights: &[f64]) -> Vec<f64> {
        match self {
            GroupModel::Fixed => Vec::new(),
            GroupModel::Gp(f) => f.loading(weights),
            GroupModel::Basis { matrix, sd } => matrix
                .weighted_column_sums(weights)
                .iter()
                .zip(sd)
                .map(|(c, s)| c * s)
                .collect(),
        }
    }
}

/// `w^T mu_hat + a^T z`: the weighted mean of one perturbed arm as a linear
/// function of the standard normals `z`.
///
/// Averaging `mean + L z` (or `mean + M diag(sd) xi`) with weights `w` equals
/// `w^T mean + (L^T w)^T z`, so a draw needs only the normals, not the full
/// perturbed vector.
struct ArmFunctional {
    mean: f64,
    loading: Vec<f64>,
}

impl ArmFunctional {
    fn new(fitted: &[f64], resampled: Option<&[usize]>, model: &GroupModel) -> Self {
        let n = fitted.len();
        let mut weights = vec![0.0; n];
        // the mean is summed over the resampled values themselves so that
        // identical values give bit-identical means across replicates
        let mean = match resampled {
            None => {
                weights.fill(1.0 / n as f64);
                fitted.iter().sum::<f64>() / n as f64
            }
            Some(idx) => {
                let unit = 1.0 / idx.len() as f64;
                for &i in idx {
                    weights[i] += unit;
                }
                idx.iter().map(|&i| fitted[i]).sum::<f64>() / idx.len() as f64
            }
        };
        ArmFunctional {
            mean,
            loading: model.loading(&weights),
        }
    }

    fn draw(&self, rng: &mut Stream) -> f64 {
        let mut acc = self.mean;
        for a in &self.loading {
            let z: f64 = rng.sample(StandardNormal);
            acc += a * z;
        }
        acc
    }
}

/// Linear map from the standard normals of one arm to a curve on a grid.
struct CurveMap {
    base: Vec<f64>,
    map: Option<DMatrix<f64>>,
}

impl CurveMap {
    fn new(
        fit: &SmoothedMean,
        points: &[f64],
        grid: &[f64],
        law: &GroupPerturbation,
        model: &GroupModel,
    ) -> Self {
        let base = fit.evaluate_many(grid);
        let map = match (model, law) {
            (GroupModel::Fixed, _) => None,
            (GroupModel::Gp(factor), GroupPerturbation::Rbf(k)) => {
                // K(grid, pts) L^{-T}, computed as the transpose of L^{-1} K(pts, grid)
                let cross =
                    DMatrix::from_fn(points.len(), grid.len(), |i, j| k.cov(points[i], grid[j]));
                let solved = factor
                    .lower()
                    .solve_lower_triangular(&cross)
                    .unwrap_or_else(|| DMatrix::zeros(points.len(), grid.len()));
                Some(solved.transpose())
            }
            (GroupModel::Basis { sd, .. }, GroupPerturbation::Basis { basis, .. }) => {
                let m = basis_matrix(grid, basis);
                Some(m.entries() * DMatrix::from_diagonal(&DVector::from_column_slice(sd)))
            }
            _ => unreachable!("model built from this law"),
        };
        CurveMap { base, map }
    }

    fn draw(&self, rng: &mut Stream) -> Vec<f64> {
        match &self.map {
            None => self.base.clone(),
            Some(a) => {
                let z = DVector::from_iterator(
                    a.ncols(),
                    (0..a.ncols()).map(|_| rng.sample::<f64, _>(StandardNormal)),
                );
                let dev = a * z;
                self.base
                    .iter()
                    .zip(dev.iter())
                    .map(|(b, d)| b + d)
                    .collect()
            }
        }
    }
}

pub(crate) fn summarize(
    deltas: &[f64],
    alpha: f64,
    closed_form: ClosedFormMoments,
) -> ResilienceReport {
    ResilienceReport {
        p_hat: fraction_below(deltas, 0.0),
        q_alpha_hat: lower_quantile(deltas, alpha),
        alpha,
        closed_form,
        p_closed: closed_form.p_closed(),
        q_closed: closed_form.q_closed(alpha),
        draws: deltas.len(),
    }
}

/// Monte Carlo resilience probability and bound, with the exact normal
/// summaries alongside. Draw `j` uses the substream `seed / DRAWS / j`.
pub fn estimate(
    ctx: &AnalysisContext,
    class: &PerturbationClass,
    config: &EstimateConfig,
    seed: &SeedRecord,
) -> Result<Estimate> {
    config.validate()?;
    let prepared = ctx.prepare(class)?;
    let deltas = ctx.draw_deltas(&prepared, None, config.draws, seed)?;
    let moments = ctx.closed_form_resolved(&prepared.resolved)?;
    let report = summarize(&deltas, config.alpha, moments);
    Ok(Estimate {
        distribution: DeltaDistribution::new(deltas, class.clone(), seed.clone())?,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::perturbation::{sample_basis, sample_gp, PeriodConvention};
    use crate::smoother::Kernel;
    use proptest::prelude::*;

    fn linear_context(shift: f64) -> AnalysisContext {
        let s0: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let s1: Vec<f64> = (0..40).map(|i| 0.5 + i as f64 * 0.25).collect();
        let y0: Vec<f64> = s0.iter().map(|s| 0.5 * s).collect();
        let y1: Vec<f64> = s1.iter().map(|s| 0.8 * s + 0.3 + shift).collect();
        let a = StudyAData::from_vectors(s0, y0, s1, y1).unwrap();
        let b = StudyBData::new(
            (0..25).map(|i| 2.0 + i as f64 * 0.2).collect(),
            (0..30).map(|i| 2.5 + i as f64 * 0.2).collect(),
        )
        .unwrap();
        AnalysisContext::new(&a, b, &SmootherConfig::gaussian_reference()).unwrap()
    }

    fn classes() -> Vec<PerturbationClass> {
        vec![
            PerturbationClass::gp(0.4, 1.5).unwrap(),
            PerturbationClass::polynomial(vec![0.2, 0.2, 0.05, 0.05]).unwrap(),
            PerturbationClass::fourier(vec![0.3, 0.3, 0.1, 0.1], PeriodConvention::Angular)
                .unwrap(),
        ]
    }

    #[test]
    fn zero_variance_class_is_point_mass() {
        let ctx = linear_context(0.0);
        let mu_b = ctx.delta_hat();
        assert!(mu_b > 0.0);
        let class = PerturbationClass::gp(0.0, 1.0).unwrap();
        let est = estimate(
            &ctx,
            &class,
            &EstimateConfig::default(),
            &SeedRecord::root(3),
        )
        .unwrap();
        assert_eq!(est.report.p_hat, 0.0);
        assert_eq!(est.report.q_alpha_hat, mu_b);
        assert_eq!(est.report.p_closed, 0.0);
        assert_eq!(est.report.q_closed, mu_b);
    }

    #[test]
    fn config_is_checked() {
        let ctx = linear_context(0.0);
        let class = PerturbationClass::gp(1.0, 1.0).unwrap();
        for cfg in [
            EstimateConfig {
                draws: 0,
                alpha: 0.1,
            },
            EstimateConfig {
                draws: 10,
                alpha: 1.0,
            },
        ] {
            assert!(estimate(&ctx, &class, &cfg, &SeedRecord::root(1)).is_err());
        }
    }

    /// Draws built from the full perturbed vectors, the way the algorithm is
    /// usually written down.
    fn full_vector_deltas(
        ctx: &AnalysisContext,
        class: &PerturbationClass,
        draws: usize,
        seed: &SeedRecord,
    ) -> Vec<f64> {
        let resolved = ctx.resolve(class).unwrap();
        (0..draws as u64)
            .map(|j| {
                let mut rng = seed.child2(tag::DRAWS, j).stream();
                let mut arms = Vec::new();
                for arm in Arm::BOTH {
                    let pts = ctx.points(arm);
                    let f = match resolved.group(arm) {
                        GroupPerturbation::Rbf(k) => {
                            sample_gp(ctx.fitted(arm), pts, k, &mut rng).unwrap()
                        }
                        GroupPerturbation::Basis { basis, variances } => sample_basis(
                            ctx.fitted(arm),
                            &basis_matrix(pts, basis),
                            variances,
                            &mut rng,
                        )
                        .unwrap(),
                    };
                    arms.push(f);
                }
                super::super::delta_hat(&arms[1], &arms[0]).unwrap()
            })
            .collect()
    }

    #[test]
    fn fast_path_equals_full_vector_path() {
        let ctx = linear_context(0.0);
        let seed = SeedRecord::root(17);
        for class in classes() {
            let prepared = ctx.prepare(&class).unwrap();
            let fast = ctx.draw_deltas(&prepared, None, 200, &seed).unwrap();
            let full = full_vector_deltas(&ctx, &class, 200, &seed);
            for (a, b) in fast.iter().zip(&full) {
                assert!((a - b).abs() < 1e-10, "{class:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let ctx = linear_context(-2.1);
        let cfg = EstimateConfig {
            draws: 100_000,
            alpha: 0.1,
        };
        for class in classes() {
            let est = estimate(&ctx, &class, &cfg, &SeedRecord::root(5)).unwrap();
            let r = est.report;
            let p = r.p_closed;
            assert!(p > 0.01 && p < 0.99, "uninformative configuration p = {p}");
            let tol = 3.0 * (p * (1.0 - p) / cfg.draws as f64).sqrt() + 0.002;
            assert!((r.p_hat - p).abs() <= tol, "{class:?}: {} vs {p}", r.p_hat);
            let sd = r.closed_form.sigma_b();
            let dens = normal::pdf(normal::quantile(0.1));
            let qtol = 4.0 * sd * (0.1 * 0.9f64).sqrt() / (dens * (cfg.draws as f64).sqrt());
            assert!(
                (r.q_alpha_hat - r.q_closed).abs() <= qtol,
                "{class:?}: {} vs {}",
                r.q_alpha_hat,
                r.q_closed
            );
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let ctx = linear_context(0.0);
        let class = PerturbationClass::gp(0.5, 2.0).unwrap();
        let cfg = EstimateConfig::default();
        let a = estimate(&ctx, &class, &cfg, &SeedRecord::root(8)).unwrap();
        let b = estimate(&ctx, &class, &cfg, &SeedRecord::root(8)).unwrap();
        let c = estimate(&ctx, &class, &cfg, &SeedRecord::root(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.distribution.deltas(), c.distribution.deltas());
    }

    #[test]
    fn curves_share_random_numbers_with_draws() {
        let ctx = linear_context(0.0);
        let seed = SeedRecord::root(12);
        for class in classes().into_iter().skip(1) {
            // for basis classes the curve at the Study B points is the exact draw
            let grid = [
                ctx.points(Arm::Control).to_vec(),
                ctx.points(Arm::Treated).to_vec(),
            ];
            let curves = ctx
                .sample_curves(&class, [&grid[0], &grid[1]], 5, &seed)
                .unwrap();
            let prepared = ctx.prepare(&class).unwrap();
            let deltas = ctx.draw_deltas(&prepared, None, 5, &seed).unwrap();
            for (c, d) in curves.iter().zip(&deltas) {
                let from_curves = super::super::delta_hat(&c.treated, &c.control).unwrap();
                assert!((from_curves - d).abs() < 1e-10);
            }
        }
        // GP conditional mean curves interpolate the drawn values up to the jitter
        let class = PerturbationClass::gp(0.5, 3.0).unwrap();
        let grid = [
            ctx.points(Arm::Control).to_vec(),
            ctx.points(Arm::Treated).to_vec(),
        ];
        let curves = ctx
            .sample_curves(&class, [&grid[0], &grid[1]], 3, &seed)
            .unwrap();
        let prepared = ctx.prepare(&class).unwrap();
        let deltas = ctx.draw_deltas(&prepared, None, 3, &seed).unwrap();
        for (c, d) in curves.iter().zip(&deltas) {
            let from_curves = super::super::delta_hat(&c.treated, &c.control).unwrap();
            assert!((from_curves - d).abs() < 1e-3, "{from_curves} vs {d}");
        }
    }

    #[test]
    fn zero_variance_curves_are_the_fits() {
        let ctx = linear_context(0.0);
        let grid: Vec<f64> = (0..20).map(|i| 2.0 + 0.3 * i as f64).collect();
        let curves = ctx
            .sample_curves(
                &PerturbationClass::polynomial(vec![0.0; 4]).unwrap(),
                [&grid, &grid],
                3,
                &SeedRecord::root(1),
            )
            .unwrap();
        for c in curves {
            assert_eq!(c.control, ctx.fit(Arm::Control).evaluate_many(&grid));
            assert_eq!(c.treated, ctx.fit(Arm::Treated).evaluate_many(&grid));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_a_constant_to_treated_outcomes_shifts_every_draw(c in -3.0..3.0f64, seed in any::<u64>(), which in 0usize..3) {
            let class = &classes()[which];
            let base = linear_context(0.0);
            let shifted = linear_context(c);
            let cfg = EstimateConfig { draws: 300, alpha: 0.1 };
            let seed = SeedRecord::root(seed);
            let a = estimate(&base, class, &cfg, &seed).unwrap();
            let b = estimate(&shifted, class, &cfg, &seed).unwrap();
            for (x, y) in a.distribution.deltas().iter().zip(b.distribution.deltas()) {
                prop_assert!((y - x - c).abs() < 1e-9);
            }
            prop_assert!((b.report.q_alpha_hat - a.report.q_alpha_hat - c).abs() < 1e-9);
            let p_shifted = a.distribution.ecdf_below(-c);
            // ties within rounding of -c are the only possible disagreement
            prop_assert!((b.report.p_hat - p_shifted).abs() <= 1.0 / 300.0 + 1e-12);
        }
    }

    #[test]
    fn gaussian_kernel_context_flags_nothing_inside_support() {
        let ctx = linear_context(0.0);
        assert_eq!(ctx.fit(Arm::Control).kernel(), Kernel::Gaussian);
        assert_eq!(ctx.extrapolated_fraction(Arm::Control), 0.0);
    }
}
