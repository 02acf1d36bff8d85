use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("rank defect in {what}: smallest singular value {min_sv:e}")]
    RankDefect { what: &'static str, min_sv: f64 },
    #[error("point is off the manifold (residual {residual:e})")]
    OffManifold { residual: f64 },
    #[error("Newton projection diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("vector is not in the horizontal (1,0) space (deviation {deviation:e})")]
    NotHorizontal { deviation: f64 },
    #[error("lift is not unique: homogeneous system has smallest singular value {min_sv:e}")]
    NDimensionDefect { min_sv: f64 },
    #[error("lift system is inconsistent (least-squares residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("frame jumped between stencil points (overlap {overlap:e})")]
    FrameDiscontinuity { overlap: f64 },
    #[error("no transverse recipe with bracket words of length <= {tau}")]
    TypeDefect { tau: usize },
    #[error("tuple count {count} exceeds budget {cap}")]
    CombinatorialBudget { count: usize, cap: usize },
    #[error("tangent decomposition basis is singular (smallest singular value {min_sv:e})")]
    BasisDegenerate { min_sv: f64 },
    #[error("lifted tangent is not real (imaginary defect {defect:e})")]
    NonRealLift { defect: f64 },
    #[error("vector is not tangent to S (defect {defect:e})")]
    NotTangent { defect: f64 },
    #[error("step rejected at t={t}: q-residual {residual:e} after projection")]
    StepRejected { t: f64, residual: f64 },
    #[error("seed is {distance:e} from M (limit 1e-2)")]
    SeedRejected { distance: f64 },
    #[error("path does not start at the seed (distance {distance:e})")]
    PathMismatch { distance: f64 },
    #[error("loop does not close (gap {gap:e})")]
    LoopNotClosed { gap: f64 },
    #[error("mesh step {step:e} is too coarse for finite differences")]
    MeshTooCoarse { step: f64 },
    #[error("{failed} mesh points have no traced value")]
    MeshIncomplete { failed: usize },
    #[error("normalizer vanishes at {count} mesh points (min |C| = {min:e})")]
    NormalizerVanishes { count: usize, min: f64 },
    #[error("operation requires d = 1, got d = {d}")]
    WrongCodimension { d: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;
