//! Calibration inputs: takedown delays from moderation records and
//! illegal-posting probabilities.

mod fit;
mod illegal;
mod sor;

pub(crate) use fit::least_squares;
pub use fit::{
    delays_and_ccdf, fit_tau, fit_tau_by_category, fit_tau_by_platform, read_ccdf, read_fit_report,
    write_ccdf, write_ccdf_points, write_fit_report, CategoryReport, CcdfPoint, DelayDistribution,
    FitMethod, FitOptions, FitRow, TauFit, DEFAULT_HEAD_SURVIVAL, DEFAULT_MIN_SAMPLES,
    DISCRETIZATION_OFFSET,
};
pub use illegal::{
    decimal_places, illegal_ratio, parse_decimal, round_to_places, sample_illegal_probs, AuditRow,
    IllegalProbSpec, COMMENT_AUDIT,
};
pub use sor::{
    ingest_sors, read_sors, write_synthetic_sors, DecisionGround, IngestReport, SorFilter,
    SorRecord, SENTINEL_CONTENT_DATE,
};
