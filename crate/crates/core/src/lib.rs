// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cusum;
pub mod error;
pub mod lsw;
pub mod mvts;
pub mod sbs;
pub mod series;
pub mod simbench;
pub mod wavelet;

pub use cusum::{aggregate, cusum_curve, AggregatedCurve, Aggregation, CusumCurve, Segment};
pub use error::{Error, Result};
pub use lsw::{expected_periodogram, local_autocov, simulate, LswSpec, PiecewiseConstant};
pub use mvts::{
    across_scale_merge, calibrate_thresholds, fit_ar1, sbs_mvts, CalibrationConfig, MvtsConfig,
    MvtsOutput, ThresholdTable,
};
pub use sbs::{
    find_candidate, post_process_within, sbs_segment, Balance, ChangePoint, ChangePointSet,
    DensePanel, PanelSource, SbsConfig,
};
pub use series::{MultivariateSeries, TruthSidecar};
pub use simbench::{
    evaluate, generate, generate_with_provenance, run_benchmark, BenchRow, EvalReport, Model,
    ModelSpec,
};
pub use wavelet::{
    autocorr_wavelet, beta_transform, haar_coefficients, inverse_beta_transform, periodogram_panel,
    InnerProductMatrix, PeriodogramPanel, Scale, WaveletCoeffs,
};
