//! Packet-error-rate experiments: gain setting from Eb/Nb, the repeated
//! eight-packet message protocol, threshold calibration per point and curve
//! output.

mod curve;
mod energy;
mod run;

pub use curve::{
    read_reference_overlay, wilson_interval, write_curve_csv, PerCurvePoint, ReferencePoint, CURVE_CSV_HEADER,
};
pub use energy::{
    compute_eb_nb_db, compute_eb_nb_db_with, estimate_pulse_rms, measure_reference_ratio, rms_to_peak_ratio, BitTiming,
    EbNbConvention,
};
pub use run::{
    calibrate_point, decoder_cost_profile, run_per_curve, run_per_point, CostPoint, CurveRun, ExperimentConfig,
    GainPolicy, PointCalibration, SlotOffsetPolicy, ThresholdSetting, DEFAULT_WORDS,
};
