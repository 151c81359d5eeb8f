//! FER simulation, concentration bounds, and experiment orchestration.

mod bounds;
mod experiment;
mod simulate;
mod stats;
mod sweeps;

pub use bounds::{
    davis_kahan_bound, hoeffding_objective_bound, matrix_bound, validate_concentration, ConcentrationReport,
    CoverageReport, SyntheticSpec,
};
pub use experiment::{
    build_decoder, instantiate_decoder, obtain_mlp, parity_check_sha256, run_experiment, write_rows, AttackSection,
    DecoderSection, ExperimentConfig, ExperimentOutcome, Manifest, MlpSection, ResultRow, SmoothingSection,
    DECODER_NAMES, FAILURE_MARKER,
};
pub use simulate::{estimate_fer, simulate, FerConfig, Perturber, SimulationRun};
pub use stats::{mcnemar_one_sided, wilson_interval, FerInverse, FerStats, PairedCounts};
pub use sweeps::{
    ablation_alpha_sweep, attack_label, parse_attack, prepare_attack, transferability_matrix, AblationRow,
    AblationTable, AttackSettings, MonotonicityDiagnostic, PreparedAttack, TransferCell,
};
