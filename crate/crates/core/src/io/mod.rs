//! File formats: tensors, factor and correlation CSVs, run reports and configuration.

mod config_file;
mod csv_io;
mod report;
mod tensor_file;

pub use config_file::{ClientEntry, ConfigFile, LoadedConfig};
pub use csv_io::{
    export_correlation, export_factors, factor_file, format_value, import_factors, read_matrix_csv,
    write_matrix_csv,
};
pub use report::{reason_name, without_timings, ClientReport, RunReport, ServerReport};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, TENSOR_MAGIC, TENSOR_VERSION};
