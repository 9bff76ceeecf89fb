//! Bit-exact persistence and configuration parsing.
//!
//! Three surfaces live here:
//!
//! * the `OODA` v1 binary dump format for activation sets (authoritative,
//!   32-bit float payload),
//! * plain CSV for heads, debugging matrices and result tables ('.' decimal
//!   separator, ',' delimiter, no header row on matrix files),
//! * the flat `key=value` configuration grammar with `#` comments.
//!
//! Readers are reentrant; concurrent writes to the same path are caller error.

mod config;
mod csv;
mod format;

pub use config::{parse_kv, ConfigPaths, ExperimentConfig, KvMap, ENHANCER_NAMES, SCORER_NAMES};
pub use csv::{
    parse_linear_head_text, read_csv_activation_set, read_linear_head, write_linear_head,
    write_linear_head_block, write_score_csv,
};
pub use format::{
    read_activation_set, read_profile, write_activation_set, write_profile, DumpHeader,
    FORMAT_VERSION, HEADER_LEN, MAGIC,
};
