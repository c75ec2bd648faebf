//! File formats: beat annotation text files, 16-bit PCM WAV audio, and
//! report artifacts (metrics CSV/JSON, histogram CSV/SVG, loss logs).
//!
//! Everything here is deterministic plain-text or little-endian binary with
//! no external format libraries, so artifacts diff cleanly and parse errors
//! can point at exact lines.

mod beats;
mod report;
mod wav;

pub use beats::{beats_to_string, parse_beats, parse_beats_str, write_beats};
pub use report::{
    histogram_csv, histogram_svg, json_artifact, loss_log_csv, metric_cell, metrics_csv,
    metrics_json, report_rows, write_text, Provenance,
};
pub use wav::{read_wav, resample_linear, write_wav, WavAudio};
