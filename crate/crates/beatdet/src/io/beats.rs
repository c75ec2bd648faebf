//! Beat annotation text files.
//!
//! The format is the common one-event-per-line layout: a beat time in
//! seconds, optionally followed by the metrical position (`1` = downbeat,
//! `2..` = other beats in the bar), separated by any run of spaces or tabs.
//! Empty lines and lines starting with `#` are skipped. A file must commit
//! to one shape — either every data line has a position column or none does.
//!
//! Writing uses six decimal places, which is below a tenth of a sample at
//! the rates this crate works at, so `parse_beats(write_beats(seq))` is the
//! identity for sequences whose times are already quantized that finely.
//! Sequences carrying downbeats without explicit positions are written with
//! a derived position column (see [`beats_to_string`]); their times and
//! downbeats survive the round trip exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BeatSequence;

/// Reads a beat annotation file. See the module docs for the format.
///
/// Errors carry the 1-based line number of the offending row, both for
/// malformed fields and for ordering violations, so a bad file can be fixed
/// without bisecting it by hand.
pub fn parse_beats(path: impl AsRef<Path>) -> Result<BeatSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_beats_str(&text, &path.display().to_string())
}

/// Parses annotation text that is already in memory. `source` is the name
/// used in error messages (a path, or something like `"<stdin>"`).
pub fn parse_beats_str(text: &str, source: &str) -> Result<BeatSequence> {
    let mut times: Vec<f64> = Vec::new();
    let mut positions: Vec<u32> = Vec::new();
    // None until the first data line fixes the column count for the file.
    let mut has_positions: Option<bool> = None;

    let err = |line: usize, detail: String| Error::Parse {
        path: source.into(),
        line,
        detail,
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() > 2 {
            return Err(err(
                line_no,
                format!("expected 1 or 2 columns, found {}", fields.len()),
            ));
        }
        let with_position = fields.len() == 2;
        match has_positions {
            None => has_positions = Some(with_position),
            Some(expected) if expected != with_position => {
                return Err(err(
                    line_no,
                    format!(
                        "inconsistent columns: file started with {} per line, this line has {}",
                        if expected { 2 } else { 1 },
                        fields.len()
                    ),
                ));
            }
            Some(_) => {}
        }

        let t: f64 = fields[0]
            .parse()
            .map_err(|_| err(line_no, format!("invalid beat time {:?}", fields[0])))?;
        if !t.is_finite() || t < 0.0 {
            return Err(err(
                line_no,
                format!("beat time must be finite and non-negative, got {t}"),
            ));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(err(
                    line_no,
                    format!("beat times must strictly ascend ({t} after {prev})"),
                ));
            }
        }
        times.push(t);

        if with_position {
            let p: u32 = fields[1]
                .parse()
                .map_err(|_| err(line_no, format!("invalid position {:?}", fields[1])))?;
            positions.push(p);
        }
    }

    if has_positions == Some(true) {
        BeatSequence::from_positions(times, positions)
    } else {
        BeatSequence::from_times(times)
    }
}

/// Renders a sequence in the annotation format: times at six decimals,
/// with a position column whenever the sequence carries downbeat
/// information.
///
/// Sequences that know their downbeats but not full metrical positions
/// (decoder output) get a derived column: `1` at each downbeat, counting up
/// in between, and counting up from `2` before the first downbeat — so a
/// reader recovers exactly the downbeats that were predicted, and a
/// prediction of *zero* downbeats stays distinguishable from a beats-only
/// sequence.
pub fn beats_to_string(seq: &BeatSequence) -> String {
    let mut out = String::new();
    match position_column(seq) {
        Some(positions) => {
            for (t, p) in seq.times().iter().zip(positions) {
                out.push_str(&format!("{t:.6}\t{p}\n"));
            }
        }
        None => {
            for t in seq.times() {
                out.push_str(&format!("{t:.6}\n"));
            }
        }
    }
    out
}

/// The column to write: explicit positions verbatim, a derived counting
/// column when only downbeats are known, nothing for beats-only sequences.
fn position_column(seq: &BeatSequence) -> Option<Vec<u32>> {
    if let Some(positions) = seq.positions() {
        return Some(positions.to_vec());
    }
    let downs = seq.downbeat_times()?;
    let mut column = Vec::with_capacity(seq.len());
    let mut next_down = 0usize;
    let mut pos: u32 = 1;
    for &t in seq.times() {
        if next_down < downs.len() && downs[next_down] == t {
            next_down += 1;
            pos = 1;
        } else {
            pos += 1;
        }
        column.push(pos);
    }
    Some(column)
}

/// Writes a beat annotation file in the [`beats_to_string`] format.
pub fn write_beats(path: impl AsRef<Path>, seq: &BeatSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, beats_to_string(seq)).map_err(|e| Error::io(path, e))
}
