//! CSV readers and writers.
//!
//! Matrix CSVs carry no header row: an activation set is N rows of D cells, a
//! linear head is C weight rows of D cells followed by one bias row of C
//! cells. Score exports carry a `score,is_id` header since they feed plotting
//! tools. Decimal separator is '.', delimiter is ','.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{OodError, Result};
use crate::types::{ActivationSet, LinearHead, ScoreSet};

fn parse_numeric_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| OodError::NonNumericCell {
                line: lineno + 1,
                column: col + 1,
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(OodError::EmptyInput("csv file"));
    }
    Ok(rows)
}

/// Reads a rectangular numeric CSV as an activation set (no labels, no tag).
pub fn read_csv_activation_set(path: &Path) -> Result<ActivationSet> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_numeric_rows(&text)?;
    let d = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(OodError::RaggedRows {
                line: i + 1,
                expected: d,
                got: r.len(),
            });
        }
    }
    ActivationSet::from_rows(&rows, None)
}

/// Reads a head stored as C rows of D weights followed by one row of C biases.
pub fn read_linear_head(path: &Path) -> Result<LinearHead> {
    let text = std::fs::read_to_string(path)?;
    parse_linear_head_text(&text)
}

/// Same head layout parsed from an in-memory block (used by network files).
pub fn parse_linear_head_text(text: &str) -> Result<LinearHead> {
    let rows = parse_numeric_rows(text)?;
    if rows.len() < 3 {
        return Err(OodError::BadParameter(format!(
            "head csv needs at least 2 weight rows and a bias row, found {} rows",
            rows.len()
        )));
    }
    let classes = rows.len() - 1;
    let dims = rows[0].len();
    for (i, r) in rows[..classes].iter().enumerate() {
        if r.len() != dims {
            return Err(OodError::RaggedRows {
                line: i + 1,
                expected: dims,
                got: r.len(),
            });
        }
    }
    let bias = &rows[classes];
    if bias.len() != classes {
        return Err(OodError::RaggedRows {
            line: classes + 1,
            expected: classes,
            got: bias.len(),
        });
    }
    LinearHead::from_rows(&rows[..classes], bias.clone())
}

/// Writes a head in the same C-weight-rows-plus-bias-row layout.
pub fn write_linear_head(head: &LinearHead, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_linear_head_block(&mut w, head)?;
    w.flush()?;
    Ok(())
}

/// Writes the head block into an existing writer (used by network files).
pub fn write_linear_head_block(w: &mut impl Write, head: &LinearHead) -> Result<()> {
    for c in 0..head.classes() {
        writeln!(w, "{}", join_floats(head.weight_row(c)))?;
    }
    writeln!(w, "{}", join_floats(head.bias()))?;
    Ok(())
}

/// Exports a score set with a `score,is_id` header.
pub fn write_score_csv(scores: &ScoreSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "score,is_id")?;
    for (s, id) in scores.scores().iter().zip(scores.is_id()) {
        writeln!(w, "{},{}", s, id)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn join_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("oodkit-csv-{}-{}", std::process::id(), name));
        p
    }

    #[test]
    fn two_by_two_set() {
        let path = tmp("set.csv");
        std::fs::write(&path, "1,2\n3,4\n").unwrap();
        let set = read_csv_activation_set(&path).unwrap();
        assert_eq!(set.n_samples(), 2);
        assert_eq!(set.n_dims(), 2);
        assert_eq!(set.row(1), &[3.0, 4.0]);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn ragged_rows_rejected() {
        let path = tmp("ragged.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(
            read_csv_activation_set(&path),
            Err(OodError::RaggedRows { line: 2, .. })
        ));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn non_numeric_cell_rejected() {
        let path = tmp("nonnum.csv");
        std::fs::write(&path, "1,x\n").unwrap();
        assert!(matches!(
            read_csv_activation_set(&path),
            Err(OodError::NonNumericCell { line: 1, column: 2 })
        ));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn head_roundtrip_c2_d3() {
        let path = tmp("head.csv");
        std::fs::write(&path, "1,2,3\n4,5,6\n0.5,-0.5\n").unwrap();
        let head = read_linear_head(&path).unwrap();
        assert_eq!(head.classes(), 2);
        assert_eq!(head.dims(), 3);
        assert_eq!(head.bias(), &[0.5, -0.5]);
        let out = tmp("head-out.csv");
        write_linear_head(&head, &out).unwrap();
        let back = read_linear_head(&out).unwrap();
        assert_eq!(head, back);
        std::fs::remove_file(&path).unwrap();
        std::fs::remove_file(&out).unwrap();
    }

    #[test]
    fn head_bias_row_length_checked() {
        let path = tmp("head-bad.csv");
        std::fs::write(&path, "1,2,3\n4,5,6\n0.5,0.5,0.5\n").unwrap();
        assert!(matches!(
            read_linear_head(&path),
            Err(OodError::RaggedRows { line: 3, .. })
        ));
        std::fs::remove_file(&path).unwrap();
    }
}
