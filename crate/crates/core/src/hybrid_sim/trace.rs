//! Trace CSV: `t, j, s, o, xi1..xiν, xihat1..xihatν, V_H`, one row per
//! sample. Jump instants appear twice, once closing interval `j` and once
//! opening `j + 1`. Floats use the shortest round-trip representation.

use std::io::{Read, Write};

use nalgebra::DVector;
use thiserror::Error;

use super::{FlowSegment, HybridArc, Sample};
use crate::constrain::AutomatonState;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace header malformed: {0}")]
    Header(String),
    #[error("trace row {row}: {message}")]
    Row { row: usize, message: String },
}

/// Writes `arc` with `v_h` evaluated at every sample.
pub fn write_trace<W: Write>(
    out: W,
    arc: &HybridArc,
    v_h: impl Fn(AutomatonState, &DVector<f64>) -> f64,
) -> Result<(), TraceError> {
    let nu = arc.segments[0].start().zeta.len() / 2;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "j".into(), "s".into(), "o".into()];
    header.extend((1..=nu).map(|i| format!("xi{i}")));
    header.extend((1..=nu).map(|i| format!("xihat{i}")));
    header.push("V_H".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (t, j, chi, zeta) in arc.points() {
        row.clear();
        row.push(t.to_string());
        row.push(j.to_string());
        row.push(chi.s.to_string());
        row.push(chi.o.to_string());
        row.extend(zeta.iter().map(f64::to_string));
        row.push(v_h(chi, zeta).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the segments back; the `V_H` column is ignored.
pub fn parse_trace<R: Read>(input: R) -> Result<Vec<FlowSegment>, TraceError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let n = header.len();
    if n < 5 || (n - 5) % 2 != 0 || &header[0] != "t" || &header[1] != "j" || &header[n - 1] != "V_H" {
        return Err(TraceError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let dim = n - 5;
    let mut segments: Vec<FlowSegment> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |message: String| TraceError::Row { row, message };
        let float = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(format!("column {k}: {e}")));
        let int = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(format!("column {k}: {e}")));
        let t = float(0)?;
        let j = int(1)?;
        let chi = AutomatonState::new(int(2)?, int(3)?);
        let zeta = DVector::from_iterator(dim, (4..4 + dim).map(float).collect::<Result<Vec<_>, _>>()?);
        let sample = Sample { t, zeta };
        match segments.last_mut() {
            Some(seg) if seg.j == j => {
                if seg.chi != chi {
                    return Err(bad(format!("automaton state changes within interval {j}")));
                }
                if t < seg.end().t {
                    return Err(bad("time decreases within an interval".into()));
                }
                seg.samples.push(sample);
            }
            last => {
                let expected = last.map_or(0, |s| s.j + 1);
                if j != expected {
                    return Err(bad(format!("interval {j} follows {}", expected as isize - 1)));
                }
                segments.push(FlowSegment { j, chi, samples: vec![sample] });
            }
        }
    }
    if segments.is_empty() {
        return Err(TraceError::Header("trace has no rows".into()));
    }
    Ok(segments)
}
