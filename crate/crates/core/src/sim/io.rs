//! CSV emission shared by the simulators and the solvers.

use std::io::{self, Write};

use super::{Event, MeasureTrajectory};

/// Heatmap matrix: header `t,<bin centre>...`, one row per time.
pub fn write_heatmap<W: Write, R: AsRef<[f64]>>(
    w: &mut W,
    centres: &[f64],
    rows: &[(f64, R)],
) -> io::Result<()> {
    write!(w, "t")?;
    for c in centres {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (t, row) in rows {
        write!(w, "{t}")?;
        for v in row.as_ref() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Bin centres from edges.
pub fn centres(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
}

/// Heatmap of a trajectory's histogram snapshots.
pub fn write_trajectory_heatmap<W: Write>(w: &mut W, traj: &MeasureTrajectory) -> io::Result<()> {
    let edges = traj.bin_edges.as_ref().ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, "trajectory has no histograms")
    })?;
    let rows: Vec<(f64, &[f64])> = traj
        .snapshots
        .iter()
        .filter_map(|s| s.histogram.as_ref().map(|h| (s.t, h.as_slice())))
        .collect();
    write_heatmap(w, &centres(edges), &rows)
}

/// `t,mass` for every entry of the mass track.
pub fn write_mass<W: Write>(w: &mut W, traj: &MeasureTrajectory) -> io::Result<()> {
    writeln!(w, "t,mass")?;
    for (t, m) in &traj.mass {
        writeln!(w, "{t},{m}")?;
    }
    Ok(())
}

/// `time,kind,parent_trait,child_trait`; the child column is empty unless a mutant was born.
pub fn write_event_log<W: Write>(w: &mut W, events: &[Event]) -> io::Result<()> {
    writeln!(w, "time,kind,parent_trait,child_trait")?;
    for e in events {
        match e.child {
            Some(c) => writeln!(w, "{},{},{},{}", e.time, e.kind.as_str(), e.parent, c)?,
            None => writeln!(w, "{},{},{},", e.time, e.kind.as_str(), e.parent)?,
        }
    }
    Ok(())
}
