//! Training-log CSV.

use std::io::{self, BufRead, Write};

use super::{LossParts, LossWeights};

pub const LOG_HEADER: &str = "epoch,L_phys,L_data,L_BC,L_init,L_total,lambda_phys,lambda_data,lambda_bc,lambda_init,G_ads";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub parts: LossParts<f64>,
    pub total: f64,
    pub weights: LossWeights<f64>,
    pub g_ads: f64,
}

impl LogRow {
    fn fields(&self) -> [f64; 10] {
        let (p, w) = (&self.parts, &self.weights);
        [p.phys, p.data, p.bc(), p.init, self.total, w.phys, w.data, w.bc, w.init, self.g_ads]
    }
}

fn sig9(v: &f64) -> String {
    format!("{v:.8e}")
}

/// Streams rows to any writer.
pub struct TrainingLog<W: Write> {
    out: W,
}

impl<W: Write> TrainingLog<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{LOG_HEADER}")?;
        Ok(Self { out })
    }

    /// Continues an existing log without repeating the header.
    pub fn append(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, row: &LogRow) -> io::Result<()> {
        let cols: Vec<String> = row.fields().iter().map(sig9).collect();
        writeln!(self.out, "{},{}", row.epoch, cols.join(","))?;
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Parses a log written by [`TrainingLog`]. The boundary column is read
/// back into `bc_periodic`.
pub fn read_log(input: impl BufRead) -> io::Result<Vec<LogRow>> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut lines = input.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == LOG_HEADER => {}
        other => return Err(bad(format!("unexpected log header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(bad(format!("expected 11 columns, got {}", cols.len())));
        }
        let epoch = cols[0].parse().map_err(|e| bad(format!("epoch: {e}")))?;
        let v: Vec<f64> =
            cols[1..].iter().map(|c| c.parse::<f64>()).collect::<Result<_, _>>().map_err(|e| bad(e.to_string()))?;
        rows.push(LogRow {
            epoch,
            parts: LossParts { phys: v[0], data: v[1], bc_periodic: v[2], bc_bounce: 0.0, init: v[3] },
            total: v[4],
            weights: LossWeights { phys: v[5], data: v[6], bc: v[7], init: v[8] },
            g_ads: v[9],
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        let row = LogRow {
            epoch: 42,
            parts: LossParts { phys: 0.1, data: 0.01, bc_periodic: 1e-3, bc_bounce: 0.0, init: 2e-3 },
            total: 0.23,
            weights: LossWeights::default(),
            g_ads: -1.25,
        };
        let mut log = TrainingLog::new(Vec::new()).unwrap();
        log.write(&row).unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        assert_eq!(text.lines().next().unwrap(), LOG_HEADER);
        assert!(text.lines().nth(1).unwrap().starts_with("42,1.00000000e-1,"));
        let back = read_log(text.as_bytes()).unwrap();
        assert_eq!(back, vec![row]);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_log("epoch,loss\n1,2\n".as_bytes()).is_err());
    }
}
