//! Trace and ledger serialization: JSONL round dumps and CSV regret
//! ledgers.

use std::io::{self, Write};

use crate::arena::{RegretLedger, RoundResult};

/// Writes one JSON object per round, one round per line.
pub fn write_trace_jsonl<W: Write>(mut w: W, trace: &[RoundResult]) -> io::Result<()> {
    for round in trace {
        serde_json::to_writer(&mut w, round)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL trace back; the inverse of [`write_trace_jsonl`].
pub fn read_trace_jsonl<R: io::BufRead>(r: R) -> io::Result<Vec<RoundResult>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Writes the per-round regret ledger as CSV with a fixed column order.
pub fn write_ledger_csv<W: Write>(w: W, ledger: &RegretLedger) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "cum_regret", "cum_realized_regret", "collisions"])?;
    for (i, &r) in ledger.cum_regret.iter().enumerate() {
        wtr.write_record([
            (i + 1).to_string(),
            r.to_string(),
            ledger.cum_realized_regret[i].to_string(),
            ledger.collisions[i].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
