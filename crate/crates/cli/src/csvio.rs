//! CSV emission and parsing for BER sweeps and training loss traces.
//!
//! Floats carry 17 significant digits so every value round-trips exactly.

use std::io::Write;
use std::path::Path;

use ris_mimo::autoencoder::LossTrace;
use ris_mimo::ber::BerPoint;

pub const BER_HEADER: &str =
    "snr_db,sigma_e,n_bits,n_errors,ber,wall_time_ms,wilson_halfwidth_95,low_errors";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// One BER record per row, schema [`BER_HEADER`].
pub fn write_ber_csv(points: &[BerPoint], path: &Path) -> anyhow::Result<()> {
    let mut out = String::new();
    out.push_str(BER_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt(p.snr_db),
            fmt(p.sigma_e),
            p.n_bits,
            p.n_errors,
            fmt(p.ber()),
            fmt(p.wall_time_ms),
            fmt(p.wilson_halfwidth_95()),
            u8::from(p.low_error_count()),
        ));
    }
    write_with_context(path, &out)
}

/// Parses a file written by [`write_ber_csv`].
pub fn read_ber_csv(path: &Path) -> anyhow::Result<Vec<BerPoint>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow::anyhow!("empty CSV {}", path.display()))?;
    if header != BER_HEADER {
        anyhow::bail!("unexpected header in {}: {header}", path.display());
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            anyhow::bail!("{}: row {} has {} columns", path.display(), i + 2, cols.len());
        }
        points.push(BerPoint {
            snr_db: cols[0].parse()?,
            sigma_e: cols[1].parse()?,
            n_bits: cols[2].parse()?,
            n_errors: cols[3].parse()?,
            wall_time_ms: cols[5].parse()?,
        });
    }
    Ok(points)
}

/// Loss trace as `iteration,loss,loss_1..,alpha_1..` rows.
pub fn write_loss_csv(trace: &LossTrace, path: &Path) -> anyhow::Result<()> {
    let n_streams = trace.records.first().map_or(0, |r| r.per_stream.len());
    let mut header = String::from("iteration,loss");
    for i in 1..=n_streams {
        header.push_str(&format!(",loss_{i}"));
    }
    for i in 1..=n_streams {
        header.push_str(&format!(",alpha_{i}"));
    }
    let mut out = header;
    out.push('\n');
    for r in &trace.records {
        out.push_str(&r.iteration.to_string());
        out.push(',');
        out.push_str(&fmt(r.total));
        for v in r.per_stream.iter().chain(r.alpha.iter()) {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push('\n');
    }
    write_with_context(path, &out)
}

fn write_with_context(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    Ok(())
}
