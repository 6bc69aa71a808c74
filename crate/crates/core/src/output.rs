//! Result persistence. All numbers use the shortest round-trip decimal form,
//! so identical results give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::campaign::{CampaignResult, CellResult, CellStatus};
use crate::converter::Waveform;
use crate::error::{Error, Result};
use crate::extraction::{normalize_series, FitResult};

pub const CELL_CSV_HEADER: &str = "t_min,rds_on_ohm,rds_norm";
pub const SUMMARY_CSV_HEADER: &str = "cell_id,v_stress_V,v_max_measured_V,temp_K,slope_ohm_per_ln_min,intercept_ohm,r_squared,n_samples,status,soa_violations";
pub const SUMMARY_FILE: &str = "campaign_summary.csv";
pub const WAVEFORM_FILE: &str = "waveform.csv";
pub const FIT_FILE: &str = "fit.txt";

pub enum Emit<'a> {
    Campaign(&'a CampaignResult),
    Waveform(&'a Waveform),
    Fit(&'a FitResult),
}

pub fn cell_file_name(index: usize) -> String {
    format!("cell_{index:03}.csv")
}

/// Writes `result` into `out_dir` and returns the paths written, in order.
pub fn emit_results(result: Emit<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !out_dir.is_dir() {
        return Err(Error::Io {
            path: out_dir.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        });
    }
    let mut written = Vec::new();
    match result {
        Emit::Campaign(c) => {
            for (i, cell) in c.cells.iter().enumerate() {
                let path = out_dir.join(cell_file_name(i));
                write_file(&path, |w| write_cell_csv(cell, w))?;
                written.push(path);
            }
            let path = out_dir.join(SUMMARY_FILE);
            write_file(&path, |w| write_summary(c, w))?;
            written.push(path);
        }
        Emit::Waveform(wf) => {
            let path = out_dir.join(WAVEFORM_FILE);
            write_file(&path, |w| wf.write_csv(w))?;
            written.push(path);
        }
        Emit::Fit(f) => {
            let path = out_dir.join(FIT_FILE);
            write_file(&path, |w| w.write_all(f.to_record().as_bytes()))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_cell_csv<W: Write>(cell: &CellResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CELL_CSV_HEADER}")?;
    let norm = normalize_series(&cell.samples).unwrap_or_default();
    for (s, n) in cell.samples.iter().zip(&norm) {
        writeln!(w, "{},{},{}", s.t, s.rds_on, n.rds_on)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary<W: Write>(c: &CampaignResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for (i, cell) in c.cells.iter().enumerate() {
        let status = match &cell.status {
            CellStatus::Completed => "completed".to_string(),
            // keep the row a single CSV record
            CellStatus::Aborted(why) => format!("aborted: {}", why.replace([',', '\n', '"'], ";")),
        };
        let v_max = cell
            .v_max_measured
            .is_finite()
            .then_some(cell.v_max_measured);
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{},{}",
            cell.cell.v_stress,
            opt(v_max),
            cell.cell.temp,
            opt(cell.fit.map(|f| f.slope)),
            opt(cell.fit.map(|f| f.intercept)),
            opt(cell.fit.map(|f| f.r_squared)),
            cell.samples.len(),
            status,
            cell.soa.len()
        )?;
    }
    Ok(())
}
