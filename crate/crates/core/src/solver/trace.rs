use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Mcka,
    Mlao,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Mcka => "MCKA",
            Phase::Mlao => "MLAO",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MCKA" => Ok(Phase::Mcka),
            "MLAO" => Ok(Phase::Mlao),
            _ => Err(Error::Config(format!("unknown phase `{s}`"))),
        }
    }
}

/// One row of the convergence trace, written after each phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// Outer iteration, starting at 1.
    pub i: usize,
    pub phase: Phase,
    pub loss_mc: Option<f64>,
    /// Reconstruction loss of the last inner step.
    pub loss_re: Option<f64>,
    /// Meta-loss of the last meta-update.
    pub loss_ml: Option<f64>,
    pub sigma2: Option<f64>,
    pub kernel_psnr: Option<f64>,
    pub image_psnr: Option<f64>,
    pub wall_ms: f64,
}

pub const TRACE_HEADER: &str = "i,phase,loss_mc,loss_re,loss_ml,sigma2,kernel_psnr,image_psnr,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("bad trace number `{field}`")))
}

impl TraceRecord {
    /// CSV row without trailing newline. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:?}",
            self.i,
            self.phase,
            opt(self.loss_mc),
            opt(self.loss_re),
            opt(self.loss_ml),
            opt(self.sigma2),
            opt(self.kernel_psnr),
            opt(self.image_psnr),
            self.wall_ms
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim_end().split(',').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!("trace row needs 9 fields, got {}", f.len())));
        }
        Ok(Self {
            i: f[0].parse().map_err(|_| Error::Config(format!("bad iteration `{}`", f[0])))?,
            phase: f[1].parse()?,
            loss_mc: parse_opt(f[2])?,
            loss_re: parse_opt(f[3])?,
            loss_ml: parse_opt(f[4])?,
            sigma2: parse_opt(f[5])?,
            kernel_psnr: parse_opt(f[6])?,
            image_psnr: parse_opt(f[7])?,
            wall_ms: parse_opt(f[8])?.unwrap_or(0.0),
        })
    }
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != TRACE_HEADER {
        return Err(Error::Config("trace is missing its header".into()));
    }
    lines
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| TraceRecord::from_csv_row(&l?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let recs = vec![
            TraceRecord {
                i: 1,
                phase: Phase::Mcka,
                loss_mc: Some(0.1 + 0.2),
                loss_re: None,
                loss_ml: None,
                sigma2: None,
                kernel_psnr: Some(31.123456789012345),
                image_psnr: None,
                wall_ms: 12.5,
            },
            TraceRecord {
                i: 1,
                phase: Phase::Mlao,
                loss_mc: None,
                loss_re: Some(1e-300),
                loss_ml: Some(123456.789),
                sigma2: Some(1e-6),
                kernel_psnr: None,
                image_psnr: Some(22.0),
                wall_ms: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        assert!(text.contains("1,MLAO,,1e-300,"));
        assert_eq!(read_trace(&buf[..]).unwrap(), recs);
    }
}
