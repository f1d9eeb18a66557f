//! CSV output and input. Floats are written in `%.17g` form so that every
//! value round-trips exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::ensemble::EnsembleSummary;
use crate::error::{Error, Result};
use crate::inference::Chain;
use crate::trajectory::Trajectory;

/// C `printf("%.17g")` formatting.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    const P: i32 = 17;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{field}` is not a number")))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

fn numbered(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |k| format!("{prefix}{k}"))
}

/// `t, z_1, .., z_d`.
pub fn write_trajectory<W: Write>(w: W, path: &Trajectory) -> Result<()> {
    let mut out = writer(w);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("z_", path.dim()))
        .collect();
    out.write_record(&header).map_err(csv_err)?;
    for (t, z) in path.times.iter().zip(&path.states) {
        let row = std::iter::once(fmt_g17(*t)).chain(z.iter().map(|v| fmt_g17(*v)));
        out.write_record(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory_file(file: &Path, path: &Trajectory) -> Result<()> {
    write_trajectory(create(file)?, path)
}

/// Reads a file written by [`write_trajectory`]. The method tag and
/// parameters are not stored in the file and come back empty.
pub fn read_trajectory<R: Read>(r: R) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        return Err(Error::Parse("trajectory header must be `t,z_1,..`".into()));
    }
    let d = headers.len() - 1;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != d + 1 {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields",
                line + 2,
                d + 1
            )));
        }
        times.push(parse_f64(&record[0], line + 2)?);
        let z = (1..=d)
            .map(|k| parse_f64(&record[k], line + 2))
            .collect::<Result<Vec<_>>>()?;
        states.push(DVector::from_vec(z));
    }
    if times.is_empty() {
        return Err(Error::Parse("trajectory file has no rows".into()));
    }
    if times
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::Parse(
            "trajectory times are not strictly increasing".into(),
        ));
    }
    Ok(Trajectory {
        times,
        states,
        method: String::new(),
        theta: Vec::new(),
    })
}

/// Long format `rep, t, z_1, .., z_d`, members numbered from zero.
pub fn write_ensemble<W: Write>(w: W, members: &[Trajectory]) -> Result<()> {
    let mut out = writer(w);
    let d = members.first().map_or(0, |m| m.dim());
    let header: Vec<String> = ["rep".to_string(), "t".to_string()]
        .into_iter()
        .chain(numbered("z_", d))
        .collect();
    out.write_record(&header).map_err(csv_err)?;
    for (m, path) in members.iter().enumerate() {
        for (t, z) in path.times.iter().zip(&path.states) {
            let row = [m.to_string(), fmt_g17(*t)]
                .into_iter()
                .chain(z.iter().map(|v| fmt_g17(*v)));
            out.write_record(row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_ensemble_file(file: &Path, members: &[Trajectory]) -> Result<()> {
    write_ensemble(create(file)?, members)
}

/// `t, mean_1, .., mean_d, std_1, .., std_d`.
pub fn write_summary<W: Write>(w: W, summary: &EnsembleSummary) -> Result<()> {
    let mut out = writer(w);
    let d = summary.mean.first().map_or(0, |m| m.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("mean_", d))
        .chain(numbered("std_", d))
        .collect();
    out.write_record(&header).map_err(csv_err)?;
    for ((t, m), s) in summary.times.iter().zip(&summary.mean).zip(&summary.std) {
        let row = std::iter::once(fmt_g17(*t))
            .chain(m.iter().map(|v| fmt_g17(*v)))
            .chain(s.iter().map(|v| fmt_g17(*v)));
        out.write_record(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_file(file: &Path, summary: &EnsembleSummary) -> Result<()> {
    write_summary(create(file)?, summary)
}

/// `h, rms_error` rows of a convergence study.
pub fn write_rates<W: Write>(w: W, hs: &[f64], errors: &[f64]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["h", "rms_error"]).map_err(csv_err)?;
    for (h, e) in hs.iter().zip(errors) {
        out.write_record([fmt_g17(*h), fmt_g17(*e)])
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rates_file(file: &Path, hs: &[f64], errors: &[f64]) -> Result<()> {
    write_rates(create(file)?, hs, errors)
}

/// Samples of a chain as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub samples: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub accepted: Vec<bool>,
}

/// `iter, theta_1, .., theta_q, logpost, accepted` with iterations from one.
pub fn write_chain<W: Write>(w: W, chain: &Chain) -> Result<()> {
    let mut out = writer(w);
    let q = chain.samples.first().map_or(chain.init.len(), |s| s.len());
    let header: Vec<String> = std::iter::once("iter".to_string())
        .chain(numbered("theta_", q))
        .chain(["logpost".to_string(), "accepted".to_string()])
        .collect();
    out.write_record(&header).map_err(csv_err)?;
    for (k, ((s, lp), a)) in chain
        .samples
        .iter()
        .zip(&chain.log_posterior)
        .zip(&chain.accepted)
        .enumerate()
    {
        let row = std::iter::once((k + 1).to_string())
            .chain(s.iter().map(|v| fmt_g17(*v)))
            .chain([fmt_g17(*lp), (*a as u8).to_string()]);
        out.write_record(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_chain_file(file: &Path, chain: &Chain) -> Result<()> {
    write_chain(create(file)?, chain)
}

pub fn read_chain<R: Read>(r: R) -> Result<ChainRecord> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let n = headers.len();
    if n < 4
        || headers.get(0) != Some("iter")
        || headers.get(n - 1) != Some("accepted")
        || headers.get(n - 2) != Some("logpost")
    {
        return Err(Error::Parse(
            "chain header must be `iter,theta_1,..,logpost,accepted`".into(),
        ));
    }
    let q = n - 3;
    let mut rec = ChainRecord {
        samples: Vec::new(),
        log_posterior: Vec::new(),
        accepted: Vec::new(),
    };
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = line + 2;
        if record.len() != n {
            return Err(Error::Parse(format!("line {line}: expected {n} fields")));
        }
        let iter: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad iteration index")))?;
        if iter != rec.samples.len() + 1 {
            return Err(Error::Parse(format!(
                "line {line}: iterations must count up from 1"
            )));
        }
        rec.samples.push(
            (1..=q)
                .map(|k| parse_f64(&record[k], line))
                .collect::<Result<_>>()?,
        );
        rec.log_posterior.push(parse_f64(&record[q + 1], line)?);
        rec.accepted.push(match record[q + 2].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse(format!(
                    "line {line}: accepted flag `{other}`"
                )))
            }
        });
    }
    Ok(rec)
}
