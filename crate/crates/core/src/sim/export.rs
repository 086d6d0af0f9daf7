use std::io::Write;

use super::{SimPath, Summary};
use crate::error::Result;
use crate::scalar::Scalar;

/// Writes paths as CSV with columns `path_id,t,w,c,theta_1..n`. The final row
/// of each path carries the terminal wealth with empty controls.
pub fn write_paths_csv<S: Scalar, W: Write>(out: W, paths: &[SimPath<S>]) -> Result<()> {
    let n = paths.iter().find_map(|p| p.theta.first().map(Vec::len)).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string(), "t".into(), "w".into(), "c".into()];
    header.extend((1..=n).map(|i| format!("theta_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for p in paths {
        for (k, (&t, &wk)) in p.times.iter().zip(&p.wealth).enumerate() {
            let mut row = vec![p.path_id.to_string(), t.to_string(), wk.to_string()];
            match (p.consumption.get(k), p.theta.get(k)) {
                (Some(c), Some(th)) => {
                    row.push(c.to_string());
                    row.extend(th.iter().map(ToString::to_string));
                }
                _ => row.extend(std::iter::repeat_n(String::new(), n + 1)),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json<S: Scalar>(summary: &Summary<S>) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)?)
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}
