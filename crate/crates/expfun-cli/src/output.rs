//! CSV and manifest writers. Every CSV row is self-describing and reruns with
//! the same config and seed are byte-identical; the manifest carries the only
//! timestamp.

use expfun::estimators::Estimate;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const CSV_HEADER: &str = "quantity,n,value,stderr,n_samples,method,seed,config_hash";

pub struct CsvBuilder {
    buf: String,
    seed: u64,
    config_hash: String,
}

impl CsvBuilder {
    pub fn new(seed: u64, config_hash: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(CSV_HEADER);
        buf.push('\n');
        CsvBuilder { buf, seed, config_hash: config_hash.to_string() }
    }

    pub fn row(&mut self, quantity: &str, n: usize, est: &Estimate) {
        self.row_parts(quantity, n, est.value, est.stderr, est.n_samples, &est.method_tag());
    }

    pub fn row_parts(
        &mut self,
        quantity: &str,
        n: usize,
        value: f64,
        stderr: f64,
        n_samples: u64,
        method: &str,
    ) {
        writeln!(
            self.buf,
            "{quantity},{n},{value},{stderr},{n_samples},{method},{seed},{hash}",
            seed = self.seed,
            hash = self.config_hash
        )
        .expect("string write");
    }

    pub fn write_to(&self, dir: &Path, name: &str) -> io::Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, self.buf.as_bytes())?;
        Ok(path)
    }
}

/// Estimates tag their method; log-domain results are marked so consumers
/// know value/stderr describe the log.
pub trait MethodTag {
    fn method_tag(&self) -> String;
}

impl MethodTag for Estimate {
    fn method_tag(&self) -> String {
        if self.log_domain {
            format!("{}_log", self.method)
        } else {
            self.method.to_string()
        }
    }
}

/// Write the renewal-table CSV (x, value, stderr).
pub fn write_renewal_csv(
    dir: &Path,
    table: &expfun::renewal::RenewalTable,
) -> io::Result<PathBuf> {
    let mut buf = String::from("x,value,stderr\n");
    for ((x, v), se) in table.grid.iter().zip(&table.values).zip(&table.stderr) {
        writeln!(buf, "{x},{v},{se}").expect("string write");
    }
    let path = dir.join("renewal.csv");
    fs::write(&path, buf.as_bytes())?;
    Ok(path)
}

/// Flat key=value run manifest; the timestamp lives here and nowhere else.
pub fn write_manifest(
    dir: &Path,
    subcommand: &str,
    seed: u64,
    config_hash: &str,
    outputs: &[PathBuf],
) -> io::Result<PathBuf> {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut buf = String::new();
    writeln!(buf, "tool=expfun {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(buf, "subcommand={subcommand}").unwrap();
    writeln!(buf, "seed={seed}").unwrap();
    writeln!(buf, "config_hash={config_hash}").unwrap();
    writeln!(buf, "timestamp_unix={ts}").unwrap();
    for p in outputs {
        writeln!(buf, "output={}", p.file_name().unwrap().to_string_lossy()).unwrap();
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, buf.as_bytes())?;
    Ok(path)
}
