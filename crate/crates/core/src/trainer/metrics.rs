use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::TrainConfig;
use crate::error::{Error, Result};

pub const METRICS_COLUMNS: [&str; 10] = [
    "iter",
    "policy_loss",
    "bc_loss_part",
    "guidance_part",
    "q_loss",
    "v_loss",
    "mean_q_batch",
    "eval_return_mean",
    "eval_return_std",
    "wallclock_s",
];

/// One logged iteration. `v_loss` is empty for cpql runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub iter: usize,
    pub policy_loss: f64,
    pub bc_loss_part: f64,
    pub guidance_part: f64,
    pub q_loss: f64,
    pub v_loss: Option<f64>,
    pub mean_q_batch: f64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub wallclock_s: f64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let v = self.v_loss.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.policy_loss,
            self.bc_loss_part,
            self.guidance_part,
            self.q_loss,
            v,
            self.mean_q_batch,
            self.eval_return_mean,
            self.eval_return_std,
            self.wallclock_s
        )
    }
}

/// CSV sink: `# key=value` config echo lines, a header row, then one row per
/// logged iteration. Each row is flushed as it is written.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>, cfg: &TrainConfig) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path,
        };
        let mut head = String::new();
        for (k, v) in cfg.pairs() {
            head.push_str(&format!("# {k}={v}\n"));
        }
        head.push_str(&METRICS_COLUMNS.join(","));
        head.push('\n');
        w.write_raw(&head)?;
        Ok(w)
    }

    fn write_raw(&mut self, s: &str) -> Result<()> {
        self.out
            .write_all(s.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        let line = format!("{}\n", row.to_csv_line());
        self.write_raw(&line)
    }

    /// Final line written when a run aborts, so the file says why it stops.
    pub fn write_abort(&mut self, iter: usize, reason: &str) -> Result<()> {
        let line = format!("# aborted at iter={iter}: {}\n", reason.replace('\n', " "));
        self.write_raw(&line)
    }
}
