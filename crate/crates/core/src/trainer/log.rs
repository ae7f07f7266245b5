//! Append-only training log with a fixed CSV schema shared by all three
//! training loops. Fields that a loop does not produce stay `NaN` and render
//! as empty CSV cells.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// One logged step. `motion_metric` and `appearance_metric` are computed
/// once per outer iteration and repeated on that iteration's rows.
#[derive(Debug, Clone, Copy)]
pub struct LogRow {
    pub iter: usize,
    pub inner_step: usize,
    pub awr_loss: f64,
    pub sft_loss: f64,
    pub disc_loss: f64,
    pub mean_reward_fake: f64,
    pub mean_reward_real: f64,
    pub adv_min: f64,
    pub adv_max: f64,
    pub motion_metric: f64,
    pub appearance_metric: f64,
}

impl LogRow {
    /// A row with every metric unset.
    pub fn empty(iter: usize, inner_step: usize) -> Self {
        LogRow {
            iter,
            inner_step,
            awr_loss: f64::NAN,
            sft_loss: f64::NAN,
            disc_loss: f64::NAN,
            mean_reward_fake: f64::NAN,
            mean_reward_real: f64::NAN,
            adv_min: f64::NAN,
            adv_max: f64::NAN,
            motion_metric: f64::NAN,
            appearance_metric: f64::NAN,
        }
    }

    fn values(&self) -> [f64; 9] {
        [
            self.awr_loss,
            self.sft_loss,
            self.disc_loss,
            self.mean_reward_fake,
            self.mean_reward_real,
            self.adv_min,
            self.adv_max,
            self.motion_metric,
            self.appearance_metric,
        ]
    }

    /// True when every value that is set is finite. Unset (`NaN`) fields do
    /// not count as failures; infinities do.
    pub fn is_sane(&self) -> bool {
        self.values().iter().all(|v| !v.is_infinite())
    }
}

/// Rows plus any warnings a loop surfaced without aborting. The step
/// counters make the update accounting checkable from outside: one
/// discriminator step updates every active discriminator on its own fresh
/// minibatch.
#[derive(Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub warnings: Vec<String>,
    pub generator_steps: usize,
    pub discriminator_steps: usize,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "iter,inner_step,awr_loss,sft_loss,disc_loss,\
        mean_reward_fake,mean_reward_real,adv_min,adv_max,motion_metric,appearance_metric";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            write!(out, "{},{}", row.iter, row.inner_step).expect("string write");
            for v in row.values() {
                if v.is_nan() {
                    out.push(',');
                } else {
                    write!(out, ",{v}").expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Per-iteration mean of a column, for trend checks and plots.
    pub fn iteration_means(&self, pick: impl Fn(&LogRow) -> f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for row in &self.rows {
            let v = pick(row);
            if v.is_nan() {
                continue;
            }
            match out.last_mut() {
                Some((iter, sum, n)) if *iter == row.iter => {
                    *sum += v;
                    *n += 1;
                }
                _ => out.push((row.iter, v, 1)),
            }
        }
        out.into_iter()
            .map(|(iter, sum, n)| (iter, sum / n as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_renders_nan_as_empty_cells() {
        let mut log = TrainLog::default();
        let mut row = LogRow::empty(0, 1);
        row.sft_loss = 0.5;
        log.rows.push(row);
        let text = log.to_csv();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TrainLog::CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0,1,,0.5,,,,,,,");
    }

    #[test]
    fn header_matches_row_arity() {
        let columns = TrainLog::CSV_HEADER.split(',').count();
        let row = LogRow::empty(0, 0);
        assert_eq!(columns, 2 + row.values().len());
    }

    #[test]
    fn sanity_check_flags_infinities_but_not_unset_fields() {
        let mut row = LogRow::empty(3, 0);
        assert!(row.is_sane());
        row.awr_loss = f64::INFINITY;
        assert!(!row.is_sane());
    }

    #[test]
    fn iteration_means_group_rows() {
        let mut log = TrainLog::default();
        for (iter, inner, v) in [(0, 0, 1.0), (0, 1, 3.0), (1, 0, 5.0)] {
            let mut row = LogRow::empty(iter, inner);
            row.sft_loss = v;
            log.rows.push(row);
        }
        assert_eq!(
            log.iteration_means(|r| r.sft_loss),
            vec![(0, 2.0), (1, 5.0)]
        );
    }
}
