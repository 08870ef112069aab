//! Multivariate time series container and CSV round-tripping.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// An N x D real-valued series sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    data: Array2<f64>,
    dt: f64,
    start_time: f64,
}

impl TimeSeries {
    pub fn new(data: Array2<f64>, dt: f64) -> Self {
        TimeSeries {
            data,
            dt,
            start_time: 0.0,
        }
    }

    pub fn with_start_time(data: Array2<f64>, dt: f64, start_time: f64) -> Self {
        TimeSeries {
            data,
            dt,
            start_time,
        }
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Time coordinate of sample `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.start_time + self.dt * i as f64
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    /// Copy of the samples in `range`, keeping the time grid aligned.
    pub fn window(&self, range: std::ops::Range<usize>) -> TimeSeries {
        let start_time = self.time_at(range.start);
        let data = self.data.slice(ndarray::s![range, ..]).to_owned();
        TimeSeries {
            data,
            dt: self.dt,
            start_time,
        }
    }

    /// Every `stride`-th sample; the time step scales accordingly.
    pub fn decimate(&self, stride: usize) -> Result<TimeSeries> {
        if stride == 0 {
            return Err(Error::InvalidArgument("decimation stride must be >= 1".into()));
        }
        let data = self.data.slice(ndarray::s![..;stride, ..]).to_owned();
        Ok(TimeSeries {
            data,
            dt: self.dt * stride as f64,
            start_time: self.start_time,
        })
    }

    /// Splits chronologically: first `n_train` samples vs. the rest.
    pub fn split_at(&self, n_train: usize) -> Result<(TimeSeries, TimeSeries)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(Error::InvalidArgument(format!(
                "split index {n_train} must leave both segments nonempty (len {})",
                self.len()
            )));
        }
        Ok((self.window(0..n_train), self.window(n_train..self.len())))
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.data.axis_iter(Axis(0))
    }

    /// Writes `t,x0,x1,...` rows at full double precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let mut header = String::from("t");
        for x in 0..d {
            header.push_str(&format!(",x{x}"));
        }
        writeln!(w, "{header}")?;
        for (i, row) in self.iter_rows().enumerate() {
            let mut line = fmt_f64(self.time_at(i));
            for v in row.iter() {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a CSV written by [`TimeSeries::write_csv`] (leading `t` column required).
    pub fn load_csv(path: &Path) -> Result<TimeSeries> {
        let f = std::fs::File::open(path)?;
        let reader = BufReader::new(f);
        let name = path.display().to_string();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        let mut width = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                width = line.split(',').count();
                if width < 2 || !line.starts_with('t') {
                    return Err(Error::Parse {
                        path: name,
                        row: 1,
                        col: 1,
                        msg: "expected header `t,x0,...`".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::Parse {
                    path: name,
                    row: lineno + 1,
                    col: 1,
                    msg: format!("expected {} cells, found {}", width, cells.len()),
                });
            }
            let mut row = Vec::with_capacity(width - 1);
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    path: name.clone(),
                    row: lineno + 1,
                    col: c + 1,
                    msg: format!("not a number: {cell:?}"),
                })?;
                if c == 0 {
                    times.push(v);
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                path: name,
                row: 1,
                col: 1,
                msg: "no data rows".into(),
            });
        }
        let d = rows[0].len();
        let mut data = Array2::zeros((rows.len(), d));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                data[[i, j]] = *v;
            }
        }
        let dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        Ok(TimeSeries {
            data,
            dt,
            start_time: times[0],
        })
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
