//! Delay-coordinate embedding: overlapping windows over a series, and the
//! context/query split used by the in-context adapters.

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};

/// K overlapping windows of length L over a D-dimensional series:
/// `data[[w, c, x]] = source[[w + c, x]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTensor {
    data: Array3<f64>,
}

impl DelayTensor {
    /// Number of windows K.
    pub fn n_windows(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    /// Window length L.
    pub fn window_len(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    /// Source index of window `w`'s first sample.
    pub fn origin_index(&self, w: usize) -> usize {
        w
    }

    pub fn window(&self, w: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), w)
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// Windows as rows of a K x (L*D) matrix, lag-major within a row
    /// (entry `c*D + x` holds sample `c`, coordinate `x`).
    pub fn flattened(&self) -> Array2<f64> {
        let (k, l, d) = self.data.dim();
        self.data
            .to_shape((k, l * d))
            .expect("contiguous standard layout")
            .to_owned()
    }

    /// A new tensor holding only the windows at `indices`, in that order.
    /// `origin_index` on the result refers to positions in the selection;
    /// callers keep their own map back to source indices.
    pub fn select(&self, indices: &[usize]) -> Result<DelayTensor> {
        let (k, l, d) = self.data.dim();
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty window selection".into()));
        }
        let mut out = Array3::zeros((indices.len(), l, d));
        for (row, &w) in indices.iter().enumerate() {
            if w >= k {
                return Err(Error::InvalidArgument(format!(
                    "window index {w} out of range for {k} windows"
                )));
            }
            out.index_axis_mut(Axis(0), row)
                .assign(&self.data.index_axis(Axis(0), w));
        }
        Ok(DelayTensor { data: out })
    }
}

/// All length-`window` delay windows of `data`, K = N - L + 1 of them.
pub fn hankelize_array(data: ArrayView2<'_, f64>, window: usize) -> Result<DelayTensor> {
    let n = data.nrows();
    let d = data.ncols();
    if window == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    if n < window {
        return Err(Error::shape(
            "series for delay embedding",
            format!("length >= {window}"),
            format!("length {n}"),
        ));
    }
    let k = n - window + 1;
    let mut out = Array3::zeros((k, window, d));
    for w in 0..k {
        out.index_axis_mut(Axis(0), w)
            .assign(&data.slice(ndarray::s![w..w + window, ..]));
    }
    Ok(DelayTensor { data: out })
}

pub fn hankelize(series: &TimeSeries, window: usize) -> Result<DelayTensor> {
    hankelize_array(series.data(), window)
}

/// Collapses a delay tensor back to a series by averaging the entries that
/// originated from the same sample. Windows cut from one series agree
/// bitwise along those anti-diagonals, and agreeing entries average to
/// themselves, so the round trip is exact.
pub fn unhankelize(tensor: &DelayTensor) -> Array2<f64> {
    let (k, l, d) = tensor.data().dim();
    let n = k + l - 1;
    let mut out = Array2::zeros((n, d));
    for t in 0..n {
        for x in 0..d {
            let w_lo = t.saturating_sub(l - 1);
            let w_hi = t.min(k - 1);
            let first = tensor.data()[[w_lo, t - w_lo, x]];
            let mut sum = 0.0;
            let mut all_equal = true;
            for w in w_lo..=w_hi {
                let v = tensor.data()[[w, t - w, x]];
                all_equal &= v.to_bits() == first.to_bits();
                sum += v;
            }
            out[[t, x]] = if all_equal {
                first
            } else {
                sum / (w_hi - w_lo + 1) as f64
            };
        }
    }
    out
}

/// A prefix of observations split for in-context use: every complete window
/// except the last, each paired with the sample that follows it, plus the
/// final (query) window whose next sample is the one being predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSplit {
    /// C x L x D past windows.
    pub context_windows: Array3<f64>,
    /// C x D samples; row A is the sample just after context window A.
    pub targets: Array2<f64>,
    /// L x D final window of the prefix.
    pub query_window: Array2<f64>,
}

impl ContextSplit {
    /// Context size C.
    pub fn n_context(&self) -> usize {
        self.context_windows.len_of(Axis(0))
    }

    /// Context windows as rows of a C x (L*D) matrix, same layout as
    /// [`DelayTensor::flattened`].
    pub fn context_flat(&self) -> Array2<f64> {
        let (c, l, d) = self.context_windows.dim();
        self.context_windows
            .to_shape((c, l * d))
            .expect("contiguous standard layout")
            .to_owned()
    }

    /// Query window as a flat length-(L*D) vector.
    pub fn query_flat(&self) -> Array1<f64> {
        let (l, d) = self.query_window.dim();
        self.query_window
            .to_shape(l * d)
            .expect("contiguous standard layout")
            .to_owned()
    }
}

/// Splits a prefix of length `l >= window` into C = l - window context
/// windows with their next-sample targets, plus the final query window.
pub fn split_prefix(prefix: ArrayView2<'_, f64>, window: usize) -> Result<ContextSplit> {
    let n = prefix.nrows();
    let d = prefix.ncols();
    if window == 0 {
        return Err(Error::InvalidArgument("window length must be >= 1".into()));
    }
    if n < window {
        return Err(Error::shape(
            "prefix",
            format!("length >= {window}"),
            format!("length {n}"),
        ));
    }
    let c = n - window;
    let mut context_windows = Array3::zeros((c, window, d));
    let mut targets = Array2::zeros((c, d));
    for a in 0..c {
        context_windows
            .index_axis_mut(Axis(0), a)
            .assign(&prefix.slice(ndarray::s![a..a + window, ..]));
        targets.row_mut(a).assign(&prefix.row(a + window));
    }
    let query_window = prefix.slice(ndarray::s![n - window.., ..]).to_owned();
    Ok(ContextSplit {
        context_windows,
        targets,
        query_window,
    })
}
