//! Savitzky-Golay smoothing of per-pixel time series.
//!
//! Weights come from Gram polynomials, which give the least-squares
//! polynomial fit evaluated at any position inside the window without
//! solving a linear system.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{RasterCube, ValueRange};

/// How the first and last `window / 2` samples are filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Evaluate the polynomial fitted to the first (last) full window at the
    /// edge positions. Reproduces polynomials up to `polyorder` everywhere.
    #[default]
    Interp,
    /// Reflect the series about its end samples (`x[-k] = x[k]`).
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    pub window_length: usize,
    pub polyorder: usize,
    /// Reset observed samples to their input values after filtering.
    pub pin_observed: bool,
    pub edge: EdgeMode,
}

impl Default for SgParams {
    fn default() -> Self {
        SgParams {
            window_length: 7,
            polyorder: 2,
            pin_observed: true,
            edge: EdgeMode::Interp,
        }
    }
}

impl SgParams {
    pub fn validate(&self) -> Result<()> {
        check_window(self.window_length, self.polyorder)
    }
}

fn check_window(window: usize, order: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "SG window length {window} must be odd and at least 3"
        )));
    }
    if order >= window {
        return Err(Error::InvalidParam(format!(
            "SG polyorder {order} must be below window length {window}"
        )));
    }
    Ok(())
}

/// `a (a - 1) ... (a - b + 1)`, with the empty product equal to 1.
fn falling(a: f64, b: usize) -> f64 {
    (0..b).fold(1.0, |acc, j| acc * (a - j as f64))
}

/// Gram polynomials `P_0 ..= P_order` on the points `-half ..= half`,
/// evaluated at `x`.
fn gram(half: usize, order: usize, x: f64) -> Vec<f64> {
    let m = half as f64;
    let mut p = Vec::with_capacity(order + 1);
    p.push(1.0);
    for k in 1..=order {
        let kf = k as f64;
        let denom = kf * (2.0 * m - kf + 1.0);
        let prev2 = if k >= 2 { p[k - 2] } else { 0.0 };
        let v = 2.0 * (2.0 * kf - 1.0) / denom * x * p[k - 1]
            - (kf - 1.0) * (2.0 * m + kf) / denom * prev2;
        p.push(v);
    }
    p
}

/// Weights that evaluate the least-squares fit of degree `order` over a
/// window of `2 half + 1` points at offset `at` from the window centre.
fn weights_at(half: usize, order: usize, at: isize) -> Vec<f64> {
    let m = 2.0 * half as f64;
    let norm: Vec<f64> = (0..=order)
        .map(|k| (2 * k + 1) as f64 * falling(m, k) / falling(m + k as f64 + 1.0, k + 1))
        .collect();
    let pt = gram(half, order, at as f64);
    (-(half as isize)..=half as isize)
        .map(|i| {
            let pi = gram(half, order, i as f64);
            (0..=order).map(|k| norm[k] * pi[k] * pt[k]).sum()
        })
        .collect()
}

/// Centre-point convolution weights of the filter.
pub fn sg_coefficients(window_length: usize, polyorder: usize) -> Result<Vec<f64>> {
    check_window(window_length, polyorder)?;
    Ok(weights_at(window_length / 2, polyorder, 0))
}

/// Window and order actually applied to a series of length `len`, or `None`
/// when the series is too short to filter.
fn effective_window(len: usize, window: usize, order: usize) -> Option<(usize, usize)> {
    if len >= window {
        return Some((window, order));
    }
    let w = if len % 2 == 1 {
        len
    } else {
        len.saturating_sub(1)
    };
    (w >= 3).then(|| (w, order.min(w - 1)))
}

/// The linear filter alone: no pinning, no clamping.
pub fn sg_filter(
    series: &[f64],
    window_length: usize,
    polyorder: usize,
    edge: EdgeMode,
) -> Result<Vec<f64>> {
    check_window(window_length, polyorder)?;
    let n = series.len();
    let Some((w, order)) = effective_window(n, window_length, polyorder) else {
        return Ok(series.to_vec());
    };
    let half = w / 2;
    let centre = weights_at(half, order, 0);
    let conv = |start: isize, weights: &[f64], fetch: &dyn Fn(isize) -> f64| -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(j, c)| c * fetch(start + j as isize))
            .sum()
    };
    let direct = |i: isize| series[i as usize];
    let mirrored = |i: isize| {
        let last = n as isize - 1;
        let j = if i < 0 {
            -i
        } else if i > last {
            2 * last - i
        } else {
            i
        };
        series[j as usize]
    };
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let ii = i as isize;
        let h = half as isize;
        let interior = i >= half && i + half < n;
        *o = if interior {
            conv(ii - h, &centre, &direct)
        } else {
            match edge {
                EdgeMode::Mirror => conv(ii - h, &centre, &mirrored),
                EdgeMode::Interp => {
                    let start = if i < half { 0 } else { n as isize - w as isize };
                    let at = ii - (start + h);
                    conv(start, &weights_at(half, order, at), &direct)
                }
            }
        };
    }
    Ok(out)
}

/// Smooths one series; observed samples are restored when pinning, and the
/// result is clamped to `range`.
pub fn sg_smooth_series(
    series: &[f64],
    observed: &[bool],
    params: &SgParams,
    range: ValueRange,
) -> Result<Vec<f64>> {
    if observed.len() != series.len() {
        return Err(Error::Shape(format!(
            "{} observation flags for a series of {}",
            observed.len(),
            series.len()
        )));
    }
    let mut out = sg_filter(series, params.window_length, params.polyorder, params.edge)?;
    for (i, o) in out.iter_mut().enumerate() {
        *o = if params.pin_observed && observed[i] {
            series[i]
        } else {
            range.clamp(*o)
        };
    }
    Ok(out)
}

/// Smooths every pixel's time series independently. Pixels with any
/// invalid slice are passed through unchanged.
pub fn sg_smooth_cube(
    cube: &RasterCube,
    observed: &[bool],
    params: &SgParams,
) -> Result<RasterCube> {
    params.validate()?;
    if observed.len() != cube.len() {
        return Err(Error::Shape(format!(
            "observed mask has {} cells, cube has {}",
            observed.len(),
            cube.len()
        )));
    }
    let (nt, rows, cols) = cube.shape();
    let plane = rows * cols;
    let range = cube.range();
    let smoothed: Vec<Option<Vec<f64>>> = (0..plane)
        .into_par_iter()
        .map(|s| {
            if (0..nt).any(|t| !cube.valid()[t * plane + s]) {
                return Ok(None);
            }
            let series: Vec<f64> = (0..nt)
                .map(|t| cube.values()[t * plane + s] as f64)
                .collect();
            let obs: Vec<bool> = (0..nt).map(|t| observed[t * plane + s]).collect();
            sg_smooth_series(&series, &obs, params, range).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut values = cube.values().to_vec();
    for (s, out) in smoothed.into_iter().enumerate() {
        if let Some(out) = out {
            for (t, v) in out.into_iter().enumerate() {
                let k = t * plane + s;
                // pinned samples keep their stored bits
                if !(params.pin_observed && observed[k]) {
                    values[k] = v as f32;
                }
            }
        }
    }
    cube.with_cells(values, cube.valid().to_vec())
}
