use super::DspError;
use crate::matrix::Matrix;

/// Piecewise-linear resampling of each row of `track` (`[dim][T_src]`) onto
/// `t_dst` points spread evenly over the same normalized span.
pub fn interp_to_length(track: &Matrix, t_dst: usize) -> Result<Matrix, DspError> {
    let t_src = track.cols();
    if t_src < 2 {
        return Err(DspError::InterpSource(t_src));
    }
    if t_dst == 0 {
        return Err(DspError::InterpTarget);
    }
    if t_dst == t_src {
        return Ok(track.clone());
    }

    // Source position of each target frame, as (left index, fraction).
    let last = (t_src - 1) as f64;
    let taps: Vec<(usize, f64)> = (0..t_dst)
        .map(|j| {
            if j + 1 == t_dst && t_dst > 1 {
                return (t_src - 1, 0.0);
            }
            let pos = if t_dst == 1 { 0.0 } else { j as f64 * last / (t_dst - 1) as f64 };
            let i = (pos.floor() as usize).min(t_src - 1);
            (i, pos - i as f64)
        })
        .collect();

    let mut out = Matrix::zeros(track.rows(), t_dst);
    for d in 0..track.rows() {
        let src = track.row(d);
        let dst = out.row_mut(d);
        for (slot, &(i, frac)) in dst.iter_mut().zip(&taps) {
            *slot = if frac == 0.0 {
                src[i]
            } else {
                let (a, b) = (src[i], src[i + 1]);
                (a + frac * (b - a)).clamp(a.min(b), a.max(b))
            };
        }
    }
    Ok(out)
}
