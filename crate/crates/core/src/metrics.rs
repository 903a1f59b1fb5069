//! Evaluation metrics for comparing reconstructions against references.

use ndarray::Array2;

use crate::wavefield::ComplexField;

/// Pearson correlation of two equally-shaped real maps. Returns 0 when
/// either map is constant.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "correlation needs equal shapes");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Absorption map `1 - |t|`; zero for a transparent pixel.
pub fn absorption_map(t: &ComplexField) -> Array2<f64> {
    t.values().mapv(|v| 1.0 - v.norm())
}

/// Pixels deviating from unit transmission by more than
/// `threshold * max deviation`.
pub fn footprint(t: &ComplexField, threshold: f64) -> Array2<bool> {
    let dev = t.values().mapv(|v| (v - num_complex::Complex64::new(1.0, 0.0)).norm());
    let max = dev.iter().fold(0.0_f64, |a, &b| a.max(b));
    dev.mapv(|d| d > threshold * max)
}

/// Mean of `map` over the pixels selected by `mask`; NaN for an empty mask.
pub fn masked_mean(map: &Array2<f64>, mask: &Array2<bool>) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (v, &ok) in map.iter().zip(mask.iter()) {
        if ok {
            acc += v;
            count += 1;
        }
    }
    acc / count as f64
}

/// Least-squares amplitude of a known profile inside a map:
/// `sum(map * profile) / sum(profile^2)`. With `profile` the true phase
/// shape normalized to unit peak, this estimates the recovered peak phase
/// with noise averaged out instead of selected by a max.
pub fn projected_peak(map: &Array2<f64>, profile: &Array2<f64>) -> f64 {
    assert_eq!(map.dim(), profile.dim());
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, p) in map.iter().zip(profile.iter()) {
        num += m * p;
        den += p * p;
    }
    num / den
}

/// Peak of the 3x3 box-filtered phase over the masked region; smoothing
/// keeps single-pixel noise spikes from dominating the peak estimate.
pub fn smoothed_peak_phase(t: &ComplexField, mask: &Array2<bool>) -> f64 {
    let phase = t.phase();
    let (rows, cols) = phase.dim();
    let mut peak = f64::NEG_INFINITY;
    for r in 0..rows {
        for c in 0..cols {
            if !mask[[r, c]] {
                continue;
            }
            let mut acc = 0.0;
            let mut count = 0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let rr = r as i64 + dr;
                    let cc = c as i64 + dc;
                    if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                        acc += phase[[rr as usize, cc as usize]];
                        count += 1;
                    }
                }
            }
            peak = peak.max(acc / count as f64);
        }
    }
    peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::Grid;
    use num_complex::Complex64;

    #[test]
    fn pearson_of_identical_maps_is_one() {
        let a = Array2::from_shape_fn((16, 16), |(r, c)| (r * 3 + c) as f64);
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-12);
        let b = a.mapv(|v| -2.0 * v + 5.0);
        assert!((pearson(&a, &b) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_constant_map_is_zero() {
        let a = Array2::from_elem((8, 8), 3.0);
        let b = Array2::from_shape_fn((8, 8), |(r, _)| r as f64);
        assert_eq!(pearson(&a, &b), 0.0);
    }

    #[test]
    fn smoothed_peak_tracks_plateau_not_spike() {
        let grid = Grid::new(32, 1.0, 0.5).unwrap();
        let mut t = ComplexField::plane_wave(grid);
        // a 3x3 plateau of phase 0.5 and a lone spike of 3.0
        for r in 10..13 {
            for c in 10..13 {
                t.values_mut()[[r, c]] = Complex64::from_polar(1.0, 0.5);
            }
        }
        t.values_mut()[[20, 20]] = Complex64::from_polar(1.0, 3.0);
        let mask = Array2::from_elem((32, 32), true);
        let peak = smoothed_peak_phase(&t, &mask);
        assert!(peak < 0.6, "spike should be averaged away, got {peak}");
        assert!(peak > 0.2, "plateau should survive smoothing, got {peak}");
    }
}
