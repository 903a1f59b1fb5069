// Temporary micro-benchmark; removed once performance is settled.
use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

#[test]
#[ignore]
fn time_fft_components() {
    let n = 400usize;
    let mut a = Array2::from_shape_fn((n, n), |(r, c)| {
        Complex64::new((r as f64 * 0.01).sin(), (c as f64 * 0.013).cos())
    });
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let t0 = std::time::Instant::now();
    for _ in 0..50 {
        let _b = a.clone();
    }
    println!("clone: {:?}", t0.elapsed() / 50);

    let t0 = std::time::Instant::now();
    for _ in 0..50 {
        for mut row in a.rows_mut() {
            fft.process_with_scratch(row.as_slice_mut().unwrap(), &mut scratch);
        }
    }
    println!("row fft pass: {:?}", t0.elapsed() / 50);

    let t0 = std::time::Instant::now();
    let mut t = Array2::zeros((n, n));
    for _ in 0..50 {
        for bi in (0..n).step_by(32) {
            for bj in (0..n).step_by(32) {
                for i in bi..(bi + 32).min(n) {
                    for j in bj..(bj + 32).min(n) {
                        t[[j, i]] = a[[i, j]];
                    }
                }
            }
        }
    }
    println!("transpose: {:?}", t0.elapsed() / 50);

    let half = n / 2;
    let t0 = std::time::Instant::now();
    for _ in 0..50 {
        for i in 0..half {
            for j in 0..n {
                let jj = (j + half) % n;
                let tmp = a[[i, j]];
                a[[i, j]] = a[[i + half, jj]];
                a[[i + half, jj]] = tmp;
            }
        }
    }
    println!("shift: {:?}", t0.elapsed() / 50);

    let t0 = std::time::Instant::now();
    for _ in 0..50 {
        for ((_r, _c), v) in a.indexed_iter_mut() {
            *v *= Complex64::from_polar(1.0, 0.3);
        }
    }
    println!("from_polar multiply: {:?}", t0.elapsed() / 50);
}
