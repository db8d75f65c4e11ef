//! Host-side reference implementations. None of these touch the simulator.
//!
//! Floating-point oracles round every operation to f32 in the same order as
//! the generated vector code, so they match the simulator bit for bit.

/// `y[i] = a * x[i] + y[i]`.
pub fn axpy_i32(a: u32, x: &[u32], y: &[u32]) -> Vec<u32> {
    x.iter().zip(y).map(|(&x, &y)| a.wrapping_mul(x).wrapping_add(y)).collect()
}

pub fn axpy_f32(a: f32, x: &[f32], y: &[f32]) -> Vec<f32> {
    x.iter().zip(y).map(|(&x, &y)| x * a + y).collect()
}

pub fn dotp_i32(x: &[u32], y: &[u32]) -> u32 {
    x.iter().zip(y).fold(0u32, |acc, (&a, &b)| acc.wrapping_add(a.wrapping_mul(b)))
}

/// Accumulates in f64; the vector code uses a different association, so
/// callers compare with a tolerance.
pub fn dotp_f32(x: &[f32], y: &[f32]) -> f32 {
    x.iter().zip(y).map(|(&a, &b)| f64::from(a * b)).sum::<f64>() as f32
}

/// `C[m][n] = sum_k A[m][k] * B[k][n]`, accumulating in ascending `k`.
pub fn matmul_i32(a: &[u32], b: &[u32], m: usize, k: usize, n: usize) -> Vec<u32> {
    let mut c = vec![0u32; m * n];
    for i in 0..m {
        for j in 0..n {
            c[i * n + j] = (0..k).fold(0u32, |acc, t| acc.wrapping_add(b[t * n + j].wrapping_mul(a[i * k + t])));
        }
    }
    c
}

pub fn matmul_f32(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            c[i * n + j] = (0..k).fold(0f32, |acc, t| acc + b[t * n + j] * a[i * k + t]);
        }
    }
    c
}

/// `y[i] = sum_t h[t] * x[i + t]` for `i < x.len() - h.len() + 1`.
pub fn fir_i32(x: &[u32], h: &[u32], n: usize) -> Vec<u32> {
    (0..n).map(|i| h.iter().enumerate().fold(0u32, |acc, (t, &h)| acc.wrapping_add(x[i + t].wrapping_mul(h)))).collect()
}

pub fn fir_f32(x: &[f32], h: &[f32], n: usize) -> Vec<f32> {
    (0..n).map(|i| h.iter().enumerate().fold(0f32, |acc, (t, &h)| acc + x[i + t] * h)).collect()
}

/// Signed maximum with zero on the raw bit pattern. For fp32 inputs this is
/// a ReLU that also maps `-0.0` and negative NaNs to `+0.0`.
pub fn relu(x: &[u32]) -> Vec<u32> {
    x.iter().map(|&v| (v as i32).max(0) as u32).collect()
}

/// Twiddle factor `exp(-2*pi*i * e / n)` rounded to f32.
pub fn twiddle(e: usize, n: usize) -> (f32, f32) {
    let angle = -2.0 * std::f64::consts::PI * e as f64 / n as f64;
    (angle.cos() as f32, angle.sin() as f32)
}

pub fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Iterative in-place radix-2 decimation-in-time FFT in f32.
///
/// The complex product is `(wr*cr - wi*ci, wr*ci + wi*cr)` with every
/// operation rounded to f32.
pub fn fft_f32(re: &[f32], im: &[f32]) -> (Vec<f32>, Vec<f32>) {
    let n = re.len();
    assert!(n.is_power_of_two() && im.len() == n);
    let bits = n.trailing_zeros();
    let mut xr: Vec<f32> = (0..n).map(|i| re[bit_reverse(i, bits)]).collect();
    let mut xi: Vec<f32> = (0..n).map(|i| im[bit_reverse(i, bits)]).collect();
    let mut half = 1;
    while half < n {
        let step = n / (2 * half);
        for start in (0..n).step_by(2 * half) {
            for j in 0..half {
                let (wr, wi) = twiddle(j * step, n);
                let (p, q) = (start + j, start + j + half);
                let (cr, ci) = (xr[q], xi[q]);
                let tr = wr * cr - wi * ci;
                let ti = wr * ci + wi * cr;
                let (ar, ai) = (xr[p], xi[p]);
                xr[p] = ar + tr;
                xi[p] = ai + ti;
                xr[q] = ar - tr;
                xi[q] = ai - ti;
            }
        }
        half *= 2;
    }
    (xr, xi)
}

/// Direct O(n^2) DFT in f64, for checking [`fft_f32`] itself.
pub fn dft_f64(re: &[f32], im: &[f32]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let mut out_r = vec![0.0; n];
    let mut out_i = vec![0.0; n];
    for (k, (or, oi)) in out_r.iter_mut().zip(&mut out_i).enumerate() {
        for t in 0..n {
            let angle = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
            let (c, s) = (angle.cos(), angle.sin());
            let (xr, xi) = (f64::from(re[t]), f64::from(im[t]));
            *or += xr * c - xi * s;
            *oi += xr * s + xi * c;
        }
    }
    (out_r, out_i)
}

/// MSB-first CRC-16 with polynomial 0x8005, no reflection, no final xor.
pub fn crc16(init: u16, bytes: &[u8]) -> u16 {
    bytes.iter().fold(init, |mut crc, &b| {
        crc ^= u16::from(b) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x8005 } else { crc << 1 };
        }
        crc
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc16_check_value() {
        assert_eq!(crc16(0, b"123456789"), 0xFEE8);
        assert_eq!(crc16(0, b""), 0);
    }

    #[test]
    fn fft_of_impulse_is_flat() {
        let mut re = vec![0.0; 8];
        re[0] = 1.0;
        let (r, i) = fft_f32(&re, &[0.0; 8]);
        assert!(r.iter().all(|&v| v == 1.0));
        assert!(i.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fft_matches_direct_dft() {
        let n = 256;
        let re: Vec<f32> = (0..n).map(|i| ((i * 7919) % 97) as f32 / 97.0 - 0.5).collect();
        let im: Vec<f32> = (0..n).map(|i| ((i * 104729) % 89) as f32 / 89.0 - 0.5).collect();
        let (fr, fi) = fft_f32(&re, &im);
        let (dr, di) = dft_f64(&re, &im);
        for k in 0..n {
            assert!((f64::from(fr[k]) - dr[k]).abs() < 1e-4, "re bin {k}");
            assert!((f64::from(fi[k]) - di[k]).abs() < 1e-4, "im bin {k}");
        }
    }

    #[test]
    fn small_oracles() {
        let x: Vec<u32> = (1..=64).collect();
        assert_eq!(axpy_i32(3, &x, &[1; 64])[9], 31);
        assert_eq!(dotp_i32(&[1; 100], &[1; 100]), 100);
        let eye: Vec<f32> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let b: Vec<f32> = (0..16).map(|i| i as f32 * 0.25 - 1.0).collect();
        assert_eq!(matmul_f32(&eye, &b, 4, 4, 4), b);
        assert_eq!(fir_i32(&[1, 2, 3, 4], &[1, 1], 3), vec![3, 5, 7]);
        assert_eq!(relu(&[5, (-3i32) as u32, (-0.5f32).to_bits()]), vec![5, 0, 0]);
        assert_eq!(bit_reverse(1, 3), 4);
    }
}
