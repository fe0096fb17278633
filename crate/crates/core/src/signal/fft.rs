use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{HkgError, Result};

/// Precomputed transform for one length. Power-of-two lengths use an
/// iterative radix-2 kernel; every other length goes through Bluestein's
/// chirp-z reduction onto a power-of-two convolution.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Radix2(Radix2),
    Bluestein {
        inner: Radix2,
        /// `exp(-i*pi*n^2/len)` for `n < len`.
        chirp: Vec<Complex64>,
        /// Forward transform of the conjugate chirp, laid out circularly.
        kernel_spectrum: Vec<Complex64>,
    },
}

#[derive(Debug, Clone)]
struct Radix2 {
    len: usize,
    /// `exp(-2*pi*i*k/len)` for `k < len/2`.
    twiddles: Vec<Complex64>,
    bit_reverse: Vec<usize>,
}

impl Radix2 {
    fn new(len: usize) -> Self {
        debug_assert!(len.is_power_of_two());
        let bits = len.trailing_zeros();
        let bit_reverse = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..len / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
            .collect();
        Radix2 {
            len,
            twiddles,
            bit_reverse,
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.len;
        for i in 0..n {
            let j = self.bit_reverse[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(HkgError::Parameter("transform length must be >= 1".into()));
        }
        let kind = if len.is_power_of_two() {
            PlanKind::Radix2(Radix2::new(len))
        } else {
            let m = (2 * len - 1).next_power_of_two();
            let inner = Radix2::new(m);
            // n^2 mod 2*len keeps the phase argument small and exact.
            let modulus = 2 * len as u128;
            let chirp: Vec<Complex64> = (0..len)
                .map(|n| {
                    let q = (n as u128 * n as u128) % modulus;
                    Complex64::from_polar(1.0, -PI * q as f64 / len as f64)
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for n in 1..len {
                kernel[n] = chirp[n].conj();
                kernel[m - n] = chirp[n].conj();
            }
            inner.run(&mut kernel, false);
            PlanKind::Bluestein {
                inner,
                chirp,
                kernel_spectrum: kernel,
            }
        };
        Ok(FftPlan { len, kind })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, `X[k] = sum_n x[n] exp(-2*pi*i*n*k/N)`.
    pub fn forward(&self, buf: &mut [Complex64]) -> Result<()> {
        self.transform(buf, false)
    }

    /// In-place inverse transform, scaled by `1/N`.
    pub fn inverse(&self, buf: &mut [Complex64]) -> Result<()> {
        self.transform(buf, true)?;
        let scale = 1.0 / self.len as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) -> Result<()> {
        if buf.len() != self.len {
            return Err(HkgError::shape("fft", &[buf.len()], &[self.len]));
        }
        match &self.kind {
            PlanKind::Radix2(r) => r.run(buf, inverse),
            PlanKind::Bluestein {
                inner,
                chirp,
                kernel_spectrum,
            } => {
                // The inverse is the forward transform of the conjugated input, conjugated.
                if inverse {
                    buf.iter_mut().for_each(|v| *v = v.conj());
                }
                let m = inner.len;
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for n in 0..self.len {
                    work[n] = buf[n] * chirp[n];
                }
                inner.run(&mut work, false);
                for (w, k) in work.iter_mut().zip(kernel_spectrum) {
                    *w *= k;
                }
                inner.run(&mut work, true);
                let scale = 1.0 / m as f64;
                for k in 0..self.len {
                    buf[k] = work[k] * scale * chirp[k];
                }
                if inverse {
                    buf.iter_mut().for_each(|v| *v = v.conj());
                }
            }
        }
        Ok(())
    }
}

/// Discrete Fourier transform of `frame`.
pub fn dft(frame: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(frame.len())?;
    let mut out = frame.to_vec();
    plan.forward(&mut out)?;
    Ok(out)
}

/// Inverse DFT, scaled by `1/N`.
pub fn idft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(spectrum.len())?;
    let mut out = spectrum.to_vec();
    plan.inverse(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn assert_close(a: &[Complex64], b: &[Complex64]) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn constant_signal() {
        let out = dft(&[c(1.0); 4]).unwrap();
        assert_close(&out, &[c(4.0), c(0.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn impulse() {
        let out = dft(&[c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert_close(&out, &[c(1.0); 4]);
    }

    #[test]
    fn impulse_non_power_of_two() {
        let mut x = vec![c(0.0); 7];
        x[0] = c(1.0);
        assert_close(&dft(&x).unwrap(), &[c(1.0); 7]);
    }

    #[test]
    fn length_one_is_identity() {
        assert_close(
            &dft(&[Complex64::new(2.0, -3.0)]).unwrap(),
            &[Complex64::new(2.0, -3.0)],
        );
    }

    #[test]
    fn empty_frame_is_rejected() {
        assert!(matches!(dft(&[]), Err(HkgError::Parameter(_))));
    }

    #[test]
    fn inverse_round_trip() {
        for n in [1usize, 2, 5, 12, 16, 31] {
            let x: Vec<_> = (0..n)
                .map(|i| Complex64::new(i as f64 * 0.5 - 1.0, (i % 3) as f64))
                .collect();
            let back = idft(&dft(&x).unwrap()).unwrap();
            assert_close(&back, &x);
        }
    }

    #[test]
    fn plan_rejects_wrong_length() {
        let plan = FftPlan::new(8).unwrap();
        let mut buf = vec![c(0.0); 4];
        assert!(plan.forward(&mut buf).is_err());
    }
}
