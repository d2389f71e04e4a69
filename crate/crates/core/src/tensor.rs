//! Third-order tensor algebra: mode-3 DFT, t-product, t-SVD and the
//! block-circulant matrix they are defined against.
//!
//! The public mode-3 transform is unitary (scaled by `1/sqrt(n3)`), so
//! Frobenius norms survive the trip into the Fourier domain. The t-product
//! and t-SVD work on unnormalized spectra internally, where the block
//! diagonalization of `bcirc` holds without extra factors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{GcpError, Result};

/// Real third-order tensor with dims `(n1, n2, n3)`, stored row-major
/// (the third index varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (n1, n2, n3) = dims;
        if n1 == 0 || n2 == 0 || n3 == 0 {
            return Err(GcpError::mismatch("tensor dimensions must be positive"));
        }
        if data.len() != n1 * n2 * n3 {
            return Err(GcpError::mismatch(format!(
                "tensor {n1}x{n2}x{n3} needs {} entries, got {}",
                n1 * n2 * n3,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self::from_fn(dims, |_, _, _| 0.0)
    }

    pub fn from_fn(dims: (usize, usize, usize), mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let (n1, n2, n3) = dims;
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    /// The t-product identity: identity matrix in the first frontal slice,
    /// zeros elsewhere.
    pub fn identity(n: usize, n3: usize) -> Self {
        Self::from_fn((n, n, n3), |i, j, k| if i == j && k == 0 { 1.0 } else { 0.0 })
    }

    /// Assembles a tensor from its frontal slices.
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| GcpError::mismatch("no frontal slices"))?;
        let (n1, n2) = first.shape();
        if slices.iter().any(|s| s.shape() != (n1, n2)) {
            return Err(GcpError::mismatch("frontal slices differ in shape"));
        }
        Ok(Self::from_fn((n1, n2, slices.len()), |i, j, k| slices[k][(i, j)]))
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (_, n2, n3) = self.dims;
        self.data[(i * n2 + j) * n3 + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let (_, n2, n3) = self.dims;
        self.data[(i * n2 + j) * n3 + k] = v;
    }

    /// Frontal slice `A(:, :, k)`.
    pub fn frontal_slice(&self, k: usize) -> DMatrix<f64> {
        let (n1, n2, _) = self.dims;
        DMatrix::from_fn(n1, n2, |i, j| self.get(i, j, k))
    }

    /// Tensor transpose: every frontal slice transposed, slices 2..n3 reversed.
    pub fn transpose(&self) -> Self {
        let (n1, n2, n3) = self.dims;
        Self::from_fn((n2, n1, n3), |i, j, k| self.get(j, i, (n3 - k) % n3))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(GcpError::mismatch("tensor dims differ"));
        }
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }
}

/// A tensor after the DFT along its third mode, held as `n3` complex
/// frontal slices.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTensor3 {
    pub slices: Vec<DMatrix<Complex64>>,
    /// `true` when the transform was scaled by `1/sqrt(n3)`.
    pub unitary: bool,
}

impl FourierTensor3 {
    pub fn n3(&self) -> usize {
        self.slices.len()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.slices
            .iter()
            .flat_map(|s| s.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// The `n1*n3 x n2*n3` block-circulant matrix whose block `(i, j)` is
/// frontal slice `(i - j) mod n3`.
pub fn bcirc(t: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = t.dims();
    DMatrix::from_fn(n1 * n3, n2 * n3, |r, c| {
        let (bi, i) = (r / n1, r % n1);
        let (bj, j) = (c / n2, c % n2);
        t.get(i, j, (bi + n3 - bj) % n3)
    })
}

fn dft_tubes(t: &Tensor3, inverse: bool, scale: f64) -> Vec<DMatrix<Complex64>> {
    let (n1, n2, n3) = t.dims();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n3)
    } else {
        planner.plan_fft_forward(n3)
    };
    let mut slices = vec![DMatrix::<Complex64>::zeros(n1, n2); n3];
    let mut tube = vec![Complex64::new(0.0, 0.0); n3];
    for i in 0..n1 {
        for j in 0..n2 {
            for (k, z) in tube.iter_mut().enumerate() {
                *z = Complex64::new(t.get(i, j, k), 0.0);
            }
            fft.process(&mut tube);
            for k in 0..n3 {
                slices[k][(i, j)] = tube[k] * scale;
            }
        }
    }
    slices
}

/// Unitary DFT along mode 3.
pub fn fft_mode3(t: &Tensor3) -> FourierTensor3 {
    let n3 = t.dims().2;
    FourierTensor3 {
        slices: dft_tubes(t, false, 1.0 / (n3 as f64).sqrt()),
        unitary: true,
    }
}

/// Unnormalized DFT along mode 3 (`A x_3 W_FFT`).
pub fn fft_mode3_unnormalized(t: &Tensor3) -> FourierTensor3 {
    FourierTensor3 {
        slices: dft_tubes(t, false, 1.0),
        unitary: false,
    }
}

/// Inverse of [`fft_mode3`] / [`fft_mode3_unnormalized`], honoring the
/// `unitary` flag. Imaginary residue is discarded.
pub fn ifft_mode3(f: &FourierTensor3) -> Tensor3 {
    let n3 = f.n3();
    let (n1, n2) = f.slices[0].shape();
    let scale = if f.unitary {
        1.0 / (n3 as f64).sqrt()
    } else {
        1.0 / n3 as f64
    };
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(n3);
    let mut out = Tensor3::zeros((n1, n2, n3));
    let mut tube = vec![Complex64::new(0.0, 0.0); n3];
    for i in 0..n1 {
        for j in 0..n2 {
            for (k, z) in tube.iter_mut().enumerate() {
                *z = f.slices[k][(i, j)];
            }
            fft.process(&mut tube);
            for (k, z) in tube.iter().enumerate() {
                out.set(i, j, k, z.re * scale);
            }
        }
    }
    out
}

/// Unitary length-4 DFT of a real tube.
///
/// Unnormalized, a tube `(R, G, G, B)` maps to
/// `(R + 2G + B, R - G + (B - G)i, R - B, R - G + (G - B)i)`;
/// this returns that divided by 2.
#[inline]
pub fn fft4(x: [f64; 4]) -> [Complex64; 4] {
    let [a, b, c, d] = x;
    [
        Complex64::new(0.5 * (a + b + c + d), 0.0),
        Complex64::new(0.5 * (a - c), 0.5 * (d - b)),
        Complex64::new(0.5 * (a - b + c - d), 0.0),
        Complex64::new(0.5 * (a - c), 0.5 * (b - d)),
    ]
}

/// Inverse of [`fft4`] for a conjugate-symmetric spectrum, given by its
/// first three bins (bin 3 is `conj(bin 1)`).
#[inline]
pub fn ifft4_real(x0: f64, x1: Complex64, x2: f64) -> [f64; 4] {
    // x_n = (X0 + (-1)^n X2 + 2 Re(X1 i^n)) / 2
    [
        0.5 * (x0 + x2) + x1.re,
        0.5 * (x0 - x2) - x1.im,
        0.5 * (x0 + x2) - x1.re,
        0.5 * (x0 - x2) + x1.im,
    ]
}

/// t-product `a * b`.
pub fn tprod(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = a.dims();
    let (m1, m2, m3) = b.dims();
    if n2 != m1 || n3 != m3 {
        return Err(GcpError::mismatch(format!(
            "t-product of {n1}x{n2}x{n3} and {m1}x{m2}x{m3}"
        )));
    }
    let fa = fft_mode3_unnormalized(a);
    let fb = fft_mode3_unnormalized(b);
    let slices = fa.slices.iter().zip(&fb.slices).map(|(x, y)| x * y).collect();
    Ok(ifft_mode3(&FourierTensor3 { slices, unitary: false }))
}

/// Factors of a t-SVD, `a = u * s * v^T`.
#[derive(Debug, Clone)]
pub struct TSvd {
    pub u: Tensor3,
    pub s: Tensor3,
    pub v: Tensor3,
}

/// t-SVD by per-slice SVD of the unnormalized mode-3 spectrum.
///
/// Slices `k > n3/2` are conjugates of slices `n3 - k`, so only the first
/// half is factorized. Each left singular vector is phase-normalized so its
/// first nonzero entry is real and nonnegative.
pub fn tsvd(a: &Tensor3) -> Result<TSvd> {
    let (n1, n2, n3) = a.dims();
    let fa = fft_mode3_unnormalized(a);
    let zero = Complex64::new(0.0, 0.0);
    let mut us = vec![DMatrix::from_element(n1, n1, zero); n3];
    let mut ss = vec![DMatrix::from_element(n1, n2, zero); n3];
    let mut vs = vec![DMatrix::from_element(n2, n2, zero); n3];
    for k in 0..=n3 / 2 {
        let slice = &fa.slices[k];
        let self_conjugate = k == 0 || 2 * k == n3;
        let (u, sv, v) = if self_conjugate {
            let real = slice.map(|z| z.re);
            let (u, sv, v) = full_svd_real(&real)?;
            (u.map(|x| Complex64::new(x, 0.0)), sv, v.map(|x| Complex64::new(x, 0.0)))
        } else {
            full_svd_complex(slice)?
        };
        let mut s = DMatrix::from_element(n1, n2, zero);
        for (idx, &value) in sv.iter().enumerate() {
            s[(idx, idx)] = Complex64::new(value, 0.0);
        }
        if !self_conjugate {
            us[n3 - k] = u.map(|z| z.conj());
            ss[n3 - k] = s.clone();
            vs[n3 - k] = v.map(|z| z.conj());
        }
        us[k] = u;
        ss[k] = s;
        vs[k] = v;
    }
    let back = |slices: Vec<DMatrix<Complex64>>| ifft_mode3(&FourierTensor3 { slices, unitary: false });
    Ok(TSvd {
        u: back(us),
        s: back(ss),
        v: back(vs),
    })
}

/// Extends orthonormal columns to a full orthonormal basis with Gram-Schmidt
/// against the standard basis.
fn complete_basis<T>(cols: &DMatrix<T>, n: usize) -> DMatrix<T>
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    let mut basis: Vec<nalgebra::DVector<T>> = cols.column_iter().map(|c| c.into_owned()).collect();
    let mut e = 0;
    while basis.len() < n && e < n {
        let mut v = nalgebra::DVector::<T>::zeros(n);
        v[e] = T::one();
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / T::from_real(norm));
        }
        e += 1;
    }
    DMatrix::from_columns(&basis)
}

/// Flips each column pair so the first nonzero entry of `u`'s column is
/// real and nonnegative.
fn normalize_phase<T>(u: &mut DMatrix<T>, v: &mut DMatrix<T>)
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    for j in 0..u.ncols() {
        let lead = u.column(j).iter().copied().find(|z| z.modulus() > 1e-12);
        if let Some(lead) = lead {
            let phase = lead.scale(1.0 / lead.modulus()).conjugate();
            for i in 0..u.nrows() {
                u[(i, j)] *= phase;
            }
            if j < v.ncols() {
                for i in 0..v.nrows() {
                    v[(i, j)] *= phase;
                }
            }
        }
    }
}

fn svd_sorted<T>(m: &DMatrix<T>) -> Result<(DMatrix<T>, Vec<f64>, DMatrix<T>)>
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    let (n1, n2) = m.shape();
    let svd = m.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| GcpError::Numeric("SVD did not return U".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| GcpError::Numeric("SVD did not return V".into()))?;
    let v = vt.adjoint();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_thin = DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let v_thin = DMatrix::from_columns(&order.iter().map(|&i| v.column(i).into_owned()).collect::<Vec<_>>());
    let mut u_full = complete_basis(&u_thin, n1);
    let mut v_full = complete_basis(&v_thin, n2);
    normalize_phase(&mut u_full, &mut v_full);
    Ok((u_full, sv, v_full))
}

fn full_svd_real(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    svd_sorted(m)
}

fn full_svd_complex(m: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>)> {
    svd_sorted(m)
}
