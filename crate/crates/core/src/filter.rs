//! Collaborative filtering of RGGB patch groups: learned nonlocal t-SVD
//! transforms, group PCA, hard thresholding and aggregation.
//!
//! Every patch is moved to the Fourier domain along its four channels with
//! the unitary length-4 DFT. Real input makes bin 3 the conjugate of bin 1,
//! so only bins 0..=2 are stored and bin 3 is implied. Bins 0 and 2 are
//! real, as are their learned transforms; bin 1 is complex.
//!
//! Internally a bin of a group is one `ps^2 x K` matrix whose column `i` is
//! patch `i` vectorized column by column. Read as a `ps x (ps K)` matrix the
//! same buffer is the horizontal stack `[P_1 .. P_K]`, so the row transform
//! of the whole group is a single product.

use nalgebra::{DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{GcpError, Result};
use crate::image::{ChannelSemantics, PlanarImage};
use crate::search::{PatchGroup, PatchOrigin, RggbPatch};
use crate::tensor::{fft4, ifft4_real};

type CMat = DMatrix<Complex64>;
type RMat = DMatrix<f64>;

const BINS: usize = 3;

/// A matrix split into real and imaginary parts; `im == None` means real.
#[derive(Debug, Clone, PartialEq)]
struct Split {
    re: RMat,
    im: Option<RMat>,
}

impl Split {
    fn from_complex(m: &CMat) -> Self {
        let re = m.map(|z| z.re);
        let im = m.iter().any(|z| z.im != 0.0).then(|| m.map(|z| z.im));
        Self { re, im }
    }

    fn to_complex(&self) -> CMat {
        match &self.im {
            Some(im) => CMat::from_fn(self.re.nrows(), self.re.ncols(), |i, j| {
                Complex64::new(self.re[(i, j)], im[(i, j)])
            }),
            None => self.re.map(|x| Complex64::new(x, 0.0)),
        }
    }

    fn adjoint(&self) -> Self {
        Self {
            re: self.re.transpose(),
            im: self.im.as_ref().map(|m| -m.transpose()),
        }
    }

    fn mul(&self, other: &Split) -> Split {
        let re = &self.re * &other.re;
        match (&self.im, &other.im) {
            (None, None) => Split { re, im: None },
            (Some(ai), None) => Split {
                re,
                im: Some(ai * &other.re),
            },
            (None, Some(bi)) => Split {
                re,
                im: Some(&self.re * bi),
            },
            (Some(ai), Some(bi)) => Split {
                re: re - ai * bi,
                im: Some(&self.re * bi + ai * &other.re),
            },
        }
    }

    /// Right product with a real matrix.
    fn mul_real(&self, m: &RMat) -> Split {
        Split {
            re: &self.re * m,
            im: self.im.as_ref().map(|i| i * m),
        }
    }

    fn map_parts(self, f: impl Fn(RMat) -> RMat) -> Split {
        Split {
            re: f(self.re),
            im: self.im.map(&f),
        }
    }

    fn norm_squared(&self) -> f64 {
        self.re.norm_squared() + self.im.as_ref().map_or(0.0, |m| m.norm_squared())
    }
}

/// `ps^2 x K` column layout to the `ps x (ps K)` horizontal stack.
fn horizontal(m: RMat, ps: usize) -> RMat {
    let k = m.ncols();
    m.reshape_generic(Dyn(ps), Dyn(ps * k))
}

fn from_horizontal(m: RMat, ps: usize) -> RMat {
    let k = m.ncols() / ps;
    m.reshape_generic(Dyn(ps * ps), Dyn(k))
}

/// `ps^2 x K` column layout to the `(ps K) x ps` vertical stack.
fn vertical(m: &RMat, ps: usize) -> RMat {
    let k = m.ncols();
    let src = m.as_slice();
    let mut out = vec![0.0; src.len()];
    for i in 0..k {
        for c in 0..ps {
            let from = i * ps * ps + c * ps;
            let to = c * ps * k + i * ps;
            out[to..to + ps].copy_from_slice(&src[from..from + ps]);
        }
    }
    RMat::from_vec(ps * k, ps, out)
}

fn from_vertical(m: &RMat, ps: usize) -> RMat {
    let k = m.nrows() / ps;
    let src = m.as_slice();
    let mut out = vec![0.0; src.len()];
    for i in 0..k {
        for c in 0..ps {
            let from = c * ps * k + i * ps;
            let to = i * ps * ps + c * ps;
            out[to..to + ps].copy_from_slice(&src[from..from + ps]);
        }
    }
    RMat::from_vec(ps * ps, k, out)
}

/// Fourier bins 0..=2 of every patch in a group.
fn spectrum(group: &PatchGroup) -> [Split; BINS] {
    let ps = group.patch_size();
    let k = group.len();
    let n = ps * ps;
    let mut b0 = RMat::zeros(n, k);
    let mut b1r = RMat::zeros(n, k);
    let mut b1i = RMat::zeros(n, k);
    let mut b2 = RMat::zeros(n, k);
    for (i, patch) in group.patches.iter().enumerate() {
        for r in 0..ps {
            for c in 0..ps {
                let f = fft4(patch.tube(r * ps + c));
                let idx = c * ps + r;
                b0[(idx, i)] = f[0].re;
                b1r[(idx, i)] = f[1].re;
                b1i[(idx, i)] = f[1].im;
                b2[(idx, i)] = f[2].re;
            }
        }
    }
    [
        Split { re: b0, im: None },
        Split { re: b1r, im: Some(b1i) },
        Split { re: b2, im: None },
    ]
}

/// Learned transforms for one group.
#[derive(Debug, Clone)]
pub struct TransformSet {
    /// Fourier-domain slices of the row transform, one unitary `ps x ps`
    /// matrix per bin; slice 3 is the conjugate of slice 1.
    pub u_row: [CMat; 4],
    pub u_col: [CMat; 4],
    /// Orthogonal `K x K` transform along the group dimension.
    pub u_group: DMatrix<f64>,
    /// Eigenvalues behind `u_row`, descending, per bin.
    pub row_eigenvalues: [Vec<f64>; 4],
    pub col_eigenvalues: [Vec<f64>; 4],
    pub group_eigenvalues: Vec<f64>,
}

impl TransformSet {
    /// Transforms that leave the Fourier spectra untouched.
    pub fn identity(ps: usize, k: usize) -> Self {
        let id = CMat::identity(ps, ps);
        let ones = vec![1.0; ps];
        Self {
            u_row: [id.clone(), id.clone(), id.clone(), id.clone()],
            u_col: [id.clone(), id.clone(), id.clone(), id],
            u_group: DMatrix::identity(k, k),
            row_eigenvalues: [ones.clone(), ones.clone(), ones.clone(), ones.clone()],
            col_eigenvalues: [ones.clone(), ones.clone(), ones.clone(), ones],
            group_eigenvalues: vec![1.0; k],
        }
    }

    pub fn patch_size(&self) -> usize {
        self.u_row[0].nrows()
    }

    pub fn group_size(&self) -> usize {
        self.u_group.nrows()
    }

    fn split(&self) -> SplitTransforms {
        SplitTransforms {
            row: std::array::from_fn(|b| Split::from_complex(&self.u_row[b])),
            col: std::array::from_fn(|b| Split::from_complex(&self.u_col[b])),
        }
    }
}

struct SplitTransforms {
    row: [Split; BINS],
    col: [Split; BINS],
}

/// Rotates each column so its first nonzero entry is real and nonnegative.
fn normalize_columns(m: &mut CMat) {
    for j in 0..m.ncols() {
        if let Some(lead) = m.column(j).iter().copied().find(|z| z.norm() > 1e-12) {
            let phase = (lead / lead.norm()).conj();
            for i in 0..m.nrows() {
                m[(i, j)] *= phase;
            }
        }
    }
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Eigenvectors of a Hermitian matrix as columns, by descending eigenvalue.
fn hermitian_eigen(m: CMat) -> (CMat, Vec<f64>) {
    let n = m.nrows();
    let e = SymmetricEigen::new(m);
    let vals: Vec<f64> = e.eigenvalues.iter().copied().collect();
    let order = sorted_order(&vals);
    let mut out = CMat::from_fn(n, n, |i, j| e.eigenvectors[(i, order[j])]);
    normalize_columns(&mut out);
    (out, order.iter().map(|&i| vals[i]).collect())
}

/// Eigenvectors of a real symmetric matrix, descending, each with its
/// first nonzero entry positive.
fn real_eigen(m: RMat) -> (RMat, Vec<f64>) {
    let n = m.nrows();
    let e = SymmetricEigen::new(m);
    let vals: Vec<f64> = e.eigenvalues.iter().copied().collect();
    let order = sorted_order(&vals);
    let mut out = DMatrix::from_fn(n, n, |i, j| e.eigenvectors[(i, order[j])]);
    for j in 0..n {
        if let Some(lead) = out.column(j).iter().copied().find(|x| x.abs() > 1e-12) {
            if lead < 0.0 {
                out.column_mut(j).neg_mut();
            }
        }
    }
    (out, order.iter().map(|&i| vals[i]).collect())
}

fn eigen_of(cov: Split) -> (CMat, Vec<f64>) {
    match cov.im {
        None => {
            let (v, e) = real_eigen(cov.re);
            (v.map(|x| Complex64::new(x, 0.0)), e)
        }
        Some(_) => hermitian_eigen(cov.to_complex()),
    }
}

fn mirror<T: Clone>(a: &T, b: &T, c: &T, conj: impl Fn(&T) -> T) -> [T; 4] {
    [a.clone(), b.clone(), c.clone(), conj(b)]
}

fn learn_from_spectrum(group: &PatchGroup, spec: &[Split; BINS]) -> TransformSet {
    let ps = group.patch_size();
    let k = group.len();
    let mut rows: Vec<(CMat, Vec<f64>)> = Vec::with_capacity(BINS);
    let mut cols: Vec<(CMat, Vec<f64>)> = Vec::with_capacity(BINS);
    for bin in spec {
        // sum_i P_i P_i^H over the horizontal stack, sum_i P_i^H P_i over the vertical one
        let h = bin.clone().map_parts(|m| horizontal(m, ps));
        let v = Split {
            re: vertical(&bin.re, ps),
            im: bin.im.as_ref().map(|m| vertical(m, ps)),
        };
        rows.push(eigen_of(h.mul(&h.adjoint())));
        cols.push(eigen_of(v.adjoint().mul(&v)));
    }

    let dim = 4 * ps * ps;
    let columns: Vec<f64> = group.patches.iter().flat_map(|p| p.data.iter().copied()).collect();
    let unfolded = RMat::from_vec(dim, k, columns);
    let gram = unfolded.tr_mul(&unfolded);
    let (u_group, group_eigenvalues) = real_eigen(gram);

    let conj = |m: &CMat| m.map(|z| z.conj());
    let copy = |v: &Vec<f64>| v.clone();
    TransformSet {
        u_row: mirror(&rows[0].0, &rows[1].0, &rows[2].0, conj),
        u_col: mirror(&cols[0].0, &cols[1].0, &cols[2].0, conj),
        u_group,
        row_eigenvalues: mirror(&rows[0].1, &rows[1].1, &rows[2].1, copy),
        col_eigenvalues: mirror(&cols[0].1, &cols[1].1, &cols[2].1, copy),
        group_eigenvalues,
    }
}

/// Learns the row/column transforms per Fourier bin from the group's
/// covariance matrices, and the group transform from the Gram matrix of
/// the vectorized patches.
pub fn learn_transforms(group: &PatchGroup) -> Result<TransformSet> {
    if group.is_empty() {
        return Err(GcpError::mismatch("cannot learn transforms of an empty group"));
    }
    Ok(learn_from_spectrum(group, &spectrum(group)))
}

/// Transform-domain coefficients of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    ps: usize,
    /// Per bin, a `ps^2 x K` matrix; column `j` is group component `j`.
    bins: [Split; BINS],
    origins: Vec<PatchOrigin>,
}

impl Coefficients {
    pub fn patch_size(&self) -> usize {
        self.ps
    }

    pub fn group_size(&self) -> usize {
        self.bins[0].re.ncols()
    }

    pub fn origins(&self) -> &[PatchOrigin] {
        &self.origins
    }

    /// Coefficient matrices of Fourier bin `bin` (0..4), one per group
    /// component.
    pub fn bin(&self, bin: usize) -> Vec<CMat> {
        let (src, sign) = match bin {
            3 => (&self.bins[1], -1.0),
            b => (&self.bins[b], 1.0),
        };
        let ps = self.ps;
        (0..self.group_size())
            .map(|j| {
                CMat::from_fn(ps, ps, |r, c| {
                    let idx = c * ps + r;
                    let im = src.im.as_ref().map_or(0.0, |m| m[(idx, j)]);
                    Complex64::new(src.re[(idx, j)], sign * im)
                })
            })
            .collect()
    }

    /// Frobenius norm over all four bins.
    pub fn norm(&self) -> f64 {
        (self.bins[0].norm_squared() + 2.0 * self.bins[1].norm_squared() + self.bins[2].norm_squared()).sqrt()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for b in out.bins.iter_mut() {
            b.re.fill(0.0);
            if let Some(m) = b.im.as_mut() {
                m.fill(0.0);
            }
        }
        out
    }

    /// Linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Coefficients, b: f64) -> Result<Self> {
        if self.patch_size() != other.patch_size() || self.group_size() != other.group_size() {
            return Err(GcpError::mismatch("coefficient shapes differ"));
        }
        let lin = |x: &RMat, y: &RMat| x * a + y * b;
        Ok(Self {
            ps: self.ps,
            bins: std::array::from_fn(|bin| {
                let (x, y) = (&self.bins[bin], &other.bins[bin]);
                let im = match (&x.im, &y.im) {
                    (None, None) => None,
                    (xi, yi) => {
                        let zero = RMat::zeros(x.re.nrows(), x.re.ncols());
                        Some(lin(xi.as_ref().unwrap_or(&zero), yi.as_ref().unwrap_or(&zero)))
                    }
                };
                Split {
                    re: lin(&x.re, &y.re),
                    im,
                }
            }),
            origins: self.origins.clone(),
        })
    }
}

fn check_shapes(ps: usize, k: usize, t: &TransformSet) -> Result<()> {
    if t.patch_size() != ps || t.group_size() != k {
        return Err(GcpError::mismatch(format!(
            "transforms for {}x{} patches in groups of {}, data has {ps}x{ps} in groups of {k}",
            t.patch_size(),
            t.patch_size(),
            t.group_size()
        )));
    }
    Ok(())
}

fn forward_spectrum(spec: [Split; BINS], ps: usize, origins: Vec<PatchOrigin>, t: &TransformSet) -> Coefficients {
    let st = t.split();
    let mut it = spec.into_iter();
    let bins = std::array::from_fn(|bin| {
        let x = it.next().unwrap().map_parts(|m| horizontal(m, ps));
        let left = st.row[bin]
            .adjoint()
            .mul(&x)
            .map_parts(|m| vertical(&from_horizontal(m, ps), ps));
        left.mul(&st.col[bin])
            .map_parts(|m| from_vertical(&m, ps))
            .mul_real(&t.u_group)
    });
    Coefficients { ps, bins, origins }
}

/// `S = (U_row^T * G * U_col) x_4 U_group^T`, evaluated bin by bin.
pub fn forward_transform(group: &PatchGroup, t: &TransformSet) -> Result<Coefficients> {
    check_shapes(group.patch_size(), group.len(), t)?;
    Ok(forward_spectrum(
        spectrum(group),
        group.patch_size(),
        group.origins(),
        t,
    ))
}

fn threshold_in_place(s: &mut Coefficients, tau: f64) -> usize {
    let mut kept = 0usize;
    for (bin, split) in s.bins.iter_mut().enumerate() {
        let weight = if bin == 1 { 2 } else { 1 };
        let Split { re, im } = split;
        match im {
            None => {
                for (idx, v) in re.iter_mut().enumerate() {
                    if (bin == 0 && idx == 0) || v.abs() >= tau {
                        kept += weight;
                    } else {
                        *v = 0.0;
                    }
                }
            }
            Some(im) => {
                for (idx, (v, w)) in re.iter_mut().zip(im.iter_mut()).enumerate() {
                    if (bin == 0 && idx == 0) || v.hypot(*w) >= tau {
                        kept += weight;
                    } else {
                        *v = 0.0;
                        *w = 0.0;
                    }
                }
            }
        }
    }
    kept
}

/// Zeroes coefficients with magnitude below `tau`, keeping the DC term of
/// the leading group component. Returns the number of coefficients kept,
/// counted over all four bins.
pub fn hard_threshold(s: &Coefficients, tau: f64) -> (Coefficients, usize) {
    let mut out = s.clone();
    let kept = threshold_in_place(&mut out, tau);
    (out, kept)
}

/// `G = (U_row * S * U_col^T) x_4 U_group`, then the inverse DFT along
/// the channel mode. Imaginary residue is dropped.
pub fn inverse_transform(s: &Coefficients, t: &TransformSet) -> Result<PatchGroup> {
    let ps = s.patch_size();
    let k = s.group_size();
    check_shapes(ps, k, t)?;
    let st = t.split();
    let ug_t = t.u_group.transpose();
    let spatial: [Split; BINS] = std::array::from_fn(|bin| {
        let v = s.bins[bin].mul_real(&ug_t).map_parts(|m| vertical(&m, ps));
        let h = v
            .mul(&st.col[bin].adjoint())
            .map_parts(|m| horizontal(from_vertical(&m, ps), ps));
        st.row[bin].mul(&h).map_parts(|m| from_horizontal(m, ps))
    });
    let zero = RMat::zeros(ps * ps, k);
    let im1 = spatial[1].im.as_ref().unwrap_or(&zero);
    let patches = (0..k)
        .map(|i| {
            let n = ps * ps;
            let mut data = vec![0.0; 4 * n];
            for r in 0..ps {
                for c in 0..ps {
                    let idx = c * ps + r;
                    let x1 = Complex64::new(spatial[1].re[(idx, i)], im1[(idx, i)]);
                    let tube = ifft4_real(spatial[0].re[(idx, i)], x1, spatial[2].re[(idx, i)]);
                    for (ch, v) in tube.into_iter().enumerate() {
                        data[ch * n + r * ps + c] = v;
                    }
                }
            }
            RggbPatch {
                size: ps,
                data,
                origin: s.origins[i],
            }
        })
        .collect();
    PatchGroup::from_patches(patches)
}

/// Result of filtering one group.
#[derive(Debug, Clone)]
pub struct FilteredGroup {
    pub group: PatchGroup,
    pub retained: usize,
}

/// Learns transforms, thresholds at `tau` and reconstructs.
pub fn filter_group(group: &PatchGroup, tau: f64) -> Result<(FilteredGroup, TransformSet)> {
    if group.is_empty() {
        return Err(GcpError::mismatch("empty group"));
    }
    let spec = spectrum(group);
    let t = learn_from_spectrum(group, &spec);
    let filtered = filter_with(spec, group, &t, tau)?;
    Ok((filtered, t))
}

/// Filters a group with transforms learned elsewhere.
pub fn filter_group_with(group: &PatchGroup, t: &TransformSet, tau: f64) -> Result<FilteredGroup> {
    check_shapes(group.patch_size(), group.len(), t)?;
    filter_with(spectrum(group), group, t, tau)
}

fn filter_with(spec: [Split; BINS], group: &PatchGroup, t: &TransformSet, tau: f64) -> Result<FilteredGroup> {
    let mut coeffs = forward_spectrum(spec, group.patch_size(), group.origins(), t);
    let retained = threshold_in_place(&mut coeffs, tau);
    Ok(FilteredGroup {
        group: inverse_transform(&coeffs, t)?,
        retained,
    })
}

/// Running sums for averaging overlapping patches back into an image.
#[derive(Debug, Clone)]
pub struct AggregationBuffer {
    height: usize,
    width: usize,
    channels: usize,
    semantics: ChannelSemantics,
    value_sum: Vec<f64>,
    weight_sum: Vec<f64>,
}

impl AggregationBuffer {
    /// A buffer producing images shaped like `like`.
    pub fn new(like: &PlanarImage) -> Self {
        Self::with_shape(like.height(), like.width(), like.channels(), like.semantics())
    }

    pub fn with_shape(height: usize, width: usize, channels: usize, semantics: ChannelSemantics) -> Self {
        Self {
            height,
            width,
            channels,
            semantics,
            value_sum: vec![0.0; height * width * channels],
            weight_sum: vec![0.0; height * width],
        }
    }

    pub fn weight_sum(&self) -> &[f64] {
        &self.weight_sum
    }

    /// Adds one RGGB patch with unit weight. sRGB buffers take
    /// `(R, (G1 + G2) / 2, B)`; four-channel buffers take the channels as is.
    pub fn add_patch(&mut self, patch: &RggbPatch) -> Result<()> {
        let ps = patch.size;
        let PatchOrigin { row, col, .. } = patch.origin;
        if row + ps > self.height || col + ps > self.width {
            return Err(GcpError::OutOfBounds {
                row,
                col,
                size: ps,
                height: self.height,
                width: self.width,
            });
        }
        let plane = self.height * self.width;
        let n = ps * ps;
        let srgb = self.semantics == ChannelSemantics::Srgb && self.channels == 3;
        if !srgb && self.channels != 4 {
            return Err(GcpError::UnsupportedChannels(format!(
                "cannot aggregate RGGB patches into {} channels",
                self.channels
            )));
        }
        for r in 0..ps {
            for c in 0..ps {
                let src = r * ps + c;
                let dst = (row + r) * self.width + col + c;
                if srgb {
                    self.value_sum[dst] += patch.data[src];
                    self.value_sum[plane + dst] += 0.5 * (patch.data[n + src] + patch.data[2 * n + src]);
                    self.value_sum[2 * plane + dst] += patch.data[3 * n + src];
                } else {
                    for ch in 0..4 {
                        self.value_sum[ch * plane + dst] += patch.data[ch * n + src];
                    }
                }
                self.weight_sum[dst] += 1.0;
            }
        }
        Ok(())
    }

    /// `value_sum / weight_sum`; pixels no patch touched keep `fallback`.
    pub fn finish(self, fallback: &PlanarImage) -> Result<PlanarImage> {
        if fallback.height() != self.height || fallback.width() != self.width || fallback.channels() != self.channels {
            return Err(GcpError::mismatch("fallback image does not match buffer"));
        }
        let plane = self.height * self.width;
        let mut data = self.value_sum;
        for (idx, v) in data.iter_mut().enumerate() {
            let w = self.weight_sum[idx % plane];
            *v = if w > 0.0 { *v / w } else { fallback.data()[idx] };
        }
        PlanarImage::new(self.height, self.width, self.channels, self.semantics, data)
    }
}

/// Writes every patch of a filtered group into `buffer`.
pub fn aggregate(buffer: &mut AggregationBuffer, group_clean: &PatchGroup) -> Result<()> {
    group_clean.patches.iter().try_for_each(|p| buffer.add_patch(p))
}
