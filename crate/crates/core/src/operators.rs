//! Encoding physics: undersampling `U`, coil sensitivities `S`, the PE Fourier
//! transform, and the per-row forward operator `A = U F_PE S` with its adjoint.

use crate::error::{Error, Result};
use crate::fft::{transform_axis, Direction};
use crate::sampling::{MaskMeta, PatternKind};
use crate::tensor::{require_domain, AxisLabel, BoolTensor, ComplexTensor, Domain, KTSlice2D, KTVolume, C64};

/// Tolerance on Σ_j |s_j|² = 1.
pub const MAP_NORM_TOL: f64 = 1e-12;

/// Boolean (PE, TIME) sampling pattern. FE is implicitly fully sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    tensor: BoolTensor,
    meta: MaskMeta,
}

impl SamplingMask {
    pub fn new(tensor: BoolTensor, meta: MaskMeta) -> Result<Self> {
        if tensor.labels() != [AxisLabel::Pe, AxisLabel::Time] {
            return Err(Error::Axis(format!("mask axes must be (PE, TIME), got {:?}", tensor.labels())));
        }
        let (n, t) = (tensor.extents()[0], tensor.extents()[1]);
        for f in 0..t {
            if !(0..n).any(|p| tensor.data()[p * t + f]) {
                return Err(Error::Mask(format!("frame {f} samples no PE line")));
            }
        }
        Ok(Self { tensor, meta })
    }

    /// Mask from raw row-major (PE, TIME) booleans; metadata records the realized AF.
    pub fn from_bools(n_pe: usize, n_time: usize, data: Vec<bool>) -> Result<Self> {
        let tensor = BoolTensor::new(vec![n_pe, n_time], vec![AxisLabel::Pe, AxisLabel::Time], data)?;
        let count = tensor.count().max(1);
        let meta = MaskMeta {
            pattern: PatternKind::Custom,
            af: (n_pe * n_time) as f64 / count as f64,
            seed: 0,
            n_center: 0,
        };
        Self::new(tensor, meta)
    }

    pub fn full(n_pe: usize, n_time: usize) -> Self {
        Self::from_bools(n_pe, n_time, vec![true; n_pe * n_time]).expect("full mask is valid")
    }

    pub fn tensor(&self) -> &BoolTensor {
        &self.tensor
    }

    pub fn meta(&self) -> &MaskMeta {
        &self.meta
    }

    pub fn data(&self) -> &[bool] {
        self.tensor.data()
    }

    pub fn n_pe(&self) -> usize {
        self.tensor.extents()[0]
    }

    pub fn n_time(&self) -> usize {
        self.tensor.extents()[1]
    }

    pub fn is_sampled(&self, pe: usize, t: usize) -> bool {
        self.tensor.data()[pe * self.n_time() + t]
    }
}

/// Per-pixel complex coil sensitivities, axes (FE, PE, COIL) or (PE, COIL).
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps {
    tensor: ComplexTensor,
}

impl CoilMaps {
    /// Accepts maps that already satisfy Σ_j |s_j|² = 1 per pixel.
    pub fn new(tensor: ComplexTensor) -> Result<Self> {
        Self::check_axes(&tensor)?;
        let j = *tensor.extents().last().unwrap();
        let worst = tensor
            .data()
            .chunks_exact(j)
            .map(|px| (px.iter().map(|s| s.norm_sqr()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if worst > MAP_NORM_TOL {
            return Err(Error::Unnormalized(worst));
        }
        Ok(Self { tensor })
    }

    /// Rescales every pixel to unit total sensitivity.
    pub fn normalized(tensor: ComplexTensor) -> Result<Self> {
        Self::check_axes(&tensor)?;
        let j = *tensor.extents().last().unwrap();
        let mut data = tensor.data().to_vec();
        for (i, px) in data.chunks_exact_mut(j).enumerate() {
            let norm = px.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Config(format!("pixel {i} has zero sensitivity in every coil")));
            }
            px.iter_mut().for_each(|s| *s /= norm);
        }
        Ok(Self { tensor: tensor.with_data(data)? })
    }

    fn check_axes(tensor: &ComplexTensor) -> Result<()> {
        let l = tensor.labels();
        if l != [AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil] && l != [AxisLabel::Pe, AxisLabel::Coil] {
            return Err(Error::Axis(format!("coil maps must be (FE, PE, COIL) or (PE, COIL), got {l:?}")));
        }
        Ok(())
    }

    pub fn tensor(&self) -> &ComplexTensor {
        &self.tensor
    }

    pub fn data(&self) -> &[C64] {
        self.tensor.data()
    }

    pub fn n_coils(&self) -> usize {
        *self.tensor.extents().last().unwrap()
    }

    pub fn n_pe(&self) -> usize {
        let e = self.tensor.extents();
        e[e.len() - 2]
    }

    pub fn n_fe(&self) -> Option<usize> {
        (self.tensor.ndim() == 3).then(|| self.tensor.extents()[0])
    }

    /// Maps of FE row `m` as a (PE, COIL) map. Row-only maps return themselves.
    pub fn row(&self, m: usize) -> Result<CoilMaps> {
        match self.n_fe() {
            None => Ok(self.clone()),
            Some(rows) if m < rows => {
                let len = self.n_pe() * self.n_coils();
                let data = self.data()[m * len..(m + 1) * len].to_vec();
                let t = ComplexTensor::new(vec![self.n_pe(), self.n_coils()], vec![AxisLabel::Pe, AxisLabel::Coil], data)?;
                Ok(CoilMaps { tensor: t })
            }
            Some(rows) => Err(Error::Rows(format!("map row {m} outside 0..{rows}"))),
        }
    }
}

/// Row-level encoder over raw buffers: images are (PE, TIME), k-t data (PE, COIL, TIME).
#[derive(Clone, Copy, Debug)]
pub struct SliceEncoder<'a> {
    maps: &'a [C64],
    mask: &'a [bool],
    pub n_pe: usize,
    pub n_coils: usize,
    pub n_time: usize,
}

impl<'a> SliceEncoder<'a> {
    pub fn new(maps: &'a CoilMaps, mask: &'a SamplingMask) -> Result<Self> {
        if maps.n_fe().is_some() {
            return Err(Error::Axis("slice encoder needs single-row (PE, COIL) maps".into()));
        }
        if maps.n_pe() != mask.n_pe() {
            return Err(Error::Shape(format!("maps have {} PE lines, mask {}", maps.n_pe(), mask.n_pe())));
        }
        Ok(Self {
            maps: maps.data(),
            mask: mask.data(),
            n_pe: mask.n_pe(),
            n_coils: maps.n_coils(),
            n_time: mask.n_time(),
        })
    }

    pub fn image_len(&self) -> usize {
        self.n_pe * self.n_time
    }

    pub fn kt_len(&self) -> usize {
        self.n_pe * self.n_coils * self.n_time
    }

    pub fn mask(&self) -> &'a [bool] {
        self.mask
    }

    /// `S x`
    pub fn expand(&self, x: &[C64]) -> Vec<C64> {
        let (n, j, t) = (self.n_pe, self.n_coils, self.n_time);
        let mut out = Vec::with_capacity(n * j * t);
        for p in 0..n {
            let xs = &x[p * t..(p + 1) * t];
            for c in 0..j {
                let s = self.maps[p * j + c];
                out.extend(xs.iter().map(|v| s * v));
            }
        }
        out
    }

    /// `S* y`
    pub fn combine(&self, y: &[C64]) -> Vec<C64> {
        let (n, j, t) = (self.n_pe, self.n_coils, self.n_time);
        let mut out = vec![C64::new(0.0, 0.0); n * t];
        for p in 0..n {
            let o = &mut out[p * t..(p + 1) * t];
            for c in 0..j {
                let s = self.maps[p * j + c].conj();
                let ys = &y[(p * j + c) * t..(p * j + c + 1) * t];
                o.iter_mut().zip(ys).for_each(|(a, b)| *a += s * b);
            }
        }
        out
    }

    /// Zeroes unsampled positions of a (PE, COIL, TIME) buffer.
    pub fn mask_inplace(&self, k: &mut [C64]) {
        let (j, t) = (self.n_coils, self.n_time);
        for (i, v) in k.iter_mut().enumerate() {
            let p = i / (j * t);
            let f = i % t;
            if !self.mask[p * t + f] {
                *v = C64::new(0.0, 0.0);
            }
        }
    }

    /// `F_PE S x`, coil k-space without undersampling.
    pub fn to_coil_kspace(&self, x: &[C64]) -> Vec<C64> {
        let mut k = self.expand(x);
        transform_axis(&mut k, &[self.n_pe, self.n_coils, self.n_time], 0, Direction::Forward);
        k
    }

    /// `S* F_PE⁻¹ k`, the adjoint of [`Self::to_coil_kspace`].
    pub fn from_coil_kspace(&self, k: &[C64]) -> Vec<C64> {
        let mut y = k.to_vec();
        transform_axis(&mut y, &[self.n_pe, self.n_coils, self.n_time], 0, Direction::Inverse);
        self.combine(&y)
    }

    /// `A x = U F_PE S x`
    pub fn forward(&self, x: &[C64]) -> Vec<C64> {
        let mut k = self.to_coil_kspace(x);
        self.mask_inplace(&mut k);
        k
    }

    /// `A* z = S* F_PE⁻¹ U z`
    pub fn adjoint(&self, z: &[C64]) -> Vec<C64> {
        let mut k = z.to_vec();
        self.mask_inplace(&mut k);
        self.from_coil_kspace(&k)
    }
}

/// Zeroes unsampled (PE, TIME) positions, broadcasting over every other axis.
pub fn apply_mask(k: &ComplexTensor, mask: &SamplingMask) -> Result<ComplexTensor> {
    let pe = k.require_axis(AxisLabel::Pe)?;
    let tm = k.require_axis(AxisLabel::Time)?;
    if k.extents()[pe] != mask.n_pe() || k.extents()[tm] != mask.n_time() {
        return Err(Error::Shape(format!(
            "mask is {}x{} but data has PE={} TIME={}",
            mask.n_pe(),
            mask.n_time(),
            k.extents()[pe],
            k.extents()[tm]
        )));
    }
    let strides = k.strides();
    let (spe, stm) = (strides[pe], strides[tm]);
    let (npe, ntm) = (k.extents()[pe], k.extents()[tm]);
    let data = k
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let p = (i / spe) % npe;
            let f = (i / stm) % ntm;
            if mask.is_sampled(p, f) {
                v
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    k.with_data(data)
}

fn map_pixels(maps: &CoilMaps, x: &ComplexTensor) -> Result<(usize, usize)> {
    // (rows, pixels per row) consistency between image and maps
    let l = x.labels();
    let rows_img = if l.first() == Some(&AxisLabel::Fe) { x.extents()[0] } else { 1 };
    let n = x.extents()[x.require_axis(AxisLabel::Pe)?];
    if n != maps.n_pe() {
        return Err(Error::Shape(format!("image has {n} PE lines, maps {}", maps.n_pe())));
    }
    match maps.n_fe() {
        Some(m) if m != rows_img || l.first() != Some(&AxisLabel::Fe) => {
            Err(Error::Shape(format!("maps have {m} FE rows, image {rows_img}")))
        }
        None if l.first() == Some(&AxisLabel::Fe) => Err(Error::Shape("volume image needs (FE, PE, COIL) maps".into())),
        _ => Ok((rows_img, n)),
    }
}

/// `S`: (FE?, PE, TIME) image to (FE?, PE, COIL, TIME) coil images.
pub fn coil_expand(x: &ComplexTensor, maps: &CoilMaps) -> Result<ComplexTensor> {
    let l = x.labels();
    if l != [AxisLabel::Pe, AxisLabel::Time] && l != [AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Time] {
        return Err(Error::Axis(format!("coil_expand expects (FE?, PE, TIME), got {l:?}")));
    }
    let (rows, n) = map_pixels(maps, x)?;
    let t = *x.extents().last().unwrap();
    let j = maps.n_coils();
    let mut data = Vec::with_capacity(rows * n * j * t);
    for m in 0..rows {
        let rm = maps.row(m)?;
        for p in 0..n {
            for c in 0..j {
                let s = rm.data()[p * j + c];
                data.extend(x.data()[(m * n + p) * t..(m * n + p + 1) * t].iter().map(|v| s * v));
            }
        }
    }
    let mut ext = x.extents().to_vec();
    ext.insert(ext.len() - 1, j);
    let mut lab = l.to_vec();
    lab.insert(lab.len() - 1, AxisLabel::Coil);
    ComplexTensor::new(ext, lab, data)
}

/// `S*`: sums conj(s_j)·y_j over coils.
pub fn coil_combine(y: &ComplexTensor, maps: &CoilMaps) -> Result<ComplexTensor> {
    let l = y.labels();
    if l != [AxisLabel::Pe, AxisLabel::Coil, AxisLabel::Time]
        && l != [AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil, AxisLabel::Time]
    {
        return Err(Error::Axis(format!("coil_combine expects (FE?, PE, COIL, TIME), got {l:?}")));
    }
    let (rows, n) = map_pixels(maps, y)?;
    let j = maps.n_coils();
    if y.extents()[y.require_axis(AxisLabel::Coil)?] != j {
        return Err(Error::Shape(format!("data has {} coils, maps {j}", y.extents()[l.len() - 2])));
    }
    let t = *y.extents().last().unwrap();
    let mut data = vec![C64::new(0.0, 0.0); rows * n * t];
    for m in 0..rows {
        let rm = maps.row(m)?;
        for p in 0..n {
            for c in 0..j {
                let s = rm.data()[p * j + c].conj();
                let src = &y.data()[((m * n + p) * j + c) * t..((m * n + p) * j + c + 1) * t];
                let dst = &mut data[(m * n + p) * t..(m * n + p + 1) * t];
                dst.iter_mut().zip(src).for_each(|(a, b)| *a += s * b);
            }
        }
    }
    let mut ext = y.extents().to_vec();
    ext.remove(ext.len() - 2);
    let mut lab = l.to_vec();
    lab.remove(lab.len() - 2);
    ComplexTensor::new(ext, lab, data)
}

fn check_slice_image(x: &KTSlice2D) -> Result<()> {
    if x.is_multicoil() {
        return Err(Error::Axis("expected a (PE, TIME) image slice".into()));
    }
    Ok(())
}

/// `A = U F_PE S` on one row image.
pub fn forward_a(x: &KTSlice2D, maps: &CoilMaps, mask: &SamplingMask) -> Result<KTSlice2D> {
    check_slice_image(x)?;
    let enc = SliceEncoder::new(maps, mask)?;
    if x.n_pe() != enc.n_pe || x.n_time() != enc.n_time {
        return Err(Error::Shape(format!(
            "image slice {}x{} vs mask {}x{}",
            x.n_pe(),
            x.n_time(),
            enc.n_pe,
            enc.n_time
        )));
    }
    KTSlice2D::kt(enc.n_pe, enc.n_coils, enc.n_time, enc.forward(x.data()), x.row())
}

/// `A* = S* F_PE⁻¹ U` on one row of k-t data.
pub fn adjoint_a(z: &KTSlice2D, maps: &CoilMaps, mask: &SamplingMask) -> Result<KTSlice2D> {
    let enc = SliceEncoder::new(maps, mask)?;
    if z.tensor().extents() != [enc.n_pe, enc.n_coils, enc.n_time] {
        return Err(Error::Shape(format!(
            "k-t slice {:?} vs expected [{}, {}, {}]",
            z.tensor().extents(),
            enc.n_pe,
            enc.n_coils,
            enc.n_time
        )));
    }
    KTSlice2D::image(enc.n_pe, enc.n_time, enc.adjoint(z.data()), z.row())
}

/// `Z = F_FE* Y`: inverse DFT along FE only.
pub fn hybridize(y: &KTVolume) -> Result<KTVolume> {
    require_domain(y.domain(), Domain::KSpace)?;
    let mut data = y.data().to_vec();
    transform_axis(&mut data, y.tensor().extents(), 0, Direction::Inverse);
    Ok(KTVolume::new(y.tensor().with_data(data)?, Domain::Hybrid)?)
}

/// Inverse of [`hybridize`].
pub fn dehybridize(z: &KTVolume) -> Result<KTVolume> {
    require_domain(z.domain(), Domain::Hybrid)?;
    let mut data = z.data().to_vec();
    transform_axis(&mut data, z.tensor().extents(), 0, Direction::Forward);
    Ok(KTVolume::new(z.tensor().with_data(data)?, Domain::KSpace)?)
}

/// Zero-filled reconstruction of a whole KSPACE volume, row by row.
pub fn zero_filled(y: &KTVolume, maps: &CoilMaps, mask: &SamplingMask) -> Result<KTVolume> {
    let z = hybridize(y)?;
    let rows = crate::tensor::split_rows(&z)?;
    let recon = rows
        .iter()
        .map(|r| adjoint_a(r, &maps.row(r.row())?, mask))
        .collect::<Result<Vec<_>>>()?;
    crate::tensor::stitch_rows(&recon)
}
