//! Complex tensors with labeled axes, k-t volumes and their per-row slices.
//!
//! Storage is row-major with the last axis fastest. For the (PE, COIL, TIME)
//! layouts used by the solvers this keeps temporal signals contiguous.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AxisLabel {
    Fe,
    Pe,
    Coil,
    Time,
    Channel,
    Generic,
}

impl AxisLabel {
    pub fn code(self) -> u8 {
        match self {
            AxisLabel::Fe => 0,
            AxisLabel::Pe => 1,
            AxisLabel::Coil => 2,
            AxisLabel::Time => 3,
            AxisLabel::Channel => 4,
            AxisLabel::Generic => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => AxisLabel::Fe,
            1 => AxisLabel::Pe,
            2 => AxisLabel::Coil,
            3 => AxisLabel::Time,
            4 => AxisLabel::Channel,
            5 => AxisLabel::Generic,
            _ => return None,
        })
    }
}

impl std::fmt::Display for AxisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AxisLabel::Fe => "FE",
            AxisLabel::Pe => "PE",
            AxisLabel::Coil => "COIL",
            AxisLabel::Time => "TIME",
            AxisLabel::Channel => "CHANNEL",
            AxisLabel::Generic => "GENERIC",
        };
        f.write_str(s)
    }
}

fn check_shape(extents: &[usize], labels: &[AxisLabel], len: usize) -> Result<()> {
    if extents.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} extents but {} axis labels",
            extents.len(),
            labels.len()
        )));
    }
    if extents.is_empty() {
        return Err(Error::Shape("tensor must have at least one axis".into()));
    }
    if let Some(i) = extents.iter().position(|&e| e == 0) {
        return Err(Error::Shape(format!("axis {i} has zero length")));
    }
    let expected: usize = extents.iter().product();
    if expected != len {
        return Err(Error::Shape(format!(
            "extents {extents:?} require {expected} values, got {len}"
        )));
    }
    Ok(())
}

pub(crate) fn row_major_strides(extents: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; extents.len()];
    for i in (0..extents.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * extents[i + 1];
    }
    strides
}

/// Dense complex tensor. Values are validated finite at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    extents: Vec<usize>,
    labels: Vec<AxisLabel>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(extents: Vec<usize>, labels: Vec<AxisLabel>, data: Vec<C64>) -> Result<Self> {
        check_shape(&extents, &labels, data.len())?;
        if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { extents, labels, data })
    }

    pub fn zeros(extents: Vec<usize>, labels: Vec<AxisLabel>) -> Result<Self> {
        let n = extents.iter().product();
        Self::new(extents, labels, vec![C64::new(0.0, 0.0); n])
    }

    /// Builds a tensor from a function of the multi-index.
    pub fn from_fn(
        extents: Vec<usize>,
        labels: Vec<AxisLabel>,
        mut f: impl FnMut(&[usize]) -> C64,
    ) -> Result<Self> {
        let n: usize = extents.iter().product();
        let mut idx = vec![0usize; extents.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..extents.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < extents[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self::new(extents, labels, data)
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn labels(&self) -> &[AxisLabel] {
        &self.labels
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.extents.len()
    }

    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.extents)
    }

    pub fn axis(&self, label: AxisLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn require_axis(&self, label: AxisLabel) -> Result<usize> {
        self.axis(label)
            .ok_or_else(|| Error::Axis(format!("tensor with axes {:?} has no {label} axis", self.labels)))
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        let off: usize = idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    /// Applies `f` elementwise, keeping shape and labels.
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Result<Self> {
        Self::new(
            self.extents.clone(),
            self.labels.clone(),
            self.data.iter().map(|&z| f(z)).collect(),
        )
    }

    pub fn with_data(&self, data: Vec<C64>) -> Result<Self> {
        Self::new(self.extents.clone(), self.labels.clone(), data)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self, other⟩ = Σ conj(self)·other.
    pub fn inner(&self, other: &ComplexTensor) -> Result<C64> {
        if self.extents != other.extents {
            return Err(Error::Shape(format!(
                "inner product of {:?} and {:?}",
                self.extents, other.extents
            )));
        }
        Ok(inner(&self.data, &other.data))
    }
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Boolean tensor, used for sampling masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolTensor {
    extents: Vec<usize>,
    labels: Vec<AxisLabel>,
    data: Vec<bool>,
}

impl BoolTensor {
    pub fn new(extents: Vec<usize>, labels: Vec<AxisLabel>, data: Vec<bool>) -> Result<Self> {
        check_shape(&extents, &labels, data.len())?;
        Ok(Self { extents, labels, data })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn labels(&self) -> &[AxisLabel] {
        &self.labels
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Domain {
    KSpace,
    Hybrid,
    Image,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::KSpace => "KSPACE",
            Domain::Hybrid => "HYBRID",
            Domain::Image => "IMAGE",
        })
    }
}

pub(crate) fn require_domain(found: Domain, expected: Domain) -> Result<()> {
    if found != expected {
        return Err(Error::Domain { expected: expected.to_string(), found: found.to_string() });
    }
    Ok(())
}

const VOLUME_COIL: [AxisLabel; 4] = [AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil, AxisLabel::Time];
const VOLUME_IMAGE: [AxisLabel; 3] = [AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Time];
const SLICE_COIL: [AxisLabel; 3] = [AxisLabel::Pe, AxisLabel::Coil, AxisLabel::Time];
const SLICE_IMAGE: [AxisLabel; 2] = [AxisLabel::Pe, AxisLabel::Time];

/// A 3D k-t acquisition (FE, PE, COIL, TIME) or a coil-combined image (FE, PE, TIME).
#[derive(Clone, Debug, PartialEq)]
pub struct KTVolume {
    tensor: ComplexTensor,
    domain: Domain,
}

impl KTVolume {
    pub fn new(tensor: ComplexTensor, domain: Domain) -> Result<Self> {
        let labels = tensor.labels();
        if labels != VOLUME_COIL && labels != VOLUME_IMAGE {
            return Err(Error::Axis(format!(
                "volume axes must be (FE, PE, COIL, TIME) or (FE, PE, TIME), got {labels:?}"
            )));
        }
        Ok(Self { tensor, domain })
    }

    /// Coil-combined image volume from raw (FE, PE, TIME) data.
    pub fn image(m: usize, n: usize, t: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(ComplexTensor::new(vec![m, n, t], VOLUME_IMAGE.to_vec(), data)?, Domain::Image)
    }

    /// Multi-coil volume from raw (FE, PE, COIL, TIME) data.
    pub fn multicoil(dims: [usize; 4], data: Vec<C64>, domain: Domain) -> Result<Self> {
        Self::new(ComplexTensor::new(dims.to_vec(), VOLUME_COIL.to_vec(), data)?, domain)
    }

    pub fn tensor(&self) -> &ComplexTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> ComplexTensor {
        self.tensor
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[C64] {
        self.tensor.data()
    }

    pub fn is_multicoil(&self) -> bool {
        self.tensor.ndim() == 4
    }

    pub fn n_fe(&self) -> usize {
        self.tensor.extents()[0]
    }

    pub fn n_pe(&self) -> usize {
        self.tensor.extents()[1]
    }

    pub fn n_coils(&self) -> usize {
        if self.is_multicoil() {
            self.tensor.extents()[2]
        } else {
            1
        }
    }

    pub fn n_time(&self) -> usize {
        *self.tensor.extents().last().unwrap()
    }
}

/// One FE row of a volume: (PE, COIL, TIME) k-t data or a (PE, TIME) image.
#[derive(Clone, Debug, PartialEq)]
pub struct KTSlice2D {
    tensor: ComplexTensor,
    row: usize,
    domain: Domain,
}

impl KTSlice2D {
    pub fn new(tensor: ComplexTensor, row: usize, domain: Domain) -> Result<Self> {
        let labels = tensor.labels();
        if labels != SLICE_COIL && labels != SLICE_IMAGE {
            return Err(Error::Axis(format!(
                "slice axes must be (PE, COIL, TIME) or (PE, TIME), got {labels:?}"
            )));
        }
        Ok(Self { tensor, row, domain })
    }

    pub fn image(n: usize, t: usize, data: Vec<C64>, row: usize) -> Result<Self> {
        Self::new(ComplexTensor::new(vec![n, t], SLICE_IMAGE.to_vec(), data)?, row, Domain::Image)
    }

    pub fn kt(n: usize, j: usize, t: usize, data: Vec<C64>, row: usize) -> Result<Self> {
        Self::new(ComplexTensor::new(vec![n, j, t], SLICE_COIL.to_vec(), data)?, row, Domain::Hybrid)
    }

    pub fn tensor(&self) -> &ComplexTensor {
        &self.tensor
    }

    pub fn data(&self) -> &[C64] {
        self.tensor.data()
    }

    pub fn into_data(self) -> Vec<C64> {
        self.tensor.into_data()
    }

    pub fn row(&self) -> usize {
        self.row
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn is_multicoil(&self) -> bool {
        self.tensor.ndim() == 3
    }

    pub fn n_pe(&self) -> usize {
        self.tensor.extents()[0]
    }

    pub fn n_coils(&self) -> usize {
        if self.is_multicoil() {
            self.tensor.extents()[1]
        } else {
            1
        }
    }

    pub fn n_time(&self) -> usize {
        *self.tensor.extents().last().unwrap()
    }
}

/// Splits a HYBRID or IMAGE volume into its FE rows.
pub fn split_rows(v: &KTVolume) -> Result<Vec<KTSlice2D>> {
    if v.domain() == Domain::KSpace {
        return Err(Error::Domain { expected: "HYBRID or IMAGE".into(), found: v.domain().to_string() });
    }
    let extents = &v.tensor().extents()[1..];
    let labels = &v.tensor().labels()[1..];
    let row_len: usize = extents.iter().product();
    v.data()
        .chunks_exact(row_len)
        .enumerate()
        .map(|(m, chunk)| {
            let t = ComplexTensor::new(extents.to_vec(), labels.to_vec(), chunk.to_vec())?;
            KTSlice2D::new(t, m, v.domain())
        })
        .collect()
}

/// Inverse of [`split_rows`]; placement follows each slice's row index.
pub fn stitch_rows(slices: &[KTSlice2D]) -> Result<KTVolume> {
    let first = slices.first().ok_or_else(|| Error::Rows("no slices to stitch".into()))?;
    let m = slices.len();
    let extents = first.tensor().extents();
    let labels = first.tensor().labels();
    let mut placed: Vec<Option<&KTSlice2D>> = vec![None; m];
    for s in slices {
        if s.tensor().extents() != extents || s.tensor().labels() != labels {
            return Err(Error::Shape(format!(
                "slice {} has extents {:?}, expected {:?}",
                s.row(),
                s.tensor().extents(),
                extents
            )));
        }
        if s.domain() != first.domain() {
            return Err(Error::Domain { expected: first.domain().to_string(), found: s.domain().to_string() });
        }
        let slot = placed
            .get_mut(s.row())
            .ok_or_else(|| Error::Rows(format!("row index {} outside 0..{m}", s.row())))?;
        if slot.is_some() {
            return Err(Error::Rows(format!("duplicate row index {}", s.row())));
        }
        *slot = Some(s);
    }
    let mut data = Vec::with_capacity(m * first.data().len());
    for (i, s) in placed.into_iter().enumerate() {
        let s = s.ok_or_else(|| Error::Rows(format!("missing row index {i}")))?;
        data.extend_from_slice(s.data());
    }
    let mut vext = vec![m];
    vext.extend_from_slice(extents);
    let mut vlab = vec![AxisLabel::Fe];
    vlab.extend_from_slice(labels);
    KTVolume::new(ComplexTensor::new(vext, vlab, data)?, first.domain())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn shape_validation() {
        assert!(ComplexTensor::new(vec![2, 3], vec![AxisLabel::Pe], vec![c(0.0); 6]).is_err());
        assert!(ComplexTensor::new(vec![2, 3], vec![AxisLabel::Pe, AxisLabel::Time], vec![c(0.0); 5]).is_err());
        let bad = vec![c(0.0), C64::new(f64::NAN, 0.0)];
        assert!(matches!(
            ComplexTensor::new(vec![2], vec![AxisLabel::Generic], bad),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn split_single_row_is_identity() {
        let v = KTVolume::image(1, 3, 2, (0..6).map(|i| c(i as f64)).collect()).unwrap();
        let rows = split_rows(&v).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].data(), v.data());
        assert_eq!(stitch_rows(&rows).unwrap(), v);
    }

    #[test]
    fn split_rows_distinct_constants() {
        let (m, n, t) = (4, 2, 2);
        let v = KTVolume::image(m, n, t, (0..m * n * t).map(|i| c((i / (n * t)) as f64 + 10.0)).collect())
            .unwrap();
        let rows = split_rows(&v).unwrap();
        assert_eq!(rows.len(), 4);
        for (m, r) in rows.iter().enumerate() {
            assert_eq!(r.row(), m);
            assert!(r.data().iter().all(|&z| z == c(m as f64 + 10.0)));
        }
    }

    #[test]
    fn split_rejects_kspace() {
        let t = ComplexTensor::zeros(vec![2, 2, 1, 2], VOLUME_COIL.to_vec()).unwrap();
        let v = KTVolume::new(t, Domain::KSpace).unwrap();
        assert!(matches!(split_rows(&v), Err(Error::Domain { .. })));
    }

    #[test]
    fn stitch_is_order_independent() {
        let v = KTVolume::image(3, 2, 2, (0..12).map(|i| c(i as f64)).collect()).unwrap();
        let mut rows = split_rows(&v).unwrap();
        rows.reverse();
        assert_eq!(stitch_rows(&rows).unwrap(), v);
    }

    #[test]
    fn stitch_rejects_duplicates_and_gaps() {
        let v = KTVolume::image(3, 2, 2, (0..12).map(|i| c(i as f64)).collect()).unwrap();
        let rows = split_rows(&v).unwrap();
        let dup = vec![rows[0].clone(), rows[0].clone(), rows[2].clone()];
        assert!(matches!(stitch_rows(&dup), Err(Error::Rows(_))));
        let gap = vec![rows[0].clone(), rows[2].clone()];
        assert!(matches!(stitch_rows(&gap), Err(Error::Rows(_))));
        let odd = KTSlice2D::image(3, 2, vec![c(0.0); 6], 1).unwrap();
        assert!(matches!(stitch_rows(&[rows[0].clone(), odd]), Err(Error::Shape(_))));
    }

    #[test]
    fn volume_rejects_wrong_axes() {
        let t = ComplexTensor::zeros(vec![2, 2, 2], vec![AxisLabel::Pe, AxisLabel::Fe, AxisLabel::Time]).unwrap();
        assert!(KTVolume::new(t, Domain::Image).is_err());
    }
}
