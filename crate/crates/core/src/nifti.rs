//! NIfTI-1 reader and writer.
//!
//! Both single-file (`.nii`, magic `n+1\0`) and paired (`.hdr`/`.img`, magic
//! `ni1\0`) layouts are supported, plain or gzip-compressed, in either byte
//! order. Only the sample types that lesion masks, images and atlas label maps
//! use in practice are accepted: `u8`, `i16`, `i32`, `f32` and `f64`.
//!
//! The header keeps every field of the on-disk record, so reading a file and
//! writing it back reproduces the same bytes.

use std::fs::File;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::mask::{Grid, VoxelMask};

/// Size of a NIfTI-1 header in bytes (`sizeof_hdr`).
pub const HEADER_SIZE: usize = 348;
/// Magic code of single-file volumes.
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
/// Magic code of paired `.hdr`/`.img` volumes.
pub const MAGIC_PAIRED: [u8; 4] = *b"ni1\0";
/// Default tolerance used when snapping a scaled volume to `{0, 1}`.
pub const DEFAULT_BINARIZE_TOLERANCE: f64 = 1e-3;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, thiserror::Error)]
pub enum NiftiError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file is too short for a NIfTI-1 header ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("sizeof_hdr is {0} in both byte orders, expected 348")]
    BadHeaderSize(i32),
    #[error("bad magic {0:?}, expected \"n+1\\0\" or \"ni1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("invalid dimensions: {0}")]
    BadDimensions(String),
    #[error("non-positive voxel spacing {value} on axis {axis}")]
    NonPositiveSpacing { axis: usize, value: f32 },
    #[error("invalid vox_offset {0}")]
    BadVoxOffset(f32),
    #[error("truncated payload: header declares {expected} samples, file holds {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("header and samples disagree: {0}")]
    DataMismatch(String),
    #[error("mask is not binary: value {value} at voxel {index} deviates from {{0, 1}} by more than {tolerance}")]
    NonBinaryMask {
        value: f64,
        index: usize,
        tolerance: f64,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NiftiError + '_ {
    move |source| NiftiError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
            DataType::F64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        Ok(match code {
            2 => DataType::U8,
            4 => DataType::I16,
            8 => DataType::I32,
            16 => DataType::F32,
            64 => DataType::F64,
            other => return Err(NiftiError::UnsupportedDatatype(other)),
        })
    }

    pub fn bytes_per_sample(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::I32 | DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    pub fn bitpix(self) -> i16 {
        (self.bytes_per_sample() * 8) as i16
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

/// A complete NIfTI-1 header.
///
/// Field names follow the on-disk record. `extension` holds the bytes between
/// the end of the header and `vox_offset` in single-file volumes (the
/// extension flag and any extension blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub endianness: Endianness,
    pub data_type: [u8; 10],
    pub db_name: [u8; 18],
    pub extents: i32,
    pub session_error: i16,
    pub regular: u8,
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p1: f32,
    pub intent_p2: f32,
    pub intent_p3: f32,
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub slice_start: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub slice_end: i16,
    pub slice_code: u8,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub slice_duration: f32,
    pub toffset: f32,
    pub glmax: i32,
    pub glmin: i32,
    pub descrip: [u8; 80],
    pub aux_file: [u8; 24],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern_b: f32,
    pub quatern_c: f32,
    pub quatern_d: f32,
    pub qoffset_x: f32,
    pub qoffset_y: f32,
    pub qoffset_z: f32,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub intent_name: [u8; 16],
    pub magic: [u8; 4],
    pub extension: Vec<u8>,
}

impl VolumeHeader {
    /// A single-file header for a 3-D volume with the given spacing in mm.
    pub fn new(dims: [usize; 3], spacing_mm: [f32; 3], datatype: DataType) -> Self {
        let d = |v: usize| i16::try_from(v).expect("dimension exceeds i16::MAX");
        VolumeHeader {
            endianness: Endianness::Little,
            data_type: [0; 10],
            db_name: [0; 18],
            extents: 0,
            session_error: 0,
            regular: 0,
            dim_info: 0,
            dim: [3, d(dims[0]), d(dims[1]), d(dims[2]), 1, 1, 1, 1],
            intent_p1: 0.0,
            intent_p2: 0.0,
            intent_p3: 0.0,
            intent_code: 0,
            datatype: datatype.code(),
            bitpix: datatype.bitpix(),
            slice_start: 0,
            pixdim: [
                1.0,
                spacing_mm[0],
                spacing_mm[1],
                spacing_mm[2],
                1.0,
                1.0,
                1.0,
                1.0,
            ],
            vox_offset: (HEADER_SIZE + 4) as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            slice_end: 0,
            slice_code: 0,
            xyzt_units: 2,
            cal_max: 0.0,
            cal_min: 0.0,
            slice_duration: 0.0,
            toffset: 0.0,
            glmax: 0,
            glmin: 0,
            descrip: [0; 80],
            aux_file: [0; 24],
            qform_code: 0,
            sform_code: 0,
            quatern_b: 0.0,
            quatern_c: 0.0,
            quatern_d: 0.0,
            qoffset_x: 0.0,
            qoffset_y: 0.0,
            qoffset_z: 0.0,
            srow_x: [0.0; 4],
            srow_y: [0.0; 4],
            srow_z: [0.0; 4],
            intent_name: [0; 16],
            magic: MAGIC_SINGLE,
            extension: vec![0; 4],
        }
    }

    pub fn data_type(&self) -> Result<DataType, NiftiError> {
        DataType::from_code(self.datatype)
    }

    /// Set the sample type, keeping `bitpix` consistent.
    pub fn set_data_type(&mut self, dt: DataType) {
        self.datatype = dt.code();
        self.bitpix = dt.bitpix();
    }

    /// Spatial voxel counts. Trailing singleton dimensions are squeezed.
    pub fn dims(&self) -> Result<[usize; 3], NiftiError> {
        let ndim = self.dim[0];
        if !(3..=7).contains(&ndim) {
            return Err(NiftiError::BadDimensions(format!(
                "dim[0] = {ndim}, a 3-D volume is required"
            )));
        }
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let n = self.dim[axis + 1];
            if n < 1 {
                return Err(NiftiError::BadDimensions(format!(
                    "dim[{}] = {n}, spatial sizes must be >= 1",
                    axis + 1
                )));
            }
            out[axis] = n as usize;
        }
        for i in 4..=ndim as usize {
            if self.dim[i] != 1 {
                return Err(NiftiError::BadDimensions(format!(
                    "dim[{i}] = {}, only singleton non-spatial dimensions are supported",
                    self.dim[i]
                )));
            }
        }
        Ok(out)
    }

    pub fn spacing_mm(&self) -> Result<[f64; 3], NiftiError> {
        let mut out = [0.0; 3];
        for axis in 0..3 {
            let v = self.pixdim[axis + 1];
            if !(v > 0.0 && v.is_finite()) {
                return Err(NiftiError::NonPositiveSpacing {
                    axis: axis + 1,
                    value: v,
                });
            }
            out[axis] = v as f64;
        }
        Ok(out)
    }

    pub fn grid(&self) -> Result<Grid, NiftiError> {
        Ok(Grid::new(self.dims()?, self.spacing_mm()?))
    }

    /// Voxel volume in millilitres.
    pub fn voxel_volume_ml(&self) -> Result<f64, NiftiError> {
        Ok(self.grid()?.voxel_volume_ml())
    }

    /// Voxel-to-world transform: the sform rows when `sform_code > 0`,
    /// otherwise a diagonal of the voxel spacing.
    pub fn affine(&self) -> [[f64; 4]; 4] {
        if self.sform_code > 0 {
            let row = |r: [f32; 4]| r.map(f64::from);
            [
                row(self.srow_x),
                row(self.srow_y),
                row(self.srow_z),
                [0.0, 0.0, 0.0, 1.0],
            ]
        } else {
            let p = |i: usize| f64::from(self.pixdim[i]);
            [
                [p(1), 0.0, 0.0, 0.0],
                [0.0, p(2), 0.0, 0.0],
                [0.0, 0.0, p(3), 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        }
    }

    pub fn is_single_file(&self) -> bool {
        self.magic == MAGIC_SINGLE
    }

    fn validate(&self) -> Result<(), NiftiError> {
        if self.magic != MAGIC_SINGLE && self.magic != MAGIC_PAIRED {
            return Err(NiftiError::BadMagic(self.magic));
        }
        self.data_type()?;
        self.dims()?;
        self.spacing_mm()?;
        Ok(())
    }

    fn sample_count(&self) -> Result<usize, NiftiError> {
        Ok(self.dims()?.iter().product())
    }

    fn decode<B: ByteOrder>(buf: &[u8], endianness: Endianness) -> Self {
        let mut c = Cursor::new(buf);
        // The cursor reads from an in-memory 348-byte slice, so reads cannot fail.
        let i16_ = |c: &mut Cursor<&[u8]>| c.read_i16::<B>().unwrap();
        let i32_ = |c: &mut Cursor<&[u8]>| c.read_i32::<B>().unwrap();
        let f32_ = |c: &mut Cursor<&[u8]>| c.read_f32::<B>().unwrap();
        fn bytes<const N: usize>(c: &mut Cursor<&[u8]>) -> [u8; N] {
            let mut out = [0u8; N];
            c.read_exact(&mut out).unwrap();
            out
        }

        let _sizeof_hdr = i32_(&mut c);
        let data_type = bytes::<10>(&mut c);
        let db_name = bytes::<18>(&mut c);
        let extents = i32_(&mut c);
        let session_error = i16_(&mut c);
        let [regular, dim_info] = bytes::<2>(&mut c);
        let mut dim = [0i16; 8];
        for d in &mut dim {
            *d = i16_(&mut c);
        }
        let intent_p1 = f32_(&mut c);
        let intent_p2 = f32_(&mut c);
        let intent_p3 = f32_(&mut c);
        let intent_code = i16_(&mut c);
        let datatype = i16_(&mut c);
        let bitpix = i16_(&mut c);
        let slice_start = i16_(&mut c);
        let mut pixdim = [0f32; 8];
        for p in &mut pixdim {
            *p = f32_(&mut c);
        }
        let vox_offset = f32_(&mut c);
        let scl_slope = f32_(&mut c);
        let scl_inter = f32_(&mut c);
        let slice_end = i16_(&mut c);
        let [slice_code, xyzt_units] = bytes::<2>(&mut c);
        let cal_max = f32_(&mut c);
        let cal_min = f32_(&mut c);
        let slice_duration = f32_(&mut c);
        let toffset = f32_(&mut c);
        let glmax = i32_(&mut c);
        let glmin = i32_(&mut c);
        let descrip = bytes::<80>(&mut c);
        let aux_file = bytes::<24>(&mut c);
        let qform_code = i16_(&mut c);
        let sform_code = i16_(&mut c);
        let quatern_b = f32_(&mut c);
        let quatern_c = f32_(&mut c);
        let quatern_d = f32_(&mut c);
        let qoffset_x = f32_(&mut c);
        let qoffset_y = f32_(&mut c);
        let qoffset_z = f32_(&mut c);
        let mut srows = [[0f32; 4]; 3];
        for row in &mut srows {
            for v in row.iter_mut() {
                *v = f32_(&mut c);
            }
        }
        let intent_name = bytes::<16>(&mut c);
        let magic = bytes::<4>(&mut c);
        debug_assert_eq!(c.position() as usize, HEADER_SIZE);

        VolumeHeader {
            endianness,
            data_type,
            db_name,
            extents,
            session_error,
            regular,
            dim_info,
            dim,
            intent_p1,
            intent_p2,
            intent_p3,
            intent_code,
            datatype,
            bitpix,
            slice_start,
            pixdim,
            vox_offset,
            scl_slope,
            scl_inter,
            slice_end,
            slice_code,
            xyzt_units,
            cal_max,
            cal_min,
            slice_duration,
            toffset,
            glmax,
            glmin,
            descrip,
            aux_file,
            qform_code,
            sform_code,
            quatern_b,
            quatern_c,
            quatern_d,
            qoffset_x,
            qoffset_y,
            qoffset_z,
            srow_x: srows[0],
            srow_y: srows[1],
            srow_z: srows[2],
            intent_name,
            magic,
            extension: Vec::new(),
        }
    }

    fn encode<B: ByteOrder>(&self, vox_offset: f32, out: &mut Vec<u8>) {
        // Writes into a Vec cannot fail.
        let start = out.len();
        out.write_i32::<B>(HEADER_SIZE as i32).unwrap();
        out.extend_from_slice(&self.data_type);
        out.extend_from_slice(&self.db_name);
        out.write_i32::<B>(self.extents).unwrap();
        out.write_i16::<B>(self.session_error).unwrap();
        out.push(self.regular);
        out.push(self.dim_info);
        for d in self.dim {
            out.write_i16::<B>(d).unwrap();
        }
        for v in [self.intent_p1, self.intent_p2, self.intent_p3] {
            out.write_f32::<B>(v).unwrap();
        }
        for v in [self.intent_code, self.datatype, self.bitpix, self.slice_start] {
            out.write_i16::<B>(v).unwrap();
        }
        for p in self.pixdim {
            out.write_f32::<B>(p).unwrap();
        }
        for v in [vox_offset, self.scl_slope, self.scl_inter] {
            out.write_f32::<B>(v).unwrap();
        }
        out.write_i16::<B>(self.slice_end).unwrap();
        out.push(self.slice_code);
        out.push(self.xyzt_units);
        for v in [self.cal_max, self.cal_min, self.slice_duration, self.toffset] {
            out.write_f32::<B>(v).unwrap();
        }
        out.write_i32::<B>(self.glmax).unwrap();
        out.write_i32::<B>(self.glmin).unwrap();
        out.extend_from_slice(&self.descrip);
        out.extend_from_slice(&self.aux_file);
        out.write_i16::<B>(self.qform_code).unwrap();
        out.write_i16::<B>(self.sform_code).unwrap();
        for v in [
            self.quatern_b,
            self.quatern_c,
            self.quatern_d,
            self.qoffset_x,
            self.qoffset_y,
            self.qoffset_z,
        ] {
            out.write_f32::<B>(v).unwrap();
        }
        for row in [self.srow_x, self.srow_y, self.srow_z] {
            for v in row {
                out.write_f32::<B>(v).unwrap();
            }
        }
        out.extend_from_slice(&self.intent_name);
        out.extend_from_slice(&self.magic);
        debug_assert_eq!(out.len() - start, HEADER_SIZE);
    }

    /// Serialize the 348-byte header record under `self.endianness`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_SIZE);
        match self.endianness {
            Endianness::Little => self.encode::<LittleEndian>(self.vox_offset, &mut out),
            Endianness::Big => self.encode::<BigEndian>(self.vox_offset, &mut out),
        }
        out
    }

    /// Parse a header record, detecting the byte order from `sizeof_hdr`.
    pub fn from_bytes(buf: &[u8]) -> Result<Self, NiftiError> {
        if buf.len() < HEADER_SIZE {
            return Err(NiftiError::TruncatedHeader(buf.len()));
        }
        let buf = &buf[..HEADER_SIZE];
        let header = if LittleEndian::read_i32(buf) == HEADER_SIZE as i32 {
            Self::decode::<LittleEndian>(buf, Endianness::Little)
        } else if BigEndian::read_i32(buf) == HEADER_SIZE as i32 {
            Self::decode::<BigEndian>(buf, Endianness::Big)
        } else {
            return Err(NiftiError::BadHeaderSize(LittleEndian::read_i32(buf)));
        };
        header.validate()?;
        Ok(header)
    }
}

/// Raw samples in their on-disk type.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Samples {
    pub fn data_type(&self) -> DataType {
        match self {
            Samples::U8(_) => DataType::U8,
            Samples::I16(_) => DataType::I16,
            Samples::I32(_) => DataType::I32,
            Samples::F32(_) => DataType::F32,
            Samples::F64(_) => DataType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::U8(v) => v.len(),
            Samples::I16(v) => v.len(),
            Samples::I32(v) => v.len(),
            Samples::F32(v) => v.len(),
            Samples::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored values as `f64`, without intensity scaling.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Samples::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Samples::I16(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Samples::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Samples::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            Samples::F64(v) => v.clone(),
        }
    }

    fn decode<B: ByteOrder>(bytes: &[u8], dt: DataType, n: usize) -> Self {
        let bytes = &bytes[..n * dt.bytes_per_sample()];
        match dt {
            DataType::U8 => Samples::U8(bytes.to_vec()),
            DataType::I16 => {
                let mut v = vec![0; n];
                B::read_i16_into(bytes, &mut v);
                Samples::I16(v)
            }
            DataType::I32 => {
                let mut v = vec![0; n];
                B::read_i32_into(bytes, &mut v);
                Samples::I32(v)
            }
            DataType::F32 => {
                let mut v = vec![0.0; n];
                B::read_f32_into(bytes, &mut v);
                Samples::F32(v)
            }
            DataType::F64 => {
                let mut v = vec![0.0; n];
                B::read_f64_into(bytes, &mut v);
                Samples::F64(v)
            }
        }
    }

    fn encode<B: ByteOrder>(&self, out: &mut Vec<u8>) {
        let start = out.len();
        out.resize(start + self.len() * self.data_type().bytes_per_sample(), 0);
        let dst = &mut out[start..];
        match self {
            Samples::U8(v) => dst.copy_from_slice(v),
            Samples::I16(v) => B::write_i16_into(v, dst),
            Samples::I32(v) => B::write_i32_into(v, dst),
            Samples::F32(v) => B::write_f32_into(v, dst),
            Samples::F64(v) => B::write_f64_into(v, dst),
        }
    }
}

/// A decoded volume: full header plus raw samples in x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub header: VolumeHeader,
    pub samples: Samples,
}

impl Volume {
    /// Sample values with `scl_slope`/`scl_inter` applied when the slope is
    /// non-zero.
    pub fn scaled_values(&self) -> Vec<f64> {
        let mut values = self.samples.to_f64();
        let slope = f64::from(self.header.scl_slope);
        let inter = f64::from(self.header.scl_inter);
        if slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0) {
            let inter = if inter.is_finite() { inter } else { 0.0 };
            for v in &mut values {
                *v = *v * slope + inter;
            }
        }
        values
    }

    pub fn grid(&self) -> Result<Grid, NiftiError> {
        self.header.grid()
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, NiftiError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err(path))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(io_err(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn is_gz_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn paired_image_path(hdr: &Path) -> Option<PathBuf> {
    let name = hdr.file_name()?.to_str()?;
    let candidates: Vec<String> = if let Some(stem) = name.strip_suffix(".hdr.gz") {
        vec![format!("{stem}.img.gz"), format!("{stem}.img")]
    } else {
        let stem = name.strip_suffix(".hdr")?;
        vec![format!("{stem}.img"), format!("{stem}.img.gz")]
    };
    candidates
        .into_iter()
        .map(|c| hdr.with_file_name(c))
        .find(|p| p.exists())
}

/// Read a NIfTI-1 volume (plain or gzip, either byte order).
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume, NiftiError> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let mut header = VolumeHeader::from_bytes(&bytes)?;
    let dt = header.data_type()?;
    let n = header.sample_count()?;

    let offset = header.vox_offset;
    if !(offset >= 0.0 && offset.fract() == 0.0) {
        return Err(NiftiError::BadVoxOffset(offset));
    }
    let offset = offset as usize;

    let (payload, start) = if header.is_single_file() {
        if offset < HEADER_SIZE || offset > bytes.len() {
            return Err(NiftiError::BadVoxOffset(header.vox_offset));
        }
        header.extension = bytes[HEADER_SIZE..offset].to_vec();
        (bytes, offset)
    } else {
        header.extension = bytes[HEADER_SIZE..].to_vec();
        let img = paired_image_path(path).ok_or_else(|| NiftiError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "paired .img file not found",
            ),
        })?;
        (read_maybe_gz(&img)?, offset)
    };

    let available = payload.len().saturating_sub(start) / dt.bytes_per_sample();
    if available < n {
        return Err(NiftiError::TruncatedPayload {
            expected: n,
            actual: available,
        });
    }
    let body = &payload[start..];
    let samples = match header.endianness {
        Endianness::Little => Samples::decode::<LittleEndian>(body, dt, n),
        Endianness::Big => Samples::decode::<BigEndian>(body, dt, n),
    };
    Ok(Volume { header, samples })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), NiftiError> {
    let file = File::create(path).map_err(io_err(path))?;
    if is_gz_path(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes).map_err(io_err(path))?;
        enc.finish().map_err(io_err(path))?;
    } else {
        let mut file = file;
        file.write_all(bytes).map_err(io_err(path))?;
    }
    Ok(())
}

/// Write a volume. A `.gz` suffix selects gzip compression. Paired headers
/// (`ni1`) written to a `.hdr[.gz]` path produce a sibling `.img[.gz]` file.
pub fn write_volume(
    header: &VolumeHeader,
    samples: &Samples,
    path: impl AsRef<Path>,
) -> Result<(), NiftiError> {
    let path = path.as_ref();
    header.validate()?;
    let dt = header.data_type()?;
    if dt != samples.data_type() {
        return Err(NiftiError::DataMismatch(format!(
            "header datatype {:?}, samples {:?}",
            dt,
            samples.data_type()
        )));
    }
    let n = header.sample_count()?;
    if samples.len() != n {
        return Err(NiftiError::DataMismatch(format!(
            "header declares {n} samples, got {}",
            samples.len()
        )));
    }

    let single = header.is_single_file();
    let mut out = Vec::with_capacity(HEADER_SIZE + 4 + n * dt.bytes_per_sample());
    let extension: &[u8] = if single && header.extension.is_empty() {
        &[0; 4]
    } else {
        &header.extension
    };
    let vox_offset = if single {
        (HEADER_SIZE + extension.len()) as f32
    } else {
        0.0
    };
    let mut body = Vec::new();
    match header.endianness {
        Endianness::Little => {
            header.encode::<LittleEndian>(vox_offset, &mut out);
            samples.encode::<LittleEndian>(&mut body);
        }
        Endianness::Big => {
            header.encode::<BigEndian>(vox_offset, &mut out);
            samples.encode::<BigEndian>(&mut body);
        }
    }
    out.extend_from_slice(extension);

    if single {
        out.extend_from_slice(&body);
        write_bytes(path, &out)
    } else {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let img = if let Some(stem) = name.strip_suffix(".hdr.gz") {
            path.with_file_name(format!("{stem}.img.gz"))
        } else if let Some(stem) = name.strip_suffix(".hdr") {
            path.with_file_name(format!("{stem}.img"))
        } else {
            return Err(NiftiError::DataMismatch(
                "paired (ni1) volumes must be written to a .hdr path".into(),
            ));
        };
        write_bytes(path, &out)?;
        write_bytes(&img, &body)
    }
}

/// Read a binary mask, snapping values within `tolerance` of 0 or 1.
pub fn read_mask(path: impl AsRef<Path>, tolerance: f64) -> Result<VoxelMask, NiftiError> {
    let volume = read_volume(path)?;
    mask_from_volume(&volume, tolerance)
}

/// Binarize an in-memory volume under the same contract as [`read_mask`].
pub fn mask_from_volume(volume: &Volume, tolerance: f64) -> Result<VoxelMask, NiftiError> {
    let grid = volume.grid()?;
    let values = volume.scaled_values();
    let mut data = Vec::with_capacity(values.len());
    for (index, &value) in values.iter().enumerate() {
        if value.abs() <= tolerance {
            data.push(0u8);
        } else if (value - 1.0).abs() <= tolerance {
            data.push(1u8);
        } else {
            return Err(NiftiError::NonBinaryMask {
                value,
                index,
                tolerance,
            });
        }
    }
    Ok(VoxelMask::from_parts(volume.header.clone(), grid, data))
}

/// Write a mask as a `u8` volume, keeping the geometry of its header.
pub fn write_mask(mask: &VoxelMask, path: impl AsRef<Path>) -> Result<(), NiftiError> {
    let mut header = mask.header().clone();
    header.set_data_type(DataType::U8);
    header.scl_slope = 1.0;
    header.scl_inter = 0.0;
    header.cal_min = 0.0;
    header.cal_max = 1.0;
    header.dim[0] = 3;
    header.dim[4..].fill(1);
    write_volume(&header, &Samples::U8(mask.data().to_vec()), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_header(dt: DataType) -> VolumeHeader {
        let mut h = VolumeHeader::new([3, 4, 5], [1.0, 0.5, 2.0], dt);
        h.descrip[..4].copy_from_slice(b"test");
        h.sform_code = 1;
        h.srow_x = [1.0, 0.0, 0.0, -10.0];
        h.srow_y = [0.0, 0.5, 0.0, 4.0];
        h.srow_z = [0.0, 0.0, 2.0, 7.5];
        h
    }

    #[test]
    fn header_record_is_348_bytes() {
        let h = sample_header(DataType::F32);
        assert_eq!(h.to_bytes().len(), HEADER_SIZE);
        let bytes = h.to_bytes();
        assert_eq!(LittleEndian::read_i32(&bytes), 348);
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(LittleEndian::read_i16(&bytes[70..]), 16);
    }

    #[test]
    fn little_endian_size_field_selects_little_endian_path() {
        let h = sample_header(DataType::I16);
        let parsed = VolumeHeader::from_bytes(&h.to_bytes()).unwrap();
        assert_eq!(parsed.endianness, Endianness::Little);
    }

    #[test]
    fn byte_swapped_header_decodes_to_same_logical_header() {
        let little = sample_header(DataType::I32);
        let mut big = little.clone();
        big.endianness = Endianness::Big;
        let a = VolumeHeader::from_bytes(&little.to_bytes()).unwrap();
        let mut b = VolumeHeader::from_bytes(&big.to_bytes()).unwrap();
        assert_eq!(b.endianness, Endianness::Big);
        b.endianness = Endianness::Little;
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_magic_and_datatype() {
        let mut h = sample_header(DataType::U8);
        h.magic = *b"n+2\0";
        assert!(matches!(
            VolumeHeader::from_bytes(&h.to_bytes()),
            Err(NiftiError::BadMagic(_))
        ));
        let mut h = sample_header(DataType::U8);
        h.datatype = 512; // u16
        assert!(matches!(
            VolumeHeader::from_bytes(&h.to_bytes()),
            Err(NiftiError::UnsupportedDatatype(512))
        ));
    }

    #[test]
    fn rejects_bad_size_field() {
        let mut bytes = sample_header(DataType::U8).to_bytes();
        bytes[..4].copy_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(
            VolumeHeader::from_bytes(&bytes),
            Err(NiftiError::BadHeaderSize(0))
        ));
        assert!(matches!(
            VolumeHeader::from_bytes(&bytes[..100]),
            Err(NiftiError::TruncatedHeader(100))
        ));
    }

    #[test]
    fn rejects_non_positive_spacing() {
        let mut h = sample_header(DataType::U8);
        h.pixdim[2] = 0.0;
        assert!(matches!(
            VolumeHeader::from_bytes(&h.to_bytes()),
            Err(NiftiError::NonPositiveSpacing { axis: 2, .. })
        ));
        h.pixdim[2] = -1.0;
        assert!(h.spacing_mm().is_err());
    }

    #[test]
    fn time_axis_squeezed_only_when_singleton() {
        let mut h = sample_header(DataType::U8);
        h.dim[0] = 4;
        h.dim[4] = 1;
        assert_eq!(h.dims().unwrap(), [3, 4, 5]);
        h.dim[4] = 2;
        assert!(matches!(h.dims(), Err(NiftiError::BadDimensions(_))));
        h.dim[0] = 2;
        assert!(h.dims().is_err());
    }

    #[test]
    fn affine_falls_back_to_spacing_diagonal() {
        let mut h = sample_header(DataType::U8);
        assert_eq!(h.affine()[0][3], -10.0);
        h.sform_code = 0;
        h.qform_code = 0;
        let a = h.affine();
        assert_eq!(a[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(a[1], [0.0, 0.5, 0.0, 0.0]);
        assert_eq!(a[2], [0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn voxel_volume_of_two_mm_grid() {
        let h = VolumeHeader::new([1, 1, 1], [2.0, 2.0, 2.0], DataType::U8);
        assert_eq!(h.voxel_volume_ml().unwrap(), 0.008);
    }

    #[test]
    fn scaling_applied_when_slope_nonzero() {
        let mut header = VolumeHeader::new([2, 1, 1], [1.0; 3], DataType::I16);
        header.scl_slope = 0.5;
        header.scl_inter = 1.0;
        let v = Volume {
            header: header.clone(),
            samples: Samples::I16(vec![2, 4]),
        };
        assert_eq!(v.scaled_values(), vec![2.0, 3.0]);
        header.scl_slope = 0.0;
        let v = Volume {
            header,
            samples: Samples::I16(vec![2, 4]),
        };
        assert_eq!(v.scaled_values(), vec![2.0, 4.0]);
    }

    #[test]
    fn binarize_contract() {
        let header = VolumeHeader::new([3, 1, 1], [1.0; 3], DataType::F32);
        let ok = Volume {
            header: header.clone(),
            samples: Samples::F32(vec![0.0, 1.0, 0.9995]),
        };
        let mask = mask_from_volume(&ok, DEFAULT_BINARIZE_TOLERANCE).unwrap();
        assert_eq!(mask.data(), &[0, 1, 1]);

        let soft = Volume {
            header,
            samples: Samples::F32(vec![0.0, 0.4, 1.0]),
        };
        let err = mask_from_volume(&soft, DEFAULT_BINARIZE_TOLERANCE).unwrap_err();
        assert!(matches!(err, NiftiError::NonBinaryMask { index: 1, .. }));
    }
}
