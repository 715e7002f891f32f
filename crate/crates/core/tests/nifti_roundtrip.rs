use std::path::Path;

use lesionbench::nifti::{
    mask_from_volume, read_mask, read_volume, write_mask, write_volume, DataType, Endianness, NiftiError, Samples,
    VolumeHeader, DEFAULT_BINARIZE_TOLERANCE, MAGIC_PAIRED,
};
use lesionbench::{Grid, VoxelMask};

const DIMS: [usize; 3] = [5, 4, 3];

fn samples(dt: DataType) -> Samples {
    let n = DIMS.iter().product::<usize>();
    match dt {
        DataType::U8 => Samples::U8((0..n).map(|i| (i * 7 % 256) as u8).collect()),
        DataType::I16 => Samples::I16((0..n).map(|i| i as i16 * -301 + 17).collect()),
        DataType::I32 => Samples::I32((0..n).map(|i| i as i32 * 100_003 - 5_000_000).collect()),
        DataType::F32 => Samples::F32((0..n).map(|i| i as f32 * 0.37 - 4.5).collect()),
        DataType::F64 => Samples::F64((0..n).map(|i| (i as f64).sqrt() * -1e-7).collect()),
    }
}

fn header(dt: DataType, endianness: Endianness, paired: bool) -> VolumeHeader {
    let mut h = VolumeHeader::new(DIMS, [0.9, 1.1, 3.0], dt);
    h.endianness = endianness;
    h.descrip[..7].copy_from_slice(b"fixture");
    h.sform_code = 2;
    h.srow_x = [0.9, 0.0, 0.0, -90.0];
    h.srow_y = [0.0, 1.1, 0.0, 12.5];
    h.srow_z = [0.0, 0.0, 3.0, -40.0];
    if paired {
        h.magic = MAGIC_PAIRED;
    }
    h
}

fn files(dir: &Path) -> Vec<Vec<u8>> {
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn every_layout_roundtrips_byte_exact() {
    for dt in [DataType::U8, DataType::I16, DataType::I32, DataType::F32, DataType::F64] {
        for endianness in [Endianness::Little, Endianness::Big] {
            for (paired, name) in [(false, "v.nii"), (false, "v.nii.gz"), (true, "v.hdr"), (true, "v.hdr.gz")] {
                let label = format!("{dt:?} {endianness:?} {name}");
                let h = header(dt, endianness, paired);
                let s = samples(dt);
                let first = tempfile::tempdir().unwrap();
                write_volume(&h, &s, first.path().join(name)).unwrap();
                let v = read_volume(first.path().join(name)).unwrap();
                assert_eq!(v.samples, s, "{label}");
                assert_eq!(v.header.endianness, endianness, "{label}");
                assert_eq!(v.header.srow_y, h.srow_y, "{label}");
                assert_eq!(v.header.descrip, h.descrip, "{label}");

                let second = tempfile::tempdir().unwrap();
                write_volume(&v.header, &v.samples, second.path().join(name)).unwrap();
                let (a, b) = (files(first.path()), files(second.path()));
                assert_eq!(a.len(), if paired { 2 } else { 1 }, "{label}");
                assert_eq!(a, b, "{label}");
            }
        }
    }
}

/// Hand-assembled single-file volume, independent of the writer.
fn hand_built(big: bool) -> Vec<u8> {
    fn put(buf: &mut [u8], at: usize, bytes: &[u8]) {
        buf[at..at + bytes.len()].copy_from_slice(bytes);
    }
    let i16b = |v: i16| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    let i32b = |v: i32| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    let f32b = |v: f32| if big { v.to_be_bytes() } else { v.to_le_bytes() };
    let mut buf = vec![0u8; 352];
    put(&mut buf, 0, &i32b(348));
    for (k, d) in [3i16, 3, 2, 1, 1, 1, 1, 1].iter().enumerate() {
        put(&mut buf, 40 + 2 * k, &i16b(*d));
    }
    put(&mut buf, 70, &i16b(4)); // int16
    put(&mut buf, 72, &i16b(16));
    for (k, p) in [1.0f32, 2.0, 2.0, 4.0].iter().enumerate() {
        put(&mut buf, 76 + 4 * k, &f32b(*p));
    }
    put(&mut buf, 108, &f32b(352.0));
    put(&mut buf, 112, &f32b(0.5)); // slope
    put(&mut buf, 116, &f32b(1.0)); // intercept
    put(&mut buf, 344, b"n+1\0");
    for v in [-2i16, 0, 2, 4, 6, 8] {
        buf.extend_from_slice(&i16b(v));
    }
    buf
}

#[test]
fn reads_hand_built_files_in_both_byte_orders() {
    let dir = tempfile::tempdir().unwrap();
    for big in [false, true] {
        let path = dir.path().join(format!("hand_{big}.nii"));
        std::fs::write(&path, hand_built(big)).unwrap();
        let v = read_volume(&path).unwrap();
        assert_eq!(v.samples, Samples::I16(vec![-2, 0, 2, 4, 6, 8]));
        assert_eq!(v.scaled_values(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let grid = v.grid().unwrap();
        assert_eq!(grid.dims, [3, 2, 1]);
        assert_eq!(grid.spacing_mm, [2.0, 2.0, 4.0]);
        assert_eq!(v.header.affine()[0], [2.0, 0.0, 0.0, 0.0]);
    }
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.nii");

    std::fs::write(&path, &hand_built(false)[..200]).unwrap();
    assert!(matches!(read_volume(&path), Err(NiftiError::TruncatedHeader(200))));

    let mut bytes = hand_built(false);
    bytes.truncate(352 + 6);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_volume(&path), Err(NiftiError::TruncatedPayload { expected: 6, actual: 3 })));

    let mut bytes = hand_built(false);
    bytes[344..348].copy_from_slice(b"xyz\0");
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_volume(&path), Err(NiftiError::BadMagic(_))));

    let mut bytes = hand_built(false);
    bytes[70..72].copy_from_slice(&128i16.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_volume(&path), Err(NiftiError::UnsupportedDatatype(128))));

    let mut bytes = hand_built(false);
    bytes[0..4].copy_from_slice(&349i32.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_volume(&path), Err(NiftiError::BadHeaderSize(_))));

    assert!(matches!(read_volume(dir.path().join("missing.nii")), Err(NiftiError::Io { .. })));
}

#[test]
fn fractional_mask_is_not_binary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("soft.nii.gz");
    let mut values = vec![0.0f32; 60];
    values[10] = 1.0;
    values[11] = 0.4;
    write_volume(&VolumeHeader::new(DIMS, [1.0; 3], DataType::F32), &Samples::F32(values), &path).unwrap();
    match read_mask(&path, DEFAULT_BINARIZE_TOLERANCE) {
        Err(NiftiError::NonBinaryMask { index, value, .. }) => {
            assert_eq!(index, 11);
            assert!((value - 0.4).abs() < 1e-6);
        }
        other => panic!("expected NonBinaryMask, got {other:?}"),
    }
    // A wide tolerance snaps it.
    let v = read_volume(&path).unwrap();
    assert!(mask_from_volume(&v, 0.45).is_ok());
}

#[test]
fn near_binary_float_masks_snap() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("float.nii");
    let values: Vec<f64> = (0..60).map(|i| if i % 3 == 0 { 1.0 - 1e-5 } else { 2e-6 }).collect();
    write_volume(&VolumeHeader::new(DIMS, [1.0; 3], DataType::F64), &Samples::F64(values), &path).unwrap();
    let m = read_mask(&path, DEFAULT_BINARIZE_TOLERANCE).unwrap();
    assert_eq!(m.foreground_count(), 20);
}

#[test]
fn masks_keep_geometry_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new([6, 5, 4], [0.8, 0.8, 5.0]);
    let mask = VoxelMask::from_fn(grid, |x, y, z| (x + y + z) % 4 == 0);
    for name in ["m.nii", "m.nii.gz"] {
        let path = dir.path().join(name);
        write_mask(&mask, &path).unwrap();
        let back = read_mask(&path, DEFAULT_BINARIZE_TOLERANCE).unwrap();
        assert_eq!(back.data(), mask.data());
        assert!(back.grid().matches(&grid));
    }
}
