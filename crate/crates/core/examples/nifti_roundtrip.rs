//! Write and read NIfTI-1 volumes in several layouts.

use lesionbench::nifti::{read_volume, write_volume, DataType, Endianness, Samples, VolumeHeader};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let dims = [16, 16, 8];
    let n: usize = dims.iter().product();
    let samples = Samples::I16((0..n).map(|i| (i % 400) as i16 - 100).collect());

    for (name, endianness) in [("le.nii", Endianness::Little), ("be.nii.gz", Endianness::Big)] {
        let mut header = VolumeHeader::new(dims, [0.9, 0.9, 3.0], DataType::I16);
        header.endianness = endianness;
        header.scl_slope = 0.5;
        let path = dir.path().join(name);
        write_volume(&header, &samples, &path)?;
        let back = read_volume(&path)?;
        let size = std::fs::metadata(&path)?.len();
        println!(
            "{name:<10} {size:>6} bytes, {:?}, grid {:?}, first scaled values {:?}",
            back.header.endianness,
            back.grid()?.dims,
            &back.scaled_values()[..4]
        );
        assert_eq!(back.samples, samples);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
