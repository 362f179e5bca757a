//! Point-cloud file formats.
//!
//! CSV: header `x0,...,x{n-1},true_lid`, one point per line.
//!
//! Binary: magic `LIDC1`, little-endian `u32` point count `N`, `u32`
//! dimension `n`, `N·n` `f64` coordinates in row-major order, then `N` `u32`
//! labels.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{LidError, Result};
use crate::manifolds::PointCloud;
use crate::numerics::Matrix;

pub const CLOUD_MAGIC: &[u8; 5] = b"LIDC1";

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let n = cloud.dim();
    let mut out = String::new();
    for j in 0..n {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("true_lid\n");
    for (row, lid) in cloud.points.iter_rows().zip(&cloud.true_lid) {
        for x in row {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{lid}\n"));
    }
    out
}

pub fn cloud_from_csv(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| LidError::Format("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.last() != Some(&"true_lid") {
        return Err(LidError::Format(
            "CSV header must end with `true_lid`".into(),
        ));
    }
    let n = cols.len() - 1;
    for (j, c) in cols[..n].iter().enumerate() {
        if *c != format!("x{j}") {
            return Err(LidError::Format(format!("unexpected CSV column `{c}`")));
        }
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != n + 1 {
            return Err(LidError::Format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                n + 1,
                fields.len()
            )));
        }
        for f in &fields[..n] {
            data.push(
                f.parse::<f64>()
                    .map_err(|e| LidError::Format(format!("line {}: {e}", lineno + 2)))?,
            );
        }
        labels.push(
            fields[n]
                .parse::<u32>()
                .map_err(|e| LidError::Format(format!("line {}: {e}", lineno + 2)))?,
        );
    }
    PointCloud::new(Matrix::from_vec(labels.len(), n, data)?, labels)
}

pub fn cloud_to_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + cloud.points.as_slice().len() * 8 + cloud.len() * 4);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cloud.dim() as u32).to_le_bytes());
    for x in cloud.points.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for l in &cloud.true_lid {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(LidError::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(LidError::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn cloud_from_bytes(bytes: &[u8]) -> Result<PointCloud> {
    let mut r = Reader::new(bytes);
    if r.take(5)? != CLOUD_MAGIC {
        return Err(LidError::Format("missing LIDC1 magic".into()));
    }
    let count = r.u32()? as usize;
    let n = r.u32()? as usize;
    let mut data = Vec::with_capacity(count * n);
    for _ in 0..count * n {
        data.push(r.f64()?);
    }
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(r.u32()?);
    }
    r.finish()?;
    PointCloud::new(Matrix::from_vec(count, n, data)?, labels)
}

/// Write CSV when the extension is `.csv`, binary otherwise.
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e == "csv") {
        cloud_to_csv(cloud).into_bytes()
    } else {
        cloud_to_bytes(cloud)
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Read either format, sniffing the binary magic.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CLOUD_MAGIC) {
        cloud_from_bytes(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| LidError::Format("cloud file is neither LIDC1 nor UTF-8 CSV".into()))?;
        cloud_from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{sample, Family, ManifoldSpec};
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let cloud = PointCloud::new(
            Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 3.25]]).unwrap(),
            vec![1, 1],
        )
        .unwrap();
        assert_eq!(cloud_to_csv(&cloud), "x0,x1,true_lid\n0.5,-1,1\n2,3.25,1\n");
    }

    #[test]
    fn binary_layout() {
        let cloud = PointCloud::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![7]).unwrap();
        let b = cloud_to_bytes(&cloud);
        assert_eq!(&b[..5], b"LIDC1");
        assert_eq!(&b[5..9], &1u32.to_le_bytes());
        assert_eq!(&b[9..13], &1u32.to_le_bytes());
        assert_eq!(&b[13..21], &1.0f64.to_le_bytes());
        assert_eq!(&b[21..25], &7u32.to_le_bytes());
        assert_eq!(b.len(), 25);
    }

    #[test]
    fn truncated_binary_rejected() {
        let cloud = sample(&ManifoldSpec::new(Family::Hyperball, 2, 3).with_count(4)).unwrap();
        let b = cloud_to_bytes(&cloud);
        assert!(cloud_from_bytes(&b[..b.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_both_formats(seed in 0u64..1000, count in 1usize..20, d in 1usize..4) {
            let spec = ManifoldSpec::new(Family::Hypersphere, d, d + 2).with_count(count).with_seed(seed);
            let cloud = sample(&spec).unwrap();
            let from_bin = cloud_from_bytes(&cloud_to_bytes(&cloud)).unwrap();
            prop_assert_eq!(&from_bin.points, &cloud.points);
            prop_assert_eq!(&from_bin.true_lid, &cloud.true_lid);
            let from_csv = cloud_from_csv(&cloud_to_csv(&cloud)).unwrap();
            prop_assert_eq!(&from_csv.points, &cloud.points);
            prop_assert_eq!(&from_csv.true_lid, &cloud.true_lid);
        }
    }
}
