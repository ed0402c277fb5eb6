//! Motion sequence files: JSON Lines with a header record followed by one
//! record per frame.

use super::layout::{LAYOUT_ID, MOTION_DIMS};
use super::NUM_KEYPOINTS;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFileHeader {
    pub format_version: u32,
    pub fps: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub dims: usize,
    pub layout_id: String,
}

impl MotionFileHeader {
    pub fn new(fps: f64) -> Self {
        Self { format_version: FORMAT_VERSION, fps, k: NUM_KEYPOINTS, dims: MOTION_DIMS, layout_id: LAYOUT_ID.to_string() }
    }

    fn check(&self) -> Result<()> {
        if self.dims != MOTION_DIMS || self.k != NUM_KEYPOINTS {
            return Err(Error::Format(format!("unsupported dims {} / K {}", self.dims, self.k)));
        }
        if self.layout_id != LAYOUT_ID {
            return Err(Error::Format(format!("unknown layout_id {:?}", self.layout_id)));
        }
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format_version {}", self.format_version)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub frame_index: u64,
    pub values: Vec<f64>,
}

pub fn write_motion_jsonl<W: Write>(mut w: W, header: &MotionFileHeader, frames: &[MotionRecord]) -> Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for f in frames {
        if f.values.len() != MOTION_DIMS {
            return Err(Error::shape(format!("{MOTION_DIMS} values"), f.values.len()));
        }
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_motion_jsonl<R: BufRead>(r: R) -> Result<(MotionFileHeader, Vec<MotionRecord>)> {
    let mut lines = r.lines().filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
    let first = lines.next().ok_or_else(|| Error::Format("empty motion file".into()))??;
    let header: MotionFileHeader = serde_json::from_str(&first)?;
    header.check()?;
    let mut frames = Vec::new();
    for line in lines {
        let rec: MotionRecord = serde_json::from_str(&line?)?;
        if rec.values.len() != header.dims {
            return Err(Error::Format(format!("frame {} has {} values, expected {}", rec.frame_index, rec.values.len(), header.dims)));
        }
        frames.push(rec);
    }
    Ok((header, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_header_key() {
        let frames: Vec<MotionRecord> = (0..3).map(|i| MotionRecord { frame_index: i, values: vec![i as f64 * 0.25; 265] }).collect();
        let mut buf = Vec::new();
        write_motion_jsonl(&mut buf, &MotionFileHeader::new(25.0), &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"K\":21"));
        let (h, back) = read_motion_jsonl(buf.as_slice()).unwrap();
        assert_eq!(h, MotionFileHeader::new(25.0));
        assert_eq!(back, frames);
    }

    #[test]
    fn rejects_mismatched_layout_or_dims() {
        let mut h = MotionFileHeader::new(25.0);
        h.layout_id = "other".into();
        let mut buf = Vec::new();
        write_motion_jsonl(&mut buf, &h, &[]).unwrap();
        assert!(matches!(read_motion_jsonl(buf.as_slice()), Err(Error::Format(_))));

        let text = format!("{}\n{{\"frame_index\":0,\"values\":[1.0,2.0]}}\n", serde_json::to_string(&MotionFileHeader::new(25.0)).unwrap());
        assert!(matches!(read_motion_jsonl(text.as_bytes()), Err(Error::Format(_))));

        let mut h = MotionFileHeader::new(25.0);
        h.dims = 264;
        let mut buf = Vec::new();
        write_motion_jsonl(&mut buf, &h, &[]).unwrap();
        assert!(read_motion_jsonl(buf.as_slice()).is_err());
    }
}
