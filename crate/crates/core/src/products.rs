//! Output products derived from the final segmentation.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::raster::RasterGrid;
use crate::werm::Segmentation;

/// Each water cell carries its segment's water level; everything else is
/// nodata.
pub fn water_elevation_raster(segmentation: &Segmentation, nodata: f64) -> RasterGrid {
    let levels: Vec<f64> = segmentation
        .segments
        .iter()
        .map(|s| s.elevation.unwrap_or(nodata))
        .collect();
    let values = segmentation
        .labels
        .iter()
        .map(|&l| if l == 0 { nodata } else { levels[l as usize - 1] })
        .collect();
    RasterGrid {
        georef: segmentation.georef,
        values,
        nodata,
    }
}

/// Copy of the DSM with every water cell set to its segment's level. Cells
/// of a segment without a level are left as they were.
pub fn hydro_flatten(dsm: &RasterGrid, segmentation: &Segmentation) -> RasterGrid {
    let mut out = dsm.clone();
    for (v, &l) in out.values.iter_mut().zip(&segmentation.labels) {
        if l != 0 {
            if let Some(level) = segmentation.segments[l as usize - 1].elevation {
                *v = level;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BboxRecord {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// One line of the segment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: u32,
    pub cell_count: usize,
    pub area_m2: f64,
    pub elevation_m: Option<f64>,
    pub bbox: BboxRecord,
}

/// Records for every segment, largest first, ties by id.
pub fn segment_report(segmentation: &Segmentation) -> Vec<SegmentRecord> {
    let g = segmentation.georef;
    let mut records: Vec<SegmentRecord> = segmentation
        .segments
        .iter()
        .map(|s| {
            let (x_min, _, _, y_max) = g.cell_rect(s.bbox.row_min, s.bbox.col_min);
            let (_, y_min, x_max, _) = g.cell_rect(s.bbox.row_max, s.bbox.col_max);
            SegmentRecord {
                id: s.id,
                cell_count: s.cell_count,
                area_m2: s.area,
                elevation_m: s.elevation,
                bbox: BboxRecord {
                    row_min: s.bbox.row_min,
                    col_min: s.bbox.col_min,
                    row_max: s.bbox.row_max,
                    col_max: s.bbox.col_max,
                    x_min,
                    y_min,
                    x_max,
                    y_max,
                },
            }
        })
        .collect();
    records.sort_by(|a, b| b.area_m2.total_cmp(&a.area_m2).then(a.id.cmp(&b.id)));
    records
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], out: &mut W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
