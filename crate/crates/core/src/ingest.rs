//! Point-cloud readers and writers.
//!
//! Readers are single-pass streams: points come out in file order and only
//! one record is buffered at a time. Bounds are accumulated from the points
//! actually yielded, so they are available once the stream is exhausted.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// One LiDAR return in projected meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Planar extent of a non-empty cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCloudBounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub point_count: u64,
}

impl PointCloudBounds {
    fn from_point(p: &Point3) -> Self {
        PointCloudBounds {
            min_x: p.x,
            min_y: p.y,
            max_x: p.x,
            max_y: p.y,
            point_count: 1,
        }
    }

    fn extend(&mut self, p: &Point3) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
        self.point_count += 1;
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Bounds of a slice of points; `None` when the slice is empty.
    pub fn of_points(points: &[Point3]) -> Option<Self> {
        let mut tracker = BoundsTracker::default();
        for p in points {
            tracker.push(p);
        }
        tracker.bounds
    }
}

/// Incremental bounds over a stream of points.
#[derive(Debug, Clone, Default)]
pub struct BoundsTracker {
    bounds: Option<PointCloudBounds>,
}

impl BoundsTracker {
    pub fn push(&mut self, p: &Point3) {
        match &mut self.bounds {
            Some(b) => b.extend(p),
            None => self.bounds = Some(PointCloudBounds::from_point(p)),
        }
    }

    pub fn bounds(&self) -> Result<PointCloudBounds, IngestError> {
        self.bounds.ok_or(IngestError::EmptyCloud)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a valid LAS file: {0}")]
    Format(String),
    #[error("compressed LAZ input is not supported ({0}); decompress to LAS first")]
    Laz(String),
    #[error("truncated point record {index}: {source}")]
    Truncated {
        index: u64,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("point {index} has non-finite coordinates")]
    NonFinite { index: u64 },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("unsupported point file extension for {0} (expected .las, .xyz, .txt or .csv)")]
    UnknownExtension(PathBuf),
    #[error("point {index} does not fit the LAS integer grid at the chosen scale and offset")]
    QuantizationOverflow { index: u64 },
}

/// Reader switches shared by all point formats.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Drop LAS points whose withheld flag is set. XYZ carries no flags.
    pub drop_withheld: bool,
}

// Public header block field offsets shared by LAS 1.0 through 1.4.
const SIGNATURE: &[u8; 4] = b"LASF";
const OFF_VERSION_MAJOR: usize = 24;
const OFF_VERSION_MINOR: usize = 25;
const OFF_HEADER_SIZE: usize = 94;
const OFF_POINT_OFFSET: usize = 96;
const OFF_VLR_COUNT: usize = 100;
const OFF_POINT_FORMAT: usize = 104;
const OFF_RECORD_LENGTH: usize = 105;
const OFF_LEGACY_COUNT: usize = 107;
const OFF_LEGACY_BY_RETURN: usize = 111;
const OFF_SCALE: usize = 131;
const OFF_OFFSET: usize = 155;
const OFF_MAX_X: usize = 179;
const OFF_POINT_COUNT_14: usize = 247;
const HEADER_SIZE_12: usize = 227;
const HEADER_SIZE_14: usize = 375;
const VLR_HEADER_SIZE: usize = 54;

/// Minimum record length for point data record formats 0 through 10.
const MIN_RECORD_LENGTH: [u16; 11] = [20, 28, 26, 34, 57, 63, 30, 36, 38, 59, 67];

/// Fields of the public header block the reader needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LasHeader {
    pub version: (u8, u8),
    pub header_size: u16,
    pub point_data_offset: u32,
    pub vlr_count: u32,
    pub point_format: u8,
    pub record_length: u16,
    pub point_count: u64,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn le_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn le_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

impl LasHeader {
    fn parse(bytes: &[u8]) -> Result<Self, IngestError> {
        if bytes.len() < HEADER_SIZE_12 {
            return Err(IngestError::Format(format!(
                "header block is {} bytes, need at least {HEADER_SIZE_12}",
                bytes.len()
            )));
        }
        if &bytes[..4] != SIGNATURE {
            return Err(IngestError::Format("missing LASF file signature".into()));
        }
        let version = (bytes[OFF_VERSION_MAJOR], bytes[OFF_VERSION_MINOR]);
        if version.0 != 1 || version.1 > 4 {
            return Err(IngestError::Format(format!(
                "unsupported LAS version {}.{}",
                version.0, version.1
            )));
        }
        let header_size = le_u16(bytes, OFF_HEADER_SIZE);
        let raw_format = bytes[OFF_POINT_FORMAT];
        // LASzip marks compressed files by setting bit 7 (and sometimes 6)
        // of the point data format id.
        if raw_format & 0xC0 != 0 {
            return Err(IngestError::Laz(format!(
                "point data format byte {raw_format:#04x} carries the LASzip compression bits"
            )));
        }
        if raw_format > 10 {
            return Err(IngestError::Format(format!(
                "unknown point data record format {raw_format}"
            )));
        }
        let record_length = le_u16(bytes, OFF_RECORD_LENGTH);
        let min_len = MIN_RECORD_LENGTH[raw_format as usize];
        if record_length < min_len {
            return Err(IngestError::Format(format!(
                "record length {record_length} is shorter than the {min_len} bytes of format {raw_format}"
            )));
        }
        let legacy_count = le_u32(bytes, OFF_LEGACY_COUNT) as u64;
        let point_count = if version.1 >= 4 && legacy_count == 0 {
            if (header_size as usize) < HEADER_SIZE_14 || bytes.len() < HEADER_SIZE_14 {
                return Err(IngestError::Format(
                    "LAS 1.4 header is too short to hold the 64-bit point count".into(),
                ));
            }
            le_u64(bytes, OFF_POINT_COUNT_14)
        } else {
            legacy_count
        };
        let scale = [
            le_f64(bytes, OFF_SCALE),
            le_f64(bytes, OFF_SCALE + 8),
            le_f64(bytes, OFF_SCALE + 16),
        ];
        if scale.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(IngestError::Format(format!("invalid scale factors {scale:?}")));
        }
        let offset = [
            le_f64(bytes, OFF_OFFSET),
            le_f64(bytes, OFF_OFFSET + 8),
            le_f64(bytes, OFF_OFFSET + 16),
        ];
        if offset.iter().any(|o| !o.is_finite()) {
            return Err(IngestError::Format(format!("invalid offsets {offset:?}")));
        }
        let point_data_offset = le_u32(bytes, OFF_POINT_OFFSET);
        if (point_data_offset as usize) < header_size as usize {
            return Err(IngestError::Format(format!(
                "point data offset {point_data_offset} lies inside the {header_size}-byte header"
            )));
        }
        Ok(LasHeader {
            version,
            header_size,
            point_data_offset,
            vlr_count: le_u32(bytes, OFF_VLR_COUNT),
            point_format: raw_format,
            record_length,
            point_count,
            scale,
            offset,
        })
    }

    fn is_withheld(&self, record: &[u8]) -> bool {
        if self.point_format <= 5 {
            record[15] & 0x80 != 0
        } else {
            record[15] & 0x04 != 0
        }
    }
}

/// Streaming reader for uncompressed LAS 1.0–1.4 files.
pub struct LasReader<R> {
    reader: R,
    header: LasHeader,
    options: ReadOptions,
    record: Vec<u8>,
    next_index: u64,
    bounds: BoundsTracker,
    failed: bool,
}

impl LasReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, options: ReadOptions) -> Result<Self, IngestError> {
        let path = path.as_ref();
        if has_extension(path, "laz") {
            return Err(IngestError::Laz(format!("{} has a .laz extension", path.display())));
        }
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        LasReader::new(BufReader::new(file), options)
    }
}

impl<R: Read> LasReader<R> {
    /// Parses the header and skips the variable length records, leaving the
    /// reader positioned on the first point record.
    pub fn new(mut reader: R, options: ReadOptions) -> Result<Self, IngestError> {
        let mut fixed = vec![0u8; HEADER_SIZE_12];
        reader.read_exact(&mut fixed).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                IngestError::Format("file is shorter than a LAS header".into())
            } else {
                IngestError::Io(e)
            }
        })?;
        if &fixed[..4] != SIGNATURE {
            return Err(IngestError::Format("missing LASF file signature".into()));
        }
        let header_size = le_u16(&fixed, OFF_HEADER_SIZE) as usize;
        if header_size > HEADER_SIZE_12 {
            let mut rest = vec![0u8; header_size - HEADER_SIZE_12];
            reader
                .read_exact(&mut rest)
                .map_err(|_| IngestError::Format("header block is truncated".into()))?;
            fixed.extend_from_slice(&rest);
        }
        let header = LasHeader::parse(&fixed)?;

        // Walk the VLRs so a LASzip record is reported as LAZ rather than as
        // garbage point data, then discard anything up to the point offset.
        let mut consumed = header_size as u64;
        let mut vlr_head = [0u8; VLR_HEADER_SIZE];
        for _ in 0..header.vlr_count {
            if consumed + VLR_HEADER_SIZE as u64 > header.point_data_offset as u64 {
                break;
            }
            reader
                .read_exact(&mut vlr_head)
                .map_err(|_| IngestError::Format("variable length record is truncated".into()))?;
            consumed += VLR_HEADER_SIZE as u64;
            let user_id = &vlr_head[2..18];
            let user_id = std::str::from_utf8(user_id).unwrap_or("").trim_end_matches('\0');
            if user_id == "laszip encoded" {
                return Err(IngestError::Laz("file carries a LASzip VLR".into()));
            }
            let body = le_u16(&vlr_head, 20) as u64;
            skip_bytes(&mut reader, body)?;
            consumed += body;
        }
        let gap = (header.point_data_offset as u64).saturating_sub(consumed);
        skip_bytes(&mut reader, gap)?;

        let record = vec![0u8; header.record_length as usize];
        Ok(LasReader {
            reader,
            header,
            options,
            record,
            next_index: 0,
            bounds: BoundsTracker::default(),
            failed: false,
        })
    }

    pub fn header(&self) -> &LasHeader {
        &self.header
    }

    /// Bounds of the points yielded so far; errors while none were yielded.
    pub fn bounds(&self) -> Result<PointCloudBounds, IngestError> {
        self.bounds.bounds()
    }

    fn read_point(&mut self) -> Option<Result<Point3, IngestError>> {
        while self.next_index < self.header.point_count {
            let index = self.next_index;
            self.next_index += 1;
            if let Err(source) = self.reader.read_exact(&mut self.record) {
                return Some(Err(IngestError::Truncated { index, source }));
            }
            if self.options.drop_withheld && self.header.is_withheld(&self.record) {
                continue;
            }
            let h = &self.header;
            let p = Point3 {
                x: le_i32(&self.record, 0) as f64 * h.scale[0] + h.offset[0],
                y: le_i32(&self.record, 4) as f64 * h.scale[1] + h.offset[1],
                z: le_i32(&self.record, 8) as f64 * h.scale[2] + h.offset[2],
            };
            if !p.is_finite() {
                return Some(Err(IngestError::NonFinite { index }));
            }
            self.bounds.push(&p);
            return Some(Ok(p));
        }
        None
    }
}

impl<R: Read> Iterator for LasReader<R> {
    type Item = Result<Point3, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.read_point();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

fn skip_bytes<R: Read>(reader: &mut R, n: u64) -> Result<(), IngestError> {
    let copied = io::copy(&mut reader.by_ref().take(n), &mut io::sink())?;
    if copied < n {
        return Err(IngestError::Format(
            "file ends before the point data offset".into(),
        ));
    }
    Ok(())
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Streaming reader for ASCII XYZ text: one point per line, the first three
/// whitespace- or comma-separated fields taken as x, y, z.
pub struct XyzReader<R> {
    reader: R,
    line: String,
    line_no: usize,
    bounds: BoundsTracker,
    failed: bool,
}

impl XyzReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(XyzReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> XyzReader<R> {
    pub fn new(reader: R) -> Self {
        XyzReader {
            reader,
            line: String::new(),
            line_no: 0,
            bounds: BoundsTracker::default(),
            failed: false,
        }
    }

    pub fn bounds(&self) -> Result<PointCloudBounds, IngestError> {
        self.bounds.bounds()
    }

    fn read_point(&mut self) -> Option<Result<Point3, IngestError>> {
        loop {
            self.line.clear();
            match self.reader.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(IngestError::Io(e))),
            }
            self.line_no += 1;
            let text = self.line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            return Some(parse_xyz_line(text, self.line_no).inspect(|p| self.bounds.push(p)));
        }
    }
}

fn parse_xyz_line(text: &str, line: usize) -> Result<Point3, IngestError> {
    let mut fields = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty());
    let mut xyz = [0.0f64; 3];
    for (i, slot) in xyz.iter_mut().enumerate() {
        let field = fields.next().ok_or_else(|| IngestError::Parse {
            line,
            message: format!("expected 3 numeric fields, found {i}"),
        })?;
        *slot = field.parse::<f64>().map_err(|_| IngestError::Parse {
            line,
            message: format!("field {} ({field:?}) is not a number", i + 1),
        })?;
        if !slot.is_finite() {
            return Err(IngestError::Parse {
                line,
                message: format!("field {} ({field:?}) is not finite", i + 1),
            });
        }
    }
    Ok(Point3::new(xyz[0], xyz[1], xyz[2]))
}

impl<R: BufRead> Iterator for XyzReader<R> {
    type Item = Result<Point3, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.read_point();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

/// Either reader, chosen from the file extension.
pub enum PointReader {
    Las(LasReader<BufReader<File>>),
    Xyz(XyzReader<BufReader<File>>),
}

impl PointReader {
    /// `.las` opens a LAS reader; `.xyz`, `.txt` and `.csv` open the text
    /// reader; `.laz` is rejected.
    pub fn open(path: impl AsRef<Path>, options: ReadOptions) -> Result<Self, IngestError> {
        let path = path.as_ref();
        if has_extension(path, "las") || has_extension(path, "laz") {
            Ok(PointReader::Las(LasReader::open(path, options)?))
        } else if ["xyz", "txt", "csv"].iter().any(|e| has_extension(path, e)) {
            Ok(PointReader::Xyz(XyzReader::open(path)?))
        } else {
            Err(IngestError::UnknownExtension(path.to_path_buf()))
        }
    }

    pub fn bounds(&self) -> Result<PointCloudBounds, IngestError> {
        match self {
            PointReader::Las(r) => r.bounds(),
            PointReader::Xyz(r) => r.bounds(),
        }
    }
}

impl Iterator for PointReader {
    type Item = Result<Point3, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            PointReader::Las(r) => r.next(),
            PointReader::Xyz(r) => r.next(),
        }
    }
}

/// Streaming LAS 1.2 writer using point data record format 0.
///
/// The header is written up front and patched with the final count and
/// bounds by [`LasWriter::finish`].
pub struct LasWriter<W: Write + Seek> {
    out: W,
    scale: [f64; 3],
    offset: [f64; 3],
    count: u64,
    min: [f64; 3],
    max: [f64; 3],
}

impl LasWriter<BufWriter<File>> {
    pub fn create(
        path: impl AsRef<Path>,
        scale: [f64; 3],
        offset: [f64; 3],
    ) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        LasWriter::new(BufWriter::new(file), scale, offset)
    }
}

impl<W: Write + Seek> LasWriter<W> {
    pub fn new(mut out: W, scale: [f64; 3], offset: [f64; 3]) -> Result<Self, IngestError> {
        out.write_all(&[0u8; HEADER_SIZE_12])?;
        Ok(LasWriter {
            out,
            scale,
            offset,
            count: 0,
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        })
    }

    pub fn write_point(&mut self, p: &Point3) -> Result<(), IngestError> {
        let mut record = [0u8; 20];
        for (axis, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            let q = ((v - self.offset[axis]) / self.scale[axis]).round();
            if !(q >= i32::MIN as f64 && q <= i32::MAX as f64) {
                return Err(IngestError::QuantizationOverflow { index: self.count });
            }
            record[axis * 4..axis * 4 + 4].copy_from_slice(&(q as i32).to_le_bytes());
            let stored = q * self.scale[axis] + self.offset[axis];
            self.min[axis] = self.min[axis].min(stored);
            self.max[axis] = self.max[axis].max(stored);
        }
        // single return: return number 1 of 1
        record[14] = 0b0000_1001;
        self.out.write_all(&record)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, IngestError> {
        if self.count > u32::MAX as u64 {
            return Err(IngestError::Format(
                "LAS 1.2 cannot hold more than 2^32-1 points".into(),
            ));
        }
        let mut h = [0u8; HEADER_SIZE_12];
        h[..4].copy_from_slice(SIGNATURE);
        h[OFF_VERSION_MAJOR] = 1;
        h[OFF_VERSION_MINOR] = 2;
        let software = b"waterline";
        h[58..58 + software.len()].copy_from_slice(software);
        h[OFF_HEADER_SIZE..OFF_HEADER_SIZE + 2].copy_from_slice(&(HEADER_SIZE_12 as u16).to_le_bytes());
        h[OFF_POINT_OFFSET..OFF_POINT_OFFSET + 4].copy_from_slice(&(HEADER_SIZE_12 as u32).to_le_bytes());
        h[OFF_POINT_FORMAT] = 0;
        h[OFF_RECORD_LENGTH..OFF_RECORD_LENGTH + 2].copy_from_slice(&20u16.to_le_bytes());
        h[OFF_LEGACY_COUNT..OFF_LEGACY_COUNT + 4].copy_from_slice(&(self.count as u32).to_le_bytes());
        h[OFF_LEGACY_BY_RETURN..OFF_LEGACY_BY_RETURN + 4]
            .copy_from_slice(&(self.count as u32).to_le_bytes());
        for axis in 0..3 {
            let at = OFF_SCALE + axis * 8;
            h[at..at + 8].copy_from_slice(&self.scale[axis].to_le_bytes());
            let at = OFF_OFFSET + axis * 8;
            h[at..at + 8].copy_from_slice(&self.offset[axis].to_le_bytes());
            let (lo, hi) = if self.count == 0 {
                (0.0, 0.0)
            } else {
                (self.min[axis], self.max[axis])
            };
            // max x, min x, max y, min y, max z, min z
            let at = OFF_MAX_X + axis * 16;
            h[at..at + 8].copy_from_slice(&hi.to_le_bytes());
            h[at + 8..at + 16].copy_from_slice(&lo.to_le_bytes());
        }
        self.out.seek(SeekFrom::Start(0))?;
        self.out.write_all(&h)?;
        self.out.seek(SeekFrom::End(0))?;
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes `points` as a LAS 1.2 file with the given scale; the offset is the
/// floor of the minimum coordinate on each axis.
pub fn write_las(path: impl AsRef<Path>, points: &[Point3], scale: [f64; 3]) -> Result<(), IngestError> {
    let offset = if points.is_empty() {
        [0.0; 3]
    } else {
        let mut lo = [f64::INFINITY; 3];
        for p in points {
            lo[0] = lo[0].min(p.x);
            lo[1] = lo[1].min(p.y);
            lo[2] = lo[2].min(p.z);
        }
        lo.map(f64::floor)
    };
    let mut writer = LasWriter::create(path, scale, offset)?;
    for p in points {
        writer.write_point(p)?;
    }
    writer.finish()?;
    Ok(())
}

/// Streaming XYZ writer, six decimals per coordinate.
pub struct XyzWriter<W: Write> {
    out: W,
}

impl XyzWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(XyzWriter::new(BufWriter::new(file)))
    }
}

impl<W: Write> XyzWriter<W> {
    pub fn new(out: W) -> Self {
        XyzWriter { out }
    }

    pub fn write_point(&mut self, p: &Point3) -> Result<(), IngestError> {
        writeln!(self.out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, IngestError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_xyz(path: impl AsRef<Path>, points: &[Point3]) -> Result<(), IngestError> {
    let mut writer = XyzWriter::create(path)?;
    for p in points {
        writer.write_point(p)?;
    }
    writer.finish()?;
    Ok(())
}
