//! CSV and PGM input/output and the synthetic sailboat image family.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

/// Reads a comma-separated matrix with one row per line and no header.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let bytes = read_bytes(path.as_ref())?;
    let text = String::from_utf8_lossy(&bytes);
    parse_matrix_csv(&text)
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if rows == 0 {
            cols = fields.len();
        } else if fields.len() != cols {
            return Err(Error::RaggedRows {
                line: lineno,
                expected: cols,
                found: fields.len(),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => return Err(Error::NonNumericField { line: lineno, col: c + 1 }),
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

/// Integers below 2⁵³ are written plainly; everything else with 17
/// significant digits, which round-trips every `f64`.
fn format_entry(v: f64) -> String {
    if v == v.trunc() && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_matrix_csv(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    for i in 0..m.nrows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format_entry(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// One grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

struct HeaderReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            let c = self.buf[self.pos];
            if c == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&[u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() && self.buf[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.buf[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token().ok_or_else(|| Error::BadHeader(format!("missing {what}")))?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::BadHeader(format!("{what} is not a number")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'2') {
        return Err(Error::BadMagic);
    }
    let binary = bytes[1] == b'5';
    let mut r = HeaderReader { buf: bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::BadHeader("zero image dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::BadHeader(format!("maxval {maxval} not in 1..=255")));
    }
    let expected = width * height;
    let mut pixels = Vec::with_capacity(expected);
    if binary {
        // Exactly one whitespace byte separates the header from the payload.
        let start = r.pos + 1;
        let payload = bytes.get(start..).unwrap_or(&[]);
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        pixels.extend(payload[..expected].iter().map(|b| *b as f64));
    } else {
        while pixels.len() < expected {
            match r.token() {
                Some(t) => {
                    let v: usize = std::str::from_utf8(t)
                        .ok()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::BadHeader("non-numeric pixel".into()))?;
                    pixels.push(v as f64);
                }
                None => {
                    return Err(Error::TruncatedPayload {
                        expected,
                        found: pixels.len(),
                    })
                }
            }
        }
    }
    if let Some(v) = pixels.iter().find(|v| **v > maxval as f64) {
        return Err(Error::ValueOutOfRange(*v));
    }
    Ok(Image { height, width, pixels })
}

/// Reads a binary (`P5`) or ASCII (`P2`) PGM with maxval at most 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    parse_pgm(&read_bytes(path.as_ref())?)
}

/// Writes a `P5` PGM; values are rounded to the nearest integer first.
pub fn write_pgm(pixels: &[f64], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    if pixels.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: format!("{} pixels", height * width),
            got: format!("{}", pixels.len()),
        });
    }
    let mut data = format!("P5\n{width} {height}\n255\n").into_bytes();
    for &p in pixels {
        let r = p.round();
        if !(0.0..=255.0).contains(&r) {
            return Err(Error::ValueOutOfRange(p));
        }
        data.push(r as u8);
    }
    fs::write(path, data)?;
    Ok(())
}

/// Images stored as the columns of a `(height·width) × count` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub pixel_rows: usize,
    pub pixel_cols: usize,
    pub matrix: Matrix,
}

impl ImageStack {
    pub fn image(&self, j: usize) -> Image {
        Image {
            height: self.pixel_rows,
            width: self.pixel_cols,
            pixels: self.matrix.column(j).iter().copied().collect(),
        }
    }
}

/// Loads every `*.pgm` file of `dir`, in lexicographic filename order.
pub fn load_image_stack(dir: impl AsRef<Path>) -> Result<ImageStack> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    let images = files.iter().map(read_pgm).collect::<Result<Vec<_>>>()?;
    let (h, w) = (images[0].height, images[0].width);
    for (img, f) in images.iter().zip(&files) {
        if (img.height, img.width) != (h, w) {
            return Err(Error::MixedDimensions(format!(
                "{} is {}x{}, expected {h}x{w}",
                f.display(),
                img.height,
                img.width
            )));
        }
    }
    let matrix = Matrix::from_fn(h * w, images.len(), |i, j| images[j].pixels[i]);
    Ok(ImageStack {
        pixel_rows: h,
        pixel_cols: w,
        matrix,
    })
}

/// Half-open pixel rectangle `[row0, row1) × [col0, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Rect {
    pub const fn new(row0: usize, row1: usize, col0: usize, col1: usize) -> Self {
        Self { row0, row1, col0, col1 }
    }

    pub fn area(&self) -> usize {
        (self.row1 - self.row0) * (self.col1 - self.col0)
    }

    pub fn overlaps(&self, o: &Rect) -> bool {
        self.row0 < o.row1 && o.row0 < self.row1 && self.col0 < o.col1 && o.col0 < self.col1
    }

    /// Row-major flat indices of the rectangle's pixels on a `width`-wide canvas.
    pub fn pixels(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row0..self.row1).flat_map(move |r| (self.col0..self.col1).map(move |c| r * width + c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SailboatSpec {
    pub height: usize,
    pub width: usize,
    pub features: Vec<Rect>,
    pub images: usize,
    pub features_per_image: usize,
    pub seed: u64,
}

impl Default for SailboatSpec {
    /// An 80×50 canvas with five disjoint parts of distinct areas, thirty
    /// images of three parts each.
    fn default() -> Self {
        Self {
            height: 80,
            width: 50,
            features: vec![
                Rect::new(0, 24, 0, 30),
                Rect::new(26, 39, 0, 30),
                Rect::new(0, 12, 32, 49),
                Rect::new(42, 57, 0, 7),
                Rect::new(70, 76, 40, 48),
            ],
            images: 30,
            features_per_image: 3,
            seed: 0,
        }
    }
}

impl SailboatSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFixture(msg));
        if self.height == 0 || self.width == 0 {
            return bad("canvas must be non-empty".into());
        }
        if self.features.is_empty() {
            return bad("at least one feature is required".into());
        }
        if self.images == 0 {
            return bad("at least one image is required".into());
        }
        if self.features_per_image == 0 || self.features_per_image > self.features.len() {
            return bad(format!(
                "features_per_image must be in 1..={}, got {}",
                self.features.len(),
                self.features_per_image
            ));
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.row0 >= f.row1 || f.col0 >= f.col1 || f.row1 > self.height || f.col1 > self.width {
                return bad(format!("feature {i} is empty or leaves the canvas"));
            }
        }
        for i in 0..self.features.len() {
            for j in i + 1..self.features.len() {
                if self.features[i].overlaps(&self.features[j]) {
                    return Err(Error::OverlappingFeatures(i, j));
                }
            }
        }
        Ok(())
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Sailboat images: column `j` is the 0/1 indicator of the union of the
/// features listed in `truth[j]`.
///
/// The subsets are enumerated cyclically in lexicographic order as long as a
/// full cycle fits; the remaining columns draw subsets uniformly with the
/// seeded generator.
pub fn gen_sailboat(spec: &SailboatSpec) -> Result<(ImageStack, Vec<Vec<usize>>)> {
    spec.validate()?;
    let subsets = k_subsets(spec.features.len(), spec.features_per_image);
    let cycles = spec.images / subsets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth: Vec<Vec<usize>> = (0..spec.images)
        .map(|j| {
            if j < cycles * subsets.len() {
                subsets[j % subsets.len()].clone()
            } else {
                subsets[rng.gen_range(0..subsets.len())].clone()
            }
        })
        .collect();
    let mut matrix = Matrix::zeros(spec.height * spec.width, spec.images);
    for (j, set) in truth.iter().enumerate() {
        for &f in set {
            for p in spec.features[f].pixels(spec.width) {
                matrix[(p, j)] = 1.0;
            }
        }
    }
    Ok((
        ImageStack {
            pixel_rows: spec.height,
            pixel_cols: spec.width,
            matrix,
        },
        truth,
    ))
}
