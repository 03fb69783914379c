use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::similarity::{load_gray, Frame};

pub const GROUND_TRUTH_FILE: &str = "groundtruth.txt";
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// An annotated image sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<PathBuf>,
    pub ground_truth: Vec<BoundingBox>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: Vec<PathBuf>, ground_truth: Vec<BoundingBox>) -> Result<Self> {
        if frames.len() != ground_truth.len() {
            return Err(Error::CountMismatch {
                frames: frames.len(),
                boxes: ground_truth.len(),
            });
        }
        if frames.len() < 2 {
            return Err(Error::Precondition(format!(
                "a sequence needs >= 2 frames, got {}",
                frames.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            frames,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Decodes frame `index` to luminance.
    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        let path = self
            .frames
            .get(index)
            .ok_or_else(|| Error::Precondition(format!("frame {index} out of range")))?;
        Ok(Frame::from_image(index, load_gray(path)?).with_path(path.clone()))
    }
}

/// Parses one ground-truth line: `x,y,w,h` (top-left corner) or an
/// 8-number polygon `x1,y1,...,x4,y4`, which becomes its axis-aligned hull.
pub fn parse_groundtruth_line(line: &str) -> std::result::Result<BoundingBox, String> {
    let values = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("not a finite number: '{s}'"))
        })
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let bbox = match values.as_slice() {
        &[x, y, w, h] => BoundingBox::from_top_left(x, y, w, h),
        poly if poly.len() == 8 => {
            let xs = poly.iter().step_by(2);
            let ys = poly.iter().skip(1).step_by(2);
            let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            BoundingBox::from_top_left(x0, y0, x1 - x0, y1 - y0)
        }
        other => return Err(format!("expected 4 or 8 numbers, found {}", other.len())),
    };
    if bbox.width <= 0.0 || bbox.height <= 0.0 {
        return Err(format!("box has non-positive size {}x{}", bbox.width, bbox.height));
    }
    Ok(bbox)
}

/// Parses a whole ground-truth file. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<BoundingBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_groundtruth_line(l).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Loads a VOT-style directory: image frames sorted by file name plus a
/// `groundtruth.txt` with one box per frame.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    if !gt_path.is_file() {
        return Err(Error::MissingGroundTruth(gt_path));
    }
    let ground_truth = parse_groundtruth(&fs::read_to_string(&gt_path)?, &gt_path)?;
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    frames.sort();
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    Sequence::new(name, frames, ground_truth)
}
