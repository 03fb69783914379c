use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::gp::{GpModel, Query};

/// Per-frame search window in pixels.
///
/// Nominally a square of half-width `search_factor * max(w, h)` around the
/// previous box. On each axis it is shifted back inside the frame when it
/// fits and cropped to the frame when it does not. Normalized coordinates
/// divide by the nominal side, so lengthscales stay tied to object size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchRegion {
    pub origin: [f64; 2],
    pub width: f64,
    pub height: f64,
    /// Nominal side used for normalization.
    pub side: f64,
}

/// Regions narrower than this many pixels on either axis are rejected.
pub const MIN_REGION_PIXELS: f64 = 2.0;

impl SearchRegion {
    pub fn around(bbox: &BoundingBox, search_factor: f64, frame_w: f64, frame_h: f64) -> Result<Self> {
        if !(bbox.is_finite() && bbox.width > 0.0 && bbox.height > 0.0) {
            return Err(Error::Precondition(format!("invalid box {bbox:?}")));
        }
        let side = 2.0 * search_factor * bbox.width.max(bbox.height);
        let axis = |c: f64, extent: f64| -> (f64, f64) {
            if side <= extent {
                ((c - side / 2.0).clamp(0.0, extent - side), side)
            } else {
                (0.0, extent)
            }
        };
        let (x0, w) = axis(bbox.cx, frame_w);
        let (y0, h) = axis(bbox.cy, frame_h);
        if !(w >= MIN_REGION_PIXELS && h >= MIN_REGION_PIXELS) {
            return Err(Error::DegenerateGrid(format!(
                "search region {w:.2}x{h:.2} px is below {MIN_REGION_PIXELS} px"
            )));
        }
        Ok(Self {
            origin: [x0, y0],
            width: w,
            height: h,
            side,
        })
    }

    pub fn to_unit(&self, pixel: [f64; 2]) -> [f64; 2] {
        [
            (pixel[0] - self.origin[0]) / self.side,
            (pixel[1] - self.origin[1]) / self.side,
        ]
    }

    pub fn to_pixels(&self, unit: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + unit[0] * self.side,
            self.origin[1] + unit[1] * self.side,
        ]
    }

    /// Pixel center of lattice cell `(i, j)` on a `d x d` lattice.
    pub fn cell_center(&self, d: usize, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.width / d as f64,
            self.origin[1] + (j as f64 + 0.5) * self.height / d as f64,
        ]
    }

    /// Normalized cell centers, row-major (`j` outer, `i` inner).
    pub fn lattice(&self, d: usize) -> Vec<[f64; 2]> {
        (0..d)
            .flat_map(|j| (0..d).map(move |i| (i, j)))
            .map(|(i, j)| self.to_unit(self.cell_center(d, i, j)))
            .collect()
    }

    pub fn contains(&self, pixel: [f64; 2]) -> bool {
        pixel[0] >= self.origin[0]
            && pixel[0] <= self.origin[0] + self.width
            && pixel[1] >= self.origin[1]
            && pixel[1] <= self.origin[1] + self.height
    }
}

/// Posterior means over the `d x d` cell-center lattice of a region.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrid {
    d: usize,
    values: Vec<f64>,
    region: SearchRegion,
}

impl ScoreGrid {
    pub fn new(d: usize, values: Vec<f64>, region: SearchRegion) -> Result<Self> {
        if d < 2 {
            return Err(Error::DegenerateGrid(format!("grid side must be >= 2, got {d}")));
        }
        if values.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {d}x{d} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score grid value"));
        }
        Ok(Self { d, values, region })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn region(&self) -> &SearchRegion {
        &self.region
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.d + i]
    }
}

/// Posterior mean of `model` on the lattice of `region` at frame `t`.
pub fn render_score_grid(model: &GpModel, t: usize, region: &SearchRegion, d: usize) -> Result<ScoreGrid> {
    if d < 2 {
        return Err(Error::DegenerateGrid(format!("grid side must be >= 2, got {d}")));
    }
    let values = region
        .lattice(d)
        .into_iter()
        .map(|loc| model.predict_mean(&Query::new(loc, t as f64)))
        .collect::<Result<Vec<_>>>()?;
    ScoreGrid::new(d, values, *region)
}

/// Dense field over the region's pixels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Lattice coordinate of output pixel `x` when `d` cells span `out` pixels.
fn lattice_coord(x: usize, d: usize, out: usize) -> f64 {
    (x as f64 + 0.5) * d as f64 / out as f64 - 0.5
}

/// Taps and weights for one axis, with indices clamped to the lattice.
fn taps(g: f64, d: usize) -> ([usize; 4], [f64; 4]) {
    let base = g.floor();
    let w = catmull_rom_weights(g - base);
    let base = base as isize;
    let last = d as isize - 1;
    let idx = [-1, 0, 1, 2].map(|o: isize| (base + o).clamp(0, last) as usize);
    (idx, w)
}

/// Catmull-Rom bicubic upsampling of the grid to `out_w x out_h`, with
/// lattice indices clamped at the borders. Output pixel centers that land on
/// lattice points reproduce the grid values.
pub fn upsample_bicubic(grid: &ScoreGrid, out_w: usize, out_h: usize) -> Result<Field> {
    let d = grid.d;
    if out_w < d || out_h < d {
        return Err(Error::DegenerateGrid(format!(
            "output {out_w}x{out_h} is smaller than the {d}x{d} grid"
        )));
    }
    let xs: Vec<_> = (0..out_w).map(|x| taps(lattice_coord(x, d, out_w), d)).collect();
    let ys: Vec<_> = (0..out_h).map(|y| taps(lattice_coord(y, d, out_h), d)).collect();
    // Separable: interpolate rows first, then columns.
    let mut rows = vec![0.0; d * out_w];
    for j in 0..d {
        for (x, (ix, wx)) in xs.iter().enumerate() {
            rows[j * out_w + x] = (0..4).map(|k| wx[k] * grid.get(ix[k], j)).sum();
        }
    }
    let mut values = Vec::with_capacity(out_w * out_h);
    for (iy, wy) in &ys {
        for x in 0..out_w {
            values.push((0..4).map(|k| wy[k] * rows[iy[k] * out_w + x]).sum());
        }
    }
    Ok(Field {
        width: out_w,
        height: out_h,
        values,
    })
}

/// Output size used when upsampling a grid over `region`: its pixel extent,
/// but never below the grid side.
pub fn field_dims(region: &SearchRegion, d: usize) -> (usize, usize) {
    (
        (region.width.round() as usize).max(d),
        (region.height.round() as usize).max(d),
    )
}

/// Pixel center of field pixel `(x, y)`.
pub fn field_pixel_center(field: &Field, region: &SearchRegion, x: usize, y: usize) -> [f64; 2] {
    [
        region.origin[0] + (x as f64 + 0.5) * region.width / field.width as f64,
        region.origin[1] + (y as f64 + 0.5) * region.height / field.height as f64,
    ]
}
