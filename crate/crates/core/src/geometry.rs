use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates, stored by center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self { cx, cy, width, height }
    }

    /// From the VOT top-left form `x, y, w, h`.
    pub fn from_top_left(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self::new(x + width / 2.0, y + height / 2.0, width, height)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.width / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.height / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.width / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.height / 2.0
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn is_finite(&self) -> bool {
        self.cx.is_finite() && self.cy.is_finite() && self.width.is_finite() && self.height.is_finite()
    }

    /// Same center, both sides multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.cx, self.cy, self.width * factor, self.height * factor)
    }

    pub fn with_center(&self, cx: f64, cy: f64) -> Self {
        Self::new(cx, cy, self.width, self.height)
    }

    fn ensure_positive(&self) -> Result<()> {
        if self.is_finite() && self.width > 0.0 && self.height > 0.0 {
            Ok(())
        } else {
            Err(Error::Precondition(format!("box has non-positive area: {self:?}")))
        }
    }

    /// Clamps the center into `[0, w] x [0, h]` and the size to the frame size.
    pub fn clamp_to_frame(&self, frame_w: f64, frame_h: f64) -> Self {
        Self::new(
            self.cx.clamp(0.0, frame_w),
            self.cy.clamp(0.0, frame_h),
            self.width.clamp(1.0, frame_w.max(1.0)),
            self.height.clamp(1.0, frame_h.max(1.0)),
        )
    }
}

/// Intersection over union in continuous pixel measure.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    a.ensure_positive()?;
    b.ensure_positive()?;
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let a = BoundingBox::from_top_left(0.0, 0.0, 2.0, 2.0);
        let b = BoundingBox::from_top_left(1.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let far = BoundingBox::from_top_left(10.0, 10.0, 2.0, 2.0);
        assert_eq!(iou(&a, &far).unwrap(), 0.0);
    }

    #[test]
    fn zero_area_rejected() {
        let a = BoundingBox::new(0.0, 0.0, 0.0, 2.0);
        assert!(iou(&a, &a).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.5..40.0f64, 0.5..40.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b).unwrap();
            let ba = iou(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }
    }
}
