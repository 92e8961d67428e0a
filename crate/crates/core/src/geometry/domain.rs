use super::BoundingBox;

/// Closed region of the plane.
pub trait Domain {
    fn contains(&self, p: [f64; 2]) -> bool;
}

impl Domain for BoundingBox {
    fn contains(&self, p: [f64; 2]) -> bool {
        BoundingBox::contains(self, p)
    }
}
