//! Page-sized binary rasters and the morphology used for content, anchor and
//! boundary masks.

use crate::document::{BBox, PixelRange};

/// Row-major binary raster.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BitMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitMask({}x{}, {} set)", self.width, self.height, self.count())
    }
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn fill_range(&mut self, r: PixelRange) {
        for y in r.y0..r.y1 {
            self.bits[y * self.width + r.x0..y * self.width + r.x1].fill(true);
        }
    }

    pub fn fill_box(&mut self, b: &BBox) {
        self.fill_range(b.pixel_range(self.width, self.height));
    }

    pub fn count_in_range(&self, r: PixelRange) -> usize {
        (r.y0..r.y1)
            .map(|y| self.bits[y * self.width + r.x0..y * self.width + r.x1].iter().filter(|b| **b).count())
            .sum()
    }

    pub fn any_in_range(&self, r: PixelRange) -> bool {
        (r.y0..r.y1).any(|y| self.bits[y * self.width + r.x0..y * self.width + r.x1].iter().any(|b| *b))
    }

    pub fn union_with(&mut self, other: &BitMask) {
        assert_eq!(self.dims(), other.dims(), "mask dimension mismatch");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn subtract(&mut self, other: &BitMask) {
        assert_eq!(self.dims(), other.dims(), "mask dimension mismatch");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !*b;
        }
    }

    pub fn intersection_count(&self, other: &BitMask) -> usize {
        assert_eq!(self.dims(), other.dims(), "mask dimension mismatch");
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Tight pixel bounds of the set pixels.
    pub fn bounds(&self) -> Option<PixelRange> {
        let mut r = PixelRange { x0: usize::MAX, y0: usize::MAX, x1: 0, y1: 0 };
        for y in 0..self.height {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            if let Some(first) = row.iter().position(|b| *b) {
                let last = row.iter().rposition(|b| *b).unwrap();
                r.x0 = r.x0.min(first);
                r.x1 = r.x1.max(last + 1);
                r.y0 = r.y0.min(y);
                r.y1 = y + 1;
            }
        }
        (r.x1 > 0).then_some(r)
    }

    /// Iterate `(x, y)` of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| (i % w, i / w))
    }

    /// Square-kernel dilation with radius `r` (Chebyshev distance `<= r`).
    pub fn dilate(&self, r: usize) -> BitMask {
        if r == 0 {
            return self.clone();
        }
        let horiz = self.max_filter_rows(r, false);
        horiz.max_filter_cols(r, false)
    }

    /// Square-kernel erosion with radius `r`; pixels beyond the page count as unset.
    pub fn erode(&self, r: usize) -> BitMask {
        if r == 0 {
            return self.clone();
        }
        let horiz = self.max_filter_rows(r, true);
        horiz.max_filter_cols(r, true)
    }

    // Sliding window OR (or AND when `erode`) along rows via prefix counts.
    fn max_filter_rows(&self, r: usize, erode: bool) -> BitMask {
        let (w, h) = self.dims();
        let mut out = BitMask::new(w, h);
        let mut prefix = vec![0usize; w + 1];
        for y in 0..h {
            let row = &self.bits[y * w..(y + 1) * w];
            for x in 0..w {
                prefix[x + 1] = prefix[x] + row[x] as usize;
            }
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r + 1).min(w);
                let n = prefix[hi] - prefix[lo];
                out.bits[y * w + x] = if erode {
                    x >= r && x + r < w && n == 2 * r + 1
                } else {
                    n > 0
                };
            }
        }
        out
    }

    fn max_filter_cols(&self, r: usize, erode: bool) -> BitMask {
        let (w, h) = self.dims();
        let mut out = BitMask::new(w, h);
        let mut prefix = vec![0usize; h + 1];
        for x in 0..w {
            for y in 0..h {
                prefix[y + 1] = prefix[y] + self.bits[y * w + x] as usize;
            }
            for y in 0..h {
                let lo = y.saturating_sub(r);
                let hi = (y + r + 1).min(h);
                let n = prefix[hi] - prefix[lo];
                out.bits[y * w + x] = if erode { y >= r && y + r < h && n == 2 * r + 1 } else { n > 0 };
            }
        }
        out
    }
}

/// Union of the rasterized boxes.
pub fn content_mask<'a>(boxes: impl IntoIterator<Item = &'a BBox>, width: usize, height: usize) -> BitMask {
    let mut m = BitMask::new(width, height);
    for b in boxes {
        m.fill_box(b);
    }
    m
}

/// One-pixel outline of each rasterized box.
pub fn boundary_mask<'a>(boxes: impl IntoIterator<Item = &'a BBox>, width: usize, height: usize) -> BitMask {
    let mut m = BitMask::new(width, height);
    for b in boxes {
        let r = b.pixel_range(width, height);
        if r.is_empty() {
            continue;
        }
        for x in r.x0..r.x1 {
            m.set(x, r.y0, true);
            m.set(x, r.y1 - 1, true);
        }
        for y in r.y0..r.y1 {
            m.set(r.x0, y, true);
            m.set(r.x1 - 1, y, true);
        }
    }
    m
}

/// Boundary band `Dil(outline, delta) \ erode(content, delta)`: the anchor
/// region for placement and the boundary support for BPO.
pub fn boundary_band<'a>(boxes: impl IntoIterator<Item = &'a BBox> + Clone, width: usize, height: usize, delta: usize) -> BitMask {
    let mut band = boundary_mask(boxes.clone(), width, height).dilate(delta);
    let inner = content_mask(boxes, width, height).erode(delta);
    band.subtract(&inner);
    band
}

/// `(|support ∩ band|, |band|)` for the boundary band of a single box,
/// without building page-sized rasters. Matches [`boundary_band`] on one box.
pub fn box_band_overlap(support: &BitMask, b: &BBox, delta: usize) -> (usize, usize) {
    let (w, h) = support.dims();
    let r = b.pixel_range(w, h);
    if r.is_empty() {
        return (0, 0);
    }
    let outer = PixelRange { x0: r.x0.saturating_sub(delta), y0: r.y0.saturating_sub(delta), x1: (r.x1 + delta).min(w), y1: (r.y1 + delta).min(h) };
    // erosion also treats off-page pixels as background
    let inner = PixelRange {
        x0: (r.x0 + delta).max(delta),
        y0: (r.y0 + delta).max(delta),
        x1: r.x1.saturating_sub(delta).min(w.saturating_sub(delta)),
        y1: r.y1.saturating_sub(delta).min(h.saturating_sub(delta)),
    };
    let (inner_hits, inner_size) = if inner.x0 < inner.x1 && inner.y0 < inner.y1 {
        (support.count_in_range(inner), inner.count())
    } else {
        (0, 0)
    };
    (support.count_in_range(outer) - inner_hits, outer.count() - inner_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force morphology used as an independent check.
    fn naive(m: &BitMask, r: usize, erode: bool) -> BitMask {
        let (w, h) = m.dims();
        BitMask::from_fn(w, h, |x, y| {
            let r = r as isize;
            let mut any = false;
            let mut all = true;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    let v = xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h && m.get(xx as usize, yy as usize);
                    any |= v;
                    all &= v;
                }
            }
            if erode {
                all
            } else {
                any
            }
        })
    }

    #[test]
    fn morphology_matches_naive() {
        let m = BitMask::from_fn(23, 17, |x, y| (x * 7 + y * 3) % 5 < 3 || (x > 5 && x < 15 && y > 3 && y < 12));
        for r in 0..4 {
            assert_eq!(m.dilate(r), naive(&m, r, false), "dilate r={r}");
            assert_eq!(m.erode(r), naive(&m, r, true), "erode r={r}");
        }
    }

    #[test]
    fn single_box_band_oracle() {
        let b = BBox::new(20.0, 20.0, 60.0, 50.0).unwrap();
        let band = boundary_band([&b], 100, 80, 5);
        // Outside: within Chebyshev distance 5 of the box. Inside: not in the 5-px erosion.
        let oracle = BitMask::from_fn(100, 80, |x, y| {
            let (x, y) = (x as i64, y as i64);
            let inside = (20..60).contains(&x) && (20..50).contains(&y);
            let dist_out = if inside {
                0
            } else {
                let dx = (20 - x).max(x - 59).max(0);
                let dy = (20 - y).max(y - 49).max(0);
                dx.max(dy)
            };
            if inside {
                // the eroded interior keeps pixels at least 5 from every edge
                (x - 20).min(59 - x).min(y - 20).min(49 - y) < 5
            } else {
                dist_out <= 5
            }
        });
        assert_eq!(band, oracle);
        assert!(boundary_band(std::iter::empty::<&BBox>(), 50, 50, 5).is_empty());
    }

    #[test]
    fn box_band_overlap_matches_raster_band() {
        let support = BitMask::from_fn(60, 40, |x, y| (x * 5 + y * 3) % 7 < 3);
        for b in [
            BBox::new(10.0, 8.0, 40.0, 30.0).unwrap(),
            BBox::new(0.0, 0.0, 60.0, 40.0).unwrap(),
            BBox::new(2.5, 30.2, 12.0, 39.0).unwrap(),
            BBox::new(20.0, 10.0, 26.0, 14.0).unwrap(),
        ] {
            let band = boundary_band([&b], 60, 40, 5);
            assert_eq!(box_band_overlap(&support, &b, 5), (support.intersection_count(&band), band.count()), "{b:?}");
        }
    }

    #[test]
    fn box_fill_uses_half_open_cells() {
        let mut m = BitMask::new(10, 10);
        m.fill_box(&BBox::new(1.5, 2.0, 4.0, 3.2).unwrap());
        // x in [1,4), y in [2,4)
        assert_eq!(m.count(), 3 * 2);
        assert!(m.get(1, 2) && m.get(3, 3) && !m.get(4, 2));
    }
}
