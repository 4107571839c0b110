use image::RgbImage;

use super::ProbeError;
use crate::raster::BitMask;

/// Fill luminance below which an opaque pixel counts as ink.
pub const INK_LUMA: u32 = 128;

/// Rasterized probe: binary support, per-pixel opacity, per-pixel target color.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeMask {
    support: BitMask,
    alpha: Vec<f32>,
    fill: Vec<[u8; 3]>,
}

impl ProbeMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { support: BitMask::new(width, height), alpha: vec![0.0; width * height], fill: vec![[0; 3]; width * height] }
    }

    /// Uniform opacity and color over `support`.
    pub fn uniform(support: BitMask, alpha: f32, color: [u8; 3]) -> Self {
        Self::from_fn(support, |_, _| (alpha, color))
    }

    /// Build from a support and a per-pixel `(alpha, fill)` function. Pixels
    /// whose alpha comes back as zero are dropped from the support.
    pub fn from_fn(mut support: BitMask, mut f: impl FnMut(usize, usize) -> (f32, [u8; 3])) -> Self {
        let (w, h) = support.dims();
        let mut alpha = vec![0.0f32; w * h];
        let mut fill = vec![[0u8; 3]; w * h];
        let set: Vec<(usize, usize)> = support.iter_set().collect();
        for (x, y) in set {
            let (a, q) = f(x, y);
            let a = a.clamp(0.0, 1.0);
            if a > 0.0 {
                alpha[y * w + x] = a;
                fill[y * w + x] = q;
            } else {
                support.set(x, y, false);
            }
        }
        Self { support, alpha, fill }
    }

    /// Build from an 8-bit alpha raster (0 = outside the support). Fill is unknown
    /// and left black; used when a mask is read back from disk for auditing.
    pub fn from_alpha_raster(width: usize, height: usize, alpha8: &[u8]) -> Self {
        let support = BitMask::from_fn(width, height, |x, y| alpha8[y * width + x] > 0);
        Self::from_fn(support, |x, y| (alpha8[y * width + x] as f32 / 255.0, [0; 3]))
    }

    /// Alpha raster plus the composed image it produced. At full-opacity
    /// pixels the composed color is the fill, so [`ProbeMask::ink`] survives
    /// the round trip through disk.
    pub fn from_alpha_and_image(alpha8: &[u8], image: &RgbImage) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let support = BitMask::from_fn(w, h, |x, y| alpha8[y * w + x] > 0);
        Self::from_fn(support, |x, y| (alpha8[y * w + x] as f32 / 255.0, image.get_pixel(x as u32, y as u32).0))
    }

    pub fn support(&self) -> &BitMask {
        &self.support
    }

    pub fn dims(&self) -> (usize, usize) {
        self.support.dims()
    }

    pub fn alpha_at(&self, x: usize, y: usize) -> f32 {
        self.alpha[y * self.support.width() + x]
    }

    pub fn fill_at(&self, x: usize, y: usize) -> [u8; 3] {
        self.fill[y * self.support.width() + x]
    }

    /// Pixels composed at full opacity.
    pub fn opaque(&self) -> BitMask {
        let (w, h) = self.dims();
        BitMask::from_fn(w, h, |x, y| self.alpha[y * w + x] >= 1.0)
    }

    /// Fully opaque pixels painted dark: drawn strokes, as opposed to
    /// erasures that restore the background.
    pub fn ink(&self) -> BitMask {
        let (w, h) = self.dims();
        BitMask::from_fn(w, h, |x, y| {
            let i = y * w + x;
            let [r, g, b] = self.fill[i];
            self.alpha[i] >= 1.0 && 299 * r as u32 + 587 * g as u32 + 114 * (b as u32) < INK_LUMA * 1000
        })
    }

    /// Fraction of page pixels in the support.
    pub fn coverage(&self) -> f64 {
        let a = self.support.area();
        if a == 0 {
            0.0
        } else {
            self.support.count() as f64 / a as f64
        }
    }

    pub fn alpha_raster_u8(&self) -> Vec<u8> {
        self.alpha.iter().map(|a| (a * 255.0).round() as u8).collect()
    }

    /// Stack `other` on top: support is the union, opacity combines as
    /// `1 - (1-a)(1-b)`, and the top layer's color wins where it is present.
    pub fn merge(&mut self, other: &ProbeMask) {
        assert_eq!(self.dims(), other.dims(), "mask dimension mismatch");
        self.support.union_with(&other.support);
        for i in 0..self.alpha.len() {
            let b = other.alpha[i];
            if b > 0.0 {
                let a = self.alpha[i];
                self.alpha[i] = 1.0 - (1.0 - a) * (1.0 - b);
                self.fill[i] = other.fill[i];
            }
        }
    }
}

/// Alpha-blend the mask onto the image: `I' = (1 - a) I + a q` per channel,
/// rounded to the nearest integer. Pixels outside the support are untouched.
pub fn compose(image: &RgbImage, mask: &ProbeMask) -> Result<RgbImage, ProbeError> {
    let (w, h) = mask.dims();
    if (image.width() as usize, image.height() as usize) != (w, h) {
        return Err(ProbeError::DimensionMismatch { image: (image.width() as usize, image.height() as usize), mask: (w, h) });
    }
    let mut out = image.clone();
    compose_in_place(&mut out, mask);
    Ok(out)
}

pub(crate) fn compose_in_place(image: &mut RgbImage, mask: &ProbeMask) {
    let w = mask.support.width();
    for (x, y) in mask.support.iter_set().collect::<Vec<_>>() {
        let a = mask.alpha[y * w + x] as f64;
        let q = mask.fill[y * w + x];
        let p = image.get_pixel_mut(x as u32, y as u32);
        for c in 0..3 {
            let v = (1.0 - a) * p[c] as f64 + a * q[c] as f64;
            p[c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Per-channel median of the ring of pixels within `ring` px (Chebyshev) of
/// the support but outside it. White when the ring is empty.
pub fn local_background(image: &RgbImage, support: &BitMask, ring: usize) -> [u8; 3] {
    let Some(b) = support.bounds() else {
        return [255; 3];
    };
    let (w, h) = support.dims();
    let x0 = b.x0.saturating_sub(ring);
    let y0 = b.y0.saturating_sub(ring);
    let x1 = (b.x1 + ring).min(w);
    let y1 = (b.y1 + ring).min(h);
    let (cw, ch) = (x1 - x0, y1 - y0);
    let crop = BitMask::from_fn(cw, ch, |x, y| support.get(x + x0, y + y0));
    let grown = crop.dilate(ring);
    let mut chans: [Vec<u8>; 3] = Default::default();
    for y in 0..ch {
        for x in 0..cw {
            if grown.get(x, y) && !crop.get(x, y) {
                let p = image.get_pixel((x + x0) as u32, (y + y0) as u32);
                for c in 0..3 {
                    chans[c].push(p[c]);
                }
            }
        }
    }
    if chans[0].is_empty() {
        return [255; 3];
    }
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = &mut chans[c];
        v.sort_unstable();
        out[c] = v[v.len() / 2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn square(w: usize, h: usize) -> BitMask {
        BitMask::from_fn(w, h, |x, y| (2..6).contains(&x) && (2..6).contains(&y))
    }

    #[test]
    fn zero_alpha_is_identity() {
        let img = RgbImage::from_fn(8, 8, |x, y| Rgb([x as u8 * 10, y as u8 * 20, 7]));
        let mask = ProbeMask::uniform(square(8, 8), 0.0, [255, 0, 0]);
        assert!(mask.support().is_empty());
        assert_eq!(compose(&img, &mask).unwrap(), img);
    }

    #[test]
    fn opaque_white_and_half_blend() {
        let img = RgbImage::from_pixel(8, 8, Rgb([0, 0, 0]));
        let white = compose(&img, &ProbeMask::uniform(square(8, 8), 1.0, [255; 3])).unwrap();
        assert_eq!(white.get_pixel(3, 3), &Rgb([255; 3]));
        assert_eq!(white.get_pixel(0, 0), &Rgb([0; 3]));
        let half = compose(&img, &ProbeMask::uniform(square(8, 8), 0.5, [200; 3])).unwrap();
        assert_eq!(half.get_pixel(5, 5), &Rgb([100; 3]));
        assert_eq!(half.get_pixel(6, 6), &Rgb([0; 3]));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let img = RgbImage::new(4, 4);
        assert!(matches!(compose(&img, &ProbeMask::empty(5, 4)), Err(ProbeError::DimensionMismatch { .. })));
    }

    #[test]
    fn background_is_ring_median() {
        // gray page with a few dark "text" pixels in the ring
        let mut img = RgbImage::from_pixel(20, 20, Rgb([240, 240, 240]));
        img.put_pixel(1, 1, Rgb([0, 0, 0]));
        img.put_pixel(8, 1, Rgb([0, 0, 0]));
        let bg = local_background(&img, &square(20, 20), 8);
        assert_eq!(bg, [240; 3]);
    }

    #[test]
    fn merge_is_monotone() {
        let a = ProbeMask::uniform(square(8, 8), 0.5, [1; 3]);
        let b = ProbeMask::uniform(BitMask::from_fn(8, 8, |x, _| x == 7), 0.5, [2; 3]);
        let mut m = a.clone();
        m.merge(&b);
        assert!(a.support().is_subset_of(m.support()));
        assert!(b.support().is_subset_of(m.support()));
        assert_eq!(m.alpha_at(7, 0), 0.5);
    }
}
