use super::{BinaryMask, RasterImage, Region};
use crate::{Error, Result};

/// Which side of the threshold is foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Pixels with intensity `< t` are foreground (potholes are dark).
    #[default]
    DarkForeground,
    /// Pixels with intensity `>= t` are foreground (white reference page).
    BrightForeground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMethod {
    #[default]
    Otsu,
    Fixed(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(img: &RasterImage) -> Result<RasterImage> {
    if img.channels() == 1 {
        return Err(Error::AlreadyGrayscale);
    }
    let luma = img
        .pixels()
        .chunks_exact(3)
        .map(|p| {
            let weighted = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((weighted + 500) / 1000).min(255) as u8
        })
        .collect();
    RasterImage::gray(img.width(), img.height(), luma)
}

fn histogram(img: &RasterImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    hist
}

/// Otsu threshold over a 256-bin histogram.
///
/// A threshold `t` splits intensities into `< t` and `>= t`. Returns the
/// midpoint of the run of thresholds that maximise between-class variance,
/// or `None` when the histogram holds a single intensity (no split exists).
pub fn otsu_threshold(img: &RasterImage) -> Result<Option<u8>> {
    if img.channels() != 1 {
        return Err(Error::NotGrayscale(img.channels()));
    }
    Ok(otsu_from_histogram(&histogram(img)))
}

fn otsu_from_histogram(hist: &[u64; 256]) -> Option<u8> {
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(v, &n)| v as u64 * n).sum();

    // Between-class variance up to the positive factor 1/N²:
    // (N·S₀ − n₀·S)² / (n₀·n₁). The numerator is exact in i128.
    let mut best: Option<(f64, usize, usize)> = None;
    let (mut below_n, mut below_sum) = (0u64, 0u64);
    for t in 1..256usize {
        below_n += hist[t - 1];
        below_sum += (t as u64 - 1) * hist[t - 1];
        let above_n = total - below_n;
        if below_n == 0 || above_n == 0 {
            continue;
        }
        let diff = total as i128 * below_sum as i128 - below_n as i128 * total_sum as i128;
        let score = (diff * diff) as f64 / (below_n as f64 * above_n as f64);
        match best {
            Some((s, first, last)) if score == s && last == t - 1 => best = Some((s, first, t)),
            Some((s, ..)) if score <= s => {}
            _ => best = Some((score, t, t)),
        }
    }
    best.map(|(_, first, last)| ((first + last) / 2) as u8)
}

pub fn binarize(
    img: &RasterImage,
    method: ThresholdMethod,
    polarity: Polarity,
) -> Result<BinaryMask> {
    if img.channels() != 1 {
        return Err(Error::NotGrayscale(img.channels()));
    }
    let threshold: Option<u16> = match method {
        ThresholdMethod::Fixed(t) if !(0..=255).contains(&t) => {
            return Err(Error::ThresholdOutOfRange(t))
        }
        ThresholdMethod::Fixed(t) => Some(t as u16),
        ThresholdMethod::Otsu => otsu_from_histogram(&histogram(img)).map(u16::from),
    };
    let bits = match threshold {
        None => vec![false; img.pixels().len()],
        Some(t) => img
            .pixels()
            .iter()
            .map(|&v| match polarity {
                Polarity::DarkForeground => (v as u16) < t,
                Polarity::BrightForeground => (v as u16) >= t,
            })
            .collect(),
    };
    BinaryMask::new(img.width(), img.height(), bits)
}

/// One pass of a clipped 1-D window of half-width `radius` along rows
/// (`horizontal`) or columns. `all` selects erosion (every in-bounds
/// neighbour set) versus dilation (any neighbour set).
fn window_pass(mask: &BinaryMask, radius: usize, horizontal: bool, all: bool) -> Vec<bool> {
    let (w, h) = (mask.width(), mask.height());
    let (lines, len) = if horizontal { (h, w) } else { (w, h) };
    let idx = |line: usize, i: usize| {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    let bits = mask.bits();
    let mut out = vec![false; w * h];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + bits[idx(line, i)] as usize;
        }
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(len - 1);
            let set = prefix[hi + 1] - prefix[lo];
            out[idx(line, i)] = if all { set == hi + 1 - lo } else { set > 0 };
        }
    }
    out
}

fn square_op(mask: &BinaryMask, radius: usize, all: bool) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let rows =
        BinaryMask::new(w, h, window_pass(mask, radius, true, all)).expect("dimensions preserved");
    BinaryMask::new(w, h, window_pass(&rows, radius, false, all)).expect("dimensions preserved")
}

/// Erosion by a `(2r+1)²` square. The window is clipped at the border, so
/// out-of-image neighbours never remove a pixel.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    square_op(mask, radius, true)
}

/// Dilation by a `(2r+1)²` square, clipped at the border.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    square_op(mask, radius, false)
}

/// Erosion followed by dilation. Radius 0 is the identity.
pub fn morph_open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

pub fn foreground_pixel_count(mask: &BinaryMask) -> usize {
    mask.bits().iter().filter(|&&b| b).count()
}

/// Labels every foreground pixel with its component id (1-based, in raster
/// discovery order; 0 is background) and returns the unsorted regions.
pub(crate) fn label_components(
    mask: &BinaryMask,
    connectivity: Connectivity,
) -> (Vec<u32>, Vec<Region>) {
    const FOUR: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const EIGHT: [(isize, isize); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &FOUR,
        Connectivity::Eight => &EIGHT,
    };

    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let (mut count, mut bbox) = (0usize, (usize::MAX, usize::MAX, 0usize, 0usize));
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            count += 1;
            bbox = (bbox.0.min(x), bbox.1.min(y), bbox.2.max(x), bbox.3.max(y));
            for &(dx, dy) in offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = ny as usize * w + nx as usize;
                if bits[q] && labels[q] == 0 {
                    labels[q] = label;
                    stack.push(q);
                }
            }
        }
        regions.push(Region {
            id: label as usize - 1,
            pixel_count: count,
            bounding_box: bbox,
        });
    }
    (labels, regions)
}

fn sort_regions(regions: &mut [Region]) {
    regions.sort_by(|a, b| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.bounding_box.1.cmp(&b.bounding_box.1))
            .then(a.bounding_box.0.cmp(&b.bounding_box.0))
            .then(a.id.cmp(&b.id))
    });
}

/// Connected foreground regions, largest first; ties go to the smaller
/// `(min_y, min_x)` of the bounding box, then to discovery order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Region> {
    let (_, mut regions) = label_components(mask, connectivity);
    sort_regions(&mut regions);
    regions
}

/// Mask holding only the largest component, or an empty mask.
pub(crate) fn largest_region_mask(mask: &BinaryMask, connectivity: Connectivity) -> BinaryMask {
    let (labels, mut regions) = label_components(mask, connectivity);
    sort_regions(&mut regions);
    let keep = regions.first().map_or(0, |r| r.id as u32 + 1);
    if keep == 0 {
        return BinaryMask::empty(mask.width(), mask.height()).expect("valid dimensions");
    }
    BinaryMask::from_labels(mask.width(), mask.height(), &labels, keep)
}
