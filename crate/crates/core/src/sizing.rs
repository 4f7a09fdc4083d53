//! Pixel-to-area calibration against a reference page and size classes
//! derived from tire contact area.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::imgcore::largest_region_mask;
use crate::imgcore::{
    self, binarize, connected_components, foreground_pixel_count, morph_open, BinaryMask,
    Connectivity, Polarity, RasterImage, ThresholdMethod,
};
use crate::{Error, Result};

/// One square inch in mm².
pub const MM2_PER_SQ_IN: f64 = 645.16;

/// Reference page dimensions used by default (210 × 270 mm).
pub const DEFAULT_PAGE_MM: (f64, f64) = (210.0, 270.0);

/// ISO 216 A4 (210 × 297 mm).
pub const ISO_A4_MM: (f64, f64) = (210.0, 297.0);

/// Smallest share of the frame the reference page must cover.
pub const MIN_PAGE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    pub reference_area_mm2: f64,
    pub reference_pixel_count: u64,
    pub capture_height_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelScale {
    mm2_per_pixel: f64,
    capture_height_label: String,
}

impl PixelScale {
    pub fn new(mm2_per_pixel: f64, capture_height_label: impl Into<String>) -> Result<Self> {
        if !(mm2_per_pixel.is_finite() && mm2_per_pixel > 0.0) {
            return Err(Error::Calibration(format!(
                "scale must be positive, got {mm2_per_pixel}"
            )));
        }
        Ok(PixelScale {
            mm2_per_pixel,
            capture_height_label: capture_height_label.into(),
        })
    }

    pub fn mm2_per_pixel(&self) -> f64 {
        self.mm2_per_pixel
    }

    pub fn capture_height_label(&self) -> &str {
        &self.capture_height_label
    }

    /// Refuses images captured at a different height than the calibration.
    /// Labels compare trimmed and case-insensitively.
    pub fn check_height(&self, image_height_label: &str) -> Result<()> {
        if self
            .capture_height_label
            .trim()
            .eq_ignore_ascii_case(image_height_label.trim())
        {
            Ok(())
        } else {
            Err(Error::HeightMismatch {
                profile: self.capture_height_label.clone(),
                image: image_height_label.to_string(),
            })
        }
    }
}

/// mm² per pixel = reference area / reference pixel count.
pub fn pixel_scale(input: &CalibrationInput) -> Result<PixelScale> {
    if !(input.reference_area_mm2.is_finite() && input.reference_area_mm2 > 0.0) {
        return Err(Error::Calibration(format!(
            "reference area must be positive, got {}",
            input.reference_area_mm2
        )));
    }
    if input.reference_pixel_count == 0 {
        return Err(Error::Calibration(
            "reference pixel count must be positive".into(),
        ));
    }
    PixelScale::new(
        input.reference_area_mm2 / input.reference_pixel_count as f64,
        input.capture_height_label.clone(),
    )
}

/// Persisted calibration for one capture height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub height_label: String,
    pub reference_area_mm2: f64,
    pub reference_pixel_count: u64,
    pub mm2_per_pixel: f64,
}

impl CalibrationProfile {
    pub fn from_input(input: &CalibrationInput) -> Result<Self> {
        let scale = pixel_scale(input)?;
        Ok(CalibrationProfile {
            height_label: input.capture_height_label.clone(),
            reference_area_mm2: input.reference_area_mm2,
            reference_pixel_count: input.reference_pixel_count,
            mm2_per_pixel: scale.mm2_per_pixel,
        })
    }

    /// Rejects a profile whose stored scale disagrees with
    /// area / pixel count by more than 1e-6 relative.
    pub fn verify(&self) -> Result<PixelScale> {
        let scale = pixel_scale(&CalibrationInput {
            reference_area_mm2: self.reference_area_mm2,
            reference_pixel_count: self.reference_pixel_count,
            capture_height_label: self.height_label.clone(),
        })?;
        let rel = (self.mm2_per_pixel - scale.mm2_per_pixel).abs() / scale.mm2_per_pixel;
        if rel.is_nan() || rel > 1e-6 {
            return Err(Error::Calibration(format!(
                "stored mm2_per_pixel {} disagrees with {} / {} = {}",
                self.mm2_per_pixel,
                self.reference_area_mm2,
                self.reference_pixel_count,
                scale.mm2_per_pixel
            )));
        }
        Ok(scale)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: CalibrationProfile = serde_json::from_str(text)?;
        profile.verify()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn scale(&self) -> Result<PixelScale> {
        self.verify()
    }
}

/// Pixel area of a white reference page: Otsu with bright foreground,
/// opening of radius 1, largest 8-connected region. The region must cover
/// at least [`MIN_PAGE_FRACTION`] of the frame.
pub fn find_reference_page(img: &RasterImage) -> Result<u64> {
    let gray = match img.channels() {
        1 => img.clone(),
        _ => imgcore::to_grayscale(img)?,
    };
    let mask = binarize(&gray, ThresholdMethod::Otsu, Polarity::BrightForeground)?;
    let mask = morph_open(&mask, 1);
    let frame = (mask.width() * mask.height()) as f64;
    match connected_components(&mask, Connectivity::Eight).first() {
        Some(r) if r.pixel_count as f64 >= MIN_PAGE_FRACTION * frame => Ok(r.pixel_count as u64),
        _ => Err(Error::Calibration("reference page not found".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImprintShape {
    Circular,
    Rectangular,
    Ellipse,
    Actual,
}

impl ImprintShape {
    pub const ALL: [ImprintShape; 4] = [
        ImprintShape::Circular,
        ImprintShape::Rectangular,
        ImprintShape::Ellipse,
        ImprintShape::Actual,
    ];
}

impl FromStr for ImprintShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "circular" => Ok(ImprintShape::Circular),
            "rectangular" => Ok(ImprintShape::Rectangular),
            "ellipse" => Ok(ImprintShape::Ellipse),
            "actual" => Ok(ImprintShape::Actual),
            _ => Err(Error::UnknownShape(s.to_string())),
        }
    }
}

impl fmt::Display for ImprintShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImprintShape::Circular => "circular",
            ImprintShape::Rectangular => "rectangular",
            ImprintShape::Ellipse => "ellipse",
            ImprintShape::Actual => "actual",
        })
    }
}

/// Tire contact imprint. Wheel pressure is informational only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    pub imprint_shape: ImprintShape,
    pub wheel_pressure_mpa: f64,
    pub contact_area_mm2: f64,
}

/// Published tire contact areas per imprint shape, as tabulated. The
/// rectangular row does not equal its own square-inch figure converted
/// exactly (95 in² is 61,290.2 mm²); it is kept as published.
pub fn contact_area_lookup(shape: ImprintShape) -> ContactSpec {
    let contact_area_mm2 = match shape {
        ImprintShape::Circular => 60_000.0,
        ImprintShape::Rectangular => 61_575.0,
        ImprintShape::Ellipse => 60_416.0,
        ImprintShape::Actual => 60_318.0,
    };
    ContactSpec {
        imprint_shape: shape,
        wheel_pressure_mpa: 0.68,
        contact_area_mm2,
    }
}

pub fn sq_in_to_mm2(sq_in: f64) -> f64 {
    sq_in * MM2_PER_SQ_IN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeClass {
    Normal,
    Small,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Normal, SizeClass::Small, SizeClass::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::Normal => "Normal",
            SizeClass::Small => "Small",
            SizeClass::Large => "Large",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizeClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownSizeClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeThresholds {
    large_cutoff_mm2: f64,
    min_detect_mm2: f64,
}

impl SizeThresholds {
    pub const DEFAULT_LARGE_CUTOFF_MM2: f64 = 60_000.0;
    pub const DEFAULT_MIN_DETECT_MM2: f64 = 5_000.0;

    pub fn new(large_cutoff_mm2: f64, min_detect_mm2: f64) -> Result<Self> {
        if !(min_detect_mm2 >= 0.0 && min_detect_mm2 < large_cutoff_mm2)
            || !large_cutoff_mm2.is_finite()
        {
            return Err(Error::Thresholds(format!(
                "need 0 <= min_detect ({min_detect_mm2}) < large_cutoff ({large_cutoff_mm2})"
            )));
        }
        Ok(SizeThresholds {
            large_cutoff_mm2,
            min_detect_mm2,
        })
    }

    /// Large cutoff taken from a tabulated imprint shape.
    pub fn for_shape(shape: ImprintShape, min_detect_mm2: f64) -> Result<Self> {
        Self::new(contact_area_lookup(shape).contact_area_mm2, min_detect_mm2)
    }

    pub fn large_cutoff_mm2(&self) -> f64 {
        self.large_cutoff_mm2
    }

    pub fn min_detect_mm2(&self) -> f64 {
        self.min_detect_mm2
    }
}

impl Default for SizeThresholds {
    fn default() -> Self {
        SizeThresholds {
            large_cutoff_mm2: Self::DEFAULT_LARGE_CUTOFF_MM2,
            min_detect_mm2: Self::DEFAULT_MIN_DETECT_MM2,
        }
    }
}

/// `area < min_detect` is Normal, `area > large_cutoff` is Large, anything
/// in between (both ends inclusive) is Small.
pub fn classify_area(area_mm2: f64, thresholds: &SizeThresholds) -> Result<SizeClass> {
    if area_mm2.is_nan() || area_mm2 < 0.0 {
        return Err(Error::NegativeArea(area_mm2));
    }
    Ok(if area_mm2 < thresholds.min_detect_mm2 {
        SizeClass::Normal
    } else if area_mm2 > thresholds.large_cutoff_mm2 {
        SizeClass::Large
    } else {
        SizeClass::Small
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AreaMode {
    #[default]
    AllForeground,
    LargestRegion(Connectivity),
}

/// Counted pixels of `mask` times the pixel scale.
pub fn measure_area(mask: &BinaryMask, scale: &PixelScale, mode: AreaMode) -> f64 {
    let pixels = match mode {
        AreaMode::AllForeground => foreground_pixel_count(mask),
        AreaMode::LargestRegion(conn) => connected_components(mask, conn)
            .first()
            .map_or(0, |r| r.pixel_count),
    };
    pixels as f64 * scale.mm2_per_pixel
}

/// Segmentation settings for measuring a pavement image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureConfig {
    pub threshold: ThresholdMethod,
    pub open_radius: usize,
    pub mode: AreaMode,
    pub thresholds: SizeThresholds,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            threshold: ThresholdMethod::Otsu,
            open_radius: 1,
            mode: AreaMode::AllForeground,
            thresholds: SizeThresholds::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Measurement {
    /// Pixels the area was counted on: the cleaned dark-foreground mask, or
    /// only its largest region in [`AreaMode::LargestRegion`].
    pub mask: BinaryMask,
    pub area_mm2: f64,
    pub class: SizeClass,
}

/// Grayscale (if needed), dark-foreground threshold, opening, area and class.
pub fn measure_image(
    img: &RasterImage,
    scale: &PixelScale,
    config: &MeasureConfig,
) -> Result<Measurement> {
    let gray = match img.channels() {
        1 => img.clone(),
        _ => imgcore::to_grayscale(img)?,
    };
    let mask = binarize(&gray, config.threshold, Polarity::DarkForeground)?;
    let mask = match config.mode {
        AreaMode::AllForeground => morph_open(&mask, config.open_radius),
        AreaMode::LargestRegion(conn) => {
            largest_region_mask(&morph_open(&mask, config.open_radius), conn)
        }
    };
    let area_mm2 = measure_area(&mask, scale, AreaMode::AllForeground);
    let class = classify_area(area_mm2, &config.thresholds)?;
    Ok(Measurement {
        mask,
        area_mm2,
        class,
    })
}
