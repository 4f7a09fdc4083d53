//! Raster images, binary masks and the segmentation primitives that turn a
//! pavement photo into a countable pothole mask.

mod codec;
mod raster;
mod segment;

pub use codec::{decode, encode_pgm, encode_png, read_image, write_pgm, write_png};
pub use raster::{BinaryMask, RasterImage, Region};
pub(crate) use segment::largest_region_mask;
pub use segment::{
    binarize, connected_components, dilate, erode, foreground_pixel_count, morph_open,
    otsu_threshold, to_grayscale, Connectivity, Polarity, ThresholdMethod,
};
