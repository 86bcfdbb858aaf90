//! Shipped calibration and mission parameters.

use crate::assay::{parse_assays, AssayProtocolParams, ColorChart};
use crate::conf::Document;

pub const CALIBRATION: &str = include_str!("../../../config/calibration.conf");
pub const PARAMS: &str = include_str!("../../../config/params.conf");

/// Assay protocols and colour charts from the shipped parameters.
pub fn assays() -> (AssayProtocolParams, ColorChart) {
    let doc = Document::parse(PARAMS).expect("shipped parameters parse");
    parse_assays(&doc).expect("shipped assay parameters are valid")
}
