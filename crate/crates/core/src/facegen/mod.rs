//! Procedural parametric face model: schema, target encoding, and the
//! deterministic 2D renderer with per-region masks and crop boxes.

mod image;
mod render;
mod schema;
mod target;

pub use image::{Image, Mask, PixelRect};
pub use render::{
    crop_region, nominal_crop_boxes, render, RenderOutput, ViewParams, CROP_MARGIN, CROP_SIZE,
    FRAME_SIZE, MAX_JITTER,
};
pub use schema::{
    default_schema, ContinuousParam, FaceSchema, Locality, Region, RegionSchema,
};
pub use target::{
    argmax_lowest, decode_target, encode_recipe, Recipe, SlotKind, TargetGroup, TargetLayout,
    TargetVector,
};
