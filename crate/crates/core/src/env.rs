//! Simulated site ground truth: soil layers by patch and depth, a uniform
//! gas field, and rock records.
//!
//! A [`SiteModel`] is immutable once loaded and every query is a pure
//! function of its arguments.

use std::fmt::Write as _;

use thiserror::Error;

use crate::conf::{is_identifier, ConfError, Document, Num, Section};
use crate::geom::{Point2, Rect, Rgb};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SiteError {
    #[error(transparent)]
    Conf(#[from] ConfError),
    #[error("line {line}: `{key}` = {value} is out of range {range}")]
    Range {
        line: usize,
        key: String,
        value: f64,
        range: &'static str,
    },
    #[error("patches `{first}` and `{second}` overlap")]
    Overlap { first: String, second: String },
    #[error("{what} lies outside the site extent")]
    OutsideExtent { what: String },
    #[error("patch `{patch}`: layer depths must be non-negative and strictly increasing")]
    LayerOrder { patch: String },
    #[error("patch `{patch}` has no layers")]
    NoLayers { patch: String },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("missing [ambient] section")]
    MissingAmbient,
    #[error("position ({x}, {y}) is outside the site extent")]
    PositionOutOfBounds { x: f64, y: f64 },
    #[error("unknown rock `{0}`")]
    UnknownRock(String),
    #[error("depth {0} cm is negative")]
    NegativeDepth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoilComposition {
    pub protein_mg_per_g: f64,
    pub carbohydrate_mg_per_g: f64,
    pub ammonia_mg_per_g: f64,
    pub moisture_pct: f64,
    pub ph: f64,
}

impl SoilComposition {
    /// Composition reported outside every patch.
    pub const BARREN: SoilComposition = SoilComposition {
        protein_mg_per_g: 0.0,
        carbohydrate_mg_per_g: 0.0,
        ammonia_mg_per_g: 0.0,
        moisture_pct: 0.0,
        ph: 7.0,
    };
}

impl Default for SoilComposition {
    fn default() -> Self {
        Self::BARREN
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoilLayer {
    pub depth_cm: f64,
    pub composition: SoilComposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoilPatch {
    pub name: String,
    pub region: Rect,
    /// Ordered by strictly increasing depth.
    pub layers: Vec<SoilLayer>,
}

impl SoilPatch {
    /// Step-function lookup: the deepest layer whose depth is at most `depth_cm`.
    /// Depths shallower than the first layer read the first layer.
    pub fn composition_at(&self, depth_cm: f64) -> SoilComposition {
        let idx = self.layers.partition_point(|l| l.depth_cm <= depth_cm);
        self.layers[idx.saturating_sub(1)].composition
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RockProperties {
    pub id: String,
    pub position: Point2,
    pub mean_color: Rgb,
    pub layered: bool,
    pub surface_alcohol: bool,
    pub surface_formaldehyde_ppm: f64,
    /// Hidden ground truth; instruments never report it.
    pub fossilized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientConditions {
    pub co2_ppm: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteModel {
    pub name: String,
    pub extent: Rect,
    pub patches: Vec<SoilPatch>,
    pub rocks: Vec<RockProperties>,
    pub ambient: AmbientConditions,
}

fn check_range(
    line: usize,
    key: &str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<(), SiteError> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(SiteError::Range {
            line,
            key: key.to_string(),
            value,
            range,
        })
    }
}

fn check_composition(line: usize, c: &SoilComposition) -> Result<(), SiteError> {
    let inf = f64::INFINITY;
    check_range(line, "protein", c.protein_mg_per_g, 0.0, inf, "[0, inf)")?;
    check_range(
        line,
        "carbohydrate",
        c.carbohydrate_mg_per_g,
        0.0,
        inf,
        "[0, inf)",
    )?;
    check_range(line, "ammonia", c.ammonia_mg_per_g, 0.0, inf, "[0, inf)")?;
    check_range(line, "moisture", c.moisture_pct, 0.0, 100.0, "[0, 100]")?;
    check_range(line, "ph", c.ph, 0.0, 14.0, "[0, 14]")
}

fn rect_entry(section: &Section, key: &str) -> Result<Rect, SiteError> {
    let entry = section.require(key)?;
    let [x0, y0, x1, y1] = entry.parse_array::<f64, 4>()?;
    Rect::new(x0, y0, x1, y1)
        .ok_or_else(|| entry.error("rectangle needs x0 < x1 and y0 < y1").into())
}

/// Parse and validate a site description.
pub fn load_site(text: &str) -> Result<SiteModel, SiteError> {
    let doc = Document::parse(text)?;
    doc.check_kinds(&["patch", "rock", "ambient"])?;

    let amb = doc.singleton("ambient")?.ok_or(SiteError::MissingAmbient)?;
    amb.check_keys(&["co2_ppm", "humidity_pct", "extent", "name"])?;
    let extent = rect_entry(amb, "extent")?;
    let co2_ppm: f64 = amb.req("co2_ppm")?;
    check_range(
        amb.require("co2_ppm")?.line,
        "co2_ppm",
        co2_ppm,
        0.0,
        f64::INFINITY,
        "[0, inf)",
    )?;
    let humidity_pct: f64 = amb.req("humidity_pct")?;
    check_range(
        amb.require("humidity_pct")?.line,
        "humidity_pct",
        humidity_pct,
        0.0,
        100.0,
        "[0, 100]",
    )?;
    let name = match amb.last("name") {
        Some(e) if is_identifier(&e.value) => e.value.clone(),
        Some(e) => return Err(e.error("site name must be a single identifier").into()),
        None => "site".to_string(),
    };

    let mut patches = Vec::new();
    for s in doc.sections_of("patch") {
        s.check_keys(&["region", "layer"])?;
        let patch_name = s.name.clone().ok_or_else(|| ConfError::Syntax {
            line: s.line,
            message: "[patch] needs a name".into(),
        })?;
        let region = rect_entry(s, "region")?;
        let mut layers = Vec::new();
        for e in s.all("layer") {
            let [depth_cm, protein, carb, ammonia, moisture, ph] = e.parse_array::<f64, 6>()?;
            let composition = SoilComposition {
                protein_mg_per_g: protein,
                carbohydrate_mg_per_g: carb,
                ammonia_mg_per_g: ammonia,
                moisture_pct: moisture,
                ph,
            };
            check_range(e.line, "depth_cm", depth_cm, 0.0, f64::INFINITY, "[0, inf)")?;
            check_composition(e.line, &composition)?;
            layers.push(SoilLayer {
                depth_cm,
                composition,
            });
        }
        patches.push(SoilPatch {
            name: patch_name,
            region,
            layers,
        });
    }

    let mut rocks = Vec::new();
    for s in doc.sections_of("rock") {
        s.check_keys(&[
            "position",
            "color",
            "layered",
            "alcohol",
            "formaldehyde_ppm",
            "fossilized",
        ])?;
        let id = s.name.clone().ok_or_else(|| ConfError::Syntax {
            line: s.line,
            message: "[rock] needs a name".into(),
        })?;
        let [x, y] = s.require("position")?.parse_array::<f64, 2>()?;
        let color_entry = s.require("color")?;
        let channels = color_entry.parse_array::<f64, 3>()?;
        let mut rgb = [0u8; 3];
        for (slot, v) in rgb.iter_mut().zip(channels) {
            check_range(color_entry.line, "color", v, 0.0, 255.0, "[0, 255]")?;
            if v.fract() != 0.0 {
                return Err(color_entry.error("color channels must be integers").into());
            }
            *slot = v as u8;
        }
        let formaldehyde: f64 = s.get_or("formaldehyde_ppm", 0.0)?;
        if let Some(e) = s.last("formaldehyde_ppm") {
            check_range(
                e.line,
                "formaldehyde_ppm",
                formaldehyde,
                0.0,
                f64::INFINITY,
                "[0, inf)",
            )?;
        }
        rocks.push(RockProperties {
            id,
            position: Point2::new(x, y),
            mean_color: Rgb::from_channels(rgb),
            layered: s.get_or("layered", false)?,
            surface_alcohol: s.get_or("alcohol", false)?,
            surface_formaldehyde_ppm: formaldehyde,
            fossilized: s.get_or("fossilized", false)?,
        });
    }

    SiteModel::new(
        name,
        extent,
        patches,
        rocks,
        AmbientConditions {
            co2_ppm,
            humidity_pct,
        },
    )
}

impl SiteModel {
    /// Build a model, enforcing every structural invariant.
    pub fn new(
        name: String,
        extent: Rect,
        patches: Vec<SoilPatch>,
        rocks: Vec<RockProperties>,
        ambient: AmbientConditions,
    ) -> Result<Self, SiteError> {
        check_range(
            0,
            "co2_ppm",
            ambient.co2_ppm,
            0.0,
            f64::INFINITY,
            "[0, inf)",
        )?;
        check_range(
            0,
            "humidity_pct",
            ambient.humidity_pct,
            0.0,
            100.0,
            "[0, 100]",
        )?;
        for (i, p) in patches.iter().enumerate() {
            if patches[..i].iter().any(|q| q.name == p.name) {
                return Err(SiteError::DuplicateName {
                    kind: "patch",
                    name: p.name.clone(),
                });
            }
            if p.layers.is_empty() {
                return Err(SiteError::NoLayers {
                    patch: p.name.clone(),
                });
            }
            let ordered = p.layers[0].depth_cm >= 0.0
                && p.layers.windows(2).all(|w| w[0].depth_cm < w[1].depth_cm);
            if !ordered {
                return Err(SiteError::LayerOrder {
                    patch: p.name.clone(),
                });
            }
            for l in &p.layers {
                check_composition(0, &l.composition)?;
            }
            if !extent.contains_rect(&p.region) {
                return Err(SiteError::OutsideExtent {
                    what: format!("patch `{}`", p.name),
                });
            }
            if let Some(q) = patches[..i].iter().find(|q| q.region.overlaps(&p.region)) {
                return Err(SiteError::Overlap {
                    first: q.name.clone(),
                    second: p.name.clone(),
                });
            }
        }
        for (i, r) in rocks.iter().enumerate() {
            if rocks[..i].iter().any(|q| q.id == r.id) {
                return Err(SiteError::DuplicateName {
                    kind: "rock",
                    name: r.id.clone(),
                });
            }
            if !extent.contains(r.position) {
                return Err(SiteError::OutsideExtent {
                    what: format!("rock `{}`", r.id),
                });
            }
            check_range(
                0,
                "formaldehyde_ppm",
                r.surface_formaldehyde_ppm,
                0.0,
                f64::INFINITY,
                "[0, inf)",
            )?;
        }
        Ok(Self {
            name,
            extent,
            patches,
            rocks,
            ambient,
        })
    }

    fn check_in_bounds(&self, p: Point2) -> Result<(), SiteError> {
        if self.extent.contains(p) {
            Ok(())
        } else {
            Err(SiteError::PositionOutOfBounds { x: p.x, y: p.y })
        }
    }

    pub fn patch_at(&self, position: Point2) -> Option<&SoilPatch> {
        self.patches
            .iter()
            .find(|p| p.region.contains_half_open(position))
    }

    pub fn soil_at(&self, position: Point2, depth_cm: f64) -> Result<SoilComposition, SiteError> {
        self.check_in_bounds(position)?;
        if !(depth_cm >= 0.0) {
            return Err(SiteError::NegativeDepth(depth_cm));
        }
        Ok(self
            .patch_at(position)
            .map(|p| p.composition_at(depth_cm))
            .unwrap_or(SoilComposition::BARREN))
    }

    /// `(co2_ppm, humidity_pct)`; the field is uniform over the site.
    pub fn gas_at(&self, position: Point2) -> Result<(f64, f64), SiteError> {
        self.check_in_bounds(position)?;
        Ok((self.ambient.co2_ppm, self.ambient.humidity_pct))
    }

    pub fn rock_at(&self, rock_id: &str) -> Result<&RockProperties, SiteError> {
        self.rocks
            .iter()
            .find(|r| r.id == rock_id)
            .ok_or_else(|| SiteError::UnknownRock(rock_id.to_string()))
    }

    /// Render back into the site file grammar. Loading the output yields an
    /// equal model.
    pub fn to_conf_text(&self) -> String {
        let mut out = String::new();
        let e = &self.extent;
        let _ = writeln!(out, "[ambient]");
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(
            out,
            "extent = {} {} {} {}",
            Num(e.x0),
            Num(e.y0),
            Num(e.x1),
            Num(e.y1)
        );
        let _ = writeln!(out, "co2_ppm = {}", Num(self.ambient.co2_ppm));
        let _ = writeln!(out, "humidity_pct = {}", Num(self.ambient.humidity_pct));
        for p in &self.patches {
            let r = &p.region;
            let _ = writeln!(out, "\n[patch {}]", p.name);
            let _ = writeln!(
                out,
                "region = {} {} {} {}",
                Num(r.x0),
                Num(r.y0),
                Num(r.x1),
                Num(r.y1)
            );
            for l in &p.layers {
                let c = &l.composition;
                let _ = writeln!(
                    out,
                    "layer = {} {} {} {} {} {}",
                    Num(l.depth_cm),
                    Num(c.protein_mg_per_g),
                    Num(c.carbohydrate_mg_per_g),
                    Num(c.ammonia_mg_per_g),
                    Num(c.moisture_pct),
                    Num(c.ph)
                );
            }
        }
        for r in &self.rocks {
            let _ = writeln!(out, "\n[rock {}]", r.id);
            let _ = writeln!(
                out,
                "position = {} {}",
                Num(r.position.x),
                Num(r.position.y)
            );
            let _ = writeln!(
                out,
                "color = {} {} {}",
                r.mean_color.r, r.mean_color.g, r.mean_color.b
            );
            let _ = writeln!(out, "layered = {}", r.layered);
            let _ = writeln!(out, "alcohol = {}", r.surface_alcohol);
            let _ = writeln!(
                out,
                "formaldehyde_ppm = {}",
                Num(r.surface_formaldehyde_ppm)
            );
            let _ = writeln!(out, "fossilized = {}", r.fossilized);
        }
        out
    }
}
