//! Colorimetric assays: the reaction colour a beaker shows for a given
//! sample, reagent and elapsed time, and the nearest-colour reading of that
//! colour against the reference chart.
//!
//! Nothing here depends on temperature. Every assay is run
//! heat-independent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::clock::VirtualClock;
use crate::conf::{ConfError, Document, Section};
use crate::geom::Rgb;
use crate::mechanism::{BeakerSlot, PumpLine, SoilSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssayKind {
    /// Ninhydrin.
    Protein,
    /// Benedict's solution.
    Carbohydrate,
    /// Nessler's reagent.
    Ammonia,
}

impl AssayKind {
    pub const ALL: [AssayKind; 3] = [
        AssayKind::Protein,
        AssayKind::Carbohydrate,
        AssayKind::Ammonia,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AssayKind::Protein => "protein",
            AssayKind::Carbohydrate => "carbohydrate",
            AssayKind::Ammonia => "ammonia",
        }
    }

    pub fn reagent_name(&self) -> &'static str {
        match self {
            AssayKind::Protein => "ninhydrin",
            AssayKind::Carbohydrate => "benedict",
            AssayKind::Ammonia => "nessler",
        }
    }

    /// Analyte content of the soil for this assay, in mg per g.
    pub fn analyte_mg_per_g(&self, sample: &SoilSample) -> f64 {
        let c = &sample.composition;
        match self {
            AssayKind::Protein => c.protein_mg_per_g,
            AssayKind::Carbohydrate => c.carbohydrate_mg_per_g,
            AssayKind::Ammonia => c.ammonia_mg_per_g,
        }
    }
}

impl fmt::Display for AssayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown assay `{0}` (expected protein, carbohydrate or ammonia)")]
pub struct UnknownAssay(pub String);

impl FromStr for AssayKind {
    type Err = UnknownAssay;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AssayKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownAssay(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssayError {
    #[error(transparent)]
    Conf(#[from] ConfError),
    #[error("[{section}] {message}")]
    Invalid { section: String, message: String },
    #[error("reagent volume must be positive")]
    NoReagentVolume,
    #[error("sample mass must be positive")]
    NoSampleMass,
    #[error("beaker holds no sample")]
    NoSample,
    #[error("no {0} reagent was dispensed into the beaker")]
    MissingReagent(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindParams {
    pub nominal_mass_g: f64,
    pub reagent_ml: f64,
    pub react_time_ms: u64,
    pub small_sample_react_time_ms: u64,
    pub lod_mg: f64,
    pub small_sample_lod_factor: f64,
}

impl KindParams {
    fn is_small(&self, mass_g: f64) -> bool {
        mass_g < self.nominal_mass_g
    }

    pub fn required_time_ms(&self, mass_g: f64) -> u64 {
        if self.is_small(mass_g) {
            self.small_sample_react_time_ms
        } else {
            self.react_time_ms
        }
    }

    pub fn effective_lod_mg(&self, mass_g: f64) -> f64 {
        if self.is_small(mass_g) {
            self.lod_mg * self.small_sample_lod_factor
        } else {
            self.lod_mg
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssayProtocolParams {
    kinds: BTreeMap<AssayKind, KindParams>,
}

impl AssayProtocolParams {
    pub fn get(&self, kind: AssayKind) -> &KindParams {
        &self.kinds[&kind]
    }

    pub fn get_mut(&mut self, kind: AssayKind) -> &mut KindParams {
        self.kinds.get_mut(&kind).expect("all kinds present")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartEntry {
    /// Exclusive upper bound of the bin in mg of analyte.
    pub upper_mg: f64,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorChart {
    kinds: BTreeMap<AssayKind, Vec<ChartEntry>>,
}

impl ColorChart {
    pub fn bins(&self, kind: AssayKind) -> &[ChartEntry] {
        &self.kinds[&kind]
    }

    pub fn negative(&self, kind: AssayKind) -> Rgb {
        self.bins(kind)[0].color
    }

    /// Bin whose half-open range `[upper[k-1], upper[k])` holds `mass_mg`;
    /// masses past the last bound saturate into the last bin.
    pub fn bin_for_mass(&self, kind: AssayKind, mass_mg: f64) -> usize {
        let bins = self.bins(kind);
        bins.iter()
            .position(|b| mass_mg < b.upper_mg)
            .unwrap_or(bins.len() - 1)
    }
}

fn invalid(section: &str, message: impl Into<String>) -> AssayError {
    AssayError::Invalid {
        section: section.to_string(),
        message: message.into(),
    }
}

const ASSAY_KEYS: &[&str] = &[
    "nominal_mass_g",
    "reagent_ml",
    "react_ms",
    "small_react_ms",
    "small_lod_factor",
    "lod_mg",
    "bin",
];

fn parse_kind(s: &Section, kind: AssayKind) -> Result<(KindParams, Vec<ChartEntry>), AssayError> {
    s.check_keys(ASSAY_KEYS)?;
    let p = KindParams {
        nominal_mass_g: s.req("nominal_mass_g")?,
        reagent_ml: s.req("reagent_ml")?,
        react_time_ms: s.req("react_ms")?,
        small_sample_react_time_ms: s.req("small_react_ms")?,
        lod_mg: s.req("lod_mg")?,
        small_sample_lod_factor: s.req("small_lod_factor")?,
    };
    let name = &s.kind;
    let positive = [
        p.nominal_mass_g,
        p.reagent_ml,
        p.lod_mg,
        p.small_sample_lod_factor,
    ]
    .iter()
    .all(|v| *v > 0.0 && v.is_finite());
    if !positive || p.react_time_ms == 0 || p.small_sample_react_time_ms == 0 {
        return Err(invalid(name, "all protocol parameters must be positive"));
    }
    if kind == AssayKind::Protein && p.small_sample_react_time_ms < p.react_time_ms {
        return Err(invalid(
            name,
            "small_react_ms must not be shorter than react_ms",
        ));
    }
    let mut bins = Vec::new();
    for e in s.all("bin") {
        let [upper, r, g, b] = e.parse_array::<f64, 4>()?;
        let mut rgb = [0u8; 3];
        for (slot, c) in rgb.iter_mut().zip([r, g, b]) {
            if !(0.0..=255.0).contains(&c) || c.fract() != 0.0 {
                return Err(e
                    .error("colour channels must be integers in 0..=255")
                    .into());
            }
            *slot = c as u8;
        }
        bins.push(ChartEntry {
            upper_mg: upper,
            color: Rgb::from_channels(rgb),
        });
    }
    if bins.len() < 2 {
        return Err(invalid(name, "a chart needs at least two bins"));
    }
    let increasing =
        bins[0].upper_mg > 0.0 && bins.windows(2).all(|w| w[0].upper_mg < w[1].upper_mg);
    if !increasing {
        return Err(invalid(
            name,
            "bin bounds must be positive and strictly increasing",
        ));
    }
    Ok((p, bins))
}

/// Parse the `[benedict]`, `[ninhydrin]` and `[nessler]` sections of a
/// parameter document. Other sections are left to their own parsers.
pub fn parse_assays(doc: &Document) -> Result<(AssayProtocolParams, ColorChart), AssayError> {
    let mut kinds = BTreeMap::new();
    let mut charts = BTreeMap::new();
    for kind in AssayKind::ALL {
        let s = doc
            .singleton(kind.reagent_name())?
            .ok_or_else(|| invalid(kind.reagent_name(), "section is missing"))?;
        let (p, bins) = parse_kind(s, kind)?;
        kinds.insert(kind, p);
        charts.insert(kind, bins);
    }
    Ok((AssayProtocolParams { kinds }, ColorChart { kinds: charts }))
}

/// Colour of the beaker after `elapsed_ms` of reaction.
///
/// Water only dilutes; it never changes the outcome.
pub fn reaction_color(
    kind: AssayKind,
    sample: &SoilSample,
    reagent_ml: f64,
    _water_ml: f64,
    elapsed_ms: u64,
    params: &AssayProtocolParams,
    chart: &ColorChart,
) -> Result<Rgb, AssayError> {
    if !(reagent_ml > 0.0) {
        return Err(AssayError::NoReagentVolume);
    }
    if !(sample.mass_g > 0.0) {
        return Err(AssayError::NoSampleMass);
    }
    let p = params.get(kind);
    let analyte_mg = kind.analyte_mg_per_g(sample) * sample.mass_g;
    if elapsed_ms < p.required_time_ms(sample.mass_g)
        || !(analyte_mg >= p.effective_lod_mg(sample.mass_g))
        || analyte_mg <= 0.0
    {
        return Ok(chart.negative(kind));
    }
    let bin = chart.bin_for_mass(kind, analyte_mg).max(1);
    Ok(chart.bins(kind)[bin].color)
}

/// Nearest chart colour by Euclidean RGB distance; ties go to the lower bin.
/// Returns `(detected, bin_index)`.
pub fn interpret_color(kind: AssayKind, observed: Rgb, chart: &ColorChart) -> (bool, usize) {
    let mut best = 0;
    let mut best_d = u32::MAX;
    for (i, entry) in chart.bins(kind).iter().enumerate() {
        let d = observed.distance_sq(&entry.color);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    (best > 0, best)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssayResult {
    pub kind: AssayKind,
    pub detected: bool,
    pub bin_index: usize,
    pub elapsed_ms: u64,
    pub contaminated_input: bool,
}

/// When the reagent in `slot` finished dispensing, and how much went in.
pub fn reagent_start(slot: &BeakerSlot, kind: AssayKind) -> Result<(u64, f64), AssayError> {
    let line = PumpLine::Reagent(kind);
    let end = slot
        .prep
        .iter()
        .filter(|d| d.line == line)
        .map(|d| d.end_ms)
        .max()
        .ok_or(AssayError::MissingReagent(kind.reagent_name()))?;
    Ok((end, slot.dispensed(line)))
}

/// Instant the result for `slot` becomes readable.
pub fn result_ready_ms(
    kind: AssayKind,
    slot: &BeakerSlot,
    params: &AssayProtocolParams,
) -> Result<u64, AssayError> {
    let sample = slot.sample.as_ref().ok_or(AssayError::NoSample)?;
    let (start, _) = reagent_start(slot, kind)?;
    Ok(start + params.get(kind).required_time_ms(sample.mass_g))
}

/// Wait for the reaction, photograph the beaker and read the chart.
pub fn run_assay(
    kind: AssayKind,
    slot: &BeakerSlot,
    params: &AssayProtocolParams,
    chart: &ColorChart,
    clock: &mut VirtualClock,
) -> Result<AssayResult, AssayError> {
    let sample = slot.sample.as_ref().ok_or(AssayError::NoSample)?;
    let (start, reagent_ml) = reagent_start(slot, kind)?;
    let ready = result_ready_ms(kind, slot, params)?;
    let now = clock.advance_to(ready);
    let elapsed_ms = now - start;
    let water_ml = slot.dispensed(PumpLine::Water);
    let color = reaction_color(
        kind, sample, reagent_ml, water_ml, elapsed_ms, params, chart,
    )?;
    let (detected, bin_index) = interpret_color(kind, color, chart);
    Ok(AssayResult {
        kind,
        detected,
        bin_index,
        elapsed_ms,
        contaminated_input: slot.contaminated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SoilComposition;
    use crate::geom::Point2;

    fn setup() -> (AssayProtocolParams, ColorChart) {
        crate::defaults::assays()
    }

    fn sample(mass_g: f64, protein: f64, carb: f64, ammonia: f64) -> SoilSample {
        SoilSample {
            mass_g,
            source_position: Point2::new(0.0, 0.0),
            depth_cm: 6.0,
            composition: SoilComposition {
                protein_mg_per_g: protein,
                carbohydrate_mg_per_g: carb,
                ammonia_mg_per_g: ammonia,
                moisture_pct: 10.0,
                ph: 7.0,
            },
            sterile_chain: true,
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AssayKind::ALL {
            assert_eq!(k.name().parse::<AssayKind>().unwrap(), k);
        }
        assert!("lipid".parse::<AssayKind>().is_err());
    }

    #[test]
    fn nominal_protein_is_positive_at_five_minutes() {
        let (p, c) = setup();
        // 1 mg/g * 10 g = 10 mg: above the 2 mg LOD, inside the first
        // positive bin [2, 20).
        let s = sample(10.0, 1.0, 0.0, 0.0);
        let color = reaction_color(AssayKind::Protein, &s, 20.0, 10.0, 300_000, &p, &c).unwrap();
        assert_eq!(color, c.bins(AssayKind::Protein)[1].color);
        let early = reaction_color(AssayKind::Protein, &s, 20.0, 10.0, 299_999, &p, &c).unwrap();
        assert_eq!(early, c.negative(AssayKind::Protein));
    }

    #[test]
    fn small_protein_sample_reads_negative() {
        let (p, c) = setup();
        // 1 mg/g * 3 g = 3 mg: above the 2 mg LOD but below 4 x 2 = 8 mg.
        let s = sample(3.0, 1.0, 0.0, 0.0);
        let color = reaction_color(AssayKind::Protein, &s, 20.0, 10.0, 420_000, &p, &c).unwrap();
        assert_eq!(color, c.negative(AssayKind::Protein));
        // Enough protein still reacts, but only after seven minutes.
        let rich = sample(3.0, 5.0, 0.0, 0.0);
        assert_eq!(
            reaction_color(AssayKind::Protein, &rich, 20.0, 10.0, 419_999, &p, &c).unwrap(),
            c.negative(AssayKind::Protein)
        );
        assert_ne!(
            reaction_color(AssayKind::Protein, &rich, 20.0, 10.0, 420_000, &p, &c).unwrap(),
            c.negative(AssayKind::Protein)
        );
    }

    #[test]
    fn zero_analyte_never_reacts() {
        let (p, c) = setup();
        let s = sample(10.0, 0.0, 0.0, 0.0);
        for kind in AssayKind::ALL {
            for t in [0, 180_000, 300_000, 10_000_000] {
                assert_eq!(
                    reaction_color(kind, &s, 20.0, 0.0, t, &p, &c).unwrap(),
                    c.negative(kind)
                );
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        let (p, c) = setup();
        let s = sample(10.0, 1.0, 0.0, 0.0);
        assert_eq!(
            reaction_color(AssayKind::Protein, &s, 0.0, 0.0, 0, &p, &c),
            Err(AssayError::NoReagentVolume)
        );
        let empty = sample(0.0, 1.0, 0.0, 0.0);
        assert_eq!(
            reaction_color(AssayKind::Protein, &empty, 20.0, 0.0, 0, &p, &c),
            Err(AssayError::NoSampleMass)
        );
    }

    #[test]
    fn interpretation_and_tie_rule() {
        let (_, c) = setup();
        let kind = AssayKind::Protein;
        let bins = c.bins(kind);
        assert_eq!(interpret_color(kind, bins[0].color, &c), (false, 0));
        let last = bins.len() - 1;
        assert_eq!(interpret_color(kind, bins[last].color, &c), (true, last));
        // (250,250,250) and (200,170,230): the point (225,210,240) is
        // 25^2 + 40^2 + 10^2 = 2325 from both.
        let mid = Rgb::new(225, 210, 240);
        assert_eq!(mid.distance_sq(&bins[0].color), 2325);
        assert_eq!(mid.distance_sq(&bins[1].color), 2325);
        assert_eq!(interpret_color(kind, mid, &c), (false, 0));
    }

    #[test]
    fn default_benedict_is_more_sensitive_than_ninhydrin() {
        let (p, _) = setup();
        assert!(p.get(AssayKind::Carbohydrate).lod_mg <= p.get(AssayKind::Protein).lod_mg);
    }

    #[test]
    fn chart_validation() {
        let text =
            crate::defaults::PARAMS.replace("bin = 20 200 170 230\n", "bin = 1 200 170 230\n");
        let doc = Document::parse(&text).unwrap();
        assert!(matches!(
            parse_assays(&doc),
            Err(AssayError::Invalid { .. })
        ));
        let text =
            crate::defaults::PARAMS.replace("small_react_ms = 420000", "small_react_ms = 100000");
        let doc = Document::parse(&text).unwrap();
        assert!(parse_assays(&doc).is_err());
    }
}
