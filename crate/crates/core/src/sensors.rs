//! Bio-sensor suite: transfer functions from raw transducer signals to
//! engineering units, and the per-cycle polling loop that produces
//! [`SensorFrame`]s.
//!
//! Raw signals are synthesized from site ground truth by running each
//! transfer function backwards, optionally adding seeded uniform noise, and
//! then converting forward again exactly as a real controller would.
//!
//! Every mapping that lands on an integer scale rounds half away from zero
//! (`f64::round`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conf::{ConfError, Document, Section};
use crate::env::{SiteError, SiteModel};
use crate::geom::{Point2, Rgb};

/// Sensor warm-up before the first poll ("wait 2 seconds for sensor setup").
pub const SENSOR_SETUP_MS: u64 = 2_000;

/// Virtual time consumed by one pass of the polling loop.
pub const POLL_CYCLE_MS: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Conf(#[from] ConfError),
    #[error("[{section}] {message}")]
    Invalid { section: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SensorFault {
    #[error("signal outside the converter's valid range")]
    SignalOutOfRange,
    #[error("pH probe is not deployed")]
    ProbeNotDeployed,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error(transparent)]
    Fault(#[from] SensorFault),
    #[error(transparent)]
    Site(#[from] SiteError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorCalibration {
    pub f_min: [f64; 3],
    pub f_max: [f64; 3],
    pub noise: f64,
}

/// One metal-oxide gas sensor on a voltage divider.
#[derive(Debug, Clone, PartialEq)]
pub struct GasCalibration {
    pub vc_volts: f64,
    pub rl_ohms: f64,
    pub ro_ohms: f64,
    pub curve_a: f64,
    pub curve_b: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogCalibration {
    pub raw_min: f64,
    pub raw_max: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlcoholCalibration {
    pub threshold: u32,
    pub max_level: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorCalibration {
    pub color: ColorCalibration,
    /// MQ135, CO2.
    pub co2: GasCalibration,
    /// MQ137, ammonia.
    pub ammonia: GasCalibration,
    /// Air ammonia ppm per mg/g of soil ammonia.
    pub ammonia_headspace_ppm_per_mg_g: f64,
    /// MQ138, formaldehyde.
    pub formaldehyde: GasCalibration,
    /// MQ3.
    pub alcohol: AlcoholCalibration,
    /// HR202.
    pub humidity: AnalogCalibration,
    /// YL-69.
    pub moisture: AnalogCalibration,
    pub ph_noise: f64,
}

fn invalid(section: &str, message: impl Into<String>) -> CalibrationError {
    CalibrationError::Invalid {
        section: section.to_string(),
        message: message.into(),
    }
}

fn section<'a>(doc: &'a Document, kind: &str) -> Result<&'a Section, CalibrationError> {
    doc.singleton(kind)?
        .ok_or_else(|| invalid(kind, "section is missing"))
}

fn noise_of(s: &Section) -> Result<f64, CalibrationError> {
    let n: f64 = s.get_or("noise", 0.0)?;
    if !(n >= 0.0 && n.is_finite()) {
        return Err(invalid(&s.kind, "noise must be finite and >= 0"));
    }
    Ok(n)
}

fn parse_gas(
    doc: &Document,
    kind: &str,
    extra: &[&str],
) -> Result<GasCalibration, CalibrationError> {
    let s = section(doc, kind)?;
    let mut keys = vec![
        "vc_volts", "rl_ohms", "ro_ohms", "curve_a", "curve_b", "noise",
    ];
    keys.extend_from_slice(extra);
    s.check_keys(&keys)?;
    let g = GasCalibration {
        vc_volts: s.get_or("vc_volts", 5.0)?,
        rl_ohms: s.req("rl_ohms")?,
        ro_ohms: s.req("ro_ohms")?,
        curve_a: s.req("curve_a")?,
        curve_b: s.req("curve_b")?,
        noise: noise_of(s)?,
    };
    g.validate().map_err(|m| invalid(kind, m))?;
    Ok(g)
}

fn parse_analog(doc: &Document, kind: &str) -> Result<AnalogCalibration, CalibrationError> {
    let s = section(doc, kind)?;
    s.check_keys(&["raw_min", "raw_max", "noise"])?;
    let a = AnalogCalibration {
        raw_min: s.req("raw_min")?,
        raw_max: s.req("raw_max")?,
        noise: noise_of(s)?,
    };
    if !(a.raw_max > a.raw_min) || !a.raw_min.is_finite() || !a.raw_max.is_finite() {
        return Err(invalid(kind, "raw_max must exceed raw_min"));
    }
    Ok(a)
}

impl GasCalibration {
    pub fn validate(&self) -> Result<(), String> {
        let all_finite = [
            self.vc_volts,
            self.rl_ohms,
            self.ro_ohms,
            self.curve_a,
            self.curve_b,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err("values must be finite".into());
        }
        if self.vc_volts <= 0.0 || self.rl_ohms <= 0.0 || self.ro_ohms <= 0.0 {
            return Err("vc_volts, rl_ohms and ro_ohms must be positive".into());
        }
        if self.curve_a <= 0.0 {
            return Err("curve_a must be positive".into());
        }
        if self.curve_b == 0.0 {
            return Err("curve_b must be non-zero".into());
        }
        Ok(())
    }

    /// Divider output for a target concentration: the inverse of [`gas_ppm`].
    ///
    /// Zero or negative concentrations read as the sensor floor. The result
    /// is kept strictly inside `(0, vc)`.
    pub fn output_voltage(&self, ppm: f64) -> f64 {
        let floor = self.vc_volts * 1e-12;
        if !(ppm > 0.0) {
            return floor;
        }
        let ratio = (ppm / self.curve_a).powf(1.0 / self.curve_b);
        let rs = ratio * self.ro_ohms;
        let v = self.vc_volts * self.rl_ohms / (self.rl_ohms + rs);
        if v.is_nan() {
            return floor;
        }
        v.clamp(floor, self.vc_volts - floor)
    }
}

impl SensorCalibration {
    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let doc = Document::parse(text)?;
        doc.check_kinds(&[
            "color", "mq135", "mq137", "mq138", "mq3", "hr202", "yl69", "ph",
        ])?;

        let c = section(&doc, "color")?;
        c.check_keys(&["f_min", "f_max", "noise"])?;
        let color = ColorCalibration {
            f_min: c.require("f_min")?.parse_array::<f64, 3>()?,
            f_max: c.require("f_max")?.parse_array::<f64, 3>()?,
            noise: noise_of(c)?,
        };
        for ch in 0..3 {
            if !(color.f_max[ch] > color.f_min[ch]) {
                return Err(invalid("color", "f_max must exceed f_min on every channel"));
            }
        }

        let ammonia = parse_gas(&doc, "mq137", &["headspace_ppm_per_mg_g"])?;
        let headspace: f64 = section(&doc, "mq137")?.get_or("headspace_ppm_per_mg_g", 10.0)?;
        if !(headspace >= 0.0 && headspace.is_finite()) {
            return Err(invalid("mq137", "headspace_ppm_per_mg_g must be >= 0"));
        }

        let a = section(&doc, "mq3")?;
        a.check_keys(&["threshold", "max_level"])?;
        let alcohol = AlcoholCalibration {
            threshold: a.req("threshold")?,
            max_level: a.req("max_level")?,
        };
        if alcohol.threshold == 0 || alcohol.threshold > alcohol.max_level {
            return Err(invalid("mq3", "threshold must lie in 1..=max_level"));
        }

        let ph = section(&doc, "ph")?;
        ph.check_keys(&["noise"])?;

        Ok(Self {
            color,
            co2: parse_gas(&doc, "mq135", &[])?,
            ammonia,
            ammonia_headspace_ppm_per_mg_g: headspace,
            formaldehyde: parse_gas(&doc, "mq138", &[])?,
            alcohol,
            humidity: parse_analog(&doc, "hr202")?,
            moisture: parse_analog(&doc, "yl69")?,
            ph_noise: noise_of(ph)?,
        })
    }

    /// The calibration shipped in `config/calibration.conf`.
    pub fn shipped() -> Self {
        Self::parse(crate::defaults::CALIBRATION).expect("shipped calibration is valid")
    }

    /// Same calibration with every noise amplitude set to `amplitude`.
    pub fn with_noise(mut self, amplitude: f64) -> Self {
        self.color.noise = amplitude;
        self.co2.noise = amplitude;
        self.ammonia.noise = amplitude;
        self.formaldehyde.noise = amplitude;
        self.humidity.noise = amplitude;
        self.moisture.noise = amplitude;
        self.ph_noise = amplitude;
        self
    }
}

/// Raw colour frequencies to an RGB byte triple, saturating at both ends.
pub fn map_color_raw(raw_hz: [f64; 3], calib: &ColorCalibration) -> Rgb {
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let span = calib.f_max[ch] - calib.f_min[ch];
        let scaled = (255.0 * (raw_hz[ch] - calib.f_min[ch]) / span).round();
        out[ch] = if scaled.is_nan() {
            0
        } else {
            scaled.clamp(0.0, 255.0) as u8
        };
    }
    Rgb::from_channels(out)
}

/// Divider voltage to concentration via the Rs/Ro power law.
pub fn gas_ppm(v_out: f64, calib: &GasCalibration) -> Result<f64, SensorFault> {
    if !(v_out > 0.0 && v_out < calib.vc_volts) {
        return Err(SensorFault::SignalOutOfRange);
    }
    let rs = calib.rl_ohms * (calib.vc_volts - v_out) / v_out;
    let ratio = rs / calib.ro_ohms;
    Ok(calib.curve_a * ratio.powf(calib.curve_b))
}

pub fn alcohol_detected(raw_level: u32, calib: &AlcoholCalibration) -> bool {
    raw_level >= calib.threshold
}

fn linear_pct(raw: f64, calib: &AnalogCalibration) -> f64 {
    let pct = 100.0 * (raw - calib.raw_min) / (calib.raw_max - calib.raw_min);
    if pct.is_nan() {
        0.0
    } else {
        pct.clamp(0.0, 100.0)
    }
}

fn inverse_pct(pct: f64, calib: &AnalogCalibration) -> f64 {
    calib.raw_min + pct / 100.0 * (calib.raw_max - calib.raw_min)
}

pub fn humidity_pct(raw: f64, calib: &AnalogCalibration) -> f64 {
    linear_pct(raw, calib)
}

pub fn soil_moisture_pct(raw: f64, calib: &AnalogCalibration) -> f64 {
    linear_pct(raw, calib)
}

/// Seeded zero-mean uniform noise.
///
/// A unit sample is drawn for every channel whether or not its amplitude is
/// zero, so changing one amplitude never shifts the noise on the others.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for one polling instant; a pure function of `(seed, t_ms)`.
    pub fn for_instant(seed: u64, t_ms: u64) -> Self {
        let mixed = seed ^ t_ms.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self::new(mixed)
    }

    pub fn uniform(&mut self, amplitude: f64) -> f64 {
        let unit: f64 = self.rng.gen_range(-1.0..=1.0);
        unit * amplitude
    }
}

/// State of the rack-and-pinion pH probe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ProbeState {
    #[default]
    Retracted,
    Deployed {
        depth_cm: f64,
    },
}

/// Soil pH from the probe, with optional noise, clamped to `[0, 14]`.
pub fn read_ph(
    site: &SiteModel,
    position: Point2,
    probe: ProbeState,
    noise_amplitude: f64,
    noise: &mut NoiseSource,
) -> Result<f64, SensorError> {
    let ProbeState::Deployed { depth_cm } = probe else {
        return Err(SensorFault::ProbeNotDeployed.into());
    };
    let truth = site.soil_at(position, depth_cm)?.ph;
    Ok((truth + noise.uniform(noise_amplitude)).clamp(0.0, 14.0))
}

/// A converted value or the reason the channel could not produce one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reading {
    Value(f64),
    Fault(SensorFault),
}

impl Reading {
    pub fn value(&self) -> Option<f64> {
        match self {
            Reading::Value(v) => Some(*v),
            Reading::Fault(_) => None,
        }
    }
}

impl From<Result<f64, SensorFault>> for Reading {
    fn from(r: Result<f64, SensorFault>) -> Self {
        match r {
            Ok(v) => Reading::Value(v),
            Err(f) => Reading::Fault(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t_ms: u64,
    pub rgb: Rgb,
    pub alcohol_detected: bool,
    pub co2_ppm: Reading,
    pub formaldehyde_ppm: Reading,
    pub humidity_pct: f64,
    pub ammonia_ppm: Reading,
    pub soil_moisture_pct: f64,
    pub ph: Reading,
}

/// Where the instrument head is and what it is pointed at.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoverPose {
    pub position: Point2,
    /// Rock under the colour sensor and surface gas sniffers, if any.
    pub rock: Option<String>,
    pub probe: ProbeState,
}

impl RoverPose {
    pub fn at(position: Point2) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

/// Raw transducer outputs for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignals {
    pub color_hz: [f64; 3],
    pub alcohol_level: u32,
    pub co2_volts: f64,
    pub formaldehyde_volts: f64,
    pub humidity_raw: f64,
    pub ammonia_volts: f64,
    pub moisture_raw: f64,
}

/// Run the transfer functions backwards from ground truth, then add noise.
pub fn synthesize_raw(
    site: &SiteModel,
    pose: &RoverPose,
    calib: &SensorCalibration,
    noise: &mut NoiseSource,
) -> Result<RawSignals, SiteError> {
    let (co2, humidity) = site.gas_at(pose.position)?;
    let surface = site.soil_at(pose.position, 0.0)?;
    let rock = pose
        .rock
        .as_deref()
        .map(|id| site.rock_at(id))
        .transpose()?;

    let color = rock.map(|r| r.mean_color).unwrap_or_default();
    let mut color_hz = [0.0; 3];
    for (ch, c) in color.channels().into_iter().enumerate() {
        let span = calib.color.f_max[ch] - calib.color.f_min[ch];
        color_hz[ch] = calib.color.f_min[ch] + f64::from(c) / 255.0 * span;
        color_hz[ch] += noise.uniform(calib.color.noise);
    }

    let alcohol_level = if rock.is_some_and(|r| r.surface_alcohol) {
        calib.alcohol.max_level
    } else {
        0
    };
    let formaldehyde = rock.map(|r| r.surface_formaldehyde_ppm).unwrap_or(0.0);
    let ammonia = surface.ammonia_mg_per_g * calib.ammonia_headspace_ppm_per_mg_g;

    Ok(RawSignals {
        color_hz,
        alcohol_level,
        co2_volts: calib.co2.output_voltage(co2) + noise.uniform(calib.co2.noise),
        formaldehyde_volts: calib.formaldehyde.output_voltage(formaldehyde)
            + noise.uniform(calib.formaldehyde.noise),
        humidity_raw: inverse_pct(humidity, &calib.humidity) + noise.uniform(calib.humidity.noise),
        ammonia_volts: calib.ammonia.output_voltage(ammonia) + noise.uniform(calib.ammonia.noise),
        moisture_raw: inverse_pct(surface.moisture_pct, &calib.moisture)
            + noise.uniform(calib.moisture.noise),
    })
}

/// Forward conversion of one cycle's raw signals.
pub fn convert(t_ms: u64, raw: &RawSignals, calib: &SensorCalibration, ph: Reading) -> SensorFrame {
    SensorFrame {
        t_ms,
        rgb: map_color_raw(raw.color_hz, &calib.color),
        alcohol_detected: alcohol_detected(raw.alcohol_level, &calib.alcohol),
        co2_ppm: gas_ppm(raw.co2_volts, &calib.co2).into(),
        formaldehyde_ppm: gas_ppm(raw.formaldehyde_volts, &calib.formaldehyde).into(),
        humidity_pct: humidity_pct(raw.humidity_raw, &calib.humidity),
        ammonia_ppm: gas_ppm(raw.ammonia_volts, &calib.ammonia).into(),
        soil_moisture_pct: soil_moisture_pct(raw.moisture_raw, &calib.moisture),
        ph,
    }
}

/// One polling cycle at virtual time `t_ms`. Pure in all arguments.
pub fn poll_frame(
    site: &SiteModel,
    pose: &RoverPose,
    t_ms: u64,
    calib: &SensorCalibration,
    seed: u64,
) -> Result<SensorFrame, SiteError> {
    let mut noise = NoiseSource::for_instant(seed, t_ms);
    let raw = synthesize_raw(site, pose, calib, &mut noise)?;
    let ph = match read_ph(site, pose.position, pose.probe, calib.ph_noise, &mut noise) {
        Ok(v) => Reading::Value(v),
        Err(SensorError::Fault(f)) => Reading::Fault(f),
        Err(SensorError::Site(e)) => return Err(e),
    };
    Ok(convert(t_ms, &raw, calib, ph))
}

/// Observable features of a rock image. The fossil ground truth is never
/// part of a capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageCapture {
    pub rock_id: String,
    pub mean_color: Rgb,
    pub layered: bool,
    pub t_ms: u64,
}

pub fn capture_image(
    site: &SiteModel,
    rock_id: &str,
    t_ms: u64,
) -> Result<ImageCapture, SiteError> {
    let rock = site.rock_at(rock_id)?;
    Ok(ImageCapture {
        rock_id: rock.id.clone(),
        mean_color: rock.mean_color,
        layered: rock.layered,
        t_ms,
    })
}

/// Owns the polling cadence for one logical thread of control.
#[derive(Debug, Clone)]
pub struct SensorPoller {
    seed: u64,
    last_t_ms: Option<u64>,
}

impl SensorPoller {
    /// Warm the sensors up, consuming [`SENSOR_SETUP_MS`] of virtual time.
    pub fn start(seed: u64, clock: &mut crate::clock::VirtualClock) -> Self {
        clock.advance_by(SENSOR_SETUP_MS);
        Self {
            seed,
            last_t_ms: None,
        }
    }

    /// Sample at the current virtual time, then consume one poll cycle.
    pub fn poll(
        &mut self,
        site: &SiteModel,
        pose: &RoverPose,
        calib: &SensorCalibration,
        clock: &mut crate::clock::VirtualClock,
    ) -> Result<SensorFrame, SiteError> {
        if let Some(last) = self.last_t_ms {
            clock.advance_to(last + 1);
        }
        let frame = poll_frame(site, pose, clock.now_ms(), calib, self.seed)?;
        self.last_t_ms = Some(frame.t_ms);
        clock.advance_by(POLL_CYCLE_MS);
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::env::load_site;

    fn site() -> SiteModel {
        load_site(
            "[ambient]\nextent = 0 0 10 10\nco2_ppm = 950\nhumidity_pct = 100\n\
             [patch p]\nregion = 0 0 5 5\nlayer = 0 1 1 0.5 40 4.5\n\
             [rock shale]\nposition = 8 8\ncolor = 120 110 100\nlayered = true\n\
             alcohol = true\nformaldehyde_ppm = 2.5\nfossilized = true\n",
        )
        .unwrap()
    }

    #[test]
    fn color_map_endpoints_and_midpoint() {
        let c = SensorCalibration::shipped().color;
        assert_eq!(map_color_raw(c.f_min, &c), Rgb::new(0, 0, 0));
        assert_eq!(map_color_raw(c.f_max, &c), Rgb::new(255, 255, 255));
        let mid = [0, 1, 2].map(|i| (c.f_min[i] + c.f_max[i]) / 2.0);
        // 255 * 0.5 = 127.5 rounds away from zero.
        assert_eq!(map_color_raw(mid, &c), Rgb::new(128, 128, 128));
        assert_eq!(map_color_raw([0.0, 1e9, f64::NAN], &c), Rgb::new(0, 255, 0));
    }

    #[test]
    fn gas_ppm_identity_and_hand_algebra() {
        let mut g = SensorCalibration::shipped().co2;
        g.rl_ohms = 10_000.0;
        g.ro_ohms = 10_000.0;
        g.vc_volts = 5.0;
        // Rs = Ro when v_out = vc / 2 with rl = ro.
        assert!((gas_ppm(2.5, &g).unwrap() - g.curve_a).abs() < 1e-12);
        // v_out = 1: Rs = 10000 * 4 / 1 = 40000, ratio 4.
        let expected = 110.47 * 4f64.powf(-2.862);
        assert!((gas_ppm(1.0, &g).unwrap() - expected).abs() < 1e-12 * expected);
        assert_eq!(gas_ppm(5.0, &g), Err(SensorFault::SignalOutOfRange));
        assert_eq!(gas_ppm(0.0, &g), Err(SensorFault::SignalOutOfRange));
        assert_eq!(gas_ppm(-1.0, &g), Err(SensorFault::SignalOutOfRange));
    }

    #[test]
    fn alcohol_threshold_is_inclusive() {
        let a = SensorCalibration::shipped().alcohol;
        assert!(alcohol_detected(a.threshold, &a));
        assert!(!alcohol_detected(a.threshold - 1, &a));
        assert!(alcohol_detected(a.max_level, &a));
    }

    #[test]
    fn analog_maps() {
        let cal = AnalogCalibration {
            raw_min: 100.0,
            raw_max: 900.0,
            noise: 0.0,
        };
        assert_eq!(humidity_pct(100.0, &cal), 0.0);
        assert_eq!(humidity_pct(900.0, &cal), 100.0);
        assert_eq!(humidity_pct(500.0, &cal), 50.0);
        assert_eq!(soil_moisture_pct(300.0, &cal), 25.0);
        assert_eq!(soil_moisture_pct(-5.0, &cal), 0.0);
        assert_eq!(soil_moisture_pct(5000.0, &cal), 100.0);
    }

    #[test]
    fn ph_probe_readings() {
        let s = site();
        let mut noise = NoiseSource::new(7);
        let deployed = ProbeState::Deployed { depth_cm: 2.0 };
        assert_eq!(
            read_ph(&s, Point2::new(1.0, 1.0), deployed, 0.0, &mut noise),
            Ok(4.5)
        );
        assert_eq!(
            read_ph(&s, Point2::new(7.0, 1.0), deployed, 0.0, &mut noise),
            Ok(7.0)
        );
        for _ in 0..200 {
            let v = read_ph(&s, Point2::new(1.0, 1.0), deployed, 0.1, &mut noise).unwrap();
            assert!((4.4..=4.6).contains(&v), "{v}");
        }
        assert_eq!(
            read_ph(
                &s,
                Point2::new(1.0, 1.0),
                ProbeState::Retracted,
                0.0,
                &mut noise
            ),
            Err(SensorError::Fault(SensorFault::ProbeNotDeployed))
        );
    }

    #[test]
    fn noise_free_frame_reproduces_ground_truth() {
        let s = site();
        let cal = SensorCalibration::shipped();
        let pose = RoverPose {
            position: Point2::new(8.0, 8.0),
            rock: Some("shale".into()),
            probe: ProbeState::Retracted,
        };
        let f = poll_frame(&s, &pose, 5_000, &cal, 1).unwrap();
        let co2 = f.co2_ppm.value().unwrap();
        assert!((co2 - 950.0).abs() <= 1e-9 * 950.0, "{co2}");
        let hcho = f.formaldehyde_ppm.value().unwrap();
        assert!((hcho - 2.5).abs() <= 1e-9 * 2.5, "{hcho}");
        assert_eq!(f.humidity_pct, 100.0);
        assert_eq!(f.rgb, Rgb::new(120, 110, 100));
        assert!(f.alcohol_detected);
        assert_eq!(f.ph, Reading::Fault(SensorFault::ProbeNotDeployed));
        assert_eq!(f.t_ms, 5_000);
    }

    #[test]
    fn polls_are_deterministic() {
        let s = site();
        let cal = SensorCalibration::shipped().with_noise(0.05);
        let pose = RoverPose::at(Point2::new(1.0, 1.0));
        let a = poll_frame(&s, &pose, 10, &cal, 99).unwrap();
        let b = poll_frame(&s, &pose, 10, &cal, 99).unwrap();
        assert_eq!(a, b);
        let c = poll_frame(&s, &pose, 11, &cal, 99).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn poller_timestamps_strictly_increase() {
        let s = site();
        let cal = SensorCalibration::shipped();
        let mut clock = VirtualClock::new();
        let mut poller = SensorPoller::start(3, &mut clock);
        assert_eq!(clock.now_ms(), SENSOR_SETUP_MS);
        let pose = RoverPose::at(Point2::new(1.0, 1.0));
        let mut last = None;
        for _ in 0..10 {
            let f = poller.poll(&s, &pose, &cal, &mut clock).unwrap();
            if let Some(prev) = last {
                assert!(f.t_ms > prev);
            }
            last = Some(f.t_ms);
        }
    }

    #[test]
    fn capture_hides_fossil_truth() {
        let s = site();
        let cap = capture_image(&s, "shale", 42).unwrap();
        assert_eq!(
            cap,
            ImageCapture {
                rock_id: "shale".into(),
                mean_color: Rgb::new(120, 110, 100),
                layered: true,
                t_ms: 42,
            }
        );
        assert!(capture_image(&s, "nope", 0).is_err());
    }

    #[test]
    fn calibration_rejects_bad_values() {
        let text = crate::defaults::CALIBRATION.replace("curve_b = -2.862", "curve_b = 0");
        assert!(matches!(
            SensorCalibration::parse(&text),
            Err(CalibrationError::Invalid { .. })
        ));
        let text = crate::defaults::CALIBRATION
            .replace("f_max = 12000 12000 12000", "f_max = 2000 12000 12000");
        assert!(SensorCalibration::parse(&text).is_err());
        let text = crate::defaults::CALIBRATION.replace("rl_ohms = 47000", "rl_ohms = 0");
        assert!(SensorCalibration::parse(&text).is_err());
    }
}
