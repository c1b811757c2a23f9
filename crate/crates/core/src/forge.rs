//! Synthetic data: ten procedural glyph classes on a 16×16 grid, five
//! parametric corruption operators at five severities, exemplar banks, and
//! interval-structured streams.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::LabeledSet;
use crate::seed::{self, Purpose};

pub const SIDE: usize = 16;
pub const PIXELS: usize = SIDE * SIDE;
pub const NUM_CLASSES: usize = 10;
pub const MAX_SEVERITY: u8 = 5;
pub const MAX_SHIFT: i32 = 2;
pub const PIXEL_NOISE: f64 = 0.05;

const GLYPH_ROWS: usize = 12;
#[cfg(test)]
const GLYPH_COLS: usize = 10;
const ROW_OFFSET: usize = 2;
const COL_OFFSET: usize = 3;

#[rustfmt::skip]
const GLYPHS: [[&str; GLYPH_ROWS]; NUM_CLASSES] = [
    ["..######..", ".########.", "##......##", "##......##", "##......##", "##......##",
     "##......##", "##......##", "##......##", "##......##", ".########.", "..######.."],
    ["....##....", "...###....", "..####....", "....##....", "....##....", "....##....",
     "....##....", "....##....", "....##....", "....##....", "..######..", "..######.."],
    [".########.", "##########", "........##", "........##", ".......##.", ".....###..",
     "...###....", "..##......", ".##.......", "##........", "##########", "##########"],
    ["#########.", "##########", "........##", "........##", "........##", "..#######.",
     "..#######.", "........##", "........##", "........##", "##########", "#########."],
    ["##......##", "##......##", "##......##", "##......##", "##......##", "##########",
     "##########", "........##", "........##", "........##", "........##", "........##"],
    ["##########", "##########", "##........", "##........", "##........", "#########.",
     "##########", "........##", "........##", "........##", "##########", "#########."],
    [".#########", "##########", "##........", "##........", "##........", "#########.",
     "##########", "##......##", "##......##", "##......##", "##########", ".########."],
    ["##########", "##########", "........##", ".......##.", "......##..", ".....##...",
     "....##....", "....##....", "...##.....", "...##.....", "...##.....", "...##....."],
    [".########.", "##########", "##......##", "##......##", "##......##", ".########.",
     ".########.", "##......##", "##......##", "##......##", "##########", ".########."],
    [".########.", "##########", "##......##", "##......##", "##......##", "##########",
     ".#########", "........##", "........##", "........##", "##########", "#########."],
];

/// A 16×16 grayscale image, row-major, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Vec<f64>);

impl Image {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != PIXELS {
            return Err(Error::ShapeMismatch(format!("image needs {PIXELS} pixels, got {}", pixels.len())));
        }
        Ok(Self(pixels))
    }

    pub fn filled(v: f64) -> Self {
        Self(vec![v; PIXELS])
    }

    pub fn pixels(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[row * SIDE + col]
    }

    fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self(self.0.iter().enumerate().map(|(i, &x)| f(i, x).clamp(0.0, 1.0)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    None,
    Fog,
    Snow,
    Frost,
    Contrast,
    Brightness,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 6] = [
        ShiftKind::None,
        ShiftKind::Fog,
        ShiftKind::Snow,
        ShiftKind::Frost,
        ShiftKind::Contrast,
        ShiftKind::Brightness,
    ];
    pub const CORRUPTIONS: [ShiftKind; 5] =
        [ShiftKind::Fog, ShiftKind::Snow, ShiftKind::Frost, ShiftKind::Contrast, ShiftKind::Brightness];

    pub fn name(self) -> &'static str {
        match self {
            ShiftKind::None => "none",
            ShiftKind::Fog => "fog",
            ShiftKind::Snow => "snow",
            ShiftKind::Frost => "frost",
            ShiftKind::Contrast => "contrast",
            ShiftKind::Brightness => "brightness",
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShiftKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ShiftKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown shift kind {s:?}"))
    }
}

/// A corruption kind at a severity; `severity == 0` iff `kind == None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(ShiftKind, u8)", into = "(ShiftKind, u8)")]
pub struct ShiftSpec {
    kind: ShiftKind,
    severity: u8,
}

impl ShiftSpec {
    pub const NONE: ShiftSpec = ShiftSpec { kind: ShiftKind::None, severity: 0 };

    pub fn new(kind: ShiftKind, severity: u8) -> Result<Self> {
        let ok = match kind {
            ShiftKind::None => severity == 0,
            _ => (1..=MAX_SEVERITY).contains(&severity),
        };
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid shift ({kind}, {severity})")));
        }
        Ok(Self { kind, severity })
    }

    pub fn kind(self) -> ShiftKind {
        self.kind
    }

    pub fn severity(self) -> u8 {
        self.severity
    }

    pub fn is_shifted(self) -> bool {
        self.kind != ShiftKind::None
    }
}

impl TryFrom<(ShiftKind, u8)> for ShiftSpec {
    type Error = Error;

    fn try_from((kind, severity): (ShiftKind, u8)) -> Result<Self> {
        ShiftSpec::new(kind, severity)
    }
}

impl From<ShiftSpec> for (ShiftKind, u8) {
    fn from(s: ShiftSpec) -> Self {
        (s.kind, s.severity)
    }
}

impl fmt::Display for ShiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-s{}", self.kind, self.severity)
    }
}

/// Placement and noise applied when rendering a glyph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub dx: i32,
    pub dy: i32,
    pub noise_sigma: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter { dx: 0, dy: 0, noise_sigma: 0.0 };
}

/// The noiseless, centred stroke pattern of `class`.
pub fn template(class: usize) -> Image {
    shifted_template(class, 0, 0)
}

pub(crate) fn shifted_template(class: usize, dx: i32, dy: i32) -> Image {
    assert!(class < NUM_CLASSES, "class {class} out of range");
    let mut px = vec![0.0; PIXELS];
    for (r, line) in GLYPHS[class].iter().enumerate() {
        for (c, ch) in line.bytes().enumerate() {
            if ch == b'#' {
                let row = (ROW_OFFSET + r) as i32 + dy;
                let col = (COL_OFFSET + c) as i32 + dx;
                if (0..SIDE as i32).contains(&row) && (0..SIDE as i32).contains(&col) {
                    px[row as usize * SIDE + col as usize] = 1.0;
                }
            }
        }
    }
    Image(px)
}

pub fn render_glyph_with(class: usize, jitter: Jitter, noise_seed: u64) -> Image {
    let base = shifted_template(class, jitter.dx, jitter.dy);
    if jitter.noise_sigma == 0.0 {
        return base;
    }
    let mut rng = seed::rng(noise_seed);
    let noise = Normal::new(0.0, jitter.noise_sigma).expect("finite sigma");
    base.map(|_, x| x + noise.sample(&mut rng))
}

/// Template of `class` translated by a seeded offset in `[-2, 2]²` with
/// Gaussian pixel noise of standard deviation 0.05.
pub fn render_glyph(class: usize, jitter_seed: u64) -> Image {
    let mut rng = seed::rng(jitter_seed);
    let jitter = Jitter {
        dx: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
        dy: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
        noise_sigma: PIXEL_NOISE,
    };
    render_glyph_with(class, jitter, rng.random())
}

/// Balanced clean dataset, classes interleaved `0, 1, …, 9, 0, 1, …`.
pub fn gen_base_dataset(seed: u64, n_per_class: usize) -> LabeledSet<f64> {
    let n = n_per_class * NUM_CLASSES;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % NUM_CLASSES;
        rows.push(render_glyph(class, seed::derive(seed, i as u64, Purpose::Dataset)).0);
        labels.push(class);
    }
    LabeledSet { inputs: Matrix::from_rows(&rows), labels }
}

/// Coefficients of the corruption operators, per unit of severity.
///
/// Fog, snow and frost share one shape: with `a = rate · severity`,
///
/// ```text
/// x' = clamp((1 − a·m) · x + a · (level + amp · L · P))
/// ```
///
/// where `P` is the kind's fixed signature pattern in `[0, 1]` (smooth haze
/// for fog, falling streaks for snow, edge-grown crystals for frost), `L` is a
/// per-image intensity drawn uniformly from `[0, 1)`, and `m` is 1 except for
/// frost, where it is the signature itself. The per-image intensity keeps the
/// shift from being a fixed affine map of the pixels. Contrast and
/// brightness are plain global maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionParams {
    pub fog_rate: f64,
    pub fog_level: f64,
    pub fog_amp: f64,
    pub snow_rate: f64,
    pub snow_level: f64,
    pub snow_amp: f64,
    pub frost_rate: f64,
    pub frost_level: f64,
    pub frost_amp: f64,
    pub contrast_rate: f64,
    pub brightness_rate: f64,
    /// Seed of the fixed signature patterns.
    pub pattern_seed: u64,
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            fog_rate: 0.12,
            fog_level: 0.4,
            fog_amp: 1.6,
            snow_rate: 0.16,
            snow_level: 0.4,
            snow_amp: 1.0,
            frost_rate: 0.12,
            frost_level: 0.4,
            frost_amp: 1.6,
            contrast_rate: 0.15,
            brightness_rate: 0.10,
            pattern_seed: 0x5EED_F0C5,
        }
    }
}

/// Bilinear upsampling of a random `grid × grid` lattice, rescaled to
/// `[0, 1]`.
fn smooth_field(rng: &mut seed::Rng, grid: usize) -> Vec<f64> {
    let lattice: Vec<f64> = (0..grid * grid).map(|_| rng.random::<f64>()).collect();
    let last = (SIDE - 1) as f64;
    let span = (grid - 1) as f64;
    let mut out = vec![0.0; PIXELS];
    for r in 0..SIDE {
        for c in 0..SIDE {
            let fy = r as f64 / last * span;
            let fx = c as f64 / last * span;
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(grid - 1), (x0 + 1).min(grid - 1));
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            out[r * SIDE + c] = lattice[y0 * grid + x0] * (1.0 - ty) * (1.0 - tx)
                + lattice[y0 * grid + x1] * (1.0 - ty) * tx
                + lattice[y1 * grid + x0] * ty * (1.0 - tx)
                + lattice[y1 * grid + x1] * ty * tx;
        }
    }
    let (lo, hi) = out.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi > lo {
        out.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    out
}

/// The fixed signature pattern of a structured corruption kind.
pub fn signature(kind: ShiftKind, params: &CorruptionParams) -> Option<Vec<f64>> {
    let mut rng = seed::rng(seed::derive(params.pattern_seed, kind as u64, Purpose::ShiftMask));
    match kind {
        ShiftKind::Fog => Some(smooth_field(&mut rng, 4)),
        ShiftKind::Snow => Some(streaks(&mut rng)),
        ShiftKind::Frost => {
            let texture = smooth_field(&mut rng, 6);
            Some(
                (0..PIXELS)
                    .map(|i| {
                        let (r, c) = ((i / SIDE) as f64, (i % SIDE) as f64);
                        let edge = r.min(c).min(last_index() - r).min(last_index() - c);
                        let grow = (1.0 - edge / 6.0).max(0.0);
                        (0.6 * grow + 0.4 * texture[i]).clamp(0.0, 1.0)
                    })
                    .collect(),
            )
        }
        _ => None,
    }
}

/// Falling-snow streaks: short diagonal segments at fixed positions.
fn streaks(rng: &mut seed::Rng) -> Vec<f64> {
    let mut out = vec![0.0; PIXELS];
    for _ in 0..10 {
        let len = rng.random_range(4..8);
        let (mut r, mut c) = (rng.random_range(0..SIDE as i32), rng.random_range(0..SIDE as i32));
        let dc = if rng.random::<bool>() { 1 } else { -1 };
        for _ in 0..len {
            if (0..SIDE as i32).contains(&r) && (0..SIDE as i32).contains(&c) {
                out[r as usize * SIDE + c as usize] = 1.0;
            }
            r += 1;
            c += dc;
        }
    }
    out
}

fn last_index() -> f64 {
    (SIDE - 1) as f64
}

/// Applies `shift` to `image` with the default coefficients. Pure in
/// `(image, shift, noise_seed)`.
pub fn corrupt(image: &Image, shift: ShiftSpec, noise_seed: u64) -> Image {
    corrupt_with(image, shift, noise_seed, &CorruptionParams::default())
}

pub fn corrupt_with(image: &Image, shift: ShiftSpec, noise_seed: u64, p: &CorruptionParams) -> Image {
    let s = shift.severity() as f64;
    let mut rng = seed::rng(noise_seed);
    let structured = |rate: f64, level: f64, amp: f64, multiplicative: bool, rng: &mut seed::Rng| {
        let pattern = signature(shift.kind(), p).expect("structured kind");
        let a = rate * s;
        let intensity: f64 = rng.random();
        image.map(|i, x| {
            let m = if multiplicative { pattern[i] } else { 1.0 };
            (1.0 - a * m) * x + a * (level + amp * intensity * pattern[i])
        })
    };
    match shift.kind() {
        ShiftKind::None => image.clone(),
        ShiftKind::Fog => structured(p.fog_rate, p.fog_level, p.fog_amp, false, &mut rng),
        ShiftKind::Snow => structured(p.snow_rate, p.snow_level, p.snow_amp, false, &mut rng),
        ShiftKind::Frost => structured(p.frost_rate, p.frost_level, p.frost_amp, true, &mut rng),
        ShiftKind::Brightness => image.map(|_, x| x + p.brightness_rate * s),
        ShiftKind::Contrast => image.map(|_, x| (x - 0.5) * (1.0 - p.contrast_rate * s) + 0.5),
    }
}

/// Reference corrupted images for every `(kind, severity ≥ 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarBank {
    groups: BTreeMap<ShiftSpec, Vec<Image>>,
}

pub const DEFAULT_EXEMPLARS: usize = 20;

impl ExemplarBank {
    pub fn build(seed: u64, per_group: usize, params: &CorruptionParams) -> Self {
        let mut groups = BTreeMap::new();
        let mut counter = 0u64;
        for kind in ShiftKind::CORRUPTIONS {
            for severity in 1..=MAX_SEVERITY {
                let spec = ShiftSpec::new(kind, severity).expect("valid");
                let images = (0..per_group)
                    .map(|_| {
                        let s = seed::derive(seed, counter, Purpose::Exemplars);
                        counter += 1;
                        let class = (s % NUM_CLASSES as u64) as usize;
                        let clean = render_glyph(class, seed::derive(s, 0, Purpose::ItemJitter));
                        corrupt_with(&clean, spec, seed::derive(s, 0, Purpose::ItemCorruption), params)
                    })
                    .collect();
                groups.insert(spec, images);
            }
        }
        Self { groups }
    }

    pub fn groups(&self) -> impl Iterator<Item = (ShiftSpec, &[Image])> {
        self.groups.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Default bank: 20 exemplars per group, default corruption parameters.
pub fn build_exemplar_bank(seed: u64) -> ExemplarBank {
    ExemplarBank::build(seed, DEFAULT_EXEMPLARS, &CorruptionParams::default())
}

/// Ground truth attached to a stream item. Only the expert and the
/// evaluator are supposed to read it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub true_label: usize,
    pub shift: ShiftSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamItem {
    pub id: u64,
    /// 1-based.
    pub interval: u32,
    pub image: Image,
    provenance: Provenance,
}

impl StreamItem {
    pub fn new(id: u64, interval: u32, image: Image, provenance: Provenance) -> Self {
        Self { id, interval, image, provenance }
    }

    /// Hidden ground truth. Pipeline stages other than the expert must not
    /// call this.
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// What [`gen_stream`] needs from a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamPlan {
    pub items_per_interval: usize,
    /// One entry per interval.
    pub schedule: Vec<ShiftSpec>,
    /// Chance that an item in a shifted interval carries the shift.
    pub shift_probability: f64,
    pub corruption: CorruptionParams,
}

/// Items with sequential ids from 0, uniform random classes, and each
/// interval's shift applied per its schedule entry.
pub fn gen_stream(plan: &StreamPlan, seed: u64) -> Vec<StreamItem> {
    let mut items = Vec::with_capacity(plan.schedule.len() * plan.items_per_interval);
    let mut id = 0u64;
    for (i, &shift) in plan.schedule.iter().enumerate() {
        for _ in 0..plan.items_per_interval {
            let mut rng = seed::rng(seed::derive(seed, id, Purpose::ItemClass));
            let class = rng.random_range(0..NUM_CLASSES);
            let applied = if shift.is_shifted() && rng.random::<f64>() < plan.shift_probability {
                shift
            } else {
                ShiftSpec::NONE
            };
            let clean = render_glyph(class, seed::derive(seed, id, Purpose::ItemJitter));
            let image = corrupt_with(
                &clean,
                applied,
                seed::derive(seed, id, Purpose::ItemCorruption),
                &plan.corruption,
            );
            items.push(StreamItem {
                id,
                interval: i as u32 + 1,
                image,
                provenance: Provenance { true_label: class, shift: applied },
            });
            id += 1;
        }
    }
    items
}

/// Writes one comma-separated row per item:
/// `id,interval,kind,severity,true_label,p0,…,p255`, pixels row-major in
/// shortest round-trip decimal form.
pub fn write_stream_dump<W: Write>(items: &[StreamItem], mut out: W) -> Result<()> {
    write!(out, "id,interval,kind,severity,true_label")?;
    for p in 0..PIXELS {
        write!(out, ",p{p}")?;
    }
    writeln!(out)?;
    for item in items {
        let pv = item.provenance;
        write!(out, "{},{},{},{},{}", item.id, item.interval, pv.shift.kind(), pv.shift.severity(), pv.true_label)?;
        for v in item.image.pixels() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Labeled set from stream items, reading their hidden labels.
pub fn labeled_from_items(items: &[StreamItem]) -> LabeledSet<f64> {
    let rows: Vec<&[f64]> = items.iter().map(|it| it.image.pixels()).collect();
    LabeledSet {
        inputs: Matrix::from_rows(&rows),
        labels: items.iter().map(|it| it.provenance.true_label).collect(),
    }
}

/// The translated template closest to `image` by Pearson correlation over
/// all classes and offsets in `[-2, 2]²`; ties go to the first candidate in
/// (class, dy, dx) order.
pub fn nearest_template(image: &Image) -> (usize, Image) {
    let mut best: Option<(f64, usize, Image)> = None;
    for class in 0..NUM_CLASSES {
        for dy in -MAX_SHIFT..=MAX_SHIFT {
            for dx in -MAX_SHIFT..=MAX_SHIFT {
                let t = shifted_template(class, dx, dy);
                let score = correlation(image.pixels(), t.pixels());
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, class, t));
                }
            }
        }
    }
    let (_, class, t) = best.expect("at least one template");
    (class, t)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        num / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyph_art_is_well_formed() {
        for g in GLYPHS {
            assert!(g.iter().all(|r| r.len() == GLYPH_COLS));
        }
        for a in 0..NUM_CLASSES {
            for b in a + 1..NUM_CLASSES {
                assert_ne!(template(a), template(b));
            }
        }
    }

    #[test]
    fn zero_jitter_render_is_the_template() {
        for c in 0..NUM_CLASSES {
            assert_eq!(render_glyph_with(c, Jitter::NONE, 99), template(c));
        }
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let a = render_glyph(4, 1234);
        assert_eq!(a, render_glyph(4, 1234));
        assert_ne!(a, render_glyph(4, 1235));
        assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn shift_spec_validation() {
        assert!(ShiftSpec::new(ShiftKind::None, 0).is_ok());
        assert!(ShiftSpec::new(ShiftKind::None, 1).is_err());
        assert!(ShiftSpec::new(ShiftKind::Fog, 0).is_err());
        assert!(ShiftSpec::new(ShiftKind::Fog, 6).is_err());
        assert_eq!(ShiftSpec::new(ShiftKind::Snow, 5).unwrap().to_string(), "snow-s5");
    }

    #[test]
    fn identity_and_brightness_formulas() {
        let img = render_glyph(3, 5);
        assert_eq!(corrupt(&img, ShiftSpec::NONE, 1), img);
        let black = Image::filled(0.0);
        let bright = corrupt(&black, ShiftSpec::new(ShiftKind::Brightness, 5).unwrap(), 1);
        assert!(bright.pixels().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn corruption_is_pure_and_clamped() {
        let img = render_glyph(8, 77);
        for kind in ShiftKind::CORRUPTIONS {
            for sev in 1..=MAX_SEVERITY {
                let s = ShiftSpec::new(kind, sev).unwrap();
                let a = corrupt(&img, s, 42);
                assert_eq!(a, corrupt(&img, s, 42));
                assert!(a.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
                assert_ne!(a, img, "{s} changed nothing");
            }
        }
    }

    #[test]
    fn base_dataset_is_balanced() {
        let d = gen_base_dataset(5, 500);
        assert_eq!(d.len(), 5000);
        for c in 0..NUM_CLASSES {
            assert_eq!(d.labels.iter().filter(|&&l| l == c).count(), 500);
        }
        assert_eq!(d, gen_base_dataset(5, 500));
    }

    #[test]
    fn exemplar_bank_covers_every_group() {
        let bank = build_exemplar_bank(3);
        assert_eq!(bank.len(), 25);
        assert!(bank.groups().all(|(s, imgs)| s.severity() >= 1 && imgs.len() == 20));
        assert_eq!(bank, build_exemplar_bank(3));
    }

    #[test]
    fn nearest_template_recovers_clean_glyphs() {
        for c in 0..NUM_CLASSES {
            let (found, t) = nearest_template(&shifted_template(c, 1, -2));
            assert_eq!(found, c);
            assert_eq!(t, shifted_template(c, 1, -2));
        }
    }
}
