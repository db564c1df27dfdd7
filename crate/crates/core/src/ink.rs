//! Pen strokes, characters and datasets.
//!
//! The canonical on-disk format is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"label":"a","strokes":[[[0,0],[1,2]],[[3,4]]]}
//! ```
//!
//! Numbers are written with the shortest decimal representation that parses
//! back to the same `f64`, so `parse_canonical(serialize(d)) == d` and
//! `serialize(parse_canonical(s)) == s` for any canonically written `s`.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::{Domain, Stream};

/// Default side length of the box a character is scaled into.
pub const DEFAULT_BOX: f64 = 50.0;
/// Default side length of the square grid the box is centred in.
pub const DEFAULT_GRID: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A non-empty sequence of finite points in writing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Stroke(Vec<Point>);

impl Stroke {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty stroke".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point ({}, {})", p.x, p.y)));
        }
        Ok(Self(points))
    }

    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Maps every point; the caller guarantees the map keeps points finite.
    pub(crate) fn map_points(&self, f: impl Fn(Point) -> Point) -> Stroke {
        Stroke(self.0.iter().map(|&p| f(p)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Character {
    pub strokes: Vec<Stroke>,
    pub label: Option<String>,
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }
}

impl Character {
    pub fn new(strokes: Vec<Stroke>, label: Option<String>) -> Result<Self> {
        if strokes.is_empty() {
            return Err(Error::InvalidInput("character has no strokes".into()));
        }
        Ok(Self { strokes, label })
    }

    pub fn point_count(&self) -> usize {
        self.strokes.iter().map(Stroke::len).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &Point> {
        self.strokes.iter().flat_map(|s| s.points().iter())
    }

    pub fn bbox(&self) -> BBox {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.points() {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    pub(crate) fn map_points(&self, f: impl Fn(Point) -> Point + Copy) -> Character {
        Character { strokes: self.strokes.iter().map(|s| s.map_points(f)).collect(), label: self.label.clone() }
    }
}

/// One stroke with a time column: rows are `(t, x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimedPath {
    rows: Vec<[f64; 3]>,
}

impl TimedPath {
    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub items: Vec<Character>,
    /// Category inventory, in order of first appearance.
    pub categories: Vec<String>,
}

impl Dataset {
    /// Builds a dataset whose inventory lists labels in order of first
    /// appearance.
    pub fn from_items(items: Vec<Character>) -> Self {
        let mut categories: Vec<String> = Vec::new();
        for label in items.iter().filter_map(|c| c.label.as_ref()) {
            if !categories.iter().any(|c| c == label) {
                categories.push(label.clone());
            }
        }
        Self { items, categories }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    /// Splits every category into its first `head` items and the rest,
    /// preserving item order within both halves.
    pub fn split_per_category(&self, head: usize) -> (Dataset, Dataset) {
        let mut seen = vec![0usize; self.categories.len()];
        let (mut first, mut rest) = (Vec::new(), Vec::new());
        for item in &self.items {
            let slot = item.label.as_deref().and_then(|l| self.category_index(l));
            match slot {
                Some(k) if seen[k] < head => {
                    seen[k] += 1;
                    first.push(item.clone());
                }
                _ => rest.push(item.clone()),
            }
        }
        (
            Dataset { items: first, categories: self.categories.clone() },
            Dataset { items: rest, categories: self.categories.clone() },
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    label: Option<String>,
    strokes: Vec<Vec<[f64; 2]>>,
}

/// Parses the line-delimited canonical format. Blank lines are skipped.
pub fn parse_canonical<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let raw: Line = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let mut strokes = Vec::with_capacity(raw.strokes.len());
        for s in raw.strokes {
            let pts = s.into_iter().map(|[x, y]| Point::new(x, y)).collect();
            strokes.push(Stroke::new(pts).map_err(|e| err(e.to_string()))?);
        }
        items.push(Character::new(strokes, raw.label).map_err(|e| err(e.to_string()))?);
    }
    Ok(Dataset::from_items(items))
}

pub fn parse_canonical_str(text: &str) -> Result<Dataset> {
    parse_canonical(text.as_bytes())
}

fn push_number(out: &mut String, v: f64) {
    // `Display` for f64 is the shortest representation that round-trips and
    // never uses exponent notation, so it is valid JSON as is.
    if v == 0.0 {
        out.push('0');
    } else {
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
}

pub fn serialize_character(c: &Character, out: &mut String) {
    out.push_str("{\"label\":");
    match &c.label {
        Some(l) => out.push_str(&serde_json::to_string(l).expect("strings always serialize")),
        None => out.push_str("null"),
    }
    out.push_str(",\"strokes\":[");
    for (si, s) in c.strokes.iter().enumerate() {
        if si > 0 {
            out.push(',');
        }
        out.push('[');
        for (pi, p) in s.points().iter().enumerate() {
            if pi > 0 {
                out.push(',');
            }
            out.push('[');
            push_number(out, p.x);
            out.push(',');
            push_number(out, p.y);
            out.push(']');
        }
        out.push(']');
    }
    out.push_str("]}\n");
}

pub fn serialize(d: &Dataset) -> String {
    let mut out = String::new();
    for c in &d.items {
        serialize_character(c, &mut out);
    }
    out
}

/// Scales `c` isotropically so the longer side of its bounding box equals
/// `box_size`, and centres it in a `grid`×`grid` canvas whose centre is
/// `((grid-1)/2, (grid-1)/2)`, i.e. pixel centres sit on integer coordinates.
/// A zero-extent character is moved to the centre without scaling.
pub fn normalize(c: &Character, box_size: f64, grid: usize) -> Result<Character> {
    if box_size.is_nan() || box_size <= 0.0 || (grid as f64) < box_size {
        return Err(Error::config(format!("normalize needs 0 < box ({box_size}) <= grid ({grid})")));
    }
    let bb = c.bbox();
    let to = (grid as f64 - 1.0) / 2.0;
    let longer = bb.width().max(bb.height());
    let scale = if longer > 0.0 { box_size / longer } else { 1.0 };
    // anchor on the minimum corner so the box edges land exactly on `to ± box/2`
    let x0 = to - (bb.width() * scale).min(box_size) / 2.0;
    let y0 = to - (bb.height() * scale).min(box_size) / 2.0;
    Ok(c.map_points(|p| Point::new(x0 + (p.x - bb.min.x) * scale, y0 + (p.y - bb.min.y) * scale)))
}

/// Inserts linearly interpolated points so consecutive points are at most
/// `max_step` apart. Every input point is kept exactly.
pub fn resample(s: &Stroke, max_step: f64) -> Stroke {
    assert!(max_step > 0.0, "resample step must be positive");
    let pts = s.points();
    let mut out = Vec::with_capacity(pts.len());
    out.push(pts[0]);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = (a.distance(&b) / max_step).ceil().max(1.0) as usize;
        for j in 1..pieces {
            let f = j as f64 / pieces as f64;
            out.push(Point::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f));
        }
        out.push(b);
    }
    Stroke(out)
}

pub fn resample_character(c: &Character, max_step: f64) -> Character {
    Character { strokes: c.strokes.iter().map(|s| resample(s, max_step)).collect(), label: c.label.clone() }
}

/// Attaches a time column that counts points over the whole character in
/// writing order, scaled to `[0, 1]`.
pub fn add_time(c: &Character) -> Vec<TimedPath> {
    let total = c.point_count();
    let denom = if total > 1 { (total - 1) as f64 } else { 1.0 };
    let mut index = 0usize;
    c.strokes
        .iter()
        .map(|s| TimedPath {
            rows: s
                .points()
                .iter()
                .map(|p| {
                    let t = index as f64 / denom;
                    index += 1;
                    [t, p.x, p.y]
                })
                .collect(),
        })
        .collect()
}

const CANVAS: f64 = 50.0;

fn template(category: usize, seed: u64) -> Vec<Vec<Point>> {
    match category {
        0 => vec![vec![Point::new(5.0, 25.0), Point::new(45.0, 25.0)]],
        1 => vec![vec![Point::new(25.0, 5.0), Point::new(25.0, 45.0)]],
        _ => {
            let mut rng = Stream::new(seed, Domain::Template, &[category as u64]);
            let n_strokes = rng.int_in(2, 5);
            (0..n_strokes)
                .map(|_| {
                    let n_points = rng.int_in(3, 8);
                    (0..n_points).map(|_| Point::new(rng.unit() * CANVAS, rng.unit() * CANVAS)).collect()
                })
                .collect()
        }
    }
}

pub fn category_name(category: usize) -> String {
    match category {
        0 => "hbar".into(),
        1 => "vbar".into(),
        k => format!("c{k:03}"),
    }
}

/// Deterministic synthetic dataset of jittered polyline templates.
///
/// Categories 0 and 1 are the reserved "hbar" and "vbar" bars; the others are
/// random templates of 2-5 strokes with 3-8 points on a 50×50 canvas. Items
/// are ordered category-major.
pub fn synth_dataset(n_categories: usize, per_category: usize, jitter: f64, seed: u64) -> Result<Dataset> {
    if n_categories < 2 || per_category < 1 {
        return Err(Error::config("synth_dataset needs >= 2 categories and >= 1 item per category"));
    }
    if !jitter.is_finite() || jitter < 0.0 {
        return Err(Error::config("jitter must be a finite non-negative number"));
    }
    let mut items = Vec::with_capacity(n_categories * per_category);
    for cat in 0..n_categories {
        let tpl = template(cat, seed);
        let name = category_name(cat);
        for inst in 0..per_category {
            let mut rng = Stream::new(seed, Domain::Instance, &[cat as u64, inst as u64]);
            let strokes = tpl
                .iter()
                .map(|s| {
                    Stroke(
                        s.iter()
                            .map(|p| {
                                let dx = jitter * rng.normal();
                                let dy = jitter * rng.normal();
                                Point::new(p.x + dx, p.y + dy)
                            })
                            .collect(),
                    )
                })
                .collect();
            items.push(Character { strokes, label: Some(name.clone()) });
        }
    }
    Ok(Dataset { items, categories: (0..n_categories).map(category_name).collect() })
}
