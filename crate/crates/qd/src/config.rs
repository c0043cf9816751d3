//! Experiment configs: JSON in, validated [`ExperimentConfig`] out.
//!
//! Parsing walks the JSON tree by hand so that every problem is reported at
//! once, each with its field path, and unknown keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use absorb_core::moving::{
    check_run_admissibility, DomainTrajectory, KappaRule, Knot, MovingParticle, MovingPotential,
};
use absorb_core::{
    gaussian_packet, make_grid, Face, FaceId, Interval1D, ParticleLabel, PhysicalConstants, PotentialSpec, Side,
    SpatialGrid, WaveFunctionNP, C64,
};
use serde_json::{Map, Value};

use crate::error::QdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    Evolve,
    Detect,
    Moving,
    Multi,
    Bohm,
    PovmCheck,
    Sweep,
}

impl Kind {
    pub const ALL: [Kind; 7] =
        [Kind::Evolve, Kind::Detect, Kind::Moving, Kind::Multi, Kind::Bohm, Kind::PovmCheck, Kind::Sweep];

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::Detect => "detect",
            Kind::Moving => "moving",
            Kind::Multi => "multi",
            Kind::Bohm => "bohm",
            Kind::PovmCheck => "povm-check",
            Kind::Sweep => "sweep",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Kind::Multi | Kind::Bohm)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown experiment kind '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialCfg {
    Samples(Vec<f64>),
    Harmonic { center: f64, omega: f64 },
    Barrier { left: f64, right: f64, height: f64 },
}

impl PotentialCfg {
    fn eval(&self, x: f64, mass: f64) -> f64 {
        match *self {
            PotentialCfg::Samples(_) => unreachable!("sampled potentials are not evaluated pointwise"),
            PotentialCfg::Harmonic { center, omega } => 0.5 * mass * omega * omega * (x - center).powi(2),
            PotentialCfg::Barrier { left, right, height } => {
                if x >= left && x <= right {
                    height
                } else {
                    0.0
                }
            }
        }
    }

    /// Samples on `grid`.
    pub fn sample(&self, grid: &SpatialGrid, mass: f64) -> Vec<f64> {
        match self {
            PotentialCfg::Samples(v) => v.clone(),
            _ => grid.points().into_iter().map(|x| self.eval(x, mass)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCfg {
    pub label: ParticleLabel,
    pub interval: Interval1D,
    pub n_points: usize,
    pub potential: Option<PotentialCfg>,
    pub knots: Option<Vec<Knot>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceCfg {
    pub particle: ParticleLabel,
    pub side: Side,
    pub kappa: f64,
    /// Moving runs only: `kappa` is the boundary coefficient itself rather
    /// than a detector sensitivity.
    pub prescribed: bool,
}

/// `strength·exp(−(x_a − x_b)²/(2·range²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCfg {
    pub a: ParticleLabel,
    pub b: ParticleLabel,
    pub strength: f64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketCfg {
    pub particle: ParticleLabel,
    pub center: f64,
    pub width: f64,
    pub k0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    None,
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeCfg {
    pub t_max: f64,
    pub dt: f64,
    pub steps_per_bin: usize,
    /// Keep a snapshot every this many steps (evolve); 0 keeps the ends.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerCfg {
    pub n: usize,
    pub seed: u64,
    pub dt_traj: Option<f64>,
    /// Number of Bohmian trajectories written out in full.
    pub dump_trajectories: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCfg {
    pub kind: Kind,
    /// Index into `faces` of the swept face.
    pub face: usize,
    pub kappas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub constants: PhysicalConstants,
    pub particles: Vec<ParticleCfg>,
    pub faces: Vec<FaceCfg>,
    pub pairs: Vec<PairCfg>,
    pub packets: Vec<PacketCfg>,
    pub symmetry: Symmetry,
    pub time: TimeCfg,
    pub sampler: Option<SamplerCfg>,
    pub sweep: Option<SweepCfg>,
    pub output_dir: Option<String>,
    /// The parsed JSON document, kept for hashing and sweep expansion.
    pub raw: Value,
}

/// Collected validation errors.
#[derive(Debug, Default)]
struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, path: &str, msg: impl fmt::Display) {
        self.0.push(format!("{path}: {msg}"));
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// A JSON object being read; keys never read are reported as unknown.
struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: String,
    used: BTreeSet<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &str, errs: &mut Errors) -> Option<Self> {
        match v.as_object() {
            Some(map) => Some(Self { map, path: path.to_string(), used: BTreeSet::new() }),
            None => {
                errs.push(path_or_root(path), "expected an object");
                None
            }
        }
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn at(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn f64_or(&mut self, key: &'static str, default: Option<f64>, errs: &mut Errors) -> Option<f64> {
        match self.get(key) {
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    errs.push(&self.at(key), "expected a finite number");
                    None
                }
            },
            None => {
                if default.is_none() {
                    errs.push(&self.at(key), "missing");
                }
                default
            }
        }
    }

    fn f64(&mut self, key: &'static str, errs: &mut Errors) -> Option<f64> {
        self.f64_or(key, None, errs)
    }

    fn u64_opt(&mut self, key: &'static str, errs: &mut Errors) -> Option<u64> {
        let v = self.get(key)?;
        let r = v.as_u64();
        if r.is_none() {
            errs.push(&self.at(key), "expected a nonnegative integer");
        }
        r
    }

    fn usize_or(&mut self, key: &'static str, default: Option<usize>, errs: &mut Errors) -> Option<usize> {
        if self.map.get(key).is_none_or(|v| v.is_null()) {
            self.used.insert(key);
            if default.is_none() {
                errs.push(&self.at(key), "missing");
            }
            return default;
        }
        self.u64_opt(key, errs).map(|x| x as usize)
    }

    fn str(&mut self, key: &'static str, errs: &mut Errors) -> Option<&'a str> {
        match self.get(key) {
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                errs.push(&self.at(key), "expected a string");
                None
            }
            None => {
                errs.push(&self.at(key), "missing");
                None
            }
        }
    }

    fn bool_or(&mut self, key: &'static str, default: bool, errs: &mut Errors) -> bool {
        match self.get(key) {
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                errs.push(&self.at(key), "expected true or false");
                default
            }
            None => default,
        }
    }

    fn array(&mut self, key: &'static str, required: bool, errs: &mut Errors) -> Option<&'a Vec<Value>> {
        match self.get(key) {
            Some(Value::Array(a)) => Some(a),
            Some(_) => {
                errs.push(&self.at(key), "expected an array");
                None
            }
            None => {
                if required {
                    errs.push(&self.at(key), "missing");
                }
                None
            }
        }
    }

    fn finish(self, errs: &mut Errors) {
        for k in self.map.keys() {
            if !self.used.contains(k.as_str()) {
                errs.push(&join(&self.path, k), "unknown key");
            }
        }
    }
}

fn path_or_root(path: &str) -> &str {
    if path.is_empty() {
        "<root>"
    } else {
        path
    }
}

fn number_list(v: &Value, path: &str, errs: &mut Errors) -> Option<Vec<f64>> {
    let Some(a) = v.as_array() else {
        errs.push(path, "expected an array of numbers");
        return None;
    };
    let mut out = Vec::with_capacity(a.len());
    for (i, x) in a.iter().enumerate() {
        match x.as_f64() {
            Some(x) if x.is_finite() => out.push(x),
            _ => errs.push(&format!("{path}[{i}]"), "expected a finite number"),
        }
    }
    (out.len() == a.len()).then_some(out)
}

fn parse_side(s: &str, path: &str, errs: &mut Errors) -> Option<Side> {
    match s {
        "left" => Some(Side::Left),
        "right" => Some(Side::Right),
        _ => {
            errs.push(path, format!("side must be 'left' or 'right', got '{s}'"));
            None
        }
    }
}

fn parse_potential(v: &Value, path: &str, errs: &mut Errors) -> Option<PotentialCfg> {
    if v.is_array() {
        return number_list(v, path, errs).map(PotentialCfg::Samples);
    }
    let mut o = Obj::new(v, path, errs)?;
    let kind = o.str("kind", errs);
    let out = match kind {
        Some("samples") => {
            let vals = o.get("values").and_then(|x| number_list(x, &o.at("values"), errs));
            if o.map.get("values").is_none() {
                errs.push(&o.at("values"), "missing");
            }
            vals.map(PotentialCfg::Samples)
        }
        Some("harmonic") => {
            let c = o.f64("center", errs);
            let w = o.f64("omega", errs);
            Some(PotentialCfg::Harmonic { center: c?, omega: w? })
        }
        Some("barrier") => {
            let l = o.f64("left", errs);
            let r = o.f64("right", errs);
            let h = o.f64("height", errs);
            Some(PotentialCfg::Barrier { left: l?, right: r?, height: h? })
        }
        Some(other) => {
            errs.push(&o.at("kind"), format!("unknown potential kind '{other}' (samples, harmonic, barrier)"));
            None
        }
        None => None,
    };
    o.finish(errs);
    out
}

fn parse_knots(v: &Value, path: &str, errs: &mut Errors) -> Option<Vec<Knot>> {
    let Some(a) = v.as_array() else {
        errs.push(path, "expected an array of knots");
        return None;
    };
    let mut out = Vec::new();
    for (i, k) in a.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let Some(mut o) = Obj::new(k, &p, errs) else { continue };
        let t = o.f64("t", errs);
        let ka = o.f64("a", errs);
        let kb = o.f64("b", errs);
        let da = o.f64_or("da", Some(0.0), errs);
        let db = o.f64_or("db", Some(0.0), errs);
        o.finish(errs);
        if let (Some(t), Some(a), Some(b), Some(da), Some(db)) = (t, ka, kb, da, db) {
            out.push(Knot { t, a, b, da, db });
        }
    }
    (out.len() == a.len() && !a.is_empty()).then_some(out).or_else(|| {
        if a.is_empty() {
            errs.push(path, "needs at least one knot");
        }
        None
    })
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, QdError> {
    let text = std::fs::read_to_string(path).map_err(|e| QdError::Usage(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| QdError::Config(vec![format!("{}: malformed JSON: {e}", path.display())]))?;
    parse_value(&value, None)
}

/// Validates a JSON document; `kind` comes from the command line and must
/// agree with the document's `kind` when both are given.
pub fn parse_value(value: &Value, kind: Option<Kind>) -> Result<ExperimentConfig, QdError> {
    let mut errs = Errors::default();
    let Some(mut root) = Obj::new(value, "", &mut errs) else {
        return Err(QdError::Config(errs.0));
    };

    let doc_kind = match root.get("kind") {
        Some(Value::String(s)) => match s.parse::<Kind>() {
            Ok(k) => Some(k),
            Err(e) => {
                errs.push("kind", e);
                None
            }
        },
        Some(_) => {
            errs.push("kind", "expected a string");
            None
        }
        None => None,
    };
    let kind = match (kind, doc_kind) {
        (Some(a), Some(b)) if a != b => {
            errs.push("kind", format!("config says '{b}' but '{a}' was requested"));
            a
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            errs.push("kind", "missing (give it in the config or on the command line)");
            Kind::Detect
        }
    };

    // constants
    let mut hbar = 1.0;
    let mut masses: Vec<(String, f64, String)> = Vec::new();
    if let Some(cv) = root.get("constants") {
        if let Some(mut c) = Obj::new(cv, "constants", &mut errs) {
            hbar = c.f64_or("hbar", Some(1.0), &mut errs).unwrap_or(1.0);
            if !(hbar > 0.0) {
                errs.push("constants.hbar", "must be > 0");
            }
            if let Some(mv) = c.get("masses") {
                match mv.as_object() {
                    Some(m) => {
                        for (k, v) in m {
                            let p = format!("constants.masses.{k}");
                            match v.as_f64() {
                                Some(x) if x > 0.0 && x.is_finite() => masses.push((k.clone(), x, p)),
                                _ => errs.push(&p, "mass must be a finite number > 0"),
                            }
                        }
                    }
                    None => errs.push("constants.masses", "expected an object of label: mass"),
                }
            }
            c.finish(&mut errs);
        }
    }

    // particles
    let mut particles = Vec::new();
    if let Some(arr) = root.array("particles", true, &mut errs) {
        if arr.is_empty() {
            errs.push("particles", "needs at least one particle");
        }
        for (i, pv) in arr.iter().enumerate() {
            let path = format!("particles[{i}]");
            let Some(mut o) = Obj::new(pv, &path, &mut errs) else { continue };
            let label = o.str("label", &mut errs).map(ParticleLabel::from);
            let n_points = o.usize_or("n_points", None, &mut errs);
            let iv = o.get("interval").map(|v| (v, o.at("interval")));
            let knots = o.get("trajectory").and_then(|v| parse_knots(v, &format!("{path}.trajectory"), &mut errs));
            let potential = o.get("potential").and_then(|v| parse_potential(v, &format!("{path}.potential"), &mut errs));
            o.finish(&mut errs);
            if let Some(n) = n_points {
                if n < 3 {
                    errs.push(&format!("{path}.n_points"), "needs at least 3 points");
                }
            }
            let interval = match (&iv, &knots) {
                (Some(_), Some(_)) => {
                    errs.push(&path, "give either 'interval' or 'trajectory', not both");
                    None
                }
                (Some((v, p)), None) => number_list(v, p, &mut errs).and_then(|ab| {
                    if ab.len() != 2 {
                        errs.push(p, "expected [a, b]");
                        return None;
                    }
                    Interval1D::new(ab[0], ab[1]).map_err(|e| errs.push(p, e)).ok()
                }),
                (None, Some(k)) => match DomainTrajectory::new(k.clone()).and_then(|t| t.interval(0.0)) {
                    Ok(iv) => Some(iv),
                    Err(e) => {
                        errs.push(&format!("{path}.trajectory"), e);
                        None
                    }
                },
                (None, None) => {
                    errs.push(&path, "missing 'interval' (or 'trajectory' for moving domains)");
                    None
                }
            };
            if let (Some(PotentialCfg::Samples(s)), Some(n)) = (&potential, n_points) {
                if s.len() != n {
                    errs.push(&format!("{path}.potential"), format!("{} samples for {n} points", s.len()));
                }
            }
            if let (Some(label), Some(interval), Some(n_points)) = (label, interval, n_points) {
                particles.push(ParticleCfg { label, interval, n_points, potential, knots });
            }
        }
    }
    let labels: Vec<ParticleLabel> = particles.iter().map(|p| p.label.clone()).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            errs.push(&format!("particles[{i}].label"), format!("duplicate label '{l}'"));
        }
    }
    let known = |l: &ParticleLabel| labels.contains(l);
    let is_moving = kind == Kind::Moving
        || (kind == Kind::Sweep && root.map.get("sweep").and_then(|s| s.get("kind")) == Some(&Value::from("moving")));
    for (i, p) in particles.iter().enumerate() {
        if p.knots.is_some() && !(is_moving || kind == Kind::Bohm) {
            errs.push(&format!("particles[{i}].trajectory"), format!("moving domains are not used by '{kind}'"));
        }
    }

    let mut constants = PhysicalConstants::new(hbar.max(f64::MIN_POSITIVE)).expect("hbar checked");
    for (l, m, p) in &masses {
        if !known(&ParticleLabel::from(l.as_str())) {
            errs.push(p, format!("unknown particle '{l}'"));
        }
        constants = constants.with_mass(l.as_str(), *m).expect("mass checked");
    }

    // faces
    let mut faces = Vec::new();
    if let Some(arr) = root.array("faces", false, &mut errs) {
        for (i, fv) in arr.iter().enumerate() {
            let path = format!("faces[{i}]");
            let Some(mut o) = Obj::new(fv, &path, &mut errs) else { continue };
            let particle = o.str("particle", &mut errs).map(ParticleLabel::from);
            let side = o.str("side", &mut errs).and_then(|s| parse_side(s, &format!("{path}.side"), &mut errs));
            let kappa = o.f64("kappa", &mut errs);
            let prescribed = o.bool_or("prescribed", false, &mut errs);
            o.finish(&mut errs);
            if let Some(p) = &particle {
                if !known(p) {
                    errs.push(&format!("{path}.particle"), format!("unknown particle '{p}'"));
                }
            }
            if prescribed && !is_moving {
                errs.push(&format!("{path}.prescribed"), "prescribed coefficients need a moving run");
            }
            if let Some(k) = kappa {
                if k < 0.0 && !prescribed {
                    errs.push(&format!("{path}.kappa"), format!("kappa must be >= 0, got {k}"));
                }
            }
            if let (Some(particle), Some(side), Some(kappa)) = (particle, side, kappa) {
                if faces.iter().any(|f: &FaceCfg| f.particle == particle && f.side == side) {
                    errs.push(&path, format!("face {particle}:{} listed twice", side.as_str()));
                }
                faces.push(FaceCfg { particle, side, kappa, prescribed });
            }
        }
    }

    // pair potentials
    let mut pairs = Vec::new();
    if let Some(arr) = root.array("pair_potentials", false, &mut errs) {
        for (i, pv) in arr.iter().enumerate() {
            let path = format!("pair_potentials[{i}]");
            let Some(mut o) = Obj::new(pv, &path, &mut errs) else { continue };
            let ls = o.array("particles", true, &mut errs).cloned();
            let strength = o.f64("strength", &mut errs);
            let range = o.f64("range", &mut errs);
            o.finish(&mut errs);
            let names: Option<Vec<ParticleLabel>> = ls.and_then(|a| {
                let v: Vec<ParticleLabel> = a.iter().filter_map(|x| x.as_str().map(ParticleLabel::from)).collect();
                (v.len() == 2 && a.len() == 2).then_some(v)
            });
            match &names {
                None => errs.push(&format!("{path}.particles"), "expected two particle labels"),
                Some(v) => {
                    for l in v {
                        if !known(l) {
                            errs.push(&format!("{path}.particles"), format!("unknown particle '{l}'"));
                        }
                    }
                    if v[0] == v[1] {
                        errs.push(&format!("{path}.particles"), "a pair needs two different particles");
                    }
                }
            }
            if let Some(r) = range {
                if !(r > 0.0) {
                    errs.push(&format!("{path}.range"), "must be > 0");
                }
            }
            if let (Some(v), Some(strength), Some(range)) = (names, strength, range) {
                pairs.push(PairCfg { a: v[0].clone(), b: v[1].clone(), strength, range });
            }
        }
    }

    // initial state
    let mut packets = Vec::new();
    let mut symmetry = Symmetry::None;
    if let Some(sv) = root.get("initial_state") {
        if let Some(mut o) = Obj::new(sv, "initial_state", &mut errs) {
            if let Some(arr) = o.array("packets", true, &mut errs) {
                for (i, pv) in arr.iter().enumerate() {
                    let path = format!("initial_state.packets[{i}]");
                    let Some(mut p) = Obj::new(pv, &path, &mut errs) else { continue };
                    let particle = p.str("particle", &mut errs).map(ParticleLabel::from);
                    let center = p.f64("center", &mut errs);
                    let width = p.f64("width", &mut errs);
                    let k0 = p.f64_or("k0", Some(0.0), &mut errs);
                    p.finish(&mut errs);
                    if let Some(w) = width {
                        if !(w > 0.0) {
                            errs.push(&format!("{path}.width"), "must be > 0");
                        }
                    }
                    if let (Some(particle), Some(center), Some(width), Some(k0)) = (particle, center, width, k0) {
                        match particles.iter().find(|q| q.label == particle) {
                            None => errs.push(&format!("{path}.particle"), format!("unknown particle '{particle}'")),
                            Some(q) => {
                                if !(center > q.interval.a() && center < q.interval.b()) {
                                    errs.push(
                                        &format!("{path}.center"),
                                        format!("{center} is outside ({}, {})", q.interval.a(), q.interval.b()),
                                    );
                                }
                            }
                        }
                        if packets.iter().any(|q: &PacketCfg| q.particle == particle) {
                            errs.push(&path, format!("second packet for particle '{particle}'"));
                        }
                        packets.push(PacketCfg { particle, center, width, k0 });
                    }
                }
            }
            if let Some(s) = o.get("symmetry") {
                symmetry = match s.as_str() {
                    Some("none") => Symmetry::None,
                    Some("symmetric") => Symmetry::Symmetric,
                    Some("antisymmetric") => Symmetry::Antisymmetric,
                    _ => {
                        errs.push("initial_state.symmetry", "expected 'none', 'symmetric' or 'antisymmetric'");
                        Symmetry::None
                    }
                };
            }
            o.finish(&mut errs);
        }
    } else {
        errs.push("initial_state", "missing");
    }
    for p in &particles {
        if !packets.is_empty() && !packets.iter().any(|q| q.particle == p.label) {
            errs.push("initial_state.packets", format!("no packet for particle '{}'", p.label));
        }
    }
    if symmetry != Symmetry::None {
        if particles.len() != 2 {
            errs.push("initial_state.symmetry", "exchange symmetry needs exactly two particles");
        } else if particles[0].interval != particles[1].interval || particles[0].n_points != particles[1].n_points {
            errs.push("initial_state.symmetry", "exchange symmetry needs identical grids");
        }
    }

    // time
    let mut time = TimeCfg { t_max: 1.0, dt: 0.01, steps_per_bin: 1, snapshot_every: 0 };
    match root.get("time") {
        Some(tv) => {
            if let Some(mut o) = Obj::new(tv, "time", &mut errs) {
                let t_max = o.f64("t_max", &mut errs);
                let dt = o.f64("dt", &mut errs);
                let spb = o.usize_or("steps_per_bin", Some(1), &mut errs);
                let every = o.usize_or("snapshot_every", Some(0), &mut errs);
                o.finish(&mut errs);
                if let Some(t) = t_max {
                    if !(t > 0.0) {
                        errs.push("time.t_max", "must be > 0");
                    }
                    time.t_max = t;
                }
                if let Some(d) = dt {
                    if !(d > 0.0) {
                        errs.push("time.dt", "must be > 0");
                    }
                    time.dt = d;
                }
                if spb == Some(0) {
                    errs.push("time.steps_per_bin", "must be >= 1");
                }
                time.steps_per_bin = spb.unwrap_or(1).max(1);
                time.snapshot_every = every.unwrap_or(0);
            }
        }
        None => errs.push("time", "missing"),
    }

    // sampler
    let sampler = match root.get("sampler") {
        Some(sv) => Obj::new(sv, "sampler", &mut errs).and_then(|mut o| {
            let n = o.usize_or("n", None, &mut errs);
            let seed = o.u64_opt("seed", &mut errs);
            if o.map.get("seed").is_none() {
                errs.push("sampler.seed", "missing (seeds are mandatory for stochastic runs)");
            }
            let dt_traj = if o.map.contains_key("dt_traj") { o.f64("dt_traj", &mut errs) } else { None };
            o.used.insert("dt_traj");
            let dump = o.usize_or("dump_trajectories", Some(0), &mut errs);
            o.finish(&mut errs);
            if let Some(d) = dt_traj {
                if !(d > 0.0) {
                    errs.push("sampler.dt_traj", "must be > 0");
                }
            }
            if n == Some(0) {
                errs.push("sampler.n", "must be >= 1");
            }
            Some(SamplerCfg { n: n?, seed: seed?, dt_traj, dump_trajectories: dump.unwrap_or(0) })
        }),
        None => None,
    };

    // sweep
    let sweep = match root.get("sweep") {
        Some(sv) => Obj::new(sv, "sweep", &mut errs).and_then(|mut o| {
            let k = o.str("kind", &mut errs).and_then(|s| match s.parse::<Kind>() {
                Ok(Kind::Sweep) => {
                    errs.push("sweep.kind", "sweeps cannot nest");
                    None
                }
                Ok(k) => Some(k),
                Err(e) => {
                    errs.push("sweep.kind", e);
                    None
                }
            });
            let face = o.usize_or("face", None, &mut errs);
            let kappas = o.get("kappa").and_then(|v| number_list(v, "sweep.kappa", &mut errs));
            if o.map.get("kappa").is_none() {
                errs.push("sweep.kappa", "missing");
            }
            o.finish(&mut errs);
            if let Some(f) = face {
                if f >= faces.len() {
                    errs.push("sweep.face", format!("index {f} but only {} faces", faces.len()));
                }
            }
            if let Some(ks) = &kappas {
                if ks.is_empty() {
                    errs.push("sweep.kappa", "needs at least one value");
                }
            }
            Some(SweepCfg { kind: k?, face: face?, kappas: kappas? })
        }),
        None => None,
    };

    let output_dir = match root.get("output_dir") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            errs.push("output_dir", "expected a string");
            None
        }
        None => None,
    };
    root.finish(&mut errs);

    // kind-specific requirements
    let effective = if kind == Kind::Sweep { sweep.as_ref().map(|s| s.kind) } else { Some(kind) };
    if kind == Kind::Sweep && sweep.is_none() && !errs.0.iter().any(|e| e.starts_with("sweep")) {
        errs.push("sweep", "missing (needed by kind 'sweep')");
    }
    if kind != Kind::Sweep && sweep.is_some() {
        errs.push("sweep", format!("only used by kind 'sweep', not '{kind}'"));
    }
    if let Some(k) = effective {
        if k.is_stochastic() && sampler.is_none() && !errs.0.iter().any(|e| e.starts_with("sampler")) {
            errs.push("sampler", format!("missing: '{k}' needs sampler.n and sampler.seed"));
        }
        if k == Kind::Moving {
            for (i, p) in particles.iter().enumerate() {
                if p.knots.is_none() {
                    errs.push(&format!("particles[{i}]"), "moving runs need a 'trajectory'");
                }
            }
        }
        if matches!(k, Kind::Bohm) {
            if let Some(s) = &sampler {
                if s.n < 100 {
                    errs.push("sampler.n", "Bohmian statistics need at least 100 samples");
                }
            }
        }
        if k == Kind::PovmCheck && !(1..=2).contains(&particles.len()) {
            errs.push("particles", "povm-check supports one or two particles");
        }
    }

    let mut cfg = ExperimentConfig {
        kind,
        constants,
        particles,
        faces,
        pairs,
        packets,
        symmetry,
        time,
        sampler,
        sweep,
        output_dir,
        raw: value.clone(),
    };
    if errs.0.is_empty() {
        // preconditions that need the assembled objects
        if let Err(e) = cfg.initial_state() {
            errs.push("initial_state", e);
        }
        if effective == Some(Kind::Moving) || (effective == Some(Kind::Bohm) && cfg.is_moving()) {
            let checks: Vec<(f64, usize)> = match &cfg.sweep {
                Some(s) => s.kappas.iter().map(|k| (*k, s.face)).collect(),
                None => vec![(f64::NAN, usize::MAX)],
            };
            for (k, f) in checks {
                let mut c = cfg.clone();
                if f != usize::MAX {
                    c.faces[f].kappa = k;
                }
                match c.moving_particles() {
                    Ok(ps) => {
                        if let Err(e) = check_run_admissibility(&ps, &c.constants, 0.0, c.time.t_max, c.time.dt) {
                            let at = if f == usize::MAX { "faces".to_string() } else { format!("sweep.kappa={k}") };
                            errs.push(&at, e);
                        }
                    }
                    Err(e) => errs.push("faces", e),
                }
            }
        }
    }
    if errs.0.is_empty() {
        cfg.raw = value.clone();
        Ok(cfg)
    } else {
        Err(QdError::Config(errs.0))
    }
}

impl ExperimentConfig {
    pub fn labels(&self) -> Vec<ParticleLabel> {
        self.particles.iter().map(|p| p.label.clone()).collect()
    }

    pub fn grids(&self) -> Vec<SpatialGrid> {
        self.particles.iter().map(|p| make_grid(p.interval, p.n_points).expect("validated grid")).collect()
    }

    pub fn is_moving(&self) -> bool {
        self.particles.iter().any(|p| p.knots.is_some())
    }

    pub fn seed(&self) -> Option<u64> {
        self.sampler.as_ref().map(|s| s.seed)
    }

    pub fn static_faces(&self) -> Vec<Face> {
        self.faces
            .iter()
            .map(|f| Face { particle: f.particle.clone(), side: f.side, kappa: f.kappa })
            .collect()
    }

    pub fn face_ids(&self) -> Vec<FaceId> {
        self.faces.iter().map(|f| FaceId::new(f.particle.clone(), f.side)).collect()
    }

    /// Single-particle and pair potentials sampled on the grids.
    pub fn potential(&self) -> Result<PotentialSpec, absorb_core::Error> {
        let grids = self.grids();
        let mut spec = PotentialSpec::zero();
        for (p, g) in self.particles.iter().zip(&grids) {
            if let Some(v) = &p.potential {
                spec = spec.with_single(p.label.clone(), v.sample(g, self.constants.mass(&p.label)))?;
            }
        }
        for pair in &self.pairs {
            let ia = self.particles.iter().position(|p| p.label == pair.a).expect("validated label");
            let ib = self.particles.iter().position(|p| p.label == pair.b).expect("validated label");
            let (xa, xb) = (grids[ia].points(), grids[ib].points());
            let mut m = Vec::with_capacity(xa.len() * xb.len());
            for x in &xa {
                for y in &xb {
                    m.push(pair.strength * (-(x - y).powi(2) / (2.0 * pair.range * pair.range)).exp());
                }
            }
            spec = spec.with_pair(pair.a.clone(), pair.b.clone(), xa.len(), xb.len(), m)?;
        }
        Ok(spec)
    }

    /// Product of the configured packets, exchange-(anti)symmetrized when asked.
    pub fn initial_state(&self) -> Result<WaveFunctionNP, absorb_core::Error> {
        let grids = self.grids();
        let factors = self
            .particles
            .iter()
            .zip(&grids)
            .map(|(p, g)| {
                let pk = self.packets.iter().find(|q| q.particle == p.label).expect("validated packets");
                gaussian_packet(g, pk.center, pk.width, pk.k0)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pairs: Vec<(ParticleLabel, &absorb_core::WaveFunction1P)> =
            self.labels().into_iter().zip(factors.iter()).collect();
        let psi = WaveFunctionNP::product(&pairs)?;
        if self.symmetry == Symmetry::None {
            return Ok(psi);
        }
        let sign = if self.symmetry == Symmetry::Symmetric { 1.0 } else { -1.0 };
        let n = grids[0].n_points();
        let a = psi.amplitudes();
        let amps: Vec<C64> = (0..n * n).map(|f| a[f] + sign * a[(f % n) * n + f / n]).collect();
        let out = WaveFunctionNP::from_amplitudes(psi.labels().to_vec(), psi.grids().to_vec(), amps, 0.0)?;
        if !(out.norm_squared() > 1e-20) {
            return Err(absorb_core::Error::InvalidParameter("antisymmetrized state vanishes".into()));
        }
        Ok(out.normalized())
    }

    /// Particles of a moving-domain run; particles without a trajectory sit
    /// still.
    pub fn moving_particles(&self) -> Result<Vec<MovingParticle>, absorb_core::Error> {
        let grids = self.grids();
        self.particles
            .iter()
            .zip(&grids)
            .map(|(p, g)| {
                let trajectory = match &p.knots {
                    Some(k) => DomainTrajectory::new(k.clone())?,
                    None => DomainTrajectory::fixed(p.interval),
                };
                let mut kappas = [KappaRule::Detector(0.0); 2];
                for f in self.faces.iter().filter(|f| f.particle == p.label) {
                    kappas[f.side.index()] =
                        if f.prescribed { KappaRule::Prescribed(f.kappa) } else { KappaRule::Detector(f.kappa) };
                }
                let potential = match &p.potential {
                    None => MovingPotential::Zero,
                    Some(v) => MovingPotential::CoMoving(v.sample(g, self.constants.mass(&p.label))),
                };
                Ok(MovingParticle { label: p.label.clone(), trajectory, n_points: p.n_points, kappas, potential })
            })
            .collect()
    }

    /// Pair terms of a moving run, sampled on the reference grids.
    pub fn moving_pair_potential(&self) -> Result<PotentialSpec, absorb_core::Error> {
        let mut spec = PotentialSpec::zero();
        for pair in &self.pairs {
            let pa = self.particles.iter().find(|p| p.label == pair.a).expect("validated label");
            let pb = self.particles.iter().find(|p| p.label == pair.b).expect("validated label");
            let (ga, gb) = (make_grid(pa.interval, pa.n_points)?, make_grid(pb.interval, pb.n_points)?);
            let mut m = Vec::with_capacity(ga.n_points() * gb.n_points());
            for x in ga.points() {
                for y in gb.points() {
                    m.push(pair.strength * (-(x - y).powi(2) / (2.0 * pair.range * pair.range)).exp());
                }
            }
            spec = spec.with_pair(pair.a.clone(), pair.b.clone(), ga.n_points(), gb.n_points(), m)?;
        }
        Ok(spec)
    }

    /// Child documents of a sweep: the swept face gets each `κ`, stochastic
    /// children get seeds derived from the root seed.
    pub fn expand_sweep(&self) -> Result<Vec<ExperimentConfig>, QdError> {
        let sweep = self.sweep.as_ref().ok_or_else(|| QdError::Usage("not a sweep config".into()))?;
        sweep
            .kappas
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let mut v = self.raw.clone();
                let m = v.as_object_mut().expect("validated object");
                m.remove("sweep");
                m.insert("kind".into(), Value::from(sweep.kind.as_str()));
                m["faces"][sweep.face]["kappa"] = Value::from(*k);
                if let Some(s) = &self.sampler {
                    m["sampler"]["seed"] = Value::from(absorb_core::rng::derive_seed(s.seed, i as u64));
                }
                parse_value(&v, Some(sweep.kind))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn detect() -> Value {
        json!({
            "kind": "detect",
            "particles": [{"label": "A", "interval": [0, 10], "n_points": 64}],
            "faces": [{"particle": "A", "side": "right", "kappa": 1.0}],
            "initial_state": {"packets": [{"particle": "A", "center": 5, "width": 0.8}]},
            "time": {"t_max": 2, "dt": 0.05}
        })
    }

    fn messages(v: &Value) -> Vec<String> {
        match parse_value(v, None) {
            Err(QdError::Config(m)) => m,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_value(&detect(), None).unwrap();
        assert_eq!(c.kind, Kind::Detect);
        assert_eq!(c.time.steps_per_bin, 1);
        assert_eq!(c.constants.hbar(), 1.0);
        assert_eq!(c.symmetry, Symmetry::None);
        assert!(c.sampler.is_none() && c.seed().is_none());
        assert_eq!(c.face_ids()[0].to_string(), "A:right");
    }

    #[test]
    fn every_problem_is_reported() {
        let mut v = detect();
        v["faces"][0]["particle"] = json!("Z");
        v["time"]["dt"] = json!(-1);
        v["bogus"] = json!(1);
        v["particles"][0]["n_points"] = json!(2);
        let m = messages(&v);
        assert_eq!(m.len(), 4, "{m:?}");
        for needle in ["faces[0].particle", "time.dt", "bogus", "particles[0].n_points"] {
            assert!(m.iter().any(|s| s.contains(needle)), "{needle} not in {m:?}");
        }
    }

    #[test]
    fn stochastic_kinds_need_a_seed() {
        let mut v = detect();
        v["kind"] = json!("multi");
        v["sampler"] = json!({"n": 10});
        assert!(messages(&v).iter().any(|s| s.contains("sampler.seed")));
    }

    #[test]
    fn requested_kind_must_match() {
        assert!(parse_value(&detect(), Some(Kind::Bohm)).is_err());
        assert!(parse_value(&detect(), Some(Kind::Detect)).is_ok());
    }

    #[test]
    fn inadmissible_moving_faces_are_rejected_up_front() {
        let mut v = detect();
        v["kind"] = json!("moving");
        v["particles"][0] = json!({"label": "A", "n_points": 64,
            "trajectory": [{"t": 0, "a": 0, "b": 10, "da": 0, "db": 2.0}]});
        v["faces"][0]["kappa"] = json!(0.5);
        v["faces"][0]["prescribed"] = json!(true);
        let m = messages(&v);
        assert!(m.iter().any(|s| s.contains("A:right")), "{m:?}");
    }

    #[test]
    fn sweep_children_get_derived_seeds() {
        let mut v = detect();
        v["kind"] = json!("sweep");
        v["sampler"] = json!({"n": 10, "seed": 5});
        v["sweep"] = json!({"kind": "multi", "face": 0, "kappa": [0.5, 1, 2]});
        let c = parse_value(&v, None).unwrap();
        let kids = c.expand_sweep().unwrap();
        assert_eq!(kids.len(), 3);
        for (i, (k, kappa)) in kids.iter().zip([0.5, 1.0, 2.0]).enumerate() {
            assert_eq!(k.kind, Kind::Multi);
            assert_eq!(k.faces[0].kappa, kappa);
            assert_eq!(k.seed(), Some(absorb_core::rng::derive_seed(5, i as u64)));
        }
        assert_ne!(kids[0].seed(), kids[1].seed());
    }

    #[test]
    fn exchange_symmetry_needs_two_identical_grids() {
        let mut v = detect();
        v["initial_state"]["symmetry"] = json!("antisymmetric");
        assert!(messages(&v).iter().any(|s| s.contains("initial_state.symmetry")));
    }

    #[test]
    fn antisymmetric_pair_vanishes_on_the_diagonal() {
        let mut v = detect();
        v["particles"] = json!([
            {"label": "A", "interval": [0, 10], "n_points": 32},
            {"label": "B", "interval": [0, 10], "n_points": 32}
        ]);
        v["initial_state"] = json!({"packets": [
            {"particle": "A", "center": 4, "width": 0.5},
            {"particle": "B", "center": 6, "width": 0.5}
        ], "symmetry": "antisymmetric"});
        let psi = parse_value(&v, None).unwrap().initial_state().unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
        for k in 0..32 {
            assert!(psi.value(&[k, k]).norm() < 1e-14);
            assert!((psi.value(&[k, 3]) + psi.value(&[3, k])).norm() < 1e-14);
        }
    }
}
