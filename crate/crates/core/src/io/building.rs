//! Building description files (`.bdn`).
//!
//! A `.bdn` file is TOML. The first two keys identify the format:
//!
//! ```toml
//! format = "codasim-bdn"
//! version = 1
//! name = "single room"
//! simulation-type = "thermal-airflow"
//!
//! [[zone]]
//! id = "room"
//! volume = "129.6 m3"
//!
//! [[inter-ambiance]]
//! id = "envelope"
//! zone-a = "room"
//! zone-b = "EXTERIOR"
//!
//! [[inter-ambiance.component]]
//! type = "wall"
//! id = "south"
//! area = "21.6 m2"
//! azimuth = "180 deg"
//!
//! [[inter-ambiance.component.layer]]
//! conductivity = "0.04 W/(m.K)"
//! density = "30 kg/m3"
//! specific-heat = "1400 J/(kg.K)"
//! thickness = "0.1 m"
//! ```
//!
//! Physical quantities are strings `"<number> <unit>"`; dimensionless values
//! are plain TOML numbers. Unknown keys are errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::model::*;
use crate::units::{format_quantity, parse_quantity, Dimension};

pub const BUILDING_FORMAT: &str = "codasim-bdn";
pub const BUILDING_VERSION: i64 = 1;

const MAX_DIAGNOSTICS: usize = 50;

/// File keys whose name in validation messages differs from the key.
const ALIASES: &[(&str, &str)] = &[
    ("volume", "air volume"),
    ("coefficient", "K"),
    ("exponent", "n"),
    ("air-temperature-tolerance", "air temp tolerance"),
];

fn normalize(s: &str) -> String {
    s.replace(['-', '_'], " ")
}

struct Section<'a, 'i> {
    table: &'a DeTable<'i>,
    span: Range<usize>,
    entity: String,
    /// Prepended to keys when matching validation messages.
    prefix: String,
}

impl<'a, 'i> Section<'a, 'i> {
    fn new(table: &'a DeTable<'i>, span: Range<usize>, entity: impl Into<String>) -> Self {
        Section {
            table,
            span,
            entity: entity.into(),
            prefix: String::new(),
        }
    }

    fn lookup(&self, key: &str) -> Option<&'a Spanned<DeValue<'i>>> {
        self.table
            .iter()
            .find(|(k, _)| k.get_ref().as_ref() == key)
            .map(|(_, v)| v)
    }
}

struct Reader<'s> {
    src: &'s str,
    line_starts: Vec<usize>,
    diags: Vec<Diagnostic>,
    entities: HashMap<String, Location>,
    /// Per entity: (normalized field name, location of its value).
    fields: HashMap<String, Vec<(String, Location)>>,
}

impl<'s> Reader<'s> {
    fn new(src: &'s str) -> Self {
        let line_starts = std::iter::once(0)
            .chain(src.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        Reader {
            src,
            line_starts,
            diags: Vec::new(),
            entities: HashMap::new(),
            fields: HashMap::new(),
        }
    }

    fn locate(&self, offset: usize) -> Location {
        let offset = offset.min(self.src.len());
        let line = self.line_starts.partition_point(|&s| s <= offset);
        let start = self.line_starts[line - 1];
        let column = self
            .src
            .get(start..offset)
            .map_or(offset - start, |s| s.chars().count());
        Location {
            line,
            column: column + 1,
        }
    }

    fn error(&mut self, entity: &str, span: Range<usize>, rule: impl Into<String>) {
        if self.diags.len() < MAX_DIAGNOSTICS {
            let mut d = Diagnostic::new(entity, rule);
            d.location = Some(self.locate(span.start));
            self.diags.push(d);
        }
    }

    fn anchor(&mut self, sec: &Section) {
        let loc = self.locate(sec.span.start);
        self.entities.insert(sec.entity.clone(), loc);
    }

    fn check_keys(&mut self, sec: &Section, allowed: &[&str]) {
        for (k, _) in sec.table.iter() {
            if !allowed.contains(&k.get_ref().as_ref()) {
                self.error(&sec.entity, k.span(), format!("unknown key `{}`", k.get_ref()));
            }
        }
    }

    fn missing(&mut self, sec: &Section, key: &str) {
        self.error(&sec.entity, sec.span.clone(), format!("missing key `{key}`"));
    }

    /// Looks up `key` and remembers where its value sits.
    fn field<'a, 'i>(&mut self, sec: &Section<'a, 'i>, key: &str) -> Option<&'a Spanned<DeValue<'i>>> {
        let v = sec.lookup(key)?;
        let name = ALIASES
            .iter()
            .find(|(k, _)| *k == key)
            .map_or(key, |(_, what)| what);
        let loc = self.locate(v.span().start);
        self.fields
            .entry(sec.entity.clone())
            .or_default()
            .push((normalize(&format!("{}{}", sec.prefix, name)), loc));
        Some(v)
    }

    fn text(&mut self, sec: &Section, key: &str, default: Option<&str>) -> String {
        match self.field(sec, key) {
            None => {
                if default.is_none() {
                    self.missing(sec, key);
                }
                default.unwrap_or_default().to_string()
            }
            Some(v) => match v.get_ref().as_str() {
                Some(s) => s.to_string(),
                None => {
                    self.error(&sec.entity, v.span(), format!("`{key}` must be a string"));
                    String::new()
                }
            },
        }
    }

    fn quantity_of(&mut self, sec: &Section, key: &str, v: &Spanned<DeValue>, dim: Dimension) -> f64 {
        match v.get_ref().as_str() {
            Some(text) => match parse_quantity(text, dim) {
                Ok(x) => x,
                Err(e) => {
                    self.error(&sec.entity, v.span(), format!("`{key}`: {e}"));
                    f64::NAN
                }
            },
            None => {
                self.error(
                    &sec.entity,
                    v.span(),
                    format!("`{key}` must be a quantity string like \"{}\"", format_quantity(1.0, dim)),
                );
                f64::NAN
            }
        }
    }

    fn quantity(&mut self, sec: &Section, key: &str, dim: Dimension, default: Option<f64>) -> f64 {
        match self.field(sec, key) {
            Some(v) => self.quantity_of(sec, key, v, dim),
            None => {
                if default.is_none() {
                    self.missing(sec, key);
                }
                default.unwrap_or(f64::NAN)
            }
        }
    }

    fn opt_quantity(&mut self, sec: &Section, key: &str, dim: Dimension) -> Option<f64> {
        let v = self.field(sec, key)?;
        Some(self.quantity_of(sec, key, v, dim))
    }

    /// A single quantity (constant) or an array of hourly quantities.
    fn schedule(&mut self, sec: &Section, key: &str, dim: Dimension, default: Option<f64>) -> Schedule {
        let Some(v) = self.field(sec, key) else {
            if default.is_none() {
                self.missing(sec, key);
            }
            return Schedule::constant(default.unwrap_or(f64::NAN));
        };
        match v.get_ref() {
            DeValue::Array(items) => Schedule {
                values: items.iter().map(|item| self.quantity_of(sec, key, item, dim)).collect(),
            },
            _ => Schedule::constant(self.quantity_of(sec, key, v, dim)),
        }
    }

    fn number(&mut self, sec: &Section, key: &str, default: Option<f64>) -> f64 {
        let Some(v) = self.field(sec, key) else {
            if default.is_none() {
                self.missing(sec, key);
            }
            return default.unwrap_or(f64::NAN);
        };
        let parsed = match v.get_ref() {
            DeValue::Float(f) => f.as_str().replace('_', "").parse::<f64>().ok(),
            DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix())
                .ok()
                .map(|n| n as f64),
            _ => None,
        };
        match parsed.filter(|x| x.is_finite()) {
            Some(x) => x,
            None => {
                self.error(&sec.entity, v.span(), format!("`{key}` must be a finite number"));
                f64::NAN
            }
        }
    }

    fn count(&mut self, sec: &Section, key: &str, default: usize) -> usize {
        let Some(v) = self.field(sec, key) else {
            return default;
        };
        let parsed = v
            .get_ref()
            .as_integer()
            .and_then(|i| i64::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok())
            .and_then(|n| usize::try_from(n).ok());
        parsed.unwrap_or_else(|| {
            self.error(&sec.entity, v.span(), format!("`{key}` must be a non-negative integer"));
            default
        })
    }

    fn flag(&mut self, sec: &Section, key: &str, default: bool) -> bool {
        let Some(v) = self.field(sec, key) else {
            return default;
        };
        v.get_ref().as_bool().unwrap_or_else(|| {
            self.error(&sec.entity, v.span(), format!("`{key}` must be true or false"));
            default
        })
    }

    fn keyword<T: Copy>(&mut self, sec: &Section, key: &str, options: &[(&str, T)], default: Option<T>) -> Option<T> {
        let Some(v) = self.field(sec, key) else {
            if default.is_none() {
                self.missing(sec, key);
            }
            return default;
        };
        let found = v
            .get_ref()
            .as_str()
            .and_then(|s| options.iter().find(|(name, _)| *name == s));
        match found {
            Some((_, t)) => Some(*t),
            None => {
                let names: Vec<String> = options.iter().map(|(n, _)| format!("\"{n}\"")).collect();
                self.error(
                    &sec.entity,
                    v.span(),
                    format!("`{key}` must be one of {}", names.join(", ")),
                );
                None
            }
        }
    }

    fn table<'a, 'i>(&mut self, parent: &Section<'a, 'i>, key: &str, prefix: &str) -> Option<Section<'a, 'i>> {
        let v = parent.lookup(key)?;
        match v.get_ref().as_table() {
            Some(t) => Some(Section {
                table: t,
                span: v.span(),
                entity: parent.entity.clone(),
                prefix: prefix.to_string(),
            }),
            None => {
                self.error(&parent.entity, v.span(), format!("`{key}` must be a table"));
                None
            }
        }
    }

    /// Items of an array of tables `[[key]]`.
    fn tables<'a, 'i>(&mut self, parent: &Section<'a, 'i>, key: &str) -> Vec<(&'a DeTable<'i>, Range<usize>)> {
        let Some(v) = parent.lookup(key) else {
            return Vec::new();
        };
        let Some(items) = v.get_ref().as_array() else {
            self.error(&parent.entity, v.span(), format!("`{key}` must be an array of tables"));
            return Vec::new();
        };
        let mut out = Vec::new();
        for item in items.iter() {
            match item.get_ref().as_table() {
                Some(t) => out.push((t, item.span())),
                None => self.error(&parent.entity, item.span(), format!("`{key}` entries must be tables")),
            }
        }
        out
    }

    /// Reads `id` and returns a section labelled `<kind> "<id>"`.
    fn identified<'a, 'i>(&mut self, table: &'a DeTable<'i>, span: Range<usize>, kind: &str, index: usize) -> (Section<'a, 'i>, String) {
        let mut sec = Section::new(table, span, format!("{kind} #{}", index + 1));
        let id = self.text(&sec, "id", None);
        sec.entity = format!("{kind} \"{id}\"");
        self.anchor(&sec);
        self.entities.insert(format!("component \"{id}\""), self.locate(sec.span.start));
        (sec, id)
    }

    fn building(&mut self, top: &mut Section) -> BuildingDescription {
        self.check_keys(
            top,
            &[
                "format",
                "version",
                "name",
                "simulation-type",
                "time-scheme",
                "coupling",
                "airflow-solver",
                "moisture",
                "site",
                "films",
                "zone",
                "inter-ambiance",
                "output",
            ],
        );
        match self.field(top, "format") {
            None => self.missing(top, "format"),
            Some(v) if v.get_ref().as_str() != Some(BUILDING_FORMAT) => {
                self.error(&top.entity, v.span(), format!("`format` must be \"{BUILDING_FORMAT}\""))
            }
            Some(_) => {}
        }
        match self.field(top, "version") {
            None => self.missing(top, "version"),
            Some(v) => {
                let ok = v
                    .get_ref()
                    .as_integer()
                    .is_some_and(|i| i.as_str() == BUILDING_VERSION.to_string());
                if !ok {
                    self.error(
                        &top.entity,
                        v.span(),
                        format!("unsupported version (this reader understands version {BUILDING_VERSION})"),
                    );
                }
            }
        }
        let name = self.text(top, "name", None);
        top.entity = format!("building \"{name}\"");
        self.anchor(top);

        let mut desc = BuildingDescription::new(name);
        if let Some(t) = self.keyword(top, "simulation-type", SIMULATION_TYPES, Some(desc.simulation_type)) {
            desc.simulation_type = t;
        }
        if let Some(t) = self.keyword(top, "time-scheme", TIME_SCHEMES, Some(desc.time_scheme)) {
            desc.time_scheme = t;
        }
        if let Some(sec) = self.table(top, "coupling", "coupling ") {
            self.check_keys(&sec, &["mode", "max-iterations", "air-temperature-tolerance", "flow-tolerance"]);
            let c = &mut desc.coupling;
            if let Some(m) = self.keyword(&sec, "mode", COUPLING_MODES, Some(c.mode)) {
                c.mode = m;
            }
            c.max_iterations = self.count(&sec, "max-iterations", c.max_iterations);
            c.air_temp_tolerance = self.quantity(
                &sec,
                "air-temperature-tolerance",
                Dimension::TemperatureDifference,
                Some(c.air_temp_tolerance),
            );
            c.flow_tolerance = self.quantity(&sec, "flow-tolerance", Dimension::MassFlow, Some(c.flow_tolerance));
        }
        if let Some(sec) = self.table(top, "airflow-solver", "solver ") {
            self.check_keys(
                &sec,
                &[
                    "relaxation",
                    "max-iterations",
                    "residual-tolerance",
                    "pressure-tolerance",
                    "picard-restarts",
                    "jacobian-probe",
                ],
            );
            let s = &mut desc.airflow_solver;
            s.relaxation = self.number(&sec, "relaxation", Some(s.relaxation));
            s.max_iterations = self.count(&sec, "max-iterations", s.max_iterations);
            s.residual_tolerance =
                self.quantity(&sec, "residual-tolerance", Dimension::MassFlow, Some(s.residual_tolerance));
            s.pressure_tolerance =
                self.quantity(&sec, "pressure-tolerance", Dimension::Pressure, Some(s.pressure_tolerance));
            s.picard_restarts = self.count(&sec, "picard-restarts", s.picard_restarts);
            s.jacobian_probe = self.quantity(&sec, "jacobian-probe", Dimension::Pressure, Some(s.jacobian_probe));
        }
        if let Some(sec) = self.table(top, "moisture", "moisture ") {
            self.check_keys(&sec, &["buffers"]);
            desc.moisture.buffers = self.flag(&sec, "buffers", desc.moisture.buffers);
        }
        if let Some(sec) = self.table(top, "site", "site ") {
            self.site(&sec, &mut desc.site);
        }
        if let Some(sec) = self.table(top, "films", "") {
            self.check_keys(&sec, &["h-ci", "h-ri", "h-ce", "h-re"]);
            let f = &mut desc.films;
            f.h_ci = self.quantity(&sec, "h-ci", Dimension::FilmCoefficient, Some(f.h_ci));
            f.h_ri = self.quantity(&sec, "h-ri", Dimension::FilmCoefficient, Some(f.h_ri));
            f.h_ce = self.quantity(&sec, "h-ce", Dimension::FilmCoefficient, Some(f.h_ce));
            f.h_re = self.quantity(&sec, "h-re", Dimension::FilmCoefficient, Some(f.h_re));
        }
        for (i, (table, span)) in self.tables(top, "zone").into_iter().enumerate() {
            let zone = self.zone(table, span, i);
            desc.zones.push(zone);
        }
        for (i, (table, span)) in self.tables(top, "inter-ambiance").into_iter().enumerate() {
            let ia = self.inter_ambiance(table, span, i);
            desc.inter_ambiances.push(ia);
        }
        for (i, (table, span)) in self.tables(top, "output").into_iter().enumerate() {
            let mut sec = Section::new(table, span, format!("output #{}", i + 1));
            self.check_keys(&sec, &["entity", "variable"]);
            let entity = self.text(&sec, "entity", None);
            sec.entity = format!("output \"{entity}\"");
            self.anchor(&sec);
            if let Some(variable) = self.keyword(&sec, "variable", &output_keywords(), None) {
                desc.outputs.push(OutputRequest { entity, variable });
            }
        }
        desc
    }

    fn site(&mut self, sec: &Section, site: &mut Site) {
        self.check_keys(
            sec,
            &[
                "latitude",
                "longitude",
                "time-zone",
                "ground-albedo",
                "ground-temperature",
                "sky-temperature-offset",
                "cp",
            ],
        );
        site.latitude = self.quantity(sec, "latitude", Dimension::Angle, Some(site.latitude));
        site.longitude = self.quantity(sec, "longitude", Dimension::Angle, Some(site.longitude));
        site.time_zone = self.number(sec, "time-zone", Some(site.time_zone));
        site.ground_albedo = self.number(sec, "ground-albedo", Some(site.ground_albedo));
        site.ground_temperature = self.opt_quantity(sec, "ground-temperature", Dimension::Temperature);
        site.sky_temperature_offset = self.quantity(
            sec,
            "sky-temperature-offset",
            Dimension::TemperatureDifference,
            Some(site.sky_temperature_offset),
        );
        if sec.lookup("cp").is_some() {
            site.cp_table.clear();
            for (table, span) in self.tables(sec, "cp") {
                let s = Section {
                    table,
                    span,
                    entity: sec.entity.clone(),
                    prefix: "cp ".into(),
                };
                self.check_keys(&s, &["from", "to", "cp"]);
                site.cp_table.push(CpSector {
                    from: self.quantity(&s, "from", Dimension::Angle, None),
                    to: self.quantity(&s, "to", Dimension::Angle, None),
                    cp: self.number(&s, "cp", None),
                });
            }
        }
    }

    fn conduction(&mut self, sec: &Section) -> Option<ConductionModel> {
        let kind = self.keyword(sec, "conduction", CONDUCTION_MODELS, Some(None)).flatten();
        let nodes = sec.lookup("nodes-per-layer");
        match kind {
            Some(ConductionKeyword::Fd1d) => Some(ConductionModel::FD1D {
                nodes_per_layer: self.count(sec, "nodes-per-layer", 3),
            }),
            Some(ConductionKeyword::R2c) | None => {
                if let Some(v) = nodes {
                    self.error(&sec.entity, v.span(), "`nodes-per-layer` requires conduction = \"fd1d\"");
                }
                kind.map(|_| ConductionModel::R2C)
            }
        }
    }

    fn zone(&mut self, table: &DeTable, span: Range<usize>, index: usize) -> Zone {
        let (sec, id) = self.identified(table, span, "zone", index);
        self.entities.remove(&format!("component \"{id}\""));
        self.check_keys(
            &sec,
            &[
                "id",
                "volume",
                "reference-height",
                "conduction",
                "nodes-per-layer",
                "longwave",
                "moisture-gain",
                "buffer-mass",
                "buffer-exchange",
                "component",
            ],
        );
        let mut model = ModelSelector::default();
        if let Some(c) = self.conduction(&sec) {
            model.conduction = c;
        }
        if let Some(l) = self.keyword(&sec, "longwave", LONGWAVE_MODELS, Some(model.longwave)) {
            model.longwave = l;
        }
        let mass = self.opt_quantity(&sec, "buffer-mass", Dimension::Mass);
        let exchange = self.opt_quantity(&sec, "buffer-exchange", Dimension::MassFlow);
        let buffer = match (mass, exchange) {
            (Some(mass), Some(exchange)) => Some(BufferParams { mass, exchange }),
            (None, None) => None,
            _ => {
                self.error(
                    &sec.entity,
                    sec.span.clone(),
                    "`buffer-mass` and `buffer-exchange` must be given together",
                );
                None
            }
        };
        let mut zone = Zone {
            air_volume: self.quantity(&sec, "volume", Dimension::Volume, None),
            reference_height: self.quantity(&sec, "reference-height", Dimension::Length, Some(0.0)),
            model,
            moisture_gain: self.schedule(&sec, "moisture-gain", Dimension::MassFlow, Some(0.0)),
            buffer,
            components: Vec::new(),
            id,
        };
        for (i, (table, span)) in self.tables(&sec, "component").into_iter().enumerate() {
            let Some(kind) = self.component_type(table, &span, &sec, ZONE_COMPONENT_TYPES) else {
                continue;
            };
            let c = match kind {
                "internal-wall" => {
                    let (mut s, _) = self.identified(table, span, "internal wall", i);
                    ZoneComponent::InternalWall(self.wall(&mut s, None))
                }
                "ideal-air-handler" => {
                    let (s, id) = self.identified(table, span, "air handler", i);
                    self.check_keys(&s, &["type", "id", "setpoint", "max-power", "mode"]);
                    ZoneComponent::IdealAirHandler(IdealAirHandler {
                        setpoint: self.quantity(&s, "setpoint", Dimension::Temperature, None),
                        max_power: self.quantity(&s, "max-power", Dimension::Power, None),
                        mode: self.keyword(&s, "mode", HVAC_MODES, Some(HvacMode::Both)).unwrap_or(HvacMode::Both),
                        id,
                    })
                }
                "internal-load" => {
                    let (s, id) = self.identified(table, span, "internal load", i);
                    self.check_keys(&s, &["type", "id", "power", "radiative-fraction"]);
                    ZoneComponent::InternalLoad(InternalLoad {
                        power: self.schedule(&s, "power", Dimension::Power, None),
                        radiative_fraction: self.number(&s, "radiative-fraction", Some(0.0)),
                        id,
                    })
                }
                _ => {
                    let (s, id) = self.identified(table, span, "vmc", i);
                    self.check_keys(&s, &["type", "id", "extract"]);
                    ZoneComponent::VmcVent(VmcVent {
                        extract: self.schedule(&s, "extract", Dimension::MassFlow, None),
                        id,
                    })
                }
            };
            zone.components.push(c);
        }
        zone
    }

    fn component_type(
        &mut self,
        table: &DeTable,
        span: &Range<usize>,
        parent: &Section,
        allowed: &[&'static str],
    ) -> Option<&'static str> {
        let sec = Section::new(table, span.clone(), parent.entity.clone());
        let Some(v) = sec.lookup("type") else {
            self.missing(&sec, "type");
            return None;
        };
        let found = v.get_ref().as_str().and_then(|s| allowed.iter().find(|a| **a == s));
        if found.is_none() {
            let names: Vec<String> = allowed.iter().map(|n| format!("\"{n}\"")).collect();
            self.error(
                &parent.entity,
                v.span(),
                format!("component `type` must be one of {}", names.join(", ")),
            );
        }
        found.copied()
    }

    fn films(&mut self, sec: &Section) -> FilmOverrides {
        FilmOverrides {
            h_ci: self.opt_quantity(sec, "h-ci", Dimension::FilmCoefficient),
            h_ri: self.opt_quantity(sec, "h-ri", Dimension::FilmCoefficient),
            h_ce: self.opt_quantity(sec, "h-ce", Dimension::FilmCoefficient),
            h_re: self.opt_quantity(sec, "h-re", Dimension::FilmCoefficient),
        }
    }

    fn wall(&mut self, sec: &mut Section, ground: Option<GroundContact>) -> Wall {
        self.check_keys(
            sec,
            &[
                "type",
                "id",
                "area",
                "azimuth",
                "tilt",
                "elevation",
                "absorptance",
                "emissivity",
                "h-ci",
                "h-ri",
                "h-ce",
                "h-re",
                "conduction",
                "nodes-per-layer",
                "far-side-temperature",
                "layer",
            ],
        );
        let default_tilt = if ground == Some(GroundContact::SlabOnGrade) { 180.0 } else { 90.0 };
        let mut wall = Wall {
            id: self.text(sec, "id", None),
            area: self.quantity(sec, "area", Dimension::Area, None),
            azimuth: self.quantity(sec, "azimuth", Dimension::Angle, Some(0.0)),
            tilt: self.quantity(sec, "tilt", Dimension::Angle, Some(default_tilt)),
            elevation: self.quantity(sec, "elevation", Dimension::Length, Some(0.0)),
            layers: Vec::new(),
            absorptance: self.number(sec, "absorptance", Some(0.6)),
            emissivity: self.number(sec, "emissivity", Some(0.9)),
            films: self.films(sec),
            conduction: self.conduction(sec),
            ground,
            far_side_temperature: self.opt_quantity(sec, "far-side-temperature", Dimension::Temperature),
        };
        let layers = self.tables(sec, "layer");
        if layers.is_empty() {
            self.missing(sec, "layer");
        }
        for (i, (table, span)) in layers.into_iter().enumerate() {
            let s = Section {
                table,
                span,
                entity: sec.entity.clone(),
                prefix: format!("layer {} ", i + 1),
            };
            self.check_keys(&s, &["conductivity", "density", "specific-heat", "thickness"]);
            wall.layers.push(Layer {
                conductivity: self.quantity(&s, "conductivity", Dimension::Conductivity, None),
                density: self.quantity(&s, "density", Dimension::Density, None),
                specific_heat: self.quantity(&s, "specific-heat", Dimension::SpecificHeat, None),
                thickness: self.quantity(&s, "thickness", Dimension::Length, None),
            });
        }
        wall
    }

    fn inter_ambiance(&mut self, table: &DeTable, span: Range<usize>, index: usize) -> InterAmbiance {
        let (sec, id) = self.identified(table, span, "inter-ambiance", index);
        self.entities.remove(&format!("component \"{id}\""));
        self.check_keys(&sec, &["id", "zone-a", "zone-b", "component"]);
        let mut ia = InterAmbiance {
            zone_a: self.text(&sec, "zone-a", None),
            zone_b: self.text(&sec, "zone-b", None),
            components: Vec::new(),
            id,
        };
        for (i, (table, span)) in self.tables(&sec, "component").into_iter().enumerate() {
            let Some(kind) = self.component_type(table, &span, &sec, SEPARATION_COMPONENT_TYPES) else {
                continue;
            };
            let c = match kind {
                "wall" | "slab-on-grade" | "crawl-space-wall" | "wall-on-grade" => {
                    let ground = match kind {
                        "slab-on-grade" => Some(GroundContact::SlabOnGrade),
                        "crawl-space-wall" => Some(GroundContact::CrawlSpace),
                        "wall-on-grade" => Some(GroundContact::WallOnGrade),
                        _ => None,
                    };
                    let (mut s, _) = self.identified(table, span, "wall", i);
                    SeparationComponent::SeparationWall(self.wall(&mut s, ground))
                }
                "glazing" => {
                    let (s, id) = self.identified(table, span, "glazing", i);
                    self.check_keys(
                        &s,
                        &[
                            "type",
                            "id",
                            "area",
                            "azimuth",
                            "tilt",
                            "elevation",
                            "conductance",
                            "transmittance",
                            "absorptance",
                            "emissivity",
                            "h-ci",
                            "h-ri",
                            "h-ce",
                            "h-re",
                        ],
                    );
                    SeparationComponent::Glazing(Glazing {
                        area: self.quantity(&s, "area", Dimension::Area, None),
                        azimuth: self.quantity(&s, "azimuth", Dimension::Angle, Some(0.0)),
                        tilt: self.quantity(&s, "tilt", Dimension::Angle, Some(90.0)),
                        elevation: self.quantity(&s, "elevation", Dimension::Length, Some(0.0)),
                        conductance: self.quantity(&s, "conductance", Dimension::FilmCoefficient, None),
                        transmittance: self.number(&s, "transmittance", None),
                        absorptance: self.number(&s, "absorptance", Some(0.1)),
                        emissivity: self.number(&s, "emissivity", Some(0.84)),
                        films: self.films(&s),
                        id,
                    })
                }
                "large-opening" => {
                    let (s, id) = self.identified(table, span, "large opening", i);
                    self.check_keys(
                        &s,
                        &["type", "id", "width", "height", "bottom-elevation", "discharge-coefficient"],
                    );
                    SeparationComponent::LargeOpening(LargeOpening {
                        width: self.quantity(&s, "width", Dimension::Length, None),
                        height: self.quantity(&s, "height", Dimension::Length, None),
                        bottom_elevation: self.quantity(&s, "bottom-elevation", Dimension::Length, Some(0.0)),
                        discharge_coefficient: self.number(&s, "discharge-coefficient", Some(0.6)),
                        id,
                    })
                }
                "crack" | "vent" => {
                    let (s, id) = self.identified(table, span, "crack", i);
                    self.check_keys(&s, &["type", "id", "coefficient", "exponent", "elevation", "azimuth"]);
                    SeparationComponent::SmallOpening(SmallOpening {
                        coefficient: self.quantity(&s, "coefficient", Dimension::FlowCoefficient, None),
                        exponent: self.number(&s, "exponent", Some(0.65)),
                        elevation: self.quantity(&s, "elevation", Dimension::Length, Some(0.0)),
                        azimuth: self.opt_quantity(&s, "azimuth", Dimension::Angle),
                        id,
                    })
                }
                _ => {
                    let (s, id) = self.identified(table, span, "known flow", i);
                    self.check_keys(&s, &["type", "id", "flow"]);
                    SeparationComponent::KnownFlow(KnownFlow {
                        flow: self.schedule(&s, "flow", Dimension::MassFlow, None),
                        id,
                    })
                }
            };
            ia.components.push(c);
        }
        ia
    }

    /// Attaches the most precise known location to each validation finding.
    fn place(&self, findings: Vec<Diagnostic>) -> Vec<Diagnostic> {
        findings
            .into_iter()
            .take(MAX_DIAGNOSTICS)
            .map(|mut d| {
                let rule = normalize(&d.rule);
                let field = self.fields.get(&d.entity).and_then(|fields| {
                    fields
                        .iter()
                        .filter(|(name, _)| rule.starts_with(name.as_str()))
                        .max_by_key(|(name, _)| name.len())
                        .map(|(_, loc)| *loc)
                });
                d.location = field
                    .or_else(|| self.entities.get(&d.entity).copied())
                    .or(Some(Location { line: 1, column: 1 }));
                d
            })
            .collect()
    }
}

#[derive(Clone, Copy)]
enum ConductionKeyword {
    R2c,
    Fd1d,
}

const SIMULATION_TYPES: &[(&str, SimulationType)] = &[
    ("thermal", SimulationType::ThermalOnly),
    ("thermal-airflow", SimulationType::ThermalAirflow),
    ("airflow", SimulationType::AirflowOnly),
    ("thermal-airflow-moisture", SimulationType::ThermalAirflowMoisture),
];
const TIME_SCHEMES: &[(&str, TimeScheme)] = &[
    ("backward-euler", TimeScheme::BackwardEuler),
    ("crank-nicolson", TimeScheme::CrankNicolson),
];
const COUPLING_MODES: &[(&str, CouplingMode)] =
    &[("one-way", CouplingMode::OneWay), ("iterative", CouplingMode::Iterative)];
const CONDUCTION_MODELS: &[(&str, Option<ConductionKeyword>)] =
    &[("r2c", Some(ConductionKeyword::R2c)), ("fd1d", Some(ConductionKeyword::Fd1d))];
const LONGWAVE_MODELS: &[(&str, LongwaveModel)] = &[
    ("radiant-mean-node", LongwaveModel::RadiantMeanNode),
    ("none", LongwaveModel::None),
];
const HVAC_MODES: &[(&str, HvacMode)] = &[
    ("heating", HvacMode::Heating),
    ("cooling", HvacMode::Cooling),
    ("both", HvacMode::Both),
];
const ZONE_COMPONENT_TYPES: &[&str] = &["internal-wall", "ideal-air-handler", "internal-load", "vmc"];
const SEPARATION_COMPONENT_TYPES: &[&str] = &[
    "wall",
    "slab-on-grade",
    "crawl-space-wall",
    "wall-on-grade",
    "glazing",
    "large-opening",
    "crack",
    "vent",
    "known-flow",
];

fn output_keywords() -> Vec<(&'static str, OutputVariable)> {
    [
        OutputVariable::AirTemperature,
        OutputVariable::SurfaceTemperature(Side::Interior),
        OutputVariable::SurfaceTemperature(Side::Exterior),
        OutputVariable::SurfaceFlux(Side::Interior),
        OutputVariable::SurfaceFlux(Side::Exterior),
        OutputVariable::Pressure,
        OutputVariable::LinkFlow,
        OutputVariable::Humidity,
        OutputVariable::HvacPower,
        OutputVariable::Comfort,
    ]
    .into_iter()
    .map(|v| (v.keyword(), v))
    .collect()
}

fn keyword_of<T: PartialEq>(options: &[(&'static str, T)], value: &T) -> &'static str {
    options.iter().find(|(_, v)| v == value).map_or("", |(k, _)| k)
}

/// Parses a `.bdn` file. Every rejection carries a line/column location.
pub fn parse_building(bytes: &[u8]) -> Result<BuildingDescription, Vec<Diagnostic>> {
    let src = match std::str::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => {
            let good = &bytes[..e.valid_up_to()];
            let line = good.iter().filter(|&&b| b == b'\n').count() + 1;
            let line_start = good.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            let column = String::from_utf8_lossy(&good[line_start..]).chars().count() + 1;
            let mut d = Diagnostic::new("building file", "invalid UTF-8");
            d.location = Some(Location { line, column });
            return Err(vec![d]);
        }
    };
    let mut reader = Reader::new(src);
    let root = match DeTable::parse(src) {
        Ok(root) => root,
        Err(e) => {
            let span = e.span().unwrap_or(0..0);
            reader.error("building file", span, e.message().trim().to_string());
            return Err(reader.diags);
        }
    };
    let mut top = Section::new(root.get_ref(), 0..0, "building file");
    let desc = reader.building(&mut top);
    if !reader.diags.is_empty() {
        return Err(reader.diags);
    }
    let findings = desc.validate();
    if findings.is_empty() {
        Ok(desc)
    } else {
        Err(reader.place(findings))
    }
}

fn string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn number(v: f64) -> String {
    toml::Value::Float(v).to_string()
}

fn quantity(v: f64, dim: Dimension) -> String {
    string(&format_quantity(v, dim))
}

fn schedule(s: &Schedule, dim: Dimension) -> String {
    match s.values.as_slice() {
        [v] => quantity(*v, dim),
        values => {
            let items: Vec<String> = values.iter().map(|v| quantity(*v, dim)).collect();
            format!("[{}]", items.join(", "))
        }
    }
}

fn write_films(out: &mut String, f: &FilmOverrides) {
    for (key, v) in [("h-ci", f.h_ci), ("h-ri", f.h_ri), ("h-ce", f.h_ce), ("h-re", f.h_re)] {
        if let Some(v) = v {
            let _ = writeln!(out, "{key} = {}", quantity(v, Dimension::FilmCoefficient));
        }
    }
}

fn write_conduction(out: &mut String, model: ConductionModel) {
    match model {
        ConductionModel::R2C => {
            let _ = writeln!(out, "conduction = \"r2c\"");
        }
        ConductionModel::FD1D { nodes_per_layer } => {
            let _ = writeln!(out, "conduction = \"fd1d\"\nnodes-per-layer = {nodes_per_layer}");
        }
    }
}

fn write_wall(out: &mut String, header: &str, kind: &str, w: &Wall) {
    let _ = writeln!(out, "\n[[{header}]]\ntype = \"{kind}\"\nid = {}", string(&w.id));
    let _ = writeln!(out, "area = {}", quantity(w.area, Dimension::Area));
    let _ = writeln!(out, "azimuth = {}", quantity(w.azimuth, Dimension::Angle));
    let _ = writeln!(out, "tilt = {}", quantity(w.tilt, Dimension::Angle));
    let _ = writeln!(out, "elevation = {}", quantity(w.elevation, Dimension::Length));
    let _ = writeln!(out, "absorptance = {}", number(w.absorptance));
    let _ = writeln!(out, "emissivity = {}", number(w.emissivity));
    write_films(out, &w.films);
    if let Some(m) = w.conduction {
        write_conduction(out, m);
    }
    if let Some(t) = w.far_side_temperature {
        let _ = writeln!(out, "far-side-temperature = {}", quantity(t, Dimension::Temperature));
    }
    for l in &w.layers {
        let _ = writeln!(out, "\n[[{header}.layer]]");
        let _ = writeln!(out, "conductivity = {}", quantity(l.conductivity, Dimension::Conductivity));
        let _ = writeln!(out, "density = {}", quantity(l.density, Dimension::Density));
        let _ = writeln!(out, "specific-heat = {}", quantity(l.specific_heat, Dimension::SpecificHeat));
        let _ = writeln!(out, "thickness = {}", quantity(l.thickness, Dimension::Length));
    }
}

/// Writes `desc` as a `.bdn` document; [`parse_building`] restores it exactly.
pub fn serialize_building(desc: &BuildingDescription) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format = \"{BUILDING_FORMAT}\"\nversion = {BUILDING_VERSION}");
    let _ = writeln!(out, "name = {}", string(&desc.name));
    let _ = writeln!(
        out,
        "simulation-type = \"{}\"\ntime-scheme = \"{}\"",
        keyword_of(SIMULATION_TYPES, &desc.simulation_type),
        keyword_of(TIME_SCHEMES, &desc.time_scheme)
    );

    let c = &desc.coupling;
    let _ = writeln!(out, "\n[coupling]\nmode = \"{}\"", keyword_of(COUPLING_MODES, &c.mode));
    let _ = writeln!(out, "max-iterations = {}", c.max_iterations);
    let _ = writeln!(
        out,
        "air-temperature-tolerance = {}",
        quantity(c.air_temp_tolerance, Dimension::TemperatureDifference)
    );
    let _ = writeln!(out, "flow-tolerance = {}", quantity(c.flow_tolerance, Dimension::MassFlow));

    let s = &desc.airflow_solver;
    let _ = writeln!(out, "\n[airflow-solver]\nrelaxation = {}", number(s.relaxation));
    let _ = writeln!(out, "max-iterations = {}", s.max_iterations);
    let _ = writeln!(out, "residual-tolerance = {}", quantity(s.residual_tolerance, Dimension::MassFlow));
    let _ = writeln!(out, "pressure-tolerance = {}", quantity(s.pressure_tolerance, Dimension::Pressure));
    let _ = writeln!(out, "picard-restarts = {}", s.picard_restarts);
    let _ = writeln!(out, "jacobian-probe = {}", quantity(s.jacobian_probe, Dimension::Pressure));

    let _ = writeln!(out, "\n[moisture]\nbuffers = {}", desc.moisture.buffers);

    let site = &desc.site;
    let _ = writeln!(out, "\n[site]\nlatitude = {}", quantity(site.latitude, Dimension::Angle));
    let _ = writeln!(out, "longitude = {}", quantity(site.longitude, Dimension::Angle));
    let _ = writeln!(out, "time-zone = {}", number(site.time_zone));
    let _ = writeln!(out, "ground-albedo = {}", number(site.ground_albedo));
    if let Some(t) = site.ground_temperature {
        let _ = writeln!(out, "ground-temperature = {}", quantity(t, Dimension::Temperature));
    }
    let _ = writeln!(
        out,
        "sky-temperature-offset = {}",
        quantity(site.sky_temperature_offset, Dimension::TemperatureDifference)
    );
    if site.cp_table.is_empty() {
        let _ = writeln!(out, "cp = []");
    }
    for sector in &site.cp_table {
        let _ = writeln!(
            out,
            "\n[[site.cp]]\nfrom = {}\nto = {}\ncp = {}",
            quantity(sector.from, Dimension::Angle),
            quantity(sector.to, Dimension::Angle),
            number(sector.cp)
        );
    }

    let f = &desc.films;
    let _ = writeln!(out, "\n[films]");
    for (key, v) in [("h-ci", f.h_ci), ("h-ri", f.h_ri), ("h-ce", f.h_ce), ("h-re", f.h_re)] {
        let _ = writeln!(out, "{key} = {}", quantity(v, Dimension::FilmCoefficient));
    }

    for zone in &desc.zones {
        let _ = writeln!(out, "\n[[zone]]\nid = {}", string(&zone.id));
        let _ = writeln!(out, "volume = {}", quantity(zone.air_volume, Dimension::Volume));
        let _ = writeln!(out, "reference-height = {}", quantity(zone.reference_height, Dimension::Length));
        write_conduction(&mut out, zone.model.conduction);
        let _ = writeln!(out, "longwave = \"{}\"", keyword_of(LONGWAVE_MODELS, &zone.model.longwave));
        let _ = writeln!(out, "moisture-gain = {}", schedule(&zone.moisture_gain, Dimension::MassFlow));
        if let Some(b) = &zone.buffer {
            let _ = writeln!(out, "buffer-mass = {}", quantity(b.mass, Dimension::Mass));
            let _ = writeln!(out, "buffer-exchange = {}", quantity(b.exchange, Dimension::MassFlow));
        }
        for comp in &zone.components {
            match comp {
                ZoneComponent::InternalWall(w) => write_wall(&mut out, "zone.component", "internal-wall", w),
                ZoneComponent::IdealAirHandler(h) => {
                    let _ = writeln!(
                        out,
                        "\n[[zone.component]]\ntype = \"ideal-air-handler\"\nid = {}\nsetpoint = {}\nmax-power = {}\nmode = \"{}\"",
                        string(&h.id),
                        quantity(h.setpoint, Dimension::Temperature),
                        quantity(h.max_power, Dimension::Power),
                        keyword_of(HVAC_MODES, &h.mode)
                    );
                }
                ZoneComponent::InternalLoad(l) => {
                    let _ = writeln!(
                        out,
                        "\n[[zone.component]]\ntype = \"internal-load\"\nid = {}\npower = {}\nradiative-fraction = {}",
                        string(&l.id),
                        schedule(&l.power, Dimension::Power),
                        number(l.radiative_fraction)
                    );
                }
                ZoneComponent::VmcVent(v) => {
                    let _ = writeln!(
                        out,
                        "\n[[zone.component]]\ntype = \"vmc\"\nid = {}\nextract = {}",
                        string(&v.id),
                        schedule(&v.extract, Dimension::MassFlow)
                    );
                }
            }
        }
    }

    for ia in &desc.inter_ambiances {
        let _ = writeln!(
            out,
            "\n[[inter-ambiance]]\nid = {}\nzone-a = {}\nzone-b = {}",
            string(&ia.id),
            string(&ia.zone_a),
            string(&ia.zone_b)
        );
        for comp in &ia.components {
            match comp {
                SeparationComponent::SeparationWall(w) => {
                    let kind = match w.ground {
                        None => "wall",
                        Some(GroundContact::SlabOnGrade) => "slab-on-grade",
                        Some(GroundContact::CrawlSpace) => "crawl-space-wall",
                        Some(GroundContact::WallOnGrade) => "wall-on-grade",
                    };
                    write_wall(&mut out, "inter-ambiance.component", kind, w);
                }
                SeparationComponent::Glazing(g) => {
                    let _ = writeln!(
                        out,
                        "\n[[inter-ambiance.component]]\ntype = \"glazing\"\nid = {}",
                        string(&g.id)
                    );
                    let _ = writeln!(out, "area = {}", quantity(g.area, Dimension::Area));
                    let _ = writeln!(out, "azimuth = {}", quantity(g.azimuth, Dimension::Angle));
                    let _ = writeln!(out, "tilt = {}", quantity(g.tilt, Dimension::Angle));
                    let _ = writeln!(out, "elevation = {}", quantity(g.elevation, Dimension::Length));
                    let _ = writeln!(out, "conductance = {}", quantity(g.conductance, Dimension::FilmCoefficient));
                    let _ = writeln!(out, "transmittance = {}", number(g.transmittance));
                    let _ = writeln!(out, "absorptance = {}", number(g.absorptance));
                    let _ = writeln!(out, "emissivity = {}", number(g.emissivity));
                    write_films(&mut out, &g.films);
                }
                SeparationComponent::LargeOpening(o) => {
                    let _ = writeln!(
                        out,
                        "\n[[inter-ambiance.component]]\ntype = \"large-opening\"\nid = {}\nwidth = {}\nheight = {}\nbottom-elevation = {}\ndischarge-coefficient = {}",
                        string(&o.id),
                        quantity(o.width, Dimension::Length),
                        quantity(o.height, Dimension::Length),
                        quantity(o.bottom_elevation, Dimension::Length),
                        number(o.discharge_coefficient)
                    );
                }
                SeparationComponent::SmallOpening(o) => {
                    let _ = writeln!(
                        out,
                        "\n[[inter-ambiance.component]]\ntype = \"crack\"\nid = {}\ncoefficient = {}\nexponent = {}\nelevation = {}",
                        string(&o.id),
                        quantity(o.coefficient, Dimension::FlowCoefficient),
                        number(o.exponent),
                        quantity(o.elevation, Dimension::Length)
                    );
                    if let Some(a) = o.azimuth {
                        let _ = writeln!(out, "azimuth = {}", quantity(a, Dimension::Angle));
                    }
                }
                SeparationComponent::KnownFlow(k) => {
                    let _ = writeln!(
                        out,
                        "\n[[inter-ambiance.component]]\ntype = \"known-flow\"\nid = {}\nflow = {}",
                        string(&k.id),
                        schedule(&k.flow, Dimension::MassFlow)
                    );
                }
            }
        }
    }

    for req in &desc.outputs {
        let _ = writeln!(
            out,
            "\n[[output]]\nentity = {}\nvariable = \"{}\"",
            string(&req.entity),
            req.variable.keyword()
        );
    }
    out
}
