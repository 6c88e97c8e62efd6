//! CSV and JSON cohort files.
//!
//! CSV: one row per patient; `id`, then `<organ>__<feature>` for all 21 features of
//! every organ, then `sym__<symptom>__<timepoint>`, then `conf__<name>`. Empty cells
//! mark missing values.
//!
//! JSON: the schema lists (`organs`, `time_points`, `symptoms`, `confounders`) and a
//! `patients` array whose entries hold `dvh`, `symptoms` and `confounders` maps.

use std::collections::HashMap;
use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Cohort, FeatureKey, OrganDvh, OrganId, Patient, SymptomSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortFormat {
    Csv,
    Json,
}

impl CohortFormat {
    /// Infers the format from the file extension (`.csv` or `.json`).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(CohortFormat::Csv),
            Some(e) if e.eq_ignore_ascii_case("json") => Ok(CohortFormat::Json),
            _ => Err(Error::invalid(
                "format",
                format!("cannot infer cohort format from {}", path.display()),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Accept patients without dose data for some organs (they are then excluded
    /// from any feature space touching those organs).
    #[serde(default)]
    pub allow_missing: bool,
}

pub fn load_cohort(path: &Path, format: CohortFormat, options: &LoadOptions) -> Result<Cohort> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CohortFormat::Csv => Cohort::from_csv_str(&text, options),
        CohortFormat::Json => Cohort::from_json_str(&text, options),
    }
}

pub fn save_cohort(cohort: &Cohort, path: &Path, format: CohortFormat) -> Result<()> {
    let text = match format {
        CohortFormat::Csv => cohort.to_csv_string()?,
        CohortFormat::Json => cohort.to_json_string()?,
    };
    crate::util::write_atomic(path, text.as_bytes())
}

/// A string-keyed map that keeps insertion order in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedMap<T>(pub Vec<(String, T)>);

impl<T> OrderedMap<T> {
    fn get(&self, key: &str) -> Option<&T> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

impl<T: Serialize> Serialize for OrderedMap<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for OrderedMap<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct OrderedVisitor<T>(PhantomData<T>);
        impl<'de, T: Deserialize<'de>> Visitor<'de> for OrderedVisitor<T> {
            type Value = OrderedMap<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, T>()? {
                    entries.push((k, v));
                }
                Ok(OrderedMap(entries))
            }
        }
        deserializer.deserialize_map(OrderedVisitor(PhantomData))
    }
}

/// JSON view of one patient; also the payload of the patient tooltip endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatientDoc {
    pub id: String,
    pub dvh: OrderedMap<Option<OrderedMap<f64>>>,
    pub symptoms: OrderedMap<OrderedMap<Option<i64>>>,
    pub confounders: OrderedMap<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CohortDoc {
    organs: Vec<OrganId>,
    time_points: Vec<String>,
    symptoms: Vec<String>,
    confounders: Vec<String>,
    patients: Vec<PatientDoc>,
}

fn dvh_doc(dvh: &OrganDvh) -> OrderedMap<f64> {
    OrderedMap(dvh.entries().map(|(k, v)| (k.to_string(), v)).collect())
}

fn dvh_from_values(values: &[f64; 21]) -> OrganDvh {
    let mut vx = [0.0; 19];
    vx.copy_from_slice(&values[..19]);
    OrganDvh::from_parts(vx, values[19], values[20])
}

fn check_rating(patient: &str, field: String, value: i64) -> Result<u8> {
    if (0..=10).contains(&value) {
        Ok(value as u8)
    } else {
        Err(Error::RatingOutOfRange {
            patient: patient.to_string(),
            field,
            value,
        })
    }
}

fn check_binary(patient: &str, name: &str, value: i64) -> Result<u8> {
    match value {
        0 | 1 => Ok(value as u8),
        _ => Err(Error::Schema {
            location: format!("conf__{name}"),
            message: format!("confounders are binary; patient {patient:?} has {value}"),
        }),
    }
}

impl Cohort {
    /// The JSON view of patient `index`.
    pub fn patient_document(&self, index: usize) -> PatientDoc {
        let p = &self.patients[index];
        PatientDoc {
            id: p.id.clone(),
            dvh: OrderedMap(
                self.organs
                    .iter()
                    .zip(&p.dvh)
                    .map(|(o, d)| (o.name().to_string(), d.as_ref().map(dvh_doc)))
                    .collect(),
            ),
            symptoms: OrderedMap(
                p.symptoms
                    .iter()
                    .map(|s| {
                        let ratings = self
                            .time_points
                            .iter()
                            .zip(&s.ratings)
                            .map(|(t, r)| (t.clone(), r.map(i64::from)))
                            .collect();
                        (s.symptom.clone(), OrderedMap(ratings))
                    })
                    .collect(),
            ),
            confounders: OrderedMap(
                self.confounders
                    .iter()
                    .zip(&p.confounders)
                    .map(|(c, v)| (c.clone(), i64::from(*v)))
                    .collect(),
            ),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = CohortDoc {
            organs: self.organs.clone(),
            time_points: self.time_points.clone(),
            symptoms: self.symptoms.clone(),
            confounders: self.confounders.clone(),
            patients: (0..self.len()).map(|i| self.patient_document(i)).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json_str(text: &str, options: &LoadOptions) -> Result<Cohort> {
        let doc: CohortDoc = serde_json::from_str(text)?;
        let mut patients = Vec::with_capacity(doc.patients.len());
        for (row, pd) in doc.patients.iter().enumerate() {
            for (name, _) in &pd.dvh.0 {
                if !doc.organs.iter().any(|o| o.name() == name) {
                    return Err(Error::Schema {
                        location: format!("patients[{row}].dvh.{name}"),
                        message: "organ is not in the organ list".into(),
                    });
                }
            }
            let mut dvh = Vec::with_capacity(doc.organs.len());
            for organ in &doc.organs {
                let entry = match pd.dvh.get(organ.name()) {
                    Some(Some(map)) => {
                        let mut values = [0.0; 21];
                        for (slot, key) in values.iter_mut().zip(FeatureKey::all()) {
                            *slot = *map.get(&key.to_string()).ok_or_else(|| Error::Schema {
                                location: format!("patients[{row}].dvh.{}.{key}", organ.name()),
                                message: "missing dose feature".into(),
                            })?;
                        }
                        if map.0.len() != 21 {
                            return Err(Error::Schema {
                                location: format!("patients[{row}].dvh.{}", organ.name()),
                                message: "unexpected dose feature keys".into(),
                            });
                        }
                        Some(dvh_from_values(&values))
                    }
                    _ => None,
                };
                dvh.push(entry);
            }
            let mut symptoms = Vec::with_capacity(doc.symptoms.len());
            for s in &doc.symptoms {
                let series = pd.symptoms.get(s);
                let mut ratings = Vec::with_capacity(doc.time_points.len());
                for t in &doc.time_points {
                    let r = match series.and_then(|m| m.get(t)).copied().flatten() {
                        Some(v) => Some(check_rating(&pd.id, format!("sym__{s}__{t}"), v)?),
                        None => None,
                    };
                    ratings.push(r);
                }
                symptoms.push(SymptomSeries {
                    symptom: s.clone(),
                    ratings,
                });
            }
            let mut confounders = Vec::with_capacity(doc.confounders.len());
            for c in &doc.confounders {
                let v = pd.confounders.get(c).ok_or_else(|| Error::Schema {
                    location: format!("patients[{row}].confounders.{c}"),
                    message: "missing confounder value".into(),
                })?;
                confounders.push(check_binary(&pd.id, c, *v)?);
            }
            patients.push(Patient {
                id: pd.id.clone(),
                dvh,
                symptoms,
                confounders,
            });
        }
        Cohort::new(
            doc.organs,
            doc.time_points,
            doc.symptoms,
            doc.confounders,
            patients,
            options.allow_missing,
        )
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        for o in &self.organs {
            header.extend(FeatureKey::all().map(|k| format!("{}__{k}", o.name())));
        }
        for s in &self.symptoms {
            header.extend(self.time_points.iter().map(|t| format!("sym__{s}__{t}")));
        }
        header.extend(self.confounders.iter().map(|c| format!("conf__{c}")));
        writer.write_record(&header)?;

        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for p in &self.patients {
            record.clear();
            record.push(p.id.clone());
            for d in &p.dvh {
                match d {
                    Some(d) => record.extend(d.entries().map(|(_, v)| v.to_string())),
                    None => record.extend(std::iter::repeat_n(String::new(), 21)),
                }
            }
            for s in &p.symptoms {
                record.extend(
                    s.ratings
                        .iter()
                        .map(|r| r.map(|v| v.to_string()).unwrap_or_default()),
                );
            }
            record.extend(p.confounders.iter().map(|c| c.to_string()));
            writer.write_record(&record)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::invalid("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    pub fn from_csv_str(text: &str, options: &LoadOptions) -> Result<Cohort> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        let layout = CsvLayout::parse(&header)?;

        let mut patients = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let cell = |col: usize| record.get(col).unwrap_or("").trim();
            let id = cell(0).to_string();
            if id.is_empty() {
                return Err(Error::Schema {
                    location: format!("line {line}, column id"),
                    message: "empty patient id".into(),
                });
            }
            let mut dvh = Vec::with_capacity(layout.organs.len());
            for (organ, cols) in layout.organs.iter().zip(&layout.organ_columns) {
                let cells: Vec<&str> = cols.iter().map(|&c| cell(c)).collect();
                if cells.iter().all(|c| c.is_empty()) {
                    dvh.push(None);
                    continue;
                }
                let mut values = [0.0; 21];
                for ((slot, text), key) in values.iter_mut().zip(&cells).zip(FeatureKey::all()) {
                    *slot = text.parse::<f64>().map_err(|_| Error::Schema {
                        location: format!("line {line}, column {}__{key}", organ.name()),
                        message: format!("expected a dose in Gy, found {text:?}"),
                    })?;
                }
                dvh.push(Some(dvh_from_values(&values)));
            }
            let mut symptoms = Vec::with_capacity(layout.symptoms.len());
            for (si, s) in layout.symptoms.iter().enumerate() {
                let mut ratings = Vec::with_capacity(layout.time_points.len());
                for (ti, t) in layout.time_points.iter().enumerate() {
                    let text = cell(layout.rating_columns[si][ti]);
                    let field = format!("sym__{s}__{t}");
                    if text.is_empty() {
                        ratings.push(None);
                        continue;
                    }
                    let v = text.parse::<i64>().map_err(|_| Error::Schema {
                        location: format!("line {line}, column {field}"),
                        message: format!("expected an integer rating, found {text:?}"),
                    })?;
                    ratings.push(Some(check_rating(&id, field, v)?));
                }
                symptoms.push(SymptomSeries {
                    symptom: s.clone(),
                    ratings,
                });
            }
            let mut confounders = Vec::with_capacity(layout.confounders.len());
            for (c, &col) in layout.confounders.iter().zip(&layout.confounder_columns) {
                let text = cell(col);
                let v = text.parse::<i64>().map_err(|_| Error::Schema {
                    location: format!("line {line}, column conf__{c}"),
                    message: format!("expected 0 or 1, found {text:?}"),
                })?;
                confounders.push(check_binary(&id, c, v)?);
            }
            patients.push(Patient {
                id,
                dvh,
                symptoms,
                confounders,
            });
        }
        Cohort::new(
            layout.organs,
            layout.time_points,
            layout.symptoms,
            layout.confounders,
            patients,
            options.allow_missing,
        )
    }
}

/// Column roles recovered from a CSV header.
struct CsvLayout {
    organs: Vec<OrganId>,
    organ_columns: Vec<Vec<usize>>,
    time_points: Vec<String>,
    symptoms: Vec<String>,
    rating_columns: Vec<Vec<usize>>,
    confounders: Vec<String>,
    confounder_columns: Vec<usize>,
}

impl CsvLayout {
    fn parse(header: &csv::StringRecord) -> Result<Self> {
        let schema = |col: usize, message: &str| Error::Schema {
            location: format!("header column {}", col + 1),
            message: message.to_string(),
        };
        if header.get(0) != Some("id") {
            return Err(schema(0, "first column must be `id`"));
        }
        let mut organ_names: Vec<String> = Vec::new();
        let mut organ_cols: HashMap<String, HashMap<FeatureKey, usize>> = HashMap::new();
        let mut symptoms: Vec<String> = Vec::new();
        let mut time_points: Vec<String> = Vec::new();
        let mut ratings: HashMap<(String, String), usize> = HashMap::new();
        let mut confounders = Vec::new();
        let mut confounder_columns = Vec::new();

        for (col, name) in header.iter().enumerate().skip(1) {
            if let Some(rest) = name.strip_prefix("sym__") {
                let (s, t) = rest
                    .split_once("__")
                    .ok_or_else(|| schema(col, "expected sym__<symptom>__<timepoint>"))?;
                if !symptoms.iter().any(|x| x == s) {
                    symptoms.push(s.to_string());
                }
                if !time_points.iter().any(|x| x == t) {
                    time_points.push(t.to_string());
                }
                if ratings.insert((s.to_string(), t.to_string()), col).is_some() {
                    return Err(schema(col, "duplicate symptom column"));
                }
            } else if let Some(c) = name.strip_prefix("conf__") {
                if confounders.iter().any(|x| x == c) {
                    return Err(schema(col, "duplicate confounder column"));
                }
                confounders.push(c.to_string());
                confounder_columns.push(col);
            } else {
                let (organ, feature) = name
                    .rsplit_once("__")
                    .ok_or_else(|| schema(col, "expected <organ>__<feature>"))?;
                let key: FeatureKey = feature
                    .parse()
                    .map_err(|_| schema(col, &format!("unknown dose feature {feature:?}")))?;
                if !organ_names.iter().any(|x| x == organ) {
                    organ_names.push(organ.to_string());
                }
                let cols = organ_cols.entry(organ.to_string()).or_default();
                if cols.insert(key, col).is_some() {
                    return Err(schema(col, "duplicate dose column"));
                }
            }
        }

        let mut organ_columns = Vec::with_capacity(organ_names.len());
        for organ in &organ_names {
            let cols = &organ_cols[organ];
            let mut ordered = Vec::with_capacity(21);
            for key in FeatureKey::all() {
                ordered.push(*cols.get(&key).ok_or_else(|| Error::Schema {
                    location: format!("header column {organ}__{key}"),
                    message: "missing dose feature column".into(),
                })?);
            }
            organ_columns.push(ordered);
        }
        let mut rating_columns = Vec::with_capacity(symptoms.len());
        for s in &symptoms {
            let mut row = Vec::with_capacity(time_points.len());
            for t in &time_points {
                row.push(
                    *ratings
                        .get(&(s.clone(), t.clone()))
                        .ok_or_else(|| Error::Schema {
                            location: format!("header column sym__{s}__{t}"),
                            message: "missing symptom rating column".into(),
                        })?,
                );
            }
            rating_columns.push(row);
        }
        Ok(CsvLayout {
            organs: organ_names.into_iter().map(OrganId::named).collect(),
            organ_columns,
            time_points,
            symptoms,
            rating_columns,
            confounders,
            confounder_columns,
        })
    }
}
