//! File formats.
//!
//! All documents are JSON. Every floating-point number is written in
//! scientific notation with 17 significant digits, which reads back to the
//! identical `f64`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::envgen::{EnvFamily, PerturbParam};
use crate::error::{Error, Result};
use crate::fed::TrainingTrace;
use crate::mdp::{QTable, TabularMDP, TransitionKernel};

/// Compact JSON formatter that writes floats with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExactFloatFormatter;

impl Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Formats a float the way every output file does.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloatFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Serde adapter writing a [`QTable`] as a `[s][a]` matrix.
pub mod qtable_rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &QTable, ser: S) -> std::result::Result<S::Ok, S::Error> {
        q.to_rows().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<QTable, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        QTable::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing a policy as a `[s][a]` probability matrix.
pub mod policy_rows {
    use super::*;
    use crate::mdp::Policy;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(pi: &Policy, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..pi.n_states()).map(|s| pi.row(s)).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Policy, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        Policy::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// On-disk MDP: `kernel` is `[s][a][s']`, `reward` is `[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
    pub reward: Vec<Vec<f64>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
}

impl From<&TabularMDP> for MdpDocument {
    fn from(mdp: &TabularMDP) -> Self {
        let na = mdp.n_actions();
        Self {
            n_states: mdp.n_states(),
            n_actions: na,
            gamma: mdp.gamma,
            initial_dist: mdp.initial_dist.clone(),
            reward: mdp.reward.chunks(na).map(<[f64]>::to_vec).collect(),
            kernel: mdp.kernel.to_rows(),
        }
    }
}

impl TryFrom<MdpDocument> for TabularMDP {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let kernel = TransitionKernel::from_rows(&doc.kernel)?;
        if kernel.n_states() != doc.n_states || kernel.n_actions() != doc.n_actions {
            return Err(Error::DimensionMismatch {
                what: "declared kernel states x actions",
                expected: doc.n_states * doc.n_actions,
                got: kernel.n_states() * kernel.n_actions(),
            });
        }
        let reward: Vec<f64> = doc.reward.concat();
        TabularMDP::new(kernel, reward, doc.gamma, doc.initial_dist)
    }
}

pub fn mdp_to_string(mdp: &TabularMDP) -> Result<String> {
    to_json_string(&MdpDocument::from(mdp))
}

pub fn mdp_from_str(text: &str) -> Result<TabularMDP> {
    let doc: MdpDocument = serde_json::from_str(text)?;
    doc.try_into()
}

pub fn write_mdp(path: &Path, mdp: &TabularMDP) -> Result<()> {
    write_json(path, &MdpDocument::from(mdp))
}

pub fn read_mdp(path: &Path) -> Result<TabularMDP> {
    read_json::<MdpDocument>(path)?.try_into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTableDocument {
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(with = "qtable_rows")]
    pub q: QTable,
}

pub fn write_qtable(path: &Path, q: &QTable) -> Result<()> {
    write_json(
        path,
        &QTableDocument {
            n_states: q.n_states(),
            n_actions: q.n_actions(),
            q: q.clone(),
        },
    )
}

pub fn read_qtable(path: &Path) -> Result<QTable> {
    Ok(read_json::<QTableDocument>(path)?.q)
}

/// Metadata stored next to the member files of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyManifest {
    pub seed: u64,
    pub perturbation_rate: f64,
    pub perturb_param: PerturbParam,
    pub n_agents: usize,
    /// Perturbation factor `n_k` per member.
    pub factors: Vec<f64>,
    /// Parameter value `m_k` per member.
    pub params: Vec<Option<f64>>,
    pub clamped: Vec<bool>,
}

pub fn member_file_name(k: usize) -> String {
    format!("member_{k}.json")
}

/// Writes `member_<k>.json` for every member plus `manifest.json`.
pub fn write_family(dir: &Path, family: &EnvFamily, manifest: &FamilyManifest) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, m) in family.members.iter().enumerate() {
        write_mdp(&dir.join(member_file_name(k)), m)?;
    }
    write_json(&dir.join("manifest.json"), manifest)
}

pub fn read_family(dir: &Path) -> Result<(EnvFamily, FamilyManifest)> {
    let manifest: FamilyManifest = read_json(&dir.join("manifest.json"))?;
    let members = (0..manifest.n_agents)
        .map(|k| read_mdp(&dir.join(member_file_name(k))))
        .collect::<Result<Vec<_>>>()?;
    let mut family = EnvFamily::from_members(members)?;
    family.factors = manifest.factors.clone();
    family.params = manifest.params.clone();
    family.clamped = manifest.clamped.clone();
    Ok((family, manifest))
}

/// The line-delimited trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub t: usize,
    pub sup_gap: Option<f64>,
    pub bound: Option<f64>,
    pub drift_mean: f64,
    pub aggregated: bool,
}

/// One JSON object per record.
pub fn write_trace<W: Write>(out: W, trace: &TrainingTrace) -> Result<()> {
    let mut out = BufWriter::new(out);
    for r in &trace.records {
        let line = TraceLine {
            t: r.t,
            sup_gap: r.sup_gap,
            bound: r.bound,
            drift_mean: r.drift_mean,
            aggregated: r.aggregated,
        };
        out.write_all(to_json_string(&line)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_lines(path: &Path) -> Result<Vec<TraceLine>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Two-column CSV `(key, return)` with exact float formatting.
pub fn write_returns_csv(path: &Path, key_header: &str, rows: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([key_header, "return"])?;
    for (key, value) in rows {
        w.write_record([key.as_str(), format_float(*value).as_str()])?;
    }
    w.flush()?;
    Ok(())
}
