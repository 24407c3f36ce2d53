//! Per-unit records and their CSV representation.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{latent_pair, PrincipalStratum, TreatmentSequence};

/// Quantities known only to a simulator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTruth {
    pub stratum: PrincipalStratum,
    /// `Y2(w1, w2)` indexed by [`TreatmentSequence::index`].
    pub potential_y2: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: u64,
    pub w1: bool,
    pub y1_obs: bool,
    pub w2: bool,
    pub y2_obs: f64,
    pub latent: Option<LatentTruth>,
}

impl Unit {
    pub fn observed(id: u64, w1: bool, y1_obs: bool, w2: bool, y2_obs: f64) -> Self {
        Self {
            id,
            w1,
            y1_obs,
            w2,
            y2_obs,
            latent: None,
        }
    }

    pub fn sequence(&self) -> TreatmentSequence {
        TreatmentSequence::new(self.w1, self.w2)
    }

    /// Index of the observed cell `O(w1, y1, w2)` in `0..8`.
    pub fn cell(&self) -> usize {
        4 * usize::from(self.w1) + 2 * usize::from(self.y1_obs) + usize::from(self.w2)
    }

    /// The two strata this unit can belong to.
    pub fn admissible_strata(&self) -> (PrincipalStratum, PrincipalStratum) {
        latent_pair(self.w1, self.y1_obs)
    }

    /// Check that observed fields are the ones selected by the latent ones.
    pub fn check_consistency(&self) -> Result<()> {
        if !self.y2_obs.is_finite() {
            return Err(Error::domain(format!(
                "unit {}: y2_obs is not finite",
                self.id
            )));
        }
        if let Some(t) = &self.latent {
            if t.stratum.y1_under(self.w1) != self.y1_obs {
                return Err(Error::domain(format!(
                    "unit {}: stratum {} incompatible with w1={} y1_obs={}",
                    self.id,
                    t.stratum,
                    u8::from(self.w1),
                    u8::from(self.y1_obs)
                )));
            }
            if t.potential_y2[self.sequence().index()] != self.y2_obs {
                return Err(Error::domain(format!(
                    "unit {}: y2_obs differs from the potential outcome of its sequence",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub units: Vec<Unit>,
    /// Generator seed, when the data are simulated.
    pub seed: Option<u64>,
}

/// Order of potential-outcome columns in the CSV format.
const POTENTIAL_COLUMNS: [(&str, TreatmentSequence); 4] = [
    ("y2_00", TreatmentSequence::new(false, false)),
    ("y2_10", TreatmentSequence::new(true, false)),
    ("y2_01", TreatmentSequence::new(false, true)),
    ("y2_11", TreatmentSequence::new(true, true)),
];

const BASE_COLUMNS: [&str; 5] = ["id", "w1", "y1_obs", "w2", "y2_obs"];

impl Dataset {
    pub fn new(units: Vec<Unit>) -> Self {
        Self { units, seed: None }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn has_truth(&self) -> bool {
        !self.units.is_empty() && self.units.iter().all(|u| u.latent.is_some())
    }

    /// Unit counts of the eight observed cells, indexed by [`Unit::cell`].
    pub fn cell_counts(&self) -> [usize; 8] {
        let mut c = [0usize; 8];
        for u in &self.units {
            c[u.cell()] += 1;
        }
        c
    }

    pub fn write_csv<W: Write>(&self, writer: W, with_truth: bool) -> Result<()> {
        if with_truth && !self.has_truth() {
            return Err(Error::contract("dataset carries no latent truth to write"));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
        if with_truth {
            header.push("g_true");
            header.extend(POTENTIAL_COLUMNS.iter().map(|(n, _)| *n));
        }
        w.write_record(&header)?;
        for u in &self.units {
            let mut rec = vec![
                u.id.to_string(),
                u8::from(u.w1).to_string(),
                u8::from(u.y1_obs).to_string(),
                u8::from(u.w2).to_string(),
                format_real(u.y2_obs),
            ];
            if with_truth {
                let t = u.latent.as_ref().expect("checked by has_truth");
                rec.push(t.stratum.label().to_string());
                rec.extend(
                    POTENTIAL_COLUMNS
                        .iter()
                        .map(|(_, s)| format_real(t.potential_y2[s.index()])),
                );
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, with_truth: bool) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f), with_truth)
    }

    pub fn read_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let with_truth = match cols.len() {
            5 => false,
            10 => true,
            _ => {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: 1,
                    message: format!("expected 5 or 10 columns, found {}", cols.len()),
                })
            }
        };
        let mut expected: Vec<&str> = BASE_COLUMNS.to_vec();
        if with_truth {
            expected.push("g_true");
            expected.extend(POTENTIAL_COLUMNS.iter().map(|(n, _)| *n));
        }
        if cols != expected {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: 1,
                message: format!("header must be `{}`", expected.join(",")),
            });
        }

        let mut units = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let err = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line,
                message,
            };
            let id: u64 = rec[0]
                .parse()
                .map_err(|_| err(format!("bad id `{}`", &rec[0])))?;
            let w1 = parse_binary(&rec[1])
                .ok_or_else(|| err(format!("w1 must be 0 or 1, got `{}`", &rec[1])))?;
            let y1 = parse_binary(&rec[2])
                .ok_or_else(|| err(format!("y1_obs must be 0 or 1, got `{}`", &rec[2])))?;
            let w2 = parse_binary(&rec[3])
                .ok_or_else(|| err(format!("w2 must be 0 or 1, got `{}`", &rec[3])))?;
            let y2 = parse_real(&rec[4])
                .ok_or_else(|| err(format!("y2_obs must be a finite real, got `{}`", &rec[4])))?;
            let mut unit = Unit::observed(id, w1, y1, w2, y2);
            if with_truth {
                let stratum: PrincipalStratum =
                    rec[5].parse().map_err(|e: Error| err(e.to_string()))?;
                let mut potential_y2 = [0.0; 4];
                for (k, (name, seq)) in POTENTIAL_COLUMNS.iter().enumerate() {
                    potential_y2[seq.index()] = parse_real(&rec[6 + k])
                        .ok_or_else(|| err(format!("{name} must be a finite real")))?;
                }
                unit.latent = Some(LatentTruth {
                    stratum,
                    potential_y2,
                });
            }
            unit.check_consistency().map_err(|e| err(e.to_string()))?;
            units.push(unit);
        }
        Ok(Dataset::new(units))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }
}

fn parse_binary(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Shortest representation that round-trips.
pub(crate) fn format_real(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let mut u = Unit::observed(7, true, false, true, 3.25);
        u.latent = Some(LatentTruth {
            stratum: PrincipalStratum::S10,
            potential_y2: [1.0, 2.0, 3.0, 3.25],
        });
        let mut v = Unit::observed(8, false, false, false, -0.1);
        v.latent = Some(LatentTruth {
            stratum: PrincipalStratum::S01,
            potential_y2: [-0.1, 0.2, 0.3, 0.4],
        });
        Dataset::new(vec![u, v])
    }

    #[test]
    fn csv_round_trip_with_and_without_truth() {
        let d = sample();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,w1,y1_obs,w2,y2_obs,g_true,y2_00,y2_10,y2_01,y2_11\n"));
        assert!(text.contains("7,1,0,1,3.25,10,1.0,3.0,2.0,3.25"));
        let back = Dataset::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.units, d.units);

        let mut buf = Vec::new();
        d.write_csv(&mut buf, false).unwrap();
        let back = Dataset::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert!(back.units.iter().all(|u| u.latent.is_none()));
        assert_eq!(back.units[1].y2_obs, -0.1);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "id,w1,y1_obs,w2,y2_obs\n1,0,1,0,2.0\n2,0,2,0,1.0\n";
        match Dataset::read_csv(text.as_bytes(), Path::new("x.csv")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("y1_obs"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_header = "id,w1,y1,w2,y2_obs\n";
        assert!(Dataset::read_csv(bad_header.as_bytes(), Path::new("x")).is_err());
        let nan = "id,w1,y1_obs,w2,y2_obs\n1,0,1,0,NaN\n";
        assert!(Dataset::read_csv(nan.as_bytes(), Path::new("x")).is_err());
    }

    #[test]
    fn inconsistent_truth_is_rejected() {
        let text =
            "id,w1,y1_obs,w2,y2_obs,g_true,y2_00,y2_10,y2_01,y2_11\n1,1,1,0,2.0,10,0,2.0,0,0\n";
        assert!(Dataset::read_csv(text.as_bytes(), Path::new("x")).is_err());
    }

    #[test]
    fn cells_index_observed_groups() {
        let d = sample();
        assert_eq!(d.units[0].cell(), 5);
        assert_eq!(d.units[1].cell(), 0);
        let c = d.cell_counts();
        assert_eq!(c.iter().sum::<usize>(), 2);
    }
}
