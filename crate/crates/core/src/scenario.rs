//! Loading cases, prices and sessions from disk, and seeded random samples
//! (perturbed grid data, noisy prices, random EV arrivals).

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distflow::NetworkCase;
use crate::error::{Error, Result};
use crate::v2g::{EvSession, PriceCurve};

const BUNDLED_CASES: &[(&str, &str)] = &[
    ("case4_toy", include_str!("../data/case4_toy.json")),
    ("case18_synth", include_str!("../data/case18_synth.json")),
    ("case69_synth", include_str!("../data/case69_synth.json")),
];
const BUNDLED_PRICES: &str = include_str!("../data/prices_24.csv");

/// Names accepted by [`bundled_case`].
pub fn bundled_case_names() -> impl Iterator<Item = &'static str> {
    BUNDLED_CASES.iter().map(|(n, _)| *n)
}

pub fn bundled_case(name: &str) -> Result<NetworkCase> {
    let (_, text) = BUNDLED_CASES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::schema(name, "no bundled case with this name"))?;
    parse_case(text, Path::new(name))
}

/// The bundled 24-slot base price curve (cents per kWh).
pub fn bundled_prices() -> PriceCurve {
    let mut rdr = csv::Reader::from_reader(BUNDLED_PRICES.as_bytes());
    let beta = rdr
        .records()
        .map(|r| r.expect("bundled csv")[1].parse::<f64>().expect("bundled price"))
        .collect();
    PriceCurve::new(beta)
}

/// Bundled case by name, or a JSON file path.
pub fn resolve_case(name_or_path: &str) -> Result<NetworkCase> {
    if bundled_case_names().any(|n| n == name_or_path) {
        bundled_case(name_or_path)
    } else {
        load_case(Path::new(name_or_path))
    }
}

fn parse_case(text: &str, path: &Path) -> Result<NetworkCase> {
    let case: NetworkCase = serde_json::from_str(text).map_err(|e| Error::schema(path, e.to_string()))?;
    case.topology()?;
    Ok(case)
}

pub fn load_case(path: &Path) -> Result<NetworkCase> {
    parse_case(&std::fs::read_to_string(path)?, path)
}

/// Reads a price CSV that must have exactly `periods` rows.
pub fn load_prices(path: &Path, periods: usize) -> Result<PriceCurve> {
    let p = PriceCurve::read_csv(path)?;
    if p.len() != periods {
        return Err(Error::schema(
            path,
            format!("price: {} rows, expected T = {periods}", p.len()),
        ));
    }
    Ok(p)
}

pub fn load_sessions(path: &Path, periods: usize) -> Result<Vec<EvSession>> {
    let sessions: Vec<EvSession> =
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::schema(path, e.to_string()))?;
    for s in &sessions {
        s.validate(periods)?;
    }
    Ok(sessions)
}

/// Parameters of the random sample generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    /// Bundled case name or path to a case JSON.
    pub case: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub periods: usize,
    pub station_bus: usize,
    pub arrivals_per_slot: (usize, usize),
    /// Arrival energy as a fraction of capacity.
    pub soc_arrival_range: (f64, f64),
    /// Lowest allowed energy as a fraction of capacity.
    pub soc_min: f64,
    pub capacity_kwh: f64,
    pub p_range_kw: (f64, f64),
    pub eta: f64,
    pub price_noise_sd: f64,
    /// Load noise standard deviation in kW (active and reactive alike).
    pub load_noise_sd: f64,
    /// Relative standard deviation of branch r and x.
    pub impedance_noise_sd: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            case: "case18_synth".into(),
            seed: 0,
            periods: 24,
            station_bus: 6,
            arrivals_per_slot: (1, 5),
            soc_arrival_range: (0.2, 0.4),
            soc_min: 0.1,
            capacity_kwh: 100.0,
            p_range_kw: (10.0, 20.0),
            eta: 0.8,
            price_noise_sd: 0.5,
            load_noise_sd: 1.0,
            impedance_noise_sd: 0.1,
        }
    }
}

impl ScenarioSpec {
    pub fn for_case(case: &str) -> Self {
        Self {
            case: case.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.arrivals_per_slot.0 <= self.arrivals_per_slot.1
            && 0.0 <= self.soc_min
            && self.soc_min <= self.soc_arrival_range.0
            && self.soc_arrival_range.0 <= self.soc_arrival_range.1
            && self.soc_arrival_range.1 <= 1.0
            && 0.0 <= self.p_range_kw.0
            && self.p_range_kw.0 <= self.p_range_kw.1
            && self.p_range_kw.1 > 0.0
            && self.capacity_kwh > 0.0
            && self.eta > 0.0
            && self.eta <= 1.0
            && self.periods > 0;
        let sds = [self.price_noise_sd, self.load_noise_sd, self.impedance_noise_sd];
        if !ordered || sds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Invariant(format!("invalid scenario spec {self:?}")));
        }
        Ok(())
    }

    /// Base case and price curve, truncated to the spec horizon.
    pub fn base_data(&self) -> Result<(NetworkCase, PriceCurve)> {
        let mut case = resolve_case(&self.case)?;
        let mut prices = bundled_prices();
        if self.periods != case.periods {
            case = case.truncated(self.periods)?;
        }
        if self.periods > prices.len() {
            return Err(Error::Invariant(format!(
                "bundled prices cover {} slots, spec asks for {}",
                prices.len(),
                self.periods
            )));
        }
        prices.beta.truncate(self.periods);
        if case.bus_index(self.station_bus).is_none() {
            return Err(Error::Invariant(format!(
                "station bus {} not in {}",
                self.station_bus, self.case
            )));
        }
        Ok((case, prices))
    }
}

/// One generated problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub case: NetworkCase,
    pub sessions: Vec<EvSession>,
    pub prices: PriceCurve,
    pub seed: u64,
    /// Arrival energies redrawn because the window could not be met.
    pub regenerations: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    seed: u64,
    regenerations: usize,
    load_noise_units: String,
    spec: Option<ScenarioSpec>,
}

impl Sample {
    /// Writes `case.json`, `sessions.json`, `prices.csv`, `meta.json`.
    pub fn write_dir(&self, dir: &Path, spec: Option<&ScenarioSpec>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("case.json"), serde_json::to_string_pretty(&self.case)?)?;
        std::fs::write(dir.join("sessions.json"), serde_json::to_string_pretty(&self.sessions)?)?;
        self.prices.write_csv(&dir.join("prices.csv"))?;
        let meta = SampleMeta {
            seed: self.seed,
            regenerations: self.regenerations,
            load_noise_units: "kW".into(),
            spec: spec.cloned(),
        };
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let case = load_case(&dir.join("case.json"))?;
        let sessions = load_sessions(&dir.join("sessions.json"), case.periods)?;
        let prices = load_prices(&dir.join("prices.csv"), case.periods)?;
        let meta_path: PathBuf = dir.join("meta.json");
        let meta: SampleMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
            .map_err(|e| Error::schema(&meta_path, e.to_string()))?;
        Ok(Self {
            case,
            sessions,
            prices,
            seed: meta.seed,
            regenerations: meta.regenerations,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    }
}

const MAX_REDRAWS: usize = 100;

/// Deterministic function of `(spec, seed)`; `spec.seed` is ignored.
pub fn generate_sample(spec: &ScenarioSpec, seed: u64) -> Result<Sample> {
    spec.validate()?;
    let (mut case, mut prices) = spec.base_data()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let load_sd = spec.load_noise_sd / (1000.0 * case.base_mva);
    for bus in &mut case.buses {
        for t in 0..case.periods {
            bus.p_load[t] = (bus.p_load[t] + gaussian(&mut rng, load_sd)).max(0.0);
            bus.q_load[t] = (bus.q_load[t] + gaussian(&mut rng, load_sd)).max(0.0);
        }
    }
    for br in &mut case.branches {
        let (r0, x0) = (br.r, br.x);
        br.r = (r0 + gaussian(&mut rng, spec.impedance_noise_sd * r0.abs())).max(0.1 * r0);
        br.x = (x0 + gaussian(&mut rng, spec.impedance_noise_sd * x0.abs())).max(0.1 * x0);
    }
    for b in &mut prices.beta {
        *b = (*b + gaussian(&mut rng, spec.price_noise_sd)).max(0.01);
    }

    let cap = spec.capacity_kwh;
    let (p_lo, p_hi) = spec.p_range_kw;
    let slots_needed = |e_arr: f64| ((cap - e_arr) / (p_hi * case.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut sessions = Vec::new();
    let mut regenerations = 0;
    for t in 0..case.periods {
        let (lo, hi) = spec.arrivals_per_slot;
        let count = rng.gen_range(lo..=hi);
        for _ in 0..count {
            let mut e_arr = None;
            for _ in 0..MAX_REDRAWS {
                let soc = rng.gen_range(spec.soc_arrival_range.0..=spec.soc_arrival_range.1);
                if t + slots_needed(soc * cap) <= case.periods {
                    e_arr = Some(soc * cap);
                    break;
                }
                regenerations += 1;
            }
            let Some(e_arr) = e_arr else {
                log::debug!("slot {t}: no deliverable window, arrival dropped");
                continue;
            };
            let t_dep = rng.gen_range(t + slots_needed(e_arr)..=case.periods);
            sessions.push(EvSession {
                id: sessions.len(),
                station_bus: spec.station_bus,
                t_arr: t,
                t_dep,
                e_arr,
                e_dep: cap,
                e_min: spec.soc_min * cap,
                e_max: cap,
                p_min: p_lo,
                p_max: p_hi,
                eta: spec.eta,
            });
        }
    }
    if regenerations > 0 {
        log::debug!("seed {seed}: {regenerations} arrival energies redrawn");
    }

    Ok(Sample {
        case,
        sessions,
        prices,
        seed,
        regenerations,
    })
}
