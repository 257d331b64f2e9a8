use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, measure_test_time, mee, TIMING_REPEATS};
use crate::error::{Error, Result};
use crate::preprocess::{CirSample, Dataset, Split};
use crate::router::{method2_select, AdaptiveEnsemble, Router, Specialist, StreamState};
use crate::scenario::ScenarioId;

/// Snapshots per scenario block in the interleaved evaluation stream.
pub const STREAM_BLOCK: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Method {
    /// One generalized model for every scenario.
    Generalized = 1,
    /// Specialists picked by an operator declaration.
    Manual = 2,
    /// Specialists picked per snapshot by the router.
    Adaptive = 3,
}

impl From<Method> for u8 {
    fn from(m: Method) -> u8 {
        m as u8
    }
}

impl TryFrom<u8> for Method {
    type Error = Error;
    fn try_from(v: u8) -> Result<Method> {
        match v {
            1 => Ok(Method::Generalized),
            2 => Ok(Method::Manual),
            3 => Ok(Method::Adaptive),
            _ => Err(Error::Config(format!("unknown method {v}, expected 1, 2 or 3"))),
        }
    }
}

/// Checkpoints and test data for [`compare_methods`].
pub struct CompareInputs<'a> {
    /// Per-scenario datasets; only their test splits are read.
    pub datasets: &'a BTreeMap<ScenarioId, Dataset>,
    pub generalized: Option<&'a Specialist>,
    pub specialists: &'a BTreeMap<ScenarioId, Specialist>,
    pub router: Option<&'a Router>,
    /// Specialist declared for each test set under manual switching; a
    /// missing entry declares the test set's own scenario.
    pub declarations: BTreeMap<ScenarioId, ScenarioId>,
    pub methods: Vec<Method>,
    /// Timed repetitions per measurement; 0 skips timing.
    pub timing_repeats: usize,
    pub stream_block: usize,
}

impl<'a> CompareInputs<'a> {
    pub fn new(
        datasets: &'a BTreeMap<ScenarioId, Dataset>,
        generalized: Option<&'a Specialist>,
        specialists: &'a BTreeMap<ScenarioId, Specialist>,
        router: Option<&'a Router>,
    ) -> Self {
        CompareInputs {
            datasets,
            generalized,
            specialists,
            router,
            declarations: BTreeMap::new(),
            methods: vec![Method::Generalized, Method::Manual, Method::Adaptive],
            timing_repeats: TIMING_REPEATS,
            stream_block: STREAM_BLOCK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub mee_m: BTreeMap<ScenarioId, f64>,
    /// Parameter count of every stored model (router last for Method 3).
    pub param_counts: Vec<usize>,
    pub total_params: usize,
    /// Parameters active while localizing each scenario's test lap.
    pub active_params: BTreeMap<ScenarioId, usize>,
    pub adaptive: bool,
    pub test_time_s1_s: Option<f64>,
    pub router_accuracy: Option<f64>,
    pub switch_events: Option<usize>,
    pub declarations: Option<BTreeMap<ScenarioId, ScenarioId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub methods: Vec<MethodReport>,
    pub test_samples: BTreeMap<ScenarioId, usize>,
    pub stream_block: usize,
    pub timing_protocol: String,
}

fn test_samples(ds: &Dataset) -> Vec<&CirSample> {
    ds.indices(Split::Test).into_iter().map(|i| &ds.samples[i]).collect()
}

fn truths(samples: &[&CirSample]) -> Vec<[f64; 2]> {
    samples.iter().map(|s| [f64::from(s.label[0]), f64::from(s.label[1])]).collect()
}

/// Interleaves the test laps in blocks of `block` consecutive snapshots,
/// cycling through the scenarios in class order.
pub fn interleave<'a>(datasets: &'a BTreeMap<ScenarioId, Dataset>, block: usize) -> Vec<&'a CirSample> {
    let laps: Vec<Vec<&CirSample>> = datasets.values().map(test_samples).collect();
    let mut cursors = vec![0usize; laps.len()];
    let mut out = Vec::new();
    let block = block.max(1);
    loop {
        let mut moved = false;
        for (lap, cur) in laps.iter().zip(cursors.iter_mut()) {
            let end = (*cur + block).min(lap.len());
            if *cur < end {
                out.extend_from_slice(&lap[*cur..end]);
                *cur = end;
                moved = true;
            }
        }
        if !moved {
            return out;
        }
    }
}

fn timed(repeats: usize, pass: impl FnMut() -> Result<()> + Send) -> Result<Option<f64>> {
    if repeats == 0 {
        return Ok(None);
    }
    Ok(Some(measure_test_time(repeats, pass)?.median_s))
}

/// Evaluates the requested methods on each scenario's test lap.
pub fn compare_methods(inputs: &CompareInputs) -> Result<ComparisonReport> {
    let mut missing = Vec::new();
    if inputs.methods.contains(&Method::Generalized) && inputs.generalized.is_none() {
        missing.push("generalized model (method 1)".to_string());
    }
    if inputs.methods.iter().any(|m| *m != Method::Generalized) {
        for &id in inputs.datasets.keys() {
            let declared = inputs.declarations.get(&id).copied().unwrap_or(id);
            if !inputs.specialists.contains_key(&declared) {
                missing.push(format!("specialist for {declared}"));
            }
        }
    }
    if inputs.methods.contains(&Method::Adaptive) && inputs.router.is_none() {
        missing.push("router (method 3)".to_string());
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing checkpoints: {}", missing.join(", "))));
    }
    if inputs.datasets.is_empty() {
        return Err(Error::Data("no test datasets".into()));
    }

    let s1 = inputs.datasets.get(&ScenarioId::S1).map(test_samples);
    let mut methods = Vec::new();
    for &method in &inputs.methods {
        let report = match method {
            Method::Generalized => {
                let model = inputs.generalized.unwrap();
                let mut mee_m = BTreeMap::new();
                let mut active = BTreeMap::new();
                for (&id, ds) in inputs.datasets {
                    let t = test_samples(ds);
                    mee_m.insert(id, mee(&model.locate(&t)?, &truths(&t))?);
                    active.insert(id, model.param_count());
                }
                let time = match &s1 {
                    Some(t) => timed(inputs.timing_repeats, || model.locate(t).map(drop))?,
                    None => None,
                };
                MethodReport {
                    method,
                    mee_m,
                    param_counts: vec![model.param_count()],
                    total_params: model.param_count(),
                    active_params: active,
                    adaptive: false,
                    test_time_s1_s: time,
                    router_accuracy: None,
                    switch_events: None,
                    declarations: None,
                }
            }
            Method::Manual => {
                let mut mee_m = BTreeMap::new();
                let mut active = BTreeMap::new();
                let mut declarations = BTreeMap::new();
                for (&id, ds) in inputs.datasets {
                    let declared = inputs.declarations.get(&id).copied().unwrap_or(id);
                    let model = method2_select(declared, inputs.specialists)?;
                    let t = test_samples(ds);
                    mee_m.insert(id, mee(&model.locate(&t)?, &truths(&t))?);
                    active.insert(id, model.param_count());
                    declarations.insert(id, declared);
                }
                let time = match &s1 {
                    Some(t) => {
                        let declared = inputs.declarations.get(&ScenarioId::S1).copied().unwrap_or(ScenarioId::S1);
                        let model = method2_select(declared, inputs.specialists)?;
                        timed(inputs.timing_repeats, || model.locate(t).map(drop))?
                    }
                    None => None,
                };
                let counts: Vec<usize> = inputs.specialists.values().map(Specialist::param_count).collect();
                MethodReport {
                    method,
                    mee_m,
                    total_params: counts.iter().sum(),
                    param_counts: counts,
                    active_params: active,
                    adaptive: false,
                    test_time_s1_s: time,
                    router_accuracy: None,
                    switch_events: None,
                    declarations: Some(declarations),
                }
            }
            Method::Adaptive => {
                let ensemble = AdaptiveEnsemble {
                    router: inputs.router.unwrap().clone(),
                    specialists: inputs.specialists.clone(),
                };
                let stream = interleave(inputs.datasets, inputs.stream_block);
                let mut state = StreamState::new();
                let out = ensemble.dispatch_stream(&stream, &mut state)?;
                let mut mee_m = BTreeMap::new();
                let mut active = BTreeMap::new();
                for &id in inputs.datasets.keys() {
                    let (pred, truth): (Vec<[f64; 2]>, Vec<[f64; 2]>) = stream
                        .iter()
                        .zip(&out)
                        .filter(|(s, _)| s.scenario == id)
                        .map(|(s, d)| (d.position, [f64::from(s.label[0]), f64::from(s.label[1])]))
                        .unzip();
                    mee_m.insert(id, mee(&pred, &truth)?);
                    active.insert(id, ensemble.active_params(id)?);
                }
                let routed: Vec<ScenarioId> = out.iter().map(|d| d.routed).collect();
                let truth: Vec<ScenarioId> = stream.iter().map(|s| s.scenario).collect();
                let time = match &s1 {
                    Some(t) => timed(inputs.timing_repeats, || {
                        ensemble.dispatch_stream(t, &mut StreamState::new()).map(drop)
                    })?,
                    None => None,
                };
                let mut counts: Vec<usize> = ensemble.specialists.values().map(Specialist::param_count).collect();
                counts.push(ensemble.router.param_count());
                MethodReport {
                    method,
                    mee_m,
                    total_params: counts.iter().sum(),
                    param_counts: counts,
                    active_params: active,
                    adaptive: true,
                    test_time_s1_s: time,
                    router_accuracy: Some(accuracy(&routed, &truth)?),
                    switch_events: Some(state.switch_events),
                    declarations: None,
                }
            }
        };
        methods.push(report);
    }
    Ok(ComparisonReport {
        methods,
        test_samples: inputs
            .datasets
            .iter()
            .map(|(&id, ds)| (id, ds.count(Split::Test)))
            .collect(),
        stream_block: inputs.stream_block,
        timing_protocol: format!(
            "single thread, one warm-up pass excluded, median of {} passes over the S1 test lap",
            inputs.timing_repeats
        ),
    })
}

/// The final-comparison table: one column per method.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<TableColumn>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableColumn {
    pub method: Method,
    pub mee_m: [Option<f64>; 3],
    pub param_counts: Vec<usize>,
    pub adaptive: bool,
    pub test_time_s1_s: Option<f64>,
}

pub const TABLE_ROWS: [&str; 6] = ["s1_mee_m", "s2_mee_m", "s3_mee_m", "parameters", "adaptive", "test_time_s1_s"];

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("report serialization failed: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("invalid report JSON: {e}")))
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn table(&self) -> Table {
        Table {
            columns: self
                .methods
                .iter()
                .map(|r| TableColumn {
                    method: r.method,
                    mee_m: ScenarioId::ALL.map(|id| r.mee_m.get(&id).copied()),
                    param_counts: r.param_counts.clone(),
                    adaptive: r.adaptive,
                    test_time_s1_s: r.test_time_s1_s,
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        self.table().to_csv()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.columns.iter().map(|c| format!("method_{}", c.method as u8)));
        let err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
        w.write_record(&header).map_err(err)?;
        for (r, name) in TABLE_ROWS.iter().enumerate() {
            let mut row = vec![name.to_string()];
            for c in &self.columns {
                row.push(match r {
                    0..=2 => cell(c.mee_m[r]),
                    3 => c.param_counts.iter().map(usize::to_string).collect::<Vec<_>>().join("+"),
                    4 => if c.adaptive { "+" } else { "-" }.to_string(),
                    _ => cell(c.test_time_s1_s),
                });
            }
            w.write_record(&row).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_csv(s: &str) -> Result<Table> {
        let bad = |m: String| Error::Data(format!("invalid comparison table: {m}"));
        let mut rd = csv::Reader::from_reader(s.as_bytes());
        let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
        let mut columns = Vec::new();
        for h in header.iter().skip(1) {
            let n: u8 = h
                .strip_prefix("method_")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad(format!("column {h}")))?;
            columns.push(TableColumn {
                method: Method::try_from(n)?,
                mee_m: [None; 3],
                param_counts: Vec::new(),
                adaptive: false,
                test_time_s1_s: None,
            });
        }
        let float = |v: &str| -> Result<Option<f64>> {
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad(format!("number {v}")))
            }
        };
        let mut seen = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let name = rec.get(0).unwrap_or_default().to_string();
            let r = TABLE_ROWS
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| bad(format!("unknown row {name}")))?;
            for (c, v) in columns.iter_mut().zip(rec.iter().skip(1)) {
                match r {
                    0..=2 => c.mee_m[r] = float(v)?,
                    3 => {
                        c.param_counts = v
                            .split('+')
                            .filter(|p| !p.is_empty())
                            .map(|p| p.parse().map_err(|_| bad(format!("count {p}"))))
                            .collect::<Result<_>>()?
                    }
                    4 => c.adaptive = v == "+",
                    _ => c.test_time_s1_s = float(v)?,
                }
            }
            seen.push(name);
        }
        if seen != TABLE_ROWS {
            return Err(bad(format!("rows {seen:?}")));
        }
        Ok(Table { columns })
    }
}
