//! Long-format CSV ingestion and multi-group event-study aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::alt::TvPanelDataset;
use crate::att::AttSeries;
use crate::error::{Error, Result};
use crate::inference::{bootstrap_with, point_estimate, BootstrapResult, Estimator, InputData};
use crate::panel::{ModelSpec, PanelDataset};
use crate::rc::RcDataset;

/// Column roles in a long-format file. `treated` holds the treated-group flag
/// (0/1) for panels and cross sections, or the first treatment period
/// (empty or 0 for never treated) for multi-group panels. `t_star` is the
/// first treatment period in the file's own period labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_period")]
    pub period: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default = "default_treated")]
    pub treated: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub t_star: Option<i64>,
}

fn default_id() -> String {
    "id".into()
}
fn default_period() -> String {
    "period".into()
}
fn default_outcome() -> String {
    "y".into()
}
fn default_treated() -> String {
    "d".into()
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: default_id(),
            period: default_period(),
            outcome: default_outcome(),
            treated: default_treated(),
            covariates: Vec::new(),
            t_star: None,
        }
    }
}

impl Schema {
    fn t_star_label(&self) -> Result<i64> {
        self.t_star
            .ok_or_else(|| Error::InvalidArgument("first treatment period (t_star) is required".into()))
    }

    fn names_with_intercept(&self) -> Vec<String> {
        std::iter::once("intercept".to_string())
            .chain(self.covariates.iter().cloned())
            .collect()
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Io(format!("{}: {e}", path.display())),
                _ => Error::InvalidData(e.to_string()),
            })?;
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("column `{name}` not found")))
    }

    fn num(&self, r: usize, c: usize) -> Result<f64> {
        let s = &self.rows[r][c];
        s.parse::<f64>().map_err(|_| {
            Error::InvalidData(format!(
                "row {}: `{}` is not a number in column `{}`",
                r + 2,
                s,
                self.header[c]
            ))
        })
    }

    fn flag(&self, r: usize, c: usize) -> Result<bool> {
        match self.num(r, c)? {
            v if v == 0.0 => Ok(false),
            v if v == 1.0 => Ok(true),
            v => Err(Error::InvalidData(format!(
                "row {}: treatment flag must be 0 or 1, got {v}",
                r + 2
            ))),
        }
    }

    fn period(&self, r: usize, c: usize) -> Result<i64> {
        let s = &self.rows[r][c];
        s.parse::<i64>()
            .map_err(|_| Error::BadPeriodLabels(format!("row {}: `{s}` is not an integer period", r + 2)))
    }
}

/// Maps contiguous integer labels onto `1..=T`.
fn period_map(labels: &BTreeSet<i64>) -> Result<(i64, usize)> {
    let (&lo, &hi) = match (labels.first(), labels.last()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::InvalidData("file has no rows".into())),
    };
    let span = (hi - lo + 1) as usize;
    if span != labels.len() {
        let missing: Vec<i64> = (lo..=hi).filter(|p| !labels.contains(p)).collect();
        return Err(Error::BadPeriodLabels(format!(
            "periods must be contiguous integers; missing {missing:?}"
        )));
    }
    Ok((lo, span))
}

fn map_t_star(label: i64, lo: i64, t_total: usize) -> Result<usize> {
    let t = label - lo + 1;
    if t < 1 || t as usize > t_total {
        return Err(Error::BadPeriodLabels(format!(
            "first treatment period {label} is outside the observed periods"
        )));
    }
    Ok(t as usize)
}

/// Pivoted balanced panel before the treatment column is interpreted.
struct Pivot {
    ids: Vec<String>,
    lo: i64,
    t_total: usize,
    y: DMatrix<f64>,
    /// Per-unit, per-period values of the extra columns.
    extras: Vec<DMatrix<f64>>,
}

fn pivot(table: &Table, schema: &Schema, extra_cols: &[usize]) -> Result<Pivot> {
    let id_c = table.col(&schema.id)?;
    let per_c = table.col(&schema.period)?;
    let y_c = table.col(&schema.outcome)?;
    let mut labels = BTreeSet::new();
    let mut ids: Vec<String> = Vec::new();
    let mut unit_of: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<BTreeMap<i64, usize>> = Vec::new();
    for r in 0..table.rows.len() {
        let id = table.rows[r][id_c].to_string();
        let p = table.period(r, per_c)?;
        labels.insert(p);
        let u = *unit_of.entry(id.clone()).or_insert_with(|| {
            ids.push(id.clone());
            cells.push(BTreeMap::new());
            ids.len() - 1
        });
        if cells[u].insert(p, r).is_some() {
            return Err(Error::InvalidData(format!("unit {id} has period {p} twice")));
        }
    }
    let (lo, t_total) = period_map(&labels)?;
    let unbalanced: Vec<String> = ids
        .iter()
        .zip(&cells)
        .filter(|(_, c)| c.len() != t_total)
        .map(|(id, _)| id.clone())
        .collect();
    if !unbalanced.is_empty() {
        return Err(Error::UnbalancedPanel(unbalanced));
    }
    let n = ids.len();
    let mut y = DMatrix::zeros(n, t_total);
    let mut extras = vec![DMatrix::zeros(n, t_total); extra_cols.len()];
    for (u, c) in cells.iter().enumerate() {
        for (&p, &r) in c {
            let t = (p - lo) as usize;
            y[(u, t)] = table.num(r, y_c)?;
            for (e, &col) in extra_cols.iter().enumerate() {
                extras[e][(u, t)] = table.num(r, col)?;
            }
        }
    }
    Ok(Pivot {
        ids,
        lo,
        t_total,
        y,
        extras,
    })
}

fn constant_column(p: &Pivot, m: &DMatrix<f64>, name: &str) -> Result<Vec<f64>> {
    (0..m.nrows())
        .map(|u| {
            let v = m[(u, 0)];
            if m.row(u).iter().any(|&w| w != v) {
                Err(Error::NonConstantCovariate {
                    unit: p.ids[u].clone(),
                    column: name.to_string(),
                })
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn flags(values: &[f64], name: &str) -> Result<Vec<bool>> {
    values
        .iter()
        .map(|&v| match v {
            v if v == 0.0 => Ok(false),
            v if v == 1.0 => Ok(true),
            _ => Err(Error::InvalidData(format!("`{name}` must be 0 or 1, got {v}"))),
        })
        .collect()
}

fn design_with_intercept(p: &Pivot, cov: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(p.ids.len(), cov.len() + 1, |u, j| if j == 0 { 1.0 } else { cov[j - 1][u] })
}

fn covariate_cols(table: &Table, schema: &Schema) -> Result<Vec<usize>> {
    schema.covariates.iter().map(|c| table.col(c)).collect()
}

/// Long-format panel (`id, period, outcome, treated, covariates...`) pivoted
/// to a balanced `n × T` panel with an intercept prepended to the covariates.
/// Units keep the order of their first row.
pub fn load_panel_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<PanelDataset> {
    let table = Table::read(path.as_ref())?;
    let mut cols = vec![table.col(&schema.treated)?];
    cols.extend(covariate_cols(&table, schema)?);
    let p = pivot(&table, schema, &cols)?;
    let d = flags(&constant_column(&p, &p.extras[0], &schema.treated)?, &schema.treated)?;
    let cov = schema
        .covariates
        .iter()
        .enumerate()
        .map(|(j, name)| constant_column(&p, &p.extras[j + 1], name))
        .collect::<Result<Vec<_>>>()?;
    let t_star = map_t_star(schema.t_star_label()?, p.lo, p.t_total)?;
    let z = design_with_intercept(&p, &cov);
    PanelDataset::with_names(p.y, z, d, t_star, schema.names_with_intercept())
}

/// Long-format repeated cross sections (`period, outcome, treated,
/// covariates...`); the `id` column is ignored. Periods span the observed
/// label range, so an interior label without rows is an empty period.
pub fn load_rc_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RcDataset> {
    let table = Table::read(path.as_ref())?;
    let per_c = table.col(&schema.period)?;
    let y_c = table.col(&schema.outcome)?;
    let d_c = table.col(&schema.treated)?;
    let cov_c = covariate_cols(&table, schema)?;
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::InvalidData("file has no rows".into()));
    }
    let labels = (0..n).map(|r| table.period(r, per_c)).collect::<Result<Vec<_>>>()?;
    let lo = *labels.iter().min().unwrap();
    let hi = *labels.iter().max().unwrap();
    let t_total = (hi - lo + 1) as usize;
    let y = (0..n).map(|r| table.num(r, y_c)).collect::<Result<Vec<_>>>()?;
    let d = (0..n).map(|r| table.flag(r, d_c)).collect::<Result<Vec<_>>>()?;
    let mut z = DMatrix::from_element(n, cov_c.len() + 1, 1.0);
    for r in 0..n {
        for (j, &c) in cov_c.iter().enumerate() {
            z[(r, j + 1)] = table.num(r, c)?;
        }
    }
    let t_star = map_t_star(schema.t_star_label()?, lo, t_total)?;
    RcDataset::with_names(
        y,
        z,
        d,
        labels.iter().map(|&p| (p - lo + 1) as usize).collect(),
        t_total,
        t_star,
        schema.names_with_intercept(),
    )
}

/// Long-format panel whose covariates may vary over time.
pub fn load_tv_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<TvPanelDataset> {
    let table = Table::read(path.as_ref())?;
    let mut cols = vec![table.col(&schema.treated)?];
    cols.extend(covariate_cols(&table, schema)?);
    let p = pivot(&table, schema, &cols)?;
    let d = flags(&constant_column(&p, &p.extras[0], &schema.treated)?, &schema.treated)?;
    let t_star = map_t_star(schema.t_star_label()?, p.lo, p.t_total)?;
    TvPanelDataset::new(p.y, p.extras[1..].to_vec(), d, t_star, schema.covariates.clone())
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a panel in the long format read by [`load_panel_csv`], with
/// periods labelled `1..=T`, ids `0..n` and covariates after the intercept.
pub fn write_panel_csv(path: impl AsRef<Path>, data: &PanelDataset, schema: &Schema) -> Result<()> {
    if schema.covariates.len() + 1 != data.k() {
        return Err(Error::DimensionMismatch(
            "schema must name every covariate after the intercept".into(),
        ));
    }
    let mut header = vec![
        schema.id.clone(),
        schema.period.clone(),
        schema.outcome.clone(),
        schema.treated.clone(),
    ];
    header.extend(schema.covariates.iter().cloned());
    let rows = (0..data.n()).flat_map(|i| {
        (1..=data.t_total()).map(move |t| {
            let mut r = vec![
                i.to_string(),
                t.to_string(),
                data.outcome(i, t).to_string(),
                u8::from(data.d()[i]).to_string(),
            ];
            r.extend((1..data.k()).map(|j| data.z()[(i, j)].to_string()));
            r
        })
    });
    write_rows(path.as_ref(), &header, rows)
}

/// Writes cross-section rows in the format read by [`load_rc_csv`].
pub fn write_rc_csv(path: impl AsRef<Path>, data: &RcDataset, schema: &Schema) -> Result<()> {
    if schema.covariates.len() + 1 != data.k() {
        return Err(Error::DimensionMismatch(
            "schema must name every covariate after the intercept".into(),
        ));
    }
    let mut header = vec![schema.period.clone(), schema.outcome.clone(), schema.treated.clone()];
    header.extend(schema.covariates.iter().cloned());
    let rows = (0..data.n()).map(|i| {
        let mut r = vec![
            data.periods()[i].to_string(),
            data.y()[i].to_string(),
            u8::from(data.d()[i]).to_string(),
        ];
        r.extend((1..data.k()).map(|j| data.z()[(i, j)].to_string()));
        r
    });
    write_rows(path.as_ref(), &header, rows)
}

// ---------------------------------------------------------------------------
// Multiple treatment cohorts

/// Balanced panel whose treated units start treatment in different periods.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiGroupDataset {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    /// First treatment period (1-indexed) or `None` for never treated.
    group: Vec<Option<usize>>,
    covariate_names: Vec<String>,
    /// File label of period 1.
    first_label: i64,
}

impl MultiGroupDataset {
    pub fn new(
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        group: Vec<Option<usize>>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        Self::validated(y, z, group, covariate_names, 1)
    }

    fn validated(
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        group: Vec<Option<usize>>,
        covariate_names: Vec<String>,
        first_label: i64,
    ) -> Result<Self> {
        let data = Self::from_parts(y, z, group, covariate_names, first_label)?;
        if data.group.iter().all(Option::is_some) {
            return Err(Error::InvalidData("the never-treated group is empty".into()));
        }
        if data.group.iter().all(Option::is_none) {
            return Err(Error::InvalidData("no treated groups".into()));
        }
        Ok(data)
    }

    fn from_parts(
        y: DMatrix<f64>,
        z: DMatrix<f64>,
        group: Vec<Option<usize>>,
        covariate_names: Vec<String>,
        first_label: i64,
    ) -> Result<Self> {
        let (n, t_total) = y.shape();
        if z.nrows() != n || group.len() != n || covariate_names.len() != z.ncols() {
            return Err(Error::DimensionMismatch("multi-group panel parts disagree".into()));
        }
        if let Some(g) = group.iter().flatten().find(|&&g| !(3..=t_total).contains(&g)) {
            return Err(Error::InvalidData(format!(
                "group starting in period {} needs two pre-periods and must lie within the panel",
                *g as i64 + first_label - 1
            )));
        }
        Ok(Self {
            y,
            z,
            group,
            covariate_names,
            first_label,
        })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_total(&self) -> usize {
        self.y.ncols()
    }

    pub fn groups(&self) -> &[Option<usize>] {
        &self.group
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Distinct treatment-start periods in increasing order.
    pub fn cohorts(&self) -> Vec<usize> {
        self.group.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Period label used in the input file for 1-indexed period `t`.
    pub fn period_label(&self, t: usize) -> i64 {
        t as i64 + self.first_label - 1
    }

    pub fn resample(&self, idx: &[usize]) -> Result<Self> {
        Self::from_parts(
            self.y.select_rows(idx),
            self.z.select_rows(idx),
            idx.iter().map(|&i| self.group[i]).collect(),
            self.covariate_names.clone(),
            self.first_label,
        )
    }

    /// Cohort `g` against the never-treated units.
    pub fn cohort_panel(&self, g: usize) -> Result<PanelDataset> {
        let idx: Vec<usize> = (0..self.n())
            .filter(|&i| self.group[i].is_none() || self.group[i] == Some(g))
            .collect();
        PanelDataset::with_names(
            self.y.select_rows(&idx),
            self.z.select_rows(&idx),
            idx.iter().map(|&i| self.group[i] == Some(g)).collect(),
            g,
            self.covariate_names.clone(),
        )
    }
}

/// Long-format multi-cohort panel; `schema.treated` names the column holding
/// the first treatment period (empty or 0 for never treated).
pub fn load_multigroup_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<MultiGroupDataset> {
    let table = Table::read(path.as_ref())?;
    let g_c = table.col(&schema.treated)?;
    let cov_c = covariate_cols(&table, schema)?;
    let p = pivot(&table, schema, &cov_c)?;
    let id_c = table.col(&schema.id)?;
    let mut group: HashMap<&str, Option<i64>> = HashMap::new();
    for r in &table.rows {
        let raw = &r[g_c];
        let g = match raw {
            "" | "0" => None,
            s => Some(s.parse::<i64>().map_err(|_| {
                Error::InvalidData(format!("group `{s}` is not an integer period"))
            })?),
        };
        if let Some(prev) = group.insert(&r[id_c], g) {
            if prev != g {
                return Err(Error::NonConstantCovariate {
                    unit: r[id_c].to_string(),
                    column: schema.treated.clone(),
                });
            }
        }
    }
    let cov = schema
        .covariates
        .iter()
        .enumerate()
        .map(|(j, name)| constant_column(&p, &p.extras[j], name))
        .collect::<Result<Vec<_>>>()?;
    let groups = p
        .ids
        .iter()
        .map(|id| {
            group[id.as_str()]
                .map(|g| {
                    let t = g - p.lo + 1;
                    if t < 1 {
                        Err(Error::BadPeriodLabels(format!("group {g} precedes the first period")))
                    } else {
                        Ok(t as usize)
                    }
                })
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    let z = design_with_intercept(&p, &cov);
    MultiGroupDataset::validated(p.y, z, groups, schema.names_with_intercept(), p.lo)
}

/// Default minimum number of treated units per cohort.
pub const DEFAULT_MIN_GROUP_SIZE: usize = 10;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GroupEstimate {
    /// First treatment period (1-indexed).
    pub group: usize,
    pub n_treated: usize,
    pub series: Vec<(i64, f64)>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EventPoint {
    /// Event time `t - g`.
    pub e: i64,
    pub att: f64,
    /// `(group, weight)` with weights proportional to cohort size.
    pub weights: Vec<(usize, f64)>,
    pub se: Option<f64>,
    pub percentile_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EventStudy {
    pub estimator: Estimator,
    pub groups: Vec<GroupEstimate>,
    pub events: Vec<EventPoint>,
    pub bootstrap_failed: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventStudyOptions {
    pub min_group_size: usize,
    /// `(replications, seed)` for a cohort-stratified unit bootstrap.
    pub bootstrap: Option<(usize, u64)>,
}

impl Default for EventStudyOptions {
    fn default() -> Self {
        Self {
            min_group_size: DEFAULT_MIN_GROUP_SIZE,
            bootstrap: None,
        }
    }
}

fn cohort_estimates(
    data: &MultiGroupDataset,
    spec: &ModelSpec,
    est: Estimator,
) -> Result<(Vec<GroupEstimate>, Vec<EventPoint>)> {
    let mut groups = Vec::new();
    let mut by_event: BTreeMap<i64, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for g in data.cohorts() {
        let panel = data.cohort_panel(g)?;
        let series: AttSeries = point_estimate(InputData::Panel(&panel), spec, est)?;
        let n_treated = panel.n_treated();
        let mut pts = Vec::new();
        for (&t, &a) in series.periods.iter().zip(&series.att) {
            let e = t as i64 - g as i64;
            pts.push((e, a));
            by_event.entry(e).or_default().push((g, n_treated, a));
        }
        groups.push(GroupEstimate {
            group: g,
            n_treated,
            series: pts,
        });
    }
    let events = by_event
        .into_iter()
        .map(|(e, v)| {
            let total: usize = v.iter().map(|x| x.1).sum();
            let weights: Vec<(usize, f64)> = v.iter().map(|x| (x.0, x.1 as f64 / total as f64)).collect();
            let att = v.iter().zip(&weights).map(|(x, w)| w.1 * x.2).sum();
            EventPoint {
                e,
                att,
                weights,
                se: None,
                percentile_ci: None,
            }
        })
        .collect();
    Ok((groups, events))
}

/// Cohort-by-cohort ATT against never-treated units, re-indexed by event
/// time and averaged across cohorts with cohort-size weights.
pub fn group_time_event_study(
    data: &MultiGroupDataset,
    spec: &ModelSpec,
    est: Estimator,
    opts: EventStudyOptions,
) -> Result<EventStudy> {
    if !matches!(
        est,
        Estimator::IfePanel | Estimator::Did | Estimator::Lt | Estimator::SerialUncorr
    ) {
        return Err(Error::InvalidArgument(format!(
            "event study needs a panel estimator, got {}",
            est.label()
        )));
    }
    for g in data.cohorts() {
        let size = data.group.iter().filter(|&&x| x == Some(g)).count();
        if size < opts.min_group_size {
            return Err(Error::GroupTooSmall {
                group: g,
                size,
                min: opts.min_group_size,
            });
        }
    }
    let (groups, mut events) = cohort_estimates(data, spec, est)?;
    let mut bootstrap_failed = None;
    if let Some((b, seed)) = opts.bootstrap {
        let mut strata: Vec<Vec<usize>> = vec![(0..data.n()).filter(|&i| data.group[i].is_none()).collect()];
        for g in data.cohorts() {
            strata.push((0..data.n()).filter(|&i| data.group[i] == Some(g)).collect());
        }
        let es: Vec<i64> = events.iter().map(|p| p.e).collect();
        let boot: BootstrapResult = bootstrap_with(
            data.n(),
            b,
            seed,
            Some(&strata),
            events.iter().map(|p| p.att).collect(),
            (0..events.len()).collect(),
            |idx| {
                let (_, ev) = cohort_estimates(&data.resample(idx)?, spec, est)?;
                if ev.iter().map(|p| p.e).ne(es.iter().copied()) {
                    return Err(Error::InvalidData("event times changed under resampling".into()));
                }
                Ok(ev.into_iter().map(|p| p.att).collect())
            },
        )?;
        for (j, p) in events.iter_mut().enumerate() {
            p.se = Some(boot.se[j]);
            p.percentile_ci = Some(boot.percentile_ci[j]);
        }
        bootstrap_failed = Some(boot.failed);
    }
    Ok(EventStudy {
        estimator: est,
        groups,
        events,
        bootstrap_failed,
    })
}
