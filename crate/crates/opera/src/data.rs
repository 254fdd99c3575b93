//! Instance generation: the synthetic benchmark family and ingestion of trip
//! records into a grid-discretized arrival model.

use std::collections::HashMap;
use std::io::Read;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grouping::{self, GroupCatalog};
use crate::model::{
    ArrivalModel, Instance, Metadata, Occupancy, OccupancyModel, Resource, VertexType, WeightModel,
};
use crate::rng::{self, Purpose};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Group(#[from] grouping::GroupError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trip record at line {0}: {1}")]
    BadRecord(usize, String),
    #[error("no trips fell on the training days")]
    NoTrainingData,
    #[error("invalid parameters: {0}")]
    BadParams(String),
}

/// Parameters of the synthetic family: uniform-simplex arrival rows, constant
/// occupancies drawn uniformly per (resource class, group), and revenue
/// `base + 0.5 * occupancy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub resources: usize,
    pub types: usize,
    pub rounds: usize,
    pub kappa: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_base_revenue")]
    pub base_revenue: f64,
    #[serde(default = "default_occupancy_max")]
    pub occupancy_max: usize,
    /// Force a single constant occupancy everywhere (overrides the draw).
    #[serde(default)]
    pub occupancy_const: Option<usize>,
    /// Number of weight/occupancy-identical resource classes.
    #[serde(default = "default_classes")]
    pub resource_classes: usize,
}

fn default_batch() -> usize {
    5
}
fn default_base_revenue() -> f64 {
    1.0
}
fn default_occupancy_max() -> usize {
    60
}
fn default_classes() -> usize {
    2
}

/// Class of a resource id under an even contiguous split.
pub fn resource_class(u: usize, resources: usize, classes: usize) -> usize {
    (u * classes) / resources
}

/// Pure function of `(params, seed)`: the same call always yields the same
/// instance bytes.
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<Instance, DataError> {
    if params.resources == 0 || params.types == 0 || params.rounds == 0 {
        return Err(DataError::BadParams("all dimensions must be positive".into()));
    }
    if params.kappa >= params.batch {
        return Err(DataError::BadParams(format!(
            "batch size {} must exceed kappa {}",
            params.batch, params.kappa
        )));
    }
    let classes = params.resource_classes.clamp(1, params.resources);
    let ng = grouping::count_group_types(params.types, params.kappa)? as usize;
    let mut r = rng::stream(seed, 0, 0, Purpose::Generator);

    // Arrival rows: iid exponentials normalized, i.e. uniform on the simplex.
    let probs: Vec<Vec<f64>> = (0..params.rounds)
        .map(|_| {
            let mut row: Vec<f64> = (0..params.types).map(|_| -f64::ln(r.gen::<f64>())).collect();
            let s: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= s;
            }
            // Renormalize exactly so validation's 1e-9 check is robust.
            let s: f64 = row.iter().sum();
            let last = params.types - 1;
            row[last] += 1.0 - s;
            row
        })
        .collect();

    // One occupancy constant per (class, group), shared by every resource of
    // the class and every round.
    let occ: Vec<Vec<usize>> = (0..classes)
        .map(|_| {
            (0..ng)
                .map(|_| {
                    params
                        .occupancy_const
                        .unwrap_or_else(|| r.gen_range(1..=params.occupancy_max))
                })
                .collect()
        })
        .collect();

    let mut weights = WeightModel::default();
    let mut occupancy = OccupancyModel::uniform(Occupancy::Constant(1));
    for u in 0..params.resources {
        let c = resource_class(u, params.resources, classes);
        for g in 0..ng {
            let dur = occ[c][g];
            weights
                .constant
                .push((u, g, params.base_revenue + 0.5 * dur as f64));
            occupancy.constant.push((u, g, Occupancy::Constant(dur)));
        }
    }
    weights.sort();
    occupancy.sort();

    Ok(Instance {
        kappa: params.kappa,
        resources: (0..params.resources)
            .map(|id| Resource {
                id,
                capacity: params.kappa,
            })
            .collect(),
        vertex_types: (0..params.types).map(|id| VertexType { id, label: None }).collect(),
        arrivals: ArrivalModel {
            rounds: params.rounds,
            batch_sizes: vec![params.batch; params.rounds],
            probs,
        },
        weights,
        occupancy,
        null_type: None,
        allow_small_batches: false,
        metadata: Metadata {
            seed: Some(seed),
            generator: Some("synthetic".to_string()),
            note: None,
        },
    })
}

/// Equal-area square grid over a lat/lon bounding box (equirectangular
/// approximation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub cell_km: f64,
}

const KM_PER_DEG_LAT: f64 = 110.574;
const KM_PER_DEG_LON_EQ: f64 = 111.32;

#[derive(Debug, Clone, Copy)]
pub struct Grid {
    pub spec: GridSpec,
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Grid {
        let height_km = (spec.lat_max - spec.lat_min) * KM_PER_DEG_LAT;
        let mid = 0.5 * (spec.lat_min + spec.lat_max);
        let width_km =
            (spec.lon_max - spec.lon_min) * KM_PER_DEG_LON_EQ * mid.to_radians().cos();
        let rows = (height_km / spec.cell_km).ceil().max(1.0) as usize;
        let cols = (width_km / spec.cell_km).ceil().max(1.0) as usize;
        Grid { spec, rows, cols }
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major cell id, or None for points outside the box.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<usize> {
        if lat < self.spec.lat_min
            || lat > self.spec.lat_max
            || lon < self.spec.lon_min
            || lon > self.spec.lon_max
        {
            return None;
        }
        let y = (lat - self.spec.lat_min) * KM_PER_DEG_LAT;
        let mid = 0.5 * (self.spec.lat_min + self.spec.lat_max);
        let x = (lon - self.spec.lon_min) * KM_PER_DEG_LON_EQ * mid.to_radians().cos();
        let row = ((y / self.spec.cell_km) as usize).min(self.rows - 1);
        let col = ((x / self.spec.cell_km) as usize).min(self.cols - 1);
        Some(row * self.cols + col)
    }

    /// Manhattan distance between two cells, in cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = (a / self.cols, a % self.cols);
        let (rb, cb) = (b / self.cols, b % self.cols);
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }
}

/// Map points to cell ids; out-of-box points are dropped with a count.
pub fn grid_discretize(points: &[(f64, f64)], spec: GridSpec) -> (Grid, Vec<Option<usize>>, usize) {
    let grid = Grid::new(spec);
    let cells: Vec<Option<usize>> = points
        .iter()
        .map(|&(lat, lon)| grid.cell_of(lat, lon))
        .collect();
    let dropped = cells.iter().filter(|c| c.is_none()).count();
    (grid, cells, dropped)
}

#[derive(Debug, Deserialize)]
struct TripRecord {
    pickup_datetime: String,
    pickup_lat: f64,
    pickup_lon: f64,
    dropoff_lat: f64,
    dropoff_lon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub total_rows: usize,
    pub dropped_outside_grid: usize,
    pub dropped_off_days: usize,
    pub train_days: Vec<String>,
    pub cells: usize,
    pub od_types: usize,
}

/// Arrival model estimated from trip records over the training days.
///
/// Vertex types are origin-destination cell pairs plus a trailing null type;
/// `b^t` is the rounded mean per-round trip count over the training days (at
/// least 1) and the null type absorbs the slack so each row sums to one.
pub struct EstimatedArrivals {
    pub arrivals: ArrivalModel,
    pub grid: Grid,
    /// Number of OD types; the null type has index `od_types`.
    pub od_types: usize,
    pub report: IngestReport,
    /// Mean per-round count per OD type (for occupancy/weight derivation).
    pub od_counts: Vec<Vec<f64>>,
}

pub fn estimate_arrival_model<R: Read>(
    reader: R,
    spec: GridSpec,
    rounds: usize,
    train_days: &[NaiveDate],
) -> Result<EstimatedArrivals, DataError> {
    let grid = Grid::new(spec);
    let cells = grid.num_cells();
    let od_types = cells * cells;
    let mut counts: Vec<HashMap<usize, usize>> = vec![HashMap::new(); rounds];
    let mut total_rows = 0usize;
    let mut dropped_grid = 0usize;
    let mut dropped_days = 0usize;

    let mut csv_reader = csv::Reader::from_reader(reader);
    for (i, rec) in csv_reader.deserialize::<TripRecord>().enumerate() {
        let rec = rec?;
        total_rows += 1;
        let dt = NaiveDateTime::parse_from_str(&rec.pickup_datetime, "%Y-%m-%d %H:%M:%S")
            .map_err(|e| DataError::BadRecord(i + 2, format!("pickup_datetime: {e}")))?;
        if !train_days.contains(&dt.date()) {
            dropped_days += 1;
            continue;
        }
        let (Some(from), Some(to)) = (
            grid.cell_of(rec.pickup_lat, rec.pickup_lon),
            grid.cell_of(rec.dropoff_lat, rec.dropoff_lon),
        ) else {
            dropped_grid += 1;
            continue;
        };
        let secs = dt.time().num_seconds_from_midnight() as usize;
        let t = (secs * rounds / 86_400).min(rounds - 1);
        *counts[t].entry(from * cells + to).or_insert(0) += 1;
    }
    if counts.iter().all(|c| c.is_empty()) {
        return Err(DataError::NoTrainingData);
    }

    let days = train_days.len().max(1) as f64;
    let od_counts: Vec<Vec<f64>> = counts
        .iter()
        .map(|round| {
            let mut row = vec![0.0f64; od_types];
            for (&od, &n) in round {
                row[od] = n as f64 / days;
            }
            row
        })
        .collect();

    let mut batch_sizes = Vec::with_capacity(rounds);
    let mut probs = Vec::with_capacity(rounds);
    for row in &od_counts {
        let mean_total: f64 = row.iter().sum();
        let b = mean_total.round().max(1.0);
        batch_sizes.push(b as usize);
        // Share per OD relative to the rounded batch size; the null type
        // absorbs the remainder (rows renormalized when shares exceed one).
        let mut p: Vec<f64> = row.iter().map(|c| c / b).collect();
        let s: f64 = p.iter().sum();
        let null_p = if s > 1.0 {
            for v in p.iter_mut() {
                *v /= s;
            }
            0.0
        } else {
            1.0 - s
        };
        p.push(null_p);
        let total: f64 = p.iter().sum();
        p[od_types] += 1.0 - total;
        probs.push(p);
    }

    Ok(EstimatedArrivals {
        arrivals: ArrivalModel {
            rounds,
            batch_sizes,
            probs,
        },
        grid,
        od_types,
        report: IngestReport {
            total_rows,
            dropped_outside_grid: dropped_grid,
            dropped_off_days: dropped_days,
            train_days: train_days.iter().map(|d| d.to_string()).collect(),
            cells,
            od_types,
        },
        od_counts,
    })
}

/// Parameters for building a full instance from estimated arrivals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripInstanceParams {
    pub resources: usize,
    pub kappa: usize,
    #[serde(default = "default_base_revenue")]
    pub base_revenue: f64,
    /// Rounds a resource stays busy per cell of OD Manhattan distance.
    #[serde(default = "default_rounds_per_cell")]
    pub rounds_per_cell: usize,
}

fn default_rounds_per_cell() -> usize {
    1
}

/// Build a complete instance from estimated arrivals. Occupancy is derived
/// from OD grid distance (documented default, overridable upstream); only
/// groups whose members share a pickup cell are weighted, everything else is
/// an implicit zero / infeasible pairing. Weights are identical across
/// resources, so the instance forms a single symmetric class.
pub fn instance_from_trips(
    est: &EstimatedArrivals,
    params: &TripInstanceParams,
) -> Result<Instance, DataError> {
    if params.resources == 0 {
        return Err(DataError::BadParams("resources must be positive".into()));
    }
    let cells = est.grid.num_cells();
    let nv = est.od_types + 1;
    let null_type = est.od_types;
    let catalog = GroupCatalog::build(nv, params.kappa)?;
    let dur_of = |od: usize| -> usize {
        let (from, to) = (od / cells, od % cells);
        (est.grid.cell_distance(from, to) * params.rounds_per_cell).max(1)
    };
    let mut weighted: Vec<(usize, usize)> = Vec::new(); // (g, duration)
    for g in 0..catalog.len() {
        let members = catalog.group(g).members();
        if members.iter().any(|&v| v == null_type) {
            continue;
        }
        // Shareable only when every member departs from the same cell.
        let first_cell = members[0] / cells;
        if members.iter().any(|&v| v / cells != first_cell) {
            continue;
        }
        let dur = members.iter().map(|&v| dur_of(v)).max().unwrap();
        weighted.push((g, dur));
    }
    let mut weights = WeightModel::default();
    let mut occupancy = OccupancyModel::uniform(Occupancy::Constant(1));
    for u in 0..params.resources {
        for &(g, dur) in &weighted {
            weights
                .constant
                .push((u, g, params.base_revenue + 0.5 * dur as f64));
            occupancy.constant.push((u, g, Occupancy::Constant(dur)));
        }
    }
    weights.sort();
    occupancy.sort();
    Ok(Instance {
        kappa: params.kappa,
        resources: (0..params.resources)
            .map(|id| Resource {
                id,
                capacity: params.kappa,
            })
            .collect(),
        vertex_types: (0..nv)
            .map(|id| VertexType {
                id,
                label: Some(if id == null_type {
                    "null".to_string()
                } else {
                    format!("{}->{}", id / cells, id % cells)
                }),
            })
            .collect(),
        arrivals: est.arrivals.clone(),
        weights,
        occupancy,
        null_type: Some(null_type),
        allow_small_batches: true,
        metadata: Metadata {
            seed: None,
            generator: Some("trips".to_string()),
            note: Some(format!(
                "grid {}x{} cells, {} OD types",
                est.grid.rows, est.grid.cols, est.od_types
            )),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    fn params() -> SyntheticParams {
        SyntheticParams {
            resources: 10,
            types: 10,
            rounds: 200,
            kappa: 2,
            batch: 5,
            base_revenue: 1.0,
            occupancy_max: 60,
            occupancy_const: None,
            resource_classes: 2,
        }
    }

    #[test]
    fn synthetic_defaults_validate() {
        let inst = generate_synthetic(&params(), 7).unwrap();
        assert!(validate_instance(&inst).passed());
        assert_eq!(inst.num_resources(), 10);
        assert_eq!(inst.num_types(), 10);
        assert_eq!(inst.rounds(), 200);
    }

    #[test]
    fn constant_occupancy_override() {
        let mut p = params();
        p.base_revenue = 0.0;
        p.occupancy_const = Some(2);
        let inst = generate_synthetic(&p, 1).unwrap();
        // Every weighted entry is 0 + 0.5 * 2 = 1.
        for &(_, _, w) in &inst.weights.constant {
            assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&params(), 42).unwrap();
        let b = generate_synthetic(&params(), 42).unwrap();
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
        let c = generate_synthetic(&params(), 43).unwrap();
        assert_ne!(a.to_canonical_json(), c.to_canonical_json());
    }

    #[test]
    fn eleven_cell_grid_yields_121_od_types() {
        // A ~4 km x ~44 km strip at 4 km cells: 11 cells, 121 OD pairs. The
        // spans sit just under the cell multiples so rounding cannot tip the
        // ceil to an extra row or column.
        let spec = GridSpec {
            lat_min: 40.0,
            lat_max: 40.0 + 43.9 / KM_PER_DEG_LAT,
            lon_min: -74.0,
            lon_max: -74.0 + 3.9 / (KM_PER_DEG_LON_EQ * (40.2f64).to_radians().cos()),
            cell_km: 4.0,
        };
        let grid = Grid::new(spec);
        assert_eq!(grid.num_cells(), 11);
        assert_eq!(grid.num_cells() * grid.num_cells(), 121);
    }

    #[test]
    fn grid_corner_and_outside_points() {
        let spec = GridSpec {
            lat_min: 0.0,
            lat_max: 0.1,
            lon_min: 0.0,
            lon_max: 0.1,
            cell_km: 100.0,
        };
        let (grid, cells, dropped) =
            grid_discretize(&[(0.0, 0.0), (0.05, 0.05), (1.0, 1.0)], spec);
        assert_eq!(grid.num_cells(), 1);
        assert_eq!(cells[0], Some(0));
        assert_eq!(cells[1], Some(0));
        assert_eq!(cells[2], None);
        assert_eq!(dropped, 1);
    }

    fn trips_csv(rows: &[(&str, f64, f64, f64, f64)]) -> String {
        let mut s =
            String::from("pickup_datetime,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon\n");
        for r in rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.0, r.1, r.2, r.3, r.4));
        }
        s
    }

    #[test]
    fn single_trip_degenerate_model() {
        let spec = GridSpec {
            lat_min: 0.0,
            lat_max: 0.1,
            lon_min: 0.0,
            lon_max: 0.1,
            cell_km: 100.0,
        };
        let csv = trips_csv(&[("2016-01-04 00:10:00", 0.05, 0.05, 0.05, 0.05)]);
        let day = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let est = estimate_arrival_model(csv.as_bytes(), spec, 1, &[day]).unwrap();
        assert_eq!(est.arrivals.batch_sizes, vec![1]);
        assert!((est.arrivals.probs[0][0] - 1.0).abs() < 1e-12);
        assert!((est.arrivals.probs[0][1]).abs() < 1e-12); // null share
    }

    #[test]
    fn uniform_two_od_mix_recovered() {
        let spec = GridSpec {
            lat_min: 0.0,
            lat_max: 0.2,
            lon_min: 0.0,
            lon_max: 0.1,
            cell_km: 12.0,
        };
        let grid = Grid::new(spec);
        assert_eq!(grid.num_cells(), 2);
        // Alternate two OD pairs evenly across one training day.
        let mut rows = Vec::new();
        for i in 0..200 {
            let minute = (i * 7) % 1440;
            let stamp = format!("2016-01-04 {:02}:{:02}:00", minute / 60, minute % 60);
            if i % 2 == 0 {
                rows.push((stamp, 0.02, 0.05, 0.15, 0.05)); // cell 0 -> 1
            } else {
                rows.push((stamp, 0.15, 0.05, 0.02, 0.05)); // cell 1 -> 0
            }
        }
        let refs: Vec<(&str, f64, f64, f64, f64)> =
            rows.iter().map(|r| (r.0.as_str(), r.1, r.2, r.3, r.4)).collect();
        let csv = trips_csv(&refs);
        let day = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let est = estimate_arrival_model(csv.as_bytes(), spec, 1, &[day]).unwrap();
        // One round: both OD types get ~half the mass.
        let p01 = est.arrivals.probs[0][1]; // 0 -> 1
        let p10 = est.arrivals.probs[0][2]; // 1 -> 0
        assert!((p01 - 0.5).abs() < 0.05, "{p01}");
        assert!((p10 - 0.5).abs() < 0.05, "{p10}");
        // Row sums to one exactly after null padding.
        let sum: f64 = est.arrivals.probs[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_day_trips_are_excluded() {
        let spec = GridSpec {
            lat_min: 0.0,
            lat_max: 0.1,
            lon_min: 0.0,
            lon_max: 0.1,
            cell_km: 100.0,
        };
        let csv = trips_csv(&[
            ("2016-01-04 00:10:00", 0.05, 0.05, 0.05, 0.05),
            ("2016-01-05 00:10:00", 0.05, 0.05, 0.05, 0.05),
        ]);
        let day = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let est = estimate_arrival_model(csv.as_bytes(), spec, 1, &[day]).unwrap();
        assert_eq!(est.report.dropped_off_days, 1);
    }

    #[test]
    fn trip_instance_validates() {
        let spec = GridSpec {
            lat_min: 0.0,
            lat_max: 0.2,
            lon_min: 0.0,
            lon_max: 0.1,
            cell_km: 12.0,
        };
        let csv = trips_csv(&[
            ("2016-01-04 01:00:00", 0.02, 0.05, 0.15, 0.05),
            ("2016-01-04 02:00:00", 0.15, 0.05, 0.02, 0.05),
            ("2016-01-04 03:00:00", 0.02, 0.05, 0.02, 0.05),
        ]);
        let day = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let est = estimate_arrival_model(csv.as_bytes(), spec, 4, &[day]).unwrap();
        let inst = instance_from_trips(
            &est,
            &TripInstanceParams {
                resources: 3,
                kappa: 2,
                base_revenue: 1.0,
                rounds_per_cell: 1,
            },
        )
        .unwrap();
        let report = validate_instance(&inst);
        assert!(report.passed(), "{:?}", report.violations);
        assert_eq!(inst.null_type, Some(4));
    }
}
