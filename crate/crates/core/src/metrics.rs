//! Recall metrics for tile databases.
//!
//! * **VPR Recall @N**: share of queries whose ground-truth center lies inside
//!   at least one of the first `N` retrieved tiles (edge-inclusive, tested in
//!   Mercator space).
//! * **Georeference Recall @mu**: share of queries whose locally aligned
//!   position is strictly closer than `mu` meters to the ground truth. Failed
//!   alignments count as misses.
//!
//! Both are returned in percent, over all queries.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geo::{geodesic_distance, point_in_tile, GeoPoint};
use crate::tilemap::TileSet;

pub const QUERY_HEADER: [&str; 4] = ["query_id", "path", "gt_lat", "gt_lon"];

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEntry {
    pub query_id: usize,
    pub image_ref: PathBuf,
    pub gt: GeoPoint,
}

/// Query images with ground-truth centers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuerySet {
    pub entries: Vec<QueryEntry>,
    /// Directory that relative image refs resolve against.
    pub base_dir: PathBuf,
}

impl QuerySet {
    pub fn new(entries: Vec<QueryEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.query_id) {
                return Err(Error::Config(format!("duplicate query_id {}", e.query_id)));
            }
        }
        Ok(Self {
            entries,
            base_dir: PathBuf::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, i: usize) -> PathBuf {
        self.base_dir.join(&self.entries[i].image_ref)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != QUERY_HEADER {
            return Err(Error::parse(
                path,
                1,
                format!("expected header {}", QUERY_HEADER.join(",")),
            ));
        }
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let bad = |i: usize| {
                Error::parse(
                    path,
                    line,
                    format!("{}: cannot parse {:?}", QUERY_HEADER[i], field(i)),
                )
            };
            let query_id = field(0).parse::<usize>().map_err(|_| bad(0))?;
            let lat = field(2).parse::<f64>().map_err(|_| bad(2))?;
            let lon = field(3).parse::<f64>().map_err(|_| bad(3))?;
            let gt =
                GeoPoint::new(lat, lon).map_err(|e| Error::parse(path, line, e.to_string()))?;
            entries.push(QueryEntry {
                query_id,
                image_ref: PathBuf::from(field(1)),
                gt,
            });
        }
        let mut set = QuerySet::new(entries).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        set.base_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(QUERY_HEADER).map_err(|e| csv_err(path, e))?;
        for e in &self.entries {
            w.write_record([
                e.query_id.to_string(),
                e.image_ref.to_string_lossy().into_owned(),
                crate::tilemap::format_coord(e.gt.lat),
                crate::tilemap::format_coord(e.gt.lon),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Ranked tile ids per query, aligned with the query set order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub ranked: Vec<Vec<usize>>,
}

/// Local alignment output per query; `None` marks a failed alignment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentResult {
    pub positions: Vec<Option<GeoPoint>>,
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

pub fn vpr_recall(qs: &QuerySet, res: &RetrievalResult, tiles: &TileSet, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    if res.ranked.len() != qs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} retrieval lists for {} queries",
            res.ranked.len(),
            qs.len()
        )));
    }
    let required = n.min(tiles.len());
    let mut hits = 0;
    for (q, (entry, ranked)) in qs.entries.iter().zip(&res.ranked).enumerate() {
        if ranked.len() < required {
            return Err(Error::QueryResult {
                query: q,
                message: format!("{} results, need at least {required}", ranked.len()),
            });
        }
        let mut hit = false;
        for &id in ranked.iter().take(n) {
            let tile = tiles.get(id).ok_or(Error::UnknownTile(id))?;
            if point_in_tile(tile, entry.gt) {
                hit = true;
            }
        }
        hits += hit as usize;
    }
    Ok(percent(hits, qs.len()))
}

pub fn georeference_recall(qs: &QuerySet, al: &AlignmentResult, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu {mu} must be > 0")));
    }
    if al.positions.len() != qs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} alignment results for {} queries",
            al.positions.len(),
            qs.len()
        )));
    }
    let hits = qs
        .entries
        .iter()
        .zip(&al.positions)
        .filter(|(e, p)| p.is_some_and(|p| geodesic_distance(e.gt, p) < mu))
        .count();
    Ok(percent(hits, qs.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    VprRecall,
    GeoreferenceRecall,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::VprRecall => "vpr_recall",
            Metric::GeoreferenceRecall => "georeference_recall",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: Metric,
    /// N for VPR Recall, mu in meters for Georeference Recall.
    pub param: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

fn ascending_nonempty<T: PartialOrd>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "{what} must be a nonempty strictly ascending list"
        )));
    }
    Ok(())
}

pub fn recall_report(
    qs: &QuerySet,
    res: &RetrievalResult,
    tiles: &TileSet,
    al: &AlignmentResult,
    n_list: &[usize],
    mu_list: &[f64],
) -> Result<ReportTable> {
    ascending_nonempty(n_list, "N list")?;
    ascending_nonempty(mu_list, "mu list")?;
    let mut rows = Vec::with_capacity(n_list.len() + mu_list.len());
    for &n in n_list {
        rows.push(ReportRow {
            metric: Metric::VprRecall,
            param: n as f64,
            value: vpr_recall(qs, res, tiles, n)?,
        });
    }
    for &mu in mu_list {
        rows.push(ReportRow {
            metric: Metric::GeoreferenceRecall,
            param: mu,
            value: georeference_recall(qs, al, mu)?,
        });
    }
    Ok(ReportTable { rows })
}

impl ReportTable {
    pub fn get(&self, metric: Metric, param: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.param == param)
            .map(|r| r.value)
    }

    /// `metric,param,value` with values to one decimal.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,param,value\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.1}", r.metric.name(), r.param, r.value);
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<(String, String, String)> = self
            .rows
            .iter()
            .map(|r| {
                let label = match r.metric {
                    Metric::VprRecall => format!("R@{}", r.param),
                    Metric::GeoreferenceRecall => format!("{}m", r.param),
                };
                (r.metric.name().to_string(), label, format!("{:.1}", r.value))
            })
            .collect();
        let w0 = cells.iter().map(|c| c.0.len()).max().unwrap_or(0).max(6);
        let w1 = cells.iter().map(|c| c.1.len()).max().unwrap_or(0).max(5);
        let w2 = cells.iter().map(|c| c.2.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<w0$}  {:<w1$}  {:>w2$}", "metric", "param", "value");
        let _ = writeln!(s, "{}  {}  {}", "-".repeat(w0), "-".repeat(w1), "-".repeat(w2));
        for (a, b, c) in cells {
            let _ = writeln!(s, "{a:<w0$}  {b:<w1$}  {c:>w2$}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tilemap::TileRecord;

    fn tileset() -> TileSet {
        let t = |id: usize, lat: f64, lon: f64| TileRecord {
            tile_id: id,
            image_ref: format!("{id}.png").into(),
            nw: GeoPoint::new(lat, lon).unwrap(),
            se: GeoPoint::new(lat - 0.01, lon + 0.01).unwrap(),
            zoom_percent: 100.0,
            overlap_percent: 0.0,
            row: 0,
            col: id as u32,
        };
        TileSet {
            tiles: vec![t(0, 47.0, 8.0), t(1, 47.0, 8.01), t(2, 47.0, 8.02)],
            zoom_percent: 100.0,
            overlap_percent: 0.0,
            out_resolution: 64,
            base_dir: PathBuf::new(),
        }
    }

    fn queries(gts: &[(f64, f64)]) -> QuerySet {
        QuerySet::new(
            gts.iter()
                .enumerate()
                .map(|(i, &(lat, lon))| QueryEntry {
                    query_id: i,
                    image_ref: format!("q{i}.png").into(),
                    gt: GeoPoint::new(lat, lon).unwrap(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vpr_single_query() {
        let ts = tileset();
        let qs = queries(&[(46.995, 8.015)]);
        let hit = RetrievalResult {
            ranked: vec![vec![1, 0, 2]],
        };
        assert_eq!(vpr_recall(&qs, &hit, &ts, 1).unwrap(), 100.0);
        let miss = RetrievalResult {
            ranked: vec![vec![0, 2, 1]],
        };
        assert_eq!(vpr_recall(&qs, &miss, &ts, 2).unwrap(), 0.0);
        assert_eq!(vpr_recall(&qs, &miss, &ts, 3).unwrap(), 100.0);
        let unknown = RetrievalResult {
            ranked: vec![vec![7, 0, 1]],
        };
        assert!(matches!(
            vpr_recall(&qs, &unknown, &ts, 1),
            Err(Error::UnknownTile(7))
        ));
        let short = RetrievalResult {
            ranked: vec![vec![1]],
        };
        assert!(vpr_recall(&qs, &short, &ts, 2).is_err());
    }

    #[test]
    fn georeference_examples() {
        let qs = queries(&[(47.0, 8.0)]);
        let exact = AlignmentResult {
            positions: vec![Some(qs.entries[0].gt)],
        };
        for mu in [0.001, 1.0, 100.0] {
            assert_eq!(georeference_recall(&qs, &exact, mu).unwrap(), 100.0);
        }
        let failed = AlignmentResult {
            positions: vec![None],
        };
        assert_eq!(georeference_recall(&qs, &failed, 50.0).unwrap(), 0.0);
        assert!(georeference_recall(&qs, &exact, 0.0).is_err());
    }

    #[test]
    fn boundary_distance_is_a_miss() {
        let qs = queries(&[(0.0, 0.0)]);
        let p = GeoPoint::new(0.0, 1.0).unwrap();
        let d = geodesic_distance(qs.entries[0].gt, p);
        let al = AlignmentResult {
            positions: vec![Some(p)],
        };
        assert_eq!(georeference_recall(&qs, &al, d).unwrap(), 0.0);
        assert_eq!(georeference_recall(&qs, &al, d * (1.0 + 1e-12)).unwrap(), 100.0);
    }

    #[test]
    fn report_serialization() {
        let ts = tileset();
        let qs = queries(&[(46.995, 8.005)]);
        let res = RetrievalResult {
            ranked: vec![vec![0, 1, 2]],
        };
        let al = AlignmentResult {
            positions: vec![Some(qs.entries[0].gt)],
        };
        let t = recall_report(&qs, &res, &ts, &al, &[1, 2], &[10.0, 50.0]).unwrap();
        assert!(t.rows.iter().all(|r| r.value == 100.0));
        assert_eq!(
            t.to_csv(),
            "metric,param,value\nvpr_recall,1,100.0\nvpr_recall,2,100.0\n\
             georeference_recall,10,100.0\ngeoreference_recall,50,100.0\n"
        );
        assert!(t.to_text().contains("R@1"));
        assert!(recall_report(&qs, &res, &ts, &al, &[], &[10.0]).is_err());
        assert!(recall_report(&qs, &res, &ts, &al, &[2, 1], &[10.0]).is_err());
    }

    #[test]
    fn query_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let qs = queries(&[(47.123456789012, 8.5), (-33.9, 151.2)]);
        let p = dir.path().join("queries.csv");
        qs.save(&p).unwrap();
        let back = QuerySet::load(&p).unwrap();
        assert_eq!(back.entries, qs.entries);
        assert!(QuerySet::new(vec![qs.entries[0].clone(), qs.entries[0].clone()]).is_err());
    }
}
