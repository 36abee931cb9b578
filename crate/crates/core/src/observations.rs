//! Hotspots, species lists and checklists: data model, file I/O and
//! partitioning.
//!
//! On disk a dataset is a directory of plain text files:
//!
//! | file                  | header                                      |
//! |-----------------------|---------------------------------------------|
//! | `species.txt`         | none, one `species_id` per line             |
//! | `hotspots.csv`        | `hotspot_id,lat,lon[,f1..fD]`               |
//! | `checklist_index.csv` | `hotspot_id,checklist_id`                   |
//! | `checklists.csv`      | `hotspot_id,checklist_id,species_id[,detected]` |
//! | `splits.csv`          | `hotspot_id,split` (optional)               |
//!
//! `checklists.csv` is sparse: only detections are listed, every unlisted
//! (checklist, species) pair is an absence. An optional `detected` column
//! accepts explicit `0`/`1` values; rows with `0` are no-ops.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{self, PortableRng};

pub const SPECIES_FILE: &str = "species.txt";
pub const HOTSPOTS_FILE: &str = "hotspots.csv";
pub const CHECKLIST_INDEX_FILE: &str = "checklist_index.csv";
pub const CHECKLISTS_FILE: &str = "checklists.csv";
pub const SPLITS_FILE: &str = "splits.csv";

/// Default number of held-out checklists used to estimate ground truth.
pub const DEFAULT_MIN_EVAL: usize = 15;

/// Ordered, unique species identifiers. Position is the species index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesIndex {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl SpeciesIndex {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("species list"));
        }
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if lookup.insert(name.clone(), i).is_some() {
                return Err(Error::Duplicate {
                    kind: "species",
                    id: name.clone(),
                });
            }
        }
        Ok(Self { names, lookup })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }
}

/// Presence/absence over the species list for one visit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checklist {
    pub checklist_id: String,
    pub detections: Vec<bool>,
}

impl Checklist {
    pub fn new(checklist_id: impl Into<String>, detections: Vec<bool>) -> Self {
        Self {
            checklist_id: checklist_id.into(),
            detections,
        }
    }

    pub fn detection_count(&self) -> usize {
        self.detections.iter().filter(|&&d| d).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HotspotRecord {
    pub hotspot_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub features: Option<Vec<f64>>,
    pub checklists: Vec<Checklist>,
}

impl HotspotRecord {
    pub fn new(hotspot_id: impl Into<String>, latitude: f64, longitude: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::param("latitude", latitude, "must lie in [-90, 90]"));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::param(
                "longitude",
                longitude,
                "must lie in [-180, 180]",
            ));
        }
        Ok(Self {
            hotspot_id: hotspot_id.into(),
            latitude,
            longitude,
            features: None,
            checklists: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// A validated collection of hotspots over a fixed species list.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub species: SpeciesIndex,
    pub hotspots: Vec<HotspotRecord>,
    /// One label per hotspot, aligned with `hotspots`.
    pub splits: Vec<Split>,
}

impl Dataset {
    /// Validates checklist widths, feature dimensions and split alignment.
    pub fn new(
        species: SpeciesIndex,
        hotspots: Vec<HotspotRecord>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if splits.len() != hotspots.len() {
            return Err(Error::LengthMismatch {
                expected: hotspots.len(),
                found: splits.len(),
            });
        }
        let mut seen_hotspots = HashSet::new();
        let mut seen_checklists = HashSet::new();
        let feature_dim = hotspots
            .iter()
            .find_map(|h| h.features.as_ref().map(Vec::len));
        for h in &hotspots {
            if !seen_hotspots.insert(h.hotspot_id.as_str()) {
                return Err(Error::Duplicate {
                    kind: "hotspot",
                    id: h.hotspot_id.clone(),
                });
            }
            if h.features.as_ref().map(Vec::len) != feature_dim {
                return Err(Error::LengthMismatch {
                    expected: feature_dim.unwrap_or(0),
                    found: h.features.as_ref().map_or(0, Vec::len),
                }
                .at_hotspot(&h.hotspot_id));
            }
            for c in &h.checklists {
                if c.detections.len() != species.len() {
                    return Err(Error::LengthMismatch {
                        expected: species.len(),
                        found: c.detections.len(),
                    }
                    .at_hotspot(&h.hotspot_id));
                }
                if !seen_checklists.insert(c.checklist_id.as_str()) {
                    return Err(Error::DuplicateChecklist {
                        id: c.checklist_id.clone(),
                    });
                }
            }
        }
        Ok(Self {
            species,
            hotspots,
            splits,
        })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.hotspots
            .first()
            .and_then(|h| h.features.as_ref().map(Vec::len))
    }

    pub fn hotspot(&self, id: &str) -> Option<&HotspotRecord> {
        self.hotspots.iter().find(|h| h.hotspot_id == id)
    }

    /// Hotspots carrying `split`, in file order.
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &HotspotRecord> {
        self.hotspots
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(h, _)| h)
    }
}

/// Fraction of checklists reporting each species.
pub fn empirical_rates(hotspot: &HotspotRecord) -> Result<Vec<f64>> {
    checklist_rates(&hotspot.checklists).map_err(|e| e.at_hotspot(&hotspot.hotspot_id))
}

/// Fraction of `checklists` reporting each species.
pub fn checklist_rates(checklists: &[Checklist]) -> Result<Vec<f64>> {
    let first = checklists.first().ok_or(Error::Empty("checklist set"))?;
    let mut counts = vec![0u64; first.detections.len()];
    for c in checklists {
        if c.detections.len() != counts.len() {
            return Err(Error::LengthMismatch {
                expected: counts.len(),
                found: c.detections.len(),
            });
        }
        for (n, &d) in counts.iter_mut().zip(&c.detections) {
            *n += u64::from(d);
        }
    }
    let total = checklists.len() as f64;
    Ok(counts.into_iter().map(|n| n as f64 / total).collect())
}

/// A hotspot's checklists split into an ordered update stream and a disjoint
/// evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub updates: Vec<Checklist>,
    pub eval: Vec<Checklist>,
}

/// Shuffles a hotspot's checklists under `seed` and takes the first
/// `n_update` as the update stream; the rest form the evaluation set.
pub fn partition_checklists(
    hotspot: &HotspotRecord,
    n_update: usize,
    seed: u64,
    min_eval: usize,
) -> Result<Partition> {
    let available = hotspot.checklists.len();
    let required = n_update + min_eval.max(1);
    if available < required {
        return Err(Error::InsufficientChecklists {
            hotspot: hotspot.hotspot_id.clone(),
            available,
            required,
        });
    }
    let mut order: Vec<usize> = (0..available).collect();
    PortableRng::derived(seed, rng::tag::SHUFFLE).shuffle(&mut order);
    let mut picked = order.into_iter().map(|i| hotspot.checklists[i].clone());
    let updates = picked.by_ref().take(n_update).collect();
    Ok(Partition {
        updates,
        eval: picked.collect(),
    })
}

/// Assigns `test_fraction` of the hotspots with at least `min_test_checklists`
/// checklists to the test split, then divides the rest between train and val
/// by `val_fraction`.
pub fn assign_splits(
    hotspots: &[HotspotRecord],
    min_test_checklists: usize,
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<Vec<Split>> {
    for (name, v) in [
        ("test_fraction", test_fraction),
        ("val_fraction", val_fraction),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(name, v, "must lie in [0, 1]"));
        }
    }
    let mut rng = PortableRng::derived(seed, rng::tag::SPLITS);
    let mut eligible: Vec<usize> = (0..hotspots.len())
        .filter(|&i| hotspots[i].checklists.len() >= min_test_checklists)
        .collect();
    rng.shuffle(&mut eligible);
    let n_test = (eligible.len() as f64 * test_fraction).round() as usize;
    let mut splits = vec![Split::Train; hotspots.len()];
    for &i in &eligible[..n_test] {
        splits[i] = Split::Test;
    }
    let mut rest: Vec<usize> = (0..hotspots.len())
        .filter(|&i| splits[i] != Split::Test)
        .collect();
    rng.shuffle(&mut rest);
    let n_val = (rest.len() as f64 * val_fraction).round() as usize;
    for &i in &rest[..n_val] {
        splits[i] = Split::Val;
    }
    Ok(splits)
}

/// Paths of the files that make up a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub species: PathBuf,
    pub hotspots: PathBuf,
    pub checklist_index: PathBuf,
    pub checklists: PathBuf,
    pub splits: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            species: dir.join(SPECIES_FILE),
            hotspots: dir.join(HOTSPOTS_FILE),
            checklist_index: dir.join(CHECKLIST_INDEX_FILE),
            checklists: dir.join(CHECKLISTS_FILE),
            splits: dir.join(SPLITS_FILE),
        }
    }

    /// Files that must exist, plus `splits.csv` when present.
    pub fn existing_inputs(&self) -> Vec<&Path> {
        let mut v = vec![
            self.species.as_path(),
            self.hotspots.as_path(),
            self.checklist_index.as_path(),
            self.checklists.as_path(),
        ];
        if self.splits.exists() {
            v.push(self.splits.as_path());
        }
        v
    }
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?))
}

pub(crate) fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => malformed(path, line, format!("{other:?}")),
    }
}

pub(crate) fn expect_header(
    path: &Path,
    headers: &csv::StringRecord,
    expected: &[&str],
) -> Result<()> {
    let ok = headers.len() >= expected.len()
        && expected.iter().zip(headers.iter()).all(|(a, b)| *a == b);
    if ok {
        Ok(())
    } else {
        Err(malformed(
            path,
            1,
            format!("expected header starting with `{}`", expected.join(",")),
        ))
    }
}

pub(crate) fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| malformed(path, line, format!("invalid {what} `{field}`")))
}

fn read_species(path: &Path) -> Result<SpeciesIndex> {
    let reader = BufReader::new(open(path)?);
    let mut names = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(malformed(
                path,
                i as u64 + 1,
                format!("duplicate species `{id}`"),
            ));
        }
        names.push(id.to_string());
    }
    SpeciesIndex::new(names).map_err(|_| malformed(path, 0, "no species listed"))
}

/// Reads and cross-validates a dataset directory.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let species = read_species(&paths.species)?;

    let mut hotspots: Vec<HotspotRecord> = Vec::new();
    let mut hotspot_pos: HashMap<String, usize> = HashMap::new();
    let path = paths.hotspots.as_path();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(path, &headers, &["hotspot_id", "lat", "lon"])?;
    let feature_dim = headers.len() - 3;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = &rec[0];
        let lat = parse_f64(path, line, &rec[1], "latitude")?;
        let lon = parse_f64(path, line, &rec[2], "longitude")?;
        let mut h =
            HotspotRecord::new(id, lat, lon).map_err(|e| malformed(path, line, e.to_string()))?;
        if feature_dim > 0 {
            let features = (3..rec.len())
                .map(|j| parse_f64(path, line, &rec[j], "feature"))
                .collect::<Result<Vec<_>>>()?;
            h.features = Some(features);
        }
        if hotspot_pos.insert(id.to_string(), hotspots.len()).is_some() {
            return Err(malformed(path, line, format!("duplicate hotspot `{id}`")));
        }
        hotspots.push(h);
    }

    // checklist id -> (hotspot position, checklist position)
    let mut checklist_pos: HashMap<String, (usize, usize)> = HashMap::new();
    let path = paths.checklist_index.as_path();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(path, &headers, &["hotspot_id", "checklist_id"])?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let hk = *hotspot_pos
            .get(&rec[0])
            .ok_or_else(|| Error::UnknownHotspot {
                path: path.to_path_buf(),
                line,
                id: rec[0].to_string(),
            })?;
        let cid = rec[1].to_string();
        if checklist_pos.contains_key(&cid) {
            return Err(Error::DuplicateChecklist { id: cid });
        }
        let h = &mut hotspots[hk];
        checklist_pos.insert(cid.clone(), (hk, h.checklists.len()));
        h.checklists
            .push(Checklist::new(cid, vec![false; species.len()]));
    }

    let path = paths.checklists.as_path();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(
        path,
        &headers,
        &["hotspot_id", "checklist_id", "species_id"],
    )?;
    let has_value = headers.get(3) == Some("detected");
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let hk = *hotspot_pos
            .get(&rec[0])
            .ok_or_else(|| Error::UnknownHotspot {
                path: path.to_path_buf(),
                line,
                id: rec[0].to_string(),
            })?;
        let &(ck_hotspot, ck) =
            checklist_pos
                .get(&rec[1])
                .ok_or_else(|| Error::UnknownChecklist {
                    path: path.to_path_buf(),
                    line,
                    id: rec[1].to_string(),
                })?;
        if ck_hotspot != hk {
            return Err(malformed(
                path,
                line,
                format!("checklist `{}` is indexed under another hotspot", &rec[1]),
            ));
        }
        let sp = species
            .position(&rec[2])
            .ok_or_else(|| Error::UnknownSpecies {
                path: path.to_path_buf(),
                line,
                id: rec[2].to_string(),
            })?;
        let detected = if has_value {
            match rec.get(3) {
                Some("1") => true,
                Some("0") => false,
                other => {
                    return Err(malformed(
                        path,
                        line,
                        format!(
                            "detection value must be 0 or 1, got `{}`",
                            other.unwrap_or("")
                        ),
                    ))
                }
            }
        } else {
            true
        };
        if detected {
            hotspots[hk].checklists[ck].detections[sp] = true;
        }
    }

    let splits = if paths.splits.exists() {
        read_splits(&paths.splits, &hotspot_pos, hotspots.len())?
    } else {
        vec![Split::Test; hotspots.len()]
    };
    Dataset::new(species, hotspots, splits)
}

fn read_splits(path: &Path, hotspot_pos: &HashMap<String, usize>, n: usize) -> Result<Vec<Split>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(path, &headers, &["hotspot_id", "split"])?;
    let mut splits: Vec<Option<Split>> = vec![None; n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let hk = *hotspot_pos
            .get(&rec[0])
            .ok_or_else(|| Error::UnknownHotspot {
                path: path.to_path_buf(),
                line,
                id: rec[0].to_string(),
            })?;
        let split = rec[1]
            .parse()
            .map_err(|m: String| malformed(path, line, m))?;
        if splits[hk].replace(split).is_some() {
            return Err(malformed(
                path,
                line,
                format!("hotspot `{}` listed twice", &rec[0]),
            ));
        }
    }
    splits
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| malformed(path, 0, "every hotspot needs a split label"))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a dataset in the sparse on-disk layout. Floats use Rust's shortest
/// round-trip formatting, so reloading is lossless.
pub fn save_dataset(dataset: &Dataset, paths: &DatasetPaths) -> Result<()> {
    let path = paths.species.as_path();
    let mut w = create(path)?;
    for name in dataset.species.names() {
        writeln!(w, "{name}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;

    let path = paths.hotspots.as_path();
    let mut w = create(path)?;
    let dim = dataset.feature_dim().unwrap_or(0);
    let mut header = String::from("hotspot_id,lat,lon");
    for d in 1..=dim {
        header.push_str(&format!(",f{d}"));
    }
    writeln!(w, "{header}").map_err(io_err(path))?;
    for h in &dataset.hotspots {
        write!(w, "{},{},{}", h.hotspot_id, h.latitude, h.longitude).map_err(io_err(path))?;
        for f in h.features.iter().flatten() {
            write!(w, ",{f}").map_err(io_err(path))?;
        }
        writeln!(w).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;

    let path = paths.checklist_index.as_path();
    let mut w = create(path)?;
    writeln!(w, "hotspot_id,checklist_id").map_err(io_err(path))?;
    for h in &dataset.hotspots {
        for c in &h.checklists {
            writeln!(w, "{},{}", h.hotspot_id, c.checklist_id).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))?;

    let path = paths.checklists.as_path();
    let mut w = create(path)?;
    writeln!(w, "hotspot_id,checklist_id,species_id").map_err(io_err(path))?;
    let names = dataset.species.names();
    for h in &dataset.hotspots {
        for c in &h.checklists {
            for (i, _) in c.detections.iter().enumerate().filter(|(_, &d)| d) {
                writeln!(w, "{},{},{}", h.hotspot_id, c.checklist_id, names[i])
                    .map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;

    let path = paths.splits.as_path();
    let mut w = create(path)?;
    writeln!(w, "hotspot_id,split").map_err(io_err(path))?;
    for (h, s) in dataset.hotspots.iter().zip(&dataset.splits) {
        writeln!(w, "{},{}", h.hotspot_id, s).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
