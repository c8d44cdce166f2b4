//! Dataset directory layout and file formats.
//!
//! A dataset directory holds:
//! - `trips.jsonl`: one labeled trip per line (nested link array)
//! - `vehicles.csv`: flat vehicle catalog
//! - `network.json`: the road network
//! - `metadata.json`: generator config, calibration scale, summary

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{LabeledTrip, VehicleSpec};
use crate::error::{Error, Result};
use crate::synthgen::{Dataset, RoadNetwork, ScaleFactors, SynthConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub config: SynthConfig,
    pub scale: ScaleFactors,
    pub trip_count: usize,
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut trips = BufWriter::new(File::create(dir.join("trips.jsonl"))?);
    for trip in &dataset.trips {
        serde_json::to_writer(&mut trips, trip)?;
        trips.write_all(b"\n")?;
    }
    trips.flush()?;

    let mut vehicles = csv::Writer::from_path(dir.join("vehicles.csv"))?;
    for veh in &dataset.vehicles {
        vehicles.serialize(veh)?;
    }
    vehicles.flush()?;

    let network = File::create(dir.join("network.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(network), &dataset.network)?;

    let meta = DatasetMetadata {
        config: dataset.config.clone(),
        scale: dataset.scale.clone(),
        trip_count: dataset.trips.len(),
    };
    let meta_file = File::create(dir.join("metadata.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(meta_file), &meta)?;
    Ok(())
}

pub fn read_trips(path: &Path) -> Result<Vec<LabeledTrip>> {
    let reader = BufReader::new(File::open(path)?);
    let mut trips = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trip: LabeledTrip = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        trips.push(trip);
    }
    if trips.is_empty() {
        return Err(Error::Data(format!("no trips in {}", path.display())));
    }
    Ok(trips)
}

pub fn read_vehicles(path: &Path) -> Result<Vec<VehicleSpec>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.deserialize() {
        let veh: VehicleSpec = record?;
        out.push(veh);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("no vehicles in {}", path.display())));
    }
    Ok(out)
}

pub fn read_network(path: &Path) -> Result<RoadNetwork> {
    let file = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}

pub fn read_metadata(path: &Path) -> Result<DatasetMetadata> {
    let file = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}

pub struct LoadedDataset {
    pub trips: Vec<LabeledTrip>,
    pub vehicles: Vec<VehicleSpec>,
    pub network: RoadNetwork,
    pub metadata: DatasetMetadata,
}

pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    Ok(LoadedDataset {
        trips: read_trips(&dir.join("trips.jsonl"))?,
        vehicles: read_vehicles(&dir.join("vehicles.csv"))?,
        network: read_network(&dir.join("network.json"))?,
        metadata: read_metadata(&dir.join("metadata.json"))?,
    })
}

/// Records the fully resolved configuration of a run next to its
/// outputs so every run is reproducible from the directory alone.
pub fn write_resolved_config<T: Serialize>(out_dir: &Path, config: &T) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let file = File::create(out_dir.join("resolved_config.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), config)?;
    Ok(())
}
