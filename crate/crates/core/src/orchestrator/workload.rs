use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::{info, warn};

use super::config::ExperimentConfig;
use crate::data::{
    prepare, read_dataset, smote_oversample, write_dataset, EncodedDataset, PipelineConfig, SmoteScope,
};
use crate::error::{Error, Result};
use crate::partition::{partition, read_partition, write_partition, Partition};
use crate::seed;

pub const TRAIN_FILE: &str = "train.dataset";
pub const TEST_FILE: &str = "test.dataset";
pub const PARTITION_FILE: &str = "partition.json";
pub const SUMMARY_FILE: &str = "partition_summary.txt";

/// Global training split, its partition and the shared test set.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    pub partition: Partition,
}

/// What the round engine trains and evaluates on.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    /// Per-client training shards, oversampled when configured.
    pub shards: Vec<EncodedDataset>,
    pub test: EncodedDataset,
    pub partition: Partition,
    pub warnings: Vec<String>,
}

impl Workload {
    pub fn input_dim(&self) -> usize {
        self.test.dim()
    }
}

/// Load, clean, split, encode and partition as configured.
pub fn prepare_split(cfg: &ExperimentConfig) -> Result<PreparedSplit> {
    let table = cfg.data.load()?;
    let pipeline = cfg.pipeline();
    // Global oversampling is applied here so that it draws from the SMOTE seed.
    let global = pipeline.smote_scope == SmoteScope::GlobalTrain;
    let mut data = prepare(
        &table,
        &PipelineConfig {
            smote_scope: if global { SmoteScope::Off } else { pipeline.smote_scope },
            ..pipeline.clone()
        },
        cfg.seeds.split,
    )?;
    if global {
        data.train = smote_oversample(&data.train, pipeline.smote_k, cfg.seeds.smote)?;
    }
    let partition = partition(&data.train, &cfg.partition_spec())?;
    Ok(PreparedSplit {
        train: data.train,
        test: data.test,
        partition,
    })
}

/// Slice the partition into client shards and oversample each shard when
/// SMOTE runs per client. A shard with a single class, or fewer than two
/// minority rows, is left as is with a warning.
pub fn build_workload(split: PreparedSplit, cfg: &ExperimentConfig) -> Result<Workload> {
    let pipeline = cfg.pipeline();
    let mut shards = split.partition.client_datasets(&split.train)?;
    let mut warnings = split.partition.summary.warnings.clone();
    if pipeline.smote_scope == SmoteScope::PerClient {
        for (i, shard) in shards.iter_mut().enumerate() {
            let [n0, n1] = shard.class_counts();
            if n0.min(n1) < 2 {
                let msg = format!(
                    "client {i}: SMOTE skipped, class counts {n0}/{n1} leave fewer than two minority rows"
                );
                warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            let s = seed::derive(cfg.seeds.smote, &[seed::TAG_SMOTE, i as u64]);
            *shard = smote_oversample(shard, pipeline.smote_k, s)?;
        }
    }
    for (i, s) in shards.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Partition(format!("client {i} received no rows")));
        }
    }
    info!(
        "workload: {} clients, shard sizes {:?}, test rows {}",
        shards.len(),
        shards.iter().map(EncodedDataset::len).collect::<Vec<_>>(),
        split.test.len()
    );
    Ok(Workload {
        shards,
        test: split.test,
        partition: split.partition,
        warnings,
    })
}

/// Prepared split from `cfg.prepared_dir` when set, otherwise computed.
pub fn load_workload(cfg: &ExperimentConfig) -> Result<Workload> {
    let split = match &cfg.prepared_dir {
        Some(dir) => read_prepared(dir)?,
        None => prepare_split(cfg)?,
    };
    if split.partition.num_clients() != cfg.clients {
        return Err(Error::Config(format!(
            "prepared partition has {} clients, config asks for {}",
            split.partition.num_clients(),
            cfg.clients
        )));
    }
    build_workload(split, cfg)
}

fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_prepared(split: &PreparedSplit, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(TRAIN_FILE), |w| write_dataset(&split.train, w))?;
    write_atomic(&dir.join(TEST_FILE), |w| write_dataset(&split.test, w))?;
    write_atomic(&dir.join(PARTITION_FILE), |w| write_partition(&split.partition, w))?;
    write_atomic(&dir.join(SUMMARY_FILE), |w| {
        w.write_all(split.partition.render_summary().as_bytes())
            .map_err(|e| Error::io(dir.join(SUMMARY_FILE), e))
    })
}

pub fn read_prepared(dir: &Path) -> Result<PreparedSplit> {
    let open = |name: &str| {
        let p = dir.join(name);
        File::open(&p)
            .map(BufReader::new)
            .map_err(|e| Error::io(p, e))
    };
    let train = read_dataset(open(TRAIN_FILE)?)?;
    let test = read_dataset(open(TEST_FILE)?)?;
    let partition = read_partition(open(PARTITION_FILE)?)?;
    if partition.summary.source_rows != train.len() {
        return Err(Error::Partition(format!(
            "partition covers {} rows but the training file has {}",
            partition.summary.source_rows,
            train.len()
        )));
    }
    Ok(PreparedSplit {
        train,
        test,
        partition,
    })
}
