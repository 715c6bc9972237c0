//! Dataset directories: a manifest plus one record per trajectory.

use std::path::{Path, PathBuf};

use dynsuite_core::systems::{generate_trajectory, sample_initial, trajectory_seed, SystemSpec, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::record::Record;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GENERATOR_VERSION: &str = concat!("dynsuite-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateOnly {
    #[serde(rename = "state-only")]
    StateOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObsShape {
    Image([usize; 3]),
    StateOnly(StateOnly),
}

impl ObsShape {
    pub fn dims(self) -> Option<(usize, usize, usize)> {
        match self {
            ObsShape::Image([h, w, c]) => Some((h, w, c)),
            ObsShape::StateOnly(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub system: SystemSpec,
    pub dt: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub steps_per_trajectory: usize,
    pub obs_shape: ObsShape,
    pub global_seed: u64,
    pub generator_version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl Manifest {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Test => self.n_test,
        }
    }

    /// Index into the seed stream; test trajectories follow the training ones.
    pub fn global_index(&self, split: Split, i: usize) -> u64 {
        match split {
            Split::Train => i as u64,
            Split::Test => (self.n_train + i) as u64,
        }
    }

    pub fn record_path(&self, root: &Path, split: Split, i: usize) -> PathBuf {
        root.join(split.dir_name()).join(format!("{i:06}.dynb"))
    }

    /// The per-trajectory system, with any sampled hyperparameters.
    pub fn trajectory_system(&self, split: Split, i: usize) -> Result<SystemSpec, CliError> {
        let seed = trajectory_seed(self.global_seed, self.global_index(split, i));
        Ok(sample_initial(&self.system, seed)?.1)
    }

    pub fn read(root: &Path) -> Result<Manifest, CliError> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(CliError::Format(format!(
                "manifest format {} is not supported",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }

    pub fn write(&self, root: &Path) -> Result<(), CliError> {
        let path = root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

/// Generates every trajectory in parallel and writes the directory.
pub fn write_dataset(manifest: &Manifest, root: &Path) -> Result<(), CliError> {
    manifest.system.validate()?;
    for split in [Split::Train, Split::Test] {
        let dir = root.join(split.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    let resolution = manifest.obs_shape.dims().map(|(h, w, _)| (h, w));
    let jobs: Vec<(Split, usize)> = [Split::Train, Split::Test]
        .into_iter()
        .flat_map(|s| (0..manifest.count(s)).map(move |i| (s, i)))
        .collect();
    jobs.par_iter().try_for_each(|&(split, i)| {
        let traj = generate_trajectory(
            &manifest.system,
            manifest.global_seed,
            manifest.global_index(split, i),
            manifest.steps_per_trajectory,
            manifest.dt,
            resolution,
        )
        .map_err(|e| CliError::Generation {
            index: i,
            split: split.dir_name(),
            source: e,
        })?;
        Record::from_trajectory(&traj).write(&manifest.record_path(root, split, i))
    })?;
    manifest.write(root)
}

/// A dataset read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Dataset, CliError> {
        let manifest = Manifest::read(root)?;
        for split in [Split::Train, Split::Test] {
            let dir = root.join(split.dir_name());
            let on_disk = std::fs::read_dir(&dir)
                .map_err(|e| CliError::io(&dir, e))?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().extension().is_some_and(|x| x == "dynb"))
                .count();
            if on_disk != manifest.count(split) {
                return Err(CliError::Format(format!(
                    "manifest lists {} {} trajectories but {on_disk} are on disk",
                    manifest.count(split),
                    split.dir_name()
                )));
            }
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
        })
    }

    /// Reads the first `n` trajectories of a split, or all of them.
    pub fn load(&self, split: Split, n: Option<usize>) -> Result<Vec<Trajectory>, CliError> {
        let total = self.manifest.count(split);
        let n = n.unwrap_or(total);
        if n > total {
            return Err(CliError::Format(format!(
                "{n} {} trajectories requested, the dataset has {total}",
                split.dir_name()
            )));
        }
        (0..n)
            .into_par_iter()
            .map(|i| {
                let record = Record::read(&self.manifest.record_path(&self.root, split, i))?;
                if record.n_steps != self.manifest.steps_per_trajectory {
                    return Err(CliError::Format(format!(
                        "record {i} has {} steps, the manifest says {}",
                        record.n_steps, self.manifest.steps_per_trajectory
                    )));
                }
                let system = self.manifest.trajectory_system(split, i)?;
                Ok(record.to_trajectory(system, self.manifest.dt))
            })
            .collect()
    }
}
