//! Self-describing binary voxel files.
//!
//! A file starts with a text header of `key=value` lines:
//!
//! ```text
//! LIPPMANN-VOXEL
//! version=1
//! dim=3
//! side=64
//! kind=phase-index
//! components=1
//! byte_order=little-endian
//! data_offset=0000000124
//! ```
//!
//! followed at `data_offset` by the payload in voxel-major order (axis 0
//! fastest, components interleaved): one `u8` per voxel for `phase-index`,
//! `components` little-endian `f64` per voxel for `real-field`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, VoxelField};

pub const MAGIC: &str = "LIPPMANN-VOXEL";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    Phases(Vec<u8>),
    Real { components: usize, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelFile {
    pub grid: Grid,
    pub data: VoxelData,
}

impl VoxelFile {
    pub fn phases(grid: Grid, phases: Vec<u8>) -> Result<Self> {
        let file = VoxelFile {
            grid,
            data: VoxelData::Phases(phases),
        };
        file.check()?;
        Ok(file)
    }

    pub fn field(field: &VoxelField) -> Self {
        VoxelFile {
            grid: *field.grid(),
            data: VoxelData::Real {
                components: field.components(),
                values: field.data().to_vec(),
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.data {
            VoxelData::Phases(_) => "phase-index",
            VoxelData::Real { .. } => "real-field",
        }
    }

    pub fn components(&self) -> usize {
        match &self.data {
            VoxelData::Phases(_) => 1,
            VoxelData::Real { components, .. } => *components,
        }
    }

    fn check(&self) -> Result<()> {
        let expected = self.grid.voxel_count() * self.components();
        let len = match &self.data {
            VoxelData::Phases(p) => p.len(),
            VoxelData::Real { values, .. } => values.len(),
        };
        if len != expected {
            return Err(Error::Format(format!(
                "payload has {len} entries, expected {expected}"
            )));
        }
        Ok(())
    }

    fn header(&self) -> String {
        let body = format!(
            "{MAGIC}\nversion={VERSION}\ndim={}\nside={}\nkind={}\ncomponents={}\nbyte_order=little-endian\n",
            self.grid.dim(),
            self.grid.side(),
            self.kind(),
            self.components()
        );
        // fixed-width offset field, so the header length does not depend on it
        let offset = body.len() + "data_offset=".len() + 10 + 1;
        format!("{body}data_offset={offset:010}\n")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let mut out = self.header().into_bytes();
        match &self.data {
            VoxelData::Phases(p) => out.extend_from_slice(p),
            VoxelData::Real { values, .. } => {
                out.reserve(values.len() * 8);
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        let mut pos = 0;
        let mut first = true;
        let mut offset = None;
        while offset.is_none() {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Format("truncated voxel header".into()))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end])
                .map_err(|_| Error::Format("voxel header is not text".into()))?;
            pos += end + 1;
            if first {
                if line != MAGIC {
                    return Err(Error::Format("not a voxel file (bad magic)".into()));
                }
                first = false;
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line '{line}'")))?;
            if k == "data_offset" {
                offset = Some(
                    v.parse::<usize>()
                        .map_err(|_| Error::Format("bad data_offset".into()))?,
                );
            } else {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::Format(format!("voxel header lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("bad {k}")))
        };
        if num("version")? != VERSION as usize {
            return Err(Error::Format("unsupported voxel file version".into()));
        }
        if get("byte_order")? != "little-endian" {
            return Err(Error::Format("unsupported byte order".into()));
        }
        let grid = Grid::new(num("dim")?, num("side")?)?;
        let components = num("components")?;
        let offset = offset.expect("loop ends with an offset");
        if offset > bytes.len() || offset < pos {
            return Err(Error::Format("data_offset out of range".into()));
        }
        let payload = &bytes[offset..];
        let count = grid.voxel_count() * components;
        let data = match get("kind")?.as_str() {
            "phase-index" => {
                if components != 1 || payload.len() != count {
                    return Err(Error::Format(format!(
                        "phase payload is {} bytes, expected {count}",
                        payload.len()
                    )));
                }
                VoxelData::Phases(payload.to_vec())
            }
            "real-field" => {
                if components == 0 || payload.len() != count * 8 {
                    return Err(Error::Format(format!(
                        "field payload is {} bytes, expected {}",
                        payload.len(),
                        count * 8
                    )));
                }
                let values = payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                VoxelData::Real { components, values }
            }
            other => return Err(Error::Format(format!("unknown voxel kind '{other}'"))),
        };
        Ok(VoxelFile { grid, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
