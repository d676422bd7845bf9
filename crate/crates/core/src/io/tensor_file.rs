//! Binary container for named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "AMZT"
//! version    u32      currently 1
//! entries    u32      entry count
//! per entry:
//!   name     u16 length + UTF-8 bytes
//!   dtype    u8       0 = f32 (the only defined code)
//!   ndim     u32
//!   dims     ndim x u64
//!   payload  product(dims) x f32, row-major
//! ```
//!
//! Entry names are unique; insertion order is preserved, so writing the same
//! entries always produces the same bytes and write-then-read round trips are
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::tensor::Tensor;

/// File magic identifying the container format.
pub const MAGIC: [u8; 4] = *b"AMZT";
/// Container format version this build reads and writes.
pub const VERSION: u32 = 1;
/// Dtype code for 32-bit floats, the only payload type defined by version 1.
pub const DTYPE_F32: u8 = 0;

/// Malformed-container errors. Each corruption class is a distinct variant so
/// callers (and tests) can tell them apart.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {MAGIC:?} (\"AMZT\"), found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },

    #[error("unsupported dtype code {found} for entry {name:?} (0 = f32 is the only defined code)")]
    UnsupportedDtype { name: String, found: u8 },

    #[error("truncated file while reading {context}")]
    Truncated { context: &'static str },

    #[error("truncated payload for entry {name:?}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        name: String,
        expected: u64,
        found: u64,
    },

    #[error("duplicate name {name:?}")]
    DuplicateName { name: String },

    #[error("malformed entry name: {0}")]
    MalformedName(String),

    #[error("non-finite value in entry {name:?}")]
    NonFinite { name: String },

    #[error("io")]
    Io(#[from] std::io::Error),
}

/// In-memory view of a container: named `f32` tensors in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TensorFile {
    entries: Vec<(String, Tensor<f32>)>,
}

impl TensorFile {
    /// Empty container.
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a named tensor. Names must be unique and at most 65535 bytes.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> Result<(), FormatError> {
        let name = name.into();
        if self.entries.iter().any(|(existing, _)| *existing == name) {
            return Err(FormatError::DuplicateName { name });
        }
        if name.len() > u16::MAX as usize {
            return Err(FormatError::MalformedName(format!(
                "name length {} exceeds {}",
                name.len(),
                u16::MAX
            )));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    /// Look up an entry by name.
    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries
            .iter()
            .find(|(entry, _)| entry == name)
            .map(|(_, tensor)| tensor)
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[(String, Tensor<f32>)] {
        &self.entries
    }

    /// Entry names in insertion order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(name, _)| name.as_str())
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when the container has no entries.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse a container from a reader.
    pub fn read_from(mut reader: impl Read) -> Result<Self, FormatError> {
        let mut magic = [0u8; 4];
        read_exact_or(&mut reader, &mut magic, "magic")?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic { found: magic });
        }
        let version = reader
            .read_u32::<LittleEndian>()
            .map_err(|e| truncated(e, "version"))?;
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion { found: version });
        }
        let count = reader
            .read_u32::<LittleEndian>()
            .map_err(|e| truncated(e, "entry count"))?;

        let mut file = Self::new();
        for _ in 0..count {
            let name_len = reader
                .read_u16::<LittleEndian>()
                .map_err(|e| truncated(e, "entry name length"))?;
            let mut name_bytes = vec![0u8; name_len as usize];
            read_exact_or(&mut reader, &mut name_bytes, "entry name")?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| FormatError::MalformedName(e.to_string()))?;

            let dtype = reader.read_u8().map_err(|e| truncated(e, "dtype"))?;
            if dtype != DTYPE_F32 {
                return Err(FormatError::UnsupportedDtype { name, found: dtype });
            }
            let ndim = reader
                .read_u32::<LittleEndian>()
                .map_err(|e| truncated(e, "ndim"))?;
            let mut dims = Vec::with_capacity(ndim as usize);
            let mut elements: u128 = 1;
            for _ in 0..ndim {
                let dim = reader
                    .read_u64::<LittleEndian>()
                    .map_err(|e| truncated(e, "dims"))?;
                elements = elements.saturating_mul(u128::from(dim));
                dims.push(dim as usize);
            }

            // Pull the payload through `take` so absurd dims cannot trigger a
            // huge up-front allocation: a short file surfaces as truncation.
            let expected_bytes = elements.saturating_mul(4);
            let clamped = u64::try_from(expected_bytes).unwrap_or(u64::MAX);
            let mut payload = Vec::new();
            (&mut reader)
                .take(clamped)
                .read_to_end(&mut payload)
                .map_err(FormatError::Io)?;
            if (payload.len() as u64) < clamped {
                return Err(FormatError::TruncatedPayload {
                    name,
                    expected: clamped,
                    found: payload.len() as u64,
                });
            }
            let values: Vec<f32> = payload
                .chunks_exact(4)
                .map(|chunk| f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
                .collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FormatError::NonFinite { name });
            }
            let tensor = Tensor::from_vec(dims, values)
                .expect("length matches dims product by construction");
            file.insert(name, tensor)?;
        }
        Ok(file)
    }

    /// Serialize the container to a writer in insertion order.
    pub fn write_to(&self, mut writer: impl Write) -> Result<(), FormatError> {
        writer.write_all(&MAGIC)?;
        writer.write_u32::<LittleEndian>(VERSION)?;
        writer.write_u32::<LittleEndian>(self.entries.len() as u32)?;
        for (name, tensor) in &self.entries {
            writer.write_u16::<LittleEndian>(name.len() as u16)?;
            writer.write_all(name.as_bytes())?;
            writer.write_u8(DTYPE_F32)?;
            writer.write_u32::<LittleEndian>(tensor.rank() as u32)?;
            for &dim in tensor.dims() {
                writer.write_u64::<LittleEndian>(dim as u64)?;
            }
            for &value in tensor.data() {
                writer.write_all(&value.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a container from disk.
    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file))
    }

    /// Write the container to disk.
    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        let file = File::create(path)?;
        let mut writer = BufWriter::new(file);
        self.write_to(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    /// Serialize to an in-memory byte vector.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)
            .expect("writing to a Vec cannot fail");
        bytes
    }
}

fn read_exact_or(
    reader: &mut impl Read,
    buf: &mut [u8],
    context: &'static str,
) -> Result<(), FormatError> {
    reader.read_exact(buf).map_err(|e| truncated(e, context))
}

fn truncated(err: std::io::Error, context: &'static str) -> FormatError {
    if err.kind() == std::io::ErrorKind::UnexpectedEof {
        FormatError::Truncated { context }
    } else {
        FormatError::Io(err)
    }
}
