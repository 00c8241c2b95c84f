//! Binary checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "BFB1"
//!      4     4  version (u32, currently 1)
//!      8     4  kind (u32): 0 state, 1 observation stream
//!     12    12  nx, ny, nz (u32 each)
//!     24     8  L (f64)
//!     32     8  dealias fraction (f64)
//!     40     4  number of fields per frame (u32)
//!     44     4  parity per field (0 even, 1 odd), unused slots 0xFF
//!     48     8  time (f64); last frame time for streams
//!     56     8  FNV-1a hash of (nu, kappa, a, alpha)
//!     64     8  number of frames (u64); 1 for states
//!     72        payload
//! ```
//!
//! A state payload is `u₁, u₂, u₃, θ`, each as `nx·ny·nz` complex
//! coefficients in storage order (index `(i·ny + j)·nz + l`, `m` slowest,
//! FFT ordering per axis), real and imaginary parts interleaved.
//!
//! A stream payload starts with the interpolant (kind u32, 4 zero bytes,
//! h, c0, c1 as f64), followed per frame by its time (f64) and the two
//! observed fields.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{file_error, IoError};
use crate::assimilation::{InterpolantKind, InterpolantSpec, ObservationStream};
use crate::model::{PhysicalParams, State, THETA_PARITY, VELOCITY_PARITY};
use crate::spectral::{Complex64, Grid, Parity, SpectralField};

pub const MAGIC: [u8; 4] = *b"BFB1";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 72;
const SPEC_LEN: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    State,
    Observations,
}

impl CheckpointKind {
    fn code(self) -> u32 {
        match self {
            CheckpointKind::State => 0,
            CheckpointKind::Observations => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub kind: CheckpointKind,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub length: f64,
    pub dealias_fraction: f64,
    pub parities: Vec<Parity>,
    pub time: f64,
    pub params_hash: u64,
    pub n_frames: u64,
}

impl CheckpointHeader {
    fn for_grid(grid: &Grid, kind: CheckpointKind, parities: Vec<Parity>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            kind,
            nx: grid.nx(),
            ny: grid.ny(),
            nz: grid.nz(),
            length: grid.length(),
            dealias_fraction: grid.dealias_fraction(),
            parities,
            time: 0.0,
            params_hash: 0,
            n_frames: 1,
        }
    }

    fn field_bytes(&self) -> u64 {
        (self.nx * self.ny * self.nz) as u64 * 16
    }

    /// Expected payload size in bytes.
    pub fn payload_len(&self) -> u64 {
        let fields = self.parities.len() as u64 * self.field_bytes();
        match self.kind {
            CheckpointKind::State => fields,
            CheckpointKind::Observations => SPEC_LEN + self.n_frames * (8 + fields),
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid>, IoError> {
        Ok(Grid::new(
            self.nx,
            self.ny,
            self.nz,
            self.length,
            self.dealias_fraction,
        )?)
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..12].copy_from_slice(&self.kind.code().to_le_bytes());
        b[12..16].copy_from_slice(&(self.nx as u32).to_le_bytes());
        b[16..20].copy_from_slice(&(self.ny as u32).to_le_bytes());
        b[20..24].copy_from_slice(&(self.nz as u32).to_le_bytes());
        b[24..32].copy_from_slice(&self.length.to_le_bytes());
        b[32..40].copy_from_slice(&self.dealias_fraction.to_le_bytes());
        b[40..44].copy_from_slice(&(self.parities.len() as u32).to_le_bytes());
        for k in 0..4 {
            b[44 + k] = self.parities.get(k).map_or(0xFF, |p| p.to_byte());
        }
        b[48..56].copy_from_slice(&self.time.to_le_bytes());
        b[56..64].copy_from_slice(&self.params_hash.to_le_bytes());
        b[64..72].copy_from_slice(&self.n_frames.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN], path: &Path) -> Result<Self, IoError> {
        if b[0..4] != MAGIC {
            return Err(IoError::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().expect("8 bytes"));
        let mismatch = |field: &'static str, expected: &str, found: String| IoError::HeaderMismatch {
            path: path.to_path_buf(),
            field,
            expected: expected.to_string(),
            found,
        };
        let version = u32_at(4);
        if version != CHECKPOINT_VERSION {
            return Err(IoError::UnsupportedVersion {
                path: path.to_path_buf(),
                version,
            });
        }
        let kind = match u32_at(8) {
            0 => CheckpointKind::State,
            1 => CheckpointKind::Observations,
            k => return Err(mismatch("kind", "0 or 1", k.to_string())),
        };
        let n_fields = u32_at(40) as usize;
        if n_fields > 4 {
            return Err(mismatch("field count", "at most 4", n_fields.to_string()));
        }
        let mut parities = Vec::with_capacity(n_fields);
        for k in 0..n_fields {
            let p = Parity::from_byte(b[44 + k])
                .ok_or_else(|| mismatch("parity", "0 or 1", b[44 + k].to_string()))?;
            parities.push(p);
        }
        Ok(Self {
            version,
            kind,
            nx: u32_at(12) as usize,
            ny: u32_at(16) as usize,
            nz: u32_at(20) as usize,
            length: f64_at(24),
            dealias_fraction: f64_at(32),
            parities,
            time: f64_at(48),
            params_hash: u64_at(56),
            n_frames: u64_at(64),
        })
    }
}

fn put_field(out: &mut Vec<u8>, f: &SpectralField) {
    for c in f.coeffs() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
}

fn take_field(
    bytes: &[u8],
    grid: &Arc<Grid>,
    parity: Parity,
) -> Result<SpectralField, IoError> {
    let coeffs: Vec<Complex64> = bytes
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(SpectralField::from_coeffs(grid, parity, coeffs)?)
}

fn write_file(path: &Path, header: &CheckpointHeader, payload: &[u8]) -> Result<(), IoError> {
    debug_assert_eq!(payload.len() as u64, header.payload_len());
    let file = File::create(path).map_err(file_error(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(&header.encode()).map_err(file_error(path))?;
    w.write_all(payload).map_err(file_error(path))?;
    w.flush().map_err(file_error(path))
}

fn open_header(path: &Path) -> Result<(File, CheckpointHeader), IoError> {
    let mut file = File::open(path).map_err(file_error(path))?;
    let size = file.metadata().map_err(file_error(path))?.len();
    if size < HEADER_LEN as u64 {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN as u64,
            found: size,
        });
    }
    let mut buf = [0u8; HEADER_LEN];
    file.read_exact(&mut buf).map_err(file_error(path))?;
    let header = CheckpointHeader::decode(&buf, path)?;
    let found = size - HEADER_LEN as u64;
    let expected = header.payload_len();
    if found < expected {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(IoError::HeaderMismatch {
            path: path.to_path_buf(),
            field: "payload size",
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok((file, header))
}

fn read_payload(mut file: File, header: &CheckpointHeader, path: &Path) -> Result<Vec<u8>, IoError> {
    let mut payload = vec![0u8; header.payload_len() as usize];
    file.read_exact(&mut payload).map_err(file_error(path))?;
    Ok(payload)
}

fn expect_kind(header: &CheckpointHeader, kind: CheckpointKind, path: &Path) -> Result<(), IoError> {
    if header.kind != kind {
        return Err(IoError::HeaderMismatch {
            path: path.to_path_buf(),
            field: "kind",
            expected: format!("{kind:?}"),
            found: format!("{:?}", header.kind),
        });
    }
    Ok(())
}

fn state_parities() -> Vec<Parity> {
    let mut p = VELOCITY_PARITY.to_vec();
    p.push(THETA_PARITY);
    p
}

pub fn write_checkpoint(state: &State, params: &PhysicalParams, path: &Path) -> Result<(), IoError> {
    let mut header =
        CheckpointHeader::for_grid(state.grid(), CheckpointKind::State, state_parities());
    header.time = state.time;
    header.params_hash = params.hash();
    let mut payload = Vec::with_capacity(header.payload_len() as usize);
    for f in state.fields() {
        put_field(&mut payload, f);
    }
    write_file(path, &header, &payload)
}

/// Reads only the header, validating magic, version and payload size.
pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader, IoError> {
    open_header(path).map(|(_, h)| h)
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, State), IoError> {
    let (file, header) = open_header(path)?;
    expect_kind(&header, CheckpointKind::State, path)?;
    if header.parities != state_parities() {
        return Err(IoError::HeaderMismatch {
            path: path.to_path_buf(),
            field: "parities",
            expected: format!("{:?}", state_parities()),
            found: format!("{:?}", header.parities),
        });
    }
    let grid = header.grid()?;
    let payload = read_payload(file, &header, path)?;
    let n = header.field_bytes() as usize;
    let f = |k: usize| take_field(&payload[k * n..(k + 1) * n], &grid, header.parities[k]);
    let state = State::new([f(0)?, f(1)?, f(2)?], f(3)?, header.time)?;
    Ok((header, state))
}

/// Reads a state after checking that its header matches `grid` and
/// `params`; nothing past the header is read on a mismatch.
pub fn read_state_matching(
    path: &Path,
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<State, IoError> {
    let header = read_checkpoint_header(path)?;
    let mismatch = |field, expected: String, found: String| {
        Err(IoError::HeaderMismatch {
            path: path.to_path_buf(),
            field,
            expected,
            found,
        })
    };
    let want = (grid.nx(), grid.ny(), grid.nz());
    let got = (header.nx, header.ny, header.nz);
    if want != got {
        return mismatch("dims", format!("{want:?}"), format!("{got:?}"));
    }
    if header.length.to_bits() != grid.length().to_bits() {
        return mismatch("L", grid.length().to_string(), header.length.to_string());
    }
    if header.dealias_fraction.to_bits() != grid.dealias_fraction().to_bits() {
        return mismatch(
            "dealias fraction",
            grid.dealias_fraction().to_string(),
            header.dealias_fraction.to_string(),
        );
    }
    if header.params_hash != params.hash() {
        return mismatch(
            "params hash",
            format!("{:#018x}", params.hash()),
            format!("{:#018x}", header.params_hash),
        );
    }
    read_checkpoint(path).map(|(_, s)| s)
}

pub fn write_observations(
    stream: &ObservationStream,
    params: &PhysicalParams,
    grid: &Grid,
    path: &Path,
) -> Result<(), IoError> {
    let mut header = CheckpointHeader::for_grid(
        grid,
        CheckpointKind::Observations,
        vec![Parity::EvenInZ, Parity::EvenInZ],
    );
    header.time = stream.times().last().copied().unwrap_or(0.0);
    header.params_hash = params.hash();
    header.n_frames = stream.len() as u64;
    let mut payload = Vec::with_capacity(header.payload_len() as usize);
    let spec = stream.spec();
    let kind: u32 = match spec.kind {
        InterpolantKind::ModalLowPass => 0,
        InterpolantKind::VolumeAverage => 1,
    };
    payload.extend_from_slice(&kind.to_le_bytes());
    payload.extend_from_slice(&[0u8; 4]);
    for v in [spec.h, spec.c0, spec.c1] {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    for (t, frame) in stream.times().iter().zip(stream.frames()) {
        payload.extend_from_slice(&t.to_le_bytes());
        for f in frame {
            put_field(&mut payload, f);
        }
    }
    write_file(path, &header, &payload)
}

pub fn read_observations(path: &Path) -> Result<(CheckpointHeader, ObservationStream), IoError> {
    let (file, header) = open_header(path)?;
    expect_kind(&header, CheckpointKind::Observations, path)?;
    let grid = header.grid()?;
    let payload = read_payload(file, &header, path)?;
    let f64_at = |o: usize| f64::from_le_bytes(payload[o..o + 8].try_into().expect("8 bytes"));
    let kind = match u32::from_le_bytes(payload[0..4].try_into().expect("4 bytes")) {
        0 => InterpolantKind::ModalLowPass,
        1 => InterpolantKind::VolumeAverage,
        k => {
            return Err(IoError::HeaderMismatch {
                path: path.to_path_buf(),
                field: "interpolant kind",
                expected: "0 or 1".into(),
                found: k.to_string(),
            })
        }
    };
    let spec = InterpolantSpec {
        kind,
        h: f64_at(8),
        c0: f64_at(16),
        c1: f64_at(24),
    };
    let mut stream = ObservationStream::new(spec);
    let n = header.field_bytes() as usize;
    let mut o = SPEC_LEN as usize;
    let table_error = |e: crate::assimilation::AssimilationError| IoError::Table {
        path: path.to_path_buf(),
        record: 0,
        message: e.to_string(),
    };
    for _ in 0..header.n_frames {
        let t = f64_at(o);
        o += 8;
        let a = take_field(&payload[o..o + n], &grid, Parity::EvenInZ)?;
        let b = take_field(&payload[o + n..o + 2 * n], &grid, Parity::EvenInZ)?;
        o += 2 * n;
        stream.push(t, [a, b]).map_err(table_error)?;
    }
    Ok((header, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assimilation::observe;
    use crate::random::{admissible_theta, random_velocity, stream_rng};

    fn random_state(g: &Arc<Grid>) -> State {
        let mut s = State::zeros(g);
        s.u = random_velocity(g, 3, 1.3, &mut stream_rng(1, 1));
        s.theta = admissible_theta(g, 0.7, 3, &mut stream_rng(1, 2)).unwrap();
        s.time = 1.0 / 3.0;
        s
    }

    #[test]
    fn state_round_trip_is_bitwise() {
        let g = Grid::with_default_dealias(8, 8, 12, 1.7).unwrap();
        let p = PhysicalParams::new(0.9, 1.1, 2.0, 1.5, &g).unwrap();
        let s = random_state(&g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bfb");
        write_checkpoint(&s, &p, &path).unwrap();
        let (h, back) = read_checkpoint(&path).unwrap();
        assert_eq!(h.params_hash, p.hash());
        assert_eq!(back.time.to_bits(), s.time.to_bits());
        for (a, b) in s.fields().iter().zip(back.fields()) {
            assert_eq!(a.coeffs().len(), b.coeffs().len());
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        assert!(read_state_matching(&path, &g, &p).is_ok());
    }

    #[test]
    fn bad_files_are_rejected() {
        let g = Grid::with_default_dealias(8, 8, 8, 1.0).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bfb");
        write_checkpoint(&random_state(&g), &p, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        std::fs::write(&path, &wrong).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(IoError::BadMagic { .. })));

        let mut wrong = bytes.clone();
        wrong[4] = 2;
        std::fs::write(&path, &wrong).unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(IoError::UnsupportedVersion { version: 2, .. })
        ));

        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(IoError::Truncated { .. })));

        std::fs::write(&path, &bytes).unwrap();
        let other = Grid::with_default_dealias(8, 8, 16, 1.0).unwrap();
        assert!(matches!(
            read_state_matching(&path, &other, &p),
            Err(IoError::HeaderMismatch { field: "dims", .. })
        ));
        let q = PhysicalParams::new(1.0, 1.0, 1.0, 3.0, &g).unwrap();
        assert!(matches!(
            read_state_matching(&path, &g, &q),
            Err(IoError::HeaderMismatch { field: "params hash", .. })
        ));
    }

    #[test]
    fn observation_stream_round_trip() {
        let g = Grid::with_default_dealias(8, 8, 8, 1.0).unwrap();
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 2.0, &g).unwrap();
        let spec = InterpolantSpec::volume_average(0.5).unwrap();
        let mut stream = ObservationStream::new(spec);
        let s = random_state(&g);
        stream.push(0.0, observe(&s, &spec).unwrap()).unwrap();
        stream.push(0.5, observe(&s, &spec).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.bfb");
        write_observations(&stream, &p, &g, &path).unwrap();
        let (h, back) = read_observations(&path).unwrap();
        assert_eq!(h.n_frames, 2);
        assert_eq!(back.spec(), stream.spec());
        assert_eq!(back.times(), stream.times());
        assert_eq!(back.frames(), stream.frames());
        assert!(matches!(
            read_checkpoint(&path),
            Err(IoError::HeaderMismatch { field: "kind", .. })
        ));
    }
}
