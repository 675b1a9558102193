//! Binary artifact formats. All integers and floats are little-endian;
//! matrices are stored column-major. Each file opens with an ASCII magic
//! tag so a wrong file is rejected before any allocation.

use crate::error::{Error, Result};
use crate::operators::TimeFactor;
use crate::pod::RomBasis;
use crate::rom::RomOperators;
use crate::solver::SnapshotSet;
use crate::sparse::Csr;
use nalgebra::DMatrix;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC_SPARSE: &[u8] = b"ECROM1";
const MAGIC_SNAP: &[u8] = b"ECSNAP1";
const MAGIC_POD: &[u8] = b"ECPOD1";
const MAGIC_ROMOP: &[u8] = b"ECROMOP1";

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::FileFormat { path: path.display().to_string(), reason: reason.into() }
}

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    fn matrix(&mut self, m: &DMatrix<f64>) -> Result<()> {
        self.f64s(m.as_slice())
    }
}

struct Reader<'p, R: Read> {
    inp: R,
    path: &'p Path,
}

impl<'p, R: Read> Reader<'p, R> {
    fn magic(&mut self, expect: &[u8]) -> Result<()> {
        let mut buf = vec![0u8; expect.len()];
        self.inp.read_exact(&mut buf).map_err(|_| bad(self.path, "truncated magic"))?;
        if buf != expect {
            return Err(bad(
                self.path,
                format!("bad magic, expected {}", String::from_utf8_lossy(expect)),
            ));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inp.read_exact(&mut b).map_err(|_| bad(self.path, "truncated u32"))?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b).map_err(|_| bad(self.path, "truncated u64"))?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inp.read_exact(&mut b).map_err(|_| bad(self.path, "truncated f64"))?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        let mut buf = vec![0u8; 8 * n];
        self.inp.read_exact(&mut buf).map_err(|_| bad(self.path, "truncated f64 block"))?;
        for (i, chunk) in buf.chunks_exact(8).enumerate() {
            out[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(out)
    }

    fn matrix(&mut self, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
        let data = self.f64s(nrows * ncols)?;
        Ok(DMatrix::from_vec(nrows, ncols, data))
    }

    fn done(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inp.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(bad(self.path, "trailing bytes")),
            Err(e) => Err(e.into()),
        }
    }
}

pub fn write_sparse(path: &Path, a: &Csr) -> Result<()> {
    let mut w = Writer { out: BufWriter::new(std::fs::File::create(path)?) };
    w.out.write_all(MAGIC_SPARSE)?;
    w.u32(a.nrows() as u32)?;
    w.u32(a.ncols() as u32)?;
    w.u64(a.nnz() as u64)?;
    for &p in a.row_ptr() {
        w.u64(p as u64)?;
    }
    for &c in a.col_idx() {
        w.u64(c as u64)?;
    }
    w.f64s(a.vals())?;
    Ok(())
}

pub fn read_sparse(path: &Path) -> Result<Csr> {
    let mut r = Reader { inp: BufReader::new(std::fs::File::open(path)?), path };
    r.magic(MAGIC_SPARSE)?;
    let nrows = r.u32()? as usize;
    let ncols = r.u32()? as usize;
    let nnz = r.u64()? as usize;
    let mut row_ptr = Vec::with_capacity(nrows + 1);
    for _ in 0..=nrows {
        row_ptr.push(r.u64()? as usize);
    }
    let mut col_idx = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        col_idx.push(r.u64()? as usize);
    }
    let vals = r.f64s(nnz)?;
    r.done()?;
    let ok = row_ptr[0] == 0
        && row_ptr[nrows] == nnz
        && row_ptr.windows(2).all(|w| w[0] <= w[1])
        && (0..nrows).all(|i| {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            cols.windows(2).all(|w| w[0] < w[1]) && cols.iter().all(|&c| c < ncols)
        });
    if !ok {
        return Err(bad(path, "inconsistent sparse structure"));
    }
    Ok(Csr::from_raw(nrows, ncols, row_ptr, col_idx, vals))
}

pub fn write_snapshots(path: &Path, s: &SnapshotSet) -> Result<()> {
    let n_v = s.x.nrows();
    let n_p = s.p.nrows();
    let k = s.n_snapshots();
    let mut w = Writer { out: BufWriter::new(std::fs::File::create(path)?) };
    w.out.write_all(MAGIC_SNAP)?;
    w.u32(n_v as u32)?;
    w.u32(n_p as u32)?;
    w.u32(k as u32)?;
    w.f64(s.nu)?;
    w.f64s(&s.times)?;
    w.f64s(&s.v_bc)?;
    w.matrix(&s.x)?;
    w.matrix(&s.p)?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let mut r = Reader { inp: BufReader::new(std::fs::File::open(path)?), path };
    r.magic(MAGIC_SNAP)?;
    let n_v = r.u32()? as usize;
    let n_p = r.u32()? as usize;
    let k = r.u32()? as usize;
    let nu = r.f64()?;
    let times = r.f64s(k)?;
    let v_bc = r.f64s(n_v)?;
    let x = r.matrix(n_v, k)?;
    let p = r.matrix(n_p, k)?;
    r.done()?;
    Ok(SnapshotSet { times, x, p, v_bc, nu })
}

pub fn write_basis(path: &Path, b: &RomBasis) -> Result<()> {
    let n_v = b.phi.nrows();
    let n_p = b.pi.nrows();
    let mut w = Writer { out: BufWriter::new(std::fs::File::create(path)?) };
    w.out.write_all(MAGIC_POD)?;
    w.u32(n_v as u32)?;
    w.u32(n_p as u32)?;
    w.u32(b.m() as u32)?;
    w.u32(b.m_p() as u32)?;
    w.u32(b.n_constraint as u32)?;
    w.f64s(&b.sigma)?;
    w.matrix(&b.phi)?;
    w.matrix(&b.pi)?;
    let e = b.phi.columns(0, b.n_constraint).into_owned();
    w.matrix(&e)?;
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<RomBasis> {
    let mut r = Reader { inp: BufReader::new(std::fs::File::open(path)?), path };
    r.magic(MAGIC_POD)?;
    let n_v = r.u32()? as usize;
    let n_p = r.u32()? as usize;
    let m = r.u32()? as usize;
    let m_p = r.u32()? as usize;
    let n_c = r.u32()? as usize;
    if n_c > m {
        return Err(bad(path, "constraint count exceeds mode count"));
    }
    let sigma = r.f64s(m)?;
    let phi = r.matrix(n_v, m)?;
    let pi = r.matrix(n_p, m_p)?;
    let e = r.matrix(n_v, n_c)?;
    r.done()?;
    if e != phi.columns(0, n_c).into_owned() {
        return Err(bad(path, "constraint modes disagree with leading basis columns"));
    }
    Ok(RomBasis { phi, pi, sigma, n_constraint: n_c })
}

pub fn write_rom_ops(path: &Path, r: &RomOperators) -> Result<()> {
    let mut w = Writer { out: BufWriter::new(std::fs::File::create(path)?) };
    w.out.write_all(MAGIC_ROMOP)?;
    w.u32(r.m as u32)?;
    w.u32(r.m_p as u32)?;
    w.f64(r.nu)?;
    w.f64s(&r.f0)?;
    w.f64s(&r.f_act)?;
    w.matrix(&r.f1)?;
    w.matrix(&r.d_r)?;
    for s in &r.f2 {
        w.matrix(s)?;
    }
    w.matrix(&r.l_r)?;
    w.f64s(&r.p0)?;
    w.matrix(&r.p1)?;
    for s in &r.p2 {
        w.matrix(s)?;
    }
    w.f64s(&r.p_act)?;
    Ok(())
}

pub fn read_rom_ops(path: &Path) -> Result<RomOperators> {
    let mut r = Reader { inp: BufReader::new(std::fs::File::open(path)?), path };
    r.magic(MAGIC_ROMOP)?;
    let m = r.u32()? as usize;
    let m_p = r.u32()? as usize;
    let nu = r.f64()?;
    let f0 = r.f64s(m)?;
    let f_act = r.f64s(m)?;
    let f1 = r.matrix(m, m)?;
    let d_r = r.matrix(m, m)?;
    let mut f2 = Vec::with_capacity(m);
    for _ in 0..m {
        f2.push(r.matrix(m, m)?);
    }
    let l_r = r.matrix(m_p, m_p)?;
    let p0 = r.f64s(m_p)?;
    let p1 = r.matrix(m_p, m)?;
    let mut p2 = Vec::with_capacity(m);
    for _ in 0..m {
        p2.push(r.matrix(m_p, m)?);
    }
    let p_act = r.f64s(m_p)?;
    r.done()?;
    // the only time-dependent force in scope is the pulsed actuator
    let has_force = f_act.iter().chain(&p_act).any(|&x| x != 0.0);
    let force_time = has_force.then_some(TimeFactor::OnePlusSinPi);
    Ok(RomOperators { m, m_p, nu, f0, f_act, force_time, f1, d_r, f2, l_r, p0, p_act, p1, p2 })
}
