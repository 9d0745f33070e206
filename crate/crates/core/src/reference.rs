//! Reference solutions: closed-form when the problem has one, otherwise a
//! tight-tolerance dense solve, optionally cached on disk.
//!
//! Cache layout (little endian): magic `DLRAREF1`, rows and cols as `u64`,
//! one field byte (0 real, 1 complex), final time and tolerance as `f64`,
//! then the entries in column-major order (complex as `re, im` pairs).

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::problem::MatrixOdeProblem;
use crate::scalar::{Dense, Scalar};
use crate::substep::{solve_dense, SubstepSolver};

const MAGIC: &[u8; 8] = b"DLRAREF1";

/// Header fields identifying a cached reference matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceKey {
    pub rows: usize,
    pub cols: usize,
    pub complex: bool,
    pub time: f64,
    pub tol: f64,
}

pub fn write_reference<T: Scalar>(path: &Path, key: &ReferenceKey, a: &Dense<T>) -> io::Result<()> {
    let mut buf = Vec::with_capacity(41 + a.len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(key.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(key.cols as u64).to_le_bytes());
    buf.push(u8::from(key.complex));
    buf.extend_from_slice(&key.time.to_le_bytes());
    buf.extend_from_slice(&key.tol.to_le_bytes());
    for x in a.iter() {
        buf.extend_from_slice(&x.re().to_le_bytes());
        if T::IS_COMPLEX {
            buf.extend_from_slice(&x.im().to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    // Write to a sibling file first so readers never see a partial cache.
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(tmp, path)
}

/// Cached matrix when the file exists and its header matches `key`.
pub fn read_reference<T: Scalar>(path: &Path, key: &ReferenceKey) -> io::Result<Option<Dense<T>>> {
    let mut bytes = Vec::new();
    match fs::File::open(path) {
        Ok(mut f) => f.read_to_end(&mut bytes)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let bad = |what: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {what}", path.display()));
    if bytes.len() < 41 || &bytes[..8] != MAGIC {
        return Err(bad("not a reference cache file"));
    }
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let stored = ReferenceKey {
        rows: u64_at(8) as usize,
        cols: u64_at(16) as usize,
        complex: bytes[24] == 1,
        time: f64_at(25),
        tol: f64_at(33),
    };
    if stored != *key || key.complex != T::IS_COMPLEX {
        return Ok(None);
    }
    let width = if T::IS_COMPLEX { 16 } else { 8 };
    if bytes.len() != 41 + stored.rows * stored.cols * width {
        return Err(bad("truncated payload"));
    }
    let data = &bytes[41..];
    Ok(Some(Dense::from_fn(stored.rows, stored.cols, |i, j| {
        let at = (j * stored.rows + i) * width;
        let re = f64::from_le_bytes(data[at..at + 8].try_into().unwrap());
        let im = if T::IS_COMPLEX {
            f64::from_le_bytes(data[at + 8..at + 16].try_into().unwrap())
        } else {
            0.0
        };
        T::from_parts(re, im)
    })))
}

/// `A(t_end)` from the closed form if available, otherwise from a dense
/// adaptive solve with `rel = abs = tol` from the initial state.
///
/// With `cache`, a matching file is reused and a fresh dense solve is stored.
pub fn reference_solution<T: Scalar>(
    problem: &MatrixOdeProblem<T>,
    t_end: f64,
    tol: f64,
    cache: Option<&Path>,
) -> Result<Dense<T>> {
    if let Some(a) = problem.exact_solution(t_end) {
        return Ok(a);
    }
    let (rows, cols) = problem.dims();
    let key = ReferenceKey {
        rows,
        cols,
        complex: T::IS_COMPLEX,
        time: t_end,
        tol,
    };
    let io_err = |e: io::Error| Error::invalid(format!("reference cache: {e}"));
    if let Some(path) = cache {
        if let Some(a) = read_reference(path, &key).map_err(io_err)? {
            return Ok(a);
        }
    }
    let solver = SubstepSolver::Rk45 {
        rel_tol: tol,
        abs_tol: tol,
    };
    let a0 = problem.initial_state().assemble();
    let a = solve_dense(problem, &a0, problem.t0(), t_end, &solver)?.value;
    if let Some(path) = cache {
        write_reference(path, &key, &a).map_err(io_err)?;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::scalar::random_dense;

    fn key(complex: bool) -> ReferenceKey {
        ReferenceKey { rows: 5, cols: 3, complex, time: 0.5, tol: 1e-10 }
    }

    #[test]
    fn roundtrip_real_and_complex() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Dense<f64> = random_dense(5, 3, &mut rng);
        let p = dir.path().join("r.bin");
        write_reference(&p, &key(false), &a).unwrap();
        assert_eq!(read_reference::<f64>(&p, &key(false)).unwrap().unwrap(), a);

        let c: Dense<Complex64> = random_dense(5, 3, &mut rng);
        let q = dir.path().join("nested/c.bin");
        write_reference(&q, &key(true), &c).unwrap();
        assert_eq!(read_reference::<Complex64>(&q, &key(true)).unwrap().unwrap(), c);
    }

    #[test]
    fn mismatched_header_or_missing_file_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        assert!(read_reference::<f64>(&p, &key(false)).unwrap().is_none());
        write_reference(&p, &key(false), &Dense::<f64>::zeros(5, 3)).unwrap();
        let other = ReferenceKey { time: 1.0, ..key(false) };
        assert!(read_reference::<f64>(&p, &other).unwrap().is_none());
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        fs::write(&p, b"not a cache").unwrap();
        assert!(read_reference::<f64>(&p, &key(false)).is_err());
    }
}
