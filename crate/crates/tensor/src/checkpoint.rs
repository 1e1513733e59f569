//! Binary checkpoint format.
//!
//! ```text
//! NL2CODE-CKPT v1\n
//! <count>\n
//! <name> <dim>,<dim>,...\n      (count lines, manifest order)
//! <little-endian f64 payload, tensors concatenated in manifest order>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &str = "NL2CODE-CKPT v1";

pub fn write_to(store: &ParamStore, mut w: impl Write) -> Result<()> {
    let mut header = format!("{MAGIC}\n{}\n", store.len());
    for (name, t) in store.iter() {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(TensorError::Checkpoint(format!("invalid tensor name {name:?}")));
        }
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("{name} {}\n", dims.join(",")));
    }
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(store.numel() * 8);
    for (_, t) in store.iter() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn to_bytes(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    write_to(store, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_from(r: impl Read) -> Result<ParamStore> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    let next_line = |r: &mut BufReader<_>, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(TensorError::Checkpoint("unexpected end of header".into()));
        }
        Ok(())
    };
    next_line(&mut r, &mut line)?;
    if line.trim_end_matches('\n') != MAGIC {
        return Err(TensorError::Checkpoint(format!("bad magic line {:?}", line.trim_end())));
    }
    next_line(&mut r, &mut line)?;
    let count: usize = line
        .trim_end()
        .parse()
        .map_err(|_| TensorError::Checkpoint(format!("bad tensor count {:?}", line.trim_end())))?;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        next_line(&mut r, &mut line)?;
        let entry = line.trim_end_matches('\n');
        let (name, dims) = entry
            .split_once(' ')
            .ok_or_else(|| TensorError::Checkpoint(format!("bad manifest entry {entry:?}")))?;
        let shape = dims
            .split(',')
            .map(str::parse::<usize>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| TensorError::Checkpoint(format!("bad shape in {entry:?}")))?;
        manifest.push((name.to_string(), shape));
    }
    let mut store = ParamStore::new();
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)
            .map_err(|_| TensorError::Checkpoint(format!("truncated payload for {name}")))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.add(name, Tensor::new(shape, data)?)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(TensorError::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_to(store, std::io::BufWriter::new(f))
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
    read_from(std::fs::File::open(path)?)
}
