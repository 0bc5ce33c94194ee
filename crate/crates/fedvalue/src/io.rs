//! Versioned binary persistence for model params and federated traces, plus
//! a CSV checkpoint for params. Valuation can then run without retraining.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fedsim::{ClientUpdate, FLTrace, RoundRecord};
use crate::model::{Arch, ModelParams};

const PARAMS_MAGIC: &[u8; 4] = b"FVPM";
const TRACE_MAGIC: &[u8; 4] = b"FVTR";
const FORMAT_VERSION: u32 = 1;

fn write_arch<W: Write>(w: &mut W, arch: &Arch) -> Result<()> {
    w.write_u32::<LittleEndian>(arch.input as u32)?;
    w.write_u32::<LittleEndian>(arch.hidden as u32)?;
    w.write_u32::<LittleEndian>(arch.output as u32)?;
    Ok(())
}

fn read_arch<R: Read>(r: &mut R) -> Result<Arch> {
    Ok(Arch {
        input: r.read_u32::<LittleEndian>()? as usize,
        hidden: r.read_u32::<LittleEndian>()? as usize,
        output: r.read_u32::<LittleEndian>()? as usize,
    })
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    w.write_u64::<LittleEndian>(values.len() as u64)?;
    for v in values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, cap: usize) -> Result<Vec<f64>> {
    let len = r.read_u64::<LittleEndian>()? as usize;
    if len > cap {
        return Err(Error::Persist(format!(
            "vector length {len} exceeds the format cap {cap}"
        )));
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(out)
}

// Caps reject absurd lengths from corrupt files before allocating.
const MAX_VEC: usize = 1 << 28;

pub fn write_params<W: Write>(mut w: W, params: &ModelParams) -> Result<()> {
    w.write_all(PARAMS_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    write_arch(&mut w, &params.arch)?;
    write_f64s(&mut w, &params.values)?;
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::Persist("not a params checkpoint".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Persist(format!(
            "unsupported params version {version}"
        )));
    }
    let arch = read_arch(&mut r)?;
    let values = read_f64s(&mut r, MAX_VEC)?;
    let params = ModelParams { arch, values };
    params.validate()?;
    Ok(params)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    write_params(BufWriter::new(File::create(path)?), params)
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    read_params(BufReader::new(File::open(path)?))
}

/// CSV checkpoint: one `position,value` row per parameter, full precision.
pub fn write_params_csv<W: Write>(writer: W, params: &ModelParams) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["position", "value"])?;
    for (i, v) in params.values.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:?}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(mut w: W, trace: &FLTrace) -> Result<()> {
    w.write_all(TRACE_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    write_arch(&mut w, &trace.arch)?;
    w.write_u32::<LittleEndian>(trace.n_clients as u32)?;
    w.write_u32::<LittleEndian>(trace.best_round as u32)?;
    write_f64s(&mut w, &trace.initial.values)?;
    w.write_u32::<LittleEndian>(trace.rounds.len() as u32)?;
    for round in &trace.rounds {
        for update in &round.updates {
            write_f64s(&mut w, &update.delta)?;
        }
        write_f64s(&mut w, &round.val_losses)?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<FLTrace> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(Error::Persist("not a trace file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Persist(format!("unsupported trace version {version}")));
    }
    let arch = read_arch(&mut r)?;
    let n_clients = r.read_u32::<LittleEndian>()? as usize;
    let best_round = r.read_u32::<LittleEndian>()? as usize;
    let initial = ModelParams {
        arch,
        values: read_f64s(&mut r, MAX_VEC)?,
    };
    initial.validate()?;
    let n_rounds = r.read_u32::<LittleEndian>()? as usize;
    if n_clients == 0 || n_rounds == 0 || best_round >= n_rounds {
        return Err(Error::Persist(format!(
            "inconsistent trace header: {n_clients} clients, {n_rounds} rounds, best {best_round}"
        )));
    }
    let mut rounds = Vec::with_capacity(n_rounds);
    for round in 0..n_rounds {
        let mut updates = Vec::with_capacity(n_clients);
        for client_id in 0..n_clients {
            let delta = read_f64s(&mut r, MAX_VEC)?;
            if delta.len() != initial.values.len() {
                return Err(Error::Persist(format!(
                    "round {round}, client {client_id}: delta length {} != {}",
                    delta.len(),
                    initial.values.len()
                )));
            }
            updates.push(ClientUpdate {
                round,
                client_id,
                delta,
            });
        }
        let val_losses = read_f64s(&mut r, MAX_VEC)?;
        if val_losses.len() != n_clients {
            return Err(Error::Persist(format!(
                "round {round}: {} validation losses for {n_clients} clients",
                val_losses.len()
            )));
        }
        let mean_val_loss = val_losses.iter().sum::<f64>() / n_clients as f64;
        rounds.push(RoundRecord {
            updates,
            val_losses,
            mean_val_loss,
        });
    }
    Ok(FLTrace {
        arch,
        n_clients,
        initial,
        rounds,
        best_round,
    })
}

pub fn save_trace(path: &Path, trace: &FLTrace) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), trace)
}

pub fn load_trace(path: &Path) -> Result<FLTrace> {
    read_trace(BufReader::new(File::open(path)?))
}
