//! Binary checkpoints.
//!
//! Layout (little endian): an 8-byte magic, a length-prefixed JSON header,
//! a `u32` tensor count, then per tensor a length-prefixed UTF-8 name, `u32`
//! rows, `u32` cols and `rows * cols` `f32` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::micro::{MicroModel, MicroModelConfig};
use super::tensor::Tensor;
use crate::prompting::continuous::ContinuousPrompt;
use crate::prompting::tokenizer::Tokenizer;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PRANKCK1";

/// A header plus named `f32` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive<H> {
    pub header: H,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl<H: Serialize + DeserializeOwned> Archive<H> {
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        let header = serde_json::to_vec(&self.header).map_err(std::io::Error::other)?;
        write_bytes(w, &header)?;
        w.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            write_bytes(w, name.as_bytes())?;
            w.write_u32::<LittleEndian>(t.rows() as u32)?;
            w.write_u32::<LittleEndian>(t.cols() as u32)?;
            for &x in t.data() {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |m: &str| Error::invalid(format!("corrupt checkpoint: {m}"));
        let io = |e: std::io::Error| Error::invalid(format!("corrupt checkpoint: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let header: H = serde_json::from_slice(&read_bytes(r).map_err(io)?)?;
        let n = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut tensors = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name = String::from_utf8(read_bytes(r).map_err(io)?).map_err(|_| bad("name"))?;
            let rows = r.read_u32::<LittleEndian>().map_err(io)? as usize;
            let cols = r.read_u32::<LittleEndian>().map_err(io)? as usize;
            let len = rows.checked_mul(cols).ok_or_else(|| bad("shape"))?;
            let mut data = vec![0f32; len];
            r.read_f32_into::<LittleEndian>(&mut data).map_err(io)?;
            tensors.push((name, Tensor::from_vec(rows, cols, data)));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(f)).map_err(|e| e.context(path.display().to_string()))
    }
}

fn write_bytes(w: &mut impl Write, b: &[u8]) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(b.len() as u32)?;
    w.write_all(b)
}

fn read_bytes(r: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(std::io::ErrorKind::UnexpectedEof.into());
    }
    Ok(buf)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelHeader {
    kind: String,
    config: MicroModelConfig,
    vocab: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PromptHeader {
    kind: String,
    init_texts: [String; 3],
}

/// Saves a model together with the vocabulary it was trained with.
pub fn save_model(path: impl AsRef<Path>, model: &MicroModel<f32>, tokenizer: &Tokenizer) -> Result<()> {
    if tokenizer.vocab_size() != model.config().vocab_size {
        return Err(Error::invalid("tokenizer and model disagree on vocabulary size"));
    }
    Archive {
        header: ModelHeader {
            kind: "model".into(),
            config: model.config().clone(),
            vocab: tokenizer.tokens().to_vec(),
        },
        tensors: model
            .named_tensors()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect(),
    }
    .save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MicroModel<f32>, Tokenizer)> {
    let path = path.as_ref();
    let a: Archive<ModelHeader> = Archive::load(path)?;
    if a.header.kind != "model" {
        return Err(Error::invalid(format!("{} is not a model checkpoint", path.display())));
    }
    let tokenizer = Tokenizer::from_tokens(a.header.vocab)?;
    let model = MicroModel::from_named_tensors(a.header.config, a.tensors)
        .map_err(|e| e.context(path.display().to_string()))?;
    Ok((model, tokenizer))
}

pub fn save_prompt(path: impl AsRef<Path>, prompt: &ContinuousPrompt<f32>) -> Result<()> {
    let names = ["s1", "s2", "s3"];
    Archive {
        header: PromptHeader {
            kind: "prompt".into(),
            init_texts: prompt.init_texts().clone(),
        },
        tensors: names
            .iter()
            .zip(prompt.segments())
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect(),
    }
    .save(path)
}

pub fn load_prompt(path: impl AsRef<Path>) -> Result<ContinuousPrompt<f32>> {
    let path = path.as_ref();
    let a: Archive<PromptHeader> = Archive::load(path)?;
    if a.header.kind != "prompt" || a.tensors.len() != 3 {
        return Err(Error::invalid(format!("{} is not a prompt checkpoint", path.display())));
    }
    let mut it = a.tensors.into_iter().map(|(_, t)| t);
    let segs = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
    ContinuousPrompt::new(segs, a.header.init_texts)
}
