use std::fmt::Write as _;
use std::path::Path;

use super::{Blocks, ForecastNet, ModelKind};
use crate::block::{DenseLayer, TriangularBlock};
use crate::math::{DenseMatrix, SeededRng};
use crate::pde::dataset::{join_values, parse_values};
use crate::{write_atomic, Error, Result};

const HEADER: &str = "#pdecast-model v1";

pub fn save_checkpoint(net: &ForecastNet, path: &Path) -> Result<()> {
    write_atomic(path, checkpoint_text(net).as_bytes())
}

pub(crate) fn checkpoint_text(net: &ForecastNet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "#kind={}", net.kind);
    let _ = writeln!(out, "#grid_size={}", net.grid_size);
    let _ = writeln!(out, "#latent_dim={}", net.latent_dim);
    let _ = writeln!(out, "#blocks={}", net.blocks.len());
    let _ = writeln!(out, "#delta={}", crate::pde::dataset::fmt_f64(net.delta));
    let _ = writeln!(out, "#seed={}", net.seed);
    let _ = writeln!(out, "#rng={}", SeededRng::ALGORITHM);

    let matrix = |out: &mut String, name: &str, w: &DenseMatrix| {
        let _ = writeln!(out, "[{name}]");
        for r in 0..w.rows() {
            let _ = writeln!(out, "{}", join_values(w.row(r)));
        }
    };
    let vector = |out: &mut String, name: &str, v: &[f64]| {
        let _ = writeln!(out, "[{name}]");
        let _ = writeln!(out, "{}", join_values(v));
    };

    matrix(&mut out, "encoder.weight", &net.encoder);
    vector(&mut out, "encoder.bias", &net.encoder_bias);
    match &net.blocks {
        Blocks::Implicit(blocks) => {
            for (k, b) in blocks.iter().enumerate() {
                vector(&mut out, &format!("block.{k}.diag"), &b.lambda().iter().map(|l| -l).collect::<Vec<_>>());
                let _ = writeln!(out, "[block.{k}.couplings]");
                for m in 1..b.dim() {
                    let _ = writeln!(out, "{}", join_values(b.coupling_row(m)));
                }
                vector(&mut out, &format!("block.{k}.bias"), b.bias());
            }
        }
        Blocks::Explicit(layers) => {
            for (k, l) in layers.iter().enumerate() {
                matrix(&mut out, &format!("block.{k}.weight"), &l.weight);
                vector(&mut out, &format!("block.{k}.bias"), &l.bias);
            }
        }
    }
    matrix(&mut out, "decoder.weight", &net.decoder);
    vector(&mut out, "decoder.bias", &net.decoder_bias);
    out
}

pub fn load_checkpoint(path: &Path) -> Result<ForecastNet> {
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    parse_checkpoint(&text, path)
}

struct Section<'a> {
    name: &'a str,
    line: usize,
    rows: Vec<(usize, &'a str)>,
}

pub(crate) fn parse_checkpoint(text: &str, path: &Path) -> Result<ForecastNet> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim_end() == HEADER => {}
        _ => return Err(parse_err(1, format!("missing '{HEADER}' header"))),
    }

    let mut kind = None;
    let mut grid = None;
    let mut latent = None;
    let mut nblocks = None;
    let mut delta = None;
    let mut seed = None;
    let mut sections: Vec<Section> = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if !sections.is_empty() {
                return Err(parse_err(no, "metadata after the first section".into()));
            }
            let (key, value) = meta
                .split_once('=')
                .ok_or_else(|| parse_err(no, format!("malformed metadata line '{line}'")))?;
            let bad = |e: String| parse_err(no, format!("bad value for {key}: {e}"));
            match key.trim() {
                "kind" => kind = Some(value.trim().parse::<ModelKind>().map_err(|e| bad(e.to_string()))?),
                "grid_size" => grid = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "latent_dim" => latent = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "blocks" => nblocks = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "delta" => delta = Some(value.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(value.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "rng" => {
                    if value.trim() != SeededRng::ALGORITHM {
                        return Err(bad(format!("unsupported generator '{}'", value.trim())));
                    }
                }
                other => return Err(parse_err(no, format!("unknown metadata key '{other}'"))),
            }
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(Section {
                name,
                line: no,
                rows: Vec::new(),
            });
        } else {
            match sections.last_mut() {
                Some(s) => s.rows.push((no, line)),
                None => return Err(parse_err(no, "values before the first section".into())),
            }
        }
    }
    let missing = |k: &str| parse_err(1, format!("missing metadata key '{k}'"));
    let kind = kind.ok_or_else(|| missing("kind"))?;
    let g = grid.ok_or_else(|| missing("grid_size"))?;
    let m = latent.ok_or_else(|| missing("latent_dim"))?;
    let nblocks = nblocks.ok_or_else(|| missing("blocks"))?;
    let delta = delta.ok_or_else(|| missing("delta"))?;
    let seed = seed.ok_or_else(|| missing("seed"))?;

    let mut expected = vec!["encoder.weight".to_string(), "encoder.bias".to_string()];
    for k in 0..nblocks {
        if kind.is_implicit() {
            expected.extend([format!("block.{k}.diag"), format!("block.{k}.couplings"), format!("block.{k}.bias")]);
        } else {
            expected.extend([format!("block.{k}.weight"), format!("block.{k}.bias")]);
        }
    }
    expected.extend(["decoder.weight".to_string(), "decoder.bias".to_string()]);
    if sections.len() != expected.len() {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            what: "sections",
            expected: expected.len(),
            found: sections.len(),
        });
    }
    for (s, want) in sections.iter().zip(&expected) {
        if s.name != want {
            return Err(parse_err(s.line, format!("expected section [{want}], found [{}]", s.name)));
        }
    }

    let rows_of = |s: &Section, lens: &[usize]| -> Result<Vec<f64>> {
        if s.rows.len() != lens.len() {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                what: "rows per section",
                expected: lens.len(),
                found: s.rows.len(),
            });
        }
        let mut out = Vec::with_capacity(lens.iter().sum());
        for (&(no, body), &len) in s.rows.iter().zip(lens) {
            let vals = if len == 0 && body.is_empty() {
                Vec::new()
            } else {
                parse_values(body).map_err(|e| parse_err(no, e))?
            };
            if vals.len() != len {
                return Err(Error::LengthMismatch {
                    path: path.to_path_buf(),
                    what: "values per row",
                    expected: len,
                    found: vals.len(),
                });
            }
            out.extend(vals);
        }
        Ok(out)
    };
    let matrix = |s: &Section, rows: usize, cols: usize| -> Result<DenseMatrix> {
        DenseMatrix::new(rows, cols, rows_of(s, &vec![cols; rows])?)
    };
    let wrap = |e: Error| match e {
        e @ (Error::LengthMismatch { .. } | Error::Parse { .. }) => e,
        other => Error::Validation {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    };

    let mut it = sections.iter();
    let mut next = || it.next().expect("section count checked");
    let encoder = matrix(next(), m, g).map_err(wrap)?;
    let encoder_bias = rows_of(next(), &[m])?;
    let blocks = if kind.is_implicit() {
        let coupling_rows: Vec<usize> = (1..m).collect();
        let mut blocks = Vec::with_capacity(nblocks);
        for _ in 0..nblocks {
            let diag = rows_of(next(), &[m])?;
            let couplings = rows_of(next(), &coupling_rows)?;
            let bias = rows_of(next(), &[m])?;
            let lambda = diag.iter().map(|d| -d).collect();
            blocks.push(TriangularBlock::new(lambda, couplings, bias).map_err(wrap)?);
        }
        Blocks::Implicit(blocks)
    } else {
        let mut layers = Vec::with_capacity(nblocks);
        for _ in 0..nblocks {
            let w = matrix(next(), m, m).map_err(wrap)?;
            let b = rows_of(next(), &[m])?;
            layers.push(DenseLayer::new(w, b).map_err(wrap)?);
        }
        Blocks::Explicit(layers)
    };
    let decoder = matrix(next(), g, m).map_err(wrap)?;
    let decoder_bias = rows_of(next(), &[g])?;
    ForecastNet::from_parts(kind, delta, seed, encoder, encoder_bias, blocks, decoder, decoder_bias).map_err(wrap)
}
