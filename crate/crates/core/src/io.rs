//! Little-endian binary formats for arrays, hierarchies and query batches,
//! plus the CSV results format.
//!
//! ```text
//! array:     "GRMQ1" | width: u8 (4|8) | n: u64 | n × f32
//! hierarchy: array | levels: u64 | levels × u64 size | E × f32 mins | [E × width argmins]
//! queries:   "GRMQQ" | width: u8 (4|8) | m: u64 | m × (l, r) of `width` bytes each
//! ```
//!
//! A hierarchy file does not carry the chunk size or cutoff; readers supply
//! the config and the stored level sizes are checked against it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::{HierarchyConfig, PositionWidth};
use crate::error::{Error, Result};
use crate::hierarchy::{InputArray, MinHierarchy, PositionBuffer};
use crate::query::{Query, QueryBatch, ResultRecord};

pub const ARRAY_MAGIC: &[u8; 5] = b"GRMQ1";
pub const QUERY_MAGIC: &[u8; 5] = b"GRMQQ";
pub const RESULTS_HEADER: &str = "query_id,l,r,value,index";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf[0])
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::format("unexpected end of file")
    } else {
        Error::Io(e)
    }
}

fn read_magic(r: &mut impl Read, magic: &[u8; 5]) -> Result<()> {
    let mut buf = [0u8; 5];
    r.read_exact(&mut buf).map_err(truncated)?;
    if &buf != magic {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_exact_vec(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    r.take(len as u64).read_to_end(&mut bytes)?;
    if bytes.len() != len {
        return Err(Error::format("unexpected end of file"));
    }
    Ok(bytes)
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::format(format!("{what} {v} does not fit in memory")))
}

fn write_position(w: &mut impl Write, p: u64, width: PositionWidth) -> Result<()> {
    match width {
        PositionWidth::U32 => {
            let p =
                u32::try_from(p).map_err(|_| Error::format(format!("position {p} needs 64-bit width")))?;
            w.write_all(&p.to_le_bytes())?;
        }
        PositionWidth::U64 => w.write_all(&p.to_le_bytes())?,
    }
    Ok(())
}

fn decode_positions(bytes: &[u8], width: PositionWidth) -> PositionBuffer {
    match width {
        PositionWidth::U32 => PositionBuffer::U32(
            bytes.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect(),
        ),
        PositionWidth::U64 => PositionBuffer::U64(
            bytes.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect(),
        ),
    }
}

pub fn write_array(w: &mut impl Write, array: &InputArray) -> Result<()> {
    w.write_all(ARRAY_MAGIC)?;
    w.write_all(&[array.position_width().bytes() as u8])?;
    w.write_all(&(array.len() as u64).to_le_bytes())?;
    let mut bytes = Vec::with_capacity(array.len() * 4);
    for v in array.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads an array file, returning the array and the position width recorded in it.
pub fn read_array(r: &mut impl Read) -> Result<(InputArray, PositionWidth)> {
    read_magic(r, ARRAY_MAGIC)?;
    let width = PositionWidth::from_flag(read_u8(r)?)?;
    let n = to_usize(read_u64(r)?, "array length")?;
    let bytes = read_exact_vec(r, n.checked_mul(4).ok_or_else(|| Error::format("array too long"))?)?;
    let values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((InputArray::new(values)?, width))
}

pub fn write_hierarchy(w: &mut impl Write, h: &MinHierarchy) -> Result<()> {
    write_array(w, h.base())?;
    let sizes = &h.layout().level_sizes;
    w.write_all(&(sizes.len() as u64).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(h.aux_len() * 4);
    for v in h.upper_mins() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    if let Some(argmins) = h.upper_argmins() {
        let width = h.base().position_width();
        let mut out = Vec::with_capacity(argmins.len() * width.bytes());
        for i in 0..argmins.len() {
            write_position(&mut out, argmins.get(i), width)?;
        }
        w.write_all(&out)?;
    }
    Ok(())
}

/// Reads a hierarchy written by [`write_hierarchy`]. The argmin buffer is
/// present iff bytes remain after the minima.
pub fn read_hierarchy(r: &mut impl Read, config: HierarchyConfig) -> Result<MinHierarchy> {
    let (base, width) = read_array(r)?;
    let levels = to_usize(read_u64(r)?, "level count")?;
    if levels > 64 {
        return Err(Error::format(format!("implausible level count {levels}")));
    }
    let mut sizes = Vec::with_capacity(levels);
    for _ in 0..levels {
        sizes.push(to_usize(read_u64(r)?, "level size")?);
    }
    let aux: usize = sizes
        .iter()
        .try_fold(0usize, |acc, &s| acc.checked_add(s))
        .ok_or_else(|| Error::format("level sizes overflow"))?;
    if aux > base.len() {
        return Err(Error::format("auxiliary levels larger than the array"));
    }
    let bytes = read_exact_vec(r, aux * 4)?;
    let mins = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();

    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let argmins = if rest.is_empty() {
        None
    } else if rest.len() == aux * width.bytes() {
        Some(decode_positions(&rest, width))
    } else {
        return Err(Error::format(format!(
            "{} trailing bytes do not form {aux} argmins of {} bytes",
            rest.len(),
            width.bytes()
        )));
    };
    MinHierarchy::from_parts(base, config, sizes, mins, argmins)
}

pub fn write_queries(w: &mut impl Write, batch: &QueryBatch, width: PositionWidth) -> Result<()> {
    w.write_all(QUERY_MAGIC)?;
    w.write_all(&[width.bytes() as u8])?;
    w.write_all(&(batch.len() as u64).to_le_bytes())?;
    let mut out = Vec::with_capacity(batch.len() * 2 * width.bytes());
    for q in batch.queries() {
        write_position(&mut out, q.l as u64, width)?;
        write_position(&mut out, q.r as u64, width)?;
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn read_queries(r: &mut impl Read) -> Result<(QueryBatch, PositionWidth)> {
    read_magic(r, QUERY_MAGIC)?;
    let width = PositionWidth::from_flag(read_u8(r)?)?;
    let m = to_usize(read_u64(r)?, "query count")?;
    let len = m.checked_mul(2 * width.bytes()).ok_or_else(|| Error::format("query count too large"))?;
    let bytes = read_exact_vec(r, len)?;
    let positions = decode_positions(&bytes, width);
    let queries = (0..m)
        .map(|j| {
            Ok(Query::new(to_usize(positions.get(2 * j), "l")?, to_usize(positions.get(2 * j + 1), "r")?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((QueryBatch::new(queries)?, width))
}

pub fn write_results_csv(w: &mut impl Write, batch: &QueryBatch, results: &[ResultRecord]) -> Result<()> {
    writeln!(w, "{RESULTS_HEADER}")?;
    for (id, (q, rec)) in batch.queries().iter().zip(results).enumerate() {
        match rec.index {
            Some(i) => writeln!(w, "{id},{},{},{},{i}", q.l, q.r, rec.value)?,
            None => writeln!(w, "{id},{},{},{},", q.l, q.r, rec.value)?,
        }
    }
    Ok(())
}

/// Parses a results CSV back into `(query, record)` rows.
pub fn read_results_csv(r: impl BufRead) -> Result<Vec<(Query, ResultRecord)>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(header)) if header.trim() == RESULTS_HEADER => {}
        _ => return Err(Error::format("missing results header")),
    }
    let bad = |line: &str| Error::format(format!("bad results row {line:?}"));
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(&line));
        }
        let l = fields[1].parse().map_err(|_| bad(&line))?;
        let r = fields[2].parse().map_err(|_| bad(&line))?;
        let value = fields[3].parse().map_err(|_| bad(&line))?;
        let index =
            if fields[4].is_empty() { None } else { Some(fields[4].parse().map_err(|_| bad(&line))?) };
        rows.push((Query::new(l, r), ResultRecord { value, index }));
    }
    Ok(rows)
}

pub fn save_array(path: impl AsRef<Path>, array: &InputArray) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_array(&mut w, array)?;
    w.flush()?;
    Ok(())
}

pub fn load_array(path: impl AsRef<Path>) -> Result<InputArray> {
    read_array(&mut BufReader::new(File::open(path)?)).map(|(a, _)| a)
}

pub fn save_hierarchy(path: impl AsRef<Path>, h: &MinHierarchy) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_hierarchy(&mut w, h)?;
    w.flush()?;
    Ok(())
}

pub fn load_hierarchy(path: impl AsRef<Path>, config: HierarchyConfig) -> Result<MinHierarchy> {
    read_hierarchy(&mut BufReader::new(File::open(path)?), config)
}

pub fn save_queries(path: impl AsRef<Path>, batch: &QueryBatch, width: PositionWidth) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_queries(&mut w, batch, width)?;
    w.flush()?;
    Ok(())
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<QueryBatch> {
    read_queries(&mut BufReader::new(File::open(path)?)).map(|(b, _)| b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{execute_batch, SchedulingStrategy};
    use crate::workload::{gen_array, gen_queries, RangeClass, WorkloadSpec};
    use proptest::prelude::*;

    #[test]
    fn array_layout_is_exact() {
        let array = InputArray::new(vec![1.0, -2.5]).unwrap();
        let mut bytes = Vec::new();
        write_array(&mut bytes, &array).unwrap();
        let mut expected = b"GRMQ1".to_vec();
        expected.push(4);
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn query_layout_is_exact() {
        let batch = QueryBatch::new(vec![Query::new(1, 2)]).unwrap();
        let mut bytes = Vec::new();
        write_queries(&mut bytes, &batch, PositionWidth::U64).unwrap();
        let mut expected = b"GRMQQ".to_vec();
        expected.push(8);
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        assert_eq!(bytes, expected);
        let (back, width) = read_queries(&mut bytes.as_slice()).unwrap();
        assert_eq!((back, width), (batch, PositionWidth::U64));
    }

    #[test]
    fn hierarchy_round_trip_answers_identically() {
        for track in [false, true] {
            let config = HierarchyConfig::vector_block(8).with_track_index(track);
            let h = MinHierarchy::build(gen_array(5000, 3).unwrap(), config).unwrap();
            let mut bytes = Vec::new();
            write_hierarchy(&mut bytes, &h).unwrap();
            let back = read_hierarchy(&mut bytes.as_slice(), config).unwrap();
            assert_eq!(back, h);

            let batch =
                gen_queries(&WorkloadSpec { n: 5000, m: 500, class: RangeClass::Mixed, seed: 4 }).unwrap();
            let a = execute_batch(&h, &batch, SchedulingStrategy::WarpLocalQueue).unwrap();
            let b = execute_batch(&back, &batch, SchedulingStrategy::WarpLocalQueue).unwrap();
            assert_eq!(a.results, b.results);
        }
    }

    #[test]
    fn hierarchy_rejects_mismatched_config() {
        let h = MinHierarchy::build(gen_array(5000, 3).unwrap(), HierarchyConfig::vector_block(8)).unwrap();
        let mut bytes = Vec::new();
        write_hierarchy(&mut bytes, &h).unwrap();
        assert!(matches!(
            read_hierarchy(&mut bytes.as_slice(), HierarchyConfig::vector_block(16)),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_hierarchy(&mut bytes.as_slice(), HierarchyConfig::vector_block(8).with_track_index(true)),
            Err(Error::Format(_))
        ));
        bytes.push(0);
        assert!(read_hierarchy(&mut bytes.as_slice(), HierarchyConfig::vector_block(8)).is_err());
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(read_array(&mut &b"GRMQ2\x04"[..]), Err(Error::Format(_))));
        assert!(matches!(read_array(&mut &b"GRMQ1\x05"[..]), Err(Error::Format(_))));
        let mut short = b"GRMQ1\x04".to_vec();
        short.extend_from_slice(&3u64.to_le_bytes());
        short.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(read_array(&mut short.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_queries(&mut &b"GRMQ1\x04"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn nan_in_array_file_is_rejected() {
        let mut bytes = b"GRMQ1\x04".to_vec();
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_array(&mut bytes.as_slice()), Err(Error::NanInput { position: 0 })));
    }

    #[test]
    fn narrow_width_rejects_wide_positions() {
        let batch = QueryBatch::new(vec![Query::new(0, 1 << 33)]).unwrap();
        assert!(write_queries(&mut Vec::new(), &batch, PositionWidth::U32).is_err());
    }

    #[test]
    fn results_csv_round_trip() {
        let batch = QueryBatch::new(vec![Query::new(0, 3), Query::new(2, 2)]).unwrap();
        let results =
            vec![ResultRecord { value: 0.1, index: Some(1) }, ResultRecord { value: 1.0e-7, index: None }];
        let mut out = Vec::new();
        write_results_csv(&mut out, &batch, &results).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("query_id,l,r,value,index\n0,0,3,0.1,1\n1,2,2,"));
        assert!(text.ends_with(",\n"));
        let rows = read_results_csv(out.as_slice()).unwrap();
        assert_eq!(rows[0], (Query::new(0, 3), results[0]));
        assert_eq!(rows[1].1.value.to_bits(), results[1].value.to_bits());
    }

    proptest! {
        #[test]
        fn array_round_trip(values in proptest::collection::vec(-1e30f32..1e30, 1..200)) {
            let array = InputArray::new(values).unwrap();
            let mut bytes = Vec::new();
            write_array(&mut bytes, &array).unwrap();
            let (back, width) = read_array(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(width, PositionWidth::U32);
            prop_assert_eq!(back, array);
        }

        #[test]
        fn query_round_trip(pairs in proptest::collection::vec((0usize..1000, 0usize..1000), 1..100)) {
            let batch = QueryBatch::new(pairs.into_iter().map(|(a, b)| Query::new(a.min(b), a.max(b))).collect()).unwrap();
            for width in [PositionWidth::U32, PositionWidth::U64] {
                let mut bytes = Vec::new();
                write_queries(&mut bytes, &batch, width).unwrap();
                let (back, w) = read_queries(&mut bytes.as_slice()).unwrap();
                prop_assert_eq!(w, width);
                prop_assert_eq!(&back, &batch);
            }
        }
    }
}
