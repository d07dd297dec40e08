//! Stream filters: Flate, LZW, ASCIIHex, ASCII85, RunLength, plus PNG/TIFF predictors.
//! Image codecs (DCT, JPX, CCITT, JBIG2) are not decoded here; decoding stops at them.

use std::io::Read;

use flate2::read::{DeflateDecoder, ZlibDecoder};

use super::object::{Dict, Object};
use super::PdfError;

/// Result of running a stream's non-image filters.
pub struct Decoded {
    pub data: Vec<u8>,
    /// Name of the image codec still applied to `data`, if any.
    pub image_codec: Option<String>,
}

fn filter_list(dict: &Dict) -> (Vec<String>, Vec<Option<Dict>>) {
    let names: Vec<String> = match dict.get("Filter").or_else(|| dict.get("F")) {
        Some(Object::Name(n)) => vec![n.clone()],
        Some(Object::Array(a)) => a.iter().filter_map(|o| o.as_name().map(str::to_string)).collect(),
        _ => Vec::new(),
    };
    let parms: Vec<Option<Dict>> = match dict.get("DecodeParms").or_else(|| dict.get("DP")) {
        Some(Object::Dict(d)) => vec![Some(d.clone())],
        Some(Object::Array(a)) => a.iter().map(|o| o.as_dict().cloned()).collect(),
        _ => Vec::new(),
    };
    (names, parms)
}

pub fn decode_stream(dict: &Dict, raw: &[u8]) -> Result<Decoded, PdfError> {
    let (names, parms) = filter_list(dict);
    let mut data = raw.to_vec();
    for (i, name) in names.iter().enumerate() {
        let parm = parms.get(i).cloned().flatten();
        data = match name.as_str() {
            "FlateDecode" | "Fl" => predict(inflate(&data)?, parm.as_ref())?,
            "LZWDecode" | "LZW" => {
                let early = parm
                    .as_ref()
                    .and_then(|p| p.get("EarlyChange"))
                    .and_then(Object::as_i64)
                    .unwrap_or(1);
                predict(lzw_decode(&data, early != 0), parm.as_ref())?
            }
            "ASCIIHexDecode" | "AHx" => ascii_hex(&data),
            "ASCII85Decode" | "A85" => ascii85(&data)?,
            "RunLengthDecode" | "RL" => run_length(&data),
            "Crypt" => data,
            codec => {
                return Ok(Decoded {
                    data,
                    image_codec: Some(codec.to_string()),
                })
            }
        };
    }
    Ok(Decoded {
        data,
        image_codec: None,
    })
}

/// zlib first, then raw deflate; a truncated stream yields whatever decoded cleanly.
fn inflate(data: &[u8]) -> Result<Vec<u8>, PdfError> {
    let mut out = Vec::new();
    match ZlibDecoder::new(data).read_to_end(&mut out) {
        Ok(_) => return Ok(out),
        Err(_) if !out.is_empty() => return Ok(out),
        Err(_) => {}
    }
    let mut out = Vec::new();
    match DeflateDecoder::new(data).read_to_end(&mut out) {
        Ok(_) => Ok(out),
        Err(_) if !out.is_empty() => Ok(out),
        Err(e) => Err(PdfError::MalformedPdf(format!("flate: {e}"))),
    }
}

fn predict(data: Vec<u8>, parms: Option<&Dict>) -> Result<Vec<u8>, PdfError> {
    let Some(p) = parms else { return Ok(data) };
    let get = |k: &str, d: i64| p.get(k).and_then(Object::as_i64).unwrap_or(d);
    let predictor = get("Predictor", 1);
    if predictor < 2 {
        return Ok(data);
    }
    let colors = get("Colors", 1).max(1) as usize;
    let bpc = get("BitsPerComponent", 8).max(1) as usize;
    let columns = get("Columns", 1).max(1) as usize;
    let bpp = (colors * bpc).div_ceil(8).max(1);
    let row_len = (colors * bpc * columns).div_ceil(8);

    if predictor == 2 {
        // TIFF predictor, 8-bit components only.
        if bpc != 8 {
            return Ok(data);
        }
        let mut out = data;
        for row in out.chunks_mut(row_len) {
            for i in bpp..row.len() {
                row[i] = row[i].wrapping_add(row[i - bpp]);
            }
        }
        return Ok(out);
    }

    let mut out = Vec::with_capacity(data.len());
    let mut prev = vec![0u8; row_len];
    for chunk in data.chunks(row_len + 1) {
        if chunk.len() < 2 {
            break;
        }
        let kind = chunk[0];
        let mut row = chunk[1..].to_vec();
        row.resize(row_len, 0);
        for i in 0..row_len {
            let left = if i >= bpp { row[i - bpp] } else { 0 };
            let up = prev[i];
            let up_left = if i >= bpp { prev[i - bpp] } else { 0 };
            row[i] = match kind {
                0 => row[i],
                1 => row[i].wrapping_add(left),
                2 => row[i].wrapping_add(up),
                3 => row[i].wrapping_add(((left as u16 + up as u16) / 2) as u8),
                4 => row[i].wrapping_add(paeth(left, up, up_left)),
                _ => row[i],
            };
        }
        out.extend_from_slice(&row);
        prev = row;
    }
    Ok(out)
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let p = a as i16 + b as i16 - c as i16;
    let pa = (p - a as i16).abs();
    let pb = (p - b as i16).abs();
    let pc = (p - c as i16).abs();
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

fn ascii_hex(data: &[u8]) -> Vec<u8> {
    let mut nibbles = Vec::new();
    for &b in data {
        if b == b'>' {
            break;
        }
        let v = match b {
            b'0'..=b'9' => b - b'0',
            b'a'..=b'f' => b - b'a' + 10,
            b'A'..=b'F' => b - b'A' + 10,
            _ => continue,
        };
        nibbles.push(v);
    }
    if nibbles.len() % 2 == 1 {
        nibbles.push(0);
    }
    nibbles.chunks(2).map(|p| (p[0] << 4) | p[1]).collect()
}

fn ascii85(data: &[u8]) -> Result<Vec<u8>, PdfError> {
    let mut out = Vec::new();
    let mut group = [0u8; 5];
    let mut n = 0;
    let body = data.strip_prefix(b"<~").unwrap_or(data);
    for &b in body {
        match b {
            b'~' => break,
            b'z' if n == 0 => out.extend_from_slice(&[0; 4]),
            b'!'..=b'u' => {
                group[n] = b - b'!';
                n += 1;
                if n == 5 {
                    let v = group.iter().fold(0u64, |acc, &d| acc * 85 + d as u64);
                    if v > u32::MAX as u64 {
                        return Err(PdfError::MalformedPdf("ascii85 group overflow".into()));
                    }
                    out.extend_from_slice(&(v as u32).to_be_bytes());
                    n = 0;
                }
            }
            _ => {}
        }
    }
    if n > 1 {
        for slot in group.iter_mut().skip(n) {
            *slot = 84;
        }
        let v = group.iter().fold(0u64, |acc, &d| acc * 85 + d as u64);
        out.extend_from_slice(&(v as u32).to_be_bytes()[..n - 1]);
    }
    Ok(out)
}

fn run_length(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < data.len() {
        let len = data[i];
        i += 1;
        match len {
            128 => break,
            0..=127 => {
                let n = len as usize + 1;
                out.extend_from_slice(&data[i..(i + n).min(data.len())]);
                i += n;
            }
            _ => {
                if let Some(&b) = data.get(i) {
                    out.extend(std::iter::repeat_n(b, 257 - len as usize));
                }
                i += 1;
            }
        }
    }
    out
}

fn lzw_decode(data: &[u8], early_change: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let mut table: Vec<Vec<u8>> = (0..=255u16).map(|b| vec![b as u8]).collect();
    table.push(Vec::new()); // 256 clear
    table.push(Vec::new()); // 257 eod
    let mut code_len = 9;
    let mut prev: Option<Vec<u8>> = None;
    let mut bit_pos = 0usize;
    let total_bits = data.len() * 8;
    while bit_pos + code_len <= total_bits {
        let mut code = 0usize;
        for k in 0..code_len {
            let bit = (data[(bit_pos + k) / 8] >> (7 - (bit_pos + k) % 8)) & 1;
            code = (code << 1) | bit as usize;
        }
        bit_pos += code_len;
        if code == 256 {
            table.truncate(258);
            code_len = 9;
            prev = None;
            continue;
        }
        if code == 257 {
            break;
        }
        let entry = if code < table.len() {
            table[code].clone()
        } else if let Some(p) = &prev {
            let mut e = p.clone();
            e.push(p[0]);
            e
        } else {
            break;
        };
        out.extend_from_slice(&entry);
        if let Some(p) = prev.take() {
            let mut e = p;
            e.push(entry[0]);
            table.push(e);
        }
        prev = Some(entry);
        let limit = table.len() + usize::from(early_change);
        code_len = match limit {
            0..=511 => 9,
            512..=1023 => 10,
            1024..=2047 => 11,
            _ => 12,
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::ZlibEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn dict(filter: &str) -> Dict {
        let mut d = Dict::new();
        d.insert("Filter".into(), Object::Name(filter.into()));
        d
    }

    #[test]
    fn flate_roundtrip() {
        let mut e = ZlibEncoder::new(Vec::new(), Compression::default());
        e.write_all(b"hello pdf").unwrap();
        let z = e.finish().unwrap();
        assert_eq!(decode_stream(&dict("FlateDecode"), &z).unwrap().data, b"hello pdf");
    }

    #[test]
    fn hex_and_85() {
        assert_eq!(ascii_hex(b"48 65 6C6C 6F>"), b"Hello");
        assert_eq!(ascii85(b"<~87cURD]i,\"Ebo80~>").unwrap(), b"Hello World!");
        assert_eq!(ascii85(b"z~>").unwrap(), vec![0; 4]);
    }

    #[test]
    fn run_length_decodes() {
        assert_eq!(run_length(&[2, b'a', b'b', b'c', 254, b'x', 128]), b"abcxxx");
    }

    #[test]
    fn png_up_predictor() {
        let mut parms = Dict::new();
        parms.insert("Predictor".into(), Object::Int(12));
        parms.insert("Columns".into(), Object::Int(3));
        // Two rows, filter type 2 (Up).
        let data = vec![2, 1, 2, 3, 2, 1, 1, 1];
        assert_eq!(predict(data, Some(&parms)).unwrap(), vec![1, 2, 3, 2, 3, 4]);
    }

    #[test]
    fn lzw_example() {
        // Classic example from the LZW filter description: 45 45 45 45 45 65 45 45 45 66.
        let encoded = [0x80, 0x0B, 0x60, 0x50, 0x22, 0x0C, 0x0C, 0x85, 0x01];
        assert_eq!(lzw_decode(&encoded, true), vec![45, 45, 45, 45, 45, 65, 45, 45, 45, 66]);
    }

    #[test]
    fn image_codec_stops_decoding() {
        let d = decode_stream(&dict("DCTDecode"), b"\xff\xd8").unwrap();
        assert_eq!(d.image_codec.as_deref(), Some("DCTDecode"));
        assert_eq!(d.data, b"\xff\xd8");
    }
}
